"""Config-file-driven experiment runner.

Spec files are INI-style (key = value under [experiment], [system],
[scenario], [sweep], [pattern]); see configs/ for runnable examples.
dBm-to-watts conversion happens here only; the library works in watts.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .archsearch import architecture_report, mean_los_capacity, search_architecture
from .beamforming import design_beamformers
from .channel import ScenarioPolicy, drop_rng, generate_scenario
from .config import SystemConfig, dbm_to_watts
from .errors import ConfigurationError, WsabeamError
from .evaluation import (
    ALGORITHMS,
    BeamPatternGridSpec,
    beam_pattern,
    run_experiment,
)
from .geometry import build_wsa_geometry, export_geometry, max_subarray_spacing

EXPERIMENT_KINDS = (
    "ds-sweep", "arch-search", "power-sweep", "antenna-sweep",
    "user-sweep", "distance-sweep", "beampattern", "bench-timing",
)

DEFAULT_K_VALUES = (1, 4, 16, 64, 256)


@dataclass
class ExperimentSpec:
    kind: str
    config: SystemConfig
    policy: ScenarioPolicy
    seed: int = 0
    drops: int = 1
    out_dir: str = "results"
    threads: int = 1
    algorithms: tuple = ("capacity-ub",)
    auto_spacing: bool = False
    k_values: tuple = DEFAULT_K_VALUES
    ds_points: int = 20
    powers_dbm: tuple = ()
    nt_values: tuple = ()
    u_values: tuple = ()
    ranges_m: tuple = ()
    pattern: dict = field(default_factory=dict)
    source: str = "<memory>"

    def validate(self) -> list[str]:
        findings = []
        if self.kind not in EXPERIMENT_KINDS:
            findings.append(
                f"experiment.kind {self.kind!r} must be one of {', '.join(EXPERIMENT_KINDS)}"
            )
        findings.extend(self.config.validate())
        findings.extend(self.policy.validate())
        if self.drops < 1:
            findings.append("experiment.drops must be at least 1")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                findings.append(
                    f"experiment.algorithms entry {algo!r} must be one of {', '.join(ALGORITHMS)}"
                )
        if self.kind in ("ds-sweep", "arch-search"):
            for k in self.k_values:
                if k < 1 or int(round(math.sqrt(k))) ** 2 != k:
                    findings.append(f"sweep.k_values entry {k} must be a perfect square")
                elif self.config.num_tx_antennas % k != 0:
                    findings.append(
                        f"sweep.k_values entry {k} must divide num_tx_antennas"
                    )
        if self.kind == "power-sweep" and not self.powers_dbm:
            findings.append("sweep.powers_dbm is required for a power sweep")
        if self.kind == "antenna-sweep":
            if not self.nt_values:
                findings.append("sweep.nt_values is required for an antenna sweep")
            for nt in self.nt_values:
                trial = replace(self.config, num_tx_antennas=int(nt))
                bad = [f for f in trial.validate() if "num_tx" in f or "subarray" in f]
                if bad:
                    findings.append(f"sweep.nt_values entry {nt}: " + "; ".join(bad))
        if self.kind == "user-sweep" and not self.u_values:
            findings.append("sweep.u_values is required for a user sweep")
        if self.kind == "distance-sweep" and not self.ranges_m:
            findings.append("sweep.ranges_m is required for a distance sweep")
        return findings


def _parse_list(raw: str, conv) -> tuple:
    items = [p.strip() for p in raw.replace(";", ",").split(",")]
    return tuple(conv(p) for p in items if p)


def _get(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section.get(key).strip()
    if raw.lower() == "auto":
        return "auto"
    return conv(raw)


def load_spec(path: str) -> ExperimentSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read spec file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse spec file {path}: {exc}") from exc

    exp = parser["experiment"] if parser.has_section("experiment") else None
    sys_s = parser["system"] if parser.has_section("system") else None
    scen = parser["scenario"] if parser.has_section("scenario") else None
    sweep = parser["sweep"] if parser.has_section("sweep") else None
    pattern = parser["pattern"] if parser.has_section("pattern") else None

    power_w = _get(sys_s, "total_power_w", float, None)
    power_dbm = _get(sys_s, "total_power_dbm", float, None)
    if power_dbm is not None:
        power_w = dbm_to_watts(power_dbm)
    if power_w is None:
        power_w = dbm_to_watts(20.0)

    noise = _get(sys_s, "noise_power_w", float, "auto")
    intra = _get(sys_s, "intra_spacing_m", float, "auto")
    spacing = _get(sys_s, "subarray_spacing_m", float, "auto")

    config = SystemConfig(
        carrier_frequency_hz=_get(sys_s, "carrier_frequency_hz", float, 300e9),
        bandwidth_hz=_get(sys_s, "bandwidth_hz", float, 5e9),
        num_tx_antennas=_get(sys_s, "num_tx_antennas", int, 1024),
        num_rx_antennas=_get(sys_s, "num_rx_antennas", int, 16),
        num_subarrays=_get(sys_s, "num_subarrays", int, 4),
        subarray_spacing_m=0.0 if spacing == "auto" else spacing,
        intra_spacing_m=None if intra == "auto" else intra,
        num_users=_get(sys_s, "num_users", int, 20),
        streams_per_user=_get(sys_s, "streams_per_user", int, 1),
        tx_rf_chains=_get(sys_s, "tx_rf_chains", int, 20),
        rx_rf_chains=_get(sys_s, "rx_rf_chains", int, 1),
        total_power_w=power_w,
        noise_power_w=None if noise == "auto" else noise,
        aperture_limit_m=_get(sys_s, "aperture_limit_m", float, 1.0),
        bs_height_m=_get(sys_s, "bs_height_m", float, 20.0),
        user_height_m=_get(sys_s, "user_height_m", float, 20.0),
        num_paths=_get(sys_s, "num_paths", int, 2),
        rng_seed=_get(exp, "seed", int, 0),
    )

    positions = None
    raw_positions = _get(scen, "positions", str, None)
    if raw_positions:
        rows = [r for r in raw_positions.split(";") if r.strip()]
        positions = np.array([[float(x) for x in row.split(",")] for row in rows])
    policy = ScenarioPolicy(
        kind=_get(scen, "policy", str, "sector"),
        azimuth_rad=math.radians(_get(scen, "azimuth_deg", float, 0.0)),
        sector_angle_rad=math.radians(_get(scen, "sector_angle_deg", float, 120.0)),
        range_min_m=_get(scen, "range_min_m", float, 1.0),
        range_max_m=_get(scen, "range_max_m", float, 20.0),
        range_m=_get(scen, "range_m", float, None),
        positions=positions,
        three_d=_get(scen, "mode", str, "2d").lower() == "3d",
    )

    algorithms = _get(exp, "algorithms", str, "capacity-ub")
    pattern_opts = {}
    if pattern is not None:
        for key in ("n_azimuth", "n_range", "user_index"):
            if key in pattern:
                pattern_opts[key] = int(pattern.get(key))
        for key in ("range_min_m", "range_max_m", "azimuth_span_deg"):
            if key in pattern:
                pattern_opts[key] = float(pattern.get(key))
        if "algorithm" in pattern:
            pattern_opts["algorithm"] = pattern.get("algorithm").strip()

    return ExperimentSpec(
        kind=_get(exp, "kind", str, "power-sweep"),
        config=config,
        policy=policy,
        seed=_get(exp, "seed", int, 0),
        drops=_get(exp, "drops", int, 1),
        out_dir=_get(exp, "out", str, "results"),
        threads=_get(exp, "threads", int, 1),
        algorithms=_parse_list(algorithms, str),
        auto_spacing=spacing == "auto",
        k_values=_parse_list(_get(sweep, "k_values", str, ""), int) or DEFAULT_K_VALUES,
        ds_points=_get(sweep, "ds_points", int, 20),
        powers_dbm=_parse_list(_get(sweep, "powers_dbm", str, ""), float),
        nt_values=_parse_list(_get(sweep, "nt_values", str, ""), int),
        u_values=_parse_list(_get(sweep, "u_values", str, ""), int),
        ranges_m=_parse_list(_get(sweep, "ranges_m", str, ""), float),
        pattern=pattern_opts,
        source=path,
    )


def resolve_spacing(config: SystemConfig, auto: bool) -> SystemConfig:
    """Fill in the largest feasible spacing when the spec asked for 'auto'."""
    if not auto or config.num_subarrays == 1:
        return config
    d_s = max_subarray_spacing(
        config.num_subarrays, config.num_tx_antennas, config.wavelength_m,
        config.aperture_limit_m, mode="geometric",
        intra_spacing_m=config.intra_spacing_m,
    )
    return config.with_spacing(max(d_s, 0.0))


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise ConfigurationError(f"output path {path} is not writable: {exc}") from exc


def _scenario_users(spec: ExperimentSpec, config: SystemConfig) -> np.ndarray:
    from .channel import place_users

    rng = drop_rng(spec.seed, 0)
    return place_users(config, spec.policy, rng).positions


def _run_ds_sweep(spec: ExperimentSpec, out_dir: str) -> None:
    config = spec.config
    lam = config.wavelength_m
    users = _scenario_users(spec, replace(config, num_subarrays=1))
    rows = []
    wide = [k for k in spec.k_values if k > 1]
    ds_tops = {
        k: max_subarray_spacing(k, config.num_tx_antennas, lam,
                                config.aperture_limit_m, mode="geometric",
                                intra_spacing_m=config.intra_spacing_m)
        for k in wide
    }
    overall_top = max(ds_tops.values()) if ds_tops else 1000.0 * lam
    for k in spec.k_values:
        top = ds_tops.get(k, overall_top)
        grid = np.geomspace(lam, max(top, lam * (1 + 1e-9)), spec.ds_points)
        for d_s in grid:
            trial = replace(config, num_subarrays=k,
                            subarray_spacing_m=0.0 if k == 1 else float(d_s))
            geometry = build_wsa_geometry(trial)
            cap = mean_los_capacity(geometry, users, trial)
            rows.append((k, float(d_s), geometry.aperture_m, cap))
        print(f"[ds-sweep] K={k}: capacity {rows[-spec.ds_points][3]:.4g} -> "
              f"{rows[-1][3]:.4g} bits/s/Hz over d_s {grid[0]:.4g} -> {grid[-1]:.4g} m")
    _write_csv(os.path.join(out_dir, "ds_sweep.csv"),
               ["K", "d_s_m", "aperture_m", "capacity_bpsHz"], rows)


def _run_arch_search(spec: ExperimentSpec, out_dir: str) -> None:
    users = _scenario_users(spec, replace(spec.config, num_subarrays=1))
    best, candidates = search_architecture(spec.config, users, list(spec.k_values))
    rows = [
        (c.num_subarrays, c.subarray_spacing_m, c.aperture_m,
         c.capacity_bps_hz, str(c.feasible).lower())
        for c in candidates
    ]
    _write_csv(os.path.join(out_dir, "arch_search.csv"),
               ["K", "d_s_m", "aperture_m", "capacity_bpsHz", "feasible"], rows)
    print(architecture_report(candidates), end="")
    print(f"[arch-search] selected K={best.num_subarrays} "
          f"d_s={best.subarray_spacing_m:.6g} m "
          f"capacity={best.capacity_bps_hz:.4g} bits/s/Hz")


def _run_power_sweep(spec: ExperimentSpec, out_dir: str) -> None:
    rows = []
    for p_dbm in spec.powers_dbm:
        config = resolve_spacing(
            replace(spec.config, total_power_w=dbm_to_watts(p_dbm)), spec.auto_spacing
        )
        for algo in spec.algorithms:
            result = run_experiment(config, spec.policy, algo, spec.drops,
                                    master_seed=spec.seed, threads=spec.threads)
            rows.append((p_dbm, algo, result.mean_sum_se, result.std_sum_se,
                         result.n_failed))
            print(f"[power-sweep] {p_dbm:g} dBm {algo}: mean sum SE "
                  f"{result.mean_sum_se:.4f} (std {result.std_sum_se:.4f}, "
                  f"failed {result.n_failed}/{spec.drops})")
    _write_csv(os.path.join(out_dir, "power_sweep.csv"),
               ["power_dBm", "algo", "mean_sumSE", "std_sumSE", "n_failed"], rows)


def _run_antenna_sweep(spec: ExperimentSpec, out_dir: str) -> None:
    rows = []
    for nt in spec.nt_values:
        config = resolve_spacing(
            replace(spec.config, num_tx_antennas=int(nt)), spec.auto_spacing
        )
        for algo in spec.algorithms:
            result = run_experiment(config, spec.policy, algo, spec.drops,
                                    master_seed=spec.seed, threads=spec.threads)
            rows.append((nt, algo, result.mean_sum_se, result.std_sum_se,
                         result.n_failed))
            print(f"[antenna-sweep] N_t={nt} {algo}: mean sum SE "
                  f"{result.mean_sum_se:.4f} (failed {result.n_failed}/{spec.drops})")
    _write_csv(os.path.join(out_dir, "antenna_sweep.csv"),
               ["n_t", "algo", "mean_sumSE", "std_sumSE", "n_failed"], rows)


def _run_user_sweep(spec: ExperimentSpec, out_dir: str) -> None:
    rows = []
    for u in spec.u_values:
        config = replace(spec.config, num_users=int(u),
                         tx_rf_chains=int(u) * spec.config.streams_per_user)
        config = resolve_spacing(config, spec.auto_spacing)
        for algo in spec.algorithms:
            result = run_experiment(config, spec.policy, algo, spec.drops,
                                    master_seed=spec.seed, threads=spec.threads)
            rows.append((u, algo, result.mean_sum_se, result.std_sum_se,
                         result.n_failed))
            print(f"[user-sweep] U={u} {algo}: mean sum SE "
                  f"{result.mean_sum_se:.4f} (failed {result.n_failed}/{spec.drops})")
    _write_csv(os.path.join(out_dir, "user_sweep.csv"),
               ["num_users", "algo", "mean_sumSE", "std_sumSE", "n_failed"], rows)


def _run_distance_sweep(spec: ExperimentSpec, out_dir: str) -> None:
    rows = []
    for r in spec.ranges_m:
        if spec.policy.kind == "same-azimuth-line":
            policy = replace(spec.policy, range_min_m=0.85 * r, range_max_m=1.15 * r)
        else:
            policy = replace(spec.policy, range_m=r)
        for algo in spec.algorithms:
            result = run_experiment(spec.config, policy, algo, spec.drops,
                                    master_seed=spec.seed, threads=spec.threads)
            rows.append((r, algo, result.mean_sum_se, result.std_sum_se,
                         result.n_failed))
            print(f"[distance-sweep] D={r:g} m {algo}: mean sum SE "
                  f"{result.mean_sum_se:.4f} (failed {result.n_failed}/{spec.drops})")
    _write_csv(os.path.join(out_dir, "distance_sweep.csv"),
               ["range_m", "algo", "mean_sumSE", "std_sumSE", "n_failed"], rows)


def _run_beampattern(spec: ExperimentSpec, out_dir: str) -> None:
    config = spec.config
    rng = drop_rng(spec.seed, 0)
    geometry = build_wsa_geometry(config)
    realization = generate_scenario(config, spec.policy, rng, geometry)
    algo = spec.pattern.get("algorithm", "svr-fc")
    bf, _ = design_beamformers(realization.channels, config, geometry=geometry,
                               users=realization.placement.positions, method=algo,
                               rng=rng)
    user_index = spec.pattern.get("user_index", 0)
    span = math.radians(spec.pattern.get("azimuth_span_deg", 180.0))
    grid = BeamPatternGridSpec.default(
        height_m=realization.placement.positions[user_index][2],
        n_azimuth=spec.pattern.get("n_azimuth", 181),
        n_range=spec.pattern.get("n_range", 100),
        range_min_m=spec.pattern.get("range_min_m", 1.0),
        range_max_m=spec.pattern.get("range_max_m", 20.0),
        azimuth_span_rad=span,
    )
    column = bf.f_rf[:, user_index * config.streams_per_user]
    pattern = beam_pattern(geometry, column, grid, config.wavelength_m)
    rows = []
    for i, az in enumerate(pattern.azimuths_rad):
        for j, rr in enumerate(pattern.ranges_m):
            rows.append((float(az), float(rr), float(pattern.gain[i, j])))
    _write_csv(os.path.join(out_dir, "beampattern.csv"),
               ["az_rad", "range_m", "gain_norm"], rows)
    peak = np.unravel_index(np.argmax(pattern.gain), pattern.gain.shape)
    print(f"[beampattern] user {user_index} ({algo}): peak at "
          f"az={math.degrees(pattern.azimuths_rad[peak[0]]):.2f} deg, "
          f"range={pattern.ranges_m[peak[1]]:.3g} m")


def _run_bench_timing(spec: ExperimentSpec, out_dir: str) -> None:
    algos = [a for a in spec.algorithms if a not in ("capacity-ub", "fd-bound")]
    if not algos:
        algos = ["svr-fc", "svd-phase-fc", "ao-sc"]
    geometry = build_wsa_geometry(spec.config)
    rows = []
    medians = {}
    for algo in algos:
        times = []
        for rep in range(spec.drops):
            rng = drop_rng(spec.seed, rep)
            realization = generate_scenario(spec.config, spec.policy, rng, geometry)
            _, timings = design_beamformers(
                realization.channels, spec.config, geometry=geometry,
                users=realization.placement.positions, method=algo, rng=rng,
            )
            times.append(timings["analog_s"])
            rows.append((algo, rep, timings["analog_s"]))
        medians[algo] = float(np.median(times))
        print(f"[bench-timing] {algo}: median analog stage {medians[algo]*1e3:.3f} ms "
              f"over {spec.drops} reps")
    _write_csv(os.path.join(out_dir, "bench_timing.csv"),
               ["algo", "rep", "analog_seconds"], rows)
    if "svr-fc" in medians and "svd-phase-fc" in medians and medians["svd-phase-fc"] > 0:
        ratio = medians["svr-fc"] / medians["svd-phase-fc"]
        print(f"[bench-timing] svr-fc / svd-phase-fc analog time ratio: {ratio:.3f}")


_RUNNERS = {
    "ds-sweep": _run_ds_sweep,
    "arch-search": _run_arch_search,
    "power-sweep": _run_power_sweep,
    "antenna-sweep": _run_antenna_sweep,
    "user-sweep": _run_user_sweep,
    "distance-sweep": _run_distance_sweep,
    "beampattern": _run_beampattern,
    "bench-timing": _run_bench_timing,
}


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    if args.seed is not None:
        spec.seed = args.seed
        spec.config = replace(spec.config, rng_seed=args.seed)
    if getattr(args, "out", None):
        spec.out_dir = args.out
    if getattr(args, "drops", None):
        spec.drops = args.drops
    if getattr(args, "threads", None):
        spec.threads = args.threads
    return spec


def cmd_run(args) -> int:
    try:
        spec = _apply_overrides(load_spec(args.spec), args)
        findings = spec.validate()
        if findings:
            for f in findings:
                print(f"invalid spec: {f}", file=sys.stderr)
            return 2
        spec.config = resolve_spacing(spec.config, spec.auto_spacing)
        try:
            os.makedirs(spec.out_dir, exist_ok=True)
        except OSError as exc:
            print(f"output path {spec.out_dir} is not writable: {exc}", file=sys.stderr)
            return 2
        _RUNNERS[spec.kind](spec, spec.out_dir)
        return 0
    except WsabeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_validate(args) -> int:
    try:
        spec = _apply_overrides(load_spec(args.spec), args)
    except WsabeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    findings = spec.validate()
    if findings:
        for f in findings:
            print(f)
        return 1
    print("ok")
    return 0


def cmd_geometry(args) -> int:
    try:
        spec = _apply_overrides(load_spec(args.spec), args)
        config = resolve_spacing(spec.config, spec.auto_spacing).require_valid()
        geometry = build_wsa_geometry(config)
        if getattr(args, "out", None):
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "geometry.csv")
            with open(path, "w") as fh:
                export_geometry(geometry, fh)
            print(f"wrote {path} ({geometry.num_antennas} antennas, "
                  f"aperture {geometry.aperture_m:.6g} m)")
        else:
            export_geometry(geometry, sys.stdout)
        return 0
    except WsabeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wsabeam",
        description="Widely-spaced-array hybrid beamforming experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("validate", cmd_validate),
                     ("geometry", cmd_geometry)):
        p = sub.add_parser(name)
        p.add_argument("spec", help="experiment spec file (INI format)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--drops", type=int, default=None, help="Monte-Carlo drops")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
