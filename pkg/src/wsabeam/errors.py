"""Exception types raised by the simulator."""


class WsabeamError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WsabeamError):
    """A system or experiment parameter violates an invariant."""


class ApertureViolationError(WsabeamError):
    """Built geometry exceeds the aperture limit.

    Carries the offending aperture so callers can report how far over
    budget the requested layout is.
    """

    def __init__(self, aperture_m: float, limit_m: float):
        self.aperture_m = aperture_m
        self.limit_m = limit_m
        super().__init__(
            f"array aperture {aperture_m:.6g} m exceeds limit {limit_m:.6g} m"
        )


class DegenerateGeometryError(WsabeamError):
    """A user coincides with an antenna position."""


class RankDeficiencyError(WsabeamError):
    """Interference null space too small to carry the requested streams."""

    def __init__(self, user: int, null_dim: int, needed: int):
        self.user = user
        super().__init__(
            f"user {user}: interference null space has dimension {null_dim}, "
            f"need at least {needed} for the requested streams"
        )


class AssemblyError(WsabeamError):
    """Channel blocks with inconsistent widths cannot be concatenated."""
