"""Exception hierarchy shared by every module of the package."""


class TunnelNavError(Exception):
    """Base class for all errors raised by tunnelnav."""


class DegenerateInput(TunnelNavError, ValueError):
    pass


class OutOfRange(TunnelNavError, ValueError):
    pass


class OriginOutside(TunnelNavError, ValueError):
    pass


class NotInTunnel(TunnelNavError, ValueError):
    pass


class AttitudeOutOfRange(TunnelNavError, ValueError):
    pass


class EmptyCloud(TunnelNavError, ValueError):
    pass


class UntrainedModel(TunnelNavError, RuntimeError):
    pass


class ShapeMismatch(TunnelNavError, ValueError):
    pass


class DatasetTooSmall(TunnelNavError, ValueError):
    pass


class VersionMismatch(TunnelNavError, ValueError):
    pass


class CorruptFile(TunnelNavError, ValueError):
    pass


class EmptyTrace(TunnelNavError, ValueError):
    pass


class ConfigError(TunnelNavError, ValueError):
    pass


class StartPoseInvalid(TunnelNavError, ValueError):
    pass
