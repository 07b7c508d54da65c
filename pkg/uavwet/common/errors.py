class UavWetError(Exception):
    """Base for every error raised by the simulator and trainer."""


class ConfigError(UavWetError, ValueError):
    pass


class EpisodeStateError(UavWetError, RuntimeError):
    pass


class DivergenceError(UavWetError, RuntimeError):
    pass


class CheckpointMismatchError(UavWetError):
    pass


class TensorError(UavWetError):
    pass


class ShapeError(TensorError, ValueError):
    pass


class NonFiniteError(TensorError, ArithmeticError):
    pass
