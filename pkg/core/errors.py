"""
Exception hierarchy for PoseLift
Every error raised by the library derives from PoseLiftError so the CLI can map it to an exit code
"""


class PoseLiftError(Exception):
    """Base class for all PoseLift errors"""


class ShapeError(PoseLiftError, ValueError):
    """Tensor or array shapes do not agree"""


class ConfigError(PoseLiftError, ValueError):
    """Invalid configuration value or combination"""


class DatasetError(PoseLiftError):
    """Malformed dataset file or invalid sample"""


class CheckpointError(PoseLiftError):
    """Checkpoint cannot be read, validated or written"""


class NumericalError(PoseLiftError):
    """Non-finite value where a finite one is required"""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss"""

    def __init__(self, message: str, epoch: int = -1, step: int = -1):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


def config_error(exc, what: str = "configuration") -> ConfigError:
    """Turn a pydantic ValidationError into a ConfigError naming the first bad field"""
    first = exc.errors()[0]
    loc = ".".join(str(part) for part in first.get("loc", ())) or "value"
    return ConfigError(f"invalid {what}: {loc}: {first.get('msg', 'invalid value')}")
