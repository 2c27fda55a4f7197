"""
Splat Regression - Exception Hierarchy
======================================

Every error raised by the library derives from ``SplatError``. Errors that
signal bad caller input also derive from the matching builtin so that code
catching ``ValueError``/``KeyError`` keeps working.
"""

from typing import Optional


class SplatError(Exception):
    """Root of all splatreg errors"""


class SingularSplat(SplatError):
    """A splat's affine matrix is (numerically) singular"""

    def __init__(self, index: int, det: float, floor: float):
        self.index = index
        self.det = det
        self.floor = floor
        super().__init__(
            f"splat {index} has |det A| = {det:.3e} below det_floor = {floor:.1e}"
        )


class UnsupportedMother(SplatError):
    """The mother splat lacks an evaluator required by the operation"""


class NonFinite(SplatError):
    """NaN or Inf produced during evaluation, gradients or an optimizer step"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class NonPsdIntermediate(SplatError):
    """A symmetric square root met a matrix that is not positive semidefinite"""


class DimensionError(SplatError, ValueError):
    """Input/output dimensions are inconsistent"""


class EmptyModel(SplatError):
    """Birth-death pruning removed every splat"""


class ConfigError(SplatError, ValueError):
    """Experiment configuration is missing a key or holds an invalid value"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class UnknownTarget(SplatError, KeyError):
    """Requested target function is not in the registry"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown target"
