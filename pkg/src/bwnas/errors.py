"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class BwnasError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(BwnasError, ValueError):
    pass


class SubnetRangeError(ValidationError, IndexError):
    pass


class ShapeError(ValidationError):
    pass


class DegenerateTargetError(BwnasError, ValueError):
    def __init__(self, channel: int, variance: float):
        self.channel = channel
        self.variance = variance
        super().__init__(
            f"target channel {channel} has near-zero variance ({variance:.3e}); "
            "check the teacher / space configuration"
        )


class InfeasibleError(BwnasError):
    """No selection satisfies the constraints.

    ``metric`` names the binding budget (or ``"candidates"`` when a block has
    nothing left after filtering) and ``minima`` holds the per-block minima of
    that metric.
    """

    def __init__(self, message: str, metric: str | None = None,
                 minima: list | None = None, budget=None, block: int | None = None):
        self.metric = metric
        self.minima = minima
        self.budget = budget
        self.block = block
        super().__init__(message)


class IncompatibleError(BwnasError):
    """Artifacts were produced for a different space or metric set."""


class LutFormatError(BwnasError):
    def __init__(self, path, line: int | None, message: str):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


class OracleCapError(BwnasError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"brute force refused: {count} combinations exceeds cap {cap}")


class MissingMeasurementError(BwnasError, KeyError):
    def __init__(self, block: int, subnet: int):
        self.block = block
        self.subnet = subnet
        super().__init__(f"no latency measurement for block {block}, subnet {subnet}")

    def __str__(self):
        return self.args[0]
