"""Exception hierarchy for cascadeseg."""


class CascadeSegError(Exception):
    """Base class for all errors raised by cascadeseg."""


class ShapeError(CascadeSegError, ValueError):
    """Tensor or array extents are incompatible with an operation."""


class GraphError(CascadeSegError):
    """Misuse of the autodiff graph (non-scalar root, reused graph)."""


class ConfigError(CascadeSegError, ValueError):
    """Invalid run configuration."""


class CheckpointError(CascadeSegError):
    """Checkpoint file cannot be written, read or matched to a config."""


class MaskIOError(CascadeSegError):
    """Base class for mask image codec failures."""


class MaskNotFoundError(MaskIOError):
    pass


class MaskDecodeError(MaskIOError):
    pass


class UnsupportedColorTypeError(MaskIOError):
    pass


class DatasetError(CascadeSegError):
    """Dataset directory layout problems (empty, unmatched names)."""


class GradientCheckError(CascadeSegError):
    pass


class TrainingDivergedError(CascadeSegError):
    """Loss became NaN or infinite during training."""

    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        self.value = value
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")


class MissingGradientError(CascadeSegError):
    """An optimizer step found a parameter without a gradient."""

    def __init__(self, param_id: str):
        self.param_id = param_id
        super().__init__(f"no gradient for parameter {param_id}")
