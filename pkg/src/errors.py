class PipelineError(Exception):
    """Base class for errors that end a pipeline command with a documented exit code."""

    exit_code = 1


class UsageError(PipelineError):
    exit_code = 2


class DimensionError(UsageError, ValueError):
    pass


class PipelineOrderError(PipelineError):
    """A subcommand ran before the stage that produces its input."""

    exit_code = 3

    def __init__(self, missing: str):
        super().__init__(f"missing predecessor artifact: {missing}")
        self.missing = missing


class CompatibilityError(PipelineError):
    exit_code = 4


class EmptyDataset(PipelineError):
    exit_code = 5


class TrainingDiverged(PipelineError):
    exit_code = 6

    def __init__(self, epoch: int, phase: str, batch_index: int, losses: dict[str, float]):
        detail = ", ".join(f"{k}={v}" for k, v in losses.items())
        super().__init__(f"non-finite loss at epoch {epoch}, phase {phase}, batch {batch_index} ({detail})")
        self.epoch = epoch
        self.phase = phase
        self.batch_index = batch_index


class CheckFailed(PipelineError):
    exit_code = 7

    def __init__(self, loss: str, block: str, rel_error: float):
        super().__init__(f"gradient check failed for {block} under {loss} loss: relative error {rel_error:.3e}")
        self.loss = loss
        self.block = block
        self.rel_error = rel_error
