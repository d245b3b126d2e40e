"""Exception hierarchy. ``exit_code`` is the CLI failure category."""


class SurrogateError(Exception):
    exit_code = 1


class ValidationError(SurrogateError, ValueError):
    exit_code = 2


class ParseError(ValidationError):
    pass


class DuplicateError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class JoinError(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class AlignmentError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class SchemaMismatchError(ValidationError):
    pass


class ModelLoadError(ValidationError):
    pass


class StateError(SurrogateError, RuntimeError):
    pass


class NumericError(SurrogateError, ArithmeticError):
    exit_code = 3


class TrainingDiverged(NumericError):
    def __init__(self, epoch: int, lr: float, detail: str = ""):
        self.epoch = epoch
        self.lr = lr
        msg = f"training diverged at epoch {epoch} (lr={lr:g})"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class UndefinedCorrelation(NumericError):
    pass


class ArtifactIOError(SurrogateError, OSError):
    exit_code = 4
