"""Exception hierarchy shared by every stage of the package."""


class MixspecError(Exception):
    """Base class for all errors raised by this package."""


# dataset
class SchemaMismatch(MixspecError, ValueError):
    pass


class EmptyAfterDrop(MixspecError, ValueError):
    pass


class UnknownCategory(MixspecError, ValueError):
    pass


class ConstantColumn(MixspecError, ValueError):
    pass


class SchemaError(MixspecError, ValueError):
    pass


# shared shape / argument errors
class DimensionMismatch(MixspecError, ValueError):
    pass


class LengthMismatch(MixspecError, ValueError):
    pass


class DegenerateInput(MixspecError, ValueError):
    pass


# factorization
class InvalidLatentDim(MixspecError, ValueError):
    pass


class NonFiniteLoss(MixspecError, ArithmeticError):
    pass


# similarity
class IndexOutOfRange(MixspecError, IndexError):
    pass


class SelfPair(MixspecError, ValueError):
    pass


# graph model
class NonFiniteLikelihood(MixspecError, ArithmeticError):
    pass


# spectral
class ConvergenceFailure(MixspecError, ArithmeticError):
    pass


class InvalidFeatureCount(MixspecError, ValueError):
    pass


# clustering
class TooManyClusters(MixspecError, ValueError):
    pass


class AsymmetricInput(MixspecError, ValueError):
    pass


# metrics
class AllZeroSpectrum(MixspecError, ValueError):
    pass


class ZeroTotalScatter(MixspecError, ValueError):
    pass


# configuration / pipeline
class ConfigError(MixspecError, ValueError):
    """Raised with the complete list of problems found in a config file."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ConfigParseError(ConfigError):
    pass


class StageError(MixspecError, RuntimeError):
    """Wraps a failure inside one pipeline stage, naming the stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
