"""Exception hierarchy.

Every failure raised by the library derives from :class:`KuboLabError`.  The
subclasses group into four families that the command line maps onto exit
codes: bad input (``PreconditionError``), a violated spectral assumption
(``AssumptionError``), a numerical breakdown (``NumericalError``), and a
failed tolerance (``ToleranceError``).
"""


class KuboLabError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class PreconditionError(KuboLabError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 3


class AssumptionError(KuboLabError):
    """A spectral hypothesis required by the analysis does not hold."""

    exit_code = 3


class NumericalError(KuboLabError, ArithmeticError):
    """A numerical routine lost accuracy or failed to converge."""

    exit_code = 4


class ToleranceError(KuboLabError):
    """A computed quantity misses its pinned tolerance."""

    exit_code = 2


# -- model -----------------------------------------------------------------
class KernelNotHermitian(PreconditionError):
    pass


class EvenL(PreconditionError):
    pass


class WrongDimension(PreconditionError):
    pass


# -- spectral --------------------------------------------------------------
class TransversalityViolated(AssumptionError):
    pass


class DegeneracyViolated(AssumptionError):
    pass


class AssumptionBViolated(AssumptionError):
    pass


# -- perturbation ----------------------------------------------------------
class SupportWrap(PreconditionError):
    pass


# -- equilibrium -----------------------------------------------------------
class SingularPropagator(NumericalError):
    pass


class DeltaTooLarge(PreconditionError):
    pass


# -- dynamics --------------------------------------------------------------
class StepTooLarge(PreconditionError):
    pass


class StripTooWide(PreconditionError):
    pass


class NumericalFailure(NumericalError):
    pass


# -- diagrammatics ---------------------------------------------------------
class QuadratureFailure(NumericalError):
    pass


class UndefinedLimit(PreconditionError):
    pass


class OutsideCutoffRegime(PreconditionError):
    pass


# -- prediction / oracle ---------------------------------------------------
class ImaginaryLeak(NumericalError):
    pass


class UnsupportedParity(PreconditionError):
    pass


# -- harness ---------------------------------------------------------------
class FitDegenerate(NumericalError):
    pass


class ToleranceFailure(ToleranceError):
    pass
