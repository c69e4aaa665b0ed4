"""Exception hierarchy shared across the toolkit."""


class RevwerError(Exception):
    """Base class for all toolkit errors."""


# -- signal / impulse-response analysis ------------------------------------

class AllZeroSignal(RevwerError):
    """Signal carries no energy, so energy ratios are undefined."""


class InsufficientDecay(RevwerError):
    """The energy decay curve never reaches the dB range needed for a fit."""

    def __init__(self, message, band_hz=None):
        super().__init__(message)
        self.band_hz = band_hz


class BandAboveNyquist(RevwerError):
    """Octave band upper edge exceeds the Nyquist frequency."""


# -- corpus generation -----------------------------------------------------

class SampleRateMismatch(RevwerError):
    """Two signals that must share a sample rate do not."""


class UnreachableDrr(RevwerError):
    """No tail gain can realize the requested direct-to-reverberant ratio."""


class TooFewGroups(RevwerError):
    """Not enough distinct talkers or AIRs for a disjoint split."""


class InvalidCoefficients(RevwerError):
    """Sigmoid coefficients violate q2 > q1 >= 0."""


# -- metrics ---------------------------------------------------------------

class EmptyReference(RevwerError):
    """WER reference transcript has no words."""


class ConstantInput(RevwerError):
    """Correlation requested on a constant vector."""


class EmptyInput(RevwerError):
    """Metric requested on empty vectors."""


class LengthMismatch(RevwerError):
    """Paired vectors differ in length."""


class DegenerateGroups(RevwerError):
    """ANOVA groups are too small or have zero within-group variance."""


# -- curve fitting ---------------------------------------------------------

class RankDeficient(RevwerError):
    """Design matrix does not have full column rank."""


class FitDiverged(RevwerError):
    """Nonlinear least-squares iteration failed to converge."""


class JacobianSingular(RevwerError):
    """Damped normal equations stayed singular past the damping cap."""


# -- features --------------------------------------------------------------

class TooShort(RevwerError):
    """Signal shorter than one analysis frame."""


class WrongSampleRate(RevwerError):
    """Feature front-end requires 16 kHz input."""


# -- neural network core ---------------------------------------------------

class ShapeMismatch(RevwerError):
    """Tensor shapes do not compose."""


class StaleCache(RevwerError):
    """Backward called with a cache from a different forward pass."""


class NonFiniteGradient(RevwerError):
    """Gradient contains NaN or infinity."""


class ConfigShapeError(RevwerError):
    """Network configuration produces inconsistent layer shapes."""


class DegenerateCovariance(RevwerError):
    """Covariance matrix is singular beyond dropped zero-variance columns."""
