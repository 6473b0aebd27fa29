"""Exception types shared across the library."""


class StatetrimError(Exception):
    """Base class for all library-specific errors."""


class UnstableSystem(StatetrimError):
    """Spectral radius >= 1 where an asymptotically stable system is required."""


class DegenerateDenominator(StatetrimError):
    """A diagonal Lyapunov denominator 1 - lam_i * conj(lam_j) is numerically zero."""


class SingularSystem(StatetrimError):
    """The Kronecker-product Lyapunov system is numerically singular."""


class ComplexEigenResidual(StatetrimError):
    """The Grammian product has eigenvalues that are not real and nonnegative."""


class NearUnobservableState(StatetrimError):
    """A Hankel singular value is too small relative to the largest for balancing."""


class DefectiveMatrix(StatetrimError):
    """Eigenvector matrix is too ill-conditioned for a reliable diagonalization."""


class ResolventSingular(StatetrimError):
    """The evaluation point coincides with an eigenvalue of the state matrix."""


class InsufficientDepth(StatetrimError):
    """Impulse-response tail has not decayed enough for the requested Hankel depth."""


class UnstableEigenvalue(StatetrimError):
    """An eigenvalue modulus is too close to or beyond 1 to re-parameterize."""


class PhaseDegenerate(StatetrimError):
    """A real positive eigenvalue cannot be represented by the phase map."""


class MatrixSingular(StatetrimError):
    """I - A22 is numerically singular in the singular perturbation formulas."""


class InvalidOrder(StatetrimError):
    """Requested reduced order is outside [0, n_x]."""


class LengthMismatch(StatetrimError):
    """Sequence arguments do not have matching lengths."""


class NonFiniteLoss(StatetrimError):
    """A NaN or Inf appeared while evaluating the training loss."""


class ClusteredSpectrum(StatetrimError):
    """Eigenvalues of the Grammian product are too clustered for the
    first-order perturbation formula; callers fall back to finite differences."""


class SequenceTooShort(StatetrimError):
    """A source sequence is shorter than the requested sub-sequence length."""


class ZeroVariance(StatetrimError):
    """A target channel is constant, so fit and NRMSE are undefined."""


class ConfigError(StatetrimError):
    """A configuration file could not be parsed or validated."""
