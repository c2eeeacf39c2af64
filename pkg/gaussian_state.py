"""
Covariance-matrix formalism for zero-mean Gaussian states.

Conventions: quadratures are mode-blocked (x1, p1, x2, p2, ...) with
x = a + a^dag and p = -i(a - a^dag), so the vacuum covariance is the identity.
Every matrix product is followed by explicit symmetrization.
"""
import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator
from scipy.linalg import block_diag, eigh, eigvalsh
from scipy.special import xlogy

from constants import (
    CONDITIONING_FLOOR,
    DB_PER_NEPER,
    NORMALIZATION_ATOL,
    HERALD_ROUNDING,
    PHYSICALITY_SLACK,
    SYMMETRIC_STATE_ATOL,
    SYMMETRY_RTOL,
    SYMPLECTIC_ATOL,
    UNITARITY_ATOL,
)
from errors import NumericalConditioningError, UnphysicalStateError


def _frozen_array(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2


def symplectic_form(modes: int) -> np.ndarray:
    """Standard symplectic form Omega for `modes` modes in mode-blocked ordering"""
    return block_diag(*([np.array([[0.0, 1.0], [-1.0, 0.0]])] * modes))


def _check_symmetric(cov: np.ndarray) -> None:
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise ValueError(f"Covariance must be a square matrix of even size, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov))))
    asymmetry = float(np.max(np.abs(cov - cov.T)))
    if asymmetry > SYMMETRY_RTOL * scale:
        raise ValueError(f"Covariance is not symmetric (max asymmetry {asymmetry:.3e})")


class GaussianState(BaseModel):
    """Zero-mean Gaussian state of `modes` modes described by its covariance matrix"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    modes: int = Field(..., gt=0, description="Number of bosonic modes m")
    cov: np.ndarray = Field(..., description="2m x 2m real symmetric covariance, vacuum = identity")

    @field_validator('cov', mode='before')
    @classmethod
    def to_float_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode='after')
    def check_physical(self, info: ValidationInfo):
        if self.cov.shape != (2 * self.modes, 2 * self.modes):
            raise ValueError(f"Covariance shape {self.cov.shape} does not match {self.modes} modes")
        if not np.all(np.isfinite(self.cov)):
            raise ValueError("Covariance contains non-finite entries")
        _check_symmetric(self.cov)
        # a result computed from larger matrices is judged against their norm
        scale = (info.context or {}).get('scale', 1.0)
        margin = uncertainty_margin(self.cov, scale)
        if margin < -PHYSICALITY_SLACK:
            raise UnphysicalStateError(
                f"cov + i Omega has a negative eigenvalue (relative margin {margin:.3e}); "
                f"the uncertainty relation is violated"
            )
        return self

    @classmethod
    def from_cov(cls, cov: np.ndarray) -> "GaussianState":
        cov = np.asarray(cov, dtype=float)
        return cls(modes=cov.shape[0] // 2, cov=symmetrize(cov))


class SymplecticMatrix(BaseModel):
    """Real 2m x 2m matrix S with S Omega S^T = Omega"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray = Field(..., description="Symplectic matrix acting on quadratures")

    @field_validator('matrix', mode='before')
    @classmethod
    def to_float_array(cls, v):
        return _frozen_array(v)

    @field_validator('matrix')
    @classmethod
    def check_symplectic(cls, v):
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] % 2:
            raise ValueError(f"Symplectic matrix must be square of even size, got shape {v.shape}")
        omega = symplectic_form(v.shape[0] // 2)
        defect = float(np.max(np.abs(v @ omega @ v.T - omega)))
        if defect > SYMPLECTIC_ATOL:
            raise ValueError(f"Matrix is not symplectic (defect {defect:.3e})")
        return v

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


class QuadratureForm(BaseModel):
    """Linear combination f.xi of quadratures whose vacuum variance is 1"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coefficients: np.ndarray = Field(..., description="Length-2m real coefficient vector")

    @field_validator('coefficients', mode='before')
    @classmethod
    def to_float_array(cls, v):
        return _frozen_array(v)

    @field_validator('coefficients')
    @classmethod
    def check_normalized(cls, v):
        if v.ndim != 1 or v.size % 2:
            raise ValueError("Quadrature form needs an even-length coefficient vector")
        norm_sq = float(v @ v)
        if abs(norm_sq - 1.0) > NORMALIZATION_ATOL:
            raise ValueError(f"Quadrature form is not normalized (squared norm {norm_sq:.12f})")
        return v

    @classmethod
    def epr(cls) -> "QuadratureForm":
        """(x1 - x2)/sqrt(2), the form used to report output squeezing"""
        return cls(coefficients=np.array([1.0, 0.0, -1.0, 0.0]) / math.sqrt(2))


CovLike = Union[GaussianState, np.ndarray]


def _as_cov(value: CovLike) -> np.ndarray:
    return value.cov if isinstance(value, GaussianState) else np.asarray(value, dtype=float)


def _quadrature_indices(modes: Iterable[int]) -> list:
    return [q for m in modes for q in (2 * m, 2 * m + 1)]


def vacuum(modes: int) -> GaussianState:
    return GaussianState(modes=modes, cov=np.eye(2 * modes))


def direct_sum(*states: GaussianState) -> GaussianState:
    """Tensor product of independent states (direct sum of covariances)"""
    return GaussianState(
        modes=sum(s.modes for s in states),
        cov=block_diag(*[s.cov for s in states]),
    )


def two_mode_blocks(cov: CovLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a 4x4 covariance into its A, B, C blocks"""
    cov = _as_cov(cov)
    if cov.shape != (4, 4):
        raise ValueError(f"Expected a two-mode (4x4) covariance, got shape {cov.shape}")
    return cov[:2, :2], cov[2:, 2:], cov[:2, 2:]


def tmsv_covariance(r: float, theta: float = 0.0) -> GaussianState:
    """
    Two-mode squeezed vacuum with squeezing r and correlation angle theta.

    Args:
        r: Squeezing parameter, r >= 0
        theta: Correlation angle in radians

    Returns:
        State with A = B = cosh(2r) I, C = sinh(2r) [[cos t, sin t], [sin t, -cos t]]
    """
    if not math.isfinite(r) or not math.isfinite(theta):
        raise ValueError(f"Squeezing and angle must be finite, got r={r}, theta={theta}")
    if r < 0:
        raise ValueError(f"Squeezing parameter must be non-negative, got {r}")
    a = math.cosh(2 * r)
    s = math.sinh(2 * r)
    c = s * np.array([[math.cos(theta), math.sin(theta)],
                      [math.sin(theta), -math.cos(theta)]])
    cov = np.block([[a * np.eye(2), c], [c.T, a * np.eye(2)]])
    return GaussianState(modes=2, cov=symmetrize(cov))


def symplectic_from_passive(U: np.ndarray) -> SymplecticMatrix:
    """
    Quadrature representation of a passive linear-optical unitary.

    The (j, k) block is [[Re U_jk, -Im U_jk], [Im U_jk, Re U_jk]], i.e. the
    Heisenberg map a_j -> sum_k U_jk a_k.
    """
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    n = U.shape[0]
    if U.shape != (n, n):
        raise ValueError(f"Unitary must be square, got shape {U.shape}")
    defect = float(np.max(np.abs(U @ U.conj().T - np.eye(n))))
    if defect > UNITARITY_ATOL:
        raise ValueError(f"Matrix is not unitary (unitarity defect {defect:.3e})")
    S = np.zeros((2 * n, 2 * n))
    S[0::2, 0::2] = U.real
    S[0::2, 1::2] = -U.imag
    S[1::2, 0::2] = U.imag
    S[1::2, 1::2] = U.real
    return SymplecticMatrix(matrix=S)


def apply_symplectic(state: GaussianState, S: SymplecticMatrix,
                     modes: Optional[Sequence[int]] = None) -> GaussianState:
    """Apply S to the given subset of modes (all modes by default)"""
    modes = list(range(state.modes)) if modes is None else list(modes)
    if S.dim != 2 * len(modes):
        raise ValueError(f"Symplectic matrix of size {S.dim} does not match {len(modes)} modes")
    if len(set(modes)) != len(modes) or any(m < 0 or m >= state.modes for m in modes):
        raise ValueError(f"Invalid mode subset {modes} for a {state.modes}-mode state")
    idx = _quadrature_indices(modes)
    full = np.eye(2 * state.modes)
    full[np.ix_(idx, idx)] = S.matrix
    return GaussianState(modes=state.modes, cov=symmetrize(full @ state.cov @ full.T))


def herald_vacuum(state: GaussianState, measured: Iterable[int]) -> Tuple[GaussianState, float]:
    """
    Project the measured modes onto vacuum.

    Args:
        state: State to condition
        measured: Modes projected onto vacuum; at least one mode must remain

    Returns:
        The conditional state of the remaining modes,
        sigma_A - sigma_AB (sigma_B + I)^-1 sigma_AB^T, and the probability
        2^m_B / sqrt(det(sigma_B + I))

    Raises:
        NumericalConditioningError: sigma_B + I is numerically singular
    """
    measured = sorted(set(measured))
    if not measured:
        raise ValueError("Heralding needs at least one measured mode")
    if any(m < 0 or m >= state.modes for m in measured):
        raise ValueError(f"Measured modes {measured} out of range for {state.modes} modes")
    kept = [m for m in range(state.modes) if m not in measured]
    if not kept:
        raise ValueError("Heralding every mode leaves no conditional state")

    ia, ib = _quadrature_indices(kept), _quadrature_indices(measured)
    sigma_a = state.cov[np.ix_(ia, ia)]
    sigma_b = state.cov[np.ix_(ib, ib)]
    sigma_ab = state.cov[np.ix_(ia, ib)]

    shifted = sigma_b + np.eye(len(ib))
    det = float(np.linalg.det(shifted))
    if det < CONDITIONING_FLOOR:
        raise NumericalConditioningError(f"sigma_B + I is numerically singular (det {det:.3e})")

    norm = float(np.linalg.norm(state.cov, 2))
    conditional = sigma_a - sigma_ab @ np.linalg.solve(shifted, sigma_ab.T)
    probability = 2.0 ** len(measured) / math.sqrt(det)
    # det(sigma_B + I) carries a relative error of order eps * ||cov||
    if 1.0 < probability <= 1.0 + PHYSICALITY_SLACK * norm:
        probability = 1.0
    # the conditional block loses about eps * ||cov||^2 to rounding
    scale = norm * max(1.0, HERALD_ROUNDING * norm / PHYSICALITY_SLACK)
    conditional_state = GaussianState.model_validate(
        {'modes': len(kept), 'cov': symmetrize(conditional)},
        context={'scale': scale},
    )
    return conditional_state, probability


def apply_uniform_loss(state: GaussianState, gamma: float) -> GaussianState:
    """Mix every mode with vacuum: cov -> (1 - gamma) cov + gamma I"""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"Loss probability must lie in [0, 1], got {gamma}")
    cov = (1.0 - gamma) * state.cov + gamma * np.eye(2 * state.modes)
    return GaussianState(modes=state.modes, cov=symmetrize(cov))


def purity(state: CovLike) -> float:
    return 1.0 / math.sqrt(float(np.linalg.det(_as_cov(state))))


def uncertainty_margin(cov: CovLike, scale: float = 1.0) -> float:
    """
    Smallest eigenvalue of the Hermitian matrix cov + i Omega, relative to
    the larger of the spectral norm of cov and `scale`.

    Args:
        cov: Covariance matrix or state
        scale: Norm of the matrices cov was computed from, when larger

    Returns:
        The relative margin; physical states have a margin >= 0
    """
    cov = _as_cov(cov)
    _check_symmetric(cov)
    omega = symplectic_form(cov.shape[0] // 2)
    lowest = float(eigvalsh(cov + 1j * omega)[0])
    return lowest / max(1.0, scale, float(np.linalg.norm(cov, 2)))


def symplectic_eigenvalues(cov: CovLike) -> np.ndarray:
    """
    Sorted symplectic spectrum, one value per mode.

    Taken from the Hermitian matrix i cov^1/2 Omega cov^1/2, whose
    eigenvalues come in pairs +-nu.
    """
    cov = _as_cov(cov)
    _check_symmetric(cov)
    weights, vectors = eigh(symmetrize(cov))
    if weights[0] <= 0:
        raise UnphysicalStateError(f"Covariance is not positive definite (smallest eigenvalue {weights[0]:.3e})")
    root = (vectors * np.sqrt(weights)) @ vectors.T
    omega = symplectic_form(cov.shape[0] // 2)
    spectrum = np.sort(np.abs(eigvalsh(1j * root @ omega @ root)))
    return spectrum[0::2]


def two_mode_symplectic_eigenvalues(cov: CovLike) -> Tuple[float, float]:
    """(nu_minus, nu_plus) from Delta = det A + det B + 2 det C"""
    A, B, C = two_mode_blocks(cov)
    delta = np.linalg.det(A) + np.linalg.det(B) + 2 * np.linalg.det(C)
    return _nu_pair(delta, float(np.linalg.det(_as_cov(cov))))


def _nu_pair(delta: float, det: float) -> Tuple[float, float]:
    root = math.sqrt(max(delta ** 2 - 4 * det, 0.0))
    nu_plus_sq = (delta + root) / 2
    # nu_-^2 nu_+^2 = det; the relative error of det itself grows like eps * ||cov||^2
    nu_minus_sq = max(det, 0.0) / nu_plus_sq if nu_plus_sq > 0 else 0.0
    return math.sqrt(nu_minus_sq), math.sqrt(nu_plus_sq)


def _isotropic_blocks(A: np.ndarray, B: np.ndarray) -> Optional[float]:
    """Common diagonal a when A = B = a I, else None"""
    a = A[0, 0]
    scale = max(1.0, abs(a))
    reference = a * np.eye(2)
    if np.max(np.abs(A - reference)) <= SYMMETRY_RTOL * scale and np.max(np.abs(B - reference)) <= SYMMETRY_RTOL * scale:
        return float(a)
    return None


def ppt_min_symplectic_eigenvalue(cov: CovLike) -> float:
    """
    Smallest symplectic eigenvalue of the partially transposed state.

    For A = B = a I and det C <= 0 this is a - sqrt(-det C), which is as
    accurate as the entries of cov allow. Other states go through Delta/det.
    """
    A, B, C = two_mode_blocks(cov)
    a = _isotropic_blocks(A, B)
    det_c = float(np.linalg.det(C))
    if a is not None and det_c <= 0:
        return max(a - math.sqrt(-det_c), 0.0)
    delta = np.linalg.det(A) + np.linalg.det(B) - 2 * det_c
    return _nu_pair(delta, float(np.linalg.det(_as_cov(cov))))[0]


def eof_from_ppt_eigenvalue(nu: float) -> float:
    if nu >= 1.0:
        return 0.0
    c_plus = (nu ** -0.5 + nu ** 0.5) ** 2 / 4
    c_minus = (nu ** -0.5 - nu ** 0.5) ** 2 / 4
    return float((xlogy(c_plus, c_plus) - xlogy(c_minus, c_minus)) / math.log(2))


def eof_symmetric(cov: CovLike) -> float:
    """Entanglement of formation in bits, closed form for states with det A = det B"""
    A, B, _ = two_mode_blocks(cov)
    det_a, det_b = np.linalg.det(A), np.linalg.det(B)
    if not math.isclose(det_a, det_b, rel_tol=SYMMETRIC_STATE_ATOL, abs_tol=SYMMETRIC_STATE_ATOL):
        raise ValueError(f"Asymmetric two-mode state (det A={det_a:.12g}, det B={det_b:.12g})")
    return eof_from_ppt_eigenvalue(ppt_min_symplectic_eigenvalue(cov))


def log_negativity(cov: CovLike) -> float:
    return max(0.0, -math.log2(ppt_min_symplectic_eigenvalue(cov)))


def quadrature_variance(state: CovLike, form: QuadratureForm) -> float:
    cov = _as_cov(state)
    if form.coefficients.size != cov.shape[0]:
        raise ValueError(
            f"Quadrature form of length {form.coefficients.size} does not match covariance size {cov.shape[0]}"
        )
    return float(form.coefficients @ cov @ form.coefficients)


def squeezing_db(variance: float) -> float:
    if variance <= 0:
        raise ValueError(f"Variance must be positive, got {variance}")
    return -10.0 * math.log10(variance)


def input_squeezing_db(r: float) -> float:
    """10 log10(e^{2r})"""
    return DB_PER_NEPER * r


def squeezing_from_db(db: float) -> float:
    return db / DB_PER_NEPER
