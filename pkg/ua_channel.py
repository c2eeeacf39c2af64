"""
The averaging channel: balanced encoder, stochastic phases, balanced decoder
and vacuum heralding on the ancilla outputs, evaluated for one noise
realization at a time.

Mode layout of the Gaussian pipeline: mode 0 is the free arm of the
two-mode squeezed vacuum, mode 1 enters the interferometer together with the
n - 1 vacuum ancillas (modes 2..n), which are heralded after decoding.
"""
import logging
import math
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.linalg import dft, hadamard

from constants import DEGENERATE_PHASOR, MAX_SQUEEZING
from gaussian_state import (
    GaussianState,
    apply_symplectic,
    apply_uniform_loss,
    direct_sum,
    herald_vacuum,
    symplectic_from_passive,
    tmsv_covariance,
    vacuum,
)


class Convention(Enum):
    """Which multiple of phi_beta sets the output correlation angle"""
    DOUBLED = "paper"  # Theta = 2 phi_beta, reproduces the reference squeezing table
    DERIVED = "derived"  # Theta = phi_beta, from <x1 x2> of sum lambda^N |N,N>

    @classmethod
    def _missing_(cls, value):
        # accepted alias
        if value == "doubled":
            return cls.DOUBLED
        return None


class ChannelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Redundancy: modes through the interferometer")
    r: float = Field(..., ge=0.0, le=MAX_SQUEEZING, allow_inf_nan=False, description="Input two-mode squeezing parameter")
    v: float = Field(..., ge=0.0, allow_inf_nan=False, description="Phase variance in rad^2")
    convention: Convention = Field(default=Convention.DOUBLED, description="Correlation-angle convention")
    loss: float = Field(default=0.0, ge=0.0, le=1.0, description="Uniform loss probability on every mode")

    @property
    def shot_convention(self) -> Convention:
        """Convention behind ensemble shots: lossy runs go through the Gaussian path, which is DERIVED"""
        return Convention.DERIVED if self.loss > 0 else self.convention


class PhaseSample(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phases: np.ndarray = Field(..., description="Per-arm phases theta_1..theta_n in radians")

    @field_validator('phases', mode='before')
    @classmethod
    def to_array(cls, v):
        array = np.atleast_1d(np.array(v, dtype=float))
        array.setflags(write=False)
        return array

    @field_validator('phases')
    @classmethod
    def check_finite(cls, v):
        if v.ndim != 1 or v.size == 0:
            raise ValueError("Phase sample must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("Phases must be finite")
        return v


class PhasorMean(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., ge=0.0, le=1.0, description="Modulus of the mean phasor")
    phi_beta: float = Field(..., description="Argument of the mean phasor")
    degenerate: bool = Field(default=False, description="Mean phasor vanishes; phi_beta reported as 0")


class ShotOutcome(BaseModel):
    """Result of one noise realization"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    engine: str = Field(..., description="'closed-form' or 'gaussian'")
    phases: np.ndarray = Field(..., description="Phases of this realization")
    alpha: float = Field(..., ge=0.0, le=1.0)
    phi_beta: float
    r_prime: float = Field(..., ge=0.0, description="Effective squeezing, tanh r' = alpha tanh r")
    probability: float = Field(..., gt=0.0, le=1.0 + 1e-12, description="Vacuum heralding probability")
    cov: np.ndarray = Field(..., description="4x4 conditional covariance of the output pair")
    degenerate: bool = False

    @property
    def state(self) -> GaussianState:
        return GaussianState(modes=2, cov=self.cov)


def _as_phases(phases) -> np.ndarray:
    if isinstance(phases, PhaseSample):
        return phases.phases
    return PhaseSample(phases=phases).phases


def balanced_splitter(n: int) -> np.ndarray:
    """Normalized Hadamard matrix for powers of two, unitary DFT otherwise"""
    if n < 1:
        raise ValueError(f"Splitter size must be at least 1, got {n}")
    if n & (n - 1) == 0:
        return hadamard(n).astype(complex) / math.sqrt(n)
    return dft(n, scale='sqrtn')


def interferometer_unitary(phases) -> np.ndarray:
    """H^dagger diag(e^{i theta}) H"""
    phases = _as_phases(phases)
    H = balanced_splitter(phases.size)
    return H.conj().T @ np.diag(np.exp(1j * phases)) @ H


def sample_phases(params: ChannelParams, rng: np.random.Generator) -> PhaseSample:
    return PhaseSample(phases=rng.normal(0.0, math.sqrt(params.v), size=params.n))


def complex_mean(phases) -> PhasorMean:
    """alpha e^{i phi_beta} = mean of e^{i theta_j}"""
    phases = _as_phases(phases)
    phasor = np.mean(np.exp(1j * phases))
    alpha = min(float(abs(phasor)), 1.0)
    if alpha < DEGENERATE_PHASOR:
        logging.debug(f"Degenerate mean phasor (|mean| = {alpha:.3e}); phi_beta set to 0")
        return PhasorMean(alpha=0.0, phi_beta=0.0, degenerate=True)
    return PhasorMean(alpha=alpha, phi_beta=float(np.angle(phasor)))


def correlation_angle(phi_beta, convention: Convention):
    return 2 * phi_beta if convention is Convention.DOUBLED else phi_beta


def success_probability(r: float, r_prime: float) -> float:
    """(cosh r' / cosh r)^2"""
    if r < 0 or r_prime < 0:
        raise ValueError(f"Squeezing parameters must be non-negative, got r={r}, r'={r_prime}")
    if r_prime > r * (1 + 1e-12) + 1e-15:
        raise ValueError(f"Effective squeezing r'={r_prime} exceeds input squeezing r={r}")
    return (math.cosh(r_prime) / math.cosh(r)) ** 2


def shot_closed_form(params: ChannelParams, phases) -> ShotOutcome:
    """
    Closed-form heralded output: a two-mode squeezed vacuum with r' and angle Theta.

    Args:
        params: Lossless channel parameters
        phases: One phase per interferometer arm

    Returns:
        ShotOutcome with tanh r' = alpha tanh r and probability (cosh r' / cosh r)^2

    Raises:
        ValueError: params.loss is nonzero or the phase count differs from params.n
    """
    if params.loss > 0:
        raise ValueError("The closed form covers the lossless channel only; use the Gaussian path")
    phases = _as_phases(phases)
    if phases.size != params.n:
        raise ValueError(f"Expected {params.n} phases, got {phases.size}")
    mean = complex_mean(phases)
    r_prime = math.atanh(mean.alpha * math.tanh(params.r))
    theta = correlation_angle(mean.phi_beta, params.convention)
    return ShotOutcome(
        engine="closed-form",
        phases=phases,
        alpha=mean.alpha,
        phi_beta=mean.phi_beta,
        r_prime=r_prime,
        probability=success_probability(params.r, r_prime),
        cov=tmsv_covariance(r_prime, theta).cov,
        degenerate=mean.degenerate,
    )


def shot_gaussian_path(params: ChannelParams, phases) -> ShotOutcome:
    """
    Full symplectic pipeline: TMSV(r) with n - 1 vacuum ancillas, optional
    uniform loss, the interferometer on modes 1..n, vacuum heralding of
    modes 2..n. Physically this realizes the derived correlation angle.

    Args:
        params: Channel parameters; params.convention is not used
        phases: One phase per interferometer arm

    Returns:
        ShotOutcome of the heralded pair (modes 0 and 1)
    """
    phases = _as_phases(phases)
    n = params.n
    if phases.size != n:
        raise ValueError(f"Expected {n} phases, got {phases.size}")

    state = tmsv_covariance(params.r)
    if n > 1:
        state = direct_sum(state, vacuum(n - 1))
    if params.loss > 0:
        state = apply_uniform_loss(state, params.loss)
    S = symplectic_from_passive(interferometer_unitary(phases))
    state = apply_symplectic(state, S, modes=range(1, n + 1))

    probability = 1.0
    if n > 1:
        state, probability = herald_vacuum(state, range(2, n + 1))

    mean = complex_mean(phases)
    return ShotOutcome(
        engine="gaussian",
        phases=phases,
        alpha=mean.alpha,
        phi_beta=mean.phi_beta,
        r_prime=math.atanh(mean.alpha * math.tanh(params.r)),
        probability=probability,
        cov=state.cov,
        degenerate=mean.degenerate,
    )


def closed_form_batch(params: ChannelParams, phases: np.ndarray,
                      convention: Optional[Convention] = None) -> dict:
    """
    Vectorized closed form over a (shots, n) phase array.

    Returns arrays keyed by 'alpha', 'phi_beta', 'tanh_r_prime', 'cos_theta',
    'probability' and 'cov' (shape (shots, 4, 4)).
    """
    convention = convention or params.convention
    phasor = np.mean(np.exp(1j * phases), axis=1)
    alpha = np.minimum(np.abs(phasor), 1.0)
    degenerate = alpha < DEGENERATE_PHASOR
    alpha = np.where(degenerate, 0.0, alpha)
    phi_beta = np.where(degenerate, 0.0, np.angle(phasor))

    t = alpha * math.tanh(params.r)
    theta = correlation_angle(phi_beta, convention)
    a = (1 + t ** 2) / (1 - t ** 2)
    s = 2 * t / (1 - t ** 2)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    cov = np.zeros((phases.shape[0], 4, 4))
    cov[:, 0, 0] = cov[:, 1, 1] = cov[:, 2, 2] = cov[:, 3, 3] = a
    cov[:, 0, 2] = cov[:, 2, 0] = s * cos_t
    cov[:, 1, 3] = cov[:, 3, 1] = -s * cos_t
    cov[:, 0, 3] = cov[:, 3, 0] = s * sin_t
    cov[:, 1, 2] = cov[:, 2, 1] = s * sin_t

    # (cosh r'/cosh r)^2 = (1 - tanh^2 r) / (1 - tanh^2 r')
    probability = (1 - math.tanh(params.r) ** 2) / (1 - t ** 2)
    return {
        'alpha': alpha,
        'phi_beta': phi_beta,
        'tanh_r_prime': t,
        'cos_theta': cos_t,
        'probability': probability,
        'cov': cov,
    }


def gaussian_path_batch(params: ChannelParams, phases: np.ndarray) -> dict:
    """Per-shot Gaussian pipeline over a (shots, n) phase array; used when loss is present"""
    outcomes = [shot_gaussian_path(params, row) for row in phases]
    t = np.array([o.alpha for o in outcomes]) * math.tanh(params.r)
    phi_beta = np.array([o.phi_beta for o in outcomes])
    return {
        'alpha': np.array([o.alpha for o in outcomes]),
        'phi_beta': phi_beta,
        'tanh_r_prime': t,
        'cos_theta': np.cos(correlation_angle(phi_beta, Convention.DERIVED)),
        'probability': np.array([o.probability for o in outcomes]),
        'cov': np.stack([o.cov for o in outcomes]),
    }


def shot_report(params: ChannelParams, phases: Sequence[float]) -> list:
    """Both engines for one explicit phase vector; the closed form is skipped under loss"""
    outcomes = []
    if params.loss == 0:
        outcomes.append(shot_closed_form(params, phases))
    outcomes.append(shot_gaussian_path(params, phases))
    return outcomes
