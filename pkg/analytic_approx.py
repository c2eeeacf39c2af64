"""
Small-noise ensemble approximations of the averaged channel and their
n -> infinity limits.

The averaged output covariance is modelled by pushing the expectation inside
the nonlinear map from tanh r' to the covariance blocks (the factorized
model); the Monte Carlo engine measures the error this introduces.
"""
import logging
import math
from enum import Enum
from typing import Dict, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import minimize_scalar

from constants import PHYSICALITY_SLACK, SMALL_NOISE_LIMIT
from gaussian_state import (
    GaussianState,
    QuadratureForm,
    eof_symmetric,
    log_negativity,
    purity,
    quadrature_variance,
    squeezing_db,
    symmetrize,
)
from ua_channel import Convention, success_probability


class CosModel(Enum):
    APPROX = "approx"  # cos(k sqrt(v/n))
    EXACT = "exact"  # exp(-k^2 v / 2n), exact for Gaussian phi_beta


def _eof_or_none(state: GaussianState) -> Optional[float]:
    try:
        return eof_symmetric(state)
    except ValueError as e:
        logging.debug(f"Entanglement of formation not evaluated: {e}")
        return None


class EnsembleMetrics(BaseModel):
    """Metrics of an averaged (ensemble) output state"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    engine: str = Field(..., description="analytic, asymptotic or montecarlo")
    mean_tanh: float = Field(..., description="<tanh r'>")
    mean_cos: float = Field(..., description="<cos Theta>")
    cov: np.ndarray = Field(..., description="4x4 averaged covariance")
    purity: float = Field(..., gt=0.0, le=1.0 + PHYSICALITY_SLACK)
    squeezing_db: float
    eof_bits: Optional[float] = Field(default=None, ge=0.0, description="None for asymmetric states")
    log_negativity: float = Field(..., ge=0.0)
    probability: float = Field(..., gt=0.0, le=1.0 + 1e-12)
    small_noise_valid: bool = Field(default=True, description="v inside the validity range of the expansion")
    stderr: Dict[str, float] = Field(default_factory=dict, description="Metric standard errors (Monte Carlo)")
    clipped: bool = Field(default=False, description="Covariance was rescaled onto the physical set")

    @field_validator('cov')
    @classmethod
    def check_symmetric(cls, v):
        if v.shape != (4, 4) or not np.allclose(v, v.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("Ensemble covariance must be a symmetric 4x4 matrix")
        return v

    @classmethod
    def from_covariance(cls, cov: np.ndarray, probability: float, mean_tanh: float,
                        mean_cos: float, engine: str, **extra) -> "EnsembleMetrics":
        state = GaussianState(modes=2, cov=symmetrize(cov))
        return cls(
            engine=engine,
            mean_tanh=mean_tanh,
            mean_cos=mean_cos,
            cov=state.cov,
            purity=purity(state),
            squeezing_db=squeezing_db(quadrature_variance(state, QuadratureForm.epr())),
            eof_bits=_eof_or_none(state),
            log_negativity=log_negativity(state),
            probability=probability,
            **extra,
        )


def _angle_multiple(convention: Convention) -> int:
    return 2 if convention is Convention.DOUBLED else 1


def mean_tanh_rprime(r: float, v: float, n: float) -> float:
    """<tanh r'> ~ (1 - v/2 - v/2n) tanh r, clamped at 0"""
    if v < 0 or n < 1:
        raise ValueError(f"Need v >= 0 and n >= 1, got v={v}, n={n}")
    if v > SMALL_NOISE_LIMIT:
        logging.warning(f"Phase variance v={v} is outside the small-noise regime (v <= {SMALL_NOISE_LIMIT})")
    return max(0.0, (1 - v / 2 - v / (2 * n)) * math.tanh(r))


def mean_cos_2phibeta(v: float, n: float) -> float:
    """<cos 2 phi_beta> ~ cos(2 sqrt(v/n))"""
    return mean_cos_correlation(v, n, Convention.DOUBLED, CosModel.APPROX)


def mean_cos_correlation(v: float, n: float, convention: Convention = Convention.DOUBLED,
                         cos_model: CosModel = CosModel.APPROX) -> float:
    if v < 0 or n < 1:
        raise ValueError(f"Need v >= 0 and n >= 1, got v={v}, n={n}")
    k = _angle_multiple(convention)
    if cos_model is CosModel.EXACT:
        return math.exp(-k ** 2 * v / (2 * n))
    return math.cos(k * math.sqrt(v / n))


def covariance_from_moments(mean_tanh: float, mean_cos: float) -> np.ndarray:
    """A = B = a I, C = diag(c, -c) with a = (1+t^2)/(1-t^2), c = 2t/(1-t^2) <cos>"""
    t = mean_tanh
    a = (1 + t ** 2) / (1 - t ** 2)
    c = 2 * t / (1 - t ** 2) * mean_cos
    return np.array([
        [a, 0.0, c, 0.0],
        [0.0, a, 0.0, -c],
        [c, 0.0, a, 0.0],
        [0.0, -c, 0.0, a],
    ])


def ensemble_covariance(r: float, v: float, n: float, convention: Convention = Convention.DOUBLED,
                        cos_model: CosModel = CosModel.APPROX) -> np.ndarray:
    return covariance_from_moments(
        mean_tanh_rprime(r, v, n),
        mean_cos_correlation(v, n, convention, cos_model),
    )


def ensemble_metrics(r: float, v: float, n: float, convention: Convention = Convention.DOUBLED,
                     cos_model: CosModel = CosModel.APPROX, engine: str = "analytic") -> EnsembleMetrics:
    """
    Metrics of the factorized ensemble covariance.

    The success probability is evaluated at r_bar' = atanh(<tanh r'>).

    Args:
        r: Input squeezing parameter
        v: Phase variance in rad^2
        n: Redundancy; math.inf gives the asymptotic limit
        convention: Correlation-angle convention
        cos_model: Cosine average, first-order or exact Gaussian
        engine: Engine label stored on the result

    Returns:
        EnsembleMetrics without standard errors
    """
    t = mean_tanh_rprime(r, v, n)
    m = mean_cos_correlation(v, n, convention, cos_model)
    return EnsembleMetrics.from_covariance(
        covariance_from_moments(t, m),
        probability=success_probability(r, math.atanh(t)),
        mean_tanh=t,
        mean_cos=m,
        engine=engine,
        small_noise_valid=v <= SMALL_NOISE_LIMIT,
    )


def asymptotic_metrics(r: float, v: float, convention: Convention = Convention.DOUBLED) -> EnsembleMetrics:
    """n -> infinity: <tanh r'> = (1 - v/2) tanh r and <cos> = 1"""
    return ensemble_metrics(r, v, math.inf, convention, engine="asymptotic")


def fit_phase_variance(targets_db: Mapping[float, float], n: int,
                       convention: Convention = Convention.DOUBLED,
                       bounds: tuple = (1e-5, 0.1)) -> float:
    """
    Least-squares fit of v so that the analytic output squeezing matches
    `targets_db` at redundancy n.

    Args:
        targets_db: Output squeezing in dB keyed by input squeezing parameter
        n: Redundancy the targets were taken at
        convention: Correlation-angle convention of the model
        bounds: Search interval for v

    Returns:
        The fitted phase variance in rad^2
    """
    if not targets_db:
        raise ValueError("Nothing to fit: no target values")

    def residual(v: float) -> float:
        return sum(
            (ensemble_metrics(r, v, n, convention).squeezing_db - target) ** 2
            for r, target in targets_db.items()
        )

    result = minimize_scalar(residual, bounds=bounds, method='bounded', options={'xatol': 1e-7})
    logging.info(f"Fitted phase variance v={result.x:.6f} (n={n}, residual {result.fun:.4f} dB^2)")
    return float(result.x)
