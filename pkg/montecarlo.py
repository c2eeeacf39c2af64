"""
Shot-ensemble engine: sample phase noise, collect per-shot covariances and
heralding probabilities, average them and attach standard errors.
"""
import logging
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from analytic_approx import EnsembleMetrics
from constants import CONVERGENCE_LADDER, PHYSICALITY_SLACK, ZERO_STDERR
from ensemble_processes import ShardManager
from errors import UnphysicalStateError
from gaussian_state import symmetrize, symplectic_eigenvalues, uncertainty_margin
from ua_channel import ChannelParams


class Weighting(Enum):
    UNWEIGHTED = "unweighted"
    HERALDED = "heralded"  # weights each shot by its heralding probability


class EnsembleStats(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ChannelParams
    shots: int = Field(..., ge=1)
    seed: int = Field(..., ge=0, lt=2 ** 64)
    shards: int = Field(default=1, ge=1)
    weighting: Weighting = Weighting.UNWEIGHTED
    mean_cov_unweighted: np.ndarray
    mean_cov_weighted: np.ndarray
    mean_probability: float = Field(..., gt=0.0, le=1.0 + 1e-12)
    stderr_cov: np.ndarray = Field(..., description="Elementwise standard errors of the unweighted mean")
    stderr_cov_weighted: np.ndarray
    stderr_probability: float = Field(..., ge=0.0)
    mean_tanh: float
    mean_cos: float

    def mean_cov(self, weighting: Optional[Weighting] = None) -> np.ndarray:
        weighting = weighting or self.weighting
        return self.mean_cov_weighted if weighting is Weighting.HERALDED else self.mean_cov_unweighted

    def stderr(self, weighting: Optional[Weighting] = None) -> np.ndarray:
        weighting = weighting or self.weighting
        return self.stderr_cov_weighted if weighting is Weighting.HERALDED else self.stderr_cov


def run_ensemble(params: ChannelParams, shots: int, seed: int, shards: int = 1,
                 weighting: Weighting = Weighting.UNWEIGHTED, progress: bool = False) -> EnsembleStats:
    """
    Average `shots` independent noise realizations. The result depends on
    (params, shots, seed) only; `shards` changes the schedule, not the numbers.

    Args:
        params: Channel parameters; lossy channels go through the Gaussian path
        shots: Number of noise realizations
        seed: Root seed of the counter-based block streams
        shards: Number of simpy worker processes
        weighting: Default weighting of the returned statistics
        progress: Show a progress bar

    Returns:
        EnsembleStats with both weighted and unweighted means
    """
    manager = ShardManager(params, shots, seed, shards)
    logging.info(f"Running {shots} shots (n={params.n}, r={params.r}, v={params.v}, "
                 f"loss={params.loss}) on {manager.shards} shard(s), seed {seed}")

    with tqdm(total=shots, desc="shots", unit="shot", disable=None if progress else True, leave=False) as bar:
        moments = manager.run(on_block=bar.update)

    weighted = moments.mean_weighted_cov / moments.mean_probability
    return EnsembleStats(
        params=params,
        shots=moments.count,
        seed=seed,
        shards=manager.shards,
        weighting=weighting,
        mean_cov_unweighted=symmetrize(moments.mean_cov),
        mean_cov_weighted=symmetrize(weighted),
        mean_probability=min(moments.mean_probability, 1.0),
        stderr_cov=moments.stderr_cov(),
        stderr_cov_weighted=moments.stderr_weighted_cov(),
        stderr_probability=moments.stderr_probability(),
        mean_tanh=moments.mean_tanh,
        mean_cos=moments.mean_cos,
    )


def clip_to_physical(cov: np.ndarray) -> tuple:
    """
    Rescale cov so its smallest symplectic eigenvalue is 1.

    Returns (cov, clipped). Scaling preserves the block structure and the
    degenerate spectrum of the symmetric states produced here.
    """
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise UnphysicalStateError("Averaged covariance is not positive definite")
    if uncertainty_margin(cov) >= -PHYSICALITY_SLACK:
        return cov, False
    return cov / float(symplectic_eigenvalues(cov)[0]), True


def _bracket_offset(cov: np.ndarray, stderr: np.ndarray) -> np.ndarray:
    """
    +stderr on the local diagonals (shared by both modes) and -stderr * sign
    on the correlation entries that are resolved from zero.
    """
    diagonal = np.diag(stderr)
    local = np.maximum(diagonal[0:2], diagonal[2:4])
    offset = np.diag(np.tile(local, 2))
    corr = cov[0:2, 2:4]
    corr_stderr = stderr[0:2, 2:4]
    shift = np.where(np.abs(corr) > corr_stderr, -np.sign(corr) * corr_stderr, 0.0)
    offset[0:2, 2:4] = shift
    offset[2:4, 0:2] = shift.T
    return offset


def _metrics_at(cov: np.ndarray, stats: EnsembleStats, engine: str) -> EnsembleMetrics:
    cov, clipped = clip_to_physical(symmetrize(cov))
    return EnsembleMetrics.from_covariance(
        cov,
        probability=stats.mean_probability,
        mean_tanh=stats.mean_tanh,
        mean_cos=stats.mean_cos,
        engine=engine,
        clipped=clipped,
    )


def metrics_from_ensemble(stats: EnsembleStats, weighting: Optional[Weighting] = None) -> EnsembleMetrics:
    """
    Metrics of the averaged covariance, with standard errors taken as the
    half-spread of each metric between mean - D and mean + D, where D is the
    elementwise stderr oriented to move the state toward more squeezing.

    Args:
        stats: Ensemble statistics from run_ensemble
        weighting: Overrides the weighting stored on `stats`

    Returns:
        EnsembleMetrics with engine "montecarlo" and per-metric standard errors
    """
    weighting = weighting or stats.weighting
    mean = stats.mean_cov(weighting)
    central = _metrics_at(mean, stats, "montecarlo")
    if central.clipped:
        logging.warning("Averaged covariance was unphysical within sampling noise; rescaled to the physical set")

    offset = _bracket_offset(mean, stats.stderr(weighting))
    stderr = {'probability': stats.stderr_probability}
    if np.abs(offset).max() >= ZERO_STDERR:
        upper = _metrics_at(mean + offset, stats, "montecarlo")
        lower = _metrics_at(mean - offset, stats, "montecarlo")
        for name in ('squeezing_db', 'purity', 'eof_bits', 'log_negativity'):
            high, low = getattr(upper, name), getattr(lower, name)
            if high is not None and low is not None:
                stderr[name] = abs(high - low) / 2
    else:
        stderr.update({name: 0.0 for name in ('squeezing_db', 'purity', 'eof_bits', 'log_negativity')})

    return central.model_copy(update={'stderr': stderr})


def convergence_report(params: ChannelParams, ladder: Sequence[int] = CONVERGENCE_LADDER,
                       seed: int = 0, shards: int = 1,
                       weighting: Weighting = Weighting.UNWEIGHTED) -> pd.DataFrame:
    """
    One row per shot count with the squeezing estimate, its stderr and the
    largest elementwise covariance stderr. `stderr_ratio` compares each row
    with the first; ideal scaling is sqrt(shots / first shots).
    """
    rows = []
    for shots in ladder:
        stats = run_ensemble(params, shots, seed, shards, weighting)
        metrics = metrics_from_ensemble(stats)
        rows.append({
            'shots': shots,
            'squeezing_db': metrics.squeezing_db,
            'squeezing_db_stderr': metrics.stderr['squeezing_db'],
            'max_cov_stderr': float(stats.stderr().max()),
        })
    report = pd.DataFrame(rows)

    first = report['max_cov_stderr'].iloc[0]
    report['stderr_ratio'] = first / report['max_cov_stderr'] if first >= ZERO_STDERR else np.nan
    report['ideal_ratio'] = np.sqrt(report['shots'] / report['shots'].iloc[0])
    ratio = report['stderr_ratio'] / report['ideal_ratio']
    report['scaling_ok'] = ratio.between(1 / 1.5, 1.5) | (report['max_cov_stderr'] < ZERO_STDERR)

    if not report['scaling_ok'].all():
        logging.warning(f"Standard errors do not scale as 1/sqrt(shots):\n{report}")
    return report
