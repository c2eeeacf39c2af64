import math
from typing import Any, Dict, List, Optional

import pandas as pd

from analytic_approx import EnsembleMetrics
from constants import PHYSICALITY_SLACK

METRIC_COLUMNS = ['squeezing_db', 'purity', 'eof_bits', 'log_negativity', 'probability']

RECORD_COLUMNS = (
    ['n', 'v', 'r', 'engine'] + METRIC_COLUMNS
    + [f"{name}_stderr" for name in METRIC_COLUMNS]
    + ['shots', 'seed', 'convention', 'cos_model', 'weighting', 'loss', 'tolerance', 'clipped']
)


class ResultCollector:
    """
    Collects result records for one command. Metric records use the fixed
    RECORD_COLUMNS order; free-form tables keep the order of their first row.
    """
    def __init__(self, weighting: str, loss: float = 0.0, tolerance: float = PHYSICALITY_SLACK):
        self.weighting = weighting
        self.loss = loss
        self.tolerance = tolerance
        self.records: List[Dict[str, Any]] = []
        self.free_columns: Optional[List[str]] = None

    def collect_metrics(self, metrics: EnsembleMetrics, n: Optional[float], v: float, r: float,
                        convention: str, cos_model: Optional[str] = None,
                        shots: Optional[int] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        """
        Add one metric record; an infinite n is stored as missing.

        Args:
            metrics: Metrics of one ensemble point
            n: Redundancy, None or math.inf for the limit
            v: Phase variance in rad^2
            r: Input squeezing parameter
            convention: Convention the engine actually used for the correlation angle
            cos_model: Cosine model of the analytic engine, None for the others
            shots: Monte Carlo run size, None for closed-form engines
            seed: Monte Carlo seed, None for closed-form engines

        Returns:
            The stored record
        """
        record = {
            'n': None if n is None or math.isinf(n) else int(n),
            'v': v,
            'r': r,
            'engine': metrics.engine,
            'squeezing_db': metrics.squeezing_db,
            'purity': metrics.purity,
            'eof_bits': metrics.eof_bits,
            'log_negativity': metrics.log_negativity,
            'probability': metrics.probability,
        }
        for name in METRIC_COLUMNS:
            record[f"{name}_stderr"] = metrics.stderr.get(name)
        record.update({
            'shots': shots,
            'seed': seed,
            'convention': convention,
            'cos_model': cos_model,
            'weighting': self.weighting,
            'loss': self.loss,
            'tolerance': self.tolerance,
            'clipped': metrics.clipped,
        })
        self.records.append(record)
        return record

    def collect_row(self, row: Dict[str, Any]) -> None:
        if self.free_columns is None:
            self.free_columns = list(row)
        self.records.append(dict(row))

    def get_results_df(self) -> pd.DataFrame:
        columns = self.free_columns if self.free_columns is not None else RECORD_COLUMNS
        return pd.DataFrame(self.records, columns=columns)
