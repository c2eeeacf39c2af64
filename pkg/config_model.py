import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from analytic_approx import CosModel
from constants import (
    DEFAULT_DIAGONAL_CUTOFF, DEFAULT_EVOLUTION_CUTOFF, DEFAULT_REDUNDANCY, DEFAULT_SEED,
    DEFAULT_SQUEEZING, DEFAULT_VARIANCE, MAX_SQUEEZING,
)
from errors import UsageError
from gaussian_state import squeezing_from_db
from montecarlo import Weighting
from ua_channel import ChannelParams, Convention


class Command(Enum):
    TABLE1 = "table1"
    SWEEP = "sweep"
    SHOT = "shot"
    ORACLE_CHECK = "oracle-check"
    ASYMPTOTIC = "asymptotic"
    CONVERGENCE = "convergence"


class Engine(Enum):
    ANALYTIC = "analytic"
    MONTECARLO = "montecarlo"
    ASYMPTOTIC = "asymptotic"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    command: Command = Field(default=Command.TABLE1, description="Which report to produce")
    n: int = Field(default=DEFAULT_REDUNDANCY, ge=1, description="Redundancy (interferometer modes)")
    r: Optional[float] = Field(default=None, ge=0.0, allow_inf_nan=False, description="Input squeezing parameter")
    input_db: Optional[float] = Field(default=None, ge=0.0, allow_inf_nan=False,
                                      description="Input squeezing in dB, 10 log10 e^{2r}")
    variance: float = Field(default=DEFAULT_VARIANCE, ge=0.0, allow_inf_nan=False, description="Phase variance v")
    shots: Optional[int] = Field(default=None, ge=1, description="Monte Carlo shots; None means the command default")
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2 ** 64, description="Root seed of the shot streams")
    convention: Convention = Field(default=Convention.DOUBLED)
    weighting: Weighting = Field(default=Weighting.UNWEIGHTED)
    cos_model: CosModel = Field(default=CosModel.APPROX, description="Cosine-average model of the analytic engine")
    cutoff: int = Field(default=DEFAULT_DIAGONAL_CUTOFF, ge=1, description="Photon cutoff of the two-mode Fock path")
    evolution_cutoff: int = Field(default=DEFAULT_EVOLUTION_CUTOFF, ge=1,
                                  description="Photon cutoff of multimode Fock evolution")
    loss: float = Field(default=0.0, ge=0.0, le=1.0, description="Uniform loss probability")
    shards: int = Field(default=1, ge=1, description="Simulated ensemble workers")
    format: OutputFormat = Field(default=OutputFormat.CSV)
    out: Optional[Path] = Field(default=None, description="Artifact path; stdout when absent")
    log_dir: Path = Field(default=Path("logs"), description="Root of timestamped log directories")
    n_grid: List[int] = Field(default_factory=lambda: [1, 2, 3, 5, 10, 20, 50, 100],
                              description="Redundancies swept by sweep")
    v_grid: List[float] = Field(default_factory=lambda: [0.0, 0.005, 0.01, 0.02, 0.05],
                                description="Phase variances swept by sweep and asymptotic")
    engines: List[Engine] = Field(default_factory=lambda: [Engine.ANALYTIC], description="Engines run by sweep")
    phases: Optional[List[float]] = Field(default=None, description="Explicit phases for shot")

    @field_validator('n_grid', 'v_grid', 'engines', 'phases', mode='before')
    @classmethod
    def parse_lists(cls, v):
        return _split_list(v)

    @field_validator('n_grid')
    @classmethod
    def check_n_grid(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("Every redundancy in n_grid must be at least 1")
        return v

    @field_validator('v_grid')
    @classmethod
    def check_v_grid(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("Every variance in v_grid must be non-negative")
        return v

    @model_validator(mode='after')
    def check_squeezing_source(self):
        if self.r is not None and self.input_db is not None:
            raise ValueError("Give either r or input_db, not both")
        if self.squeezing > MAX_SQUEEZING:
            raise ValueError(f"Squeezing parameter {self.squeezing:g} exceeds the supported maximum {MAX_SQUEEZING:g}")
        return self

    @property
    def squeezing(self) -> float:
        if self.input_db is not None:
            return squeezing_from_db(self.input_db)
        return DEFAULT_SQUEEZING if self.r is None else self.r

    def channel_params(self, n: Optional[int] = None, v: Optional[float] = None) -> ChannelParams:
        return ChannelParams(
            n=self.n if n is None else n,
            r=self.squeezing,
            v=self.variance if v is None else v,
            convention=self.convention,
            loss=self.loss,
        )

    def export_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode='json')


def load_config_file(path: Path) -> Dict[str, str]:
    """
    Read flat `key=value` lines; blank lines and `#` comments are skipped and
    dashes in keys become underscores.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"Config file not found: {path}")

    known = set(RunConfig.model_fields)
    values: Dict[str, str] = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise UsageError(f"{path}:{number}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.replace('-', '_')
        if key not in known:
            raise UsageError(f"{path}:{number}: unknown key {key!r}")
        values[key] = value
    logging.debug(f"Loaded {len(values)} settings from {path}")
    return values


def build_config(flags: Dict[str, Any], config_path: Optional[Path] = None) -> RunConfig:
    """Flags override the config file, which overrides field defaults"""
    values: Dict[str, Any] = load_config_file(config_path) if config_path else {}
    if flags.get('r') is not None or flags.get('input_db') is not None:
        values.pop('r', None)
        values.pop('input_db', None)
    values.update({key: value for key, value in flags.items() if value is not None})
    return RunConfig(**values)
