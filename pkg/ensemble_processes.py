import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
import simpy
from pydantic import BaseModel, ConfigDict, Field

from constants import SHOTS_PER_BLOCK
from ua_channel import ChannelParams, closed_form_batch, gaussian_path_batch


class BlockMoments(BaseModel):
    """
    Running moments over a set of shots.

    Covariance, probability-weighted covariance and probability carry
    (count, mean, M2) triples merged with the pairwise update, so the
    reduction does not depend on how shots were grouped.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    count: int = Field(..., ge=0)
    mean_cov: np.ndarray
    m2_cov: np.ndarray
    mean_weighted_cov: np.ndarray = Field(..., description="Mean of P * cov")
    m2_weighted_cov: np.ndarray
    mean_probability: float
    m2_probability: float
    mean_tanh: float
    mean_cos: float

    @classmethod
    def empty(cls) -> "BlockMoments":
        zeros = np.zeros((4, 4))
        return cls(count=0, mean_cov=zeros, m2_cov=zeros, mean_weighted_cov=zeros,
                   m2_weighted_cov=zeros, mean_probability=0.0, m2_probability=0.0,
                   mean_tanh=0.0, mean_cos=0.0)

    @classmethod
    def from_batch(cls, batch: dict) -> "BlockMoments":
        cov = batch['cov']
        probability = batch['probability']
        weighted = probability[:, None, None] * cov
        mean_cov = cov.mean(axis=0)
        mean_weighted = weighted.mean(axis=0)
        mean_p = float(probability.mean())
        return cls(
            count=cov.shape[0],
            mean_cov=mean_cov,
            m2_cov=((cov - mean_cov) ** 2).sum(axis=0),
            mean_weighted_cov=mean_weighted,
            m2_weighted_cov=((weighted - mean_weighted) ** 2).sum(axis=0),
            mean_probability=mean_p,
            m2_probability=float(((probability - mean_p) ** 2).sum()),
            mean_tanh=float(batch['tanh_r_prime'].mean()),
            mean_cos=float(batch['cos_theta'].mean()),
        )

    def merge(self, other: "BlockMoments") -> "BlockMoments":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        total = self.count + other.count
        share = other.count / total
        cross = self.count * other.count / total

        def mean(a, b):
            return a + (b - a) * share

        def m2(m2_a, m2_b, a, b):
            return m2_a + m2_b + (b - a) ** 2 * cross

        return BlockMoments(
            count=total,
            mean_cov=mean(self.mean_cov, other.mean_cov),
            m2_cov=m2(self.m2_cov, other.m2_cov, self.mean_cov, other.mean_cov),
            mean_weighted_cov=mean(self.mean_weighted_cov, other.mean_weighted_cov),
            m2_weighted_cov=m2(self.m2_weighted_cov, other.m2_weighted_cov,
                               self.mean_weighted_cov, other.mean_weighted_cov),
            mean_probability=mean(self.mean_probability, other.mean_probability),
            m2_probability=m2(self.m2_probability, other.m2_probability,
                              self.mean_probability, other.mean_probability),
            mean_tanh=mean(self.mean_tanh, other.mean_tanh),
            mean_cos=mean(self.mean_cos, other.mean_cos),
        )

    def sample_variance_cov(self) -> np.ndarray:
        return self.m2_cov / (self.count - 1) if self.count > 1 else np.zeros((4, 4))

    def stderr_cov(self) -> np.ndarray:
        return np.sqrt(self.sample_variance_cov() / max(self.count, 1))

    def stderr_weighted_cov(self) -> np.ndarray:
        """Standard error of the heralded mean, holding the normalization <P> fixed"""
        if self.count < 2 or self.mean_probability <= 0:
            return np.zeros((4, 4))
        variance = self.m2_weighted_cov / (self.count - 1)
        return np.sqrt(variance / self.count) / self.mean_probability

    def stderr_probability(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2_probability / (self.count - 1) / self.count)


def block_count(shots: int) -> int:
    return -(-shots // SHOTS_PER_BLOCK)


def block_stream(seed: int, block_index: int) -> np.random.Generator:
    """Counter-based stream for one block; independent of which shard draws it"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block_index,))))


def simulate_block(params: ChannelParams, shots: int, seed: int, block_index: int) -> BlockMoments:
    start = block_index * SHOTS_PER_BLOCK
    size = min(SHOTS_PER_BLOCK, shots - start)
    if size <= 0:
        raise ValueError(f"Block {block_index} is past the end of a {shots}-shot run")
    rng = block_stream(seed, block_index)
    phases = rng.normal(0.0, math.sqrt(params.v), size=(size, params.n))
    if params.loss > 0:
        batch = gaussian_path_batch(params, phases)
    else:
        batch = closed_form_batch(params, phases)
    return BlockMoments.from_batch(batch)


class ShardProcess:
    """
    One worker of the ensemble. Each shard draws every `shards`-th block,
    one block per scheduler tick, and files its results by block index.
    """
    def __init__(self, env: simpy.Environment, shard_index: int, shards: int,
                 params: ChannelParams, shots: int, seed: int, results: Dict[int, BlockMoments],
                 on_block: Optional[Callable[[int], None]] = None):
        """
        Args:
            env: SimPy environment shared by all shards
            shard_index: Position of this shard, also its first block
            shards: Total number of shards
            params: Channel parameters of the run
            shots: Total shots of the run, across shards
            seed: Root seed; block streams are derived from it
            results: Block moments keyed by block index, shared by all shards
            on_block: Called with the shot count of every finished block
        """
        self.env = env
        self.shard_index = shard_index
        self.shards = shards
        self.params = params
        self.shots = shots
        self.seed = seed
        self.results = results
        self.on_block = on_block
        self.process = None

    def blocks(self) -> List[int]:
        return list(range(self.shard_index, block_count(self.shots), self.shards))

    def run(self):
        try:
            for block_index in self.blocks():
                moments = simulate_block(self.params, self.shots, self.seed, block_index)
                self.results[block_index] = moments
                if self.on_block:
                    self.on_block(moments.count)
                yield self.env.timeout(1)
        except Exception as e:
            logging.error(f"Error in shard {self.shard_index}: {str(e)}")
            raise


class ShardManager:
    """Schedules shard processes on a simpy environment and reduces their blocks in order"""
    def __init__(self, params: ChannelParams, shots: int, seed: int, shards: int = 1):
        if shots < 1:
            raise ValueError(f"Need at least one shot, got {shots}")
        if shards < 1:
            raise ValueError(f"Need at least one shard, got {shards}")
        self.env = simpy.Environment()
        self.params = params
        self.shots = shots
        self.seed = seed
        self.shards = min(shards, block_count(shots))
        self.results: Dict[int, BlockMoments] = {}
        self.processes: List[ShardProcess] = []

    def run(self, on_block: Optional[Callable[[int], None]] = None) -> BlockMoments:
        for index in range(self.shards):
            shard = ShardProcess(self.env, index, self.shards, self.params, self.shots,
                                 self.seed, self.results, on_block)
            shard.process = self.env.process(shard.run())
            self.processes.append(shard)
        self.env.run()

        expected = block_count(self.shots)
        if len(self.results) != expected:
            raise RuntimeError(f"Shards returned {len(self.results)} of {expected} blocks")

        total = BlockMoments.empty()
        for block_index in range(expected):
            total = total.merge(self.results[block_index])
        logging.debug(f"Reduced {expected} blocks from {self.shards} shards ({total.count} shots)")
        return total
