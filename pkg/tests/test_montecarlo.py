import math

import numpy as np
import pandas as pd
import pytest

from analytic_approx import EnsembleMetrics, covariance_from_moments, ensemble_covariance, ensemble_metrics
from ensemble_processes import BlockMoments, ShardManager, block_count, block_stream, simulate_block
from errors import UnphysicalStateError
from gaussian_state import squeezing_db, symplectic_eigenvalues, tmsv_covariance
from montecarlo import (
    Weighting,
    clip_to_physical,
    convergence_report,
    metrics_from_ensemble,
    run_ensemble,
)
from tests.conftest import pure_tmsv_eof
from ua_channel import ChannelParams, closed_form_batch

SEED = 20240901


def test_noiseless_ensemble_is_exact():
    stats = run_ensemble(ChannelParams(n=5, r=1.2, v=0.0), 5000, SEED)
    np.testing.assert_allclose(stats.mean_cov_unweighted, tmsv_covariance(1.2).cov, atol=1e-12)
    assert np.all(stats.stderr_cov < 1e-12)
    metrics = metrics_from_ensemble(stats)
    assert metrics.purity == pytest.approx(1.0, abs=1e-9)
    assert metrics.eof_bits == pytest.approx(pure_tmsv_eof(1.2), abs=1e-9)
    assert metrics.probability == pytest.approx(1.0, abs=1e-12)


def test_single_mode_metrics_agree_with_the_exact_ensemble():
    # at n = 1 alpha is 1 and only <cos 2 theta> = exp(-2v) enters
    r, v = 1.2, 0.02
    metrics = metrics_from_ensemble(run_ensemble(ChannelParams(n=1, r=r, v=v), 100_000, SEED))
    exact = EnsembleMetrics.from_covariance(
        covariance_from_moments(math.tanh(r), math.exp(-2 * v)),
        probability=1.0, mean_tanh=math.tanh(r), mean_cos=math.exp(-2 * v), engine="exact",
    )
    for name in ('squeezing_db', 'purity', 'eof_bits', 'log_negativity'):
        assert getattr(metrics, name) == pytest.approx(getattr(exact, name), abs=3 * metrics.stderr[name] + 1e-9), name


def test_results_do_not_depend_on_shard_count():
    params = ChannelParams(n=3, r=1.2, v=0.02)
    single = run_ensemble(params, 40_000, SEED, shards=1)
    sharded = run_ensemble(params, 40_000, SEED, shards=8)
    assert sharded.shards == 8
    assert np.array_equal(single.mean_cov_unweighted, sharded.mean_cov_unweighted)
    assert np.array_equal(single.mean_cov_weighted, sharded.mean_cov_weighted)
    assert np.array_equal(single.stderr_cov, sharded.stderr_cov)
    assert single.mean_probability == sharded.mean_probability


def test_seed_changes_the_sample():
    params = ChannelParams(n=2, r=1.0, v=0.02)
    a = run_ensemble(params, 2000, 1)
    b = run_ensemble(params, 2000, 2)
    assert not np.array_equal(a.mean_cov_unweighted, b.mean_cov_unweighted)


def test_block_streams_are_keyed_by_index():
    first = block_stream(SEED, 0).normal(size=4)
    again = block_stream(SEED, 0).normal(size=4)
    other = block_stream(SEED, 1).normal(size=4)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_last_block_is_partial():
    params = ChannelParams(n=2, r=1.0, v=0.01)
    assert block_count(5000) == 2
    assert simulate_block(params, 5000, SEED, 1).count == 5000 - 4096
    with pytest.raises(ValueError):
        simulate_block(params, 5000, SEED, 2)


def test_merged_moments_equal_pooled_moments():
    params = ChannelParams(n=3, r=1.2, v=0.05)
    rng = np.random.default_rng(0)
    phases = rng.normal(0.0, math.sqrt(params.v), size=(300, 3))
    pooled = BlockMoments.from_batch(closed_form_batch(params, phases))
    left = BlockMoments.from_batch(closed_form_batch(params, phases[:120]))
    right = BlockMoments.from_batch(closed_form_batch(params, phases[120:]))
    merged = BlockMoments.empty().merge(left).merge(right)
    assert merged.count == 300
    np.testing.assert_allclose(merged.mean_cov, pooled.mean_cov, rtol=1e-12)
    np.testing.assert_allclose(merged.m2_cov, pooled.m2_cov, rtol=1e-9, atol=1e-12)
    assert merged.m2_probability == pytest.approx(pooled.m2_probability, rel=1e-9)


def test_shard_manager_rejects_empty_runs():
    with pytest.raises(ValueError):
        ShardManager(ChannelParams(n=2, r=1.0, v=0.01), 0, SEED)
    with pytest.raises(ValueError):
        ShardManager(ChannelParams(n=2, r=1.0, v=0.01), 10, SEED, shards=0)


def test_redundancy_five_agrees_with_analytic_squeezing():
    stats = run_ensemble(ChannelParams(n=5, r=1.2, v=0.01), 100_000, SEED)
    metrics = metrics_from_ensemble(stats)
    assert metrics.squeezing_db == pytest.approx(ensemble_metrics(1.2, 0.01, 5).squeezing_db, abs=0.1)
    assert metrics.squeezing_db == pytest.approx(9.40, abs=0.1)
    np.testing.assert_allclose(stats.mean_cov_unweighted, ensemble_covariance(1.2, 0.01, 5), rtol=0.02, atol=0.02)


def test_single_mode_matches_exact_expectation():
    r, v = 1.2, 0.01
    stats = run_ensemble(ChannelParams(n=1, r=r, v=v), 100_000, SEED)
    metrics = metrics_from_ensemble(stats)
    exact = squeezing_db(math.cosh(2 * r) - math.sinh(2 * r) * math.exp(-2 * v))
    assert metrics.squeezing_db == pytest.approx(exact, abs=3 * metrics.stderr['squeezing_db'] + 1e-9)
    assert metrics.squeezing_db == pytest.approx(7.0, abs=0.15)
    assert metrics.probability == pytest.approx(1.0, abs=1e-12)


def test_weighted_and_unweighted_means_are_close_at_small_noise():
    stats = run_ensemble(ChannelParams(n=5, r=1.2, v=0.01), 20_000, SEED, weighting=Weighting.HERALDED)
    unweighted, weighted = stats.mean_cov(Weighting.UNWEIGHTED), stats.mean_cov()
    scale = np.abs(unweighted).max()
    assert np.all(np.abs(weighted - unweighted) <= 5e-3 * scale)
    assert metrics_from_ensemble(stats).squeezing_db != metrics_from_ensemble(stats, Weighting.UNWEIGHTED).squeezing_db


def test_averaged_states_are_physical():
    for n, v in ((1, 0.05), (2, 0.01), (5, 0.02)):
        stats = run_ensemble(ChannelParams(n=n, r=1.2, v=v), 5000, SEED)
        for weighting in Weighting:
            assert symplectic_eigenvalues(stats.mean_cov(weighting))[0] >= 1 - 1e-9


def test_metric_standard_errors_are_reported():
    stats = run_ensemble(ChannelParams(n=2, r=1.2, v=0.02), 5000, SEED)
    stderr = metrics_from_ensemble(stats).stderr
    assert set(stderr) == {'squeezing_db', 'purity', 'eof_bits', 'log_negativity', 'probability'}
    assert all(value > 0 for value in stderr.values())


def test_lossy_ensemble_uses_the_gaussian_path():
    stats = run_ensemble(ChannelParams(n=2, r=1.0, v=0.01, loss=0.1), 300, SEED)
    metrics = metrics_from_ensemble(stats)
    assert metrics.purity < 0.99
    assert stats.mean_probability < 1.0


def test_clipping_rescales_onto_the_physical_set():
    cov, clipped = clip_to_physical(0.9 * np.eye(4))
    assert clipped
    np.testing.assert_allclose(cov, np.eye(4), atol=1e-12)
    cov, clipped = clip_to_physical(np.eye(4))
    assert not clipped


def test_clipping_rejects_indefinite_matrices():
    with pytest.raises(UnphysicalStateError):
        clip_to_physical(np.diag([1.0, -1.0, 1.0, 1.0]))


def test_convergence_scaling():
    report = convergence_report(ChannelParams(n=5, r=1.2, v=0.01), seed=SEED)
    assert list(report['shots']) == [1_000, 10_000, 100_000]
    assert 6.7 <= report['stderr_ratio'].iloc[-1] <= 15
    assert report['scaling_ok'].all()


def test_convergence_without_noise_has_no_spread():
    report = convergence_report(ChannelParams(n=5, r=1.2, v=0.0), seed=SEED)
    assert (report['max_cov_stderr'] < 1e-12).all()
    assert (report['squeezing_db_stderr'] < 1e-9).all()


def test_convergence_report_is_reproducible():
    params = ChannelParams(n=3, r=1.0, v=0.02)
    first = convergence_report(params, ladder=(500, 2000), seed=7)
    second = convergence_report(params, ladder=(500, 2000), seed=7)
    pd.testing.assert_frame_equal(first, second)
