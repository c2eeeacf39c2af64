import logging
import math
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from tqdm import tqdm

from analytic_approx import asymptotic_metrics, ensemble_metrics, fit_phase_variance
from config_model import Command, Engine, RunConfig
from constants import (
    DEFAULT_SHOTS, MAX_INTERFEROMETER_MODES, ORACLE_AMPLITUDE_ATOL, ORACLE_MOMENT_ATOL,
    PATH_COVARIANCE_ATOL, PATH_PROBABILITY_ATOL, TABLE1_FIT_MAX_SQUEEZING, TABLE1_INPUT_DB,
    TABLE1_N1_DB, TABLE1_N5_DB, TABLE1_SQUEEZING,
)
from data_collection.result_collector import ResultCollector
from data_collection.result_exporter import ResultExporter
from ensemble_processes import block_stream
from errors import FockSizeLimitError, OracleCheckError, UsageError
from fock_oracle import (
    heralded_amplitudes_closed_form, heralded_amplitudes_interferometer, measured_correlation_angle,
    moments_to_covariance,
)
from gaussian_state import input_squeezing_db
from montecarlo import convergence_report, metrics_from_ensemble, run_ensemble
from ua_channel import Convention, shot_closed_form, shot_gaussian_path, shot_report

ORACLE_DEFAULT_DRAWS = 50
ANGLE_SWEEP_POINTS = 9


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


class SimulationController:
    """
    Runs one CLI command: sets up logging, dispatches to the engines, collects
    records and exports them.
    """
    def __init__(self, config: RunConfig):
        self.config = config
        self.start_time = datetime.now()
        self.end_time = None

        timestamp = self.start_time.strftime('%Y%m%d_%H%M%S')
        self.log_dir = Path(config.log_dir) / timestamp
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._setup_logging()

        self.collector = ResultCollector(
            weighting=config.weighting.value,
            loss=config.loss,
        )
        self.exporter = ResultExporter(config.out, config.format.value)
        self.commands = {
            Command.TABLE1: self.cmd_table1,
            Command.SWEEP: self.cmd_sweep,
            Command.SHOT: self.cmd_shot,
            Command.ORACLE_CHECK: self.cmd_oracle_check,
            Command.ASYMPTOTIC: self.cmd_asymptotic,
            Command.CONVERGENCE: self.cmd_convergence,
        }

    def _setup_logging(self) -> None:
        """Configure logging for the run"""
        logging.basicConfig(
            level=logging.INFO,
            format='%(asctime)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(os.path.join(self.log_dir, 'simulation.log')),
                logging.StreamHandler(),
            ],
            force=True,
        )

    def run(self) -> Dict[str, Any]:
        """
        Run the configured command and export its records.

        Returns:
            Dictionary with timing information and export paths

        Raises:
            OracleCheckError: A cross-formalism check failed; the report is exported first
        """
        logging.info(f"Starting command {self.config.command.value}")
        try:
            failure = None
            try:
                self.commands[self.config.command]()
            except OracleCheckError as e:
                failure = e
            exported = self.exporter.export_all(self.collector.get_results_df(), self.config.export_dict())
            if failure is not None:
                raise failure
        except Exception as e:
            logging.error(f"Command {self.config.command.value} failed: {str(e)}")
            raise
        finally:
            self.end_time = datetime.now()

        duration = (self.end_time - self.start_time).total_seconds()
        logging.info(f"Command {self.config.command.value} completed in {duration:.2f} seconds")
        return {
            'start_time': self.start_time,
            'end_time': self.end_time,
            'duration_seconds': duration,
            'export_results': exported,
            'records': len(self.collector.records),
        }

    def _shots(self) -> int:
        return self.config.shots or DEFAULT_SHOTS

    def _require_lossless(self, engine: str) -> None:
        if self.config.loss > 0:
            raise UsageError(f"The {engine} engine covers the lossless channel only; use --engines montecarlo")

    def cmd_table1(self) -> None:
        """Input vs output squeezing for the reference rows, with deltas to the printed values"""
        config = self.config
        self._require_lossless("analytic")
        targets = {r: TABLE1_N1_DB[r] for r in TABLE1_SQUEEZING if r <= TABLE1_FIT_MAX_SQUEEZING}
        fitted_v = fit_phase_variance(targets, n=1, convention=config.convention)

        for r in tqdm(TABLE1_SQUEEZING, desc="table1", disable=None, leave=False):
            row = {
                'r': r,
                'v': config.variance,
                'fitted_v': fitted_v,
                'input_db': input_squeezing_db(r),
                'input_db_delta': input_squeezing_db(r) - TABLE1_INPUT_DB[r],
            }
            for n, printed in ((1, TABLE1_N1_DB), (5, TABLE1_N5_DB)):
                metrics = ensemble_metrics(r, config.variance, n, config.convention, config.cos_model)
                row[f"n{n}_db"] = metrics.squeezing_db
                row[f"n{n}_db_delta"] = metrics.squeezing_db - printed[r]
                if config.shots:
                    stats = run_ensemble(config.channel_params(n=n).model_copy(update={'r': r}),
                                         config.shots, config.seed, config.shards, config.weighting)
                    mc = metrics_from_ensemble(stats)
                    row[f"n{n}_mc_db"] = mc.squeezing_db
                    row[f"n{n}_mc_db_stderr"] = mc.stderr['squeezing_db']
            row['engine'] = 'analytic+montecarlo' if config.shots else 'analytic'
            row['convention'] = config.convention.value
            row['seed'] = config.seed if config.shots else None
            self.collector.collect_row(row)
        logging.info(f"Table rows written; phase variance fitted to the n=1 row: {fitted_v:.5f}")

    def cmd_sweep(self) -> None:
        config = self.config
        if not config.n_grid or not config.v_grid or not config.engines:
            raise UsageError("Sweep grid is empty")
        if Engine.ANALYTIC in config.engines:
            self._require_lossless("analytic")

        points = [(engine, n, v) for engine in config.engines for v in config.v_grid
                  for n in (config.n_grid if engine is not Engine.ASYMPTOTIC else [math.inf])]
        for engine, n, v in tqdm(points, desc="sweep", disable=None, leave=False):
            self._collect_engine_point(engine, n, v)

    def _collect_engine_point(self, engine: Engine, n: float, v: float) -> None:
        config = self.config
        r = config.squeezing
        if engine is Engine.ANALYTIC:
            metrics = ensemble_metrics(r, v, n, config.convention, config.cos_model)
            self.collector.collect_metrics(metrics, n, v, r, config.convention.value, config.cos_model.value)
        elif engine is Engine.ASYMPTOTIC:
            self._require_lossless("asymptotic")
            self.collector.collect_metrics(asymptotic_metrics(r, v, config.convention), None, v, r,
                                           config.convention.value)
        else:
            shots = self._shots()
            params = config.channel_params(n=int(n), v=v)
            stats = run_ensemble(params, shots, config.seed, config.shards, config.weighting, progress=True)
            self.collector.collect_metrics(metrics_from_ensemble(stats), n, v, r, params.shot_convention.value,
                                           shots=shots, seed=config.seed)

    def cmd_asymptotic(self) -> None:
        """n -> infinity records, one per variance of the grid"""
        if not self.config.v_grid:
            raise UsageError("Variance grid is empty")
        for v in self.config.v_grid:
            self._collect_engine_point(Engine.ASYMPTOTIC, math.inf, v)

    def cmd_shot(self) -> None:
        config = self.config
        phases = config.phases if config.phases is not None else [0.0] * config.n
        if len(phases) != config.n:
            raise UsageError(f"Got {len(phases)} phases for n={config.n}")
        params = config.channel_params()
        for outcome in shot_report(params, phases):
            row = {
                'engine': outcome.engine,
                'n': params.n,
                'r': params.r,
                'phases': " ".join(f"{p:.12g}" for p in outcome.phases),
                'alpha': outcome.alpha,
                'phi_beta': outcome.phi_beta,
                'r_prime': outcome.r_prime,
                'probability': outcome.probability,
                'convention': params.convention.value if outcome.engine == 'closed-form' else Convention.DERIVED.value,
                'loss': params.loss,
            }
            row.update({f"cov_{i}{j}": outcome.cov[i, j] for i in range(4) for j in range(i, 4)})
            self.collector.collect_row(row)

    def cmd_oracle_check(self) -> None:
        """
        Cross-formalism checks on random phase draws: Gaussian path against
        the closed form, multimode Fock evolution against the heralded
        amplitude formula, and Fock moments against the Gaussian path. Ends
        with a correlation-angle sweep at n=1.
        """
        config = self.config
        n = config.n
        if n > MAX_INTERFEROMETER_MODES:
            raise FockSizeLimitError(f"Oracle check needs n <= {MAX_INTERFEROMETER_MODES}, got n={n}")
        self._require_lossless("Fock")

        params = config.channel_params()
        derived = params.model_copy(update={'convention': Convention.DERIVED})
        draws = config.shots or ORACLE_DEFAULT_DRAWS
        rng = block_stream(config.seed, 0)

        deviations = {name: 0.0 for name in (
            'gaussian_vs_closed_cov', 'gaussian_vs_closed_probability',
            'fock_vs_heralded_amplitudes', 'fock_vs_gaussian_cov', 'fock_vs_gaussian_probability',
        )}
        for _ in tqdm(range(draws), desc="oracle", disable=None, leave=False):
            phases = rng.uniform(-np.pi, np.pi, size=n)
            gaussian = shot_gaussian_path(params, phases)
            closed = shot_closed_form(derived, phases)
            deviations['gaussian_vs_closed_cov'] = max(
                deviations['gaussian_vs_closed_cov'], float(np.abs(gaussian.cov - closed.cov).max()))
            deviations['gaussian_vs_closed_probability'] = max(
                deviations['gaussian_vs_closed_probability'], abs(gaussian.probability - closed.probability))

            evolved = heralded_amplitudes_interferometer(params.r, phases, config.evolution_cutoff)
            formula = heralded_amplitudes_closed_form(params.r, phases, config.evolution_cutoff)
            deviations['fock_vs_heralded_amplitudes'] = max(
                deviations['fock_vs_heralded_amplitudes'], float(np.abs(evolved.amps - formula.amps).max()))

            converged = heralded_amplitudes_closed_form(params.r, phases, config.cutoff)
            if converged.norm_squared > 1e-6:
                deviations['fock_vs_gaussian_cov'] = max(
                    deviations['fock_vs_gaussian_cov'],
                    float(np.abs(moments_to_covariance(converged) - gaussian.cov).max()))
            deviations['fock_vs_gaussian_probability'] = max(
                deviations['fock_vs_gaussian_probability'], abs(converged.norm_squared - gaussian.probability))

        tolerances = {
            'gaussian_vs_closed_cov': PATH_COVARIANCE_ATOL,
            'gaussian_vs_closed_probability': PATH_PROBABILITY_ATOL,
            'fock_vs_heralded_amplitudes': ORACLE_AMPLITUDE_ATOL,
            'fock_vs_gaussian_cov': ORACLE_MOMENT_ATOL,
            'fock_vs_gaussian_probability': ORACLE_MOMENT_ATOL,
        }
        failed = {}
        for name, deviation in deviations.items():
            passed = deviation <= tolerances[name]
            self.collector.collect_row({'check': name, 'n': n, 'draws': draws, 'max_deviation': deviation,
                                        'tolerance': tolerances[name], 'passed': passed})
            logging.info(f"{name}: max deviation {deviation:.3e} (tolerance {tolerances[name]:.0e})")
            if not passed:
                failed[name] = deviation

        for row in angle_sweep(params.r, config.cutoff):
            self.collector.collect_row({
                'check': f"angle theta={row['theta']:+.4f}", 'n': 1, 'draws': 1,
                'max_deviation': row['derived_deviation'], 'tolerance': ORACLE_MOMENT_ATOL,
                'passed': row['derived_deviation'] <= ORACLE_MOMENT_ATOL,
            })
            logging.info(f"theta={row['theta']:+.4f}: measured angle {row['measured']:+.6f}, "
                         f"phi_beta rule {row['theta']:+.6f}, 2 phi_beta rule {_wrap(2 * row['theta']):+.6f}")
            if row['derived_deviation'] > ORACLE_MOMENT_ATOL:
                failed[f"angle theta={row['theta']:+.4f}"] = row['derived_deviation']

        if failed:
            raise OracleCheckError(f"{len(failed)} oracle check(s) out of tolerance: {sorted(failed)}", failed)

    def cmd_convergence(self) -> None:
        config = self.config
        report = convergence_report(config.channel_params(), seed=config.seed,
                                    shards=config.shards, weighting=config.weighting)
        for row in report.to_dict(orient='records'):
            self.collector.collect_row(row)


def angle_sweep(r: float, cutoff: int, points: int = ANGLE_SWEEP_POINTS) -> List[Dict[str, float]]:
    """
    Correlation angle read from the Fock moments of the n=1 output versus the
    two candidate rules Theta = phi_beta and Theta = 2 phi_beta.

    Args:
        r: Input squeezing parameter
        cutoff: Fock cutoff of the heralded amplitudes
        points: Number of angles in [-pi/2, pi/2]

    Returns:
        One row per angle with the measured angle and its deviation from each rule
    """
    rows = []
    for theta in np.linspace(-np.pi / 2, np.pi / 2, points):
        cov = moments_to_covariance(heralded_amplitudes_closed_form(r, [theta], cutoff))
        measured = measured_correlation_angle(cov)
        rows.append({
            'theta': float(theta),
            'measured': measured,
            'derived_deviation': float(abs(_wrap(measured - theta))),
            'doubled_deviation': float(abs(_wrap(measured - 2 * theta))),
        })
    return rows
