import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config_model import build_config
from errors import UASimError
from simulation_controller import SimulationController


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ua-sim",
        description="Unitary-averaging channel simulator for two-mode squeezed light under phase noise",
    )
    parser.add_argument('--command', choices=['table1', 'sweep', 'shot', 'oracle-check', 'asymptotic', 'convergence'])
    parser.add_argument('--config', type=Path, help="Flat key=value file; flags override it")
    parser.add_argument('--n', type=int, help="Redundancy")
    squeezing = parser.add_mutually_exclusive_group()
    squeezing.add_argument('--r', type=float, help="Input squeezing parameter")
    squeezing.add_argument('--input-db', type=float, help="Input squeezing in dB")
    parser.add_argument('--variance', type=float, help="Phase variance v in rad^2")
    parser.add_argument('--shots', type=int, help="Monte Carlo shots (oracle-check: phase draws)")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--convention', choices=['paper', 'doubled', 'derived'])
    parser.add_argument('--weighting', choices=['unweighted', 'heralded'])
    parser.add_argument('--cos-model', choices=['approx', 'exact'])
    parser.add_argument('--cutoff', type=int, help="Photon cutoff of the two-mode Fock path")
    parser.add_argument('--evolution-cutoff', type=int, help="Photon cutoff of multimode Fock evolution")
    parser.add_argument('--loss', type=float, help="Uniform loss probability")
    parser.add_argument('--shards', type=int, help="Ensemble workers")
    parser.add_argument('--n-grid', help="Comma-separated redundancies for sweep")
    parser.add_argument('--v-grid', help="Comma-separated variances for sweep and asymptotic")
    parser.add_argument('--engines', help="Comma-separated engines: analytic, montecarlo, asymptotic")
    parser.add_argument('--phases', help="Comma-separated phases for shot")
    parser.add_argument('--format', choices=['csv', 'json'])
    parser.add_argument('--out', type=Path, help="Output file; stdout when omitted")
    parser.add_argument('--log-dir', type=Path)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Exit codes: 0 success, 1 usage error, 2 oracle-check failure, 3 physicality violation"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1

    flags = vars(args)
    config_path = flags.pop('config')
    try:
        config = build_config(flags, config_path)
    except ValidationError as e:
        logging.error(f"Invalid configuration:\n{e}")
        return 1
    except UASimError as e:
        logging.error(str(e))
        return e.exit_code

    try:
        controller = SimulationController(config)
        results = controller.run()
        logging.info(f"Export files: {results['export_results']}")
    except UASimError as e:
        return e.exit_code
    except (ValueError, ValidationError):
        return 1
    except Exception as e:
        logging.error(f"Simulation failed: {str(e)}")
        logging.error(f"Traceback:\n{traceback.format_exc()}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
