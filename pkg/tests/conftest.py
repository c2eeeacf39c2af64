import math

import numpy as np
import pytest
from hypothesis import strategies as st

import main
from gaussian_state import symmetrize, symplectic_from_passive


def random_unitary(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_symplectic(seed: int, squeeze: float = 1.0, modes: int = 2) -> np.ndarray:
    """Passive map, single-mode squeezers with |log gain| <= squeeze, passive map"""
    rng = np.random.default_rng([seed, 1])
    gains = np.exp(rng.uniform(-squeeze, squeeze, size=modes))
    squeezers = np.diag(np.column_stack([gains, 1 / gains]).ravel())
    first = symplectic_from_passive(random_unitary(modes, seed)).matrix
    second = symplectic_from_passive(random_unitary(modes, seed + 1)).matrix
    return first @ squeezers @ second


def random_physical_covariance(seed: int, squeeze: float = 1.0, modes: int = 2) -> np.ndarray:
    """S diag(nu) S^T with symplectic eigenvalues nu drawn from [1, 3]"""
    nu = np.random.default_rng([seed, 2]).uniform(1.0, 3.0, size=modes)
    S = random_symplectic(seed, squeeze, modes)
    return symmetrize(S @ np.diag(np.repeat(nu, 2)) @ S.T)


def pure_tmsv_eof(r: float) -> float:
    c, s = math.cosh(r) ** 2, math.sinh(r) ** 2
    return c * math.log2(c) - s * math.log2(s)


phase_vectors = st.integers(min_value=1, max_value=4).flatmap(
    lambda n: st.lists(st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False),
                       min_size=n, max_size=n)
)


@pytest.fixture
def run_cli(tmp_path):
    """Invoke the CLI with logs under tmp_path; returns (exit code, output path)"""
    def run(*args, out_name="out.csv"):
        out = tmp_path / out_name
        argv = list(args) + ['--out', str(out), '--log-dir', str(tmp_path / 'logs')]
        return main.main(argv), out
    return run
