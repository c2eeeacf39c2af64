"""
Truncated Fock-space oracle, independent of the covariance formalism.

Amplitude tensors have one axis per mode with `cutoff + 1` levels. Passive
multimode optics is applied sector by sector: the unitary is reduced to
two-mode Givens rotations plus phases, and each rotation acts exactly on
every fixed-photon-number sector of its mode pair.
"""
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import comb

from constants import CONDITIONING_FLOOR, MAX_EVOLUTION_CUTOFF, MAX_INTERFEROMETER_MODES
from errors import FockSizeLimitError, NumericalConditioningError
from gaussian_state import symmetrize
from ua_channel import interferometer_unitary


class FockAmplitudes(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cutoff: int = Field(..., ge=0, description="Maximum photon number N_max per mode")
    amps: np.ndarray = Field(..., description="Complex amplitude tensor, one axis of size cutoff+1 per mode")
    tail_bound: float = Field(default=0.0, ge=0.0, description="Analytic bound on the truncated probability mass")

    @field_validator('amps', mode='before')
    @classmethod
    def to_complex_array(cls, v):
        array = np.array(v, dtype=complex)
        array.setflags(write=False)
        return array

    @model_validator(mode='after')
    def check_shape(self):
        if self.amps.ndim == 0 or any(d != self.cutoff + 1 for d in self.amps.shape):
            raise ValueError(f"Amplitude tensor shape {self.amps.shape} does not match cutoff {self.cutoff}")
        if self.norm_squared > 1 + 1e-9:
            raise ValueError(f"Amplitudes are over-normalized (norm^2 = {self.norm_squared:.12f})")
        return self

    @property
    def modes(self) -> int:
        return self.amps.ndim

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def sector_norms(self) -> np.ndarray:
        """Squared norm of each total-photon-number sector"""
        totals = np.sum(np.indices(self.amps.shape), axis=0)
        weights = np.abs(self.amps) ** 2
        return np.bincount(totals.ravel(), weights=weights.ravel(), minlength=self.modes * self.cutoff + 1)


def tmsv_tail_bound(r: float, cutoff: int) -> float:
    """tanh^{2(N_max+1)}(r) / (1 - tanh^2 r)"""
    t = math.tanh(r)
    return t ** (2 * (cutoff + 1)) / (1 - t ** 2)


def _diagonal_pair(coefficient: complex, r: float, cutoff: int) -> np.ndarray:
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    levels = np.arange(cutoff + 1)
    amps[levels, levels] = coefficient ** levels / math.cosh(r)
    return amps


def tmsv_amplitudes(r: float, cutoff: int) -> FockAmplitudes:
    """sech r sum_N tanh^N r |N, N>, truncated at N = cutoff"""
    if cutoff < 1:
        raise ValueError(f"Cutoff must be at least 1, got {cutoff}")
    return FockAmplitudes(
        cutoff=cutoff,
        amps=_diagonal_pair(complex(math.tanh(r)), r, cutoff),
        tail_bound=tmsv_tail_bound(r, cutoff),
    )


def heralded_amplitudes_closed_form(r: float, phases: Sequence[float], cutoff: int) -> FockAmplitudes:
    """Sub-normalized heralded output sech r sum_N (mean phasor * tanh r)^N |N, N>"""
    if cutoff < 1:
        raise ValueError(f"Cutoff must be at least 1, got {cutoff}")
    phasor = np.mean(np.exp(1j * np.asarray(phases, dtype=float)))
    return FockAmplitudes(
        cutoff=cutoff,
        amps=_diagonal_pair(phasor * math.tanh(r), r, cutoff),
        tail_bound=tmsv_tail_bound(r, cutoff),
    )


def add_vacuum_modes(state: FockAmplitudes, count: int) -> FockAmplitudes:
    """Tensor the state with `count` vacuum modes appended at the end"""
    amps = np.zeros(state.amps.shape + (state.cutoff + 1,) * count, dtype=complex)
    amps[(Ellipsis,) + (0,) * count] = state.amps
    return FockAmplitudes(cutoff=state.cutoff, amps=amps, tail_bound=state.tail_bound)


def project_vacuum(state: FockAmplitudes, measured: Sequence[int]) -> FockAmplitudes:
    """Contract the measured modes with <0|; the result is sub-normalized"""
    index = tuple(0 if axis in set(measured) else slice(None) for axis in range(state.modes))
    return FockAmplitudes(cutoff=state.cutoff, amps=state.amps[index], tail_bound=state.tail_bound)


@lru_cache(maxsize=None)
def _factorial_sqrt(n: int) -> float:
    return math.sqrt(math.factorial(n))


def beamsplitter_sector(u: np.ndarray, total: int) -> np.ndarray:
    """
    Exact action of a 2x2 unitary on the `total`-photon sector of a mode pair.

    Column p is the input |p, total - p>, row p' the output |p', total - p'>,
    from a^dag -> u00 a^dag + u10 b^dag and b^dag -> u01 a^dag + u11 b^dag.
    """
    sector = np.zeros((total + 1, total + 1), dtype=complex)
    for p in range(total + 1):
        q = total - p
        norm = _factorial_sqrt(p) * _factorial_sqrt(q)
        for k in range(p + 1):
            first = comb(p, k, exact=True) * u[0, 0] ** k * u[1, 0] ** (p - k)
            for l in range(q + 1):
                second = comb(q, l, exact=True) * u[0, 1] ** l * u[1, 1] ** (q - l)
                out = k + l
                sector[out, p] += first * second * _factorial_sqrt(out) * _factorial_sqrt(total - out) / norm
    return sector


def givens_decomposition(U: np.ndarray) -> Tuple[List[Tuple[int, int, np.ndarray]], np.ndarray]:
    """
    Reduce U to a diagonal by 2x2 rotations on neighbouring rows.

    Returns (rotations, phases) with G_K ... G_1 U = diag(phases), so that
    U = G_1^dag ... G_K^dag diag(phases).
    """
    M = np.array(U, dtype=complex)
    size = M.shape[0]
    rotations = []
    for col in range(size - 1):
        for row in range(size - 1, col, -1):
            a, b = M[row - 1, col], M[row, col]
            if abs(b) < 1e-15:
                continue
            norm = math.hypot(abs(a), abs(b))
            g = np.array([[np.conj(a), np.conj(b)], [-b, a]]) / norm
            M[[row - 1, row], :] = g @ M[[row - 1, row], :]
            rotations.append((row - 1, row, g))
    return rotations, np.diag(M).copy()


def _apply_pair(amps: np.ndarray, u: np.ndarray, i: int, j: int, cutoff: int) -> np.ndarray:
    moved = np.moveaxis(amps, (i, j), (0, 1))
    flat = moved.reshape(cutoff + 1, cutoff + 1, -1)
    result = np.zeros_like(flat)
    for total in range(cutoff + 1):
        p = np.arange(total + 1)
        q = total - p
        result[p, q, :] = beamsplitter_sector(u, total) @ flat[p, q, :]
    return np.moveaxis(result.reshape(moved.shape), (0, 1), (i, j))


def _apply_phase(amps: np.ndarray, phase: complex, axis: int, cutoff: int) -> np.ndarray:
    shape = [1] * amps.ndim
    shape[axis] = cutoff + 1
    return amps * (phase ** np.arange(cutoff + 1)).reshape(shape)


def fock_linear_optics(state: FockAmplitudes, U: np.ndarray,
                       modes: Optional[Sequence[int]] = None) -> FockAmplitudes:
    """
    Evolve `state` through the passive unitary U acting on `modes`
    (all modes by default), with the rule a_j^dag -> sum_k U_kj a_k^dag.

    Args:
        state: Joint amplitudes; the evolved modes may hold at most `cutoff` photons together
        U: Unitary of size len(modes)
        modes: Axes of the amplitude array the unitary acts on

    Returns:
        The evolved amplitudes, with the input tail bound carried over
    """
    modes = list(range(state.modes)) if modes is None else list(modes)
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    if U.shape != (len(modes), len(modes)):
        raise ValueError(f"Unitary of shape {U.shape} does not match {len(modes)} modes")
    if len(modes) > MAX_INTERFEROMETER_MODES:
        raise FockSizeLimitError(f"Fock evolution limited to {MAX_INTERFEROMETER_MODES} modes, got {len(modes)}")
    if state.cutoff > MAX_EVOLUTION_CUTOFF:
        raise FockSizeLimitError(f"Fock evolution limited to cutoff {MAX_EVOLUTION_CUTOFF}, got {state.cutoff}")

    grids = np.indices(state.amps.shape)
    photons_in_modes = sum(grids[m] for m in modes)
    if np.any(np.abs(state.amps[photons_in_modes > state.cutoff]) > 0):
        raise ValueError("State has more than `cutoff` photons inside the evolved modes")

    rotations, phases = givens_decomposition(U)
    amps = np.array(state.amps)
    for local, phase in enumerate(phases):
        amps = _apply_phase(amps, phase, modes[local], state.cutoff)
    for i, j, g in reversed(rotations):
        amps = _apply_pair(amps, g.conj().T, modes[i], modes[j], state.cutoff)
    return FockAmplitudes(cutoff=state.cutoff, amps=amps, tail_bound=state.tail_bound)


def heralded_amplitudes_interferometer(r: float, phases: Sequence[float], cutoff: int) -> FockAmplitudes:
    """
    First-principles heralded output: truncated TMSV on modes (0, 1), vacuum
    ancillas, H^dag R(theta) H on modes 1..n, vacuum projection of modes 2..n.
    """
    phases = np.asarray(phases, dtype=float)
    n = phases.size
    state = add_vacuum_modes(tmsv_amplitudes(r, cutoff), n - 1)
    state = fock_linear_optics(state, interferometer_unitary(phases), modes=range(1, n + 1))
    if n == 1:
        return state
    return project_vacuum(state, range(2, n + 1))


def _expect(psi: np.ndarray, op_a: np.ndarray, op_b: np.ndarray) -> complex:
    """<psi| op_a (x) op_b |psi> for a two-mode amplitude matrix psi"""
    return complex(np.vdot(psi, op_a @ psi @ op_b.T))


def moments_to_covariance(state: FockAmplitudes) -> np.ndarray:
    """
    4x4 covariance of a zero-mean two-mode state from its ladder moments,
    with x = a + a^dag and p = -i(a - a^dag).
    """
    if state.modes != 2:
        raise ValueError(f"Covariance extraction needs a two-mode state, got {state.modes} modes")
    norm_sq = state.norm_squared
    if norm_sq < CONDITIONING_FLOOR:
        raise NumericalConditioningError(f"State norm^2 {norm_sq:.3e} too small to normalize")
    psi = state.amps / math.sqrt(norm_sq)

    size = state.cutoff + 1
    a = np.diag(np.sqrt(np.arange(1, size)), k=1).astype(complex)
    ad = a.conj().T
    eye = np.eye(size)

    number = ad @ a
    single = []
    for on_first in (True, False):
        if on_first:
            n_mean = _expect(psi, number, eye).real
            squared = _expect(psi, a @ a, eye)
        else:
            n_mean = _expect(psi, eye, number).real
            squared = _expect(psi, eye, a @ a)
        single.append(np.array([
            [1 + 2 * n_mean + 2 * squared.real, 2 * squared.imag],
            [2 * squared.imag, 1 + 2 * n_mean - 2 * squared.real],
        ]))

    ab = _expect(psi, a, a)
    ad_b = _expect(psi, ad, a)
    cross = np.array([
        [2 * ab.real + 2 * ad_b.real, 2 * ab.imag + 2 * ad_b.imag],
        [2 * ab.imag - 2 * ad_b.imag, -2 * ab.real + 2 * ad_b.real],
    ])
    cov = np.block([[single[0], cross], [cross.T, single[1]]])
    return symmetrize(cov)


def measured_correlation_angle(cov: np.ndarray) -> float:
    """Angle Theta of C = s [[cos, sin], [sin, -cos]] read from <x1 x2> and <x1 p2>"""
    return float(math.atan2(cov[0, 3], cov[0, 2]))


def reduced_entropy_bits(state: FockAmplitudes) -> float:
    """Von Neumann entropy of mode 0 of a pure two-mode state, via its Schmidt spectrum"""
    psi = state.amps / math.sqrt(state.norm_squared)
    weights = np.linalg.svd(psi, compute_uv=False) ** 2
    weights = weights[weights > 0]
    return float(-np.sum(weights * np.log2(weights)))
