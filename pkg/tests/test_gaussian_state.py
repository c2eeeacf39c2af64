import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from constants import PHYSICALITY_SLACK, TABLE1_INPUT_DB
from errors import NumericalConditioningError, UnphysicalStateError
from gaussian_state import (
    GaussianState,
    QuadratureForm,
    SymplecticMatrix,
    apply_symplectic,
    apply_uniform_loss,
    direct_sum,
    eof_symmetric,
    herald_vacuum,
    input_squeezing_db,
    log_negativity,
    ppt_min_symplectic_eigenvalue,
    purity,
    quadrature_variance,
    squeezing_db,
    squeezing_from_db,
    symplectic_eigenvalues,
    symplectic_form,
    symplectic_from_passive,
    tmsv_covariance,
    two_mode_symplectic_eigenvalues,
    uncertainty_margin,
    vacuum,
)
from tests.conftest import pure_tmsv_eof, random_physical_covariance, random_symplectic, random_unitary


def test_vacuum_is_pure_with_unit_spectrum():
    state = vacuum(3)
    np.testing.assert_allclose(symplectic_eigenvalues(state), np.ones(3), atol=1e-12)
    assert purity(state) == pytest.approx(1.0, abs=1e-12)


def test_tmsv_blocks():
    state = tmsv_covariance(1.2)
    cov = state.cov
    assert cov[0, 0] == pytest.approx(math.cosh(2.4))
    assert cov[0, 2] == pytest.approx(math.sinh(2.4))
    assert cov[1, 3] == pytest.approx(-math.sinh(2.4))
    assert purity(state) == pytest.approx(1.0, abs=1e-9)


def test_tmsv_angle_rotates_correlation_block():
    cov = tmsv_covariance(0.7, theta=0.4).cov
    assert math.atan2(cov[0, 3], cov[0, 2]) == pytest.approx(0.4)


def test_tmsv_entanglement_measures():
    state = tmsv_covariance(1.2)
    assert eof_symmetric(state) == pytest.approx(pure_tmsv_eof(1.2), abs=1e-9)
    assert eof_symmetric(state) == pytest.approx(2.909, abs=1e-3)
    assert ppt_min_symplectic_eigenvalue(state) == pytest.approx(math.exp(-2.4), rel=1e-9)
    assert log_negativity(state) == pytest.approx(2.4 / math.log(2), rel=1e-9)


def test_epr_squeezing_matches_input_squeezing():
    for r in (0.5, 1.0, 1.2, 2.0):
        variance = quadrature_variance(tmsv_covariance(r), QuadratureForm.epr())
        assert squeezing_db(variance) == pytest.approx(input_squeezing_db(r), rel=1e-9)


@pytest.mark.parametrize("r", [0.5, 1.0, 1.2, 2.0])
def test_input_squeezing_matches_printed_column(r):
    assert input_squeezing_db(r) == pytest.approx(TABLE1_INPUT_DB[r], abs=0.01)


def test_printed_input_value_at_r_1_5_is_one_db_low():
    # 10 log10(e^3) = 13.03; the printed 12.03 is off by exactly one unit
    assert input_squeezing_db(1.5) - TABLE1_INPUT_DB[1.5] == pytest.approx(1.0, abs=0.01)


def test_db_conversion_round_trip():
    assert squeezing_from_db(input_squeezing_db(1.2)) == pytest.approx(1.2)


def test_unphysical_covariance_is_rejected():
    with pytest.raises(UnphysicalStateError):
        GaussianState(modes=2, cov=0.5 * np.eye(4))


def test_asymmetric_covariance_is_rejected():
    cov = np.eye(4)
    cov[0, 1] = 0.3
    with pytest.raises(ValidationError):
        GaussianState(modes=2, cov=cov)


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        GaussianState(modes=3, cov=np.eye(4))


def test_covariance_is_read_only():
    state = vacuum(1)
    with pytest.raises(ValueError):
        state.cov[0, 0] = 2.0


def test_quadrature_form_must_be_normalized():
    with pytest.raises(ValidationError):
        QuadratureForm(coefficients=[1.0, 0.0, 1.0, 0.0])


def test_non_symplectic_matrix_is_rejected():
    with pytest.raises(ValidationError):
        SymplecticMatrix(matrix=2 * np.eye(2))


def test_non_unitary_matrix_is_rejected():
    with pytest.raises(ValueError):
        symplectic_from_passive(np.array([[1.0, 0.0], [0.0, 2.0]]))


@settings(max_examples=30, deadline=None)
@given(size=st.integers(min_value=1, max_value=5), seed=st.integers(min_value=0, max_value=10_000))
def test_passive_unitaries_are_symplectic_and_orthogonal(size, seed):
    S = symplectic_from_passive(random_unitary(size, seed)).matrix
    omega = symplectic_form(size)
    np.testing.assert_allclose(S @ omega @ S.T, omega, atol=1e-10)
    np.testing.assert_allclose(S @ S.T, np.eye(2 * size), atol=1e-10)


def test_composition_order_of_passive_maps():
    A, B = random_unitary(3, 1), random_unitary(3, 2)
    state = direct_sum(tmsv_covariance(0.8), vacuum(1))
    sequential = apply_symplectic(apply_symplectic(state, symplectic_from_passive(B)), symplectic_from_passive(A))
    combined = apply_symplectic(state, symplectic_from_passive(A @ B))
    np.testing.assert_allclose(sequential.cov, combined.cov, atol=1e-10)


def test_symplectic_on_subset_leaves_other_modes():
    state = direct_sum(tmsv_covariance(1.0), vacuum(1))
    S = symplectic_from_passive(random_unitary(2, 7))
    out = apply_symplectic(state, S, modes=[1, 2])
    assert purity(out) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(out.cov[:2, :2], state.cov[:2, :2], atol=1e-12)


def test_heralding_vacuum_modes_of_vacuum():
    conditional, probability = herald_vacuum(vacuum(3), [1, 2])
    assert probability == pytest.approx(1.0)
    np.testing.assert_allclose(conditional.cov, np.eye(2), atol=1e-12)


def test_heralding_one_arm_of_tmsv():
    r = 1.2
    conditional, probability = herald_vacuum(tmsv_covariance(r), [1])
    assert probability == pytest.approx(1 / math.cosh(r) ** 2, rel=1e-9)
    np.testing.assert_allclose(conditional.cov, np.eye(2), atol=1e-9)


def test_heralding_needs_a_measured_and_a_kept_mode():
    with pytest.raises(ValueError):
        herald_vacuum(vacuum(2), [])
    with pytest.raises(ValueError):
        herald_vacuum(vacuum(2), [0, 1])


def test_heralding_singular_block_raises():
    cov = np.eye(4)
    cov[2:, 2:] = -np.eye(2) + 1e-14 * np.eye(2)
    state = GaussianState.model_construct(modes=2, cov=cov)
    with pytest.raises(NumericalConditioningError):
        herald_vacuum(state, [1])


@pytest.mark.parametrize("gamma", [0.05, 0.2])
def test_uniform_loss_commutes_with_passive_optics(gamma):
    state = direct_sum(tmsv_covariance(1.2), vacuum(2))
    S = symplectic_from_passive(random_unitary(3, 11))
    loss_first = apply_symplectic(apply_uniform_loss(state, gamma), S, modes=[1, 2, 3])
    loss_last = apply_uniform_loss(apply_symplectic(state, S, modes=[1, 2, 3]), gamma)
    np.testing.assert_allclose(loss_first.cov, loss_last.cov, atol=1e-10)


def test_full_loss_gives_vacuum():
    np.testing.assert_allclose(apply_uniform_loss(tmsv_covariance(1.0), 1.0).cov, np.eye(4), atol=1e-12)


def test_eof_rejects_asymmetric_state():
    cov = np.diag([1.0, 1.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        eof_symmetric(cov)


def test_separable_state_has_no_entanglement():
    cov = np.diag([3.0, 3.0, 3.0, 3.0])
    assert eof_symmetric(cov) == 0.0
    assert log_negativity(cov) == 0.0


@settings(max_examples=100, deadline=None)
@given(r=st.floats(min_value=0.0, max_value=8.0))
def test_strongly_squeezed_tmsv_is_accepted(r):
    state = tmsv_covariance(r)
    assert state.cov[0, 0] == pytest.approx(math.cosh(2 * r))
    assert uncertainty_margin(state) >= -PHYSICALITY_SLACK


@pytest.mark.parametrize("r", [4.12, 5.0])
def test_symplectic_spectrum_of_strongly_squeezed_tmsv(r):
    np.testing.assert_allclose(symplectic_eigenvalues(tmsv_covariance(r)), [1.0, 1.0], atol=1e-5)


@pytest.mark.parametrize("r, rel", [(1.0, 1e-6), (3.0, 1e-6), (5.0, 1e-6), (7.0, 1e-3)])
def test_ppt_eigenvalue_keeps_its_precision_under_strong_squeezing(r, rel):
    state = tmsv_covariance(r)
    assert ppt_min_symplectic_eigenvalue(state) == pytest.approx(math.exp(-2 * r), rel=rel)
    assert log_negativity(state) == pytest.approx(2 * r / math.log(2), rel=rel)


def test_uncertainty_margin_flags_sub_vacuum_states():
    assert uncertainty_margin(np.eye(4)) == pytest.approx(0.0, abs=1e-12)
    assert uncertainty_margin(0.9 * np.eye(4)) < -PHYSICALITY_SLACK


def test_two_mode_spectrum_agrees_with_the_general_method():
    for seed in range(1000):
        cov = random_physical_covariance(seed)
        nu_minus, nu_plus = two_mode_symplectic_eigenvalues(cov)
        np.testing.assert_allclose([nu_minus, nu_plus], symplectic_eigenvalues(cov), rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31))
def test_purity_is_invariant_under_squeezing_symplectics(seed):
    state = GaussianState(modes=2, cov=random_physical_covariance(seed, squeeze=0.5))
    S = SymplecticMatrix(matrix=random_symplectic(seed + 7, squeeze=0.5))
    assert purity(apply_symplectic(state, S)) == pytest.approx(purity(state), abs=1e-10)


@pytest.mark.parametrize("gamma", [-0.1, 1.1])
def test_loss_probability_outside_the_unit_interval_is_rejected(gamma):
    with pytest.raises(ValueError):
        apply_uniform_loss(tmsv_covariance(1.2), gamma)


def test_lossy_tmsv_diagonal():
    cov = apply_uniform_loss(tmsv_covariance(1.2), 0.1).cov
    np.testing.assert_allclose(np.diag(cov), np.full(4, 0.9 * math.cosh(2.4) + 0.1))
    assert cov[0, 0] == pytest.approx(5.1012, abs=1e-4)


def test_separability_threshold_of_the_partial_transpose():
    cov = np.array([
        [2.0, 0.0, 1.0, 0.0],
        [0.0, 2.0, 0.0, -1.0],
        [1.0, 0.0, 2.0, 0.0],
        [0.0, -1.0, 0.0, 2.0],
    ])
    assert ppt_min_symplectic_eigenvalue(cov) == pytest.approx(1.0, abs=1e-12)
    assert log_negativity(cov) == pytest.approx(0.0, abs=1e-12)
