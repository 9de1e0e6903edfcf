import numpy as np
import pytest

from ramimo.mimo import lmmse_sinrs
from ramimo.optimizer.surrogate import assemble_all, assemble_coeffs, linearize

SCENARIOS = [(m, l, k, seed) for seed, (m, l, k) in enumerate(
    [(4, 2, 2), (6, 3, 3), (8, 6, 3), (3, 1, 1), (5, 4, 2), (8, 5, 2), (4, 6, 3), (7, 2, 1), (6, 6, 2), (8, 3, 3)]
)]


def true_forms(realization, alpha) -> np.ndarray:
    return lmmse_sinrs(realization, alpha) / realization.uplink_power


@pytest.mark.parametrize("m, l, k, seed", SCENARIOS)
def test_bound_is_tight_at_expansion_point(make_realization, m, l, k, seed):
    real = make_realization(m, l, k, seed=seed)
    alpha0 = np.random.default_rng(seed).uniform(0.0, 1.0, l)

    lin = linearize(real, alpha0)
    forms = true_forms(real, alpha0)

    np.testing.assert_allclose(lin.forms, forms, rtol=1e-9)
    for i, coeffs in enumerate(assemble_all(real, lin)):
        assert coeffs.lhs(alpha0) == pytest.approx(forms[i], rel=1e-9)


@pytest.mark.parametrize("m, l, k, seed", SCENARIOS)
def test_bound_underestimates_everywhere(make_realization, m, l, k, seed):
    real = make_realization(m, l, k, seed=seed)
    rng = np.random.default_rng(100 + seed)
    coeffs = assemble_all(real, linearize(real, rng.uniform(0.0, 1.0, l)))

    for alpha in rng.uniform(0.0, 1.0, size=(100, l)):
        forms = true_forms(real, alpha)
        for i, c in enumerate(coeffs):
            assert c.lhs(alpha) <= forms[i] + 1e-9 * (1.0 + abs(forms[i]))


def test_batch_evaluation_matches_pointwise(make_realization):
    real = make_realization(5, 3, 2, seed=3)
    coeffs = assemble_coeffs(real, linearize(real, np.full(3, 0.5)), 0)
    batch = np.random.default_rng(0).uniform(0.0, 1.0, size=(7, 3))

    np.testing.assert_allclose(coeffs.lhs(batch), [coeffs.lhs(a) for a in batch])


def test_zero_expansion_point_ignores_repeater_channels(make_realization):
    real = make_realization(4, 3, 2, seed=5)
    other = make_realization(4, 3, 2, seed=6)
    other.h_bar = real.h_bar

    np.testing.assert_allclose(linearize(real, np.zeros(3)).b, linearize(other, np.zeros(3)).b)


def test_coefficient_signs(make_realization):
    real = make_realization(6, 4, 3, seed=7)
    lin = linearize(real, np.full(4, 0.8))

    for k, c in enumerate(assemble_all(real, lin)):
        assert np.all(c.g_tilde >= 0)
        assert c.d >= 0
        for q in c.q_matrices:
            np.testing.assert_allclose(q, q.T)
            assert np.linalg.eigvalsh(q).min() >= -1e-9 * np.linalg.norm(q)
        assert np.linalg.matrix_rank(lin.d_matrix(k)) == 1


def test_single_ue_has_no_interference_terms(make_realization):
    real = make_realization(4, 3, 1, seed=8)
    c = assemble_coeffs(real, linearize(real, np.full(3, 0.4)), 0)

    assert c.q_matrices.shape == (0, 4, 4)
    alpha = np.array([0.1, 0.6, 0.9])
    expected = c.r @ np.append(alpha, 1.0) - c.g_tilde @ alpha**2 - c.d
    assert c.lhs(alpha) == pytest.approx(expected)


def test_eliminated_form_matches_lhs(make_realization):
    real = make_realization(5, 4, 3, seed=9)
    c = assemble_coeffs(real, linearize(real, np.full(4, 0.3)), 1)
    elim = c.eliminated()

    for alpha in np.random.default_rng(1).uniform(0.0, 1.0, size=(20, 4)):
        value = elim.linear @ alpha + elim.constant - np.sum((elim.factor @ alpha + elim.offset) ** 2)
        assert value == pytest.approx(c.lhs(alpha), rel=1e-10, abs=1e-10)


def test_quadratic_blocks_match_lhs(make_realization):
    real = make_realization(5, 3, 3, seed=10)
    c = assemble_coeffs(real, linearize(real, np.full(3, 0.6)), 2)
    block, cross, scalar = c.quadratic_blocks()
    alpha = np.array([0.2, 0.7, 0.4])

    quadratic = alpha @ block @ alpha + 2.0 * cross @ alpha + scalar
    linear = c.r @ np.append(alpha, 1.0) - c.d

    assert linear - quadratic == pytest.approx(c.lhs(alpha), rel=1e-10)


def test_common_phase_leaves_coefficients_unchanged(make_realization):
    real = make_realization(5, 3, 2, seed=11)
    rotated = make_realization(5, 3, 2, seed=11)
    phase = np.exp(1j * 0.7)
    rotated.g = real.g * phase
    rotated.h_bar = real.h_bar * phase
    alpha0 = np.full(3, 0.5)

    for a, b in zip(assemble_all(real, linearize(real, alpha0)), assemble_all(rotated, linearize(rotated, alpha0))):
        np.testing.assert_allclose(a.r, b.r, atol=1e-10)
        np.testing.assert_allclose(a.q_matrices, b.q_matrices, atol=1e-10)
        np.testing.assert_allclose(a.g_tilde, b.g_tilde, atol=1e-10)
        assert a.d == pytest.approx(b.d)
