import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from remotestrat.exceptions import EstimationError
from remotestrat.polychoric import (
    RHO_BOUND,
    contingency_table,
    estimate_rho,
    estimate_thresholds,
    log_likelihood,
    polychoric_matrix,
    psd_repair,
    read_correlation_csv,
    thresholds_from_counts,
    write_correlation_csv,
    write_thresholds_csv,
)
from remotestrat.schema import Role, Schema, VariableSpec
from remotestrat.synth import CopulaSpec, corr_from_upper, equiprobable_thresholds, sample_ordinal

from conftest import make_dataset

TERCILES = equiprobable_thresholds(3)


# --- thresholds -------------------------------------------------------------


def test_thresholds_quartile_split():
    t = thresholds_from_counts([25, 50, 25])
    np.testing.assert_allclose(t.alphas, [norm.ppf(0.25), norm.ppf(0.75)], atol=1e-12)
    np.testing.assert_allclose(t.alphas, [-0.6745, 0.6745], atol=1e-4)


def test_thresholds_median_split():
    assert thresholds_from_counts([5, 5]).alphas.tolist() == [0.0]


def test_empty_category_collapses_into_lower_neighbour():
    t = thresholds_from_counts([20, 0, 80])
    assert t.collapse_map == (1, 1, 2)
    assert t.collapsed
    np.testing.assert_allclose(t.alphas, [norm.ppf(0.2)], atol=1e-12)
    assert t.alphas[0] == pytest.approx(-0.8416, abs=1e-4)


def test_leading_empty_category_folds_upward():
    t = thresholds_from_counts([0, 3, 7])
    assert t.collapse_map == (1, 1, 2)
    np.testing.assert_allclose(t.alphas, [norm.ppf(0.3)])


def test_single_category_mass_is_an_error():
    with pytest.raises(EstimationError, match="one category"):
        thresholds_from_counts([0, 10, 0], "x")


def test_estimate_thresholds_from_dataset(small_schema):
    ds = make_dataset(small_schema, [[1, 1], [2, 2], [2, 1], [3, 2]])
    t = estimate_thresholds(ds, 0)
    np.testing.assert_allclose(t.alphas, norm.ppf([0.25, 0.75]))
    assert t.name == "a"


# --- rho --------------------------------------------------------------------


def test_tetrachoric_identity():
    # median splits, p11 = 1/3  ->  rho = sin(2 pi (1/3 - 1/4)) = 0.5
    p11 = 1 / 3
    table = np.array([[p11, 0.5 - p11], [0.5 - p11, p11]]) * 3000
    rho = estimate_rho(table, [0.0], [0.0])
    assert rho == pytest.approx(math.sin(2 * math.pi * (p11 - 0.25)), abs=1e-5)


@pytest.mark.parametrize("p11", [0.05, 0.15, 0.3, 0.45])
def test_tetrachoric_identity_other_proportions(p11):
    table = np.array([[p11, 0.5 - p11], [0.5 - p11, p11]]) * 1000
    assert estimate_rho(table, [0.0], [0.0]) == pytest.approx(math.sin(2 * math.pi * (p11 - 0.25)), abs=1e-5)


def test_perfect_concordance_hits_upper_bound():
    assert estimate_rho([[40, 0], [0, 60]], [norm.ppf(0.4)], [norm.ppf(0.4)]) == RHO_BOUND
    assert estimate_rho([[0, 40], [60, 0]], [norm.ppf(0.4)], [norm.ppf(0.6)]) == -RHO_BOUND


def test_independent_margins_give_zero():
    ds = sample_ordinal(CopulaSpec(np.eye(2), (TERCILES, TERCILES), n=50_000, seed=11))
    pm, _ = polychoric_matrix(ds)
    assert abs(pm.matrix[0, 1]) <= 0.02


def test_table_shape_mismatch():
    with pytest.raises(EstimationError, match="shape"):
        estimate_rho(np.ones((3, 2)), [0.0], [0.0])


def test_degenerate_table():
    with pytest.raises(EstimationError, match="degenerate"):
        estimate_rho(np.ones((1, 2)), [], [0.0])


def brute_force_rho(table, ta, tb, step=1e-3):
    ea = np.concatenate(([-np.inf], ta, [np.inf]))
    eb = np.concatenate(([-np.inf], tb, [np.inf]))
    grid = np.arange(-RHO_BOUND, RHO_BOUND + step / 2, step)
    ll = [log_likelihood(np.asarray(table, float), ea, eb, r) for r in grid]
    return grid[int(np.argmax(ll))]


@pytest.mark.parametrize(
    "table, ta, tb",
    [
        ([[30, 10, 5], [12, 25, 14], [3, 11, 40]], [-0.4, 0.5], [-0.6, 0.3]),
        ([[5, 20], [25, 3], [10, 1]], [-0.2, 0.9], [0.1]),
        ([[1, 0, 7], [0, 9, 0], [6, 0, 2]], [-0.5, 0.5], [-0.5, 0.5]),
    ],
)
def test_matches_grid_search(table, ta, tb):
    assert estimate_rho(table, ta, tb) == pytest.approx(brute_force_rho(table, ta, tb), abs=2e-3)


def test_cell_probabilities_against_quadrature():
    """Likelihood cell masses checked against one-dimensional numerical integration."""
    from remotestrat.polychoric import cell_probabilities
    from test_bvn import quad_oracle

    ta, tb, r = [-0.5, 0.7], [0.2], 0.45
    ea = np.array([-9.0, *ta, 9.0])
    eb = np.array([-9.0, *tb, 9.0])
    F = np.array([[quad_oracle(a, b, r) for b in eb] for a in ea])
    expected = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    got = cell_probabilities(np.array([-np.inf, *ta, np.inf]), np.array([-np.inf, *tb, np.inf]), r)
    np.testing.assert_allclose(got, expected, atol=1e-9)
    assert got.sum() == pytest.approx(1.0, abs=1e-14)


tables = st.integers(2, 4).flatmap(
    lambda Ba: st.integers(2, 4).flatmap(
        lambda Bb: st.lists(st.lists(st.integers(0, 30), min_size=Bb, max_size=Bb), min_size=Ba, max_size=Ba)
    )
)


def _margins(table):
    t = np.asarray(table, float)
    return (thresholds_from_counts(t.sum(axis=1)).alphas, thresholds_from_counts(t.sum(axis=0)).alphas)


def _full_margins(table):
    t = np.asarray(table, float)
    return (t.sum(axis=1) > 0).all() and (t.sum(axis=0) > 0).all()


@settings(max_examples=40, deadline=None)
@given(tables)
def test_transpose_symmetry(table):
    if not _full_margins(table):
        return
    ta, tb = _margins(table)
    t = np.asarray(table, float)
    assert estimate_rho(t, ta, tb) == pytest.approx(estimate_rho(t.T, tb, ta), abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(tables)
def test_likelihood_at_estimate_beats_zero(table):
    if not _full_margins(table):
        return
    ta, tb = _margins(table)
    t = np.asarray(table, float)
    r = estimate_rho(t, ta, tb)
    ea = np.concatenate(([-np.inf], ta, [np.inf]))
    eb = np.concatenate(([-np.inf], tb, [np.inf]))
    if r != 0:
        assert log_likelihood(t, ea, eb, r) >= log_likelihood(t, ea, eb, 0.0) - 1e-9


# --- recovery and matrix ----------------------------------------------------


@pytest.mark.parametrize("rho", [-0.8, 0.0, 0.5, 0.8])
def test_recovery_tercile_thresholds(rho):
    spec = CopulaSpec(corr_from_upper(2, [rho]), (TERCILES, TERCILES), n=50_000, seed=7)
    pm, _ = polychoric_matrix(sample_ordinal(spec))
    assert abs(pm.matrix[0, 1] - rho) <= 0.02


def test_three_variable_recovery_mixed_thresholds():
    R = corr_from_upper(3, [0.4, -0.3, 0.55])
    spec = CopulaSpec(R, (np.array([-0.5, 0.8]), np.array([0.0]), np.array([-1.0, -0.2, 0.6])), n=50_000, seed=3)
    pm, ts = polychoric_matrix(sample_ordinal(spec))
    assert np.abs(pm.matrix - R).max() <= 0.03
    np.testing.assert_allclose(ts[2].alphas, [-1.0, -0.2, 0.6], atol=0.03)


def test_duplicated_variable_hits_boundary():
    schema = Schema((VariableSpec("x", ("a", "b", "c")), VariableSpec("y", ("a", "b", "c"))), Role.WEALTH)
    col = np.array([1, 2, 3, 1, 2, 2, 3, 3, 1, 2])
    ds = make_dataset(schema, np.column_stack([col, col]))
    pm, _ = polychoric_matrix(ds)
    assert pm.matrix[0, 1] == RHO_BOUND
    assert not pm.psd_repaired


def test_matrix_invariants_on_small_sample():
    spec = CopulaSpec(corr_from_upper(4, [0.5, 0.2, -0.4, 0.6, 0.1, 0.3]),
                      tuple([TERCILES] * 4), n=300, seed=5)
    pm, _ = polychoric_matrix(sample_ordinal(spec))
    M = pm.matrix
    np.testing.assert_array_equal(M, M.T)
    np.testing.assert_array_equal(np.diag(M), 1.0)
    assert np.abs(M).max() <= 1.0
    assert np.linalg.eigvalsh(M).min() >= -1e-10


def test_pair_errors_name_the_pair(small_schema):
    ds = make_dataset(small_schema, [[1, 1], [1, 2], [1, 1]])
    with pytest.raises(EstimationError, match="'a'"):
        polychoric_matrix(ds)


# --- psd repair -------------------------------------------------------------


def test_identity_untouched():
    pm = psd_repair(np.eye(3))
    assert not pm.psd_repaired
    np.testing.assert_array_equal(pm.matrix, np.eye(3))


def test_psd_input_returned_bit_identical():
    M = corr_from_upper(3, [0.3, 0.2, 0.1])
    pm = psd_repair(M)
    assert not pm.psd_repaired
    assert pm.matrix.tobytes() == M.tobytes()


def test_indefinite_matrix_repaired():
    M = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]])
    assert np.linalg.eigvalsh(M).min() < 0
    pm = psd_repair(M)
    assert pm.psd_repaired
    np.testing.assert_allclose(np.diag(pm.matrix), 1.0)
    np.testing.assert_array_equal(pm.matrix, pm.matrix.T)
    assert np.linalg.eigvalsh(pm.matrix).min() >= -1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_repair_postcondition(off):
    pm = psd_repair(corr_from_upper(4, off))
    assert np.linalg.eigvalsh(pm.matrix).min() >= -1e-10
    np.testing.assert_allclose(np.diag(pm.matrix), 1.0)


# --- exports ----------------------------------------------------------------


def test_correlation_csv_round_trip(tmp_path):
    pm = psd_repair(corr_from_upper(3, [0.5137, 0.3233, 0.2307]), names=["var1", "var2", "var3"])
    p = tmp_path / "corr.csv"
    write_correlation_csv(pm, p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",var1,var2,var3"
    assert lines[2] == "var2,0.513700,1.000000,"
    back = read_correlation_csv(p)
    np.testing.assert_allclose(back.matrix, pm.matrix, atol=1e-6)
    assert back.names == pm.names


def test_threshold_csv(tmp_path):
    ds = sample_ordinal(CopulaSpec(np.eye(2), (TERCILES, np.array([0.0])), n=100, seed=1))
    _, ts = polychoric_matrix(ds)
    p = tmp_path / "t.csv"
    write_thresholds_csv(ts, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "variable,k,alpha_k"
    assert len(rows) == 1 + 2 + 1
