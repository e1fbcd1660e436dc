"""Least-squares, NMSE, PRESS and forward-regression tests.

Oracles used here are independent of the implementation paths: normal
equations and the pseudoinverse for the solver, and brute-force
leave-one-out refits for PRESS.
"""

import numpy as np
import pytest

from canonsr.fit import (RegressionProblem, fit_weights, forward_regression_press,
                         nmse, press)

INF = float("inf")


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def normal_equations(Phi, y):
    return np.linalg.solve(Phi.T @ Phi, Phi.T @ y)


def pinv_solution(Phi, y):
    return np.linalg.pinv(Phi) @ y


def loo_press_bruteforce(Phi, y):
    """Refit N times with one row held out; sum the squared held-out errors."""
    N = Phi.shape[0]
    total = 0.0
    for t in range(N):
        keep = [i for i in range(N) if i != t]
        beta = np.linalg.lstsq(Phi[keep], y[keep], rcond=None)[0]
        err = y[t] - Phi[t] @ beta
        total += err * err
    return total


def _random_problem(rng, n, k):
    Phi = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    y = rng.standard_normal(n)
    return Phi, y


# ---------------------------------------------------------------------------
# fit_weights
# ---------------------------------------------------------------------------

def test_exact_linear_data_recovers_coefficients():
    b = np.array([0.0, 1.0, 2.0, 3.0])
    Phi = np.column_stack([np.ones(4), b])
    y = 3.0 + 2.0 * b
    coeffs = fit_weights(RegressionProblem(Phi, y))
    assert coeffs == pytest.approx([3.0, 2.0])
    assert np.max(np.abs(y - Phi @ coeffs)) < 1e-12


def test_full_rank_matches_normal_equations_oracle():
    rng = np.random.default_rng(10)
    Phi, y = _random_problem(rng, 20, 4)
    ours = fit_weights(RegressionProblem(Phi, y))
    oracle = normal_equations(Phi, y)
    assert np.max(np.abs(ours - oracle)) <= 1e-8 * max(1.0, np.max(np.abs(oracle)))


def test_duplicated_column_minimum_norm_matches_pinv_oracle():
    rng = np.random.default_rng(11)
    base = rng.standard_normal(15)
    Phi = np.column_stack([np.ones(15), base, base])     # rank deficient
    y = rng.standard_normal(15)
    ours = fit_weights(RegressionProblem(Phi, y))
    oracle = pinv_solution(Phi, y)
    assert np.all(np.isfinite(ours))
    assert np.max(np.abs(ours - oracle)) <= 1e-8
    assert np.max(np.abs(Phi @ ours - Phi @ oracle)) <= 1e-8


def test_residual_orthogonality_property():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(5, 40))
        k = int(rng.integers(1, min(n, 6)))
        Phi, y = _random_problem(rng, n, k)
        coeffs = fit_weights(RegressionProblem(Phi, y))
        residual = y - Phi @ coeffs
        assert np.max(np.abs(Phi.T @ residual)) <= 1e-8 * np.linalg.norm(y)


def test_problem_validation():
    with pytest.raises(ValueError, match="non-finite"):
        RegressionProblem(np.array([[1.0, np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError, match="row counts"):
        RegressionProblem(np.ones((3, 2)), np.ones(2))


# ---------------------------------------------------------------------------
# nmse
# ---------------------------------------------------------------------------

def test_nmse_perfect_fit_is_zero():
    y = np.array([1.0, 2.0, 3.0])
    assert nmse(y, y, reference=3.0) == 0.0


def test_nmse_hand_computed_value():
    # residual (0, 0, 1), reference 3: 100 * sqrt((1/3) * (1/9)) = 19.245...
    value = nmse(np.array([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 3.0]), 3.0)
    assert value == pytest.approx(19.245008972987527, rel=1e-12)


def test_nmse_nonfinite_prediction_is_infinite():
    pred = np.array([1.0, np.nan])
    assert nmse(pred, np.array([1.0, 2.0]), 2.0) == INF


def test_nmse_zero_reference_rejected():
    with pytest.raises(ValueError, match="reference"):
        nmse(np.zeros(3), np.zeros(3), 0.0)


def test_error_report_validation():
    from canonsr.fit import ErrorReport
    report = ErrorReport(train_error_pct=4.5, test_error_pct=3.7, reference=350.0)
    assert report.reference > 0
    with pytest.raises(ValueError, match="reference"):
        ErrorReport(train_error_pct=1.0, test_error_pct=None, reference=0.0)


def test_nmse_scale_invariance():
    rng = np.random.default_rng(13)
    y = rng.standard_normal(30)
    pred = y + rng.standard_normal(30) * 0.1
    ref = float(np.max(np.abs(y)))
    base = nmse(pred, y, ref)
    for scale in (1e-6, 3.7, 1e8):
        assert nmse(scale * pred, scale * y, scale * ref) == pytest.approx(base, rel=1e-9)


# ---------------------------------------------------------------------------
# press
# ---------------------------------------------------------------------------

def test_press_zero_on_perfect_linear_data():
    x = np.array([0.0, 1.0, 2.0])
    Phi = np.column_stack([np.ones(3), x])
    assert press(RegressionProblem(Phi, x)) == pytest.approx(0.0, abs=1e-20)


def test_press_matches_bruteforce_loo():
    rng = np.random.default_rng(14)
    Phi, y = _random_problem(rng, 10, 3)
    ours = press(RegressionProblem(Phi, y))
    oracle = loo_press_bruteforce(Phi, y)
    assert ours == pytest.approx(oracle, rel=1e-8)


def test_press_interpolating_fit_is_infinite():
    rng = np.random.default_rng(15)
    Phi, y = _random_problem(rng, 4, 4)    # N == M+1
    assert press(RegressionProblem(Phi, y)) == INF


def test_press_rank_deficient_is_infinite():
    base = np.arange(6.0)
    Phi = np.column_stack([np.ones(6), base, 2.0 * base])
    assert press(RegressionProblem(Phi, np.ones(6))) == INF


def test_press_bruteforce_sweep():
    # the closed form must equal N refits on every instance in this sweep
    rng = np.random.default_rng(16)
    for _ in range(40):
        n = int(rng.integers(4, 31))
        k = int(rng.integers(1, min(n - 1, 7)))
        Phi, y = _random_problem(rng, n, k)
        ours = press(RegressionProblem(Phi, y))
        oracle = loo_press_bruteforce(Phi, y)
        assert ours == pytest.approx(oracle, rel=1e-8)


# ---------------------------------------------------------------------------
# forward regression
# ---------------------------------------------------------------------------

def test_duplicate_candidate_selected_once():
    rng = np.random.default_rng(17)
    signal = rng.standard_normal(25)
    y = 3.0 + 2.0 * signal + 0.01 * rng.standard_normal(25)
    selected, coeffs = forward_regression_press([signal, signal.copy()], y)
    assert selected == [0]                      # tie broken by lower index
    assert len(coeffs) == 2
    # oracle confirmation: adding the copy cannot improve leave-one-out error
    Phi1 = np.column_stack([np.ones(25), signal])
    Phi2 = np.column_stack([np.ones(25), signal, signal])
    assert press(RegressionProblem(Phi2, y)) >= press(RegressionProblem(Phi1, y))


def test_zero_candidates_gives_offset_only():
    y = np.array([1.0, 2.0, 3.0])
    selected, coeffs = forward_regression_press([], y)
    assert selected == []
    assert coeffs == pytest.approx([2.0])


def test_noise_column_excluded():
    rng = np.random.default_rng(18)
    n = 50
    signal = rng.standard_normal(n)
    noise = rng.standard_normal(n)
    y = 1.0 + 4.0 * signal + 0.05 * rng.standard_normal(n)
    # oracle check that this seed behaves as intended: appending the noise
    # column increases brute-force leave-one-out error
    Phi_sig = np.column_stack([np.ones(n), signal])
    Phi_both = np.column_stack([np.ones(n), signal, noise])
    assert loo_press_bruteforce(Phi_both, y) > loo_press_bruteforce(Phi_sig, y)
    selected, _ = forward_regression_press([signal, noise], y)
    assert selected == [0]


def test_forward_regression_never_worse_than_offset_only():
    rng = np.random.default_rng(19)
    for _ in range(20):
        n = int(rng.integers(8, 30))
        k = int(rng.integers(0, 5))
        candidates = [rng.standard_normal(n) for _ in range(k)]
        y = rng.standard_normal(n)
        selected, _ = forward_regression_press(candidates, y)
        offset_press = press(RegressionProblem(np.ones((n, 1)), y))
        Phi = np.column_stack([np.ones(n)] + [candidates[j] for j in selected])
        assert press(RegressionProblem(Phi, y)) <= offset_press
