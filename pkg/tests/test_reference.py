"""Reference solvers: Newton-Raphson power flow and the continuation tracer.

The two-bus feeder has a closed-form solution curve, which pins both
solvers to hand-derived numbers before they are used as oracles.
"""

import numpy as np
import pytest

from dpflow import (CPFConfig, NRConfig, PowerFlowDiverged, build_direction,
                    cpf_trace, flat_state, generator_reactive_output,
                    newton_power_flow)
from dpflow.newton import jacobian


# -- two-bus closed form ----------------------------------------------------
# Slack 1.0 pu behind x = 0.2 feeding P = (1+lam), Q = 0.2 (1+lam):
#   v^4 + v^2 (2 Q x - 1) + x^2 (P^2 + Q^2) = 0
# solvable while (2 Q x - 1)^2 >= 4 x^2 (P^2 + Q^2).

X = 0.2
P0, Q0 = 1.0, 0.2


def two_bus_voltage(s):
    """High-voltage root at loading multiple s (base s = 1)."""
    p, q = P0 * s, Q0 * s
    b = 2 * q * X - 1
    disc = b * b - 4 * X * X * (p * p + q * q)
    v2 = (-b + np.sqrt(disc)) / 2
    return np.sqrt(v2)


def two_bus_lambda_max():
    # (0.08 s - 1)^2 = 4 x^2 (P0^2 + Q0^2) s^2, take the positive root
    a = 4 * X * X * (P0 ** 2 + Q0 ** 2) - (2 * Q0 * X) ** 2
    b_ = 2 * (2 * Q0 * X)
    s = (-b_ + np.sqrt(b_ * b_ + 4 * a)) / (2 * a)
    return s - 1.0


def test_newton_matches_closed_form(case2):
    d = build_direction(case2, "uniform")
    i = case2.index_of(2)
    for lam in (0.0, 0.5, 0.9):
        e, f, _, _ = newton_power_flow(case2, d, lam)
        assert np.hypot(e[i], f[i]) == pytest.approx(
            two_bus_voltage(1.0 + lam), abs=1e-9)


def test_newton_flags_infeasible_loading(case2):
    d = build_direction(case2, "uniform")
    with pytest.raises(PowerFlowDiverged):
        newton_power_flow(case2, d, two_bus_lambda_max() + 0.5)


def test_newton_converges_on_shipped_cases(case9, case39, case57):
    for net in (case9, case39, case57):
        d = build_direction(net, "uniform")
        e, f, iters, _ = newton_power_flow(net, d, 0.0)
        assert iters <= 6
        assert net.residual_norm(e, f, 0.0, d) < 1e-8


def test_jacobian_against_finite_differences(case9):
    d = build_direction(case9, "uniform")
    rng = np.random.default_rng(42)
    e0, f0 = flat_state(case9)
    worst = 0.0
    for _ in range(100):
        e = e0 + 0.1 * rng.standard_normal(case9.n)
        f = f0 + 0.1 * rng.standard_normal(case9.n)
        jac = jacobian(case9, e, f).toarray()
        num = np.zeros_like(jac)
        h = 1e-6
        for j in range(case9.n):
            for arr, col in ((e, 2 * j), (f, 2 * j + 1)):
                arr[j] += h
                rp = case9.residual(e, f, 0.0, d)
                arr[j] -= 2 * h
                rm = case9.residual(e, f, 0.0, d)
                arr[j] += h
                num[:, col] = (rp - rm) / (2 * h)
        scale = max(1.0, np.abs(jac).max())
        worst = max(worst, np.abs(jac - num).max() / scale)
    assert worst < 1e-5


def test_reactive_output_balances_load(case9):
    d = build_direction(case9, "uniform")
    e, f, _, _ = newton_power_flow(case9, d, 0.0)
    q_gen = generator_reactive_output(case9, e, f)
    _, q_inj = case9.injections(e, f)
    for i in case9.pv_indices:
        assert q_gen[i] == pytest.approx(q_inj[i] + case9.q_load[i], abs=1e-9)


def test_cpf_finds_two_bus_nose(case2):
    d = build_direction(case2, "uniform")
    curve = cpf_trace(case2, d, CPFConfig(stop_at_nose=True))
    assert curve.lambda_max == pytest.approx(two_bus_lambda_max(), abs=2e-3)


def test_cpf_traces_past_the_nose(case2):
    d = build_direction(case2, "uniform")
    curve = cpf_trace(case2, d, CPFConfig())
    lams = curve.lambdas()
    peak = int(np.argmax(lams))
    assert 0 < peak < len(lams) - 1          # interior nose
    assert lams[-1] < curve.lambda_max - 0.1  # went down the lower branch
    i = case2.index_of(2)
    upper = curve.points[peak - 1].vmag[i]
    lower = curve.points[-1].vmag[i]
    assert lower < upper


def test_cpf_counts_linear_solves(case9):
    d = build_direction(case9, "uniform")
    curve = cpf_trace(case9, d, CPFConfig(stop_at_nose=True))
    assert curve.linear_solves > len(curve.points)   # predictor + corrector

def test_nr_config_validation():
    with pytest.raises(ValueError):
        NRConfig(tol=0.0)
    with pytest.raises(ValueError):
        NRConfig(max_iter=0)
