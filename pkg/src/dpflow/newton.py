"""Newton-Raphson power flow in rectangular voltage coordinates.

Serves as the base-case initializer and as one half of the independent
correctness oracle; it never touches the power-series tracer code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .network import BusKind


class PowerFlowDiverged(Exception):
    """Newton iteration failed to converge (often: infeasible loading)."""

    def __init__(self, message, mismatch=None):
        super().__init__(message)
        self.mismatch = mismatch


@dataclass
class NRConfig:
    tol: float = 1e-8
    max_iter: int = 25
    flat_start: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")


def flat_state(network):
    """Flat start: setpoint magnitudes at zero angle, 1.0 pu elsewhere."""
    e = np.where(np.isnan(network.v_sp), 1.0, network.v_sp)
    f = np.zeros(network.n)
    i = network.ref_index
    e[i], f[i] = network.e_sp, network.f_sp
    return e, f


def jacobian(network, e, f, direction=None):
    """Sparse Jacobian of the stacked residual wrt [e_0, f_0, e_1, f_1, ...]."""
    n = network.n
    coo = network.ybus.tocoo()
    bi, bj = coo.row, coo.col
    gv, bv = coo.data.real, coo.data.imag
    w = network.ybus @ (e + 1j * f)

    pq = network.kind == BusKind.PQ.value
    pv = network.kind == BusKind.PV.value
    rows, cols, vals = [], [], []

    # Active-power rows for every non-reference bus.
    sel = pq[bi] | pv[bi]
    i_, j_ = bi[sel], bj[sel]
    rows.append(2 * i_)
    cols.append(2 * j_)
    vals.append(gv[sel] * e[i_] + bv[sel] * f[i_])
    rows.append(2 * i_)
    cols.append(2 * j_ + 1)
    vals.append(gv[sel] * f[i_] - bv[sel] * e[i_])

    # Reactive-power rows for PQ buses.
    sel = pq[bi]
    i_, j_ = bi[sel], bj[sel]
    rows.append(2 * i_ + 1)
    cols.append(2 * j_)
    vals.append(-bv[sel] * e[i_] + gv[sel] * f[i_])
    rows.append(2 * i_ + 1)
    cols.append(2 * j_ + 1)
    vals.append(-bv[sel] * f[i_] - gv[sel] * e[i_])

    # Diagonal couplings from the injection current.
    nr = np.flatnonzero(pq | pv)
    rows += [2 * nr, 2 * nr]
    cols += [2 * nr, 2 * nr + 1]
    vals += [w.real[nr], w.imag[nr]]
    qi = np.flatnonzero(pq)
    rows += [2 * qi + 1, 2 * qi + 1]
    cols += [2 * qi, 2 * qi + 1]
    vals += [-w.imag[qi], w.real[qi]]

    # Voltage-magnitude rows for PV buses.
    vi = np.flatnonzero(pv)
    rows += [2 * vi + 1, 2 * vi + 1]
    cols += [2 * vi, 2 * vi + 1]
    vals += [2 * e[vi], 2 * f[vi]]

    # Reference bus pins e and f.
    r = network.ref_index
    rows.append(np.array([2 * r, 2 * r + 1]))
    cols.append(np.array([2 * r, 2 * r + 1]))
    vals.append(np.array([1.0, 1.0]))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csc_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))


def dresidual_dlambda(network, direction):
    """Derivative of the residual wrt the loading parameter."""
    n = network.n
    out = np.zeros(2 * n)
    pq = network.kind == BusKind.PQ.value
    pv = network.kind == BusKind.PV.value
    out[::2][pq | pv] = -direction.dp[pq | pv]
    out[1::2][pq] = -direction.dq[pq]
    return out


def newton_power_flow(network, direction, lam, guess=None, config=None):
    """Solve the power flow at fixed loading.

    Returns (e, f, iterations, linear_solves). Raises PowerFlowDiverged if
    the mismatch does not fall below tolerance within max_iter steps.
    """
    cfg = config or NRConfig()
    if guess is None:
        e, f = flat_state(network)
    else:
        e, f = guess[0].copy(), guess[1].copy()
    solves = 0
    for it in range(cfg.max_iter + 1):
        r = network.residual(e, f, lam, direction)
        norm = np.max(np.abs(r))
        if norm < cfg.tol:
            return e, f, it, solves
        if it == cfg.max_iter or not np.isfinite(norm):
            raise PowerFlowDiverged(
                f"no convergence after {it} iterations (mismatch {norm:.3e}, "
                f"lambda {lam:.4f})", mismatch=norm)
        jac = jacobian(network, e, f)
        try:
            step = spla.spsolve(jac, -r)
        except RuntimeError as exc:
            raise PowerFlowDiverged(f"singular Jacobian: {exc}")
        solves += 1
        if not np.all(np.isfinite(step)):
            raise PowerFlowDiverged("singular Jacobian (non-finite step)")
        e = e + step[::2]
        f = f + step[1::2]
    raise PowerFlowDiverged("unreachable")


def generator_reactive_output(network, e, f, lam=0.0, direction=None):
    """Per-bus generator reactive output implied by a solved state.

    At a controlled bus the generators must supply the network injection
    plus the local load (the load-change term is zero at PV buses since
    reactive direction entries only apply to PQ buses).
    """
    _, q_calc = network.injections(e, f)
    return q_calc + network.q_load
