"""Non-iterative P-V curve tracer.

The loaded power-flow equations are embedded in a fictitious dynamic
system driven either by the loading parameter (formulation 1) or by one
load-bus voltage magnitude (formulation 2). Per time window the solution
is expanded as a truncated power series whose order-k coefficients solve
a *linear* system with a constant matrix: one sparse factorization per
window, K triangular solves, no Newton iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .curves import CurvePoint, QLimitEvent, Segment, SolutionCurve
from .network import BusKind
from .newton import NRConfig, newton_power_flow, generator_reactive_output
from .series import eval_series


class NosePointSingularity(Exception):
    """Coefficient matrix is (numerically) singular: the trace sits at or
    beyond the nose point and the caller should re-parameterize."""

    def __init__(self, message, cond_estimate=None):
        super().__init__(message)
        self.cond_estimate = cond_estimate


class TraceError(Exception):
    pass


@dataclass
class TraceConfig:
    formulation: str = "auto"          # "auto", "lambda", "voltage"
    c1: float = 1.0                    # loading rate per fictitious second
    c2: float = 1.0                    # driven-voltage rate; positive = decreasing
    order_k: int = 6
    step_h: float = 0.1
    residual_tol: float = 1e-6
    max_windows: int = 400
    enforce_q_limits: bool = False
    driven_bus: int | None = None      # external bus id, formulation 2
    stop_lambda_floor: float = 0.0
    trace_lower_branch: bool = True
    min_voltage: float = 0.1
    # Window-acceptance mechanics. The series never depends on the step, so
    # a rejected window is re-evaluated at half the time offset for free.
    min_step_fraction: float = 1.0 / 64.0
    switch_step_fraction: float = 0.05
    samples_per_window: int = 4
    cond_limit: float = 1e12

    def __post_init__(self):
        if self.order_k < 2:
            raise ValueError("order_k must be >= 2")
        if self.step_h <= 0:
            raise ValueError("step_h must be > 0")
        if self.formulation == "lambda" and self.c1 == 0:
            raise ValueError("formulation 1 needs c1 != 0")
        if self.formulation == "voltage" and self.c2 == 0:
            raise ValueError("formulation 2 needs c2 != 0")


@dataclass
class SeriesTable:
    """Per-window power-series coefficients, orders 0..K along axis 1."""

    E: np.ndarray                  # (N, K+1)
    F: np.ndarray                  # (N, K+1)
    Lambda: np.ndarray             # (K+1,)
    Vl: np.ndarray | None = None   # driven-bus voltage series (formulation 2)
    driven: int | None = None      # internal bus index of the driven bus

    @classmethod
    def start(cls, e0, f0, lam0, order_k, driven=None):
        n = e0.shape[0]
        E = np.zeros((n, order_k + 1))
        F = np.zeros((n, order_k + 1))
        E[:, 0], F[:, 0] = e0, f0
        lam = np.zeros(order_k + 1)
        lam[0] = lam0
        vl = None
        if driven is not None:
            vl = np.zeros(order_k + 1)
            vl[0] = float(np.hypot(e0[driven], f0[driven]))
        return cls(E=E, F=F, Lambda=lam, Vl=vl, driven=driven)

    @property
    def order(self):
        return self.E.shape[1] - 1

    def state_at(self, t):
        """Evaluate voltage and loading series at time offset t."""
        return (eval_series(self.E, t), eval_series(self.F, t),
                float(eval_series(self.Lambda, t)))


@dataclass
class LinearBlocks:
    a_gy: sp.csc_matrix
    a_glambda: np.ndarray
    a_hy: np.ndarray | None
    a_hlambda: float
    lu: spla.SuperLU
    bordered: bool
    cond_estimate: float


def _row_masks(network):
    pq = network.kind == BusKind.PQ.value
    pv = network.kind == BusKind.PV.value
    return pq, pv


def assemble_A(network, direction, table, driven_bus=None, cond_limit=1e12):
    """Constant blocks of the order-k linear system at the window start.

    The voltage block doubles as the rectangular power-flow Jacobian at the
    order-0 state. With a driven bus the factorization is of the bordered
    matrix including the voltage-magnitude row.
    """
    n = network.n
    e0, f0 = table.E[:, 0], table.F[:, 0]
    coo = network.ybus.tocoo()
    bi, bj = coo.row, coo.col
    gv, bv = coo.data.real, coo.data.imag
    w = network.ybus @ (e0 + 1j * f0)
    pq, pv = _row_masks(network)

    rows, cols, vals = [], [], []
    sel = (pq | pv)[bi]
    i_, j_ = bi[sel], bj[sel]
    # active-power rows
    rows += [2 * i_, 2 * i_]
    cols += [2 * j_, 2 * j_ + 1]
    vals += [gv[sel] * e0[i_] + bv[sel] * f0[i_],
             gv[sel] * f0[i_] - bv[sel] * e0[i_]]
    # reactive-power rows
    sel = pq[bi]
    i_, j_ = bi[sel], bj[sel]
    rows += [2 * i_ + 1, 2 * i_ + 1]
    cols += [2 * j_, 2 * j_ + 1]
    vals += [-bv[sel] * e0[i_] + gv[sel] * f0[i_],
             -bv[sel] * f0[i_] - gv[sel] * e0[i_]]
    # injection-current couplings on the diagonal block
    nr = np.flatnonzero(pq | pv)
    rows += [2 * nr, 2 * nr]
    cols += [2 * nr, 2 * nr + 1]
    vals += [w.real[nr], w.imag[nr]]
    qi = np.flatnonzero(pq)
    rows += [2 * qi + 1, 2 * qi + 1]
    cols += [2 * qi, 2 * qi + 1]
    vals += [-w.imag[qi], w.real[qi]]
    # voltage-magnitude rows at PV buses
    vi = np.flatnonzero(pv)
    rows += [2 * vi + 1, 2 * vi + 1]
    cols += [2 * vi, 2 * vi + 1]
    vals += [2 * e0[vi], 2 * f0[vi]]
    # reference rows
    r = network.ref_index
    rows.append(np.array([2 * r, 2 * r + 1]))
    cols.append(np.array([2 * r, 2 * r + 1]))
    vals.append(np.array([1.0, 1.0]))

    a_gy = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * n, 2 * n))

    a_glambda = np.zeros(2 * n)
    a_glambda[::2][pq | pv] = -direction.dp[pq | pv]
    a_glambda[1::2][pq] = -direction.dq[pq]

    a_hy = None
    a_hlambda = 0.0
    if driven_bus is not None:
        l = driven_bus
        a_hy = np.zeros(2 * n)
        a_hy[2 * l] = 2 * e0[l]
        a_hy[2 * l + 1] = 2 * f0[l]
        mat = sp.bmat([[a_gy, a_glambda.reshape(-1, 1)],
                       [sp.csr_matrix(a_hy.reshape(1, -1)),
                        sp.csr_matrix([[a_hlambda]])]],
                      format="csc")
    else:
        mat = a_gy

    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise NosePointSingularity(f"factorization failed: {exc}",
                                   cond_estimate=np.inf)
    cond = _condition_estimate(mat, lu)
    if cond > cond_limit:
        raise NosePointSingularity(
            f"coefficient matrix near-singular (cond ~ {cond:.2e})",
            cond_estimate=cond)
    return LinearBlocks(a_gy=a_gy, a_glambda=a_glambda, a_hy=a_hy,
                        a_hlambda=a_hlambda, lu=lu,
                        bordered=driven_bus is not None, cond_estimate=cond)


def _condition_estimate(mat, lu):
    """Cheap lower-bound condition estimate from a couple of probe solves."""
    rng = np.random.default_rng(12345)
    norm_a = spla.norm(mat, 1) if sp.issparse(mat) else np.linalg.norm(mat, 1)
    est = 0.0
    for _ in range(2):
        x = rng.standard_normal(mat.shape[0])
        y = lu.solve(x)
        if not np.all(np.isfinite(y)):
            return np.inf
        est = max(est, np.linalg.norm(y, 1) / np.linalg.norm(x, 1))
    return norm_a * est


def assemble_B(network, table, k):
    """Known lower-order part of the order-k equations (all bus rows).

    Accumulates the middle convolution sums over orders 1..k-1; the
    specified-value terms carry a delta(k) factor and vanish for k >= 1.
    Returns the stacked 2N vector.
    """
    if k < 1:
        raise ValueError("assemble_B needs k >= 1")
    if k > table.order:
        raise ValueError(f"order {k} beyond table order {table.order}")
    n = network.n
    E, F = table.E, table.F
    eps = np.zeros(n)
    mu = np.zeros(n)
    zeta = np.zeros(n)
    for m in range(1, k):
        wm = network.ybus @ (E[:, k - m] + 1j * F[:, k - m])
        eps += E[:, m] * wm.real + F[:, m] * wm.imag
        mu += F[:, m] * wm.real - E[:, m] * wm.imag
        zeta += E[:, m] * E[:, k - m] + F[:, m] * F[:, k - m]
    pq, pv = _row_masks(network)
    b = np.zeros(2 * n)
    b[::2][pq | pv] = eps[pq | pv]
    b[1::2][pq] = mu[pq]
    b[1::2][pv] = zeta[pv]
    return b


def ancillary_B(table, k):
    """Known part of the driven-voltage row: the lower-order voltage
    convolution minus the (fully known) driven-magnitude convolution."""
    l = table.driven
    E, F, vl = table.E[l], table.F[l], table.Vl
    mid = float(np.dot(E[1:k], E[k - 1:0:-1]) + np.dot(F[1:k], F[k - 1:0:-1])) \
        if k >= 2 else 0.0
    return mid - float(np.dot(vl[:k + 1], vl[k::-1]))


def solve_order_k_f1(blocks, table, k, c1, network, direction):
    """One recursion step of the loading-driven formulation."""
    table.Lambda[k] = c1 if k == 1 else 0.0
    b_g = assemble_B(network, table, k)
    rhs = -(blocks.a_glambda * table.Lambda[k] + b_g)
    sol = blocks.lu.solve(rhs)
    table.E[:, k] = sol[::2]
    table.F[:, k] = sol[1::2]
    return table


def solve_order_k_f2(blocks, table, k, c2, network, direction):
    """One recursion step of the voltage-driven formulation (bordered solve)."""
    table.Vl[k] = -c2 if k == 1 else 0.0
    b_g = assemble_B(network, table, k)
    b_h = ancillary_B(table, k)
    sol = blocks.lu.solve(-np.concatenate([b_g, [b_h]]))
    if not np.all(np.isfinite(sol)):
        raise NosePointSingularity("bordered system singular")
    table.E[:, k] = sol[:-1:2]
    table.F[:, k] = sol[1:-1:2]
    table.Lambda[k] = sol[-1]
    return table


def trace_window(network, direction, init, config, formulation="lambda",
                 driven_bus=None, c1=None, c2=None):
    """Expand one window's power series from a converged starting state.

    ``init`` is (e, f, lam). Returns (table, blocks). Costs exactly one
    factorization and order_k cached-factorization solves.
    """
    e0, f0, lam0 = init
    if network.residual_norm(e0, f0, lam0, direction) > config.residual_tol:
        raise TraceError("window start state violates the power-flow residual")
    driven = None
    if formulation == "voltage":
        driven = driven_bus
        if driven is None:
            raise TraceError("formulation 2 needs a driven bus")
    table = SeriesTable.start(e0, f0, lam0, config.order_k, driven=driven)
    blocks = assemble_A(network, direction, table, driven_bus=driven,
                        cond_limit=config.cond_limit)
    for k in range(1, config.order_k + 1):
        if formulation == "voltage":
            solve_order_k_f2(blocks, table, k,
                             config.c2 if c2 is None else c2,
                             network, direction)
        else:
            solve_order_k_f1(blocks, table, k,
                             config.c1 if c1 is None else c1,
                             network, direction)
    return table, blocks


def transformed_residual(network, direction, table, k):
    """Residual of the order-k transformed equations evaluated directly from
    the convolution form; checks the linear split reproduces it."""
    n = network.n
    E, F = table.E, table.F
    p_acc = np.zeros(n)
    q_acc = np.zeros(n)
    v_acc = np.zeros(n)
    for m in range(0, k + 1):
        wm = network.ybus @ (E[:, k - m] + 1j * F[:, k - m])
        p_acc += E[:, m] * wm.real + F[:, m] * wm.imag
        q_acc += F[:, m] * wm.real - E[:, m] * wm.imag
        v_acc += E[:, m] * E[:, k - m] + F[:, m] * F[:, k - m]
    delta = 1.0 if k == 0 else 0.0
    pq, pv = _row_masks(network)
    r = np.zeros(2 * n)
    r[::2][pq | pv] = (-direction.dp * table.Lambda[k] + p_acc
                       - network.p_sp * delta)[pq | pv]
    r[1::2][pq] = (-direction.dq * table.Lambda[k] + q_acc
                   - network.q_sp * delta)[pq]
    r[1::2][pv] = (v_acc - np.where(pv, network.v_sp ** 2, 0.0) * delta)[pv]
    i = network.ref_index
    r[2 * i] = E[i, k] - network.e_sp * delta
    r[2 * i + 1] = F[i, k] - network.f_sp * delta
    return r


# ---------------------------------------------------------------------------
# Q-limit bookkeeping
# ---------------------------------------------------------------------------

def check_q_limits(network, e, f):
    """PV buses whose generators sit outside their reactive capability.

    Returns a list of (bus_index, 'max'|'min', headroom_function) where the
    headroom function maps a state to the signed limit violation.
    """
    q_gen = generator_reactive_output(network, e, f)
    out = []
    for i in network.pv_indices:
        gens = network.generators_at(i)
        if not gens:
            continue
        q_max = sum(g.q_max for g in gens)
        q_min = sum(g.q_min for g in gens)
        if q_gen[i] > q_max + 1e-9:
            out.append((int(i), "max", q_max))
        elif q_gen[i] < q_min - 1e-9:
            out.append((int(i), "min", q_min))
    return out


def enforce_q_limits(network, state, pv_status=None):
    """Re-type limit-hitting PV buses as PQ with the reactive injection
    pinned at the limit. Returns (network, events, rebuilt) where rebuilt
    tells the caller the coefficient blocks must be reassembled."""
    e, f, lam = state
    events = []
    for i, side, q_lim in check_q_limits(network, e, f):
        network = network.with_bus_retyped_pq(i, q_lim - network.q_load[i])
        events.append(QLimitEvent(network.buses[i].id, float(lam), side))
    return network, events, bool(events)


def _earliest_q_crossing(network, table, t_hi):
    """Earliest time in (0, t_hi] at which some PV generator crosses a
    reactive limit, found by bisection on the window series; None if the
    end state is within limits."""
    def violations(t):
        e, f, _ = table.state_at(t)
        return check_q_limits(network, e, f)

    if not violations(t_hi):
        return None
    lo, hi = 0.0, t_hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if violations(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Full-curve tracing
# ---------------------------------------------------------------------------

def _accepted_time(network, direction, table, config):
    """Largest dyadic fraction of the step at which the evaluated window
    end satisfies the residual tolerance; None when even the smallest
    fraction fails (series has left its convergence region)."""
    t = config.step_h
    t_min = config.step_h * config.min_step_fraction
    while t >= t_min * (1 - 1e-12):
        e, f, lam = table.state_at(t)
        if network.residual_norm(e, f, lam, direction) < config.residual_tol:
            return t
        t /= 2
    return None


def _select_driven_bus(network, dv):
    """PQ bus whose voltage moved fastest over the last accepted window."""
    pq = network.pq_indices
    if dv is None:
        # No history yet: fall back to the lowest-voltage load bus.
        raise TraceError("driven-bus selection needs a previous window")
    return int(pq[np.argmax(np.abs(dv[pq]))])


def _emit(curve, network, direction, table, t_acc, config, include_lambda_peak):
    """Validated intra-window samples plus the window end point."""
    ts = list(np.linspace(0.0, t_acc, config.samples_per_window + 1)[1:])
    if include_lambda_peak:
        # The loading series may peak strictly inside the window: emit the
        # interior critical points so lambda_max is not a sampling artifact.
        dcoef = np.polynomial.polynomial.polyder(table.Lambda)
        roots = np.roots(dcoef[::-1]) if np.any(dcoef) else []
        for r in roots:
            if abs(r.imag) < 1e-12 and 0 < r.real < t_acc:
                ts.append(float(r.real))
        ts.sort()
    last = None
    for t in ts:
        e, f, lam = table.state_at(t)
        if network.residual_norm(e, f, lam, direction) < config.residual_tol:
            pt = CurvePoint(float(lam), e, f)
            curve.points.append(pt)
            last = pt
    return last


def trace_curve(network, direction, config=None, base_state=None):
    """Trace the P-V solution curve through the nose point.

    The upper branch runs the loading-driven formulation; when the window
    step collapses (or the matrix goes singular) near the nose the tracer
    re-parameterizes on the steepest load-bus voltage, and optionally
    returns to the loading-driven form with reversed rate for the lower
    branch.
    """
    cfg = config or TraceConfig()
    if base_state is None:
        nr = NRConfig(tol=min(1e-9, cfg.residual_tol / 10))
        e, f, _, _ = newton_power_flow(network, direction, 0.0, config=nr)
        lam = 0.0
    else:
        e, f, lam = base_state
    lam = float(lam)

    curve = SolutionCurve()
    events = curve.q_limit_events
    if cfg.enforce_q_limits:
        network, ev, rebuilt = enforce_q_limits(network, (e, f, lam))
        events.extend(ev)
        if rebuilt:
            nr = NRConfig(tol=min(1e-9, cfg.residual_tol / 10))
            e, f, _, _ = newton_power_flow(network, direction, lam,
                                           guess=(e, f), config=nr)
    curve.points.append(CurvePoint(lam, e.copy(), f.copy()))

    if cfg.formulation == "voltage":
        phase = "nose"
        if cfg.driven_bus is None:
            raise TraceError("voltage formulation needs driven_bus")
    else:
        phase = "upper"
    segment = Segment({"upper": "lambda+", "nose": "voltage"}[phase])
    curve.segments.append(segment)
    fixed_driven = (network.index_of(cfg.driven_bus)
                    if cfg.driven_bus is not None else None)

    lam_start = lam
    dv_last = None
    passed_nose = False
    windows = 0

    def new_segment(name):
        nonlocal segment
        segment = Segment(name)
        curve.segments.append(segment)

    while windows < cfg.max_windows:
        state = (e, f, lam)
        if phase in ("upper", "lower"):
            c1 = abs(cfg.c1) if phase == "upper" else -abs(cfg.c1)
            try:
                table, blocks = trace_window(network, direction, state, cfg,
                                             formulation="lambda", c1=c1)
            except NosePointSingularity:
                if phase == "upper" and cfg.formulation == "auto":
                    phase = "nose"
                    new_segment("voltage")
                    continue
                curve.complete = False
                break
            windows += 1
            segment.windows += 1
            segment.linear_solves += 1
            segment.triangular_solves += cfg.order_k
            t_acc = _accepted_time(network, direction, table, cfg)
            collapsed = (t_acc is None
                         or t_acc < cfg.switch_step_fraction * cfg.step_h)
        else:
            driven = fixed_driven
            if driven is None:
                driven = _select_driven_bus(network, dv_last)
            try:
                table, blocks = trace_window(network, direction, state, cfg,
                                             formulation="voltage",
                                             driven_bus=driven, c2=cfg.c2)
            except NosePointSingularity:
                curve.complete = False
                break
            windows += 1
            segment.windows += 1
            segment.linear_solves += 1
            segment.triangular_solves += cfg.order_k
            t_acc = _accepted_time(network, direction, table, cfg)
            collapsed = t_acc is None

        if collapsed and t_acc is None:
            if phase == "upper" and cfg.formulation == "auto":
                phase = "nose"
                new_segment("voltage")
                continue
            if phase == "nose" and passed_nose and cfg.formulation == "auto" \
                    and cfg.trace_lower_branch:
                phase = "lower"
                new_segment("lambda-")
                continue
            # Stalling after the nose is a natural end of the lower branch
            # (the series radius shrinks to zero near the collapse state);
            # stalling before the nose means the trace failed.
            curve.complete = bool(passed_nose)
            break

        # Q-limit crossings rewind the window to the crossing time.
        switched = False
        if cfg.enforce_q_limits:
            t_cross = _earliest_q_crossing(network, table, t_acc)
            if t_cross is not None:
                t_acc = t_cross
                switched = True

        e_new, f_new, lam_new = table.state_at(t_acc)
        _emit(curve, network, direction, table, t_acc, cfg,
              include_lambda_peak=(phase == "nose"))
        dv_last = np.hypot(e_new, f_new) - np.hypot(e, f)
        dlam = lam_new - lam
        e, f, lam = e_new, f_new, lam_new

        if switched:
            network, ev, _ = enforce_q_limits(network, (e, f, lam))
            events.extend(ev)
            if phase == "upper":
                # A limit switch can drop the state onto the re-typed
                # system's lower branch (limit-induced instability). Keep
                # the motion direction continuous: if pushing lambda up
                # now opposes the incoming motion, the nose has been hit.
                tab1, _ = trace_window(network, direction, (e, f, lam), cfg,
                                       formulation="lambda", c1=abs(cfg.c1))
                segment.linear_solves += 1
                segment.triangular_solves += cfg.order_k
                # On a stable upper branch, more loading lowers the weakest
                # load-bus voltage. A positive slope means the re-typed
                # system has no upper-branch continuation from here.
                pqi = network.pq_indices
                weak = pqi[np.argmin(np.hypot(e, f)[pqi])]
                dv_dlam = (e[weak] * tab1.E[weak, 1]
                           + f[weak] * tab1.F[weak, 1])
                if dv_dlam > 0.0:
                    passed_nose = True
                    if cfg.formulation == "auto" and cfg.trace_lower_branch:
                        phase = "lower"
                        new_segment("lambda-")
                    else:
                        break

        if dlam < 0:
            passed_nose = True

        # stopping / phase transitions
        vmin = float(np.min(np.hypot(e, f)))
        if vmin < cfg.min_voltage:
            break
        if passed_nose and lam < cfg.stop_lambda_floor:
            break
        if passed_nose and not cfg.trace_lower_branch \
                and lam < curve.lambda_max - 1e-6:
            break

        if phase == "upper" and collapsed:
            # accepted only a sliver of the step: nose is close
            if cfg.formulation == "auto":
                phase = "nose"
                new_segment("voltage")
            else:
                curve.complete = False
                break
        elif phase == "nose" and cfg.formulation == "auto" \
                and cfg.trace_lower_branch and dlam < 0 \
                and abs(dlam) > cfg.switch_step_fraction * abs(cfg.c1) * cfg.step_h:
            phase = "lower"
            new_segment("lambda-")
    else:
        curve.complete = False

    return curve
