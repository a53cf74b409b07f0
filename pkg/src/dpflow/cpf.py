"""Predictor-corrector continuation power flow (the correctness oracle).

Tangent predictor with pseudo-arc-length parameterization and a
Newton corrector on the bordered system; adaptive arc step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .curves import CurvePoint, QLimitEvent, Segment, SolutionCurve, compare_curves
from .network import BusKind
from .newton import (NRConfig, PowerFlowDiverged, dresidual_dlambda, jacobian,
                     newton_power_flow, generator_reactive_output)

__all__ = ["CPFConfig", "cpf_trace", "compare_curves"]


@dataclass
class CPFConfig:
    initial_arc_step: float = 0.05
    min_arc_step: float = 1e-4
    max_arc_step: float = 0.05
    corrector: NRConfig = field(default_factory=lambda: NRConfig(tol=1e-8, max_iter=12))
    parameterization: str = "arclength"   # "arclength" or "local"
    max_steps: int = 1000
    enforce_q_limits: bool = False
    stop_lambda_floor: float = 0.0
    min_voltage: float = 0.1
    stop_at_nose: bool = False
    # Shrink steps once the tangent flattens in lambda so the nose point is
    # resolved rather than straddled by one long arc step.
    nose_tangent_threshold: float = 0.4

    def __post_init__(self):
        if not (0 < self.min_arc_step <= self.initial_arc_step <= self.max_arc_step):
            raise ValueError("need 0 < min <= initial <= max arc step")


def _bordered(jac, glam, row):
    """Square (2N+1) system: Jacobian, loading column, and a constraint row
    spanning both the voltage unknowns and the loading parameter."""
    return sp.bmat([[jac, glam.reshape(-1, 1)],
                    [sp.csr_matrix(row[:-1].reshape(1, -1)),
                     sp.csr_matrix([[row[-1]]])]],
                   format="csc")


def _tangent(network, direction, e, f, t_prev, counter):
    jac = jacobian(network, e, f)
    glam = dresidual_dlambda(network, direction)
    aug = _bordered(jac, glam, t_prev)
    rhs = np.zeros(2 * network.n + 1)
    rhs[-1] = 1.0
    t = spla.spsolve(aug, rhs)
    counter[0] += 1
    t /= np.linalg.norm(t)
    if np.dot(t, t_prev) < 0:
        t = -t
    return t


def _correct(network, direction, z_pred, t, cfg, counter):
    """Newton iteration on [g; t.(z - z_pred)] = 0 from the predicted point."""
    z = z_pred.copy()
    n = network.n
    for it in range(cfg.corrector.max_iter):
        e, f, lam = z[:-1:2], z[1:-1:2], z[-1]
        g = network.residual(e, f, lam, direction)
        cons = float(np.dot(t, z - z_pred))
        norm = max(np.max(np.abs(g)), abs(cons))
        if norm < cfg.corrector.tol:
            return z, it
        jac = jacobian(network, e, f)
        glam = dresidual_dlambda(network, direction)
        aug = _bordered(jac, glam, t)
        step = spla.spsolve(aug, -np.concatenate([g, [cons]]))
        counter[0] += 1
        if not np.all(np.isfinite(step)):
            raise PowerFlowDiverged("corrector produced non-finite step")
        z = z + step
    raise PowerFlowDiverged("corrector did not converge")


def _apply_q_limits(network, e, f, lam, events):
    """Re-type PV buses whose generators sit outside reactive limits."""
    changed = False
    q_gen = generator_reactive_output(network, e, f)
    for i in network.pv_indices:
        gens = network.generators_at(i)
        if not gens:
            continue
        q_max = sum(g.q_max for g in gens)
        q_min = sum(g.q_min for g in gens)
        if q_gen[i] > q_max + 1e-9:
            network = network.with_bus_retyped_pq(i, q_max - network.q_load[i])
            events.append(QLimitEvent(network.buses[i].id, lam, "max"))
            changed = True
        elif q_gen[i] < q_min - 1e-9:
            network = network.with_bus_retyped_pq(i, q_min - network.q_load[i])
            events.append(QLimitEvent(network.buses[i].id, lam, "min"))
            changed = True
    return network, changed


def cpf_trace(network, direction, config=None):
    """Trace the full solution curve with tangent prediction + NR correction."""
    cfg = config or CPFConfig()
    counter = [0]   # linear solves, shared by predictor and corrector

    e, f, _, solves = newton_power_flow(network, direction, 0.0,
                                        config=cfg.corrector)
    counter[0] += solves
    events = []
    if cfg.enforce_q_limits:
        network, changed = _apply_q_limits(network, e, f, 0.0, events)
        if changed:
            e, f, _, solves = newton_power_flow(network, direction, 0.0,
                                                guess=(e, f), config=cfg.corrector)
            counter[0] += solves

    n = network.n
    z = np.empty(2 * n + 1)
    z[:-1:2], z[1:-1:2], z[-1] = e, f, 0.0
    curve = SolutionCurve()
    curve.points.append(CurvePoint(0.0, e.copy(), f.copy()))
    seg = Segment("cpf")
    curve.segments.append(seg)

    t_prev = np.zeros(2 * n + 1)
    t_prev[-1] = 1.0
    sigma = cfg.initial_arc_step
    passed_nose = False

    for _ in range(cfg.max_steps):
        e, f, lam = z[:-1:2], z[1:-1:2], z[-1]
        try:
            t = _tangent(network, direction, e, f, t_prev, counter)
        except Exception:
            curve.complete = False
            break
        sigma_eff = sigma
        if abs(t[-1]) < cfg.nose_tangent_threshold:
            sigma_eff = min(sigma, 0.5 * cfg.initial_arc_step)
        accepted = False
        while sigma_eff >= cfg.min_arc_step:
            z_pred = z + sigma_eff * t
            try:
                z_new, iters = _correct(network, direction, z_pred, t, cfg, counter)
                accepted = True
                break
            except PowerFlowDiverged:
                sigma_eff /= 2
        if not accepted:
            curve.complete = False
            break
        sigma = min(sigma, max(sigma_eff, cfg.min_arc_step))

        if z_new[-1] < z[-1]:
            passed_nose = True
        z, t_prev = z_new, t
        e, f, lam = z[:-1:2], z[1:-1:2], z[-1]

        if cfg.enforce_q_limits:
            network, changed = _apply_q_limits(network, e, f, lam, events)
            if changed:
                try:
                    z, _ = _correct(network, direction, z, t, cfg, counter)
                except PowerFlowDiverged:
                    curve.complete = False
                    break
                e, f, lam = z[:-1:2], z[1:-1:2], z[-1]
                # A switch can land past the re-typed system's fold
                # (limit-induced instability): on a stable upper branch
                # more loading lowers the weakest load-bus voltage.
                t_new = _tangent(network, direction, e, f, t_prev, counter)
                if t_new[-1] < 0:
                    t_new = -t_new
                pqi = network.pq_indices
                weak = pqi[int(np.argmin(np.hypot(e, f)[pqi]))]
                dv = e[weak] * t_new[2 * weak] + f[weak] * t_new[2 * weak + 1]
                if dv > 0:
                    passed_nose = True
                    t_prev = -t_new   # descend the lower branch
                else:
                    t_prev = t_new

        curve.points.append(CurvePoint(float(lam), e.copy(), f.copy()))
        seg.windows += 1

        if iters <= 3:
            sigma = min(sigma * 1.5, cfg.max_arc_step)
        elif iters > 6:
            sigma = max(sigma * 0.7, cfg.min_arc_step)

        vmin = float(np.min(np.hypot(e, f)))
        if passed_nose and (cfg.stop_at_nose or lam < cfg.stop_lambda_floor):
            break
        if vmin < cfg.min_voltage:
            break
    else:
        curve.complete = False

    seg.linear_solves = counter[0]
    curve.q_limit_events = events
    return curve
