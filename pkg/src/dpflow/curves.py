"""Solution curves and curve-to-curve comparison metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CurvePoint:
    lam: float
    e: np.ndarray
    f: np.ndarray

    @property
    def vmag(self):
        return np.hypot(self.e, self.f)


@dataclass
class Segment:
    formulation: str        # "lambda+", "lambda-", "voltage", "cpf"
    windows: int = 0
    linear_solves: int = 0      # factorization-backed solves (new matrix each)
    triangular_solves: int = 0  # re-uses of a cached factorization


@dataclass
class QLimitEvent:
    bus: int          # external bus id
    lam: float
    limit: str        # "max" or "min"


@dataclass
class SolutionCurve:
    points: list[CurvePoint] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    q_limit_events: list[QLimitEvent] = field(default_factory=list)
    complete: bool = True

    @property
    def lambda_max(self):
        return max(p.lam for p in self.points)

    @property
    def linear_solves(self):
        return sum(s.linear_solves for s in self.segments)

    @property
    def triangular_solves(self):
        return sum(s.triangular_solves for s in self.segments)

    def lambdas(self):
        return np.array([p.lam for p in self.points])

    def vmags(self):
        return np.array([p.vmag for p in self.points])

    def upper_branch(self):
        """Points up to and including the maximum-lambda sample."""
        lams = self.lambdas()
        return self.points[:int(np.argmax(lams)) + 1]

    def lower_branch(self):
        lams = self.lambdas()
        return self.points[int(np.argmax(lams)):]

    def voltage_at(self, lam, bus_index, branch="upper"):
        """Interpolate one bus voltage magnitude at a given lambda."""
        pts = self.upper_branch() if branch == "upper" else self.lower_branch()
        lams = np.array([p.lam for p in pts])
        vs = np.array([p.vmag[bus_index] for p in pts])
        order = np.argsort(lams)
        if lam < lams.min() - 1e-9 or lam > lams.max() + 1e-9:
            raise ValueError(f"lambda {lam} outside traced range "
                             f"[{lams.min()}, {lams.max()}]")
        return float(np.interp(lam, lams[order], vs[order]))


def compare_curves(a: SolutionCurve, b: SolutionCurve):
    """Deviation metrics between two traced curves.

    Voltage deviations are measured on the upper branch at lambda samples
    common to both curves, interpolating linearly in lambda.
    """
    if not a.points or not b.points:
        raise ValueError("cannot compare empty curves")
    pa, pb = a.upper_branch(), b.upper_branch()
    la = np.array([p.lam for p in pa])
    lb = np.array([p.lam for p in pb])
    lo = max(la.min(), lb.min())
    hi = min(la.max(), lb.max())
    if hi <= lo:
        raise ValueError("curves have non-overlapping lambda ranges")
    samples = np.linspace(lo, hi, 101)
    va = np.array([p.vmag for p in pa])
    vb = np.array([p.vmag for p in pb])
    ia, ib = np.argsort(la), np.argsort(lb)
    dev = 0.0
    for col in range(va.shape[1]):
        fa = np.interp(samples, la[ia], va[ia, col])
        fb = np.interp(samples, lb[ib], vb[ib, col])
        dev = max(dev, float(np.max(np.abs(fa - fb))))
    # curves rebuilt from CSV carry no solve counters; report null then
    ratio = (b.linear_solves / a.linear_solves) if a.linear_solves else None
    return {
        "lambda_max_deviation": abs(a.lambda_max - b.lambda_max),
        "max_voltage_deviation": dev,
        "solve_count_ratio": ratio,
    }
