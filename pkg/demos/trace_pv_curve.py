"""Trace the P-V curve of the 9-bus test system and print its landmarks.

The tracer expands the solution as a power series in a fictitious time,
so the whole upper branch, the nose and the lower branch come out of a
handful of sparse factorizations instead of a Newton solve per point.
"""

from pathlib import Path

import numpy as np

from dpflow import TraceConfig, build_direction, load_case, trace_curve

CASES = Path(__file__).resolve().parents[1] / "src" / "dpflow" / "cases"


def main():
    net = load_case(CASES / "case9.m")
    direction = build_direction(net, "uniform")

    curve = trace_curve(net, direction, TraceConfig())

    i9 = net.index_of(9)
    lams = curve.lambdas()
    nose = int(np.argmax(lams))
    print(f"traced {len(curve.points)} points with "
          f"{curve.linear_solves} factorizations "
          f"({curve.triangular_solves} reuses of cached factors)")
    print(f"loading limit lambda_max = {curve.lambda_max:.4f}")
    print(f"bus 9 voltage: {curve.points[0].vmag[i9]:.4f} pu at base load, "
          f"{curve.points[nose].vmag[i9]:.4f} pu at the last point before "
          f"the trace turns back")
    print(f"lower branch reaches v9 = {curve.points[-1].vmag[i9]:.4f} pu "
          f"at lambda = {curve.points[-1].lam:.4f}")

    print("\nlambda    v9 (upper branch)")
    for lam in np.arange(0.0, curve.lambda_max, 0.25):
        print(f"{lam:6.2f}    {curve.voltage_at(lam, i9):.4f}")


if __name__ == "__main__":
    main()
