"""Command-line front end.

Subcommands: ``trace`` (P-V curve to CSV/JSON artifacts), ``nminus1``
(single-branch contingency sweep), ``compare`` (curve-file metrics) and
``validate`` (case parse + admittance check). Exit codes: 0 ok, 1 usage,
2 parse/validation failure, 3 infeasible base case, 4 incomplete trace.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cpf import CPFConfig, cpf_trace
from .curves import CurvePoint, SolutionCurve, compare_curves
from .network import (CaseError, CaseValidationError, build_direction,
                      load_case)
from .newton import PowerFlowDiverged
from .screening import nminus1_screen
from .tracer import TraceConfig, TraceError, trace_curve

log = logging.getLogger("dpflow.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_INCOMPLETE = 4


def _fmt(x):
    return f"{float(x):.15g}"


def _load_manifest(path):
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CaseError(f"manifest {path}: {exc}")
    if not isinstance(manifest, dict):
        raise CaseError(f"manifest {path}: expected a JSON object")
    return manifest


def _setting(args, manifest, key, default=None):
    """Config precedence: CLI flag > manifest entry > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in manifest:
        return manifest[key]
    return default


def _direction_spec(raw):
    if raw is None or raw == "uniform":
        return "uniform"
    if isinstance(raw, dict):
        return raw
    try:
        with open(raw) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CaseError(f"direction {raw}: {exc}")


def _trace_config(args, manifest, **overrides):
    kw = dict(
        order_k=int(_setting(args, manifest, "k", 6)),
        step_h=float(_setting(args, manifest, "step", 0.1)),
        c1=float(_setting(args, manifest, "c1", 1.0)),
        c2=float(_setting(args, manifest, "c2", 1.0)),
        enforce_q_limits=bool(_setting(args, manifest, "q_limits", False)),
    )
    kw.update(manifest.get("trace_config", {}))
    kw.update(overrides)
    return TraceConfig(**kw)


def _cpf_config(args, manifest, **overrides):
    kw = dict(enforce_q_limits=bool(_setting(args, manifest, "q_limits",
                                             False)))
    kw.update(manifest.get("cpf_config", {}))
    kw.update(overrides)
    return CPFConfig(**kw)


# ---------------------------------------------------------------------------
# Curve file I/O
# ---------------------------------------------------------------------------

def write_curve_csv(path, curve, bus_ids):
    header = (["lambda"] + [f"v_{b}" for b in bus_ids]
              + [f"e_{b}" for b in bus_ids] + [f"f_{b}" for b in bus_ids])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for pt in curve.points:
            row = ([_fmt(pt.lam)] + [_fmt(v) for v in pt.vmag]
                   + [_fmt(v) for v in pt.e] + [_fmt(v) for v in pt.f])
            fh.write(",".join(row) + "\n")


def read_curve_csv(path):
    """Rebuild a SolutionCurve (points only) from a curve CSV file."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "lambda":
            raise CaseError(f"{path}: not a curve file (missing lambda column)")
        n = (len(header) - 1) // 3
        if len(header) != 1 + 3 * n:
            raise CaseError(f"{path}: malformed curve header")
        bus_ids = [c[2:] for c in header[1:1 + n]]
        curve = SolutionCurve()
        for lineno, line in enumerate(fh, start=2):
            cells = line.rstrip("\n").split(",")
            if len(cells) != len(header):
                raise CaseError(f"{path}:{lineno}: wrong column count")
            vals = np.array([float(c) for c in cells])
            curve.points.append(CurvePoint(
                float(vals[0]),
                vals[1 + n:1 + 2 * n].copy(),
                vals[1 + 2 * n:1 + 3 * n].copy()))
    return curve, bus_ids


def _verify_curve(network, direction, curve, tol):
    """Re-validate every curve point, replaying PV->PQ switches in row
    order so points after a reactive-limit event check against the
    re-typed network."""
    events = list(curve.q_limit_events)
    bad = []
    for idx, pt in enumerate(curve.points):
        r = network.residual_norm(pt.e, pt.f, pt.lam, direction)
        while r > tol and events:
            ev = events.pop(0)
            i = network.index_of(ev.bus)
            gens = network.generators_at(i)
            q_lim = sum(g.q_max for g in gens) if ev.limit == "max" \
                else sum(g.q_min for g in gens)
            network = network.with_bus_retyped_pq(i, q_lim - network.q_load[i])
            r = network.residual_norm(pt.e, pt.f, pt.lam, direction)
        if r > tol:
            bad.append((idx, r))
    return bad


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_trace(args):
    manifest = _load_manifest(args.manifest) if args.manifest else {}
    case_path = _setting(args, manifest, "case")
    if case_path is None:
        log.error("trace: --case (or a manifest case entry) is required")
        return EXIT_USAGE
    network = load_case(case_path)
    direction = build_direction(
        network, _direction_spec(_setting(args, manifest, "direction")))
    method = _setting(args, manifest, "method", "dpf")
    out_dir = Path(_setting(args, manifest, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    bus_ids = [b.id for b in network.buses]

    trace_cfg = _trace_config(args, manifest)
    cpf_cfg = _cpf_config(args, manifest)

    curves = {}
    summary = {}
    incomplete = False
    for m in ("dpf", "cpf"):
        if method not in (m, "both"):
            continue
        t0 = time.perf_counter()
        if m == "dpf":
            curve = trace_curve(network, direction, trace_cfg)
        else:
            curve = cpf_trace(network, direction, cpf_cfg)
        elapsed = time.perf_counter() - t0
        curves[m] = curve
        incomplete |= not curve.complete
        if args.verify:
            bad = _verify_curve(network, direction, curve,
                                trace_cfg.residual_tol)
            if bad:
                log.error("%s: %d curve rows violate the residual tolerance "
                          "(first: row %d, |g| = %.3e)", m, len(bad),
                          bad[0][0], bad[0][1])
                return EXIT_INCOMPLETE
        summary[m] = {
            "lambda_max": float(curve.lambda_max),
            "linear_solves": curve.linear_solves,
            "complete": curve.complete,
            "elapsed_s": elapsed,
            "q_limit_events": [
                {"bus": int(ev.bus), "lambda": float(ev.lam),
                 "limit": ev.limit}
                for ev in curve.q_limit_events],
            "segments": [
                {"formulation": s.formulation, "windows": s.windows,
                 "linear_solves": s.linear_solves,
                 "triangular_solves": s.triangular_solves}
                for s in curve.segments],
        }
        write_curve_csv(out_dir / f"curve_{m}.csv", curve, bus_ids)

    for bus in args.bus or []:
        i = network.index_of(int(bus))
        for m, curve in curves.items():
            with open(out_dir / f"pv_{bus}.csv" if len(curves) == 1
                      else out_dir / f"pv_{bus}_{m}.csv",
                      "w", newline="\n") as fh:
                fh.write("lambda,v\n")
                for pt in curve.points:
                    fh.write(f"{_fmt(pt.lam)},{_fmt(pt.vmag[i])}\n")

    with open(out_dir / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for m, s in summary.items():
        print(f"{m}: lambda_max {s['lambda_max']:.6f} "
              f"linear_solves {s['linear_solves']}")
    return EXIT_INCOMPLETE if incomplete else EXIT_OK


def cmd_nminus1(args):
    manifest = _load_manifest(args.manifest) if args.manifest else {}
    case_path = _setting(args, manifest, "case")
    if case_path is None:
        log.error("nminus1: --case (or a manifest case entry) is required")
        return EXIT_USAGE
    network = load_case(case_path)
    direction = build_direction(
        network, _direction_spec(_setting(args, manifest, "direction")))
    method = _setting(args, manifest, "method", "dpf")
    out_dir = Path(_setting(args, manifest, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = _setting(args, manifest, "workers")
    workers = int(workers) if workers is not None else None

    trace_cfg = _trace_config(args, manifest, trace_lower_branch=False)
    cpf_cfg = _cpf_config(args, manifest, stop_at_nose=True)
    results = nminus1_screen(network, direction, method=method,
                             trace_config=trace_cfg, cpf_config=cpf_cfg,
                             workers=workers)

    with open(out_dir / "nminus1.csv", "w", newline="\n") as fh:
        fh.write("branch,lambda_max_dpf,lambda_max_cpf,status,linear_solves\n")
        for r in results:
            dpf = _fmt(r.lambda_max) if r.status == "ok" \
                and method in ("dpf", "both") else ""
            cpf = _fmt(r.lambda_max_cpf) if r.lambda_max_cpf is not None \
                else ""
            fh.write(f"{r.branch},{dpf},{cpf},{r.status},{r.linear_solves}\n")
    n_ok = sum(r.status == "ok" for r in results)
    print(f"{len(results)} contingencies, {n_ok} ok, "
          f"{len(results) - n_ok} not traced")
    return EXIT_OK


def cmd_compare(args):
    curve_a, buses_a = read_curve_csv(args.curve_a)
    curve_b, buses_b = read_curve_csv(args.curve_b)
    if buses_a != buses_b:
        log.error("compare: curve files cover different bus sets")
        return EXIT_PARSE
    a_lo, a_hi = min(curve_a.lambdas()), curve_a.lambda_max
    b_lo, b_hi = min(curve_b.lambdas()), curve_b.lambda_max
    if min(a_hi, b_hi) <= max(a_lo, b_lo):
        log.error("compare: curves have disjoint lambda ranges "
                  "[%g, %g] vs [%g, %g]", a_lo, a_hi, b_lo, b_hi)
        return EXIT_PARSE
    metrics = compare_curves(curve_a, curve_b)
    report = json.dumps(metrics, indent=2, sort_keys=True)
    print(report)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "compare.json", "w", newline="\n") as fh:
            fh.write(report + "\n")
    return EXIT_OK


def cmd_validate(args):
    network = load_case(args.case)
    ymax = float(np.max(np.abs(network.ybus.toarray()))) if network.n < 200 \
        else float(np.max(np.abs(network.ybus.data)))
    print(f"{args.case}: {network.n} buses, {len(network.branches)} branches, "
          f"{len(network.generators)} generators, max |Y| {ymax:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="dpflow",
        description="Trace P-V solution curves of AC power networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--case", help="case file (.m or .json)")
        p.add_argument("--direction", help="'uniform' or a JSON spec file")
        p.add_argument("--method", choices=["dpf", "cpf", "both"])
        p.add_argument("--k", type=int, help="series truncation order")
        p.add_argument("--step", type=float, help="window length")
        p.add_argument("--c1", type=float, help="loading rate (formulation 1)")
        p.add_argument("--c2", type=float, help="voltage rate (formulation 2)")
        p.add_argument("--q-limits", dest="q_limits", action="store_true",
                       default=None, help="enforce generator reactive limits")
        p.add_argument("--out", help="output directory")
        p.add_argument("--manifest", help="JSON run manifest")

    p = sub.add_parser("trace", help="trace the P-V curve of one case")
    add_common(p)
    p.add_argument("--bus", action="append",
                   help="emit pv_<busid>.csv (repeatable)")
    p.add_argument("--verify", action="store_true",
                   help="re-validate every emitted curve row")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("nminus1", help="single-branch contingency sweep")
    add_common(p)
    p.add_argument("--workers", type=int, help="thread-pool size")
    p.set_defaults(func=cmd_nminus1)

    p = sub.add_parser("compare", help="deviation metrics of two curve files")
    p.add_argument("curve_a")
    p.add_argument("curve_b")
    p.add_argument("--out", help="also write compare.json here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="parse a case and build its Ybus")
    p.add_argument("--case", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("DPF_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CaseError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except PowerFlowDiverged as exc:
        log.error("base case power flow diverged: %s", exc)
        return EXIT_INFEASIBLE
    except TraceError as exc:
        log.error("trace failed: %s", exc)
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
