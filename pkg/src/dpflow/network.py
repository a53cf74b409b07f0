"""Network data model: buses, branches, generators, admittance matrix.

All electrical quantities are stored per-unit on the system MVA base.
Bus injections follow the generation-minus-load sign convention, so a
growing load shows up as a negative injection change.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np
import scipy.sparse as sp


class CaseError(Exception):
    """Base class for case-file problems."""


class CaseParseError(CaseError):
    """Malformed case text. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseValidationError(CaseError):
    """Structurally valid case that violates a model invariant."""


class BusKind(Enum):
    PQ = 1
    PV = 2
    REF = 3


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_sp: float = 0.0      # net active injection (gen - load), pu
    q_sp: float = 0.0      # net reactive injection, pu
    v_sp: float | None = None   # voltage setpoint, PV/REF only
    e_sp: float | None = None   # real voltage, REF only
    f_sp: float | None = None   # imaginary voltage, REF only
    p_load: float = 0.0    # base-case load, kept for generator accounting
    q_load: float = 0.0
    g_shunt: float = 0.0   # bus shunt admittance, pu
    b_shunt: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    series_r: float
    series_x: float
    shunt_b: float = 0.0
    tap_ratio: float = 1.0
    phase_shift: float = 0.0   # radians
    status: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float
    q_gen: float
    q_min: float
    q_max: float
    v_set: float
    status: bool = True


class PowerNetwork:
    """Validated, immutable network with a cached sparse admittance matrix.

    Bus order in all internal arrays follows the order of ``buses``;
    external bus ids are mapped through ``index_of``.
    """

    def __init__(self, buses, branches, generators, base_mva):
        self.buses = tuple(buses)
        self.branches = tuple(branches)
        self.generators = tuple(generators)
        self.base_mva = float(base_mva)
        self.n = len(self.buses)
        self._index = {b.id: i for i, b in enumerate(self.buses)}
        if len(self._index) != self.n:
            raise CaseValidationError("duplicate bus ids")

        self.kind = np.array([b.kind.value for b in self.buses], dtype=int)
        self.p_sp = np.array([b.p_sp for b in self.buses])
        self.q_sp = np.array([b.q_sp for b in self.buses])
        self.v_sp = np.array([b.v_sp if b.v_sp is not None else np.nan
                              for b in self.buses])
        self.p_load = np.array([b.p_load for b in self.buses])
        self.q_load = np.array([b.q_load for b in self.buses])

        self._validate()
        self.ybus = build_ybus(self)
        ref = int(np.flatnonzero(self.kind == BusKind.REF.value)[0])
        self.ref_index = ref
        self.e_sp = self.buses[ref].e_sp
        self.f_sp = self.buses[ref].f_sp

    # -- basic queries -------------------------------------------------

    def index_of(self, bus_id):
        return self._index[bus_id]

    @property
    def pq_indices(self):
        return np.flatnonzero(self.kind == BusKind.PQ.value)

    @property
    def pv_indices(self):
        return np.flatnonzero(self.kind == BusKind.PV.value)

    def generators_at(self, bus_index):
        bus_id = self.buses[bus_index].id
        return [g for g in self.generators if g.bus == bus_id and g.status]

    # -- validation ----------------------------------------------------

    def _validate(self):
        n_ref = int(np.sum(self.kind == BusKind.REF.value))
        if n_ref != 1:
            raise CaseValidationError(f"expected exactly one REF bus, found {n_ref}")
        for b in self.buses:
            if b.kind in (BusKind.PV, BusKind.REF):
                if b.v_sp is None or b.v_sp <= 0:
                    raise CaseValidationError(f"bus {b.id}: PV/REF bus needs v_sp > 0")
            if b.kind == BusKind.REF and (b.e_sp is None or b.f_sp is None):
                raise CaseValidationError(f"bus {b.id}: REF bus needs e_sp, f_sp")
        for br in self.branches:
            if br.from_bus not in self._index or br.to_bus not in self._index:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus}: unknown bus id")
            if br.status and br.series_r == 0 and br.series_x == 0:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus}: zero series impedance")
            if br.tap_ratio <= 0:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus}: tap_ratio must be > 0")
        for g in self.generators:
            if g.q_min > g.q_max:
                raise CaseValidationError(f"generator at bus {g.bus}: q_min > q_max")
        self._check_connectivity()

    def _check_connectivity(self):
        adj = [[] for _ in range(self.n)]
        for br in self.branches:
            if not br.status:
                continue
            i, j = self._index[br.from_bus], self._index[br.to_bus]
            adj[i].append(j)
            adj[j].append(i)
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            for j in adj[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        if not seen.all():
            lost = [self.buses[i].id for i in np.flatnonzero(~seen)]
            raise CaseValidationError(f"islanded buses: {lost}")

    # -- derived networks ----------------------------------------------

    def with_bus_retyped_pq(self, bus_index, q_sp):
        """Copy of this network with a PV bus re-typed PQ at pinned q_sp."""
        old = self.buses[bus_index]
        if old.kind != BusKind.PV:
            raise ValueError(f"bus {old.id} is not PV")
        new_bus = Bus(id=old.id, kind=BusKind.PQ, p_sp=old.p_sp, q_sp=q_sp,
                      v_sp=None, p_load=old.p_load, q_load=old.q_load,
                      g_shunt=old.g_shunt, b_shunt=old.b_shunt)
        buses = list(self.buses)
        buses[bus_index] = new_bus
        return PowerNetwork(buses, self.branches, self.generators, self.base_mva)

    def without_branch(self, branch_index):
        """Copy with one branch taken out of service (may raise on islanding)."""
        branches = list(self.branches)
        br = branches[branch_index]
        branches[branch_index] = Branch(br.from_bus, br.to_bus, br.series_r,
                                        br.series_x, br.shunt_b, br.tap_ratio,
                                        br.phase_shift, status=False)
        return PowerNetwork(self.buses, branches, self.generators, self.base_mva)

    # -- power flow equations -------------------------------------------

    def injections(self, e, f):
        """Net (P, Q) bus injections implied by the voltage state."""
        v = e + 1j * f
        s = v * np.conj(self.ybus @ v)
        return s.real, s.imag

    def residual(self, e, f, lam, direction):
        """Stacked residual of the loaded power-flow equations.

        Rows come in per-bus pairs following bus order: (P, Q) for PQ buses,
        (P, V) for PV buses and (E, F) for the reference bus, matching the
        row layout of the tracer's coefficient matrix.
        """
        p_calc, q_calc = self.injections(e, f)
        dp = direction.dp if direction is not None else np.zeros(self.n)
        dq = direction.dq if direction is not None else np.zeros(self.n)
        pq = self.kind == BusKind.PQ.value
        pv = self.kind == BusKind.PV.value
        r = np.empty(2 * self.n)
        even, odd = r[::2], r[1::2]
        non_ref = pq | pv
        even[non_ref] = (p_calc - lam * dp - self.p_sp)[non_ref]
        odd[pq] = (q_calc - lam * dq - self.q_sp)[pq]
        odd[pv] = (e ** 2 + f ** 2 - self.v_sp ** 2)[pv]
        i = self.ref_index
        even[i] = e[i] - self.e_sp
        odd[i] = f[i] - self.f_sp
        return r

    def residual_norm(self, e, f, lam, direction):
        return float(np.max(np.abs(self.residual(e, f, lam, direction))))

    # -- serialization ---------------------------------------------------

    def to_case_dict(self):
        """Round-trippable JSON-schema dict (per-unit quantities scaled back)."""
        base = self.base_mva
        kind_name = {1: "PQ", 2: "PV", 3: "REF"}
        bus_rows = []
        for b in self.buses:
            row = {
                "id": b.id,
                "type": kind_name[b.kind.value],
                "pd_mw": b.p_load * base,
                "qd_mvar": b.q_load * base,
                "gs_mw": b.g_shunt * base,
                "bs_mvar": b.b_shunt * base,
            }
            if b.kind == BusKind.REF:
                row["va_deg"] = float(np.degrees(np.arctan2(b.f_sp, b.e_sp)))
            bus_rows.append(row)
        gen_rows = [{
            "bus": g.bus,
            "pg_mw": g.p_gen * base,
            "qg_mvar": g.q_gen * base,
            "qmax_mvar": g.q_max * base,
            "qmin_mvar": g.q_min * base,
            "vg": g.v_set,
            "status": int(g.status),
        } for g in self.generators]
        br_rows = [{
            "from": br.from_bus,
            "to": br.to_bus,
            "r": br.series_r,
            "x": br.series_x,
            "b": br.shunt_b,
            "tap": br.tap_ratio,
            "shift_deg": float(np.degrees(br.phase_shift)),
            "status": int(br.status),
        } for br in self.branches]
        return {"baseMVA": base, "bus": bus_rows, "gen": gen_rows, "branch": br_rows}

    def to_json(self):
        return json.dumps(self.to_case_dict(), indent=2)


def build_ybus(network):
    """Sparse complex bus admittance matrix from branch and shunt data."""
    n = network.n
    idx = network._index
    rows, cols, vals = [], [], []
    for br in network.branches:
        if not br.status:
            continue
        if br.series_r == 0 and br.series_x == 0:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus}: zero series impedance")
        y = 1.0 / complex(br.series_r, br.series_x)
        ysh = 0.5j * br.shunt_b
        t = br.tap_ratio * np.exp(1j * br.phase_shift)
        i, j = idx[br.from_bus], idx[br.to_bus]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [(y + ysh) / (br.tap_ratio ** 2),
                 y + ysh,
                 -y / np.conj(t),
                 -y / t]
    for b in network.buses:
        i = idx[b.id]
        rows.append(i)
        cols.append(i)
        vals.append(complex(b.g_shunt, b.b_shunt))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


@dataclass(frozen=True)
class DirectionVector:
    """Per-bus injection change (dp, dq) defining the continuation direction."""

    dp: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        if not (np.any(self.dp) or np.any(self.dq)):
            raise CaseValidationError("direction vector is all-zero")


def build_direction(network, spec):
    """Build a DirectionVector from a direction specification.

    ``spec`` is either the string ``"uniform"``, or a dict of the form
    ``{"mode": "uniform"}`` /
    ``{"mode": "explicit", "entries": [{"bus": 7, "dp_mw": -50, "dq_mvar": -10}]}``.
    Entries are in MW/MVar with load increases given as negative injections.
    """
    if isinstance(spec, str):
        spec = {"mode": spec}
    mode = spec.get("mode")
    n = network.n
    dp = np.zeros(n)
    dq = np.zeros(n)
    if mode == "uniform":
        # Scale base-case net injections at PQ/PV buses; REF absorbs mismatch.
        non_ref = network.kind != BusKind.REF.value
        dp[non_ref] = network.p_sp[non_ref]
        pq = network.kind == BusKind.PQ.value
        dq[pq] = network.q_sp[pq]
    elif mode == "explicit":
        entries = spec.get("entries", [])
        for ent in entries:
            i = network.index_of(int(ent["bus"]))
            dp[i] += float(ent.get("dp_mw", 0.0)) / network.base_mva
            dq[i] += float(ent.get("dq_mvar", 0.0)) / network.base_mva
        dp[network.kind == BusKind.REF.value] = 0.0
        dq[network.kind != BusKind.PQ.value] = 0.0
    else:
        raise CaseValidationError(f"unknown direction mode: {mode!r}")
    return DirectionVector(dp=dp, dq=dq)


# ---------------------------------------------------------------------------
# Case parsing
# ---------------------------------------------------------------------------

# MATPOWER column meanings for the subset we read.
_BUS_COLS = 13      # BUS_I TYPE PD QD GS BS AREA VM VA BASE_KV ZONE VMAX VMIN
_GEN_COLS = 10      # GEN_BUS PG QG QMAX QMIN VG MBASE GEN_STATUS PMAX PMIN
_BR_COLS = 11       # F_BUS T_BUS R X B RATE_A RATE_B RATE_C TAP SHIFT BR_STATUS


def parse_case(text):
    """Parse case text in either the JSON schema or the MATPOWER .m subset."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_case_json(text)
    return _parse_case_matpower(text)


def load_case(path):
    with open(path) as fh:
        return parse_case(fh.read())


def _assemble_network(base_mva, bus_rows, gen_rows, branch_rows):
    """Common construction from (already numeric) MATPOWER-style tables."""
    if base_mva <= 0:
        raise CaseValidationError("baseMVA must be positive")
    gens = []
    gen_bus_ids = set()
    for row in gen_rows:
        status = row[7] > 0 if len(row) > 7 else True
        g = Generator(bus=int(row[0]),
                      p_gen=row[1] / base_mva,
                      q_gen=row[2] / base_mva,
                      q_max=row[3] / base_mva,
                      q_min=row[4] / base_mva,
                      v_set=row[5],
                      status=bool(status))
        gens.append(g)
        if g.status:
            gen_bus_ids.add(g.bus)

    buses = []
    type_map = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.REF}
    for row in bus_rows:
        bus_id = int(row[0])
        try:
            kind = type_map[int(row[1])]
        except KeyError:
            raise CaseValidationError(f"bus {bus_id}: unknown bus type {row[1]}")
        pd, qd = row[2] / base_mva, row[3] / base_mva
        gs, bs = row[4] / base_mva, row[5] / base_mva
        va = np.radians(row[8]) if len(row) > 8 else 0.0
        # A PV/REF bus with no in-service generator cannot hold its voltage.
        if kind == BusKind.PV and bus_id not in gen_bus_ids:
            kind = BusKind.PQ
        pg = sum(g.p_gen for g in gens if g.bus == bus_id and g.status)
        qg = sum(g.q_gen for g in gens if g.bus == bus_id and g.status)
        vset = next((g.v_set for g in gens if g.bus == bus_id and g.status), None)
        if kind == BusKind.PQ:
            buses.append(Bus(bus_id, kind, p_sp=pg - pd, q_sp=qg - qd,
                             p_load=pd, q_load=qd, g_shunt=gs, b_shunt=bs))
        elif kind == BusKind.PV:
            buses.append(Bus(bus_id, kind, p_sp=pg - pd, v_sp=vset,
                             p_load=pd, q_load=qd, g_shunt=gs, b_shunt=bs))
        else:
            vm = vset if vset is not None else (row[7] if len(row) > 7 else 1.0)
            buses.append(Bus(bus_id, kind, v_sp=vm,
                             e_sp=vm * np.cos(va), f_sp=vm * np.sin(va),
                             p_load=pd, q_load=qd, g_shunt=gs, b_shunt=bs))

    branches = []
    for row in branch_rows:
        tap = row[8] if len(row) > 8 and row[8] != 0 else 1.0
        shift = np.radians(row[9]) if len(row) > 9 else 0.0
        status = row[10] > 0 if len(row) > 10 else True
        branches.append(Branch(from_bus=int(row[0]), to_bus=int(row[1]),
                               series_r=row[2], series_x=row[3], shunt_b=row[4],
                               tap_ratio=tap, phase_shift=shift,
                               status=bool(status)))
    return PowerNetwork(buses, branches, gens, base_mva)


def _parse_case_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(str(exc), line=exc.lineno)
    try:
        base = float(doc["baseMVA"])
        bus_rows = []
        type_code = {"PQ": 1, "PV": 2, "REF": 3}
        for b in doc["bus"]:
            bus_rows.append([b["id"], type_code[b["type"]],
                             b.get("pd_mw", 0.0), b.get("qd_mvar", 0.0),
                             b.get("gs_mw", 0.0), b.get("bs_mvar", 0.0),
                             1, b.get("vm", 1.0), b.get("va_deg", 0.0)])
        gen_rows = []
        for g in doc.get("gen", []):
            gen_rows.append([g["bus"], g.get("pg_mw", 0.0), g.get("qg_mvar", 0.0),
                             g.get("qmax_mvar", 0.0), g.get("qmin_mvar", 0.0),
                             g.get("vg", 1.0), base, g.get("status", 1)])
        br_rows = []
        for br in doc["branch"]:
            br_rows.append([br["from"], br["to"], br["r"], br["x"],
                            br.get("b", 0.0), 0, 0, 0,
                            br.get("tap", 0.0), br.get("shift_deg", 0.0),
                            br.get("status", 1)])
    except (KeyError, TypeError) as exc:
        raise CaseParseError(f"missing or malformed field: {exc}")
    return _assemble_network(base, bus_rows, gen_rows, br_rows)


_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


def _parse_case_matpower(text):
    """Read the mpc.bus / mpc.gen / mpc.branch tables from a MATPOWER .m file.

    Comments and simple expressions are tolerated; function wrappers and any
    other assignments (gencost, bus names, ...) are skipped.
    """
    lines = text.splitlines()
    tables = {}
    base_mva = None
    i = 0
    while i < len(lines):
        line = lines[i].split("%", 1)[0]
        m = re.search(r"mpc\.baseMVA\s*=\s*([\d.eE+-]+)", line)
        if m:
            base_mva = float(m.group(1))
        m = _MATRIX_RE.search(line)
        if m and m.group(1) in ("bus", "gen", "branch"):
            name = m.group(1)
            rows = []
            rest = line[m.end():]
            j = i
            closed = False
            while j < len(lines):
                chunk = rest if j == i else lines[j].split("%", 1)[0]
                if "]" in chunk:
                    chunk = chunk.split("]", 1)[0]
                    closed = True
                for stmt in chunk.split(";"):
                    nums = _NUMBER_RE.findall(stmt)
                    if nums:
                        rows.append([float(x) for x in nums])
                if closed:
                    break
                j += 1
            if not closed:
                raise CaseParseError(f"unterminated mpc.{name} matrix", line=i + 1)
            width = len(rows[0]) if rows else 0
            for r, row in enumerate(rows):
                if len(row) != width:
                    raise CaseParseError(
                        f"ragged row in mpc.{name}", line=i + 1 + r)
            tables[name] = rows
            i = j
        i += 1
    if base_mva is None:
        raise CaseParseError("missing mpc.baseMVA")
    for name in ("bus", "gen", "branch"):
        if name not in tables:
            raise CaseParseError(f"missing mpc.{name} table")
    return _assemble_network(base_mva, tables["bus"], tables["gen"],
                             tables["branch"])
