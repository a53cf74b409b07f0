"""Synthetic large test networks built by tiling a validated base case.

Real transmission models of a few thousand buses are not redistributable
here, so scale testing uses a ring of coupled copies of a mid-size case:
every copy keeps its internal structure (and therefore realistic local
physics) while tie lines make the assembly one synchronous network with
a single reference bus.
"""

from __future__ import annotations

from .network import PowerNetwork, parse_case

import json

__all__ = ["tiled_network"]


def tiled_network(base: PowerNetwork, copies: int, load_scale: float = 1.0,
                  tie_x: float = 0.02) -> PowerNetwork:
    """Ring of ``copies`` replicas of ``base`` joined by tie lines.

    Bus ids of copy c are offset by c * 1000 (the base case must use ids
    below 1000). Only copy 0 keeps its reference bus; the other copies'
    reference buses become PV buses backed by the same generator.
    ``load_scale`` multiplies every load and generation setpoint, which
    moves the assembly closer to its loadability limit.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    src = base.to_case_dict()
    max_id = max(b["id"] for b in src["bus"])
    if max_id >= 1000:
        raise ValueError("base case bus ids must be < 1000")
    # tie each copy to the next at two corner buses for a meshed ring
    tie_a, tie_b = src["bus"][0]["id"], src["bus"][-1]["id"]

    out = {"baseMVA": src["baseMVA"], "bus": [], "gen": [], "branch": []}
    for c in range(copies):
        off = c * 1000
        for b in src["bus"]:
            row = dict(b)
            row["id"] = b["id"] + off
            row["pd_mw"] = b["pd_mw"] * load_scale
            row["qd_mvar"] = b["qd_mvar"] * load_scale
            if c > 0 and b["type"] == "REF":
                row["type"] = "PV"
                row.pop("va_deg", None)
            out["bus"].append(row)
        for g in src["gen"]:
            row = dict(g)
            row["bus"] = g["bus"] + off
            row["pg_mw"] = g["pg_mw"] * load_scale
            row["qg_mvar"] = g["qg_mvar"] * load_scale
            row["qmax_mvar"] = g["qmax_mvar"] * load_scale
            row["qmin_mvar"] = g["qmin_mvar"] * load_scale
            out["gen"].append(row)
        for br in src["branch"]:
            row = dict(br)
            row["from"] = br["from"] + off
            row["to"] = br["to"] + off
            out["branch"].append(row)
    for c in range(copies if copies > 2 else copies - 1):
        off, nxt = c * 1000, ((c + 1) % copies) * 1000
        out["branch"].append({"from": tie_a + off, "to": tie_a + nxt,
                              "r": tie_x / 10, "x": tie_x, "b": 0.0,
                              "tap": 0.0, "shift_deg": 0.0, "status": 1})
        out["branch"].append({"from": tie_b + off, "to": tie_b + nxt,
                              "r": tie_x / 10, "x": tie_x, "b": 0.0,
                              "tap": 0.0, "shift_deg": 0.0, "status": 1})
    return parse_case(json.dumps(out))
