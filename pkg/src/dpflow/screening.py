"""N-1 contingency screening: loading margin after each single-branch loss.

Each contingency runs an independent trace against an immutable copy of
the base network with one branch out of service, so the sweep can fan
out across a thread pool; results are always reported in branch order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .cpf import CPFConfig, cpf_trace
from .network import CaseValidationError
from .newton import PowerFlowDiverged
from .tracer import TraceConfig, TraceError, trace_curve

log = logging.getLogger("dpflow.screening")

__all__ = ["ContingencyResult", "nminus1_screen"]


@dataclass
class ContingencyResult:
    branch: str                       # "from-to" label of the removed branch
    status: str                       # "ok", "infeasible_base", "incomplete"
    lambda_max: float | None = None
    lambda_max_cpf: float | None = None
    linear_solves: int = 0

    def __post_init__(self):
        if (self.lambda_max is not None) != (self.status == "ok"):
            raise ValueError("lambda_max present iff status is ok")


def _run_one(network, direction, branch_index, method, trace_config,
             cpf_config):
    br = network.branches[branch_index]
    label = f"{br.from_bus}-{br.to_bus}"
    try:
        contingency = network.without_branch(branch_index)
    except CaseValidationError as exc:
        log.info("contingency %s islands the network: %s", label, exc)
        return ContingencyResult(branch=label, status="infeasible_base")

    lam_dpf = lam_cpf = None
    solves = 0
    try:
        if method in ("dpf", "both"):
            curve = trace_curve(contingency, direction, trace_config)
            solves += curve.linear_solves
            if not curve.complete:
                return ContingencyResult(branch=label, status="incomplete",
                                         linear_solves=solves)
            lam_dpf = curve.lambda_max
        if method in ("cpf", "both"):
            curve = cpf_trace(contingency, direction, cpf_config)
            solves += curve.linear_solves
            if not curve.complete:
                return ContingencyResult(branch=label, status="incomplete",
                                         linear_solves=solves)
            lam_cpf = curve.lambda_max
    except (TraceError, PowerFlowDiverged) as exc:
        # base case unsolvable without this branch
        log.info("contingency %s infeasible: %s", label, exc)
        return ContingencyResult(branch=label, status="infeasible_base",
                                 linear_solves=solves)
    return ContingencyResult(branch=label, status="ok",
                             lambda_max=lam_dpf if lam_dpf is not None
                             else lam_cpf,
                             lambda_max_cpf=lam_cpf, linear_solves=solves)


def nminus1_screen(network, direction, method="dpf", trace_config=None,
                   cpf_config=None, workers=None):
    """Loading margin for the loss of each in-service branch.

    Returns a list of ContingencyResult in branch-table order regardless
    of completion order. ``method`` is "dpf", "cpf" or "both".
    """
    if method not in ("dpf", "cpf", "both"):
        raise ValueError(f"unknown method {method!r}")
    trace_config = trace_config or TraceConfig(trace_lower_branch=False)
    cpf_config = cpf_config or CPFConfig(stop_at_nose=True)
    indices = [i for i, br in enumerate(network.branches) if br.status]

    if workers == 1:
        results = [_run_one(network, direction, i, method, trace_config,
                            cpf_config) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, network, direction, i, method,
                                   trace_config, cpf_config)
                       for i in indices]
            results = [fu.result() for fu in futures]
    return results
