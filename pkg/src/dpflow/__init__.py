"""Power-flow solution-curve tracing without Newton iterations.

The package traces P-V solution curves versus a scalar loading parameter
by embedding the power-flow equations in a fictitious dynamic system and
expanding the trajectory as a power series, one sparse factorization per
time window. A conventional predictor-corrector continuation solver is
included as an independent cross-check.
"""

from .curves import (CurvePoint, QLimitEvent, Segment, SolutionCurve,
                     compare_curves)
from .cpf import CPFConfig, cpf_trace
from .network import (Branch, Bus, BusKind, CaseError, CaseParseError,
                      CaseValidationError, DirectionVector, Generator,
                      PowerNetwork, build_direction, build_ybus, load_case,
                      parse_case)
from .newton import (NRConfig, PowerFlowDiverged, flat_state,
                     generator_reactive_output, newton_power_flow)
from .screening import ContingencyResult, nminus1_screen
from .series import ConvLinearization, conv, eval_series, linearize_conv
from .tracer import (LinearBlocks, NosePointSingularity, SeriesTable,
                     TraceConfig, TraceError, trace_curve, trace_window)

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "BusKind", "CaseError", "CaseParseError",
    "CaseValidationError", "ContingencyResult", "ConvLinearization",
    "CPFConfig", "CurvePoint", "DirectionVector", "Generator",
    "LinearBlocks", "NosePointSingularity", "NRConfig", "PowerFlowDiverged",
    "PowerNetwork", "QLimitEvent", "Segment", "SeriesTable", "SolutionCurve",
    "TraceConfig", "TraceError", "build_direction", "build_ybus",
    "compare_curves", "conv", "cpf_trace", "eval_series", "flat_state",
    "generator_reactive_output", "linearize_conv", "load_case",
    "newton_power_flow", "nminus1_screen", "parse_case", "trace_curve",
    "trace_window",
]
