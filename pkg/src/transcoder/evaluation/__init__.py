from .flops import flop_table, matches_display
from .histogram import DistanceHistogram, distance_histogram, pair_distances
from .montecarlo import (EvalRecord, EvaluationError, PipelineConfig, StopRule, bler_point, monte_carlo,
                         simulate_chunk)
from .results import COLUMNS, ResultsError, read_results, write_results

__all__ = [
    "COLUMNS", "DistanceHistogram", "EvalRecord", "EvaluationError", "PipelineConfig", "ResultsError",
    "StopRule", "bler_point", "distance_histogram", "flop_table", "matches_display", "monte_carlo",
    "pair_distances", "read_results", "simulate_chunk", "write_results",
]
