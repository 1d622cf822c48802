"""Voter models on dynamic random graphs: exact simulation and verification."""

__version__ = "0.1.0"

from .patterns import (  # noqa: F401
    LabeledVoterGraph,
    Opinion,
    PatternError,
    SizeLimitError,
    VoterPattern,
    are_isomorphic,
    automorphism_count,
    build_pattern,
    edge_pattern,
    enumerate_labeled_copies,
    format_pattern,
    labeled_copy_count,
    parse_pattern,
    single_vertex_pattern,
)
from .counting import (  # noqa: F401
    CountVector,
    GraphState,
    count_bruteforce,
    count_pattern,
    counts_along_trajectory,
    indicator,
)
from .dynamics import (  # noqa: F401
    EdgeHistory,
    OneWayParams,
    OpinionPath,
    TimeRangeError,
    Trajectory,
    TwoWayParams,
    analytic_p_plus,
    build_one_way_trajectory,
    conditional_edge_prob,
    query_state,
    simulate_opinion_path,
    simulate_two_way,
    vertex_type,
)
from .records import EstimateWithError  # noqa: F401
