"""Self-tuning beam search over incrementally built neighbor graphs."""

from .beam import BeamParams, SearchResult, VisitedSet, beam_search, knn_fitness
from .config import Configuration
from .errors import DataError, UsageError
from .graph import (
    SearchGraph,
    append_batch,
    insert_one,
    neighborhood_size,
    sat_reduce,
    search,
    select_hints,
    should_reoptimize,
)
from .metric import MetricKind, VectorDataset, distance, normalize_in_place
from .pqueue import BoundedResultSet

__version__ = "0.1.0"
