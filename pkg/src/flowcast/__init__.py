"""Flow-data preparation and block-sequential bit-rate classification."""
from .aggregate import AggregateConfig, FlowEntry, aggregate_block
from .anonymize import AnonKey, derive_key
from .dnn import Classifier, Hyperparams
from .encode import ALL, FIVE_TUPLE, ClassBoundaries, Samples, build_matrix, build_vector
from .enrich import LookupTables
from .ingest import FlowRecord, read_records
from .trainer import enumerate_grid, train_sequential

__version__ = "0.1.0"

__all__ = [
    "ALL", "FIVE_TUPLE", "AggregateConfig", "AnonKey", "ClassBoundaries", "Classifier",
    "FlowEntry", "FlowRecord", "Hyperparams", "LookupTables", "Samples", "aggregate_block",
    "build_matrix", "build_vector", "derive_key", "enumerate_grid", "read_records",
    "train_sequential",
]
