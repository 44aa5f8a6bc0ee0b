"""Approximate membership filters that grow with their input."""
from .amq_fixed import AmqConfig, Bloom, SigSet, amq_new
from .chain import ChainFilter
from .compact_dict import DictConfig, LevelDict
from .deamortized import DeamortizedFilter
from .deletions import DeletionFilter
from .errors import (AllocationError, CapacityError, ImproperDeletionError, InvariantError,
                     LevelOverflowError, ParameterError, StaleCursorError, UniverseExhaustedError)
from .grow import BucketedGrowFilter, GrowConfig, GrowFilter
from .harness import RunSpec, bench, make_filter, run_fpr, run_space, run_verify
from .hashing import HashParams, Trit, derive_params
from .oracle import StreamLog

__all__ = [
    "AmqConfig", "Bloom", "SigSet", "amq_new", "ChainFilter", "DictConfig", "LevelDict",
    "DeamortizedFilter", "DeletionFilter", "AllocationError", "CapacityError",
    "ImproperDeletionError", "InvariantError", "LevelOverflowError", "ParameterError",
    "StaleCursorError", "UniverseExhaustedError", "BucketedGrowFilter", "GrowConfig", "GrowFilter",
    "RunSpec", "bench", "make_filter", "run_fpr", "run_space", "run_verify", "HashParams", "Trit",
    "derive_params", "StreamLog",
]
