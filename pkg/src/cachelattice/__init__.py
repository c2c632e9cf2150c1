"""Associativity-lattice cache miss models and lattice loop tiling."""

__version__ = "0.1.0"

from .core import (CacheSpec, IndexMap, Table, base_point, make_affine, make_column_major,
                   make_index_map, make_row_major, set_index, will_contain_misses)
from .domain import (IterationDomain, IterationOrder, Operand, builtin_domain, distance,
                     reuse_domain, subsequent_reuse)
from .errors import (CacheLatticeError, ConfigError, DomainError, InfeasibleAnalysis,
                     InvalidArgument, InvariantViolation, SizeError)
from .lattice import (ConflictLattice, build_lattices, conflict_set, enumerate_conflicts,
                      lattice_basis, lattice_from_basis, reduce_basis)
from .model import classify, count_misses, count_misses_direct, count_misses_tiled
from .cachesim import gen_trace, restrict_report, simulate
from .tiling import (TileSystem, TilingPlan, choose_plan, footpoints, lattice_tiles_from,
                     max_rectangle, tile_points)
from .codegen import build_schedule, emit_c, interpret

__all__ = [
    "CacheSpec", "IndexMap", "Table", "base_point", "make_affine", "make_column_major",
    "make_index_map", "make_row_major", "set_index", "will_contain_misses",
    "IterationDomain", "IterationOrder", "Operand", "builtin_domain", "distance",
    "reuse_domain", "subsequent_reuse",
    "CacheLatticeError", "ConfigError", "DomainError", "InfeasibleAnalysis", "InvalidArgument",
    "InvariantViolation", "SizeError",
    "ConflictLattice", "build_lattices", "conflict_set", "enumerate_conflicts", "lattice_basis",
    "lattice_from_basis", "reduce_basis",
    "classify", "count_misses", "count_misses_direct", "count_misses_tiled",
    "gen_trace", "restrict_report", "simulate",
    "TileSystem", "TilingPlan", "choose_plan", "footpoints", "lattice_tiles_from",
    "max_rectangle", "tile_points",
    "build_schedule", "emit_c", "interpret",
]
