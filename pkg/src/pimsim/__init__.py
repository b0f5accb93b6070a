"""Functional + analytical simulator for PIM-enabled LPDDR inference.

Models a mobile memory system in which GEMV accumulation is triggered by
DRAM read commands: address-mapped weight placement, cacheable vs
non-cacheable regions, swizzled memory copies, a command-trace-driven
PIM GEMV engine, and calibrated capacity/latency reproduction of
prefill/decode scheduling strategies.
"""

from .bf16 import decode as bf16_decode
from .bf16 import encode as bf16_encode
from .cost import (CostMode, HardwareSpec, capacity_report, capacity_summary,
                   decode_token_time, gemm_time, rearrangement_overhead_table,
                   smc_time)
from .dram import AddressMap, DramCoord, DramGeometry, default_field_order
from .engine import GemvJob, GemvResult, IntegrityReport, PimGemvEngine, PimMode
from .errors import (AttributeViolation, CapacityError, ConfigError,
                     GeometryError, RegionError, SimulatorError, StagingError)
from .layout import (PaddedSizeReport, PimImage, PimPlacement, WeightMatrix,
                     convert_to_pim_aware, model_placements, padded_size,
                     smc_copy, unswizzle)
from .memsys import (Attribute, CacheConfig, MemoryRegion, MemorySystem,
                     RegionKind, Source, TraceRecord)
from .model import MatrixShape, ModelSpec
from .runtime import (PrefillResult, Segment, Timeline, build_ddb_schedule,
                      ddb_hiding_crossover, linear_stack_outputs, run_decode,
                      run_end_to_end, run_prefill, speedup_grid)
from .scenario import Scenario

__version__ = "0.1.0"

__all__ = [
    "AddressMap", "Attribute", "AttributeViolation", "CacheConfig",
    "CapacityError", "ConfigError", "CostMode", "DramCoord", "DramGeometry",
    "GemvJob", "GemvResult", "GeometryError", "HardwareSpec",
    "IntegrityReport", "MatrixShape", "MemoryRegion", "MemorySystem",
    "ModelSpec", "PaddedSizeReport", "PimGemvEngine", "PimImage", "PimMode",
    "PimPlacement", "PrefillResult", "RegionError", "RegionKind", "Scenario",
    "Segment", "SimulatorError", "Source", "StagingError", "Timeline",
    "TraceRecord", "WeightMatrix", "bf16_decode", "bf16_encode",
    "build_ddb_schedule", "capacity_report", "capacity_summary",
    "convert_to_pim_aware", "ddb_hiding_crossover", "decode_token_time",
    "default_field_order", "gemm_time", "linear_stack_outputs",
    "model_placements", "padded_size", "rearrangement_overhead_table",
    "run_decode", "run_end_to_end", "run_prefill", "smc_copy", "smc_time",
    "speedup_grid", "unswizzle",
]
