"""Placement/scheduling scenarios for prefill and decode."""

from __future__ import annotations

import enum

from .model import ModelSpec


class Scenario(enum.Enum):
    WD = "wd"              # duplicated weights: host-friendly + PIM-aware copies
    FACIL_O = "facil_o"    # oracle controller translation, single PIM-aware copy
    S_DDB = "s_ddb"        # double-buffered swizzled prefetch
    S_OWR = "s_owr"        # serial swizzled copy before each layer
    C_GEMM = "c_gemm"      # cacheable weights, no PIM (baseline)
    NC_GEMM = "nc_gemm"    # non-cacheable weights for host GEMM, PIM decode

    @property
    def uses_pim_decode(self) -> bool:
        return self is not Scenario.C_GEMM

    def buffer_bytes(self, model: ModelSpec) -> int:
        """Cacheable staging buffer: two FF-sized buffers for DDB, one for OWR."""
        if self is Scenario.S_DDB:
            return 2 * model.ff_bytes
        if self is Scenario.S_OWR:
            return model.ff_bytes
        return 0
