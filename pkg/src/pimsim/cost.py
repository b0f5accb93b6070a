"""Analytical and calibrated latency / bandwidth / capacity models.

Two modes:

* ``ANALYTICAL`` works in exact rational t-units, where ``t`` is the time
  of one weight stream from DRAM.  GEMM costs ``max(1, SL/4) * t``
  (arithmetic intensity ~4 FLOP/B on the target CPU) and an online
  rearrangement costs three DRAM transactions: a read of the
  non-cacheable source, a read of the destination into cache, and a
  write back to DRAM.
* ``CALIBRATED`` uses measured-style parameters for a Galaxy S24+ class
  device and returns seconds.

The calibrated swizzled-copy bandwidths are fitted constants: observed
copies out of a non-cacheable region run about twice as slow as
cacheable-to-cacheable movement and a two-thread copy does not saturate
DRAM bandwidth, so the three-transaction model substantially
overestimates the achievable rate.  Both knobs are exposed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import ConfigError
from .model import ModelSpec
from .scenario import Scenario

GB = 1e9
ANALYTICAL_FLOP_PER_BYTE = 4
ONLINE_REARRANGE_TRANSACTIONS = 3
OVERHEAD_TABLE_SL = ("1-4", 8, 16, 32, 64, 128, 192)


class CostMode(enum.Enum):
    ANALYTICAL = "analytical"
    CALIBRATED = "calibrated"


@dataclass(frozen=True)
class HardwareSpec:
    """Host + PIM system parameters (defaults: Galaxy S24+ class device).

    Bandwidths are in GB/s (1e9 bytes/s), compute in GFLOP/s.
    ``gemm_effective_gflops`` is the sustained GEMM rate of the four cores
    assigned to compute, well below the 321 GFLOPS six-core peak.
    ``nc_stream_bw_gbps`` is the effective rate of a host GEMM streaming
    weights straight from a non-cacheable region (no reuse, no prefetch).
    """

    peak_gflops: float = 321.0
    dram_bw_gbps: float = 68.264
    flop_per_byte: float = 4.7
    pim_bw_multiplier: float = 8.0
    gemm_effective_gflops: float = 107.0
    smc_bw_2agents_gbps: float = 2.87
    smc_bw_4agents_gbps: float = 4.25
    nc_read_penalty: float = 2.0
    nc_stream_bw_gbps: float = 2.87
    host_overhead_per_token: float = 0.0
    host_attn_seconds_per_layer: float = 0.0
    smc_bw_override_gbps: float | None = None

    def __post_init__(self):
        for name in ("peak_gflops", "dram_bw_gbps", "flop_per_byte",
                     "pim_bw_multiplier", "gemm_effective_gflops",
                     "smc_bw_2agents_gbps", "smc_bw_4agents_gbps",
                     "nc_read_penalty", "nc_stream_bw_gbps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.gemm_effective_gflops > self.peak_gflops:
            raise ConfigError("gemm_effective_gflops exceeds peak_gflops")
        if self.host_overhead_per_token < 0 or self.host_attn_seconds_per_layer < 0:
            raise ConfigError("latency terms must be non-negative")

    def smc_bw_gbps(self, agents: int) -> float:
        if self.smc_bw_override_gbps is not None:
            return self.smc_bw_override_gbps
        if agents == 2:
            return self.smc_bw_2agents_gbps
        if agents == 4:
            return self.smc_bw_4agents_gbps
        raise ConfigError(f"no calibrated copy bandwidth for {agents} agents; "
                          "set smc_bw_override_gbps")

    def with_(self, **kwargs) -> "HardwareSpec":
        return replace(self, **kwargs)


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def gemm_time(bytes_: int, params: int, sl: int, hw: HardwareSpec,
              mode: CostMode = CostMode.CALIBRATED):
    """GEMM latency: t-units (Fraction) in analytical mode, seconds otherwise.

    Calibrated GEMM is the roofline max of streaming the weights once and
    computing 2*SL*params FLOPs at the sustained rate.
    """
    if sl < 1:
        raise ConfigError("sl must be >= 1")
    if mode is CostMode.ANALYTICAL:
        return max(Fraction(1), Fraction(sl, ANALYTICAL_FLOP_PER_BYTE))
    if params == 0 or bytes_ == 0:
        return 0.0
    stream = bytes_ / (hw.dram_bw_gbps * GB)
    compute = 2.0 * sl * params / (hw.gemm_effective_gflops * GB)
    return max(stream, compute)


def smc_time(bytes_: int, agents: int, hw: HardwareSpec,
             mode: CostMode = CostMode.CALIBRATED):
    """Swizzled-copy latency: a constant 3 t-units analytically, or the
    copied bytes over the calibrated per-agent-count bandwidth."""
    if mode is CostMode.ANALYTICAL:
        return Fraction(ONLINE_REARRANGE_TRANSACTIONS)
    return bytes_ / (hw.smc_bw_gbps(agents) * GB)


@dataclass(frozen=True)
class OverheadRow:
    sl_label: str
    gemm_t: Fraction
    dram_t: Fraction
    online_t: Fraction
    sum_t: Fraction
    sum_pct: int
    max_t: Fraction
    max_pct: int


def rearrangement_overhead_table(hw: HardwareSpec | None = None) -> list[OverheadRow]:
    """Online-rearrangement overhead versus GEMM across input lengths,
    in exact t-units, for serial (SUM) and overlapped (MAX) execution."""
    rows = []
    for sl in OVERHEAD_TABLE_SL:
        sl_value = 4 if sl == "1-4" else sl
        gemm = max(Fraction(1), Fraction(sl_value, ANALYTICAL_FLOP_PER_BYTE))
        online = Fraction(ONLINE_REARRANGE_TRANSACTIONS)
        total = gemm + online
        peak = max(gemm, online)
        rows.append(OverheadRow(
            sl_label=str(sl),
            gemm_t=gemm,
            dram_t=Fraction(1),
            online_t=online,
            sum_t=total,
            sum_pct=_round_half_up(100 * total / gemm),
            max_t=peak,
            max_pct=_round_half_up(100 * peak / gemm),
        ))
    return rows


def capacity_report(model: ModelSpec, scenario: Scenario, pim_bytes: int,
                    host_bytes: int | None = None) -> dict:
    """DRAM capacity needed by one scenario and its savings versus
    weight duplication (WD keeps both copies)."""
    host = model.host_bytes() if host_bytes is None else host_bytes
    padding = pim_bytes - host
    buffer_bytes = scenario.buffer_bytes(model)
    weights = {
        Scenario.WD: host + pim_bytes,
        Scenario.FACIL_O: pim_bytes,
        Scenario.S_DDB: pim_bytes,
        Scenario.S_OWR: pim_bytes,
        Scenario.C_GEMM: host,
        Scenario.NC_GEMM: pim_bytes,
    }[scenario]
    total = weights + buffer_bytes
    wd_total = host + pim_bytes
    return {
        "scenario": scenario.value,
        "weights_bytes": weights,
        "padding_bytes": padding,
        "buffer_bytes": buffer_bytes,
        "total_bytes": total,
        "savings_vs_wd_pct": 100.0 * (1.0 - total / wd_total) if wd_total else 0.0,
    }


def capacity_summary(model: ModelSpec, pim_bytes: int,
                     host_bytes: int | None = None) -> dict:
    return {s.value: capacity_report(model, s, pim_bytes, host_bytes)
            for s in Scenario}


def decode_token_time(model: ModelSpec, hw: HardwareSpec, use_pim: bool,
                      pim_bytes: int | None = None,
                      host_bytes: int | None = None) -> float:
    """Seconds per generated token: the decode GEMVs stream every linear
    weight once per token, at PIM-boosted bandwidth when enabled."""
    if use_pim:
        bytes_ = model.host_bytes() if pim_bytes is None else pim_bytes
        bw = hw.dram_bw_gbps * GB * hw.pim_bw_multiplier
    else:
        bytes_ = model.host_bytes() if host_bytes is None else host_bytes
        bw = hw.dram_bw_gbps * GB
    return bytes_ / bw + hw.host_overhead_per_token
