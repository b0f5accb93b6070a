"""Prefill/decode orchestration over a decoder-layer stack.

Prefill timelines are produced by a deterministic two-agent schedule:
a compute agent running the per-matrix GEMMs and a copy agent running
swizzled memory copies out of the non-cacheable weight region.

Double buffering (S_DDB) follows a fixed per-layer plan: the four
attention projections (preloaded into buffer 0 before the first layer)
compute while the first feed-forward matrix is copied in four equal
quarters (one per projection); each feed-forward GEMM then covers the
copy of the next matrix, and the last one covers the preload of the next
layer's projections.  A copy chunk may not start before its paired
compute segment (its target buffer only frees up then) and the two
agents synchronize once per layer.  Copies are never issued during the
fixed attention/normalization segments.  The output head is pipelined
against its own copy at buffer-half granularity.

Serial rearrangement (S_OWR) copies each layer in full (four copy
agents) immediately before its GEMMs, so its time-to-first-token equals
the compute-only schedule plus the total copy time, exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cost import (CostMode, HardwareSpec, decode_token_time, gemm_time,
                   smc_time)
from .errors import ConfigError
from .model import ModelSpec
from .scenario import Scenario

DDB_COPY_AGENTS = 2
OWR_COPY_AGENTS = 4
FF0_COPY_QUARTERS = 4


@dataclass(frozen=True)
class Segment:
    agent: str
    role: str  # "copy" or "compute"
    tag: str   # e.g. "layer3.ff1"
    start: float
    end: float
    buffer: int | None = None

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Timeline:
    segments: list = field(default_factory=list)

    @property
    def end(self) -> float:
        return max((s.end for s in self.segments), default=0.0)

    def agent_segments(self, agent: str) -> list[Segment]:
        return [s for s in self.segments if s.agent == agent]

    def validate(self):
        """Segments of one agent must never overlap."""
        for agent in {s.agent for s in self.segments}:
            segs = sorted(self.agent_segments(agent), key=lambda s: s.start)
            for a, b in zip(segs, segs[1:]):
                if b.start < a.end - 1e-12:
                    raise ConfigError(f"overlapping segments for {agent}: "
                                      f"{a.tag} and {b.tag}")

    def to_json(self) -> str:
        rows = [{"agent": s.agent, "role": s.role, "layer": s.tag,
                 "start": s.start, "end": s.end, "buffer": s.buffer}
                for s in sorted(self.segments, key=lambda s: (s.start, s.agent))]
        return json.dumps(rows, sort_keys=True)


@dataclass
class PrefillResult:
    scenario: Scenario
    sl: int
    ttft: float | Fraction
    timeline: Timeline | None
    breakdown: dict


@dataclass
class DecodeResult:
    scenario: Scenario
    out_len: int
    token_seconds: float
    tps: float
    total_seconds: float


# ----------------------------------------------------------------------
# Per-layer schedule structure
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _PlanSegment:
    tag: str
    compute_seconds: float
    copy_bytes: float      # paired copy load (0 for none)
    copy_tag: str
    is_copy_window: bool   # False for attention/normalization segments


def _matrix_seconds(params: int, sl: int, hw: HardwareSpec,
                    eb: int) -> float:
    return gemm_time(params * eb, params, sl, hw, CostMode.CALIBRATED)


def layer_plan(model: ModelSpec, hw: HardwareSpec, sl: int,
               layer: int) -> list[_PlanSegment]:
    """Compute segments of one decoder layer with their paired DDB copy loads."""
    eb = model.element_bytes
    mats = {m.name: m for m in model.layer_matrices()}
    t = {name: _matrix_seconds(m.params(), sl, hw, eb)
         for name, m in mats.items()}
    nbytes = {name: m.params() * eb for name, m in mats.items()}
    qkvo_bytes = sum(nbytes[n] for n in ("q", "k", "v", "o"))
    quarter = nbytes["ff0"] / FF0_COPY_QUARTERS
    last = layer == model.layers - 1
    prefix = f"layer{layer}."
    segs = []
    if hw.host_attn_seconds_per_layer > 0:
        segs.append(_PlanSegment(prefix + "attn", hw.host_attn_seconds_per_layer,
                                 0.0, "", False))
    for name in ("q", "k", "v", "o"):
        segs.append(_PlanSegment(prefix + name, t[name], quarter,
                                 prefix + "ff0", True))
    segs.append(_PlanSegment(prefix + "ff0", t["ff0"], nbytes["ff1"],
                             prefix + "ff1", True))
    segs.append(_PlanSegment(prefix + "ff1", t["ff1"], nbytes["ff2"],
                             prefix + "ff2", True))
    next_copy = 0.0 if last else qkvo_bytes
    next_tag = "" if last else f"layer{layer + 1}.qkvo"
    segs.append(_PlanSegment(prefix + "ff2", t["ff2"], next_copy,
                             next_tag, True))
    return segs


def qkvo_bytes(model: ModelSpec) -> int:
    return sum(m.params() for m in model.layer_matrices()
               if m.name in ("q", "k", "v", "o")) * model.element_bytes


def _head_seconds(model: ModelSpec, hw: HardwareSpec, sl: int) -> float:
    head = model.head_matrix()
    if head is None:
        return 0.0
    return _matrix_seconds(head.params(), sl, hw, model.element_bytes)


def compute_times(model: ModelSpec, hw: HardwareSpec, sl: int) -> list[float]:
    """Every compute segment duration, in execution order (all layers + head)."""
    times = []
    for layer in range(model.layers):
        times.extend(s.compute_seconds for s in layer_plan(model, hw, sl, layer))
    head = _head_seconds(model, hw, sl)
    if head:
        times.append(head)
    return times


def copied_bytes(model: ModelSpec) -> int:
    """Payload bytes a full swizzled rearrangement of the model moves."""
    return model.host_bytes()


# ----------------------------------------------------------------------
# DDB schedule
# ----------------------------------------------------------------------

def build_ddb_schedule(model: ModelSpec, hw: HardwareSpec, sl: int) -> Timeline:
    """Double-buffered prefill timeline for the whole decoder stack."""
    if sl < 1:
        raise ConfigError("sl must be >= 1")
    eb = model.element_bytes
    tl = Timeline()

    def copy_seconds(nbytes: float) -> float:
        return smc_time(nbytes, DDB_COPY_AGENTS, hw, CostMode.CALIBRATED)

    preload = copy_seconds(qkvo_bytes(model))
    tl.segments.append(Segment("copy", "copy", "preload", 0.0, preload, buffer=0))
    copy_t = preload
    comp_t = preload
    group = 0  # buffer group: even -> buffer 0, odd -> buffer 1
    for layer in range(model.layers):
        g = group
        for seg in layer_plan(model, hw, sl, layer):
            if seg.tag.endswith(("ff0", "ff1", "ff2")):
                g += 1  # each feed-forward matrix occupies the next buffer
            buf = g % 2 if seg.is_copy_window else None
            start = comp_t
            comp_t += seg.compute_seconds
            tl.segments.append(Segment("compute", "compute", seg.tag,
                                       start, comp_t, buffer=buf))
            if seg.copy_bytes > 0:
                c_start = max(copy_t, start)
                c_end = c_start + copy_seconds(seg.copy_bytes)
                tl.segments.append(Segment("copy", "copy", seg.copy_tag,
                                           c_start, c_end,
                                           buffer=(g + 1) % 2))
                copy_t = c_end
        # one synchronization barrier per layer
        comp_t = copy_t = max(comp_t, copy_t)
        group = g + 1  # next layer's projections use the buffer after ff2's
    head = model.head_matrix()
    if head is not None:
        head_bytes = head.params() * eb
        copy_total = copy_seconds(head_bytes)
        tile = min(model.ff_bytes, head_bytes)
        comp = _head_seconds(model, hw, sl)
        start = comp_t
        # pipelined at buffer-half granularity: first tile copy exposed
        end = start + max(comp, copy_total) + copy_seconds(tile)
        tl.segments.append(Segment("compute", "compute", "lm_head",
                                   start, end, buffer=None))
        tl.segments.append(Segment("copy", "copy", "lm_head",
                                   start, start + copy_total, buffer=None))
    tl.validate()
    return tl


# ----------------------------------------------------------------------
# Prefill / decode entry points
# ----------------------------------------------------------------------

def _analytical_ttft(scenario: Scenario, sl: int, hw: HardwareSpec) -> Fraction:
    gemm = gemm_time(0, 0, sl, hw, CostMode.ANALYTICAL)
    online = smc_time(0, 0, hw, CostMode.ANALYTICAL)
    if scenario in (Scenario.WD, Scenario.FACIL_O, Scenario.C_GEMM):
        return gemm
    if scenario is Scenario.S_OWR:
        return gemm + online
    if scenario is Scenario.S_DDB:
        return max(gemm, online)
    # non-cacheable host GEMM: one weight stream per input token, at the
    # non-cacheable read penalty
    return Fraction(sl) * Fraction(hw.nc_read_penalty).limit_denominator(1000)


def run_prefill(scenario: Scenario, model: ModelSpec, hw: HardwareSpec,
                sl: int, mode: CostMode = CostMode.CALIBRATED,
                pim_bytes: int | None = None) -> PrefillResult:
    """Time-to-first-token and per-agent timeline for one scenario."""
    if sl < 1:
        raise ConfigError("sl must be >= 1")
    if mode is CostMode.ANALYTICAL:
        ttft = _analytical_ttft(scenario, sl, hw)
        gemm = gemm_time(0, 0, sl, hw, CostMode.ANALYTICAL)
        return PrefillResult(scenario, sl, ttft, None, {
            "mode": "analytical",
            "gemm_t_units": gemm,
            "overhead_sum_pct": float(100 * (gemm + 3) / gemm),
            "overhead_max_pct": float(100 * max(gemm, Fraction(3)) / gemm),
        })

    comp = compute_times(model, hw, sl)
    gemm_total = math.fsum(comp)
    eb = model.element_bytes
    if scenario in (Scenario.WD, Scenario.FACIL_O, Scenario.C_GEMM):
        tl = _serial_timeline(model, hw, sl, copy_agents=None)
        return PrefillResult(scenario, sl, gemm_total, tl,
                             {"gemm_seconds": gemm_total, "smc_seconds": 0.0})
    if scenario is Scenario.S_DDB:
        tl = build_ddb_schedule(model, hw, sl)
        copy_busy = math.fsum(s.duration for s in tl.agent_segments("copy"))
        return PrefillResult(scenario, sl, tl.end, tl,
                             {"gemm_seconds": gemm_total,
                              "smc_seconds": copy_busy})
    if scenario is Scenario.S_OWR:
        copies = [smc_time(_layer_bytes(model), OWR_COPY_AGENTS, hw)
                  for _ in range(model.layers)]
        head = model.head_matrix()
        if head is not None:
            copies.append(smc_time(head.params() * eb, OWR_COPY_AGENTS, hw))
        smc_total = math.fsum(copies)
        tl = _serial_timeline(model, hw, sl, copy_agents=OWR_COPY_AGENTS)
        return PrefillResult(scenario, sl, gemm_total + smc_total, tl,
                             {"gemm_seconds": gemm_total,
                              "smc_seconds": smc_total})
    if scenario is Scenario.NC_GEMM:
        nc_bw = hw.nc_stream_bw_gbps * 1e9
        times = []
        for mat in model.all_matrices():
            nbytes = mat.params() * eb
            stream = sl * nbytes / nc_bw
            times.append(max(stream, _matrix_seconds(mat.params(), sl, hw, eb)))
        times.extend([hw.host_attn_seconds_per_layer] * model.layers)
        total = math.fsum(times)
        return PrefillResult(scenario, sl, total, None,
                             {"gemm_seconds": gemm_total,
                              "nc_stream_seconds": total})
    raise ConfigError(f"unknown scenario {scenario}")


def _layer_bytes(model: ModelSpec) -> int:
    return model.layer_params() * model.element_bytes


def _serial_timeline(model: ModelSpec, hw: HardwareSpec, sl: int,
                     copy_agents: int | None) -> Timeline:
    """Compute-only schedule, optionally with a serial per-layer copy first."""
    tl = Timeline()
    t = 0.0
    for layer in range(model.layers):
        if copy_agents is not None:
            dt = smc_time(_layer_bytes(model), copy_agents, hw)
            tl.segments.append(Segment("copy", "copy", f"layer{layer}.smc",
                                       t, t + dt))
            t += dt
        for seg in layer_plan(model, hw, sl, layer):
            tl.segments.append(Segment("compute", "compute", seg.tag,
                                       t, t + seg.compute_seconds))
            t += seg.compute_seconds
    head = model.head_matrix()
    if head is not None:
        if copy_agents is not None:
            dt = smc_time(head.params() * model.element_bytes, copy_agents, hw)
            tl.segments.append(Segment("copy", "copy", "lm_head.smc", t, t + dt))
            t += dt
        dt = _head_seconds(model, hw, sl)
        tl.segments.append(Segment("compute", "compute", "lm_head", t, t + dt))
        t += dt
    tl.validate()
    return tl


def run_decode(scenario: Scenario, model: ModelSpec, hw: HardwareSpec,
               out_len: int, pim_bytes: int | None = None) -> DecodeResult:
    """Per-token decode latency; every PIM scenario shares one PIM-aware copy."""
    if out_len < 0:
        raise ConfigError("out_len must be >= 0")
    token = decode_token_time(model, hw, scenario.uses_pim_decode,
                              pim_bytes=pim_bytes)
    tps = 1.0 / token if token > 0 else float("inf")
    return DecodeResult(scenario, out_len, token, tps, out_len * token)


def run_end_to_end(scenario: Scenario, model: ModelSpec, hw: HardwareSpec,
                   in_len: int, out_len: int,
                   pim_bytes: int | None = None) -> dict:
    """TTFT + decode for one grid point, with speedup over the C_GEMM baseline."""
    prefill = run_prefill(scenario, model, hw, in_len, pim_bytes=pim_bytes)
    decode = run_decode(scenario, model, hw, out_len, pim_bytes=pim_bytes)
    total = prefill.ttft + decode.total_seconds
    base_prefill = run_prefill(Scenario.C_GEMM, model, hw, in_len,
                               pim_bytes=pim_bytes)
    base_decode = run_decode(Scenario.C_GEMM, model, hw, out_len,
                             pim_bytes=pim_bytes)
    base_total = base_prefill.ttft + base_decode.total_seconds
    return {
        "scenario": scenario.value,
        "in_len": in_len,
        "out_len": out_len,
        "ttft_seconds": prefill.ttft,
        "token_seconds": decode.token_seconds,
        "decode_seconds": decode.total_seconds,
        "total_seconds": total,
        "speedup_vs_c_gemm": base_total / total if total > 0 else 1.0,
    }


def speedup_grid(model: ModelSpec, hw: HardwareSpec, in_lens, out_lens,
                 scenarios=None, pim_bytes: int | None = None) -> dict:
    """speedup[scenario][i][j] over the C_GEMM baseline at (in_lens[i], out_lens[j])."""
    if not in_lens or not out_lens:
        raise ConfigError("in_lens and out_lens must be non-empty")
    scenarios = list(scenarios or Scenario)
    grid = {}
    for scenario in scenarios:
        rows = []
        for in_len in in_lens:
            rows.append([run_end_to_end(scenario, model, hw, in_len, out_len,
                                        pim_bytes=pim_bytes)["speedup_vs_c_gemm"]
                         for out_len in out_lens])
        grid[scenario.value] = rows
    return grid


def ddb_hiding_crossover(model: ModelSpec, hw: HardwareSpec,
                         max_sl: int = 1024) -> int:
    """Smallest input length at which every DDB copy chunk fits inside its
    paired compute segment (full latency hiding, preload aside)."""
    for sl in range(1, max_sl + 1):
        hidden = True
        for seg in layer_plan(model, hw, sl, 0):
            if seg.copy_bytes > 0:
                copy = smc_time(seg.copy_bytes, DDB_COPY_AGENTS, hw)
                if copy > seg.compute_seconds:
                    hidden = False
                    break
        if hidden:
            return sl
    raise ConfigError(f"no crossover at or below sl={max_sl}")


# ----------------------------------------------------------------------
# Functional prefill path (exact arithmetic)
# ----------------------------------------------------------------------

def linear_stack_outputs(model: ModelSpec,
                         weights: dict[str, np.ndarray],
                         x: np.ndarray) -> dict[str, np.ndarray]:
    """Run the linear stack on host-side float64 values.

    ``weights`` maps matrix names (see :meth:`ModelSpec.all_matrices`) to
    (out_dim, in_dim) float arrays.  The glue between layers is a
    deterministic bounded remainder standing in for normalization, which
    keeps integer-valued activations exactly representable.  Returns every
    projection output plus the final logits.
    """
    outs = {}
    x = np.asarray(x, dtype=np.float64)
    for layer in range(model.layers):
        p = f"layer{layer}."
        q = weights[p + "q"] @ x
        outs[p + "k"] = weights[p + "k"] @ x
        outs[p + "v"] = weights[p + "v"] @ x
        outs[p + "q"] = q
        t = weights[p + "o"] @ q
        outs[p + "o"] = t
        g = weights[p + "ff0"] @ t
        u = weights[p + "ff1"] @ t
        outs[p + "ff0"], outs[p + "ff1"] = g, u
        x = weights[p + "ff2"] @ (g + u)
        outs[p + "ff2"] = x
        x = np.mod(x, 251.0) - 125.0  # bounded stand-in for normalization
    if model.head_matrix() is not None:
        outs["logits"] = weights["lm_head"] @ x
    return outs
