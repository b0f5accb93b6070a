"""Functional model of per-bank PIM blocks executing GEMV through the
DRAM command protocol.

The host drives GEMV with ordinary DRAM requests: inputs are staged into
the 8-entry input register file with a burst write, weight reads trigger
one MAC per read, five dummy reads drain the SIMD pipeline, and a final
burst write moves the output register file back to memory.  The engine
observes the DRAM side of the memory system, so any read absorbed by the
host cache silently skips its MAC - the memory-attribute hazard this
simulator exists to demonstrate.

MAC micro-order: the j-th triggering read since the last input staging
consumes input element j; the fetched burst supplies 16 weights (one
column of a 16-row output tile), and in multi-bank mode every active bank
applies the same (row, column) command in lockstep.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from . import bf16
from .errors import ConfigError, StagingError
from .layout import INPUT_TILE_RF_ENTRIES, PimImage, burst_address_of_tile
from .memsys import Attribute, MemorySystem, RegionKind, TraceRecord

PIPELINE_DRAIN_READS = 5
RF_ENTRIES = 8


class PimMode(enum.Enum):
    STANDARD = "standard"
    MULTI_BANK = "multi_bank"


@dataclass
class PimBlock:
    """One per-bank SIMD unit: 8-entry input/output RFs and 16 accumulator
    lanes (32-bit accumulation in BF16 mode)."""

    input_rf: np.ndarray = field(default_factory=lambda: np.zeros((RF_ENTRIES, 16), dtype=np.uint16))
    output_rf: np.ndarray = field(default_factory=lambda: np.zeros((RF_ENTRIES, 16), dtype=np.uint16))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(16, dtype=np.float64))

    def dump(self) -> dict:
        return {"input_rf": self.input_rf.tolist(),
                "output_rf": self.output_rf.tolist(),
                "acc": self.acc.tolist()}


@dataclass
class GemvJob:
    """One GEMV: a placed weight image times an input vector."""

    image: PimImage
    input_bits: np.ndarray  # uint16 elements, length in_dim
    arithmetic: str = "bf16"  # "bf16" or "exact"

    def __post_init__(self):
        self.input_bits = np.ascontiguousarray(self.input_bits, dtype=np.uint16)
        p = self.image.placement
        if self.input_bits.size != p.in_dim:
            raise ConfigError(f"input length {self.input_bits.size} != K {p.in_dim}")
        if self.arithmetic not in ("bf16", "exact"):
            raise ConfigError(f"unknown arithmetic mode {self.arithmetic!r}")
        if self.input_tile_elements > RF_ENTRIES * p.geometry.elements_per_burst:
            raise StagingError("input tile exceeds register file capacity")

    @property
    def placement(self):
        return self.image.placement

    @property
    def input_tile_elements(self) -> int:
        return self.placement.input_tile_elements

    @property
    def num_input_tiles(self) -> int:
        return self.placement.k_pad // self.input_tile_elements

    @property
    def num_out_tiles(self) -> int:
        return self.placement.slots

    @property
    def num_tile_rows(self) -> int:
        """Read groups per input tile (one group spans a DRAM row)."""
        return -(-self.input_tile_elements // self.placement.geometry.columns_per_row)

    @property
    def expected_mac_reads(self) -> int:
        return self.num_out_tiles * self.num_input_tiles * self.input_tile_elements

    @property
    def expected_total_commands(self) -> dict:
        """Per the command protocol: per out tile, NumInputTile x (1 input
        Write8 + 128 MAC reads) + 5 dummy reads + 1 output Write8."""
        o, i = self.num_out_tiles, self.num_input_tiles
        return {"input_writes": o * i,
                "mac_reads": o * i * self.input_tile_elements,
                "dummy_reads": o * PIPELINE_DRAIN_READS,
                "output_writes": o}


@dataclass
class GemvResult:
    output: np.ndarray            # float values, length out_dim
    output_bits: np.ndarray       # element-precision readback, length m_pad
    records: list
    expected_mac_reads: int
    triggered_mac_reads: int
    prefetcher_triggers: int
    weights_non_cacheable: bool


@dataclass
class IntegrityReport:
    expected_reads: int
    observed_reads: int
    status: str  # "ok", "pim-blocked", or "desynchronized"
    absorbing_lines: tuple = ()
    surplus_reads: int = 0

    @property
    def deficit(self) -> int:
        return self.expected_reads - self.observed_reads + self.surplus_reads

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class PimGemvEngine:
    """Engine for one memory system; executes one GEMV job at a time.

    ``corrupt_mac_order`` is a test hook that reverses the input-element
    order inside each MAC flush; it must make every nontrivial job fail
    oracle comparison.
    """

    def __init__(self, mem: MemorySystem, mode: PimMode = PimMode.MULTI_BANK,
                 corrupt_mac_order: bool = False):
        if mode is not PimMode.MULTI_BANK:
            raise ConfigError("only multi-bank lockstep mode is implemented")
        self.mem = mem
        self.mode = mode
        self.corrupt_mac_order = corrupt_mac_order
        staging = mem.allocate_region(RegionKind.GENERAL, Attribute.NON_CACHEABLE,
                                      1024, name="pim_staging")
        self.in_buf_addr = staging.base
        self.out_buf_addr = staging.base + 256
        self.dummy_addr = staging.base + 512
        self._job = None
        self._blocks: list[PimBlock] = []
        mem.dram_listeners.append(self._on_dram)

    # ------------------------------------------------------------------
    # DRAM-side trigger path
    # ------------------------------------------------------------------
    def _on_dram(self, record: TraceRecord):
        if self._job is None or record.op != "R":
            return
        burst = self._addr_to_burst.get(record.addr)
        if burst is None:
            return
        self._pending.append(burst)
        self._trigger_count += 1
        if record.agent == "prefetcher":
            self._prefetch_triggers += 1

    def _flush_macs(self):
        """Apply pending MACs: read j uses input element j (arrival order)."""
        if not self._pending:
            return
        bursts = np.asarray(self._pending, dtype=np.int64)
        self._pending = []
        n = min(len(bursts), len(self._x))
        bursts = bursts[:n]  # RF pointer saturates past the staged tile
        x = self._x[:n]
        if self.corrupt_mac_order:
            x = x[::-1]
        p = self._job.placement
        slots = bursts // p.k_pad
        cols = bursts % p.k_pad
        # weights_view: (slots, active_banks, 16 lanes, k_pad)
        gathered = self._weights_view[slots, :, :, cols]  # (n, banks, 16)
        self._acc += np.einsum("nab,n->ab", gathered, x)

    # ------------------------------------------------------------------
    # Staging primitives
    # ------------------------------------------------------------------
    def pim_write_input(self, values_bits: np.ndarray, agent: str = "host"):
        """Write8: stage up to one 128-element input tile into the input RF.

        Unused lanes of a partial final tile are zero-filled.
        """
        if self._job is None:
            raise ConfigError("no active job")
        tile_elems = self._job.input_tile_elements
        if values_bits.size > tile_elems:
            raise StagingError(f"input tile of {values_bits.size} elements "
                               f"exceeds RF capacity {tile_elems}")
        self._flush_macs()
        staged = np.zeros(tile_elems, dtype=np.uint16)
        staged[:values_bits.size] = values_bits
        self.mem.access(self.in_buf_addr, "W",
                        tile_elems * self._job.placement.geometry.element_bytes,
                        agent)
        self._staged_bits = staged
        if self._job.arithmetic == "exact":
            self._x = bf16.decode(staged).astype(np.float64)
        else:
            self._x = bf16.decode(staged).astype(np.float32)
        for block in self._blocks:
            block.input_rf[:] = staged.reshape(RF_ENTRIES, -1)

    def pim_read_output(self, agent: str = "host") -> np.ndarray:
        """Write8 of the output RF: returns the accumulator lanes of every
        active bank, rounded to element precision in BF16 mode."""
        if self._job is None:
            raise ConfigError("no active job")
        self._flush_macs()
        flat = self._acc.reshape(-1)
        self.mem.access(self.out_buf_addr, "W",
                        RF_ENTRIES * self._job.placement.geometry.burst_bytes,
                        agent)
        bits = bf16.encode(flat.astype(np.float32))
        for i, block in enumerate(self._blocks):
            block.acc[:] = self._acc[i]
            block.output_rf[:] = 0
            block.output_rf[0] = bits[i * 16:(i + 1) * 16]
        return flat.copy(), bits

    def state_dump(self) -> str:
        """JSON dump of RF and accumulator state, for debugging."""
        return json.dumps({"mode": self.mode.value,
                           "blocks": [b.dump() for b in self._blocks]},
                          sort_keys=True)

    # ------------------------------------------------------------------
    # Job execution
    # ------------------------------------------------------------------
    def _bind(self, job: GemvJob):
        p = job.placement
        self._job = job
        self._blocks = [PimBlock() for _ in range(p.active_banks)]
        self._pending = []
        self._trigger_count = 0
        self._prefetch_triggers = 0
        acc_dtype = np.float64 if job.arithmetic == "exact" else np.float32
        self._acc = np.zeros((p.active_banks, 16), dtype=acc_dtype)
        self._x = np.zeros(job.input_tile_elements, dtype=acc_dtype)
        # Reconstruct the padded weight matrix from the image bytes.
        wp = np.zeros((p.m_pad, p.k_pad), dtype=np.uint16)
        addr_to_burst = {}
        eb = p.geometry.element_bytes
        lanes = np.arange(p.row_tile)
        for tile in range(p.m_pad // p.row_tile):
            addrs = burst_address_of_tile(p, tile)
            elem0 = (addrs - job.image.base_addr) // eb
            wp[tile * p.row_tile:(tile + 1) * p.row_tile, :] = \
                job.image.data[elem0[None, :] + lanes[:, None]]
            # Lockstep decode: a read command anywhere in the weight span of
            # any active bank carries the same (row, column) and triggers the
            # same burst index, so every bank's addresses enter the map.
            slot = p.tile_slot(tile)
            for j, a in enumerate(addrs.tolist()):
                addr_to_burst[a] = slot * p.k_pad + j
        wf = bf16.decode(wp).astype(acc_dtype)
        self._weights_view = wf.reshape(p.slots, p.active_banks, p.row_tile, p.k_pad)
        self._addr_to_burst = addr_to_burst

    def execute(self, job: GemvJob, agent: str = "host") -> GemvResult:
        """Run the full GEMV command protocol for ``job``."""
        p = job.placement
        geo = p.geometry
        self._bind(job)
        weight_region = self.mem.region_at(job.image.base_addr)
        mark = self.mem.mark()
        tile_elems = job.input_tile_elements
        x_padded = np.zeros(p.k_pad, dtype=np.uint16)
        x_padded[:p.in_dim] = job.input_bits
        out_bits = np.zeros(p.m_pad, dtype=np.uint16)
        out_vals = np.zeros(p.m_pad, dtype=np.float64)
        for o in range(job.num_out_tiles):
            self._acc[:] = 0
            addrs = burst_address_of_tile(p, o * p.active_banks)
            for i in range(job.num_input_tiles):
                self.pim_write_input(x_padded[i * tile_elems:(i + 1) * tile_elems],
                                     agent)
                for a in addrs[i * tile_elems:(i + 1) * tile_elems].tolist():
                    self.mem.access(a, "R", geo.burst_bytes, agent)
            for _ in range(PIPELINE_DRAIN_READS):
                self.mem.access(self.dummy_addr, "R", geo.burst_bytes, agent)
            vals, bits = self.pim_read_output(agent)
            span = slice(o * 16 * p.active_banks, (o + 1) * 16 * p.active_banks)
            out_vals[span] = vals
            out_bits[span] = bits
        records = self.mem.records_since(mark)
        result = GemvResult(
            output=out_vals[:p.out_dim].copy(),
            output_bits=out_bits,
            records=records,
            expected_mac_reads=job.expected_mac_reads,
            triggered_mac_reads=self._trigger_count,
            prefetcher_triggers=self._prefetch_triggers,
            weights_non_cacheable=weight_region.is_non_cacheable,
        )
        self._last_mark = mark
        return result

    def verify_trigger_integrity(self, job: GemvJob,
                                 result: GemvResult) -> IntegrityReport:
        """Compare triggered MAC reads against the protocol formula.

        A deficit means reads were absorbed before reaching the memory
        controller ("PIM blocked"); a surplus means spurious requests
        desynchronized the command stream.
        """
        expected = job.expected_mac_reads
        observed = result.triggered_mac_reads
        surplus = result.prefetcher_triggers
        if observed - surplus < expected:
            base = job.image.base_addr
            end = base + job.image.span_bytes
            lines = sorted({h.line_addr
                            for h in self.mem.hits_since(self._last_mark)
                            if base <= h.line_addr < end})
            return IntegrityReport(expected, observed, "pim-blocked",
                                   absorbing_lines=tuple(lines),
                                   surplus_reads=surplus)
        if surplus > 0 or observed > expected:
            return IntegrityReport(expected, observed, "desynchronized",
                                   surplus_reads=surplus)
        return IntegrityReport(expected, observed, "ok")
