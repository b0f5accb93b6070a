"""Host-friendly and PIM-aware weight placement, conversion, and the
swizzled memory copy.

Placement scheme
----------------
Output rows are grouped into tiles of ``elements_per_burst`` (16) rows.
Tiles are assigned round-robin over the active banks of the active
channels; once every active bank holds a tile, the next tile starts a new
*slot* stacked along DRAM rows within each bank.  Inside a bank, bursts
are column-major: burst ``j`` of a tile holds input column ``j`` for the
16 rows of the tile, one row per burst lane.  Every matrix row therefore
resides entirely within a single bank.

Padding: the output dimension is padded to a multiple of
``16 * active_banks`` and the per-bank slab of each matrix is padded to a
DRAM-row boundary; the input dimension is padded to a whole number of
128-element input tiles (8 register-file entries of 16 lanes).  Padding
elements are zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dram import AddressMap, DramCoord
from .errors import AttributeViolation, CapacityError, GeometryError
from .model import ModelSpec

INPUT_TILE_RF_ENTRIES = 8


class LayoutKind(enum.Enum):
    HOST_FRIENDLY = "host_friendly"
    PIM_AWARE = "pim_aware"


@dataclass
class WeightMatrix:
    """A 2-D weight tensor; ``data`` holds raw uint16 element bit patterns
    in (out_dim, in_dim) row-major order."""

    out_dim: int
    in_dim: int
    data: np.ndarray
    layout: LayoutKind = LayoutKind.HOST_FRIENDLY
    element_bytes: int = 2

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint16)
        if self.data.size != self.out_dim * self.in_dim:
            raise GeometryError(
                f"data length {self.data.size} != {self.out_dim}x{self.in_dim}")
        self.data = self.data.reshape(self.out_dim, self.in_dim)


@dataclass(frozen=True)
class PimPlacement:
    """Placement function for one matrix over the active banks.

    ``base_row`` is the first DRAM row of the matrix's per-bank slab; the
    slab occupies the same row range in every active bank.
    """

    address_map: AddressMap
    out_dim: int
    in_dim: int
    banks_per_channel: int = 1
    channels_used: int = 1
    base_row: int = 0

    def __post_init__(self):
        geo = self.address_map.geometry
        if not 1 <= self.banks_per_channel <= geo.banks_per_rank:
            raise GeometryError("banks_per_channel out of range")
        if not 1 <= self.channels_used <= geo.channels:
            raise GeometryError("channels_used out of range")

    @property
    def geometry(self):
        return self.address_map.geometry

    @property
    def row_tile(self) -> int:
        """Output rows per tile: one burst lane per row."""
        return self.geometry.elements_per_burst

    @property
    def input_tile_elements(self) -> int:
        return INPUT_TILE_RF_ENTRIES * self.geometry.elements_per_burst

    @property
    def active_banks(self) -> int:
        return self.banks_per_channel * self.channels_used

    @property
    def m_pad(self) -> int:
        group = self.row_tile * self.active_banks
        return -(-self.out_dim // group) * group

    @property
    def k_pad(self) -> int:
        t = self.input_tile_elements
        return -(-self.in_dim // t) * t

    @property
    def slots(self) -> int:
        """Tiles stacked per bank."""
        return self.m_pad // (self.row_tile * self.active_banks)

    @property
    def rows_needed(self) -> int:
        """DRAM rows occupied per bank, padded to a row boundary."""
        bursts = self.slots * self.k_pad
        return -(-bursts // self.geometry.columns_per_row)

    @property
    def padded_bytes(self) -> int:
        """Total DRAM bytes claimed across all active banks."""
        return (self.rows_needed * self.geometry.row_bytes * self.active_banks)

    def bank_assignment(self, tile: int) -> tuple[int, int]:
        """tile index -> (channel, bank), round-robin banks then channels."""
        bank = tile % self.banks_per_channel
        channel = (tile // self.banks_per_channel) % self.channels_used
        return channel, bank

    def tile_slot(self, tile: int) -> int:
        return tile // self.active_banks


def pim_coord_of_element(p: PimPlacement, m: int, k: int) -> DramCoord:
    """DRAM coordinate of element (m, k) under the placement function.

    All 16 elements of a lane group share (channel, bank, row, column) and
    differ only in the intra-burst offset.
    """
    if not (0 <= m < p.m_pad and 0 <= k < p.k_pad):
        raise GeometryError(f"element ({m}, {k}) outside padded bounds "
                            f"({p.m_pad}, {p.k_pad})")
    geo = p.geometry
    tile, lane = divmod(m, p.row_tile)
    channel, bank = p.bank_assignment(tile)
    burst = p.tile_slot(tile) * p.k_pad + k
    row_off, column = divmod(burst, geo.columns_per_row)
    return DramCoord(channel=channel, rank=0, bank=bank,
                     row=p.base_row + row_off, column=column,
                     burst_offset=lane * geo.element_bytes)


def _encode_rows_cols(amap: AddressMap, channel: int, bank: int,
                      rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Vectorized encode for fixed (channel, rank=0, bank)."""
    addr = np.zeros(len(rows), dtype=np.int64)
    shift = amap.offset_bits
    fixed = {"channel": channel, "rank": 0, "bank": bank}
    for name, width in amap.field_order:
        if name == "row":
            addr |= rows.astype(np.int64) << shift
        elif name == "column":
            addr |= cols.astype(np.int64) << shift
        else:
            addr |= fixed[name] << shift
        shift += width
    return addr


def burst_address_of_tile(p: PimPlacement, tile: int) -> np.ndarray:
    """Physical address of every burst (one per padded input column) of a tile."""
    geo = p.geometry
    channel, bank = p.bank_assignment(tile)
    burst = p.tile_slot(tile) * p.k_pad + np.arange(p.k_pad)
    rows = p.base_row + burst // geo.columns_per_row
    if rows[-1] >= geo.rows_per_bank:
        raise CapacityError(f"placement exceeds rows_per_bank "
                            f"({rows[-1]} >= {geo.rows_per_bank})")
    cols = burst % geo.columns_per_row
    return _encode_rows_cols(p.address_map, channel, bank, rows, cols)


@dataclass
class PimImage:
    """PIM-aware weight image: a byte buffer indexed by physical address
    relative to ``base_addr``, plus padded dimensions."""

    placement: PimPlacement
    base_addr: int
    data: np.ndarray  # uint16 elements covering the address span

    @property
    def m_pad(self) -> int:
        return self.placement.m_pad

    @property
    def k_pad(self) -> int:
        return self.placement.k_pad

    @property
    def span_bytes(self) -> int:
        return self.data.size * self.placement.geometry.element_bytes

    @property
    def padded_bytes(self) -> int:
        return self.placement.padded_bytes

    def element_at(self, addr: int, lane: int) -> int:
        geo = self.placement.geometry
        idx = (addr - self.base_addr) // geo.element_bytes + lane
        return int(self.data[idx])


def _image_span(p: PimPlacement) -> tuple[int, int]:
    """(lowest, one-past-highest) physical address touched by the placement."""
    geo = p.geometry
    lo, hi = None, None
    for tile in range(min(p.active_banks, p.m_pad // p.row_tile)):
        addrs = burst_address_of_tile(p, tile)
        # Highest slot lives at the end of the same bank's slab.
        last = burst_address_of_tile(p, tile + (p.slots - 1) * p.active_banks)
        t_lo = int(min(addrs.min(), last.min()))
        t_hi = int(max(addrs.max(), last.max())) + geo.burst_bytes
        lo = t_lo if lo is None else min(lo, t_lo)
        hi = t_hi if hi is None else max(hi, t_hi)
    return lo, hi


def convert_to_pim_aware(w: WeightMatrix, p: PimPlacement) -> PimImage:
    """Offline model converter: host-friendly matrix -> PIM-aware image.

    The image satisfies ``image[encode(pim_coord_of_element(m, k))] ==
    w[m, k]`` for all valid (m, k); padding elements are zero.
    """
    if w.layout is not LayoutKind.HOST_FRIENDLY:
        raise AttributeViolation("source matrix must be host-friendly")
    if (w.out_dim, w.in_dim) != (p.out_dim, p.in_dim):
        raise GeometryError("placement dims do not match matrix dims")
    geo = p.geometry
    base, end = _image_span(p)
    img = np.zeros((end - base) // geo.element_bytes, dtype=np.uint16)
    padded = np.zeros((p.m_pad, p.k_pad), dtype=np.uint16)
    padded[:w.out_dim, :w.in_dim] = w.data
    lanes = np.arange(p.row_tile)
    for tile in range(p.m_pad // p.row_tile):
        addrs = burst_address_of_tile(p, tile)
        elem0 = (addrs - base) // geo.element_bytes
        block = padded[tile * p.row_tile:(tile + 1) * p.row_tile, :]
        img[elem0[None, :] + lanes[:, None]] = block
    return PimImage(placement=p, base_addr=base, data=img)


def smc_copy(image: PimImage, rows: range, cols: range,
             dst: np.ndarray, mem=None, agent: str = "copy") -> int:
    """Swizzled memory copy: PIM-aware image tile -> host-friendly buffer.

    ``dst`` receives the selected (rows x cols) tile in column-major
    (host-friendly) order and must be large enough.  One DRAM read is
    issued per source burst through ``mem`` when given; the source
    addresses must then fall in a non-cacheable region.  Returns the
    number of payload bytes copied.
    """
    p = image.placement
    geo = p.geometry
    nr, nc = len(rows), len(cols)
    if nr == 0 or nc == 0:
        return 0
    if rows[-1] >= p.out_dim or cols[-1] >= p.in_dim:
        raise GeometryError("row/col range outside matrix bounds")
    if dst.size < nr * nc:
        raise CapacityError(f"destination holds {dst.size} elements, "
                            f"tile needs {nr * nc}")
    if mem is not None:
        region = mem.region_at(image.base_addr)
        if not region.is_non_cacheable:
            raise AttributeViolation(
                f"SMC source region {region.name!r} is not non-cacheable")
    out = dst[:nr * nc].reshape(nc, nr)  # column-major: one row per column
    col_lo, col_n = cols[0], nc
    first_tile = rows[0] // p.row_tile
    last_tile = rows[-1] // p.row_tile
    copied = 0
    for tile in range(first_tile, last_tile + 1):
        addrs = burst_address_of_tile(p, tile)[col_lo:col_lo + col_n]
        if mem is not None:
            for a in addrs:
                mem.access(int(a), "R", geo.burst_bytes, agent)
        elem0 = (addrs - image.base_addr) // geo.element_bytes
        t_lo = tile * p.row_tile
        lanes = [m - t_lo for m in rows if t_lo <= m < t_lo + p.row_tile]
        dst_rows = [m - rows[0] for m in rows if t_lo <= m < t_lo + p.row_tile]
        block = image.data[elem0[None, :] + np.asarray(lanes)[:, None]]
        out[:, dst_rows] = block.T
        copied += len(lanes) * col_n * geo.element_bytes
    return copied


def unswizzle(image: PimImage, mem=None) -> WeightMatrix:
    """Full-matrix SMC into a fresh host-friendly matrix."""
    p = image.placement
    dst = np.zeros(p.out_dim * p.in_dim, dtype=np.uint16)
    smc_copy(image, range(p.out_dim), range(p.in_dim), dst, mem=mem)
    data = dst.reshape(p.in_dim, p.out_dim).T
    return WeightMatrix(p.out_dim, p.in_dim, data.copy(),
                        layout=LayoutKind.HOST_FRIENDLY)


@dataclass(frozen=True)
class PaddedSizeReport:
    per_matrix: tuple  # (name, host_bytes, padded_bytes)
    host_bytes: int
    padded_total: int

    @property
    def padding_bytes(self) -> int:
        return self.padded_total - self.host_bytes

    @property
    def padding_fraction(self) -> float:
        return self.padding_bytes / self.host_bytes if self.host_bytes else 0.0


def model_placements(model: ModelSpec, amap: AddressMap,
                     banks_per_channel: int, channels_used: int,
                     base_row: int = 0) -> list[tuple[str, PimPlacement]]:
    """Stack every matrix of the model along DRAM rows, slab after slab."""
    placements = []
    row = base_row
    for mat in model.all_matrices():
        p = PimPlacement(amap, mat.out_dim, mat.in_dim,
                         banks_per_channel=banks_per_channel,
                         channels_used=channels_used, base_row=row)
        placements.append((mat.name, p))
        row += p.rows_needed
    return placements


def padded_size(model: ModelSpec, amap: AddressMap,
                banks_per_channel: int, channels_used: int) -> PaddedSizeReport:
    """Per-matrix and total padded DRAM bytes of the PIM-aware model."""
    rows = []
    total = 0
    for name, p in model_placements(model, amap, banks_per_channel, channels_used):
        host = p.out_dim * p.in_dim * model.element_bytes
        rows.append((name, host, p.padded_bytes))
        total += p.padded_bytes
    return PaddedSizeReport(per_matrix=tuple(rows),
                            host_bytes=model.host_bytes(),
                            padded_total=total)
