"""Placement, conversion, swizzled-copy round trip, and padding accounting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pimsim.dram import AddressMap, DramGeometry, decode_address
from pimsim.errors import AttributeViolation, CapacityError, GeometryError
from pimsim.layout import (LayoutKind, PimPlacement, WeightMatrix,
                           convert_to_pim_aware, model_placements, padded_size,
                           pim_coord_of_element, smc_copy, unswizzle)
from pimsim.memsys import Attribute, CacheConfig, MemorySystem, RegionKind
from pimsim.model import ModelSpec
from pimsim.presets import PHONE_GEOMETRY, model_preset

DESK = DramGeometry(channels=2, ranks_per_channel=1, banks_per_rank=8,
                    rows_per_bank=256, columns_per_row=32)
AMAP = AddressMap(DESK)


def make_placement(out_dim, in_dim, banks=4, channels=2, base_row=0):
    return PimPlacement(AMAP, out_dim, in_dim, banks_per_channel=banks,
                        channels_used=channels, base_row=base_row)


@st.composite
def shapes(draw):
    # ragged tails on both axes are the interesting cases
    out_dim = draw(st.integers(1, 200))
    in_dim = draw(st.integers(1, 300))
    banks = draw(st.sampled_from([1, 2, 4, 8]))
    channels = draw(st.sampled_from([1, 2]))
    return out_dim, in_dim, banks, channels


@settings(max_examples=120, deadline=None)
@given(shapes(), st.integers(0, 2**32 - 1))
def test_round_trip_is_identity(shape, seed):
    out_dim, in_dim, banks, channels = shape
    rng = np.random.default_rng(seed)
    p = make_placement(out_dim, in_dim, banks, channels)
    w = WeightMatrix(out_dim, in_dim,
                     rng.integers(0, 1 << 16, size=(out_dim, in_dim)))
    image = convert_to_pim_aware(w, p)
    back = unswizzle(image)
    assert np.array_equal(back.data, w.data)
    assert back.layout is LayoutKind.HOST_FRIENDLY


@settings(max_examples=60, deadline=None)
@given(shapes())
def test_row_locality_and_burst_column_major(shape):
    """Every matrix row lives in one bank; consecutive bursts of a tile walk
    consecutive input columns within the same (channel, bank)."""
    out_dim, in_dim, banks, channels = shape
    p = make_placement(out_dim, in_dim, banks, channels)
    rng = np.random.default_rng(0)
    for m in rng.integers(0, p.m_pad, size=8):
        coords = [pim_coord_of_element(p, int(m), k)
                  for k in range(0, p.k_pad, max(1, p.k_pad // 7))]
        banks_seen = {(c.channel, c.rank, c.bank) for c in coords}
        assert len(banks_seen) == 1
        offsets = {c.burst_offset for c in coords}
        assert len(offsets) == 1  # lane index fixed by m within the tile
    # column-major bursts: k and k+1 are adjacent bursts of the same tile
    c0 = pim_coord_of_element(p, 0, 0)
    c1 = pim_coord_of_element(p, 0, 1)
    assert (c1.row, c1.column) in (
        (c0.row, c0.column + 1), (c0.row + 1, 0))


def test_coordinates_match_declared_placement():
    p = make_placement(out_dim=16 * 8 * 3, in_dim=128, banks=4, channels=2)
    for tile in range(p.m_pad // p.row_tile):
        channel, bank = p.bank_assignment(tile)
        c = pim_coord_of_element(p, tile * p.row_tile, 0)
        assert (c.channel, c.bank) == (channel, bank)
        assert p.tile_slot(tile) == tile // p.active_banks


def test_image_addresses_decode_inside_the_slab():
    p = make_placement(40, 130, banks=2, channels=1, base_row=5)
    rng = np.random.default_rng(1)
    w = WeightMatrix(40, 130, rng.integers(0, 1 << 16, size=(40, 130)))
    image = convert_to_pim_aware(w, p)
    from pimsim.layout import burst_address_of_tile
    for tile in range(p.m_pad // p.row_tile):
        for addr in burst_address_of_tile(p, tile)[::17]:
            coord = decode_address(AMAP, int(addr))
            assert p.base_row <= coord.row < p.base_row + p.rows_needed


def test_padding_elements_are_zero():
    p = make_placement(17, 130, banks=2, channels=1)
    w = WeightMatrix(17, 130, np.full((17, 130), 0xFFFF, dtype=np.uint16))
    image = convert_to_pim_aware(w, p)
    ones = int(np.count_nonzero(image.data))
    assert ones == 17 * 130


def test_m_k_padding_rules():
    p = make_placement(17, 130, banks=4, channels=2)
    assert p.m_pad == 16 * 8  # one tile group of 8 active banks
    assert p.k_pad == 256     # two 128-element input tiles
    assert p.slots == 1
    # per-bank slab padded to a row boundary
    assert p.rows_needed == -(-p.slots * p.k_pad // DESK.columns_per_row)


def test_partial_copy_matches_full_copy():
    rng = np.random.default_rng(7)
    p = make_placement(64, 256, banks=2, channels=2)
    w = WeightMatrix(64, 256, rng.integers(0, 1 << 16, size=(64, 256)))
    image = convert_to_pim_aware(w, p)
    rows, cols = range(10, 50), range(32, 200)
    dst = np.zeros(len(rows) * len(cols), dtype=np.uint16)
    copied = smc_copy(image, rows, cols, dst)
    assert copied == len(rows) * len(cols) * 2
    tile = dst.reshape(len(cols), len(rows)).T  # column-major destination
    assert np.array_equal(tile, w.data[10:50, 32:200])


def test_smc_issues_one_read_per_source_burst():
    p = make_placement(32, 128, banks=2, channels=1)
    w = WeightMatrix(32, 128, np.arange(32 * 128, dtype=np.uint16).reshape(32, 128))
    image = convert_to_pim_aware(w, p)
    mem = MemorySystem(capacity=DESK.total_capacity,
                       cache=CacheConfig(capacity=1 << 14))
    mem.allocate_region(RegionKind.CONTIGUOUS_POOL, Attribute.NON_CACHEABLE,
                        image.base_addr + image.span_bytes, align=1)
    dst = np.zeros(32 * 128, dtype=np.uint16)
    mark = mem.mark()
    smc_copy(image, range(32), range(128), dst, mem=mem)
    records = mem.records_since(mark)
    # 2 tiles x 128 bursts, all reads, all distinct addresses
    assert len(records) == 2 * 128
    assert all(r.op == "R" and r.nbytes == DESK.burst_bytes for r in records)
    assert len({r.addr for r in records}) == len(records)


def test_smc_requires_non_cacheable_source():
    p = make_placement(16, 128, banks=1, channels=1)
    w = WeightMatrix(16, 128, np.zeros((16, 128), dtype=np.uint16))
    image = convert_to_pim_aware(w, p)
    mem = MemorySystem(capacity=DESK.total_capacity)
    mem.allocate_region(RegionKind.GENERAL, Attribute.CACHEABLE,
                        image.base_addr + image.span_bytes, align=1)
    dst = np.zeros(16 * 128, dtype=np.uint16)
    with pytest.raises(AttributeViolation):
        smc_copy(image, range(16), range(128), dst, mem=mem)


def test_smc_destination_overflow():
    p = make_placement(16, 128, banks=1, channels=1)
    w = WeightMatrix(16, 128, np.zeros((16, 128), dtype=np.uint16))
    image = convert_to_pim_aware(w, p)
    with pytest.raises(CapacityError):
        smc_copy(image, range(16), range(128),
                 np.zeros(16 * 128 - 1, dtype=np.uint16))


def test_conversion_rejects_shape_mismatch():
    p = make_placement(16, 128)
    with pytest.raises(GeometryError):
        convert_to_pim_aware(
            WeightMatrix(32, 128, np.zeros((32, 128), dtype=np.uint16)), p)


def test_placement_rejects_overflow_of_rows():
    tiny = AddressMap(DramGeometry(rows_per_bank=4))
    p = PimPlacement(tiny, 16 * 64, 128)
    from pimsim.layout import burst_address_of_tile
    with pytest.raises(CapacityError):
        burst_address_of_tile(p, p.m_pad // p.row_tile - 1)


def test_model_placements_stack_without_overlap():
    model = ModelSpec(hidden=64, intermediate=256, layers=1, vocab=128)
    placements = model_placements(model, AMAP, banks_per_channel=8,
                                  channels_used=2)
    rows = 0
    for _, p in placements:
        assert p.base_row == rows
        rows += p.rows_needed


def test_padded_size_accounting():
    model = ModelSpec(hidden=64, intermediate=256, layers=2, vocab=128)
    report = padded_size(model, AMAP, banks_per_channel=8, channels_used=2)
    assert report.host_bytes == model.host_bytes()
    assert report.padded_total == sum(b for _, _, b in report.per_matrix)
    assert report.padding_bytes >= 0


def test_phone_scale_padding_fraction_is_small():
    model = model_preset("llama3.2-1b")
    amap = AddressMap(PHONE_GEOMETRY)
    report = padded_size(model, amap, banks_per_channel=16, channels_used=4)
    assert report.padding_fraction <= 0.03
