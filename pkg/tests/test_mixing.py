import weakref

import numpy as np
import pytest

from ubss_codec import (BlockGrid, CodecError, CompositeBlock, Frame,
                        MeasurementVector, MixingMatrix, ResidualFrame,
                        StreamAccumulator, assemble_composite,
                        compute_residual, disassemble_composite,
                        gen_mixing_matrix, mix_batch)


# --- matrix generation ------------------------------------------------------

def test_generator_deterministic():
    a = gen_mixing_matrix(42, 256, 1024)
    b = gen_mixing_matrix(42, 256, 1024)
    assert a.entries.tobytes() == b.entries.tobytes()


def test_generator_seed_sensitivity():
    a = gen_mixing_matrix(42, 64, 256)
    b = gen_mixing_matrix(43, 64, 256)
    assert not np.array_equal(a.entries, b.entries)


def test_generator_moments():
    # 262144 draws: mean within 4 standard errors of 0, variance within 5% of 1/m
    m, k = 256, 1024
    entries = gen_mixing_matrix(42, m, k).entries
    sigma = 1 / np.sqrt(m)
    assert abs(entries.mean()) < 4 * sigma / np.sqrt(m * k)
    assert abs(entries.var() - 1 / m) < 0.05 / m


def test_generator_invalid_shapes():
    with pytest.raises(CodecError) as e:
        gen_mixing_matrix(1, 0, 16)
    assert e.value.code == "invalid-shape"
    with pytest.raises(CodecError):
        gen_mixing_matrix(1, 17, 16)


def test_identity_constructor():
    ident = MixingMatrix.identity(9)
    assert np.array_equal(ident.entries, np.eye(9))
    assert ident.m == ident.k == 9


# --- residuals --------------------------------------------------------------

def test_residual_of_identical_frames_is_zero():
    f = Frame(np.full((8, 8), 77, np.uint8))
    assert np.all(compute_residual(f, f).pixels == 0)


def test_residual_extremes():
    lo = Frame(np.zeros((4, 4), np.uint8))
    hi = Frame(np.full((4, 4), 255, np.uint8))
    assert np.all(compute_residual(lo, hi).pixels == -255)
    assert np.all(compute_residual(hi, lo).pixels == 255)


def test_residual_reconstruction_exact():
    # key + residual reproduces the frame exactly, integer arithmetic
    rng = np.random.default_rng(0)
    for _ in range(1000):
        fp = rng.integers(0, 256, size=(6, 6))
        kp = rng.integers(0, 256, size=(6, 6))
        res = compute_residual(Frame(fp), Frame(kp))
        assert np.array_equal(kp.astype(np.int32) + res.pixels, fp)


def test_residual_dimension_mismatch():
    with pytest.raises(CodecError) as e:
        compute_residual(Frame(np.zeros((4, 4), np.uint8)),
                         Frame(np.zeros((4, 8), np.uint8)))
    assert e.value.code == "dimension-mismatch"


# --- composite assembly -----------------------------------------------------

def _const_residuals(values, h=32, w=32):
    return [ResidualFrame(np.full((h, w), v, np.int16)) for v in values]


def test_composite_side():
    block = assemble_composite(_const_residuals([0, 0, 0, 0]), (0, 0), 16)
    assert block.side == 32 and block.tile_count == 4


def test_composite_zero_propagation():
    block = assemble_composite(_const_residuals([0] * 4), (1, 1), 16)
    assert np.all(block.values == 0)


def test_composite_tile_layout():
    # frame j constant j: tiles (0,0)=0, (1,0)=1, (0,1)=2, (1,1)=3
    block = assemble_composite(_const_residuals([0, 1, 2, 3]), (0, 0), 16)
    v = block.values
    assert np.all(v[:16, :16] == 0)
    assert np.all(v[:16, 16:] == 1)
    assert np.all(v[16:, :16] == 2)
    assert np.all(v[16:, 16:] == 3)


def test_composite_layout_matches_index_oracle():
    # direct index arithmetic, independent of the implementation's slicing
    rng = np.random.default_rng(5)
    residuals = [ResidualFrame(rng.integers(-255, 256, size=(32, 48)))
                 for _ in range(4)]
    bx, by, bs = 2, 1, 16
    block = assemble_composite(residuals, (bx, by), bs)
    for j in range(4):
        tx, ty = j % 2, j // 2
        for r in range(bs):
            for c in range(bs):
                assert block.values[ty * bs + r, tx * bs + c] == \
                    residuals[j].pixels[by * bs + r, bx * bs + c]


def test_composite_disassembly_is_inverse():
    rng = np.random.default_rng(6)
    residuals = [ResidualFrame(rng.integers(-255, 256, size=(32, 32)))
                 for _ in range(4)]
    block = assemble_composite(residuals, (0, 1), 16)
    tiles = disassemble_composite(block, 4)
    for j, tile in enumerate(tiles):
        expect = residuals[j].pixels[16:32, 0:16]
        assert np.array_equal(tile, expect)


def test_composite_out_of_grid():
    with pytest.raises(CodecError) as e:
        assemble_composite(_const_residuals([0] * 4), (2, 0), 16)
    assert e.value.code == "out-of-grid"


def test_composite_bad_count():
    with pytest.raises(CodecError) as e:
        assemble_composite(_const_residuals([0] * 3), (0, 0), 16)
    assert e.value.code == "n-not-perfect-square"


# --- batch mixing -----------------------------------------------------------

def test_mix_zero_block():
    matrix = gen_mixing_matrix(1, 64, 1024)
    block = assemble_composite(_const_residuals([0] * 4), (0, 0), 16)
    assert np.all(mix_batch(matrix, block).values == 0)


def test_mix_linearity():
    rng = np.random.default_rng(2)
    matrix = gen_mixing_matrix(9, 32, 64)
    for _ in range(20):
        u = rng.normal(size=(8, 8)) * 100
        v = rng.normal(size=(8, 8)) * 100
        a, b = rng.normal(size=2)
        mu = mix_batch(matrix, CompositeBlock(8, u, (0, 0))).values
        mv = mix_batch(matrix, CompositeBlock(8, v, (0, 0))).values
        mixed = mix_batch(matrix, CompositeBlock(8, a * u + b * v, (0, 0))).values
        ref = a * mu + b * mv
        assert np.max(np.abs(mixed - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


def test_mix_identity_matrix():
    ident = MixingMatrix.identity(64)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(8, 8)) * 50
    out = mix_batch(ident, CompositeBlock(8, vals, (0, 0))).values
    assert np.array_equal(out, vals.ravel())


def test_mix_shape_mismatch():
    matrix = gen_mixing_matrix(1, 16, 64)
    with pytest.raises(CodecError) as e:
        mix_batch(matrix, CompositeBlock(16, np.zeros((16, 16)), (0, 0)))
    assert e.value.code == "shape-mismatch"


# --- streamed mixing --------------------------------------------------------

def _random_group(rng, h=48, w=64, n=4):
    return [ResidualFrame(rng.integers(-255, 256, size=(h, w))) for _ in range(n)]


def test_stream_zero_group():
    matrix = gen_mixing_matrix(4, 128, 1024)
    grid = BlockGrid.for_dims(64, 48, 16)
    acc = StreamAccumulator(matrix, grid, 4)
    for j in range(4):
        acc.push(ResidualFrame(np.zeros((48, 64), np.int16)), j)
    out = acc.finish()
    assert len(out) == grid.num_blocks
    assert all(np.all(mv.values == 0) and mv.values.shape == (128,) for mv in out)


def test_stream_equals_batch():
    rng = np.random.default_rng(10)
    matrix = gen_mixing_matrix(77, 256, 1024)
    grid = BlockGrid.for_dims(64, 48, 16)
    residuals = _random_group(rng)
    acc = StreamAccumulator(matrix, grid, 4)
    for j, res in enumerate(residuals):
        acc.push(res, j)
    streamed = acc.finish()
    for mv, (bx, by) in zip(streamed, grid.positions()):
        batch = mix_batch(matrix, assemble_composite(residuals, (bx, by), 16))
        assert np.max(np.abs(mv.values - batch.values)) <= 1e-9


def test_stream_out_of_order():
    matrix = gen_mixing_matrix(4, 16, 1024)
    grid = BlockGrid.for_dims(32, 32, 16)
    acc = StreamAccumulator(matrix, grid, 4)
    with pytest.raises(CodecError) as e:
        acc.push(ResidualFrame(np.zeros((32, 32), np.int16)), 2)
    assert e.value.code == "out-of-order-frame"


def test_stream_incomplete_group():
    matrix = gen_mixing_matrix(4, 16, 1024)
    grid = BlockGrid.for_dims(32, 32, 16)
    acc = StreamAccumulator(matrix, grid, 4)
    for j in range(3):
        acc.push(ResidualFrame(np.zeros((32, 32), np.int16)), j)
    with pytest.raises(CodecError) as e:
        acc.finish()
    assert e.value.code == "incomplete-group"


def test_stream_consumed_after_finish():
    matrix = gen_mixing_matrix(4, 16, 256)
    grid = BlockGrid.for_dims(16, 16, 8)
    acc = StreamAccumulator(matrix, grid, 4)
    for j in range(4):
        acc.push(ResidualFrame(np.zeros((16, 16), np.int16)), j)
    acc.finish()
    with pytest.raises(CodecError) as e:
        acc.finish()
    assert e.value.code == "accumulator-consumed"


def test_stream_measurement_buffer_size():
    # memory held for measurements is exactly (number of blocks) x m doubles
    matrix = gen_mixing_matrix(4, 100, 1024)
    grid = BlockGrid.for_dims(176, 144, 16)
    acc = StreamAccumulator(matrix, grid, 4)
    assert acc.partial.shape == (grid.num_blocks, 100)
    assert acc.partial.nbytes == grid.num_blocks * 100 * 8
