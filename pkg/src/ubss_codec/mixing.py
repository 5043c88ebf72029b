"""Encoder math: seeded Gaussian measurement, residuals, composite tiling, streamed mixing.

The measurement matrix is never transmitted; the decoder regenerates it
bit-identically from the header fields (seed, m, k) using a fixed generator:

* uint64 stream: SplitMix64, i.e. word i (0-based) is the SplitMix64 finalizer
  applied to ``seed + (i+1) * 0x9E3779B97F4A7C15 (mod 2^64)``;
* each word maps to a uniform in (0, 1) via ``((word >> 11) + 0.5) * 2^-53``;
* consecutive uniform pairs feed the Box-Muller transform, emitting
  ``r*cos(theta)`` then ``r*sin(theta)``;
* normals fill the matrix row-major and are scaled by ``1/sqrt(m)`` so entries
  are N(0, 1/m).

This scheme is identified by ``GENERATOR_SPLITMIX64_BOXMULLER`` in the
bitstream header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CodecError
from .frames import BlockGrid, Frame, ResidualFrame, _locked, is_perfect_square

GENERATOR_SPLITMIX64_BOXMULLER = 1

_U64_MASK = 0xFFFFFFFFFFFFFFFF
_SM64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_SM64_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(state: np.ndarray) -> np.ndarray:
    z = (state ^ (state >> np.uint64(30))) * _SM64_MIX1
    z = (z ^ (z >> np.uint64(27))) * _SM64_MIX2
    return z ^ (z >> np.uint64(31))


def _uint64_stream(seed: int, count: int) -> np.ndarray:
    base = np.uint64(seed & _U64_MASK)
    idx = np.arange(1, count + 1, dtype=np.uint64)
    return _splitmix64(base + idx * _SM64_GAMMA)


def _standard_normals(seed: int, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    words = _uint64_stream(seed, 2 * pairs)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = (2.0 * np.pi) * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


@dataclass
class MixingMatrix:
    """Seeded m-by-k Gaussian measurement matrix, entries N(0, 1/m).

    `seed` is None only for matrices that bypass the generator (the identity
    constructor below); such matrices cannot appear in a bitstream.
    """

    seed: int | None
    m: int
    k: int
    entries: np.ndarray

    @classmethod
    def identity(cls, k: int) -> "MixingMatrix":
        """Square identity matrix for tests and diagnostics (m = k)."""
        return cls(seed=None, m=k, k=k, entries=_locked(np.eye(k)))


def gen_mixing_matrix(seed: int, m: int, k: int) -> MixingMatrix:
    """Generate the measurement matrix deterministically from (seed, m, k)."""
    if m < 1 or m > k:
        raise CodecError("invalid-shape", f"need 1 <= m <= k, got m={m} k={k}")
    entries = (_standard_normals(seed, m * k) / math.sqrt(m)).reshape(m, k)
    return MixingMatrix(seed=seed & _U64_MASK, m=m, k=k, entries=_locked(entries))


def compute_residual(frame: Frame, key: Frame) -> ResidualFrame:
    """Signed difference frame - key, no clipping."""
    if (frame.height, frame.width) != (key.height, key.width):
        raise CodecError("dimension-mismatch",
                         f"{frame.width}x{frame.height} vs key {key.width}x{key.height}")
    return ResidualFrame(frame.pixels.astype(np.int16) - key.pixels.astype(np.int16))


@dataclass
class CompositeBlock:
    """n co-located blocks arranged as one square tile, the solver's image domain.

    `tile_count` is the number of source blocks the composite was assembled
    from (None for decoded composites, where the split is supplied explicitly).
    """

    side: int
    values: np.ndarray
    grid_position: tuple
    tile_count: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.side, self.side):
            raise CodecError("shape-mismatch",
                             f"composite values {vals.shape} != ({self.side}, {self.side})")
        self.values = _locked(vals)


@dataclass
class MeasurementVector:
    """Observed measurements of one composite block position."""

    grid_position: tuple
    values: np.ndarray

    def __post_init__(self):
        self.values = _locked(np.asarray(self.values, dtype=np.float64).reshape(-1))


def tile_raster_indices(side: int, n: int):
    """Raveled row-major indices of each of the n tiles of a side x side composite.

    Tile j occupies tile-grid cell (j mod sqrt(n), j div sqrt(n)).
    """
    if not is_perfect_square(n):
        raise CodecError("n-not-perfect-square", f"n={n}")
    t = math.isqrt(n)
    if side % t:
        raise CodecError("shape-mismatch", f"side {side} not divisible by {t}")
    bs = side // t
    base = np.arange(side * side).reshape(side, side)
    return [base[(j // t) * bs:(j // t + 1) * bs, (j % t) * bs:(j % t + 1) * bs].ravel()
            for j in range(n)]


def assemble_composite(residuals, grid_position, block_size: int) -> CompositeBlock:
    """Place the co-located block of each residual frame into one composite tile."""
    residuals = list(residuals)
    n = len(residuals)
    if not is_perfect_square(n):
        raise CodecError("n-not-perfect-square", f"{n} residual frames")
    dims = (residuals[0].height, residuals[0].width)
    for r in residuals:
        if (r.height, r.width) != dims:
            raise CodecError("inconsistent-dimensions", "residual frames differ in size")
    grid = BlockGrid.for_dims(dims[1], dims[0], block_size)
    bx, by = grid_position
    if not (0 <= bx < grid.cols and 0 <= by < grid.rows):
        raise CodecError("out-of-grid",
                         f"position ({bx}, {by}) outside {grid.cols}x{grid.rows} grid")
    t = math.isqrt(n)
    side = t * block_size
    values = np.empty((side, side))
    for j, r in enumerate(residuals):
        tx, ty = j % t, j // t
        block = r.pixels[by * block_size:(by + 1) * block_size,
                         bx * block_size:(bx + 1) * block_size]
        values[ty * block_size:(ty + 1) * block_size,
               tx * block_size:(tx + 1) * block_size] = block
    return CompositeBlock(side=side, values=values, grid_position=(bx, by), tile_count=n)


def disassemble_composite(block: CompositeBlock, n: int):
    """Inverse of assemble_composite: split a composite back into n tiles."""
    if not is_perfect_square(n):
        raise CodecError("n-not-perfect-square", f"n={n}")
    t = math.isqrt(n)
    if block.side % t:
        raise CodecError("shape-mismatch", f"side {block.side} not divisible by {t}")
    bs = block.side // t
    return [np.array(block.values[(j // t) * bs:(j // t + 1) * bs,
                                  (j % t) * bs:(j % t + 1) * bs])
            for j in range(n)]


def mix_batch(matrix: MixingMatrix, block: CompositeBlock) -> MeasurementVector:
    """Measure a composite: matrix times the row-major vectorized block.

    Accumulation runs tile by tile in index order 0..n-1 so the result matches
    streamed accumulation bit for bit.
    """
    if matrix.k != block.side * block.side:
        raise CodecError("shape-mismatch",
                         f"matrix k={matrix.k} vs composite side {block.side}")
    v = block.values.ravel()
    n = block.tile_count or 1
    out = np.zeros(matrix.m)
    for idx in tile_raster_indices(block.side, n):
        out += np.ascontiguousarray(matrix.entries[:, idx]) @ v[idx]
    return MeasurementVector(grid_position=block.grid_position, values=out)


class StreamAccumulator:
    """Accumulates per-block measurements one residual frame at a time.

    Only the running (num_blocks, m) partial sums are held, never a frame
    group: pushing frame j adds A'_j times each of its blocks, where A'_j is
    the column sub-block of the mixing matrix for composite tile j.
    """

    def __init__(self, matrix: MixingMatrix, grid: BlockGrid, n: int):
        if not is_perfect_square(n):
            raise CodecError("n-not-perfect-square", f"n={n}")
        if matrix.k != n * grid.block_size * grid.block_size:
            raise CodecError("shape-mismatch",
                             f"matrix k={matrix.k}, group needs {n * grid.block_size ** 2}")
        self.matrix = matrix
        self.grid = grid
        self.n = n
        side = math.isqrt(n) * grid.block_size
        self._tile_idx = tile_raster_indices(side, n)
        self.partial = np.zeros((grid.num_blocks, matrix.m))
        self.frames_pushed = 0
        self._finished = False

    def push(self, residual: ResidualFrame, frame_index_in_group: int) -> None:
        """Fold one residual frame into the partial sums. Frames must arrive in order."""
        if self._finished:
            raise CodecError("accumulator-consumed", "finish() was already called")
        if frame_index_in_group != self.frames_pushed or frame_index_in_group >= self.n:
            raise CodecError("out-of-order-frame",
                             f"got frame {frame_index_in_group}, expected {self.frames_pushed} of {self.n}")
        bs = self.grid.block_size
        if (residual.height, residual.width) != (self.grid.rows * bs, self.grid.cols * bs):
            raise CodecError("dimension-mismatch",
                             f"residual {residual.width}x{residual.height} does not match grid")
        sub = np.ascontiguousarray(self.matrix.entries[:, self._tile_idx[frame_index_in_group]])
        px = residual.pixels.astype(np.float64)
        i = 0
        for by in range(self.grid.rows):
            for bx in range(self.grid.cols):
                vec = px[by * bs:(by + 1) * bs, bx * bs:(bx + 1) * bs].ravel()
                self.partial[i] += sub @ vec
                i += 1
        self.frames_pushed += 1

    def finish(self):
        """Return one MeasurementVector per block position; consumes the accumulator."""
        if self._finished:
            raise CodecError("accumulator-consumed", "finish() was already called")
        if self.frames_pushed != self.n:
            raise CodecError("incomplete-group",
                             f"{self.frames_pushed} of {self.n} frames pushed")
        self._finished = True
        out = [MeasurementVector(grid_position=(bx, by), values=self.partial[i].copy())
               for i, (bx, by) in enumerate(self.grid.positions())]
        self.partial = None
        return out
