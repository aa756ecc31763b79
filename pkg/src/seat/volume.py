"""Axis-aligned voxel grids and the binary volume file format.

Grid convention: voxel (x, y, z) covers
[origin + (x, y, z) * voxel_size, origin + (x+1, y+1, z+1) * voxel_size);
its center is origin + (x+0.5, y+0.5, z+0.5) * voxel_size. Linear index is
x-fastest: i = x + nx * (y + ny * z). Files are little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, OutOfBoundsError

VOLUME_MAGIC = b"SEATVOL1"

KIND_TAGS = {"tsdf": 0, "occupancy": 1, "feature": 2}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


@dataclass(frozen=True)
class VoxelVolume:
    """Scalar voxel grid. data has shape (nx, ny, nz); kind tags the contents.

    tsdf data lies in [-1, 1]; occupancy is uint8 {0, 1}; feature is unconstrained.
    """

    origin: np.ndarray
    voxel_size: float
    data: np.ndarray
    kind: str = "occupancy"

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "origin", origin)
        origin.setflags(write=False)
        if self.kind not in KIND_TAGS:
            raise InvalidArgumentError(f"unknown volume kind {self.kind!r}")
        if self.voxel_size <= 0:
            raise InvalidArgumentError("voxel_size must be positive")
        data = self.data
        if data.ndim != 3:
            raise InvalidArgumentError("volume data must be 3-D (nx, ny, nz)")
        if self.kind == "occupancy":
            data = np.ascontiguousarray(data.astype(np.uint8))
            if data.max(initial=0) > 1:
                raise InvalidArgumentError("occupancy values must be 0 or 1")
        elif self.kind == "tsdf":
            data = np.ascontiguousarray(data.astype(np.float32))
            if data.size and (data.min() < -1.0 - 1e-6 or data.max() > 1.0 + 1e-6):
                raise InvalidArgumentError("tsdf values must lie in [-1, 1]")
        else:
            data = np.ascontiguousarray(data.astype(np.float32))
        object.__setattr__(self, "data", data)
        data.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.voxel_size

    def voxel_centers(self) -> np.ndarray:
        """(nx, ny, nz, 3) array of voxel-center world coordinates."""
        nx, ny, nz = self.dims
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.voxel_size
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.voxel_size
        zs = self.origin[2] + (np.arange(nz) + 0.5) * self.voxel_size
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def world_to_index(self, points) -> np.ndarray:
        """Floor-divide world points into integer voxel indices (may be out of range)."""
        pts = np.asarray(points, dtype=np.float64)
        return np.floor((pts - self.origin) / self.voxel_size).astype(np.int64)

    def index_to_world(self, idx) -> np.ndarray:
        """Voxel-center world coordinates for integer indices."""
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size

    def contains_point(self, point) -> bool:
        idx = self.world_to_index(point)
        return bool(np.all(idx >= 0) and np.all(idx < np.array(self.dims)))

    def sample(self, points, fill=0):
        """Nearest-voxel lookup of world points; out-of-grid reads `fill`."""
        idx = self.world_to_index(points)
        idx = np.atleast_2d(idx)
        inside = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)
        out = np.full(idx.shape[0], fill, dtype=self.data.dtype)
        ii = idx[inside]
        out[inside] = self.data[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def occupied_indices(self) -> np.ndarray:
        """(N, 3) indices of nonzero voxels (occupancy) or non-positive tsdf."""
        if self.kind == "tsdf":
            mask = self.data <= 0
        else:
            mask = self.data != 0
        return np.argwhere(mask)

    def count_occupied(self) -> int:
        return int(len(self.occupied_indices()))

    def with_data(self, data: np.ndarray, kind: str | None = None) -> "VoxelVolume":
        return VoxelVolume(self.origin, self.voxel_size, data, kind or self.kind)


def linear_index(x, y, z, dims) -> np.ndarray:
    """x-fastest linear index used by the volume file layout."""
    nx, ny, _ = dims
    return np.asarray(x) + nx * (np.asarray(y) + ny * np.asarray(z))


def linear_to_xyz(i, dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nx, ny, _ = dims
    i = np.asarray(i)
    return i % nx, (i // nx) % ny, i // (nx * ny)


def empty_volume(origin, voxel_size: float, dims, kind: str = "occupancy") -> VoxelVolume:
    dtype = np.uint8 if kind == "occupancy" else np.float32
    fill = 1.0 if kind == "tsdf" else 0
    data = np.full(tuple(int(d) for d in dims), fill, dtype=dtype)
    return VoxelVolume(np.asarray(origin, dtype=np.float64), voxel_size, data, kind)


def grid_for_bounds(lo, hi, voxel_size: float, pad: float = 0.0) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Origin and dims of the smallest grid covering [lo, hi] inflated by pad."""
    lo = np.asarray(lo, dtype=np.float64) - pad
    hi = np.asarray(hi, dtype=np.float64) + pad
    dims = np.maximum(np.ceil((hi - lo) / voxel_size - 1e-9).astype(int), 1)
    return lo, (int(dims[0]), int(dims[1]), int(dims[2]))


def save_volume(vol: VoxelVolume, path) -> None:
    """magic, u32 nx ny nz, f32 voxel_size, f32 origin[3], u8 kind, f32 data x-fastest."""
    path = Path(path)
    nx, ny, nz = vol.dims
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<3I", nx, ny, nz))
        f.write(struct.pack("<f", vol.voxel_size))
        f.write(struct.pack("<3f", *vol.origin))
        f.write(struct.pack("<B", KIND_TAGS[vol.kind]))
        f.write(np.asfortranarray(vol.data.astype(np.float32)).tobytes(order="F"))


def load_volume(path) -> VoxelVolume:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != VOLUME_MAGIC:
            raise InvalidArgumentError(f"{path}: bad volume magic {magic!r}")
        nx, ny, nz = struct.unpack("<3I", f.read(12))
        (voxel_size,) = struct.unpack("<f", f.read(4))
        origin = np.array(struct.unpack("<3f", f.read(12)), dtype=np.float64)
        (tag,) = struct.unpack("<B", f.read(1))
        kind = TAG_KINDS.get(tag)
        if kind is None:
            raise InvalidArgumentError(f"{path}: unknown kind tag {tag}")
        raw = np.frombuffer(f.read(4 * nx * ny * nz), dtype="<f4")
    data = raw.reshape((nx, ny, nz), order="F")
    if kind == "occupancy":
        data = (data != 0).astype(np.uint8)
    return VoxelVolume(origin, float(voxel_size), data, kind)


def crop_volume(vol: VoxelVolume, center, delta: float) -> VoxelVolume:
    """Cube crop of side 2*delta around `center`, rounded up to an odd voxel count
    so the voxel containing `center` is the exact center; out-of-grid reads as
    empty (occupancy 0, tsdf +1, feature 0).
    """
    center = np.asarray(center, dtype=np.float64)
    if delta <= 0:
        raise InvalidArgumentError("crop delta must be positive")
    cidx = vol.world_to_index(center)
    dims = np.array(vol.dims)
    if np.any(cidx < 0) or np.any(cidx >= dims):
        raise OutOfBoundsError(f"crop center {center} outside volume bounds")
    side = int(np.ceil(2.0 * delta / vol.voxel_size - 1e-9))
    if side % 2 == 0:
        side += 1
    half = side // 2
    fill = 1.0 if vol.kind == "tsdf" else 0
    dtype = np.uint8 if vol.kind == "occupancy" else np.float32
    out = np.full((side, side, side), fill, dtype=dtype)
    lo = cidx - half
    hi = lo + side
    src_lo = np.maximum(lo, 0)
    src_hi = np.minimum(hi, dims)
    dst_lo = src_lo - lo
    dst_hi = dst_lo + (src_hi - src_lo)
    if np.all(src_hi > src_lo):
        out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = vol.data[
            src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
        ]
    origin = vol.origin + lo * vol.voxel_size
    return VoxelVolume(origin, vol.voxel_size, out, vol.kind)


def occupancy_from_tsdf(vol: VoxelVolume) -> VoxelVolume:
    """Occupied where tsdf <= 0 (at or behind the observed surface)."""
    if vol.kind == "occupancy":
        return vol
    return VoxelVolume(vol.origin, vol.voxel_size, (vol.data <= 0).astype(np.uint8), "occupancy")


def volumes_overlap(a: VoxelVolume, b: VoxelVolume) -> int:
    """Count voxels of `a` whose centers land in occupied voxels of `b`."""
    occ = a.occupied_indices()
    if len(occ) == 0:
        return 0
    pts = a.index_to_world(occ)
    return int(np.count_nonzero(b.sample(pts, fill=0)))
