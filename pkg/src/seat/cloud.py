"""Labeled point clouds sampled from volume surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySurfaceError, InvalidArgumentError
from .volume import VoxelVolume


@dataclass(frozen=True)
class LabeledPointCloud:
    """Points (N, 3) in meters with a per-point label in {+1, -1}."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        lab = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if len(pts) == 0:
            raise InvalidArgumentError("point cloud must be non-empty")
        if len(lab) != len(pts):
            raise InvalidArgumentError("labels length must match points")
        if not np.all(np.isin(lab, (-1, 1))):
            raise InvalidArgumentError("labels must be +1 or -1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        pts.setflags(write=False)
        lab.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def joined(a: "LabeledPointCloud", b: "LabeledPointCloud") -> "LabeledPointCloud":
        return LabeledPointCloud(np.vstack([a.points, b.points]), np.concatenate([a.labels, b.labels]))


def surface_voxel_indices(vol: VoxelVolume) -> np.ndarray:
    """(N, 3) indices of surface voxels.

    Occupancy: occupied voxels with a free 6-neighbor (grid edge counts as free).
    TSDF: voxels at/behind the surface (<= 0) with an observed free neighbor (> 0).
    """
    if vol.kind == "tsdf":
        inside = vol.data <= 0
        outside = vol.data > 0
    else:
        inside = vol.data != 0
        outside = ~inside
    pad = np.ones(np.array(inside.shape) + 2, dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = outside
    boundary = inside & (
        pad[:-2, 1:-1, 1:-1] | pad[2:, 1:-1, 1:-1]
        | pad[1:-1, :-2, 1:-1] | pad[1:-1, 2:, 1:-1]
        | pad[1:-1, 1:-1, :-2] | pad[1:-1, 1:-1, 2:]
    )
    return np.argwhere(boundary)


def sample_surface_points(vol: VoxelVolume, n: int, label: int, rng_seed: int = 0) -> LabeledPointCloud:
    """Sample exactly n surface-voxel centers (with replacement if needed)."""
    if label not in (-1, 1):
        raise InvalidArgumentError("label must be +1 or -1")
    if n <= 0:
        raise InvalidArgumentError("n must be positive")
    idx = surface_voxel_indices(vol)
    if len(idx) == 0:
        raise EmptySurfaceError("volume has no surface voxels")
    rng = np.random.default_rng(rng_seed)
    pick = rng.choice(len(idx), size=n, replace=len(idx) < n)
    pts = vol.index_to_world(idx[pick])
    return LabeledPointCloud(pts, np.full(n, label, dtype=np.int8))
