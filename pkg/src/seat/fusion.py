"""Projective TSDF fusion of a single masked depth view into a voxel grid."""

from __future__ import annotations

import numpy as np

from .errors import NotFoundError
from .geometry import quat_to_matrix
from .render import DepthImage, InstanceMask
from .volume import VoxelVolume

DEFAULT_VOXEL_SIZE = 0.00089  # meters
DEFAULT_DIMS = (128, 128, 128)
TRUNCATION_VOXELS = 5.0


def tsdf_fuse(
    depth: DepthImage,
    mask: InstanceMask,
    instance: int,
    origin,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    dims=DEFAULT_DIMS,
    truncation_voxels: float = TRUNCATION_VOXELS,
) -> VoxelVolume:
    """Fuse the pixels of one instance into a truncated signed distance volume.

    Values are normalized to [-1, 1]: positive in observed free space in front
    of the surface, negative at/behind it, +1 where nothing was observed
    (outside the instance mask, no depth return, or outside the frustum).
    """
    if not np.any(mask.labels == instance):
        raise NotFoundError(f"instance {instance} not present in mask")
    origin = np.asarray(origin, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    cam = depth.camera
    trunc = truncation_voxels * voxel_size

    nx, ny, nz = dims
    xs = origin[0] + (np.arange(nx) + 0.5) * voxel_size
    ys = origin[1] + (np.arange(ny) + 0.5) * voxel_size
    zs = origin[2] + (np.arange(nz) + 0.5) * voxel_size
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    r_wc = quat_to_matrix(cam.pose.q)
    pc = (pts - cam.pose.p) @ r_wc
    zc = pc[:, 2]
    if cam.mode == "ortho":
        u = pc[:, 0] / cam.pitch + cam.width / 2.0
        v = pc[:, 1] / cam.pitch + cam.height / 2.0
        valid = np.ones_like(zc, dtype=bool)
    else:
        valid = zc > 1e-6
        safe_z = np.where(valid, zc, 1.0)
        u = cam.fx * pc[:, 0] / safe_z + cam.cx
        v = cam.fy * pc[:, 1] / safe_z + cam.cy

    col = np.floor(u).astype(np.int64)
    row = np.floor(v).astype(np.int64)
    valid &= (col >= 0) & (col < cam.width) & (row >= 0) & (row < cam.height)

    tsdf = np.ones(len(pts), dtype=np.float32)
    if valid.any():
        c, r = col[valid], row[valid]
        d = depth.data[r, c].astype(np.float64)
        seen = (mask.labels[r, c] == instance) & (d > 0)
        sdf = (d - zc[valid]) / trunc
        vals = np.clip(sdf, -1.0, 1.0).astype(np.float32)
        out = tsdf[valid]
        out[seen] = vals[seen]
        tsdf[valid] = out
    return VoxelVolume(origin, voxel_size, tsdf.reshape(dims), "tsdf")
