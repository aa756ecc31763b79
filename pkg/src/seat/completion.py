"""Shape completion of partial TSDF volumes into occupancy solids.

Providers are pluggable by name. The geometric baselines stand in for a
learned completion network; the oracle voxelizes ground-truth geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidArgumentError
from .geometry import Pose
from .mesh import TriMesh, voxelize_mesh
from .volume import VoxelVolume, occupancy_from_tsdf


@dataclass(frozen=True)
class CompletionRequest:
    partial: VoxelVolume            # tsdf (or occupancy) observation
    mode: str = "visual_hull"       # extrude_ground | visual_hull | oracle
    gt: tuple[TriMesh, Pose] | None = None
    ground_z: float = 0.0           # world height of the support plane

    def __post_init__(self):
        if self.mode == "oracle" and self.gt is None:
            raise InvalidArgumentError("oracle completion requires ground-truth geometry")


def _require_content(vol: VoxelVolume) -> None:
    if vol.kind == "tsdf":
        if not (vol.data <= 0).any():
            raise EmptyInputError("partial volume observed no surface")
    elif not vol.data.any():
        raise EmptyInputError("partial volume is empty")


def complete_visual_hull(req: CompletionRequest) -> VoxelVolume:
    """Occupied wherever the single view could not prove free space."""
    _require_content(req.partial)
    return occupancy_from_tsdf(req.partial)


def complete_extrude_ground(req: CompletionRequest) -> VoxelVolume:
    """Fill every column from its topmost observed-surface voxel down to the ground plane."""
    _require_content(req.partial)
    vol = req.partial
    data = vol.data
    if vol.kind == "tsdf":
        inside = data <= 0
        outside = data > 0
    else:
        inside = data.astype(bool)
        outside = ~inside
    pad = np.ones(np.array(inside.shape) + 2, dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = outside
    surface = inside & (
        pad[:-2, 1:-1, 1:-1] | pad[2:, 1:-1, 1:-1]
        | pad[1:-1, :-2, 1:-1] | pad[1:-1, 2:, 1:-1]
        | pad[1:-1, 1:-1, :-2] | pad[1:-1, 1:-1, 2:]
    )
    nz = surface.shape[2]
    ks = np.where(surface, np.arange(nz)[None, None, :], -1)
    top = ks.max(axis=2)
    k_ground = max(int(np.floor((req.ground_z - vol.origin[2]) / vol.voxel_size)), 0)
    zs = np.arange(nz)[None, None, :]
    filled = (top[:, :, None] >= 0) & (zs >= k_ground) & (zs <= top[:, :, None])
    # never drop an observed surface voxel (columns whose surface dips below ground)
    filled |= surface
    return VoxelVolume(vol.origin, vol.voxel_size, filled.astype(np.uint8), "occupancy")


def complete_oracle(req: CompletionRequest) -> VoxelVolume:
    """Voxelized ground truth at its pose, on the partial volume's grid."""
    mesh, pose = req.gt
    vol = req.partial
    return voxelize_mesh(mesh.transformed(pose), vol.origin, vol.voxel_size, vol.dims)


COMPLETION_PROVIDERS = {
    "visual_hull": complete_visual_hull,
    "extrude_ground": complete_extrude_ground,
    "oracle": complete_oracle,
}

COMPLETION_MODES = tuple(COMPLETION_PROVIDERS)


def register_completion_provider(name: str, fn) -> None:
    COMPLETION_PROVIDERS[name] = fn


def complete(req: CompletionRequest) -> VoxelVolume:
    provider = COMPLETION_PROVIDERS.get(req.mode)
    if provider is None:
        raise InvalidArgumentError(f"unknown completion mode {req.mode!r}; known: {sorted(COMPLETION_PROVIDERS)}")
    return provider(req)
