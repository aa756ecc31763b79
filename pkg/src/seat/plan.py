"""Pick-hover-insert plans and their kinematic simulation against a scene."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .errors import NotGraspableError
from .geometry import Pose, quat_rotate, quat_to_matrix
from .mesh import voxelize_fit
from .scene import Scene
from .volume import VoxelVolume

HOVER_OFFSET = np.array([0.0, 0.0, 0.1])  # meters, along the place pose's local z
SUCTION_CUP_DIAMETER = 0.01
FLAT_NORMAL_TOL_DEG = 10.0
INSERTION_STEP = 0.001


@dataclass(frozen=True)
class ActionPlan:
    object_id: str
    grasp: Pose
    hover: Pose
    place: Pose
    segments: tuple  # ((from Pose, to Pose), ...)

    def to_dict(self, feasible: bool | None = None, reason: str | None = None) -> dict:
        d = {
            "object_id": self.object_id,
            "grasp": self.grasp.to_dict(),
            "hover": self.hover.to_dict(),
            "place": self.place.to_dict(),
            "segments": [{"from": a.to_dict(), "to": b.to_dict()} for a, b in self.segments],
        }
        if feasible is not None:
            d["feasible"] = feasible
            d["reason"] = reason
        return d


def grasp_pose_topdown(
    completed: VoxelVolume,
    start_pose: Pose,
    cup_diameter: float = SUCTION_CUP_DIAMETER,
) -> Pose:
    """Top-down suction grasp at the centroid of the largest flat top patch.

    Flat patches are connected columns within one voxel of a common top level
    (with quantized heights this realizes roughly the 10 deg normal tolerance:
    a plane tilted ~10 deg spans about a cup diameter inside the band). A
    patch qualifies only if erosion by the cup radius leaves a core.
    """
    occ = completed.data.astype(bool)
    if completed.kind == "tsdf":
        occ = completed.data <= 0
    if not occ.any():
        raise NotGraspableError("object volume is empty")
    vs = completed.voxel_size
    nz = occ.shape[2]
    ks = np.where(occ, np.arange(nz)[None, None, :], -1)
    height = ks.max(axis=2)
    has = height >= 0

    r_vox = max(int(np.ceil(cup_diameter / 2 / vs)), 1)
    yy, xx = np.mgrid[-r_vox:r_vox + 1, -r_vox:r_vox + 1]
    disk = (xx**2 + yy**2) <= r_vox**2

    # flat patches: connected columns within 1 voxel of a common top level
    levels = np.unique(height[has])[::-1]
    best = None
    for lvl in levels:
        mask = has & (height >= lvl - 1) & (height <= lvl)
        labels, n = ndi.label(mask)
        for lab in range(1, n + 1):
            patch = labels == lab
            if not (height[patch] == lvl).any():
                continue
            area = int(patch.sum())
            if best is not None and area <= best[0]:
                continue
            core = ndi.binary_erosion(patch, structure=disk)
            if core.any():
                best = (area, patch, core, lvl)
    if best is None:
        raise NotGraspableError(f"no flat patch admits a {cup_diameter * 1e3:.0f} mm suction cup")
    _, patch, core, lvl = best
    core_idx = np.argwhere(core)
    centroid = np.argwhere(patch).mean(axis=0)
    nearest = core_idx[np.argmin(np.sum((core_idx - centroid) ** 2, axis=1))]
    grasp_xy = completed.origin[:2] + (nearest + 0.5) * vs
    grasp_z = completed.origin[2] + (lvl + 1) * vs  # top face of the voxel layer
    return Pose(np.array([grasp_xy[0], grasp_xy[1], grasp_z]))


def make_plan(grasp: Pose, place: Pose, object_id: str = "", start: Pose | None = None) -> ActionPlan:
    """Waypoints: approach, descend, lift, transit to hover, straight-line insert."""
    hover = place.compose(Pose(HOVER_OFFSET))
    above_grasp = Pose(grasp.p + np.array([0, 0, 0.1]), grasp.q)
    if start is None:
        start = above_grasp
    segments = (
        (start, above_grasp),
        (above_grasp, grasp),
        (grasp, above_grasp),
        (above_grasp, hover),   # orientation change completes here
        (hover, place),         # insertion
    )
    return ActionPlan(object_id, grasp, hover, place, segments)


def _slerp(q0, q1, t: float) -> np.ndarray:
    d = float(np.dot(q0, q1))
    if d < 0:
        q1 = -np.asarray(q1)
        d = -d
    if d > 0.9999995:
        q = (1 - t) * np.asarray(q0) + t * np.asarray(q1)
        return q / np.linalg.norm(q)
    th = np.arccos(np.clip(d, -1, 1))
    return (np.sin((1 - t) * th) * np.asarray(q0) + np.sin(t * th) * np.asarray(q1)) / np.sin(th)


CONTACT_BAND_VOXELS = 2  # CSG grid alias + observation grid alias


def insertion_collision_volume(assembly_occ: VoxelVolume, contact_voxels: int = CONTACT_BAND_VOXELS) -> VoxelVolume:
    """Kit solid eroded by the contact band: grazing the surface is contact,
    penetrating past it is collision. The band covers the quantization stack
    between the object grid, the CSG grid and a resampled world-frame kit
    grid (about two voxels of slack in total)."""
    if contact_voxels <= 0 or not assembly_occ.data.any():
        return assembly_occ
    interior = ndi.binary_erosion(assembly_occ.data.astype(bool), iterations=contact_voxels)
    return assembly_occ.with_data(interior.astype(np.uint8))


def check_straight_insertion(
    object_vol: VoxelVolume,
    assembly_occ: VoxelVolume,
    plan: ActionPlan,
    step: float = INSERTION_STEP,
    contact_voxels: int = CONTACT_BAND_VOXELS,
) -> bool:
    """True iff the hover-to-place segment never penetrates the kit solid.

    `object_vol` is the object's occupancy in its local frame; it is swept
    along the insertion segment at `step` resolution (position lerp +
    quaternion slerp) and tested voxel-against-voxel, allowing surface
    contact within `contact_voxels` (see insertion_collision_volume).
    """
    assembly_occ = insertion_collision_volume(assembly_occ, contact_voxels)
    if not assembly_occ.data.any():
        return True
    occ_idx = object_vol.occupied_indices()
    if len(occ_idx) == 0:
        return True
    local_pts = object_vol.index_to_world(occ_idx)
    hover, place = plan.segments[-1]
    dist = float(np.linalg.norm(place.p - hover.p))
    n_steps = max(int(np.ceil(dist / step)), 1)
    same_q = float(np.dot(hover.q, place.q)) > 0.9999999
    base = local_pts @ quat_to_matrix(place.q).T if same_q else None
    for i in range(n_steps + 1):
        t = i / n_steps
        p = (1 - t) * hover.p + t * place.p
        if same_q:
            world = base + p
        else:
            q = _slerp(hover.q, place.q, t)
            world = quat_rotate(q, local_pts) + p
        if np.any(assembly_occ.sample(world, fill=0)):
            return False
    return True


@dataclass(frozen=True)
class ExecutionOutcome:
    scene: Scene
    success: bool
    reason: str | None = None


def execute_plan_sim(
    scene: Scene,
    plan: ActionPlan,
    object_volume: VoxelVolume | None = None,
    collision_volume: VoxelVolume | None = None,
) -> ExecutionOutcome:
    """Kinematic stand-in for execution: apply the place pose if insertion is clear.

    The simulator checks against ground-truth geometry; snapping quality shows
    up only through the plan's poses. `collision_volume` is the pre-eroded
    assembly interior (see insertion_collision_volume); it is derived from the
    scene when not supplied. On collision the scene is unchanged and the
    failure reason is reported.
    """
    idx = scene.object_index(plan.object_id)  # raises NotFoundError for unknown ids
    obj = scene.objects[idx]
    if object_volume is None:
        object_volume = voxelize_fit(obj.mesh, 0.001)
    if collision_volume is None:
        collision_volume = insertion_collision_volume(scene.assembly.build_occupancy(0.001))
    if not check_straight_insertion(object_volume, collision_volume, plan, contact_voxels=0):
        return ExecutionOutcome(scene, False, "collision-on-insert")
    return ExecutionOutcome(scene.with_object_pose(plan.object_id, plan.place), True, None)
