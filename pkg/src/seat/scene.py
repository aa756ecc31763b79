"""Workspace synthesis and observation: objects on one side, kits on the other."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NotFoundError, WorkspaceFullError
from .fusion import DEFAULT_DIMS, DEFAULT_VOXEL_SIZE, tsdf_fuse
from .geometry import Pose, quat_from_axis_angle
from .kitgen import KitAssembly
from .mesh import TriMesh
from .render import Camera, DepthImage, InstanceMask, look_at_camera, render_depth
from .volume import VoxelVolume

KIT_SIDE_GAP = 0.06     # clearance between object region and the assembly
OBJECT_REGION_W = 0.28  # x extent of the object staging region
WORKSPACE_PAD = 0.05
KIT_VOLUME_PAD = 0.02


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    mesh: TriMesh           # normalized, local frame
    gt_start: Pose          # rest pose in the workspace
    gt_kit: Pose            # ground-truth kitting pose (world)
    pose: Pose              # current pose (starts at gt_start)


@dataclass(frozen=True)
class Scene:
    objects: tuple
    assembly: KitAssembly
    camera: Camera
    bounds: tuple  # (lo, hi) axis-aligned workspace box, world frame

    def object_index(self, object_id: str) -> int:
        for i, o in enumerate(self.objects):
            if o.object_id == object_id:
                return i
        raise NotFoundError(f"unknown object id {object_id!r}")

    def with_object_pose(self, object_id: str, pose: Pose) -> "Scene":
        i = self.object_index(object_id)
        objs = list(self.objects)
        objs[i] = replace(objs[i], pose=pose)
        return replace(self, objects=tuple(objs))

    def render_list(self) -> tuple[list, list]:
        geometry = [(o.mesh, o.pose) for o in self.objects]
        ids = list(range(1, len(self.objects) + 1))
        kit_id = self.kit_instance_id
        for mesh, pose in self.assembly.world_meshes():
            geometry.append((mesh, pose))
            ids.append(kit_id)
        return geometry, ids

    @property
    def kit_instance_id(self) -> int:
        return len(self.objects) + 1


@dataclass(frozen=True)
class Observation:
    depth: DepthImage
    masks: InstanceMask
    object_volumes: dict            # object_id -> VoxelVolume (tsdf, 128^3)
    kit_volume: VoxelVolume         # tsdf over the kit-side workspace
    start_poses: dict = field(default_factory=dict)  # object_id -> Pose (editor scene state)


def sample_scene(
    objects: list[tuple[str, TriMesh]],
    assembly: KitAssembly,
    rng_seed: int = 0,
    max_tries: int = 1000,
) -> Scene:
    """Drop objects at rest poses (flat side down, random yaw) beside the assembly."""
    if len(objects) != len(assembly.kits):
        raise WorkspaceFullError(
            f"need exactly one object per kit ({len(objects)} objects, {len(assembly.kits)} kits)"
        )
    rng = np.random.default_rng(rng_seed)

    alo, ahi = assembly.bounds()
    base = Pose(np.array([OBJECT_REGION_W / 2 + KIT_SIDE_GAP - alo[0], 0.0, 0.0]))
    assembly = assembly.with_base(base)
    alo, ahi = assembly.bounds()

    region_lo = np.array([-OBJECT_REGION_W, -max(0.12, (ahi[1] - alo[1]) / 2)])
    region_hi = np.array([0.0, max(0.12, (ahi[1] - alo[1]) / 2)])

    placed: list[tuple[np.ndarray, float]] = []
    scene_objects = []
    for i, (oid, mesh) in enumerate(objects):
        lo, hi = mesh.bounds()
        half_diag = float(np.linalg.norm((hi - lo)[:2]) / 2)
        for attempt in range(max_tries):
            yaw = float(rng.uniform(-np.pi, np.pi))
            xy = rng.uniform(region_lo + half_diag, region_hi - half_diag)
            ok = all(np.linalg.norm(xy - p) > r + half_diag + 0.005 for p, r in placed)
            if ok:
                break
        else:
            raise WorkspaceFullError(f"could not place object {oid} after {max_tries} tries")
        placed.append((xy, half_diag))
        start = Pose(np.array([xy[0], xy[1], -lo[2]]), quat_from_axis_angle([0, 0, 1], yaw))
        gt_kit = assembly.cavity_pose_world(i)
        scene_objects.append(SceneObject(oid, mesh, start, gt_kit, start))

    lo_b = np.array([region_lo[0] - WORKSPACE_PAD, min(region_lo[1], alo[1]) - WORKSPACE_PAD, 0.0])
    hi_b = np.array([ahi[0] + WORKSPACE_PAD, max(region_hi[1], ahi[1]) + WORKSPACE_PAD, max(ahi[2], 0.12) + 0.08])
    center = (lo_b + hi_b) / 2
    eye = np.array([center[0], lo_b[1] - 0.25, 0.8 * np.sin(np.pi / 4)])
    look = np.array([center[0], center[1], 0.0])
    dist = np.linalg.norm(look - eye)
    eye = look + (eye - look) / dist * 0.8  # camera 0.8 m from the workspace center
    camera = look_at_camera(eye, look, mode="pinhole", width=640, height=480, fx=580.0, fy=580.0, cx=319.5, cy=239.5)
    return Scene(tuple(scene_objects), assembly, camera, (lo_b, hi_b))


def observe(scene: Scene, depth_noise_sigma: float = 0.0, rng_seed: int = 0) -> Observation:
    """Render the scene once and fuse per-object and kit-side TSDF volumes."""
    geometry, ids = scene.render_list()
    depth, masks = render_depth(geometry, scene.camera, ids)
    if depth_noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        noisy = depth.data.copy()
        hit = noisy > 0
        noisy[hit] = np.maximum(noisy[hit] + rng.normal(0, depth_noise_sigma, size=int(hit.sum())), 1e-4)
        depth = DepthImage(depth.width, depth.height, noisy, depth.camera)

    object_volumes = {}
    start_poses = {}
    for i, obj in enumerate(scene.objects):
        inst = i + 1
        if not np.any(masks.labels == inst):
            raise NotFoundError(f"object {obj.object_id!r} not visible in the camera view")
        world = obj.mesh.transformed(obj.pose)
        lo, hi = world.bounds()
        center = (lo + hi) / 2
        origin = center - np.array(DEFAULT_DIMS) * DEFAULT_VOXEL_SIZE / 2
        object_volumes[obj.object_id] = tsdf_fuse(depth, masks, inst, origin, DEFAULT_VOXEL_SIZE, DEFAULT_DIMS)
        start_poses[obj.object_id] = obj.pose

    alo, ahi = scene.assembly.bounds()
    k_origin = alo - KIT_VOLUME_PAD
    k_dims = np.ceil((ahi + KIT_VOLUME_PAD - k_origin) / DEFAULT_VOXEL_SIZE).astype(int)
    kit_volume = tsdf_fuse(depth, masks, scene.kit_instance_id, k_origin, DEFAULT_VOXEL_SIZE, tuple(k_dims))
    return Observation(depth, masks, object_volumes, kit_volume, start_poses)


def save_scene_json(scene: Scene, path) -> None:
    doc = {
        "camera": scene.camera.to_dict(),
        "bounds": [list(map(float, b)) for b in scene.bounds],
        "objects": [
            {
                "id": o.object_id,
                "gt_start": o.gt_start.to_dict(),
                "gt_kit": o.gt_kit.to_dict(),
                "pose": o.pose.to_dict(),
            }
            for o in scene.objects
        ],
        "bracket_angles": list(scene.assembly.bracket_angles),
        "assembly_base": scene.assembly.base_frame.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
