"""Procedural kit generation and linking of kits into tilted assemblies.

A kit is generated from an object by extruding its top-view silhouette
downward (voxel CSG at 1 mm), dilating horizontally by the margin, and
subtracting from a block. The kit's local frame equals the object's local
frame, so the cavity pose inside one kit is the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, KitSpecError, PlacementError
from .geometry import Pose, quat_from_axis_angle, quat_rotate
from .mesh import TriMesh, load_obj, occupancy_to_mesh, save_obj, voxelize_mesh
from .volume import VoxelVolume, load_volume, save_volume

NORMALIZED_EXTENT = 0.05  # longest bounding-box edge after normalization
CSG_VOXEL = 0.001
MIN_BRACKET_DEG = 10.0
MAX_BRACKET_DEG = 45.0


@dataclass(frozen=True)
class KitSpec:
    margin: float = 0.0025          # horizontal object-kit clearance
    block_base_thickness: float = 0.01
    border: float = 0.01            # block footprint beyond the cavity
    csg_voxel: float = CSG_VOXEL
    insertion_axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.margin < 0 or self.margin > 0.05:
            raise KitSpecError(f"margin {self.margin} outside [0, 0.05] m")
        if self.block_base_thickness <= 0:
            raise KitSpecError("block base thickness must be positive")
        axis = np.asarray(self.insertion_axis, dtype=np.float64)
        if not np.allclose(axis / np.linalg.norm(axis), [0, 0, 1]):
            raise KitSpecError("insertion axis must be local +z")


def normalize_object(mesh: TriMesh) -> TriMesh:
    """Uniformly scale to a 5 cm longest edge and center the box at the origin."""
    if mesh.is_empty:
        raise InvalidArgumentError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 1e-12:
        raise InvalidArgumentError("degenerate mesh: zero extent")
    scale = NORMALIZED_EXTENT / extent
    center = (lo + hi) / 2.0
    return TriMesh((mesh.vertices - center) * scale, mesh.triangles)


@dataclass(frozen=True)
class GeneratedKit:
    """Kit solid plus bookkeeping grids, all in the kit-local (= object-local) frame."""

    mesh: TriMesh
    cavity_pose: Pose
    occupancy: VoxelVolume          # kit solid
    object_occupancy: VoxelVolume   # source object on the same grid
    margin: float
    object_id: str = ""

    def block_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.occupancy.origin.copy(), self.occupancy.max_corner


def generate_kit(obj: TriMesh, spec: KitSpec = KitSpec(), object_id: str = "") -> GeneratedKit:
    """Build the kit solid whose cavity is the margin-dilated top-view extrusion."""
    lo, hi = obj.bounds()
    extent = hi - lo
    if np.any(extent <= 0):
        raise InvalidArgumentError("object must have positive extent on all axes")
    res = spec.csg_voxel
    # round the dilation down: clearance never exceeds the requested margin
    dil = int(spec.margin / res + 1e-9)
    dil_diag = int(spec.margin / np.sqrt(2) / res + 1e-9)
    border_vox = int(np.ceil(spec.border / res))
    base_vox = int(np.ceil(spec.block_base_thickness / res))
    pad_xy = (dil + border_vox + 1) * res
    origin = np.array([lo[0] - pad_xy, lo[1] - pad_xy, lo[2] - base_vox * res])
    dims = (
        int(np.ceil((extent[0] + 2 * pad_xy) / res)),
        int(np.ceil((extent[1] + 2 * pad_xy) / res)),
        int(np.ceil((extent[2] + base_vox * res) / res)),
    )
    obj_occ = voxelize_mesh(obj, origin, res, dims)
    o = obj_occ.data.astype(bool)
    if not o.any():
        raise InvalidArgumentError("object voxelization is empty")

    # top-view extrusion: fill every occupied column from the object's bottom
    # layer up to the column's top surface
    ks = np.where(o, np.arange(dims[2])[None, None, :], -1)
    top = ks.max(axis=2)
    k_bottom = int(np.argwhere(o)[:, 2].min())
    zs = np.arange(dims[2])[None, None, :]
    hull = (zs >= k_bottom) & (zs <= top[:, :, None]) & (top[:, :, None] >= 0)

    # horizontal dilation: 4 axis + 4 diagonal replicas at margin distance
    cavity = hull.copy()
    offsets = [(dil, 0), (-dil, 0), (0, dil), (0, -dil),
               (dil_diag, dil_diag), (dil_diag, -dil_diag), (-dil_diag, dil_diag), (-dil_diag, -dil_diag)]
    for dx, dy in offsets:
        if dx == 0 and dy == 0:
            continue
        shifted = np.zeros_like(hull)
        sx0, sx1 = max(dx, 0), dims[0] + min(dx, 0)
        sy0, sy1 = max(dy, 0), dims[1] + min(dy, 0)
        shifted[sx0:sx1, sy0:sy1] = hull[sx0 - dx:sx1 - dx, sy0 - dy:sy1 - dy]
        cavity |= shifted

    cav_idx = np.argwhere(cavity.any(axis=2))
    cx0, cy0 = cav_idx.min(axis=0)
    cx1, cy1 = cav_idx.max(axis=0) + 1
    bx0, by0 = cx0 - border_vox, cy0 - border_vox
    bx1, by1 = cx1 + border_vox, cy1 + border_vox
    if bx0 < 0 or by0 < 0 or bx1 > dims[0] or by1 > dims[1]:
        raise KitSpecError("cavity exceeds the block footprint (margin too large)")

    block = np.zeros(dims, dtype=bool)
    block[bx0:bx1, by0:by1, :] = True
    kit = block & ~cavity

    # trim the grid to the block extent
    kit = kit[bx0:bx1, by0:by1, :]
    obj_grid = o[bx0:bx1, by0:by1, :]
    kit_origin = origin + np.array([bx0, by0, 0]) * res
    kit_vol = VoxelVolume(kit_origin, res, kit.astype(np.uint8), "occupancy")
    obj_vol = VoxelVolume(kit_origin, res, obj_grid.astype(np.uint8), "occupancy")
    mesh = occupancy_to_mesh(kit_vol)
    return GeneratedKit(mesh, Pose.identity(), kit_vol, obj_vol, spec.margin, object_id)


def insertion_sweep_clear(kit: GeneratedKit, lift_voxels: int | None = None) -> bool:
    """True iff lowering the object straight down its cavity never overlaps the kit."""
    kit_occ = kit.occupancy.data.astype(bool)
    obj_occ = kit.object_occupancy.data.astype(bool)
    nz = kit_occ.shape[2]
    lift = nz if lift_voxels is None else min(lift_voxels, nz)
    for k in range(lift):
        if k == 0:
            overlap = kit_occ & obj_occ
        else:
            overlap = kit_occ[:, :, k:] & obj_occ[:, :, :nz - k]
        if overlap.any():
            return False
    return True


@dataclass(frozen=True)
class AssembledKit:
    kit: GeneratedKit
    pose: Pose  # kit-local -> assembly frame
    object_id: str

    @property
    def mesh(self) -> TriMesh:
        return self.kit.mesh.transformed(self.pose)

    @property
    def cavity_pose(self) -> Pose:
        return self.pose.compose(self.kit.cavity_pose)


@dataclass(frozen=True)
class KitAssembly:
    """1-5 kits chained with angle brackets; base_frame places it in the world."""

    kits: tuple
    bracket_angles: tuple  # degrees, len = len(kits) - 1
    base_frame: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if not 1 <= len(self.kits) <= 5:
            raise InvalidArgumentError("assembly must hold 1..5 kits")
        if len(self.bracket_angles) != len(self.kits) - 1:
            raise InvalidArgumentError("need one bracket angle per link")
        for a in self.bracket_angles:
            if not MIN_BRACKET_DEG <= a <= MAX_BRACKET_DEG:
                raise InvalidArgumentError(f"bracket angle {a} outside [10, 45] deg")

    def with_base(self, base: Pose) -> "KitAssembly":
        return replace(self, base_frame=base)

    def world_meshes(self) -> list[tuple[TriMesh, Pose]]:
        return [(ak.kit.mesh, self.base_frame.compose(ak.pose)) for ak in self.kits]

    def cavity_pose_world(self, i: int) -> Pose:
        return self.base_frame.compose(self.kits[i].cavity_pose)

    def insertion_axes_world(self) -> np.ndarray:
        return np.array([quat_rotate(self.cavity_pose_world(i).q, [0, 0, 1]) for i in range(len(self.kits))])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = [], []
        for ak in self.kits:
            blo, bhi = ak.kit.block_bounds()
            corners = np.array([[x, y, z] for x in (blo[0], bhi[0]) for y in (blo[1], bhi[1]) for z in (blo[2], bhi[2])])
            world = self.base_frame.compose(ak.pose).apply(corners)
            los.append(world.min(axis=0))
            his.append(world.max(axis=0))
        return np.min(los, axis=0), np.max(his, axis=0)

    def build_occupancy(self, voxel_size: float, pad: float = 0.02) -> VoxelVolume:
        """Resample all kit solids into one world-frame occupancy grid."""
        lo, hi = self.bounds()
        origin = lo - pad
        dims = np.ceil((hi + pad - origin) / voxel_size).astype(int)
        occ = np.zeros(tuple(dims), dtype=bool)
        xs = origin[0] + (np.arange(dims[0]) + 0.5) * voxel_size
        ys = origin[1] + (np.arange(dims[1]) + 0.5) * voxel_size
        zs = origin[2] + (np.arange(dims[2]) + 0.5) * voxel_size
        for ak in self.kits:
            world_pose = self.base_frame.compose(ak.pose)
            blo, bhi = ak.kit.block_bounds()
            corners = np.array([[x, y, z] for x in (blo[0], bhi[0]) for y in (blo[1], bhi[1]) for z in (blo[2], bhi[2])])
            wc = world_pose.apply(corners)
            wlo, whi = wc.min(axis=0) - voxel_size, wc.max(axis=0) + voxel_size
            i0 = np.maximum(np.searchsorted(xs, wlo[0]), 0)
            i1 = np.minimum(np.searchsorted(xs, whi[0]), dims[0])
            j0 = np.maximum(np.searchsorted(ys, wlo[1]), 0)
            j1 = np.minimum(np.searchsorted(ys, whi[1]), dims[1])
            k0 = np.maximum(np.searchsorted(zs, wlo[2]), 0)
            k1 = np.minimum(np.searchsorted(zs, whi[2]), dims[2])
            if i0 >= i1 or j0 >= j1 or k0 >= k1:
                continue
            gx, gy, gz = np.meshgrid(xs[i0:i1], ys[j0:j1], zs[k0:k1], indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
            local = world_pose.inverse().apply(pts)
            vals = ak.kit.occupancy.sample(local, fill=0).reshape(i1 - i0, j1 - j0, k1 - k0)
            occ[i0:i1, j0:j1, k0:k1] |= vals.astype(bool)
        return VoxelVolume(origin, voxel_size, occ.astype(np.uint8), "occupancy")


# hinge gap standing in for the bracket plate thickness; keeps adjacent
# blocks strictly separated so voxel overlap checks are robust
HINGE_GAP = 0.0005


def _chain_poses(kits: list[GeneratedKit], angles_rad: list[float], signs: list[int]) -> list[Pose]:
    poses = [Pose()]
    tilt = 0.0
    for i, (theta, s) in enumerate(zip(angles_rad, signs)):
        prev = kits[i]
        blo, bhi = prev.block_bounds()
        yc_prev = (blo[1] + bhi[1]) / 2.0
        nxt = kits[i + 1]
        nlo, nhi = nxt.block_bounds()
        yc_next = (nlo[1] + nhi[1]) / 2.0
        new_tilt = tilt + s * theta
        # s=+1 tilts the +x end down (hinge at prev bottom edge);
        # s=-1 tilts it up (hinge at prev top edge)
        hinge_local = np.array([bhi[0], yc_prev, bhi[2] if s < 0 else blo[2]])
        attach_local = np.array([nlo[0], yc_next, nhi[2] if s < 0 else nlo[2]])
        hinge_world = poses[i].apply(hinge_local)
        out_dir = quat_rotate(poses[i].q, [1.0, 0.0, 0.0])
        q = quat_from_axis_angle([0, 1, 0], new_tilt)
        p = hinge_world + HINGE_GAP * out_dir - quat_rotate(q, attach_local)
        poses.append(Pose(p, q))
        tilt = new_tilt
    return poses


def _pairwise_clear(kits: list[GeneratedKit], poses: list[Pose]) -> bool:
    centers = []
    for kit, pose in zip(kits, poses):
        occ = kit.occupancy.occupied_indices()
        centers.append(pose.apply(kit.occupancy.index_to_world(occ)))
    for i in range(len(kits)):
        for j in range(len(kits)):
            if i == j:
                continue
            local = poses[j].inverse().apply(centers[i])
            if np.any(kits[j].occupancy.sample(local, fill=0)):
                return False
    return True


def assemble_kits(kits: list[GeneratedKit], angles_deg: list[float], rng_seed: int = 0) -> KitAssembly:
    """Chain 1-5 kits with hinged brackets; raises PlacementError on collision."""
    if len(angles_deg) != len(kits) - 1:
        raise InvalidArgumentError("need one bracket angle per link")
    for a in angles_deg:
        if not MIN_BRACKET_DEG <= a <= MAX_BRACKET_DEG:
            raise InvalidArgumentError(f"bracket angle {a} outside [10, 45] deg")
    angles_rad = [np.deg2rad(a) for a in angles_deg]
    rng = np.random.default_rng(rng_seed)
    n_links = len(kits) - 1
    poses = [Pose()]
    for attempt in range(64):
        if n_links:
            signs = [int(s) for s in rng.choice([-1, 1], size=n_links)]
            tilts = np.cumsum([0.0] + [s * t for s, t in zip(signs, angles_rad)])
            if np.max(np.abs(tilts)) > np.deg2rad(80):
                continue  # keep all cavity openings well above the horizon
            poses = _chain_poses(kits, angles_rad, signs)
            if not _pairwise_clear(kits, poses):
                continue
        break
    else:
        raise PlacementError("could not chain kits without collision")

    assembled = tuple(
        AssembledKit(kit, pose, kit.object_id or f"object-{i}") for i, (kit, pose) in enumerate(zip(kits, poses))
    )
    raw = KitAssembly(assembled, tuple(angles_deg))
    lo, hi = raw.bounds()
    shift = np.array([-(lo[0] + hi[0]) / 2.0, -(lo[1] + hi[1]) / 2.0, -lo[2]])
    rebased = tuple(AssembledKit(ak.kit, Pose(shift).compose(ak.pose), ak.object_id) for ak in assembled)
    assembly = KitAssembly(rebased, tuple(angles_deg))
    axes = assembly.insertion_axes_world()
    if np.any(axes[:, 2] <= 0):
        raise PlacementError("an insertion axis points below the horizon")
    return assembly


def link_kits(kits: list[GeneratedKit], angles_deg: list[float], rng_seed: int = 0) -> KitAssembly:
    """Chained 2-5 kit assembly (the multi-kit variant of assemble_kits)."""
    if not 2 <= len(kits) <= 5:
        raise InvalidArgumentError("link_kits chains 2..5 kits")
    return assemble_kits(kits, angles_deg, rng_seed)


# ---------------------------------------------------------------------------
# dataset serialization


def save_assembly(assembly: KitAssembly, objects: list[TriMesh], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (ak, obj) in enumerate(zip(assembly.kits, objects)):
        kit_obj = f"kit_{i}.obj"
        obj_obj = f"object_{i}.obj"
        kit_vol = f"kit_{i}.vol"
        obj_vol = f"object_{i}.vol"
        save_obj(ak.kit.mesh, out / kit_obj)
        save_obj(obj, out / obj_obj)
        save_volume(ak.kit.occupancy, out / kit_vol)
        save_volume(ak.kit.object_occupancy, out / obj_vol)
        entries.append(
            {
                "object_id": ak.object_id,
                "kit_mesh": kit_obj,
                "object_mesh": obj_obj,
                "kit_occupancy": kit_vol,
                "object_occupancy": obj_vol,
                "kit_pose": ak.pose.to_dict(),
                "cavity_pose": ak.cavity_pose.to_dict(),
                "margin": ak.kit.margin,
            }
        )
    doc = {
        "bracket_angles": list(assembly.bracket_angles),
        "base_frame": assembly.base_frame.to_dict(),
        "kits": entries,
    }
    (out / "assembly.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_assembly(path) -> tuple[KitAssembly, list[TriMesh]]:
    path = Path(path)
    doc = json.loads((path / "assembly.json").read_text())
    kits, objects = [], []
    for e in doc["kits"]:
        occupancy = load_volume(path / e["kit_occupancy"])
        obj_occ = load_volume(path / e["object_occupancy"])
        mesh = load_obj(path / e["kit_mesh"])
        obj = load_obj(path / e["object_mesh"])
        gk = GeneratedKit(mesh, Pose.identity(), occupancy, obj_occ, e["margin"], e["object_id"])
        kits.append(AssembledKit(gk, Pose.from_dict(e["kit_pose"]), e["object_id"]))
        objects.append(obj)
    assembly = KitAssembly(tuple(kits), tuple(doc["bracket_angles"]), Pose.from_dict(doc["base_frame"]))
    return assembly, objects
