"""Software depth rasterizer: orthographic and pinhole cameras.

Camera frame: +z looks into the scene, +x right, +y down (image rows).
Depth is the camera-frame z of the nearest surface; 0 means no return.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .geometry import Pose, quat_to_matrix
from .mesh import TriMesh

_Z_EPS = 1e-6


@dataclass(frozen=True)
class Camera:
    mode: str  # "ortho" | "pinhole"
    width: int
    height: int
    pose: Pose = field(default_factory=Pose.identity)
    pitch: float = 0.0  # ortho: meters per pixel
    fx: float = 0.0
    fy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if self.mode not in ("ortho", "pinhole"):
            raise InvalidArgumentError(f"unknown camera mode {self.mode!r}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError("camera resolution must be positive")
        if self.mode == "ortho" and self.pitch <= 0:
            raise InvalidArgumentError("ortho camera needs a positive pixel pitch")
        if self.mode == "pinhole" and (self.fx <= 0 or self.fy <= 0):
            raise InvalidArgumentError("pinhole camera needs positive focal lengths")

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "width": self.width, "height": self.height, "pose": self.pose.to_dict()}
        if self.mode == "ortho":
            d["pitch"] = self.pitch
        else:
            d.update(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)
        return d

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(
            mode=d["mode"],
            width=int(d["width"]),
            height=int(d["height"]),
            pose=Pose.from_dict(d["pose"]),
            pitch=float(d.get("pitch", 0.0)),
            fx=float(d.get("fx", 0.0)),
            fy=float(d.get("fy", 0.0)),
            cx=float(d.get("cx", 0.0)),
            cy=float(d.get("cy", 0.0)),
        )


def look_at_camera(eye, target, mode="pinhole", **kwargs) -> Camera:
    """Camera at `eye` looking at `target`, image rows pointing down in world."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(fwd, up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.column_stack([right, down, fwd])
    return Camera(mode=mode, pose=Pose(eye, matrix_to_quat(rot)), **kwargs)


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion (x, y, z, w)."""
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return np.array([x, y, z, w])


@dataclass(frozen=True)
class DepthImage:
    """Row-major depth in meters, 0 = no return."""

    width: int
    height: int
    data: np.ndarray  # (height, width) float32
    camera: Camera

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32)).reshape(self.height, self.width)
        if not np.all(np.isfinite(data)) or data.min(initial=0.0) < 0:
            raise InvalidArgumentError("depth values must be finite and >= 0")
        object.__setattr__(self, "data", data)
        data.setflags(write=False)


@dataclass(frozen=True)
class InstanceMask:
    """Per-pixel instance ids, 0 = background. Dims match the paired depth."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) int32

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int32)).reshape(self.height, self.width)
        object.__setattr__(self, "labels", labels)
        labels.setflags(write=False)

    def instances(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids != 0]


def render_depth(
    geometry: list[tuple[TriMesh, Pose]],
    camera: Camera,
    instance_ids: list[int] | None = None,
) -> tuple[DepthImage, InstanceMask]:
    """Rasterize meshes into a depth image and instance mask (nearest wins)."""
    if instance_ids is None:
        instance_ids = list(range(1, len(geometry) + 1))
    if len(instance_ids) != len(geometry):
        raise InvalidArgumentError("instance_ids length must match geometry")
    w, h = camera.width, camera.height
    zbuf = np.full((h, w), np.inf, dtype=np.float64)
    labels = np.zeros((h, w), dtype=np.int32)
    r_wc = quat_to_matrix(camera.pose.q)

    for (mesh, pose), inst in zip(geometry, instance_ids):
        if mesh.is_empty:
            continue
        verts_w = pose.apply(mesh.vertices)
        verts_c = (verts_w - camera.pose.p) @ r_wc  # world -> camera
        _raster_mesh(verts_c, mesh.triangles, camera, zbuf, labels, inst)

    depth = np.where(np.isfinite(zbuf), zbuf, 0.0).astype(np.float32)
    return DepthImage(w, h, depth, camera), InstanceMask(w, h, labels)


def _raster_mesh(verts_c, triangles, camera, zbuf, labels, inst) -> None:
    w, h = camera.width, camera.height
    z = verts_c[:, 2]
    if camera.mode == "ortho":
        u = verts_c[:, 0] / camera.pitch + w / 2.0
        v = verts_c[:, 1] / camera.pitch + h / 2.0
        inv_z = None
    else:
        zc = np.maximum(z, _Z_EPS)
        u = camera.fx * verts_c[:, 0] / zc + camera.cx
        v = camera.fy * verts_c[:, 1] / zc + camera.cy
        inv_z = 1.0 / zc

    for tri in triangles:
        i0, i1, i2 = tri
        if z[i0] <= _Z_EPS and z[i1] <= _Z_EPS and z[i2] <= _Z_EPS:
            continue
        if camera.mode == "pinhole" and (z[i0] <= _Z_EPS or z[i1] <= _Z_EPS or z[i2] <= _Z_EPS):
            continue  # no near-plane clipping; partially-behind triangles are skipped
        u0, u1, u2 = u[i0], u[i1], u[i2]
        v0, v1, v2 = v[i0], v[i1], v[i2]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if abs(area) < 1e-12:
            continue
        cmin = max(int(np.floor(min(u0, u1, u2) - 0.5)), 0)
        cmax = min(int(np.ceil(max(u0, u1, u2) - 0.5)), w - 1)
        rmin = max(int(np.floor(min(v0, v1, v2) - 0.5)), 0)
        rmax = min(int(np.ceil(max(v0, v1, v2) - 0.5)), h - 1)
        if cmin > cmax or rmin > rmax:
            continue
        cols = np.arange(cmin, cmax + 1)
        rows = np.arange(rmin, rmax + 1)
        pu = cols[None, :] + 0.5
        pv = rows[:, None] + 0.5
        w0 = ((u1 - pu) * (v2 - pv) - (v1 - pv) * (u2 - pu)) / area
        w1 = ((u2 - pu) * (v0 - pv) - (v2 - pv) * (u0 - pu)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        if camera.mode == "ortho":
            depth = w0 * z[i0] + w1 * z[i1] + w2 * z[i2]
        else:
            denom = w0 * inv_z[i0] + w1 * inv_z[i1] + w2 * inv_z[i2]
            with np.errstate(divide="ignore", invalid="ignore"):
                depth = 1.0 / denom
        ok = inside & (depth > _Z_EPS)
        sub = zbuf[rmin:rmax + 1, cmin:cmax + 1]
        upd = ok & (depth < sub)
        if upd.any():
            sub[upd] = depth[upd]
            labels[rmin:rmax + 1, cmin:cmax + 1][upd] = inst


DEPTH_MAGIC = b"SEATDPT1"


def save_depth(img: DepthImage, path) -> None:
    """magic, u32 w h, f32 row-major meters; camera in '<name>.cam.json' sidecar."""
    import struct

    path = Path(path)
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<2I", img.width, img.height))
        f.write(img.data.astype("<f4").tobytes())
    path.with_suffix(path.suffix + ".cam.json").write_text(json.dumps(img.camera.to_dict()))


def load_depth(path) -> DepthImage:
    import struct

    path = Path(path)
    with open(path, "rb") as f:
        if f.read(8) != DEPTH_MAGIC:
            raise InvalidArgumentError(f"{path}: bad depth magic")
        w, h = struct.unpack("<2I", f.read(8))
        data = np.frombuffer(f.read(4 * w * h), dtype="<f4").reshape(h, w)
    cam = Camera.from_dict(json.loads(path.with_suffix(path.suffix + ".cam.json").read_text()))
    return DepthImage(w, h, data, cam)
