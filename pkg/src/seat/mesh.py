"""Triangle meshes: OBJ subset I/O, primitives, voxelization, surface extraction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from .errors import EmptyInputError, InvalidArgumentError, OutOfBoundsError
from .geometry import Pose
from .volume import VoxelVolume, empty_volume

_DEGENERATE_AREA = 1e-14


@dataclass(frozen=True)
class TriMesh:
    """Vertices (N, 3) in meters and triangle index triples (M, 3).

    Degenerate (zero-area) triangles are dropped at construction.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InvalidArgumentError("triangle index out of range")
        if t.size:
            a = v[t[:, 1]] - v[t[:, 0]]
            b = v[t[:, 2]] - v[t[:, 0]]
            areas = 0.5 * np.linalg.norm(np.cross(a, b), axis=1)
            t = t[areas > _DEGENERATE_AREA]
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        v.setflags(write=False)
        t.setflags(write=False)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise EmptyInputError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extents(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    def transformed(self, pose: Pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles)

    def scaled(self, factor: float) -> "TriMesh":
        return TriMesh(self.vertices * factor, self.triangles)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.triangles)


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    verts, tris, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        base += len(m.vertices)
    if not verts:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return TriMesh(np.vstack(verts), np.vstack(tris))


def save_obj(mesh: TriMesh, path) -> None:
    """Wavefront OBJ subset: v/f lines only, 1-based indices."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> TriMesh:
    verts, tris = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                tris.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# primitives


def _triangulate_polygon(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clip a simple CCW polygon given as (N, 2)."""
    n = len(poly)
    if n < 3:
        raise InvalidArgumentError("polygon needs at least 3 vertices")
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise InvalidArgumentError("polygon triangulation failed (non-simple?)")
        m = len(idx)
        clipped = False
        for k in range(m):
            i0, i1, i2 = idx[(k - 1) % m], idx[k], idx[(k + 1) % m]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-15:
                continue  # reflex or collinear
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross(a, b, p) >= -1e-15 and cross(b, c, p) >= -1e-15 and cross(c, a, p) >= -1e-15:
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise InvalidArgumentError("polygon triangulation stuck (check winding)")
    tris.append(tuple(idx))
    return tris


def prism_mesh(polygon, height: float) -> TriMesh:
    """Extrude a simple CCW polygon (N, 2) along z, centered at z = 0."""
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    h = height / 2.0
    bottom = np.column_stack([poly, np.full(n, -h)])
    top = np.column_stack([poly, np.full(n, h)])
    verts = np.vstack([bottom, top])
    tris = []
    caps = _triangulate_polygon(poly)
    for a, b, c in caps:
        tris.append([a, c, b])              # bottom, faces -z
        tris.append([n + a, n + b, n + c])  # top, faces +z
    for i in range(n):
        j = (i + 1) % n
        tris.append([i, j, n + j])
        tris.append([i, n + j, n + i])
    return TriMesh(verts, np.array(tris, dtype=np.int64))


def box_mesh(sx: float, sy: float, sz: float) -> TriMesh:
    return prism_mesh(
        np.array([[-sx / 2, -sy / 2], [sx / 2, -sy / 2], [sx / 2, sy / 2], [-sx / 2, sy / 2]]), sz
    )


def cylinder_mesh(radius: float, height: float, segments: int = 48) -> TriMesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    return prism_mesh(np.column_stack([radius * np.cos(ang), radius * np.sin(ang)]), height)


def uv_sphere_mesh(radius: float, rings: int = 16, segments: int = 32) -> TriMesh:
    verts = [(0.0, 0.0, radius)]
    for i in range(1, rings):
        phi = np.pi * i / rings
        for j in range(segments):
            th = 2 * np.pi * j / segments
            verts.append(
                (radius * np.sin(phi) * np.cos(th), radius * np.sin(phi) * np.sin(th), radius * np.cos(phi))
            )
    verts.append((0.0, 0.0, -radius))
    last = len(verts) - 1
    tris = []
    for j in range(segments):
        tris.append([0, 1 + j, 1 + (j + 1) % segments])
    for i in range(rings - 2):
        r0, r1 = 1 + i * segments, 1 + (i + 1) * segments
        for j in range(segments):
            j2 = (j + 1) % segments
            tris.append([r0 + j, r1 + j, r1 + j2])
            tris.append([r0 + j, r1 + j2, r0 + j2])
    r0 = 1 + (rings - 2) * segments
    for j in range(segments):
        tris.append([r0 + j, last, r0 + (j + 1) % segments])
    return TriMesh(np.array(verts), np.array(tris, dtype=np.int64))


# ---------------------------------------------------------------------------
# voxelization

# Surface sampling pitch as a fraction of the voxel size; below 0.5 so that
# consecutive samples land in the same or an adjacent voxel (sealed shell).
_SAMPLE_PITCH = 0.4


def _is_watertight(mesh: TriMesh) -> bool:
    t = mesh.triangles
    edges = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _voxelize_parity(mesh: TriMesh, origin, voxel_size: float, dims) -> tuple[np.ndarray, float]:
    """Exact center-in-solid fill via z-column parity.

    Returns the occupancy and the fraction of columns with an odd crossing
    count (nonzero means the surface is not closed along z).
    """
    nx, ny, nz = dims
    v = mesh.vertices
    cols_i: list[np.ndarray] = []
    cols_j: list[np.ndarray] = []
    cols_z: list[np.ndarray] = []
    for tri in mesh.triangles:
        p0, p1, p2 = v[tri[0]], v[tri[1]], v[tri[2]]
        area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if abs(area) < 1e-18:
            continue  # vertical face, never crossed transversally by a z column
        xs = np.array([p0[0], p1[0], p2[0]])
        ys = np.array([p0[1], p1[1], p2[1]])
        i0 = max(int(np.ceil((xs.min() - origin[0]) / voxel_size - 0.5)), 0)
        i1 = min(int(np.floor((xs.max() - origin[0]) / voxel_size - 0.5)), nx - 1)
        j0 = max(int(np.ceil((ys.min() - origin[1]) / voxel_size - 0.5)), 0)
        j1 = min(int(np.floor((ys.max() - origin[1]) / voxel_size - 0.5)), ny - 1)
        if i0 > i1 or j0 > j1:
            continue
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        cx = origin[0] + (ii + 0.5) * voxel_size
        cy = origin[1] + (jj + 0.5) * voxel_size
        w0 = ((p1[0] - cx) * (p2[1] - cy) - (p1[1] - cy) * (p2[0] - cx)) / area
        w1 = ((p2[0] - cx) * (p0[1] - cy) - (p2[1] - cy) * (p0[0] - cx)) / area
        w2 = 1.0 - w0 - w1
        # inclusive on shared edges; duplicate crossings are merged by z below
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        z = w0 * p0[2] + w1 * p1[2] + w2 * p2[2]
        cols_i.append(ii[inside])
        cols_j.append(jj[inside])
        cols_z.append(z[inside])
    occ = np.zeros(dims, dtype=np.uint8)
    if not cols_i:
        return occ, 0.0
    ci = np.concatenate(cols_i)
    cj = np.concatenate(cols_j)
    cz = np.concatenate(cols_z)
    order = np.lexsort((cz, cj, ci))
    ci, cj, cz = ci[order], cj[order], cz[order]
    col_key = ci * ny + cj
    starts = np.flatnonzero(np.r_[True, col_key[1:] != col_key[:-1]])
    ends = np.r_[starts[1:], len(col_key)]
    dedupe_tol = voxel_size * 1e-6
    odd = 0
    for s, e in zip(starts, ends):
        zs = cz[s:e]
        keep = np.r_[True, np.diff(zs) > dedupe_tol]
        zs = zs[keep]
        if len(zs) % 2 == 1:
            odd += 1
        if len(zs) < 2:
            continue
        i, j = ci[s], cj[s]
        for a in range(0, len(zs) - 1, 2):
            k0 = max(int(np.ceil((zs[a] - origin[2]) / voxel_size - 0.5)), 0)
            k1 = min(int(np.floor((zs[a + 1] - origin[2]) / voxel_size - 0.5 - 1e-9)), nz - 1)
            if k1 >= k0:
                occ[i, j, k0:k1 + 1] = 1
    return occ, odd / max(len(starts), 1)


# A closed surface yields even z-crossing counts everywhere; tolerate a small
# fraction of odd columns (grazing hits) before declaring the mesh leaky.
_ODD_COLUMN_TOL = 0.005


def voxelize_mesh(mesh: TriMesh, origin, voxel_size: float, dims) -> VoxelVolume:
    """Solid occupancy: voxel = 1 iff its center is inside the solid.

    Closed meshes get an exact z-column parity fill. Leaky meshes fall back
    to a stamped surface shell, flood-filling the exterior from the grid
    boundary and taking the complement (boundary layer accuracy ~1 voxel).
    """
    origin = np.asarray(origin, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if mesh.is_empty:
        return empty_volume(origin, voxel_size, dims, "occupancy")
    lo, hi = mesh.bounds()
    grid_hi = origin + np.array(dims) * voxel_size
    if np.any(lo < origin - 1e-9) or np.any(hi > grid_hi + 1e-9):
        over_lo = np.maximum(origin - lo, 0)
        over_hi = np.maximum(hi - grid_hi, 0)
        raise OutOfBoundsError(f"mesh exceeds grid by {over_lo} below / {over_hi} above")

    occ, odd_fraction = _voxelize_parity(mesh, origin, voxel_size, dims)
    if odd_fraction <= _ODD_COLUMN_TOL:
        return VoxelVolume(origin, voxel_size, occ, "occupancy")

    shell = np.zeros(dims, dtype=bool)
    h = voxel_size * _SAMPLE_PITCH
    v = mesh.vertices
    for tri in mesh.triangles:
        p0, p1, p2 = v[tri[0]], v[tri[1]], v[tri[2]]
        n1 = max(1, int(np.ceil(np.linalg.norm(p1 - p0) / h)))
        n2 = max(1, int(np.ceil(np.linalg.norm(p2 - p0) / h)))
        ii, jj = np.meshgrid(np.arange(n1 + 1), np.arange(n2 + 1), indexing="ij")
        a = ii.ravel() / n1
        b = jj.ravel() / n2
        keep = a + b <= 1.0 + 1e-12
        a, b = a[keep], b[keep]
        pts = p0 + np.outer(a, p1 - p0) + np.outer(b, p2 - p0)
        idx = np.floor((pts - origin) / voxel_size).astype(np.int64)
        np.clip(idx, 0, np.array(dims) - 1, out=idx)
        shell[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    free = ~shell
    labels, _ = ndi.label(free, structure=ndi.generate_binary_structure(3, 1))
    border_labels = np.unique(
        np.concatenate(
            [
                labels[0, :, :].ravel(), labels[-1, :, :].ravel(),
                labels[:, 0, :].ravel(), labels[:, -1, :].ravel(),
                labels[:, :, 0].ravel(), labels[:, :, -1].ravel(),
            ]
        )
    )
    border_labels = border_labels[border_labels != 0]
    exterior = np.isin(labels, border_labels) & free
    occupied = ~exterior
    return VoxelVolume(origin, voxel_size, occupied.astype(np.uint8), "occupancy")


def voxelize_fit(mesh: TriMesh, voxel_size: float, pad_voxels: int = 2) -> VoxelVolume:
    """Voxelize on the smallest grid covering the mesh plus padding."""
    lo, hi = mesh.bounds()
    origin = lo - pad_voxels * voxel_size
    dims = np.ceil((hi - origin) / voxel_size + pad_voxels).astype(int)
    return voxelize_mesh(mesh, origin, voxel_size, tuple(dims))


# ---------------------------------------------------------------------------
# occupancy -> mesh (greedy rectangle merge of boundary faces)

_AXES = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def occupancy_to_mesh(vol: VoxelVolume) -> TriMesh:
    """Extract the boundary surface of an occupancy volume as merged quads."""
    occ = vol.data.astype(bool)
    if not occ.any():
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts: list[np.ndarray] = []
    tris: list[list[int]] = []

    def emit_rect(axis, plane, u0, v0, u1, v1, outward_positive):
        # rect spans [u0,u1) x [v0,v1) in the (u,v) axes at face coordinate `plane`
        ax, au, av = _AXES[axis]
        corners = []
        for cu, cv in ((u0, v0), (u1, v0), (u1, v1), (u0, v1)):
            c = np.empty(3)
            c[ax], c[au], c[av] = plane, cu, cv
            corners.append(vol.origin + c * vol.voxel_size)
        base = len(verts)
        verts.extend(corners)
        if outward_positive:
            tris.append([base, base + 1, base + 2])
            tris.append([base, base + 2, base + 3])
        else:
            tris.append([base, base + 2, base + 1])
            tris.append([base, base + 3, base + 2])

    for axis in range(3):
        ax, au, av = _AXES[axis]
        o = np.transpose(occ, (ax, au, av))
        n = o.shape[0]
        padded = np.zeros((n + 2,) + o.shape[1:], dtype=bool)
        padded[1:-1] = o
        for sign in (+1, -1):
            if sign > 0:
                faces = padded[1:-1] & ~padded[2:]
            else:
                faces = padded[1:-1] & ~padded[:-2]
            for k in range(n):
                sl = faces[k]
                if not sl.any():
                    continue
                plane = k + 1 if sign > 0 else k
                grid = sl.copy()
                nu = grid.shape[0]
                for iu in range(nu):
                    row = grid[iu]
                    if not row.any():
                        continue
                    # contiguous runs along v
                    on = np.flatnonzero(row)
                    breaks = np.flatnonzero(np.diff(on) > 1)
                    run_starts = np.r_[on[0], on[breaks + 1]]
                    run_ends = np.r_[on[breaks] + 1, on[-1] + 1]
                    for iv, v_end in zip(run_starts, run_ends):
                        # grow along u while the full strip is set
                        u_end = iu + 1
                        while u_end < nu and grid[u_end, iv:v_end].all():
                            u_end += 1
                        grid[iu:u_end, iv:v_end] = False
                        emit_rect(axis, plane, iu, int(iv), u_end, int(v_end), sign > 0)
    return TriMesh(np.array(verts), np.array(tris, dtype=np.int64))
