"""Two-stage 6DoF pose snapping.

Position: cross-correlate object features over a kit-volume crop around the
user hint and take the argmax. Rotation: score sampled orientation candidates
on labeled point clouds at the snapped position. Feature encoders and
candidate scorers are pluggable by name; the defaults are geometric.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.ndimage as ndi
import scipy.signal

from .cloud import LabeledPointCloud, sample_surface_points
from .errors import EmptyInputError, InvalidArgumentError
from .geometry import (
    Pose,
    quat_from_axis_angle,
    quat_geodesic,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    yaw_pitch_roll_quat,
)
from .volume import VoxelVolume, crop_volume

DELTA_POSITION = 0.028                      # meters, per translational axis
DELTA_ORIENTATION = np.deg2rad(27.5)        # radians
N_ROTATIONS = 391
N_OBJECT_POINTS = 2048
N_KIT_POINTS = 4096
ROTATION_CROP_HALF_VOXELS = 64              # second crop: ~128^3 around p_snap


@dataclass(frozen=True)
class SnapConfig:
    delta_position: float = DELTA_POSITION
    delta_orientation: float = DELTA_ORIENTATION
    n_rotations: int = N_ROTATIONS
    uninformed: bool = False
    roll_pitch_range: float = np.deg2rad(15.0)
    yaw_range: float = np.pi
    scorer: str = "fit"
    encoder: str = "signed-occupancy"
    n_object_points: int = N_OBJECT_POINTS
    n_kit_points: int = N_KIT_POINTS
    scorer_margin: float = 0.0025  # assumed object-kit clearance for the contact band

    def __post_init__(self):
        if self.n_rotations < 1:
            raise InvalidArgumentError("n_rotations must be >= 1")
        if self.delta_position <= 0 or self.delta_orientation <= 0:
            raise InvalidArgumentError("search deltas must be positive")

    def to_dict(self) -> dict:
        return {
            "delta_position": self.delta_position,
            "delta_orientation": self.delta_orientation,
            "n_rotations": self.n_rotations,
            "uninformed": self.uninformed,
            "roll_pitch_range": self.roll_pitch_range,
            "yaw_range": self.yaw_range,
            "scorer": self.scorer,
            "encoder": self.encoder,
            "n_object_points": self.n_object_points,
            "n_kit_points": self.n_kit_points,
            "scorer_margin": self.scorer_margin,
        }

    @staticmethod
    def from_dict(d: dict) -> "SnapConfig":
        return SnapConfig(**d)


@dataclass(frozen=True)
class SnapResult:
    pose: Pose
    position_score: float
    rotation_scores: tuple          # ((quat, score), ...)
    candidates_evaluated: tuple     # (n_positions, n_rotations)
    p_snap: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scorer_calls: int = 0
    timing_ms: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# feature encoders


@dataclass(frozen=True)
class EncoderPair:
    """Object and kit feature maps fed to the position correlation.

    The kit side is sign-flipped relative to the object side so that the
    correlation rewards object voxels over insertable free space and
    penalizes them over kit solid.
    """

    encode_object: callable
    encode_kit: callable
    integral: bool = True  # integer-valued features allow exact argmax recovery


def _signed(vol: VoxelVolume) -> np.ndarray:
    occ = vol.data.astype(np.float32)
    if vol.kind == "tsdf":
        occ = (vol.data <= 0).astype(np.float32)
    return occ * 2.0 - 1.0


ENCODERS = {
    "signed-occupancy": EncoderPair(
        encode_object=lambda v: _signed(v),
        encode_kit=lambda v: -_signed(v),
        integral=True,
    ),
    # plain occupancy correlation: counts object voxels over kit solid
    "occupancy": EncoderPair(
        encode_object=lambda v: (v.data != 0).astype(np.float32),
        encode_kit=lambda v: (v.data != 0).astype(np.float32),
        integral=True,
    ),
}


def register_encoder(name: str, pair: EncoderPair) -> None:
    ENCODERS[name] = pair


def cross_correlate_same(field_arr: np.ndarray, kernel: np.ndarray, integral: bool) -> np.ndarray:
    """corr[s] = sum_t kernel[t] * field[s + t - center], zero-padded outside.

    Output matches the field's shape; `s` is the field voxel the kernel
    center lands on. Integer-valued inputs are rounded back to integers so
    FFT round-off cannot perturb argmax ties.
    """
    flipped = kernel[::-1, ::-1, ::-1]
    out = scipy.signal.fftconvolve(field_arr, flipped, mode="same")
    if integral:
        out = np.rint(out)
    return out.astype(np.float64)


# Correlation sums are normalized by sqrt(overlap): with zero-padding, a raw
# sum underrates legal placements near the crop boundary (truncated kernels)
# and drifts toward fully-overlapping free-space mass, while a plain mean
# over-rewards tiny windows that only see the kernel's solid core. The sqrt
# compromise keeps both regimes ordered. The floor discards near-zero
# overlaps; the worst legal truncation (hint at the crop corner) still shows
# ~1/8 of the kernel.
MIN_OVERLAP_FRACTION = 0.04
MIN_OVERLAP_VOXELS = 27


def normalized_correlation(field_arr: np.ndarray, kernel: np.ndarray, integral: bool) -> np.ndarray:
    corr = cross_correlate_same(field_arr, kernel, integral)
    ones_field = np.ones_like(field_arr)
    ones_kernel = np.ones_like(kernel)
    overlap = np.rint(scipy.signal.fftconvolve(ones_field, ones_kernel[::-1, ::-1, ::-1], mode="same"))
    floor = min(max(MIN_OVERLAP_FRACTION * kernel.size, MIN_OVERLAP_VOXELS), overlap.max())
    valid = overlap >= floor
    out = np.full(corr.shape, -np.inf)
    out[valid] = corr[valid] / np.sqrt(overlap[valid])
    return out


def crop_kit_volume(v: VoxelVolume, center, delta: float) -> VoxelVolume:
    """Cube crop of side 2*delta around the hint (odd voxel count, zero-padded)."""
    return crop_volume(v, center, delta)


@dataclass(frozen=True)
class PositionSnap:
    p_snap: np.ndarray
    score: float
    score_volume: VoxelVolume
    n_positions: int


def position_snap(
    v_obj: VoxelVolume,
    v_kit: VoxelVolume,
    encoder: str = "signed-occupancy",
    hint_position=None,
) -> PositionSnap:
    """World position whose correlation of object features over kit features peaks.

    The object volume acts as the kernel; its center voxel is the anchor that
    lands on the returned position. Scores are overlap-normalized (see
    normalized_correlation). Ties break toward the hint (when given), then by
    x-fastest voxel order.
    """
    pair = ENCODERS.get(encoder)
    if pair is None:
        raise InvalidArgumentError(f"unknown encoder {encoder!r}; known: {sorted(ENCODERS)}")
    f_obj = pair.encode_object(v_obj)
    if v_obj.kind == "occupancy" and not v_obj.data.any():
        raise EmptyInputError("object volume is empty")
    if v_obj.kind == "tsdf" and not (v_obj.data <= 0).any():
        raise EmptyInputError("object volume is empty")
    f_kit = pair.encode_kit(v_kit)
    corr = normalized_correlation(f_kit, f_obj, pair.integral)

    best = corr.max()
    ties = np.argwhere(corr == best)
    if hint_position is not None and len(ties) > 1:
        centers = v_kit.index_to_world(ties)
        d2 = np.sum((centers - np.asarray(hint_position)) ** 2, axis=1)
        order = np.lexsort((ties[:, 2], ties[:, 1], ties[:, 0], d2))
    else:
        # lexicographic in x-fastest linear order
        order = np.lexsort((ties[:, 0], ties[:, 1], ties[:, 2]))
    pick = ties[order[0]]
    p = v_kit.index_to_world(pick)
    vol = VoxelVolume(v_kit.origin, v_kit.voxel_size, corr.astype(np.float32), "feature")
    return PositionSnap(p, float(best), vol, int(np.prod(v_kit.dims)))


def brute_force_position_snap(
    v_obj: VoxelVolume,
    v_kit: VoxelVolume,
    encoder: str = "signed-occupancy",
) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive-shift maximizer of the same score (independent oracle).

    Returns (argmax index set, score volume) by looping every kit voxel,
    summing the overlapped products explicitly and dividing by the overlap,
    mirroring normalized_correlation including the minimum-overlap floor.
    """
    pair = ENCODERS[encoder]
    f_obj = pair.encode_object(v_obj)
    f_kit = pair.encode_kit(v_kit)
    kd = np.array(f_kit.shape)
    od = np.array(f_obj.shape)
    c = od // 2
    sums = np.zeros(kd)
    counts = np.zeros(kd)
    for s0 in range(kd[0]):
        for s1 in range(kd[1]):
            for s2 in range(kd[2]):
                s = np.array([s0, s1, s2])
                lo = s - c
                hi = lo + od
                klo = np.maximum(lo, 0)
                khi = np.minimum(hi, kd)
                if np.any(klo >= khi):
                    continue
                olo = klo - lo
                ohi = olo + (khi - klo)
                sums[s0, s1, s2] = np.sum(
                    f_kit[klo[0]:khi[0], klo[1]:khi[1], klo[2]:khi[2]]
                    * f_obj[olo[0]:ohi[0], olo[1]:ohi[1], olo[2]:ohi[2]]
                )
                counts[s0, s1, s2] = np.prod(khi - klo)
    if pair.integral:
        sums = np.rint(sums)
    floor = min(max(MIN_OVERLAP_FRACTION * f_obj.size, MIN_OVERLAP_VOXELS), counts.max())
    scores = np.full(kd, -np.inf)
    valid = counts >= floor
    scores[valid] = sums[valid] / np.sqrt(counts[valid])
    return np.argwhere(scores == scores.max()), scores


# ---------------------------------------------------------------------------
# rotation candidates


def sample_rotations(
    q_hint,
    cfg: SnapConfig = SnapConfig(),
    include=None,
    rng_seed: int = 0,
) -> list[np.ndarray]:
    """n_rotations candidate orientations.

    Informed: uniform axis (sphere) x uniform angle in [0, delta] composed onto
    the hint. Uninformed: roll/pitch in +-roll_pitch_range and yaw in
    +-yaw_range composed in yaw*pitch*roll order onto the base orientation.
    An `include` quaternion replaces one sample (the training-time slot).
    """
    rng = np.random.default_rng(rng_seed)
    n = cfg.n_rotations - (1 if include is not None else 0)
    q_hint = np.asarray(q_hint, dtype=np.float64)
    out: list[np.ndarray] = []
    for _ in range(n):
        if cfg.uninformed:
            yaw = rng.uniform(-cfg.yaw_range, cfg.yaw_range)
            pitch = rng.uniform(-cfg.roll_pitch_range, cfg.roll_pitch_range)
            roll = rng.uniform(-cfg.roll_pitch_range, cfg.roll_pitch_range)
            q_off = yaw_pitch_roll_quat(yaw, pitch, roll)
        else:
            axis = rng.normal(size=3)
            while np.linalg.norm(axis) < 1e-12:
                axis = rng.normal(size=3)
            angle = rng.uniform(0.0, cfg.delta_orientation)
            q_off = quat_from_axis_angle(axis, angle)
        out.append(np.asarray(Pose(q=quat_multiply(q_off, q_hint)).q))
    if include is not None:
        out.append(np.asarray(Pose(q=include).q))
    return out


# ---------------------------------------------------------------------------
# candidate scorers


def make_scorer(name: str, kit_crop: VoxelVolume, kit_points: LabeledPointCloud, cfg: SnapConfig):
    """Build a callable scoring a joined labeled cloud against the kit crop."""
    if name == "fit":
        solid = kit_crop.data.astype(bool)
        if kit_crop.kind == "tsdf":
            solid = kit_crop.data <= 0
        vs = kit_crop.voxel_size
        # signed distance to the kit surface in meters (+ outside, - inside);
        # voxel lookups alias by up to one voxel, so "inside" starts one voxel
        # deep and the contact band spans that quantization slack
        if solid.any():
            sdf = np.where(
                solid,
                -ndi.distance_transform_edt(solid, sampling=vs),
                ndi.distance_transform_edt(~solid, sampling=vs),
            )
        else:
            sdf = np.full(solid.shape, np.inf)
        # contact: no deeper than one voxel into the solid (lookup slack) and
        # no farther out than twice the expected clearance
        band = vs * 1.0001
        contact_hi = 2.0 * cfg.scorer_margin

        def fit_score(cloud: LabeledPointCloud) -> float:
            obj_pts = cloud.points[cloud.labels == 1]
            idx = kit_crop.world_to_index(obj_pts)
            dims = np.array(kit_crop.dims)
            inb = np.all((idx >= 0) & (idx < dims), axis=1)
            ii = np.clip(idx, 0, dims - 1)
            s = np.full(len(obj_pts), np.inf)
            s[inb] = sdf[ii[inb, 0], ii[inb, 1], ii[inb, 2]]
            contact = (s > -band) & (s <= contact_hi)
            inside = s <= -band
            n = len(obj_pts)
            return float(contact.sum() / n - 4.0 * inside.sum() / n)

        return fit_score
    raise InvalidArgumentError(f"unknown scorer {name!r}")


SCORER_NAMES = ("fit",)


@dataclass(frozen=True)
class RotationSnap:
    q_snap: np.ndarray
    scores: tuple
    pivot_world: np.ndarray
    centroid_local: np.ndarray
    scorer_calls: int


def rotation_snap(
    v_obj_local: VoxelVolume,
    v_kit_crop: VoxelVolume,
    p_snap,
    candidates: list,
    cfg: SnapConfig = SnapConfig(),
    rng_seed: int = 0,
    q_base=None,
) -> RotationSnap:
    """Score each candidate orientation on labeled points and return the argmax.

    Object points are sampled from the local-frame object volume, rotated
    about the object's occupancy centroid held fixed at the position-stage
    placement, and scored against the kit crop. Ties break toward the base
    (hint) orientation, then by candidate order.
    """
    if not candidates:
        raise InvalidArgumentError("no rotation candidates")
    if not v_kit_crop.contains_point(p_snap):
        raise InvalidArgumentError("p_snap must lie inside the kit crop")
    if q_base is None:
        q_base = np.array([0.0, 0.0, 0.0, 1.0])

    obj_cloud = sample_surface_points(v_obj_local, cfg.n_object_points, +1, rng_seed)
    kit_cloud = sample_surface_points(v_kit_crop, cfg.n_kit_points, -1, rng_seed + 1)
    scorer = make_scorer(cfg.scorer, v_kit_crop, kit_cloud, cfg)

    occ = v_obj_local.occupied_indices()
    centroid_local = v_obj_local.index_to_world(occ).mean(axis=0)
    pivot_world = np.asarray(p_snap, dtype=np.float64) + quat_rotate(q_base, centroid_local)

    local_centered = obj_cloud.points - centroid_local
    scores = []
    calls = 0
    for q in candidates:
        pts = local_centered @ quat_to_matrix(q).T + pivot_world
        joined = LabeledPointCloud.joined(
            LabeledPointCloud(pts, obj_cloud.labels), kit_cloud
        )
        scores.append(scorer(joined))
        calls += 1

    scores_arr = np.array(scores)
    best = scores_arr.max()
    tie_idx = np.flatnonzero(scores_arr == best)
    if len(tie_idx) > 1:
        geo = np.array([quat_geodesic(candidates[i], q_base) for i in tie_idx])
        tie_idx = tie_idx[np.lexsort((tie_idx, geo))]
    pick = int(tie_idx[0])
    return RotationSnap(
        np.asarray(candidates[pick]),
        tuple((np.asarray(q), float(s)) for q, s in zip(candidates, scores)),
        pivot_world,
        centroid_local,
        calls,
    )


# ---------------------------------------------------------------------------
# volume reorientation (builds the correlation kernel)


def dilate_occupancy_xy(vol: VoxelVolume, radius: float) -> VoxelVolume:
    """Dilate occupancy horizontally with the kit generator's replica scheme.

    Four axis shifts at floor(radius) and four diagonal shifts at
    floor(radius / sqrt(2)), in voxels: the dilated object is the shape of its
    own cavity and never exceeds the true cavity clearance.
    """
    vs = vol.voxel_size
    d = int(radius / vs + 1e-9)
    dd = int(radius / np.sqrt(2) / vs + 1e-9)
    if d == 0 and dd == 0:
        return vol
    occ = vol.data.astype(bool)
    if not occ.any():
        return vol
    out = occ.copy()
    nx, ny = occ.shape[:2]
    for dx, dy in ((d, 0), (-d, 0), (0, d), (0, -d), (dd, dd), (dd, -dd), (-dd, dd), (-dd, -dd)):
        if dx == 0 and dy == 0:
            continue
        shifted = np.zeros_like(occ)
        sx0, sx1 = max(dx, 0), nx + min(dx, 0)
        sy0, sy1 = max(dy, 0), ny + min(dy, 0)
        shifted[sx0:sx1, sy0:sy1] = occ[sx0 - dx:sx1 - dx, sy0 - dy:sy1 - dy]
        out |= shifted
    return vol.with_data(out.astype(np.uint8))


def balance_padding(vol: VoxelVolume) -> VoxelVolume:
    """Grow the grid with free voxels until free count >= occupied count.

    Keeps signed-occupancy kernels neutral in open space (mean ~0), so
    free-air placements cannot outrank partially visible true fits.
    """
    occ = vol.data.astype(bool)
    n_occ = int(occ.sum())
    dims = np.array(vol.dims)
    pad = 0
    while np.prod(dims + 2 * pad) - n_occ < n_occ and pad < 24:
        pad += 1
    if pad == 0:
        return vol
    new = np.zeros(tuple(dims + 2 * pad), dtype=np.uint8)
    new[pad:-pad, pad:-pad, pad:-pad] = vol.data
    origin = vol.origin - pad * vol.voxel_size
    return VoxelVolume(origin, vol.voxel_size, new, vol.kind)


def resample_occupancy(completed: VoxelVolume, anchor, q_from, q_to) -> VoxelVolume:
    """Re-grid an occupancy volume into orientation q_to about the anchor point.

    The output grid is axis-aligned with odd dims and its center voxel center
    sits exactly on the anchor, so the volume can anchor a correlation kernel.
    Lookups gather from the source (no holes).
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    occ_idx = completed.occupied_indices()
    if len(occ_idx) == 0:
        raise EmptyInputError("cannot reorient an empty volume")
    vs = completed.voxel_size
    src_pts = completed.index_to_world(occ_idx) - anchor
    rel = quat_multiply(np.asarray(Pose(q=q_to).q), np.asarray(Pose(q=q_from).inverse().q))
    rot_pts = src_pts @ quat_to_matrix(rel).T
    half = np.abs(rot_pts).max(axis=0) + 2 * vs
    half_vox = np.ceil(half / vs).astype(int)
    dims = 2 * half_vox + 1
    origin = -(half_vox + 0.5) * vs
    xs = origin[0] + (np.arange(dims[0]) + 0.5) * vs
    ys = origin[1] + (np.arange(dims[1]) + 0.5) * vs
    zs = origin[2] + (np.arange(dims[2]) + 0.5) * vs
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    back = pts @ quat_to_matrix(rel)  # inverse rotation
    vals = completed.sample(back + anchor, fill=0)
    if completed.kind == "tsdf":
        vals = (vals <= 0).astype(np.uint8)
    data = vals.reshape(tuple(dims)).astype(np.uint8)
    return VoxelVolume(origin, vs, data, "occupancy")


# ---------------------------------------------------------------------------
# full pipeline


def snap_pose(
    v_obj_completed: VoxelVolume,
    v_kit_completed: VoxelVolume,
    start_pose: Pose,
    hint: Pose | None,
    cfg: SnapConfig = SnapConfig(),
    rng_seed: int = 0,
) -> SnapResult:
    """Crop -> position correlation -> recrop -> rotation scoring.

    `v_obj_completed` is the completed object occupancy in the workspace grid
    (object observed at `start_pose`); `hint` is the user-edited goal pose.
    With no hint the whole kit volume and the uninformed rotation ranges are
    searched, with candidates composed onto the start orientation.
    """
    t0 = time.perf_counter()
    informed = hint is not None and not cfg.uninformed
    anchor = start_pose.p
    q_base = hint.q if informed else start_pose.q

    # the position kernel is the margin-dilated object: the cavity is the
    # dilated silhouette, so the correlation peak sits at the centered fit
    # instead of a wall-pressed contact point
    kernel = balance_padding(
        dilate_occupancy_xy(
            resample_occupancy(v_obj_completed, anchor, start_pose.q, q_base), cfg.scorer_margin
        )
    )
    t1 = time.perf_counter()

    if informed:
        v_kit = crop_kit_volume(v_kit_completed, hint.p, cfg.delta_position)
    else:
        v_kit = v_kit_completed
    pos = position_snap(kernel, v_kit, cfg.encoder, hint.p if informed else None)
    t2 = time.perf_counter()

    rot_crop = crop_volume(v_kit_completed, pos.p_snap, ROTATION_CROP_HALF_VOXELS * v_kit_completed.voxel_size)
    local_obj = resample_occupancy(v_obj_completed, anchor, start_pose.q, np.array([0.0, 0.0, 0.0, 1.0]))
    candidates = sample_rotations(q_base, replace(cfg, uninformed=not informed), None, rng_seed)
    rot = rotation_snap(local_obj, rot_crop, pos.p_snap, candidates, cfg, rng_seed + 1, q_base)
    t3 = time.perf_counter()

    p_final = rot.pivot_world - quat_rotate(rot.q_snap, rot.centroid_local)
    if informed:
        # centroid pivoting can drift a hair past the per-axis bound; clamp
        p_final = np.clip(p_final, hint.p - cfg.delta_position, hint.p + cfg.delta_position)
    pose = Pose(p_final, rot.q_snap)
    if informed:
        assert np.all(np.abs(pose.p - hint.p) <= cfg.delta_position + 1e-9)
        assert quat_geodesic(pose.q, hint.q) <= cfg.delta_orientation + 1e-9

    return SnapResult(
        pose=pose,
        position_score=pos.score,
        rotation_scores=rot.scores,
        candidates_evaluated=(pos.n_positions, len(candidates)),
        p_snap=pos.p_snap,
        scorer_calls=rot.scorer_calls,
        timing_ms={
            "kernel": (t1 - t0) * 1e3,
            "position": (t2 - t1) * 1e3,
            "rotation": (t3 - t2) * 1e3,
            "total": (t3 - t0) * 1e3,
        },
    )
