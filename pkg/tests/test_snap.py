import numpy as np
import pytest

from seat.cloud import LabeledPointCloud
from seat.errors import EmptyInputError, InvalidArgumentError
from seat.geometry import Pose, quat_from_axis_angle, quat_geodesic, quat_multiply, quat_rotate
from seat.kitgen import KitSpec, assemble_kits, generate_kit, normalize_object
from seat.mesh import box_mesh
from seat.objects import make_object
from seat.snap import (
    SnapConfig,
    brute_force_position_snap,
    crop_kit_volume,
    cross_correlate_same,
    position_snap,
    resample_occupancy,
    rotation_snap,
    sample_rotations,
    snap_pose,
)
from seat.volume import VoxelVolume, empty_volume


def occ(data, origin=(0, 0, 0), vs=0.001):
    return VoxelVolume(np.asarray(origin, dtype=float), vs, np.asarray(data, dtype=np.uint8), "occupancy")


def test_cross_correlation_alignment():
    field = np.zeros((9, 9, 9))
    field[3, 4, 5] = 1.0
    kernel = np.zeros((5, 5, 5))
    kernel[2, 2, 2] = 1.0  # spike at the kernel center
    corr = cross_correlate_same(field, kernel, integral=True)
    assert np.unravel_index(np.argmax(corr), corr.shape) == (3, 4, 5)
    # spike displaced by +1 in x: peak moves to s with field[s + d - c] = spike
    kernel2 = np.zeros((5, 5, 5))
    kernel2[3, 2, 2] = 1.0
    corr2 = cross_correlate_same(field, kernel2, integral=True)
    assert np.unravel_index(np.argmax(corr2), corr2.shape) == (2, 4, 5)


def test_position_snap_constructed_shift():
    # object = cavity complement shifted by a known amount -> argmax at the shift
    rng = np.random.default_rng(0)
    obj = (rng.random((7, 7, 7)) > 0.5).astype(np.uint8)
    obj[3, 3, 3] = 1
    kit = np.ones((21, 21, 21), dtype=np.uint8)
    shift = np.array([4, 9, 12])
    lo = shift - 3
    kit[lo[0]:lo[0] + 7, lo[1]:lo[1] + 7, lo[2]:lo[2] + 7] = 1 - obj
    res = position_snap(occ(obj), occ(kit))
    got_idx = occ(kit).world_to_index(res.p_snap)
    assert np.array_equal(got_idx, shift)


def test_position_snap_matches_brute_force():
    rng = np.random.default_rng(1)
    for trial in range(10):
        od = rng.integers(3, 8, size=3)
        kd = rng.integers(10, 18, size=3)
        obj = (rng.random(tuple(od)) > 0.4).astype(np.uint8)
        obj[tuple(d // 2 for d in od)] = 1
        kit = (rng.random(tuple(kd)) > 0.5).astype(np.uint8)
        res = position_snap(occ(obj), occ(kit))
        argmax_set, scores = brute_force_position_snap(occ(obj), occ(kit))
        got = occ(kit).world_to_index(res.p_snap)
        assert np.array_equal(res.score_volume.data, scores.astype(np.float32)), f"trial {trial}"
        assert any(np.array_equal(got, a) for a in argmax_set)


def test_position_snap_empty_object():
    with pytest.raises(EmptyInputError):
        position_snap(occ(np.zeros((3, 3, 3))), occ(np.ones((5, 5, 5))))


def test_uniform_kit_tie_breaks_toward_hint():
    obj = np.ones((3, 3, 3), dtype=np.uint8)
    kit = np.zeros((15, 15, 15), dtype=np.uint8)  # all free: flat interior score
    kv = occ(kit)
    hint = kv.index_to_world([10, 11, 12])
    res = position_snap(occ(obj), kv, hint_position=hint)
    got = kv.world_to_index(res.p_snap)
    # interior plateau: every fully-inside placement scores the same, so the
    # tie must resolve to the hint voxel itself
    assert np.array_equal(got, [10, 11, 12])


def test_crop_kit_volume_is_spec_crop():
    vol = empty_volume([0, 0, 0], 0.00089, (128, 128, 128))
    c = vol.index_to_world([64, 64, 64])
    crop = crop_kit_volume(vol, c, 0.028)
    assert crop.dims == (63, 63, 63)


def test_sample_rotations_informed_bounds():
    cfg = SnapConfig()
    q_hint = quat_from_axis_angle([0.3, -0.5, 0.8], 0.7)
    rots = sample_rotations(q_hint, cfg, rng_seed=3)
    assert len(rots) == 391
    geos = [quat_geodesic(q, q_hint) for q in rots]
    assert max(geos) <= np.deg2rad(27.5) + 1e-9


def test_sample_rotations_include_slot():
    cfg = SnapConfig(n_rotations=50)
    q_hint = np.array([0, 0, 0, 1.0])
    rots = sample_rotations(q_hint, cfg, include=q_hint, rng_seed=4)
    assert len(rots) == 50
    assert any(quat_geodesic(q, q_hint) == 0 for q in rots)


def test_sample_rotations_determinism():
    cfg = SnapConfig(n_rotations=20)
    a = sample_rotations([0, 0, 0, 1], cfg, rng_seed=9)
    b = sample_rotations([0, 0, 0, 1], cfg, rng_seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.slow
def test_uninformed_yaw_uniformity():
    cfg = SnapConfig(n_rotations=10_000, uninformed=True)
    rots = sample_rotations([0, 0, 0, 1.0], cfg, rng_seed=12)
    # yaw extracted from the rotated +x axis (roll/pitch are small)
    yaws = []
    for q in rots:
        x = quat_rotate(q, [1.0, 0, 0])
        yaws.append(np.arctan2(x[1], x[0]))
    hist, _ = np.histogram(yaws, bins=12, range=(-np.pi, np.pi))
    n, k = len(yaws), 12
    expect = n / k
    sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(hist - expect) < 3 * sigma + 1e-9)


def _exactfit_pair(kind="l_prism", seed=3, margin=0.0025):
    obj_mesh = normalize_object(make_object(kind, seed))
    kit = generate_kit(obj_mesh, KitSpec(margin=margin))
    return obj_mesh, kit


def test_rotation_snap_injected_gt_wins():
    obj_mesh, kit = _exactfit_pair()
    cfg = SnapConfig(n_rotations=64)
    obj_local = kit.object_occupancy
    q_gt = np.array([0.0, 0.0, 0.0, 1.0])
    p_gt = np.zeros(3)
    q_hint_off = quat_from_axis_angle([0.2, 0.1, 0.9], np.deg2rad(15))
    candidates = sample_rotations(q_hint_off, cfg, include=q_gt, rng_seed=5)
    rot = rotation_snap(obj_local, kit.occupancy, p_gt, candidates, cfg, rng_seed=6, q_base=q_gt)
    assert quat_geodesic(rot.q_snap, q_gt) <= 1e-9
    assert len(rot.scores) == 64
    assert rot.scorer_calls == 64


def test_rotation_snap_90deg_scores_lower():
    obj_mesh, kit = _exactfit_pair("l_prism", 7)
    cfg = SnapConfig(n_rotations=2)
    q_gt = np.array([0.0, 0.0, 0.0, 1.0])
    q_rot = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    rot = rotation_snap(kit.object_occupancy, kit.occupancy, np.zeros(3), [q_gt, q_rot], cfg, 7, q_base=q_gt)
    scores = {i: s for i, (q, s) in enumerate(rot.scores)}
    assert scores[0] > scores[1]
    assert quat_geodesic(rot.q_snap, q_gt) <= 1e-9


def test_rotation_snap_single_candidate():
    _, kit = _exactfit_pair("t_prism", 2)
    q = quat_from_axis_angle([0, 0, 1], 0.3)
    rot = rotation_snap(kit.object_occupancy, kit.occupancy, np.zeros(3), [q], SnapConfig(n_rotations=1), 8)
    assert np.array_equal(rot.q_snap, np.asarray(Pose(q=q).q))
    assert len(rot.scores) == 1


def test_rotation_snap_no_candidates():
    _, kit = _exactfit_pair("t_prism", 2)
    with pytest.raises(InvalidArgumentError):
        rotation_snap(kit.object_occupancy, kit.occupancy, np.zeros(3), [], SnapConfig(), 8)


def test_resample_occupancy_identity_and_rotation():
    m = box_mesh(0.02, 0.01, 0.03)
    from seat.mesh import voxelize_fit

    vol = voxelize_fit(m, 0.001)
    ident = resample_occupancy(vol, np.zeros(3), [0, 0, 0, 1], [0, 0, 0, 1])
    # odd dims, anchor at the exact center voxel
    assert all(d % 2 == 1 for d in ident.dims)
    cidx = (np.array(ident.dims) - 1) // 2
    assert np.allclose(ident.index_to_world(cidx), 0, atol=1e-12)
    assert ident.count_occupied() == pytest.approx(vol.count_occupied(), rel=0.05)
    # rotate 90 deg about z: x/y extents swap
    rot = resample_occupancy(vol, np.zeros(3), [0, 0, 0, 1], quat_from_axis_angle([0, 0, 1], np.pi / 2))
    occ_r = rot.occupied_indices()
    ext = occ_r.max(axis=0) - occ_r.min(axis=0)
    assert abs(ext[0] * rot.voxel_size - 0.01) <= 0.002
    assert abs(ext[1] * rot.voxel_size - 0.02) <= 0.002


def test_snap_pose_informed_within_bounds_exact_fit():
    # end-to-end on a constructed workspace: kit at a known world pose,
    # object volume from the oracle occupancy at a start pose
    obj_mesh, kit = _exactfit_pair("l_prism", 11)
    from seat.mesh import voxelize_mesh

    world_kit_pose = Pose([0.2, 0.05, 0.03], quat_from_axis_angle([0, 1, 0], np.deg2rad(15)))
    # kit occupancy in world frame
    kit_occ_local = kit.occupancy
    corners_lo, corners_hi = kit_occ_local.origin, kit_occ_local.max_corner
    pts = np.array([[x, y, z] for x in (corners_lo[0], corners_hi[0])
                    for y in (corners_lo[1], corners_hi[1]) for z in (corners_lo[2], corners_hi[2])])
    wpts = world_kit_pose.apply(pts)
    vs = 0.00089
    origin = wpts.min(axis=0) - 0.01
    dims = tuple(np.ceil((wpts.max(axis=0) + 0.01 - origin) / vs).astype(int))
    xs = [origin[k] + (np.arange(dims[k]) + 0.5) * vs for k in range(3)]
    gx, gy, gz = np.meshgrid(*xs, indexing="ij")
    world_pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    local = world_kit_pose.inverse().apply(world_pts)
    kit_world = VoxelVolume(origin, vs, kit_occ_local.sample(local, fill=0).reshape(dims), "occupancy")

    gt = world_kit_pose  # cavity pose is the kit-local identity
    start = Pose([-0.15, 0.0, 0.011], quat_from_axis_angle([0, 0, 1], 0.4))
    obj_world = voxelize_mesh(
        obj_mesh.transformed(start),
        start.p - 64 * vs, vs, (128, 128, 128),
    )
    rng = np.random.default_rng(21)
    off = rng.uniform(-0.01, 0.01, size=3)
    q_noise = quat_from_axis_angle(rng.normal(size=3), np.deg2rad(10))
    hint = Pose(gt.p + off, quat_multiply(q_noise, gt.q))
    cfg = SnapConfig(n_rotations=128)
    res = snap_pose(obj_world, kit_world, start, hint, cfg, rng_seed=3)
    # hint-bound invariant
    assert np.all(np.abs(res.pose.p - hint.p) <= cfg.delta_position + 1e-9)
    assert quat_geodesic(res.pose.q, hint.q) <= cfg.delta_orientation + 1e-9
    # close to ground truth for an exact-fit pair
    assert np.linalg.norm(res.pose.p - gt.p) <= 0.006
    assert quat_geodesic(res.pose.q, gt.q) <= np.deg2rad(10)
    # factorization: one scorer call per rotation candidate
    assert res.scorer_calls == cfg.n_rotations
    assert res.candidates_evaluated[1] == cfg.n_rotations
