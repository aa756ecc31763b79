"""Dataset generation, user-error injection, benchmark runs and robustness sweeps.

Everything is seeded: per-scene and per-record generators derive from the
master seed through SeedSequence keys, so reports are byte-identical across
runs. Wall-clock timings are kept out of records.csv (they go to
timings.csv) to preserve that property.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .completion import CompletionRequest, complete
from .errors import InvalidArgumentError, NotGraspableError, PlacementError, SeatError
from .geometry import Pose, position_error, quat_from_axis_angle, quat_geodesic, quat_multiply
from .kitgen import KitSpec, assemble_kits, generate_kit, load_assembly, normalize_object, save_assembly
from .mesh import load_obj
from .objects import ASYMMETRIC_KINDS, make_object
from .plan import check_straight_insertion, grasp_pose_topdown, insertion_collision_volume, make_plan
from .scene import observe, sample_scene
from .snap import SnapConfig, snap_pose
from .volume import occupancy_from_tsdf

DEFAULT_EPS_POS = 0.028
DEFAULT_EPS_ROT = np.deg2rad(27.5)


def stable_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0x7FFFFFFF for k in keys]))


def stable_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) & 0x7FFFFFFF for k in keys]).generate_state(1)[0])


def nearest_rank(values, pct: float) -> float:
    """Nearest-rank percentile (no interpolation)."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if len(vals) == 0:
        return float("nan")
    rank = max(int(np.ceil(pct / 100.0 * len(vals))), 1)
    return float(vals[rank - 1])


def sample_user_hint(
    gt: Pose,
    eps_pos: float,
    eps_rot: float,
    rng: np.random.Generator,
    max_pos: float = DEFAULT_EPS_POS,
    max_rot: float = DEFAULT_EPS_ROT,
    exact: bool = False,
) -> Pose:
    """Perturb the ground-truth pose like an imprecise user.

    Position: uniform per-axis offset within +-eps_pos (or a fixed-magnitude
    offset in a random direction when exact=True). Rotation: uniform axis with
    angle uniform in [0, eps_rot] (or exactly eps_rot when exact=True).
    """
    if eps_pos > max_pos + 1e-12 or eps_rot > max_rot + 1e-9:
        raise InvalidArgumentError(
            f"hint error ({eps_pos}, {eps_rot}) exceeds search deltas ({max_pos}, {max_rot})"
        )
    if exact:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        off = d * eps_pos  # |d_i| <= 1, so per-axis components stay within max_pos
        angle = eps_rot
    else:
        off = rng.uniform(-eps_pos, eps_pos, size=3)
        angle = rng.uniform(0.0, eps_rot)
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.normal(size=3)
    q_off = quat_from_axis_angle(axis, angle) if angle > 0 else np.array([0.0, 0.0, 0.0, 1.0])
    return Pose(gt.p + off, quat_multiply(q_off, gt.q))


# ---------------------------------------------------------------------------
# dataset generation


@dataclass(frozen=True)
class DatasetSpec:
    n_assemblies: int = 10
    kits_min: int = 2
    kits_max: int = 5
    margin: float = 0.0025
    object_kinds: tuple = ASYMMETRIC_KINDS
    identical_pairs: bool = False  # every assembly uses one object repeated


def generate_dataset(out_dir, spec: DatasetSpec, seed: int = 0, objects_dir=None) -> Path:
    """Write n assemblies (kit+object OBJs, occupancy volumes, assembly.json)
    plus a manifest; existing assembly directories are skipped (resumable)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source_meshes = None
    if objects_dir is not None:
        paths = sorted(Path(objects_dir).glob("*.obj"))
        if not paths:
            raise InvalidArgumentError(f"no .obj files in {objects_dir}")
        source_meshes = [(p.stem, load_obj(p)) for p in paths]

    entries = []
    for i in range(spec.n_assemblies):
        a_dir = out / f"assembly_{i:04d}"
        rng = stable_rng(seed, i)
        n_kits = int(rng.integers(spec.kits_min, spec.kits_max + 1))
        angles = [float(a) for a in rng.uniform(10.0, 45.0, size=max(n_kits - 1, 0))]
        picks = []
        if spec.identical_pairs:
            n_kits = max(n_kits, 2)
            angles = angles or [float(rng.uniform(10.0, 45.0))]
            if source_meshes is not None:
                name, mesh = source_meshes[int(rng.integers(len(source_meshes)))]
            else:
                kind = str(rng.choice(list(spec.object_kinds)))
                s = int(rng.integers(0, 2**31))
                name, mesh = f"{kind}-{s}", make_object(kind, s)
            picks = [(f"{name}#{j}", mesh) for j in range(n_kits)]
            angles = angles[: n_kits - 1]
        else:
            for j in range(n_kits):
                if source_meshes is not None:
                    name, mesh = source_meshes[int(rng.integers(len(source_meshes)))]
                    picks.append((f"{name}#{i}.{j}", mesh))
                else:
                    kind = str(rng.choice(list(spec.object_kinds)))
                    s = int(rng.integers(0, 2**31))
                    picks.append((f"{kind}-{s}", make_object(kind, s)))

        if not (a_dir / "assembly.json").exists():
            kits, objs = [], []
            for oid, mesh in picks:
                norm = normalize_object(mesh)
                kits.append(generate_kit(norm, KitSpec(margin=spec.margin), object_id=oid))
                objs.append(norm)
            assembly = None
            for attempt in range(20):
                try:
                    assembly = assemble_kits(kits, angles, rng_seed=stable_seed(seed, i, attempt))
                    break
                except PlacementError:
                    continue
            if assembly is None:
                raise PlacementError(f"assembly {i}: placement failed after retries")
            save_assembly(assembly, objs, a_dir)
        entries.append(
            {"id": f"assembly_{i:04d}", "dir": a_dir.name, "n_kits": n_kits, "objects": [p[0] for p in picks]}
        )

    manifest = {
        "seed": seed,
        "margin": spec.margin,
        "n_assemblies": spec.n_assemblies,
        "kits_per": [spec.kits_min, spec.kits_max],
        "object_kinds": list(spec.object_kinds),
        "identical_pairs": spec.identical_pairs,
        "assemblies": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise SeatError(f"{dataset_dir}: not a dataset (missing manifest.json)")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# benchmark core


@dataclass(frozen=True)
class BenchConfig:
    snap: SnapConfig = field(default_factory=SnapConfig)
    completion: str = "oracle"        # object completion mode
    kit_completion: str | None = None  # default: oracle with oracle, else visual_hull
    informed: bool = True
    eps_pos: float = DEFAULT_EPS_POS
    eps_rot: float = DEFAULT_EPS_ROT
    exact_eps: bool = False
    n_assemblies: int | None = None
    depth_noise_sigma: float = 0.0

    def resolved_kit_completion(self) -> str:
        if self.kit_completion:
            return self.kit_completion
        return "oracle" if self.completion == "oracle" else "visual_hull"

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "completion", "kit_completion", "informed", "eps_pos", "eps_rot",
            "exact_eps", "n_assemblies", "depth_noise_sigma")}
        d["snap"] = self.snap.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "BenchConfig":
        d = dict(d)
        snap = SnapConfig.from_dict(d.pop("snap", {}))
        return BenchConfig(snap=snap, **d)


@dataclass
class EvalRecord:
    scene_id: str
    object_id: str
    completion: str
    informed: bool
    eps_pos: float
    eps_rot: float
    gt: Pose
    hint: Pose | None
    snapped: Pose
    delta_pos: float
    delta_rot: float
    position_score: float
    n_positions: int
    n_rotations: int
    scorer_calls: int
    feasible: bool
    failure_reason: str
    wrong_cavity: bool
    success: bool
    timings_ms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.delta_rot <= np.pi + 1e-9):
            raise InvalidArgumentError("delta_rot outside [0, pi]")
        if any(t < 0 for t in self.timings_ms.values()):
            raise InvalidArgumentError("negative timing")


def _fmt(x: float) -> str:
    return repr(float(x))


def _pose_fields(prefix: str) -> list[str]:
    return [f"{prefix}_{k}" for k in ("px", "py", "pz", "qx", "qy", "qz", "qw")]


CSV_COLUMNS = (
    ["scene_id", "object_id", "completion", "informed", "eps_pos", "eps_rot"]
    + _pose_fields("gt")
    + _pose_fields("hint")
    + _pose_fields("snap")
    + ["delta_pos", "delta_rot", "position_score", "n_positions", "n_rotations",
       "scorer_calls", "feasible", "failure_reason", "wrong_cavity", "success"]
)


def record_to_row(r: EvalRecord) -> list[str]:
    def pose_cells(p: Pose | None) -> list[str]:
        if p is None:
            return [""] * 7
        return [_fmt(v) for v in (*p.p, *p.q)]

    return (
        [r.scene_id, r.object_id, r.completion, str(int(r.informed)), _fmt(r.eps_pos), _fmt(r.eps_rot)]
        + pose_cells(r.gt)
        + pose_cells(r.hint)
        + pose_cells(r.snapped)
        + [
            _fmt(r.delta_pos), _fmt(r.delta_rot), _fmt(r.position_score),
            str(r.n_positions), str(r.n_rotations), str(r.scorer_calls),
            str(int(r.feasible)), r.failure_reason, str(int(r.wrong_cavity)), str(int(r.success)),
        ]
    )


def records_to_csv(records: list[EvalRecord]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(record_to_row(r)))
    return "\n".join(lines) + "\n"


def timings_to_csv(records: list[EvalRecord]) -> str:
    keys = ["kernel", "position", "rotation", "total"]
    lines = ["scene_id,object_id," + ",".join(keys)]
    for r in records:
        lines.append(
            f"{r.scene_id},{r.object_id}," + ",".join(f"{r.timings_ms.get(k, 0.0):.3f}" for k in keys)
        )
    return "\n".join(lines) + "\n"


class SceneCase:
    """One observed scene with completed volumes, ready for repeated snaps."""

    def __init__(self, scene_id: str, assembly_dir, scene_seed: int, cfg: BenchConfig):
        self.scene_id = scene_id
        assembly, objects = load_assembly(assembly_dir)
        ids = [ak.object_id for ak in assembly.kits]
        self.margin = assembly.kits[0].kit.margin
        self.scene = sample_scene(list(zip(ids, objects)), assembly, rng_seed=scene_seed)
        self.obs = observe(self.scene, cfg.depth_noise_sigma, rng_seed=stable_seed(scene_seed, 777))
        self.kits = {ak.object_id: ak for ak in self.scene.assembly.kits}

        kit_mode = cfg.resolved_kit_completion()
        if kit_mode == "oracle":
            from .scene import KIT_VOLUME_PAD

            self.kit_completed = self.scene.assembly.build_occupancy(
                self.obs.kit_volume.voxel_size, pad=KIT_VOLUME_PAD
            )
        else:
            self.kit_completed = occupancy_from_tsdf(self.obs.kit_volume)

        self.completed = {}
        for o in self.scene.objects:
            req = CompletionRequest(
                self.obs.object_volumes[o.object_id],
                cfg.completion,
                gt=(o.mesh, o.gt_start),
                ground_z=0.0,
            )
            self.completed[o.object_id] = complete(req)

        self.assembly_interior = insertion_collision_volume(self.scene.assembly.build_occupancy(0.001))

    def cavity_positions(self) -> np.ndarray:
        return np.array([self.scene.assembly.cavity_pose_world(i).p for i in range(len(self.scene.assembly.kits))])


def evaluate_object(case: SceneCase, obj_index: int, cfg: BenchConfig, record_seed: int) -> EvalRecord:
    o = case.scene.objects[obj_index]
    gt = o.gt_kit
    rng = np.random.default_rng(record_seed)
    hint = None
    eps_pos, eps_rot = 0.0, 0.0
    if cfg.informed:
        eps_pos, eps_rot = cfg.eps_pos, cfg.eps_rot
        hint = sample_user_hint(
            gt, eps_pos, eps_rot, rng,
            max_pos=cfg.snap.delta_position, max_rot=cfg.snap.delta_orientation,
            exact=cfg.exact_eps,
        )

    res = snap_pose(
        case.completed[o.object_id],
        case.kit_completed,
        o.gt_start,
        hint,
        cfg.snap,
        rng_seed=stable_seed(record_seed, 1),
    )
    delta_pos = position_error(res.pose.p, gt.p)
    delta_rot = quat_geodesic(res.pose.q, gt.q)

    feasible, reason = True, ""
    try:
        grasp = grasp_pose_topdown(case.completed[o.object_id], o.gt_start)
        plan = make_plan(grasp, res.pose, o.object_id)
        ok = check_straight_insertion(
            case.kits[o.object_id].kit.object_occupancy,
            case.assembly_interior,
            plan,
            contact_voxels=0,  # interior volume is pre-eroded
        )
        if not ok:
            feasible, reason = False, "collision-on-insert"
    except NotGraspableError as e:
        feasible, reason = False, f"not-graspable: {e}"

    cavities = case.cavity_positions()
    nearest = int(np.argmin(np.linalg.norm(cavities - res.pose.p, axis=1)))
    wrong_cavity = nearest != obj_index
    success = feasible and delta_pos <= case.margin

    return EvalRecord(
        scene_id=case.scene_id,
        object_id=o.object_id,
        completion=cfg.completion,
        informed=cfg.informed,
        eps_pos=eps_pos,
        eps_rot=eps_rot,
        gt=gt,
        hint=hint,
        snapped=res.pose,
        delta_pos=delta_pos,
        delta_rot=delta_rot,
        position_score=res.position_score,
        n_positions=res.candidates_evaluated[0],
        n_rotations=res.candidates_evaluated[1],
        scorer_calls=res.scorer_calls,
        feasible=feasible,
        failure_reason=reason,
        wrong_cavity=wrong_cavity,
        success=success,
        timings_ms=res.timing_ms,
    )


def summarize(records: list[EvalRecord]) -> dict:
    dp = [r.delta_pos for r in records]
    dr = [r.delta_rot for r in records]
    return {
        "n_records": len(records),
        "delta_pos": {p: nearest_rank(dp, q) for p, q in (("p20", 20), ("median", 50), ("p80", 80), ("p90", 90))},
        "delta_rot": {p: nearest_rank(dr, q) for p, q in (("p20", 20), ("median", 50), ("p80", 80), ("p90", 90))},
        "success_rate": float(np.mean([r.success for r in records])) if records else float("nan"),
        "feasible_rate": float(np.mean([r.feasible for r in records])) if records else float("nan"),
        "wrong_cavity_rate": float(np.mean([r.wrong_cavity for r in records])) if records else float("nan"),
        "percentile_estimator": "nearest-rank",
        "success_criterion": "insertion feasible and delta_pos <= kit margin",
    }


def run_benchmark(dataset_dir, cfg: BenchConfig, seed: int = 0, out_dir=None) -> tuple[list[EvalRecord], dict]:
    """Per scene-object: observe, complete, hint, snap, plan-check, record."""
    manifest = load_manifest(dataset_dir)
    entries = manifest["assemblies"]
    if cfg.n_assemblies is not None:
        entries = entries[: cfg.n_assemblies]
    records: list[EvalRecord] = []
    for si, entry in enumerate(entries):
        case = SceneCase(entry["id"], Path(dataset_dir) / entry["dir"], stable_seed(seed, si), cfg)
        for oi in range(len(case.scene.objects)):
            records.append(evaluate_object(case, oi, cfg, stable_seed(seed, si, oi)))
    summary = {"config": cfg.to_dict(), "seed": seed, **summarize(records)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(records_to_csv(records))
        (out / "timings.csv").write_text(timings_to_csv(records))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return records, summary


def robustness_sweep(
    dataset_dir,
    axis: str,
    bins: list[float],
    fixed_other: float,
    cfg: BenchConfig,
    seed: int = 0,
    out_dir=None,
) -> list[dict]:
    """Median + [20, 80] percentiles of both error metrics per hint-error bin.

    axis="position": bins are position-error magnitudes (m) at fixed rotation
    error; axis="rotation": bins are rotation errors (rad) at fixed position
    error. Hints use exact error magnitudes. Scenes are observed once and
    snapped per bin.
    """
    if axis not in ("position", "rotation"):
        raise InvalidArgumentError("axis must be 'position' or 'rotation'")
    for b in bins:
        limit = cfg.snap.delta_position if axis == "position" else cfg.snap.delta_orientation
        if b > limit + 1e-12:
            raise InvalidArgumentError(f"bin {b} outside the search delta {limit}")
    manifest = load_manifest(dataset_dir)
    entries = manifest["assemblies"]
    if cfg.n_assemblies is not None:
        entries = entries[: cfg.n_assemblies]

    per_bin: dict[float, list[EvalRecord]] = {b: [] for b in bins}
    for si, entry in enumerate(entries):
        case = SceneCase(entry["id"], Path(dataset_dir) / entry["dir"], stable_seed(seed, si), cfg)
        for bi, b in enumerate(bins):
            eps_pos, eps_rot = (b, fixed_other) if axis == "position" else (fixed_other, b)
            bin_cfg = replace(cfg, eps_pos=eps_pos, eps_rot=eps_rot, exact_eps=True, informed=True)
            for oi in range(len(case.scene.objects)):
                per_bin[b].append(evaluate_object(case, oi, bin_cfg, stable_seed(seed, si, oi, bi)))

    table = []
    for b in bins:
        recs = per_bin[b]
        dp = [r.delta_pos for r in recs]
        dr = [r.delta_rot for r in recs]
        table.append(
            {
                "axis": axis,
                "bin": b,
                "fixed_other": fixed_other,
                "n": len(recs),
                "delta_pos_median": nearest_rank(dp, 50),
                "delta_pos_p20": nearest_rank(dp, 20),
                "delta_pos_p80": nearest_rank(dp, 80),
                "delta_rot_median": nearest_rank(dr, 50),
                "delta_rot_p20": nearest_rank(dr, 20),
                "delta_rot_p80": nearest_rank(dr, 80),
            }
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = list(table[0].keys()) if table else []
        lines = [",".join(cols)]
        for row in table:
            lines.append(",".join(_fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        (out / "sweep_summary.json").write_text(json.dumps({"config": cfg.to_dict(), "table": table}, indent=2, sort_keys=True))
    return table
