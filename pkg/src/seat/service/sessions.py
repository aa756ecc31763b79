"""In-memory teleoperation sessions: scene state, snapping, queued execution.

Sessions are independent; within a session mutations are serialized through a
single worker thread and every state change bumps the revision, so reads
observe one consistent snapshot under the session lock.
"""

from __future__ import annotations

import hashlib
import io
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bench import load_manifest, stable_seed
from ..completion import CompletionRequest, complete
from ..errors import InvalidArgumentError, NotFoundError, SeatError, SessionBusyError
from ..geometry import Pose
from ..kitgen import KitSpec, assemble_kits, generate_kit, load_assembly, normalize_object
from ..mesh import TriMesh, merge_meshes, occupancy_to_mesh, save_obj
from ..objects import ASYMMETRIC_KINDS, make_object
from ..plan import execute_plan_sim, grasp_pose_topdown, insertion_collision_volume, make_plan
from ..scene import observe, sample_scene
from ..snap import SnapConfig, resample_occupancy, snap_pose
from ..volume import occupancy_from_tsdf


def _mesh_bytes(mesh: TriMesh) -> bytes:
    buf = io.StringIO()
    for v in mesh.vertices:
        buf.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
    for t in mesh.triangles:
        buf.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return buf.getvalue().encode()


@dataclass
class PlanRecord:
    plan_id: str
    object_id: str
    status: str = "queued"  # queued | running | done | failed
    reason: str | None = None
    resulting_revision: int | None = None
    plan: object = None


@dataclass
class Session:
    session_id: str
    scene: object
    observation: object
    completed: dict
    kit_completed: object
    completion_mode: str
    meshes: dict            # object_id -> (mesh_url, TriMesh in local frame)
    kit_mesh_url: str
    assembly_interior: object
    revision: int = 1
    plans: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    worker: ThreadPoolExecutor = field(default_factory=lambda: ThreadPoolExecutor(max_workers=1))

    def busy(self) -> bool:
        return any(p.status in ("queued", "running") for p in self.plans.values())


class SessionStore:
    def __init__(self, dataset_dir=None, completion: str = "oracle", snap_config: SnapConfig | None = None):
        self.dataset_dir = Path(dataset_dir) if dataset_dir else None
        self.default_completion = completion
        self.snap_config = snap_config or SnapConfig()
        self.sessions: dict[str, Session] = {}
        self.mesh_store: dict[str, bytes] = {}
        self._lock = threading.Lock()

    # -- construction -------------------------------------------------------

    def _register_mesh(self, mesh: TriMesh) -> str:
        data = _mesh_bytes(mesh)
        h = hashlib.sha256(data).hexdigest()[:16]
        with self._lock:
            self.mesh_store[h] = data
        return f"/api/v1/meshes/{h}.obj"

    def get_mesh(self, mesh_hash: str) -> bytes:
        try:
            return self.mesh_store[mesh_hash]
        except KeyError:
            raise NotFoundError(f"unknown mesh {mesh_hash}")

    def _resolve_assembly(self, ref: str | None, seed: int | None):
        if ref is not None:
            if self.dataset_dir is None:
                raise NotFoundError("no dataset is being served")
            manifest = load_manifest(self.dataset_dir)
            entries = manifest["assemblies"]
            entry = None
            if ref.isdigit() and int(ref) < len(entries):
                entry = entries[int(ref)]
            else:
                entry = next((e for e in entries if e["id"] == ref), None)
            if entry is None:
                raise NotFoundError(f"unknown assembly {ref!r}")
            assembly, objects = load_assembly(self.dataset_dir / entry["dir"])
            ids = [ak.object_id for ak in assembly.kits]
            return assembly, list(zip(ids, objects))
        if seed is None:
            raise InvalidArgumentError("need a dataset ref or a seed")
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 4))
        kits, objs = [], []
        for j in range(n):
            kind = str(rng.choice(list(ASYMMETRIC_KINDS)))
            s = int(rng.integers(0, 2**31))
            mesh = normalize_object(make_object(kind, s))
            oid = f"{kind}-{s}"
            kits.append(generate_kit(mesh, KitSpec(margin=0.0025), object_id=oid))
            objs.append((oid, mesh))
        angles = [float(a) for a in rng.uniform(10.0, 45.0, size=n - 1)]
        assembly = assemble_kits(kits, angles, rng_seed=stable_seed(seed, 1))
        return assembly, objs

    def create_session(self, dataset_ref: str | None, seed: int | None,
                       scene_seed: int = 0, completion: str | None = None) -> Session:
        mode = completion or self.default_completion
        assembly, objects = self._resolve_assembly(dataset_ref, seed)
        scene = sample_scene(objects, assembly, rng_seed=scene_seed)
        obs = observe(scene)

        completed, meshes = {}, {}
        for o in scene.objects:
            req = CompletionRequest(obs.object_volumes[o.object_id], mode,
                                    gt=(o.mesh, o.gt_start), ground_z=0.0)
            vol = complete(req)
            completed[o.object_id] = vol
            if mode == "oracle":
                local_mesh = o.mesh
            else:
                local = resample_occupancy(vol, o.gt_start.p, o.gt_start.q, np.array([0.0, 0.0, 0.0, 1.0]))
                local_mesh = occupancy_to_mesh(local)
            meshes[o.object_id] = (self._register_mesh(local_mesh), local_mesh)

        if mode == "oracle":
            from ..scene import KIT_VOLUME_PAD

            kit_completed = scene.assembly.build_occupancy(obs.kit_volume.voxel_size, pad=KIT_VOLUME_PAD)
        else:
            kit_completed = occupancy_from_tsdf(obs.kit_volume)
        kit_mesh = merge_meshes([m.transformed(p) for m, p in
                                 [(ak.kit.mesh, ak.pose) for ak in scene.assembly.kits]])
        kit_url = self._register_mesh(kit_mesh)

        session = Session(
            session_id=uuid.uuid4().hex,
            scene=scene,
            observation=obs,
            completed=completed,
            kit_completed=kit_completed,
            completion_mode=mode,
            meshes=meshes,
            kit_mesh_url=kit_url,
            assembly_interior=insertion_collision_volume(scene.assembly.build_occupancy(0.001)),
        )
        with self._lock:
            self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown session {session_id}")

    # -- goal handling ------------------------------------------------------

    def submit_goals(self, session: Session, goals: list[tuple[str, Pose]]) -> list[dict]:
        """Snap every goal, queue execution, return refined poses immediately.

        Raises SessionBusyError while a previous execution is in flight.
        """
        with session.lock:
            if session.busy():
                raise SessionBusyError("a plan is already executing in this session")
            for oid, _ in goals:
                session.scene.object_index(oid)  # raises NotFoundError
            snapshot = session.scene

        def snap_and_plan():
            results = []
            for i, (oid, pose) in enumerate(goals):
                obj = snapshot.objects[snapshot.object_index(oid)]
                res = snap_pose(
                    session.completed[oid],
                    session.kit_completed,
                    obj.gt_start,
                    pose,
                    self.snap_config,
                    rng_seed=stable_seed(hash(session.session_id) & 0x7FFFFFFF, session.revision, i),
                )
                grasp = grasp_pose_topdown(session.completed[oid], obj.gt_start)
                plan = make_plan(grasp, res.pose, oid)
                results.append((oid, res, plan))
            return results

        snapped = session.worker.submit(snap_and_plan).result()

        records = []
        with session.lock:
            for oid, res, plan in snapped:
                pid = uuid.uuid4().hex[:12]
                session.plans[pid] = PlanRecord(pid, oid, plan=plan)
                records.append({"object_id": oid, "pose": res.pose, "position_score": res.position_score,
                                "plan_id": pid})
            queued = [session.plans[r["plan_id"]] for r in records]

        session.worker.submit(self._execute_queue, session, queued)
        return records

    def _execute_queue(self, session: Session, queue: list[PlanRecord]) -> None:
        for rec in queue:
            with session.lock:
                rec.status = "running"
                scene = session.scene
            try:
                outcome = execute_plan_sim(scene, rec.plan, collision_volume=session.assembly_interior)
            except SeatError as e:
                with session.lock:
                    rec.status = "failed"
                    rec.reason = str(e)
                continue
            with session.lock:
                if outcome.success:
                    session.scene = outcome.scene
                    session.revision += 1
                    rec.status = "done"
                    rec.resulting_revision = session.revision
                else:
                    rec.status = "failed"
                    rec.reason = outcome.reason
