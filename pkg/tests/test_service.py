import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from seat.bench import DatasetSpec, generate_dataset
from seat.geometry import Pose, position_error, quat_geodesic
from seat.service import create_app
from seat.snap import SnapConfig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("srv")
    return generate_dataset(out / "ds", DatasetSpec(n_assemblies=2, kits_min=2, kits_max=2), seed=21)


@pytest.fixture(scope="module")
def client(dataset):
    app = create_app(dataset_dir=dataset, completion="oracle", snap_config=SnapConfig(n_rotations=96))
    with TestClient(app) as c:
        yield c


def wait_plans(client, sid, plan_ids, timeout=60.0):
    deadline = time.time() + timeout
    states = {}
    while time.time() < deadline:
        states = {}
        for pid in plan_ids:
            r = client.get(f"/api/v1/sessions/{sid}/plans/{pid}")
            assert r.status_code == 200
            states[pid] = r.json()
        if all(s["status"] in ("done", "failed") for s in states.values()):
            return states
        time.sleep(0.05)
    raise TimeoutError(f"plans did not settle: {states}")


def test_create_session_and_scene(client):
    r = client.post("/api/v1/sessions", json={"dataset": "0", "scene_seed": 3})
    assert r.status_code == 200
    desc = r.json()
    assert desc["revision"] == 1
    assert len(desc["objects"]) == 2
    sid = desc["session_id"]

    r2 = client.get(f"/api/v1/sessions/{sid}/scene")
    assert r2.status_code == 200
    scene = r2.json()
    # fresh session: poses equal the observed start poses
    for o in scene["objects"]:
        assert o["pose"] == o["gt_start"]

    # meshes are served as OBJ
    r3 = client.get(scene["objects"][0]["mesh_url"])
    assert r3.status_code == 200
    assert r3.text.startswith("v ")
    r4 = client.get(scene["kit"]["mesh_url"])
    assert r4.status_code == 200


def test_same_seed_identical_content_distinct_ids(client):
    a = client.post("/api/v1/sessions", json={"seed": 7}).json()
    b = client.post("/api/v1/sessions", json={"seed": 7}).json()
    assert a["session_id"] != b["session_id"]
    assert [o["pose"] for o in a["objects"]] == [o["pose"] for o in b["objects"]]
    assert a["kit"]["mesh_url"] == b["kit"]["mesh_url"]


def test_unknown_dataset_404(client):
    r = client.post("/api/v1/sessions", json={"dataset": "nope"})
    assert r.status_code == 404
    assert r.json()["code"] == "not_found"


def test_unknown_session_404(client):
    assert client.get("/api/v1/sessions/deadbeef/scene").status_code == 404


def test_goal_hint_outside_kit_volume_rejected(client):
    desc = client.post("/api/v1/sessions", json={"dataset": "0", "scene_seed": 5}).json()
    sid = desc["session_id"]
    # a goal far outside the workspace cannot seed the kit-volume crop
    r = client.post(
        f"/api/v1/sessions/{sid}/goals",
        json={"goals": [{"object_id": desc["objects"][0]["id"],
                         "pose": {"p": [9.0, 9.0, 9.0], "q": [0.0, 0.0, 0.0, 1.0]}}]},
    )
    assert r.status_code == 400
    assert r.json()["code"] == "invalid_argument"


def _gt_poses_for(dataset, index, scene_seed):
    from seat.bench import load_manifest
    from seat.kitgen import load_assembly
    from seat.scene import sample_scene

    man = load_manifest(dataset)
    entry = man["assemblies"][index]
    assembly, objects = load_assembly(dataset / entry["dir"])
    ids = [ak.object_id for ak in assembly.kits]
    scene = sample_scene(list(zip(ids, objects)), assembly, rng_seed=scene_seed)
    return {o.object_id: o.gt_kit for o in scene.objects}


def test_full_goal_flow_with_gt_hint(client, dataset):
    desc = client.post("/api/v1/sessions", json={"dataset": "0", "scene_seed": 9}).json()
    sid = desc["session_id"]
    gts = _gt_poses_for(dataset, 0, 9)
    rng = np.random.default_rng(4)

    goals = []
    for o in desc["objects"]:
        gt = gts[o["id"]]
        off = rng.uniform(-0.01, 0.01, size=3)
        hint = Pose(gt.p + off, gt.q)
        goals.append({"object_id": o["id"], "pose": hint.to_dict()})

    r = client.post(f"/api/v1/sessions/{sid}/goals", json={"goals": goals})
    assert r.status_code == 200
    out = r.json()
    assert len(out["snapped"]) == 2
    for snapped, goal in zip(out["snapped"], goals):
        sp = Pose.from_dict(snapped["pose"])
        hp = Pose.from_dict(goal["pose"])
        assert np.all(np.abs(sp.p - hp.p) <= 0.028 + 1e-9)
        assert quat_geodesic(sp.q, hp.q) <= np.deg2rad(27.5) + 1e-9

    states = wait_plans(client, sid, out["plan_ids"])
    done = [s for s in states.values() if s["status"] == "done"]
    assert done, f"no plan finished: {states}"

    scene = client.get(f"/api/v1/sessions/{sid}/scene").json()
    assert scene["revision"] > 1
    # executed objects sit exactly at their snapped poses
    by_id = {o["id"]: o for o in scene["objects"]}
    for snapped in out["snapped"]:
        pid = snapped["plan_id"]
        if states[pid]["status"] == "done":
            assert by_id[snapped["object_id"]]["pose"] == snapped["pose"]


def test_busy_conflict(client, dataset):
    desc = client.post("/api/v1/sessions", json={"dataset": "1", "scene_seed": 2}).json()
    sid = desc["session_id"]
    gts = _gt_poses_for(dataset, 1, 2)
    goals = [{"object_id": o["id"], "pose": Pose(gts[o["id"]].p, gts[o["id"]].q).to_dict()}
             for o in desc["objects"]]
    r1 = client.post(f"/api/v1/sessions/{sid}/goals", json={"goals": goals})
    assert r1.status_code == 200
    # immediately resubmitting while execution is queued conflicts
    r2 = client.post(f"/api/v1/sessions/{sid}/goals", json={"goals": goals})
    assert r2.status_code in (200, 409)
    if r2.status_code == 409:
        assert r2.json()["code"] == "busy"
    wait_plans(client, sid, r1.json()["plan_ids"])


def test_unknown_object_in_goals(client):
    desc = client.post("/api/v1/sessions", json={"dataset": "0", "scene_seed": 1}).json()
    sid = desc["session_id"]
    r = client.post(f"/api/v1/sessions/{sid}/goals",
                    json={"goals": [{"object_id": "ghost", "pose": {"p": [0.2, 0, 0.05], "q": [0, 0, 0, 1]}}]})
    assert r.status_code == 404


def test_unknown_plan_404(client):
    desc = client.post("/api/v1/sessions", json={"dataset": "0"}).json()
    r = client.get(f"/api/v1/sessions/{desc['session_id']}/plans/none")
    assert r.status_code == 404


def test_revision_monotonic(client, dataset):
    desc = client.post("/api/v1/sessions", json={"dataset": "0", "scene_seed": 11}).json()
    sid = desc["session_id"]
    gts = _gt_poses_for(dataset, 0, 11)
    revs = [desc["revision"]]
    for o in desc["objects"]:
        gt = gts[o["id"]]
        goals = [{"object_id": o["id"], "pose": gt.to_dict()}]
        r = client.post(f"/api/v1/sessions/{sid}/goals", json={"goals": goals})
        assert r.status_code == 200
        wait_plans(client, sid, r.json()["plan_ids"])
        revs.append(client.get(f"/api/v1/sessions/{sid}/scene").json()["revision"])
    assert all(b >= a for a, b in zip(revs, revs[1:]))
    assert revs[-1] > revs[0]


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(body=st.recursive(
    st.none() | st.booleans() | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=8),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=12,
))
def test_fuzz_never_500(client, body):
    for path in ("/api/v1/sessions", "/api/v1/sessions/zzz/goals"):
        r = client.post(path, json=body)
        assert r.status_code < 500
