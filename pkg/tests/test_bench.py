import json

import numpy as np
import pytest

from seat.bench import (
    BenchConfig,
    DatasetSpec,
    generate_dataset,
    load_manifest,
    nearest_rank,
    records_to_csv,
    robustness_sweep,
    run_benchmark,
    sample_user_hint,
    stable_seed,
)
from seat.errors import InvalidArgumentError
from seat.geometry import Pose, position_error, quat_geodesic
from seat.snap import SnapConfig


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    spec = DatasetSpec(n_assemblies=3, kits_min=1, kits_max=2, margin=0.0025)
    return generate_dataset(out / "d", spec, seed=5)


def test_nearest_rank():
    vals = [1.0, 2.0, 3.0, 4.0]
    assert nearest_rank(vals, 50) == 2.0
    assert nearest_rank(vals, 80) == 4.0
    assert nearest_rank(vals, 20) == 1.0
    assert nearest_rank([7.0], 50) == 7.0


def test_hint_zero_eps_equals_gt():
    rng = np.random.default_rng(0)
    gt = Pose([0.1, 0.2, 0.05])
    h = sample_user_hint(gt, 0.0, 0.0, rng)
    assert np.allclose(h.p, gt.p)
    assert quat_geodesic(h.q, gt.q) == 0.0


def test_hint_per_axis_bound():
    rng = np.random.default_rng(1)
    gt = Pose([0, 0, 0])
    for _ in range(2000):
        h = sample_user_hint(gt, 0.028, 0.1, rng)
        assert np.all(np.abs(h.p) <= 0.028 + 1e-12)


def test_hint_eps_exceeding_delta_rejected():
    rng = np.random.default_rng(2)
    with pytest.raises(InvalidArgumentError):
        sample_user_hint(Pose(), 0.05, 0.1, rng)
    with pytest.raises(InvalidArgumentError):
        sample_user_hint(Pose(), 0.01, 1.0, rng)


@pytest.mark.slow
def test_hint_offsets_uniform():
    rng = np.random.default_rng(3)
    gt = Pose()
    xs = np.array([sample_user_hint(gt, 0.02, 0.0, rng).p[0] for _ in range(10_000)])
    hist, _ = np.histogram(xs, bins=10, range=(-0.02, 0.02))
    n, k = len(xs), 10
    sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(hist - n / k) < 3 * sigma + 1e-9)


def test_hint_exact_magnitude():
    rng = np.random.default_rng(4)
    gt = Pose([0.3, 0, 0.1])
    for _ in range(50):
        h = sample_user_hint(gt, 0.015, np.deg2rad(10), rng, exact=True)
        assert position_error(h.p, gt.p) == pytest.approx(0.015, abs=1e-12)
        assert quat_geodesic(h.q, gt.q) == pytest.approx(np.deg2rad(10), abs=1e-9)


def test_generate_dataset_manifest(tiny_dataset):
    man = load_manifest(tiny_dataset)
    assert man["n_assemblies"] == 3
    assert len(man["assemblies"]) == 3
    for e in man["assemblies"]:
        assert (tiny_dataset / e["dir"] / "assembly.json").exists()


def test_generate_dataset_deterministic(tmp_path):
    spec = DatasetSpec(n_assemblies=2, kits_min=1, kits_max=1)
    a = generate_dataset(tmp_path / "a", spec, seed=9)
    b = generate_dataset(tmp_path / "b", spec, seed=9)
    ma = (a / "manifest.json").read_text()
    mb = (b / "manifest.json").read_text()
    assert ma == mb
    for e in json.loads(ma)["assemblies"]:
        va = (a / e["dir"] / "kit_0.vol").read_bytes()
        vb = (b / e["dir"] / "kit_0.vol").read_bytes()
        assert va == vb


def test_generate_dataset_resumable(tmp_path):
    spec = DatasetSpec(n_assemblies=2, kits_min=1, kits_max=1)
    out = generate_dataset(tmp_path / "r", spec, seed=3)
    marker = out / "assembly_0000" / "assembly.json"
    before = marker.read_text()
    generate_dataset(tmp_path / "r", spec, seed=3)  # skips existing dirs
    assert marker.read_text() == before


def test_run_benchmark_oracle_informed(tiny_dataset, tmp_path):
    cfg = BenchConfig(snap=SnapConfig(n_rotations=96), completion="oracle", informed=True,
                      eps_pos=0.01, eps_rot=np.deg2rad(10))
    records, summary = run_benchmark(tiny_dataset, cfg, seed=1, out_dir=tmp_path / "run")
    assert len(records) >= 3
    assert summary["delta_pos"]["median"] <= 0.005
    assert summary["delta_rot"]["median"] <= np.deg2rad(7.5)
    assert (tmp_path / "run" / "records.csv").exists()
    assert (tmp_path / "run" / "summary.json").exists()
    # scorer economy: one call per rotation candidate
    for r in records:
        assert r.scorer_calls == 96


def test_run_benchmark_deterministic_csv(tiny_dataset):
    cfg = BenchConfig(snap=SnapConfig(n_rotations=32), completion="oracle", informed=True,
                      eps_pos=0.008, eps_rot=np.deg2rad(8), n_assemblies=2)
    r1, _ = run_benchmark(tiny_dataset, cfg, seed=7)
    r2, _ = run_benchmark(tiny_dataset, cfg, seed=7)
    assert records_to_csv(r1) == records_to_csv(r2)


def test_csv_rederivable_metrics(tiny_dataset):
    cfg = BenchConfig(snap=SnapConfig(n_rotations=16), completion="oracle", informed=True,
                      eps_pos=0.005, eps_rot=0.05, n_assemblies=1)
    records, _ = run_benchmark(tiny_dataset, cfg, seed=2)
    csv = records_to_csv(records).splitlines()
    header = csv[0].split(",")
    for line, rec in zip(csv[1:], records):
        row = dict(zip(header, line.split(",")))
        gt = Pose([float(row[f"gt_p{a}"]) for a in "xyz"], [float(row[f"gt_q{a}"]) for a in "xyzw"])
        sn = Pose([float(row[f"snap_p{a}"]) for a in "xyz"], [float(row[f"snap_q{a}"]) for a in "xyzw"])
        # byte-for-byte re-derivation from the stored poses
        assert repr(position_error(sn.p, gt.p)) == row["delta_pos"]
        assert repr(quat_geodesic(sn.q, gt.q)) == row["delta_rot"]


def test_empty_dataset_report(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"assemblies": [], "margin": 0.0025}))
    records, summary = run_benchmark(tmp_path, BenchConfig(), seed=0)
    assert records == []
    assert summary["n_records"] == 0


def test_sweep_single_bin(tiny_dataset):
    cfg = BenchConfig(snap=SnapConfig(n_rotations=16), completion="oracle", n_assemblies=1)
    table = robustness_sweep(tiny_dataset, "position", [0.01], np.deg2rad(10), cfg, seed=0)
    assert len(table) == 1
    assert table[0]["n"] >= 1
    assert table[0]["delta_pos_median"] >= 0


def test_sweep_bin_outside_delta_rejected(tiny_dataset):
    cfg = BenchConfig()
    with pytest.raises(InvalidArgumentError):
        robustness_sweep(tiny_dataset, "position", [0.05], 0.1, cfg)
    with pytest.raises(InvalidArgumentError):
        robustness_sweep(tiny_dataset, "bad_axis", [0.01], 0.1, cfg)


def test_stable_seed_is_stable():
    assert stable_seed(1, 2, 3) == stable_seed(1, 2, 3)
    assert stable_seed(1, 2, 3) != stable_seed(1, 2, 4)
