"""Tests for frozen-encoder classification, clustering and analysis files."""

from datetime import date

import numpy as np
import pytest

from src.analysis import (
    aggregate_by_user,
    cluster_report,
    fit_frozen_classifier,
    format_accuracy_table,
    format_cluster_report,
    label_embeddings,
    read_embeddings,
    render_scatter_svg,
    task_labels,
    write_embeddings,
    write_projection,
)
from src.errors import PipelineOrderError, UsageError
from src.ingest import partition_by_day
from src.models import SENSOR_ORDER, AccuracyReport, LabeledEmbedding, LatentPoint, SensorKind, UserMeta
from src.synth import ArchetypeSpec, generate_synthetic

DAY = date(2013, 11, 5)


def _emb(z, user="u1", sex="M", archetype="", index=0, day=DAY) -> LabeledEmbedding:
    return LabeledEmbedding(
        z=np.asarray(z, dtype=float), sex_label=sex, user_index=index, user_id=user, date=day, archetype=archetype
    )


def _separated(n_per_class: int = 30, seed: int = 0) -> list[LabeledEmbedding]:
    rng = np.random.default_rng(seed)
    centers = {"morning caller": (0.0, 0.0, 0.0, 0.0), "night app user": (10.0, 0.0, 0.0, 0.0), "commuter": (0.0, 10.0, 0.0, 0.0)}
    out = []
    for name, center in centers.items():
        for i in range(n_per_class):
            z = np.array(center) + rng.normal(0.0, 0.5, size=4)
            out.append(_emb(z, user=f"{name[:2]}{i % 3}", sex="F" if name == "night app user" else "M", archetype=name))
    return out


def _single_sensor(name: str, sensor: SensorKind, gender: str) -> ArchetypeSpec:
    return ArchetypeSpec(name=name, sensor_mix={sensor: 1.0}, active_slots={s: 1.0 for s in range(32, 40)}, gender=gender)


def _sensor_share_embeddings(archetypes: list[ArchetypeSpec], users_per_archetype: int, prefix: str, seed: int):
    """Day embeddings of generated users: the share of each sensor among the day's events."""
    users, events = generate_synthetic(archetypes, users_per_archetype=users_per_archetype, days=3, seed=seed)
    sex = {u.user_id: u.gender for u in users}
    out = []
    for bucket in partition_by_day(events):
        counts = np.array([sum(e.sensor is s for e in bucket.events) for s in SENSOR_ORDER], dtype=float)
        out.append(_emb(counts / counts.sum(), user=prefix + bucket.user_id, sex=sex[bucket.user_id], day=bucket.date))
    return out


class TestLabelEmbeddings:
    def test_labels_from_users(self):
        users = [UserMeta("u2", "F", archetype="commuter"), UserMeta("u1", "M", archetype="morning caller")]
        points = [LatentPoint(np.zeros(3), "u1", DAY), LatentPoint(np.ones(3), "u2", DAY)]
        labeled = label_embeddings(points, users)
        assert [(e.user_id, e.sex_label, e.user_index, e.archetype) for e in labeled] == [
            ("u1", "M", 0, "morning caller"),
            ("u2", "F", 1, "commuter"),
        ]

    def test_unknown_user(self):
        with pytest.raises(UsageError):
            label_embeddings([LatentPoint(np.zeros(3), "ghost", DAY)], [UserMeta("u1", "M")])

    def test_task_labels(self):
        embeddings = [_emb([0], sex="F", index=2, archetype="commuter")]
        assert task_labels(embeddings, "sex").tolist() == ["F"]
        assert task_labels(embeddings, "index").tolist() == [2]
        assert task_labels(embeddings, "archetype").tolist() == ["commuter"]
        with pytest.raises(UsageError):
            task_labels(embeddings, "age")


class TestFrozenClassifier:
    def test_separated_archetypes(self):
        embeddings = _separated()
        report = fit_frozen_classifier(embeddings, "archetype", runs=3, seed=0)
        assert report.mean_accuracy >= 90.0
        assert report.n_classes == 3
        assert report.n_runs == 3
        assert len(report.accuracies) == 3
        assert report.majority_baseline == pytest.approx(100.0 / 3)

    def test_nearest_centroid_agrees(self):
        embeddings = _separated()
        Z = np.stack([e.z for e in embeddings])
        y = task_labels(embeddings, "archetype")
        names = sorted(set(y.tolist()))
        centroids = np.stack([Z[y == n].mean(axis=0) for n in names])
        predicted = np.array(names)[np.argmin(((Z[:, None] - centroids[None]) ** 2).sum(axis=2), axis=1)]
        assert (predicted == y).mean() >= 0.9

    def test_shuffled_labels_near_majority(self):
        rng = np.random.default_rng(1)
        embeddings = [_emb(rng.normal(size=4), sex="M" if i % 2 else "F") for i in range(400)]
        report = fit_frozen_classifier(embeddings, "sex", runs=5, seed=2)
        assert abs(report.mean_accuracy - report.majority_baseline) <= 10.0

    def test_deterministic(self):
        embeddings = _separated(n_per_class=10)
        a = fit_frozen_classifier(embeddings, "sex", runs=2, seed=4)
        b = fit_frozen_classifier(embeddings, "sex", runs=2, seed=4)
        assert a.accuracies == b.accuracies

    def test_bounds(self):
        report = fit_frozen_classifier(_separated(n_per_class=10), "sex", runs=2, seed=0)
        assert 0.0 <= report.mean_accuracy <= 100.0
        assert report.std >= 0.0

    def test_single_class(self):
        with pytest.raises(UsageError):
            fit_frozen_classifier([_emb([i, 0]) for i in range(10)], "sex")

    def test_does_not_modify_embeddings(self):
        embeddings = _separated(n_per_class=10)
        before = [e.z.copy() for e in embeddings]
        fit_frozen_classifier(embeddings, "archetype", runs=2, seed=0)
        assert all(np.array_equal(a, e.z) for a, e in zip(before, embeddings, strict=True))


def test_accuracy_table_layout():
    results = {
        "ae": {"sex": AccuracyReport("sex", 70.65, 2.56, 5, 2, 55.0)},
        "ccm_aae": {"sex": AccuracyReport("sex", 78.05, 1.1, 5, 2, 55.0)},
    }
    table = format_accuracy_table(results, header="# config=x seed=1")
    lines = table.splitlines()
    assert lines[0] == "# config=x seed=1"
    assert "AE" in lines[2] and "CCM-AAE" in lines[2] and "majority" in lines[2]
    assert lines[3].startswith("sex")
    assert "70.65 ± 2.56" in lines[3]
    assert "78.05 ± 1.10" in lines[3]
    assert lines[3].rstrip().endswith("55.00")
    assert len(lines) == 4


class TestClusterReport:
    def test_two_point_masses(self):
        points = np.array([[0.0, 0.0]] * 5 + [[10.0, 10.0]] * 5)
        labels = [_emb([0], user=f"u{i}") for i in range(10)]
        report = cluster_report(points, 2, labels, seed=0)
        assert report.silhouette == pytest.approx(1.0)
        assert len(set(report.assignments[:5])) == 1
        assert len(set(report.assignments[5:])) == 1
        assert report.assignments[0] != report.assignments[5]

    def test_composition_tags(self):
        rng = np.random.default_rng(0)
        points, labels = [], []
        # all-male, spread over five users
        for i in range(10):
            points.append(rng.normal(0.0, 0.1, size=2))
            labels.append(_emb([0], user=f"m{i % 5}", sex="M"))
        # one user
        for _ in range(10):
            points.append(rng.normal(0.0, 0.1, size=2) + [20.0, 0.0])
            labels.append(_emb([0], user="solo", sex="F"))
        # mixed
        for i in range(10):
            points.append(rng.normal(0.0, 0.1, size=2) + [0.0, 20.0])
            labels.append(_emb([0], user=f"x{i % 5}", sex="M" if i % 2 else "F"))
        report = cluster_report(np.array(points), 3, labels, seed=0)
        tag_of = {name: report.clusters[report.assignments[i]].tag for name, i in (("male", 0), ("solo", 10), ("mixed", 20))}
        assert tag_of == {"male": "gender-specific", "solo": "user-specific", "mixed": "common"}
        solo = report.clusters[report.assignments[10]]
        assert solo.dominant_user == "solo"
        assert solo.dominant_user_share == 1.0
        assert solo.sex_shares == {"F": 1.0}

    def test_generated_embeddings_five_clusters(self):
        shared = [
            _single_sensor("callers", SensorKind.CALL, "M"),
            _single_sensor("texters", SensorKind.SMS, "F"),
            _single_sensor("app users", SensorKind.APPLICATION_USAGE, "M"),
            _single_sensor("app users too", SensorKind.APPLICATION_USAGE, "F"),
        ]
        solo = [
            _single_sensor("wifi hopper", SensorKind.WIFI, "F"),
            _single_sensor("bluetooth", SensorKind.BLUETOOTH_PROXIMITY, "M"),
        ]
        labels = _sensor_share_embeddings(shared, 2, "g", seed=4) + _sensor_share_embeddings(solo, 1, "s", seed=5)
        points = np.stack([e.z for e in labels])

        report = cluster_report(points, 5, labels, seed=0)
        tags = sorted(c.tag for c in report.clusters)
        assert tags == ["common", "gender-specific", "gender-specific", "user-specific", "user-specific"]
        assert sorted(c.size for c in report.clusters) == [3, 3, 6, 6, 12]

    def test_deterministic(self):
        points = np.random.default_rng(3).normal(size=(30, 3))
        labels = [_emb([0], user=f"u{i % 4}") for i in range(30)]
        a = cluster_report(points, 5, labels, seed=1)
        b = cluster_report(points, 5, labels, seed=1)
        assert np.array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia

    @pytest.mark.parametrize("k", [1, 10, 11])
    def test_bad_k(self, k):
        with pytest.raises(UsageError):
            cluster_report(np.zeros((10, 2)), k, [_emb([0])] * 10)

    def test_label_count(self):
        with pytest.raises(UsageError):
            cluster_report(np.random.default_rng(0).normal(size=(10, 2)), 2, [_emb([0])] * 9)

    def test_format(self):
        points = np.array([[0.0, 0.0]] * 5 + [[10.0, 10.0]] * 5)
        labels = [_emb([0], user="a", sex="M")] * 5 + [_emb([0], user="b", sex="F")] * 5
        text = format_cluster_report(cluster_report(points, 2, labels, seed=0), header="# config=x seed=1")
        lines = text.splitlines()
        assert lines[0] == "# config=x seed=1"
        assert lines[1].startswith("clusters=2 silhouette=1.0000")
        assert lines[2].split("\t") == ["cluster", "size", "sex_composition", "dominant_user", "dominant_share", "tag"]
        assert sorted(line.split("\t")[2] for line in lines[3:]) == ["F:1.00", "M:1.00"]


def test_aggregate_by_user():
    embeddings = [
        _emb([0.0, 2.0], user="b", sex="F", index=1),
        _emb([1.0, 1.0], user="a", index=0),
        _emb([3.0, 3.0], user="a", index=0, day=date(2013, 11, 6)),
    ]
    agg = aggregate_by_user(embeddings)
    assert [e.user_id for e in agg] == ["a", "b"]
    assert agg[0].z.tolist() == [2.0, 2.0]
    assert agg[0].date is None
    assert agg[1].sex_label == "F"


class TestFiles:
    def test_embeddings_round_trip(self, tmp_path):
        embeddings = [
            _emb([0.1, -1 / 3, 1e-20], user="u1", sex="M"),
            _emb([2.0, 0.0, -7.5], user="u2", sex="F", day=None),
        ]
        path = tmp_path / "ccm_aae.tsv"
        write_embeddings(str(path), embeddings, "# config=x seed=1")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config=x seed=1"
        assert lines[1] == "user_id\tdate\tsex\tz_0\tz_1\tz_2"
        users = [UserMeta("u1", "M", archetype="commuter"), UserMeta("u2", "F")]
        back = read_embeddings(str(path), users)
        assert np.array_equal(back[0].z, embeddings[0].z)
        assert back[0].date == DAY
        assert back[1].date is None
        assert [e.user_index for e in back] == [0, 1]
        assert back[0].archetype == "commuter"

    def test_missing_embeddings(self, tmp_path):
        with pytest.raises(PipelineOrderError):
            read_embeddings(str(tmp_path / "ae.tsv"))

    def test_projection(self, tmp_path):
        path = tmp_path / "p.tsv"
        write_projection(str(path), [_emb([0]), _emb([1], user="u2")], np.array([[1.0, 2.0], [3.0, 4.0]]), "# h")
        assert path.read_text().splitlines()[2] == "u1\t2013-11-05\tM\t1.000000\t2.000000"


class TestScatterSvg:
    def test_svg_document(self):
        coords = np.random.default_rng(0).normal(size=(12, 2))
        svg = render_scatter_svg(coords, ["M", "F"] * 6, title="ccm_aae")
        assert "<svg" in svg
        assert "ccm_aae" in svg

    def test_byte_stable(self):
        coords = np.random.default_rng(0).normal(size=(12, 2))
        labels = ["M", "F", "F"] * 4
        assert render_scatter_svg(coords, labels) == render_scatter_svg(coords, labels)

    def test_header_in_metadata(self):
        coords = np.random.default_rng(0).normal(size=(6, 2))
        svg = render_scatter_svg(coords, ["M", "F"] * 3, header="# config=abc123 seed=7")
        assert svg.lstrip().startswith("<?xml")
        assert "# config=abc123 seed=7" in svg
        assert "config=" not in render_scatter_svg(coords, ["M", "F"] * 3)
