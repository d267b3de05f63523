"""Tests for data models."""

from datetime import date, datetime

import numpy as np

from src.models import (
    EDGE_SEMANTICS,
    SENSOR_ORDER,
    AccuracyReport,
    EdgeSemantic,
    GraphInput,
    LifelogEvent,
    Node,
    NodeType,
    SemanticGraph,
    SensorKind,
    UserMeta,
)


class TestSensorKind:
    def test_seven_sensors_in_fixed_order(self):
        assert len(SENSOR_ORDER) == 7
        assert SENSOR_ORDER[0] is SensorKind.WIFI
        assert SensorKind.CALL.index == 3

    def test_value_lookup(self):
        assert SensorKind("ApplicationUsage") is SensorKind.APPLICATION_USAGE


class TestLifelogEvent:
    def test_to_dict(self):
        e = LifelogEvent(
            user_id="u1",
            sensor=SensorKind.CALL,
            entity_key="+1555",
            start=datetime(2013, 11, 5, 9, 12),
            attrs={"Type": "incoming"},
        )
        d = e.to_dict()
        assert d["sensor"] == "Call"
        assert d["start"] == "2013-11-05T09:12:00"
        assert d["end"] == ""
        assert d["attrs"] == {"Type": "incoming"}

    def test_attrs_do_not_affect_equality(self):
        start = datetime(2013, 11, 5, 9, 12)
        a = LifelogEvent("u1", SensorKind.SMS, "+1", start, attrs={"x": "1"})
        b = LifelogEvent("u1", SensorKind.SMS, "+1", start, attrs={"x": "2"})
        assert a == b


class TestNode:
    def test_time_label(self):
        assert Node.time(0).label == "00:00"
        assert Node.time(37).label == "09:15"
        assert Node.time(95).label == "23:45"

    def test_sensor_and_source_labels(self):
        assert Node.sensor_node(SensorKind.WIFI).label == "WiFi"
        assert Node.source("home-net", SensorKind.WIFI).label == "home-net"

    def test_kind_index(self):
        assert [k.index for k in NodeType] == [0, 1, 2]


def test_edge_semantics_table():
    assert len(EDGE_SEMANTICS) == 4
    assert EDGE_SEMANTICS[(NodeType.SENSOR, NodeType.SOURCE)] is EdgeSemantic.CONTAIN
    assert EDGE_SEMANTICS[(NodeType.TIME, NodeType.SOURCE)] is EdgeSemantic.START
    assert EDGE_SEMANTICS[(NodeType.SOURCE, NodeType.TIME)] is EdgeSemantic.END
    assert EDGE_SEMANTICS[(NodeType.TIME, NodeType.TIME)] is EdgeSemantic.WILL_BE
    assert (NodeType.SOURCE, NodeType.SENSOR) not in EDGE_SEMANTICS


def test_semantic_graph_edges_row_major():
    nodes = [Node.time(0), Node.time(1), Node.source("+1", SensorKind.CALL)]
    A = np.zeros((3, 3), dtype=np.int64)
    A[0, 1] = 1
    A[0, 2] = 2
    A[2, 1] = 1
    graph = SemanticGraph("u1", date(2013, 11, 5), nodes, A, np.zeros((3, 28)), np.ones(3, dtype=bool))
    assert graph.key == "u1/2013-11-05"
    assert graph.edges() == [
        (0, 1, EdgeSemantic.WILL_BE, 1),
        (0, 2, EdgeSemantic.START, 2),
        (2, 1, EdgeSemantic.END, 1),
    ]


def test_user_meta_to_dict():
    assert UserMeta("u1", "F", 3, "commuter").to_dict() == {
        "user_id": "u1",
        "gender": "F",
        "day_count": 3,
        "archetype": "commuter",
    }


def test_accuracy_report_to_dict_omits_runs():
    report = AccuracyReport("sex", 80.0, 2.5, 5, 2, 60.0, accuracies=[80.0] * 5)
    assert "accuracies" not in report.to_dict()
    assert report.to_dict()["majority_baseline"] == 60.0


def test_graph_input_defaults_identity_fields():
    graph = GraphInput(X=np.zeros((4, 2)), A_hat=np.eye(4), target=np.zeros((4, 4)), mask=np.ones(4, dtype=bool))
    assert graph.user_id == ""
    assert graph.date is None
    dated = GraphInput(graph.X, graph.A_hat, graph.target, graph.mask, user_id="u1", date=date(2013, 11, 5))
    assert dated.date == date(2013, 11, 5)
