"""Tests for DOT / node-link export and the on-disk graph store."""

import json
import re
from datetime import date

import numpy as np
import pytest

from src.errors import CompatibilityError, PipelineOrderError, UsageError
from src.export import (
    export_graph,
    graph_filename,
    read_graph_store,
    read_nodelink,
    to_dot,
    write_graph_store,
)
from src.graph import build_day_graph
from src.models import DayBucket, SensorKind

DAY = date(2013, 11, 5)


def _dot_counts(source: str) -> tuple[int, int]:
    nodes = len(re.findall(r"^\s*n\d+ \[", source, flags=re.MULTILINE))
    edges = len(re.findall(r"^\s*n\d+ -> n\d+", source, flags=re.MULTILINE))
    return nodes, edges


class TestDot:
    def test_empty_day_counts(self, schema):
        graph = build_day_graph(DayBucket("u1", DAY), schema)
        assert _dot_counts(to_dot(graph)) == (103, 95)

    def test_colors_by_kind(self, schema, sample_bucket):
        source = to_dot(build_day_graph(sample_bucket, schema))
        assert "fillcolor=black" in source
        assert "fillcolor=cyan" in source
        assert "fillcolor=red" in source

    def test_penwidth_scales_with_weight(self, schema, make_event):
        events = [
            make_event(SensorKind.CALL, "+1555", "2013-11-05 09:00:00"),
            make_event(SensorKind.CALL, "+1555", "2013-11-05 10:00:00"),
        ]
        source = to_dot(build_day_graph(DayBucket("u1", DAY, events), schema))
        assert re.search(r"n99 -> n103 \[label=contain penwidth=2\]", source)
        assert re.search(r"n0 -> n1 \[label=will_be penwidth=1\]", source)

    def test_header_as_comment(self, schema):
        graph = build_day_graph(DayBucket("u1", DAY), schema)
        source = export_graph(graph, "dot", header="# config=abc seed=1")
        assert source.startswith("// config=abc seed=1")


class TestNodeLink:
    def test_document_shape(self, schema, sample_bucket):
        graph = build_day_graph(sample_bucket, schema)
        document = json.loads(export_graph(graph, "nodelink", header="# config=abc seed=1"))
        assert document["meta"] == {"header": "# config=abc seed=1"}
        assert len(document["nodes"]) == graph.n
        assert {"id", "kind", "label"} <= set(document["nodes"][0])
        assert {"from", "to", "semantic", "weight"} == set(document["edges"][0])

    def test_round_trip_adjacency(self, schema, sample_bucket):
        graph = build_day_graph(sample_bucket, schema)
        back = read_nodelink(export_graph(graph, "nodelink"), schema)
        assert np.array_equal(back.A, graph.A)
        assert back.nodes == graph.nodes
        assert np.allclose(back.X, graph.X)

    def test_too_many_nodes(self, schema, sample_bucket):
        from src.config import GraphSchema

        text = export_graph(build_day_graph(sample_bucket, schema), "nodelink")
        with pytest.raises(CompatibilityError):
            read_nodelink(text, GraphSchema(n_max=104))


def test_unknown_format(schema):
    with pytest.raises(UsageError):
        export_graph(build_day_graph(DayBucket("u1", DAY), schema), "graphml")


def test_graph_filename():
    assert graph_filename("u1/2013-11-05") == "u1_2013-11-05"


class TestGraphStore:
    def test_round_trip(self, tmp_path, schema, sample_bucket):
        graphs = [build_day_graph(sample_bucket, schema), build_day_graph(DayBucket("u2", DAY), schema)]
        write_graph_store(str(tmp_path / "graphs"), graphs, "# config=abc seed=1")
        manifest = (tmp_path / "graphs" / "manifest.tsv").read_text().splitlines()
        assert manifest[0] == "# config=abc seed=1"
        assert len(manifest) == 4
        back = read_graph_store(str(tmp_path / "graphs"), schema)
        assert [g.key for g in back] == [g.key for g in graphs]
        for a, b in zip(graphs, back, strict=True):
            assert np.array_equal(a.A, b.A)
            assert np.array_equal(a.X.astype(np.float32), b.X)

    def test_colliding_file_names_kept_apart(self, tmp_path, schema, sample_bucket, caplog):
        graphs = [
            build_day_graph(sample_bucket, schema),
            build_day_graph(DayBucket("a b", DAY), schema),
            build_day_graph(DayBucket("a_b", DAY), schema),
            build_day_graph(DayBucket("a:b", DAY), schema),
        ]
        write_graph_store(str(tmp_path / "graphs"), graphs, "# config=abc seed=1")
        rows = (tmp_path / "graphs" / "manifest.tsv").read_text().splitlines()[2:]
        names = [row.split("\t")[4] for row in rows]
        assert names[1:] == [f"a_b_{DAY}.json", f"a_b_{DAY}_2.json", f"a_b_{DAY}_3.json"]
        assert "already taken" in caplog.text
        back = read_graph_store(str(tmp_path / "graphs"), schema)
        assert [g.user_id for g in back] == ["u1", "a b", "a_b", "a:b"]

    def test_missing_store(self, tmp_path, schema):
        with pytest.raises(PipelineOrderError):
            read_graph_store(str(tmp_path / "graphs"), schema)
