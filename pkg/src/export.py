import json
import logging
import os
from datetime import date

import graphviz
import numpy as np

from src.config import GraphSchema
from src.errors import CompatibilityError, PipelineOrderError, UsageError
from src.graph import node_features
from src.models import Node, NodeType, SemanticGraph, SensorKind
from src.storage import read_blocks, write_blocks
from src.utils import clean_field, sanitize_filename

logger = logging.getLogger(__name__)

# Node colors of the reference visualization: time black, source red, sensor cyan.
KIND_COLORS = {
    NodeType.TIME: "black",
    NodeType.SOURCE: "red",
    NodeType.SENSOR: "cyan",
}
FONT_COLORS = {
    NodeType.TIME: "white",
    NodeType.SOURCE: "white",
    NodeType.SENSOR: "black",
}
BASE_PENWIDTH = 1.0

FORMATS = ("dot", "nodelink")


def _node_id(i: int) -> str:
    return f"n{i}"


def to_dot(graph: SemanticGraph, comment: str = "") -> str:
    dot = graphviz.Digraph(name=f"day_{sanitize_filename(graph.key)}", comment=comment or None)
    dot.attr(rankdir="LR")
    dot.attr("node", style="filled", shape="circle", fontsize="8")
    for i, node in enumerate(graph.nodes):
        dot.node(
            _node_id(i),
            label=node.label,
            color=KIND_COLORS[node.kind],
            fillcolor=KIND_COLORS[node.kind],
            fontcolor=FONT_COLORS[node.kind],
        )
    for i, j, semantic, weight in graph.edges():
        dot.edge(_node_id(i), _node_id(j), label=semantic.value, penwidth=f"{BASE_PENWIDTH * weight:g}")
    return dot.source


def _node_record(i: int, node: Node) -> dict:
    record: dict = {"id": i, "kind": node.kind.value, "label": node.label}
    if node.kind is NodeType.TIME:
        record["slot"] = node.slot
    else:
        assert node.sensor is not None
        record["sensor"] = node.sensor.value
    if node.kind is NodeType.SOURCE:
        record["entity_key"] = node.entity_key
    return record


def to_nodelink(graph: SemanticGraph, meta: dict | None = None) -> str:
    document = {
        "meta": meta or {},
        "user_id": graph.user_id,
        "date": graph.date.isoformat(),
        "dropped_sources": graph.dropped_sources,
        "nodes": [_node_record(i, node) for i, node in enumerate(graph.nodes)],
        "edges": [
            {"from": i, "to": j, "semantic": semantic.value, "weight": weight}
            for i, j, semantic, weight in graph.edges()
        ],
    }
    return json.dumps(document, ensure_ascii=False, separators=(",", ":")) + "\n"


def export_graph(graph: SemanticGraph, fmt: str, header: str = "") -> str:
    """Render a graph as DOT (viewer input) or as a node-link document."""
    if fmt == "dot":
        return to_dot(graph, comment=header.lstrip("# "))
    if fmt == "nodelink":
        return to_nodelink(graph, meta={"header": header} if header else None)
    raise UsageError(f"unknown export format: {fmt!r} (expected one of {', '.join(FORMATS)})")


def _parse_node(record: dict) -> Node:
    kind = NodeType(record["kind"])
    if kind is NodeType.TIME:
        return Node.time(int(record["slot"]))
    if kind is NodeType.SENSOR:
        return Node.sensor_node(SensorKind(record["sensor"]))
    return Node.source(str(record["entity_key"]), SensorKind(record["sensor"]))


def read_nodelink(text: str, schema: GraphSchema) -> SemanticGraph:
    """Rebuild a graph from its node-link export; X is recomputed from A."""
    document = json.loads(text)
    nodes = [_parse_node(r) for r in sorted(document["nodes"], key=lambda r: r["id"])]
    n = len(nodes)
    if n > schema.n_max:
        raise CompatibilityError(f"graph {document['user_id']}/{document['date']} has {n} nodes > n_max={schema.n_max}")
    A = np.zeros((n, n), dtype=np.int64)
    for edge in document["edges"]:
        A[edge["from"], edge["to"]] = edge["weight"]
    mask = np.zeros(schema.n_max, dtype=bool)
    mask[:n] = True
    graph = SemanticGraph(
        user_id=document["user_id"],
        date=date.fromisoformat(document["date"]),
        nodes=nodes,
        A=A,
        X=np.zeros((n, schema.k)),
        mask=mask,
        dropped_sources=int(document.get("dropped_sources", 0)),
    )
    graph.X = node_features(graph, schema)
    return graph


def graph_filename(graph_key: str) -> str:
    return sanitize_filename(graph_key.replace("/", "_"))


MANIFEST_NAME = "manifest.tsv"
FEATURES_NAME = "features.json"


def write_graph_store(directory: str, graphs: list[SemanticGraph], header: str) -> None:
    """Graphs manifest + one node-link file per graph + a shared feature sidecar."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        f.write("user_id\tdate\tn\tdropped_sources\tfile\n")
        used: set[str] = set()
        for g in graphs:
            stem = graph_filename(g.key)
            name, suffix = stem + ".json", 1
            while name in used:
                suffix += 1
                name = f"{stem}_{suffix}.json"
            if suffix > 1:
                logger.warning(f"Graph file name {stem}.json already taken, writing {g.key} to {name}")
            used.add(name)
            f.write(f"{clean_field(g.user_id)}\t{g.date.isoformat()}\t{g.n}\t{g.dropped_sources}\t{name}\n")
            with open(os.path.join(directory, name), "w", encoding="utf-8", newline="\n") as gf:
                gf.write(to_nodelink(g, meta={"header": header}))
    write_blocks(
        os.path.join(directory, FEATURES_NAME),
        {g.key: g.X for g in graphs},
        meta={"header": header},
    )


def read_graph_store(directory: str, schema: GraphSchema) -> list[SemanticGraph]:
    manifest = os.path.join(directory, MANIFEST_NAME)
    if not os.path.isfile(manifest):
        raise PipelineOrderError(manifest)
    features, _ = read_blocks(os.path.join(directory, FEATURES_NAME))
    graphs = []
    with open(manifest, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line.startswith("user_id\t"):
                continue
            name = line.split("\t")[4]
            with open(os.path.join(directory, name), encoding="utf-8") as gf:
                graph = read_nodelink(gf.read(), schema)
            if graph.key in features:
                graph.X = features[graph.key].astype(np.float64)
            graphs.append(graph)
    logger.info(f"Loaded {len(graphs)} graphs from {directory}")
    return graphs
