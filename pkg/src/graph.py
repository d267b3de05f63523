"""Daily semantic graphs: time, sensor and source nodes joined by four edge semantics."""

import logging
from collections import Counter
from datetime import date, datetime, time

import numpy as np

from src.config import GraphSchema
from src.models import (
    EDGE_SEMANTICS,
    SENSOR_ORDER,
    DayBucket,
    GraphInput,
    LifelogEvent,
    Node,
    NodeType,
    SemanticGraph,
)
from src.utils import stable_bucket

logger = logging.getLogger(__name__)


def slot_of(t: datetime, day: date, schema: GraphSchema) -> int:
    """15-minute slot of t relative to day's midnight; 24:00 maps to the last slot."""
    minutes = int((t - datetime.combine(day, time.min)).total_seconds() // 60)
    return min(max(minutes // schema.slot_minutes, 0), schema.slots_per_day - 1)


def fixed_nodes(schema: GraphSchema) -> list[Node]:
    return [Node.time(s) for s in range(schema.slots_per_day)] + [Node.sensor_node(s) for s in SENSOR_ORDER]


def _event_order(e: LifelogEvent):
    return (e.start, e.end or e.start, e.sensor.index, e.entity_key)


def build_day_graph(bucket: DayBucket, schema: GraphSchema) -> SemanticGraph:
    events = sorted(bucket.events, key=_event_order)

    counts = Counter((e.entity_key, e.sensor) for e in events)
    first_seen: dict[tuple, int] = {}
    for e in events:
        first_seen.setdefault((e.entity_key, e.sensor), len(first_seen))

    dropped = 0
    if len(counts) > schema.source_cap:
        ranked = sorted(counts, key=lambda key: (-counts[key], first_seen[key]))
        keep = set(ranked[: schema.source_cap])
        dropped = len(counts) - len(keep)
        events = [e for e in events if (e.entity_key, e.sensor) in keep]
        logger.debug(f"{bucket.user_id}/{bucket.date}: dropped {dropped} low-frequency sources")

    nodes = fixed_nodes(schema)
    index: dict[tuple, int] = {}
    for e in events:
        key = (e.entity_key, e.sensor)
        if key not in index:
            index[key] = len(nodes)
            nodes.append(Node.source(e.entity_key, e.sensor))

    n = len(nodes)
    sensor_base = schema.slots_per_day
    A = np.zeros((n, n), dtype=np.int64)
    for e in events:
        src = index[(e.entity_key, e.sensor)]
        A[sensor_base + e.sensor.index, src] += 1
        A[slot_of(e.start, bucket.date, schema), src] += 1
        if e.end is not None:
            A[src, slot_of(e.end, bucket.date, schema)] += 1
    for s in range(schema.slots_per_day - 1):
        A[s, s + 1] = 1

    mask = np.zeros(schema.n_max, dtype=bool)
    mask[:n] = True
    graph = SemanticGraph(
        user_id=bucket.user_id,
        date=bucket.date,
        nodes=nodes,
        A=A,
        X=np.zeros((n, schema.k)),
        mask=mask,
        dropped_sources=dropped,
    )
    graph.X = node_features(graph, schema, events=events)
    return graph


def node_features(
    graph: SemanticGraph, schema: GraphSchema, events: list[LifelogEvent] | None = None
) -> np.ndarray:
    """Per-node features: kind one-hot, sensor one-hot, slot fraction, entity hash bucket, log degree.

    Source slot fractions average the start slots of the source's events. Without the
    events, they are recovered from the Start edges of A, which count the same thing.
    """
    n = graph.n
    n_sensors = len(SENSOR_ORDER)
    last_slot = schema.slots_per_day - 1
    o_sensor, o_slot = 3, 3 + n_sensors
    o_hash = o_slot + 1
    o_degree = o_hash + schema.entity_hash_buckets

    X = np.zeros((n, schema.k))
    degree = graph.A.sum(axis=0) + graph.A.sum(axis=1)
    X[:, o_degree] = np.log1p(degree)

    slot_sums: dict[int, list[int]] = {}
    if events is not None:
        lookup = {(node.entity_key, node.sensor): i for i, node in enumerate(graph.nodes) if node.kind is NodeType.SOURCE}
        for e in events:
            slot_sums.setdefault(lookup[(e.entity_key, e.sensor)], []).append(slot_of(e.start, graph.date, schema))

    for i, node in enumerate(graph.nodes):
        X[i, node.kind.index] = 1.0
        if node.kind is NodeType.TIME:
            assert node.slot is not None
            X[i, o_slot] = node.slot / last_slot
        elif node.kind is NodeType.SENSOR:
            assert node.sensor is not None
            X[i, o_sensor + node.sensor.index] = 1.0
        else:
            assert node.sensor is not None and node.entity_key is not None
            X[i, o_sensor + node.sensor.index] = 1.0
            if i in slot_sums:
                X[i, o_slot] = float(np.mean(slot_sums[i])) / last_slot
            else:
                starts = graph.A[: schema.slots_per_day, i]
                if starts.sum() > 0:
                    X[i, o_slot] = float(np.dot(np.arange(schema.slots_per_day), starts) / starts.sum()) / last_slot
            bucket = stable_bucket(f"{node.sensor.value}:{node.entity_key}", schema.entity_hash_buckets)
            X[i, o_hash + bucket] = 1.0
    return X


def normalize_adjacency(A: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """D̃^{-1/2}(S + I)D̃^{-1/2} over real nodes, S = binarize(A + Aᵀ); padded slots stay zero."""
    size = len(mask) if mask is not None else A.shape[0]
    real = np.zeros(size, dtype=bool)
    if mask is None:
        real[:] = True
    else:
        real[:] = mask
    padded = np.zeros((size, size))
    padded[: A.shape[0], : A.shape[1]] = A
    S = ((padded + padded.T) > 0).astype(float)
    np.fill_diagonal(S, 0.0)
    S = S + np.eye(size)
    S[~real, :] = 0.0
    S[:, ~real] = 0.0
    deg = S.sum(axis=1)
    inv_sqrt = np.zeros(size)
    inv_sqrt[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return inv_sqrt[:, None] * S * inv_sqrt[None, :]


def symmetric_target(A: np.ndarray, size: int) -> np.ndarray:
    padded = np.zeros((size, size))
    padded[: A.shape[0], : A.shape[1]] = A
    S = ((padded + padded.T) > 0).astype(float)
    np.fill_diagonal(S, 0.0)
    return S


def prepare_graph(graph: SemanticGraph, schema: GraphSchema) -> GraphInput:
    """Pad one graph to n_max and precompute its propagation matrix and edge target."""
    n_max = schema.n_max
    X = np.zeros((n_max, schema.k))
    X[: graph.n] = graph.X
    return GraphInput(
        X=X,
        A_hat=normalize_adjacency(graph.A, graph.mask),
        target=symmetric_target(graph.A, n_max),
        mask=graph.mask.copy(),
        user_id=graph.user_id,
        date=graph.date,
    )


def is_legal_edge(graph: SemanticGraph, i: int, j: int) -> bool:
    return (graph.nodes[i].kind, graph.nodes[j].kind) in EDGE_SEMANTICS
