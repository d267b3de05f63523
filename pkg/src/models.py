from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum

import numpy as np


class SensorKind(str, Enum):
    WIFI = "WiFi"
    LOCATION = "Location"
    SMS = "SMS"
    CALL = "Call"
    APPLICATION_USAGE = "ApplicationUsage"
    BLUETOOTH_PROXIMITY = "BluetoothProximity"
    ACTIVITY_STATE = "ActivityState"

    @property
    def index(self) -> int:
        return SENSOR_ORDER.index(self)


# Fixed enumeration order; sensor nodes and one-hot blocks follow it.
SENSOR_ORDER: tuple[SensorKind, ...] = tuple(SensorKind)


@dataclass(frozen=True)
class LifelogEvent:
    user_id: str
    sensor: SensorKind
    entity_key: str
    start: datetime
    end: datetime | None = None
    attrs: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "sensor": self.sensor.value,
            "entity_key": self.entity_key,
            "start": self.start.isoformat(),
            "end": self.end.isoformat() if self.end else "",
            "attrs": self.attrs,
        }


@dataclass(frozen=True)
class ParseReject:
    line: str
    reason: str
    source: str = ""
    line_no: int = 0


@dataclass
class UserMeta:
    user_id: str
    gender: str  # "M" or "F"
    day_count: int = 0
    archetype: str = ""  # synthetic ground truth, empty for real data

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "gender": self.gender,
            "day_count": self.day_count,
            "archetype": self.archetype,
        }


@dataclass
class DayBucket:
    user_id: str
    date: date
    events: list[LifelogEvent] = field(default_factory=list)


class NodeType(str, Enum):
    TIME = "time"
    SENSOR = "sensor"
    SOURCE = "source"

    @property
    def index(self) -> int:
        return list(NodeType).index(self)


@dataclass(frozen=True)
class Node:
    kind: NodeType
    slot: int | None = None
    sensor: SensorKind | None = None
    entity_key: str | None = None

    @classmethod
    def time(cls, slot: int) -> "Node":
        return cls(NodeType.TIME, slot=slot)

    @classmethod
    def sensor_node(cls, sensor: SensorKind) -> "Node":
        return cls(NodeType.SENSOR, sensor=sensor)

    @classmethod
    def source(cls, entity_key: str, sensor: SensorKind) -> "Node":
        return cls(NodeType.SOURCE, sensor=sensor, entity_key=entity_key)

    @property
    def label(self) -> str:
        if self.kind is NodeType.TIME:
            assert self.slot is not None
            minutes = self.slot * 15
            return f"{minutes // 60:02d}:{minutes % 60:02d}"
        if self.kind is NodeType.SENSOR:
            assert self.sensor is not None
            return self.sensor.value
        return f"{self.entity_key}"


class EdgeSemantic(str, Enum):
    CONTAIN = "contain"
    START = "start"
    END = "end"
    WILL_BE = "will_be"


# The only legal (from, to) node-kind pairs.
EDGE_SEMANTICS: dict[tuple[NodeType, NodeType], EdgeSemantic] = {
    (NodeType.SENSOR, NodeType.SOURCE): EdgeSemantic.CONTAIN,
    (NodeType.TIME, NodeType.SOURCE): EdgeSemantic.START,
    (NodeType.SOURCE, NodeType.TIME): EdgeSemantic.END,
    (NodeType.TIME, NodeType.TIME): EdgeSemantic.WILL_BE,
}


@dataclass
class SemanticGraph:
    user_id: str
    date: date
    nodes: list[Node]
    A: np.ndarray  # n×n int64, directed counts
    X: np.ndarray  # n×k float64
    mask: np.ndarray  # n_max bool
    dropped_sources: int = 0

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def key(self) -> str:
        return f"{self.user_id}/{self.date.isoformat()}"

    def edges(self) -> list[tuple[int, int, EdgeSemantic, int]]:
        """Nonzero entries of A as (from, to, semantic, weight), row-major."""
        out = []
        for i, j in zip(*np.nonzero(self.A), strict=True):
            pair = (self.nodes[i].kind, self.nodes[j].kind)
            out.append((int(i), int(j), EDGE_SEMANTICS[pair], int(self.A[i, j])))
        return out


@dataclass
class GraphInput:
    """Model-facing form of one graph, padded to n_max."""

    X: np.ndarray  # n_max×k
    A_hat: np.ndarray  # n_max×n_max normalized propagation matrix
    target: np.ndarray  # n_max×n_max binarized symmetric adjacency, zero diagonal
    mask: np.ndarray  # n_max bool
    user_id: str = ""
    date: date | None = None


@dataclass
class Reconstruction:
    X_hat: np.ndarray
    A_logits: np.ndarray


@dataclass
class LatentPoint:
    z: np.ndarray
    user_id: str
    date: date


@dataclass
class LabeledEmbedding:
    z: np.ndarray
    sex_label: str
    user_index: int
    user_id: str
    date: date | None  # None for per-user aggregates
    archetype: str = ""


@dataclass
class AccuracyReport:
    task: str
    mean_accuracy: float
    std: float
    n_runs: int
    n_classes: int
    majority_baseline: float
    accuracies: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "mean_accuracy": self.mean_accuracy,
            "std": self.std,
            "n_runs": self.n_runs,
            "n_classes": self.n_classes,
            "majority_baseline": self.majority_baseline,
        }
