"""Latent-space analysis: frozen-encoder classification, projections and clustering."""

import io
import logging
import warnings
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import date

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import silhouette_score
from sklearn.model_selection import train_test_split
from sklearn.neural_network import MLPClassifier
from sklearn.preprocessing import StandardScaler

from src.config import AnalysisConfig
from src.errors import PipelineOrderError, UsageError
from src.models import AccuracyReport, LabeledEmbedding, LatentPoint, UserMeta
from src.utils import clean_field, derive_seeds

logger = logging.getLogger(__name__)

TASKS = ("sex", "index", "archetype")

# Cluster composition thresholds.
USER_SPECIFIC_SHARE = 0.6
GENDER_SPECIFIC_SHARE = 0.8

METHOD_NAMES = {"ae": "AE", "ccm_aae": "CCM-AAE"}


def label_embeddings(points: Sequence[LatentPoint], users: Sequence[UserMeta]) -> list[LabeledEmbedding]:
    """Attach sex, user index (position in sorted user ids) and archetype to latent points."""
    meta = {u.user_id: u for u in users}
    index = {uid: i for i, uid in enumerate(sorted(meta))}
    out = []
    for p in points:
        if p.user_id not in meta:
            raise UsageError(f"embedding for unknown user {p.user_id}")
        u = meta[p.user_id]
        out.append(
            LabeledEmbedding(
                z=np.asarray(p.z, dtype=float),
                sex_label=u.gender,
                user_index=index[p.user_id],
                user_id=p.user_id,
                date=p.date,
                archetype=u.archetype,
            )
        )
    return out


def task_labels(embeddings: Sequence[LabeledEmbedding], task: str) -> np.ndarray:
    if task == "sex":
        return np.array([e.sex_label for e in embeddings])
    if task == "index":
        return np.array([e.user_index for e in embeddings])
    if task == "archetype":
        return np.array([e.archetype for e in embeddings])
    raise UsageError(f"unknown task: {task!r} (expected one of {', '.join(TASKS)})")


def _split(Z: np.ndarray, y: np.ndarray, test_fraction: float, seed: int):
    counts = Counter(y.tolist())
    n_test = int(np.ceil(test_fraction * len(y)))
    if min(counts.values()) >= 2 and len(counts) <= n_test <= len(y) - len(counts):
        return train_test_split(Z, y, test_size=test_fraction, random_state=seed, stratify=y)
    logger.warning("class counts too small for a stratified split, falling back to a random split")
    return train_test_split(Z, y, test_size=test_fraction, random_state=seed)


def fit_frozen_classifier(
    embeddings: Sequence[LabeledEmbedding],
    task: str,
    runs: int = 5,
    seed: int = 0,
    config: AnalysisConfig | None = None,
) -> AccuracyReport:
    """Mean ± std test accuracy (percent) of a small dense classifier over precomputed z."""
    config = config or AnalysisConfig()
    y = task_labels(embeddings, task)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise UsageError(f"task {task!r} needs at least 2 classes, found {len(classes)}")
    if runs < 1:
        raise UsageError("runs must be ≥ 1")
    Z = np.stack([e.z for e in embeddings])
    majority = 100.0 * max(Counter(y.tolist()).values()) / len(y)

    accuracies = []
    for run_seed in derive_seeds(seed, runs):
        Z_train, Z_test, y_train, y_test = _split(Z, y, config.test_fraction, run_seed)
        scaler = StandardScaler().fit(Z_train)
        clf = MLPClassifier(
            hidden_layer_sizes=tuple(config.classifier_hidden),
            activation="relu",
            solver="adam",
            max_iter=config.classifier_epochs,
            random_state=run_seed,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=ConvergenceWarning)
            clf.fit(scaler.transform(Z_train), y_train)
        accuracies.append(100.0 * float(clf.score(scaler.transform(Z_test), y_test)))

    std = float(np.std(accuracies, ddof=1)) if runs >= 2 else 0.0
    report = AccuracyReport(
        task=task,
        mean_accuracy=float(np.mean(accuracies)),
        std=std,
        n_runs=runs,
        n_classes=len(classes),
        majority_baseline=majority,
        accuracies=accuracies,
    )
    logger.info(f"{task}: {report.mean_accuracy:.2f} ± {report.std:.2f} (majority {majority:.2f})")
    return report


def format_accuracy_table(results: dict[str, dict[str, AccuracyReport]], header: str = "") -> str:
    """Methods as columns, tasks as rows, cells ``mean ± std``; a majority column closes each row."""
    methods = list(results)
    tasks = [t for t in TASKS if any(t in results[m] for m in methods)]
    titles = [METHOD_NAMES.get(m, m) for m in methods]
    width = max([14] + [len(t) + 2 for t in titles])
    lines = [header] if header else []
    lines.append("Classification accuracy with fixed encoder (%)")
    lines.append(f"{'task':<10}" + "".join(f"{t:>{width}}" for t in titles) + f"{'majority':>{width}}")
    for task in tasks:
        cells = []
        majority = None
        for m in methods:
            report = results[m].get(task)
            if report is None:
                cells.append(f"{'-':>{width}}")
                continue
            majority = report.majority_baseline
            cells.append(f"{f'{report.mean_accuracy:.2f} ± {report.std:.2f}':>{width}}")
        tail = f"{majority:.2f}" if majority is not None else "-"
        lines.append(f"{task:<10}" + "".join(cells) + f"{tail:>{width}}")
    return "\n".join(lines) + "\n"


# ── clustering ──


@dataclass
class ClusterSummary:
    index: int
    size: int
    sex_shares: dict[str, float]
    dominant_user: str
    dominant_user_share: float
    tag: str  # "user-specific" | "gender-specific" | "common"


@dataclass
class ClusterReport:
    assignments: np.ndarray
    silhouette: float
    inertia: float
    clusters: list[ClusterSummary] = field(default_factory=list)

    def tags(self) -> list[str]:
        return [c.tag for c in self.clusters]


def _tag(sex_shares: dict[str, float], user_share: float) -> str:
    if user_share >= USER_SPECIFIC_SHARE:
        return "user-specific"
    if max(sex_shares.values(), default=0.0) >= GENDER_SPECIFIC_SHARE:
        return "gender-specific"
    return "common"


def cluster_report(points, k: int, labels: Sequence[LabeledEmbedding], seed: int = 0, restarts: int = 50) -> ClusterReport:
    """Seeded k-means (k-means++, best of ``restarts``) plus per-cluster sex and user composition."""
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    if k < 2:
        raise UsageError(f"k must be ≥ 2, got {k}")
    if k >= n:
        raise UsageError(f"k={k} must be smaller than the number of points ({n})")
    if len(labels) != n:
        raise UsageError(f"{n} points but {len(labels)} labels")

    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed)
    assignments = km.fit_predict(X)
    distinct = len(set(assignments.tolist()))
    silhouette = float(silhouette_score(X, assignments)) if 2 <= distinct < n else 0.0

    clusters = []
    for c in range(k):
        members = [labels[i] for i in np.flatnonzero(assignments == c)]
        if not members:
            clusters.append(ClusterSummary(c, 0, {}, "", 0.0, "common"))
            continue
        sexes = Counter(m.sex_label for m in members)
        users = Counter(m.user_id for m in members)
        dominant, count = min(users.items(), key=lambda kv: (-kv[1], kv[0]))
        shares = {s: sexes[s] / len(members) for s in sorted(sexes)}
        user_share = count / len(members)
        clusters.append(ClusterSummary(c, len(members), shares, dominant, user_share, _tag(shares, user_share)))
    return ClusterReport(assignments=assignments, silhouette=silhouette, inertia=float(km.inertia_), clusters=clusters)


def format_cluster_report(report: ClusterReport, header: str = "") -> str:
    lines = [header] if header else []
    lines.append(f"clusters={len(report.clusters)} silhouette={report.silhouette:.4f} inertia={report.inertia:.4f}")
    lines.append("cluster\tsize\tsex_composition\tdominant_user\tdominant_share\ttag")
    for c in report.clusters:
        sexes = ",".join(f"{s}:{share:.2f}" for s, share in c.sex_shares.items()) or "-"
        lines.append(
            f"{c.index}\t{c.size}\t{sexes}\t{c.dominant_user or '-'}\t{c.dominant_user_share:.2f}\t{c.tag}"
        )
    return "\n".join(lines) + "\n"


# ── aggregation, files ──


def aggregate_by_user(embeddings: Sequence[LabeledEmbedding]) -> list[LabeledEmbedding]:
    """One mean embedding per user, ordered by user id."""
    groups: dict[str, list[LabeledEmbedding]] = {}
    for e in embeddings:
        groups.setdefault(e.user_id, []).append(e)
    out = []
    for uid in sorted(groups):
        first = groups[uid][0]
        out.append(
            LabeledEmbedding(
                z=np.mean([e.z for e in groups[uid]], axis=0),
                sex_label=first.sex_label,
                user_index=first.user_index,
                user_id=uid,
                date=None,
                archetype=first.archetype,
            )
        )
    return out


def _date_text(d: date | None) -> str:
    return d.isoformat() if d is not None else "all"


def write_embeddings(path: str, embeddings: Sequence[LabeledEmbedding], header: str) -> None:
    dim = len(embeddings[0].z) if embeddings else 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        f.write("\t".join(["user_id", "date", "sex"] + [f"z_{i}" for i in range(dim)]) + "\n")
        for e in embeddings:
            values = "\t".join(f"{v:.17g}" for v in e.z)
            f.write(f"{clean_field(e.user_id)}\t{_date_text(e.date)}\t{e.sex_label}\t{values}\n")


def read_embeddings(path: str, users: Sequence[UserMeta] = ()) -> list[LabeledEmbedding]:
    """Parse an embedding file; user index and archetype come from ``users`` when given."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except FileNotFoundError as e:
        raise PipelineOrderError(path) from e
    rows = [line.split("\t") for line in lines if line and not line.startswith("#") and not line.startswith("user_id\t")]
    meta = {u.user_id: u for u in users}
    known = sorted(meta) if meta else sorted({r[0] for r in rows})
    index = {uid: i for i, uid in enumerate(known)}
    out = []
    for r in rows:
        uid = r[0]
        out.append(
            LabeledEmbedding(
                z=np.array([float(v) for v in r[3:]]),
                sex_label=r[2],
                user_index=index.get(uid, -1),
                user_id=uid,
                date=None if r[1] == "all" else date.fromisoformat(r[1]),
                archetype=meta[uid].archetype if uid in meta else "",
            )
        )
    return out


def write_projection(path: str, embeddings: Sequence[LabeledEmbedding], coords: np.ndarray, header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        f.write("user_id\tdate\tsex\tx\ty\n")
        for e, (x, y) in zip(embeddings, coords, strict=True):
            f.write(f"{clean_field(e.user_id)}\t{_date_text(e.date)}\t{e.sex_label}\t{x:.6f}\t{y:.6f}\n")


def render_scatter_svg(coords: np.ndarray, labels: Sequence[str], title: str = "", header: str = "") -> str:
    """2-D scatter with one color per label value, as SVG text; header goes into the SVG metadata."""
    coords = np.asarray(coords, dtype=float)
    values = sorted(set(labels))
    cmap = matplotlib.colormaps["tab10" if len(values) <= 10 else "tab20"]
    with matplotlib.rc_context({"svg.hashsalt": "lifelog-graphs", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 6))
        ax = fig.add_subplot()
        for i, value in enumerate(values):
            sel = np.array([lab == value for lab in labels], dtype=bool)
            ax.scatter(coords[sel, 0], coords[sel, 1], s=12, color=cmap(i % cmap.N), label=str(value))
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        if len(values) <= 20:
            ax.legend(loc="best", fontsize=7, markerscale=1.5, frameon=False)
        buffer = io.StringIO()
        metadata: dict[str, str | None] = {"Date": None}
        if header:
            metadata["Description"] = header
        fig.savefig(buffer, format="svg", metadata=metadata)
    return buffer.getvalue()
