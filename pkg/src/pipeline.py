import dataclasses
import logging
import os
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from datetime import date

import numpy as np
from rich.console import Console

from src.analysis import (
    TASKS,
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
from src.config import PipelineConfig, config_hash, save_config
from src.errors import PipelineOrderError, UsageError
from src.export import export_graph, graph_filename, read_graph_store, write_graph_store
from src.graph import build_day_graph, prepare_graph
from src.ingest import (
    load_gender_table,
    partition_by_day,
    read_events,
    read_users,
    scan_dataset,
    write_events,
    write_rejects,
    write_users,
)
from src.manifold import project_to_manifold
from src.model import EpochRecord, embed_dataset, load_checkpoint, save_checkpoint, train
from src.models import DayBucket, GraphInput, SemanticGraph
from src.synth import default_archetypes, generate_synthetic
from src.tsne import tsne_project
from src.utils import ensure_dir, file_header, format_duration

logger = logging.getLogger(__name__)
console = Console()

SUBCOMMANDS = ("ingest", "synth", "build", "train", "embed", "analyze", "viz")
MODEL_NAMES = ("ae", "ccm_aae")

EVENTS_FILE = "events.tsv"
USERS_FILE = "users.tsv"
REJECTS_FILE = "rejects.log"
GRAPHS_DIR = "graphs"
MODELS_DIR = "models"
EMBEDDINGS_DIR = "embeddings"
REPORTS_DIR = "reports"
PROJECTIONS_DIR = "projections"
VIZ_DIR = "viz"


def parse_day(text: str) -> tuple[str, date]:
    """``USER:YYYY-MM-DD`` → (user_id, date)."""
    user, sep, day = text.rpartition(":")
    if not sep or not user:
        raise UsageError(f"bad day {text!r}, expected USER:YYYY-MM-DD")
    try:
        return user, date.fromisoformat(day)
    except ValueError as e:
        raise UsageError(f"bad date in {text!r}: {e}") from e


class Pipeline:
    """Runs one stage at a time; each stage reads its predecessor's files under ``out_dir``."""

    def __init__(
        self,
        config: PipelineConfig,
        on_log: Callable[[str], None] | None = None,
        on_epoch: Callable[[str, EpochRecord], None] | None = None,
    ):
        self.config = config
        self.seed = config.require_seed()
        self.header = file_header(config_hash(config), self.seed)
        self._on_log = on_log  # fn(text_str)
        self._on_epoch = on_epoch  # fn(model_name, EpochRecord)

    def _emit_log(self, text: str):
        if self._on_log:
            try:
                self._on_log(text)
            except Exception:
                pass

    def _log(self, text: str) -> None:
        console.print(text)
        self._emit_log(text)

    def path(self, *parts: str) -> str:
        return os.path.join(self.config.out_dir, *parts)

    def _require(self, *parts: str) -> str:
        path = self.path(*parts)
        if not os.path.exists(path):
            raise PipelineOrderError(path)
        return path

    def run(
        self,
        subcommand: str,
        models: Sequence[str] = (),
        days: Sequence[str] = (),
        baseline: bool | None = None,
    ) -> int:
        if subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {subcommand!r} (expected one of {', '.join(SUBCOMMANDS)})")
        ensure_dir(self.config.out_dir)
        save_config(self.config, os.path.join(self.config.out_dir, f"config_{subcommand}.json"))
        started = time.time()
        if subcommand == "ingest":
            self.ingest()
        elif subcommand == "synth":
            self.synth()
        elif subcommand == "build":
            self.build()
        elif subcommand == "train":
            self.train(baseline)
        elif subcommand == "embed":
            self.embed(models)
        elif subcommand == "analyze":
            self.analyze(models)
        else:
            self.viz(days)
        self._log(f"{subcommand} finished in {format_duration(time.time() - started)}")
        return 0

    # ── stages ──

    def ingest(self) -> None:
        cfg = self.config
        if not cfg.dataset_root:
            raise UsageError("ingest needs dataset_root (--dataset-root or config file)")
        table = load_gender_table(cfg.gender_table) if cfg.gender_table else None
        self._log(f"Scanning {cfg.dataset_root}...")
        result = scan_dataset(
            cfg.dataset_root,
            cfg.user_dir_pattern,
            cfg.timestamp_formats,
            gender_table=table,
            min_days=cfg.min_days_per_user,
            workers=cfg.workers,
        )
        write_events(self.path(EVENTS_FILE), result.events, self.header)
        write_users(self.path(USERS_FILE), result.users, self.header)
        write_rejects(self.path(REJECTS_FILE), result.rejects, self.header)
        self._log(f"{len(result.users)} users, {len(result.events)} events, {result.reject_count} rejected lines")

    def synth(self) -> None:
        s = self.config.synth
        users, events = generate_synthetic(
            default_archetypes(),
            users_per_archetype=s.users_per_archetype,
            days=s.days,
            seed=self.seed,
            start_date=date.fromisoformat(s.start_date),
        )
        write_events(self.path(EVENTS_FILE), events, self.header)
        write_users(self.path(USERS_FILE), users, self.header)
        self._log(f"Generated {len(users)} users and {len(events)} events")

    def _buckets(self) -> list[DayBucket]:
        return partition_by_day(read_events(self._require(EVENTS_FILE)))

    def build(self) -> None:
        self._require(USERS_FILE)
        buckets = self._buckets()
        schema = self.config.schema
        with ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as pool:
            graphs = list(pool.map(lambda b: build_day_graph(b, schema), buckets))
        write_graph_store(self.path(GRAPHS_DIR), graphs, self.header)
        dropped = sum(g.dropped_sources for g in graphs)
        self._log(f"Built {len(graphs)} day graphs ({dropped} low-frequency sources dropped)")

    def _graph_inputs(self) -> list[GraphInput]:
        self._require(GRAPHS_DIR, "manifest.tsv")
        graphs = read_graph_store(self.path(GRAPHS_DIR), self.config.schema)
        schema = self.config.schema
        with ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as pool:
            return list(pool.map(lambda g: prepare_graph(g, schema), graphs))

    def train(self, baseline: bool | None = None) -> str:
        baseline = self.config.train.baseline_mode if baseline is None else baseline
        name = "ae" if baseline else "ccm_aae"
        train_cfg = dataclasses.replace(self.config.train, seed=self.seed, baseline_mode=baseline)
        inputs = self._graph_inputs()
        self._log(f"Training {name} on {len(inputs)} graphs for {train_cfg.epochs} epochs...")

        def report(record: EpochRecord) -> None:
            if record.epoch % 10 == 0 or record.epoch == train_cfg.epochs:
                self._log(f"  {name} epoch {record.epoch}: {record.to_row()}")
            if self._on_epoch:
                self._on_epoch(name, record)

        result = train(inputs, self.config.ccm, train_cfg, on_epoch=report)
        models = ensure_dir(self.path(MODELS_DIR))
        save_checkpoint(
            os.path.join(models, f"{name}.json"),
            result.params,
            self.config.ccm,
            train_cfg,
            schema=self.config.schema,
            header=self.header,
        )
        with open(os.path.join(models, f"{name}.log.tsv"), "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(result.log_lines(self.header)) + "\n")
        first, last = result.history[0].deviation, result.history[-1].deviation
        self._log(f"Saved {name}: manifold deviation {first:.4f} → {last:.4f}")
        return name

    def _model_names(self, requested: Sequence[str], directory: str, suffix: str) -> list[str]:
        if requested:
            return list(requested)
        found = [n for n in MODEL_NAMES if os.path.isfile(self.path(directory, n + suffix))]
        if not found:
            raise PipelineOrderError(self.path(directory, MODEL_NAMES[-1] + suffix))
        return found

    def embed(self, models: Sequence[str] = ()) -> None:
        users = read_users(self._require(USERS_FILE))
        names = self._model_names(models, MODELS_DIR, ".json")
        inputs = self._graph_inputs()
        out = ensure_dir(self.path(EMBEDDINGS_DIR))
        for name in names:
            params, _ = load_checkpoint(
                self._require(MODELS_DIR, f"{name}.json"), spec=self.config.ccm, schema=self.config.schema
            )
            points = embed_dataset(inputs, params, workers=self.config.workers)
            write_embeddings(os.path.join(out, f"{name}.tsv"), label_embeddings(points, users), self.header)
            self._log(f"Embedded {len(points)} graphs with {name}")

    def analyze(self, models: Sequence[str] = ()) -> None:
        cfg = self.config.analysis
        users = read_users(self._require(USERS_FILE))
        names = self._model_names(models, EMBEDDINGS_DIR, ".tsv")
        reports_dir = ensure_dir(self.path(REPORTS_DIR))
        projections_dir = ensure_dir(self.path(PROJECTIONS_DIR))

        results = {}
        for name in names:
            embeddings = read_embeddings(self._require(EMBEDDINGS_DIR, f"{name}.tsv"), users)
            if cfg.project:
                projected = project_to_manifold(np.stack([e.z for e in embeddings]), self.config.ccm)
                embeddings = [dataclasses.replace(e, z=z) for e, z in zip(embeddings, projected, strict=True)]

            results[name] = {}
            for task in TASKS:
                if len(set(task_labels(embeddings, task).tolist()) - {""}) < 2:
                    logger.info(f"Skipping task {task} for {name}: fewer than 2 classes")
                    continue
                results[name][task] = fit_frozen_classifier(embeddings, task, cfg.runs, self.seed, cfg)

            points = aggregate_by_user(embeddings) if cfg.aggregate_by_user else embeddings
            Z = np.stack([e.z for e in points])
            if len(points) >= 5:
                projection = tsne_project(Z, cfg.perplexity, cfg.tsne_iterations, self.seed)
                write_projection(os.path.join(projections_dir, f"{name}.tsv"), points, projection.coords, self.header)
                if cfg.svg:
                    svg = render_scatter_svg(
                        projection.coords, [e.sex_label for e in points], title=name, header=self.header
                    )
                    with open(os.path.join(projections_dir, f"{name}.svg"), "w", encoding="utf-8") as f:
                        f.write(svg)
            else:
                logger.warning(f"Skipping t-SNE for {name}: {len(points)} points < 5")

            if 2 <= cfg.clusters < len(points):
                report = cluster_report(Z, cfg.clusters, points, seed=self.seed)
                with open(os.path.join(reports_dir, f"clusters_{name}.txt"), "w", encoding="utf-8", newline="\n") as f:
                    f.write(format_cluster_report(report, self.header))
                self._log(f"{name} clusters: {', '.join(report.tags())} (silhouette {report.silhouette:.3f})")
            else:
                logger.warning(f"Skipping clustering for {name}: k={cfg.clusters} with {len(points)} points")

        table = format_accuracy_table(results, self.header)
        with open(os.path.join(reports_dir, "accuracy.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write(table)
        self._log(table)

    def viz(self, days: Sequence[str]) -> None:
        if not days:
            raise UsageError("viz needs at least one --day USER:YYYY-MM-DD")
        wanted = [parse_day(d) for d in days]
        buckets = {(b.user_id, b.date): b for b in self._buckets()}
        out = ensure_dir(self.path(VIZ_DIR))
        for user_id, day in wanted:
            bucket = buckets.get((user_id, day), DayBucket(user_id=user_id, date=day))
            graph: SemanticGraph = build_day_graph(bucket, self.config.schema)
            stem = os.path.join(out, graph_filename(graph.key))
            for fmt, ext in (("dot", ".dot"), ("nodelink", ".json")):
                with open(stem + ext, "w", encoding="utf-8", newline="\n") as f:
                    f.write(export_graph(graph, fmt, header=self.header))
            self._log(f"Wrote {graph.key}: {graph.n} nodes, {len(graph.edges())} edges")


def run_pipeline(
    subcommand: str,
    config: PipelineConfig,
    models: Sequence[str] = (),
    days: Sequence[str] = (),
    baseline: bool | None = None,
    on_log: Callable[[str], None] | None = None,
) -> int:
    """Run one subcommand; returns 0 or raises a PipelineError carrying the exit code."""
    return Pipeline(config, on_log=on_log).run(subcommand, models=models, days=days, baseline=baseline)
