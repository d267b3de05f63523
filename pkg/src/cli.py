import argparse
from dataclasses import dataclass, field
from typing import Any, NoReturn

from src.config import PipelineConfig, config_from_dict, load_config
from src.errors import UsageError
from src.pipeline import SUBCOMMANDS


@dataclass
class Invocation:
    subcommand: str
    config: PipelineConfig
    models: list[str] = field(default_factory=list)
    days: list[str] = field(default_factory=list)
    baseline: bool | None = None


# flag dest → (config section or "" for top level, config key)
FLAG_KEYS: dict[str, tuple[str, str]] = {
    "seed": ("", "seed"),
    "out": ("", "out_dir"),
    "workers": ("", "workers"),
    "verbose": ("", "verbose"),
    "dataset_root": ("", "dataset_root"),
    "user_dir_pattern": ("", "user_dir_pattern"),
    "timestamp_format": ("", "timestamp_formats"),
    "gender_table": ("", "gender_table"),
    "min_days": ("", "min_days_per_user"),
    "users_per_archetype": ("synth", "users_per_archetype"),
    "days_per_user": ("synth", "days"),
    "n_max": ("schema", "n_max"),
    "kappa": ("ccm", "kappa"),
    "latent_dim": ("ccm", "d"),
    "zeta": ("ccm", "zeta"),
    "membership_form": ("ccm", "membership_form"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "lr_ae": ("train", "lr_ae"),
    "lr_dis": ("train", "lr_dis"),
    "lr_enc": ("train", "lr_enc"),
    "perplexity": ("analysis", "perplexity"),
    "tsne_iterations": ("analysis", "tsne_iterations"),
    "clusters": ("analysis", "clusters"),
    "runs": ("analysis", "runs"),
    "aggregate_by_user": ("analysis", "aggregate_by_user"),
    "project": ("analysis", "project"),
    "svg": ("analysis", "svg"),
}


class _Parser(argparse.ArgumentParser):
    """Raises UsageError on bad arguments instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Master seed (required, here or in the config file)")
    parser.add_argument("--config", default=None, help="JSON config file; flags override its values")
    parser.add_argument("-o", "--out", default=None, help="Output directory (default: ./out)")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads for file and graph stages")
    parser.add_argument("-v", "--verbose", action="store_true", default=None, help="Verbose logging output")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lifelog-graphs",
        description="Lifelog semantic graphs, constant-curvature adversarial embedding and latent-space analysis",
    )
    sub = parser.add_subparsers(
        dest="subcommand",
        required=True,
        parser_class=_Parser,
        metavar="{" + ",".join(SUBCOMMANDS) + "}",
    )

    p = sub.add_parser("ingest", help="Scan a lifelog dataset into normalized events")
    _common(p)
    p.add_argument("--dataset-root", default=None, help="Directory holding one folder per user")
    p.add_argument("--user-dir-pattern", default=None, help="Regex with (?P<user>) and optional (?P<gender>) groups")
    p.add_argument(
        "--timestamp-format",
        action="append",
        default=None,
        help="strptime format, repeatable, tried in order",
    )
    p.add_argument("--gender-table", default=None, help="Sidecar user_id,gender table")
    p.add_argument("--min-days", type=int, default=None, help="Drop users with fewer logged days")

    p = sub.add_parser("synth", help="Generate a labeled synthetic lifelog dataset")
    _common(p)
    p.add_argument("--users-per-archetype", type=int, default=None)
    p.add_argument("--days", dest="days_per_user", type=int, default=None, help="Days per synthetic user")

    p = sub.add_parser("build", help="Build one semantic graph per user and day")
    _common(p)
    p.add_argument("--n-max", type=int, default=None, help="Node budget per graph")

    p = sub.add_parser("train", help="Train the graph autoencoder")
    _common(p)
    p.add_argument("--baseline", action="store_true", default=None, help="Plain autoencoder, no discriminator")
    p.add_argument("--n-max", type=int, default=None, help="Node budget per graph")
    p.add_argument("--kappa", type=float, default=None, help="Curvature of the latent manifold (nonzero)")
    p.add_argument("--latent-dim", type=int, default=None, help="Manifold dimension d (latent vectors are d+1 long)")
    p.add_argument("--zeta", type=float, default=None, help="Membership function width")
    p.add_argument("--membership-form", choices=["squared", "printed"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr-ae", type=float, default=None)
    p.add_argument("--lr-dis", type=float, default=None)
    p.add_argument("--lr-enc", type=float, default=None)

    p = sub.add_parser("embed", help="Embed every graph with trained checkpoints")
    _common(p)
    p.add_argument("--model", action="append", default=None, help="Checkpoint name (ae, ccm_aae), repeatable")

    p = sub.add_parser("analyze", help="Frozen-encoder classification, t-SNE and clustering")
    _common(p)
    p.add_argument("--model", action="append", default=None, help="Embedding name (ae, ccm_aae), repeatable")
    p.add_argument("--perplexity", type=float, default=None)
    p.add_argument("--tsne-iterations", type=int, default=None)
    p.add_argument("--clusters", type=int, default=None, help="k for k-means (default: 5)")
    p.add_argument("--runs", type=int, default=None, help="Classifier runs per task (default: 5)")
    p.add_argument("--aggregate-by-user", action="store_true", default=None, help="Project per-user mean embeddings")
    p.add_argument("--project", action="store_true", default=None, help="Project embeddings onto the manifold first")
    p.add_argument("--no-svg", dest="svg", action="store_false", default=None, help="Skip the SVG scatter")

    p = sub.add_parser("viz", help="Export day graphs as DOT and node-link JSON")
    _common(p)
    p.add_argument("--day", action="append", default=None, help="USER:YYYY-MM-DD, repeatable")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    data: dict[str, Any] = {}
    for dest, (section, key) in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section:
            data.setdefault(section, {})[key] = value
        else:
            data[key] = value
    return data


def parse_args(argv: list[str]) -> Invocation:
    args = _build_parser().parse_args(argv)
    base = load_config(args.config) if args.config else None
    config = config_from_dict(_overrides(args), base=base)
    return Invocation(
        subcommand=args.subcommand,
        config=config,
        models=list(getattr(args, "model", None) or []),
        days=list(getattr(args, "day", None) or []),
        baseline=getattr(args, "baseline", None),
    )
