import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any

from src.errors import UsageError
from src.models import SENSOR_ORDER

logger = logging.getLogger(__name__)


@dataclass
class GraphSchema:
    slot_minutes: int = 15
    slots_per_day: int = 96
    n_max: int = 256
    k: int = 28
    entity_hash_buckets: int = 16

    def __post_init__(self):
        if self.slots_per_day * self.slot_minutes != 1440:
            raise UsageError(f"slots_per_day × slot_minutes must be 1440, got {self.slots_per_day}×{self.slot_minutes}")
        if self.source_cap < 1:
            raise UsageError(f"n_max={self.n_max} leaves no room for source nodes")
        # kind one-hot + sensor one-hot + slot fraction + hash buckets + degree
        expected_k = 3 + len(SENSOR_ORDER) + 1 + self.entity_hash_buckets + 1
        if self.k != expected_k:
            raise UsageError(f"k must be {expected_k} for {self.entity_hash_buckets} hash buckets, got {self.k}")

    @property
    def fixed_nodes(self) -> int:
        return self.slots_per_day + len(SENSOR_ORDER)

    @property
    def source_cap(self) -> int:
        return self.n_max - self.fixed_nodes


@dataclass
class CcmSpec:
    kappa: float = 1.0
    d: int = 5
    zeta: float = 1.0
    membership_form: str = "squared"  # "squared" or "printed"
    prior_scale: float = 1.0  # std of tangent Gaussian for the hyperboloid prior

    def __post_init__(self):
        if self.kappa == 0:
            raise UsageError("kappa must be nonzero")
        if self.zeta <= 0:
            raise UsageError("zeta must be positive")
        if self.d < 1:
            raise UsageError("d must be a positive integer")
        if self.membership_form not in ("squared", "printed"):
            raise UsageError(f"unknown membership_form: {self.membership_form}")

    @property
    def ambient_dim(self) -> int:
        return self.d + 1

    @property
    def target(self) -> float:
        """κ⁻¹, the value of ⟨z, z⟩ on the manifold."""
        return 1.0 / self.kappa


@dataclass
class TrainConfig:
    h1: int = 32
    h2: int = 32
    h_d: int = 16
    lr_ae: float = 1e-3
    lr_dis: float = 1e-3
    lr_enc: float = 5e-4
    batch_size: int = 16
    epochs: int = 300
    seed: int = 0
    baseline_mode: bool = False
    weight_x: float = 1.0
    weight_a: float = 1.0

    def __post_init__(self):
        for name in ("h1", "h2", "h_d", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be ≥ 1")
        for name in ("lr_ae", "lr_dis", "lr_enc"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")


@dataclass
class AnalysisConfig:
    perplexity: float = 30.0
    tsne_iterations: int = 1000
    clusters: int = 5
    runs: int = 5
    classifier_epochs: int = 200
    classifier_hidden: tuple[int, ...] = (16, 16)
    test_fraction: float = 0.2
    aggregate_by_user: bool = False
    project: bool = False  # radial/hyperboloid projection before analysis
    svg: bool = True


@dataclass
class SynthConfig:
    users_per_archetype: int = 4
    days: int = 30
    start_date: str = "2013-11-01"


@dataclass
class PipelineConfig:
    dataset_root: str = ""
    user_dir_pattern: str = r"^(?P<user>[^_]+)_(?P<gender>[MFmf])$"
    timestamp_formats: list[str] = field(
        default_factory=lambda: ["%m-%d-%Y %H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
    )
    gender_table: str = ""
    min_days_per_user: int = 1
    out_dir: str = "./out"
    seed: int | None = None
    workers: int = 4
    verbose: bool = False
    schema: GraphSchema = field(default_factory=GraphSchema)
    ccm: CcmSpec = field(default_factory=CcmSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def require_seed(self) -> int:
        if self.seed is None:
            raise UsageError("a seed is required (--seed or 'seed' in the config file)")
        return self.seed

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {
    "schema": GraphSchema,
    "ccm": CcmSpec,
    "train": TrainConfig,
    "analysis": AnalysisConfig,
    "synth": SynthConfig,
}


def _build(cls, data: dict[str, Any]):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(data)
    if cls is AnalysisConfig and "classifier_hidden" in kwargs:
        kwargs["classifier_hidden"] = tuple(kwargs["classifier_hidden"])
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any], base: PipelineConfig | None = None) -> PipelineConfig:
    """Merge a (possibly partial) dict over defaults or over an existing config."""
    merged = (base or PipelineConfig()).to_dict()
    for key, value in data.items():
        if key in _NESTED and isinstance(value, dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    nested = {key: _build(cls, merged.pop(key)) for key, cls in _NESTED.items()}
    return _build(PipelineConfig, {**merged, **nested})


def load_config(path: str) -> PipelineConfig:
    """Load a JSON config file, merging it over the defaults."""
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return config_from_dict(data)


def save_config(config: PipelineConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def config_hash(config: PipelineConfig) -> str:
    data = config.to_dict()
    data.pop("out_dir", None)
    data.pop("verbose", None)
    data.pop("workers", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
