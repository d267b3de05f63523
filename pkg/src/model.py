"""GCN adversarial autoencoder with a constant-curvature latent prior.

Encoder: two graph convolutions, masked mean-pool, linear head to R^{d+1}.
Decoder: one hidden dense layer, then node features and symmetric edge logits.
Discriminator: two hidden dense layers and a sigmoid score
(1 = prior sample, 0 = encoder output).

Parameters live as float32 (the checkpoint dtype); every forward and
backward pass runs in float64.
"""

import dataclasses
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from src.autodiff import Tensor, as_tensor, parameter
from src.config import CcmSpec, GraphSchema, TrainConfig
from src.errors import CheckFailed, CompatibilityError, DimensionError, EmptyDataset, TrainingDiverged, UsageError
from src.graph import normalize_adjacency, symmetric_target
from src.manifold import manifold_deviation, membership, sample_prior
from src.models import GraphInput, LatentPoint, Reconstruction
from src.optim import Adam
from src.storage import read_blocks, write_blocks

logger = logging.getLogger(__name__)

EPS = 1e-7
GROUPS = ("phi", "theta", "lambda")


@dataclass
class ModelParams:
    phi: dict[str, np.ndarray] = field(default_factory=dict)
    theta: dict[str, np.ndarray] = field(default_factory=dict)
    lambda_: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, name: str) -> dict[str, np.ndarray]:
        if name == "lambda":
            return self.lambda_
        if name in ("phi", "theta"):
            return getattr(self, name)
        raise KeyError(name)

    def blocks(self) -> dict[str, np.ndarray]:
        """Flat view keyed ``group.name``, in a fixed order."""
        return {f"{g}.{name}": value for g in GROUPS for name, value in self.group(g).items()}

    @classmethod
    def from_blocks(cls, blocks: dict[str, np.ndarray]) -> "ModelParams":
        params = cls()
        for key, value in blocks.items():
            group, name = key.split(".", 1)
            params.group(group)[name] = value
        return params

    def copy(self, dtype=None) -> "ModelParams":
        return ModelParams.from_blocks(
            {k: np.array(v, dtype=dtype or v.dtype, copy=True) for k, v in self.blocks().items()}
        )

    @property
    def n_max(self) -> int:
        return math.isqrt(self.theta["W_a"].shape[1])

    @property
    def k(self) -> int:
        return self.theta["W_x"].shape[1] // self.n_max

    @property
    def latent_dim(self) -> int:
        return self.phi["head"].shape[1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def _zeros(size: int) -> np.ndarray:
    return np.zeros(size, dtype=np.float32)


def init_params(n_max: int, k: int, spec: CcmSpec, config: TrainConfig) -> ModelParams:
    """Seeded Glorot-uniform weights; encoder head and discriminator output start small."""
    rng = np.random.default_rng(config.seed)
    dim = spec.ambient_dim
    phi = {
        "W1": _glorot(rng, k, config.h1),
        "W2": _glorot(rng, config.h1, config.h2),
        "head": _glorot(rng, config.h2, dim, gain=0.1),
    }
    theta = {
        "W_h": _glorot(rng, dim, config.h2),
        "b_h": _zeros(config.h2),
        "W_x": _glorot(rng, config.h2, n_max * k),
        "b_x": _zeros(n_max * k),
        "W_a": _glorot(rng, config.h2, n_max * n_max),
        "b_a": _zeros(n_max * n_max),
    }
    lam = {
        "W1": _glorot(rng, dim, config.h_d),
        "b1": _zeros(config.h_d),
        "W2": _glorot(rng, config.h_d, config.h_d),
        "b2": _zeros(config.h_d),
        "W3": _glorot(rng, config.h_d, 1, gain=0.1),
        "b3": _zeros(1),
    }
    return ModelParams(phi=phi, theta=theta, lambda_=lam)


# ── batching ──


@dataclass
class Batch:
    X: np.ndarray  # B×n_max×k
    A_hat: np.ndarray  # B×n_max×n_max
    target: np.ndarray  # B×n_max×n_max
    mask: np.ndarray  # B×n_max, float 0/1

    def __len__(self) -> int:
        return self.X.shape[0]


def stack_batch(graphs: Sequence[GraphInput]) -> Batch:
    if not graphs:
        raise UsageError("batch must not be empty")
    return Batch(
        X=np.stack([g.X for g in graphs]).astype(np.float64),
        A_hat=np.stack([g.A_hat for g in graphs]).astype(np.float64),
        target=np.stack([g.target for g in graphs]).astype(np.float64),
        mask=np.stack([g.mask for g in graphs]).astype(np.float64),
    )


def _tensors(block: dict[str, np.ndarray], trainable: bool) -> dict[str, Tensor]:
    if trainable:
        return {name: parameter(value) for name, value in block.items()}
    return {name: Tensor(value) for name, value in block.items()}


# ── forward ──


def gcn_layer_forward(H, A_hat, W, activation: str = "relu") -> Tensor:
    """activation(Â · H · W); no bias."""
    H, A_hat, W = as_tensor(H), as_tensor(A_hat), as_tensor(W)
    if H.shape[-1] != W.shape[0]:
        raise DimensionError(f"H has {H.shape[-1]} columns but W has {W.shape[0]} rows")
    if A_hat.shape[-1] != H.shape[-2] or A_hat.shape[-2] != A_hat.shape[-1]:
        raise DimensionError(f"Â {A_hat.shape} does not conform with H {H.shape}")
    out = (A_hat @ H) @ W
    if activation == "relu":
        return out.relu()
    if activation == "identity":
        return out
    raise UsageError(f"unknown activation: {activation}")


def _encode(batch: Batch, phi: dict[str, Tensor]) -> Tensor:
    h1 = gcn_layer_forward(batch.X, batch.A_hat, phi["W1"], "relu")
    h2 = gcn_layer_forward(h1, batch.A_hat, phi["W2"], "identity")
    counts = np.maximum(batch.mask.sum(axis=1), 1.0)[:, None]
    pooled = (h2 * batch.mask[:, :, None]).sum(axis=1) / counts
    return pooled @ phi["head"]


def _decode(z: Tensor, theta: dict[str, Tensor], n_max: int, k: int) -> tuple[Tensor, Tensor]:
    hidden = (z @ theta["W_h"] + theta["b_h"]).relu()
    x_hat = (hidden @ theta["W_x"] + theta["b_x"]).reshape(-1, n_max, k)
    raw = (hidden @ theta["W_a"] + theta["b_a"]).reshape(-1, n_max, n_max)
    return x_hat, (raw + raw.mT) * 0.5


def _discriminate(z: Tensor, lam: dict[str, Tensor]) -> Tensor:
    h = (z @ lam["W1"] + lam["b1"]).relu()
    h = (h @ lam["W2"] + lam["b2"]).relu()
    return (h @ lam["W3"] + lam["b3"]).sigmoid().reshape(-1)


def encode(graph: GraphInput, params: ModelParams) -> np.ndarray:
    """Latent point z ∈ R^{d+1} of one graph; unconstrained in ambient space."""
    z = _encode(stack_batch([graph]), _tensors(params.phi, trainable=False))
    return z.data[0]


def decode(z: np.ndarray, params: ModelParams) -> Reconstruction:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (params.theta["W_h"].shape[0],):
        raise DimensionError(f"z must have length {params.theta['W_h'].shape[0]}, got shape {z.shape}")
    x_hat, logits = _decode(Tensor(z[None, :]), _tensors(params.theta, trainable=False), params.n_max, params.k)
    return Reconstruction(X_hat=x_hat.data[0], A_logits=logits.data[0])


def discriminate(z: np.ndarray, params: ModelParams) -> float | np.ndarray:
    """Score in (ε, 1−ε) for one point or a batch of points."""
    z = np.asarray(z, dtype=np.float64)
    scores = _discriminate(Tensor(np.atleast_2d(z)), _tensors(params.lambda_, trainable=False)).data
    scores = np.clip(scores, EPS, 1.0 - EPS)
    return float(scores[0]) if z.ndim == 1 else scores


# ── objectives ──


def _reconstruction(batch: Batch, x_hat: Tensor, logits: Tensor, weight_x: float, weight_a: float) -> Tensor:
    n_real = np.maximum(batch.mask.sum(axis=1), 1.0)
    k = batch.X.shape[2]
    squared = ((x_hat - batch.X).square() * batch.mask[:, :, None]).sum(axis=(1, 2)) / (n_real * k)
    pairs = batch.mask[:, :, None] * batch.mask[:, None, :]
    # softplus(l) - t·l is the binary cross-entropy of sigmoid(l) against t
    bce = ((logits.softplus() - logits * batch.target) * pairs).sum(axis=(1, 2)) / (n_real * n_real)
    return (squared * weight_x + bce * weight_a).mean()


def _dis_loss(p_prior: Tensor, p_enc: Tensor, weight: np.ndarray | float) -> Tensor:
    positive = p_prior.clip(EPS, 1.0 - EPS).log() * weight
    negative = (1.0 - p_enc.clip(EPS, 1.0 - EPS)).log()
    return -(positive + negative).mean()


def _enc_loss(p_enc: Tensor) -> Tensor:
    return -(p_enc.clip(EPS, 1.0 - EPS).log()).mean()


def reconstruction_loss(graph: GraphInput, recon: Reconstruction, weight_x: float = 1.0, weight_a: float = 1.0) -> float:
    """Feature MSE over real rows plus edge BCE over real pairs; padded slots never count."""
    batch = stack_batch([graph])
    loss = _reconstruction(batch, Tensor(recon.X_hat[None]), Tensor(recon.A_logits[None]), weight_x, weight_a)
    return float(loss.data)


def discriminator_loss_from_scores(p_prior, p_enc, weight=1.0) -> float:
    return float(_dis_loss(Tensor(np.atleast_1d(p_prior)), Tensor(np.atleast_1d(p_enc)), weight).data)


def encoder_loss_from_score(p_enc) -> float:
    return float(_enc_loss(Tensor(np.atleast_1d(p_enc))).data)


def discriminator_loss(z_prior: np.ndarray, z_enc: np.ndarray, params: ModelParams, spec: CcmSpec) -> float:
    """−μ(z_prior)·log Dis(z_prior) − log(1 − Dis(z_enc)), averaged over rows."""
    z_prior = np.atleast_2d(np.asarray(z_prior, dtype=np.float64))
    z_enc = np.atleast_2d(np.asarray(z_enc, dtype=np.float64))
    lam = _tensors(params.lambda_, trainable=False)
    weight = np.asarray(membership(z_prior, spec))
    return float(_dis_loss(_discriminate(Tensor(z_prior), lam), _discriminate(Tensor(z_enc), lam), weight).data)


def encoder_adversarial_loss(z_enc: np.ndarray, params: ModelParams) -> float:
    z_enc = np.atleast_2d(np.asarray(z_enc, dtype=np.float64))
    return float(_enc_loss(_discriminate(Tensor(z_enc), _tensors(params.lambda_, trainable=False))).data)


# ── training ──


@dataclass
class TrainState:
    ae: Adam
    dis: Adam
    enc: Adam
    rng: np.random.Generator

    @classmethod
    def create(cls, config: TrainConfig) -> "TrainState":
        return cls(
            ae=Adam(lr=config.lr_ae),
            dis=Adam(lr=config.lr_dis),
            enc=Adam(lr=config.lr_enc),
            rng=np.random.default_rng([config.seed, 1]),
        )


def _step(optimizer: Adam, params: ModelParams, groups: dict[str, dict[str, Tensor]]) -> None:
    flat: dict[str, np.ndarray] = {}
    grads: dict[str, np.ndarray] = {}
    for group, tensors in groups.items():
        store = params.group(group)
        for name, t in tensors.items():
            key = f"{group}.{name}"
            flat[key] = store[name]
            grads[key] = t.grad if t.grad is not None else np.zeros_like(t.data)
    optimizer.step(flat, grads)
    for key, value in flat.items():
        group, name = key.split(".", 1)
        params.group(group)[name] = value


def _guard(loss: Tensor, phase: str, losses: dict[str, float], epoch: int, batch_index: int) -> float:
    value = float(loss.data)
    losses[phase] = value
    if not np.isfinite(value):
        raise TrainingDiverged(epoch, phase, batch_index, losses)
    return value


def train_step(
    batch: Sequence[GraphInput],
    params: ModelParams,
    config: TrainConfig,
    spec: CcmSpec,
    state: TrainState,
    epoch: int = 0,
    batch_index: int = 0,
) -> dict[str, float]:
    """One batch: reconstruction update, then discriminator, then encoder.

    ``params`` is updated in place; returns the loss of each phase that ran.
    """
    b = stack_batch(batch)
    losses: dict[str, float] = {}

    # reconstruction: phi + theta
    phi = _tensors(params.phi, trainable=True)
    theta = _tensors(params.theta, trainable=True)
    x_hat, logits = _decode(_encode(b, phi), theta, params.n_max, params.k)
    loss = _reconstruction(b, x_hat, logits, config.weight_x, config.weight_a)
    _guard(loss, "ae", losses, epoch, batch_index)
    loss.backward()
    _step(state.ae, params, {"phi": phi, "theta": theta})

    if config.baseline_mode:
        return losses

    z_enc = _encode(b, _tensors(params.phi, trainable=False)).data
    z_prior = sample_prior(spec, len(b), state.rng)
    discriminator_update(
        params, z_prior, z_enc, spec, state.dis, guard=lambda loss: _guard(loss, "dis", losses, epoch, batch_index)
    )
    encoder_update(params, b, state.enc, guard=lambda loss: _guard(loss, "enc", losses, epoch, batch_index))
    return losses


def discriminator_update(
    params: ModelParams,
    z_prior: np.ndarray,
    z_enc: np.ndarray,
    spec: CcmSpec,
    optimizer: Adam,
    guard: Callable[[Tensor], float] | None = None,
) -> float:
    """One step on lambda only: prior samples toward 1, encoder outputs toward 0."""
    z_prior = np.atleast_2d(np.asarray(z_prior, dtype=np.float64))
    z_enc = np.atleast_2d(np.asarray(z_enc, dtype=np.float64))
    weight = np.asarray(membership(z_prior, spec))
    lam = _tensors(params.lambda_, trainable=True)
    loss = _dis_loss(_discriminate(Tensor(z_prior), lam), _discriminate(Tensor(z_enc), lam), weight)
    value = guard(loss) if guard else float(loss.data)
    loss.backward()
    _step(optimizer, params, {"lambda": lam})
    return value


def encoder_update(
    params: ModelParams, batch: Batch, optimizer: Adam, guard: Callable[[Tensor], float] | None = None
) -> float:
    """One step on phi only, pushing encoder outputs toward a score of 1 under the frozen discriminator."""
    phi = _tensors(params.phi, trainable=True)
    loss = _enc_loss(_discriminate(_encode(batch, phi), _tensors(params.lambda_, trainable=False)))
    value = guard(loss) if guard else float(loss.data)
    loss.backward()
    _step(optimizer, params, {"phi": phi})
    return value


@dataclass
class EpochRecord:
    epoch: int
    loss_ae: float
    loss_dis: float | None
    loss_enc: float | None
    deviation: float

    def to_row(self) -> str:
        def fmt(value: float | None) -> str:
            return "-" if value is None else f"{value:.6f}"

        return f"{self.epoch}\t{fmt(self.loss_ae)}\t{fmt(self.loss_dis)}\t{fmt(self.loss_enc)}\t{self.deviation:.6f}"


LOG_COLUMNS = ("epoch", "L_AE", "L_Dis", "L_Enc", "deviation")


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochRecord]

    def log_lines(self, header: str) -> list[str]:
        return [header, "\t".join(LOG_COLUMNS)] + [r.to_row() for r in self.history]


def _batches(graphs: Sequence[GraphInput], order: Sequence[int], size: int) -> list[list[GraphInput]]:
    return [[graphs[i] for i in order[start : start + size]] for start in range(0, len(order), size)]


def encode_all(graphs: Sequence[GraphInput], params: ModelParams, batch_size: int = 32) -> np.ndarray:
    """Encoder outputs in stacked chunks of batch_size graphs, shape (N, d+1)."""
    if not graphs:
        return np.zeros((0, params.latent_dim))
    phi = _tensors(params.phi, trainable=False)
    chunks = _batches(graphs, range(len(graphs)), max(1, batch_size))
    return np.concatenate([_encode(stack_batch(chunk), phi).data for chunk in chunks])


def _initial_record(
    graphs: Sequence[GraphInput], params: ModelParams, config: TrainConfig, spec: CcmSpec, rng: np.random.Generator
) -> EpochRecord:
    phi = _tensors(params.phi, trainable=False)
    theta = _tensors(params.theta, trainable=False)
    ae, codes = [], []
    for chunk in _batches(graphs, range(len(graphs)), config.batch_size):
        b = stack_batch(chunk)
        z_chunk = _encode(b, phi)
        x_hat, logits = _decode(z_chunk, theta, params.n_max, params.k)
        ae.append(float(_reconstruction(b, x_hat, logits, config.weight_x, config.weight_a).data))
        codes.append(z_chunk.data)
    z = np.concatenate(codes)
    dis = enc = None
    if not config.baseline_mode:
        z_prior = sample_prior(spec, len(graphs), rng)
        dis = discriminator_loss(z_prior, z, params, spec)
        enc = encoder_adversarial_loss(z, params)
    return EpochRecord(0, float(np.mean(ae)), dis, enc, manifold_deviation(z, spec).mean)


def train(
    graphs: Sequence[GraphInput],
    spec: CcmSpec,
    config: TrainConfig,
    params: ModelParams | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Full training run; a pure function of (graphs, spec, config)."""
    if not graphs:
        raise EmptyDataset("no graphs to train on")
    if params is None:
        params = init_params(len(graphs[0].mask), graphs[0].X.shape[1], spec, config)
    state = TrainState.create(config)

    history = [_initial_record(graphs, params, config, spec, state.rng)]
    if on_epoch:
        on_epoch(history[0])

    for epoch in range(1, config.epochs + 1):
        order = state.rng.permutation(len(graphs))
        sums: dict[str, list[float]] = {"ae": [], "dis": [], "enc": []}
        for batch_index, batch in enumerate(_batches(graphs, order, config.batch_size)):
            losses = train_step(batch, params, config, spec, state, epoch, batch_index)
            for phase, value in losses.items():
                sums[phase].append(value)
        record = EpochRecord(
            epoch=epoch,
            loss_ae=float(np.mean(sums["ae"])),
            loss_dis=float(np.mean(sums["dis"])) if sums["dis"] else None,
            loss_enc=float(np.mean(sums["enc"])) if sums["enc"] else None,
            deviation=manifold_deviation(encode_all(graphs, params, config.batch_size), spec).mean,
        )
        history.append(record)
        logger.debug(f"epoch {epoch}: {record.to_row()}")
        if on_epoch:
            on_epoch(record)
    return TrainResult(params=params, history=history)


def embed_dataset(graphs: Sequence[GraphInput], params: ModelParams, workers: int = 1) -> list[LatentPoint]:
    """One latent point per graph, ordered by (user_id, date) whatever the worker count."""
    ordered = sorted(graphs, key=lambda g: (g.user_id, g.date))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        zs = list(pool.map(lambda g: encode(g, params), ordered))
    return [LatentPoint(z=z, user_id=g.user_id, date=g.date) for g, z in zip(ordered, zs, strict=True)]


# ── checkpoints ──


def save_checkpoint(
    path: str,
    params: ModelParams,
    spec: CcmSpec,
    config: TrainConfig,
    schema: GraphSchema | None = None,
    header: str = "",
) -> None:
    meta = {
        "header": header,
        "spec": dataclasses.asdict(spec),
        "train": dataclasses.asdict(config),
        "schema": dataclasses.asdict(schema) if schema else None,
        "n_max": params.n_max,
        "k": params.k,
    }
    write_blocks(path, params.blocks(), meta)


def load_checkpoint(
    path: str, spec: CcmSpec | None = None, schema: GraphSchema | None = None
) -> tuple[ModelParams, dict]:
    """Load params; a spec or schema that disagrees with the stored one is a CompatibilityError."""
    blocks, meta = read_blocks(path)
    if spec is not None and meta.get("spec") != dataclasses.asdict(spec):
        raise CompatibilityError(f"{path}: trained with CCM spec {meta.get('spec')}, config has {dataclasses.asdict(spec)}")
    if schema is not None and meta.get("schema") not in (None, dataclasses.asdict(schema)):
        raise CompatibilityError(f"{path}: trained with graph schema {meta.get('schema')}")
    params = ModelParams.from_blocks(blocks)
    if schema is not None and (params.n_max, params.k) != (schema.n_max, schema.k):
        raise CompatibilityError(f"{path}: model shapes n_max={params.n_max}, k={params.k} do not fit the schema")
    return params, meta


# ── gradient verification ──


def random_graph_input(n_max: int = 12, k: int = 6, n_real: int | None = None, seed: int = 0) -> GraphInput:
    """Small random graph for gradient checks: dense features, ~30% edge density."""
    rng = np.random.default_rng(seed)
    n = n_max - 2 if n_real is None else n_real
    if not 1 <= n <= n_max:
        raise UsageError(f"n_real must lie in 1..{n_max}")
    A = (rng.random((n, n)) < 0.3).astype(np.int64)
    np.fill_diagonal(A, 0)
    mask = np.zeros(n_max, dtype=bool)
    mask[:n] = True
    X = np.zeros((n_max, k))
    X[:n] = rng.random((n, k))
    return GraphInput(X=X, A_hat=normalize_adjacency(A, mask), target=symmetric_target(A, n_max), mask=mask)


@dataclass
class GradCheckReport:
    errors: dict[str, dict[str, float]] = field(default_factory=dict)  # loss → block → max relative error

    @property
    def max_error(self) -> float:
        return max((e for blocks in self.errors.values() for e in blocks.values()), default=0.0)


LOSS_GROUPS = {
    "reconstruction": ("phi", "theta"),
    "discriminator": ("lambda",),
    "encoder": ("phi",),
}


def _loss_with_grads(
    loss: str,
    params: ModelParams,
    batch: Batch,
    z_prior: np.ndarray,
    config: TrainConfig,
    spec: CcmSpec,
    with_grads: bool,
) -> tuple[float, dict[str, np.ndarray]]:
    trainable = set(LOSS_GROUPS[loss]) if with_grads else set()
    t = {g: _tensors(params.group(g), g in trainable) for g in GROUPS}
    if loss == "reconstruction":
        x_hat, logits = _decode(_encode(batch, t["phi"]), t["theta"], params.n_max, params.k)
        value = _reconstruction(batch, x_hat, logits, config.weight_x, config.weight_a)
    elif loss == "discriminator":
        z_enc = Tensor(_encode(batch, t["phi"]).data)
        weight = np.asarray(membership(z_prior, spec))
        value = _dis_loss(_discriminate(Tensor(z_prior), t["lambda"]), _discriminate(z_enc, t["lambda"]), weight)
    else:
        value = _enc_loss(_discriminate(_encode(batch, t["phi"]), t["lambda"]))
    grads: dict[str, np.ndarray] = {}
    if with_grads:
        value.backward()
        for g in LOSS_GROUPS[loss]:
            for name, tensor in t[g].items():
                grads[f"{g}.{name}"] = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
    return float(value.data), grads


def grad_check(
    params: ModelParams,
    graph: GraphInput,
    spec: CcmSpec,
    config: TrainConfig,
    analytic: Callable[[str, dict[str, np.ndarray]], dict[str, np.ndarray]] | None = None,
    samples_per_block: int = 8,
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences for all three losses.

    Entries are sampled among those whose analytic gradient is within two orders
    of magnitude of the block's largest (all entries if the block's gradient is zero).
    ``analytic`` may rewrite the analytic gradients before comparison.
    Raises CheckFailed on the first block at or above ``tolerance``.
    """
    report = GradCheckReport()
    if not params.blocks():
        return report
    rng = np.random.default_rng(seed)
    work = params.copy(dtype=np.float64)
    batch = stack_batch([graph])
    z_prior = sample_prior(spec, 1, rng)

    for loss in LOSS_GROUPS:
        _, grads = _loss_with_grads(loss, work, batch, z_prior, config, spec, with_grads=True)
        if analytic is not None:
            grads = analytic(loss, grads)
        report.errors[loss] = {}
        for block, grad in grads.items():
            group, name = block.split(".", 1)
            values = work.group(group)[name]
            flat_grad = grad.reshape(-1)
            scale = np.abs(flat_grad).max(initial=0.0)
            candidates = np.flatnonzero(np.abs(flat_grad) >= 1e-2 * scale) if scale > 0 else np.arange(values.size)
            picks = rng.choice(candidates, size=min(samples_per_block, len(candidates)), replace=False)
            worst = 0.0
            for idx in picks:
                pos = np.unravel_index(idx, values.shape)
                original = values[pos]
                values[pos] = original + h
                plus, _ = _loss_with_grads(loss, work, batch, z_prior, config, spec, with_grads=False)
                values[pos] = original - h
                minus, _ = _loss_with_grads(loss, work, batch, z_prior, config, spec, with_grads=False)
                values[pos] = original
                fd = (plus - minus) / (2.0 * h)
                a = float(flat_grad[idx])
                worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
            report.errors[loss][block] = worst
            logger.debug(f"grad_check {loss}/{block}: max relative error {worst:.3e}")
            if worst >= tolerance:
                raise CheckFailed(loss, block, worst)
    return report
