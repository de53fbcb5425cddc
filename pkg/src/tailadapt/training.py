"""Two-phase training pipeline.

Phase A fine-tunes the whole dual encoder contrastively on the long-tailed
train split, which buys overall representation quality but leaves tail
classes under-served. Phase B freezes that backbone and trains only the tiny
residual adapter on class-balanced draws, repairing the tail without
disturbing the head. A single-stage joint mode and a no-training zero-shot
mode exist as baselines.

Everything a run produces is a pure function of (config, seed): parameter
init, batch draws, the warm-start pool, logs, and metrics. Each consumer of
randomness gets its own child stream (see the SEED_* tags) so that, for
example, running Phase B does not disturb how Phase A would have sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .adapter import PLACEMENTS, AdapterParams, adapted_text, adapted_visual
from .autodiff import Graph, Tensor
from .checkpoint import read_arrays, write_arrays
from .contrastive import BatchPair, loss_l2v, loss_v2l
from .data import (
    STRATEGIES,
    LongTailedDataset,
    SamplerState,
    draw_batch,
    read_dataset,
    synth_exponential,
    synth_pareto,
)
from .encoders import (
    SEED_ADAPTER_INIT,
    SEED_DATA,
    SEED_INIT,
    SEED_JOINT_SAMPLER,
    SEED_PHASE_A_SAMPLER,
    SEED_PHASE_B_SAMPLER,
    SEED_WARM_POOL,
    SEED_WARM_SAMPLER,
    ModelConfig,
    ModelParams,
    encode_text,
    encode_visual,
    freeze,
)
from .errors import (
    CheckpointFormatError,
    ConfigurationError,
    DimensionError,
    DivergenceError,
    FreezeViolationError,
    FrozenParameterError,
)
from .evaluation import Metrics, evaluate

MODES = ("two_phase", "phase_a_only", "joint", "zero_shot_baseline")
DATASET_KINDS = ("exponential", "pareto", "file")
DIVERGENCE_CEILING = 1e6

_PLACEMENT_CODES = {"visual": 0.0, "language": 1.0, "both": 2.0}
_CODE_PLACEMENTS = {v: k for k, v in _PLACEMENT_CODES.items()}


# ---- configuration ----------------------------------------------------------


@dataclass
class DatasetSpec:
    """Where the training data comes from: synthesized or read from a file."""

    kind: str = "exponential"
    num_classes: int = 20
    n_max: int = 200
    rho: float = 40.0
    alpha: float = 6.0
    feature_dim: int = 16
    sigma: float = 0.35
    test_per_class: int = 20
    path: str | None = None

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigurationError(
                f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigurationError("dataset kind 'file' needs a path")


@dataclass
class RunConfig:
    """Everything that determines a run, bar nothing."""

    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs_a: int = 50
    epochs_b: int = 10
    batch_size: int = 64
    lr_backbone: float = 0.05
    lr_adapter: float = 0.2
    momentum: float = 0.9
    lam: float = 0.2
    tau: float = 1.0
    placement: str = "visual"
    symmetric_loss: bool = False
    balance_phase_a: bool = False
    balance_phase_b: bool = True
    balance_sampler: str = "class_balanced"
    mode: str = "two_phase"
    seed: int = 0
    warm_start: bool = False
    warm_start_epochs: int = 5
    warm_start_per_class: int = 50
    checkpoint_path: str = "checkpoint.ltck"
    log_path: str = "train_log.jsonl"
    metrics_path: str = "metrics.json"

    def validate(self) -> None:
        self.dataset.validate()
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(
                f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.balance_sampler not in STRATEGIES:
            raise ConfigurationError(
                f"balance_sampler must be one of {STRATEGIES}, got {self.balance_sampler!r}")
        if self.epochs_a < 0 or self.epochs_b < 0 or self.warm_start_epochs < 0:
            raise ConfigurationError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lambda must be in [0, 1], got {self.lam}")
        if self.tau <= 0.0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if self.lr_backbone < 0 or self.lr_adapter < 0:
            raise ConfigurationError("learning rates must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")

    # config files use the key "lambda"; that's a keyword here, hence "lam"
    _KEY_ALIASES = {"lambda": "lam"}

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["lambda"] = raw.pop("lam")
        raw["model"]["hidden"] = list(self.model.hidden)
        del raw["model"]["input_dim"]  # bound from the dataset at run time
        del raw["model"]["num_classes"]
        return raw

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
        # the file spells out "lambda"; the field is "lam" only because of
        # the python keyword
        known = ({f.name for f in cls.__dataclass_fields__.values()} - {"lam"}) | {"lambda"}
        top = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            name = cls._KEY_ALIASES.get(key, key)
            if name == "dataset":
                top[name] = _spec_from_dict(DatasetSpec, value, "dataset")
            elif name == "model":
                spec = _spec_from_dict(ModelConfig, value, "model",
                                       forbidden=("input_dim", "num_classes"))
                spec.hidden = tuple(spec.hidden)
                top[name] = spec
            else:
                top[name] = value
        config = cls(**top)
        config.validate()
        return config


def _spec_from_dict(spec_cls, data, section, forbidden=()):
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section {section!r} must be a mapping")
    known = {f.name for f in spec_cls.__dataclass_fields__.values()}
    for key in data:
        if key in forbidden or key not in known:
            raise ConfigurationError(f"unknown config key {section!r}.{key!r}")
    return spec_cls(**data)


def load_config(path) -> RunConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


# ---- optimizer --------------------------------------------------------------


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from base_lr at step 0 to exactly 0 at total_steps."""
    if total_steps <= 0:
        raise ConfigurationError(f"total_steps must be > 0, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class OptimizerState:
    """Heavy-ball velocity per parameter name."""

    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, named_params) -> "OptimizerState":
        return cls({name: np.zeros_like(t.data) for name, t in named_params})


def sgd_momentum_step(named_params, grads: dict[str, np.ndarray],
                      state: OptimizerState, lr: float, momentum: float) -> None:
    """v <- momentum * v + g; theta <- theta - lr * v, all in place.

    Refuses to touch frozen tensors. An empty parameter list is a no-op.
    """
    for name, t in named_params:
        if t.frozen:
            raise FrozenParameterError(f"cannot update frozen parameter {name!r}")
        g = grads[name]
        if g.shape != t.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} vs parameter {name!r} shape {t.data.shape}")
        v = state.velocity.setdefault(name, np.zeros_like(t.data))
        v *= momentum
        v += g
        t.data -= lr * v


# ---- dataset / parameter construction ---------------------------------------


def build_dataset(config: RunConfig) -> LongTailedDataset:
    spec = config.dataset
    spec.validate()
    if spec.kind == "file":
        return read_dataset(spec.path)
    seed = [config.seed, SEED_DATA]
    if spec.kind == "exponential":
        return synth_exponential(spec.num_classes, spec.n_max, spec.rho,
                                 spec.feature_dim, seed=seed, sigma=spec.sigma,
                                 test_per_class=spec.test_per_class)
    return synth_pareto(spec.num_classes, spec.n_max, spec.alpha,
                        spec.feature_dim, seed=seed, sigma=spec.sigma,
                        test_per_class=spec.test_per_class)


def init_params(config: RunConfig, dataset: LongTailedDataset) -> ModelParams:
    bound = config.model.bound(dataset.feature_dim, dataset.num_classes)
    return ModelParams.init(bound, np.random.default_rng([config.seed, SEED_INIT]))


def _pool_from_means(means: np.ndarray, sigma: float, per_class: int,
                     rng: np.random.Generator) -> LongTailedDataset:
    k, dim = means.shape
    test_per_class = 1  # placeholder split; warm-start logs evaluate elsewhere
    feats, labels = [], []
    for cls in range(k):
        feats.append(means[cls] + sigma * rng.normal(size=(per_class, dim)))
        labels.append(np.full(per_class, cls, dtype=np.int64))
    for cls in range(k):
        feats.append(means[cls] + sigma * rng.normal(size=(test_per_class, dim)))
        labels.append(np.full(test_per_class, cls, dtype=np.int64))
    return LongTailedDataset(np.concatenate(feats), np.concatenate(labels),
                             np.full(k, per_class, dtype=np.int64), test_per_class,
                             class_means=means.copy(), noise_sigma=sigma)


def warm_start(config: RunConfig, dataset: LongTailedDataset | None = None,
               log: list | None = None) -> ModelParams:
    """Initialize the backbone and briefly pre-train it on a balanced pool.

    The pool shares the dataset's class means but uses freshly drawn cluster
    noise, so it overlaps the real train split in distribution, not in rows.
    """
    if dataset is None:
        dataset = build_dataset(config)
    params = init_params(config, dataset)
    if config.warm_start_epochs == 0:
        return params
    if dataset.class_means is not None:
        means, sigma = dataset.class_means, dataset.noise_sigma
    else:
        means, sigma = dataset.empirical_class_means(), config.dataset.sigma
    pool = _pool_from_means(means, sigma, config.warm_start_per_class,
                            np.random.default_rng([config.seed, SEED_WARM_POOL]))
    _train_epochs(
        params, None, pool, config,
        epochs=config.warm_start_epochs,
        strategy="instance",
        sampler_seed=[config.seed, SEED_WARM_SAMPLER],
        groups=[(params.named_parameters(), config.lr_backbone)],
        phase_label="warm",
        log=log,
        eval_dataset=dataset,
    )
    return params


# ---- the epoch engine -------------------------------------------------------


def _steps_per_epoch(n_train: int, batch_size: int) -> int:
    return max(1, math.ceil(n_train / batch_size))


def _train_epochs(backbone, adapter: AdapterParams | None,
                  dataset: LongTailedDataset, config: RunConfig, *,
                  epochs: int, strategy: str, sampler_seed,
                  groups: list[tuple[list, float]], phase_label: str,
                  log: list | None, eval_dataset: LongTailedDataset | None = None) -> None:
    """Shared loop: sample, forward, backward, momentum step, log per epoch.

    `groups` pairs a named-parameter list with its base learning rate; the
    cosine schedule decays each group over this call's own epochs. When
    `adapter` is given, branches it covers go through the blended path.
    """
    if epochs == 0:
        return
    eval_on = dataset if eval_dataset is None else eval_dataset
    sampler = SamplerState.create(strategy, sampler_seed)
    steps = _steps_per_epoch(dataset.n_train, config.batch_size)
    total_steps = epochs * steps
    all_named = [pair for group, _ in groups for pair in group]
    opt = OptimizerState.for_params(all_named)
    trainable_tensors = [t for _, t in all_named]
    done = 0

    for epoch in range(epochs):
        lrs = [cosine_lr(epoch, epochs, base_lr) for _, base_lr in groups]
        losses = np.empty(steps)
        for s in range(steps):
            sampler.set_progress(done / total_steps)
            classes, rows = draw_batch(sampler, dataset, config.batch_size)
            g = Graph()
            x = Tensor(dataset.features[rows])
            if adapter is not None and adapter.adapts_visual:
                v = adapted_visual(g, backbone, adapter, x)
            else:
                v = encode_visual(g, backbone, x)
            if adapter is not None and adapter.adapts_language:
                u = adapted_text(g, backbone, adapter, classes)
            else:
                u = encode_text(g, backbone, classes)
            pair = BatchPair(v, u, config.tau)
            loss = loss_v2l(g, pair)
            if config.symmetric_loss:
                loss = g.add(loss, loss_l2v(g, pair))
            value = float(loss.data)
            if not math.isfinite(value) or value > DIVERGENCE_CEILING:
                raise DivergenceError(
                    f"loss {value} at {phase_label} step {done} (epoch {epoch + 1})")
            g.backward(loss, params=trainable_tensors)
            for (group, _), lr in zip(groups, lrs):
                sgd_momentum_step(group, {n: t.grad for n, t in group}, opt,
                                  lr, config.momentum)
            losses[s] = value
            done += 1
        if log is not None:
            metrics = evaluate(backbone, adapter, eval_on, config.tau)
            log.append({
                "phase": phase_label,
                "epoch": epoch + 1,
                "mean_loss": float(losses.mean()),
                "lr": lrs[0],
                "overall": metrics.overall,
                "many": metrics.many,
                "medium": metrics.medium,
                "few": metrics.few,
            })


# ---- phases -----------------------------------------------------------------


def train_phase_a(config: RunConfig, dataset: LongTailedDataset | None = None,
                  params: ModelParams | None = None) -> tuple[ModelParams, list]:
    """Full-backbone contrastive fine-tuning on the long-tailed split."""
    config.validate()
    if config.mode not in ("two_phase", "phase_a_only"):
        raise ConfigurationError(f"mode {config.mode!r} does not run Phase A")
    if dataset is None:
        dataset = build_dataset(config)
    log: list[dict] = []
    if params is None:
        params = (warm_start(config, dataset, log) if config.warm_start
                  else init_params(config, dataset))
    strategy = config.balance_sampler if config.balance_phase_a else "instance"
    _train_epochs(
        params, None, dataset, config,
        epochs=config.epochs_a,
        strategy=strategy,
        sampler_seed=[config.seed, SEED_PHASE_A_SAMPLER],
        groups=[(params.named_parameters(), config.lr_backbone)],
        phase_label="A",
        log=log,
    )
    return params, log


def train_phase_b(params: ModelParams, config: RunConfig,
                  dataset: LongTailedDataset | None = None) -> tuple[AdapterParams, list]:
    """Adapter-only training on balanced draws over a frozen backbone.

    The backbone digest is checked after training; any drift raises.
    """
    config.validate()
    if dataset is None:
        dataset = build_dataset(config)
    frozen = freeze(params)
    adapter = AdapterParams.init(
        config.model.shared_dim, config.lam, config.placement,
        np.random.default_rng([config.seed, SEED_ADAPTER_INIT]))
    strategy = config.balance_sampler if config.balance_phase_b else "instance"
    log: list[dict] = []
    _train_epochs(
        frozen, adapter, dataset, config,
        epochs=config.epochs_b,
        strategy=strategy,
        sampler_seed=[config.seed, SEED_PHASE_B_SAMPLER],
        groups=[(adapter.named_parameters(), config.lr_adapter)],
        phase_label="B",
        log=log,
    )
    if not frozen.verify():
        raise FreezeViolationError(
            "backbone digest changed during adapter training")
    return adapter, log


def train_joint(config: RunConfig,
                dataset: LongTailedDataset | None = None
                ) -> tuple[ModelParams, AdapterParams, list]:
    """Single-stage baseline: backbone and adapter updated together for
    epochs_a + epochs_b epochs on the Phase-A sampler."""
    config.validate()
    if config.mode != "joint":
        raise ConfigurationError(f"mode {config.mode!r} is not the joint baseline")
    if dataset is None:
        dataset = build_dataset(config)
    log: list[dict] = []
    if config.warm_start:
        params = warm_start(config, dataset, log)
    else:
        params = init_params(config, dataset)
    adapter = AdapterParams.init(
        config.model.shared_dim, config.lam, config.placement,
        np.random.default_rng([config.seed, SEED_ADAPTER_INIT]))
    strategy = config.balance_sampler if config.balance_phase_a else "instance"
    _train_epochs(
        params, adapter, dataset, config,
        epochs=config.epochs_a + config.epochs_b,
        strategy=strategy,
        sampler_seed=[config.seed, SEED_JOINT_SAMPLER],
        groups=[(params.named_parameters(), config.lr_backbone),
                (adapter.named_parameters(), config.lr_adapter)],
        phase_label="joint",
        log=log,
    )
    return params, adapter, log


# ---- runs -------------------------------------------------------------------


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    dataset: LongTailedDataset
    params: ModelParams
    adapter: AdapterParams | None
    log: list
    metrics: Metrics


def run(config: RunConfig) -> RunResult:
    """Execute one full run for the configured mode and evaluate it."""
    config.validate()
    dataset = build_dataset(config)
    if config.mode == "two_phase":
        params, log = train_phase_a(config, dataset)
        adapter, log_b = train_phase_b(params, config, dataset)
        log = log + log_b
    elif config.mode == "phase_a_only":
        params, log = train_phase_a(config, dataset)
        adapter = None
    elif config.mode == "joint":
        params, adapter, log = train_joint(config, dataset)
    elif config.mode == "zero_shot_baseline":
        log = []
        params = (warm_start(config, dataset, log) if config.warm_start
                  else init_params(config, dataset))
        adapter = None
    else:  # unreachable after validate()
        raise ConfigurationError(f"unknown mode {config.mode!r}")
    metrics = evaluate(params, adapter, dataset, config.tau)
    return RunResult(config, dataset, params, adapter, log, metrics)


# ---- checkpoint <-> model ---------------------------------------------------


def save_checkpoint(path, params: ModelParams, adapter: AdapterParams | None = None) -> None:
    arrays = list(params.named_arrays())
    if adapter is not None:
        arrays += [(name, t.data) for name, t in adapter.named_parameters()]
        arrays.append(("adapter/lambda", np.array([adapter.lam])))
        arrays.append(("adapter/placement_code",
                       np.array([_PLACEMENT_CODES[adapter.placement]])))
    write_arrays(path, arrays)


def _require(table: dict, name: str, path) -> np.ndarray:
    if name not in table:
        raise CheckpointFormatError(f"{path}: missing array {name!r}")
    return table[name]


def load_checkpoint(path) -> tuple[ModelParams, AdapterParams | None]:
    arrays = read_arrays(path)
    names = [n for n, _ in arrays]
    if len(set(names)) != len(names):
        raise CheckpointFormatError(f"{path}: duplicate array names")
    table = dict(arrays)

    def layer_stack(prefix: str) -> list[tuple[Tensor, Tensor]]:
        layers = []
        i = 0
        while f"{prefix}/{i}/weight" in table:
            layers.append((Tensor(table[f"{prefix}/{i}/weight"]),
                           Tensor(_require(table, f"{prefix}/{i}/bias", path))))
            i += 1
        if not layers:
            raise CheckpointFormatError(f"{path}: no {prefix} layers")
        return layers

    visual = layer_stack("visual")
    text = layer_stack("text")
    embedding = Tensor(_require(table, "text/class_embedding", path))
    template = Tensor(_require(table, "text/template_embedding", path))
    proj_v = Tensor(_require(table, "proj/visual", path))
    proj_l = Tensor(_require(table, "proj/text", path))
    config = ModelConfig(
        input_dim=visual[0][0].shape[0],
        num_classes=embedding.shape[0],
        hidden=tuple(w.shape[1] for w, _ in visual[:-1]),
        visual_dim=visual[-1][0].shape[1],
        embed_dim=embedding.shape[1],
        text_dim=text[-1][0].shape[1],
        shared_dim=proj_v.shape[1],
        num_templates=template.shape[0],
    )
    params = ModelParams(config, visual, text, embedding, template, proj_v, proj_l)

    adapter = None
    if "adapter/lambda" in table:
        code = float(_require(table, "adapter/placement_code", path)[0])
        if code not in _CODE_PLACEMENTS:
            raise CheckpointFormatError(f"{path}: unknown placement code {code}")
        placement = _CODE_PLACEMENTS[code]
        lam = float(table["adapter/lambda"][0])
        kwargs = {}
        if placement in ("visual", "both"):
            kwargs["visual_weight"] = Tensor(_require(table, "adapter/visual/weight", path))
            kwargs["visual_bias"] = Tensor(_require(table, "adapter/visual/bias", path))
        if placement in ("language", "both"):
            kwargs["language_weight"] = Tensor(_require(table, "adapter/language/weight", path))
            kwargs["language_bias"] = Tensor(_require(table, "adapter/language/bias", path))
        adapter = AdapterParams(lam, placement, **kwargs)
    return params, adapter


def save_run(result: RunResult) -> None:
    """Write checkpoint, per-epoch log, and final metrics to the config paths."""
    config = result.config
    save_checkpoint(config.checkpoint_path, result.params, result.adapter)
    with open(config.log_path, "w") as f:
        for record in result.log:
            f.write(json.dumps(record) + "\n")
    with open(config.metrics_path, "w") as f:
        json.dump(result.metrics.to_record(), f, indent=2)
        f.write("\n")
