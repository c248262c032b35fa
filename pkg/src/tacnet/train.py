"""Meta-training of the embedder and reference vectors.

Each episode: run the clustering loop (its projection bases are treated as
constants during backpropagation), score the embedded queries against the
projected references, and take one Adam step on the query cross-entropy.
Gradients therefore reach the embedder through the projected queries and the
references directly; support/unlabeled embeddings steer the loss only through
the (non-differentiated) projection.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .embedder import Embedder, EmbedderConfig, OptimizerState, adam_step, load_checkpoint, save_checkpoint
from .episodes import Dataset, EpisodeSpec, LabelSplit, STRUCTURED, UNEVEN, make_label_split, sample_episode
from .errors import InvalidSpecError
from .projection import EUCLIDEAN, ProjectionSpace, ReferenceSet, SQUARED_EUCLIDEAN
from .seeding import derive_seed
from .tac import TAC, TACDAP, TacConfig, TacState, VARIANTS, run_tac_embedded

PROB_FLOOR = 1e-12

_SUPERVISED_TRAIN_VARIANTS = ("tapnet_baseline", "semi_sup_inference")


@dataclass
class TrainConfig:
    """Flat harness configuration; every field is a config-file key."""

    seed: int = 0
    variant: str = TAC
    distance: str = SQUARED_EUCLIDEAN
    cluster_in_embedding_space: bool = False
    train_iterations: int = 1
    eval_iterations: int = 4
    way_count: int = 5
    shots: int = 1
    queries_per_class: int = 15
    train_mode: str = STRUCTURED
    train_unlabeled_per_class: int = 5
    train_distractor_classes: int = 0
    train_distractor_per_class: int = 0
    train_unlabeled_total: int = 50
    train_distractor_fraction: float = 0.5
    val_mode: str = STRUCTURED
    val_unlabeled_per_class: int = 20
    val_distractor_classes: int = 0
    val_distractor_per_class: int = 0
    val_unlabeled_total: int = 200
    val_distractor_fraction: float = 0.5
    labeled_fraction: float = 0.4
    hidden_dims: tuple = (64, 64)
    output_dim: int = 64
    activation: str = "relu"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    total_episodes: int = 2000
    validation_period: int = 500
    validation_episodes: int = 200
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidSpecError(f"variant must be one of {VARIANTS}")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.output_dim <= self.way_count + 1:
            raise InvalidSpecError(
                "output_dim must exceed way_count + 1 so the null space is non-empty"
            )
        if min(self.total_episodes, self.validation_period, self.validation_episodes) < 1:
            raise InvalidSpecError("episode counts must be positive")

    def tac_config(self) -> TacConfig:
        return TacConfig(
            variant=self.variant,
            train_iterations=self.train_iterations,
            eval_iterations=self.eval_iterations,
            distance=self.distance,
            cluster_in_embedding_space=self.cluster_in_embedding_space,
        )

    def embedder_config(self, input_dim: int, seed: int) -> EmbedderConfig:
        return EmbedderConfig(
            input_dim=input_dim,
            hidden_dims=self.hidden_dims,
            output_dim=self.output_dim,
            activation=self.activation,
            seed=seed,
        )

    def episode_spec(self, phase: str) -> EpisodeSpec:
        """Episode composition for phase 'train' or 'val'."""
        if phase == "train":
            mode, u, ndc, dpc = (self.train_mode, self.train_unlabeled_per_class,
                                 self.train_distractor_classes, self.train_distractor_per_class)
            total, frac = self.train_unlabeled_total, self.train_distractor_fraction
        else:
            mode, u, ndc, dpc = (self.val_mode, self.val_unlabeled_per_class,
                                 self.val_distractor_classes, self.val_distractor_per_class)
            total, frac = self.val_unlabeled_total, self.val_distractor_fraction
        common = dict(way_count=self.way_count, shots=self.shots,
                      queries_per_class=self.queries_per_class)
        if mode == UNEVEN:
            return EpisodeSpec.uneven_from_total(total, frac, **common)
        return EpisodeSpec(mode=STRUCTURED, unlabeled_per_class=u,
                           distractor_classes=ndc, distractor_per_class=dpc, **common)

    def to_mapping(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden_dims"] = list(self.hidden_dims)
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise InvalidSpecError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)


def init_references(way_count: int, dim: int, seed: int, includes_distractor: bool) -> ReferenceSet:
    rows = way_count + (1 if includes_distractor else 0)
    rng = np.random.default_rng(seed)
    refs = rng.normal(0.0, 1.0, size=(rows, dim)) / np.sqrt(dim)
    return ReferenceSet(refs=refs, includes_distractor=includes_distractor)


def episode_loss_and_grads(
    embedder: Embedder,
    refs: ReferenceSet,
    episode,
    cfg: TacConfig,
    iterations: int,
    projection: ProjectionSpace | None = None,
) -> tuple:
    """Query cross-entropy with gradients for [weights..., biases..., refs].

    ``projection`` overrides the clustering run with a fixed basis; the
    finite-difference tests use it to freeze the stop-gradient boundary.
    Returns (loss, grads, state-or-None, query probabilities).
    """
    state: TacState | None = None
    if projection is None:
        z_s = embedder.embed(episode.support_x)
        if cfg.variant == "tapnet_baseline" or episode.unlabeled_x.shape[0] == 0:
            z_u = np.zeros((0, refs.dim))
        else:
            z_u = embedder.embed(episode.unlabeled_x)
        state = run_tac_embedded(z_s, episode.support_y, z_u, refs, cfg, iterations)
        basis = state.projection.basis
    else:
        basis = projection.basis

    z_q, cache = embedder.forward(episode.query_x)
    n = refs.n_classes
    u = z_q @ basis
    v = refs.class_rows() @ basis
    diff = u[:, None, :] - v[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    if cfg.distance == EUCLIDEAN:
        d = np.sqrt(d)
    d_min = d.min(axis=1, keepdims=True)
    p = np.exp(d_min - d)
    p /= p.sum(axis=1, keepdims=True)

    y = np.asarray(episode.query_y)
    nq = y.shape[0]
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(nq), y], PROB_FLOOR))))

    g = p.copy()
    g[np.arange(nq), y] -= 1.0
    g /= nq
    if cfg.distance == SQUARED_EUCLIDEAN:
        # Row sums of g vanish, so the u_i * sum_l g_il term drops.
        du = 2.0 * (g @ v)
        dv = 2.0 * (g.T @ u - v * g.sum(axis=0)[:, None])
    else:
        w = g / np.maximum(d, PROB_FLOOR)
        du = (w @ v) - u * w.sum(axis=1)[:, None]
        dv = (w.T @ u) - v * w.sum(axis=0)[:, None]

    d_refs = np.zeros_like(refs.refs)
    d_refs[:n] = dv @ basis.T
    emb_grads = embedder.backward(cache, du @ basis.T)
    grads = [*emb_grads.weights, *emb_grads.biases, d_refs]
    return loss, grads, state, p


@dataclass
class TrainResult:
    embedder: Embedder
    refs: ReferenceSet
    optimizer: OptimizerState
    config: TrainConfig
    log: list = field(default_factory=list)
    best_validation_accuracy: float | None = None
    best_episode: int | None = None
    label_split: LabelSplit | None = None
    best_embedder: Embedder | None = None
    best_refs: ReferenceSet | None = None

    def best_model(self) -> tuple:
        """The best-validation snapshot, falling back to the final state."""
        if self.best_embedder is None:
            return self.embedder, self.refs
        return self.best_embedder, self.best_refs


def save_model(path, result_or_parts, header_extra: dict | None = None) -> None:
    """Write the full model checkpoint: embedder + optimizer + references."""
    r = result_or_parts
    cfg_map = r.config.to_mapping()
    # the output path is runtime plumbing; keeping it would make otherwise
    # identical checkpoints differ byte-wise across directories
    cfg_map["checkpoint_path"] = None
    extra_header = {
        "includes_distractor": r.refs.includes_distractor,
        "train_config": cfg_map,
        "best_validation_accuracy": r.best_validation_accuracy,
        "best_episode": r.best_episode,
    }
    if header_extra:
        extra_header.update(header_extra)
    save_checkpoint(path, r.embedder, r.optimizer,
                    extra_arrays={"refs": r.refs.refs}, extra_header=extra_header)


def load_model(path) -> tuple:
    """Returns (embedder, refs, optimizer_state, train_config, header)."""
    embedder, state, extra, header = load_checkpoint(path)
    meta = header.get("extra", {})
    refs = ReferenceSet(
        refs=extra["refs"], includes_distractor=bool(meta.get("includes_distractor", False))
    )
    cfg = TrainConfig.from_mapping(meta["train_config"]) if "train_config" in meta else None
    return embedder, refs, state, cfg, header


def train(ds: Dataset, cfg: TrainConfig) -> TrainResult:
    """Episodic meta-training; returns the final model plus the training log.

    Validation runs every ``validation_period`` episodes and at the end; the
    best-validation model is written to ``checkpoint_path`` as it improves,
    so an aborted run leaves the last good checkpoint on disk.  The episode
    binds classes to reference rows in episode-local order.
    """
    from .evaluate import evaluate  # local import, avoids a cycle

    root = np.random.SeedSequence(cfg.seed)
    init_ss, train_ss, val_ss, split_ss = root.spawn(4)
    emb_seed, refs_seed = (int(s) for s in init_ss.generate_state(2, dtype=np.uint64))
    train_base = int(train_ss.generate_state(1, dtype=np.uint64)[0])
    val_base = int(val_ss.generate_state(1, dtype=np.uint64)[0])

    split = make_label_split(ds, cfg.labeled_fraction,
                             int(split_ss.generate_state(1, dtype=np.uint64)[0]))
    embedder = Embedder.initialize(cfg.embedder_config(ds.input_dim, emb_seed))
    refs = init_references(cfg.way_count, cfg.output_dim, refs_seed,
                           includes_distractor=(cfg.variant == TACDAP))
    params = [*embedder.parameters(), refs.refs]
    optimizer = OptimizerState.for_params(
        params, learning_rate=cfg.learning_rate,
        beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps,
    )

    tac_cfg = cfg.tac_config()
    train_spec = cfg.episode_spec("train")
    if cfg.variant in _SUPERVISED_TRAIN_VARIANTS:
        # These baselines are meta-trained on purely supervised episodes.
        train_spec = dataclasses.replace(
            train_spec, mode=STRUCTURED, unlabeled_per_class=0,
            distractor_classes=0, distractor_per_class=0,
            total_candidate_unlabeled=0, total_distractor=0,
        )
    train_iters = 0 if cfg.variant in _SUPERVISED_TRAIN_VARIANTS else cfg.train_iterations

    result = TrainResult(embedder=embedder, refs=refs, optimizer=optimizer,
                         config=cfg, label_split=split)

    def validate(episode_idx: int) -> None:
        report = evaluate(
            embedder, refs, ds, split, cfg.episode_spec("val"), tac_cfg,
            episode_count=cfg.validation_episodes, seed=val_base,
            dataset_split="validation", record_trace=False,
        )
        acc = report.mean_accuracy
        result.log.append({"episode": episode_idx, "validation_accuracy": acc})
        if result.best_validation_accuracy is None or acc > result.best_validation_accuracy:
            result.best_validation_accuracy = acc
            result.best_episode = episode_idx
            result.best_embedder = embedder.clone()
            result.best_refs = ReferenceSet(refs.refs.copy(), refs.includes_distractor)
            if cfg.checkpoint_path:
                save_model(cfg.checkpoint_path, result)

    for i in range(cfg.total_episodes):
        spec_i = train_spec.with_seed(derive_seed(train_base, i))
        episode = sample_episode(ds, split, spec_i, "train")
        loss, grads, _, _ = episode_loss_and_grads(
            embedder, refs, episode, tac_cfg, train_iters
        )
        adam_step(params, grads, optimizer)
        result.log.append({"episode": i, "loss": loss})
        if (i + 1) % cfg.validation_period == 0 or i + 1 == cfg.total_episodes:
            validate(i)

    if cfg.checkpoint_path and result.best_validation_accuracy is None:
        save_model(cfg.checkpoint_path, result)
    return result
