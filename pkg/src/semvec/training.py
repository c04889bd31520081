"""Supervised equivalence-class training.

Every expression is labeled with its equivalence class; the model scores
each class by an inner product with a trainable prototype plus bias, and a
max-margin hinge pushes the true class above the best wrong one.  EqNet
adds the subexpression-autoencoder penalty, weighted per nonleaf node and
ramped in over epochs by μ(t) = 1 − 10^(−νt).  A size curriculum grows the
admitted tree size per epoch; minibatches are rebuilt as batched DAGs, a
global-norm clip bounds each aggregated batch gradient, and RMSProp with
momentum takes one step per batch.  The checkpoint with the best
validation score₅ is kept.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import evaluation, ndiff
from .datagen import Dataset
from .expr import Expr, nonleaf_nodes, parse
from .models import EqNet, ForwardDag, GruEncoder, new_model
from .ndiff import Tensor, clip_global_norm, rmsprop_momentum_step


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; hyperparameters or data are pathological."""


@dataclass
class TrainConfig:
    """Flat bundle of every training knob; defaults are the reference
    EqNet hyperparameters."""

    model: str = "eqnet"
    lr: float = 10 ** -2.1
    rho: float = 0.88
    momentum: float = 0.88
    batch_size: int = 900
    dim: int = 64
    code_dim: int = 8
    kappa: float = 0.61
    clip: float = 1.82
    init_std: float = 10 ** -2.05
    dropout: float = 0.11
    hidden: int = 8
    nu: float = 4.0
    curriculum_start: float | None = 6.96
    curriculum_step: float = 2.72
    margin: float = 0.5
    epochs: int = 30
    seed: int = 0
    emb_dim: int = 128
    combine_activation: str = "sigmoid"
    exact_noise: bool = True
    check_unit_norm: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(obj) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**obj)


# Reference hyperparameter rows per model; epochs are a budget knob.
PRESETS: dict[str, TrainConfig] = {
    "eqnet": TrainConfig(),
    "treenn1": TrainConfig(
        model="treenn1",
        lr=10 ** -3.5,
        rho=0.6,
        momentum=0.01,
        batch_size=650,
        clip=3.6,
        init_std=10 ** -1.28,
        dropout=0.0,
        nu=0.0,
        curriculum_start=2.8,
        curriculum_step=2.4,
        margin=2.41,
    ),
    "treenn2": TrainConfig(
        model="treenn2",
        lr=10 ** -3.5,
        rho=0.9,
        momentum=0.95,
        batch_size=1000,
        clip=5.0,
        init_std=10 ** -4,
        dropout=0.0,
        hidden=16,
        nu=0.0,
        curriculum_start=6.5,
        curriculum_step=2.25,
        margin=0.62,
    ),
    "gru": TrainConfig(
        model="gru",
        lr=10 ** -2.31,
        rho=0.90,
        momentum=0.66,
        batch_size=100,
        clip=0.87,
        emb_dim=128,
        init_std=10 ** -1.0,
        dropout=0.26,
        nu=0.0,
        curriculum_start=None,
        curriculum_step=0.0,
        margin=0.5,
    ),
}


def preset(model: str, **overrides) -> TrainConfig:
    if model not in PRESETS:
        raise ValueError(f"no preset for model {model!r}")
    return replace(PRESETS[model], **overrides)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    hinge: float
    subexpae: float
    mu: float
    valid_score5: float
    norm_dev: float = 0.0


def mu_schedule(t: int, nu: float) -> float:
    """μ = 1 − 10^(−νt); zero at t=0 so early epochs skip the autoencoder."""
    if t < 0 or nu < 0:
        raise ValueError("t and nu must be non-negative")
    return 1.0 - 10.0 ** (-nu * t)


def curriculum_filter(records: list, epoch: int, start: float | None, step: float):
    """Keep records with tree size ≤ ⌊start + epoch·step⌋.

    ``records`` items expose ``.size`` (or are (expr, ...) tuples with
    expr.size).  With no threshold everything passes; an empty result
    falls back to the smallest size present.
    """
    if start is None:
        return list(records)
    limit = math.floor(start + epoch * step)

    def size_of(r):
        return r[0].size if isinstance(r, tuple) else r.size

    kept = [r for r in records if size_of(r) <= limit]
    if kept:
        return kept
    smallest = min(size_of(r) for r in records)
    return [r for r in records if size_of(r) == smallest]


def class_logits(r: np.ndarray, prototypes: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """logit_j = rᵀq_j + b_j (plain numpy, used by tests and inference)."""
    return prototypes @ r + biases


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def margin_loss(logits: np.ndarray, true_class: int, m: float) -> float:
    """max(0, logit_{j*} − logit_i + m) with j* the best wrong class."""
    if logits.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    masked = logits.astype(np.float64).copy()
    masked[true_class] = -np.inf
    jstar = int(masked.argmax())
    return max(0.0, float(logits[jstar] - logits[true_class] + m))


def _hinge_graph(logits: Tensor, true_idx: np.ndarray, m: float) -> tuple[Tensor, float]:
    """Mean hinge over the batch as a graph node.

    The active set and each column's strongest wrong class are decided
    from forward values; the graph part is then linear in the logits (a
    constant ±1 selection mask), which is exactly the hinge subgradient.
    """
    vals = logits.data
    b = vals.shape[1]
    cols = np.arange(b)
    masked = vals.astype(np.float64).copy()
    masked[true_idx, cols] = -np.inf
    jstar = masked.argmax(axis=0)
    slack = vals[jstar, cols].astype(np.float64) - vals[true_idx, cols] + m
    active = slack > 0
    sel = np.zeros_like(vals)
    sel[jstar[active], cols[active]] = 1.0
    sel[true_idx[active], cols[active]] = -1.0
    n_active = int(active.sum())
    graph = ndiff.add_const(
        ndiff.scale(ndiff.sum_all(ndiff.mask(logits, sel)), 1.0 / b), m * n_active / b
    )
    return graph, float(np.maximum(slack, 0.0).mean())


def _ae_weights(dag: ForwardDag, exprs: list[Expr]) -> np.ndarray:
    """Per unique nonleaf node: Σ_T mult_T(n) / (|Q_T|·B).

    Batching evaluates each unique subtree once, so per-tree autoencoder
    sums become weighted sums over unique nodes; the weights reproduce the
    mean over trees of the per-tree mean over nonleaf nodes.
    """
    w = np.zeros(len(dag.nodes))
    b = len(exprs)
    for e in exprs:
        q = nonleaf_nodes(e)
        if not q:
            continue
        share = 1.0 / (len(q) * b)
        for node in q:
            w[dag.index[node]] += share
    return w


def build_batch_loss(
    model,
    exprs: list[Expr],
    class_idx: np.ndarray,
    mu: float,
    m: float,
    rng: np.random.Generator | None,
    train: bool = True,
    check_unit_norm: bool = False,
) -> tuple[Tensor, dict]:
    """Scalar mean loss over one minibatch, plus forward-value statistics."""
    stats = {"hinge": 0.0, "subexpae": 0.0, "norm_dev": 0.0}
    if isinstance(model, GruEncoder):
        reps = model.reps_block(exprs, train, rng)
        logits = model.logits_block(reps)
        loss, stats["hinge"] = _hinge_graph(logits, class_idx, m)
        return loss, stats

    dag = ForwardDag(exprs, model)
    nodes = dag.run(model, train, rng)
    if check_unit_norm and isinstance(model, EqNet):
        norms = np.sqrt((nodes.data.astype(np.float64) ** 2).sum(axis=0))
        stats["norm_dev"] = float(np.abs(norms - 1.0).max())
    reps = ndiff.take_cols(nodes, dag.roots)
    logits = model.logits_block(reps)
    loss, stats["hinge"] = _hinge_graph(logits, class_idx, m)

    if isinstance(model, EqNet) and dag.nonleaf_groups:
        w0 = _ae_weights(dag, exprs)
        ae_stat = 0.0
        terms = [loss]
        for opname, idxs, kid_arrays in dag.nonleaf_groups:
            x = ndiff.concat([ndiff.take_cols(nodes, kidx) for kidx in kid_arrays])
            parent = ndiff.take_cols(nodes, idxs)
            losses = model.ae_loss_block(opname, x, parent, rng, train)
            ae_stat += float(losses.data @ w0[idxs])
            if mu > 0:
                terms.append(ndiff.sum_all(ndiff.mask(losses, w0[idxs] * mu)))
        stats["subexpae"] = ae_stat
        if len(terms) > 1:
            loss = ndiff.addn(terms)
    return loss, stats


def expression_loss(
    model,
    e: Expr,
    class_idx: int,
    mu: float,
    m: float,
    rng: np.random.Generator | None,
    train: bool = True,
) -> Tensor:
    """Single-expression total loss (hinge + μ-weighted autoencoder mean)."""
    loss, _ = build_batch_loss(model, [e], np.asarray([class_idx]), mu, m, rng, train)
    return loss


def _validation_score(model, train_pairs, valid_pairs, k: int = 5) -> float:
    if not valid_pairs:
        return float("nan")
    exprs = [e for e, _ in train_pairs] + [e for e, _ in valid_pairs]
    classes = [c for _, c in train_pairs] + [c for _, c in valid_pairs]
    vecs = model.encode_many(exprs)
    pool = evaluation.EmbeddingPool(
        ids=[f"x{i}" for i in range(len(exprs))], classes=classes, vectors=vecs
    )
    q_idx = list(range(len(train_pairs), len(exprs)))
    return float(np.mean([evaluation.knn_score(pool, i, k) for i in q_idx]))


def train(dataset: Dataset, config: TrainConfig, log=None) -> tuple[object, list[EpochStats]]:
    """Full training loop; returns the best-validation model and history."""
    spec = dataset.spec
    train_pairs = [
        (parse(r.expr, spec.domain), r.class_id) for r in dataset.by_split("train")
    ]
    valid_pairs = [
        (parse(r.expr, spec.domain), r.class_id) for r in dataset.by_split("valid")
    ]
    if not train_pairs:
        raise ValueError("dataset has no train split")
    classes = sorted({c for _, c in train_pairs})
    if len(classes) < 2:
        raise ValueError("need at least 2 classes to train")

    hyper = _model_hyper(config)
    model = new_model(config.model, spec.domain, spec.operators, spec.variables, seed=config.seed, **hyper)
    model.attach_classes(classes, np.random.default_rng(config.seed ^ 0x51DE), config.init_std)
    cidx = model.class_index
    labeled = [(e, cidx[c]) for e, c in train_pairs if c in cidx]

    rng = np.random.default_rng((config.seed ^ 0xDA7A) & ((1 << 63) - 1))
    history: list[EpochStats] = []
    best_score = -1.0
    best_params: dict[str, np.ndarray] | None = None
    is_eqnet = isinstance(model, EqNet)

    for t in range(config.epochs):
        mu = mu_schedule(t, config.nu) if is_eqnet else 0.0
        pool = curriculum_filter(labeled, t, config.curriculum_start, config.curriculum_step)
        order = rng.permutation(len(pool))
        epoch_loss = epoch_hinge = epoch_ae = 0.0
        norm_dev = 0.0
        seen = 0
        for lo in range(0, len(order), config.batch_size):
            chunk = [pool[i] for i in order[lo : lo + config.batch_size]]
            exprs = [e for e, _ in chunk]
            idx = np.asarray([i for _, i in chunk], dtype=np.intp)
            model.store.zero_grads()
            try:
                loss, stats = build_batch_loss(
                    model, exprs, idx, mu, config.margin, rng,
                    train=True, check_unit_norm=config.check_unit_norm,
                )
                val = loss.item()
            except FloatingPointError as exc:
                raise TrainingDiverged(f"numeric failure at epoch {t}: {exc}") from exc
            if not math.isfinite(val):
                raise TrainingDiverged(f"non-finite loss at epoch {t}")
            ndiff.backward(loss)
            grads = model.store.grads()
            clip_global_norm(grads, config.clip)
            rmsprop_momentum_step(model.store, grads, config.lr, config.rho, config.momentum)
            n = len(chunk)
            epoch_loss += val * n
            epoch_hinge += stats["hinge"] * n
            epoch_ae += stats["subexpae"] * n
            norm_dev = max(norm_dev, stats["norm_dev"])
            seen += n
        score = _validation_score(model, train_pairs, valid_pairs)
        history.append(
            EpochStats(
                epoch=t,
                loss=epoch_loss / max(seen, 1),
                hinge=epoch_hinge / max(seen, 1),
                subexpae=epoch_ae / max(seen, 1),
                mu=mu,
                valid_score5=score,
                norm_dev=norm_dev,
            )
        )
        if log:
            h = history[-1]
            log(
                f"epoch {t}: loss={h.loss:.4f} hinge={h.hinge:.4f} "
                f"subexpae={h.subexpae:.4f} mu={h.mu:.4f} valid_score5={h.valid_score5:.4f}"
            )
        if math.isfinite(score) and score > best_score:
            best_score = score
            best_params = {k: v.data.copy() for k, v in model.store.params.items()}

    if best_params is not None:
        for k, v in best_params.items():
            model.store.params[k].data = v
    return model, history


def _model_hyper(config: TrainConfig) -> dict:
    if config.model == "eqnet":
        return {
            "dim": config.dim,
            "hidden": config.hidden,
            "code_dim": config.code_dim,
            "kappa": config.kappa,
            "dropout": config.dropout,
            "init_std": config.init_std,
            "combine_activation": config.combine_activation,
            "exact_noise": config.exact_noise,
        }
    if config.model in ("treenn1", "treenn2"):
        return {
            "dim": config.dim,
            "hidden": config.hidden,
            "dropout": config.dropout,
            "init_std": config.init_std,
        }
    if config.model == "gru":
        return {
            "dim": config.dim,
            "emb_dim": config.emb_dim,
            "dropout": config.dropout,
            "init_std": config.init_std,
        }
    raise ValueError(f"unknown model kind {config.model!r}")


def write_history(history: list[EpochStats], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "hinge", "subexpae", "mu", "valid_score5"])
        for h in history:
            w.writerow([h.epoch, f"{h.loss:.6f}", f"{h.hinge:.6f}", f"{h.subexpae:.6f}", f"{h.mu:.6f}", f"{h.valid_score5:.6f}"])
