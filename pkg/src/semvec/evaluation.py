"""Retrieval-based evaluation of expression embeddings.

The central metric is score_k: the fraction of a query's k nearest
neighbors (cosine, double precision, ties broken by id) that share its
equivalence class, normalized by min(k, class size in the pool).  On top
of it: mean score curves over k=1..15 with trapezoidal AUC,
precision/recall and ROC sweeps over all pool pairs, cross-dataset
transfer evaluation, per-node score trees, and a hand-rolled Jacobi PCA
for 2-D visualization export.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .expr import Expr, print_infix
from .semantics import equiv_key

DEFAULT_KS = tuple(range(1, 16))


class EvalError(ValueError):
    pass


class EmbeddingPool:
    """Immutable set of (id, class, vector) rows with precomputed unit rows."""

    def __init__(self, ids: list[str], classes: list[str], vectors: np.ndarray):
        if len(ids) != len(classes) or len(ids) != vectors.shape[0]:
            raise EvalError("ids, classes, vectors must align")
        if len(set(ids)) != len(ids):
            raise EvalError("pool ids must be unique")
        vectors = np.asarray(vectors, dtype=np.float64)
        if not np.all(np.isfinite(vectors)):
            raise EvalError("pool vectors must be finite")
        self.ids = list(ids)
        self.classes = list(classes)
        self.vectors = vectors
        norms = np.sqrt((vectors * vectors).sum(axis=1))
        safe = np.where(norms > 0, norms, 1.0)
        self.unit = vectors / safe[:, None]
        self._ids_arr = np.asarray(self.ids)
        self._classes_arr = np.asarray(self.classes)
        self._index = {i: n for n, i in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def class_count(self, class_id: str, exclude: int | None = None) -> int:
        n = int((self._classes_arr == class_id).sum())
        if exclude is not None and self.classes[exclude] == class_id:
            n -= 1
        return n


def _ranked(pool: EmbeddingPool, sims: np.ndarray, skip: int | None) -> np.ndarray:
    """Pool indices sorted by (−similarity, id); optionally drop one index."""
    order = np.lexsort((pool._ids_arr, -sims))
    if skip is not None:
        order = order[order != skip]
    return order


def knn_neighbors(pool: EmbeddingPool, query: int, k: int) -> list[int]:
    """Indices of the k nearest pool members, the query itself excluded."""
    if len(pool) - 1 < k:
        raise EvalError(f"pool of {len(pool)} too small for k={k}")
    sims = pool.unit @ pool.unit[query]
    return list(_ranked(pool, sims, skip=query)[:k])


def knn_score(pool: EmbeddingPool, query: int, k: int) -> float:
    """score_k = |N_k(q) ∩ class(q)| / min(k, |class(q)| in pool − q)."""
    neigh = knn_neighbors(pool, query, k)
    c = pool.class_count(pool.classes[query], exclude=query)
    if c == 0:
        return float("nan")
    hits = sum(1 for i in neigh if pool.classes[i] == pool.classes[query])
    return hits / min(k, c)


def score_curve(
    pool: EmbeddingPool, queries: list[int] | None = None, ks: tuple[int, ...] = DEFAULT_KS
) -> list[tuple[int, float]]:
    """Mean score_k per k over queries (pool members; default: all)."""
    if queries is None:
        queries = list(range(len(pool)))
    kmax = max(ks)
    if len(pool) - 1 < kmax:
        raise EvalError(f"pool of {len(pool)} too small for k={kmax}")
    sums = np.zeros(len(ks))
    counts = np.zeros(len(ks))
    for q in queries:
        c = pool.class_count(pool.classes[q], exclude=q)
        if c == 0:
            continue
        sims = pool.unit @ pool.unit[q]
        order = _ranked(pool, sims, skip=q)[:kmax]
        same = pool._classes_arr[order] == pool.classes[q]
        cum = np.cumsum(same)
        for j, k in enumerate(ks):
            sums[j] += cum[k - 1] / min(k, c)
            counts[j] += 1
    if counts[0] == 0:
        raise EvalError("no scorable queries (every query's class is a singleton)")
    means = sums / counts
    return [(k, float(m)) for k, m in zip(ks, means)]


def auc(curve: list[tuple[int, float]]) -> float:
    """Trapezoidal area under (k, score), normalized to [0, 1]."""
    if len(curve) < 2:
        return float(curve[0][1]) if curve else float("nan")
    xs = [p[0] for p in curve]
    ys = [p[1] for p in curve]
    area = sum((ys[i] + ys[i + 1]) / 2.0 * (xs[i + 1] - xs[i]) for i in range(len(xs) - 1))
    return area / (xs[-1] - xs[0])


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fpr: float


def pair_curves(pool: EmbeddingPool) -> list[CurvePoint]:
    """Precision/recall/FPR sweep over all unordered pool pairs.

    Pairs are predicted "same class" when cosine ≥ threshold; one point is
    emitted per distinct observed similarity (ties collapse together).
    """
    n = len(pool)
    if len(set(pool.classes)) < 2:
        raise EvalError("need at least 2 classes for pair curves")
    sims_all = pool.unit @ pool.unit.T
    iu = np.triu_indices(n, k=1)
    sims = sims_all[iu]
    same = pool._classes_arr[iu[0]] == pool._classes_arr[iu[1]]
    order = np.argsort(-sims, kind="stable")
    sims = sims[order]
    same = same[order]
    total_pos = int(same.sum())
    total_neg = len(same) - total_pos
    tp = np.cumsum(same)
    fp = np.cumsum(~same)
    # Group boundaries: last pair of each distinct similarity value.
    boundary = np.nonzero(np.diff(sims) != 0)[0]
    idx = np.concatenate([boundary, [len(sims) - 1]])
    points = []
    for i in idx:
        points.append(
            CurvePoint(
                threshold=float(sims[i]),
                precision=float(tp[i] / (i + 1)),
                recall=float(tp[i] / total_pos) if total_pos else 0.0,
                fpr=float(fp[i] / total_neg) if total_neg else 0.0,
            )
        )
    return points


def pool_from_model(model, exprs: list[Expr], classes: list[str]) -> EmbeddingPool:
    """Embed expressions (eval mode) and wrap them as a pool; ids are the
    printed expressions."""
    vecs = model.encode_many(exprs)
    return EmbeddingPool([print_infix(e) for e in exprs], classes, vecs)


def transfer_eval(
    model,
    dataset,
    splits: tuple[str, ...] = ("seen_test", "unseen_test"),
    ks: tuple[int, ...] = DEFAULT_KS,
) -> list[tuple[int, float]]:
    """Evaluate a model on another dataset's test split (pool = that split).

    The datasets must share domain and variable alphabet, and every
    operator of the target dataset must be known to the model.
    """
    from .datagen import parse_records

    spec = dataset.spec
    if spec.domain is not model.domain:
        raise EvalError(f"domain mismatch: model {model.domain.value}, dataset {spec.domain.value}")
    if tuple(spec.variables) != tuple(model.variables):
        raise EvalError("variable alphabets differ")
    unknown = set(spec.operators) - set(model.operators)
    if unknown:
        raise EvalError(f"operators unknown to the model: {sorted(unknown)}")
    triples = [(e, c) for e, c, s in parse_records(dataset) if s in splits]
    if not triples:
        raise EvalError(f"dataset has no records in splits {splits}")
    pool = pool_from_model(model, [e for e, _ in triples], [c for _, c in triples])
    return score_curve(pool, ks=ks)


def random_baseline(
    pool: EmbeddingPool, ks: tuple[int, ...] = DEFAULT_KS, seed: int = 0
) -> list[tuple[int, float]]:
    """Score curve of i.i.d. Gaussian vectors over the same ids/classes."""
    rng = np.random.default_rng(seed)
    fake = EmbeddingPool(pool.ids, pool.classes, rng.standard_normal(pool.vectors.shape))
    return score_curve(fake, ks=ks)


def knn_score_external(
    pool: EmbeddingPool, vector: np.ndarray, class_id: str, k: int, exclude_id: str | None = None
) -> float:
    """score_k for a query vector that need not be a pool member.

    If ``exclude_id`` names a pool row (the query itself under its printed
    form), that row is removed from both neighbors and the class count.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = math.sqrt(float(v @ v))
    vu = v / norm if norm > 0 else v
    sims = pool.unit @ vu
    skip = pool._index.get(exclude_id) if exclude_id is not None else None
    order = _ranked(pool, sims, skip=skip)[:k]
    c = pool.class_count(class_id, exclude=skip)
    if c == 0:
        return float("nan")
    hits = sum(1 for i in order if pool.classes[i] == class_id)
    return hits / min(k, c)


def per_node_scores(e: Expr, model, pool: EmbeddingPool, k: int = 5) -> dict:
    """score_k for every subtree, as a nested JSON-ready dict."""
    vectors = {n: v for n, v in model.node_vectors(e)}
    order = tuple(model.variables)

    def build(n: Expr) -> dict:
        cid = equiv_key(n, order, model.domain)
        score = knn_score_external(pool, vectors[n], cid, k, exclude_id=print_infix(n))
        return {
            "label": n.label,
            "expr": print_infix(n),
            "score": None if math.isnan(score) else round(score, 6),
            "children": [build(c) for c in n.children],
        }

    return build(e)


# ---------------------------------------------------------------------------
# PCA via cyclic Jacobi.


def jacobi_eigh(a: np.ndarray, max_sweeps: int = 100, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors-as-columns), unsorted.
    """
    a = np.asarray(a, dtype=np.float64).copy()
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-9):
        raise EvalError("jacobi_eigh needs a symmetric square matrix")
    v = np.eye(n)
    base = np.sqrt((a * a).sum())
    for _ in range(max_sweeps):
        off = math.sqrt(float((a * a).sum() - (np.diag(a) ** 2).sum()))
        if off <= tol * max(base, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow; use the 1/(2θ) limit
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def pca_project(vectors: np.ndarray, dims: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centered projection onto the top principal components.

    Sign convention: each component's largest-magnitude entry is positive,
    so projections are reproducible.  Returns (coordinates, eigenvalues
    of all components, descending).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.shape[0] < dims + 1:
        raise EvalError(f"need at least {dims + 1} vectors")
    x = x - x.mean(axis=0)
    cov = (x.T @ x) / max(x.shape[0] - 1, 1)
    vals, vecs = jacobi_eigh(cov)
    order = np.argsort(-vals)
    vals = vals[order]
    vecs = vecs[:, order]
    basis = vecs[:, :dims]
    for j in range(dims):
        i = int(np.abs(basis[:, j]).argmax())
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return x @ basis, vals


# ---------------------------------------------------------------------------
# CSV / JSON writers shared by the CLI and the demo scripts.


def write_score_curve(curve: list[tuple[int, float]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "mean_score"])
        for k, s in curve:
            w.writerow([k, f"{s:.6f}"])


def write_pair_curves(points: list[CurvePoint], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "precision", "recall", "fpr"])
        for p in points:
            w.writerow([f"{p.threshold:.6f}", f"{p.precision:.6f}", f"{p.recall:.6f}", f"{p.fpr:.6f}"])


def write_embeddings(pool: EmbeddingPool, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        dim = pool.vectors.shape[1]
        w.writerow(["id", "class"] + [f"v{i}" for i in range(dim)])
        for i in range(len(pool)):
            w.writerow([pool.ids[i], pool.classes[i]] + [f"{x:.8g}" for x in pool.vectors[i]])


def write_node_scores(tree: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(tree, f, indent=2)
