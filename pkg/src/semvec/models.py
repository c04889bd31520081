"""Expression encoders producing semantic vectors.

Four neural encoders share one recursion scheme (vector per node, built
bottom-up) and differ in their Combine step:

* ``EqNet``: two-layer Combine with a residual linear path and output ℓ₂
  normalization, trained with a subexpression denoising autoencoder.
* ``TreeNN`` (1- or 2-layer): plain tanh MLP Combine, no normalization.
* ``GruEncoder``: a GRU over the printed token sequence.
* ``TfIdf``: order-blind token counts weighted by smoothed idf.

All training-time forward passes run batched: :class:`ForwardDag` merges a
batch of trees into one DAG of unique subtrees (exhaustive datasets share
subtrees heavily) and evaluates each unique node exactly once, grouping
nodes of the same operator into single matrix ops.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import ndiff
from .expr import Domain, Expr, domain_tokens, print_infix, tokenize
from .ndiff import ParamStore, Tensor


class ModelError(ValueError):
    pass


def _rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & ((1 << 63) - 1))


class TreeEncoder:
    """Shared recursion for the tree-structured models.

    Subclasses provide ``leaf_block`` and ``combine_block`` over column
    batches; everything here is written once against those two hooks.
    """

    kind = "tree"

    def __init__(self, domain: Domain, operators: tuple[str, ...], variables: tuple[str, ...], dim: int):
        self.domain = domain
        self.operators = tuple(operators)
        self.variables = tuple(variables)
        self.var_index = {v: i for i, v in enumerate(variables)}
        self.dim = dim
        self.arity = {name: domain.operators[name].arity for name in operators}
        self.store: ParamStore
        self.classes: list[str] = []
        self.class_index: dict[str, int] = {}

    # -- hooks ------------------------------------------------------------
    def leaf_block(self, idx: np.ndarray, train: bool, rng: np.random.Generator | None) -> Tensor:
        raise NotImplementedError

    def combine_block(self, op: str, x: Tensor, train: bool, rng: np.random.Generator | None) -> Tensor:
        raise NotImplementedError

    # -- class head --------------------------------------------------------
    def attach_classes(self, class_ids: list[str], rng: np.random.Generator, std: float) -> None:
        """Create one prototype row and bias per equivalence class."""
        self.classes = list(class_ids)
        self.class_index = {c: i for i, c in enumerate(self.classes)}
        self.store.create("Q", (len(self.classes), self.dim), std, rng)
        self.store.create("b", (len(self.classes),), std, rng)

    def logits_block(self, reps: Tensor) -> Tensor:
        return ndiff.add_bias(ndiff.matmul(self.store["Q"], reps), self.store["b"])

    # -- inference ----------------------------------------------------------
    def encode_many(self, exprs: list[Expr]) -> np.ndarray:
        """Evaluation-mode embeddings, one row per expression."""
        dag = ForwardDag(exprs, self)
        nodes = dag.run(self, train=False, rng=None)
        return nodes.data[:, dag.roots].T.copy()

    def encode(self, e: Expr) -> np.ndarray:
        return self.encode_many([e])[0]

    def node_vectors(self, e: Expr) -> list[tuple[Expr, np.ndarray]]:
        """Embedding of every subtree (unique subtrees once, post-order)."""
        dag = ForwardDag([e], self)
        nodes = dag.run(self, train=False, rng=None)
        return [(n, nodes.data[:, i].copy()) for i, n in enumerate(dag.nodes)]

    # -- persistence ---------------------------------------------------------
    def hyper(self) -> dict:
        raise NotImplementedError

    def save(self, path: str, extra: dict | None = None) -> None:
        self.store.save(
            path,
            meta={
                "kind": self.kind,
                "domain": self.domain.value,
                "operators": list(self.operators),
                "variables": list(self.variables),
                "hyper": self.hyper(),
                "classes": self.classes,
                **(extra or {}),
            },
        )


class EqNet(TreeEncoder):
    """Residual-normalized Combine plus subexpression autoencoder params.

    Combine: l̄₀ = concat(children); l̄₁ = σ(W_i·l̄₀);
    l̄_out = W_o0·l̄₀ + W_o1·l̄₁; output l̄_out/‖l̄_out‖₂.  Leaves look up a
    learned embedding, normalized on every use.
    """

    kind = "eqnet"

    def __init__(
        self,
        domain: Domain,
        operators: tuple[str, ...],
        variables: tuple[str, ...],
        dim: int = 64,
        hidden: int = 8,
        code_dim: int = 8,
        kappa: float = 0.61,
        dropout: float = 0.11,
        init_std: float = 10 ** -2.05,
        combine_activation: str = "sigmoid",
        exact_noise: bool = True,
        seed: int = 0,
        store: ParamStore | None = None,
        dtype=np.float32,
    ):
        super().__init__(domain, operators, variables, dim)
        self.hidden = hidden
        self.code_dim = code_dim
        self.kappa = kappa
        self.dropout = dropout
        self.init_std = init_std
        self.combine_activation = combine_activation
        self.exact_noise = exact_noise
        self.kmax = max(self.arity.values(), default=1)
        if store is not None:
            self.store = store
            return
        self.store = ParamStore(dtype=dtype)
        rng = _rng_for(seed)
        self.store.create("C", (dim, len(variables)), init_std, rng)
        for name in self.operators:
            k = self.arity[name]
            self.store.create(f"Wi:{name}", (hidden, k * dim), init_std, rng)
            self.store.create(f"Wo0:{name}", (dim, k * dim), init_std, rng)
            self.store.create(f"Wo1:{name}", (dim, hidden), init_std, rng)
            self.store.create(f"We:{name}", (code_dim, (k + 1) * dim), init_std, rng)
        self.store.create("Wd", (self.kmax * dim, code_dim), init_std, rng)

    def hyper(self) -> dict:
        return {
            "dim": self.dim,
            "hidden": self.hidden,
            "code_dim": self.code_dim,
            "kappa": self.kappa,
            "dropout": self.dropout,
            "init_std": self.init_std,
            "combine_activation": self.combine_activation,
            "exact_noise": self.exact_noise,
        }

    def _act(self, x: Tensor) -> Tensor:
        return ndiff.sigmoid(x) if self.combine_activation == "sigmoid" else ndiff.tanh(x)

    def leaf_block(self, idx, train, rng) -> Tensor:
        return ndiff.l2_normalize(ndiff.take_cols(self.store["C"], idx))

    def combine_linear(self, op: str, x: Tensor, train: bool, rng) -> Tensor:
        """Pre-normalization Combine output (the residual two-layer sum)."""
        l1 = self._act(ndiff.matmul(self.store[f"Wi:{op}"], x))
        if train and self.dropout > 0:
            l1 = ndiff.mask(l1, ndiff.dropout_mask(l1.data.shape, self.dropout, rng, l1.data.dtype))
        return ndiff.add(ndiff.matmul(self.store[f"Wo0:{op}"], x), ndiff.matmul(self.store[f"Wo1:{op}"], l1))

    def combine_block(self, op: str, x: Tensor, train: bool, rng) -> Tensor:
        return ndiff.l2_normalize(self.combine_linear(op, x, train, rng))

    def ae_loss_block(self, op: str, x: Tensor, parent: Tensor, rng, train: bool = True) -> Tensor:
        """Denoising-autoencoder loss per column: −(x̃ᵀx + r̃_pᵀr_p).

        The concatenated (parent, children) tuple is masked by binary
        noise, squeezed through the M-dim encoder/decoder, rescaled to the
        clean children's norm, and re-combined; reconstruction quality is
        measured by inner products against the clean vectors.
        """
        k = self.arity[op]
        inp = ndiff.concat([parent, x])
        noise = ndiff.binary_noise_mask(
            inp.data.shape, self.kappa if train else 0.0, rng, self.exact_noise, inp.data.dtype
        )
        code = ndiff.tanh(ndiff.matmul(self.store[f"We:{op}"], ndiff.mask(inp, noise)))
        dec = ndiff.tanh(ndiff.matmul(ndiff.rows(self.store["Wd"], 0, k * self.dim), code))
        xt = ndiff.colscale(dec, ndiff.sdiv(ndiff.norm0(x), ndiff.norm0(dec)))
        rp = self.combine_block(op, xt, train, rng)
        return ndiff.scale(ndiff.add(ndiff.dot(xt, x), ndiff.dot(rp, parent)), -1.0)


class TreeNN(TreeEncoder):
    """Plain tanh Combine, one or two layers, unnormalized output."""

    def __init__(
        self,
        domain: Domain,
        operators: tuple[str, ...],
        variables: tuple[str, ...],
        dim: int = 64,
        layers: int = 1,
        hidden: int = 16,
        dropout: float = 0.0,
        init_std: float = 10 ** -1.28,
        seed: int = 0,
        store: ParamStore | None = None,
        dtype=np.float32,
    ):
        super().__init__(domain, operators, variables, dim)
        if layers not in (1, 2):
            raise ModelError("TreeNN supports 1 or 2 layers")
        self.layers = layers
        self.hidden = hidden
        self.dropout = dropout
        self.init_std = init_std
        self.kind = f"treenn{layers}"
        if store is not None:
            self.store = store
            return
        self.store = ParamStore(dtype=dtype)
        rng = _rng_for(seed)
        self.store.create("C", (dim, len(variables)), init_std, rng)
        for name in self.operators:
            k = self.arity[name]
            if layers == 1:
                self.store.create(f"W1:{name}", (dim, k * dim), init_std, rng)
            else:
                self.store.create(f"W1:{name}", (hidden, k * dim), init_std, rng)
                self.store.create(f"W2:{name}", (dim, hidden), init_std, rng)

    def hyper(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "hidden": self.hidden,
            "dropout": self.dropout,
            "init_std": self.init_std,
        }

    def leaf_block(self, idx, train, rng) -> Tensor:
        return ndiff.take_cols(self.store["C"], idx)

    def combine_block(self, op: str, x: Tensor, train: bool, rng) -> Tensor:
        h = ndiff.tanh(ndiff.matmul(self.store[f"W1:{op}"], x))
        if self.layers == 1:
            return h
        if train and self.dropout > 0:
            h = ndiff.mask(h, ndiff.dropout_mask(h.data.shape, self.dropout, rng, h.data.dtype))
        return ndiff.tanh(ndiff.matmul(self.store[f"W2:{op}"], h))


class ForwardDag:
    """One evaluation plan for a batch of trees.

    Unique subtrees are indexed once (ordered by size, then printed text,
    so children always precede parents) and grouped per size band by
    operator; running the plan evaluates each group as a single matrix op
    and returns the ``(dim, n_nodes)`` matrix of all node vectors.
    """

    def __init__(self, exprs: list[Expr], model: TreeEncoder):
        uniq: dict[Expr, None] = {}

        def walk(e: Expr) -> None:
            if e in uniq:
                return
            for c in e.children:
                walk(c)
            uniq[e] = None

        for e in exprs:
            walk(e)
        self.nodes = sorted(uniq, key=lambda e: (e.size, print_infix(e)))
        self.index = {e: i for i, e in enumerate(self.nodes)}
        self.roots = np.asarray([self.index[e] for e in exprs], dtype=np.intp)

        # Size bands: list of (band_nodes, op → (local positions, child index arrays)).
        self.bands: list[tuple[int, list[tuple[str, np.ndarray, list[np.ndarray]]]]] = []
        self.leaf_idx: np.ndarray | None = None
        start = 0
        while start < len(self.nodes):
            s = self.nodes[start].size
            stop = start
            while stop < len(self.nodes) and self.nodes[stop].size == s:
                stop += 1
            band = self.nodes[start:stop]
            if s == 1:
                for e in band:
                    if e.label not in model.var_index:
                        raise ModelError(f"unknown variable {e.label!r}")
                self.leaf_idx = np.asarray([model.var_index[e.label] for e in band], dtype=np.intp)
            else:
                groups: dict[str, list[int]] = {}
                for local, e in enumerate(band):
                    if e.label not in model.arity:
                        raise ModelError(f"unknown operator {e.label!r}")
                    groups.setdefault(e.label, []).append(local)
                plan = []
                for opname in sorted(groups):
                    locals_ = np.asarray(groups[opname], dtype=np.intp)
                    k = model.arity[opname]
                    kids = [
                        np.asarray(
                            [self.index[band[l].children[c]] for l in locals_], dtype=np.intp
                        )
                        for c in range(k)
                    ]
                    plan.append((opname, locals_, kids))
                self.bands.append((stop - start, plan))
            start = stop

        # Every nonleaf unique node grouped by operator, with global indices,
        # for the autoencoder terms.
        non: dict[str, list[int]] = {}
        for i, e in enumerate(self.nodes):
            if not e.is_leaf:
                non.setdefault(e.label, []).append(i)
        self.nonleaf_groups = [
            (
                opname,
                np.asarray(idxs, dtype=np.intp),
                [
                    np.asarray([self.index[self.nodes[i].children[c]] for i in idxs], dtype=np.intp)
                    for c in range(model.arity[opname])
                ],
            )
            for opname, idxs in sorted(non.items())
        ]

    def run(self, model: TreeEncoder, train: bool, rng) -> Tensor:
        if self.leaf_idx is None:
            raise ModelError("no leaves to evaluate")
        cur = model.leaf_block(self.leaf_idx, train, rng)
        for width, plan in self.bands:
            pieces = []
            for opname, locals_, kids in plan:
                x = ndiff.concat([ndiff.take_cols(cur, kidx) for kidx in kids])
                pieces.append((model.combine_block(opname, x, train, rng), locals_))
            band = pieces[0][0] if len(pieces) == 1 and len(pieces[0][1]) == width else ndiff.scatter_cols(pieces, width)
            cur = ndiff.hconcat([cur, band])
        return cur


class GruEncoder:
    """GRU over the printed token sequence; the final hidden state is the
    expression vector (unnormalized)."""

    kind = "gru"

    def __init__(
        self,
        domain: Domain,
        operators: tuple[str, ...],
        variables: tuple[str, ...],
        dim: int = 64,
        emb_dim: int = 128,
        dropout: float = 0.26,
        init_std: float = 10 ** -1.0,
        seed: int = 0,
        store: ParamStore | None = None,
        dtype=np.float32,
    ):
        self.domain = domain
        self.operators = tuple(operators)
        self.variables = tuple(variables)
        self.dim = dim
        self.emb_dim = emb_dim
        self.dropout = dropout
        self.init_std = init_std
        self.vocab = domain_tokens(domain, self.variables)
        self.tok_index = {t: i for i, t in enumerate(self.vocab)}
        self.classes: list[str] = []
        self.class_index: dict[str, int] = {}
        if store is not None:
            self.store = store
            return
        self.store = ParamStore(dtype=dtype)
        rng = _rng_for(seed)
        self.store.create("E", (emb_dim, len(self.vocab)), init_std, rng)
        for gate in ("z", "r", "h"):
            self.store.create(f"W{gate}", (dim, emb_dim), init_std, rng)
            self.store.create(f"U{gate}", (dim, dim), init_std, rng)
            self.store.create(f"b{gate}", (dim,), init_std, rng)

    def hyper(self) -> dict:
        return {
            "dim": self.dim,
            "emb_dim": self.emb_dim,
            "dropout": self.dropout,
            "init_std": self.init_std,
        }

    def attach_classes(self, class_ids: list[str], rng: np.random.Generator, std: float) -> None:
        self.classes = list(class_ids)
        self.class_index = {c: i for i, c in enumerate(self.classes)}
        self.store.create("Q", (len(self.classes), self.dim), std, rng)
        self.store.create("b", (len(self.classes),), std, rng)

    def logits_block(self, reps: Tensor) -> Tensor:
        return ndiff.add_bias(ndiff.matmul(self.store["Q"], reps), self.store["b"])

    def token_ids(self, e: Expr) -> list[int]:
        try:
            return [self.tok_index[t] for t in tokenize(e)]
        except KeyError as exc:
            raise ModelError(f"unknown token {exc.args[0]!r}") from None

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        """One GRU update: z,r gates then candidate, h' = (1−z)h + z·h̃."""
        s = self.store
        z = ndiff.sigmoid(ndiff.add_bias(ndiff.add(ndiff.matmul(s["Wz"], x), ndiff.matmul(s["Uz"], h)), s["bz"]))
        r = ndiff.sigmoid(ndiff.add_bias(ndiff.add(ndiff.matmul(s["Wr"], x), ndiff.matmul(s["Ur"], h)), s["br"]))
        cand = ndiff.tanh(
            ndiff.add_bias(ndiff.add(ndiff.matmul(s["Wh"], x), ndiff.matmul(s["Uh"], ndiff.mul(r, h))), s["bh"])
        )
        ones = ndiff.constant(np.ones_like(z.data), dtype=z.data.dtype)
        return ndiff.add(ndiff.mul(ndiff.sub(ones, z), h), ndiff.mul(z, cand))

    def encode_tokens_block(self, token_cols: np.ndarray, train: bool, rng) -> Tensor:
        """Run a batch of equal-length sequences; token_cols is (T, n)."""
        steps, n = token_cols.shape
        dtype = self.store["E"].data.dtype
        h: Tensor = ndiff.constant(np.zeros((self.dim, n)), dtype=dtype)
        for t in range(steps):
            x = ndiff.take_cols(self.store["E"], token_cols[t])
            if train and self.dropout > 0:
                x = ndiff.mask(x, ndiff.dropout_mask(x.data.shape, self.dropout, rng, dtype))
            h = self.step(x, h)
        return h

    def reps_block(self, exprs: list[Expr], train: bool, rng) -> Tensor:
        """Vectors for a mixed-length batch: group by length, scatter back."""
        seqs = [self.token_ids(e) for e in exprs]
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(seqs):
            by_len.setdefault(len(s), []).append(i)
        pieces = []
        for ln in sorted(by_len):
            members = by_len[ln]
            cols = np.asarray([seqs[i] for i in members], dtype=np.intp).T
            pieces.append((self.encode_tokens_block(cols, train, rng), np.asarray(members, dtype=np.intp)))
        if len(pieces) == 1:
            return pieces[0][0]
        return ndiff.scatter_cols(pieces, len(exprs))

    def encode_many(self, exprs: list[Expr]) -> np.ndarray:
        return self.reps_block(exprs, train=False, rng=None).data.T.copy()

    def encode(self, e: Expr) -> np.ndarray:
        return self.encode_many([e])[0]

    def node_vectors(self, e: Expr) -> list[tuple[Expr, np.ndarray]]:
        subs: dict[Expr, None] = {}

        def walk(n: Expr) -> None:
            for c in n.children:
                walk(c)
            subs.setdefault(n)

        walk(e)
        nodes = list(subs)
        vecs = self.encode_many(nodes)
        return list(zip(nodes, vecs))

    def save(self, path: str, extra: dict | None = None) -> None:
        self.store.save(
            path,
            meta={
                "kind": self.kind,
                "domain": self.domain.value,
                "operators": list(self.operators),
                "variables": list(self.variables),
                "hyper": self.hyper(),
                "classes": self.classes,
                **(extra or {}),
            },
        )


class TfIdf:
    """Order-blind token-count baseline weighted by smoothed idf.

    idf = ln((1+N)/(1+df)) + 1 over training documents; tokens never seen
    in training fall back to the df=0 weight.  Vectors are dense over the
    domain vocabulary plus one unseen slot and compare by cosine.
    """

    kind = "tfidf"

    def __init__(self, domain: Domain, variables: tuple[str, ...]):
        self.domain = domain
        self.variables = tuple(variables)
        self.vocab = domain_tokens(domain, self.variables)
        self.tok_index = {t: i for i, t in enumerate(self.vocab)}
        self.idf: np.ndarray | None = None
        self.unseen_idf: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.vocab) + 1

    def fit(self, exprs: list[Expr]) -> "TfIdf":
        n_docs = len(exprs)
        df = np.zeros(len(self.vocab))
        for e in exprs:
            for tok in set(tokenize(e)):
                df[self.tok_index[tok]] += 1
        self.idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        self.unseen_idf = math.log(1.0 + n_docs) + 1.0
        return self

    def encode(self, e: Expr) -> np.ndarray:
        if self.idf is None:
            raise ModelError("TfIdf model is not fitted")
        vec = np.zeros(self.dim)
        for tok in tokenize(e):
            i = self.tok_index.get(tok)
            if i is None:
                vec[-1] += self.unseen_idf
            else:
                vec[i] += self.idf[i]
        return vec

    def encode_many(self, exprs: list[Expr]) -> np.ndarray:
        return np.stack([self.encode(e) for e in exprs])

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "domain": self.domain.value,
            "variables": list(self.variables),
            "idf": None if self.idf is None else self.idf.tolist(),
            "unseen_idf": self.unseen_idf,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TfIdf":
        m = cls(Domain.from_name(obj["domain"]), tuple(obj["variables"]))
        if obj.get("idf") is not None:
            m.idf = np.asarray(obj["idf"])
            m.unseen_idf = float(obj["unseen_idf"])
        return m


MODEL_KINDS = ("eqnet", "treenn1", "treenn2", "gru")


def new_model(
    kind: str,
    domain: Domain,
    operators: tuple[str, ...],
    variables: tuple[str, ...],
    seed: int = 0,
    dtype=np.float32,
    **hyper,
):
    """Construct an untrained encoder of the given kind."""
    if kind == "eqnet":
        return EqNet(domain, operators, variables, seed=seed, dtype=dtype, **hyper)
    if kind == "treenn1":
        return TreeNN(domain, operators, variables, layers=1, seed=seed, dtype=dtype, **hyper)
    if kind == "treenn2":
        return TreeNN(domain, operators, variables, layers=2, seed=seed, dtype=dtype, **hyper)
    if kind == "gru":
        return GruEncoder(domain, operators, variables, seed=seed, dtype=dtype, **hyper)
    raise ModelError(f"unknown model kind {kind!r}")


def load_model(path: str):
    """Rebuild a trained encoder from a checkpoint file."""
    store, meta = ParamStore.load(path)
    kind = meta["kind"]
    domain = Domain.from_name(meta["domain"])
    operators = tuple(meta["operators"])
    variables = tuple(meta["variables"])
    hyper = meta.get("hyper", {})
    if kind == "eqnet":
        model = EqNet(domain, operators, variables, store=store, **hyper)
    elif kind in ("treenn1", "treenn2"):
        hyper = {k: v for k, v in hyper.items() if k != "layers"}
        model = TreeNN(domain, operators, variables, layers=int(kind[-1]), store=store, **hyper)
    elif kind == "gru":
        model = GruEncoder(domain, operators, variables, store=store, **hyper)
    else:
        raise ModelError(f"unknown checkpoint kind {kind!r}")
    model.classes = list(meta.get("classes", []))
    model.class_index = {c: i for i, c in enumerate(model.classes)}
    return model
