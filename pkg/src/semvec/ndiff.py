"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap numpy arrays and remember how they were produced; each op
records an exact vector-Jacobian product closure, and :func:`backward`
replays them in reverse topological order.  Conventions:

* Axis 0 is the feature axis.  Every op accepts a single vector ``(d,)``
  or a column batch ``(d, n)`` where each column is an independent
  instance, so model code is written once and runs batched.
* Training runs in float32; gradient checks build the same graphs in
  float64 (the dtype follows the inputs).
* Graphs are rebuilt per minibatch; nothing is retained between calls.

The parameter side lives in :class:`ParamStore` (named tensors plus
RMSProp accumulators) with :func:`clip_global_norm` and
:func:`rmsprop_momentum_step` operating on plain gradient dicts.
"""

from __future__ import annotations

import json

import numpy as np

CHECK_FINITE = False


def _chk(a: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite value produced by an op")
    return a


class Tensor:
    """Array node in a dynamically built computation graph."""

    __slots__ = ("data", "parents", "_vjp", "grad", "name")

    def __init__(self, data, parents=(), vjp=None, name: str | None = None):
        self.data = np.asarray(data)
        self.parents = parents
        self._vjp = vjp
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype})"


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def constant(data, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable tensor."""
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


# ---------------------------------------------------------------------------
# Ops.  Each returns a fresh Tensor whose vjp closure adds into parent.grad.


def matmul(w: Tensor, x: Tensor) -> Tensor:
    """``w @ x`` with w ``(m, d)`` and x ``(d,)`` or ``(d, n)``."""
    if w.data.ndim != 2 or w.data.shape[1] != x.data.shape[0]:
        raise ValueError(f"matmul shape mismatch {w.data.shape} @ {x.data.shape}")
    out = Tensor(_chk(w.data @ x.data), (w, x))

    def vjp(g):
        if x.data.ndim == 1:
            _acc(w, np.outer(g, x.data))
        else:
            _acc(w, g @ x.data.T)
        _acc(x, w.data.T @ g)

    out._vjp = vjp
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(_chk(a.data + b.data), (a, b))

    def vjp(g):
        _acc(a, g)
        _acc(b, g)

    out._vjp = vjp
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(_chk(a.data - b.data), (a, b))

    def vjp(g):
        _acc(a, g)
        _acc(b, -g)

    out._vjp = vjp
    return out


def addn(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ValueError("addn of nothing")
    out = Tensor(_chk(sum(x.data for x in xs)), tuple(xs))

    def vjp(g):
        for x in xs:
            _acc(x, g)

    out._vjp = vjp
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a ``(m,)`` bias to every column of ``(m, n)`` (or to ``(m,)``)."""
    if b.data.ndim != 1 or x.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"bias shape mismatch {x.data.shape} + {b.data.shape}")
    bb = b.data if x.data.ndim == 1 else b.data[:, None]
    out = Tensor(_chk(x.data + bb), (x, b))

    def vjp(g):
        _acc(x, g)
        _acc(b, g if g.ndim == 1 else g.sum(axis=1))

    out._vjp = vjp
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(_chk(x.data * c), (x,))

    def vjp(g):
        _acc(x, g * c)

    out._vjp = vjp
    return out


def add_const(x: Tensor, c) -> Tensor:
    out = Tensor(_chk(x.data + np.asarray(c, dtype=x.data.dtype)), (x,))

    def vjp(g):
        _acc(x, g)

    out._vjp = vjp
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(_chk(a.data * b.data), (a, b))

    def vjp(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    out._vjp = vjp
    return out


def mask(x: Tensor, m: np.ndarray) -> Tensor:
    """Elementwise multiply by a constant (no gradient to the mask)."""
    m = np.asarray(m, dtype=x.data.dtype)
    if m.shape != x.data.shape:
        raise ValueError(f"mask shape mismatch {x.data.shape} vs {m.shape}")
    out = Tensor(_chk(x.data * m), (x,))

    def vjp(g):
        _acc(x, g * m)

    out._vjp = vjp
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(_chk(y), (x,))

    def vjp(g):
        _acc(x, g * (1.0 - y * y))

    out._vjp = vjp
    return out


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(_chk(y), (x,))

    def vjp(g):
        _acc(x, g * y * (1.0 - y))

    out._vjp = vjp
    return out


def concat(xs: list[Tensor]) -> Tensor:
    """Concatenate along axis 0 (features)."""
    if not xs:
        raise ValueError("concat of nothing")
    out = Tensor(_chk(np.concatenate([x.data for x in xs], axis=0)), tuple(xs))
    sizes = [x.data.shape[0] for x in xs]

    def vjp(g):
        off = 0
        for x, s in zip(xs, sizes):
            _acc(x, g[off : off + s])
            off += s

    out._vjp = vjp
    return out


def hconcat(xs: list[Tensor]) -> Tensor:
    """Concatenate along axis 1 (columns)."""
    if not xs:
        raise ValueError("hconcat of nothing")
    out = Tensor(_chk(np.concatenate([x.data for x in xs], axis=1)), tuple(xs))
    widths = [x.data.shape[1] for x in xs]

    def vjp(g):
        off = 0
        for x, w in zip(xs, widths):
            _acc(x, g[:, off : off + w])
            off += w

    out._vjp = vjp
    return out


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice axis 0; inverse of concat."""
    out = Tensor(x.data[start:stop].copy(), (x,))

    def vjp(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[start:stop] += g

    out._vjp = vjp
    return out


def take_cols(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather columns by constant index; repeated indices allowed."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(x.data[:, idx], (x,))

    def vjp(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (slice(None), idx), g)

    out._vjp = vjp
    return out


def scatter_cols(pieces: list[tuple[Tensor, np.ndarray]], width: int) -> Tensor:
    """Assemble a ``(d, width)`` matrix from column blocks.

    Each piece places its columns at the given indices; the caller must
    cover every output column exactly once.
    """
    d = pieces[0][0].data.shape[0]
    dtype = pieces[0][0].data.dtype
    data = np.empty((d, width), dtype=dtype)
    cover = 0
    for t, idx in pieces:
        data[:, idx] = t.data
        cover += len(idx)
    if cover != width:
        raise ValueError(f"scatter_cols covered {cover} of {width} columns")
    out = Tensor(_chk(data), tuple(t for t, _ in pieces))

    def vjp(g):
        for t, idx in pieces:
            _acc(t, g[:, idx])

    out._vjp = vjp
    return out


def sum0(x: Tensor) -> Tensor:
    """Sum over axis 0: ``(d, n)`` → ``(n,)``, ``(d,)`` → scalar."""
    out = Tensor(_chk(x.data.sum(axis=0)), (x,))

    def vjp(g):
        _acc(x, np.broadcast_to(g, x.data.shape))

    out._vjp = vjp
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(_chk(np.asarray(x.data.sum())), (x,))

    def vjp(g):
        _acc(x, np.broadcast_to(g, x.data.shape))

    out._vjp = vjp
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Columnwise inner product: ``(d,)``→scalar, ``(d, n)``→``(n,)``."""
    return sum0(mul(a, b))


def norm0(x: Tensor, min_norm: float = 1e-12) -> Tensor:
    """ℓ₂ norm per column; near-zero columns are an error."""
    n = np.sqrt((x.data * x.data).sum(axis=0))
    if np.any(n < min_norm):
        raise FloatingPointError("norm of a near-zero vector")
    out = Tensor(_chk(n), (x,))

    def vjp(g):
        _acc(x, x.data / n * g)

    out._vjp = vjp
    return out


def l2_normalize(x: Tensor) -> Tensor:
    """x / ‖x‖₂ per column; VJP is (g − (x̂·g)x̂)/‖x‖₂."""
    n = np.sqrt((x.data * x.data).sum(axis=0))
    if np.any(n < 1e-12):
        raise FloatingPointError("l2_normalize of a near-zero vector")
    y = x.data / n
    out = Tensor(_chk(y), (x,))

    def vjp(g):
        proj = (y * g).sum(axis=0)
        _acc(x, (g - y * proj) / n)

    out._vjp = vjp
    return out


def colscale(x: Tensor, s: Tensor) -> Tensor:
    """Scale each column of ``(d, n)`` by s ``(n,)`` (or ``(d,)`` by scalar)."""
    if s.data.ndim + 1 != x.data.ndim and not (x.data.ndim == 1 and s.data.ndim == 0):
        raise ValueError(f"colscale shape mismatch {x.data.shape} by {s.data.shape}")
    out = Tensor(_chk(x.data * s.data), (x, s))

    def vjp(g):
        _acc(x, g * s.data)
        _acc(s, (g * x.data).sum(axis=0) if x.data.ndim == 2 else np.asarray((g * x.data).sum()))

    out._vjp = vjp
    return out


def sdiv(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a / b for same-shaped tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"sdiv shape mismatch {a.data.shape} vs {b.data.shape}")
    y = a.data / b.data
    out = Tensor(_chk(y), (a, b))

    def vjp(g):
        _acc(a, g / b.data)
        _acc(b, -g * y / b.data)

    out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# Initialization and stochastic masks.


def init_gaussian(shape, std: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    if std <= 0:
        raise ValueError("std must be positive")
    return (rng.standard_normal(shape) * std).astype(dtype)


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: keep with prob 1−rate, scale kept by 1/(1−rate)."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0:
        return np.ones(shape, dtype=dtype)
    keep = (rng.random(shape) >= rate).astype(dtype)
    return (keep / (1.0 - rate)).astype(dtype)


def binary_noise_mask(
    shape, kappa: float, rng: np.random.Generator, exact: bool = True, dtype=np.float32
) -> np.ndarray:
    """Denoising mask: fraction κ of each column forced to zero, rest one.

    ``exact`` zeroes exactly ⌊κ·d⌋ positions per column (uniform choice);
    otherwise positions drop i.i.d. with probability κ.  No rescaling.
    """
    if not 0 <= kappa < 1:
        raise ValueError("kappa must be in [0, 1)")
    if kappa == 0:
        return np.ones(shape, dtype=dtype)
    if not exact:
        return (rng.random(shape) >= kappa).astype(dtype)
    if isinstance(shape, int):
        shape = (shape,)
    d = shape[0]
    z = int(kappa * d)
    if len(shape) == 1:
        col = np.ones(d, dtype=dtype)
        col[:z] = 0.0
        return rng.permutation(col)
    base = np.ones((d, shape[1]), dtype=dtype)
    base[:z, :] = 0.0
    return rng.permuted(base, axis=0)


# ---------------------------------------------------------------------------
# Parameters and the optimizer.


class ParamStore:
    """Named parameter tensors plus RMSProp/momentum state."""

    def __init__(self, dtype=np.float32):
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        self.sq: dict[str, np.ndarray] = {}
        self.mom: dict[str, np.ndarray] = {}

    def create(self, name: str, shape, std: float, rng: np.random.Generator) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already exists")
        t = Tensor(init_gaussian(shape, std, rng, self.dtype), name=name)
        self.params[name] = t
        self.sq[name] = np.zeros(shape, dtype=self.dtype)
        self.mom[name] = np.zeros(shape, dtype=self.dtype)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Accumulated gradients; parameters off the graph get zeros."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.params.items()
        }

    def to_json(self) -> dict:
        return {
            "dtype": np.dtype(self.dtype).name,
            "params": {
                name: {"shape": list(t.data.shape), "values": t.data.astype(np.float64).ravel().tolist()}
                for name, t in self.params.items()
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamStore":
        store = cls(dtype=np.dtype(obj.get("dtype", "float32")).type)
        for name, rec in obj["params"].items():
            data = np.asarray(rec["values"], dtype=store.dtype).reshape(rec["shape"])
            store.params[name] = Tensor(data, name=name)
            store.sq[name] = np.zeros(data.shape, dtype=store.dtype)
            store.mom[name] = np.zeros(data.shape, dtype=store.dtype)
        return store

    def save(self, path: str, meta: dict | None = None) -> None:
        payload = {"version": 1, **(meta or {}), "store": self.to_json()}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)

    @classmethod
    def load(cls, path: str) -> tuple["ParamStore", dict]:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        meta = {k: v for k, v in payload.items() if k not in ("store",)}
        return cls.from_json(payload["store"]), meta


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_global_norm(grads: dict[str, np.ndarray], c: float) -> dict[str, np.ndarray]:
    """Scale all gradients by c/‖g‖ when the global ℓ₂ norm exceeds c."""
    if c <= 0:
        raise ValueError("clip norm must be positive")
    norm = global_norm(grads)
    if norm > c:
        factor = c / norm
        for g in grads.values():
            g *= factor
    return grads


def rmsprop_momentum_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    rho: float,
    momentum: float,
    eps: float = 1e-6,
) -> None:
    """s ← ρs + (1−ρ)g²;  v ← momentum·v + lr·g/√(s+ε);  p ← p − v."""
    for name, g in grads.items():
        s = store.sq[name]
        v = store.mom[name]
        s *= rho
        s += (1.0 - rho) * g * g
        v *= momentum
        v += lr * g / np.sqrt(s + eps)
        store.params[name].data -= v
