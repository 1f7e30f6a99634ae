"""Graph attention / graph convolution layers with exact reverse-mode gradients.

Conventions: node features are rows (``h`` is ``n x d``) and a layer weight
``W`` is stored as ``(heads, out, in)`` so that ``W h_i`` is ``h @ W[k].T``.
``A[i, j]`` marks ``j`` as a neighbor of ``i``; attention logits ``e[i, j]``
score how much ``i`` listens to ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .featurize import PAD, GraphTensors


class ShapeMismatch(ValueError):
    pass


class EmptyNeighborhood(ValueError):
    pass


ACTIVATIONS = ("relu", "leaky_relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "GAT" | "GCN"
    in_dim: int
    out_dim: int
    activation: str = "relu"
    slope: float = 0.2
    heads: int = 1
    normalize: bool = False  # GCN only: symmetric degree normalization

    def __post_init__(self):
        if self.kind not in ("GAT", "GCN"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1 or self.heads < 1:
            raise ValueError("layer dims and heads must be >= 1")
        if not 0.0 < self.slope < 1.0:
            raise ValueError("leaky slope must lie in (0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "GCN" and self.heads != 1:
            raise ValueError("GCN layers have a single head")

    @property
    def width(self) -> int:
        """Output width after concatenating heads."""
        return self.out_dim * self.heads

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
            "slope": self.slope,
            "heads": self.heads,
            "normalize": self.normalize,
        }


def make_specs(in_dim: int, hidden: int = 64, depth: int = 2, kind: str = "GAT", heads: int = 1, **kw) -> list[LayerSpec]:
    specs = []
    for _ in range(depth):
        spec = LayerSpec(kind, in_dim, hidden, heads=heads if kind == "GAT" else 1, **kw)
        specs.append(spec)
        in_dim = spec.width
    return specs


@dataclass
class ModelParams:
    W: list[np.ndarray]
    a: list[np.ndarray | None]
    readout_w: np.ndarray
    readout_b: np.ndarray
    embedding: np.ndarray | None = None

    def named(self) -> list[tuple[str, np.ndarray]]:
        """Stable (name, array) listing used by optimizers and checkpoints."""
        out = []
        for i, (w, a) in enumerate(zip(self.W, self.a)):
            out.append((f"layer{i}.W", w))
            if a is not None:
                out.append((f"layer{i}.a", a))
        out.append(("readout.w", self.readout_w))
        out.append(("readout.b", self.readout_b))
        if self.embedding is not None:
            out.append(("embedding", self.embedding))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.W],
            [None if a is None else a.copy() for a in self.a],
            self.readout_w.copy(),
            self.readout_b.copy(),
            None if self.embedding is None else self.embedding.copy(),
        )

    def to_dict(self) -> dict:
        return {name: arr.tolist() for name, arr in self.named()}

    @classmethod
    def from_dict(cls, d: dict, specs: list[LayerSpec]) -> "ModelParams":
        W = [np.asarray(d[f"layer{i}.W"], dtype=float) for i in range(len(specs))]
        a = [np.asarray(d[f"layer{i}.a"], dtype=float) if s.kind == "GAT" else None for i, s in enumerate(specs)]
        emb = np.asarray(d["embedding"], dtype=float) if "embedding" in d else None
        params = cls(W, a, np.asarray(d["readout.w"], dtype=float), np.asarray(d["readout.b"], dtype=float), emb)
        check_params(params, specs)
        return params


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(
    specs: list[LayerSpec],
    rng: np.random.Generator,
    vocab_size: int | None = None,
    embed_dim: int | None = None,
) -> ModelParams:
    W, a = [], []
    for s in specs:
        W.append(_glorot(rng, (s.heads, s.out_dim, s.in_dim), s.in_dim, s.out_dim))
        a.append(_glorot(rng, (s.heads, 2 * s.out_dim), 2 * s.out_dim, 1) if s.kind == "GAT" else None)
    width = specs[-1].width
    readout_w = _glorot(rng, (width,), width, 1)
    emb = None
    if vocab_size is not None:
        dim = embed_dim or specs[0].in_dim
        emb = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(vocab_size, dim))
        emb[PAD] = 0.0
    return ModelParams(W, a, readout_w, np.zeros(1), emb)


def check_params(params: ModelParams, specs: list[LayerSpec]) -> None:
    if len(params.W) != len(specs):
        raise ShapeMismatch(f"{len(params.W)} weight blocks for {len(specs)} layers")
    for i, s in enumerate(specs):
        if params.W[i].shape != (s.heads, s.out_dim, s.in_dim):
            raise ShapeMismatch(f"layer{i}.W has shape {params.W[i].shape}")
        if s.kind == "GAT" and params.a[i].shape != (s.heads, 2 * s.out_dim):
            raise ShapeMismatch(f"layer{i}.a has shape {params.a[i].shape}")
        if i and specs[i - 1].width != s.in_dim:
            raise ShapeMismatch(f"layer{i} expects {s.in_dim} inputs, previous layer gives {specs[i - 1].width}")
    if params.readout_w.shape != (specs[-1].width,):
        raise ShapeMismatch(f"readout.w has shape {params.readout_w.shape}")


# activations

def activate(x: np.ndarray, kind: str, slope: float = 0.2) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x > 0, x, slope * x)
    return x


def activate_grad(x: np.ndarray, kind: str, slope: float = 0.2) -> np.ndarray:
    if kind == "relu":
        return (x > 0).astype(float)
    if kind == "leaky_relu":
        return np.where(x > 0, 1.0, slope)
    return np.ones_like(x)


def leaky_relu(x, slope: float = 0.2):
    return np.where(x > 0, x, slope * x)


# single-head building blocks

def gat_logits(h: np.ndarray, W: np.ndarray, a: np.ndarray, A: np.ndarray, slope: float = 0.2) -> np.ndarray:
    """e[i, j] = LeakyReLU(a . [W h_i || W h_j]) on edges of ``A``, 0 elsewhere."""
    out = W.shape[0]
    if h.shape[1] != W.shape[1] or a.shape != (2 * out,) or A.shape != (h.shape[0],) * 2:
        raise ShapeMismatch(f"h {h.shape}, W {W.shape}, a {a.shape}, A {A.shape}")
    z = h @ W.T
    u = (z @ a[:out])[:, None] + (z @ a[out:])[None, :]
    return np.where(A, leaky_relu(u, slope), 0.0)


def attention_softmax(e: np.ndarray, A: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax of ``e`` restricted to each node's neighborhood."""
    has_nbr = A.any(axis=1)
    rows = np.ones(A.shape[0], dtype=bool) if valid is None else valid
    if np.any(rows & ~has_nbr):
        raise EmptyNeighborhood(f"nodes {np.flatnonzero(rows & ~has_nbr).tolist()} have no neighbors")
    masked = np.where(A, e, -np.inf)
    m = np.where(has_nbr, masked.max(axis=1), 0.0)
    ex = np.where(A, np.exp(masked - m[:, None]), 0.0)
    denom = ex.sum(axis=1, keepdims=True)
    return np.divide(ex, denom, out=np.zeros_like(ex), where=denom > 0)


def gat_aggregate(h: np.ndarray, alpha: np.ndarray, W: np.ndarray, activation: str = "relu", slope: float = 0.2) -> np.ndarray:
    if h.shape[1] != W.shape[1] or alpha.shape != (h.shape[0],) * 2:
        raise ShapeMismatch(f"h {h.shape}, W {W.shape}, alpha {alpha.shape}")
    return activate(alpha @ (h @ W.T), activation, slope)


def gcn_propagation_matrix(A: np.ndarray, normalize: bool = False) -> np.ndarray:
    adj = A.astype(float)
    if normalize:
        deg = adj.sum(axis=1)
        inv = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
        adj = inv[:, None] * adj * inv[None, :]
    return adj


def gcn_layer(h: np.ndarray, W: np.ndarray, A: np.ndarray, activation: str = "relu", normalize: bool = False, slope: float = 0.2) -> np.ndarray:
    """h_next = sigma(A . ReLU(W h)), the un-normalized form unless ``normalize``."""
    if h.shape[1] != W.shape[1] or A.shape != (h.shape[0],) * 2:
        raise ShapeMismatch(f"h {h.shape}, W {W.shape}, A {A.shape}")
    return activate(gcn_propagation_matrix(A, normalize) @ np.maximum(h @ W.T, 0.0), activation, slope)


def masked_mean(h: np.ndarray, valid: np.ndarray) -> np.ndarray:
    n = int(valid.sum())
    if n == 0:
        return np.zeros(h.shape[1])
    return h[valid].sum(axis=0) / n


def readout(h: np.ndarray, valid: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    pooled = masked_mean(h, valid)
    return pooled, float(pooled @ w + b[0])


# full model

@dataclass
class AttentionRecord:
    layer: int
    head: int
    logits: np.ndarray  # raw e, 0 off-edge
    alpha: np.ndarray
    mask: np.ndarray
    node_ids: list[int]


@dataclass
class ForwardTrace:
    activations: list[np.ndarray]
    attention: list[AttentionRecord]
    pooled: np.ndarray
    logit: float
    probability: float
    caches: list[dict] = field(default_factory=list, repr=False)


def forward(g: GraphTensors, params: ModelParams, specs: list[LayerSpec]) -> ForwardTrace:
    if not specs:
        raise ValueError("at least one layer is required")
    h = g.features(params.embedding)
    if h.shape[1] != specs[0].in_dim:
        raise ShapeMismatch(f"features have width {h.shape[1]}, layer0 expects {specs[0].in_dim}")
    valid = g.valid
    vmask = valid[:, None]
    activations = [h]
    records = []
    caches = []
    for li, spec in enumerate(specs):
        W = params.W[li]
        if spec.kind == "GAT":
            outs, heads = [], []
            for k in range(spec.heads):
                a = params.a[li][k]
                z = h @ W[k].T
                o = spec.out_dim
                u = (z @ a[:o])[:, None] + (z @ a[o:])[None, :]
                e = np.where(g.A, leaky_relu(u, spec.slope), 0.0)
                alpha = attention_softmax(e, g.A, valid)
                m = alpha @ z
                outs.append(activate(m, spec.activation, spec.slope))
                heads.append({"z": z, "u": u, "alpha": alpha, "m": m})
                records.append(AttentionRecord(li, k, e, alpha, g.A, g.node_ids))
            h_next = np.concatenate(outs, axis=1) * vmask
            caches.append({"h": h, "heads": heads})
        else:
            P = gcn_propagation_matrix(g.A, spec.normalize)
            p = h @ W[0].T
            q = P @ np.maximum(p, 0.0)
            h_next = activate(q, spec.activation, spec.slope) * vmask
            caches.append({"h": h, "P": P, "p": p, "q": q})
        h = h_next
        activations.append(h)
    pooled, logit = readout(h, valid, params.readout_w, params.readout_b)
    return ForwardTrace(activations, records, pooled, logit, float(expit(logit)), caches)


def predict_proba(g: GraphTensors, params: ModelParams, specs: list[LayerSpec]) -> float:
    return forward(g, params, specs).probability


def backward(trace: ForwardTrace, g: GraphTensors, params: ModelParams, specs: list[LayerSpec], upstream: float) -> dict[str, np.ndarray]:
    """Gradients of a loss with dLoss/dLogit = ``upstream``.

    Keys follow :meth:`ModelParams.named`, plus ``"X"`` for the input features.
    The PAD row of the embedding gradient is always zero.
    """
    grads: dict[str, np.ndarray] = {}
    valid = g.valid
    vmask = valid[:, None].astype(float)
    grads["readout.w"] = upstream * trace.pooled
    grads["readout.b"] = np.array([upstream])
    n_valid = int(valid.sum())
    dh = np.zeros_like(trace.activations[-1])
    if n_valid:
        dh = vmask * (upstream * params.readout_w)[None, :] / n_valid

    for li in reversed(range(len(specs))):
        spec, cache = specs[li], caches_at(trace, li)
        W = params.W[li]
        h = cache["h"]
        dh = dh * vmask
        dW = np.zeros_like(W)
        dh_prev = np.zeros_like(h)
        if spec.kind == "GAT":
            da = np.zeros_like(params.a[li])
            o = spec.out_dim
            for k, hc in enumerate(cache["heads"]):
                a = params.a[li][k]
                z, u, alpha, m = hc["z"], hc["u"], hc["alpha"], hc["m"]
                dm = dh[:, k * o : (k + 1) * o] * activate_grad(m, spec.activation, spec.slope)
                dalpha = dm @ z.T
                dz = alpha.T @ dm
                de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
                du = np.where(g.A, de * np.where(u > 0, 1.0, spec.slope), 0.0)
                ds1 = du.sum(axis=1)
                ds2 = du.sum(axis=0)
                da[k, :o] = z.T @ ds1
                da[k, o:] = z.T @ ds2
                dz += np.outer(ds1, a[:o]) + np.outer(ds2, a[o:])
                dW[k] = dz.T @ h
                dh_prev += dz @ W[k]
            grads[f"layer{li}.a"] = da
        else:
            P, p, q = cache["P"], cache["p"], cache["q"]
            dq = dh * activate_grad(q, spec.activation, spec.slope)
            dp = (P.T @ dq) * (p > 0)
            dW[0] = dp.T @ h
            dh_prev = dp @ W[0]
        grads[f"layer{li}.W"] = dW
        dh = dh_prev

    grads["X"] = dh
    if params.embedding is not None:
        demb = np.asarray(g.pool.T @ dh)
        demb[PAD] = 0.0
        grads["embedding"] = demb
    return grads


def caches_at(trace: ForwardTrace, layer: int) -> dict:
    if not trace.caches:
        raise ValueError("trace carries no caches; run forward() first")
    return trace.caches[layer]
