"""Vocabulary, token-embedding table and fixed-size graph tensors."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from .cpg import Cpg, SimpleGraph
from .frontend import SourceFunction, lex

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class EmptyCorpus(ValueError):
    pass


@dataclass
class Vocab:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocab must start with the PAD and UNK specials")
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def to_dict(self) -> dict[str, int]:
        return dict(self.stoi)

    @classmethod
    def from_dict(cls, mapping: dict[str, int]) -> "Vocab":
        itos = [t for t, _ in sorted(mapping.items(), key=lambda kv: kv[1])]
        if [mapping[t] for t in itos] != list(range(len(itos))):
            raise ValueError("vocab indices must be contiguous from 0")
        return cls(itos)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def build_vocab(corpus: list[SourceFunction], min_count: int = 1) -> Vocab:
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter(t.text for f in corpus for t in f.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab([PAD_TOKEN, UNK_TOKEN] + kept)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def init(cls, vocab_size: int, dim: int, rng: np.random.Generator, trainable: bool = True):
        m = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(vocab_size, dim))
        m[PAD] = 0.0
        return cls(m, trainable)


@lru_cache(maxsize=65536)
def _code_tokens(code: str) -> tuple[str, ...]:
    return tuple(t.text for t in lex(code))


def node_token_ids(code: str, vocab: Vocab) -> list[int]:
    return [vocab.index(t) for t in _code_tokens(code)]


def embed_node(code: str, vocab: Vocab, table: EmbeddingTable) -> np.ndarray:
    """Mean of the embedding rows of the node's tokens; zero for empty code."""
    ids = node_token_ids(code, vocab)
    if not ids:
        return np.zeros(table.dim)
    return table.matrix[ids].mean(axis=0)


@dataclass
class GraphTensors:
    """Fixed-size encoding of one graph.

    ``A[i, j]`` is true when node ``j`` is in the neighborhood of ``i``.
    ``pool`` is the sparse (cap x vocab) token-averaging matrix, so that
    ``X == pool @ table`` and embedding gradients are ``pool.T @ dX``.
    """

    X: np.ndarray
    A: np.ndarray
    valid: np.ndarray
    node_ids: list[int]
    pool: sparse.csr_matrix
    label: int | None = None
    name: str = ""

    @property
    def cap(self) -> int:
        return self.A.shape[0]

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def features(self, embedding: np.ndarray | None = None) -> np.ndarray:
        """Node features, recomputed from ``embedding`` when one is given."""
        if embedding is None:
            return self.X
        return np.asarray(self.pool @ embedding)


def tensorize(g: SimpleGraph, cpg: Cpg | None, vocab: Vocab, table: EmbeddingTable | np.ndarray, cap: int) -> GraphTensors:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    labels = g.labels if cpg is None else {n.id: (n.kind, n.code) for n in cpg.nodes}
    kept = g.nodes[:cap]
    row = {nid: i for i, nid in enumerate(kept)}
    rows, cols, vals = [], [], []
    for i, nid in enumerate(kept):
        ids = node_token_ids(labels[nid][1], vocab)
        for t in ids:
            rows.append(i)
            cols.append(t)
            vals.append(1.0 / len(ids))
    pool = sparse.csr_matrix((vals, (rows, cols)), shape=(cap, len(vocab)))
    pool.sum_duplicates()
    A = np.zeros((cap, cap), dtype=bool)
    for s, d in g.edges:
        if s in row and d in row:
            A[row[d], row[s]] = True
    valid = np.zeros(cap, dtype=bool)
    valid[: len(kept)] = True
    A[np.arange(len(kept)), np.arange(len(kept))] = True
    matrix = table.matrix if isinstance(table, EmbeddingTable) else table
    X = np.asarray(pool @ matrix)
    label = cpg.label if cpg is not None else None
    name = cpg.name if cpg is not None else ""
    return GraphTensors(X, A, valid, kept, pool, label, name)


def filter_corpus(corpus: list[SourceFunction], max_tokens: int = 1200) -> list[SourceFunction]:
    """Keep functions with strictly fewer than ``max_tokens`` tokens."""
    return [f for f in corpus if f.token_count < max_tokens]
