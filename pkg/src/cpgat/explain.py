"""Rank CPG edges by attention and render them as highlighted DOT."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cpg import Cpg, SimpleGraph, to_dot
from .gnn import ForwardTrace


class NoAttentionLayers(ValueError):
    pass


@dataclass(frozen=True)
class RankedEdge:
    src: int
    dst: int
    src_code: str
    dst_code: str
    layer: int
    head: int
    score: float


@dataclass
class Explanation:
    name: str
    probability: float
    edges: list[RankedEdge] = field(default_factory=list)
    k: int = 5

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "prob": self.probability,
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "src_code": e.src_code,
                    "dst_code": e.dst_code,
                    "layer": e.layer,
                    "head": e.head,
                    "score": e.score,
                }
                for e in self.edges
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def top_k_edges(
    trace: ForwardTrace,
    g: SimpleGraph,
    k: int = 5,
    score: str = "raw",
    layer: int | None = None,
    name: str = "",
) -> Explanation:
    """Top-``k`` program edges by attention.

    An edge ``src -> dst`` is scored by the coefficient node ``dst`` assigns to
    ``src``: raw logits by default, softmax weights with ``score="normalized"``.
    Each edge keeps its maximum over the selected layers and heads. Synthetic
    self-loops and edges cut off by the node cap are never reported.
    """
    if score not in ("raw", "normalized"):
        raise ValueError(f"score must be 'raw' or 'normalized', not {score!r}")
    records = [r for r in trace.attention if layer is None or r.layer == layer]
    if not trace.attention:
        raise NoAttentionLayers("the model has no attention layers")
    if not records:
        raise NoAttentionLayers(f"no attention layer with index {layer}")
    row = {nid: i for i, nid in enumerate(records[0].node_ids)}
    best: dict[tuple[int, int], tuple[float, int, int]] = {}
    for s, d in g.edges:
        if g.is_synthetic((s, d)) or s not in row or d not in row:
            continue
        i, j = row[d], row[s]
        for r in records:
            if not r.mask[i, j]:
                continue
            value = float(r.logits[i, j] if score == "raw" else r.alpha[i, j])
            cur = best.get((s, d))
            if cur is None or value > cur[0]:
                best[(s, d)] = (value, r.layer, r.head)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0][0], kv[0][1]))
    edges = [
        RankedEdge(s, d, g.labels.get(s, ("", ""))[1], g.labels.get(d, ("", ""))[1], lay, head, value)
        for (s, d), (value, lay, head) in ranked[: max(k, 0)]
    ]
    return Explanation(name, trace.probability, edges, k)


def render_explanation(expl: Explanation, cpg: Cpg | SimpleGraph) -> str:
    return to_dot(cpg, [(e.src, e.dst, e.score) for e in expl.edges])
