"""Code property graph: AST, CFG and dependence edges over one node set."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .flow import DefUseChain, FlowGraph
from .frontend import AstNode, dot_escape

AST, CFG, DDG, CDG = "AST", "CFG", "DDG", "CDG"
EDGE_CLASSES = (AST, CFG, DDG, CDG)
SELF = "SELF"

_EDGE_STYLE = {
    AST: 'color="black"',
    CFG: 'color="blue", style="dashed"',
    DDG: 'color="darkgreen", style="dotted"',
    CDG: 'color="orange", style="bold"',
    SELF: 'color="gray", style="dotted"',
}


class InconsistentInputs(ValueError):
    pass


@dataclass(frozen=True)
class CpgNode:
    id: int
    kind: str
    code: str
    attrs: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass
class Cpg:
    nodes: list[CpgNode]
    edges: list[tuple[int, int, str]]
    name: str = ""
    label: int | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": [{"id": n.id, "kind": n.kind, "code": n.code} for n in self.nodes],
            "edges": [{"src": s, "dst": d, "class": c} for s, d, c in self.edges],
            "label": self.label,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


@dataclass
class SimpleGraph:
    """Class-erased, duplicate-free view of a CPG used for message passing.

    ``edges`` are sorted (src, dst) pairs and include one synthetic self-loop per
    node (origin ``{"SELF"}``). Messages flow along edge direction, so the
    neighborhood of ``i`` is the set of sources of edges ending in ``i``.
    """

    nodes: list[int]
    edges: list[tuple[int, int]]
    origins: dict[tuple[int, int], frozenset[str]]
    labels: dict[int, tuple[str, str]] = field(default_factory=dict)
    direction: str = "bidirected"

    @property
    def neighbors(self) -> dict[int, set[int]]:
        nbrs: dict[int, set[int]] = {n: set() for n in self.nodes}
        for s, d in self.edges:
            nbrs[d].add(s)
        return nbrs

    def is_synthetic(self, edge: tuple[int, int]) -> bool:
        return self.origins[edge] == frozenset({SELF})

    def as_cpg(self) -> Cpg:
        """Degenerate Cpg view: one edge per (pair, origin class)."""
        nodes = [CpgNode(n, *self.labels.get(n, ("", ""))) for n in self.nodes]
        edges = [(s, d, c) for (s, d) in self.edges for c in sorted(self.origins[(s, d)])]
        return Cpg(nodes, edges)


def compose(
    ast: AstNode,
    cfg: FlowGraph | None = None,
    ddg: list[DefUseChain] = (),
    cdg: list[tuple[int, int]] = (),
    include=(AST, CFG),
    name: str = "",
    label: int | None = None,
) -> Cpg:
    include = set(include)
    unknown = include - set(EDGE_CLASSES)
    if unknown:
        raise ValueError(f"unknown edge classes {sorted(unknown)}")
    ast_nodes = list(ast.walk())
    ids = {n.id for n in ast_nodes}
    nodes = [CpgNode(n.id, n.kind, n.code, dict(n.attrs)) for n in ast_nodes]
    if cfg is not None:
        extra = set(cfg.nodes) - ids - {cfg.entry, cfg.exit}
        if extra:
            raise InconsistentInputs(f"cfg references unknown nodes {sorted(extra)}")
        if include & {CFG, DDG}:
            nodes.append(CpgNode(cfg.entry, "Entry", ""))
            nodes.append(CpgNode(cfg.exit, "Exit", ""))
    elif include & {CFG, DDG}:
        raise InconsistentInputs("CFG/DDG edges requested without a flow graph")
    known = {n.id for n in nodes}

    edges: list[tuple[int, int, str]] = []
    if AST in include:
        edges += [(n.id, c.id, AST) for n in ast_nodes for c in n.children]
    if CFG in include:
        edges += [(s, d, CFG) for s, d, _ in cfg.edges]
    if DDG in include:
        edges += [(ch.def_site, ch.use_site, DDG) for ch in ddg]
    if CDG in include:
        edges += [(p, d, CDG) for p, d in cdg]
    for s, d, c in edges:
        if s not in known or d not in known:
            raise InconsistentInputs(f"{c} edge ({s}, {d}) has an unknown endpoint")
    if not name and ast.kind == "Function":
        name = ast.attrs.get("name", "")
    return Cpg(nodes, edges, name, label)


def simplify(cpg: Cpg, direction: str = "bidirected", self_loops: bool = True) -> SimpleGraph:
    if direction not in ("directed", "bidirected"):
        raise ValueError(f"bad direction {direction!r}")
    origins: dict[tuple[int, int], set[str]] = {}
    for s, d, c in cpg.edges:
        if s == d:
            continue  # subsumed by the synthetic self-loop
        origins.setdefault((s, d), set()).add(c)
        if direction == "bidirected":
            origins.setdefault((d, s), set()).add(c)
    if self_loops:
        for n in cpg.nodes:
            origins[(n.id, n.id)] = {SELF}
    edges = sorted(origins)
    return SimpleGraph(
        nodes=[n.id for n in cpg.nodes],
        edges=edges,
        origins={e: frozenset(origins[e]) for e in edges},
        labels={n.id: (n.kind, n.code) for n in cpg.nodes},
        direction=direction,
    )


def to_dot(graph: Cpg | SimpleGraph, highlights=()) -> str:
    """Render a graph as DOT.

    ``highlights`` holds ``(src, dst)`` or ``(src, dst, score)`` tuples; each is
    drawn as a single red edge replacing any ordinary edges between the pair.
    """
    cpg = graph.as_cpg() if isinstance(graph, SimpleGraph) else graph
    marked = {}
    for h in highlights:
        marked[(h[0], h[1])] = h[2] if len(h) > 2 else None
    lines = ["digraph cpg {"]
    for n in cpg.nodes:
        lines.append(f'  n{n.id} [label="{dot_escape(n.kind + ":" + n.code)}"];')
    for s, d, c in cpg.edges:
        if (s, d) in marked:
            continue
        lines.append(f'  n{s} -> n{d} [{_EDGE_STYLE[c]}, label="{c}"];')
    for (s, d), score in marked.items():
        label = f', label="{score:.4f}"' if score is not None else ""
        lines.append(f'  n{s} -> n{d} [color=red, penwidth=2{label}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
