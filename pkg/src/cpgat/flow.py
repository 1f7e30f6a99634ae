"""Control flow graphs, reaching definitions and syntactic control dependence."""

from __future__ import annotations

from dataclasses import dataclass, field

from .frontend import AstNode

TRUE, FALSE, UNCOND = "true", "false", "unconditional"

_SIMPLE_STATEMENTS = frozenset(
    {"Decl", "Assign", "Return", "Call", "BinaryOp", "UnaryOp", "Identifier", "Literal"}
)


class UnsupportedConstruct(ValueError):
    pass


@dataclass
class FlowGraph:
    entry: int
    exit: int
    nodes: list[int] = field(default_factory=list)
    edges: list[tuple[int, int, str]] = field(default_factory=list)

    def successors(self, node: int) -> list[tuple[int, str]]:
        return [(d, t) for s, d, t in self.edges if s == node]

    def predecessors(self, node: int) -> list[int]:
        return [s for s, d, _ in self.edges if d == node]


@dataclass(frozen=True, order=True)
class DefUseChain:
    variable: str
    def_site: int
    use_site: int


def _ast_size(ast: AstNode) -> int:
    return max(n.id for n in ast.walk()) + 1


class _Lowering:
    def __init__(self, entry: int, exit_: int):
        self.entry = entry
        self.exit = exit_
        self.nodes: list[int] = []
        self.edges: list[tuple[int, int, str]] = []

    def link(self, preds, node: int) -> None:
        for src, tag in preds:
            self.edges.append((src, node, tag))

    def add(self, node: AstNode, preds) -> None:
        self.nodes.append(node.id)
        self.link(preds, node.id)

    def lower(self, stmt: AstNode, preds: list[tuple[int, str]]) -> list[tuple[int, str]]:
        kind = stmt.kind
        if kind == "Block":
            for child in stmt.children:
                preds = self.lower(child, preds)
            return preds
        if kind == "Return":
            self.add(stmt, preds)
            self.edges.append((stmt.id, self.exit, UNCOND))
            return []
        if kind in _SIMPLE_STATEMENTS:
            self.add(stmt, preds)
            return [(stmt.id, UNCOND)]
        if kind == "If":
            cond, then = stmt.children[0], stmt.children[1]
            self.add(cond, preds)
            exits = self.lower(then, [(cond.id, TRUE)])
            if len(stmt.children) > 2:
                exits = exits + self.lower(stmt.children[2], [(cond.id, FALSE)])
            else:
                exits = exits + [(cond.id, FALSE)]
            return exits
        if kind == "While":
            cond, body = stmt.children
            self.add(cond, preds)
            self.link(self.lower(body, [(cond.id, TRUE)]), cond.id)
            return [(cond.id, FALSE)]
        if kind == "For":
            init, cond, update, body = split_for(stmt)
            if init is not None:
                preds = self.lower(init, preds)
            self.add(cond, preds)
            back = self.lower(body, [(cond.id, TRUE)])
            if update is not None:
                back = self.lower(update, back)
            self.link(back, cond.id)
            return [(cond.id, FALSE)]
        raise UnsupportedConstruct(f"cannot lower {kind} node {stmt.id}")


def split_for(node: AstNode) -> tuple[AstNode | None, AstNode, AstNode | None, AstNode]:
    """Return (init, condition, update, body) of a For node."""
    kids = node.children
    ci = next(i for i, c in enumerate(kids) if c.kind == "Condition")
    init = kids[0] if ci == 1 else None
    update = kids[ci + 1] if len(kids) - ci == 3 else None
    return init, kids[ci], update, kids[-1]


def build_cfg(ast: AstNode) -> FlowGraph:
    """Lower a Function AST into a statement-level CFG.

    Entry and exit get ids just past the AST's own ids. Statements that are
    unreachable from entry (e.g. code after ``return``) are pruned.
    """
    if ast.kind != "Function":
        raise UnsupportedConstruct(f"expected Function root, got {ast.kind}")
    size = _ast_size(ast)
    entry, exit_ = size, size + 1
    low = _Lowering(entry, exit_)
    body = ast.children[1]
    low.link(low.lower(body, [(entry, UNCOND)]), exit_)

    reachable = {entry}
    frontier = [entry]
    succ: dict[int, list[int]] = {}
    for s, d, _ in low.edges:
        succ.setdefault(s, []).append(d)
    while frontier:
        n = frontier.pop()
        for d in succ.get(n, ()):
            if d not in reachable:
                reachable.add(d)
                frontier.append(d)
    nodes = [entry] + [n for n in low.nodes if n in reachable] + [exit_]
    edges = [e for e in low.edges if e[0] in reachable]
    return FlowGraph(entry, exit_, nodes, edges)


def _identifiers(node: AstNode):
    return (n.attrs["name"] for n in node.walk() if n.kind == "Identifier")


def defs_and_uses(node: AstNode) -> tuple[set[str], set[str]]:
    """Variables defined and read by one flow node (uses are read before defs)."""
    defs: set[str] = set()
    uses: set[str] = set()
    for n in node.walk():
        if n.kind == "Assign":
            defs.add(n.children[0].attrs["name"])
        elif n.kind == "Decl" and len(n.children) > 1:
            defs.add(n.attrs["name"])
    skip: set[int] = set()
    for n in node.walk():
        if n.kind == "Assign" and n.attrs["operator"] == "=":
            skip.add(n.children[0].id)
        elif n.kind == "Decl":
            skip.add(n.children[0].id)
    for n in node.walk():
        if n.kind == "Identifier" and n.id not in skip:
            uses.add(n.attrs["name"])
    return defs, uses


def node_effects(cfg: FlowGraph, ast: AstNode) -> dict[int, tuple[set[str], set[str]]]:
    """Map each flow node to its (defs, uses). Parameters are defined at entry."""
    by_id = {n.id: n for n in ast.walk()}
    params = {d.attrs["name"] for d in ast.children[0].children}
    effects = {cfg.entry: (params, set()), cfg.exit: (set(), set())}
    for nid in cfg.nodes:
        if nid in (cfg.entry, cfg.exit):
            continue
        node = by_id[nid]
        if node.kind == "Condition":
            effects[nid] = defs_and_uses(node.children[0]) if node.children else (set(), set())
        else:
            effects[nid] = defs_and_uses(node)
    return effects


def solve_reaching(cfg: FlowGraph, effects) -> tuple[dict[int, frozenset], int]:
    """Round-robin forward fixpoint. Returns (IN sets, number of sweeps)."""
    preds = {n: [] for n in cfg.nodes}
    for s, d, _ in cfg.edges:
        preds[d].append(s)
    gen = {n: frozenset((v, n) for v in effects[n][0]) for n in cfg.nodes}
    killed = {n: effects[n][0] for n in cfg.nodes}
    in_sets = {n: frozenset() for n in cfg.nodes}
    out_sets = dict(gen)
    sweeps = 0
    changed = True
    while changed:
        changed = False
        sweeps += 1
        for n in cfg.nodes:
            inn = frozenset().union(*(out_sets[p] for p in preds[n]))
            out = gen[n] | frozenset(f for f in inn if f[0] not in killed[n])
            in_sets[n] = inn
            if out != out_sets[n]:
                out_sets[n] = out
                changed = True
    return in_sets, sweeps


def reaching_definitions(cfg: FlowGraph, ast: AstNode) -> list[DefUseChain]:
    effects = node_effects(cfg, ast)
    in_sets, _ = solve_reaching(cfg, effects)
    chains = set()
    for n in cfg.nodes:
        uses = effects[n][1]
        for var, site in in_sets[n]:
            if var in uses:
                chains.add(DefUseChain(var, site, n))
    return sorted(chains)


def control_dependence(ast: AstNode) -> list[tuple[int, int]]:
    """Syntax-directed control dependence.

    Every statement or predicate nested inside a branch or loop body depends on
    that construct's condition; for-loop updates depend on the loop condition.
    """
    pairs: set[tuple[int, int]] = set()

    def flow_nodes(node: AstNode):
        kind = node.kind
        if kind == "Block":
            for c in node.children:
                yield from flow_nodes(c)
        elif kind in ("If", "While"):
            yield node.children[0]
            for c in node.children[1:]:
                yield from flow_nodes(c)
        elif kind == "For":
            init, cond, update, body = split_for(node)
            if init is not None:
                yield init
            yield cond
            if update is not None:
                yield update
            yield from flow_nodes(body)
        else:
            yield node

    for node in ast.walk():
        if node.kind in ("If", "While"):
            cond = node.children[0]
            for body in node.children[1:]:
                pairs.update((cond.id, d.id) for d in flow_nodes(body))
        elif node.kind == "For":
            _, cond, update, body = split_for(node)
            dependents = list(flow_nodes(body))
            if update is not None:
                dependents.append(update)
            pairs.update((cond.id, d.id) for d in dependents)
    return sorted(pairs)


def cfg_to_dot(cfg: FlowGraph, ast: AstNode) -> str:
    from .frontend import dot_escape

    by_id = {n.id: n for n in ast.walk()}
    lines = ["digraph cfg {"]
    for nid in cfg.nodes:
        if nid == cfg.entry:
            label = "ENTRY"
        elif nid == cfg.exit:
            label = "EXIT"
        else:
            label = f"{by_id[nid].kind}:{by_id[nid].code}"
        lines.append(f'  n{nid} [label="{dot_escape(label)}"];')
    for s, d, tag in cfg.edges:
        attr = f' [label="{tag}"]' if tag != UNCOND else ""
        lines.append(f"  n{s} -> n{d}{attr};")
    lines.append("}")
    return "\n".join(lines) + "\n"
