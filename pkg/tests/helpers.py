"""Shared test utilities: random subset programs, random graphs, gradient oracle."""

from __future__ import annotations

import random

import numpy as np
from scipy import sparse

from cpgat.featurize import GraphTensors
from cpgat.flow import DefUseChain

SNIPPET = """void func() {
  int x = source();
  if (isEven(x)) {
    proceed(10 / x);
  }
}"""


class ProgramGenerator:
    """Grammar-driven generator for functions in the supported subset."""

    VARS = ["a", "b", "c", "d"]
    CALLS = ["f", "g", "use"]

    def __init__(self, seed: int, max_depth: int = 2, loops: bool = True, returns: bool = False):
        self.rng = random.Random(seed)
        self.max_depth = max_depth
        self.loops = loops
        self.returns = returns

    def expr(self, depth: int = 0) -> str:
        r = self.rng.random()
        if depth >= 2 or r < 0.35:
            return self.rng.choice(self.VARS) if self.rng.random() < 0.6 else str(self.rng.randint(0, 9))
        if r < 0.75:
            op = self.rng.choice(["+", "-", "*", "/", "%", "<", "<=", ">", ">=", "==", "!=", "&&", "||"])
            return f"{self.expr(depth + 1)} {op} {self.expr(depth + 1)}"
        if r < 0.85:
            return f"{self.rng.choice(['-', '!'])} {self.expr(depth + 1)}"
        if r < 0.93:
            return f"({self.expr(depth + 1)})"
        args = ", ".join(self.expr(depth + 1) for _ in range(self.rng.randint(0, 2)))
        return f"{self.rng.choice(self.CALLS)}({args})"

    def stmt(self, depth: int) -> str:
        choices = ["assign", "assign", "call", "decl"]
        if depth < self.max_depth:
            choices += ["if", "ifelse"] + (["while", "for"] if self.loops else [])
        if self.returns:
            choices.append("return")
        kind = self.rng.choice(choices)
        v = self.rng.choice(self.VARS)
        if kind == "assign":
            return f"{v} = {self.expr()};"
        if kind == "call":
            return f"{self.rng.choice(self.CALLS)}({self.expr()});"
        if kind == "decl":
            return f"int {v} = {self.expr()};"
        if kind == "return":
            return f"return {self.expr()};"
        if kind == "if":
            return f"if ({self.expr()}) {self.block(depth + 1)}"
        if kind == "ifelse":
            return f"if ({self.expr()}) {self.block(depth + 1)} else {self.block(depth + 1)}"
        if kind == "while":
            return f"while ({self.expr()}) {self.block(depth + 1)}"
        return f"for ({v} = 0; {v} < {self.expr()}; {v} = {v} + 1) {self.block(depth + 1)}"

    def block(self, depth: int) -> str:
        body = " ".join(self.stmt(depth) for _ in range(self.rng.randint(0, 3)))
        return "{ " + body + " }"

    def function(self) -> str:
        params = ", ".join(f"int {p}" for p in self.rng.sample(self.VARS, self.rng.randint(0, 2)))
        body = " ".join(self.stmt(0) for _ in range(self.rng.randint(1, 5)))
        return f"int fn({params}) {{ {body} }}"


def random_graph_tensors(rng: np.random.Generator, n: int, cap: int, vocab: int = 12, density: float = 0.4, label: int = 1):
    """Random GraphTensors with self-loops on valid rows and a random pooling matrix."""
    A = rng.random((cap, cap)) < density
    A[n:, :] = False
    A[:, n:] = False
    A[np.arange(n), np.arange(n)] = True
    valid = np.zeros(cap, dtype=bool)
    valid[:n] = True
    rows, cols, vals = [], [], []
    for i in range(n):
        ids = rng.integers(1, vocab, size=rng.integers(1, 4))
        for t in ids:
            rows.append(i)
            cols.append(int(t))
            vals.append(1.0 / len(ids))
    pool = sparse.csr_matrix((vals, (rows, cols)), shape=(cap, vocab))
    return GraphTensors(np.zeros((cap, 1)), A, valid, list(range(n)), pool, label)


def central_differences(loss, arrays, eps: float = 1e-4) -> list[np.ndarray]:
    """Central finite differences of ``loss()`` with respect to each array, in place."""
    out = []
    for arr in arrays:
        num = np.zeros_like(arr)
        for ix in np.ndindex(arr.shape):
            old = arr[ix]
            arr[ix] = old + eps
            up = loss()
            arr[ix] = old - eps
            down = loss()
            arr[ix] = old
            num[ix] = (up - down) / (2 * eps)
        out.append(num)
    return out


REL_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|, REL_FLOOR) over components."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def oracle_effects(cfg, ast):
    """(defs, uses) per CFG node, derived from the AST independently of the library."""
    nodes = {n.id: n for n in ast.walk()}
    effects = {}
    for nid in cfg.nodes:
        if nid == cfg.entry:
            effects[nid] = ({p.attrs["name"] for p in ast.children[0].children}, set())
            continue
        if nid == cfg.exit:
            effects[nid] = (set(), set())
            continue
        defs, uses, targets = set(), set(), set()
        for n in nodes[nid].walk():
            if n.kind == "Assign":
                defs.add(n.children[0].code)
                if n.attrs["operator"] == "=":
                    targets.add(n.children[0].id)
            if n.kind == "Decl":
                targets.add(n.children[0].id)
                if len(n.children) == 2:
                    defs.add(n.children[0].code)
        for n in nodes[nid].walk():
            if n.kind == "Identifier" and n.id not in targets:
                uses.add(n.code)
        effects[nid] = (defs, uses)
    return effects


def brute_force_chains(cfg, ast):
    """Enumerate simple CFG paths out of every definition (length <= |nodes|)."""
    effects = oracle_effects(cfg, ast)
    succ = {n: [] for n in cfg.nodes}
    for s, d, _ in cfg.edges:
        succ[s].append(d)
    chains = set()
    for d in cfg.nodes:
        for var in effects[d][0]:
            stack = [(d, frozenset([d]))]
            while stack:
                node, seen = stack.pop()
                if len(seen) > len(cfg.nodes):
                    continue
                for nxt in succ[node]:
                    defs, uses = effects[nxt]
                    if var in uses:
                        chains.add(DefUseChain(var, d, nxt))
                    if var in defs or nxt in seen:
                        continue
                    stack.append((nxt, seen | {nxt}))
    return sorted(chains)
