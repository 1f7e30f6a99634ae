"""JSONL corpus ingestion and a seeded synthetic vulnerability corpus."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frontend import LexError, ParseError, SourceFunction, parse_source

log = logging.getLogger(__name__)

TEMPLATES = ("unchecked-division", "overflow-prone-decl")


class MalformedLine(ValueError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass
class IngestResult:
    functions: list[SourceFunction]
    skipped: list[tuple[int, str]] = field(default_factory=list)
    total: int = 0

    def __iter__(self):
        return iter(self.functions)

    def __len__(self) -> int:
        return len(self.functions)


def read_records(path) -> list[tuple[int, dict]]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("func"), str):
                raise MalformedLine(lineno, "expected an object with a string 'func' field")
            records.append((lineno, obj))
    return records


def ingest_jsonl(path, require_label: bool = False) -> IngestResult:
    """Load ``{"func": ..., "target": 0|1}`` records, skipping unparseable functions.

    A missing ``target`` yields an unlabeled function unless ``require_label``.
    """
    result = IngestResult([])
    for lineno, obj in read_records(path):
        result.total += 1
        target = obj.get("target")
        if target is None:
            if require_label:
                raise MalformedLine(lineno, "missing 'target'")
        elif target not in (0, 1) or isinstance(target, bool):
            raise MalformedLine(lineno, f"target must be 0 or 1, got {target!r}")
        source = obj["func"]
        try:
            root = parse_source(source)
        except (LexError, ParseError) as exc:
            log.info("skipping line %d: %s", lineno, exc)
            result.skipped.append((lineno, str(exc)))
            continue
        result.functions.append(SourceFunction(source, target, root.attrs["name"]))
    log.info("ingested %d of %d functions (%d skipped)", len(result.functions), result.total, len(result.skipped))
    return result


# synthetic corpus

@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 200
    positive_rate: float = 0.5
    templates: tuple[str, ...] = TEMPLATES
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("count must be >= 2")
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ValueError("positive_rate must lie in [0, 1]")
        unknown = set(self.templates) - set(TEMPLATES)
        if unknown or not self.templates:
            raise ValueError(f"unknown templates {sorted(unknown)}")


_VARS = ["len", "size", "count", "num", "den", "step", "width", "height", "offset", "idx",
         "val", "rate", "scale", "base", "chunk", "block", "stride", "depth", "pos", "span"]
_FUNCS = ["compute", "process", "handle", "scale_buf", "split_work", "decode_frame",
          "parse_hdr", "fill_plane", "mix_audio", "resample", "pack_bits", "read_block"]
_SOURCES = ["read_int", "get_len", "fetch_count", "next_value", "read_u16", "get_bits"]
_SINKS = ["consume", "emit", "store", "write_out", "report", "push"]
_ALLOCS = ["alloc_buf", "av_malloc", "g_malloc", "reserve"]


class _Namer:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def pick(self, pool) -> str:
        while True:
            base = str(pool[self.rng.integers(len(pool))])
            name = base if base not in self.used else f"{base}{self.rng.integers(1, 100)}"
            if name not in self.used:
                self.used.add(name)
                return name

    def choice(self, pool) -> str:
        return str(pool[self.rng.integers(len(pool))])


def _fillers(rng: np.random.Generator, namer: _Namer, anchor: str, most: int = 2) -> list[str]:
    """Neutral statements shared by both classes so the label hinges on the guard."""
    out = []
    for _ in range(rng.integers(1, most + 1)):
        kind = rng.integers(5)
        t = namer.pick(_VARS)
        c = int(rng.integers(1, 16))
        if kind == 0:
            out.append(f"int {t} = {anchor} + {c};")
        elif kind == 1:
            out.append(f"int {t} = {anchor} * {c};")
            out.append(f"{namer.choice(_SINKS)}({t});")
        elif kind == 2:
            out.append(f"int {t} = 0;")
            out.append(f"while ({t} < {c}) {{ {t} = {t} + 1; }}")
        elif kind == 3:
            out.append(f"int {t} = {anchor} - {c};")
            out.append(f"if ({t} > {c + 3}) {{ {t} = {t} - {c}; }}")
        else:
            i = namer.pick(["i", "j", "k"])
            out.append(f"int {t} = 0;")
            out.append(f"for (int {i} = 0; {i} < {c}; {i} = {i} + 1) {{ {t} = {t} + {i}; }}")
    return out


def _division(rng, namer, vulnerable: bool) -> str:
    fn = namer.pick(_FUNCS)
    a, b, r = namer.pick(_VARS), namer.pick(_VARS), namer.pick(_VARS)
    sink = namer.choice(_SINKS)
    fresh = rng.random() < 0.5
    params = f"int {a}" if fresh else f"int {a}, int {b}"
    head = [f"int {b} = {namer.choice(_SOURCES)}();"] if fresh else []
    op = "/" if rng.random() < 0.75 else "%"
    core = [f"int {r} = {a} {op} {b};", f"{sink}({r});"]
    if not vulnerable:
        style = rng.integers(3)
        if style == 0:
            core = [f"int {r} = 0;", f"if ({b} != 0) {{ {r} = {a} {op} {b}; {sink}({r}); }}"]
        elif style == 1:
            core = [f"if ({b} == 0) {{ return -1; }}"] + core
        else:
            core = [f"int {r} = 0;", f"if ({b} > 0) {{ {r} = {a} {op} {b}; }}", f"{sink}({r});"]
    body = head + _fillers(rng, namer, a, most=1) + core
    if rng.random() < 0.5:
        body += _fillers(rng, namer, a, most=1)
    return f"int {fn}({params}) {{\n  " + "\n  ".join(body) + "\n  return 0;\n}"


def _overflow(rng, namer, vulnerable: bool) -> str:
    fn = namer.pick(_FUNCS)
    n, total = namer.pick(_VARS), namer.pick(_VARS)
    size = int(rng.integers(2, 64))
    limit = int(rng.integers(64, 4096))
    alloc = namer.choice(_ALLOCS)
    head = [f"int {n} = {namer.choice(_SOURCES)}();"]
    core = [f"int {total} = {n} * {size};", f"{alloc}({total});"]
    if not vulnerable:
        style = rng.integers(2)
        if style == 0:
            core = [f"if ({n} > 0 && {n} < {limit}) {{ int {total} = {n} * {size}; {alloc}({total}); }}"]
        else:
            core = [f"if ({n} <= 0 || {n} > {limit}) {{ return -1; }}"] + core
    body = head + _fillers(rng, namer, n, most=1) + core
    if rng.random() < 0.5:
        body += _fillers(rng, namer, n, most=1)
    return f"int {fn}(void) {{\n  " + "\n  ".join(body) + "\n  return 0;\n}"


_BUILDERS = {"unchecked-division": _division, "overflow-prone-decl": _overflow}


def gen_synthetic(spec: SyntheticSpec) -> list[dict]:
    """Deterministic labeled corpus; write it with :func:`write_jsonl`."""
    rng = np.random.default_rng([spec.seed, 0x5E17])
    n_pos = int(np.floor(spec.count * spec.positive_rate + 0.5))
    labels = np.array([1] * n_pos + [0] * (spec.count - n_pos))
    labels = labels[rng.permutation(spec.count)]
    records = []
    for y in labels:
        template = spec.templates[rng.integers(len(spec.templates))]
        src = _BUILDERS[template](rng, _Namer(rng), bool(y))
        records.append({"func": src, "target": int(y)})
    return records


def write_jsonl(records: list[dict], path) -> None:
    with open(Path(path), "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
