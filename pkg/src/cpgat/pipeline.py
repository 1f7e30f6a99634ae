"""End-to-end wiring: source -> CPG -> tensors -> model, plus checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .cpg import AST, CDG, CFG, DDG, EDGE_CLASSES, Cpg, SimpleGraph, compose, simplify
from .featurize import GraphTensors, Vocab, build_vocab, filter_corpus, tensorize
from .flow import build_cfg, control_dependence, reaching_definitions
from .frontend import AstNode, SourceFunction, parse_source
from .gnn import LayerSpec, ModelParams, init_params, make_specs
from .training import TrainConfig, split, stream, train

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


@dataclass
class PipelineConfig:
    classes: list[str] = field(default_factory=lambda: [AST, CFG])
    direction: str = "bidirected"
    embed_dim: int = 64
    node_cap: int = 64
    max_tokens: int = 1200
    min_count: int = 1
    layer_kind: str = "GAT"
    hidden: int = 64
    depth: int = 2
    heads: int = 1
    activation: str = "relu"
    slope: float = 0.2
    normalize: bool = False
    threshold: float = 0.5
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.classes = [c.upper() for c in self.classes]
        bad = set(self.classes) - set(EDGE_CLASSES)
        if bad:
            raise ValueError(f"unknown edge classes {sorted(bad)}")
        if self.direction not in ("directed", "bidirected"):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.node_cap < 1 or self.embed_dim < 1 or self.depth < 1:
            raise ValueError("node_cap, embed_dim and depth must be >= 1")
        self.train.seed = self.seed

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def specs(self) -> list[LayerSpec]:
        return make_specs(
            self.embed_dim,
            hidden=self.hidden,
            depth=self.depth,
            kind=self.layer_kind,
            heads=self.heads,
            activation=self.activation,
            slope=self.slope,
            normalize=self.normalize,
        )


@dataclass
class FunctionGraph:
    ast: AstNode
    cpg: Cpg
    graph: SimpleGraph


def build_graph(source: str, classes=(AST, CFG), direction: str = "bidirected", label: int | None = None) -> FunctionGraph:
    ast = parse_source(source)
    classes = set(classes)
    cfg = build_cfg(ast) if classes & {CFG, DDG} else None
    ddg = reaching_definitions(cfg, ast) if DDG in classes else []
    cdg = control_dependence(ast) if CDG in classes else []
    cpg = compose(ast, cfg, ddg, cdg, include=classes, label=label)
    return FunctionGraph(ast, cpg, simplify(cpg, direction))


def featurize_corpus(
    functions: list[SourceFunction], config: PipelineConfig, vocab: Vocab, embedding: np.ndarray
) -> list[GraphTensors]:
    out = []
    for f in functions:
        fg = build_graph(f.source, config.classes, config.direction, f.label)
        out.append(tensorize(fg.graph, fg.cpg, vocab, embedding, config.node_cap))
    return out


@dataclass
class Model:
    config: PipelineConfig
    vocab: Vocab
    params: ModelParams
    history: list[float] = field(default_factory=list)

    @property
    def specs(self) -> list[LayerSpec]:
        return self.config.specs()

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "specs": [s.to_dict() for s in self.specs],
            "vocab": self.vocab.to_dict(),
            "history": list(self.history),
            "params": self.params.to_dict(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        config = PipelineConfig.from_dict(d["config"])
        params = ModelParams.from_dict(d["params"], config.specs())
        return cls(config, Vocab.from_dict(d["vocab"]), params, list(d.get("history", [])))

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def tensors(self, functions: list[SourceFunction]) -> list[GraphTensors]:
        return featurize_corpus(functions, self.config, self.vocab, self.params.embedding)


def split_corpus(functions: list[SourceFunction], config: PipelineConfig):
    return split(functions, config.train.fractions, config.seed)


def fit(functions: list[SourceFunction], config: PipelineConfig) -> tuple[Model, list[SourceFunction], list[SourceFunction]]:
    """Filter, split, build the vocabulary on the training side and train.

    Returns the model and the (train, test) partitions it was built from.
    """
    kept = filter_corpus(functions, config.max_tokens)
    log.info("token filter kept %d of %d functions (< %d tokens)", len(kept), len(functions), config.max_tokens)
    train_fns, test_fns = split_corpus(kept, config)
    vocab = build_vocab(train_fns, config.min_count)
    specs = config.specs()
    params = init_params(specs, stream(config.seed, "init"), len(vocab), config.embed_dim)
    data = featurize_corpus(train_fns, config, vocab, params.embedding)
    params, history = train(data, config.train, specs, params)
    return Model(config, vocab, params, history), train_fns, test_fns
