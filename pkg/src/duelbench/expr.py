"""Expression trees for generative functions.

Trees are immutable: ``Leaf`` references a feature column, ``Const`` is an
opt-in ephemeral constant and ``Op`` applies one of the fixed operators to its
children. Text form is prefix notation, e.g. ``add(mul(x0,x1),neg(x2))``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .errors import ConfigError, MalformedFunctionError, ParseError

CLAMP = 1e12
SAFE_DIV_EPS = 1e-9


def _safediv(a, b):
    ok = np.abs(b) > SAFE_DIV_EPS
    return np.where(ok, a / np.where(ok, b, 1.0), 1.0)


# name -> (arity, vectorized implementation); insertion order is the canonical set order
OPERATORS = {
    "add": (2, np.add),
    "sub": (2, np.subtract),
    "mul": (2, np.multiply),
    "safediv": (2, _safediv),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "neg": (1, np.negative),
    "abs": (1, np.abs),
}
OPERATOR_SET = tuple(OPERATORS)


@dataclass(frozen=True)
class Leaf:
    feature: int


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Op:
    kind: str
    children: tuple


Node = Union[Leaf, Const, Op]


@dataclass(frozen=True)
class GrowConfig:
    min_depth: int = 2
    max_depth: int = 6
    max_size: int = 63
    n_features: int = 10
    operators: tuple = OPERATOR_SET
    constants: bool = False

    def __post_init__(self):
        if not 1 <= self.min_depth <= self.max_depth:
            raise ConfigError(
                f"tree depth bounds must satisfy 1 <= min_depth <= max_depth, "
                f"got {self.min_depth}, {self.max_depth}")
        if self.max_size < 1:
            raise ConfigError(f"max_size must be >= 1, got {self.max_size}")
        if self.n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {self.n_features}")
        if not self.operators:
            raise ConfigError("operator set is empty")
        unknown = [o for o in self.operators if o not in OPERATORS]
        if unknown:
            raise ConfigError(f"unknown operators: {unknown}")


# --- structure ---------------------------------------------------------------

def depth(f: Node) -> int:
    if isinstance(f, Op):
        return 1 + max(depth(c) for c in f.children)
    return 1


def size(f: Node) -> int:
    if isinstance(f, Op):
        return 1 + sum(size(c) for c in f.children)
    return 1


def walk(f: Node, path: tuple = ()) -> Iterator[tuple[tuple, Node]]:
    """Preorder (path, node) pairs; a path is the tuple of child indices from the root."""
    yield path, f
    if isinstance(f, Op):
        for i, c in enumerate(f.children):
            yield from walk(c, path + (i,))


def features_used(f: Node) -> set[int]:
    return {n.feature for _, n in walk(f) if isinstance(n, Leaf)}


def replace(f: Node, path: tuple, new: Node) -> Node:
    if not path:
        return new
    head, rest = path[0], path[1:]
    children = list(f.children)
    children[head] = replace(children[head], rest, new)
    return Op(f.kind, tuple(children))


def is_valid(f: Node, config: GrowConfig) -> bool:
    return (depth(f) <= config.max_depth and size(f) <= config.max_size
            and all(n.feature < config.n_features for _, n in walk(f) if isinstance(n, Leaf)))


# --- evaluation --------------------------------------------------------------

def evaluate_batch(f: Node, X: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on every row of ``X``; outputs are finite for finite inputs."""
    X = np.asarray(X, dtype=np.float64)
    if isinstance(f, Leaf):
        if not 0 <= f.feature < X.shape[1]:
            raise MalformedFunctionError(
                f"feature x{f.feature} out of bounds for {X.shape[1]} features")
        return X[:, f.feature]
    if isinstance(f, Const):
        return np.full(X.shape[0], f.value)
    arity, fn = OPERATORS[f.kind]
    args = [evaluate_batch(c, X) for c in f.children]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = fn(*args)
    return np.clip(out, -CLAMP, CLAMP)


def evaluate(f: Node, features) -> float:
    row = np.asarray(features, dtype=np.float64).reshape(1, -1)
    return float(evaluate_batch(f, row)[0])


# --- generation and variation ------------------------------------------------

def _random_leaf(config: GrowConfig, rng: np.random.Generator) -> Node:
    if config.constants and rng.random() < 0.2:
        return Const(float(rng.uniform(-1.0, 1.0)))
    return Leaf(int(rng.integers(config.n_features)))


def _grow(levels: int, full: bool, config: GrowConfig, rng, force_op: bool) -> Node:
    if levels <= 1:
        return _random_leaf(config, rng)
    n_ops = len(config.operators)
    if not (full or force_op) and rng.random() >= n_ops / (n_ops + config.n_features):
        return _random_leaf(config, rng)
    kind = config.operators[int(rng.integers(n_ops))]
    arity = OPERATORS[kind][0]
    return Op(kind, tuple(_grow(levels - 1, full, config, rng, False) for _ in range(arity)))


def repair(f: Node, config: GrowConfig, rng: np.random.Generator) -> Node:
    """Truncate subtrees that break the depth or size bound to random leaves."""
    def cut(node, level):
        if isinstance(node, Op):
            if level >= config.max_depth:
                return _random_leaf(config, rng)
            return Op(node.kind, tuple(cut(c, level + 1) for c in node.children))
        return node

    f = cut(f, 1)
    while size(f) > config.max_size:
        ops = [p for p, n in walk(f) if isinstance(n, Op)]
        f = replace(f, ops[int(rng.integers(len(ops)))], _random_leaf(config, rng))
    return f


def random_tree(config: GrowConfig, rng: np.random.Generator) -> Node:
    """Ramped half-and-half: target depth uniform in [min_depth, max_depth], full or grow."""
    target = int(rng.integers(config.min_depth, config.max_depth + 1))
    full = bool(rng.random() < 0.5)
    return repair(_grow(target, full, config, rng, force_op=True), config, rng)


def mutate(f: Node, rng: np.random.Generator, config: GrowConfig,
           kind: str | None = None) -> Node:
    """Point or subtree mutation (chosen at random unless ``kind`` is given)."""
    if kind is None:
        kind = "point" if rng.random() < 0.5 else "subtree"
    nodes = list(walk(f))
    path, node = nodes[int(rng.integers(len(nodes)))]
    if kind == "point":
        if isinstance(node, Op):
            arity = OPERATORS[node.kind][0]
            same = [o for o in config.operators if OPERATORS[o][0] == arity and o != node.kind]
            new = Op(same[int(rng.integers(len(same)))], node.children) if same else node
        else:
            new = _random_leaf(config, rng)
    elif kind == "subtree":
        room = max(1, config.max_depth - len(path))
        new = _grow(int(rng.integers(1, room + 1)), False, config, rng, force_op=False)
    else:
        raise ConfigError(f"unknown mutation kind {kind!r}")
    return repair(replace(f, path, new), config, rng)


def crossover(a: Node, b: Node, rng: np.random.Generator,
              config: GrowConfig) -> tuple[Node, Node]:
    """Swap one random subtree between ``a`` and ``b``."""
    na, nb = list(walk(a)), list(walk(b))
    pa, sa = na[int(rng.integers(len(na)))]
    pb, sb = nb[int(rng.integers(len(nb)))]
    return repair(replace(a, pa, sb), config, rng), repair(replace(b, pb, sa), config, rng)


# --- bigrams -----------------------------------------------------------------

def bigram_histogram(f: Node) -> Counter:
    """Counts of (parent operator, child operator) edges; leaf edges are skipped."""
    counts: Counter = Counter()
    for _, node in walk(f):
        if isinstance(node, Op):
            for c in node.children:
                if isinstance(c, Op):
                    counts[(node.kind, c.kind)] += 1
    return counts


def histogram_to_json(h: Counter) -> dict:
    return {f"{p}>{c}": n for (p, c), n in sorted(h.items())}


def histogram_from_json(d: dict) -> Counter:
    return Counter({tuple(k.split(">")): int(v) for k, v in d.items()})


# --- text form ---------------------------------------------------------------

def to_string(f: Node) -> str:
    if isinstance(f, Leaf):
        return f"x{f.feature}"
    if isinstance(f, Const):
        return repr(float(f.value))
    return f"{f.kind}({','.join(to_string(c) for c in f.children)})"


@dataclass
class _Parser:
    text: str
    n_features: int
    pos: int = field(default=0)

    def error(self, message: str, pos: int | None = None):
        raise ParseError(message, (self.pos if pos is None else pos) + 1)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch: str):
        self.skip()
        if self.pos >= len(self.text):
            self.error(f"expected {ch!r}, got end of input")
        if self.text[self.pos] != ch:
            self.error(f"expected {ch!r}, got {self.text[self.pos]!r}")
        self.pos += 1

    def expr(self) -> Node:
        self.skip()
        start = self.pos
        if start >= len(self.text):
            self.error("unexpected end of input")
        ch = self.text[start]
        if ch.isalpha():
            while self.pos < len(self.text) and self.text[self.pos].isalnum():
                self.pos += 1
            word = self.text[start:self.pos].lower()
            if word[0] == "x" and word[1:].isdigit():
                idx = int(word[1:])
                if idx >= self.n_features:
                    self.error(f"feature index {idx} >= {self.n_features}", start)
                return Leaf(idx)
            if word not in OPERATORS:
                self.error(f"unknown operator {word!r}", start)
            arity = OPERATORS[word][0]
            self.expect("(")
            children = [self.expr()]
            for _ in range(arity - 1):
                self.expect(",")
                children.append(self.expr())
            self.expect(")")
            return Op(word, tuple(children))
        if ch in "+-.0123456789":
            while self.pos < len(self.text) and self.text[self.pos] in "+-.0123456789eE":
                self.pos += 1
            try:
                return Const(float(self.text[start:self.pos]))
            except ValueError:
                self.error(f"bad number {self.text[start:self.pos]!r}", start)
        self.error(f"unexpected character {ch!r}")


def parse(text: str, n_features: int = 10) -> Node:
    p = _Parser(text, n_features)
    tree = p.expr()
    p.skip()
    if p.pos != len(text):
        p.error(f"trailing input {text[p.pos:]!r}")
    return tree
