"""Multigene genetic-programming symbolic regression with a fitness/complexity Pareto archive.

A model predicts ``bias + sum_i w_i * gene_i(x)``.  Genes are expression
trees over protected primitives; ``(bias, w)`` are refitted by least
squares for every candidate and the candidate's fitness is the mean
absolute error of that fit.  Complexity is the total node count.

Expressions render as Python-syntax strings (features are ``x1..xn``) and
:func:`parse_expr` reads them back.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .protected import pdiv, pexp, plog, proot4, psqrt

__all__ = [
    "Node", "FUNCTIONS", "DEFAULT_FUNCTION_SET", "GpConfig", "MultigeneModel", "ParetoPoint",
    "GpResult", "const", "var", "fn", "eval_expr", "render", "parse_expr", "random_tree",
    "crossover", "mutate", "fit_gene_weights", "fitness_mae", "pareto_front", "evolve",
]

# Values are saturated here after operations that can overflow, so every
# tree evaluates to a finite real on finite input.
BOUND = 1e100


def _sat(v):
    return np.clip(v, -BOUND, BOUND)


def _square(a):
    return _sat(a * a)


FUNCTIONS: dict[str, tuple[int, Callable]] = {
    "add": (2, np.add),
    "sub": (2, np.subtract),
    "mul": (2, lambda a, b: _sat(a * b)),
    "pdiv": (2, lambda a, b: _sat(pdiv(a, b))),
    "psqrt": (1, psqrt),
    "abs": (1, np.abs),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tanh": (1, np.tanh),
    "plog": (1, plog),
    "exp": (1, pexp),
    "square": (1, _square),
    "root4": (1, proot4),
}
DEFAULT_FUNCTION_SET = tuple(FUNCTIONS)
_INFIX = {"add": "+", "sub": "-", "mul": "*"}


# --------------------------------------------------------------------------
# trees


@dataclass(frozen=True, eq=True)
class Node:
    """Function node (``sym`` in :data:`FUNCTIONS`), feature ``"x"`` (``value`` = index) or ``"const"``."""

    sym: str
    children: tuple["Node", ...] = ()
    value: float = 0.0

    def __post_init__(self):
        if self.sym in ("x", "const"):
            if self.children:
                raise ValueError("terminals have no children")
        elif self.sym in FUNCTIONS:
            if len(self.children) != FUNCTIONS[self.sym][0]:
                raise ValueError(f"{self.sym} takes {FUNCTIONS[self.sym][0]} argument(s)")
        else:
            raise ValueError(f"unknown symbol {self.sym!r}")

    @property
    def is_terminal(self) -> bool:
        return not self.children

    def depth(self) -> int:
        """A lone terminal has depth 1."""
        return 1 + max((c.depth() for c in self.children), default=0)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def paths(self, prefix=()) -> Iterator[tuple[tuple[int, ...], int]]:
        """``(path, depth_of_node)`` pairs in prefix order; the root has path ``()`` and depth 1."""
        yield prefix, len(prefix) + 1
        for i, c in enumerate(self.children):
            yield from c.paths(prefix + (i,))

    def get(self, path: Sequence[int]) -> "Node":
        n = self
        for i in path:
            n = n.children[i]
        return n

    def replace(self, path: Sequence[int], new: "Node") -> "Node":
        if not path:
            return new
        i = path[0]
        kids = list(self.children)
        kids[i] = kids[i].replace(path[1:], new)
        return Node(self.sym, tuple(kids), self.value)

    def __str__(self):
        return render(self)


def const(v: float) -> Node:
    return Node("const", value=float(v))


def var(i: int) -> Node:
    """Feature ``i`` (0-based; renders as ``x{i+1}``)."""
    return Node("x", value=int(i))


def fn(sym: str, *args: Node) -> Node:
    return Node(sym, tuple(args))


def eval_expr(t: Node, X) -> np.ndarray | float:
    """Evaluate ``t`` on one feature vector (1-D) or a row matrix (2-D)."""
    X = np.asarray(X, float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    with np.errstate(all="ignore"):
        out = _eval(t, X2)
    out = np.broadcast_to(out, (X2.shape[0],)).astype(float)
    return float(out[0]) if single else out


def _eval(t: Node, X: np.ndarray):
    if t.sym == "x":
        return X[:, int(t.value)]
    if t.sym == "const":
        return np.full(X.shape[0], t.value)
    f = FUNCTIONS[t.sym][1]
    return f(*(_eval(c, X) for c in t.children))


def render(t: Node, names: Sequence[str] | None = None) -> str:
    """Python-syntax string; ``names`` overrides ``x1..xn`` (must be identifiers to re-parse)."""
    if t.sym == "x":
        i = int(t.value)
        return names[i] if names else f"x{i + 1}"
    if t.sym == "const":
        return f"({t.value!r})" if t.value < 0 or math.copysign(1, t.value) < 0 else repr(t.value)
    args = [render(c, names) for c in t.children]
    if t.sym in _INFIX:
        return f"({args[0]} {_INFIX[t.sym]} {args[1]})"
    return f"{t.sym}({', '.join(args)})"


_AST_BIN = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul"}


def parse_expr(text: str, names: Sequence[str] | None = None) -> Node:
    """Inverse of :func:`render`."""
    lookup = {n: i for i, n in enumerate(names)} if names else {}

    def conv(n):
        if isinstance(n, ast.BinOp) and type(n.op) in _AST_BIN:
            return fn(_AST_BIN[type(n.op)], conv(n.left), conv(n.right))
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.USub) and isinstance(n.operand, ast.Constant):
            return const(-float(n.operand.value))
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return const(float(n.value))
        if isinstance(n, ast.Name):
            if n.id in lookup:
                return var(lookup[n.id])
            if n.id.startswith("x") and n.id[1:].isdigit():
                return var(int(n.id[1:]) - 1)
            raise ValueError(f"unknown variable {n.id!r}")
        if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id in FUNCTIONS:
            return fn(n.func.id, *(conv(a) for a in n.args))
        raise ValueError(f"unsupported syntax: {ast.dump(n)}")

    return conv(ast.parse(text, mode="eval").body)


# --------------------------------------------------------------------------
# random generation and variation


def _random_terminal(rng: np.random.Generator, n_features: int, const_range) -> Node:
    if rng.random() < 0.7:
        return var(int(rng.integers(n_features)))
    return const(round(float(rng.uniform(*const_range)), 4))


def random_tree(rng: np.random.Generator, depth: int, n_features: int, *, method: str = "grow",
                functions: Sequence[str] = DEFAULT_FUNCTION_SET, const_range=(-2.0, 2.0)) -> Node:
    """``"full"`` or ``"grow"`` tree of depth at most ``depth`` (exactly ``depth`` for full)."""
    if depth <= 1:
        return _random_terminal(rng, n_features, const_range)
    if method == "grow" and rng.random() < n_features / (n_features + len(functions)):
        return _random_terminal(rng, n_features, const_range)
    sym = functions[int(rng.integers(len(functions)))]
    kids = [random_tree(rng, depth - 1, n_features, method=method, functions=functions,
                        const_range=const_range) for _ in range(FUNCTIONS[sym][0])]
    return Node(sym, tuple(kids))


def crossover(a: Node, b: Node, rng: np.random.Generator, max_depth: int = 7,
              points: tuple[tuple[int, ...], tuple[int, ...]] | None = None) -> tuple[Node, Node]:
    """Swap a random subtree of ``a`` with one of ``b``.

    Offspring deeper than ``max_depth`` are rejected and the parents are
    returned unchanged.  ``points`` fixes the two crossover paths.
    """
    if points is None:
        pa = list(a.paths())
        pb = list(b.paths())
        points = (pa[int(rng.integers(len(pa)))][0], pb[int(rng.integers(len(pb)))][0])
    sa, sb = a.get(points[0]), b.get(points[1])
    ca, cb = a.replace(points[0], sb), b.replace(points[1], sa)
    if ca.depth() > max_depth or cb.depth() > max_depth:
        return a, b
    return ca, cb


def mutate(t: Node, rng: np.random.Generator, n_features: int, max_depth: int = 7, *,
           functions: Sequence[str] = DEFAULT_FUNCTION_SET, const_range=(-2.0, 2.0),
           max_subtree_depth: int = 4) -> Node:
    """Replace one random node with a fresh random subtree that keeps depth within ``max_depth``."""
    paths = list(t.paths())
    path, d = paths[int(rng.integers(len(paths)))]
    room = min(max_depth - d + 1, max_subtree_depth)
    sub = random_tree(rng, int(rng.integers(1, room + 1)), n_features, method="grow",
                      functions=functions, const_range=const_range)
    return t.replace(path, sub)


# --------------------------------------------------------------------------
# multigene models


def fit_gene_weights(genes: Sequence[Node] | np.ndarray, X, y=None) -> tuple[float, np.ndarray]:
    """Least-squares ``(bias, weights)`` of ``y`` on ``[1, gene outputs]``.

    ``genes`` may be trees (evaluated on ``X``) or a precomputed output
    matrix (rows x genes), in which case ``X`` holds the targets.
    Rank-deficient designs get the minimum-norm solution.
    """
    if y is None:
        G, y = np.asarray(genes, float), np.asarray(X, float)
    else:
        G = np.column_stack([eval_expr(g, X) for g in genes])
        y = np.asarray(y, float)
    A = np.column_stack([np.ones(len(y)), G])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(coef[0]), coef[1:]


@dataclass(frozen=True)
class MultigeneModel:
    genes: tuple[Node, ...]
    bias: float
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.genes or len(self.genes) != len(self.weights):
            raise ValueError("need at least one gene and one weight per gene")

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        out = np.full(X.shape[0], self.bias)
        for w, g in zip(self.weights, self.genes):
            out = out + w * eval_expr(g, X)
        return out

    @property
    def complexity(self) -> int:
        return sum(g.size() for g in self.genes)

    def as_tree(self) -> Node:
        t = const(self.bias)
        for w, g in zip(self.weights, self.genes):
            t = fn("add", t, fn("mul", const(w), g))
        return t

    def render(self, names: Sequence[str] | None = None) -> str:
        return render(self.as_tree(), names)

    def to_dict(self) -> dict:
        return {"expression_string": self.render(), "genes": [render(g) for g in self.genes],
                "bias": self.bias, "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "MultigeneModel":
        return cls(tuple(parse_expr(g) for g in d["genes"]), d["bias"], d["weights"])


def fitness_mae(m: MultigeneModel, X, y) -> float:
    y = np.asarray(y, float)
    if y.size == 0:
        raise ValueError("empty data")
    return float(np.mean(np.abs(m.predict(X) - y)))


@dataclass(frozen=True)
class ParetoPoint:
    model: MultigeneModel
    fitness: float
    complexity: int

    def to_dict(self) -> dict:
        return {**self.model.to_dict(), "fitness": self.fitness, "complexity": self.complexity}


def _dominates(a, b) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def pareto_front(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of the non-dominated points (both coordinates minimized), sorted by complexity.

    Exact duplicates are kept once (first occurrence).
    """
    order = sorted(range(len(points)), key=lambda i: (points[i][1], points[i][0], i))
    front, best = [], math.inf
    for i in order:
        f = points[i][0]
        if f < best:
            front.append(i)
            best = f
    return front


# --------------------------------------------------------------------------
# evolution


@dataclass(frozen=True)
class GpConfig:
    population: int = 500
    tournament: int = 3
    max_depth: int = 7
    max_genes: int = 4
    generations: int = 100
    function_set: tuple[str, ...] = DEFAULT_FUNCTION_SET
    seed: int = 0
    crossover_rate: float = 0.84
    mutation_rate: float = 0.14
    high_level_rate: float = 0.2
    elitism: int = 5
    init_depth: tuple[int, int] = (2, 6)
    const_range: tuple[float, float] = (-2.0, 2.0)
    stop_fitness: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "function_set", tuple(self.function_set))
        object.__setattr__(self, "init_depth", tuple(self.init_depth))
        object.__setattr__(self, "const_range", tuple(self.const_range))
        bad = [s for s in self.function_set if s not in FUNCTIONS]
        if bad:
            raise ValueError(f"unknown function symbol(s) {bad}")
        if self.population < 2 or self.tournament < 1 or self.max_genes < 1:
            raise ValueError("population >= 2, tournament >= 1 and max_genes >= 1 required")
        if not 2 <= self.init_depth[0] <= self.init_depth[1] <= self.max_depth:
            raise ValueError("init_depth must satisfy 2 <= lo <= hi <= max_depth")
        if self.crossover_rate + self.mutation_rate > 1 or min(self.crossover_rate, self.mutation_rate) < 0:
            raise ValueError("crossover_rate + mutation_rate must lie in [0, 1]")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GpConfig":
        return cls(**d)


@dataclass
class _Ind:
    genes: tuple[Node, ...]
    outs: tuple[np.ndarray, ...]
    fitness: float = math.inf
    bias: float = 0.0
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    complexity: int = 0

    def model(self) -> MultigeneModel:
        return MultigeneModel(self.genes, self.bias, tuple(self.weights))

    def point(self) -> ParetoPoint:
        return ParetoPoint(self.model(), self.fitness, self.complexity)


@dataclass
class GpResult:
    best: ParetoPoint
    archive: list[ParetoPoint]
    history: list[float]
    population_sizes: list[int]
    config: GpConfig
    evaluated: list[tuple[float, int]] = field(default_factory=list, repr=False)

    def archive_json(self, feature_names: Sequence[str] | None = None) -> str:
        doc = {"config": self.config.to_dict(), "best": self.best.to_dict(),
               "archive": [p.to_dict() for p in self.archive], "history": self.history}
        if feature_names:
            doc["features"] = {f"x{i + 1}": n for i, n in enumerate(feature_names)}
        return json.dumps(doc, sort_keys=True, indent=2)

    def pareto_csv(self) -> str:
        """All distinct evaluated ``(fitness, complexity)`` pairs with a front flag."""
        pts = sorted(set(self.evaluated), key=lambda p: (p[1], p[0]))
        front = set(pareto_front(pts))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fitness", "complexity", "is_front"])
        for i, (f, c) in enumerate(pts):
            w.writerow([repr(f), c, int(i in front)])
        return buf.getvalue()


def _score(ind: _Ind, y: np.ndarray) -> _Ind:
    G = np.column_stack(ind.outs)
    try:
        with np.errstate(all="ignore"):
            b, w = fit_gene_weights(G, y)
            pred = b + G @ w
        mae = float(np.mean(np.abs(pred - y)))
    except np.linalg.LinAlgError:
        b, w, mae = 0.0, np.zeros(len(ind.genes)), math.inf
    ind.bias, ind.weights = b, w
    ind.fitness = mae if math.isfinite(mae) else math.inf
    ind.complexity = sum(g.size() for g in ind.genes)
    return ind


def _make(genes, outs, X, y) -> _Ind:
    outs = tuple(o if o is not None else eval_expr(g, X) for g, o in zip(genes, outs))
    return _score(_Ind(tuple(genes), outs), y)


def _select(rng, pop: list[_Ind], k: int) -> _Ind:
    idx = rng.integers(len(pop), size=k)
    return min((pop[i] for i in idx), key=lambda d: (d.fitness, d.complexity))


class _Archive:
    def __init__(self):
        self.points: list[_Ind] = []

    def update(self, inds: Sequence[_Ind]) -> None:
        cand = self.points + [d for d in inds if math.isfinite(d.fitness)]
        keys = [(d.fitness, d.complexity) for d in cand]
        self.points = [cand[i] for i in pareto_front(keys)]


def evolve(X, y, cfg: GpConfig | None = None,
           callback: Callable[[int, list[ParetoPoint], list[ParetoPoint]], None] | None = None
           ) -> GpResult:
    """Generational multigene GP on rows ``X`` (n x features) and targets ``y``.

    ``callback(generation, population, archive)`` is called after the
    initial population (generation 0) and after every generation.
    """
    cfg = cfg or GpConfig()
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    if y.size == 0 or X.shape[0] != y.size:
        raise ValueError("need a nonempty dataset with one target per row")
    rng = np.random.default_rng(cfg.seed)
    nf = X.shape[1]
    kw = dict(functions=cfg.function_set, const_range=cfg.const_range)
    lo, hi = cfg.init_depth

    pop = []
    for i in range(cfg.population):
        n_genes = int(rng.integers(1, cfg.max_genes + 1))
        genes = []
        for _ in range(n_genes):
            d = lo + (i % (hi - lo + 1))
            genes.append(random_tree(rng, d, nf, method="full" if rng.random() < 0.5 else "grow", **kw))
        pop.append(_make(genes, [None] * n_genes, X, y))

    archive = _Archive()
    archive.update(pop)
    evaluated = {(d.fitness, d.complexity) for d in pop if math.isfinite(d.fitness)}
    history, sizes = [], []

    def report(gen):
        best = min(pop, key=lambda d: (d.fitness, d.complexity))
        history.append(best.fitness)
        sizes.append(len(pop))
        if callback is not None:
            callback(gen, [d.point() for d in pop], [d.point() for d in archive.points])

    report(0)
    for gen in range(1, cfg.generations + 1):
        if cfg.stop_fitness is not None and history[-1] <= cfg.stop_fitness:
            break
        ranked = sorted(pop, key=lambda d: (d.fitness, d.complexity))
        nxt = ranked[:cfg.elitism]
        while len(nxt) < cfg.population:
            r = rng.random()
            if r < cfg.crossover_rate:
                a, b = _select(rng, pop, cfg.tournament), _select(rng, pop, cfg.tournament)
                nxt.extend(_cross(rng, a, b, cfg, X, y))
            elif r < cfg.crossover_rate + cfg.mutation_rate:
                nxt.append(_mutate(rng, _select(rng, pop, cfg.tournament), cfg, nf, X, y))
            else:
                nxt.append(_select(rng, pop, cfg.tournament))
        # an odd crossover pair may overshoot; the surplus child still counts as evaluated
        archive.update(nxt)
        evaluated.update((d.fitness, d.complexity) for d in nxt if math.isfinite(d.fitness))
        pop = nxt[:cfg.population]
        report(gen)

    front = [d.point() for d in archive.points]
    best = min(archive.points, key=lambda d: (d.fitness, d.complexity)).point()
    return GpResult(best, front, history, sizes, cfg, sorted(evaluated, key=lambda p: (p[1], p[0])))


def _cross(rng, a: _Ind, b: _Ind, cfg: GpConfig, X, y) -> list[_Ind]:
    if rng.random() < cfg.high_level_rate and (len(a.genes) > 1 or len(b.genes) > 1):
        # exchange whole genes
        ia = rng.random(len(a.genes)) < 0.5
        ib = rng.random(len(b.genes)) < 0.5
        ga = [(g, o) for g, o, m in zip(a.genes, a.outs, ia) if not m] + \
             [(g, o) for g, o, m in zip(b.genes, b.outs, ib) if m]
        gb = [(g, o) for g, o, m in zip(b.genes, b.outs, ib) if not m] + \
             [(g, o) for g, o, m in zip(a.genes, a.outs, ia) if m]
        kids = []
        for gs in (ga, gb):
            gs = gs[:cfg.max_genes] or [(a.genes[0], a.outs[0])]
            kids.append(_make([g for g, _ in gs], [o for _, o in gs], X, y))
        return kids
    i, j = int(rng.integers(len(a.genes))), int(rng.integers(len(b.genes)))
    ca, cb = crossover(a.genes[i], b.genes[j], rng, cfg.max_depth)
    ga, oa = list(a.genes), list(a.outs)
    gb, ob = list(b.genes), list(b.outs)
    if ca is not a.genes[i]:
        ga[i], oa[i] = ca, None
        gb[j], ob[j] = cb, None
    return [_make(ga, oa, X, y), _make(gb, ob, X, y)]


def _mutate(rng, a: _Ind, cfg: GpConfig, nf: int, X, y) -> _Ind:
    genes, outs = list(a.genes), list(a.outs)
    kw = dict(functions=cfg.function_set, const_range=cfg.const_range)
    r = rng.random()
    if r < 0.1 and len(genes) < cfg.max_genes:
        d = int(rng.integers(cfg.init_depth[0], cfg.init_depth[1] + 1))
        genes.append(random_tree(rng, d, nf, method="grow", **kw))
        outs.append(None)
    elif r < 0.15 and len(genes) > 1:
        k = int(rng.integers(len(genes)))
        del genes[k], outs[k]
    else:
        k = int(rng.integers(len(genes)))
        genes[k] = mutate(genes[k], rng, nf, cfg.max_depth, **kw)
        outs[k] = None
    return _make(genes, outs, X, y)
