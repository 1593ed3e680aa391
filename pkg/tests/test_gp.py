import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nyqtune.gp import (GpConfig, MultigeneModel, Node, const, crossover, eval_expr, evolve, fit_gene_weights,
                        fitness_mae, fn, mutate, pareto_front, parse_expr, random_tree, render, var)

NF = 6
PROBE = np.array(np.meshgrid(*[np.array([-1e3, -2.0, -1e-9, 0.0, 0.5, 7.0])] * 2)).reshape(2, -1).T
PROBE6 = np.hstack([PROBE, PROBE[:, ::-1], PROBE ** 2])


def _rand_tree(seed, depth=6):
    rng = np.random.default_rng(seed)
    return random_tree(rng, depth, NF, method="full" if seed % 2 else "grow")


class TestEval:
    def test_add(self):
        assert eval_expr(fn("add", var(0), var(1)), [2.0, 3.0]) == 5.0

    def test_protected_division(self):
        assert eval_expr(fn("pdiv", var(0), var(1)), [1.0, 0.0]) == 0.0

    def test_protected_log(self):
        assert eval_expr(fn("plog", var(0)), [-5.0]) == pytest.approx(1.60944, abs=1e-5)
        assert eval_expr(fn("plog", var(0)), [0.0]) == 0.0

    def test_protected_sqrt(self):
        assert eval_expr(fn("psqrt", var(0)), [-9.0]) == 3.0

    def test_saturation(self):
        t = fn("square", fn("square", fn("exp", fn("exp", var(0)))))
        assert np.isfinite(eval_expr(t, [10.0]))

    def test_arity_checked(self):
        with pytest.raises(ValueError):
            Node("add", (var(0),))
        with pytest.raises(ValueError):
            Node("foo")

    @given(st.integers(0, 100_000))
    def test_closure(self, seed):
        assert np.all(np.isfinite(eval_expr(_rand_tree(seed), PROBE6)))


class TestRender:
    def test_simple(self):
        t = fn("add", fn("mul", const(-1.5), var(0)), fn("psqrt", var(2)))
        assert render(t) == "(((-1.5) * x1) + psqrt(x3))"
        assert render(t, ["a", "b", "c"]) == "(((-1.5) * a) + psqrt(c))"

    @given(st.integers(0, 100_000))
    def test_round_trip(self, seed):
        t = _rand_tree(seed)
        back = parse_expr(render(t))
        assert back == t
        assert np.allclose(eval_expr(back, PROBE6), eval_expr(t, PROBE6), rtol=1e-12, atol=1e-12)

    def test_model_string_round_trip(self):
        m = MultigeneModel((fn("sin", var(0)), fn("pdiv", var(1), const(0.3))), -0.25, (2.0, -1e-7))
        t = parse_expr(m.render())
        X = np.random.default_rng(0).normal(size=(20, NF))
        assert np.allclose(eval_expr(t, X), m.predict(X), rtol=1e-12, atol=1e-12)
        assert MultigeneModel.from_dict(m.to_dict()) == m

    def test_unknown_syntax(self):
        with pytest.raises(ValueError):
            parse_expr("x1 / x2")


class TestVariation:
    @given(st.integers(0, 100_000))
    def test_crossover_depth_and_conservation(self, seed):
        rng = np.random.default_rng(seed)
        a, b = _rand_tree(seed), _rand_tree(seed + 1)
        ca, cb = crossover(a, b, rng, 7)
        assert ca.depth() <= 7 and cb.depth() <= 7
        assert ca.size() + cb.size() == a.size() + b.size()

    def test_rejected_offspring_return_parents(self):
        deep = _rand_tree(1, 7)
        assert deep.depth() == 7
        leaf_path = max(deep.paths(), key=lambda p: p[1])[0]
        a, b = crossover(deep, deep, np.random.default_rng(0), 7, points=(leaf_path, ()))
        assert a is deep and b is deep

    def test_self_crossover_same_point(self):
        t = _rand_tree(3)
        for path, _ in list(t.paths())[:5]:
            a, b = crossover(t, t, np.random.default_rng(0), points=(path, path))
            assert a == t and b == t

    @given(st.integers(0, 100_000))
    def test_mutation(self, seed):
        rng = np.random.default_rng(seed)
        t = _rand_tree(seed)
        m = mutate(t, rng, NF, 7)
        assert m.depth() <= 7
        assert np.all(np.isfinite(eval_expr(m, PROBE6)))
        # exactly one subtree position differs
        assert any(t.replace(p, m.get(p)) == m for p, _ in t.paths() if _path_exists(m, p))


def _path_exists(t, path):
    try:
        t.get(path)
        return True
    except IndexError:
        return False


class TestWeights:
    X = np.random.default_rng(1).uniform(-2, 2, (40, NF))

    def test_identical_gene(self):
        y = eval_expr(fn("sin", var(0)), self.X)
        b, w = fit_gene_weights([fn("sin", var(0))], self.X, y)
        assert b == pytest.approx(0.0, abs=1e-12) and w[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_gene_gets_zero_weight(self):
        y = self.X[:, 0] * 2 + 1
        b, w = fit_gene_weights([var(0), const(0.0)], self.X, y)
        assert w[1] == 0.0 and w[0] == pytest.approx(2.0) and b == pytest.approx(1.0)

    def test_duplicate_genes(self):
        y = np.cos(self.X[:, 1]) + self.X[:, 2]
        g = fn("add", var(0), var(2))
        b1, w1 = fit_gene_weights([g], self.X, y)
        b2, w2 = fit_gene_weights([g, g], self.X, y)
        m1, m2 = MultigeneModel([g], b1, w1), MultigeneModel([g, g], b2, w2)
        assert np.allclose(m1.predict(self.X), m2.predict(self.X))

    @given(st.integers(0, 10_000))
    def test_weight_optimality(self, seed):
        rng = np.random.default_rng(seed)
        genes = [_rand_tree(seed + k, 3) for k in range(3)]
        y = rng.normal(size=len(self.X))
        b, w = fit_gene_weights(genes, self.X, y)
        G = np.column_stack([eval_expr(g, self.X) for g in genes])
        sse = lambda bb, ww: float(np.sum((bb + G @ ww - y) ** 2))
        base = sse(b, w)
        for i in range(len(w) + 1):
            for d in (-1e-3, 1e-3):
                bb, ww = b, w.copy()
                if i == 0:
                    bb = b + d
                else:
                    ww[i - 1] += d
                assert sse(bb, ww) >= base - 1e-9 * max(1.0, base)


class TestMae:
    def test_perfect(self):
        X = np.arange(10.0)[:, None]
        assert fitness_mae(MultigeneModel([var(0)], 0.0, [1.0]), X, X[:, 0]) == 0.0

    def test_simple(self):
        m = MultigeneModel([const(0.0)], 2.0, [0.0])
        assert fitness_mae(m, np.zeros((2, 1)), [1.0, 3.0]) == 1.0

    def test_median_is_best_constant(self):
        y = np.array([0.3, 5.0, 1.1, 9.0, 2.0])
        X = np.zeros((5, 1))
        score = lambda c: fitness_mae(MultigeneModel([const(0.0)], c, [0.0]), X, y)
        grid = np.linspace(-1, 10, 2201)
        assert grid[np.argmin([score(c) for c in grid])] == pytest.approx(np.median(y), abs=0.006)
        assert all(score(np.median(y)) <= score(c) for c in grid)

    def test_empty(self):
        with pytest.raises(ValueError):
            fitness_mae(MultigeneModel([var(0)], 0, [1]), np.zeros((0, 1)), [])


class TestPareto:
    def test_single(self):
        assert pareto_front([(1.0, 5)]) == [0]

    def test_example(self):
        pts = [(1, 5), (2, 3), (3, 4)]
        assert sorted(pareto_front(pts)) == [0, 1]

    @given(st.lists(st.tuples(st.floats(0, 10), st.integers(1, 30)), min_size=1, max_size=60))
    def test_brute_force(self, pts):
        front = pareto_front(pts)
        dom = lambda a, b: a[0] <= b[0] and a[1] <= b[1] and a != b
        for i in front:
            assert not any(dom(q, pts[i]) for q in pts)
        for j in range(len(pts)):
            if j not in front:
                assert any(dom(q, pts[j]) or q == pts[j] for k, q in enumerate(pts) if k != j)
        fit = [pts[i][0] for i in front]
        assert all(a > b for a, b in zip(fit, fit[1:]))


class TestEvolve:
    def test_config(self):
        c = GpConfig()
        assert (c.population, c.tournament, c.max_depth, c.max_genes, c.generations) == (500, 3, 7, 4, 100)
        assert GpConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ValueError):
            GpConfig(function_set=("add", "nope"))

    def test_planted_formula(self):
        X = np.random.default_rng(7).uniform(0.1, 5.0, (50, 2))
        y = X[:, 0] + X[:, 1]
        res = evolve(X, y, GpConfig(seed=0))
        assert res.best.fitness < 1e-6
        assert set(res.population_sizes) == {500}
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))

    def test_archive_audit_and_depth(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0.1, 3.0, (30, NF))
        y = np.sin(X[:, 0]) * X[:, 3] + np.sqrt(X[:, 5])
        seen = []

        def audit(gen, pop, arch):
            seen.extend((p.fitness, p.complexity) for p in pop)
            for p in pop:
                assert all(g.depth() <= 7 for g in p.model.genes)
                assert 1 <= len(p.model.genes) <= 4
            for a in arch:
                assert not any(f <= a.fitness and c <= a.complexity and (f, c) != (a.fitness, a.complexity)
                               for f, c in seen)

        res = evolve(X, y, GpConfig(population=60, generations=15, seed=5), callback=audit)
        assert len(res.history) == 16

    def test_deterministic_and_exports(self):
        X = np.random.default_rng(3).uniform(0.1, 3.0, (20, 3))
        y = X[:, 0] * X[:, 2]
        cfg = GpConfig(population=40, generations=5, seed=8)
        a, b = evolve(X, y, cfg), evolve(X, y, cfg)
        assert a.archive_json() == b.archive_json()
        doc = json.loads(a.archive_json(["L", "tau_max", "tau_min"]))
        member = doc["archive"][0]
        assert {"expression_string", "fitness", "complexity", "bias", "weights"} <= set(member)
        lines = a.pareto_csv().splitlines()
        assert lines[0] == "fitness,complexity,is_front"
        assert sum(int(l.split(",")[2]) for l in lines[1:]) == len(a.archive)

    def test_bad_data(self):
        with pytest.raises(ValueError):
            evolve(np.zeros((0, 2)), np.zeros(0))


@pytest.mark.parametrize("seed", range(10))
def test_depth_fuzz(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, (25, NF))
    y = rng.normal(size=25)

    def check(gen, pop, arch):
        assert max(g.depth() for p in pop for g in p.model.genes) <= 7

    evolve(X, y, GpConfig(population=40, generations=10, seed=seed), callback=check)
