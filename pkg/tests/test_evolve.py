"""NSGA-II machinery and variation-operator tests."""

import numpy as np
import pytest

import canonsr.evolve as evolve
from canonsr.config import RunConfig
from canonsr.evolve import (ParetoArchive, apply_operator, crowding_distance,
                            dominates, fit_model, init_population,
                            nondominated_sort, nsga2_generation,
                            op_basis_add, op_basis_copy_in, op_basis_delete,
                            op_basis_set_crossover, op_subtree_crossover,
                            op_subtree_mutate, vc_exponent_mutate,
                            vc_onepoint_crossover, weight_cauchy_mutate)
from canonsr.expr import Model, VCLeaf, WeightLeaf, tree_depth, tree_to_dict
from canonsr.grammar import load_default_grammar, random_tree, validate

INF = float("inf")
G = load_default_grammar()


def _cfg(**kw):
    defaults = dict(population=24, generations=3, max_bases=5, max_depth=6, seed=0)
    defaults.update(kw)
    return RunConfig(**defaults)


def _train_data(n_vars=3, n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.5, 1.5, size=(n, n_vars))
    y = 2.0 + X[:, 0] / X[:, 1]
    return X, y, float(np.max(np.abs(y)))


def _random_model(cfg, n_vars, rng, X, y, ref, n_bases=None):
    nb = n_bases if n_bases is not None else int(rng.integers(1, cfg.max_bases + 1))
    bases = [random_tree(G, cfg.max_depth, rng, n_vars, B=cfg.B) for _ in range(nb)]
    return fit_model(bases, X, y, ref, cfg)


# ---------------------------------------------------------------------------
# dominance oracle
# ---------------------------------------------------------------------------

def bruteforce_fronts(points):
    """Peel nondominated layers by direct O(n^2) dominance checks."""
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [p for p in remaining
                 if not any(dominates(points[q], points[p])
                            for q in remaining if q != p)]
        fronts.append(sorted(front))
        remaining = [p for p in remaining if p not in front]
    return fronts


def test_sort_mutually_nondominated_points():
    fronts = nondominated_sort([(1.0, 5.0), (2.0, 4.0), (3.0, 3.0)])
    assert [sorted(f) for f in fronts] == [[0, 1, 2]]


def test_sort_strict_dominance():
    assert nondominated_sort([(1.0, 1.0), (2.0, 2.0)]) == [[0], [1]]


def test_sort_matches_bruteforce_on_random_points():
    rng = np.random.default_rng(20)
    points = [tuple(v) for v in rng.integers(0, 12, size=(50, 2)).astype(float)]
    ours = [sorted(f) for f in nondominated_sort(points)]
    assert ours == bruteforce_fronts(points)


def test_sort_handles_infinite_errors():
    points = [(INF, 5.0), (INF, 3.0), (1.0, 10.0)]
    fronts = [sorted(f) for f in nondominated_sort(points)]
    assert fronts == [[1, 2], [0]]


# ---------------------------------------------------------------------------
# crowding distance
# ---------------------------------------------------------------------------

def test_crowding_front_of_two_is_infinite():
    assert crowding_distance([(1.0, 2.0), (2.0, 1.0)]) == [INF, INF]


def test_crowding_collinear_middle_member():
    # equally spaced in both objectives: 1.0 per objective
    front = [(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)]
    dist = crowding_distance(front)
    assert dist[0] == INF and dist[2] == INF
    assert dist[1] == pytest.approx(2.0)


def test_crowding_permutation_invariant():
    rng = np.random.default_rng(21)
    front = [tuple(v) for v in rng.uniform(0, 1, size=(9, 2))]
    base = crowding_distance(front)
    perm = rng.permutation(9)
    permuted = crowding_distance([front[i] for i in perm])
    for k, i in enumerate(perm):
        assert permuted[k] == pytest.approx(base[i])


# ---------------------------------------------------------------------------
# leaf operators
# ---------------------------------------------------------------------------

def test_cauchy_mutation_stays_in_bounds():
    rng = np.random.default_rng(22)
    for _ in range(2000):
        w = WeightLeaf(float(rng.uniform(-20, 20)))
        out = weight_cauchy_mutate(w, 1.0, 10.0, rng)
        assert abs(out.stored) <= 20.0


def test_cauchy_mutation_step_statistics():
    # standard Cauchy: median |step| = scale, signs split evenly
    rng = np.random.default_rng(23)
    w = WeightLeaf(0.0)
    steps = np.array([weight_cauchy_mutate(w, 1.0, 1e9, rng).stored
                      for _ in range(100000)])
    assert abs(np.median(np.abs(steps)) - 1.0) < 0.1
    positive = float(np.mean(steps > 0))
    assert abs(positive - 0.5) < 0.01


def test_vc_crossover_cut_enumeration():
    # d=2 has a single cut point; children are the suffix swaps, repaired
    rng = np.random.default_rng(24)
    a, b = VCLeaf([1, 0]), VCLeaf([0, 2])
    c1, c2 = vc_onepoint_crossover(a, b, rng)
    assert c1.exponents == [1, 2]
    assert any(c2.exponents)                      # [0, 0] must be repaired
    assert sum(1 for e in c2.exponents if e) == 1
    assert all(e in (-1, 0, 1) for e in c2.exponents)


def test_vc_crossover_identical_parents():
    rng = np.random.default_rng(25)
    a = VCLeaf([2, -1, 1])
    c1, c2 = vc_onepoint_crossover(a, VCLeaf([2, -1, 1]), rng)
    assert c1.exponents == [2, -1, 1]
    assert c2.exponents == [2, -1, 1]


def test_vc_crossover_single_dim_returns_copies():
    rng = np.random.default_rng(26)
    c1, c2 = vc_onepoint_crossover(VCLeaf([2]), VCLeaf([-1]), rng)
    assert (c1.exponents, c2.exponents) == ([2], [-1])


def test_vc_crossover_children_subset_of_parent_exponents():
    rng = np.random.default_rng(27)
    for _ in range(500):
        d = int(rng.integers(2, 6))
        a = VCLeaf(rng.integers(-2, 3, size=d))
        b = VCLeaf(rng.integers(-2, 3, size=d))
        c1, c2 = vc_onepoint_crossover(a, b, rng)
        for child in (c1, c2):
            if not any(child.exponents):
                continue
            raw_ok = all(child.exponents[i] in (a.exponents[i], b.exponents[i])
                         for i in range(d))
            if not raw_ok:
                # a repaired child differs from the raw swap in exactly one dim
                diffs = [i for i in range(d)
                         if child.exponents[i] not in (a.exponents[i], b.exponents[i], 0)]
                assert len(diffs) <= 1 and all(abs(child.exponents[i]) == 1 for i in diffs)


def test_vc_mutate_clamps_at_cap():
    rng = np.random.default_rng(28)
    out = vc_exponent_mutate(VCLeaf([2]), rng, exp_cap=2)
    assert out.exponents[0] in (1, 2)             # +1 clamps, -1 steps down


def test_vc_mutate_repairs_zero():
    rng = np.random.default_rng(29)
    for _ in range(200):
        out = vc_exponent_mutate(VCLeaf([1]), rng, exp_cap=5)
        assert any(out.exponents)


def test_vc_mutate_l1_distance_at_most_two():
    rng = np.random.default_rng(30)
    for _ in range(1000):
        d = int(rng.integers(1, 5))
        exps = [int(e) for e in rng.integers(-3, 4, size=d)]
        if not any(exps):
            exps[0] = 1
        vc = VCLeaf(exps)
        out = vc_exponent_mutate(vc, rng, exp_cap=5)
        l1 = sum(abs(a - b) for a, b in zip(vc.exponents, out.exponents))
        assert l1 <= 2


# ---------------------------------------------------------------------------
# model-level operators
# ---------------------------------------------------------------------------

def _fitted_pair(cfg, seed=31):
    rng = np.random.default_rng(seed)
    X, y, ref = _train_data()
    p1 = _random_model(cfg, 3, rng, X, y, ref, n_bases=2)
    p2 = _random_model(cfg, 3, rng, X, y, ref, n_bases=3)
    return p1, p2, rng, X, y, ref


def test_basis_set_crossover_single_basis_parents():
    cfg = _cfg()
    rng = np.random.default_rng(32)
    X, y, ref = _train_data()
    p1 = _random_model(cfg, 3, rng, X, y, ref, n_bases=1)
    p2 = _random_model(cfg, 3, rng, X, y, ref, n_bases=1)
    (child,) = op_basis_set_crossover(p1, p2, cfg, rng)
    assert len(child) == 2                        # one from each parent
    assert tree_to_dict(child[0]) == tree_to_dict(p1.bases[0])
    assert tree_to_dict(child[1]) == tree_to_dict(p2.bases[0])


def test_basis_set_crossover_child_count_and_provenance():
    cfg = _cfg(max_bases=4)
    p1, p2, rng, *_ = _fitted_pair(cfg)
    parent_blobs = {str(tree_to_dict(t)) for t in p1.bases + p2.bases}
    for _ in range(100):
        (child,) = op_basis_set_crossover(p1, p2, cfg, rng)
        assert 2 <= len(child) <= cfg.max_bases
        for tree in child:
            assert str(tree_to_dict(tree)) in parent_blobs


def test_basis_delete_to_constant():
    cfg = _cfg()
    rng = np.random.default_rng(33)
    X, y, ref = _train_data()
    p = _random_model(cfg, 3, rng, X, y, ref, n_bases=1)
    (child,) = op_basis_delete(p, cfg, rng)
    assert child == []


def test_basis_add_respects_cap():
    cfg = _cfg(max_bases=2)
    rng = np.random.default_rng(34)
    X, y, ref = _train_data()
    p = _random_model(cfg, 3, rng, X, y, ref, n_bases=2)
    assert op_basis_add(p, G, 3, cfg, rng) is None    # precondition fails: resample


def test_basis_copy_in_validates():
    cfg = _cfg()
    p1, p2, rng, *_ = _fitted_pair(cfg, seed=35)
    (child,) = op_basis_copy_in(p1, p2, cfg, rng)
    assert len(child) == len(p1.bases) + 1
    for tree in child:
        assert validate(tree, G, max_depth=cfg.max_depth, n_vars=3) == []


def test_subtree_crossover_single_vc_trees_swap():
    cfg = _cfg()
    rng = np.random.default_rng(36)
    X, y, ref = _train_data()
    a = fit_model([random_tree(G, 1, rng, 3)], X, y, ref, cfg)
    b = fit_model([random_tree(G, 1, rng, 3)], X, y, ref, cfg)
    c1, c2 = op_subtree_crossover(a, b, cfg, rng)
    assert tree_to_dict(c1[0]) == tree_to_dict(b.bases[0])
    assert tree_to_dict(c2[0]) == tree_to_dict(a.bases[0])


def test_subtree_crossover_outputs_validate_and_respect_depth():
    cfg = _cfg()
    p1, p2, rng, *_ = _fitted_pair(cfg, seed=37)
    for _ in range(200):
        for child in op_subtree_crossover(p1, p2, cfg, rng):
            for tree in child:
                assert tree_depth(tree) <= cfg.max_depth
                assert validate(tree, G, max_depth=cfg.max_depth, n_vars=3) == []


def test_subtree_mutate_outputs_validate():
    cfg = _cfg()
    rng = np.random.default_rng(38)
    X, y, ref = _train_data()
    p = _random_model(cfg, 3, rng, X, y, ref, n_bases=2)
    for _ in range(200):
        (child,) = op_subtree_mutate(p, G, 3, cfg, rng)
        for tree in child:
            assert tree_depth(tree) <= cfg.max_depth
            assert validate(tree, G, max_depth=cfg.max_depth, n_vars=3) == []


def test_mutating_single_vc_tree_at_root_regrows():
    cfg = _cfg()
    rng = np.random.default_rng(39)
    X, y, ref = _train_data()
    p = fit_model([random_tree(G, 1, rng, 3)], X, y, ref, cfg)
    (child,) = op_subtree_mutate(p, G, 3, cfg, rng)
    assert validate(child[0], G, max_depth=cfg.max_depth, n_vars=3) == []


def test_operator_preconditions_trigger_resampling():
    cfg = _cfg()
    rng = np.random.default_rng(40)
    X, y, ref = _train_data()
    constant = fit_model([], X, y, ref, cfg)
    assert op_basis_delete(constant, cfg, rng) is None
    assert apply_operator("weight_cauchy_mutate", [constant], G, 3, cfg, rng) is None
    assert apply_operator("vc_exponent_mutate", [constant], G, 3, cfg, rng) is None
    # basis_set_crossover falls back to basis_add when a parent is empty
    other = _random_model(cfg, 3, rng, X, y, ref, n_bases=1)
    result = apply_operator("basis_set_crossover", [constant, other], G, 3, cfg, rng)
    assert result is not None and len(result[0]) == 1


# ---------------------------------------------------------------------------
# fitness evaluation
# ---------------------------------------------------------------------------

def test_fit_model_constant():
    cfg = _cfg()
    X, y, ref = _train_data()
    m = fit_model([], X, y, ref, cfg)
    assert m.valid and m.n_bases == 0
    assert m.complexity == 0.0
    assert m.coeffs == pytest.approx([np.mean(y)])


def test_fit_model_invalid_on_nonfinite_basis():
    cfg = _cfg()
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, 2.0])
    from canonsr.expr import NTNode
    bases = [NTNode("REPVC", 0, [VCLeaf([-1])])]      # 1/x blows up at x=0
    m = fit_model(bases, X, y, 2.0, cfg)
    assert not m.valid
    assert m.train_error == INF
    assert m.complexity > 0


# ---------------------------------------------------------------------------
# generations and archive
# ---------------------------------------------------------------------------

def test_generation_closure_and_archive_nondominated():
    cfg = _cfg(population=20)
    rng = np.random.default_rng(cfg.seed)
    X, y, ref = _train_data()
    archive = ParetoArchive()
    pop = init_population(G, 3, X, y, ref, cfg, rng)
    archive.merge_all(pop)
    evolve.VALIDATE_EVERY_GENERATION = True
    try:
        for _ in range(4):
            pop = nsga2_generation(pop, X, y, ref, G, cfg, rng, archive)
    finally:
        evolve.VALIDATE_EVERY_GENERATION = False
    assert len(pop) == cfg.population
    objs = [(m.train_error, m.complexity) for m in archive.models]
    for i, a in enumerate(objs):
        for j, b in enumerate(objs):
            if i != j:
                assert not dominates(a, b)


def test_fixed_seed_identical_archives():
    def run():
        cfg = _cfg(population=20, seed=5)
        rng = np.random.default_rng(cfg.seed)
        X, y, ref = _train_data()
        archive = ParetoArchive()
        pop = init_population(G, 3, X, y, ref, cfg, rng)
        archive.merge_all(pop)
        for _ in range(5):
            pop = nsga2_generation(pop, X, y, ref, G, cfg, rng, archive)
        return [(m.train_error, m.complexity, [tree_to_dict(t) for t in m.bases])
                for m in archive.tradeoff()]
    assert run() == run()


def test_archive_monotone_improvement():
    cfg = _cfg(population=20, seed=6)
    rng = np.random.default_rng(cfg.seed)
    X, y, ref = _train_data()
    archive = ParetoArchive()
    pop = init_population(G, 3, X, y, ref, cfg, rng)
    archive.merge_all(pop)

    def best_error_at_or_below(cpx):
        errs = [m.train_error for m in archive.models if m.complexity <= cpx]
        return min(errs) if errs else INF

    checkpoints = [0.0, 15.0, 30.0, 60.0, 120.0]
    previous = {c: best_error_at_or_below(c) for c in checkpoints}
    for _ in range(5):
        pop = nsga2_generation(pop, X, y, ref, G, cfg, rng, archive)
        current = {c: best_error_at_or_below(c) for c in checkpoints}
        for c in checkpoints:
            assert current[c] <= previous[c]
        previous = current


def test_archive_keeps_one_model_per_objective_point():
    archive = ParetoArchive()
    m1 = Model(bases=[], coeffs=np.array([1.0]), train_error=5.0, complexity=0.0, valid=True)
    m2 = Model(bases=[], coeffs=np.array([2.0]), train_error=5.0, complexity=0.0, valid=True)
    assert archive.merge(m1)
    assert not archive.merge(m2)
    assert archive.models == [m1]


def test_archive_rejects_invalid():
    archive = ParetoArchive()
    bad = Model(bases=[], coeffs=None, train_error=INF, complexity=0.0, valid=False)
    assert not archive.merge(bad)
