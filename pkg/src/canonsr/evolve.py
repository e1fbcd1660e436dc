"""NSGA-II engine and the variation operators over sets of basis trees.

Individuals are Models: a set of grammar-derived basis trees whose linear
coefficients are always refit by least squares, never evolved.  Selection
minimizes (training error, complexity); a run-wide archive keeps every
nondominated valid individual seen so far.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import OPERATOR_NAMES, RunConfig
from .expr import (INF, BasisTree, Model, NTNode, VCLeaf, WeightLeaf,
                   complexity_of_bases, eval_basis_matrix, repair_all_zero_vc,
                   tree_depth, walk)
from .fit import RegressionProblem, fit_weights, nmse
from .grammar import Grammar, crossover_sites, nonterminal_symbols, random_tree, validate

# validate every produced individual against the grammar (slow; used by tests)
VALIDATE_EVERY_GENERATION = False

Objectives = Tuple[float, float]   # (train error %, complexity), both minimized


# ---------------------------------------------------------------------------
# dominance machinery
# ---------------------------------------------------------------------------

def dominates(a: Objectives, b: Objectives) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def nondominated_sort(points: Sequence[Objectives]) -> List[List[int]]:
    """Fast nondominated sort; front k is dominated only by fronts < k."""
    n = len(points)
    dominated_by: List[List[int]] = [[] for _ in range(n)]
    dom_count = [0] * n
    fronts: List[List[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(points[p], points[q]):
                dominated_by[p].append(q)
            elif dominates(points[q], points[p]):
                dom_count[p] += 1
        if dom_count[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt: List[int] = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                dom_count[q] -= 1
                if dom_count[q] == 0:
                    nxt.append(q)
        fronts.append(nxt)
        i += 1
    fronts.pop()
    return fronts


def crowding_distance(front: Sequence[Objectives]) -> List[float]:
    """Per-member crowding distance; boundary members get +inf per objective."""
    n = len(front)
    if n == 0:
        raise ValueError("front must be nonempty")
    dist = [0.0] * n
    for m in range(2):
        order = sorted(range(n), key=lambda i: front[i][m])
        dist[order[0]] = INF
        dist[order[-1]] = INF
        lo, hi = front[order[0]][m], front[order[-1]][m]
        span = hi - lo
        if span <= 0 or not np.isfinite(span):
            continue
        for k in range(1, n - 1):
            gap = front[order[k + 1]][m] - front[order[k - 1]][m]
            dist[order[k]] += gap / span
    return dist


class ParetoArchive:
    """Run-wide nondominated set over (train error, complexity).

    At most one model is kept per exact objective pair (first wins), so the
    archive maps to a strictly monotone tradeoff curve.
    """

    def __init__(self):
        self.models: List[Model] = []

    def __len__(self) -> int:
        return len(self.models)

    def merge(self, candidate: Model) -> bool:
        if not candidate.valid or not np.isfinite(candidate.train_error):
            return False
        cand_obj = (candidate.train_error, candidate.complexity)
        keep: List[Model] = []
        for m in self.models:
            obj = (m.train_error, m.complexity)
            if obj == cand_obj or dominates(obj, cand_obj):
                return False
            if not dominates(cand_obj, obj):
                keep.append(m)
        keep.append(candidate)
        self.models = keep
        return True

    def merge_all(self, candidates: Sequence[Model]) -> None:
        for m in candidates:
            self.merge(m)

    def tradeoff(self) -> List[Model]:
        return sorted(self.models, key=lambda m: m.complexity)


# ---------------------------------------------------------------------------
# fitness evaluation
# ---------------------------------------------------------------------------

def fit_model(bases: Sequence[BasisTree], X: np.ndarray, y: np.ndarray,
              reference: float, cfg: RunConfig) -> Model:
    """Least-squares fit of the linear weights; non-finite bases invalidate."""
    cpx = complexity_of_bases(bases, cfg.wb, cfg.wvc)
    columns = []
    for tree in bases:
        col = eval_basis_matrix(tree, X, cfg.B)
        if not np.all(np.isfinite(col)):
            return Model(bases=list(bases), coeffs=None, train_error=INF,
                         complexity=cpx, valid=False)
        columns.append(col)
    Phi = np.column_stack([np.ones(X.shape[0])] + columns)
    coeffs = fit_weights(RegressionProblem(Phi, y))
    error = nmse(Phi @ coeffs, y, reference)
    valid = bool(np.isfinite(error))
    return Model(bases=list(bases), coeffs=coeffs,
                 train_error=error if valid else INF,
                 complexity=cpx, valid=valid)


# ---------------------------------------------------------------------------
# leaf-level operators
# ---------------------------------------------------------------------------

def weight_cauchy_mutate(w: WeightLeaf, scale: float, B: float, rng) -> WeightLeaf:
    """Add a zero-mean Cauchy step to the stored value, clamped to [-2B, 2B]."""
    step = scale * rng.standard_cauchy()
    return WeightLeaf(float(np.clip(w.stored + step, -2.0 * B, 2.0 * B)))


def vc_onepoint_crossover(a: VCLeaf, b: VCLeaf, rng) -> Tuple[VCLeaf, VCLeaf]:
    """Swap exponent suffixes at a uniform cut point; repairs all-zero children."""
    if len(a.exponents) != len(b.exponents):
        raise ValueError("variable combos have different lengths")
    d = len(a.exponents)
    if d == 1:
        return a.clone(), b.clone()
    k = int(rng.integers(1, d))
    ea = a.exponents[:k] + b.exponents[k:]
    eb = b.exponents[:k] + a.exponents[k:]
    return (VCLeaf(repair_all_zero_vc(ea, rng)),
            VCLeaf(repair_all_zero_vc(eb, rng)))


def vc_exponent_mutate(vc: VCLeaf, rng, exp_cap: int = 5) -> VCLeaf:
    """Step one exponent by +/-1, clamped to the cap; repairs all-zero results."""
    exps = list(vc.exponents)
    dim = int(rng.integers(len(exps)))
    step = 1 if rng.integers(2) == 0 else -1
    exps[dim] = int(np.clip(exps[dim] + step, -exp_cap, exp_cap))
    return VCLeaf(repair_all_zero_vc(exps, rng))


# ---------------------------------------------------------------------------
# model-level operators (each returns a list of offspring bases, or None
# when a precondition fails and the caller should resample)
# ---------------------------------------------------------------------------

def _clone_bases(m: Model) -> List[BasisTree]:
    return [t.clone() for t in m.bases]


def _nonempty_subset(items: Sequence, rng) -> List:
    # uniform over nonempty subsets, by rejection
    while True:
        mask = rng.integers(0, 2, size=len(items))
        if mask.any():
            return [items[i] for i in range(len(items)) if mask[i]]


def op_basis_set_crossover(p1: Model, p2: Model, cfg: RunConfig, rng):
    if not p1.bases or not p2.bases:
        return None
    chosen = ([t.clone() for t in _nonempty_subset(p1.bases, rng)]
              + [t.clone() for t in _nonempty_subset(p2.bases, rng)])
    if len(chosen) > cfg.max_bases:
        keep = sorted(rng.choice(len(chosen), size=cfg.max_bases, replace=False))
        chosen = [chosen[int(i)] for i in keep]
    return [chosen]


def op_basis_delete(p: Model, cfg: RunConfig, rng):
    if not p.bases:
        return None
    bases = _clone_bases(p)
    bases.pop(int(rng.integers(len(bases))))
    return [bases]


def op_basis_add(p: Model, g: Grammar, n_vars: int, cfg: RunConfig, rng):
    if len(p.bases) >= cfg.max_bases:
        return None
    bases = _clone_bases(p)
    bases.append(random_tree(g, cfg.max_depth, rng, n_vars, B=cfg.B))
    return [bases]


def op_basis_copy_in(p: Model, donor: Model, cfg: RunConfig, rng):
    if len(p.bases) >= cfg.max_bases or not donor.bases:
        return None
    sites: List[NTNode] = []
    for tree in donor.bases:
        sites.extend(crossover_sites(tree, "REPVC"))
    pick = sites[int(rng.integers(len(sites)))]
    bases = _clone_bases(p)
    bases.append(pick.clone())
    return [bases]


def _nt_sites(tree: BasisTree) -> List[Tuple[NTNode, Optional[NTNode], int, int]]:
    return [(node, parent, idx, level) for node, parent, idx, level in walk(tree)
            if isinstance(node, NTNode)]


def _replace_subtree(tree: BasisTree, parent: Optional[NTNode], idx: int,
                     replacement: NTNode) -> BasisTree:
    if parent is None:
        return replacement
    parent.children[idx] = replacement
    return tree


def op_subtree_crossover(p1: Model, p2: Model, cfg: RunConfig, rng):
    """Swap same-symbol subtrees; retries on depth violations, then gives up."""
    if not p1.bases or not p2.bases:
        return None
    i1 = int(rng.integers(len(p1.bases)))
    i2 = int(rng.integers(len(p2.bases)))
    shared = sorted(set(nonterminal_symbols(p1.bases[i1]))
                    & set(nonterminal_symbols(p2.bases[i2])))
    b1, b2 = _clone_bases(p1), _clone_bases(p2)
    if not shared:
        return [b1, b2]

    symbol = shared[int(rng.integers(len(shared)))]
    for _ in range(10):
        t1 = p1.bases[i1].clone()
        t2 = p2.bases[i2].clone()
        s1 = [s for s in _nt_sites(t1) if s[0].symbol == symbol]
        s2 = [s for s in _nt_sites(t2) if s[0].symbol == symbol]
        n1, par1, idx1, lvl1 = s1[int(rng.integers(len(s1)))]
        n2, par2, idx2, lvl2 = s2[int(rng.integers(len(s2)))]
        if (lvl1 - 1 + tree_depth(n2) > cfg.max_depth
                or lvl2 - 1 + tree_depth(n1) > cfg.max_depth):
            continue
        t1 = _replace_subtree(t1, par1, idx1, n2)
        t2 = _replace_subtree(t2, par2, idx2, n1)
        b1[i1] = t1
        b2[i2] = t2
        return [b1, b2]
    return [b1, b2]   # abandoned: parents returned unchanged


def op_subtree_mutate(p: Model, g: Grammar, n_vars: int, cfg: RunConfig, rng):
    """Regrow a uniformly chosen subtree within the remaining depth budget."""
    if not p.bases:
        return None
    bases = _clone_bases(p)
    i = int(rng.integers(len(bases)))
    tree = bases[i]
    sites = _nt_sites(tree)
    node, parent, idx, level = sites[int(rng.integers(len(sites)))]
    budget = cfg.max_depth - level + 1
    fresh = random_tree(g, budget, rng, n_vars, B=cfg.B, start=node.symbol)
    bases[i] = _replace_subtree(tree, parent, idx, fresh)
    return [bases]


def _leaf_sites(bases: Sequence[BasisTree], leaf_type) -> List[Tuple[NTNode, int]]:
    sites = []
    for tree in bases:
        for node, parent, idx, _ in walk(tree):
            if isinstance(node, leaf_type):
                sites.append((parent, idx))
    return sites


def op_weight_cauchy_mutate(p: Model, cfg: RunConfig, rng, scale: float = 1.0):
    bases = _clone_bases(p)
    sites = _leaf_sites(bases, WeightLeaf)
    if not sites:
        return None
    parent, idx = sites[int(rng.integers(len(sites)))]
    parent.children[idx] = weight_cauchy_mutate(parent.children[idx], scale, cfg.B, rng)
    return [bases]


def op_vc_exponent_mutate(p: Model, cfg: RunConfig, rng):
    bases = _clone_bases(p)
    sites = _leaf_sites(bases, VCLeaf)
    if not sites:
        return None
    parent, idx = sites[int(rng.integers(len(sites)))]
    parent.children[idx] = vc_exponent_mutate(parent.children[idx], rng, cfg.exp_cap)
    return [bases]


def op_vc_onepoint_crossover(p1: Model, p2: Model, cfg: RunConfig, rng):
    b1, b2 = _clone_bases(p1), _clone_bases(p2)
    s1 = _leaf_sites(b1, VCLeaf)
    s2 = _leaf_sites(b2, VCLeaf)
    if not s1 or not s2:
        return None
    par1, idx1 = s1[int(rng.integers(len(s1)))]
    par2, idx2 = s2[int(rng.integers(len(s2)))]
    c1, c2 = vc_onepoint_crossover(par1.children[idx1], par2.children[idx2], rng)
    par1.children[idx1] = c1
    par2.children[idx2] = c2
    return [b1, b2]


_TWO_PARENT_OPS = {"basis_set_crossover", "basis_copy_in",
                   "subtree_crossover", "vc_onepoint_crossover"}


def apply_operator(name: str, parents: Sequence[Model], g: Grammar, n_vars: int,
                   cfg: RunConfig, rng):
    if name == "basis_set_crossover":
        result = op_basis_set_crossover(parents[0], parents[1], cfg, rng)
        if result is None:
            # fallback for a parent without bases
            result = op_basis_add(parents[0], g, n_vars, cfg, rng)
        return result
    if name == "basis_delete":
        return op_basis_delete(parents[0], cfg, rng)
    if name == "basis_add":
        return op_basis_add(parents[0], g, n_vars, cfg, rng)
    if name == "basis_copy_in":
        return op_basis_copy_in(parents[0], parents[1], cfg, rng)
    if name == "subtree_crossover":
        return op_subtree_crossover(parents[0], parents[1], cfg, rng)
    if name == "subtree_mutate":
        return op_subtree_mutate(parents[0], g, n_vars, cfg, rng)
    if name == "weight_cauchy_mutate":
        return op_weight_cauchy_mutate(parents[0], cfg, rng)
    if name == "vc_onepoint_crossover":
        return op_vc_onepoint_crossover(parents[0], parents[1], cfg, rng)
    if name == "vc_exponent_mutate":
        return op_vc_exponent_mutate(parents[0], cfg, rng)
    raise ValueError(f"unknown operator {name!r}")


# ---------------------------------------------------------------------------
# NSGA-II generation loop
# ---------------------------------------------------------------------------

def init_population(g: Grammar, n_vars: int, X: np.ndarray, y: np.ndarray,
                    reference: float, cfg: RunConfig, rng,
                    executor=None) -> List[Model]:
    """Random individuals with basis counts uniform in [1, max_bases]."""
    all_bases = []
    for _ in range(cfg.population):
        nb = int(rng.integers(1, cfg.max_bases + 1))
        all_bases.append([random_tree(g, cfg.max_depth, rng, n_vars, B=cfg.B)
                          for _ in range(nb)])
    return _fit_all(all_bases, X, y, reference, cfg, executor)


def _fit_all(bases_list, X, y, reference, cfg, executor) -> List[Model]:
    if executor is None:
        return [fit_model(b, X, y, reference, cfg) for b in bases_list]
    futures = [executor.submit(fit_model, b, X, y, reference, cfg) for b in bases_list]
    return [f.result() for f in futures]


def _rank_and_crowding(objs: Sequence[Objectives]) -> Tuple[List[int], List[float]]:
    fronts = nondominated_sort(objs)
    rank = [0] * len(objs)
    crowd = [0.0] * len(objs)
    for r, front in enumerate(fronts):
        dists = crowding_distance([objs[i] for i in front])
        for i, d in zip(front, dists):
            rank[i] = r
            crowd[i] = d
    return rank, crowd


def _tournament(rank: List[int], crowd: List[float], rng) -> int:
    i = int(rng.integers(len(rank)))
    j = int(rng.integers(len(rank)))
    if rank[j] < rank[i] or (rank[j] == rank[i] and crowd[j] > crowd[i]):
        return j
    return i


def _weighted_operator_choice(cfg: RunConfig, rng) -> str:
    weights = np.array([cfg.operator_weights[n] for n in OPERATOR_NAMES])
    idx = rng.choice(len(OPERATOR_NAMES), p=weights / weights.sum())
    return OPERATOR_NAMES[int(idx)]


def _environmental_selection(combined: List[Model], objs: List[Objectives],
                             mu: int) -> List[Model]:
    fronts = nondominated_sort(objs)
    chosen: List[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= mu:
            chosen.extend(front)
            continue
        dists = crowding_distance([objs[i] for i in front])
        order = sorted(range(len(front)), key=lambda k: -dists[k])
        chosen.extend(front[k] for k in order[: mu - len(chosen)])
        break
    return [combined[i] for i in chosen]


def nsga2_generation(pop: List[Model], X: np.ndarray, y: np.ndarray,
                     reference: float, g: Grammar, cfg: RunConfig, rng,
                     archive: ParetoArchive, executor=None) -> List[Model]:
    """One mu+lambda NSGA-II step (lambda = mu) with archive maintenance."""
    if len(pop) != cfg.population:
        raise ValueError(f"population size {len(pop)} != configured {cfg.population}")
    n_vars = X.shape[1]
    objs = [(m.train_error, m.complexity) for m in pop]
    rank, crowd = _rank_and_crowding(objs)

    offspring_bases: List[List[BasisTree]] = []
    guard = 0
    while len(offspring_bases) < len(pop):
        name = _weighted_operator_choice(cfg, rng)
        n_parents = 2 if name in _TWO_PARENT_OPS else 1
        parents = [pop[_tournament(rank, crowd, rng)] for _ in range(n_parents)]
        result = apply_operator(name, parents, g, n_vars, cfg, rng)
        if result is None:
            guard += 1
            if guard > 100 * len(pop):
                # degenerate population; force growth to make progress
                result = op_basis_add(parents[0], g, n_vars, cfg, rng) or \
                    op_basis_delete(parents[0], cfg, rng)
                if result is None:
                    continue
            else:
                continue
        offspring_bases.extend(result)
    offspring_bases = offspring_bases[: len(pop)]

    offspring = _fit_all(offspring_bases, X, y, reference, cfg, executor)

    if VALIDATE_EVERY_GENERATION:
        for child in offspring:
            if len(child.bases) > cfg.max_bases:
                raise AssertionError("offspring exceeds max_bases")
            for tree in child.bases:
                problems = validate(tree, g, max_depth=cfg.max_depth, B=cfg.B,
                                    exp_cap=cfg.exp_cap, n_vars=n_vars)
                if problems:
                    raise AssertionError(f"invalid offspring tree: {problems}")

    archive.merge_all(offspring)
    combined = pop + offspring
    combined_objs = objs + [(m.train_error, m.complexity) for m in offspring]
    return _environmental_selection(combined, combined_objs, len(pop))
