"""Full run orchestration: evolution, simplification, test filtering, export.

A run turns a training Dataset into a tradeoff set of models over
(error, complexity).  After evolution each front model is simplified by
PRESS-driven forward regression, evaluated on test data, and the set is
filtered down to the models on the testing-error tradeoff before export.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import RunConfig
from .dataset import DataError, Dataset
from .evolve import (ParetoArchive, dominates, fit_model, init_population,
                     nsga2_generation)
from .expr import Model, eval_basis_matrix, model_from_dict, model_to_dict, to_canonical_text
from .fit import RegressionProblem, forward_regression_press, nmse, press
from .grammar import Grammar, default_grammar_text, parse_grammar

ProgressFn = Callable[[int, int, int], None]   # (generation, total, archive size)


@dataclass
class TradeoffSet:
    """Mutually nondominated models, ascending complexity, plus run context."""

    models: List[Model]
    var_names: Tuple[str, ...]
    train_reference: float
    target_name: str = "y"
    target_log_scaled: bool = False

    def __len__(self) -> int:
        return len(self.models)

    def replace_models(self, models: List[Model]) -> "TradeoffSet":
        return TradeoffSet(models=models, var_names=self.var_names,
                           train_reference=self.train_reference,
                           target_name=self.target_name,
                           target_log_scaled=self.target_log_scaled)


def _objective(m: Model, which: str) -> Tuple[float, float]:
    err = m.train_error if which == "train" else m.test_error
    if err is None:
        raise ValueError("model has no test error; run filter_test_tradeoff after scoring")
    return (float(err), float(m.complexity))


def pareto_reduce(models: Sequence[Model], which: str = "train") -> List[Model]:
    """Keep one model per objective point, drop dominated ones, sort by complexity."""
    kept: List[Model] = []
    for m in models:
        obj = _objective(m, which)
        dominated = False
        survivors: List[Model] = []
        for other in kept:
            other_obj = _objective(other, which)
            if other_obj == obj or dominates(other_obj, obj):
                dominated = True
                survivors = kept
                break
            if not dominates(obj, other_obj):
                survivors.append(other)
        kept = survivors
        if not dominated:
            kept.append(m)
    return sorted(kept, key=lambda m: m.complexity)


def _resolve_grammar(cfg: RunConfig) -> Tuple[Grammar, str]:
    if cfg.grammar is None:
        text = default_grammar_text()
    else:
        with open(cfg.grammar, "r", encoding="utf-8") as fh:
            text = fh.read()
    return parse_grammar(text), text


def _reference(train: Dataset) -> float:
    ref = float(np.max(np.abs(train.y)))
    if ref <= 0:
        raise DataError("all-zero training target; error normalization is undefined")
    return ref


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def run_evolution(cfg: RunConfig, train: Dataset, grammar: Optional[Grammar] = None,
                  progress: Optional[ProgressFn] = None) -> TradeoffSet:
    """Evolve models on the training set; returns the archived tradeoff."""
    g = grammar if grammar is not None else _resolve_grammar(cfg)[0]
    rng = np.random.default_rng(cfg.seed)
    reference = _reference(train)
    X, y = train.X, train.y

    executor = None
    workers = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    if workers > 1:
        executor = ThreadPoolExecutor(max_workers=workers)

    try:
        archive = ParetoArchive()
        # the offset-only model is always available as a zero-complexity baseline
        archive.merge(fit_model([], X, y, reference, cfg))
        pop = init_population(g, train.n_vars, X, y, reference, cfg, rng, executor)
        archive.merge_all(pop)
        for gen in range(cfg.generations):
            pop = nsga2_generation(pop, X, y, reference, g, cfg, rng, archive, executor)
            if progress is not None:
                progress(gen + 1, cfg.generations, len(archive))
    finally:
        if executor is not None:
            executor.shutdown()

    models = pareto_reduce(archive.tradeoff(), "train")
    return TradeoffSet(models=models, var_names=train.var_names,
                       train_reference=reference, target_name=train.target_name,
                       target_log_scaled=train.target_log_scaled)


def simplify_after_generation(ts: TradeoffSet, train: Dataset, cfg: RunConfig) -> TradeoffSet:
    """Prune each model's bases by PRESS-driven forward regression, then refit.

    A model is only replaced when the pruned version has a PRESS no worse
    than the original, so predictive ability never degrades.
    """
    X, y = train.X, train.y
    reference = _reference(train)
    out: List[Model] = []
    for m in ts.models:
        if not m.bases:
            out.append(m)
            continue
        columns = [eval_basis_matrix(t, X, cfg.B) for t in m.bases]
        selected, _ = forward_regression_press(columns, y)
        if sorted(selected) == list(range(len(m.bases))):
            out.append(m)
            continue
        original_press = press(RegressionProblem(
            np.column_stack([np.ones(len(y))] + columns), y))
        pruned_press = press(RegressionProblem(
            np.column_stack([np.ones(len(y))] + [columns[j] for j in selected]), y))
        if original_press < pruned_press:
            out.append(m)
            continue
        pruned = fit_model([m.bases[j].clone() for j in selected], X, y, reference, cfg)
        pruned.test_error = m.test_error
        out.append(pruned)
    return ts.replace_models(pareto_reduce(out, "train"))


def score_test_errors(ts: TradeoffSet, test: Dataset, cfg: RunConfig) -> TradeoffSet:
    """Attach test NMSE (training reference) to every model, binding by name."""
    if set(test.var_names) != set(ts.var_names):
        raise DataError(
            f"test variables {sorted(test.var_names)} != training variables "
            f"{sorted(ts.var_names)}")
    order = [test.var_names.index(name) for name in ts.var_names]
    X = test.X[:, order]
    scored: List[Model] = []
    for m in ts.models:
        m2 = m.clone()
        columns = [eval_basis_matrix(t, X, cfg.B) for t in m2.bases]
        pred = np.full(X.shape[0], float(m2.coeffs[0]))
        for j, col in enumerate(columns):
            pred = pred + float(m2.coeffs[j + 1]) * col
        m2.test_error = nmse(pred, test.y, ts.train_reference)
        scored.append(m2)
    return ts.replace_models(scored)


def filter_test_tradeoff(ts: TradeoffSet, test: Dataset, cfg: RunConfig) -> TradeoffSet:
    """Keep only models nondominated in (test error, complexity)."""
    scored = score_test_errors(ts, test, cfg)
    return scored.replace_models(pareto_reduce(scored.models, "test"))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

FRONT_COLUMNS = ("model_id", "complexity", "n_bases", "train_error_pct", "test_error_pct")


def export(ts: TradeoffSet, out_dir: str, cfg: RunConfig,
           grammar_text: Optional[str] = None) -> List[str]:
    """Write front.csv, per-model text/JSON files and run metadata."""
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []

    front_path = os.path.join(out_dir, "front.csv")
    with open(front_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(FRONT_COLUMNS) + "\n")
        for i, m in enumerate(ts.models):
            test_txt = "" if m.test_error is None else repr(float(m.test_error))
            fh.write(f"{i},{m.complexity!r},{m.n_bases},"
                     f"{float(m.train_error)!r},{test_txt}\n")
    written.append(front_path)

    for i, m in enumerate(ts.models):
        text = to_canonical_text(m, ts.var_names, cfg.sig_figs,
                                 log_scaled=ts.target_log_scaled, B=cfg.B)
        txt_path = os.path.join(out_dir, f"model_{i}.txt")
        with open(txt_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        written.append(txt_path)

        payload = {
            "model": model_to_dict(m),
            "var_names": list(ts.var_names),
            "target_name": ts.target_name,
            "target_log_scaled": ts.target_log_scaled,
            "train_reference": ts.train_reference,
            "B": cfg.B,
            "text": text,
        }
        json_path = os.path.join(out_dir, f"model_{i}.json")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        written.append(json_path)

    if grammar_text is None:
        grammar_text = _resolve_grammar(cfg)[1]
    meta = {
        "package": f"canonsr {__version__}",
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "grammar_sha256": hashlib.sha256(grammar_text.encode("utf-8")).hexdigest(),
        "n_models": len(ts.models),
    }
    meta_path = os.path.join(out_dir, "run_meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    written.append(meta_path)
    return written


def load_model_json(path: str) -> dict:
    """Reload an exported model file; 'model' is rebuilt as a Model object."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["model"] = model_from_dict(payload["model"])
    payload["var_names"] = tuple(payload["var_names"])
    return payload


# ---------------------------------------------------------------------------
# one-call pipeline
# ---------------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, train: Dataset, test: Dataset,
                 out_dir: Optional[str] = None,
                 progress: Optional[ProgressFn] = None) -> TradeoffSet:
    """Evolve, simplify, filter on test error, optionally export."""
    g, g_text = _resolve_grammar(cfg)
    ts = run_evolution(cfg, train, grammar=g, progress=progress)
    ts = simplify_after_generation(ts, train, cfg)
    ts = filter_test_tradeoff(ts, test, cfg)
    if out_dir is not None:
        export(ts, out_dir, cfg, grammar_text=g_text)
    return ts
