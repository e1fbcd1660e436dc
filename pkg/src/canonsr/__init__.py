"""canonsr: template-free symbolic regression over canonical-form expressions.

Evolves sets of grammar-derived basis functions against tabular data and
returns a tradeoff front of models over (prediction error, complexity).
"""

__version__ = "0.1.0"

from .config import OPERATOR_NAMES, RunConfig, default_operator_weights
from .dataset import (DataError, Dataset, DoePlan, doe_full_factorial,
                      doe_latin_hypercube, load_csv, oracle_dataset,
                      oracle_targets, save_csv, scale_target_log10,
                      synthetic_oracle, write_points_csv)
from .expr import (Model, complexity, eval_basis, eval_model, interpret_weight,
                   model_from_dict, model_to_dict, nnodes, to_canonical_text,
                   tree_from_dict, tree_to_dict, vc_value)
from .fit import (ErrorReport, RegressionProblem, fit_weights,
                  forward_regression_press, nmse, press)
from .grammar import (Grammar, GrammarError, crossover_sites,
                      default_grammar_text, load_default_grammar,
                      load_grammar_file, parse_grammar, random_tree, validate)
from .evolve import (ParetoArchive, crowding_distance, fit_model,
                     nondominated_sort, nsga2_generation)
from .pipeline import (TradeoffSet, export, filter_test_tradeoff,
                       load_model_json, run_evolution, run_pipeline,
                       simplify_after_generation)

__all__ = [
    "__version__",
    "OPERATOR_NAMES", "RunConfig", "default_operator_weights",
    "DataError", "Dataset", "DoePlan", "doe_full_factorial",
    "doe_latin_hypercube", "load_csv", "oracle_dataset", "oracle_targets",
    "save_csv", "scale_target_log10", "synthetic_oracle", "write_points_csv",
    "Model", "complexity", "eval_basis", "eval_model", "interpret_weight",
    "model_from_dict", "model_to_dict", "nnodes", "to_canonical_text",
    "tree_from_dict", "tree_to_dict", "vc_value",
    "ErrorReport", "RegressionProblem", "fit_weights",
    "forward_regression_press", "nmse", "press",
    "Grammar", "GrammarError", "crossover_sites", "default_grammar_text",
    "load_default_grammar", "load_grammar_file", "parse_grammar",
    "random_tree", "validate",
    "ParetoArchive", "crowding_distance", "fit_model", "nondominated_sort",
    "nsga2_generation",
    "TradeoffSet", "export", "filter_test_tradeoff", "load_model_json",
    "run_evolution", "run_pipeline", "simplify_after_generation",
]
