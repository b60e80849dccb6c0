"""Classification trees with unbiased chi-squared variable selection, two-level
Gini split search, optional kernel / nearest-neighbor node models, and
bagged / random-subspace ensembles."""

from .dataset import Dataset, DatasetError, Priors, Schema, load_dataset
from .ensemble import Ensemble, fit_bagged, fit_forest
from .estimators import BaggedTreeClassifier, ChiTreeClassifier, TreeForestClassifier
from .harness import crossval_error, gen_bias_scenario, gen_chessboard, gen_circle_lines, run_bias_simulation
from .tree import GrowConfig, Tree, build_tree, export_dot, export_text, grow, prune

__version__ = "0.1.0"

__all__ = [
    "BaggedTreeClassifier", "ChiTreeClassifier", "Dataset", "DatasetError", "Ensemble",
    "GrowConfig", "Priors", "Schema", "Tree", "TreeForestClassifier", "build_tree",
    "crossval_error", "export_dot", "export_text", "fit_bagged", "fit_forest",
    "gen_bias_scenario", "gen_chessboard", "gen_circle_lines", "grow", "load_dataset", "prune",
    "run_bias_simulation",
]
