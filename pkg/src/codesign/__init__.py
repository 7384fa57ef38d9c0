"""Joint optimisation of building energy system design and control."""

from .baselines import GridSearchResult, RuleBasedController, design_lattice, grid_search_design
from .config import ExperimentConfig, load_config
from .data import DatasetSplit, YearSeries, load_year_csv, make_split, synthesize_year
from .design_dist import MixtureParams, design_loss, init_mixture, log_prob, sample_designs
from .env import BuildingEnv, Design, EnvConstants, EnvState, annuity_factor
from .experiment import run_experiment, run_seed_sweep
from .rollout import PolicyController, evaluate, evaluate_lattice

__version__ = "0.1.0"
