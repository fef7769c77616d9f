"""Random forests with controllable tree depth, randomized forward-selection
ensembles, and SNR-controlled simulation sweeps."""

from .cart import FittedTree, TreeConfig, best_split, grow_tree, impurity, predict_tree  # noqa: F401
from .ensemble import (Forest, complete_u_statistic, evaluate, fit_forest,  # noqa: F401
                       is_interpolating, predict_forest)
from .errors import RFDepthError  # noqa: F401
from .randfs import RandFSConfig, RandFSModel, fit_randfs, predict_randfs  # noqa: F401
from .resampling import resample  # noqa: F401
from .synthgen import SyntheticSpec, generate, snr_grid  # noqa: F401
from .tabular import Dataset, SweepResult, load_idx, write_results_csv  # noqa: F401

__version__ = "0.1.0"
