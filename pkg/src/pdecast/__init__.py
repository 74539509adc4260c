"""Forecasting with sparse, learned partial differential equations."""
from .diffop import ConvKernel, constrain_kernel, moment_vector
from .forecaster import RolloutConfig, rmse, rollout
from .hybrid import HybridPde, evaluate_hybrid, set_weights, train_hybrid
from .metactrl import HyperparamPoint, MetaController, predict_loss, search_hyperparams, train_controller
from .pblock import TIME, Factor, PBlock, TermSpec, TrainConfig, train
from .render import rank_terms, render_equation
from .series import ResamplePlan, TimeSeries, load_csv, resample, split
from .sparsereg import LassoProblem, fista

__version__ = "0.1.0"
