"""Surrogate-gradient-field latent navigation.

Train a contractive-leaning auxiliary mapping F(z, c) -> z on pairs sampled
from a forward-only condition oracle, then steer latents toward target
conditions by integrating the field its partial derivatives induce, and
score manipulations with strength-agnostic accuracy/disentanglement curves.
"""

__version__ = "0.1.0"

from . import backend
from .auxmap import ArchConfig, AuxMap, LinearMap, adain, leaky_relu
from .baselines import OptTrace, latent_opt, linear_path, path_deviation, transfer_direction
from .errors import (CorruptCheckpointError, DivergedNavigationError, InvalidArgumentError,
                     OracleProtocolError, SgfError, SingularFieldError,
                     TrainingDivergedError, UndefinedDeviationError,
                     UnsupportedOperationError)
from .evaluate import EvalConfig, EvalResult, make_target, prepare_samples, run_battery, run_mdc_evaluation
from .metrics import (MdcCurve, MdcPoint, SampleOutcome, accuracy, attribute_changed,
                      disentanglement, harmonic_mean, invert_target, mds,
                      mds_accumulated, read_mdc_csv, select_best_strength, write_mdc_csv)
from .navigator import NavConfig, NavTrace, count_oracle_calls, navigate, neumann_apply, surrogate_field
from .numerics import (AdamState, RngState, adam_step, finite_diff_grad, finite_diff_jvp,
                       matvec, power_iteration, sample_gaussian)
from .oracle import ExternalOracle, OracleSpec, SyntheticOracle, build_oracle, parse_oracle_spec
from .trainer import (PairDataset, TrainConfig, TrainReport, build_dataset, load_checkpoint,
                      mse_loss, save_checkpoint, train)

__all__ = [name for name in dir() if not name.startswith("_")]
