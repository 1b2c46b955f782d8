"""Bilinear generalized vector approximate message passing.

Joint recovery of a structured matrix X and affine-dictionary parameters b
from componentwise nonlinear (notably quantized) measurements of
``Z = A(b) X``, with EM learning of the prior, dictionary, and channel
hyperparameters.
"""

from .channels import (GaussianChannel, QuantizedGaussianChannel, Quantizer,
                       channel_posterior, em_update_theta_Y, extrinsic_divide,
                       quantized_moments, truncated_standard_moments)
from .core import (LmmsePosterior, PseudoObservation, em_update_gamma_w,
                   em_update_theta_A, extrinsic_x_backward,
                   extrinsic_x_forward, extrinsic_z, lmmse, z_posterior)
from .exceptions import NumericsError, SolverDivergenceError
from .experiments import (ExperimentSpec, TrialData, TrialResult,
                          gen_cs_mu, gen_dict_learn, gen_self_cal,
                          run_experiment)
from .metrics import dnmse, nmse, nmse_dict, nmse_product
from .model import (AffineDictionary, Dimensions, GaussianMessage,
                    ParameterSet, ProblemModel, SolverConfig, SolverState,
                    evaluate_dictionary, load_state, save_state)
from .prior import (BernoulliGaussianPrior, DenoiseResult, denoise,
                    em_update_gamma1, em_update_theta_X)
from .solver import (RunOptions, RunRecord, RunResult, clip_precision, damp,
                     history_dump, initialize, run)

__version__ = "0.1.0"

__all__ = [
    "AffineDictionary", "BernoulliGaussianPrior", "DenoiseResult",
    "Dimensions", "ExperimentSpec", "GaussianChannel", "GaussianMessage",
    "LmmsePosterior", "NumericsError", "ParameterSet", "ProblemModel",
    "PseudoObservation", "QuantizedGaussianChannel", "Quantizer",
    "RunOptions", "RunRecord", "RunResult", "SolverConfig",
    "SolverDivergenceError", "SolverState", "TrialData", "TrialResult",
    "channel_posterior", "clip_precision", "damp", "denoise", "dnmse",
    "em_update_gamma1", "em_update_gamma_w", "em_update_theta_A",
    "em_update_theta_X", "em_update_theta_Y", "evaluate_dictionary",
    "extrinsic_divide", "extrinsic_x_backward", "extrinsic_x_forward",
    "extrinsic_z", "gen_cs_mu", "gen_dict_learn", "gen_self_cal",
    "history_dump", "initialize", "lmmse", "load_state", "nmse", "nmse_dict",
    "nmse_product", "quantized_moments", "run", "run_experiment",
    "save_state", "truncated_standard_moments", "z_posterior",
]
