"""Desk-scale diffusion denoising laboratory.

Invertible diffusion integrators over pluggable noise-prediction fields,
asymmetric interpolation, a conditional-reconstruction OOD detector with
baselines, and an evaluation harness, all checkable against closed-form
Gaussian-mixture oracles.
"""

__version__ = "0.1.0"

from .schedule import (NoiseSchedule, TimeGrid, build_linear_schedule, build_time_grid,
                       posterior_mean_coefficients, default_beta_range)
from .scorefield import (ScoreField, GaussianMixture, MixtureScoreField,
                         mixture_eps, eps_to_score, score_to_eps, guided_eps, guided_score)
from .denoiser import (TrainedDenoiser, DenoiserTrainingConfig, train_denoiser,
                       save_denoiser, load_denoiser)
from .integrator import (IntegratorMethod, Trajectory, forward_diffuse, reverse_step,
                         transfer_function, pndm_step, pf_rk4_step, ddpm_sigma,
                         run_ddp, ddp, reconstruction_error, trajectory_to_csv_rows)
from .interpolation import (InterpolationRequest, slerp, symmetric_interpolate,
                            asymmetric_interpolate, interpolation_sweep)
from .classifier import (Classifier, ClassifierConfig, ClipRule, train_classifier,
                         extract_features, predict, save_classifier, load_classifier)
from .detector import (DetectorConfig, DetectionReport, conditional_reconstruct,
                       ddp_score, ddp_score_repeats, baseline_score, decide)
from .metrics import ScorePair, auroc, fpr_at_tpr, summarize
from .synthdata import (DatasetSpec, LabeledSamples, sample_dataset, make_adversarial_ood,
                        canonical_ind_spec, canonical_ood_specs, canonical_mixture)
from .toy import (GridFunction, SupportMask, MoveOp, MixOp, restrict, apply_operator,
                  moving_operators, dyadic_mixing_operators, default_support_mask,
                  detector_passes, covered_cells, annihilator_empty, verify_witness,
                  AnnihilatorResult)
from .seeds import seed_from_label, rng_from_label
from .errors import ConfigurationError, TrainingError, IntegrationError, StageError
