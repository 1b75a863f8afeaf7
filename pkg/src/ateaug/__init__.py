"""Entropy-ascent data augmentation (ATE) for audio classifiers, with a NumPy
autodiff core, LFBE front end, keyword-spotting CNN and evaluation tools."""

from .augment import (AtePolicy, AugmentationPipeline, FgsmPolicy, SpecAugmentPolicy,
                      SpecMixPolicy, apply_pipeline, ate_augment, compute_epsilon,
                      fgsm_augment, parse_pipeline, spec_augment, spec_mix)
from .features import (AudioClip, DatasetStats, FeatureConfig, SpectrogramFeatures,
                       compute_dataset_stats, decode_wav, lfbe_extract)
from .grad import Tape, Tensor, backward, finite_difference_gradient
from .metrics import accuracy, far_at_fixed_frr, far_frr_curve, kfold_cross_validate
from .model import (Checkpoint, ModelConfig, build_model, load_checkpoint, model_forward,
                    param_count, save_checkpoint)
from .train import AdamState, TrainConfig, adam_step, lr_plateau_update, train

__version__ = "0.1.0"
