"""
k-fold cross-validation
=======================

The benchmark harness trains once per fold and reports the mean and
population standard deviation of fold accuracy, formatted as
``mean±std``. A public benchmark with predefined folds plugs in through a
manifest with a ``fold=`` column; here a synthetic three-class set stands in.
"""

import numpy as np

from ateaug.augment import parse_pipeline
from ateaug.data import SyntheticSpec, assign_folds, synth_clip
from ateaug.features import AudioClip, lfbe_extract
from ateaug.metrics import kfold_cross_validate
from ateaug.model import ConvSpec, ModelConfig
from ateaug.train import TrainConfig, make_fold_runner

spec = SyntheticSpec(n_classes=3, clips_per_class=10, noise_level=0.5)
x = np.stack([lfbe_extract(AudioClip(synth_clip(spec, c, c * 10 + i), spec.sample_rate)).matrix
              for c in range(3) for i in range(10)])[:, None]
y = np.repeat(np.arange(3), 10)

# a reduced network keeps the demo quick
config = ModelConfig(n_classes=3, conv_layers=(ConvSpec(8, (3, 3), (4, 4)),), fc_dims=(32, 3))
tc = TrainConfig(epochs=4, batch_size=8, pipeline=parse_pipeline("ate,specaugment", 0.5))
folds = assign_folds(len(y), 5, seed=0)
result = kfold_cross_validate(x, y, folds, 5, make_fold_runner(config, tc, val_fraction=0.2))
print("fold accuracies", np.round(result.accuracies, 3))
print("accuracy (5-fold)", result)
