"""
One entropy-ascent augmentation step
====================================

ATE moves each input a bounded step along the gradient of the model's
output entropy, so the augmented sample sits where the model is less sure.
The step is clipped elementwise to one standard deviation of the
normalised features. FGSM, which follows the sign of the loss gradient,
is shown alongside for contrast.
"""

import numpy as np

from ateaug import grad
from ateaug.augment import ate_augment, entropy_input_gradient, fgsm_augment
from ateaug.model import ModelConfig, build_model, predict_proba

config = ModelConfig.default(n_classes=2)
params = build_model(config, seed=0)
print("default model parameters:", sum(p.size for p in params.values()))

rng = np.random.default_rng(1)
x = rng.standard_normal((4, 1, 98, 64)).astype(np.float32)


def entropies(batch):
    return grad.entropy(predict_proba(config, params, batch), reduction="none").data


for eps in (0.0, 0.1, 1.0):
    aug = ate_augment(config, params, x, eps)
    print(f"eps={eps}: max |step| {np.abs(aug - x).max():.3f}, "
          f"entropy {entropies(x).mean():.4f} -> {entropies(aug).mean():.4f}")

# the step never points against the gradient
g = entropy_input_gradient(config, params, x)
aug = ate_augment(config, params, x, 1.0)
print("<grad, step> =", float((g.astype(np.float64) * (aug - x)).sum()))

adv = fgsm_augment(config, params, x, np.array([0, 1, 0, 1]), 0.1)
print("FGSM moves every element by exactly eps:", np.allclose(np.abs(adv - x), 0.1, atol=1e-6))
