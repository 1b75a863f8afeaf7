"""
Masking and ordered pipelines
=============================

SpecAugment zeroes random frequency bands and time spans. SpecMix fills
the same kind of mask from another clip and mixes the labels by area.
Pipelines are gated once per batch and their stage order matters, so
ATE followed by SpecAugment differs from the reverse.
"""

import numpy as np

from ateaug.augment import (SpecAugmentPolicy, SpecMixPolicy, apply_pipeline, parse_pipeline,
                            spec_augment, spec_mix)
from ateaug.model import ModelConfig, build_model

rng = np.random.default_rng(0)
feats = rng.standard_normal((98, 64)).astype(np.float32)

masked = spec_augment(feats, SpecAugmentPolicy(max_freq_width=8, max_time_width=20), rng)
print("zeroed cells:", int((masked == 0).sum()), "of", masked.size)

other = rng.standard_normal((98, 64)).astype(np.float32)
mixed, label = spec_mix(feats, 0, other, 1, SpecMixPolicy(), rng, n_classes=2)
print("mixed label", np.round(label, 3))

config = ModelConfig.default(n_classes=2)
params = build_model(config, seed=0)
batch = feats[None, None].repeat(2, axis=0)
labels = np.eye(2, dtype=np.float32)

for text in ("ate,specaugment", "specaugment,ate"):
    pipeline = parse_pipeline(text, p_aug=1.0)
    out, _, applied = apply_pipeline(pipeline, batch, labels, config, params,
                                     np.random.default_rng(5))
    print(f"{pipeline.label():4s} {pipeline.describe():24s} applied={applied} "
          f"mean |change| {np.abs(out - batch).mean():.4f}")

# with p_aug = 0.5 roughly half the batches are touched
pipeline = parse_pipeline("specaugment", p_aug=0.5)
gate_rng = np.random.default_rng(1)
hits = sum(apply_pipeline(pipeline, batch, labels, config, params, gate_rng)[2] for _ in range(1000))
print("augmented batches:", hits, "/ 1000")
