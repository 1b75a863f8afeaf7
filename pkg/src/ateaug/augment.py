"""Input-space augmentations: entropy ascent (ATE), FGSM, SpecAugment, SpecMix.

All functions are pure given an explicit ``numpy.random.Generator``. Batches
are arrays shaped [batch, 1, frames, mels]; labels inside a pipeline are soft
[batch, n_classes] matrices so label-mixing stages compose with the rest.
"""

from dataclasses import dataclass, field

import numpy as np

from . import grad
from .errors import ConfigError, DimensionError
from .model import model_forward


@dataclass(frozen=True)
class AtePolicy:
    """Entropy-ascent stage; ``epsilon`` bounds every element of the step."""

    epsilon: float = 1.0
    name = "ate"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError(f"ate epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class FgsmPolicy:
    epsilon: float = 1.0
    name = "fgsm"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError(f"fgsm epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class SpecAugmentPolicy:
    n_freq_masks: int = 1
    max_freq_width: int = 8
    n_time_masks: int = 1
    max_time_width: int = 20
    mask_value: float = 0.0
    name = "specaugment"

    def __post_init__(self):
        if min(self.n_freq_masks, self.max_freq_width,
               self.n_time_masks, self.max_time_width) < 0:
            raise ConfigError(f"{self.name}: mask counts and widths must be >= 0")

    def check_shape(self, frames, mels):
        if self.max_freq_width > mels or self.max_time_width > frames:
            raise ConfigError(
                f"{self.name}: widths F={self.max_freq_width}, T={self.max_time_width} "
                f"exceed feature shape {frames}x{mels}")


@dataclass(frozen=True)
class SpecMixPolicy(SpecAugmentPolicy):
    name = "specmix"


STAGES = {"ate": AtePolicy, "fgsm": FgsmPolicy,
          "specaugment": SpecAugmentPolicy, "specmix": SpecMixPolicy}
_SHORT = {"ate": "A", "fgsm": "F", "specaugment": "S", "specmix": "SM"}


@dataclass(frozen=True)
class AugmentationPipeline:
    """Ordered stages behind a single per-batch Bernoulli gate."""

    stages: tuple = ()
    p_aug: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not 0.0 <= self.p_aug <= 1.0:
            raise ConfigError(f"p_aug must lie in [0, 1], got {self.p_aug}")

    @property
    def names(self):
        return [s.name for s in self.stages]

    def describe(self):
        return " → ".join(self.names) if self.stages else "none"

    def label(self):
        """Short column label, e.g. ``A+S`` for ATE followed by SpecAugment."""
        return "+".join(_SHORT[n] for n in self.names) if self.stages else "NoAug"


def make_stage(name, **params):
    try:
        cls = STAGES[name]
    except KeyError:
        raise ConfigError(f"unknown augmentation stage {name!r}; "
                          f"choose from {sorted(STAGES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def parse_pipeline(text, p_aug=0.5, stage_params=None):
    """``"ate,specaugment"`` -> pipeline; ``"none"`` or ``""`` -> empty pipeline."""
    stage_params = stage_params or {}
    names = [t.strip() for t in text.split(",") if t.strip()] if text else []
    if names == ["none"]:
        names = []
    return AugmentationPipeline(tuple(make_stage(n, **stage_params.get(n, {})) for n in names),
                                p_aug)


def compute_epsilon(stats, normalized=False):
    """Clip threshold: one standard deviation of the training features."""
    return 1.0 if normalized else float(stats.std)


# -- gradient-based stages --------------------------------------------------------

def entropy_input_gradient(config, params, x):
    """d(sum of per-example output entropies)/dx with the parameters held fixed."""
    tape = grad.Tape()
    xt = tape.data(x, dtype=np.asarray(x).dtype)
    probs = grad.softmax(model_forward(config, params, xt))
    root = grad.entropy(probs, reduction="sum")
    return tape.backward(root, [xt])[xt]


def loss_input_gradient(config, params, x, y):
    tape = grad.Tape()
    xt = tape.data(x, dtype=np.asarray(x).dtype)
    loss = grad.cross_entropy(grad.softmax(model_forward(config, params, xt)), y)
    return tape.backward(loss, [xt])[xt]


def clip_step(x, gradient, epsilon):
    """``x + clip(gradient, -epsilon, epsilon)``, guaranteeing ``|result - x| <= epsilon``.

    Rounding in the addition can overshoot the bound, by more than one ulp of
    the result when it lands near zero. Such elements are snapped to the
    representable value nearest ``x +/- epsilon`` and then stepped toward ``x``.
    """
    x = np.asarray(x)
    if epsilon == 0:
        return x.copy()
    eps = x.dtype.type(epsilon)
    out = x + np.clip(gradient, -eps, eps).astype(x.dtype)
    ref = x.astype(np.float64)
    for attempt in range(4):
        # float64 differences of float32 values are exact
        step = out.astype(np.float64) - ref
        over = np.abs(step) > epsilon
        if not over.any():
            break
        if attempt == 0:
            out[over] = (ref + np.sign(step) * epsilon).astype(x.dtype)[over]
        else:
            out[over] = np.nextafter(out[over], x[over])
    return out


def ate_augment(config, params, x, epsilon):
    """One clipped gradient-ascent step on the output entropy; returns a new array."""
    x = np.asarray(x)
    if epsilon == 0:
        return x.copy()
    return clip_step(x, entropy_input_gradient(config, params, x), epsilon)


def fgsm_augment(config, params, x, y, epsilon):
    """``x + epsilon * sign(d loss / dx)``, for comparison runs."""
    x = np.asarray(x)
    if epsilon == 0:
        return x.copy()
    g = loss_input_gradient(config, params, x, y)
    return x + x.dtype.type(epsilon) * np.sign(g).astype(x.dtype)


# -- masking stages -----------------------------------------------------------------

def draw_mask(shape, policy, rng):
    """Boolean (frames, mels) mask: frequency bands first, then time spans."""
    frames, mels = shape
    policy.check_shape(frames, mels)
    mask = np.zeros(shape, dtype=bool)
    for _ in range(policy.n_freq_masks):
        w = int(rng.integers(0, policy.max_freq_width + 1))
        start = int(rng.integers(0, mels - w + 1))
        mask[:, start:start + w] = True
    for _ in range(policy.n_time_masks):
        w = int(rng.integers(0, policy.max_time_width + 1))
        start = int(rng.integers(0, frames - w + 1))
        mask[start:start + w, :] = True
    return mask


def spec_augment(features, policy, rng):
    """Mask one (frames, mels) matrix; cells outside the masks are untouched."""
    out = np.array(features, copy=True)
    out[draw_mask(out.shape, policy, rng)] = policy.mask_value
    return out


def _as_distribution(y, n_classes):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0:
        vec = np.zeros(n_classes)
        vec[int(y)] = 1.0
        return vec
    return y


def mix_with_mask(x1, y1, x2, y2, mask, n_classes=None):
    """Copy ``x2`` into ``x1`` where ``mask`` is set; labels mix by the copied fraction."""
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    if x1.shape != x2.shape or mask.shape != x1.shape:
        raise DimensionError(f"spec_mix shapes differ: {x1.shape}, {x2.shape}, mask {mask.shape}")
    lam = float(mask.mean())
    mixed = np.where(mask, x2, x1)
    label = (1.0 - lam) * _as_distribution(y1, n_classes) + lam * _as_distribution(y2, n_classes)
    return mixed, label


def spec_mix(x1, y1, x2, y2, policy, rng, n_classes=None):
    """SpecAugment-shaped regions of ``x1`` replaced from ``x2``; returns (features, soft label)."""
    x1 = np.asarray(x1)
    if x1.shape != np.shape(x2):
        raise DimensionError(f"spec_mix shapes differ: {x1.shape} vs {np.shape(x2)}")
    return mix_with_mask(x1, y1, x2, y2, draw_mask(x1.shape, policy, rng), n_classes)


def spec_augment_batch(batch, policy, rng):
    out = np.array(batch, copy=True)
    for i in range(out.shape[0]):
        out[i, 0] = spec_augment(out[i, 0], policy, rng)
    return out


def spec_mix_batch(batch, labels, policy, rng):
    """Each example takes masked regions from a random other example of the batch."""
    bsz = batch.shape[0]
    out = np.array(batch, copy=True)
    new_labels = np.array(labels, dtype=np.float64, copy=True)
    for i in range(bsz):
        j = (i + int(rng.integers(1, bsz))) % bsz if bsz > 1 else i
        out[i, 0], new_labels[i] = spec_mix(batch[i, 0], labels[i], batch[j, 0], labels[j],
                                            policy, rng)
    return out, new_labels.astype(np.asarray(labels).dtype)


def apply_stage(stage, batch, labels, config, params, rng):
    if stage.name == "ate":
        return ate_augment(config, params, batch, stage.epsilon), labels
    if stage.name == "fgsm":
        return fgsm_augment(config, params, batch, labels, stage.epsilon), labels
    if stage.name == "specaugment":
        return spec_augment_batch(batch, stage, rng), labels
    if stage.name == "specmix":
        return spec_mix_batch(batch, labels, stage, rng)
    raise ConfigError(f"unknown stage {stage.name!r}")


def apply_pipeline(pipeline, batch, labels, config, params, rng):
    """Gate once, then run every stage in order on the previous stage's output.

    Returns ``(batch, labels, applied)``.
    """
    if not pipeline.stages or not rng.random() < pipeline.p_aug:
        return batch, labels, False
    for stage in pipeline.stages:
        batch, labels = apply_stage(stage, batch, labels, config, params, rng)
    return batch, labels, True
