"""Five-conv / three-FC keyword-spotting CNN: config, init, forward, checkpoints."""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import grad
from .errors import ConfigError, DimensionError, FormatError, IntegrityError, VersionError

CHECKPOINT_MAGIC = b"ATEC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: tuple
    stride: tuple

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))


DEFAULT_CONV = (
    ConvSpec(16, (5, 5), (2, 2)),
    ConvSpec(32, (3, 3), (2, 2)),
    ConvSpec(64, (3, 3), (2, 2)),
    ConvSpec(64, (3, 3), (2, 2)),
    ConvSpec(128, (3, 3), (1, 1)),
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus the input normalisation the model was trained with."""

    n_classes: int = 2
    input_frames: int = 98
    input_mels: int = 64
    conv_layers: tuple = DEFAULT_CONV
    fc_dims: tuple = (512, 256, 2)
    padding: str = "same"
    input_mean: float = 0.0
    input_std: float = 1.0

    @classmethod
    def default(cls, n_classes=2, input_frames=98, input_mels=64):
        return cls(n_classes=n_classes, input_frames=input_frames, input_mels=input_mels,
                   fc_dims=(512, 256, n_classes))

    def __post_init__(self):
        convs = tuple(c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.conv_layers)
        object.__setattr__(self, "conv_layers", convs)
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))

    def to_dict(self):
        return {
            "n_classes": self.n_classes,
            "input_frames": self.input_frames,
            "input_mels": self.input_mels,
            "conv_layers": [{"filters": c.filters, "kernel": list(c.kernel),
                             "stride": list(c.stride)} for c in self.conv_layers],
            "fc_dims": list(self.fc_dims),
            "padding": self.padding,
            "input_mean": self.input_mean,
            "input_std": self.input_std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def canonical_text(self):
        # repr-exact floats so normalisation constants round-trip
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def with_normalization(self, mean, std):
        d = self.to_dict()
        d.update(input_mean=float(mean), input_std=float(std))
        return ModelConfig.from_dict(d)


def layer_shapes(config):
    """Ordered (name, shape) for every parameter tensor; validates the geometry."""
    if config.n_classes < 2:
        raise ConfigError("n_classes must be at least 2")
    if not config.fc_dims or config.fc_dims[-1] != config.n_classes:
        raise ConfigError(f"fc_dims {config.fc_dims} must end in n_classes={config.n_classes}")
    height, width, channels = config.input_frames, config.input_mels, 1
    if height < 1 or width < 1:
        raise ConfigError(f"input dims {height}x{width} must be positive")
    shapes = []
    for i, conv in enumerate(config.conv_layers, start=1):
        name = f"conv{i}"
        try:
            height = grad.conv_output_geometry(height, conv.kernel[0], conv.stride[0],
                                               config.padding)[0]
            width = grad.conv_output_geometry(width, conv.kernel[1], conv.stride[1],
                                              config.padding)[0]
        except DimensionError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        if height < 1 or width < 1 or min(conv.stride) < 1:
            raise ConfigError(f"{name}: spatial dims collapse to {height}x{width}")
        shapes.append((f"{name}.weight", (conv.filters, channels, *conv.kernel)))
        shapes.append((f"{name}.bias", (conv.filters,)))
        channels = conv.filters
    in_dim = channels * height * width
    for i, out_dim in enumerate(config.fc_dims, start=1):
        shapes.append((f"fc{i}.weight", (in_dim, out_dim)))
        shapes.append((f"fc{i}.bias", (out_dim,)))
        in_dim = out_dim
    return shapes


def param_count(config):
    return sum(int(np.prod(shape)) for _, shape in layer_shapes(config))


def build_model(config, seed=0):
    """He-uniform weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in layer_shapes(config):
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
        limit = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
    return params


def bind(tape, params):
    """Register every parameter as a leaf of ``tape``."""
    return {name: tape.param(value, dtype=value.dtype, name=name) for name, value in params.items()}


def model_forward(config, params, x):
    """Logits for a batch shaped [batch, 1, frames, mels].

    ``params`` values may be tape leaves (to get weight gradients) or plain
    arrays (treated as constants).
    """
    data = x.data if isinstance(x, grad.Tensor) else np.asarray(x)
    expected = (1, config.input_frames, config.input_mels)
    if data.ndim != 4 or tuple(data.shape[1:]) != expected:
        raise DimensionError(f"model input {data.shape} does not match [batch, *{expected}]")
    h = x
    for i, conv in enumerate(config.conv_layers, start=1):
        h = grad.conv2d(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"],
                        stride=conv.stride, padding=config.padding, activation="relu")
    h = grad.flatten(h)
    last = len(config.fc_dims)
    for i in range(1, last + 1):
        h = grad.affine(h, params[f"fc{i}.weight"], params[f"fc{i}.bias"],
                        activation="relu" if i < last else None)
    return h


def predict_proba(config, params, x, batch_size=256):
    """Softmax outputs for an array batch, evaluated without recording."""
    out = []
    for start in range(0, len(x), batch_size):
        logits = model_forward(config, params, x[start:start + batch_size])
        out.append(grad.softmax(logits).data)
    return np.concatenate(out, axis=0)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    epoch: int = 0
    metric: float = 0.0
    seed: int = 0


def encode_checkpoint(ckpt):
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<IdQ", ckpt.epoch, ckpt.metric, ckpt.seed)]
    text = ckpt.config.canonical_text().encode("utf-8")
    parts.append(struct.pack("<I", len(text)) + text)
    parts.append(struct.pack("<I", len(ckpt.params)))
    for name, value in ckpt.params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated checkpoint")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def raw(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def decode_checkpoint(data):
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {bytes(data[:4])!r}")
    r = _Reader(data)
    r.pos = 4
    (version,) = r.take("<I")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    epoch, metric, seed = r.take("<IdQ")
    (text_len,) = r.take("<I")
    try:
        config = ModelConfig.from_dict(json.loads(r.raw(text_len).decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"unreadable model config: {exc}") from None
    (count,) = r.take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = r.take("<H")
        name = r.raw(name_len).decode("utf-8")
        (ndim,) = r.take("<B")
        shape = r.take(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(r.raw(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes in checkpoint")
    expected = layer_shapes(config)
    if [n for n, _ in expected] != list(params):
        raise IntegrityError(
            f"config declares tensors {[n for n, _ in expected]}, file holds {list(params)}")
    for name, shape in expected:
        if params[name].shape != tuple(shape):
            raise IntegrityError(f"{name}: shape {params[name].shape}, config expects {shape}")
    return Checkpoint(config, params, epoch, metric, seed)


def save_checkpoint(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(ckpt))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
