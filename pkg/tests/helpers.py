import numpy as np

from ateaug.model import ConvSpec, ModelConfig

TINY_CONV = (ConvSpec(3, (3, 3), (1, 1)), ConvSpec(4, (3, 3), (2, 2)))


def tiny_config(n_classes=3, frames=8, mels=8):
    """Two conv and two fully connected layers on small inputs."""
    return ModelConfig(n_classes=n_classes, input_frames=frames, input_mels=mels,
                       conv_layers=TINY_CONV, fc_dims=(6, n_classes))


def as64(params):
    return {k: v.astype(np.float64) for k, v in params.items()}
