"""
Log mel-filterbank features from a WAV file
===========================================

Write a synthetic tone clip to disk, read it back and turn it into a
98 x 64 log mel spectrogram with 25 ms frames and a 10 ms hop.
"""

import os
import tempfile

import numpy as np

from ateaug.data import SyntheticSpec, synth_clip
from ateaug.features import (FeatureConfig, compute_dataset_stats, lfbe_extract,
                             mel_filterbank, normalize, read_wav, write_wav)

spec = SyntheticSpec(class_tones=((440.0,), (1760.0,)), noise_level=0.1)
path = os.path.join(tempfile.mkdtemp(), "tone.wav")
write_wav(path, synth_clip(spec, class_index=1, clip_index=0), spec.sample_rate)

clip = read_wav(path)
print(f"{clip.duration:.2f}s at {clip.sample_rate} Hz")

config = FeatureConfig()
feats = lfbe_extract(clip, config)
print("LFBE matrix", feats.matrix.shape, feats.matrix.dtype)

# the loudest mel band should sit near 1760 Hz
bank = mel_filterbank(config)
freqs = np.fft.rfftfreq(config.fft_size, 1 / config.sample_rate)
peak_band = int(feats.matrix.mean(axis=0).argmax())
print(f"peak band {peak_band} centred near {freqs[bank[peak_band].argmax()]:.0f} Hz")

# normalisation statistics are computed once over the training set
stats = compute_dataset_stats([feats])
z = normalize(feats.matrix, stats)
print(f"raw mean {stats.mean:.2f}, std {stats.std:.2f}; normalised std {z.std():.3f}")
