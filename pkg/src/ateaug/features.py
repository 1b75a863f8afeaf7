"""WAV decoding, log mel-filterbank energy (LFBE) features and dataset statistics."""

import hashlib
import io
import json
import struct
import wave
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (ConfigError, EmptyInputError, FormatError, ParseError,
                     TooShortError, UnsupportedFormatError, VersionError)

CACHE_MAGIC = b"LFBE"
CACHE_VERSION = 1


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 64
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window: str = "hann"
    mel_low_hz: float = 20.0
    mel_high_hz: float = 7600.0
    log_floor: float = 1e-10
    sample_rate: int = 16000

    def frame_length(self):
        return int(round(self.sample_rate * self.frame_ms / 1000.0))

    def hop_length(self):
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    def validate(self):
        if self.window != "hann":
            raise ConfigError(f"unsupported window {self.window!r}")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be positive")
        if self.fft_size < self.frame_length():
            raise ConfigError(
                f"fft_size {self.fft_size} shorter than frame length {self.frame_length()}")
        if self.hop_length() < 1:
            raise ConfigError("hop must be at least one sample")
        if not 0 <= self.mel_low_hz < self.mel_high_hz <= self.sample_rate / 2:
            raise ConfigError(
                f"mel edges {self.mel_low_hz}-{self.mel_high_hz} Hz invalid for "
                f"sample rate {self.sample_rate}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        return self

    def digest(self):
        """Stable short hash identifying the feature configuration."""
        text = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class SpectrogramFeatures:
    matrix: np.ndarray
    clip_id: str = ""

    @property
    def frames(self):
        return self.matrix.shape[0]


@dataclass
class DatasetStats:
    mean: float
    std: float
    count: int


# -- WAV ----------------------------------------------------------------------------

def decode_wav(data):
    """Parse a RIFF/WAVE byte string holding mono 16-bit PCM."""
    if len(data) < 12:
        raise ParseError(f"truncated header: {len(data)} bytes")
    riff, _, wave_id = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise ParseError("not a RIFF/WAVE container")
    pos = 12
    fmt = None
    pcm = None
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise ParseError("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < size:
                raise ParseError(f"data chunk declares {size} bytes, found {len(body)}")
            pcm = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise ParseError("missing fmt chunk")
    if pcm is None:
        raise ParseError("missing data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormatError(f"audio_format={audio_format}")
    if channels != 1:
        raise UnsupportedFormatError(f"channels={channels}")
    if bits != 16:
        raise UnsupportedFormatError(f"bits_per_sample={bits}")
    ints = np.frombuffer(pcm[:len(pcm) - len(pcm) % 2], dtype="<i2")
    return AudioClip(ints.astype(np.float64) / 32768.0, int(sample_rate))


def read_wav(path):
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def encode_wav(samples, sample_rate):
    """Mono 16-bit PCM WAV bytes for samples in [-1, 1]."""
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(ints.tobytes())
    return buf.getvalue()


def write_wav(path, samples, sample_rate):
    with open(path, "wb") as fh:
        fh.write(encode_wav(samples, sample_rate))


# -- LFBE -------------------------------------------------------------------------------

def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(config):
    """The n_mels + 2 corner frequencies (Hz); filter i spans edges[i]..edges[i+2]."""
    mels = np.linspace(hz_to_mel(config.mel_low_hz), hz_to_mel(config.mel_high_hz),
                       config.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(config):
    """Triangular filters of shape (n_mels, fft_size // 2 + 1) over linear FFT bins."""
    edges = mel_band_edges(config)
    freqs = np.arange(config.fft_size // 2 + 1) * config.sample_rate / config.fft_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def hann_window(length):
    """Periodic Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def frame_count(n_samples, frame_len, hop_len):
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop_len


def frame_signal(samples, frame_len, hop_len):
    """(n_frames, frame_len) view; a trailing partial frame is dropped."""
    n = frame_count(len(samples), frame_len, hop_len)
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return windows[::hop_len][:n]


def power_spectrum(frames, fft_size):
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def lfbe_extract(clip, config=None, clip_id=""):
    """Log mel-filterbank energies, shape (frames, n_mels), float32."""
    config = (config or FeatureConfig()).validate()
    if clip.sample_rate != config.sample_rate:
        raise ConfigError(
            f"clip sample rate {clip.sample_rate} != configured {config.sample_rate}")
    frame_len, hop_len = config.frame_length(), config.hop_length()
    samples = np.asarray(clip.samples, dtype=np.float64)
    if len(samples) < frame_len:
        raise TooShortError(f"clip has {len(samples)} samples, one frame needs {frame_len}")
    frames = frame_signal(samples, frame_len, hop_len) * hann_window(frame_len)
    energies = power_spectrum(frames, config.fft_size) @ mel_filterbank(config).T
    matrix = np.log(np.maximum(energies, config.log_floor)).astype(np.float32)
    return SpectrogramFeatures(matrix, clip_id)


# -- statistics -------------------------------------------------------------------------

def compute_dataset_stats(features):
    """Mean and population std over every entry of every feature matrix."""
    mats = [np.asarray(f.matrix if isinstance(f, SpectrogramFeatures) else f, dtype=np.float64)
            for f in features]
    count = sum(m.size for m in mats)
    if count == 0:
        raise EmptyInputError("no feature values to summarise")
    mean = sum(float(m.sum()) for m in mats) / count
    var = sum(float(((m - mean) ** 2).sum()) for m in mats) / count
    return DatasetStats(mean, float(np.sqrt(var)), count)


def normalize(matrix, stats):
    """Global z-normalisation; a zero std leaves the scale untouched."""
    std = stats.std if stats.std > 0 else 1.0
    return ((np.asarray(matrix, dtype=np.float64) - stats.mean) / std).astype(np.float32)


# -- cache file format ------------------------------------------------------------------

def encode_features(features):
    ident = features.clip_id.encode("utf-8")
    mat = np.ascontiguousarray(features.matrix, dtype="<f4")
    rows, cols = mat.shape
    header = CACHE_MAGIC + struct.pack("<IH", CACHE_VERSION, len(ident)) + ident
    return header + struct.pack("<II", rows, cols) + mat.tobytes()


def decode_features(data):
    if len(data) < 10 or data[:4] != CACHE_MAGIC:
        raise FormatError("not an LFBE feature file")
    version, id_len = struct.unpack_from("<IH", data, 4)
    if version != CACHE_VERSION:
        raise VersionError(f"feature file version {version}, expected {CACHE_VERSION}")
    pos = 10 + id_len
    if len(data) < pos + 8:
        raise FormatError("truncated feature file header")
    clip_id = data[10:pos].decode("utf-8")
    rows, cols = struct.unpack_from("<II", data, pos)
    payload = data[pos + 8:]
    if len(payload) != rows * cols * 4:
        raise FormatError(f"payload is {len(payload)} bytes, expected {rows * cols * 4}")
    mat = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    return SpectrogramFeatures(mat, clip_id)


def write_feature_file(path, features):
    with open(path, "wb") as fh:
        fh.write(encode_features(features))


def read_feature_file(path):
    with open(path, "rb") as fh:
        return decode_features(fh.read())
