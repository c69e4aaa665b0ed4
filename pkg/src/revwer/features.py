"""Mel-spectrogram front-end for the blind WER predictor.

Frames of 640 samples (25 ms at 16 kHz) with a 160-sample hop are Hann
windowed, transformed with a 1024-point FFT, projected onto 26 triangular
mel filters spanning 0-8 kHz, log compressed, and mean-normalized per
utterance. 100-frame chunks form the fixed 26 x 100 network input blocks.
"""

import struct

import numpy as np

from .errors import TooShort, WrongSampleRate

SAMPLE_RATE = 16000
FRAME_LENGTH = 640
HOP = 160
FFT_SIZE = 1024
N_MELS = 26
BLOCK_FRAMES = 100

_CACHE_MAGIC = b"MELB"
_CACHE_VERSION = 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, fft_size=FFT_SIZE, sample_rate=SAMPLE_RATE):
    """Triangular mel filters over 0 .. sample_rate/2, rows = filters."""
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(0.0, hz_to_mel(nyquist), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bins = hz_points / nyquist * (fft_size // 2)
    fb = np.zeros((n_mels, fft_size // 2 + 1))
    freqs = np.arange(fft_size // 2 + 1, dtype=np.float64)
    for i in range(n_mels):
        left, center, right = bins[i], bins[i + 1], bins[i + 2]
        up = (freqs - left) / max(center - left, 1e-9)
        down = (right - freqs) / max(right - center, 1e-9)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FILTERBANK = mel_filterbank()
_WINDOW = np.hanning(FRAME_LENGTH)


def frame_count(n_samples):
    """Number of full analysis frames for a signal of ``n_samples``."""
    if n_samples < FRAME_LENGTH:
        raise TooShort(f"need >= {FRAME_LENGTH} samples, got {n_samples}")
    return (n_samples - FRAME_LENGTH) // HOP + 1


def melspec(signal):
    """Log-mel spectrogram (26 x frames) with per-utterance mean removal."""
    if signal.sample_rate != SAMPLE_RATE:
        raise WrongSampleRate(
            f"front-end requires {SAMPLE_RATE} Hz, got {signal.sample_rate}"
        )
    x = signal.samples
    n_frames = frame_count(x.size)
    starts = np.arange(n_frames) * HOP
    frames = np.stack([x[s : s + FRAME_LENGTH] for s in starts])
    spectra = np.fft.rfft(frames * _WINDOW, n=FFT_SIZE, axis=1)
    power = np.abs(spectra) ** 2
    mel_energy = power @ _FILTERBANK.T
    log_mel = np.log(mel_energy + 1e-10).T
    return log_mel - log_mel.mean(axis=1, keepdims=True)


def blockify(spec):
    """Split a mel spectrogram into zero-padded 26 x 100 blocks."""
    n_mels, n_frames = spec.shape
    if n_frames < 1:
        raise TooShort("spectrogram has no frames")
    n_blocks = -(-n_frames // BLOCK_FRAMES)
    padded = np.zeros((n_mels, n_blocks * BLOCK_FRAMES))
    padded[:, :n_frames] = spec
    return [
        padded[:, i * BLOCK_FRAMES : (i + 1) * BLOCK_FRAMES]
        for i in range(n_blocks)
    ]


def extract_blocks(signal):
    """Signal to list of 26 x 100 feature blocks."""
    return blockify(melspec(signal))


def write_block_cache(path, blocks):
    """Write feature blocks as little-endian float32 with a 12-byte header."""
    if len(blocks) > 0xFFFF:
        raise ValueError("too many blocks for the cache format")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<HHI", _CACHE_VERSION, len(blocks), 0))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def read_block_cache(path):
    """Inverse of :func:`write_block_cache`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a feature cache file")
        version, count, _ = struct.unpack("<HHI", fh.read(8))
        if version != _CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        blocks = []
        block_bytes = N_MELS * BLOCK_FRAMES * 4
        for _ in range(count):
            raw = fh.read(block_bytes)
            if len(raw) != block_bytes:
                raise ValueError(f"{path}: truncated cache file")
            blocks.append(
                np.frombuffer(raw, dtype="<f4")
                .astype(np.float64)
                .reshape(N_MELS, BLOCK_FRAMES)
            )
    return blocks
