"""Synthetic evaluation corpus: AIR generation, speech-like signals,
convolution reverb, WAV and manifest I/O, splits, and the WER oracle.

The oracle assigns each utterance a ground-truth WER drawn from a known
sigmoid of the AIR's clarity (C50) plus noise, standing in for a real ASR
engine so the prediction pipeline can be scored against a planted
relationship.
"""

import csv
import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, fftconvolve, sosfilt

from . import air
from .errors import (
    InvalidCoefficients,
    SampleRateMismatch,
    TooFewGroups,
    UnreachableDrr,
)
from .fitting import sigmoid_eval

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Signal:
    """A mono audio signal."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(
            self, "samples", np.asarray(self.samples, dtype=np.float64)
        )


@dataclass(frozen=True)
class AirSpec:
    """Recipe for one synthetic AIR."""

    t60_target: float
    drr_target: float
    band_decay_multipliers: tuple = (1.0, 1.0, 1.0, 1.0)
    length: float = None
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.t60_target <= 0:
            raise ValueError("t60_target must be positive")
        if len(self.band_decay_multipliers) != 4 or min(
            self.band_decay_multipliers
        ) <= 0:
            raise ValueError("need 4 positive band decay multipliers")
        if self.length is None:
            object.__setattr__(self, "length", 1.5 * self.t60_target)
        if self.length < 1.5 * self.t60_target:
            raise ValueError("length must be >= 1.5 * t60_target")


@dataclass
class UtteranceRecord:
    """One reverberant utterance of the evaluation corpus."""

    utterance_id: str
    talker_id: str
    air_id: str
    true_wer: float
    split: str = ""
    audio_path: str = ""
    samples: Signal = None
    acoustic_params: air.AcousticParams = None
    feature_blocks: list = None


def synth_air(spec):
    """Synthesize an AIR: unit direct impulse plus shaped noise tail.

    The tail is Gaussian noise with per-octave-band exponential energy
    envelopes (125/250/500/1000 Hz bands plus a high-frequency rest band)
    and is gain-scaled so the measured DRR matches ``drr_target``.
    """
    fs = spec.sample_rate
    n = int(round(spec.length * fs))
    rng = np.random.default_rng(spec.seed)
    t_idx = np.arange(n, dtype=np.float64)

    band_edges = [(125 / np.sqrt(2), 125 * np.sqrt(2)),
                  (250 / np.sqrt(2), 250 * np.sqrt(2)),
                  (500 / np.sqrt(2), 500 * np.sqrt(2)),
                  (1000 / np.sqrt(2), 1000 * np.sqrt(2))]
    band_t60 = [spec.t60_target * m for m in spec.band_decay_multipliers]

    tail = np.zeros(n)
    for (low, high), t60 in zip(band_edges, band_t60):
        noise = rng.standard_normal(n)
        # Steep, slightly inset synthesis filters keep neighbour-band
        # leakage well below the analysis filters' passbands.
        inset = 2.0 ** 0.15
        sos = butter(8, [low * inset, high / inset], btype="bandpass",
                     fs=fs, output="sos")
        shaped = sosfilt(sos, noise)
        c = 3.0 * np.log(10.0) / (t60 * fs)  # amplitude rate: 60 dB energy drop over t60
        tail += shaped * np.exp(-c * t_idx)
    # Rest band above the top octave, decaying at the top band's rate so
    # it does not mask the 500/1000 Hz decay through filter leakage.
    high_edge = 1000 * np.sqrt(2)
    sos = butter(6, high_edge, btype="highpass", fs=fs, output="sos")
    shaped = sosfilt(sos, rng.standard_normal(n))
    c = 3.0 * np.log(10.0) / (band_t60[3] * fs)
    tail += shaped * np.exp(-c * t_idx)

    tail[0] = 0.0
    n_w = int(round(0.0025 * fs))
    e_window = float(np.sum(tail[1 : n_w + 1] ** 2))
    e_late = float(np.sum(tail[n_w + 1 :] ** 2))
    target_lin = 10.0 ** (spec.drr_target / 10.0)
    denom = target_lin * e_late - e_window
    if denom <= 0.0 or e_late <= 0.0:
        raise UnreachableDrr(
            f"drr_target={spec.drr_target} dB unreachable for "
            f"t60={spec.t60_target}s, length={spec.length}s"
        )
    gain = np.sqrt(1.0 / denom)

    h = gain * tail
    h[0] = 1.0
    return air.ImpulseResponse(h, fs)


def convolve(signal, ir):
    """Full linear convolution with an AIR, peak-limited to 1.

    Returns ``(reverberant_signal, gain)`` where ``gain`` is the scale
    applied to keep the peak at or below 1 (1.0 when no scaling needed).
    """
    if signal.sample_rate != ir.sample_rate:
        raise SampleRateMismatch(
            f"{signal.sample_rate} Hz signal vs {ir.sample_rate} Hz AIR"
        )
    out = fftconvolve(signal.samples, ir.samples, mode="full")
    peak = np.max(np.abs(out))
    gain = 1.0 if peak <= 1.0 else 1.0 / peak
    if gain != 1.0:
        out = out * gain
    return Signal(out, signal.sample_rate), gain


def _talker_tilt(talker_id):
    """Deterministic one-pole spectral tilt coefficient per talker."""
    digest = np.random.default_rng(zlib.crc32(str(talker_id).encode()))
    return 0.55 + 0.4 * digest.random()


def synth_speech(duration_s, talker_id, seed, sample_rate=DEFAULT_SAMPLE_RATE):
    """Speech-like test signal: 2-8 Hz amplitude-modulated tilted noise.

    Deterministic given ``(talker_id, seed)``.
    """
    if duration_s < 1.0:
        raise ValueError("duration_s must be >= 1")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng([int(seed), zlib.crc32(str(talker_id).encode())])

    carrier = rng.standard_normal(n)
    # One-pole lowpass gives a talker-dependent spectral tilt.
    from scipy.signal import lfilter

    a = _talker_tilt(talker_id)
    carrier = lfilter([1.0 - a], [1.0, -a], carrier)

    sos = butter(2, [2.0, 8.0], btype="bandpass", fs=sample_rate, output="sos")
    slow = sosfilt(sos, rng.standard_normal(n))
    envelope = np.abs(slow)
    envelope = envelope / (np.max(envelope) + 1e-12) + 0.05

    x = carrier * envelope
    x = x * (0.15 / (np.sqrt(np.mean(x**2)) + 1e-12))
    return Signal(x, sample_rate)


def oracle_wer(c50, q, noise_sd=0.0, seed=0):
    """Synthetic ground-truth WER: planted sigmoid of C50 plus noise.

    ``q`` holds the four sigmoid coefficients with ``q2 > q1 >= 0``.
    Clamped below at 0; deterministic given ``seed``.
    """
    q = np.asarray(q, dtype=np.float64)
    if not (q[1] > q[0] >= 0.0):
        raise InvalidCoefficients("need q2 > q1 >= 0")
    wer = sigmoid_eval(q, c50)
    if noise_sd > 0.0:
        wer += np.random.default_rng(seed).normal(0.0, noise_sd)
    return max(0.0, float(wer))


def partition_groups(ids, ratios, seed):
    """Deterministically partition ids into TR/CV/TE sets by ratio."""
    ids = sorted(set(ids))
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(ids)))
    n = len(ids)
    n_tr = int(round(ratios[0] * n))
    n_cv = int(round(ratios[1] * n))
    n_tr = max(1, min(n_tr, n - 2))
    n_cv = max(1, min(n_cv, n - n_tr - 1))
    parts = {"TR": set(), "CV": set(), "TE": set()}
    for rank, idx in enumerate(order):
        if rank < n_tr:
            parts["TR"].add(ids[idx])
        elif rank < n_tr + n_cv:
            parts["CV"].add(ids[idx])
        else:
            parts["TE"].add(ids[idx])
    return parts


def split_dataset(records, ratios=(0.8, 0.1, 0.1), seed=0):
    """Group-aware TR/CV/TE split with TE disjoint from TR.

    Talkers and AIRs are partitioned independently; a record lands in TR
    (TE) only when both its talker and its AIR belong to the TR (TE)
    partition, and in CV otherwise. Guarantees that no TE talker or AIR
    id appears in any TR record.
    """
    talkers = {r.talker_id for r in records}
    airs = {r.air_id for r in records}
    if len(talkers) < 3 or len(airs) < 3:
        raise TooFewGroups("need >= 3 distinct talkers and >= 3 distinct AIRs")
    talker_parts = partition_groups(talkers, ratios, seed)
    air_parts = partition_groups(airs, ratios, seed + 1)

    def side(parts, gid):
        for name, members in parts.items():
            if gid in members:
                return name
        raise KeyError(gid)

    out = []
    for record in records:
        ts = side(talker_parts, record.talker_id)
        as_ = side(air_parts, record.air_id)
        record.split = ts if ts == as_ and ts in ("TR", "TE") else "CV"
        out.append(record)
    return out


# -- WAV I/O ---------------------------------------------------------------

def write_wav(path, signal, fmt="float32"):
    """Write a mono WAV file as 32-bit float or 16-bit PCM."""
    if fmt == "float32":
        wavfile.write(path, signal.sample_rate,
                      signal.samples.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(signal.samples, -1.0, 32767 / 32768)
        wavfile.write(path, signal.sample_rate,
                      np.round(clipped * 32768).astype(np.int16))
    else:
        raise ValueError(f"unknown format: {fmt}")


def read_wav(path):
    """Read a mono WAV file (16-bit PCM or 32-bit float) as a Signal."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV files are supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return Signal(samples, int(rate))


# -- corpus construction ---------------------------------------------------

#: Planted sigmoid relating C50 (dB) to WER, used by the default oracle.
DEFAULT_ORACLE_Q = (0.1, 0.9, 0.5, 10.0)


@dataclass(frozen=True)
class CorpusConfig:
    """Desk-scale synthetic corpus recipe."""

    n_talkers: int = 40
    n_airs: int = 120
    utterances_per_talker: int = 240
    t60_range: tuple = (0.1, 2.0)
    drr_range: tuple = (-10.0, 12.0)
    oracle_q: tuple = DEFAULT_ORACLE_Q
    noise_sd: float = 0.05
    split_ratios: tuple = (0.79, 0.11, 0.10)
    duration_s: float = 2.0
    seed: int = 0
    with_audio: bool = False

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("t60_range", "drr_range", "oracle_q", "split_ratios"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def generate_airs(config):
    """Synthesize and analyze the corpus AIR set.

    Returns ``(airs, params)`` dicts keyed by air id. T60 targets are
    log-uniform over ``t60_range`` so C50 spans low to high clarity.
    """
    rng = np.random.default_rng(config.seed)
    airs = {}
    params = {}
    lo, hi = config.t60_range
    for i in range(config.n_airs):
        t60 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        drr = float(rng.uniform(*config.drr_range))
        seed = int(rng.integers(2**31))
        while True:
            try:
                ir = synth_air(AirSpec(
                    t60_target=t60,
                    drr_target=drr,
                    length=max(1.5 * t60, 0.5),
                    seed=seed,
                ))
                break
            except UnreachableDrr:
                # Short decays bound the reachable DRR from below; walk
                # the target up until the spec becomes feasible.
                drr += 2.0
        air_id = f"air{i:04d}"
        airs[air_id] = ir
        params[air_id] = air.analyze(ir)
    return airs, params


def build_corpus(config, out_dir=None, air_specs=None):
    """Generate the full record set with oracle WER labels and splits.

    Talkers and AIRs are pre-partitioned so each utterance pairs a talker
    with an AIR from the same partition; the later group-aware split then
    lands the requested TR/CV/TE proportions. With ``with_audio`` set,
    reverberant audio is synthesized (and written under ``out_dir`` if
    given). ``air_specs`` replaces the random AIR draw with an explicit
    list of :class:`AirSpec` recipes.
    """
    rng = np.random.default_rng(config.seed + 1)
    if air_specs is not None:
        airs = {}
        params = {}
        for i, spec in enumerate(air_specs):
            air_id = f"air{i:04d}"
            ir = synth_air(spec)
            airs[air_id] = ir
            params[air_id] = air.analyze(ir)
    else:
        airs, params = generate_airs(config)

    talker_ids = [f"spk{i:03d}" for i in range(config.n_talkers)]
    air_ids = sorted(airs)
    talker_parts = partition_groups(talker_ids, config.split_ratios, config.seed)
    air_parts = partition_groups(air_ids, config.split_ratios, config.seed + 1)
    air_by_part = {name: sorted(members) for name, members in air_parts.items()}

    records = []
    for talker in talker_ids:
        part = next(p for p, m in talker_parts.items() if talker in m)
        pool = air_by_part[part]
        for u in range(config.utterances_per_talker):
            air_id = pool[int(rng.integers(len(pool)))]
            utt_id = f"{talker}_u{u:04d}"
            c50 = params[air_id].c50
            wer = oracle_wer(
                c50, config.oracle_q, config.noise_sd,
                seed=int(rng.integers(2**31)),
            )
            record = UtteranceRecord(
                utterance_id=utt_id,
                talker_id=talker,
                air_id=air_id,
                true_wer=wer,
                acoustic_params=params[air_id],
            )
            if config.with_audio:
                clean = synth_speech(
                    config.duration_s, talker, seed=config.seed + 7 + u
                )
                reverberant, _ = convolve(clean, airs[air_id])
                if out_dir is not None:
                    path = Path(out_dir) / f"{utt_id}.wav"
                    write_wav(path, reverberant)
                    record.audio_path = str(path)
                else:
                    record.samples = reverberant
            records.append(record)

    records = split_dataset(records, config.split_ratios, config.seed)
    return records, airs, params


# -- manifest I/O ----------------------------------------------------------

MANIFEST_COLUMNS = (
    "utterance_id", "talker_id", "air_id", "split", "true_wer", "audio_path"
)


def write_manifest(path, records):
    """Write the corpus manifest CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([
                r.utterance_id, r.talker_id, r.air_id, r.split,
                repr(r.true_wer), r.audio_path,
            ])


def read_manifest(path):
    """Read a corpus manifest CSV back into records."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) != set(MANIFEST_COLUMNS):
            raise ValueError(f"{path}: unexpected manifest columns")
        for row in reader:
            records.append(UtteranceRecord(
                utterance_id=row["utterance_id"],
                talker_id=row["talker_id"],
                air_id=row["air_id"],
                split=row["split"],
                true_wer=float(row["true_wer"]),
                audio_path=row["audio_path"],
            ))
    return records
