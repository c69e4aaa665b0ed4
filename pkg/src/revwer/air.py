"""Acoustic impulse response analysis.

Computes the Schroeder energy decay curve of a single-channel impulse
response and the 15 raw acoustic parameters derived from it: reverberation
time estimates (T60, T10, T15, T20, T30), early decay time, bass ratio,
direct-to-reverberant ratio, clarity and definition at 30/50/80 ms, and
center time.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import (
    AllZeroSignal,
    BandAboveNyquist,
    InsufficientDecay,
)
from . import fitting

#: Canonical ordering of the 15-element raw parameter vector.
PARAM_NAMES = (
    "t60", "t10", "t15", "t20", "t30", "edt", "br",
    "drr", "c30", "c50", "c80", "d30", "d50", "d80", "tc",
)

OCTAVE_CENTERS_HZ = (125, 250, 500, 1000)

DEFAULT_FLOOR_DB = -100.0

# Result clamp for energy ratios whose numerator or denominator is zero.
CLAMP_DB = 100.0


@dataclass(frozen=True)
class ImpulseResponse:
    """A sampled single-channel acoustic impulse response."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.any(samples != 0.0):
            raise AllZeroSignal("impulse response is all zeros")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if self.sample_rate < 8000:
            raise ValueError("sample_rate must be >= 8000 Hz")

    def __len__(self):
        return self.samples.size

    def normalized(self):
        """Peak-normalized copy, quantized to float32 mantissas.

        The quantization makes parameter extraction bit-stable under
        amplitude scaling of the input: ``alpha * h`` and ``h`` map to
        identical sample vectors up to float32 rounding of the unit-peak
        waveform.
        """
        peak = np.max(np.abs(self.samples))
        quantized = (self.samples / peak).astype(np.float32).astype(np.float64)
        return ImpulseResponse(quantized, self.sample_rate)


@dataclass(frozen=True)
class EnergyDecayCurve:
    """Backward-integrated energy of an AIR, in dB re total energy."""

    values_db: np.ndarray
    floor_db: float

    def __post_init__(self):
        object.__setattr__(
            self, "values_db", np.asarray(self.values_db, dtype=np.float64)
        )

    def __len__(self):
        return self.values_db.size


@dataclass
class AcousticParams:
    """The 15 raw acoustic parameters of one AIR.

    Parameters that could not be estimated (insufficient decay range) are
    NaN and listed in ``flags``.
    """

    t60: float
    t10: float
    t15: float
    t20: float
    t30: float
    edt: float
    br: float
    drr: float
    c30: float
    c50: float
    c80: float
    d30: float
    d50: float
    d80: float
    tc: float
    flags: list = field(default_factory=list)

    def as_vector(self):
        """Parameter values as a length-15 array in canonical order."""
        return np.array([getattr(self, name) for name in PARAM_NAMES])

    @property
    def complete(self):
        return not self.flags


def compute_edc(ir, floor_db=DEFAULT_FLOOR_DB):
    """Schroeder backward integration of the squared AIR.

    Returns the decay curve in dB, normalized so the first value is 0 and
    clamped below at ``floor_db``.
    """
    energy = ir.samples**2
    tail = np.cumsum(energy[::-1])[::-1]
    total = tail[0]
    if total <= 0.0:
        raise AllZeroSignal("impulse response carries no energy")
    with np.errstate(divide="ignore"):
        values_db = 10.0 * np.log10(tail / total)
    values_db = np.maximum(values_db, floor_db)
    return EnergyDecayCurve(values_db, floor_db)


def detect_direct_path(ir, edc):
    """Locate the direct path.

    Returns ``(n_d, n_0)`` where ``n_d`` is the first index of maximum
    absolute amplitude and ``n_0`` the index of the largest single-sample
    drop in the EDC. Ties break toward the smallest index.
    """
    n_d = int(np.argmax(np.abs(ir.samples)))
    if len(edc) < 2:
        return n_d, 0
    drops = edc.values_db[:-1] - edc.values_db[1:]
    n_0 = int(np.argmax(drops))
    return n_d, n_0


def _first_below(edc, threshold_db, allow_clamped=False):
    """First index where the EDC drops below ``threshold_db``, or None."""
    below = edc.values_db < threshold_db
    if not allow_clamped:
        below &= edc.values_db > edc.floor_db
    idx = np.flatnonzero(below)
    return int(idx[0]) if idx.size else None


def decay_time(edc, sample_rate, range_db):
    """Reverberation time from a line fit over a dB range of the EDC.

    Fits a least-squares line to the EDC between the first sample below
    -5 dB and the first sample below ``-(5 + range_db)`` dB, and
    extrapolates the slope to a 60 dB decay.
    """
    if range_db not in (10, 15, 20, 30):
        raise ValueError("range_db must be one of 10, 15, 20, 30")
    upper = _first_below(edc, -5.0)
    lower = _first_below(edc, -(5.0 + range_db))
    if upper is None or lower is None or lower <= upper:
        raise InsufficientDecay(
            f"EDC does not span -5 to -{5 + range_db} dB before the floor"
        )
    t = np.arange(upper, lower + 1) / sample_rate
    y = edc.values_db[upper : lower + 1]
    slope, _ = np.polyfit(t, y, 1)
    if slope >= 0.0:
        raise InsufficientDecay("EDC is not decaying over the fit range")
    return -60.0 / slope


def early_decay_time(edc, sample_rate):
    """Early decay time: the 0 to -10 dB decay extrapolated to 60 dB."""
    idx = _first_below(edc, -10.0, allow_clamped=True)
    if idx is None:
        raise InsufficientDecay("EDC never reaches -10 dB")
    return 6.0 * idx / sample_rate


def _smooth_energy(samples, sample_rate, window_s=0.001):
    """Moving-average smoothing of the squared AIR."""
    width = max(1, int(round(window_s * sample_rate)))
    kernel = np.full(width, 1.0 / width)
    return np.convolve(samples**2, kernel, mode="same")


def estimate_t60(ir):
    """Reverberation time via a decaying-exponential-plus-floor model fit.

    Fits ``m[n] = A * exp(-c * n) + B`` to the 1 ms smoothed squared AIR
    (log-domain residuals, so the noise floor B is absorbed rather than
    biasing the slope) and converts the decay rate ``c`` to the time for a
    60 dB energy drop.
    """
    energy = _smooth_energy(ir.samples, ir.sample_rate)
    peak = int(np.argmax(energy))
    # Skip the direct-path lobe; the model describes the diffuse tail.
    start = min(peak + max(1, int(round(0.0025 * ir.sample_rate))), len(energy) - 2)
    m = energy[start:]
    n = np.arange(m.size, dtype=np.float64)
    if m.size < 8 or np.max(m) <= 0.0:
        raise InsufficientDecay("AIR too short for a decay model fit")
    scale = np.max(m)
    m = m / scale

    tiny = 1e-20
    b0 = max(float(np.median(m[-max(1, m.size // 10):])), tiny)
    a0 = 1.0
    # Log-linear slope over the upper part of the decay as starting rate.
    usable = np.flatnonzero(m > max(10.0 * b0, 1e-6))
    if usable.size < 4:
        raise InsufficientDecay("no decay range above the noise floor")
    k = usable[: max(4, usable.size // 2)]
    slope, _ = np.polyfit(n[k], np.log(m[k] + tiny), 1)
    c0 = max(-slope, 1e-8)

    def residuals(q):
        a, c, b = q
        model = a * np.exp(np.clip(-c * n, -700.0, 50.0)) + b
        return np.log(np.abs(model) + tiny) - np.log(m + tiny)

    def jacobian(q):
        a, c, b = q
        decay = np.exp(np.clip(-c * n, -700.0, 50.0))
        model = a * decay + b
        denom = np.abs(model) + tiny
        sign = np.sign(model)
        jac = np.empty((n.size, 3))
        jac[:, 0] = sign * decay / denom
        jac[:, 1] = sign * (-a * n * decay) / denom
        jac[:, 2] = sign / denom
        return jac

    cfg = fitting.LmConfig(max_iterations=200)
    q, _, _ = fitting.lm_minimize(residuals, jacobian, np.array([a0, c0, b0]), cfg)
    c = q[1]
    if c <= 0.0:
        raise InsufficientDecay("fitted decay rate is non-positive")
    # Energy slope per sample is -10*c/ln(10) dB; invert for a 60 dB drop.
    return 6.0 * np.log(10.0) / (c * ir.sample_rate)


def octave_band_filter(ir, center_hz):
    """Octave band-pass (4th order, passband fc/sqrt(2) .. fc*sqrt(2))."""
    low = center_hz / np.sqrt(2.0)
    high = center_hz * np.sqrt(2.0)
    if high >= ir.sample_rate / 2.0:
        raise BandAboveNyquist(
            f"octave band at {center_hz} Hz exceeds Nyquist "
            f"({ir.sample_rate / 2:.0f} Hz)"
        )
    sos = butter(2, [low, high], btype="bandpass", fs=ir.sample_rate, output="sos")
    filtered = sosfilt(sos, ir.samples)
    return ImpulseResponse(filtered, ir.sample_rate)


def band_decay_time(ir, center_hz, range_db=20):
    """Reverberation time of one octave band (T20 by default)."""
    band = octave_band_filter(ir, center_hz)
    edc = compute_edc(band)
    return decay_time(edc, ir.sample_rate, range_db)


def bass_ratio(ir):
    """Low-band to mid-band reverberation time ratio."""
    times = {}
    for center in OCTAVE_CENTERS_HZ:
        try:
            times[center] = band_decay_time(ir, center)
        except InsufficientDecay as exc:
            raise InsufficientDecay(
                f"{center} Hz band: {exc}", band_hz=center
            ) from exc
    return (times[125] + times[250]) / (times[500] + times[1000])


def _ratio_db(numerator, denominator):
    """10*log10 of an energy ratio, clamped to +/-100 dB on zero sums."""
    if numerator <= 0.0 and denominator <= 0.0:
        return 0.0
    if denominator <= 0.0:
        return CLAMP_DB
    if numerator <= 0.0:
        return -CLAMP_DB
    return float(np.clip(10.0 * np.log10(numerator / denominator),
                         -CLAMP_DB, CLAMP_DB))


def drr(ir):
    """Direct-to-reverberant ratio with a 2.5 ms direct-path window."""
    h2 = ir.samples**2
    n_d = int(np.argmax(np.abs(ir.samples)))
    n_w = int(round(0.0025 * ir.sample_rate))
    lo = max(0, n_d - n_w)
    hi = min(len(h2), n_d + n_w + 1)
    direct = float(np.sum(h2[lo:hi]))
    late = float(np.sum(h2[hi:]))
    return _ratio_db(direct, late)


def clarity(ir, t_ms, literal_late_bound=False):
    """Early-to-late energy ratio in dB after the direct path.

    ``literal_late_bound`` starts the late sum at ``n_t`` instead of
    ``n_0 + n_t`` (the literal reading of the defining formula); the
    default is consistent with the definition metric.
    """
    if t_ms not in (30, 50, 80):
        raise ValueError("t_ms must be one of 30, 50, 80")
    h2 = ir.samples**2
    edc = compute_edc(ir)
    _, n_0 = detect_direct_path(ir, edc)
    n_t = int(round(t_ms / 1000.0 * ir.sample_rate))
    early_hi = min(len(h2), n_0 + n_t + 1)
    early = float(np.sum(h2[n_0:early_hi]))
    late_lo = n_t if literal_late_bound else n_0 + n_t + 1
    late = float(np.sum(h2[late_lo:]))
    return _ratio_db(early, late)


def definition(ir, t_ms):
    """Fraction of post-direct-path energy arriving within ``t_ms``."""
    if t_ms not in (30, 50, 80):
        raise ValueError("t_ms must be one of 30, 50, 80")
    h2 = ir.samples**2
    edc = compute_edc(ir)
    _, n_0 = detect_direct_path(ir, edc)
    n_t = int(round(t_ms / 1000.0 * ir.sample_rate))
    early = float(np.sum(h2[n_0 : min(len(h2), n_0 + n_t + 1)]))
    total = float(np.sum(h2[n_0:]))
    if total <= 0.0:
        raise AllZeroSignal("no energy at or after the direct path")
    return early / total


def center_time(ir):
    """Energy-weighted mean arrival time after the direct path, seconds."""
    h2 = ir.samples**2
    edc = compute_edc(ir)
    _, n_0 = detect_direct_path(ir, edc)
    tail = h2[n_0:]
    total = float(np.sum(tail))
    if total <= 0.0:
        raise AllZeroSignal("no energy at or after the direct path")
    t = np.arange(tail.size) / ir.sample_rate
    return float(np.sum(t * tail) / total)


def analyze(ir, floor_db=DEFAULT_FLOOR_DB):
    """Compute all 15 acoustic parameters of one AIR.

    Parameters whose decay-range precondition fails are NaN and recorded
    in ``flags``; ratio-based parameters are always present.
    """
    ir = ir.normalized()
    edc = compute_edc(ir, floor_db)
    values = {}
    flags = []

    def attempt(name, fn):
        try:
            values[name] = fn()
        except InsufficientDecay:
            values[name] = float("nan")
            flags.append(name)

    attempt("t60", lambda: estimate_t60(ir))
    for r in (10, 15, 20, 30):
        attempt(f"t{r}", lambda r=r: decay_time(edc, ir.sample_rate, r))
    attempt("edt", lambda: early_decay_time(edc, ir.sample_rate))
    attempt("br", lambda: bass_ratio(ir))
    values["drr"] = drr(ir)
    for t in (30, 50, 80):
        values[f"c{t}"] = clarity(ir, t)
        values[f"d{t}"] = definition(ir, t)
    values["tc"] = center_time(ir)
    return AcousticParams(**values, flags=flags)


# -- CSV interface ---------------------------------------------------------

def write_params_csv(path, params_by_id):
    """Write per-AIR parameter rows: air_id, 15 canonical columns, flags."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["air_id", *PARAM_NAMES, "flags"])
        for air_id in sorted(params_by_id):
            p = params_by_id[air_id]
            writer.writerow([
                air_id,
                *[repr(float(v)) for v in p.as_vector()],
                ";".join(p.flags),
            ])


def read_params_csv(path):
    """Inverse of :func:`write_params_csv`."""
    import csv

    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"air_id", *PARAM_NAMES, "flags"}
        if set(reader.fieldnames or ()) != expected:
            raise ValueError(f"{path}: unexpected parameter columns")
        for row in reader:
            values = {name: float(row[name]) for name in PARAM_NAMES}
            flags = [f for f in row["flags"].split(";") if f]
            out[row["air_id"]] = AcousticParams(**values, flags=flags)
    return out
