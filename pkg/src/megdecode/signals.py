"""Sensor-window representation, normalization, RMS, IIR bandstop filtering,
and the window augmentation policy (time masking + random bandstop)."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractError, FilterDesignError, InvalidSignalError


@dataclass(frozen=True)
class MegWindow:
    """One fixed-length multichannel window, data shaped channels x samples."""

    data: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise InvalidSignalError(f"window data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidSignalError("window data contains non-finite values")
        if not self.sample_rate_hz > 0:
            raise InvalidSignalError("sample rate must be positive")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]

    @property
    def window_seconds(self) -> float:
        return self.samples / self.sample_rate_hz


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0 < self.low_hz < self.high_hz):
            raise FilterDesignError(f"invalid band edges {self.low_hz}..{self.high_hz}")


# conventional neuroscience band edges; all overridable via AugmentConfig
DEFAULT_BANDS: tuple[BandSpec, ...] = (
    BandSpec("theta", 4.0, 8.0),
    BandSpec("alpha", 8.0, 13.0),
    BandSpec("beta", 13.0, 30.0),
    BandSpec("gamma", 30.0, 70.0),
    BandSpec("high_gamma", 70.0, 100.0),
)


@dataclass(frozen=True)
class AugmentConfig:
    time_mask_count: int = 2
    time_mask_max_width: int = 180
    bandstop_probability: float = 0.4
    bands: tuple[BandSpec, ...] = DEFAULT_BANDS
    filter_order: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.bandstop_probability <= 1.0:
            raise ContractError("bandstop_probability must be in [0, 1]")
        if self.time_mask_count < 0 or self.time_mask_max_width < 0:
            raise ContractError("mask count and width must be nonnegative")
        if self.filter_order % 2 or self.filter_order < 2:
            raise ContractError("filter_order must be even and >= 2")


@dataclass(frozen=True)
class BiquadSection:
    """Second-order section; denominator normalized so a0 == 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def pole_moduli(self) -> tuple[float, float]:
        roots = np.roots([1.0, self.a1, self.a2])
        m = np.abs(roots)
        if m.size == 1:  # a2 == 0 degenerates to one pole
            return float(m[0]), 0.0
        return float(m[0]), float(m[1])


@dataclass(frozen=True)
class IirBiquadCascade:
    sections: tuple[BiquadSection, ...]
    center_hz: float
    low_hz: float
    high_hz: float
    order: int
    sample_rate_hz: float

    def max_pole_modulus(self) -> float:
        return max(m for s in self.sections for m in s.pole_moduli())

    def is_stable(self) -> bool:
        return self.max_pole_modulus() < 1.0

    def response(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Complex frequency response H(e^{j 2 pi f / fs})."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate_hz
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        h = np.ones_like(z1)
        for s in self.sections:
            h = h * (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
        return h

    def magnitude_db(self, freqs_hz: np.ndarray) -> np.ndarray:
        mag = np.abs(self.response(freqs_hz))
        return 20.0 * np.log10(np.maximum(mag, 1e-300))


def rms_energy(w: MegWindow) -> float:
    """Root-mean-square over all channels and samples."""
    return float(np.sqrt(np.mean(np.square(w.data, dtype=np.float64))))


def instance_normalize(w: MegWindow, epsilon: float = 1e-5) -> MegWindow:
    """Per-channel standardization over time with population variance.

    Constant channels map to all-zeros through the epsilon regularizer; no
    running statistics are involved.
    """
    x = w.data
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    out = (x - mu) / np.sqrt(var + epsilon)
    return MegWindow(out.astype(x.dtype, copy=False), w.sample_rate_hz)


def instance_normalize_array(x: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    """Array form of instance_normalize for batches [..., C, T]."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return ((x - mu) / np.sqrt(var + epsilon)).astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# Butterworth bandstop design: analog prototype -> lowpass-to-bandstop
# transform -> bilinear transform with frequency pre-warping -> biquads.


def design_bandstop(band: BandSpec, sample_rate_hz: float, order: int = 4) -> IirBiquadCascade:
    if band.high_hz >= sample_rate_hz / 2.0:
        raise FilterDesignError(
            f"band {band.name} high edge {band.high_hz} Hz at/past Nyquist ({sample_rate_hz / 2} Hz)"
        )
    if order % 2 or order < 2:
        raise FilterDesignError("bandstop order must be even and >= 2")

    n = order // 2  # analog prototype order; the bandstop transform doubles it
    k = np.arange(n)
    proto_poles = np.exp(1j * np.pi * (2 * k + n + 1) / (2 * n))

    fs2 = 2.0 * sample_rate_hz
    w1 = fs2 * np.tan(np.pi * band.low_hz / sample_rate_hz)
    w2 = fs2 * np.tan(np.pi * band.high_hz / sample_rate_hz)
    wo = np.sqrt(w1 * w2)
    bw = w2 - w1

    # lowpass (no zeros, unit gain) -> bandstop in the analog domain
    p_inv = (bw / 2.0) / proto_poles
    shift = np.sqrt(p_inv**2 - wo**2)
    p_bs = np.concatenate([p_inv + shift, p_inv - shift])
    z_bs = np.concatenate([np.full(n, 1j * wo), np.full(n, -1j * wo)])
    k_bs = float(np.real(1.0 / np.prod(-proto_poles)))

    # bilinear transform (pre-warped edges above land exactly on low/high)
    zd = (fs2 + z_bs) / (fs2 - z_bs)
    pd = (fs2 + p_bs) / (fs2 - p_bs)
    kd = k_bs * float(np.real(np.prod(fs2 - z_bs) / np.prod(fs2 - p_bs)))

    sections = _pair_into_biquads(zd, pd, kd)
    cascade = IirBiquadCascade(
        sections=sections,
        center_hz=float(np.sqrt(band.low_hz * band.high_hz)),
        low_hz=band.low_hz,
        high_hz=band.high_hz,
        order=order,
        sample_rate_hz=sample_rate_hz,
    )
    if not cascade.is_stable():
        raise FilterDesignError(f"designed cascade for {band.name} is unstable")
    return cascade


def _pair_into_biquads(zeros: np.ndarray, poles: np.ndarray, gain: float) -> tuple[BiquadSection, ...]:
    """Group conjugate zero/pole pairs into second-order sections.

    Overall gain is folded into the first section's numerator.
    """

    def conjugate_pairs(vals: np.ndarray) -> list[tuple[complex, complex]]:
        vals = np.asarray(vals)
        complex_vals = sorted(
            (v for v in vals if abs(v.imag) > 1e-10 * max(1.0, abs(v))),
            key=lambda v: (-abs(v), v.real),
        )
        upper = [v for v in complex_vals if v.imag > 0]
        real_vals = sorted(
            (v.real for v in vals if abs(v.imag) <= 1e-10 * max(1.0, abs(v))), key=abs, reverse=True
        )
        pairs = [(v, np.conj(v)) for v in upper]
        for i in range(0, len(real_vals) - 1, 2):
            pairs.append((real_vals[i], real_vals[i + 1]))
        return pairs

    zp = conjugate_pairs(zeros)
    pp = conjugate_pairs(poles)
    if len(zp) != len(pp):
        raise FilterDesignError("zero/pole pairing mismatch")
    sections = []
    for i, ((z1, z2), (p1, p2)) in enumerate(zip(zp, pp)):
        b = np.real(np.array([1.0, -(z1 + z2), z1 * z2]))
        a = np.real(np.array([1.0, -(p1 + p2), p1 * p2]))
        if i == 0:
            b = b * gain
        sections.append(BiquadSection(b[0], b[1], b[2], a[1], a[2]))
    return tuple(sections)


def apply_filter(w: MegWindow, f: IirBiquadCascade) -> MegWindow:
    """Causal forward filtering per channel, zero initial conditions.

    Direct-form II transposed per section; computed in float64, returned in
    the input dtype.
    """
    x = w.data.astype(np.float64, copy=True)
    channels, samples = x.shape
    for s in f.sections:
        y = np.empty_like(x)
        z1 = np.zeros(channels)
        z2 = np.zeros(channels)
        for t in range(samples):
            xt = x[:, t]
            yt = s.b0 * xt + z1
            z1 = s.b1 * xt - s.a1 * yt + z2
            z2 = s.b2 * xt - s.a2 * yt
            y[:, t] = yt
        x = y
    return MegWindow(x.astype(w.data.dtype, copy=False), w.sample_rate_hz)


@lru_cache(maxsize=64)
def _cached_bandstop(name: str, low: float, high: float, fs: float, order: int) -> IirBiquadCascade:
    return design_bandstop(BandSpec(name, low, high), fs, order)


def apply_time_masks(w: MegWindow, spans: list[tuple[int, int]]) -> MegWindow:
    """Zero the given (start, width) spans across every channel."""
    out = w.data.copy()
    for start, width in spans:
        if start < 0 or width < 0 or start + width > w.samples:
            raise ContractError(f"mask span ({start}, {width}) outside window")
        out[:, start : start + width] = 0.0
    return MegWindow(out, w.sample_rate_hz)


def augment_window(w: MegWindow, cfg: AugmentConfig, rng: np.random.Generator) -> MegWindow:
    """Time masking plus per-band random bandstop filtering.

    Draw order is fixed: (width, start) per mask, then one uniform draw per
    band in configuration order, so outputs are reproducible from the rng
    state alone.
    """
    if cfg.time_mask_max_width > w.samples:
        raise ContractError("time_mask_max_width exceeds window length")
    spans = []
    for _ in range(cfg.time_mask_count):
        width = int(rng.integers(0, cfg.time_mask_max_width + 1))
        start = int(rng.integers(0, w.samples - width + 1))
        spans.append((start, width))
    out = apply_time_masks(w, spans)
    for band in cfg.bands:
        if rng.random() < cfg.bandstop_probability:
            cascade = _cached_bandstop(
                band.name, band.low_hz, band.high_hz, w.sample_rate_hz, cfg.filter_order
            )
            out = apply_filter(out, cascade)
    return out


def slide_windows(series: np.ndarray, window_len: int, stride: int, sample_rate_hz: float) -> list[MegWindow]:
    """Windows at offsets 0, stride, 2*stride, ... (empty when too short)."""
    if stride < 1:
        raise ContractError("stride must be >= 1")
    length = series.shape[1]
    if window_len > length:
        return []
    count = (length - window_len) // stride + 1
    return [
        MegWindow(series[:, i * stride : i * stride + window_len], sample_rate_hz)
        for i in range(count)
    ]


def slide_offsets(length: int, window_len: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ContractError("stride must be >= 1")
    if window_len > length:
        return np.empty(0, dtype=int)
    count = (length - window_len) // stride + 1
    return np.arange(count) * stride


def filter_response_table(cascade: IirBiquadCascade, n_points: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """(frequency_hz, magnitude_db) sampled up to Nyquist, for CSV export."""
    freqs = np.linspace(0.0, cascade.sample_rate_hz / 2.0, n_points, endpoint=False)
    return freqs, cascade.magnitude_db(freqs)
