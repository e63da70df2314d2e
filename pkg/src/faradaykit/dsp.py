"""Recover physics from raw polarimeter records.

Pipeline: zero-phase bandpass -> short-time Fourier magnitude spectrogram
(rectangular windows, zero-padded) -> per-window peak fit (Gaussian in
log-magnitude) -> Larmor track -> harmonic decomposition of the frequency
modulation and per-window sensitivity.

Conventions
-----------
* snr_db is 20*log10(peak amplitude / noise floor); the floor is the mean
  spectral magnitude over a band around the carrier in the pre-tip
  (noise-only) interval.
* The per-window frequency standard error is the single-tone bound
  sigma_f = K_FIT * sqrt(24/pi) / (2 pi tau_f snr), with K_FIT the
  Monte-Carlo-calibrated efficiency of the peak fit (tests pin it).
* A window of length tau_f reports the boxcar average of the instantaneous
  frequency, so harmonic amplitudes are corrected by 1/sinc(pi f tau_f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .synth import RawSignal

TWO_PI = 2.0 * math.pi

# Efficiency of the frequency estimators relative to the ideal single-tone
# bound, measured by Monte Carlo (see tests): the +-3-bin log-Gaussian
# vertex, the band-symmetric power centroid, and the phase-slope estimator
# used for Larmor tracking.
K_FIT = 1.08
K_CENTROID = 1.05
K_PHASE = 1.03


class BandError(ValueError):
    pass


def bandpass(signal: RawSignal, center: float, width: float) -> RawSignal:
    """Zero-phase Butterworth bandpass [center - width/2, center + width/2].

    Forward-backward filtering; the doubled response gives < 0.1 dB
    passband ripple and > 60 dB rejection at +-width from the center.
    """
    nyq = signal.sample_rate / 2.0
    lo, hi = center - width / 2.0, center + width / 2.0
    if not 0.0 < lo < hi < nyq:
        raise BandError(f"band [{lo:.3g}, {hi:.3g}] Hz outside (0, {nyq:.3g})")
    wp = [lo / nyq, hi / nyq]
    ws = [max((center - width) / nyq, 1e-6), min((center + width) / nyq, 0.999)]
    order, wn = sps.buttord(wp, ws, gpass=0.05, gstop=30.0)
    sos = sps.butter(order, wn, btype="bandpass", output="sos")
    filtered = sps.sosfiltfilt(sos, signal.samples)
    meta = dict(signal.metadata)
    meta["bandpass"] = {"center_Hz": center, "width_Hz": width, "order": int(order)}
    return RawSignal(samples=filtered, sample_rate=signal.sample_rate, metadata=meta)


@dataclass(frozen=True)
class Spectrogram:
    window_length: float     # s
    hop: float               # s
    zero_pad_factor: int
    times: np.ndarray        # window centers, s
    frequencies: np.ndarray  # Hz
    magnitude: np.ndarray    # (n_windows, n_freqs), |DFT|
    window_samples: int
    sample_rate: float
    metadata: dict = field(default_factory=dict)

    @property
    def resolution(self) -> float:
        """Grid spacing of the padded transform, sample_rate/(padded length)."""
        return self.sample_rate / (self.window_samples * self.zero_pad_factor)


def spectrogram(signal: RawSignal, window_length: float = 5e-3,
                hop: float = 1e-3, zero_pad_factor: int = 8,
                band: tuple | None = None) -> Spectrogram:
    """Magnitude STFT with rectangular windows, zero-padded transforms.

    ``band`` = (f_lo, f_hi) keeps only those rows of the spectrum (the
    full spectrum of a long record is large). Deterministic.
    """
    fs = signal.sample_rate
    m = round(window_length * fs)
    step = max(round(hop * fs), 1)
    x = signal.samples
    if m > len(x):
        raise ValueError("window longer than signal")
    n_win = (len(x) - m) // step + 1
    n_pad = m * zero_pad_factor
    freqs = np.fft.rfftfreq(n_pad, d=1.0 / fs)
    if band is not None:
        sel = (freqs >= band[0]) & (freqs <= band[1])
    else:
        sel = slice(None)
    freqs_out = freqs[sel]

    starts = np.arange(n_win) * step
    mags = np.empty((n_win, len(freqs_out)))
    chunk = max(1, int(4e6 / n_pad))  # bound transient memory
    for i0 in range(0, n_win, chunk):
        i1 = min(i0 + chunk, n_win)
        block = np.stack([x[s:s + m] for s in starts[i0:i1]])
        spec = np.fft.rfft(block, n=n_pad, axis=1)
        mags[i0:i1] = np.abs(spec[:, sel])

    times = (starts + m / 2.0) / fs
    return Spectrogram(window_length=m / fs, hop=step / fs,
                       zero_pad_factor=zero_pad_factor, times=times,
                       frequencies=freqs_out, magnitude=mags,
                       window_samples=m, sample_rate=fs,
                       metadata=dict(signal.metadata))


def noise_floor(spec: Spectrogram, center: float, half_band: float = 1e3,
                t_max: float | None = None) -> float:
    """Mean spectral magnitude near ``center`` over the pre-tip interval.

    ``t_max`` defaults to the record's pre_tip_interval metadata; windows
    entirely inside [0, t_max] are used.
    """
    if t_max is None:
        t_max = float(spec.metadata.get("pre_tip_interval", 0.0))
    sel_t = spec.times + spec.window_length / 2.0 <= t_max
    if not np.any(sel_t):
        raise ValueError("no noise-only windows inside the pre-tip interval")
    sel_f = np.abs(spec.frequencies - center) <= half_band
    if not np.any(sel_f):
        raise BandError("noise band outside the spectrogram band")
    return float(np.mean(spec.magnitude[np.ix_(sel_t, sel_f)]))


@dataclass(frozen=True)
class PeakFit:
    frequency: float
    amplitude: float
    frequency_err: float
    snr_db: float
    valid: bool = True


def tone_magnitude(spec: Spectrogram, index: int, center: float,
                   floor: float, half_bins: float = 25.0) -> float:
    """Peak-equivalent tone magnitude from band energy (FM-robust).

    Sums the background-subtracted power over +-``half_bins`` natural bins
    around ``center`` and converts to the magnitude an unmodulated tone of
    the same energy would show at its peak. Frequency modulation moves
    tone energy around within the band but conserves it, so this reading
    is insensitive to intra-window FM smearing.
    """
    natural = spec.sample_rate / spec.window_samples
    sel = np.abs(spec.frequencies - center) <= half_bins * natural
    if not np.any(sel):
        raise BandError("energy band outside the spectrogram band")
    background = (4.0 / math.pi) * floor**2 if floor else 0.0
    power = float(np.sum(spec.magnitude[index, sel] ** 2 - background))
    if power <= 0.0:
        return 0.0
    capture = 1.0 - 2.0 / (math.pi**2 * half_bins)  # sinc^2 tail fraction
    return math.sqrt(power / (spec.zero_pad_factor * capture))


def expected_frequency_err(tau_f: float, snr_linear: float) -> float:
    """Single-tone frequency standard error sqrt(24/pi)/(2 pi tau_f snr),
    scaled by the fit-efficiency constant K_FIT."""
    return K_FIT * math.sqrt(24.0 / math.pi) / (TWO_PI * tau_f * snr_linear)


def _centroid_refine(spec: Spectrogram, index: int, f_center: float,
                     floor: float, half_bins: float = 4.0) -> float:
    """Background-subtracted power centroid over a symmetric band.

    For a rectangular analysis window the |X|^2 centroid equals the
    window-averaged instantaneous frequency exactly, so frequency-modulated
    carriers are read without the vertex skew of a peak fit. The band spans
    +-``half_bins`` natural bins (sample_rate/window_samples) re-centered
    once on the first pass.
    """
    natural = spec.sample_rate / spec.window_samples
    background = (4.0 / math.pi) * floor**2 if floor else 0.0
    f = spec.frequencies
    center = f_center
    for _ in range(2):
        sel = np.abs(f - center) <= half_bins * natural
        power = spec.magnitude[index, sel] ** 2 - background
        total = float(np.sum(power))
        if total <= 0.0:
            return math.nan
        center = float(np.sum(f[sel] * power) / total)
    return center


def fit_peak(spec: Spectrogram, index: int, band: tuple,
             floor: float | None = None, threshold: float = 4.0,
             half_points: int = 3, method: str = "gaussian") -> PeakFit:
    """Fit the spectral peak of one window inside ``band`` = (f_lo, f_hi).

    ``method`` is "gaussian" (log-magnitude Gaussian over +-``half_points``
    grid points around the maximum, the default), "parabolic" (3-point
    interpolation), or "centroid" (Gaussian fit for the amplitude, then the
    FM-exact power centroid for the frequency). snr_db is
    20*log10(amplitude/floor). Returns a flagged-missing entry (valid
    False) when the peak does not exceed ``threshold`` times the band
    median.
    """
    sel = (spec.frequencies >= band[0]) & (spec.frequencies <= band[1])
    idx = np.flatnonzero(sel)
    if idx.size < 2 * half_points + 1:
        raise BandError("search band too narrow for the peak fit")
    mag = spec.magnitude[index, idx]
    k = int(np.argmax(mag))
    peak_raw = mag[k]
    if peak_raw < threshold * np.median(mag):
        return PeakFit(math.nan, math.nan, math.nan, math.nan, valid=False)
    lo = max(k - half_points, 0)
    hi = min(k + half_points + 1, mag.size)
    window_idx = np.arange(lo, hi, dtype=float) - k
    y = np.log(mag[lo:hi])
    if method == "parabolic":
        window_idx = np.arange(-1, 2, dtype=float)
        if k == 0 or k == mag.size - 1:
            return PeakFit(math.nan, math.nan, math.nan, math.nan, valid=False)
        y = np.log(mag[k - 1:k + 2])
    coeff = np.polyfit(window_idx, y, 2)
    a2, a1, a0 = coeff
    if a2 >= 0:
        return PeakFit(math.nan, math.nan, math.nan, math.nan, valid=False)
    shift = -a1 / (2.0 * a2)
    df = spec.frequencies[1] - spec.frequencies[0]
    frequency = spec.frequencies[idx[k]] + shift * df
    amplitude = math.exp(a0 - a1 * a1 / (4.0 * a2))
    if method == "centroid":
        frequency = _centroid_refine(spec, index, frequency, floor or 0.0)
        if math.isnan(frequency):
            return PeakFit(math.nan, math.nan, math.nan, math.nan, valid=False)
    if floor is not None and floor > 0:
        snr = amplitude / floor
        snr_db = 20.0 * math.log10(snr)
        kfit = K_CENTROID if method == "centroid" else K_FIT
        ferr = kfit * math.sqrt(24.0 / math.pi) / (TWO_PI * spec.window_length * snr)
    else:
        snr_db = math.nan
        ferr = math.nan
    return PeakFit(frequency=frequency, amplitude=amplitude,
                   frequency_err=ferr, snr_db=snr_db)


@dataclass(frozen=True)
class PhaseSlopeEstimator:
    """Window frequency from the least-squares slope of the carrier phase.

    The window is demodulated at a reference frequency, block-averaged to
    suppress the negative-frequency image, and the unwrapped phase fitted
    with a straight line. The estimate is a linear functional of the
    instantaneous frequency, so a frequency-modulated carrier is read with
    no modulation-order mixing, and the per-harmonic window response is
    known in closed form (``harmonic_regressors``). Blocks must be long
    enough that the per-block SNR keeps the unwrap step noise well under
    pi; the default (window/40) holds a comfortable margin down to ~20 dB
    window SNR.
    """

    window_samples: int
    sample_rate: float
    block_size: int = 0   # 0: window_samples // 40

    def __post_init__(self):
        if self.block_size <= 0:
            object.__setattr__(self, "block_size",
                               max(self.window_samples // 40, 1))

    @property
    def n_blocks(self) -> int:
        return self.window_samples // self.block_size

    def _slope_weights(self) -> np.ndarray:
        k = np.arange(self.n_blocks, dtype=float)
        kc = k - k.mean()
        dt = self.block_size / self.sample_rate
        return kc / (np.sum(kc**2) * dt)

    def estimate(self, samples: np.ndarray, f_ref: float) -> float:
        n = self.n_blocks * self.block_size
        t = np.arange(n) / self.sample_rate
        z = samples[:n] * np.exp(-2j * math.pi * f_ref * t)
        zb = z.reshape(self.n_blocks, self.block_size).mean(axis=1)
        phase = np.unwrap(np.angle(zb))
        return f_ref + float(np.dot(self._slope_weights(), phase)) / TWO_PI

    def harmonic_regressors(self, f_m: float, window_starts: np.ndarray):
        """Response of the estimate to unit field-frequency modulation.

        Returns (r_sin, r_cos): the estimator output (Hz) for instantaneous
        frequency sin(2 pi f_m t) and cos(2 pi f_m t), for windows starting
        at the given absolute times.
        """
        dt = self.block_size / self.sample_rate
        w = self._slope_weights()
        k = np.arange(self.n_blocks, dtype=float)
        g = np.dot(w, np.exp(2j * math.pi * f_m * (k + 0.5) * dt))
        rot = np.exp(2j * math.pi * f_m * np.asarray(window_starts, float)) * g
        boxcar = np.sinc(f_m * dt)
        r_sin = -(boxcar / f_m) * rot.real / TWO_PI
        r_cos = (boxcar / f_m) * rot.imag / TWO_PI
        return r_sin, r_cos


@dataclass(frozen=True)
class LarmorTrack:
    times: np.ndarray
    frequency: np.ndarray      # Hz, nan where missing
    frequency_err: np.ndarray  # Hz
    amplitude: np.ndarray
    snr_db: np.ndarray
    valid: np.ndarray          # bool
    window_length: float
    estimator: PhaseSlopeEstimator | None = None
    diagnostic: str = ""

    @property
    def window_starts(self) -> np.ndarray:
        return self.times - self.window_length / 2.0

    def valid_arrays(self):
        v = self.valid
        return (self.times[v], self.frequency[v], self.frequency_err[v],
                self.amplitude[v], self.snr_db[v])


def track_larmor(spec: Spectrogram, seed_band: tuple,
                 floor: float | None = None, track_halfwidth: float = 1e3,
                 threshold: float = 4.0, max_lost: int = 50,
                 t_min: float | None = None, signal: RawSignal | None = None,
                 method: str = "phase_slope") -> LarmorTrack:
    """Per-window fits with ridge continuity.

    Peak detection, amplitude and SNR come from the spectrogram fit in a
    search band re-centered on the previous valid window (width
    2*track_halfwidth). With ``method`` "phase_slope" (the default,
    requires ``signal``) the frequency is then refined by the phase-slope
    estimator, which reads frequency-modulated carriers without
    peak-skew bias; "gaussian"/"parabolic"/"centroid" use the spectral fit
    alone. Windows without a significant peak are flagged missing and
    skipped, never interpolated; more than ``max_lost`` consecutive misses
    truncates the track with a diagnostic.
    """
    if t_min is None:
        t_min = float(spec.metadata.get("pre_tip_interval", 0.0))
    estimator = None
    if method == "phase_slope":
        if signal is None:
            raise ValueError("phase_slope tracking needs the raw signal")
        n_blocks = 40
        if floor is not None and floor > 0:
            # keep per-block SNR >= ~5 so the phase unwrap cannot slip:
            # block SNR = snr_window * sqrt(pi / n_blocks) / 2
            peaks = np.max(spec.magnitude, axis=1)
            detected = peaks[peaks > max(threshold, 1.0) * floor]
            if detected.size:
                snr_lo = np.percentile(detected, 10) / floor
                n_blocks = int(np.clip(math.pi * (snr_lo / 5.0) ** 2 / 4.0, 6, 40))
        estimator = PhaseSlopeEstimator(
            window_samples=spec.window_samples, sample_rate=spec.sample_rate,
            block_size=max(spec.window_samples // n_blocks, 1))
    n = len(spec.times)
    f = np.full(n, math.nan)
    ferr = np.full(n, math.nan)
    amp = np.full(n, math.nan)
    snr = np.full(n, math.nan)
    valid = np.zeros(n, dtype=bool)
    band = tuple(seed_band)
    step = round(spec.hop * spec.sample_rate)
    lost = 0
    diagnostic = ""
    kfit = K_PHASE if estimator is not None else K_FIT
    for i in range(n):
        if spec.times[i] - spec.window_length / 2.0 < t_min:
            continue
        fit = fit_peak(spec, i, band, floor=floor, threshold=threshold,
                       method=method if estimator is None else "gaussian")
        if fit.valid:
            freq = fit.frequency
            amplitude = fit.amplitude
            if estimator is not None:
                s0 = i * step
                freq = estimator.estimate(signal.samples[s0:s0 + spec.window_samples],
                                          fit.frequency)
                if floor is not None and floor > 0:
                    amplitude = tone_magnitude(spec, i, freq, floor)
            f[i], amp[i] = freq, amplitude
            if floor is not None and floor > 0:
                snr[i] = 20.0 * math.log10(amplitude / floor)
                ferr[i] = (kfit * math.sqrt(24.0 / math.pi)
                           / (TWO_PI * spec.window_length * (amplitude / floor)))
            valid[i] = True
            band = (freq - track_halfwidth, freq + track_halfwidth)
            lost = 0
        else:
            lost += 1
            if lost > max_lost:
                diagnostic = (f"track lost for {lost} consecutive windows "
                              f"at t = {spec.times[i]:.4f} s; truncated")
                break
    return LarmorTrack(times=spec.times, frequency=f, frequency_err=ferr,
                       amplitude=amp, snr_db=snr, valid=valid,
                       window_length=spec.window_length, estimator=estimator,
                       diagnostic=diagnostic)


@dataclass(frozen=True)
class HarmonicFit:
    line_frequency: float
    frequencies: np.ndarray     # Hz, k * line_frequency
    amplitudes: np.ndarray      # gauss
    amplitude_errs: np.ndarray  # gauss
    phases: np.ndarray          # rad
    mean_field: float           # gauss
    mean_field_err: float       # gauss
    residual_rms: float         # Hz


def fit_harmonics(track: LarmorTrack, line_frequency: float, n_harmonics: int,
                  gamma: float, multiples=None) -> HarmonicFit:
    """Linear least squares of the track onto fixed power-line harmonics.

    ``multiples`` selects which multiples of the line frequency to fit;
    the default is the first ``n_harmonics`` odd multiples (1, 3, 5, ...),
    the components magnetic pickup actually carries. Model per harmonic:
    field component A sin(2 pi f_m t + ph). The regressors are the
    analysis window's exact response to unit sin/cos field modulation
    (phase-slope transfer when the track was estimated that way, boxcar
    average otherwise), so fitted amplitudes are field amplitudes (gauss,
    via gamma in rad/(s gauss)) free of window attenuation. Weighted by
    the per-window standard errors. Raises on rank deficiency.
    """
    t, fr, fe, _, _ = track.valid_arrays()
    starts = track.window_starts[track.valid]
    if multiples is None:
        multiples = [2 * k + 1 for k in range(n_harmonics)]
    ncols = 1 + 2 * len(multiples)
    if t.size < 2 * ncols:
        raise ValueError("track too short for the requested harmonic fit")
    if np.ptp(t) < 2.0 / line_frequency:
        raise ValueError("track must span several line periods")

    f_per_gauss = gamma / TWO_PI  # Hz per gauss
    cols = [np.ones_like(t)]
    for mult in multiples:
        f_m = mult * line_frequency
        if track.estimator is not None:
            r_sin, r_cos = track.estimator.harmonic_regressors(f_m, starts)
        else:
            boxcar = np.sinc(f_m * track.window_length)
            r_sin = boxcar * np.sin(TWO_PI * f_m * t)
            r_cos = boxcar * np.cos(TWO_PI * f_m * t)
        cols.append(r_sin)
        cols.append(r_cos)
    A = np.column_stack(cols)
    w = 1.0 / fe if np.all(np.isfinite(fe)) else np.ones_like(fr)
    Aw = A * w[:, None]
    yw = fr * w
    coef, _, rank, _ = np.linalg.lstsq(Aw, yw, rcond=None)
    if rank < ncols:
        raise ValueError("harmonic design matrix is rank deficient")
    cov = np.linalg.inv(Aw.T @ Aw)
    errs = np.sqrt(np.diag(cov))

    n_fit = len(multiples)
    amps = np.empty(n_fit)
    amp_errs = np.empty(n_fit)
    phases = np.empty(n_fit)
    for k in range(1, n_fit + 1):
        s, c = coef[2 * k - 1], coef[2 * k]
        es, ec = errs[2 * k - 1], errs[2 * k]
        a_hz = math.hypot(s, c)
        amps[k - 1] = a_hz / f_per_gauss
        if a_hz > 0:
            aerr_hz = math.sqrt((s * es) ** 2 + (c * ec) ** 2) / a_hz
        else:
            aerr_hz = math.hypot(es, ec)
        amp_errs[k - 1] = aerr_hz / f_per_gauss
        phases[k - 1] = math.atan2(c, s)
    residual = fr - A @ coef
    return HarmonicFit(
        line_frequency=line_frequency,
        frequencies=np.array(multiples, dtype=float) * line_frequency,
        amplitudes=amps, amplitude_errs=amp_errs, phases=phases,
        mean_field=coef[0] / f_per_gauss, mean_field_err=errs[0] / f_per_gauss,
        residual_rms=float(np.sqrt(np.mean(residual**2))))


def reconstruct_field(fit: HarmonicFit, t) -> np.ndarray:
    """B_ac(t) in gauss from the fitted harmonics (mean removed)."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    for fk, ak, pk in zip(fit.frequencies, fit.amplitudes, fit.phases):
        out += ak * np.sin(TWO_PI * fk * t + pk)
    return out


def infer_sensitivity(track: LarmorTrack, tau_f: float, gamma: float) -> dict:
    """Per-window field sensitivity from the fitted-frequency errors.

    delta-B = f_err / (gamma/2pi) per window; delta-B sqrt(T) multiplies by
    sqrt(tau_f). ``gamma`` in rad/(s T) gives tesla. Aggregate is the
    median over valid windows.
    """
    _, _, fe, _, _ = track.valid_arrays()
    f_per_tesla = gamma / TWO_PI
    per_window = fe / f_per_tesla * math.sqrt(tau_f)
    return {"per_window": per_window,
            "median": float(np.median(per_window)) if per_window.size else math.nan}
