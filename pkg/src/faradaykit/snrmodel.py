"""Shot-noise-limited SNR of the Faraday measurement and derived figures.

Geometry enters through intensity-weighted averages over the Gaussian probe
profile; atomic structure through |xi_s/xi_f|; timescales through
sqrt(tau_f/tau_s). The general expression

    SNR = sqrt(kappa N) (3 lambda / sqrt(2 pi))
          <rho>_a / sqrt(<1>_a <rho>_inf) |xi_s/xi_f| sqrt(tau_f/tau_s) <F_z>

is invariant under probe-power rescaling at fixed scattering lifetime.

dB convention: reported snr_db is the amplitude convention
20*log10(snr_linear), matching the sqrt(tau_f) scaling of fitted
spectrogram SNR (+3 dB per doubling of the window). Companion power-style
readings 10*log10(snr_linear) are exposed where external reference values
use them; see README for the convention resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .polarizability import CouplingTable, ProbeConfig, weighted_detunings

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CloudProfile:
    """Axisymmetric column-density profile holding N atoms.

    ``radius`` is the 1/e^2 column-density radius for a Gaussian cloud and
    the sharp Thomas-Fermi radius otherwise. Anisotropic transverse radii
    may be given; their geometric mean is then used as the scalar radius.
    """

    N: float
    kind: str = "thomas-fermi"       # "gaussian" | "thomas-fermi"
    radius: float = 19e-6            # m
    radii: tuple | None = None       # optional anisotropic transverse radii

    def __post_init__(self):
        if self.N <= 0:
            raise ValueError("N must be > 0")
        if self.kind not in ("gaussian", "thomas-fermi"):
            raise ValueError("kind must be 'gaussian' or 'thomas-fermi'")
        if self.radii is not None:
            gm = float(np.exp(np.mean(np.log(self.radii))))
            object.__setattr__(self, "radius", gm)
        if self.radius <= 0:
            raise ValueError("radius must be > 0")

    def column_density(self, r) -> np.ndarray:
        """rho(r) in m^-2; integrates to N over the plane."""
        r = np.asarray(r, dtype=float)
        R = self.radius
        if self.kind == "gaussian":
            return 2.0 * self.N / (math.pi * R**2) * np.exp(-2.0 * r**2 / R**2)
        peak = 2.5 * self.N / (math.pi * R**2)
        u = np.clip(1.0 - r**2 / R**2, 0.0, None)
        return peak * u**1.5

    def peak_column_density(self) -> float:
        return float(self.column_density(0.0))

    def enclosed_atoms(self, a: float) -> float:
        """N_a = integral of rho over a disc of radius a."""
        R = self.radius
        if self.kind == "gaussian":
            return self.N * (1.0 - math.exp(-2.0 * a**2 / R**2))
        if a >= R:
            return self.N
        return self.N * (1.0 - (1.0 - (a / R) ** 2) ** 2.5)


@dataclass(frozen=True)
class DetectionConfig:
    aperture: float                  # m
    transmission: float = 0.2        # kappa
    window: float = 5e-3             # tau_f, s
    noise_equivalent_power: float = 0.0  # W/sqrt(Hz), technical-noise reporting

    def __post_init__(self):
        if self.aperture <= 0:
            raise ValueError("aperture must be > 0")
        if not 0 < self.transmission <= 1:
            raise ValueError("transmission must be in (0, 1]")
        if self.window <= 0:
            raise ValueError("window must be > 0")


@dataclass(frozen=True)
class SnrReport:
    snr_linear: float
    snr_db: float          # 20 log10(snr_linear)
    sensitivity: float     # T/sqrt(Hz), nan if not evaluated
    sql_ratio: float       # nan if not evaluated

    @property
    def snr_db_power(self) -> float:
        """Power-style reading 10 log10(snr_linear)."""
        return 10.0 * math.log10(self.snr_linear)


def _report(snr_linear: float, sensitivity=math.nan, sql=math.nan) -> SnrReport:
    return SnrReport(snr_linear=snr_linear,
                     snr_db=20.0 * math.log10(snr_linear) if snr_linear > 0 else -math.inf,
                     sensitivity=sensitivity, sql_ratio=sql)


def intensity_weighted_average(probe: ProbeConfig, cloud: CloudProfile | None,
                               quantity: str, aperture: float) -> float:
    """<X>_I^a = P0^-1 int_0^a 2 pi r I(r) X(r) dr for a Gaussian beam.

    ``quantity`` is "unity" or "column_density"; ``aperture`` may be inf.
    Evaluated by adaptive quadrature to better than 1e-8 relative (the
    unity case uses the closed form).
    """
    w = probe.waist
    if quantity == "unity":
        if math.isinf(aperture):
            return 1.0
        return 1.0 - math.exp(-2.0 * aperture**2 / w**2)
    if quantity != "column_density":
        raise ValueError("quantity must be 'unity' or 'column_density'")
    if cloud is None:
        raise ValueError("column_density average needs a cloud")

    upper = aperture
    if cloud.kind == "thomas-fermi":
        upper = min(upper, cloud.radius)
    if math.isinf(upper):
        upper = cloud.radius * 12.0  # Gaussian tail is negligible beyond this

    def integrand(r):
        return (4.0 * r / w**2) * math.exp(-2.0 * r**2 / w**2) * cloud.column_density(r)

    val, _ = quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def snr_from_parameters(N: float, kappa: float, wavelength: float,
                        geometry: float, xi_ratio: float,
                        tau_f: float, tau_s: float, Fz: float = 1.0) -> SnrReport:
    """Shot-noise-limited SNR from the separated factors.

    ``geometry`` is <rho>_a / sqrt(<1>_a <rho>_inf) in 1/m; ``xi_ratio`` is
    |xi_s/xi_f|.
    """
    if tau_s <= 0:
        raise ValueError("tau_s must be > 0")
    snr = (math.sqrt(kappa * N) * 3.0 * wavelength / math.sqrt(TWO_PI)
           * geometry * abs(xi_ratio) * math.sqrt(tau_f / tau_s) * abs(Fz))
    return _report(snr)


def snr_general(probe: ProbeConfig, cloud: CloudProfile, detect: DetectionConfig,
                table: CouplingTable, tau_s: float, Fz: float = 1.0,
                xi_ratio: float | None = None) -> SnrReport:
    """SNR for a Gaussian beam and real cloud profile.

    ``tau_s`` is the scattering lifetime (from the scattering module or
    measured); ``xi_ratio`` overrides the table's |xi_s/xi_f| when an
    externally quoted value should be used instead.
    """
    rho_a = intensity_weighted_average(probe, cloud, "column_density", detect.aperture)
    rho_inf = intensity_weighted_average(probe, cloud, "column_density", math.inf)
    one_a = intensity_weighted_average(probe, None, "unity", detect.aperture)
    geometry = rho_a / math.sqrt(one_a * rho_inf)
    if xi_ratio is None:
        xi_ratio = abs(weighted_detunings(table).ratio)
    return snr_from_parameters(cloud.N, detect.transmission, table.wavelength,
                               geometry, xi_ratio, detect.window, tau_s, Fz)


def snr_uniform(N_a: float, area: float, kappa: float, xi_ratio: float,
                tau_f: float, tau_s: float, wavelength: float,
                Fz: float = 1.0) -> SnrReport:
    """Uniform-intensity idealization: SNR = N_a sqrt(kappa) 3 lambda /
    sqrt(2 pi A) |xi_s/xi_f| sqrt(tau_f/tau_s) <F_z>."""
    if tau_s <= 0:
        raise ValueError("tau_s must be > 0")
    snr = (N_a * math.sqrt(kappa) * 3.0 * wavelength / math.sqrt(TWO_PI * area)
           * abs(xi_ratio) * math.sqrt(tau_f / tau_s) * abs(Fz))
    return _report(snr)


def optimize_aperture(cloud: CloudProfile) -> float:
    """Aperture radius maximizing N_a / sqrt(A) for a uniform beam.

    Golden-section search; |da| < 1e-4 R. Known optima: a = 0.79 R
    (Gaussian cloud), a = 0.73 R (Thomas-Fermi).
    """
    R = cloud.radius

    def objective(a):
        return -cloud.enclosed_atoms(a) / math.sqrt(math.pi * a**2)

    res = minimize_scalar(objective, bounds=(1e-3 * R, 3.0 * R), method="bounded",
                          options={"xatol": 1e-5 * R})
    return float(res.x)


def regime_scan(species, F: int, wavelengths) -> np.ndarray:
    """|xi_s/xi_f| on a wavelength grid (m); returns (lambda, signed ratio).

    The grid must avoid resonances by more than a linewidth.
    """
    from .polarizability import coupling_table
    out = np.empty((len(wavelengths), 2))
    for i, lam in enumerate(wavelengths):
        table = coupling_table(species, F, lam)
        out[i, 0] = lam
        out[i, 1] = weighted_detunings(table).ratio
    return out


def sensitivity(snr_linear: float, tau_f: float, gamma: float) -> float:
    """Magnetic sensitivity per unit bandwidth, T/sqrt(Hz).

    delta-B sqrt(T) = 1 / (gamma snr_rms sqrt(tau_f)) with gamma in
    rad/(s T) and snr_rms = snr_linear/sqrt(2), the RMS-signal reading of
    the shot-noise SNR (the Larmor-phase uncertainty is 1/snr_rms). The
    per-window frequency readout is a further sqrt(12) above this
    phase-limited figure; see dsp.infer_sensitivity.
    """
    if snr_linear <= 0:
        raise ValueError("snr_linear must be > 0")
    return math.sqrt(2.0) / (gamma * snr_linear * math.sqrt(tau_f))


def sql_ratio(kappa: float, sigma0: float, column_density: float,
              tau_f: float, tau_s: float) -> dict:
    """Atomic-SQL to photon-shot-noise ratio and its unity crossover.

    ratio = sqrt(kappa sigma0 rho tau_f / (2 tau_s)); crossover is the
    window length at which the ratio reaches 1.
    """
    if min(kappa, sigma0, column_density, tau_f, tau_s) <= 0:
        raise ValueError("all arguments must be > 0")
    ratio = math.sqrt(kappa * sigma0 * column_density * tau_f / (2.0 * tau_s))
    crossover = 2.0 * tau_s / (kappa * sigma0 * column_density)
    return {"ratio": ratio, "crossover_tau_f": crossover}
