"""Spherical-tensor atom-light coupling coefficients and derived observables.

For a ground level |J F> probed at angular frequency omega, each
dipole-allowed excited level |J' F'> contributes rank-0/1/2 coupling
strengths

    strength = alpha0 * (2F'+1)(2J'+1) * {1 J J'; I F' F}^2

scaled by rank-dependent Kronecker factors, with detuning
Delta(J'F') = omega - (line centroid + hyperfine offset). alpha0 is the
polarizability constant 3 eps0 hbar lambda^3 Gamma / (8 pi^2), independent
of which line supplies (lambda, Gamma) because lambda^3 Gamma is common to
the doublet; the loader asserts that equality instead of averaging.

Light-shift observables are intensity-normalized: the per-intensity scale

    chi(I0) = alpha0 * I0 / (4 eps0 c hbar^2)      [rad/s]^2

reproduces the standard far-detuned dipole-potential formula
pi c^2 Gamma I0 / (2 hbar omega0^3) when summed over a line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c, epsilon_0, hbar
from scipy.optimize import brentq

from .angular import wigner6j
from .atomdata import MU_B, AtomSpecies, TransitionLine

TWO_PI = 2.0 * math.pi


class OnResonanceError(ValueError):
    """Probe within one natural linewidth of a resonance."""


@dataclass(frozen=True)
class ProbeConfig:
    """Probe beam: wavelength, power, Gaussian 1/e^2 waist, polarization."""

    wavelength: float                  # m
    power: float = 0.0                 # W
    waist: float = 75e-6               # m, 1/e^2 intensity radius
    polarization_angle: float = 0.0    # rad, linear axis vs bias field
    ellipticity: float = 0.0           # s_z = <S_z>/<S_0>, in [-1, 1]

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if self.waist <= 0:
            raise ValueError("waist must be > 0")
        if abs(self.ellipticity) > 1:
            raise ValueError("|ellipticity| must be <= 1")

    @property
    def omega(self) -> float:
        return TWO_PI * c / self.wavelength

    @property
    def peak_intensity(self) -> float:
        """On-axis intensity 2 P0 / (pi w^2) in W/m^2."""
        return 2.0 * self.power / (math.pi * self.waist**2)

    def intensity(self, r) -> np.ndarray:
        return self.peak_intensity * np.exp(-2.0 * np.asarray(r) ** 2 / self.waist**2)


@dataclass(frozen=True)
class CouplingRow:
    line: str
    F_excited: int
    detuning: float   # rad/s
    a0: float         # alpha^(0) in units of alpha0
    a1: float         # alpha^(1) in units of alpha0
    a2: float         # alpha^(2) in units of alpha0


@dataclass(frozen=True)
class CouplingTable:
    """Per-(J',F') couplings for one ground F at one probe wavelength."""

    species_name: str
    ground_F: int
    wavelength: float          # m
    omega: float               # rad/s
    alpha0: float              # polarizability constant (paper units, C^2 m^2)
    gF: float
    rows: tuple

    def scalar_sum(self) -> float:
        """sum alpha^(0) / (alpha0 Delta), in s."""
        return sum(r.a0 / r.detuning for r in self.rows)

    def vector_sum(self) -> float:
        """sum alpha^(1) / (alpha0 Delta) = 1/xi_f, in s."""
        return sum(r.a1 / r.detuning for r in self.rows)

    def tensor_sum(self) -> float:
        """sum alpha^(2) / (alpha0 Delta), in s."""
        return sum(r.a2 / r.detuning for r in self.rows)

    def scalar_quad_sum(self) -> float:
        """sum alpha^(0) / (alpha0 Delta^2) = 1/xi_s^2, in s^2 (always > 0)."""
        return sum(r.a0 / r.detuning**2 for r in self.rows)


@dataclass(frozen=True)
class WeightedDetunings:
    """Coherent (xi_f) and incoherent (xi_s) weighted detunings, rad/s.

    The primitive sums are 1/xi_f (either sign) and 1/xi_s^2 (> 0);
    xi_f carries the sign of its sum.
    """

    xi_f: float
    xi_s: float

    @property
    def ratio(self) -> float:
        """xi_s / xi_f (signed)."""
        return self.xi_s / self.xi_f


def _rank_factors(F: int, F_exc: int):
    """Kronecker-delta rank factors for F -> F' = F-1, F, F+1."""
    if F_exc == F - 1:
        return 1.0, -1.0 / F, (1.0 / F) / (2 * F_exc + 1)
    if F_exc == F:
        return (1.0, -1.0 / (F * (F + 1)),
                -(2 * F + 1) / (F * (F + 1)) / (2 * F_exc + 1))
    if F_exc == F + 1:
        return 1.0, 1.0 / F_exc, (1.0 / F_exc) / (2 * F_exc + 1)
    raise ValueError("F_exc must be one of F-1, F, F+1")


def alpha0_constant(line: TransitionLine) -> float:
    """Polarizability constant 3 eps0 hbar lambda^3 Gamma / (8 pi^2)."""
    return 3.0 * epsilon_0 * hbar * line.wavelength**3 * line.linewidth / (8 * math.pi**2)


def assert_alpha0_consistency(species: AtomSpecies, tol: float = 0.01) -> float:
    """Check lambda^3 Gamma equality across the doublet; returns max rel dev.

    Raises ValueError beyond ``tol``: a data problem should surface loudly,
    not be averaged away.
    """
    vals = [alpha0_constant(ln) for ln in species.lines]
    ref = vals[0]
    dev = max(abs(v - ref) / ref for v in vals)
    if dev > tol:
        raise ValueError(
            f"lambda^3*Gamma differs across lines by {dev:.2%} (> {tol:.0%})")
    return dev


def coupling_table(species: AtomSpecies, F: int, wavelength: float,
                   lines=None) -> CouplingTable:
    """Build the rank-0/1/2 coupling table for ground F at the probe wavelength.

    Rows exist exactly for the dipole-allowed F' in {F-1, F, F+1} present in
    each line's hyperfine ladder. Raises OnResonanceError if the probe sits
    within one natural linewidth of any resonance.
    """
    assert_alpha0_consistency(species)
    if lines is None:
        lines = species.lines
    J = 0.5
    I_s = species.nuclear_spin
    omega = TWO_PI * c / wavelength
    alpha0 = alpha0_constant(species.line("D2"))

    rows = []
    for line in lines:
        for F_exc in (F - 1, F, F + 1):
            if F_exc < 0 or F_exc not in line.hyperfine_offsets:
                continue
            sixj = wigner6j(1, J, line.J_excited, I_s, F_exc, F)
            if sixj == 0.0:
                continue
            strength = (2 * F_exc + 1) * (2 * line.J_excited + 1) * sixj**2
            delta = omega - (line.omega + line.hyperfine_offsets[F_exc])
            if abs(delta) <= line.linewidth:
                raise OnResonanceError(
                    f"far-detuned model invalid: probe within a linewidth of "
                    f"{line.label} F'={F_exc}")
            k0, k1, k2 = _rank_factors(F, F_exc)
            rows.append(CouplingRow(
                line=line.label, F_excited=F_exc, detuning=delta,
                a0=strength * k0, a1=strength * k1, a2=strength * k2))

    return CouplingTable(
        species_name=species.name, ground_F=F, wavelength=wavelength,
        omega=omega, alpha0=alpha0, gF=species.gF[F], rows=tuple(rows))


def weighted_detunings(table: CouplingTable) -> WeightedDetunings:
    """Collapse the table into the coherent/incoherent weighted detunings."""
    inv_f = table.vector_sum()
    inv_s2 = table.scalar_quad_sum()
    xi_f = math.inf if inv_f == 0.0 else 1.0 / inv_f
    return WeightedDetunings(xi_f=xi_f, xi_s=1.0 / math.sqrt(inv_s2))


def intensity_scale(table: CouplingTable, intensity: float) -> float:
    """chi(I0) = alpha0 I0 / (4 eps0 c hbar^2), in (rad/s)^2."""
    return table.alpha0 * intensity / (4.0 * epsilon_0 * c * hbar**2)


def scalar_shift(table: CouplingTable, intensity: float) -> float:
    """State-independent (rank-0) light shift in rad/s at intensity I0."""
    return (2.0 / 3.0) * intensity_scale(table, intensity) * table.scalar_sum()


def vector_shift(table: CouplingTable, intensity: float, s_z: float) -> float:
    """Rank-1 shift coefficient of F_z in rad/s (ellipticity s_z)."""
    return intensity_scale(table, intensity) * s_z * table.vector_sum()


def tensor_shift(table: CouplingTable, intensity: float) -> float:
    """Rank-2 shift scale in rad/s (coefficient of the Ŝ0-weighted tensor)."""
    return intensity_scale(table, intensity) * table.tensor_sum()


def tensor_coefficient(table: CouplingTable) -> float:
    """Rank-2 coupling strength sum alpha^(2)/(alpha0 Delta), in s."""
    return table.tensor_sum()


def tensor_cancellation_angle() -> float:
    """Linear-polarization angle (rad) at which the rank-2 term vanishes."""
    return math.atan(math.sqrt(2.0))


def vls_effective_field(table: CouplingTable, intensity: float, s_z: float) -> float:
    """Effective magnetic field (gauss) of the vector light shift.

    Fixed by equating the rank-1 shift to (mu_B gF / hbar) B_vls F_z; zero
    for linear polarization, odd in s_z, linear in intensity.
    """
    if abs(s_z) > 1:
        raise ValueError("|s_z| must be <= 1")
    shift = vector_shift(table, intensity, s_z)  # rad/s per unit F_z
    B_tesla = shift * hbar / (MU_B * table.gF)
    return B_tesla / 1e-4


def faraday_angle(table: CouplingTable, column_density: float, Fz: float) -> float:
    """Polarization rotation angle (rad) for column density rho (m^-2).

    phi_z = phi0 <F_z> / xi_f, with phi0 = pi alpha0 rho / (eps0 hbar lambda).
    """
    if column_density < 0:
        raise ValueError("column density must be >= 0")
    return faraday_prefactor(table, column_density) * Fz * table.vector_sum()


def faraday_prefactor(table: CouplingTable, column_density: float) -> float:
    """phi0 = pi alpha0 rho / (eps0 hbar lambda), in rad/s."""
    return (math.pi * table.alpha0 * column_density
            / (epsilon_0 * hbar * table.wavelength))


def faraday_prefactor_od(line: TransitionLine, column_density: float) -> float:
    """phi0 from the on-resonance optical depth: (Gamma/4) * OD (lambda ~ lambda_line)."""
    od = column_density * line.cross_section
    return 0.25 * line.linewidth * od


def scalar_sum_at(species: AtomSpecies, F: int, omega: float) -> float:
    """sum alpha^(0)/(alpha0 Delta) at probe angular frequency omega (rad/s).

    Pure function of omega used for root bracketing; no on-resonance guard.
    """
    J = 0.5
    I_s = species.nuclear_spin
    total = 0.0
    for line in species.lines:
        for F_exc in (F - 1, F, F + 1):
            if F_exc < 0 or F_exc not in line.hyperfine_offsets:
                continue
            sixj = wigner6j(1, J, line.J_excited, I_s, F_exc, F)
            if sixj == 0.0:
                continue
            strength = (2 * F_exc + 1) * (2 * line.J_excited + 1) * sixj**2
            total += strength / (omega - (line.omega + line.hyperfine_offsets[F_exc]))
    return total


def resonance_frequencies(species: AtomSpecies, F: int) -> list:
    """Angular frequencies of all dipole-allowed transitions from ground F."""
    J = 0.5
    I_s = species.nuclear_spin
    out = []
    for line in species.lines:
        for F_exc in (F - 1, F, F + 1):
            if F_exc < 0 or F_exc not in line.hyperfine_offsets:
                continue
            if wigner6j(1, J, line.J_excited, I_s, F_exc, F) == 0.0:
                continue
            out.append(line.omega + line.hyperfine_offsets[F_exc])
    return sorted(out)


def magic_zero_wavelengths(species: AtomSpecies, F: int,
                           window: tuple, zero_offsets: bool = False) -> list:
    """All roots of the scalar coupling sum inside [lambda_min, lambda_max].

    The scalar sum is strictly decreasing in omega between adjacent
    resonances, so each pole-free segment holds at most one root; roots are
    bracketed per segment and refined by bisection to well below 1e-5 nm.
    Returns wavelengths (m), sorted ascending; empty list if no sign change.

    ``zero_offsets`` collapses each line's hyperfine ladder onto its
    centroid (fine-structure-only model).
    """
    lam_min, lam_max = window
    if not 0 < lam_min < lam_max:
        raise ValueError("window must satisfy 0 < lambda_min < lambda_max")

    sp = species
    if zero_offsets:
        from dataclasses import replace
        sp = replace(species, lines=tuple(
            replace(ln, hyperfine_offsets={f: 0.0 for f in ln.hyperfine_offsets})
            for ln in species.lines))

    w_hi = TWO_PI * c / lam_min
    w_lo = TWO_PI * c / lam_max
    poles = resonance_frequencies(sp, F)
    # pole-free segments of (w_lo, w_hi), with a guard margin off each pole
    gamma_max = max(ln.linewidth for ln in sp.lines)
    edges = [w_lo] + [p for p in poles if w_lo < p < w_hi] + [w_hi]
    roots_omega = []
    for a, b in zip(edges[:-1], edges[1:]):
        margin = min(10 * gamma_max, 0.02 * (b - a))
        lo = a + (margin if a in poles else 0.0)
        hi = b - (margin if b in poles else 0.0)
        if hi <= lo:
            continue
        f_lo = scalar_sum_at(sp, F, lo)
        f_hi = scalar_sum_at(sp, F, hi)
        if f_lo == 0.0:
            roots_omega.append(lo)
            continue
        if f_lo * f_hi < 0:
            roots_omega.append(
                brentq(lambda w: scalar_sum_at(sp, F, w), lo, hi,
                       xtol=1e-3, rtol=8.9e-16))
    return sorted(TWO_PI * c / w for w in roots_omega)
