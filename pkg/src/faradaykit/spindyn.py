"""Single-mode mean-field spinor dynamics with quadratic shifts and dressing.

For fractional populations (rho_-, rho_0, rho_+) with spinor phase
Theta = Theta_+ + Theta_- - 2 Theta_0 and conserved asymmetry
m = rho_+ - rho_-, the mean-field equations are

    d rho_0 / dt = (2c/hbar) rho_0 sqrt((1-rho_0)^2 - m^2) sin(Theta)
    d Theta / dt = -2 q + (2c/hbar) [ (1-2 rho_0)
                   + ((1-rho_0)(1-2 rho_0) - m^2)
                     / sqrt((1-rho_0)^2 - m^2) * cos(Theta) ]

which conserve the spinor energy functional; the transverse spin envelope
for m = 0 is 2 sqrt(rho_0 (1-rho_0)) cos(Theta/2). The quadratic rate q is
q_net = q_z - q_mw when microwave dressing is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from .atomdata import AtomSpecies, field_point

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SpinorState:
    rho0: float = 0.5
    theta: float = 0.0
    larmor_phase: float = 0.0
    asymmetry: float = 0.0   # m = rho_+ - rho_-, conserved

    def __post_init__(self):
        if not 0.0 <= self.rho0 <= 1.0:
            raise ValueError("rho0 must be in [0, 1]")
        if abs(self.asymmetry) > 1.0 - self.rho0 + 1e-12:
            raise ValueError("|m| cannot exceed 1 - rho0")


@dataclass(frozen=True)
class DressingConfig:
    """Off-resonant microwave dressing of the clock transition."""

    rabi: float = 0.0       # Omega_mw, rad/s
    detuning: float = 0.0   # Delta_mw, rad/s

    def __post_init__(self):
        if self.rabi and self.detuning and abs(self.detuning) < 5 * self.rabi:
            raise ValueError("dressing requires |Delta_mw| > 5 Omega_mw")


@dataclass(frozen=True)
class FieldEnvironment:
    """Static bias plus AC pickup written onto the dominant component."""

    B_y: float = 1.0                 # gauss, dominant bias
    B_z: float = 0.0                 # gauss, residual transverse
    gradient: float = 0.0            # G/cm, summed |dB_y/dx_i|
    ac_harmonics: tuple = ()         # (frequency Hz, amplitude G, phase rad)
    line_frequency: float = 50.0     # Hz

    def __post_init__(self):
        if self.B_y <= 0:
            raise ValueError("B_y must be > 0")
        for _, amp, _ in self.ac_harmonics:
            if amp < 0:
                raise ValueError("harmonic amplitudes must be >= 0")


def q_microwave(dressing: DressingConfig) -> float:
    """Dressing-induced quadratic shift q_mw = -Omega^2/(4 Delta), rad/s."""
    if dressing.rabi == 0.0:
        return 0.0
    if dressing.detuning == 0.0:
        raise ValueError("dressing detuning must be nonzero")
    return -dressing.rabi**2 / (4.0 * dressing.detuning)


def q_net(species: AtomSpecies, F: int, B: float,
          dressing: DressingConfig | None = None) -> float:
    """Net quadratic rate q_z - q_mw (rad/s) at field B (gauss)."""
    q_z = field_point(species, F, B).q_z
    if dressing is None:
        return q_z
    return q_z - q_microwave(dressing)


def nulling_detuning(species: AtomSpecies, F: int, B: float, rabi: float) -> float:
    """Microwave detuning (rad/s) solving q_z = -Omega^2/(4 Delta) exactly."""
    q_z = field_point(species, F, B).q_z
    if q_z == 0.0:
        raise ValueError("q_z vanishes; nothing to null")
    return -rabi**2 / (4.0 * q_z)


def spinor_energy(rho0: float, theta: float, m: float, q: float, c_over_hbar: float) -> float:
    """Conserved energy functional (rad/s) of the two-mode reduction."""
    s = math.sqrt(max((1.0 - rho0) ** 2 - m * m, 0.0))
    return (c_over_hbar * (rho0 * (1.0 - rho0) + rho0 * s * math.cos(theta))
            + q * (1.0 - rho0))


def evolve_spinor(state: SpinorState, q: float, c_over_hbar: float,
                  duration: float, rtol: float = 1e-9,
                  max_points: int = 2001) -> dict:
    """Integrate the spinor equations for ``duration`` seconds.

    Returns {"t", "rho0", "theta", "fz_envelope"} arrays; the envelope is
    the m = 0 transverse spin length 2 sqrt(rho0 (1-rho0)) cos(theta/2).
    Uses an adaptive embedded Runge-Kutta pair (DOP853) at relative
    tolerance ``rtol``.
    """
    m = state.asymmetry

    def rhs(_, y):
        rho0, theta = y
        rho0 = min(max(rho0, 0.0), 1.0)
        s2 = (1.0 - rho0) ** 2 - m * m
        s = math.sqrt(s2) if s2 > 0.0 else 0.0
        drho = 2.0 * c_over_hbar * rho0 * s * math.sin(theta)
        coupling = (1.0 - 2.0 * rho0)
        if s > 0.0:
            coupling += ((1.0 - rho0) * (1.0 - 2.0 * rho0) - m * m) / s * math.cos(theta)
        dtheta = -2.0 * q + 2.0 * c_over_hbar * coupling
        return (drho, dtheta)

    t_eval = np.linspace(0.0, duration, max_points)
    sol = solve_ivp(rhs, (0.0, duration), (state.rho0, state.theta),
                    method="DOP853", rtol=rtol, atol=1e-12, t_eval=t_eval)
    if not sol.success:
        raise RuntimeError(f"spinor integration failed: {sol.message}")
    rho0 = np.clip(sol.y[0], 0.0, 1.0)
    theta = sol.y[1]
    envelope = 2.0 * np.sqrt(rho0 * (1.0 - rho0)) * np.cos(theta / 2.0)
    return {"t": sol.t, "rho0": rho0, "theta": theta, "fz_envelope": envelope}


def larmor_frequency_with_vls(B_y: float, B_z: float, B_vls: float,
                              gamma: float) -> float:
    """omega_L = gamma sqrt(B_y^2 + (B_z + B_vls)^2), fields in gauss,
    gamma in rad/(s gauss)."""
    if B_y <= 0:
        raise ValueError("B_y must be > 0")
    return gamma * math.hypot(B_y, B_z + B_vls)


def waveplate_vls(theta: float, B_vls0: float, theta0: float) -> float:
    """Quarter-waveplate ellipticity model B_vls = B_vls0 sin(2(theta - theta0))."""
    return B_vls0 * math.sin(2.0 * (theta - theta0))


def fit_vls_waveplate(thetas, omega_L, B_y: float, gamma: float,
                      sigma=None, p0=None) -> dict:
    """Recover (B_z, B_vls0, theta0) from a waveplate sweep of omega_L.

    ``thetas`` in rad, ``omega_L`` in rad/s, ``B_y`` (gauss) and ``gamma``
    (rad/(s gauss)) held fixed. Returns fitted values and 1-sigma errors.
    """
    thetas = np.asarray(thetas, float)
    omega_L = np.asarray(omega_L, float)

    def model(th, B_z, B_vls0, theta0):
        bv = B_vls0 * np.sin(2.0 * (th - theta0))
        return gamma * np.hypot(B_y, B_z + bv)

    if p0 is None:
        p0 = (0.01, 0.03, float(thetas[np.argmax(omega_L)]))
    popt, pcov = curve_fit(model, thetas, omega_L, p0=p0, sigma=sigma,
                           absolute_sigma=sigma is not None, maxfev=20000)
    err = np.sqrt(np.diag(pcov))
    return {"B_z": popt[0], "B_vls0": popt[1], "theta0": popt[2],
            "B_z_err": err[0], "B_vls0_err": err[1], "theta0_err": err[2]}


def dephasing_time(gamma: float, gradient: float, radius: float) -> float:
    """Gradient dephasing timescale tau_D = pi / (2 gamma b R).

    gamma in rad/(s gauss), gradient b in G/cm, radius in m. Returns +inf
    for b = 0 (no gradient, no dephasing).
    """
    if gradient < 0 or radius <= 0:
        raise ValueError("gradient must be >= 0 and radius > 0")
    if gradient == 0.0:
        return math.inf
    b_per_m = gradient * 100.0  # G/cm -> G/m
    return math.pi / (2.0 * gamma * b_per_m * radius)


def dephasing_envelope(t, tau_D: float) -> np.ndarray:
    """Gaussian free-induction-decay kernel exp(-t^2 / (2 tau_D^2))."""
    t = np.asarray(t, float)
    if math.isinf(tau_D):
        return np.ones_like(t)
    return np.exp(-0.5 * (t / tau_D) ** 2)
