"""Off-resonant photon scattering: Rayleigh/Raman split, total rate, lifetime.

The total rate uses the incoherent weighted detuning,
gamma = gamma0 I0 sum alpha^(0)/(alpha0 Delta^2), with
gamma0 = omega^3 alpha0^2 / (18 pi eps0^2 hbar^3 c^4). The Rayleigh/Raman
decomposition uses the coherent line sums; decomposition and total agree
exactly only when each line's hyperfine ladder is degenerate (the elastic
limit in which the split is derived), and to ~1e-3 relative for resolved
ladders far from resonance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c, epsilon_0, hbar
from scipy.integrate import quad

from .polarizability import CouplingTable, ProbeConfig


@dataclass(frozen=True)
class ScatteringBudget:
    gamma_rayleigh: float   # 1/s
    gamma_raman: float      # 1/s
    gamma_total: float      # 1/s
    gamma0: float           # rate prefactor of the Kramers-Heisenberg sum
    tau_s: float            # 1/gamma_total, s (inf at zero intensity)


def rate_prefactor(table: CouplingTable) -> float:
    """gamma0 = omega^3 alpha0^2 / (18 pi eps0^2 hbar^3 c^4)."""
    return (table.omega**3 * table.alpha0**2
            / (18.0 * math.pi * epsilon_0**2 * hbar**3 * c**4))


def scattering_rate(table: CouplingTable, intensity: float) -> ScatteringBudget:
    """Scattering budget at probe intensity I0 (W/m^2).

    gamma_rayleigh = (I0 gamma0 / 3) (sum a0/Delta)^2,
    gamma_raman    = 6 I0 gamma0 (sum a1/Delta)^2,
    gamma_total    = I0 gamma0 sum a0/Delta^2  (the xi_s form).
    """
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    g0 = rate_prefactor(table)
    s0 = table.scalar_sum()
    s1 = table.vector_sum()
    g_ray = intensity * g0 / 3.0 * s0 * s0
    g_ram = 6.0 * intensity * g0 * s1 * s1
    g_tot = intensity * g0 * table.scalar_quad_sum()
    tau = math.inf if g_tot == 0.0 else 1.0 / g_tot
    return ScatteringBudget(gamma_rayleigh=g_ray, gamma_raman=g_ram,
                            gamma_total=g_tot, gamma0=g0, tau_s=tau)


def per_watt_rate(table: CouplingTable, probe: ProbeConfig, cloud=None) -> float:
    """Scattering rate per watt of beam power, 1/(s W).

    With ``cloud`` given, returns the density-weighted average across the
    cloud (what a lifetime measurement sees); otherwise the peak-intensity
    value. The averaging choice matters at the few-percent level for a
    cloud much smaller than the beam.
    """
    per_peak = (rate_prefactor(table) * table.scalar_quad_sum()
                * 2.0 / (math.pi * probe.waist**2))
    if cloud is None:
        return per_peak

    def weight(r):
        return 2 * math.pi * r * cloud.column_density(r)

    num = quad(lambda r: weight(r) * math.exp(-2 * r**2 / probe.waist**2),
               0.0, cloud.radius, limit=200)[0]
    den = quad(weight, 0.0, cloud.radius, limit=200)[0]
    return per_peak * num / den


def cloud_lifetime(table: CouplingTable, probe: ProbeConfig, cloud,
                   tau_one_body: float = math.inf,
                   per_watt: float | None = None) -> dict:
    """Probe-limited lifetime of the cloud, optionally with a one-body floor.

    1/tau_s is the density-weighted scattering rate at beam power P0;
    ``per_watt`` overrides the model rate (e.g. with a measured value).
    Returns {"tau_s", "tau_combined", "gamma_per_watt"}.
    """
    if per_watt is None:
        per_watt = per_watt_rate(table, probe, cloud)
    rate = per_watt * probe.power
    tau_s = math.inf if rate == 0.0 else 1.0 / rate
    inv_total = rate + (0.0 if math.isinf(tau_one_body) else 1.0 / tau_one_body)
    tau_combined = math.inf if inv_total == 0.0 else 1.0 / inv_total
    return {"tau_s": tau_s, "tau_combined": tau_combined,
            "gamma_per_watt": per_watt}
