"""Atomic constants, level structure and ground-manifold Breit-Rabi energies.

Species data is loaded from a versioned JSON file (units nm / MHz, converted
to SI here) rather than hard-coded, so every constant is auditable. The
bundled file covers Rb-87; the schema extends to other alkalis.

All returned objects are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.constants import physical_constants, hbar, h
from scipy.optimize import brentq

MU_B = physical_constants["Bohr magneton"][0]  # J/T
GAUSS = 1e-4  # T

TWO_PI = 2.0 * math.pi


class SpeciesDataError(ValueError):
    """Species file missing, malformed, or violating an invariant."""


@dataclass(frozen=True)
class TransitionLine:
    """One fine-structure line (D1 or D2) with its excited hyperfine ladder.

    ``hyperfine_offsets`` maps F' to the angular-frequency offset (rad/s) of
    that excited level from the line centroid; offsets are stored
    centroid-referenced, i.e. their (2F'+1)-weighted mean is zero.
    """

    label: str
    J_excited: float
    wavelength: float        # m
    linewidth: float         # rad/s
    hyperfine_offsets: dict  # F' (int) -> rad/s

    @property
    def omega(self) -> float:
        """Centroid angular frequency (rad/s)."""
        from scipy.constants import c
        return TWO_PI * c / self.wavelength

    @property
    def cross_section(self) -> float:
        """Resonant scattering cross-section 3*lambda^2/(2*pi) in m^2."""
        return 3.0 * self.wavelength**2 / TWO_PI


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    nuclear_spin: float
    hyperfine_splitting: float  # rad/s, ground manifold
    gF: dict                    # F (int) -> Lande g-factor
    g_J: float
    g_I: float
    mass: float                 # kg
    lines: tuple

    def line(self, label: str) -> TransitionLine:
        for ln in self.lines:
            if ln.label == label:
                return ln
        raise KeyError(f"species {self.name} has no line {label!r}")

    def gyromagnetic_ratio(self, F: int) -> float:
        """|gF| mu_B / hbar in rad/(s*T)."""
        return abs(self.gF[F]) * MU_B / hbar


def _bundled_path(name: str) -> Path:
    return Path(resources.files("faradaykit").joinpath("data", f"{name}.json"))


def load_species(data_path=None) -> AtomSpecies:
    """Load a species record from a JSON data file.

    ``data_path`` may be a path or a bundled species name ('rb87', default).
    Raises SpeciesDataError on parse failures, missing fields, non-positive
    wavelengths/linewidths, or non-centroid-referenced offsets.
    """
    if data_path is None:
        data_path = _bundled_path("rb87")
    path = Path(data_path)
    if not path.exists():
        candidate = _bundled_path(str(data_path))
        if candidate.exists():
            path = candidate
        else:
            raise SpeciesDataError(f"species data file not found: {data_path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpeciesDataError(f"cannot parse {path}: {exc}") from exc

    try:
        I_s = float(raw["nuclear_spin"])
        split_MHz = float(raw["hyperfine_splitting_MHz"])
        lines_raw = raw["lines"]
        name = raw["name"]
        gF = {int(k): float(v) for k, v in raw["gF"].items()}
        g_J = float(raw["g_J"])
        g_I = float(raw["g_I"])
        mass = float(raw["mass_kg"])
    except KeyError as exc:
        raise SpeciesDataError(f"{path}: missing field {exc}") from exc

    if round(2 * I_s) != 2 * I_s or I_s < 0:
        raise SpeciesDataError(f"nuclear spin {I_s} is not a half-integer >= 0")
    if split_MHz <= 0:
        raise SpeciesDataError("hyperfine splitting must be > 0")
    if not lines_raw:
        raise SpeciesDataError("species file defines no transition lines")

    lines = []
    for lr in lines_raw:
        wl = float(lr["wavelength_nm"]) * 1e-9
        gam = TWO_PI * float(lr["linewidth_MHz_over_2pi"]) * 1e6
        if wl <= 0:
            raise SpeciesDataError(f"line {lr.get('label')}: wavelength must be > 0")
        if gam <= 0:
            raise SpeciesDataError(f"line {lr.get('label')}: linewidth must be > 0")
        offsets = {int(k): TWO_PI * float(v) * 1e6
                   for k, v in lr["hyperfine_offsets_MHz"].items()}
        # centroid reference: (2F'+1)-weighted mean offset must vanish
        wsum = sum((2 * fp + 1) * off for fp, off in offsets.items())
        wtot = sum(2 * fp + 1 for fp in offsets)
        if abs(wsum / wtot) > TWO_PI * 0.5e6:  # 0.5 MHz tolerance
            raise SpeciesDataError(
                f"line {lr.get('label')}: hyperfine offsets are not centroid-referenced"
            )
        lines.append(TransitionLine(
            label=str(lr["label"]),
            J_excited=float(lr["J_excited"]),
            wavelength=wl,
            linewidth=gam,
            hyperfine_offsets=offsets,
        ))

    return AtomSpecies(
        name=name,
        nuclear_spin=I_s,
        hyperfine_splitting=TWO_PI * split_MHz * 1e6,
        gF=gF,
        g_J=g_J,
        g_I=g_I,
        mass=mass,
        lines=tuple(lines),
    )


def breit_rabi(species: AtomSpecies, F: int, m: int, B: float) -> float:
    """Ground-manifold Breit-Rabi eigenvalue E/hbar in rad/s.

    ``B`` in gauss, ``F`` one of the two ground hyperfine levels (J = 1/2),
    ``m`` its Zeeman sublevel. Energies are referenced to the zero-field
    hyperfine centroid.
    """
    I = species.nuclear_spin
    F_hi = I + 0.5
    F_lo = abs(I - 0.5)
    if F not in (int(F_hi), int(F_lo)) or abs(m) > F:
        raise ValueError(f"invalid (F={F}, m={m}) for I={I}")
    if B < 0:
        raise ValueError("B must be >= 0")

    dE = species.hyperfine_splitting  # rad/s
    x = (species.g_J - species.g_I) * MU_B * (B * GAUSS) / (hbar * dE)
    nuclear = species.g_I * MU_B * m * (B * GAUSS) / hbar

    if F == F_hi and abs(m) == F:
        # stretched states: closed linear form (the sqrt degenerates)
        sign = 1.0 if m > 0 else -1.0
        return (dE * I / (2 * I + 1)
                + sign * (species.g_J / 2 + species.g_I * I) * MU_B * (B * GAUSS) / hbar)

    root = math.sqrt(1.0 + 4.0 * m * x / (2 * I + 1) + x * x)
    sign = 1.0 if F == F_hi else -1.0
    return -dE / (2 * (2 * I + 1)) + nuclear + sign * (dE / 2) * root


@dataclass(frozen=True)
class FieldPoint:
    B: float      # gauss
    f_L: float    # Hz
    q_z: float    # rad/s


def field_point(species: AtomSpecies, F: int, B: float) -> FieldPoint:
    """Larmor frequency and quadratic Zeeman shift at field B (gauss).

    f_L = |E(+1) - E(-1)| / (2h), q_z = (E(+1) + E(-1) - 2 E(0)) / (2 hbar),
    both from the exact Breit-Rabi eigenvalues.
    """
    e_p = breit_rabi(species, F, +1, B)
    e_m = breit_rabi(species, F, -1, B)
    e_0 = breit_rabi(species, F, 0, B)
    f_L = abs(e_p - e_m) / (2 * TWO_PI)
    q_z = (e_p + e_m - 2 * e_0) / 2.0
    return FieldPoint(B=B, f_L=f_L, q_z=q_z)


def field_for_larmor(species: AtomSpecies, F: int, f_L: float,
                     B_max: float = 20.0) -> float:
    """Invert field_point: B (gauss) at which the Larmor frequency is f_L."""
    if f_L <= 0:
        return 0.0
    return brentq(lambda b: field_point(species, F, b).f_L - f_L, 0.0, B_max,
                  xtol=1e-12)


def zeeman_hamiltonian_eigenvalues(species: AtomSpecies, B: float) -> np.ndarray:
    """Eigenvalues (rad/s, sorted) of the full hyperfine + Zeeman Hamiltonian.

    Independent check of the closed Breit-Rabi formula: diagonalizes
    A I.J + mu_B (g_J J_z + g_I I_z) B in the product basis |m_I m_J>.
    """
    I = species.nuclear_spin
    J = 0.5
    A = species.hyperfine_splitting / (I + 0.5)  # rad/s per hbar^2
    mIs = np.arange(-I, I + 1)
    mJs = np.arange(-J, J + 1)
    basis = [(mi, mj) for mi in mIs for mj in mJs]
    n = len(basis)
    H = np.zeros((n, n))

    def ladder(j, m):
        return math.sqrt(j * (j + 1) - m * (m + 1))

    for a, (mi, mj) in enumerate(basis):
        H[a, a] += A * mi * mj
        H[a, a] += (species.g_J * mj + species.g_I * mi) * MU_B * (B * GAUSS) / hbar
        # (1/2)(I+ J- + I- J+)
        for b, (mi2, mj2) in enumerate(basis):
            if mi2 == mi + 1 and mj2 == mj - 1:
                H[b, a] += 0.5 * A * ladder(I, mi) * ladder(J, mj - 1)
            if mi2 == mi - 1 and mj2 == mj + 1:
                H[b, a] += 0.5 * A * ladder(I, mi - 1) * ladder(J, mj)
    return np.sort(np.linalg.eigvalsh(H))
