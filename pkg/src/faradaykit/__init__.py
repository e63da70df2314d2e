"""faradaykit: design and analysis of magic-wavelength Faraday spin probes.

Modules
-------
atomdata        species constants, Breit-Rabi energies
angular         exact Wigner 6j algebra
polarizability  coupling coefficients, light shifts, magic-zero wavelengths
scattering      Rayleigh/Raman rates and probe-limited lifetimes
snrmodel        shot-noise-limited SNR, aperture and regime optimization
spindyn         mean-field spinor dynamics, dressing, VLS, dephasing
synth           synthetic polarimeter records
dsp             spectrogram analysis, Larmor tracking, harmonic recovery
cli             command-line interface and experiment recipes
"""

__version__ = "0.1.0"

from . import angular, atomdata, dsp, polarizability, scattering, snrmodel, spindyn, synth  # noqa: F401
