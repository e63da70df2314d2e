import math

import numpy as np
import pytest

from faradaykit import synth
from faradaykit.polarizability import ProbeConfig, coupling_table
from faradaykit.snrmodel import CloudProfile, DetectionConfig
from faradaykit.spindyn import FieldEnvironment
from faradaykit.synth import (AcquisitionConfig, AliasingError,
                              instantaneous_field, load_signal, save_signal,
                              export_csv, import_csv, sigma_for_window_snr,
                              synthesize, window_snr_db)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def setup(species, magic_wavelength):
    probe = ProbeConfig(wavelength=magic_wavelength, power=8.5e-3, waist=75e-6)
    cloud = CloudProfile(N=3e5, kind="thomas-fermi", radius=19e-6)
    detect = DetectionConfig(aperture=38e-6, transmission=0.2, window=5e-3)
    table = coupling_table(species, 1, magic_wavelength)
    return probe, cloud, detect, table


def make_signal(species, setup, env=None, seed=0, duration=0.05, noise=None,
                pre=20e-3, trajectory=None):
    probe, cloud, detect, table = setup
    if env is None:
        env = FieldEnvironment(B_y=0.9935)
    acq = AcquisitionConfig(sample_rate=2e6, duration=duration,
                            pre_tip_interval=pre, rng_seed=seed,
                            shot_noise_volts=noise)
    return synthesize(species, table, probe, cloud, detect, env, acq,
                      trajectory=trajectory)


class TestInstantaneousField:
    def test_constant_without_harmonics(self):
        env = FieldEnvironment(B_y=1.0, B_z=0.01)
        t = np.linspace(0, 1, 100)
        B = instantaneous_field(env, t)
        assert np.allclose(B, math.hypot(1.0, 0.01), rtol=1e-14)

    def test_in_phase_peak_to_peak(self):
        amps = (162e-6, 46e-6, 7e-6)
        env = FieldEnvironment(B_y=1.0, ac_harmonics=tuple(
            (f, a, math.pi / 2) for f, a in zip((50, 150, 250), amps)))
        t = np.linspace(0, 0.04, 40001)
        B = instantaneous_field(env, t)
        assert np.ptp(B) == pytest.approx(2 * sum(amps), rel=1e-3)

    def test_single_harmonic_extrema(self):
        env = FieldEnvironment(B_y=1.0, ac_harmonics=((50.0, 1e-4, 0.0),))
        t = np.linspace(0, 0.02, 20001)
        B = instantaneous_field(env, t)
        assert B.max() == pytest.approx(1.0 + 1e-4, rel=1e-9)
        assert B.min() == pytest.approx(1.0 - 1e-4, rel=1e-9)


class TestSynthesize:
    def test_noiseless_tone_frequency(self, species, setup):
        sig = make_signal(species, setup, noise=0.0, pre=0.0)
        n = len(sig.samples)
        spec = np.abs(np.fft.rfft(sig.samples))
        f = np.fft.rfftfreq(n, 1 / sig.sample_rate)
        peak = f[np.argmax(spec)]
        expected = sig.metadata["nominal_larmor_Hz"]
        assert abs(peak - expected) <= sig.sample_rate / n

    def test_deterministic(self, species, setup):
        a = make_signal(species, setup, seed=42, duration=0.01)
        b = make_signal(species, setup, seed=42, duration=0.01)
        assert np.array_equal(a.samples, b.samples)
        c = make_signal(species, setup, seed=43, duration=0.01)
        assert not np.array_equal(a.samples, c.samples)

    def test_pre_tip_noise_only(self, species, setup):
        sig = make_signal(species, setup, noise=0.0)
        n_pre = round(20e-3 * sig.sample_rate)
        assert np.all(sig.samples[:n_pre] == 0.0)
        assert np.any(sig.samples[n_pre:] != 0.0)

    def test_noise_rms_matches_configured(self, species, setup):
        sigma = 2e-5
        sig = make_signal(species, setup, noise=sigma, seed=3)
        n_pre = round(20e-3 * sig.sample_rate)
        rms = np.std(sig.samples[:n_pre])
        assert rms == pytest.approx(sigma, rel=0.02)

    def test_amplitude_linear_in_envelope(self, species, setup):
        t = np.linspace(0, 0.05, 6)
        half = {"t": t, "fz_envelope": np.full_like(t, 0.5)}
        full_sig = make_signal(species, setup, noise=0.0, pre=0.0)
        half_sig = make_signal(species, setup, noise=0.0, pre=0.0,
                               trajectory=half)
        assert np.max(np.abs(half_sig.samples)) == pytest.approx(
            0.5 * np.max(np.abs(full_sig.samples)), rel=1e-9)

    def test_amplitude_linear_in_power(self, species, setup):
        probe, cloud, detect, table = setup
        amps = []
        for power in (4e-3, 8e-3):
            p = ProbeConfig(wavelength=probe.wavelength, power=power,
                            waist=probe.waist)
            acq = AcquisitionConfig(duration=0.002, pre_tip_interval=0.0,
                                    shot_noise_volts=0.0)
            sig = synthesize(make_species(), table, p, cloud, detect,
                             FieldEnvironment(B_y=0.9935), acq)
            amps.append(sig.metadata["signal_amplitude_V"])
        assert amps[1] == pytest.approx(2 * amps[0], rel=1e-12)

    def test_instantaneous_frequency_tracks_field(self, species, setup):
        from faradaykit.synth import _carrier_phase
        env = FieldEnvironment(B_y=0.9935, B_z=0.02, ac_harmonics=(
            (50.0, 162e-6, 0.0), (150.0, 46e-6, 1.0)))
        gamma_g = species.gyromagnetic_ratio(1) * 1e-4
        t = np.arange(0, 0.1, 5e-7)
        phase = _carrier_phase(env, gamma_g, t, 0.0)
        f_num = np.diff(phase) / np.diff(t) / TWO_PI
        B_mid = instantaneous_field(env, 0.5 * (t[1:] + t[:-1]))
        f_exact = gamma_g * B_mid / TWO_PI
        assert np.max(np.abs(f_num / f_exact - 1)) < 1e-6

    def test_aliasing_guard(self, species, setup):
        env = FieldEnvironment(B_y=1.5)  # ~1.05 MHz carrier at 2 MS/s
        with pytest.raises(AliasingError, match="1.4 G"):
            make_signal(species, setup, env=env, duration=0.001)


def make_species():
    from faradaykit.atomdata import load_species
    return load_species()


class TestWindowSnrHelpers:
    def test_roundtrip(self):
        amp, m = 2e-5, 10000
        sigma = sigma_for_window_snr(amp, m, 32.6)
        assert window_snr_db(amp, sigma, m) == pytest.approx(32.6, abs=1e-12)


class TestSignalIO:
    def test_file_roundtrip(self, species, setup, tmp_path):
        sig = make_signal(species, setup, seed=5, duration=0.01)
        meta_path, data_path = save_signal(sig, tmp_path / "run1")
        assert meta_path.exists() and data_path.exists()
        back = load_signal(tmp_path / "run1")
        assert np.array_equal(back.samples, sig.samples)
        assert back.sample_rate == sig.sample_rate
        assert back.metadata["rng_seed"] == 5

    def test_csv_roundtrip(self, species, setup, tmp_path):
        sig = make_signal(species, setup, seed=5, duration=0.001)
        path = tmp_path / "run.csv"
        export_csv(sig, path)
        back = import_csv(path)
        assert back.sample_rate == pytest.approx(sig.sample_rate, rel=1e-6)
        np.testing.assert_allclose(back.samples, sig.samples, atol=1e-12)

    def test_corrupt_length_detected(self, species, setup, tmp_path):
        sig = make_signal(species, setup, duration=0.001)
        save_signal(sig, tmp_path / "run")
        (tmp_path / "run.f64le").write_bytes(b"\x00" * 16)
        with pytest.raises(ValueError, match="sample count"):
            load_signal(tmp_path / "run")
