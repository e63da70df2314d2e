"""Command-line entry point wiring all modules, driven by JSON recipes.

Subcommands: tuneout, coeffs, snr-scan, aperture, lifetime, spinor,
simulate, analyze, roundtrip. Every output file carries a provenance
block (recipe hash, seed, artifact version); identical recipe + seed give
byte-identical outputs. Exit codes: 1 validation, 2 computation, 3 I/O,
with a machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT

from . import __version__, atomdata, dsp, polarizability as pol, scattering, snrmodel, spindyn, synth

TWO_PI = 2.0 * math.pi


class ValidationError(ValueError):
    pass


class IOFailure(OSError):
    pass


def _fail(kind: str, exc: Exception, code: int) -> int:
    payload = {"error": {"type": kind, "class": type(exc).__name__,
                         "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)
    return code


def _load_recipe(path_or_name) -> tuple:
    """Returns (recipe dict, sha256 of its canonical JSON)."""
    if path_or_name is None:
        raise ValidationError("a --recipe is required for this subcommand")
    p = Path(path_or_name)
    if not p.exists():
        bundled = Path(resources.files("faradaykit").joinpath("recipes", str(path_or_name)))
        if bundled.exists():
            p = bundled
        elif bundled.with_suffix(".json").exists():
            p = bundled.with_suffix(".json")
        else:
            raise IOFailure(f"recipe file not found: {path_or_name}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    try:
        recipe = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"recipe is not valid JSON: {exc}") from exc
    if recipe.get("schema_version") != 1:
        raise ValidationError("recipe schema_version must be 1")
    canonical = json.dumps(recipe, sort_keys=True, separators=(",", ":"))
    return recipe, hashlib.sha256(canonical.encode()).hexdigest()


def _provenance(recipe_hash: str | None, seed) -> dict:
    return {"artifact_version": __version__,
            "recipe_sha256": recipe_hash, "seed": seed}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, rows, provenance: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# provenance: {json.dumps(provenance, sort_keys=True)}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def _species(recipe_or_name):
    if isinstance(recipe_or_name, dict):
        name = recipe_or_name.get("species", "rb87")
    else:
        name = recipe_or_name or "rb87"
    return atomdata.load_species(name)


def _probe_from(recipe) -> pol.ProbeConfig:
    pr = recipe.get("probe", {})
    return pol.ProbeConfig(
        wavelength=float(pr.get("wavelength_nm", 790.005)) * 1e-9,
        power=float(pr.get("power_mW", 8.5)) * 1e-3,
        waist=float(pr.get("waist_um", 75.0)) * 1e-6,
        ellipticity=float(pr.get("ellipticity", 0.0)))


def _cloud_from(recipe) -> snrmodel.CloudProfile:
    cl = recipe.get("cloud", {})
    return snrmodel.CloudProfile(
        N=float(cl.get("N", 3e5)), kind=cl.get("kind", "thomas-fermi"),
        radius=float(cl.get("radius_um", 19.0)) * 1e-6)


def _detect_from(recipe) -> snrmodel.DetectionConfig:
    dt = recipe.get("detection", {})
    return snrmodel.DetectionConfig(
        aperture=float(dt.get("aperture_um", 38.0)) * 1e-6,
        transmission=float(dt.get("transmission", 0.2)),
        window=float(dt.get("window_ms", 5.0)) * 1e-3)


def _env_from(recipe) -> spindyn.FieldEnvironment:
    ev = recipe.get("environment", {})
    harmonics = tuple(
        (float(f), float(a_uG) * 1e-6, float(ph))
        for f, a_uG, ph in ev.get("ac_harmonics_uG", []))
    return spindyn.FieldEnvironment(
        B_y=float(ev.get("B_y_G", 1.0)), B_z=float(ev.get("B_z_G", 0.0)),
        gradient=float(ev.get("gradient_mG_per_cm", 0.0)) * 1e-3,
        ac_harmonics=harmonics,
        line_frequency=float(ev.get("line_frequency_Hz", 50.0)))


def _acq_from(recipe, seed_override=None) -> synth.AcquisitionConfig:
    aq = recipe.get("acquisition", {})
    seed = int(aq.get("rng_seed", 0)) if seed_override is None else int(seed_override)
    return synth.AcquisitionConfig(
        sample_rate=float(aq.get("sample_rate", 2e6)),
        duration=float(aq.get("duration_s", 1.0)),
        pre_tip_interval=float(aq.get("pre_tip_ms", 20.0)) * 1e-3,
        rng_seed=seed, gain=float(aq.get("gain", 1e3)),
        technical_noise_density=float(aq.get("technical_noise_density", 0.0)))


def cmd_tuneout(args) -> int:
    species = _species(args.species)
    window = (args.from_nm * 1e-9, args.to_nm * 1e-9)
    roots = pol.magic_zero_wavelengths(species, args.ground_f, window,
                                       zero_offsets=args.zero_offsets)
    rows = []
    for lam in roots:
        table = pol.coupling_table(species, args.ground_f, lam)
        wd = pol.weighted_detunings(table)
        rows.append((lam * 1e9, table.scalar_sum(), wd.xi_f, wd.xi_s, wd.ratio))
    out = Path(args.out_dir) / "tuneout.csv"
    _write_csv(out, "lambda_nm,scalar_sum,xi_f,xi_s,ratio", rows,
               _provenance(None, args.seed))
    for lam in roots:
        print(f"magic-zero wavelength: {lam * 1e9:.6f} nm")
    if not roots:
        print("no magic-zero wavelength in window")
    return 0


def cmd_coeffs(args) -> int:
    species = _species(args.species)
    lams = np.linspace(args.from_nm, args.to_nm, args.points) * 1e-9
    rows = []
    for lam in lams:
        table = pol.coupling_table(species, args.ground_f, lam)
        wd = pol.weighted_detunings(table)
        rows.append((lam * 1e9, table.scalar_sum(), wd.xi_f, wd.xi_s, wd.ratio))
    out = Path(args.out_dir) / "coeffs.csv"
    _write_csv(out, "lambda_nm,scalar_sum,xi_f,xi_s,ratio", rows,
               _provenance(None, args.seed))
    print(f"wrote {out}")
    return 0


def cmd_snr_scan(args) -> int:
    recipe, rhash = _load_recipe(args.recipe)
    species = _species(recipe)
    probe = _probe_from(recipe)
    cloud = _cloud_from(recipe)
    detect = _detect_from(recipe)
    scan = recipe.get("scan", {})
    d2 = species.line("D2")
    det_ghz = np.linspace(float(scan.get("from_GHz", -3.0)),
                          float(scan.get("to_GHz", -0.05)),
                          int(scan.get("points", 200)))
    rows = []
    for dg in det_ghz:
        omega = d2.omega + TWO_PI * dg * 1e9
        lam = TWO_PI * C_LIGHT / omega
        try:
            table = pol.coupling_table(species, 1, lam)
        except pol.OnResonanceError:
            continue
        ratio = pol.weighted_detunings(table).ratio
        budget = scattering.scattering_rate(table, probe.peak_intensity)
        rep = snrmodel.snr_general(probe, cloud, detect, table,
                                   tau_s=budget.tau_s)
        rows.append((dg, lam * 1e9, ratio, rep.snr_db))
    out = Path(args.out_dir) / "snr_scan.csv"
    _write_csv(out, "detuning_GHz,lambda_nm,ratio,snr_db", rows,
               _provenance(rhash, args.seed))
    print(f"wrote {out}")
    return 0


def cmd_aperture(args) -> int:
    cloud = snrmodel.CloudProfile(N=1.0, kind=args.kind, radius=1.0)
    a_opt = snrmodel.optimize_aperture(cloud)
    payload = {"kind": args.kind, "a_over_R": a_opt,
               "provenance": _provenance(None, args.seed)}
    _write_json(Path(args.out_dir) / "aperture.json", payload)
    print(json.dumps({"kind": args.kind, "a_over_R": a_opt}))
    return 0


def cmd_lifetime(args) -> int:
    species = _species(args.species)
    probe = pol.ProbeConfig(wavelength=args.wavelength_nm * 1e-9,
                            power=args.power_mw * 1e-3,
                            waist=args.waist_um * 1e-6)
    cloud = snrmodel.CloudProfile(N=args.atoms, kind="thomas-fermi",
                                  radius=args.cloud_um * 1e-6)
    table = pol.coupling_table(species, 1, probe.wavelength)
    result = scattering.cloud_lifetime(table, probe, cloud,
                                       tau_one_body=args.tau_one_body)
    payload = {"gamma_per_watt": result["gamma_per_watt"],
               "tau_s": result["tau_s"],
               "tau_combined": result["tau_combined"],
               "provenance": _provenance(None, args.seed)}
    _write_json(Path(args.out_dir) / "lifetime.json", payload)
    print(json.dumps({k: payload[k] for k in ("gamma_per_watt", "tau_s", "tau_combined")}))
    return 0


def cmd_spinor(args) -> int:
    recipe, rhash = _load_recipe(args.recipe)
    species = _species(recipe)
    env = _env_from(recipe)
    dr = recipe.get("dressing", {})
    dressing = spindyn.DressingConfig(
        rabi=TWO_PI * float(dr.get("rabi_kHz", 0.0)) * 1e3,
        detuning=TWO_PI * float(dr.get("detuning_kHz", 0.0)) * 1e3)
    sd = recipe.get("spinor", {})
    q = spindyn.q_net(species, 1, env.B_y,
                      dressing if dressing.rabi else None)
    state = spindyn.SpinorState(rho0=float(sd.get("rho0", 0.5)),
                                theta=float(sd.get("theta", 0.0)))
    traj = spindyn.evolve_spinor(
        state, q, TWO_PI * float(sd.get("c_over_h_Hz", 10.0)),
        float(sd.get("duration_s", 1.0)))
    rows = zip(traj["t"], traj["rho0"], traj["theta"], traj["fz_envelope"])
    out = Path(args.out_dir) / "spinor.csv"
    _write_csv(out, "t,rho0,Theta,Fz_envelope", rows, _provenance(rhash, args.seed))
    print(f"wrote {out}")
    return 0


def build_simulation(recipe, seed_override=None):
    """Assemble all configs for a recipe; returns (signal, context dict)."""
    species = _species(recipe)
    probe = _probe_from(recipe)
    cloud = _cloud_from(recipe)
    detect = _detect_from(recipe)
    env = _env_from(recipe)
    acq = _acq_from(recipe, seed_override)
    table = pol.coupling_table(species, 1, probe.wavelength)

    target = recipe.get("acquisition", {}).get("target_initial_snr_db_power")
    if target is not None:
        m = round(detect.window * acq.sample_rate)
        amp = synth.signal_amplitude_volts(table, probe, cloud, detect, acq.gain)
        sigma = synth.sigma_for_window_snr(amp, m, 2.0 * float(target))
        acq = synth.AcquisitionConfig(
            sample_rate=acq.sample_rate, duration=acq.duration,
            pre_tip_interval=acq.pre_tip_interval, rng_seed=acq.rng_seed,
            gain=acq.gain, technical_noise_density=acq.technical_noise_density,
            shot_noise_volts=sigma)

    dr = recipe.get("dressing", {})
    dressing = None
    if dr.get("rabi_kHz"):
        dressing = spindyn.DressingConfig(
            rabi=TWO_PI * float(dr["rabi_kHz"]) * 1e3,
            detuning=TWO_PI * float(dr["detuning_kHz"]) * 1e3)
    q = spindyn.q_net(species, 1, env.B_y, dressing)
    if recipe.get("null_quadratic_shift", False):
        q = 0.0
    sd = recipe.get("spinor", {})
    c_over_h = TWO_PI * float(sd.get("c_over_h_Hz", 0.0))
    traj = None
    if q != 0.0 or c_over_h != 0.0:
        traj = spindyn.evolve_spinor(
            spindyn.SpinorState(rho0=float(sd.get("rho0", 0.5)),
                                theta=float(sd.get("theta", 0.0))),
            q, c_over_h, acq.duration)
    sig = synth.synthesize(species, table, probe, cloud, detect, env, acq,
                           trajectory=traj, extra_metadata={"q_net": q})
    ctx = {"species": species, "probe": probe, "cloud": cloud,
           "detect": detect, "env": env, "acq": acq, "table": table,
           "q_net": q}
    return sig, ctx


def cmd_simulate(args) -> int:
    recipe, rhash = _load_recipe(args.recipe)
    sig, _ = build_simulation(recipe, args.seed)
    sig.metadata["provenance"] = _provenance(rhash, sig.metadata["rng_seed"])
    base = Path(args.out_dir) / recipe.get("name", "signal")
    base.parent.mkdir(parents=True, exist_ok=True)
    meta_path, data_path = synth.save_signal(sig, base)
    print(f"wrote {meta_path} and {data_path}")
    return 0


def analyze_signal(sig, window_ms=5.0, hop_ms=1.0, band_khz=10.0,
                   line_hz=50.0, harmonics=3, zero_pad_factor=8):
    """Full analysis chain; returns dict with spectrogram-free results."""
    meta = sig.metadata
    f0 = float(meta.get("nominal_larmor_Hz", 0.0))
    if f0 <= 0.0:
        raise ValidationError("signal metadata lacks nominal_larmor_Hz")
    gamma_g = float(meta["gamma_rad_per_s_per_G"])
    spec = dsp.spectrogram(sig, window_length=window_ms * 1e-3,
                           hop=hop_ms * 1e-3, zero_pad_factor=zero_pad_factor,
                           band=(f0 - band_khz * 1e3 / 2, f0 + band_khz * 1e3 / 2))
    floor = dsp.noise_floor(spec, center=f0)
    track = dsp.track_larmor(spec, (f0 - 1e3, f0 + 1e3), floor=floor, signal=sig)
    hfit = dsp.fit_harmonics(track, line_hz, harmonics, gamma_g)
    sens = dsp.infer_sensitivity(track, spec.window_length, gamma_g * 1e4)
    return {"spec": spec, "floor": floor, "track": track,
            "harmonics": hfit, "sensitivity": sens}


def _write_analysis(outdir: Path, res, provenance: dict,
                    write_spectrogram: bool = False) -> None:
    track = res["track"]
    rows = [(t, f, fe, a, s) for t, f, fe, a, s, v in zip(
        track.times, track.frequency, track.frequency_err, track.amplitude,
        track.snr_db, track.valid) if v]
    _write_csv(outdir / "track.csv", "t,f_hz,f_err_hz,amp,snr_db", rows, provenance)
    h = res["harmonics"]
    payload = {
        "line_frequency_Hz": h.line_frequency,
        "frequencies_Hz": list(h.frequencies),
        "amplitudes_G": list(h.amplitudes),
        "amplitude_errs_G": list(h.amplitude_errs),
        "phases_rad": list(h.phases),
        "mean_field_G": h.mean_field,
        "mean_field_err_G": h.mean_field_err,
        "residual_rms_Hz": h.residual_rms,
        "median_sensitivity_T_per_rtHz": res["sensitivity"]["median"],
        "provenance": provenance,
    }
    _write_json(outdir / "harmonics.json", payload)
    if write_spectrogram:
        spec = res["spec"]
        step = max(len(spec.frequencies) // 200, 1)
        rows = []
        for i in range(0, len(spec.times), 5):
            for j in range(0, len(spec.frequencies), step):
                rows.append((spec.times[i], spec.frequencies[j], spec.magnitude[i, j]))
        _write_csv(outdir / "spectrogram.csv", "t,f_hz,magnitude", rows, provenance)


def cmd_analyze(args) -> int:
    base = Path(args.signal)
    if base.suffix == ".csv":
        sig = synth.import_csv(base)
    else:
        sig = synth.load_signal(base.with_suffix(""))
    res = analyze_signal(sig, window_ms=args.window_ms, hop_ms=args.hop_ms,
                         band_khz=args.band_khz, line_hz=args.line_hz,
                         harmonics=args.harmonics)
    prov = _provenance(None, sig.metadata.get("rng_seed"))
    _write_analysis(Path(args.out_dir), res, prov, args.write_spectrogram)
    h = res["harmonics"]
    print(json.dumps({
        "mean_field_G": h.mean_field,
        "amplitudes_uG": [a * 1e6 for a in h.amplitudes],
        "median_sensitivity_pT_rtHz": res["sensitivity"]["median"] / 1e-12}))
    return 0


def run_roundtrip(recipe, seed_override=None, analysis_overrides=None):
    """simulate + analyze + compare; returns the report dict."""
    sig, ctx = build_simulation(recipe, seed_override)
    an = recipe.get("analysis", {})
    if analysis_overrides:
        an = {**an, **analysis_overrides}
    res = analyze_signal(
        sig, window_ms=float(an.get("window_ms", 5.0)),
        hop_ms=float(an.get("hop_ms", 1.0)),
        band_khz=float(an.get("band_khz", 10.0)),
        line_hz=float(an.get("line_hz", ctx["env"].line_frequency)),
        harmonics=int(an.get("harmonics", 3)))

    env, acq, table = ctx["env"], ctx["acq"], ctx["table"]
    gamma_g = ctx["species"].gyromagnetic_ratio(1) * 1e-4
    injected_mean = math.hypot(env.B_y, env.B_z)
    m = round(float(an.get("window_ms", 5.0)) * 1e-3 * acq.sample_rate)
    amp_v = sig.metadata["signal_amplitude_V"]
    sigma_v = sig.metadata["shot_noise_sigma_V"]
    injected_snr_db = synth.window_snr_db(amp_v, sigma_v, m)

    h = res["harmonics"]
    track = res["track"]
    checks = []

    def check(name, injected, recovered, tol):
        checks.append({"name": name, "injected": injected,
                       "recovered": recovered, "tolerance": tol,
                       "pass": bool(abs(recovered - injected) <= tol)})

    check("mean_field_uG", injected_mean * 1e6, h.mean_field * 1e6, 1.0)
    for k, (f, a, ph) in enumerate(env.ac_harmonics):
        check(f"harmonic_{int(f)}Hz_uG", a * 1e6, h.amplitudes[k] * 1e6, 1.0)
    snr_valid = track.snr_db[track.valid]
    check("initial_window_snr_db", injected_snr_db, float(np.mean(snr_valid[:50])), 0.5)

    report = {
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
        "injected_snr_db_amplitude": injected_snr_db,
        "injected_snr_db_power_style": injected_snr_db / 2.0,
        "median_sensitivity_T_per_rtHz": res["sensitivity"]["median"],
        "n_valid_windows": int(np.sum(track.valid)),
    }
    return report, res, sig


def cmd_roundtrip(args) -> int:
    recipe, rhash = _load_recipe(args.recipe)
    report, res, sig = run_roundtrip(recipe, args.seed)
    report["provenance"] = _provenance(rhash, sig.metadata["rng_seed"])
    outdir = Path(args.out_dir)
    _write_json(outdir / "roundtrip_report.json", report)
    _write_analysis(outdir, res, report["provenance"])
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']}: injected={c['injected']:.6g} "
              f"recovered={c['recovered']:.6g} tol={c['tolerance']:.3g}")
    print(f"report: {outdir / 'roundtrip_report.json'}")
    return 0 if report["all_pass"] else 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="faradaykit",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None,
                    help="override the recipe RNG seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker hint (computations are vectorized; recorded only)")
    ap.add_argument("--out-dir", default=".", help="output directory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tuneout", help="locate magic-zero wavelengths")
    p.add_argument("--species", default="rb87")
    p.add_argument("--ground-f", type=int, default=1)
    p.add_argument("--from-nm", type=float, required=True)
    p.add_argument("--to-nm", type=float, required=True)
    p.add_argument("--zero-offsets", action="store_true",
                   help="collapse hyperfine ladders onto the line centroids")
    p.set_defaults(func=cmd_tuneout)

    p = sub.add_parser("coeffs", help="coupling sums on a wavelength grid")
    p.add_argument("--species", default="rb87")
    p.add_argument("--ground-f", type=int, default=1)
    p.add_argument("--from-nm", type=float, required=True)
    p.add_argument("--to-nm", type=float, required=True)
    p.add_argument("--points", type=int, default=200)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("snr-scan", help="|xi_s/xi_f| and SNR vs detuning")
    p.add_argument("--recipe", required=True)
    p.set_defaults(func=cmd_snr_scan)

    p = sub.add_parser("aperture", help="optimal detection aperture")
    p.add_argument("--kind", choices=("gaussian", "thomas-fermi"),
                   default="thomas-fermi")
    p.set_defaults(func=cmd_aperture)

    p = sub.add_parser("lifetime", help="probe-limited cloud lifetime")
    p.add_argument("--species", default="rb87")
    p.add_argument("--power-mw", type=float, required=True)
    p.add_argument("--waist-um", type=float, default=75.0)
    p.add_argument("--wavelength-nm", type=float, default=790.005)
    p.add_argument("--cloud-um", type=float, default=19.0)
    p.add_argument("--atoms", type=float, default=3e5)
    p.add_argument("--tau-one-body", type=float, default=math.inf)
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("spinor", help="mean-field spinor trajectory")
    p.add_argument("--recipe", required=True)
    p.set_defaults(func=cmd_spinor)

    p = sub.add_parser("simulate", help="synthesize a polarimeter record")
    p.add_argument("--recipe", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="spectrogram analysis of a record")
    p.add_argument("--signal", required=True,
                   help="basename of .meta.json/.f64le pair, or a CSV")
    p.add_argument("--window-ms", type=float, default=5.0)
    p.add_argument("--hop-ms", type=float, default=1.0)
    p.add_argument("--band-khz", type=float, default=10.0)
    p.add_argument("--line-hz", type=float, default=50.0)
    p.add_argument("--harmonics", type=int, default=3)
    p.add_argument("--write-spectrogram", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("roundtrip", help="simulate + analyze + compare")
    p.add_argument("--recipe", required=True)
    p.set_defaults(func=cmd_roundtrip)

    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        return _fail("validation", exc, 1)
    except IOFailure as exc:
        return _fail("io", exc, 3)
    except OSError as exc:
        return _fail("io", exc, 3)
    except Exception as exc:  # computation failures
        return _fail("computation", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
