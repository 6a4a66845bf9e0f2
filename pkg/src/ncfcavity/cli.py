"""Command-line front end: ``python3 -m ncfcavity <command> ...``.

Each command writes plot-ready CSV/JSON files plus ``provenance.json`` into
``--out``.  Exit codes: 0 success, 2 configuration error, 3 numerical or
fit failure, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import FitError, NoDipFound, analyze_spectrum, classify_regime, fit_kappa_sc
from .cqed import (
    TARGET_KAPPA_SC_HZ,
    CalibrationError,
    calibrate_slat_loss,
    cavity_report,
    profile_kappa_sc,
    resonance_window,
)
from .design import CALIBRATION, CavityDesign, Polarization, build_stack, effective_indices, load_design
from .emitter import DivergentResonance, NoConfinedMode, OracleNotConverged, emission_spectrum, emit, helmholtz_oracle
from .io import fmt, write_json
from .sweep import optimize_one_sided, sweep_n_in, sweep_n_out, sweep_reflection
from .tmm import Spectrum, reflection_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

NUMERIC_ERRORS = (
    NoDipFound,
    FitError,
    NoConfinedMode,
    OracleNotConverged,
    CalibrationError,
    DivergentResonance,
    FloatingPointError,
)


class ConfigError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass
class RunConfig:
    command: str
    design: CavityDesign
    design_path: Path | None
    out: Path
    profiles: list[Polarization]
    workers: int
    seed: int
    options: dict = field(default_factory=dict)
    slat_loss: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def design_for(self, pol: Polarization) -> CavityDesign:
        return self.design.replace(polarization_profile=pol)

    def profile_for(self, pol: Polarization, design: CavityDesign | None = None):
        d = self.design_for(pol) if design is None else design
        loss = self.slat_loss.get(pol, CALIBRATION[pol].slat_loss) * self.options.get("slat_loss_scale", 1.0)
        p = effective_indices(d, slat_loss=loss)
        if self.options.get("lossless"):
            p = p.lossless()
        ratio = self.options.get("unguided_ratio")
        if ratio is not None:
            p = dataclasses.replace(p, unguided_ratio=ratio)
        return p

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name


# -- argument parsing ------------------------------------------------------------


def parse_range(text: str) -> list[int]:
    """``a:b[:step]`` inclusive of ``b``, or a comma list, or a single integer."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(10)
            a, b, step = parts
            if step <= 0 or b < a:
                raise ValueError
            return list(range(a, b + 1, step))
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop[:step] or a,b,c") from None


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}; use lo:hi in nm") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"window {text!r} must satisfy 0 < lo < hi")
    return lo, hi


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", type=Path, help="design JSON (default: built-in default design)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--profile", choices=("ypol", "xpol", "both"), default="both")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed for noise-injection modes")
    p.add_argument("--n-in", type=int, help="override the design's input slat count")
    p.add_argument("--n-out", type=int, help="override the design's output slat count")
    p.add_argument("--calibration", type=Path, help="calibration JSON written by 'calibrate'")
    p.add_argument("--slat-loss-scale", type=float, default=1.0, help="multiply the calibrated slat loss")
    p.add_argument("--lossless", action="store_true", help="drop the slat loss")
    p.add_argument("--unguided-ratio", type=float, help="override the unguided radiation ratio")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncfcavity", description="1D nanofibre cavity simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="reflection spectrum and Lorentzian dip fit")
    _common(p)
    p.add_argument("--window", type=parse_window, help="lo:hi in nm (default: around the stopband)")
    p.add_argument("--samples", type=int, default=4001)
    p.add_argument("--noise", type=float, default=0.0, help="additive Gaussian noise on R before fitting")

    p = sub.add_parser("emit", help="emission spectrum of the emitter at the source plane")
    _common(p)
    p.add_argument("--window", type=parse_window)
    p.add_argument("--samples", type=int, default=2001)
    p.add_argument("--oracle", action="store_true", help="cross-check against the Helmholtz solver")
    p.add_argument("--oracle-points", type=int, default=5)

    p = sub.add_parser("sweep", help="slat-count scans")
    _common(p)
    p.add_argument("--kind", choices=("n_in", "n_out", "reflection", "optimize"), default="n_in")
    p.add_argument("--range", dest="values", type=parse_range, help="scanned counts, start:stop[:step]")
    p.add_argument("--fixed", type=int, help="the count held fixed")

    p = sub.add_parser("metrics", help="cavity-QED report")
    _common(p)
    p.add_argument("--sweep", dest="sweep_csv", type=Path, help="sweep CSV to fit kappa_sc from")
    p.add_argument("--points", type=Path, help="CSV of kappa_ghz,r0 pairs to fit kappa_sc from")
    p.add_argument("--gamma-ghz", type=float, default=1.2)

    p = sub.add_parser("calibrate", help="fit the slat loss to a scattering rate")
    _common(p)
    p.add_argument("--target-ghz", type=float, default=TARGET_KAPPA_SC_HZ / 1e9)
    p.add_argument("--family", type=parse_range, default=list(range(100, 401, 20)))
    p.add_argument("--family-n-out", type=int, default=400)
    p.add_argument("--rtol", type=float, default=0.02)
    return parser


def _load_calibration(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"calibration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"calibration file {path} is not valid JSON: {exc}") from None
    out = {}
    for key, entry in data.get("profiles", {}).items():
        out[Polarization.parse(key)] = float(entry["slat_loss"])
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    design_path = None
    if args.design is not None:
        design_path = args.design.resolve()
        try:
            design = load_design(design_path)
        except FileNotFoundError:
            raise ConfigError(f"design file not found: {design_path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"design file {design_path} is not valid JSON: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"design file {design_path}: {exc}") from None
    else:
        design = CavityDesign()
    counts = {}
    if args.n_in is not None:
        counts["n_slats_input"] = args.n_in
    if args.n_out is not None:
        counts["n_slats_output"] = args.n_out
    try:
        design = design.replace(**counts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    if not args.slat_loss_scale >= 0:
        raise ConfigError("--slat-loss-scale must be non-negative")
    profiles = list(Polarization) if args.profile == "both" else [Polarization.parse(args.profile[0].upper() + "Pol")]
    out = args.out.resolve()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    skip = {"design", "out", "profile", "workers", "seed", "command", "n_in", "n_out", "calibration"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    slat_loss = _load_calibration(args.calibration.resolve()) if args.calibration else {}
    return RunConfig(args.command, design, design_path, out, profiles, args.workers, args.seed, options, slat_loss)


# -- commands ----------------------------------------------------------------------


def _tag(pol: Polarization) -> str:
    return pol.value.lower()


def _window(cfg: RunConfig, pol: Polarization):
    if cfg.options.get("window"):
        return cfg.options["window"]
    d = cfg.design_for(pol)
    return resonance_window(d, cfg.profile_for(pol))


def _check_passive(spec: Spectrum) -> None:
    excess = float(np.max(spec.R + spec.T)) - 1.0
    if spec.n_left > 0 and spec.n_right > 0 and excess > 1e-9:
        raise InvariantViolation(f"R + T exceeds 1 by {excess:.3g}")


def cmd_spectrum(cfg: RunConfig) -> int:
    status = EXIT_OK
    rng = np.random.default_rng(cfg.seed)
    for pol in cfg.profiles:
        d = cfg.design_for(pol)
        stack = build_stack(d, cfg.profile_for(pol))
        lo, hi = _window(cfg, pol)
        spec = reflection_spectrum(stack, lo, hi, cfg.options["samples"])
        _check_passive(spec)
        spec.to_csv(cfg.path(f"spectrum_{_tag(pol)}.csv"))
        fit_input = spec
        noise = cfg.options.get("noise", 0.0)
        if noise > 0:
            noisy_r = np.sqrt(np.clip(spec.R + noise * rng.standard_normal(len(spec)), 0.0, None))
            fit_input = Spectrum(spec.wavelengths, noisy_r.astype(complex), spec.t, spec.n_left, spec.n_right)
            with open(cfg.path(f"spectrum_noisy_{_tag(pol)}.csv"), "w") as fh:
                fh.write("wavelength_nm,R\n")
                for w, r in zip(fit_input.wavelengths, fit_input.R):
                    fh.write(f"{fmt(w)},{fmt(r)}\n")
        try:
            fit = analyze_spectrum(fit_input)
        except (NoDipFound, FitError) as exc:
            print(f"{pol.value}: fit failed: {exc}", file=sys.stderr)
            write_json({"profile": pol.value, "error": f"{type(exc).__name__}: {exc}"}, cfg.path(f"fit_{_tag(pol)}.json"))
            status = EXIT_NUMERIC
            continue
        regime = classify_regime(fit.kappa_hz, profile_kappa_sc(d, cfg.profile_for(pol)))
        write_json({"profile": pol.value, **fit.to_dict(regime)}, cfg.path(f"fit_{_tag(pol)}.json"))
        print(f"{pol.value}: lambda0 = {fit.lambda0:.4f} nm, kappa = {fit.kappa_hz / 1e9:.4g} GHz, R0 = {fit.r0:.4g}, {regime}")
    return status


def cmd_emit(cfg: RunConfig) -> int:
    for pol in cfg.profiles:
        profile = cfg.profile_for(pol)
        stack = build_stack(cfg.design_for(pol), profile)
        lo, hi = _window(cfg, pol)
        em = emission_spectrum(stack, lo, hi, cfg.options["samples"], profile.unguided_ratio)
        total = em.eta_left + em.eta_right + em.eta_loss
        if np.max(np.abs(total - 1.0)) > 1e-9:
            raise InvariantViolation("emission fractions do not sum to one")
        em.to_csv(cfg.path(f"emission_{_tag(pol)}.csv"))
        i = int(np.argmax(em.purcell))
        print(f"{pol.value}: peak purcell {em.purcell[i]:.4g} at {em.wavelengths[i]:.4f} nm, eta_left {em.eta_left[i]:.4g}")
        if cfg.options.get("oracle"):
            _oracle_check(cfg, pol, stack, em, profile.unguided_ratio)
    return EXIT_OK


def _oracle_check(cfg, pol, stack, em, ratio):
    i = int(np.argmax(em.purcell))
    grid = np.linspace(em.wavelengths[0], em.wavelengths[-1], cfg.options["oracle_points"])
    wls = np.unique(np.append(grid, em.wavelengths[i]))
    rows = []
    worst = 0.0
    for wl in wls:
        a = emit(stack, wl, ratio)
        b = helmholtz_oracle(stack, wl, unguided_ratio=ratio)
        dp = abs(a.purcell - b.purcell) / max(abs(b.purcell), 1e-300)
        de = abs(a.eta_left - b.eta_left)
        worst = max(worst, dp, de)
        rows.append((wl, a.purcell, b.purcell, a.eta_left, b.eta_left, dp, de))
    with open(cfg.path(f"oracle_{_tag(pol)}.csv"), "w") as fh:
        fh.write("wavelength_nm,purcell,purcell_oracle,eta_left,eta_left_oracle,rel_diff_purcell,abs_diff_eta_left\n")
        for row in rows:
            fh.write(",".join(fmt(float(v)) for v in row) + "\n")
    print(f"{pol.value}: oracle worst difference {worst:.3g}")
    if worst > 1e-3:
        raise InvariantViolation(f"closed form and Helmholtz oracle differ by {worst:.3g}")


def cmd_sweep(cfg: RunConfig) -> int:
    kind = cfg.options["kind"]
    values = cfg.options.get("values")
    fixed = cfg.options.get("fixed")
    for pol in cfg.profiles:
        d = cfg.design_for(pol)
        kw = dict(profile=cfg.profile_for(pol), workers=cfg.workers)
        if kind == "n_in":
            table = sweep_n_in(d, values or range(60, 221, 10), fixed or d.n_slats_output, **kw)
        elif kind == "n_out":
            table = sweep_n_out(d, values or range(200, 481, 10), fixed or 200, **kw)
        elif kind == "reflection":
            table = sweep_reflection(d, values or range(100, 401, 20), fixed or d.n_slats_output, **kw)
        else:
            n_out = [fixed] if fixed else [d.n_slats_output]
            opt = optimize_one_sided(d, values or range(60, 221, 10), n_out, **kw)
            table = opt.table
            write_json({"profile": pol.value, "best": asdict(opt.row), **opt.report.to_dict()}, cfg.path(f"optimum_{_tag(pol)}.json"))
        stem = f"sweep_{kind}_{_tag(pol)}"
        table.to_csv(cfg.path(f"{stem}.csv"))
        write_json({"profile": pol.value, **table.metadata()}, cfg.path(f"{stem}.json"))
        bad = [r for r in table.rows if not r.ok]
        print(f"{pol.value}: {len(table)} rows ({len(bad)} failed), kappa_sc {table.kappa_sc_hz / 1e9:.4g} GHz ({table.kappa_sc_source})")
    return EXIT_OK


def _read_points(path: Path, names=("kappa_ghz", "r0")) -> list[tuple[float, float]]:
    import csv

    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    try:
        pts = [(float(r[names[0]]) * 1e9, float(r[names[1]])) for r in rows if r.get("status", "ok") == "ok"]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: needs numeric columns {names}: {exc}") from None
    if not pts:
        raise ConfigError(f"{path}: no usable rows")
    return pts


def cmd_metrics(cfg: RunConfig) -> int:
    src = cfg.options.get("points") or cfg.options.get("sweep_csv")
    pts = _read_points(src.resolve()) if src else None
    for pol in cfg.profiles:
        d = cfg.design_for(pol)
        profile = cfg.profile_for(pol)
        if pts is None:
            table = sweep_reflection(d, range(100, 401, 20), d.n_slats_output, profile=profile, workers=cfg.workers)
            fit = table.kappa_sc_fit
            if fit is None:
                raise NoDipFound("no usable rows in the reflection sweep")
        else:
            fit = fit_kappa_sc(pts)
        report = cavity_report(d, profile, kappa_sc_hz=fit.kappa_sc_hz, gamma_hz=cfg.options["gamma_ghz"] * 1e9)
        out = {"profile": pol.value, "design": d.to_dict(), "kappa_sc_fit": fit.to_dict(), **report.to_dict()}
        write_json(out, cfg.path(f"metrics_{_tag(pol)}.json"))
        print(
            f"{pol.value}: kappa_sc {report.kappa_sc_hz / 1e9:.4g} GHz, Q_sc {report.q_sc:.5g}, F_sc {report.finesse_sc:.4g}, "
            f"L {100 * report.one_pass_loss:.3g} %, F_p {report.purcell:.4g}, 2g0 {2 * report.g0_hz / 1e9:.4g} GHz"
        )
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    result = {}
    for pol in cfg.profiles:
        d = cfg.design_for(pol)
        cal = calibrate_slat_loss(
            d,
            cfg.options["target_ghz"] * 1e9,
            n_in_values=cfg.options["family"],
            n_out=cfg.options["family_n_out"],
            rtol=cfg.options["rtol"],
            workers=cfg.workers,
            profile=cfg.profile_for(pol),
        )
        result[pol.value] = cal.to_dict()
        print(f"{pol.value}: Im(n_slat) = {cal.slat_loss:.6g} gives kappa_sc {cal.kappa_sc_hz / 1e9:.4g} GHz")
    write_json({"profiles": result}, cfg.path("calibration.json"))
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "emit": cmd_emit,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
    "calibrate": cmd_calibrate,
}


def _provenance(cfg: RunConfig, argv, exit_code: int, wall: float) -> dict:
    return {
        "command": cfg.command,
        "argv": list(argv),
        "design_path": cfg.design_path,
        "design": cfg.design.to_dict(),
        "profiles": [p.value for p in cfg.profiles],
        "options": {k: (list(v) if isinstance(v, (tuple, range)) else v) for k, v in cfg.options.items()},
        "calibration": {p.value: c.__dict__ for p, c in CALIBRATION.items()},
        "slat_loss_overrides": {p.value: v for p, v in cfg.slat_loss.items()},
        "seed": cfg.seed,
        "workers": cfg.workers,
        "versions": {
            "ncfcavity": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": sorted(cfg.outputs),
        "exit_code": exit_code,
        "wall_time_s": wall,
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    start = time.perf_counter()
    try:
        cfg = make_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        code = EXIT_INVARIANT
    except Exception as exc:  # anything unexpected is an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_INVARIANT
    write_json(_provenance(cfg, argv, code, time.perf_counter() - start), cfg.out / "provenance.json")
    return code
