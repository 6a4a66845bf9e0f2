"""Cavity-QED figures of merit and the loss calibration of the 1D model.

Rates are ordinary frequencies in Hz.  The closed-form relations:

* on-resonance reflectivity ``R0 = ((kappa_in - kappa_sc) / kappa)^2``
* scattering-limited quality factor ``Q_sc = nu0 / kappa_sc``
* finesse ``F_sc = FSR / kappa_sc`` with ``FSR = c / (2 l_eff)``
* one-pass loss ``L = pi / F_sc``
* cooperativity ``C = 4 g0^2 / (kappa gamma)``, taken equal to the Purcell
  factor, which gives ``2 g0 = sqrt(F_P kappa gamma)``
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import C_LIGHT, KappaScFit, ResonanceFit, analyze_spectrum, fit_kappa_sc
from .design import (
    CavityDesign,
    EffectiveIndexProfile,
    bragg_wavelength,
    build_stack,
    effective_indices,
    stopband_halfwidth,
)
from .emitter import effective_length, resonant_emission
from .tmm import reflection_spectrum

# scattering rate the YPol slat loss is calibrated to
TARGET_KAPPA_SC_HZ = 25e9
# free decay rate of an NV centre
NV_GAMMA_HZ = 1.2e9

CALIBRATION_FAMILY = tuple(range(100, 401, 20))
CALIBRATION_N_OUT = 400


class CalibrationError(RuntimeError):
    pass


def r0_on_resonance(kappa_in_hz: float, kappa_sc_hz: float) -> float:
    if kappa_in_hz < 0 or kappa_sc_hz < 0:
        raise ValueError("rates must be non-negative")
    total = kappa_in_hz + kappa_sc_hz
    if total == 0:
        raise ValueError("kappa_in and kappa_sc cannot both be zero")
    return ((kappa_in_hz - kappa_sc_hz) / total) ** 2


def q_sc(lambda0_nm: float, kappa_sc_hz: float) -> float:
    """Scattering-limited quality factor ``(c / lambda0) / kappa_sc``."""
    if lambda0_nm <= 0 or kappa_sc_hz <= 0:
        raise ValueError("lambda0 and kappa_sc must be positive")
    return C_LIGHT / (lambda0_nm * 1e-9) / kappa_sc_hz


def finesse_sc(l_eff_um: float, kappa_sc_hz: float) -> float:
    """``FSR / kappa_sc`` with ``FSR = c / (2 l_eff)``; ``l_eff`` is an optical length."""
    if l_eff_um <= 0 or kappa_sc_hz <= 0:
        raise ValueError("l_eff and kappa_sc must be positive")
    return C_LIGHT / (2.0 * l_eff_um * 1e-6) / kappa_sc_hz


def one_pass_loss(finesse: float) -> float:
    """Fractional power loss per pass, ``pi / F``."""
    if finesse <= 0:
        raise ValueError("finesse must be positive")
    return math.pi / finesse


def coupling_rate(purcell: float, kappa_hz: float, gamma_hz: float) -> float:
    """Single-emitter coupling rate ``g0`` in Hz (not ``2 g0``)."""
    if purcell < 0:
        raise ValueError("purcell must be non-negative")
    if kappa_hz <= 0 or gamma_hz <= 0:
        raise ValueError("kappa and gamma must be positive")
    return 0.5 * math.sqrt(purcell * kappa_hz * gamma_hz)


def cooperativity(g0_hz: float, kappa_hz: float, gamma_hz: float) -> float:
    if kappa_hz <= 0 or gamma_hz <= 0:
        raise ValueError("kappa and gamma must be positive")
    return 4.0 * g0_hz * g0_hz / (kappa_hz * gamma_hz)


# -- simulated resonances --------------------------------------------------------


def resonance_window(design: CavityDesign, profile: EffectiveIndexProfile, widths: float = 2.5):
    """Wavelength window (nm) covering the stopband with some margin."""
    lam = bragg_wavelength(design, profile)
    hw = stopband_halfwidth(design, profile)
    return lam - widths * hw, lam + widths * hw


def measure_resonance(
    design: CavityDesign,
    profile: EffectiveIndexProfile | None = None,
    n_samples: int = 801,
) -> ResonanceFit:
    """Lorentzian fit of the cavity dip in the simulated reflection spectrum."""
    profile = effective_indices(design) if profile is None else profile
    stack = build_stack(design, profile)
    lo, hi = resonance_window(design, profile)
    return analyze_spectrum(reflection_spectrum(stack, lo, hi, n_samples))


def _family_point(args):
    design, profile, n_samples = args
    fit = measure_resonance(design, profile, n_samples)
    return fit.kappa_hz, fit.r0


def map_ordered(func, items, workers: int = 1):
    """``list(map(func, items))``, optionally in a process pool (order kept)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def family_kappa_sc(
    base: CavityDesign,
    slat_loss: float | None = None,
    n_in_values=CALIBRATION_FAMILY,
    n_out: int = CALIBRATION_N_OUT,
    workers: int = 1,
    profile: EffectiveIndexProfile | None = None,
) -> tuple[KappaScFit, list[tuple[float, float]]]:
    """Fitted scattering rate of a family of designs differing only in ``N_in``."""
    jobs = []
    for n_in in n_in_values:
        d = base.replace(n_slats_input=int(n_in), n_slats_output=int(n_out))
        p = effective_indices(d) if profile is None else profile
        if slat_loss is not None:
            p = p.with_slat_loss(slat_loss)
        jobs.append((d, p, 801))
    points = map_ordered(_family_point, jobs, workers)
    return fit_kappa_sc(points), points


@functools.lru_cache(maxsize=32)
def _profile_kappa_sc(base: CavityDesign, profile: EffectiveIndexProfile) -> float:
    return family_kappa_sc(base, profile=profile)[0].kappa_sc_hz


def profile_kappa_sc(design: CavityDesign, profile: EffectiveIndexProfile | None = None) -> float:
    """Fitted scattering rate of the calibration family around ``design`` (cached)."""
    profile = effective_indices(design) if profile is None else profile
    base = design.replace(n_slats_input=CALIBRATION_FAMILY[0], n_slats_output=CALIBRATION_N_OUT)
    return _profile_kappa_sc(base, profile)


@dataclass(frozen=True)
class CalibrationResult:
    slat_loss: float
    kappa_sc_hz: float
    target_hz: float
    iterations: int
    history: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "slat_loss": self.slat_loss,
            "kappa_sc_ghz": self.kappa_sc_hz / 1e9,
            "target_ghz": self.target_hz / 1e9,
            "iterations": self.iterations,
            "history": [{"slat_loss": a, "kappa_sc_ghz": b / 1e9} for a, b in self.history],
        }


def calibrate_slat_loss(
    base: CavityDesign | None = None,
    target_kappa_sc_hz: float = TARGET_KAPPA_SC_HZ,
    n_in_values=CALIBRATION_FAMILY,
    n_out: int = CALIBRATION_N_OUT,
    rtol: float = 0.02,
    bracket: tuple[float, float] = (1e-8, 1e-2),
    max_iterations: int = 60,
    workers: int = 1,
    profile: EffectiveIndexProfile | None = None,
) -> CalibrationResult:
    """Slat loss ``Im(n_slat)`` whose simulated family yields ``target_kappa_sc_hz``.

    Bisects ``log(Im n)`` inside ``bracket``.  A loss so high that the family
    has no fittable dips counts as overshooting the target.  The search
    stops once the fitted rate is within ``rtol / 2`` of the target, leaving
    margin against the ``rtol`` acceptance band.  ``profile`` overrides the
    calibrated profile of ``base`` (its slat loss is what gets varied).
    """
    if target_kappa_sc_hz <= 0:
        raise ValueError("target must be positive")
    base = CavityDesign() if base is None else base
    history = []

    def evaluate(loss):
        try:
            ks = family_kappa_sc(base, loss, n_in_values, n_out, workers, profile)[0].kappa_sc_hz
        except (ValueError, RuntimeError):
            ks = math.inf
        history.append((loss, ks))
        return ks

    lo, hi = bracket
    k_lo = evaluate(lo)
    if k_lo > target_kappa_sc_hz:
        raise CalibrationError(
            f"target {target_kappa_sc_hz / 1e9:.4g} GHz unreachable: already "
            f"{k_lo / 1e9:.4g} GHz at Im(n)={lo:g} (bracket {bracket})"
        )
    best = (lo, k_lo)
    for it in range(1, max_iterations + 1):
        mid = math.sqrt(lo * hi)
        k_mid = evaluate(mid)
        if abs(k_mid - target_kappa_sc_hz) < abs(best[1] - target_kappa_sc_hz):
            best = (mid, k_mid)
        if abs(k_mid / target_kappa_sc_hz - 1.0) <= 0.5 * rtol:
            return CalibrationResult(mid, k_mid, target_kappa_sc_hz, it, tuple(history))
        if k_mid < target_kappa_sc_hz:
            lo = mid
        else:
            hi = mid
    if abs(best[1] / target_kappa_sc_hz - 1.0) <= rtol:
        return CalibrationResult(best[0], best[1], target_kappa_sc_hz, max_iterations, tuple(history))
    raise CalibrationError(
        f"target {target_kappa_sc_hz / 1e9:.4g} GHz not reached within Im(n) in {bracket}; "
        f"closest was {best[1] / 1e9:.4g} GHz at {best[0]:.4g}"
    )


# -- report ------------------------------------------------------------------


@dataclass(frozen=True)
class CqedReport:
    lambda0: float
    kappa_hz: float
    kappa_in_hz: float
    kappa_sc_hz: float
    q_sc: float
    finesse_sc: float
    one_pass_loss: float
    l_eff: float
    purcell: float
    cooperativity: float
    g0_hz: float
    gamma_hz: float
    eta: float

    def to_dict(self) -> dict:
        return {
            "lambda0_nm": self.lambda0,
            "kappa_ghz": self.kappa_hz / 1e9,
            "kappa_in_ghz": self.kappa_in_hz / 1e9,
            "kappa_sc_ghz": self.kappa_sc_hz / 1e9,
            "q_sc": self.q_sc,
            "finesse_sc": self.finesse_sc,
            "one_pass_loss_pct": 100.0 * self.one_pass_loss,
            "l_eff_um": self.l_eff,
            "purcell": self.purcell,
            "cooperativity": self.cooperativity,
            "g0_ghz": self.g0_hz / 1e9,
            "two_g0_ghz": 2.0 * self.g0_hz / 1e9,
            "gamma_ghz": self.gamma_hz / 1e9,
            "eta": self.eta,
        }

    def as_record(self) -> dict:
        return asdict(self)


def build_report(
    lambda0_nm: float,
    kappa_hz: float,
    kappa_sc_hz: float,
    l_eff_um: float,
    purcell: float,
    eta: float,
    gamma_hz: float = NV_GAMMA_HZ,
) -> CqedReport:
    """Assemble a report from measured quantities; ``kappa_in = kappa - kappa_sc``."""
    f_sc = finesse_sc(l_eff_um, kappa_sc_hz)
    g0 = coupling_rate(purcell, kappa_hz, gamma_hz)
    return CqedReport(
        lambda0=float(lambda0_nm),
        kappa_hz=float(kappa_hz),
        kappa_in_hz=float(kappa_hz - kappa_sc_hz),
        kappa_sc_hz=float(kappa_sc_hz),
        q_sc=q_sc(lambda0_nm, kappa_sc_hz),
        finesse_sc=f_sc,
        one_pass_loss=one_pass_loss(f_sc),
        l_eff=float(l_eff_um),
        purcell=float(purcell),
        cooperativity=cooperativity(g0, kappa_hz, gamma_hz),
        g0_hz=g0,
        gamma_hz=float(gamma_hz),
        eta=float(eta),
    )


def cavity_report(
    design: CavityDesign,
    profile: EffectiveIndexProfile | None = None,
    kappa_sc_hz: float | None = None,
    gamma_hz: float = NV_GAMMA_HZ,
) -> CqedReport:
    """Simulate one design and collect its figures of merit.

    ``kappa_sc_hz`` is the scattering rate of the design family; by default
    it is fitted over the calibration family (``N_in`` = 100..400, ``N_out``
    = 400) built with the same profile.
    """
    profile = effective_indices(design) if profile is None else profile
    if kappa_sc_hz is None:
        kappa_sc_hz = profile_kappa_sc(design, profile)
    fit = measure_resonance(design, profile)
    stack = build_stack(design, profile)
    lo, hi = resonance_window(design, profile)
    wl, em = resonant_emission(stack, lo, hi, profile.unguided_ratio)
    l_eff_um = effective_length(stack, wl) * 1e-3
    return build_report(fit.lambda0, fit.kappa_hz, kappa_sc_hz, l_eff_um, em.purcell, em.eta_left, gamma_hz)

