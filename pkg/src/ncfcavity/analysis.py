"""Resonance extraction from reflection spectra.

A cavity shows up as a dip inside the mirror stopband.  The dip is fitted
with an inverted Lorentzian on a constant baseline, its width is converted
to a linewidth in ordinary frequency, and a family of (linewidth, depth)
pairs is reduced to a single scattering rate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .io import write_json
from .tmm import Spectrum

C_LIGHT = 299_792_458.0  # m/s


class NoDipFound(ValueError):
    pass


class FitError(RuntimeError):
    """Base class for Lorentzian fit failures."""


class FitNotConverged(FitError):
    pass


class GridLimitedFit(FitError):
    """The fitted width is not resolved by the wavelength grid."""


def kappa_from_width(delta_lambda_nm, lambda0_nm):
    """Linewidth in Hz from a FWHM and centre wavelength, both in nm."""
    return C_LIGHT * np.asarray(delta_lambda_nm) / np.asarray(lambda0_nm) ** 2 * 1e9


def lorentzian_dip(wavelengths, lambda0, delta_lambda, r0, baseline):
    """``B - (B - R0) (w/2)^2 / ((x - x0)^2 + (w/2)^2)``."""
    hw2 = (0.5 * delta_lambda) ** 2
    x = np.asarray(wavelengths, dtype=float) - lambda0
    return baseline - (baseline - r0) * hw2 / (x * x + hw2)


@dataclass(frozen=True)
class DipGuess:
    lambda0: float
    delta_lambda: float
    r0: float
    baseline: float
    noise: float = 0.0
    span: tuple[float, float] = (-np.inf, np.inf)


@dataclass(frozen=True)
class ResonanceFit:
    lambda0: float
    delta_lambda: float
    r0: float
    baseline: float
    q: float
    kappa_hz: float
    residual_rms: float
    uncertainties: dict = field(default_factory=dict)
    n_points: int = 0
    n_evaluations: int = 0

    def to_dict(self, regime: str | None = None) -> dict:
        return {
            "lambda0_nm": self.lambda0,
            "delta_lambda_nm": self.delta_lambda,
            "r0": self.r0,
            "baseline": self.baseline,
            "q": self.q,
            "kappa_ghz": self.kappa_hz / 1e9,
            "residual_rms": self.residual_rms,
            "regime": None if regime is None else str(regime),
        }


def _robust_noise(values: np.ndarray) -> float:
    """Noise level from the MAD of second differences (blind to smooth trends)."""
    if values.size < 4:
        return 0.0
    d2 = np.diff(values, 2)
    return float(1.4826 * np.median(np.abs(d2 - np.median(d2))) / math.sqrt(6.0))


def find_dip(spectrum: Spectrum, window: tuple[float, float] | None = None) -> DipGuess:
    """Initial guess for the deepest reflection dip inside ``window`` (nm).

    Candidate dips are local minima with stopband-level reflectivity (at
    least 90 % of the window maximum) somewhere on both sides.  The baseline
    is the stopband median (samples above half the maximum), raised to the
    dip's lower shoulder when that is higher.  A candidate must lie three
    noise floors below the baseline and sit in a plateau (reflectivity
    above half depth) at least one linewidth wide on each side, which
    rules out interference fringes outside the stopband.  Candidates are
    tried deepest first.
    """
    wl, R = spectrum.wavelengths, spectrum.R
    if window is not None:
        lo, hi = window
        if lo < wl[0] - 1e-9 or hi > wl[-1] + 1e-9 or not lo < hi:
            raise ValueError(f"window {window} is outside the spectrum range [{wl[0]}, {wl[-1]}]")
        keep = (wl >= lo) & (wl <= hi)
        wl, R = wl[keep], R[keep]
    if wl.size < 3:
        raise NoDipFound("no dip found: fewer than three samples in window")
    minima = np.nonzero((R[1:-1] < R[:-2]) & (R[1:-1] <= R[2:]))[0] + 1
    if minima.size == 0:
        raise NoDipFound("no dip found: no interior local minimum")
    stop = R >= 0.5 * R.max()
    noise = _robust_noise(R[stop])
    # a cavity dip has stopband on both sides; side-lobe and band-edge
    # minima have at least one low shoulder
    left_top = np.maximum.accumulate(R)
    right_top = np.maximum.accumulate(R[::-1])[::-1]
    shoulder = np.minimum(left_top[minima], right_top[minima])
    inside = minima[shoulder >= 0.9 * R.max()]
    if inside.size == 0:
        raise NoDipFound("no dip found inside the stopband")
    rejected = None
    for i in inside[np.argsort(R[inside], kind="stable")]:
        guess = _dip_at(wl, R, int(i), left_top, right_top, R[stop], noise)
        if isinstance(guess, DipGuess):
            return guess
        rejected = rejected or guess
    raise NoDipFound(rejected)


def _dip_at(wl, R, i, left_top, right_top, stop_values, noise):
    """DipGuess for the minimum at ``i``, or the reason it is not a cavity dip."""
    r_min = float(R[i])
    # the lower shoulder, less the noise it was picked from, stands in for
    # the stopband level; the median alone is dragged down by broad dips
    baseline = max(float(np.median(stop_values)), float(min(left_top[i], right_top[i])) - 2.0 * noise)
    if not r_min < baseline - 3.0 * noise or not r_min < baseline:
        return f"no dip found: deepest minimum {r_min:.4g} is within noise of baseline {baseline:.4g}"
    level = 0.5 * (baseline + r_min)

    def crossing(step):
        """Half-depth crossing and the point where R drops back below it."""
        j = i
        while 0 <= j + step < R.size and R[j + step] < level:
            j += step
        k = j + step
        if not 0 <= k < R.size:
            return None, wl[j]
        # linear interpolation between j (below) and k (above)
        f = (level - R[j]) / (R[k] - R[j])
        cross = wl[j] + f * (wl[k] - wl[j])
        while 0 <= k + step < R.size and R[k + step] >= level:
            k += step
        return cross, wl[k]

    (left, left_edge), (right, right_edge) = crossing(-1), crossing(+1)
    if left is None and right is None:
        width = wl[-1] - wl[0]
    elif left is None:
        width = 2.0 * (right - wl[i])
    elif right is None:
        width = 2.0 * (wl[i] - left)
    else:
        width = right - left
    # a cavity dip sits in a plateau at least a linewidth wide; the minima
    # of interference fringes outside the stopband are flanked by peaks
    # narrower than the minima themselves (about half as wide)
    plateau = min(
        (left - left_edge) if left is not None else 0.0,
        (right_edge - right) if right is not None else 0.0,
    )
    if plateau < width:
        return f"no dip found: minimum at {wl[i]:.6g} nm is a fringe, not a dip inside a stopband"
    return DipGuess(float(wl[i]), float(width), r_min, baseline, noise, (float(left_edge), float(right_edge)))


def fit_lorentzian(
    spectrum: Spectrum,
    guess: DipGuess,
    window_widths: float = 5.0,
    xtol: float = 1e-10,
    max_iterations: int = 200,
) -> ResonanceFit:
    """Least-squares Lorentzian fit over ``lambda0 +/- window_widths * FWHM``.

    The window is re-centred once on the fitted parameters if the first pass
    moved the width by more than 10 %, and never extends past ``guess.span``
    (where the stopband falls away on either side of the dip).  Residuals
    are weighted by the square root of each sample's wavelength spacing, so
    a densely refined core does not outvote the uniformly sampled wings and
    the result does not depend on how the grid was built.

    Raises
    ------
    FitNotConverged
        The iteration limit was hit before the relative step fell below ``xtol``.
    GridLimitedFit
        The fitted FWHM is smaller than two local grid steps.
    """
    if not guess.delta_lambda > 0:
        raise ValueError("guess needs a positive width")
    wl_all, R_all = spectrum.wavelengths, spectrum.R
    centre, width = guess.lambda0, guess.delta_lambda
    p = np.array([0.0, width, guess.r0, guess.baseline])
    for attempt in range(2):
        keep = (np.abs(wl_all - centre) <= window_widths * width) & (wl_all >= guess.span[0]) & (wl_all <= guess.span[1])
        x, y = wl_all[keep] - centre, R_all[keep]
        if x.size < 5:
            raise GridLimitedFit(f"only {x.size} samples inside the fit window")
        sol = _least_squares(x, y, p, xtol, max_iterations)
        new_width = abs(sol.x[1])
        if attempt == 0 and abs(new_width - width) > 0.1 * width:
            centre, width = centre + sol.x[0], new_width
            p = np.array([0.0, new_width, sol.x[2], sol.x[3]])
            continue
        break
    if sol.status == 0:
        raise FitNotConverged(f"no convergence after {sol.nfev} evaluations")
    shift, w, r0, baseline = sol.x
    w = abs(w)
    step = np.median(np.diff(x)) if x.size > 1 else np.inf
    if w < 2.0 * step:
        raise GridLimitedFit(f"fitted FWHM {w:.3g} nm is below two grid steps ({step:.3g} nm)")
    lambda0 = centre + shift
    resid = sol.fun
    dof = max(x.size - 4, 1)
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * float(resid @ resid) / dof
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(4, np.nan)
    return ResonanceFit(
        lambda0=float(lambda0),
        delta_lambda=float(w),
        r0=float(r0),
        baseline=float(baseline),
        q=float(lambda0 / w),
        kappa_hz=float(kappa_from_width(w, lambda0)),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        uncertainties=dict(zip(("lambda0", "delta_lambda", "r0", "baseline"), map(float, sig))),
        n_points=int(x.size),
        n_evaluations=int(sol.nfev),
    )


def _spacing_weights(x):
    """sqrt of each sample's share of the axis, so mixed grids fit like a continuum."""
    if x.size < 2:
        return np.ones_like(x)
    edges = np.concatenate([[x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]])
    share = np.diff(edges)
    return np.sqrt(share / share.mean())


def _least_squares(x, y, p0, xtol, max_iterations):
    wts = _spacing_weights(x)

    def resid(p):
        return wts * (lorentzian_dip(x, p[0], p[1], p[2], p[3]) - y)

    def jac(p):
        x0, w, r0, b = p
        hw2 = 0.25 * w * w
        u = x - x0
        den = u * u + hw2
        g = hw2 / den
        out = np.empty((x.size, 4))
        out[:, 0] = -(b - r0) * g * 2.0 * u / den
        out[:, 1] = -(b - r0) * (0.5 * w * u * u) / (den * den)
        out[:, 2] = g
        out[:, 3] = 1.0 - g
        return out * wts[:, None]

    lower = [-np.inf, 0.0, 0.0, 0.0]
    upper = [np.inf, np.inf, 1.0, 1.0 + 1e-6]
    p0 = np.clip(p0, np.array(lower) + [0, 1e-300, 0, 0], upper)
    return optimize.least_squares(
        resid,
        p0,
        jac=jac,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        xtol=xtol,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_iterations,
    )


def analyze_spectrum(spectrum: Spectrum, window: tuple[float, float] | None = None) -> ResonanceFit:
    """:func:`find_dip` followed by :func:`fit_lorentzian`."""
    return fit_lorentzian(spectrum, find_dip(spectrum, window))


def save_fit(fit: ResonanceFit, path: str | Path, regime=None) -> Path:
    return write_json(fit.to_dict(regime), path)


# -- coupling regime ---------------------------------------------------------


class Regime(str, enum.Enum):
    OVER = "Over"
    CRITICAL = "Critical"
    UNDER = "Under"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CouplingRegime:
    """Classification of ``kappa / 2`` against ``kappa_sc``."""

    regime: Regime
    kappa_hz: float
    kappa_sc_hz: float
    tolerance: float

    def __str__(self) -> str:
        return self.regime.value

    @property
    def label(self) -> str:
        return self.regime.value


def classify_regime(kappa_hz: float, kappa_sc_hz: float, tolerance: float = 0.05) -> CouplingRegime:
    """Over, Critical or Under coupling.

    Critical when ``|kappa - 2 kappa_sc| <= tolerance * kappa``; otherwise Over
    if the input coupling dominates (``kappa > 2 kappa_sc``) and Under if not.
    """
    if not (kappa_hz > 0 and kappa_sc_hz > 0):
        raise ValueError("rates must be positive")
    excess = kappa_hz - 2.0 * kappa_sc_hz
    if abs(excess) <= tolerance * kappa_hz:
        regime = Regime.CRITICAL
    elif excess > 0:
        regime = Regime.OVER
    else:
        regime = Regime.UNDER
    return CouplingRegime(regime, float(kappa_hz), float(kappa_sc_hz), float(tolerance))


# -- scattering-rate fit -------------------------------------------------------


@dataclass(frozen=True)
class KappaScFit:
    kappa_sc_hz: float
    interval_hz: tuple[float, float]
    residual_rms: float
    n_points: int
    poorly_constrained: bool
    at_bound: bool

    def to_dict(self) -> dict:
        return {
            "kappa_sc_ghz": self.kappa_sc_hz / 1e9,
            "interval_ghz": [v / 1e9 for v in self.interval_hz],
            "residual_rms": self.residual_rms,
            "n_points": self.n_points,
            "poorly_constrained": self.poorly_constrained,
            "at_bound": self.at_bound,
        }


def r0_model(kappa, kappa_sc):
    """On-resonance reflectivity ``(1 - 2 kappa_sc / kappa)^2``."""
    return (1.0 - 2.0 * np.asarray(kappa_sc) / np.asarray(kappa)) ** 2


def fit_kappa_sc(points) -> KappaScFit:
    """Least-squares scattering rate from ``(kappa_hz, r0)`` pairs.

    Minimises ``sum (r0_i - (1 - 2 x / kappa_i)^2)^2`` over
    ``0 < x <= max(kappa) / 2``: a grid locates the basin, then the root of the
    analytic derivative is polished with Brent's method to 1e-12 relative.
    The fit is flagged poorly constrained when fewer than three points are
    given or all of them fall on one side of critical coupling.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("need at least one (kappa, r0) point")
    if np.any(pts[:, 0] <= 0):
        raise ValueError("kappa values must be positive")
    k = pts[:, 0] / 1e9  # GHz keeps the scalar problem well scaled
    r = pts[:, 1]
    upper = k.max() / 2.0

    def cost(x):
        return float(np.sum((r - r0_model(k, x)) ** 2))

    def grad(x):
        m = 1.0 - 2.0 * x / k
        return float(np.sum(8.0 * (r - m * m) * m / k))

    grid = upper * np.linspace(0.0, 1.0, 4001)[1:]
    costs = np.array([cost(g) for g in grid])
    j = int(np.argmin(costs))
    x = grid[j]
    lo = grid[j - 1] if j > 0 else grid[0] * 1e-6
    hi = grid[min(j + 1, grid.size - 1)]
    at_bound = False
    if grad(lo) < 0 < grad(hi):
        x = optimize.brentq(grad, lo, hi, xtol=1e-300, rtol=1e-12)
    elif j == grid.size - 1:
        at_bound = True
        x = upper
    else:
        # degenerate basin (flat cost); fall back to bounded minimisation
        x = optimize.minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * hi}).x
    m = 1.0 - 2.0 * x / k
    resid = r - m * m
    # a point inside the critical band pins the minimum as well as a pair
    # straddling it would
    labels = {classify_regime(kk, x).regime for kk in k}
    one_sided = Regime.CRITICAL not in labels and len(labels) < 2
    poorly = bool(pts.shape[0] < 3 or one_sided or at_bound)
    jac = -4.0 * m / k
    dof = max(pts.shape[0] - 1, 1)
    info = float(jac @ jac)
    sigma = math.sqrt(float(resid @ resid) / dof / info) if info > 0 else math.inf
    if poorly:
        interval = (0.0, upper * 1e9)
    else:
        interval = (max(x - 1.96 * sigma, 0.0) * 1e9, (x + 1.96 * sigma) * 1e9)
    return KappaScFit(
        kappa_sc_hz=float(x * 1e9),
        interval_hz=interval,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(pts.shape[0]),
        poorly_constrained=poorly,
        at_bound=at_bound,
    )

