"""Point emitter inside a layer stack: Purcell factor and one-sided channelling.

The emitter is a scalar line source at the stack's source plane.  Powers are
normalised to the same source in an unbounded medium of the source-layer
index, so a bare fibre gives ``purcell == 1`` with half the power on each side.

``unguided_ratio`` adds a non-resonant radiation channel: a bare-fibre
emitter puts that much power into unguided modes for every unit it puts into
the guided mode.  It is unaffected by the mirrors, counts towards the total
emitted power and ends up in ``eta_loss``.  With the default of zero the
results are the pure 1D guided-mode quantities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, optimize

from .design import LayerStack
from .tmm import (
    field_profile,
    find_resonances,
    mirror_coefficients,
    split_at_source,
)


class DivergentResonance(ArithmeticError):
    """Round-trip denominator vanished: a lossless, perfectly closed cavity."""


class OracleNotConverged(RuntimeError):
    pass


class NoConfinedMode(ValueError):
    pass


@dataclass(frozen=True)
class EmissionResult:
    purcell: float
    eta_left: float
    eta_right: float
    eta_loss: float
    p_total: float
    p_left: float
    p_right: float
    eta_unguided: float = 0.0

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))


def emission_from_mirrors(r_left, t_left, r_right, t_right, n_source, n_left, n_right, unguided_ratio=0.0):
    """Closed-form emission for mirror coefficients referenced at the source.

    With ``D = 1 - r_left r_right`` the guided-mode Purcell factor is
    ``Re[(1 + r_left)(1 + r_right) / D]`` for a real source index (an
    absorbing one weights the bracket by ``1/n``, normalised by the same
    weight of the bare medium) and the outgoing exterior amplitudes
    are ``t_left (1 + r_right) / D`` and ``t_right (1 + r_left) / D``.
    """
    r_l, r_r = np.asarray(r_left), np.asarray(r_right)
    denom = 1.0 - r_l * r_r
    if np.any(np.abs(denom) < 1e-12):
        raise DivergentResonance("|1 - r_left r_right| < 1e-12")
    # weighting by 1/n keeps an absorbing source medium exact; it drops out
    # when n_source is real
    inv_n = 1.0 / complex(n_source)
    guided = np.real(inv_n * (1.0 + r_l) * (1.0 + r_r) / denom) / inv_n.real
    a_l = np.asarray(t_left) * (1.0 + r_r) / denom
    a_r = np.asarray(t_right) * (1.0 + r_l) / denom
    n_src = np.real(n_source)
    p_l = n_left * np.abs(a_l) ** 2 / (2.0 * n_src)
    p_r = n_right * np.abs(a_r) ** 2 / (2.0 * n_src)
    return _normalise(guided, p_l, p_r, unguided_ratio)


def _normalise(guided, p_l, p_r, unguided_ratio):
    scale = 1.0 + unguided_ratio
    p_total = (guided + unguided_ratio) / scale
    p_left = p_l / scale
    p_right = p_r / scale
    # a source on a field node emits nothing; its fractions are undefined
    with np.errstate(invalid="ignore", divide="ignore"):
        eta_left = p_left / p_total
        eta_right = p_right / p_total
        eta_unguided = unguided_ratio / scale / p_total
    eta_loss = 1.0 - eta_left - eta_right
    return p_total, p_left, p_right, eta_left, eta_right, eta_loss, eta_unguided


def _result(values, i=None) -> EmissionResult:
    p_total, p_left, p_right, eta_left, eta_right, eta_loss, eta_unguided = (
        np.asarray(v) if i is None else np.asarray(v)[i] for v in values
    )
    return EmissionResult(
        purcell=float(p_total),
        eta_left=float(eta_left),
        eta_right=float(eta_right),
        eta_loss=float(eta_loss),
        p_total=float(p_total),
        p_left=float(p_left),
        p_right=float(p_right),
        eta_unguided=float(eta_unguided),
    )


def _emit_arrays(stack: LayerStack, wavelengths, unguided_ratio=0.0):
    mc = mirror_coefficients(stack, np.atleast_1d(np.asarray(wavelengths, dtype=float)))
    return emission_from_mirrors(
        mc.r_left, mc.t_left, mc.r_right, mc.t_right, mc.n_source, stack.n_left, stack.n_right, unguided_ratio
    )


def emit(stack: LayerStack, wavelength: float, unguided_ratio: float = 0.0) -> EmissionResult:
    """Emission of a source at ``stack.source_plane`` at one wavelength (nm)."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return _result(_emit_arrays(stack, [wavelength], unguided_ratio), 0)


@dataclass(frozen=True)
class EmissionSpectrum:
    wavelengths: np.ndarray
    purcell: np.ndarray
    eta_left: np.ndarray
    eta_right: np.ndarray
    eta_loss: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    eta_unguided: np.ndarray

    def __len__(self):
        return self.wavelengths.size

    def __iter__(self):
        for i, wl in enumerate(self.wavelengths):
            yield float(wl), self[i]

    def __getitem__(self, i) -> EmissionResult:
        return EmissionResult(
            purcell=float(self.purcell[i]),
            eta_left=float(self.eta_left[i]),
            eta_right=float(self.eta_right[i]),
            eta_loss=float(self.eta_loss[i]),
            p_total=float(self.purcell[i]),
            p_left=float(self.p_left[i]),
            p_right=float(self.p_right[i]),
            eta_unguided=float(self.eta_unguided[i]),
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["wavelength_nm", "purcell", "eta_left", "eta_right", "eta_loss"])
            for row in zip(self.wavelengths, self.purcell, self.eta_left, self.eta_right, self.eta_loss):
                w.writerow([f"{v:.12g}" for v in row])


def evaluate_emission(stack: LayerStack, wavelengths, unguided_ratio: float = 0.0) -> EmissionSpectrum:
    wl = np.asarray(wavelengths, dtype=float)
    p_total, p_left, p_right, eta_left, eta_right, eta_loss, eta_unguided = _emit_arrays(stack, wl, unguided_ratio)
    return EmissionSpectrum(wl, p_total, eta_left, eta_right, eta_loss, p_left, p_right, eta_unguided)


def emission_spectrum(
    stack: LayerStack,
    wl_min: float,
    wl_max: float,
    n_samples: int,
    unguided_ratio: float = 0.0,
    samples_per_linewidth: int = 50,
) -> EmissionSpectrum:
    """Uniform emission spectrum, densified around each cavity resonance."""
    if not wl_min < wl_max or n_samples < 2:
        raise ValueError("need wl_min < wl_max and n_samples >= 2")
    wl = [np.linspace(wl_min, wl_max, n_samples)]
    for res in find_resonances(stack, wl_min, wl_max, n_coarse=max(201, min(n_samples, 4001))):
        fwhm = 2.0 * res.halfwidth
        if not np.isfinite(fwhm):
            continue
        local = np.linspace(res.wavelength - 5 * fwhm, res.wavelength + 5 * fwhm, 10 * samples_per_linewidth + 1)
        wl.append(local[(local > wl_min) & (local < wl_max)])
    return evaluate_emission(stack, np.unique(np.concatenate(wl)), unguided_ratio)


def resonant_emission(
    stack: LayerStack, wl_min: float, wl_max: float, unguided_ratio: float = 0.0
) -> tuple[float, EmissionResult]:
    """Emission at the Purcell peak of the strongest cavity mode in a window.

    The mode with the largest round-trip magnitude is taken and the total
    emitted power is maximised within three half-widths of it.

    Raises
    ------
    NoConfinedMode
        No resonance in the window.
    """
    modes = find_resonances(stack, wl_min, wl_max, n_coarse=801, min_round_trip=0.05)
    if not modes:
        raise NoConfinedMode(f"no cavity resonance between {wl_min} and {wl_max} nm")
    mode = max(modes, key=lambda m: m.round_trip)
    hw = mode.halfwidth if np.isfinite(mode.halfwidth) else 0.01 * (wl_max - wl_min)
    lo, hi = max(wl_min, mode.wavelength - 3 * hw), min(wl_max, mode.wavelength + 3 * hw)
    opt = optimize.minimize_scalar(
        lambda x: -float(_emit_arrays(stack, [x], unguided_ratio)[0][0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-7 * hw},
    )
    wl = float(opt.x)
    return wl, emit(stack, wl, unguided_ratio)


# -- finite-element Helmholtz oracle ---------------------------------------


def _fem_solve(stack: LayerStack, k0: float, h_target: float, factor: int = 1):
    """Linear-element solve of ``u'' + k0^2 n^2 u = -delta(z - s)``.

    Outgoing Robin conditions ``u' = -/+ i k0 n u`` close the domain at the
    left/right faces (an exterior index of 0 gives a Neumann wall).  Every
    interface and the source plane are mesh nodes; each segment gets
    ``factor`` times its base element count so refinements nest exactly.
    """
    s = stack.source_plane
    edges = stack.interfaces
    nodes = [np.array([0.0])]
    layer_of_cell = []
    for j in range(len(stack)):
        lo, hi = edges[j], edges[j + 1]
        cuts = [lo, s, hi] if lo < s < hi else [lo, hi]
        for a, b in zip(cuts[:-1], cuts[1:]):
            m = max(1, int(np.ceil((b - a) / h_target))) * factor
            nodes.append(np.linspace(a, b, m + 1)[1:])
            layer_of_cell.extend([j] * m)
    z = np.concatenate(nodes)
    h = np.diff(z)
    eps = stack.index[layer_of_cell] ** 2
    k2 = k0 * k0
    # weak form: int u'v' - k^2 n^2 u v - boundary terms = v(s)
    elem_diag = 1.0 / h - k2 * eps * h / 3.0
    off = -1.0 / h - k2 * eps * h / 6.0
    diag = np.zeros(z.size, dtype=complex)
    diag[:-1] += elem_diag
    diag[1:] += elem_diag
    diag[0] -= 1j * k0 * stack.n_left
    diag[-1] -= 1j * k0 * stack.n_right
    a = sp.diags([off, diag, off], [-1, 0, 1], format="csc")
    isrc = int(np.argmin(np.abs(z - s)))
    rhs = np.zeros(z.size, dtype=complex)
    rhs[isrc] = 1.0
    u = spla.spsolve(a, rhs)
    return z, u, isrc


def _oracle_observables(stack: LayerStack, wavelength: float, points_per_wavelength: float, factor: int):
    """(total, left, right) powers relative to the unbounded-medium source."""
    k0 = 2.0 * np.pi / wavelength
    n_max = max(np.max(np.abs(stack.index)), stack.n_left, stack.n_right)
    z, u, isrc = _fem_solve(stack, k0, wavelength / (points_per_wavelength * n_max), factor)
    n_src = complex(split_at_source(stack)[2])
    # power of the same source in an unbounded medium of the source index
    p_ref = (1.0 / (2.0 * k0 * n_src)).real
    # Im u(s) is the power the source delivers; k n |u|^2 leaves through a face
    p_src = u[isrc].imag
    p_l = k0 * stack.n_left * abs(u[0]) ** 2
    p_r = k0 * stack.n_right * abs(u[-1]) ** 2
    return np.array([p_src, p_l, p_r]) / p_ref


def helmholtz_oracle(
    stack: LayerStack,
    wavelength: float,
    points_per_wavelength: float = 40.0,
    unguided_ratio: float = 0.0,
    tolerance: float = 1e-3,
    max_points_per_wavelength: float = 1280.0,
) -> EmissionResult:
    """Independent finite-element check of :func:`emit`.

    Solves the 1D Helmholtz equation with a point source on nested meshes of
    1x, 2x and 4x ``points_per_wavelength`` (in the densest medium) and
    Richardson-extrapolates each consecutive pair.  While the two
    extrapolants differ by more than ``tolerance`` (relative to the total
    power) the base density is doubled; past ``max_points_per_wavelength``
    :class:`OracleNotConverged` is raised.  Long high-finesse stacks need
    the extra density because element dispersion accumulates over the
    cavity's many round trips.
    """
    if stack.source_plane is None:
        raise ValueError("stack has no source plane")
    factor = 1
    levels = [_oracle_observables(stack, wavelength, points_per_wavelength, f) for f in (1, 2, 4)]
    while True:
        first = (4.0 * levels[1] - levels[0]) / 3.0
        second = (4.0 * levels[2] - levels[1]) / 3.0
        scale = max(abs(second[0]), 1e-300)
        change = float(np.max(np.abs(second - first)) / scale)
        if change <= tolerance:
            break
        if 2 * factor * points_per_wavelength > max_points_per_wavelength:
            raise OracleNotConverged(
                f"successive refinements differ by {change:.3g} (relative) "
                f"at {factor * points_per_wavelength:g} points per wavelength"
            )
        factor *= 2
        # every mesh subdivides the base mesh, so the levels stay nested
        levels = [levels[1], levels[2], _oracle_observables(stack, wavelength, points_per_wavelength, 4 * factor)]
    guided, p_l, p_r = second
    return _result(_normalise(guided, p_l, p_r, unguided_ratio))


# -- effective length -------------------------------------------------------


def effective_length(stack: LayerStack, wavelength: float, points_per_layer: int = 16) -> float:
    """``integral I dz / max I`` of the dipole-driven intensity over the stack (nm)."""
    z, e = field_profile(stack, wavelength, "source", points_per_layer)
    inten = np.abs(e) ** 2
    inside = (z > 0) & (z < stack.length)
    peak_inside = inten[inside].max() if np.any(inside) else 0.0
    edge = max(inten[0], inten[-1])
    if len(stack) > 1 and not peak_inside > edge * (1 + 1e-9):
        raise NoConfinedMode("no confined mode: intensity peaks at the stack boundary")
    peak = inten.max()
    return float(integrate.trapezoid(inten, z) / peak)
