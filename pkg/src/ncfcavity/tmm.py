"""Normal-incidence 2x2 transfer matrices for layered stacks.

Conventions
-----------
Fields vary as ``exp(-i w t)``; in a layer of index ``n`` the field is
``A exp(i k n z) + B exp(-i k n z)`` with ``k = 2 pi / wavelength``, so a
positive ``Im(n)`` attenuates.  The stack matrix ``M`` maps the amplitudes
``(A, B)`` just right of the right boundary to those just left of the left
boundary::

    [A_left, B_left] = M @ [A_right, B_right]

For a unit wave from the left, ``r = m21 / m11`` and ``t = 1 / m11``.

Every function accepts a scalar wavelength or a 1D array of wavelengths (nm).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .design import LayerStack


@dataclass(frozen=True)
class TransferMatrix:
    m11: np.ndarray | complex
    m12: np.ndarray | complex
    m21: np.ndarray | complex
    m22: np.ndarray | complex

    @classmethod
    def from_array(cls, m: np.ndarray) -> TransferMatrix:
        if m.ndim == 2:
            return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))
        return cls(m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1])

    def as_array(self) -> np.ndarray:
        return np.stack(
            [np.stack([self.m11, self.m12], -1), np.stack([self.m21, self.m22], -1)], -2
        )

    @property
    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m21

    def __matmul__(self, other: TransferMatrix) -> TransferMatrix:
        return TransferMatrix.from_array(self.as_array() @ other.as_array())


def _k0(wavelength) -> np.ndarray:
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl <= 0):
        raise ValueError("wavelength must be positive")
    return 2.0 * np.pi / np.atleast_1d(wl)


def _layer_matrix(n: complex, d: float, k0: np.ndarray) -> np.ndarray:
    """Characteristic matrix mapping (E, H) at the right face to the left face."""
    delta = k0 * n * d
    c, s = np.cos(delta), np.sin(delta)
    m = np.empty(k0.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = c
    m[..., 0, 1] = -1j * s / n
    m[..., 1, 0] = -1j * n * s
    m[..., 1, 1] = c
    return m


def _compress(thickness: np.ndarray, index: np.ndarray):
    """Tokenise layers and collapse runs of a repeated two-layer unit."""
    keys: dict[tuple[float, complex], int] = {}
    tokens = []
    for d, n in zip(thickness.tolist(), index.tolist()):
        tokens.append(keys.setdefault((d, n), len(keys)))
    plan = []
    i, size = 0, len(tokens)
    while i < size:
        if i + 3 < size and tokens[i] != tokens[i + 1]:
            a, b = tokens[i], tokens[i + 1]
            count = 1
            j = i + 2
            while j + 1 < size and tokens[j] == a and tokens[j + 1] == b:
                count += 1
                j += 2
            if count > 1:
                plan.append(((a, b), count))
                i = j
                continue
        plan.append(((tokens[i],), 1))
        i += 1
    return list(keys), plan


def _interior_product(thickness, index, k0) -> np.ndarray:
    """Ordered product of layer characteristic matrices, batched over k0."""
    eye = np.broadcast_to(np.eye(2, dtype=complex), k0.shape + (2, 2)).copy()
    if thickness.size == 0:
        return eye
    if np.any(index == 0):
        raise ValueError("layer indices must be non-zero")
    unique, plan = _compress(thickness, index)
    mats = [_layer_matrix(n, d, k0) for d, n in unique]
    out = eye
    for unit, count in plan:
        block = mats[unit[0]]
        for tok in unit[1:]:
            block = block @ mats[tok]
        if count > 1:
            block = np.linalg.matrix_power(block, count)
        out = out @ block
    return out


def _exterior_matrices(n_left: float, n_right: float, shape) -> tuple[np.ndarray, np.ndarray]:
    if n_left <= 0:
        raise ValueError("the incidence medium needs a positive index")
    left = np.array([[0.5, 0.5 / n_left], [0.5, -0.5 / n_left]], dtype=complex)
    right = np.array([[1.0, 1.0], [n_right, -n_right]], dtype=complex)
    return np.broadcast_to(left, shape + (2, 2)), np.broadcast_to(right, shape + (2, 2))


def _matrix_array(stack: LayerStack, wavelength) -> np.ndarray:
    k0 = _k0(wavelength)
    inner = _interior_product(stack.thickness, stack.index, k0)
    left, right = _exterior_matrices(stack.n_left, stack.n_right, k0.shape)
    return left @ inner @ right


def _squeeze(x, wavelength):
    return x[0] if np.ndim(wavelength) == 0 else x


def stack_matrix(stack: LayerStack, wavelength) -> TransferMatrix:
    """Transfer matrix of ``stack`` (see module docstring for the convention)."""
    m = _matrix_array(stack, wavelength)
    if np.ndim(wavelength) == 0:
        m = m[0]
    return TransferMatrix.from_array(m)


def rt_left_incidence(stack: LayerStack, wavelength):
    """Reflection and transmission amplitudes for a unit wave from the left."""
    m = _matrix_array(stack, wavelength)
    m11 = m[..., 0, 0]
    if np.any(np.abs(m11) < 1e-300):
        raise FloatingPointError("transfer matrix element m11 vanished")
    r = m[..., 1, 0] / m11
    t = 1.0 / m11
    return _squeeze(r, wavelength), _squeeze(t, wavelength)


def rt_right_incidence(stack: LayerStack, wavelength):
    """Reflection and transmission amplitudes for a unit wave from the right."""
    m = _matrix_array(stack, wavelength)
    m11 = m[..., 0, 0]
    r = -m[..., 0, 1] / m11
    if stack.n_left > 0:
        # det M = n_R / n_L exactly; the numerical determinant cancels badly
        # once the matrix elements are large (thick lossy stacks)
        t = (stack.n_right / stack.n_left) / m11
    else:
        t = (m11 * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]) / m11
    return _squeeze(r, wavelength), _squeeze(t, wavelength)


@dataclass(frozen=True)
class Spectrum:
    wavelengths: np.ndarray
    r: np.ndarray
    t: np.ndarray
    n_left: float
    n_right: float

    @property
    def R(self) -> np.ndarray:
        return np.abs(self.r) ** 2

    @property
    def T(self) -> np.ndarray:
        return (self.n_right / self.n_left) * np.abs(self.t) ** 2

    def __len__(self) -> int:
        return self.wavelengths.size

    def window(self, lo: float, hi: float) -> Spectrum:
        keep = (self.wavelengths >= lo) & (self.wavelengths <= hi)
        return Spectrum(self.wavelengths[keep], self.r[keep], self.t[keep], self.n_left, self.n_right)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["wavelength_nm", "R", "T", "re_r", "im_r", "re_t", "im_t"])
            for row in zip(self.wavelengths, self.R, self.T, self.r.real, self.r.imag, self.t.real, self.t.imag):
                w.writerow([f"{v:.12g}" for v in row])


def evaluate_spectrum(stack: LayerStack, wavelengths) -> Spectrum:
    wl = np.asarray(wavelengths, dtype=float)
    r, t = rt_left_incidence(stack, wl)
    return Spectrum(wl, np.asarray(r), np.asarray(t), stack.n_left, stack.n_right)


# -- sub-stacks seen from the source plane ---------------------------------


@dataclass(frozen=True)
class MirrorCoefficients:
    """Mirror responses seen from the source plane.

    ``r_left``/``r_right`` are reflection amplitudes of the left/right
    sub-stacks for waves leaving the source plane, referenced *at the source
    plane*: the one-way phases ``phase_left``/``phase_right`` across the
    defect are already folded in, ``r = r_boundary * exp(2 i phase)``.
    ``t_left``/``t_right`` carry the outgoing amplitude from the source plane
    to the corresponding exterior, likewise including ``exp(i phase)``.
    """

    r_left: np.ndarray | complex
    t_left: np.ndarray | complex
    r_right: np.ndarray | complex
    t_right: np.ndarray | complex
    phase_left: np.ndarray | complex
    phase_right: np.ndarray | complex
    n_source: complex
    n_left: float
    n_right: float

    @property
    def r_left_boundary(self):
        return self.r_left * np.exp(-2j * self.phase_left)

    @property
    def r_right_boundary(self):
        return self.r_right * np.exp(-2j * self.phase_right)


def source_layer(stack: LayerStack, source_plane: float | None = None) -> int:
    """Index of the layer strictly containing the source plane."""
    s = stack.source_plane if source_plane is None else float(source_plane)
    if s is None:
        raise ValueError("stack has no source plane")
    edges = stack.interfaces
    j = int(np.searchsorted(edges, s, side="right")) - 1
    if j < 0 or j >= len(stack) or not edges[j] < s < edges[j + 1]:
        raise ValueError(f"source plane {s} nm is not inside a layer")
    return j


def split_at_source(stack: LayerStack, source_plane: float | None = None):
    """Left and right sub-stacks, each oriented with incidence from the source."""
    s = stack.source_plane if source_plane is None else float(source_plane)
    j = source_layer(stack, s)
    edges = stack.interfaces
    n_src = stack.index[j]
    d_left = s - edges[j]
    d_right = edges[j + 1] - s
    left = LayerStack(
        np.concatenate([[d_left], stack.thickness[:j][::-1]]),
        np.concatenate([[n_src], stack.index[:j][::-1]]),
        1.0,
        stack.n_left,
    )
    right = LayerStack(
        np.concatenate([[d_right], stack.thickness[j + 1 :]]),
        np.concatenate([[n_src], stack.index[j + 1 :]]),
        1.0,
        stack.n_right,
    )
    return left, right, n_src, d_left, d_right


def _substack_rt(sub: LayerStack, n_src: complex, k0: np.ndarray):
    # incidence from a medium of the source index: identical to starting
    # inside the source layer, so the interface matrix is the identity
    inner = _interior_product(sub.thickness, sub.index, k0)
    left = np.array([[0.5, 0.5 / n_src], [0.5, -0.5 / n_src]], dtype=complex)
    right = np.array([[1.0, 1.0], [sub.n_right, -sub.n_right]], dtype=complex)
    m = left @ inner @ right
    m11 = m[..., 0, 0]
    return m[..., 1, 0] / m11, 1.0 / m11


def mirror_coefficients(stack: LayerStack, wavelength, source_plane: float | None = None) -> MirrorCoefficients:
    k0 = _k0(wavelength)
    left, right, n_src, d_left, d_right = split_at_source(stack, source_plane)
    r_l, t_l = _substack_rt(left, n_src, k0)
    r_r, t_r = _substack_rt(right, n_src, k0)
    sq = lambda x: _squeeze(x, wavelength)  # noqa: E731
    return MirrorCoefficients(
        r_left=sq(r_l),
        t_left=sq(t_l),
        r_right=sq(r_r),
        t_right=sq(t_r),
        phase_left=sq(k0 * n_src * d_left),
        phase_right=sq(k0 * n_src * d_right),
        n_source=complex(n_src),
        n_left=stack.n_left,
        n_right=stack.n_right,
    )


# -- internal fields --------------------------------------------------------


def _internal_field(thickness, index, n_in, n_out, k0: float, amplitude: complex, points_per_layer: int):
    """E(z) inside a stack driven by ``amplitude`` incident from the left.

    Returns positions (nm, measured from the first interface) and complex
    field samples, plus the reflected amplitude in the incidence medium.
    """
    k = np.array([k0])
    inner = _interior_product(thickness, index, k)[0]
    fl = np.array([[0.5, 0.5 / n_in], [0.5, -0.5 / n_in]], dtype=complex)
    fr = np.array([[1.0, 1.0], [n_out, -n_out]], dtype=complex)
    m = fl @ inner @ fr
    t = amplitude / m[0, 0]
    r = m[1, 0] * t
    state = fr @ np.array([t, 0.0])  # (E, H) at the right face of the last layer
    edges = np.concatenate([[0.0], np.cumsum(thickness)])
    zs, es = [], []
    for j in range(thickness.size - 1, -1, -1):
        d, n = thickness[j], index[j]
        # x is the distance back from the right face; the left face is included
        x = d * (1.0 - np.arange(points_per_layer) / points_per_layer)
        if j == thickness.size - 1:
            x = np.concatenate([x, [0.0]])
        delta = k0 * n * x
        e = np.cos(delta) * state[0] - 1j * np.sin(delta) / n * state[1]
        zs.append(edges[j + 1] - x)
        es.append(e)
        state = _layer_matrix(n, d, k)[0] @ state
    z = np.concatenate(zs[::-1]) if zs else np.zeros(0)
    e = np.concatenate(es[::-1]) if es else np.zeros(0, dtype=complex)
    order = np.argsort(z, kind="stable")
    return z[order], e[order], r, t


def intensity_profile(
    stack: LayerStack,
    wavelength: float,
    incidence: str = "left",
    points_per_layer: int = 8,
    padding: float = 0.0,
):
    """Normalised ``|E(z)|^2`` across the stack.

    ``incidence`` is ``"left"``, ``"right"`` or ``"source"`` (a point dipole
    at the stack's source plane).  ``padding`` extends the sampled range by
    that many nm into each exterior.  Returns ``(z, intensity)`` with the
    maximum normalised to one.
    """
    z, e = field_profile(stack, wavelength, incidence, points_per_layer, padding)
    inten = np.abs(e) ** 2
    peak = inten.max()
    return z, inten / peak if peak > 0 else inten


def field_profile(stack, wavelength, incidence="left", points_per_layer=8, padding=0.0):
    """Complex field samples ``(z, E)``; see :func:`intensity_profile`."""
    if points_per_layer < 1:
        raise ValueError("points_per_layer must be >= 1")
    k0 = float(_k0(wavelength)[0])
    length = stack.length
    if incidence == "right":
        z, e = field_profile(stack.reversed(), wavelength, "left", points_per_layer, padding)
        return (length - z)[::-1], e[::-1]
    if incidence == "left":
        z, e, r, t = _internal_field(
            stack.thickness, stack.index, stack.n_left, stack.n_right, k0, 1.0, points_per_layer
        )
        parts_z, parts_e = [z], [e]
        if padding > 0:
            npad = max(points_per_layer, 8)
            zl = np.linspace(-padding, 0.0, npad, endpoint=False)
            el = np.exp(1j * k0 * stack.n_left * zl) + r * np.exp(-1j * k0 * stack.n_left * zl)
            zr = np.linspace(length, length + padding, npad + 1)[1:]
            er = t * np.exp(1j * k0 * stack.n_right * (zr - length))
            parts_z = [zl, z, zr]
            parts_e = [el, e, er]
        return np.concatenate(parts_z), np.concatenate(parts_e)
    if incidence == "source":
        return _dipole_field(stack, k0, points_per_layer, padding)
    raise ValueError(f"unknown incidence {incidence!r}")


def _dipole_field(stack: LayerStack, k0: float, points_per_layer: int, padding: float):
    left, right, n_src, d_left, d_right = split_at_source(stack)
    s = stack.source_plane
    k = np.array([k0])
    r_l, _ = _substack_rt(left, n_src, k)
    r_r, _ = _substack_rt(right, n_src, k)
    r_l, r_r = complex(r_l[0]), complex(r_r[0])
    denom = 1.0 - r_l * r_r
    # outgoing amplitudes at the source plane for a unit line source
    g = 1j / (2.0 * k0 * n_src)
    a_right = g * (1.0 + r_l) / denom
    a_left = g * (1.0 + r_r) / denom
    zr, er, _, tr = _internal_field(right.thickness, right.index, n_src, right.n_right, k0, a_right, points_per_layer)
    zl, el, _, tl = _internal_field(left.thickness, left.index, n_src, left.n_right, k0, a_left, points_per_layer)
    z = np.concatenate([s - zl[::-1], [s], s + zr])
    e = np.concatenate([el[::-1], [a_right * (1.0 + r_r)], er])
    if padding > 0:
        npad = max(points_per_layer, 8)
        x = np.linspace(0.0, padding, npad + 1)[1:]
        z = np.concatenate([(-x)[::-1], z, stack.length + x])
        e = np.concatenate(
            [
                (tl * np.exp(1j * k0 * stack.n_left * x))[::-1],
                e,
                tr * np.exp(1j * k0 * stack.n_right * x),
            ]
        )
    return z, e


# -- resonances and adaptive spectra ----------------------------------------


@dataclass(frozen=True)
class Resonance:
    wavelength: float
    halfwidth: float  # HWHM estimate, nm
    round_trip: float  # |r_left r_right|


def _round_trip(stack: LayerStack, wl: np.ndarray) -> np.ndarray:
    mc = mirror_coefficients(stack, wl)
    return np.asarray(mc.r_left * mc.r_right)


def find_resonances(stack: LayerStack, wl_min: float, wl_max: float, n_coarse: int = 2001, min_round_trip: float = 0.5):
    """Cavity resonances of a stack with a source plane, from the round-trip phase.

    A resonance is a zero of ``arg(r_left r_right)`` (source-plane reference)
    with round-trip magnitude above ``min_round_trip``.
    """
    if stack.source_plane is None:
        return []
    wl = np.linspace(wl_min, wl_max, n_coarse)
    rt = _round_trip(stack, wl)
    im, re = rt.imag, rt.real
    found = []
    idx = np.nonzero((np.sign(im[:-1]) != np.sign(im[1:])) & (re[:-1] > 0) & (re[1:] > 0))[0]
    for i in idx:
        f = lambda x: float(_round_trip(stack, np.array([x]))[0].imag)  # noqa: E731
        lam = optimize.brentq(f, wl[i], wl[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps)
        h = 1e-6 * lam
        rp, r0, rm = _round_trip(stack, np.array([lam + h, lam, lam - h]))
        rho = abs(r0)
        if rho < min_round_trip:
            continue
        slope = abs(np.angle(rp / rm)) / (2 * h)
        hwhm = (1.0 - rho) / (np.sqrt(rho) * slope) if slope > 0 else np.inf
        found.append(Resonance(float(lam), float(hwhm), float(rho)))
    return found


def _dip_candidates(wl: np.ndarray, R: np.ndarray) -> list[int]:
    if wl.size < 3:
        return []
    interior = (R[1:-1] < R[:-2]) & (R[1:-1] <= R[2:])
    return list(np.nonzero(interior)[0] + 1)


def _local_halfwidth(stack: LayerStack, centre: float, r_min: float, top: float, span: float) -> float:
    """Half-width at half depth of a dip, probing geometric offsets."""
    level = 0.5 * (top + r_min)
    offsets = span * 2.0 ** -np.arange(0, 48)[::-1]
    for side in (1.0, -1.0):
        r, _ = rt_left_incidence(stack, centre + side * offsets)
        above = np.nonzero(np.abs(r) ** 2 >= level)[0]
        if above.size:
            k = above[0]
            lo = offsets[k - 1] if k > 0 else 0.0
            g = lambda x: abs(rt_left_incidence(stack, centre + side * x)[0]) ** 2 - level  # noqa: E731
            try:
                return float(optimize.brentq(g, lo, offsets[k], xtol=1e-15))
            except ValueError:
                return float(offsets[k])
    return span


def reflection_spectrum(
    stack: LayerStack,
    wl_min: float,
    wl_max: float,
    n_samples: int,
    refine: bool = True,
    samples_per_linewidth: int = 50,
) -> Spectrum:
    """Uniform spectrum plus dense samples around every detected dip.

    Around each dip at least ``samples_per_linewidth`` samples land inside
    the full width at half depth, over a +/-5 linewidth window.
    """
    if not wl_min < wl_max:
        raise ValueError("need wl_min < wl_max")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    wl = np.linspace(wl_min, wl_max, n_samples)
    spec = evaluate_spectrum(stack, wl)
    if not refine:
        return spec
    step = (wl_max - wl_min) / (n_samples - 1)
    centres = []
    for res in find_resonances(stack, wl_min, wl_max, n_coarse=max(201, min(n_samples, 4001))):
        centres.append(res.wavelength)
    R = spec.R
    for i in _dip_candidates(wl, R):
        centres.append(float(wl[i]))
    extra = []
    for c in sorted(set(centres)):
        lo, hi = max(wl_min, c - step), min(wl_max, c + step)
        fr = lambda x: abs(rt_left_incidence(stack, x)[0]) ** 2  # noqa: E731
        opt = optimize.minimize_scalar(fr, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        centre = float(opt.x)
        r_min = float(opt.fun)
        j = int(np.searchsorted(wl, centre))
        near = R[max(0, j - 3) : j + 3]
        top = float(max(near.max(), fr(centre + step), fr(centre - step)))
        if top - r_min < 1e-6:
            continue
        hw = _local_halfwidth(stack, centre, r_min, top, step)
        fwhm = 2.0 * hw
        npts = 10 * samples_per_linewidth + 1
        local = np.linspace(centre - 5 * fwhm, centre + 5 * fwhm, npts)
        extra.append(local[(local > wl_min) & (local < wl_max)])
    if not extra:
        return spec
    all_wl = np.unique(np.concatenate([wl] + extra))
    return evaluate_spectrum(stack, all_wl)
