import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncfcavity.analysis import analyze_spectrum
from ncfcavity.design import CavityDesign, LayerStack, build_stack, effective_indices
from ncfcavity.tmm import (
    Spectrum,
    TransferMatrix,
    evaluate_spectrum,
    find_resonances,
    intensity_profile,
    mirror_coefficients,
    reflection_spectrum,
    rt_left_incidence,
    rt_right_incidence,
    split_at_source,
    stack_matrix,
)

from oracles import (
    fd_scattering_R,
    lossless_stacks,
    lossy_stacks,
    quarter_wave_reflectance,
    rouard_rt,
    slab_r,
    wavelength,
)


def test_empty_stack_is_identity():
    m = stack_matrix(LayerStack([], [], 1.3, 1.3), 600.0)
    np.testing.assert_allclose(m.as_array(), np.eye(2), atol=1e-15)


def test_single_interface_fresnel():
    r, t = rt_left_incidence(LayerStack([], [], 1.0, 1.5), 777.0)
    assert r == pytest.approx(-0.2)
    assert abs(r) ** 2 == pytest.approx(0.04)
    assert 1.5 * abs(t) ** 2 == pytest.approx(0.96)


def test_half_wave_layer_is_invisible():
    wl, n = 620.0, 2.2
    r, _ = rt_left_incidence(LayerStack([wl / (2 * n)], [n], 1.4, 1.4), wl)
    assert abs(r) < 1e-14


def test_magnetic_wall_reflects_plus_one():
    r, _ = rt_left_incidence(LayerStack([], [], 1.2, 0.0), 600.0)
    assert r == pytest.approx(1.0)


@pytest.mark.parametrize("pairs", [1, 3, 8, 20])
def test_quarter_wave_mirror_matches_closed_form(pairs):
    wl, nh, nl, n0, ns = 800.0, 2.3, 1.45, 1.0, 1.52
    d = [wl / (4 * nh), wl / (4 * nl)] * pairs
    n = [nh, nl] * pairs
    r, _ = rt_left_incidence(LayerStack(d, n, n0, ns), wl)
    assert abs(r) ** 2 == pytest.approx(quarter_wave_reflectance(nh, nl, pairs, n0, ns), rel=1e-12)


def test_slab_matches_airy_formula():
    wls = np.linspace(500, 900, 41)
    r, _ = rt_left_incidence(LayerStack([310.0], [1.9 + 0.01j], 1.2, 1.2), wls)
    np.testing.assert_allclose(r, slab_r(1.9 + 0.01j, 310.0, 1.2, wls), rtol=1e-12)


@given(lossy_stacks(), wavelength)
def test_agrees_with_rouard_recursion(stack, wl):
    r, t = rt_left_incidence(stack, wl)
    r_ref, t_ref = rouard_rt(stack.thickness, stack.index, stack.n_left, stack.n_right, wl)
    assert abs(r - r_ref) < 1e-9
    assert abs(t - t_ref) < 1e-9 * max(1.0, abs(t_ref))


@given(lossless_stacks(), wavelength)
def test_energy_conservation(stack, wl):
    spec = evaluate_spectrum(stack, [wl])
    assert abs(spec.R[0] + spec.T[0] - 1.0) < 1e-9


@given(lossy_stacks(), wavelength)
def test_passivity(stack, wl):
    spec = evaluate_spectrum(stack, [wl])
    assert spec.R[0] + spec.T[0] <= 1.0 + 1e-9


@given(lossy_stacks(), wavelength)
def test_transmissivity_reciprocity(stack, wl):
    _, t = rt_left_incidence(stack, wl)
    _, tp = rt_right_incidence(stack, wl)
    fwd = stack.n_right / stack.n_left * abs(t) ** 2
    bwd = stack.n_left / stack.n_right * abs(tp) ** 2
    assert abs(fwd - bwd) <= 1e-10 * max(1.0, fwd)


@given(lossy_stacks(), wavelength)
def test_reversed_stack_right_incidence(stack, wl):
    r_rev, _ = rt_left_incidence(stack.reversed(), wl)
    r_right, _ = rt_right_incidence(stack, wl)
    assert abs(r_rev - r_right) < 1e-9


@given(lossless_stacks(), wavelength)
def test_reversed_lossless_same_reflectance(stack, wl):
    r, _ = rt_left_incidence(stack, wl)
    r_rev, _ = rt_left_incidence(stack.reversed(), wl)
    assert abs(abs(r) - abs(r_rev)) < 1e-9


@given(lossy_stacks(), wavelength)
def test_determinant(stack, wl):
    m = stack_matrix(stack, wl)
    assert abs(m.det - stack.n_right / stack.n_left) < 1e-9 * max(1.0, abs(m.m11 * m.m22))


@given(lossy_stacks(max_layers=20), st.data(), wavelength, st.floats(1.0, 3.0))
def test_composition(stack, data, wl, n_mid):
    cut = data.draw(st.integers(0, len(stack)))
    a = LayerStack(stack.thickness[:cut], stack.index[:cut], stack.n_left, n_mid)
    b = LayerStack(stack.thickness[cut:], stack.index[cut:], n_mid, stack.n_right)
    whole = stack_matrix(stack, wl).as_array()
    parts = (stack_matrix(a, wl) @ stack_matrix(b, wl)).as_array()
    assert np.max(np.abs(whole - parts)) <= 1e-10 * np.max(np.abs(whole))


def test_repeated_units_match_layer_by_layer():
    stack = build_stack(CavityDesign(n_slats_input=40, n_slats_output=60))
    wl = np.linspace(610, 630, 7)
    r, t = rt_left_incidence(stack, wl)
    for i, x in enumerate(wl):
        r_ref, t_ref = rouard_rt(stack.thickness, stack.index, stack.n_left, stack.n_right, x)
        assert abs(r[i] - r_ref) < 1e-9
        assert abs(t[i] - t_ref) < 1e-9


def test_scalar_and_array_wavelengths_agree():
    stack = LayerStack([100.0, 50.0], [2.0, 1.5 + 0.1j], 1.0, 1.3)
    r_arr, _ = rt_left_incidence(stack, np.array([500.0, 600.0]))
    r_one, _ = rt_left_incidence(stack, 600.0)
    assert r_arr[1] == r_one
    assert isinstance(stack_matrix(stack, 600.0), TransferMatrix)


def test_nonpositive_wavelength_rejected():
    with pytest.raises(ValueError):
        rt_left_incidence(LayerStack([1.0], [1.5], 1, 1), 0.0)


def test_finite_difference_oracle_twenty_stacks():
    rng = np.random.default_rng(20)
    for _ in range(20):
        n = int(rng.integers(1, 11))
        d, idx = rng.uniform(10, 500, n), rng.uniform(1, 3, n)
        nl, nr = rng.uniform(1, 2, 2)
        wl = rng.uniform(400, 1600)
        r, _ = rt_left_incidence(LayerStack(d, idx, nl, nr), wl)
        assert abs(abs(r) ** 2 - fd_scattering_R(d, idx, nl, nr, wl)) < 1e-3


# -- spectra of the cavity --------------------------------------------------


@pytest.fixture(scope="module")
def default_stack():
    return build_stack(CavityDesign())


def test_spectrum_conserves_energy_when_lossless(default_stack):
    spec = reflection_spectrum(default_stack.lossless(), 600, 640, 801)
    assert np.max(np.abs(spec.R + spec.T - 1)) < 1e-9


def test_dip_is_at_design_resonance():
    spec = reflection_spectrum(build_stack(CavityDesign(n_slats_input=220)), 600, 640, 2001)
    fit = analyze_spectrum(spec)
    assert abs(fit.lambda0 - 620.0) < 0.5


def test_refinement_puts_fifty_samples_in_a_linewidth(default_stack):
    spec = reflection_spectrum(default_stack, 600, 640, 401)
    fit = analyze_spectrum(spec)
    inside = np.abs(spec.wavelengths - fit.lambda0) <= fit.delta_lambda / 2
    assert inside.sum() >= 50
    assert len(reflection_spectrum(default_stack, 600, 640, 401, refine=False)) == 401


def test_undercoupled_dip_shallower_than_critical():
    r0 = {}
    for n_in in (220, 340):
        fit = analyze_spectrum(reflection_spectrum(build_stack(CavityDesign(n_slats_input=n_in)), 610, 630, 801))
        r0[n_in] = fit.r0
    assert r0[340] > r0[220]


def test_spectrum_window_and_csv(tmp_path, default_stack):
    spec = evaluate_spectrum(default_stack, np.linspace(610, 630, 5))
    part = spec.window(615, 625)
    assert isinstance(part, Spectrum) and len(part) == 3
    path = tmp_path / "s.csv"
    spec.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "wavelength_nm,R,T,re_r,im_r,re_t,im_t"
    assert len(lines) == 6


# -- mirror decomposition ---------------------------------------------------


def test_no_input_mirror_gives_fresnel_at_boundary():
    design = CavityDesign(n_slats_input=0)
    prof = effective_indices(design)
    stack = build_stack(design, prof)
    mc = mirror_coefficients(stack, 620.0)
    n_def, n_ext = prof.n_base, stack.n_left
    assert abs(mc.r_left_boundary - (n_def - n_ext) / (n_def + n_ext)) < 1e-12


def test_symmetric_stack_symmetric_mirrors():
    stack = build_stack(CavityDesign(n_slats_input=120, n_slats_output=120))
    mc = mirror_coefficients(stack, 619.3)
    assert abs(mc.r_left - mc.r_right) < 1e-10
    assert abs(mc.phase_left - mc.phase_right) < 1e-10


def test_output_mirror_stronger_by_default(default_stack):
    mc = mirror_coefficients(default_stack, 620.0)
    assert abs(mc.r_right) > abs(mc.r_left)


def test_source_outside_any_layer_rejected():
    stack = LayerStack([100.0, 100.0], [1.5, 1.6], 1, 1, source_plane=100.0)
    with pytest.raises(ValueError):
        split_at_source(stack)


# -- intensity profiles ----------------------------------------------------


def test_uniform_medium_flat_profile():
    z, inten = intensity_profile(LayerStack([300.0, 200.0], [1.4, 1.4], 1.4, 1.4), 600.0)
    assert np.allclose(inten, 1.0)


def test_on_resonance_peak_in_defect():
    stack = build_stack(CavityDesign(n_slats_input=100, n_slats_output=100).replace())
    res = max(find_resonances(stack, 610, 630), key=lambda m: m.round_trip)
    z, inten = intensity_profile(stack, res.wavelength, "source")
    zpk = z[np.argmax(inten)]
    assert abs(zpk - stack.source_plane) < CavityDesign().defect_width / 2
    assert len(z) >= 8 * len(stack)


def test_off_resonance_weak_interior(default_stack):
    res = max(find_resonances(default_stack, 610, 630), key=lambda m: m.round_trip)
    for side, expect_strong in ((res.wavelength, True), (res.wavelength + 20, False)):
        z, inten = intensity_profile(default_stack, side, "left", padding=200.0)
        exterior = np.max(inten[z < 0])
        interior = np.max(inten[(z > 0) & (z < default_stack.length)])
        assert (interior > 10 * exterior) == expect_strong
