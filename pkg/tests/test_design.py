import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncfcavity.design import (
    CALIBRATION,
    CavityDesign,
    EffectiveIndexProfile,
    LayerStack,
    Polarization,
    bragg_wavelength,
    build_stack,
    detune_design,
    effective_indices,
    load_design,
    save_design,
)


def test_defaults():
    d = CavityDesign()
    assert (d.grating_period, d.slat_thickness, d.defect_width) == (244.0, 36.6, 366.0)
    assert (d.n_slats_input, d.n_slats_output) == (150, 400)
    assert d.polarization_profile is Polarization.YPOL


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(slat_thickness=40.0),
        dict(defect_width=300.0),
        dict(n_slats_input=-1),
        dict(n_slats_output=2.5),
        dict(duty_cycle=1.0, slat_thickness=244.0),
        dict(grating_period=0.0),
        dict(polarization_profile="zpol"),
    ],
)
def test_invalid_designs_rejected(kwargs):
    with pytest.raises(ValueError):
        CavityDesign(**kwargs)


def test_from_period_and_with_period_keep_invariants():
    d = CavityDesign.from_period(250.0, 0.2)
    assert d.slat_thickness == pytest.approx(50.0) and d.defect_width == pytest.approx(375.0)
    e = CavityDesign().with_period(240.0)
    assert e.slat_thickness == pytest.approx(36.0) and e.defect_width == pytest.approx(360.0)


def test_design_json_round_trip(tmp_path):
    d = CavityDesign(n_slats_input=210, polarization_profile="xpol")
    path = tmp_path / "d.json"
    save_design(d, path)
    assert load_design(path) == d
    assert json.loads(path.read_text())["polarization_profile"] == "XPol"


def test_unknown_design_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grating_period": 244.0, "colour": "red"}))
    with pytest.raises(ValueError, match="colour"):
        load_design(path)


def test_mean_index_from_bragg_condition():
    prof = effective_indices(CavityDesign())
    assert prof.mean_index(0.15) == pytest.approx(620 / (2 * 244), abs=5e-6)
    assert prof.mean_index(0.15) == pytest.approx(1.27049, abs=1e-5)
    assert bragg_wavelength(CavityDesign(), prof) == pytest.approx(620.0)
    xp = CavityDesign(polarization_profile="XPol")
    assert bragg_wavelength(xp, effective_indices(xp)) == pytest.approx(619.0)


def test_ypol_modulation_exceeds_xpol():
    assert CALIBRATION[Polarization.YPOL].index_contrast > CALIBRATION[Polarization.XPOL].index_contrast
    y = effective_indices(CavityDesign())
    x = effective_indices(CavityDesign(polarization_profile="XPol"))
    assert y.contrast > x.contrast


def test_loss_sign_and_overrides():
    prof = effective_indices(CavityDesign(), slat_loss=1e-3, unguided_ratio=0.0)
    assert prof.n_slat.imag == 1e-3 and prof.n_base.imag == 0
    assert prof.unguided_ratio == 0.0
    assert prof.lossless().n_slat.imag == 0
    assert prof.with_slat_loss(2e-3).n_slat.imag == 2e-3


def test_subvacuum_media_rejected():
    with pytest.raises(ValueError):
        effective_indices(CavityDesign(n_water=0.9))
    with pytest.raises(ValueError):
        EffectiveIndexProfile(0.9, 1.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        EffectiveIndexProfile(1.3, 1.2, 1.0, 1.0)


def test_default_stack_geometry():
    d = CavityDesign()
    stack = build_stack(d)
    assert len(stack) == 1101
    assert stack.length == pytest.approx(550 * 244 + 366, abs=1e-7)
    prof = effective_indices(d)
    # an interior period of the input mirror: slat then bare base
    assert stack.thickness[1] == pytest.approx(36.6) and stack.index[1] == prof.n_slat
    assert stack.thickness[2] == pytest.approx(207.4) and stack.index[2] == prof.n_base
    assert stack.source_plane == pytest.approx(150 * 244 + 183)


@given(st.integers(0, 60), st.integers(0, 60), st.floats(230.0, 260.0), st.floats(0.05, 0.3))
def test_stack_counts_and_length(n_in, n_out, period, duty):
    d = CavityDesign.from_period(period, duty, n_slats_input=n_in, n_slats_output=n_out)
    stack = build_stack(d)
    assert len(stack) == 2 * (n_in + n_out) + 1
    assert stack.length == pytest.approx((n_in + n_out) * period + 1.5 * period, rel=1e-12)
    slats = np.isclose(stack.thickness, duty * period) & (stack.index.real > stack.index[0].real)
    assert slats.sum() == n_in + n_out


def test_symmetric_design_mirror_symmetric_about_source():
    stack = build_stack(CavityDesign(n_slats_input=37, n_slats_output=37))
    rev = stack.reversed()
    np.testing.assert_allclose(rev.thickness, stack.thickness, rtol=1e-12)
    assert np.array_equal(rev.index, stack.index)
    assert rev.source_plane == pytest.approx(stack.source_plane)


def test_source_at_defect_centre():
    stack = build_stack(CavityDesign(n_slats_input=3, n_slats_output=5))
    j = int(np.argmax(stack.thickness))
    edges = stack.interfaces
    assert stack.source_plane == pytest.approx(0.5 * (edges[j] + edges[j + 1]))


@pytest.mark.parametrize("delta, period", [(0.0, 244.0), (10.0, 247.935), (-10.0, 240.065)])
def test_detuning_rescales_period(delta, period):
    d = detune_design(CavityDesign(), delta)
    assert d.grating_period == pytest.approx(period, abs=5e-4)
    prof = effective_indices(d)
    assert bragg_wavelength(d, prof) == pytest.approx(620.0 + delta)
    if delta == 0:
        assert d == CavityDesign()


def test_detuning_limit():
    with pytest.raises(ValueError):
        detune_design(CavityDesign(), 10.5)


def test_layer_stack_validation():
    with pytest.raises(ValueError):
        LayerStack([1.0, 2.0], [1.5], 1, 1)
    with pytest.raises(ValueError):
        LayerStack([-1.0], [1.5], 1, 1)
    with pytest.raises(ValueError):
        LayerStack([10.0], [1.5], 1, 1, source_plane=11.0)
    s = LayerStack.from_layers([(10.0, 1.5), (5.0, 2 + 0.1j)], 1.0, 1.2, 3.0)
    assert s.layers == [(10.0, 1.5 + 0j), (5.0, 2 + 0.1j)]
    assert not s.is_lossless and s.lossless().is_lossless
    assert s.reversed().reversed() == s
