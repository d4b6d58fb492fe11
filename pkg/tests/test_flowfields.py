import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dropevap import flowfields as ff
from dropevap.verify import LeakyFlow

RHO_G = 1.06


def acoustic(spl=166.0):
    return ff.Acoustic(ff.spl_to_amplitude(spl), RHO_G)


def test_spl_conversions():
    assert ff.spl_to_amplitude(94.0) == 1.0
    assert ff.spl_to_amplitude(164.0) == pytest.approx(10**3.5, rel=1e-14)
    assert abs(ff.spl_to_amplitude(164.0) - 3162.3) < 0.1
    A = 2500.0
    assert ff.spl_to_amplitude(ff.amplitude_to_spl(A)) == pytest.approx(A, rel=1e-12)
    with pytest.raises(ValueError):
        ff.amplitude_to_spl(0.0)


def test_stokes_reference_value():
    vt, _ = ff.Stokes(1.0).eval(math.pi / 2, 2.0)
    assert vt == pytest.approx(-0.59375, rel=1e-15)


@pytest.mark.parametrize("model", [ff.Stagnant(), ff.Stokes(0.8), acoustic()])
def test_tangency_exact(model):
    th = np.linspace(0.0, math.pi, 257)
    _, vr = model.eval(th, np.ones_like(th), 6e-4)
    assert np.all(vr == 0.0)


def test_stagnant_is_zero(desk_grid):
    th, r = desk_grid.centers()
    vt, vr = ff.Stagnant().eval(th, r)
    assert not vt.any() and not vr.any()
    assert ff.check_divergence(ff.Stagnant(), desk_grid) == 0.0


def test_divergence_free_on_default_grid(desk_grid):
    assert ff.check_divergence(ff.Stokes(0.8), desk_grid) <= 1e-6
    assert ff.check_divergence(acoustic(), desk_grid, R=6.2e-4) <= 1e-6


def test_leaky_flow_flagged(desk_grid):
    assert ff.check_divergence(LeakyFlow(), desk_grid) > 1e-6


def test_stokes_far_field():
    th = np.linspace(0, math.pi, 50)
    r = 50.0
    vt, vr = ff.Stokes(1.0).eval(th, r)
    # polar tail 3/(4r) + 1/(4r^3) stays under 2 %
    assert np.max(np.abs(vt + np.sin(th))) <= 0.02
    # radial tail is twice as large: exactly (3/(2r) - 1/(2r^3)) |cos theta|
    tail = 1.5 / r - 0.5 / r**3
    assert np.allclose(np.abs(vr - np.cos(th)), tail * np.abs(np.cos(th)), rtol=1e-12, atol=1e-15)


def test_stokes_independent_of_radius(desk_grid):
    assert ff.lipschitz_in_R(ff.Stokes(0.4), 6e-4, 1e-4, desk_grid) == 0.0


def test_acoustic_lipschitz_against_closed_form(desk_grid):
    m = acoustic()
    R1 = 6e-4
    assert ff.lipschitz_in_R(m, R1, R1, desk_grid) == 0.0
    ref = ff.acoustic_lipschitz_oracle(m, R1, desk_grid)
    ratios = [ff.lipschitz_in_R(m, R1, R2, desk_grid) / abs(R1 - R2)
              for R2 in (5.9e-4, 5.99e-4, 5.999e-4)]
    for q in ratios:
        assert 1 / 1.1 <= q / ref <= 1.1
    assert abs(ratios[-1] / ref - 1) < abs(ratios[0] / ref - 1)


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0.05, 3.09), r=st.floats(1.0, 50.0), R=st.floats(1e-5, 1e-2),
       A=st.floats(10.0, 1e4))
def test_acoustic_scaling_identities(theta, r, R, A):
    a = ff.Acoustic(A, RHO_G)
    b = ff.Acoustic(2 * A, RHO_G)
    va = np.array(a.eval(theta, r, R))
    vb = np.array(b.eval(theta, r, R))
    vR = np.array(a.eval(theta, r, 2 * R))
    assert np.allclose(vb, 4 * va, rtol=1e-13, atol=0)
    assert np.allclose(vR, 0.5 * va, rtol=1e-13, atol=0)


def test_acoustic_needs_radius():
    with pytest.raises(ValueError):
        acoustic().eval(0.3, 2.0, 0.0)


def test_model_from_dict():
    assert isinstance(ff.model_from_dict({"kind": "stagnant"}, RHO_G), ff.Stagnant)
    s = ff.model_from_dict({"kind": "stokes", "V_inf_m_per_s": 0.4}, RHO_G)
    assert s.V_inf == 0.4
    a = ff.model_from_dict({"kind": "acoustic", "SPL_dB": 164.0}, RHO_G)
    assert a.A == pytest.approx(10**3.5) and a.omega == pytest.approx(2 * math.pi * 58e3)
    assert a.c0 == 343.0
    assert a.describe()["SPL_dB"] == pytest.approx(164.0)
    with pytest.raises(ValueError):
        ff.model_from_dict({"kind": "acoustic", "SPL_dB": 164.0, "A_Pa": 1.0}, RHO_G)
    with pytest.raises(ValueError):
        ff.model_from_dict({"kind": "swirl"}, RHO_G)
