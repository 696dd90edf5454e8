import numpy as np
import pytest

from hfblowup.grid import Grid, boundary_mass
from hfblowup.initial import (
    CONTAIN_TOL,
    InitialDataError,
    Shell,
    ShellSpec,
    critical_coupling,
    dilate,
    hypothesis_checklist,
    prepare_negative_energy,
    shell_state,
)
from hfblowup.observables import angular_momentum_sq, energy, particle_number
from hfblowup.orbitals import OrbitalSet, SingularGramError, angular_anisotropy, density, gram, gram_drift

from conftest import gaussian_field, normalized, shells_unchecked


@pytest.fixture(scope="module")
def g48():
    return Grid(48, 24.0, 1.0)


@pytest.fixture(scope="module")
def sp48(g48):
    return shell_state(ShellSpec((Shell(0, scale=2.0), Shell(1, scale=2.0))), g48)


def test_single_s_shell(g48):
    S = shell_state(ShellSpec((Shell(0, scale=2.0),)), g48)
    assert S.N == 1
    assert angular_momentum_sq(S) < 1e-8


def test_s_plus_p_shell(sp48, g48):
    assert sp48.N == 4
    assert angular_momentum_sq(sp48) == pytest.approx(6.0, abs=1e-5)
    assert np.max(np.abs(gram(sp48) - np.eye(4))) <= 1e-10
    assert angular_anisotropy(density(sp48), g48, method="exact") <= 1e-6
    # default scale L/12 stays inside the containment budget
    assert boundary_mass(density(sp48), g48, 0.8) <= CONTAIN_TOL * sp48.N


def test_spd_shells_angular_momentum():
    g = Grid(64, 24.0, 1.0)
    spec = ShellSpec((Shell(0, scale=2.0), Shell(1, scale=2.0), Shell(2, scale=1.6)))
    S = shell_state(spec, g)
    assert S.N == spec.N == 9
    assert angular_momentum_sq(S) == pytest.approx(spec.L2, abs=1e-5)
    assert spec.L2 == 6 + 30


def test_two_identical_s_shells_singular(g48):
    with pytest.raises(SingularGramError):
        shell_state(ShellSpec((Shell(0, scale=2.0), Shell(0, scale=2.0))), g48)


def test_profile_guards(g48):
    with pytest.raises(InitialDataError, match="scale/h"):
        shell_state(ShellSpec((Shell(0, scale=1.0),)), g48)
    with pytest.raises(InitialDataError, match="scale/L"):
        shell_state(ShellSpec((Shell(0, scale=4.0),)), g48)
    # exponential tails at L/12 reach the seam
    with pytest.raises(InitialDataError, match="not contained"):
        shell_state(ShellSpec((Shell(0, "exponential", 2.0),)), g48)
    with pytest.raises(InitialDataError):
        ShellSpec.from_dicts([{"l": 0, "profile": "lorentzian"}])
    with pytest.raises(InitialDataError):
        Shell(-1)
    with pytest.raises(InitialDataError, match="empty"):
        shell_state(ShellSpec(()), g48)


def test_other_profiles_build():
    g = Grid(64, 24.0, 1.0)
    S = shell_state(ShellSpec((Shell(0, "poly_gaussian", 1.5, degree=1), Shell(1, scale=1.5))), g)
    assert gram_drift(S) <= 1e-10
    fine = Grid(128, 24.0, 1.0)
    E = shell_state(ShellSpec((Shell(0, "exponential", 0.75),)), fine)
    assert particle_number(E) == pytest.approx(1.0, abs=1e-10)


def test_dilate_examples(g48, sp48):
    same = dilate(sp48, 1.0)
    assert np.array_equal(same.psi, sp48.psi)
    g = Grid(64, 24.0, 1.0)
    S = shell_state(ShellSpec((Shell(0, scale=2.0), Shell(1, scale=2.0))), g)
    D2 = dilate(S, 2.0)
    norms = np.sum(np.abs(D2.psi) ** 2, axis=(1, 2, 3)) * g.dv
    assert np.allclose(norms, 1.0, atol=1e-8)
    assert angular_anisotropy(density(D2), g, method="exact") <= 1e-6
    assert angular_momentum_sq(D2) == pytest.approx(6.0, abs=1e-5)


def test_dilate_massless_kinetic_scaling():
    g = Grid(64, 24.0, 0.0)
    S = shells_unchecked(g, 2.0)
    assert energy(dilate(S, 2.0)).T == pytest.approx(2.0 * energy(S).T, rel=1e-3)


def test_dilate_rejections(sp48):
    with pytest.raises(InitialDataError, match="positive"):
        dilate(sp48, 0.0)
    with pytest.raises(InitialDataError, match="unresolved"):
        dilate(sp48, 8.0)
    with pytest.raises(InitialDataError, match="not contained"):
        dilate(sp48, 0.25)


def test_critical_coupling(g48, sp48):
    one = shell_state(ShellSpec((Shell(0, scale=2.0),)), g48)
    with pytest.raises(InitialDataError, match="critical coupling"):
        critical_coupling(one)
    ks = critical_coupling(sp48)
    T = energy(sp48).T
    assert abs(energy(sp48.replace(kappa=ks)).E_hf) <= 1e-8 * T
    assert energy(sp48.replace(kappa=2 * ks)).E_hf == pytest.approx(-T, rel=1e-8)
    for k in np.linspace(0.5 * ks, 1.5 * ks, 11):
        if abs(k - ks) > 1e-9 * ks:
            assert np.sign(energy(sp48.replace(kappa=k)).E_hf) == np.sign(ks - k)


def test_prepare_negative_energy(g48):
    spec = ShellSpec((Shell(0, scale=2.0), Shell(1, scale=2.0)))
    S, kappa, hyp = prepare_negative_energy(spec, g48, margin=1.0)
    assert kappa == pytest.approx(2 * hyp.kappa_star, rel=1e-14)
    assert S.kappa == kappa
    assert hyp.E_hf == pytest.approx(-hyp.T, rel=1e-8)
    assert hyp.ok
    assert set(hyp.checks) >= {"negative_energy", "spherical_symmetry", "finite_L2", "finite_x4", "finite_kinetic"}
    with pytest.raises(InitialDataError, match="strictly negative"):
        prepare_negative_energy(spec, g48, margin=0.0)


def test_checklist_flags_positive_energy(sp48):
    hyp = hypothesis_checklist(sp48.replace(kappa=0.1))
    assert not hyp.checks["negative_energy"] and not hyp.ok
    assert hyp.checks["spherical_symmetry"]
    assert np.isnan(hyp.kappa_star)


def test_checklist_flags_anisotropy(g48):
    f = normalized(gaussian_field(g48, 2.0, (1.0, 0.0, 0.0)), g48)
    hyp = hypothesis_checklist(OrbitalSet([f], g48))
    assert not hyp.checks["spherical_symmetry"]
