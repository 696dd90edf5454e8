import numpy as np
import pytest
from scipy.integrate import quad

from hfblowup.analysis import virial_identity_residuals
from hfblowup.grid import Grid, apply_multiplier, gradient
from hfblowup.hamiltonian import pair_potentials
from hfblowup.initial import dilate
from hfblowup.integrator import IntegratorConfig, evolve
from hfblowup.observables import (
    ObservableRecord,
    angular_momentum_components,
    angular_momentum_sq,
    concentration,
    dilation,
    energy,
    kinetic_p2,
    m_virial,
    observe,
    particle_number,
    sobolev_half,
    virial_rhs,
)
from hfblowup.orbitals import OrbitalSet

from conftest import gaussian_field, normalized, plane_wave, random_localized, shells_unchecked


def test_single_orbital_direct_equals_exchange(grid32):
    f = normalized(gaussian_field(grid32, 1.4, (0.5, -0.3, 0.0)), grid32)
    for kappa in (0.0, 1.0, 25.0):
        T, D, X, E = energy(OrbitalSet([f], grid32, kappa=kappa))
        assert D == pytest.approx(X, rel=1e-12)
        assert E == pytest.approx(T, rel=1e-12)


def test_plane_wave_energy():
    g = Grid(16, 2 * np.pi, 0.5)
    S = OrbitalSet([plane_wave(g, (0, 3, 1))], g)
    assert energy(S).E_hf == pytest.approx(np.sqrt(10 + 0.25), rel=1e-12)
    assert sobolev_half(S) == pytest.approx(np.sqrt(11.0), rel=1e-12)


@pytest.mark.parametrize("m", [1.0, 3.0])
def test_kinetic_matches_radial_quadrature(m):
    # periodic images enter through kernel tails ~ exp(-m L); L = 24 keeps them below 1e-10
    g = Grid(48, 24.0, m)
    sigma = 1.5
    S = OrbitalSet([normalized(gaussian_field(g, sigma), g)], g)
    # |psi^(k)|^2 is proportional to exp(-sigma^2 k^2)
    w = lambda k: k**2 * np.exp(-(sigma**2) * k**2)  # noqa: E731
    num = quad(lambda k: w(k) * np.sqrt(k**2 + m**2), 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    den = quad(w, 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    assert energy(S).T == pytest.approx(num / den, rel=1e-9)


def test_angular_momentum_shells(grid32, sp32):
    s_only = shells_unchecked(grid32, 1.5, ls=(0,))
    assert angular_momentum_sq(s_only) < 1e-8
    p_only = shells_unchecked(grid32, 1.5, ls=(1,))
    assert angular_momentum_sq(p_only) == pytest.approx(6.0, abs=1e-6)
    assert angular_momentum_sq(sp32) == pytest.approx(6.0, abs=1e-6)


def test_angular_momentum_reversed_order(grid32, rng):
    """L = x ^ p equals -p ^ x since only commuting pairs enter each component."""
    S = OrbitalSet(random_localized(grid32, 2, rng, sigma=1.2), grid32, validate=False)
    x, y, z = grid32.coords
    d = lambda f, a: gradient(f, grid32)[a]  # noqa: E731
    rev = []
    for psi in S.psi:
        rev.append(
            (
                -1j * (d(y * psi, 2) - d(z * psi, 1)),
                -1j * (d(z * psi, 0) - d(x * psi, 2)),
                -1j * (d(x * psi, 1) - d(y * psi, 0)),
            )
        )
    direct = angular_momentum_components(S)
    total = sum(np.sum(np.abs(c) ** 2) for comps in rev for c in comps) * grid32.dv
    assert angular_momentum_sq(S) == pytest.approx(total, rel=1e-8)
    for a in range(3):
        for j in range(2):
            assert np.max(np.abs(direct[a][j] - rev[j][a])) < 1e-8 * np.max(np.abs(direct[a][j]))


def test_m_virial_nonrelativistic_limit():
    g = Grid(32, 16.0, 100.0)
    sigma = 1.0
    f = normalized(gaussian_field(g, sigma), g)
    S = OrbitalSet([f], g)
    x2 = float(np.sum(g.r**2 * f**2) * g.dv)
    assert x2 == pytest.approx(3 * sigma**2 / 2, rel=1e-8)
    assert m_virial(S) == pytest.approx(100.0 * x2, rel=1e-2)
    assert m_virial(S) >= 0


def test_m_virial_massless_dilation_scaling():
    g = Grid(64, 24.0, 0.0)
    S = OrbitalSet([normalized(gaussian_field(g, 2.0), g)], g)
    lam = 2.0
    assert m_virial(dilate(S, lam)) == pytest.approx(m_virial(S) / lam, rel=1e-3)


def test_dilation_examples(grid32, sp32):
    assert abs(dilation(sp32)) < 1e-10
    phi = normalized(gaussian_field(grid32, 1.5), grid32)
    b = 0.05
    S = OrbitalSet([phi * np.exp(1j * b * grid32.r**2)], grid32)
    x2 = float(np.sum(grid32.r**2 * phi**2) * grid32.dv)
    assert dilation(S) == pytest.approx(4 * b * x2, rel=1e-8)


def test_free_dilation_derivative_is_twice_tp2():
    g = Grid(48, 24.0, 1.0)
    S = shells_unchecked(g, 1.5, mode="free")
    eps = 1e-3

    def at(t):
        phase = np.exp(-1j * t * g.symbol("dispersion").values)
        return dilation(S.replace(psi=g.ifft(g.fft(S.psi) * phase)))

    fd = (at(eps) - at(-eps)) / (2 * eps)
    assert fd == pytest.approx(2 * kinetic_p2(S), rel=1e-6)
    assert kinetic_p2(S) > 0


def test_virial_rhs_examples(grid32, sp32):
    free = sp32.replace(mode="hartree-fock", kappa=0.0)
    assert virial_rhs(free).value == pytest.approx(2 * kinetic_p2(free), rel=1e-14)
    g0 = Grid(32, 16.0, 0.0)
    S0 = shells_unchecked(g0, 1.5)
    assert virial_rhs(S0).value == pytest.approx(2 * energy(S0).T, rel=1e-12)
    S = sp32.replace(kappa=4.0)
    T, D, X, E = energy(S)
    vr = virial_rhs(S)
    assert vr.value == pytest.approx(2 * kinetic_p2(S) - 4.0 * D + 4.0 * X, rel=1e-12)
    assert vr.value <= 2 * E + 1e-8
    assert vr.gap == pytest.approx(2 * (T - kinetic_p2(S)), rel=1e-10)
    assert vr.gap >= vr.gap_lower_bound > 0


def _dilation_rate(S, psidot):
    g = S.grid

    def x_grad(f):
        return sum(c * d for c, d in zip(g.coords, gradient(f, g)))

    return 2.0 * np.imag(np.vdot(psidot, x_grad(S.psi)) + np.vdot(S.psi, x_grad(psidot))) * g.dv


def _rate_split(n, L):
    """Semi-discrete dA/dt per term minus its closed form: (kinetic, direct, exchange, scale)."""
    g = Grid(n, L, 1.0)
    S = shells_unchecked(g, L / 12).replace(kappa=2.0)
    P = pair_potentials(S)
    T_psi = apply_multiplier(S.psi, g.symbol("dispersion"))
    X_psi = np.array([sum(P.get(i, j) * S.psi[i] for i in range(S.N)) for j in range(S.N)])
    _, D, X, _ = energy(S)
    tp2 = kinetic_p2(S)
    kin = _dilation_rate(S, -1j * T_psi) - 2 * tp2
    direct = _dilation_rate(S, 1j * S.kappa * P.direct * S.psi) + S.kappa * D
    exch = _dilation_rate(S, -1j * S.kappa * X_psi) - S.kappa * X
    return kin, direct, exch, 2 * tp2


def test_virial_rhs_matches_semidiscrete_rate():
    # interaction terms are exact; the kinetic term carries a box term from the
    # seam of the coordinate, independent of n and shrinking with L
    k48, d48, x48, scale = _rate_split(48, 24.0)
    k64, _, _, _ = _rate_split(64, 24.0)
    k16, _, _, _ = _rate_split(48, 16.0)
    assert abs(d48) <= 1e-10 * scale and abs(x48) <= 1e-10 * scale
    assert abs(k48) <= 1e-7 * scale
    assert k64 == pytest.approx(k48, rel=1e-3)
    assert abs(k16) >= 20 * abs(k48)


def test_virial_identity_along_trajectory(sp32):
    S = sp32.replace(kappa=4.0)
    res = evolve(S, IntegratorConfig(dt=0.01, t_end=0.3, sample_every=2))
    resid = virial_identity_residuals(res.records)
    assert resid.max_rel <= 1e-3


def test_counts_and_concentration(grid32, sp32):
    assert particle_number(sp32) == pytest.approx(4.0, abs=1e-10)
    R = grid32.L / 2 * np.sqrt(3) + 1e-9
    assert concentration(sp32, R) == pytest.approx(4.0, abs=1e-10)
    assert 0 < concentration(sp32, 1.0) < concentration(sp32, 2.0) < 4.0


def test_structural_inequalities(sp32, grid32, rng):
    for S in (sp32.replace(kappa=2.0), shells_unchecked(grid32, 1.2, ls=(0, 1, 2))):
        T, D, X, _ = energy(S)
        assert D >= X >= 0
        assert T >= grid32.m * S.N
        assert m_virial(S) >= 0
        assert isinstance(energy(S).E_hf, float)


def test_observe_record_layout(sp32):
    rec = observe(sp32.replace(kappa=1.0), radii=(1.0, 2.5))
    assert isinstance(rec, ObservableRecord)
    cols = rec.columns()
    assert cols[:11] == ["t", "T", "D", "X", "E_hf", "N", "L2", "M_vir", "A_dil", "T_p2", "sobolev_half"]
    assert cols[11:13] == ["conc_1", "conc_2.5"]
    assert cols[13:] == ["tail_frac", "gram_drift", "anisotropy"]
    assert len(rec.row()) == len(cols)
    assert rec.to_json()["concentration"] == {"1": rec.concentration[1.0], "2.5": rec.concentration[2.5]}


def test_boundary_warning(caplog):
    g = Grid(16, 8.0)
    S = OrbitalSet([plane_wave(g, (1, 0, 0))], g)
    with caplog.at_level("WARNING"):
        angular_momentum_sq(S)
    assert "boundary mass" in caplog.text
