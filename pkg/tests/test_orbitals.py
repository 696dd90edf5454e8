import struct

import numpy as np
import pytest
from scipy.stats import unitary_group

from hfblowup.grid import Grid
from hfblowup.initial import Shell, shell_orbitals
from hfblowup.observables import observe
from hfblowup.orbitals import (
    OrbitalSet,
    OrthonormalityError,
    SingularGramError,
    angular_anisotropy,
    density,
    gram,
    gram_drift,
    load_orbitals,
    lowdin_orthonormalize,
    mix,
    pair_density,
    save_orbitals,
)

from conftest import gaussian_field, normalized, random_localized


def test_gram_orthonormal_and_duplicate(sp32, grid32):
    assert np.allclose(gram(sp32), np.eye(4), atol=1e-12)
    f = normalized(gaussian_field(grid32, 1.5), grid32)
    dup = OrbitalSet([f, f], grid32, validate=False)
    assert np.allclose(gram(dup), np.ones((2, 2)), atol=1e-12)


def test_gram_matches_direct_quadrature(grid32, rng):
    psi = random_localized(grid32, 3, rng)
    S = OrbitalSet(psi, grid32, validate=False)
    G = gram(S)
    for i in range(3):
        for j in range(3):
            direct = np.sum(np.conj(psi[i]) * psi[j]) * grid32.dv
            assert G[i, j] == pytest.approx(direct, rel=1e-12)
    assert np.allclose(G, G.conj().T)
    assert np.min(np.linalg.eigvalsh(G)) > 0


def test_lowdin(sp32, grid32, rng):
    again = lowdin_orthonormalize(sp32)
    assert np.allclose(again.psi, sp32.psi, atol=1e-12)
    S = OrbitalSet(random_localized(grid32, 4, rng), grid32, validate=False)
    out = lowdin_orthonormalize(S)
    assert gram_drift(out) < 1e-10
    # same span: projecting the inputs onto the output span loses nothing
    flat_in = S.psi.reshape(4, -1)
    flat_out = out.psi.reshape(4, -1)
    coeff = flat_out.conj() @ flat_in.T * grid32.dv
    resid = flat_in - coeff.T @ flat_out
    assert np.max(np.abs(resid)) < 1e-10 * np.max(np.abs(flat_in))


def test_lowdin_singular(grid32):
    f = normalized(gaussian_field(grid32, 1.5), grid32)
    with pytest.raises(SingularGramError, match="eigenvalue"):
        lowdin_orthonormalize(OrbitalSet([f, f], grid32, validate=False))


def test_construction_checks_orthonormality(grid32):
    f = gaussian_field(grid32, 1.5)
    with pytest.raises(OrthonormalityError):
        OrbitalSet([f], grid32)
    with pytest.raises(ValueError):
        OrbitalSet([normalized(f, grid32)], grid32, mode="bogus")
    S = OrbitalSet([normalized(f, grid32)], grid32)
    assert S.N == 1 and not S.psi.flags.writeable


def test_density_examples(sp32, grid32, rng):
    S1 = OrbitalSet([normalized(gaussian_field(grid32, 1.5), grid32)], grid32)
    assert np.sum(density(S1)) * grid32.dv == pytest.approx(1.0, abs=1e-12)
    p = shell_orbitals(Shell(1, "gaussian", 1.5), grid32)
    P = lowdin_orthonormalize(OrbitalSet(p, grid32, validate=False))
    assert angular_anisotropy(density(P), grid32, method="exact") <= 1e-10
    R = OrbitalSet(random_localized(grid32, 3, rng), grid32, validate=False)
    rho = density(R)
    assert np.all(rho >= 0)
    assert np.sum(rho) * grid32.dv == pytest.approx(np.sum(np.abs(R.psi) ** 2) * grid32.dv, rel=1e-13)


def test_pair_density(sp32, grid32):
    assert np.array_equal(pair_density(sp32, 2, 2), np.abs(sp32.psi[2]) ** 2 + 0j)
    assert np.array_equal(pair_density(sp32, 0, 3), np.conj(pair_density(sp32, 3, 0)))
    for i in range(4):
        for j in range(4):
            total = np.sum(pair_density(sp32, i, j)) * grid32.dv
            assert abs(total - (i == j)) < 1e-10
    with pytest.raises(IndexError):
        pair_density(sp32, 0, 4)


def test_anisotropy_examples(grid32):
    rho = gaussian_field(grid32, 2.0) ** 2
    base = angular_anisotropy(rho, grid32)
    assert base <= 1e-3
    p0 = shell_orbitals(Shell(1, "gaussian", 2.0), grid32)[1]  # m = 0 component
    single = angular_anisotropy(p0**2, grid32)
    assert single > 0.1 and single > 10 * base
    assert angular_anisotropy(np.full(grid32.shape, 3.0), grid32) < 1e-12
    assert angular_anisotropy(rho, grid32, method="exact") < 1e-12
    with pytest.raises(ValueError):
        angular_anisotropy(rho, grid32, method="nope")


def test_unitary_mixing_invariance(sp32):
    U = unitary_group.rvs(4, random_state=7)
    mixed = mix(sp32, U)
    assert np.allclose(density(mixed), density(sp32), atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(gram(mixed)), np.linalg.eigvalsh(gram(sp32)), atol=1e-12)
    S = sp32.replace(kappa=1.3)
    a, b = observe(S, (1.0,)), observe(mix(S, U), (1.0,))
    for name in ("T", "D", "X", "E_hf", "N", "L2", "M_vir", "T_p2", "sobolev_half"):
        va, vb = getattr(a, name), getattr(b, name)
        assert abs(va - vb) <= 1e-10 * max(abs(va), 1.0), name


def test_container_roundtrip(tmp_path, sp32):
    S = sp32.replace(kappa=2.5, t=0.75, mode="hartree")
    path = save_orbitals(S, tmp_path / "state.orb")
    meta = (tmp_path / "state.orb.json").read_text()
    assert '"mode": "hartree"' in meta
    back = load_orbitals(path)
    assert np.array_equal(back.psi, S.psi)
    assert (back.kappa, back.t, back.mode, back.grid.n, back.grid.L) == (2.5, 0.75, "hartree", 32, 16.0)


def test_container_rejects_corruption(tmp_path, sp32):
    path = save_orbitals(sp32, tmp_path / "s.orb")
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.orb"
    bad.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="not an orbital container"):
        load_orbitals(bad)
    swapped = raw[:8] + struct.pack(">I", 0x01020304) + raw[12:]
    bad.write_bytes(bytes(swapped))
    with pytest.raises(ValueError, match="endianness"):
        load_orbitals(bad)
    bad.write_bytes(bytes(raw[:-16]))
    with pytest.raises(ValueError, match="expected"):
        load_orbitals(bad)
