"""Numerical probes of the auxiliary estimates behind the blow-up argument.

* :func:`newton_check`: potentials of radial densities, ``r V(r) <= N`` and
  ``r^2 |V'(r)| <= N``, cross-checked against the 3D Coulomb convolution.
* :func:`sphere_integral` / :func:`sup_sphere_integral`: the surface integral
  ``I(lam) = int_{S^2} |1 - lam y_3| / |e_3 - lam y|^p dy``.
* :func:`commutator_norm_estimate`: power iteration for ``||[sqrt(p^2+m^2), f]||``.

Every check can be turned into a :class:`LemmaResult`; :func:`render_report`
and :func:`report_json` turn lists of those into text and JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicSpline

from .grid import Grid, apply_multiplier, coulomb_convolve, gradient
from .orbitals import angular_anisotropy

_QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=400)


@dataclass
class LemmaResult:
    lemma: str
    inputs: dict
    values: dict
    margins: dict
    passed: bool


# -- Newton's law ------------------------------------------------------------------


@dataclass
class RadialProfile:
    """A radial density ``rho(r)`` with total mass ``N = 4 pi int rho r^2 dr``.

    `breakpoints` are radii where ``rho`` is not smooth; `r_max` is a radius
    beyond which ``rho`` is negligible (or zero).
    """

    name: str
    rho: Callable[[np.ndarray], np.ndarray]
    r_max: float
    breakpoints: tuple = ()
    params: dict = field(default_factory=dict)
    epsrel: float = 1e-12  # spline-tabulated profiles cannot support more than ~1e-8

    def __call__(self, r):
        return self.rho(np.asarray(r, dtype=float))

    def _quad(self, fn, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        pts = [p for p in self.breakpoints if a < p < b]
        opts = dict(_QUAD, epsrel=self.epsrel)
        return integrate.quad(fn, a, b, points=pts or None, **opts)[0]

    def inner_mass(self, r: float) -> float:
        return 4.0 * math.pi * self._quad(lambda s: s * s * self(s), 0.0, min(r, self.r_max))

    def outer_integral(self, r: float) -> float:
        """``4 pi int_r^inf s rho(s) ds``."""
        return 4.0 * math.pi * self._quad(lambda s: s * self(s), r, self.r_max)

    @property
    def mass(self) -> float:
        return self.inner_mass(self.r_max)

    def scaled(self, N: float) -> "RadialProfile":
        c = N / self.mass
        base = self.rho
        return RadialProfile(self.name, lambda r: c * base(r), self.r_max, self.breakpoints, dict(self.params, N=N), self.epsrel)

    @classmethod
    def from_field(cls, rho: np.ndarray, grid: Grid, name: str = "tabulated", tol: float = 1e-6) -> "RadialProfile":
        """Tabulate a sampled density by radius; non-radial fields are rejected."""
        rho = np.asarray(grid.check(rho))
        aniso = angular_anisotropy(rho, grid, method="exact")
        if aniso > tol:
            raise ValueError(f"density is not radial: anisotropy {aniso:.3e} > {tol:g}")
        key = np.rint(grid.r2 / grid.h**2).astype(np.int64).ravel()
        cnt = np.bincount(key)
        sums = np.bincount(key, np.real(rho).ravel())
        have = cnt > 0
        r = np.sqrt(np.nonzero(have)[0]) * grid.h
        vals = sums[have] / cnt[have]
        keep = r <= grid.L / 2
        spline = CubicSpline(r[keep], vals[keep])
        r_end = float(r[keep][-1])

        def f(s):
            s = np.asarray(s, dtype=float)
            return np.where(s <= r_end, spline(np.minimum(s, r_end)), 0.0)

        return cls(name, f, r_end, (), {"n": grid.n, "L": grid.L}, epsrel=1e-8)


def uniform_ball(R: float, N: float = 1.0, edge: float = 0.0) -> RadialProfile:
    """Uniform ball; ``edge > 0`` replaces the jump by a Fermi step of that width."""
    if edge == 0.0:
        prof = RadialProfile("uniform_ball", lambda r: (r <= R).astype(float), R, (R,), {"R": R})
    else:
        prof = RadialProfile(
            "uniform_ball",
            lambda r: special.expit(-(r - R) / edge),
            R + 40.0 * edge,
            (R,),
            {"R": R, "edge": edge},
        )
    return prof.scaled(N)


def gaussian_profile(sigma: float, N: float = 1.0) -> RadialProfile:
    prof = RadialProfile("gaussian", lambda r: np.exp(-0.5 * (r / sigma) ** 2), 40.0 * sigma, (), {"sigma": sigma})
    return prof.scaled(N)


def shell_annulus(r0: float, width: float, N: float = 1.0) -> RadialProfile:
    prof = RadialProfile(
        "shell_annulus",
        lambda r: np.exp(-0.5 * ((r - r0) / width) ** 2),
        r0 + 40.0 * width,
        (r0,),
        {"r0": r0, "width": width},
    )
    return prof.scaled(N)


def gaussian_mixture(sigmas, weights, N: float = 1.0) -> RadialProfile:
    sigmas = np.asarray(sigmas, dtype=float)
    weights = np.asarray(weights, dtype=float)

    def f(r):
        r = np.asarray(r, dtype=float)[..., None]
        return np.sum(weights * np.exp(-0.5 * (r / sigmas) ** 2), axis=-1)

    prof = RadialProfile("gaussian_mixture", f, 40.0 * sigmas.max(), (), {"sigmas": sigmas.tolist(), "weights": weights.tolist()})
    return prof.scaled(N)


def random_gaussian_mixture(rng: np.random.Generator, k: int = 3, sigma_range=(0.8, 2.5), N: float = 1.0) -> RadialProfile:
    return gaussian_mixture(rng.uniform(*sigma_range, k), rng.uniform(0.2, 1.0, k), N)


def narrow_bump(eps: float, N: float = 1.0) -> RadialProfile:
    """Compactly supported ``(1 - r^2/eps^2)^2`` bump of radius `eps`."""
    prof = RadialProfile("narrow_bump", lambda r: np.where(r < eps, (1 - (r / eps) ** 2) ** 2, 0.0), eps, (), {"eps": eps})
    return prof.scaled(N)


def radial_potential(profile: RadialProfile, r: float) -> tuple:
    """``(V(r), V'(r))`` of ``|x|^-1 * rho`` from inner mass and outer shells."""
    r = float(r)
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    outer = profile.outer_integral(r)
    if r == 0.0:
        return outer, 0.0
    M = profile.inner_mass(r)
    return M / r + outer, -M / r**2


@dataclass
class NewtonReport:
    profile: str
    N: float
    radii: np.ndarray
    V: np.ndarray
    dV: np.ndarray
    rV_margin: float  # min over radii of (N(1 + 1e-8) - r V) / N
    r2dV_margin: float
    conv_radii: np.ndarray | None = None
    conv_rel_err: float | None = None
    passed: bool = False

    def result(self) -> LemmaResult:
        values = {"N": self.N, "max_rV": float(np.max(self.radii * self.V)), "max_r2dV": float(np.max(self.radii**2 * np.abs(self.dV)))}
        margins = {"rV": self.rV_margin, "r2dV": self.r2dV_margin}
        if self.conv_rel_err is not None:
            values["conv_rel_err"] = self.conv_rel_err
            margins["conv"] = 1e-3 - self.conv_rel_err
        return LemmaResult("newton", {"profile": self.profile, "radii": self.radii.tolist()}, values, margins, self.passed)


def newton_check(
    profile: RadialProfile,
    samples,
    grid: Grid | None = None,
    conv_tol: float = 1e-3,
) -> NewtonReport:
    """Check the radial Newton bounds at `samples`; optionally compare with 3D.

    With `grid` the profile is sampled on it, convolved with the truncated
    Coulomb kernel and compared with the 1D potential at the grid points on
    the positive x axis closest to each sample radius.
    """
    if not isinstance(profile, RadialProfile):
        raise TypeError("newton_check needs a RadialProfile; use RadialProfile.from_field for sampled data")
    radii = np.asarray(samples, dtype=float)
    N = profile.mass
    V = np.empty_like(radii)
    dV = np.empty_like(radii)
    for k, r in enumerate(radii):
        V[k], dV[k] = radial_potential(profile, r)
    cap = N * (1 + 1e-8)
    rV_margin = float(np.min(cap - radii * V) / N)
    r2dV_margin = float(np.min(cap - radii**2 * np.abs(dV)) / N)
    passed = rV_margin >= 0 and r2dV_margin >= 0
    report = NewtonReport(profile.name, N, radii, V, dV, rV_margin, r2dV_margin)

    if grid is not None:
        rho = profile(np.broadcast_to(grid.r, grid.shape))
        V3 = coulomb_convolve(rho, grid).real
        c = grid.n // 2
        idx = np.unique(np.clip(np.rint(radii / grid.h).astype(int), 0, c - 1))
        r_axis = idx * grid.h
        V1 = np.array([radial_potential(profile, r)[0] for r in r_axis])
        err = np.abs(V3[c + idx, c, c] - V1) / np.abs(V1)
        report.conv_radii = r_axis
        report.conv_rel_err = float(err.max())
        passed = passed and report.conv_rel_err <= conv_tol
    report.passed = bool(passed)
    return report


def newton_battery(rng: np.random.Generator | None = None) -> list:
    """Uniform ball (Fermi edge), Gaussian, annulus and a random Gaussian mixture.

    All members are resolved on grids with ``h <= 0.5`` and contained in
    boxes with ``L >= 16``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    return [
        uniform_ball(2.5, 2.0, edge=0.3),
        gaussian_profile(1.5, 1.0),
        shell_annulus(3.0, 0.6, 3.0),
        random_gaussian_mixture(rng, sigma_range=(0.8, 1.5)),
    ]


# -- sphere integral ---------------------------------------------------------------


def _reduced_core(lam: float, exponent: float) -> float:
    """``int_{1-lam}^{1+lam} |z| ((lam^2 - 1)/2 + z)^{-p/2} dz``.

    With ``z = 1 - lam + w^2`` the inverse square root at ``lam = 1`` is
    absorbed; remaining features sit near ``w ~ |lam - 1|`` and at the sign
    change ``z = 0``.
    """
    a = (lam - 1.0) ** 2 / 2.0  # value of the bracket at the lower endpoint

    def f(w):
        z = 1.0 - lam + w * w
        return 2.0 * w * abs(z) / (a + w * w) ** (exponent / 2.0)

    top = math.sqrt(2.0 * lam)
    pts = [s * math.sqrt(a) for s in (1.0, 10.0)] if a > 0 else []
    if lam > 1.0:
        pts.append(math.sqrt(lam - 1.0))
    pts = sorted(p for p in pts if 0 < p < top)
    return integrate.quad(f, 0.0, top, points=pts or None, **_QUAD)[0]


def reduced_integral(lam: float, exponent: float = 3.0) -> float:
    """The one-dimensional form ``(2 pi / lam) int |z| ((lam^2-1)/2 + z)^{-p/2} dz``.

    Written this way the half in the bracket rescales the denominator: the
    result is ``2^{p/2}`` times the surface integral :func:`sphere_integral`.
    """
    if lam <= 0:
        raise ValueError(f"the reduced form needs lam > 0, got {lam}")
    return 2.0 * math.pi / lam * _reduced_core(lam, exponent)


def sphere_integral(lam: float, exponent: float = 3.0, method: str = "reduction") -> float:
    """``I(lam) = int_{S^2} |1 - lam y_3| / |e_3 - lam y|^p dy``.

    ``method="reduction"`` integrates the exact polar reduction (substituting
    ``z = 1 - lam cos(theta)``); ``method="surface"`` uses a product
    Gauss-Legendre / trapezoid rule on the sphere, which is only accurate
    away from ``lam = 1``.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if lam == 0:
        return 4.0 * math.pi
    if method == "reduction":
        return 2.0 ** (-exponent / 2.0) * reduced_integral(lam, exponent)
    if method == "surface":
        return _surface_quadrature(lam, exponent)
    raise ValueError(f"unknown method {method!r}")


def _surface_quadrature(lam: float, exponent: float, n_theta: int = 600, n_phi: int = 16) -> float:
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1.0 - u**2)
    y = np.stack(
        [s[:, None] * np.cos(phi)[None, :], s[:, None] * np.sin(phi)[None, :], np.broadcast_to(u[:, None], (n_theta, n_phi))]
    )
    e3 = np.array([0.0, 0.0, 1.0])[:, None, None]
    dist = np.sqrt(np.sum((e3 - lam * y) ** 2, axis=0))
    vals = np.abs(1.0 - lam * y[2]) / dist**exponent
    return float(np.sum(wu[:, None] * vals) * 2.0 * math.pi / n_phi)


@dataclass
class SphereScan:
    sup: float
    arg: float
    lam: np.ndarray
    values: np.ndarray
    max_jump: float  # largest relative change between neighbours after refinement


def sup_sphere_integral(lam_max: float, n_scan: int = 200, exponent: float = 3.0, jump_tol: float = 0.05) -> SphereScan:
    """Scan ``I`` on ``{0} U logspace(1e-3 lam_max, lam_max)`` and refine.

    Neighbouring points are bisected (up to a fixed depth) while their values
    differ by more than `jump_tol`. The point ``lam = 1`` itself is skipped:
    there the integrand's zero meets the pole and the value is half the
    one-sided limits.
    """
    if lam_max < 0:
        raise ValueError(f"lam_max must be non-negative, got {lam_max}")
    if lam_max == 0 or n_scan < 2:
        v = sphere_integral(0.0, exponent)
        return SphereScan(v, 0.0, np.array([0.0]), np.array([v]), 0.0)
    lam = np.concatenate([[0.0], np.geomspace(1e-3 * lam_max, lam_max, n_scan - 1)])
    lam = lam[lam != 1.0]
    vals = np.array([sphere_integral(x, exponent) for x in lam])
    for _ in range(40):
        jumps = np.abs(np.diff(vals)) / np.maximum(np.abs(vals[:-1]), 1e-300)
        bad = np.nonzero(jumps > jump_tol)[0]
        if bad.size == 0:
            break
        mids = 0.5 * (lam[bad] + lam[bad + 1])
        mids = mids[mids != 1.0]
        if mids.size == 0:
            break
        new = np.array([sphere_integral(x, exponent) for x in mids])
        lam = np.concatenate([lam, mids])
        vals = np.concatenate([vals, new])
        order = np.argsort(lam)
        lam, vals = lam[order], vals[order]
    jumps = np.abs(np.diff(vals)) / np.maximum(np.abs(vals[:-1]), 1e-300)
    k = int(np.argmax(vals))
    lo, hi = lam[max(k - 1, 0)], lam[min(k + 1, len(lam) - 1)]
    best, arg = vals[k], lam[k]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -sphere_integral(x, exponent), bounds=(lo, hi), method="bounded")
        if res.success and -res.fun > best:
            best, arg = -res.fun, res.x
    return SphereScan(float(best), float(arg), lam, vals, float(jumps.max()) if jumps.size else 0.0)


# -- commutator bound ------------------------------------------------------------------


@dataclass
class CommutatorEstimate:
    sigma_max: float
    grad_inf: float
    ratio: float
    rayleigh: list  # squared singular value estimates per iteration


def periodized_coordinate(grid: Grid, axis: int = 0) -> np.ndarray:
    """``(L / 2 pi) sin(2 pi x_a / L)``: equal to ``x_a`` near the centre,
    smooth across the periodic seam, gradient bounded by one."""
    c = grid.coords[axis]
    return np.broadcast_to(grid.L / (2 * math.pi) * np.sin(2 * math.pi * c / grid.L), grid.shape).copy()


def gaussian_bump(grid: Grid, width: float) -> np.ndarray:
    return np.exp(-0.5 * grid.r2 / width**2)


def commutator_norm_estimate(
    f: np.ndarray,
    grid: Grid,
    iterations: int = 60,
    seed: int = 0,
) -> CommutatorEstimate:
    """Largest singular value of ``K = [sqrt(p^2 + m^2), f]`` by power iteration.

    Since ``f`` is real, ``K* = -K`` and each iteration applies ``K`` twice.
    The Rayleigh quotients ``||K v_k||^2`` are non-decreasing, so the result is
    a lower bound on ``||K||``.
    """
    f = np.asarray(grid.check(f))
    if np.iscomplexobj(f):
        if np.max(np.abs(f.imag)) > 0:
            raise ValueError("commutator estimate needs a real multiplier")
        f = f.real
    grad_inf = float(np.sqrt(np.max(sum(np.real(d) ** 2 for d in gradient(f, grid)))))
    if not np.any(f):
        return CommutatorEstimate(0.0, grad_inf, 0.0, [])
    T = grid.symbol("dispersion")

    def K(v):
        return apply_multiplier(f * v, T) - f * apply_multiplier(v, T)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    v /= np.linalg.norm(v)
    history = []
    for _ in range(iterations):
        w = K(v)
        q = float(np.vdot(w, w).real)
        history.append(q)
        u = -K(w)
        nu = np.linalg.norm(u)
        if nu == 0:
            break
        v = u / nu
    sigma = math.sqrt(max(history)) if history else 0.0
    ratio = sigma / grad_inf if grad_inf > 0 else 0.0
    return CommutatorEstimate(sigma, grad_inf, ratio, history)


def commutator_battery(grid: Grid, widths=(1.0, 1.5, 2.5)) -> dict:
    fields = {f"gaussian_w{w:g}": gaussian_bump(grid, w) for w in widths}
    fields["periodized_x1"] = periodized_coordinate(grid, 0)
    return fields


def symbol_bound_x1(grid: Grid) -> float:
    """``sup_k |k_1| / sqrt(|k|^2 + m^2)`` over the grid's wavenumbers."""
    k1 = np.abs(grid.kvec[0])
    return float(np.max(np.broadcast_to(k1, grid.shape) / np.sqrt(grid.k2 + grid.m**2)))


# -- reporting ----------------------------------------------------------------------


def jsonable(x):
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def report_json(results) -> str:
    return json.dumps([jsonable(asdict(r)) for r in results], indent=2)


def render_report(results) -> str:
    lines = []
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        margins = ", ".join(f"{k}={v:.3g}" for k, v in r.margins.items())
        name = r.inputs.get("profile") or r.inputs.get("case") or ""
        lines.append(f"[{tag}] {r.lemma:<12} {name:<20} {margins}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)


def run_lemma_battery(grid: Grid, seed: int = 0, iterations: int = 60) -> list:
    """Newton, sphere-integral and commutator checks as :class:`LemmaResult` records."""
    rng = np.random.default_rng(seed)
    results = []
    radii = np.linspace(0.0, 0.4 * grid.L, 25)
    for prof in newton_battery(rng):
        results.append(newton_check(prof, radii, grid).result())
    # exact ball and a bump far below grid resolution: bounds only
    for prof in (uniform_ball(2.5, 2.0), narrow_bump(0.1, 1.0)):
        results.append(newton_check(prof, radii).result())

    I0 = sphere_integral(0.0)
    I_half = sphere_integral(0.5)
    I_half_surface = sphere_integral(0.5, method="surface")
    R1 = reduced_integral(1.0)
    scan = sup_sphere_integral(10.0, 200)
    scan2 = sup_sphere_integral(10.0, 400)
    values = {
        "I(0)": I0,
        "I(0.5) reduction": I_half,
        "I(0.5) surface": I_half_surface,
        "reduced(1)": R1,
        "I(1)": sphere_integral(1.0),
        "I(100)": sphere_integral(100.0),
        "I_exp1(1)": sphere_integral(1.0, exponent=1.0),
        "sup": scan.sup,
        "arg": scan.arg,
        "sup_refined": scan2.sup,
    }
    margins = {
        "I0": 1e-6 - abs(I0 - 4 * math.pi) / (4 * math.pi),
        "methods": 1e-4 - abs(I_half - I_half_surface) / I_half,
        "reduced1": 1e-4 - abs(R1 - 4 * math.sqrt(2) * math.pi) / (4 * math.sqrt(2) * math.pi),
        "sup_stable": 1e-3 - abs(scan.sup - scan2.sup) / scan2.sup,
    }
    results.append(LemmaResult("sphere", {"case": "lambda_scan", "lam_max": 10.0}, values, margins, all(v >= 0 for v in margins.values()) and math.isfinite(scan.sup)))

    const = commutator_norm_estimate(np.full(grid.shape, 3.0), grid, iterations=5, seed=seed)
    results.append(
        LemmaResult("commutator", {"case": "constant"}, {"sigma_max": const.sigma_max}, {"zero": 1e-10 - const.sigma_max}, const.sigma_max <= 1e-10)
    )
    for name, f in commutator_battery(grid).items():
        est = commutator_norm_estimate(f, grid, iterations=iterations, seed=seed)
        mono = float(np.min(np.diff(est.rayleigh))) if len(est.rayleigh) > 1 else 0.0
        margins = {"monotone": mono + 1e-12 * est.rayleigh[-1]}
        values = {"sigma_max": est.sigma_max, "grad_inf": est.grad_inf, "ratio": est.ratio}
        if name == "periodized_x1":
            values["symbol_bound"] = symbol_bound_x1(grid)
        results.append(LemmaResult("commutator", {"case": name, "n": grid.n, "L": grid.L}, values, margins, math.isfinite(est.ratio) and margins["monotone"] >= 0))
    return results
