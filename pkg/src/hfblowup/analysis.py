"""Post-processing of observable time series: drifts, identity residuals and
the quadratic virial bound."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# five-point centered first derivative
_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def series(records, name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def sample_spacing(t: np.ndarray, rtol: float = 1e-9) -> float:
    dt = np.diff(t)
    if dt.size == 0:
        raise ValueError("need at least two samples")
    if np.max(np.abs(dt - dt[0])) > rtol * max(1.0, abs(dt[0])) * 1e3:
        raise ValueError("samples are not equally spaced")
    return float(dt[0])


def centered_derivative(values: np.ndarray, spacing: float) -> np.ndarray:
    """Fourth-order centered derivative at samples ``2 .. len-3``."""
    v = np.asarray(values, dtype=float)
    if v.size < 5:
        return np.empty(0)
    return np.correlate(v, _STENCIL, mode="valid") / spacing


def _uniform(records):
    """Drop a trailing sample that breaks the uniform spacing (a clipped last step)."""
    t = series(records, "t")
    if t.size > 2 and abs((t[-1] - t[-2]) - (t[1] - t[0])) > 1e-9 * max(1.0, t[-1]):
        records = records[:-1]
    return records


@dataclass
class IdentityResiduals:
    t: np.ndarray
    derivative: np.ndarray
    virial_rhs: np.ndarray
    abs_residual: np.ndarray
    rel_residual: np.ndarray

    @property
    def max_rel(self) -> float:
        return float(self.rel_residual.max()) if self.rel_residual.size else 0.0


def virial_identity_residuals(records) -> IdentityResiduals:
    """Compare ``d/dt A_dil`` (finite differences) with ``virial_rhs``."""
    records = _uniform(records)
    t = series(records, "t")
    if t.size < 5:
        e = np.empty(0)
        return IdentityResiduals(e, e, e, e, e)
    d = centered_derivative(series(records, "A_dil"), sample_spacing(t))
    vr = series(records, "virial_rhs")[2:-2]
    res = np.abs(d - vr)
    return IdentityResiduals(t[2:-2], d, vr, res, res / np.abs(vr))


def conservation_drifts(records) -> dict:
    """Largest relative change of E_hf, N and L2 from their initial values."""
    out = {}
    for name in ("E_hf", "N", "L2"):
        v = series(records, name)
        scale = abs(v[0]) if v[0] != 0 else 1.0
        out[name] = float(np.max(np.abs(v - v[0])) / scale)
    out["gram"] = float(np.max(series(records, "gram_drift")))
    return out


@dataclass
class Step1:
    t: np.ndarray
    g: np.ndarray  # d/dt M_vir - A_dil

    @property
    def C_hat(self) -> float:
        return float(np.max(np.abs(self.g))) if self.g.size else 0.0


def step1_function(records) -> Step1:
    records = _uniform(records)
    t = series(records, "t")
    if t.size < 5:
        return Step1(np.empty(0), np.empty(0))
    dM = centered_derivative(series(records, "M_vir"), sample_spacing(t))
    return Step1(t[2:-2], dM - series(records, "A_dil")[2:-2])


def quadratic_bound(records, C_hat: float) -> np.ndarray:
    """``t^2 E_hf + t (A_dil(0) + C_hat) + M_vir(0)`` with times relative to the first sample."""
    r0 = records[0]
    t = series(records, "t") - r0.t
    return t**2 * r0.E_hf + t * (r0.A_dil + C_hat) + r0.M_vir


@dataclass
class BlowupAssessment:
    last_trusted_time: float | None
    C_hat: float
    quadratic_fit: list  # coefficients (a, b, c) of a t^2 + b t + c fitted to M_vir
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def assess_blowup(
    records,
    last_trusted_time: float | None,
    identity_tol: float = 1e-3,
    step2_tol: float = 1e-8,
) -> BlowupAssessment:
    """Evaluate the collapse assertions over the trusted part of a run.

    (i) ``virial_rhs <= 2 E_hf + step2_tol``; (ii) virial identity residual at
    most `identity_tol` relative; (iii) ``0 <= M_vir`` and ``M_vir`` below the
    quadratic bound; (iv) ``sobolev_half`` strictly increasing over the final
    quarter of the trusted window; (v) mass in the smallest configured ball
    non-decreasing and larger at the end than at the start.
    """
    if last_trusted_time is None:
        window = records[:1]
    else:
        window = [r for r in records if r.t <= last_trusted_time + 1e-12]
    t = series(window, "t")
    M = series(window, "M_vir")
    st1 = step1_function(window)
    bound = quadratic_bound(window, st1.C_hat)
    fit = np.polyfit(t - t[0], M, 2).tolist() if t.size >= 3 else []
    ident = virial_identity_residuals(window)
    vr = series(window, "virial_rhs")
    E = series(window, "E_hf")

    quarter = [r for r in window if r.t >= t[0] + 0.75 * (t[-1] - t[0])]
    sob = series(quarter, "sobolev_half")
    radii = sorted(window[0].concentration)
    conc = np.array([r.concentration[radii[0]] for r in window]) if radii else np.empty(0)

    slack = np.max(bound - M) if M.size else 0.0
    checks = {
        "i_step2": bool(np.all(vr <= 2 * E + step2_tol)),
        "ii_identity": bool(ident.max_rel <= identity_tol) and ident.t.size > 0,
        "iii_quadratic": bool(np.all(M >= 0) and np.all(M <= bound + 1e-9 * abs(M[0]))),
        "iv_sobolev": bool(sob.size >= 2 and np.all(np.diff(sob) > 0)),
        "v_concentration": bool(conc.size >= 2 and np.all(np.diff(conc) >= 0) and conc[-1] > conc[0]),
        "trusted_window": last_trusted_time is not None and t.size >= 5,
    }
    details = {
        "samples": int(t.size),
        "max_step2_excess": float(np.max(vr - 2 * E)) if vr.size else 0.0,
        "identity_max_rel": ident.max_rel,
        "min_bound_slack": float(np.min(bound - M)) if M.size else 0.0,
        "max_bound_slack": float(slack),
        "M_vir_min": float(M.min()) if M.size else 0.0,
        "M_vir_strictly_decreasing": bool(M.size >= 2 and np.all(np.diff(M) < 0)),
        "sobolev_ratio": float(sob[-1] / sob[0]) if sob.size else 0.0,
        "concentration_radius": radii[0] if radii else None,
        "concentration_start_end": [float(conc[0]), float(conc[-1])] if conc.size else [],
    }
    return BlowupAssessment(last_trusted_time, st1.C_hat, fit, checks, details)
