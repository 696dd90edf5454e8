"""Classical fourth-order Runge-Kutta propagation with resolution monitoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hamiltonian import DRIFT_TOL, GramDriftError, PairPotentials, check_drift, pair_potentials, rhs
from .observables import ObservableRecord, observe, sobolev_half, tail_fraction
from .orbitals import OrbitalSet, gram_drift, lowdin_orthonormalize

logger = logging.getLogger(__name__)

COMPLETED = "completed"
BLOWUP = "blow-up-indicated"
DRIFT = "drift-exceeded"


@dataclass
class IntegratorConfig:
    dt: float
    t_end: float
    sample_every: int = 1
    tail_frac_max: float = 1e-3
    sobolev_growth_max: float = 10.0
    drift_tol: float = DRIFT_TOL
    radii: tuple = ()
    reorthonormalize: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ValueError(f"sample_every must be a positive integer, got {self.sample_every}")
        for name in ("tail_frac_max", "sobolev_growth_max", "drift_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        self.sample_every = int(self.sample_every)
        self.radii = tuple(float(r) for r in self.radii)


@dataclass
class Resolution:
    tail_frac: float
    sobolev_half: float
    fired: bool
    reason: str = ""


def resolution_monitor(
    S: OrbitalSet,
    sobolev_initial: float | None = None,
    tail_frac_max: float = 1e-3,
    sobolev_growth_max: float = 10.0,
) -> Resolution:
    """Spectral tail share and ``tr (1-Laplacian)^{1/2} Q`` with a loss-of-resolution hint."""
    tail = tail_fraction(S)
    sob = sobolev_half(S)
    reasons = []
    if tail > tail_frac_max:
        reasons.append(f"tail_frac {tail:.3e} > {tail_frac_max:.1e}")
    if sobolev_initial is not None and sob > sobolev_growth_max * sobolev_initial:
        reasons.append(f"sobolev_half grew by {sob / sobolev_initial:.2f}x")
    return Resolution(tail, sob, bool(reasons), "; ".join(reasons))


def rk4_step(S: OrbitalSet, dt: float, potentials: PairPotentials | None = None) -> OrbitalSet:
    """One classical RK4 step of ``d psi/dt = -i H psi``.

    `potentials` may carry the pair potentials of `S` when they are already
    known (e.g. from evaluating observables); they are reused for the first stage.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    psi = S.psi
    stage = lambda y: S.replace(psi=y)  # noqa: E731
    k1 = rhs(S, drift_tol=None, potentials=potentials)
    k2 = rhs(stage(psi + 0.5 * dt * k1), drift_tol=None)
    k3 = rhs(stage(psi + 0.5 * dt * k2), drift_tol=None)
    k4 = rhs(stage(psi + dt * k3), drift_tol=None)
    new = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return S.replace(psi=new, t=S.t + dt)


@dataclass
class EvolveResult:
    state: OrbitalSet
    status: str
    records: list = field(default_factory=list)
    last_trusted_time: float | None = None
    steps: int = 0
    message: str = ""


def evolve(
    S: OrbitalSet,
    cfg: IntegratorConfig,
    sink: Callable[[ObservableRecord], None] | None = None,
    keep_records: bool = True,
) -> EvolveResult:
    """Step `S` until ``cfg.t_end`` or until a monitor fires.

    Records are emitted at step 0 and every ``sample_every`` steps. The run is
    classified as ``completed``, ``blow-up-indicated`` (resolution lost) or
    ``drift-exceeded`` (Gram matrix drifted beyond ``cfg.drift_tol``). The last
    trusted time is the last sample whose tail share is at most a tenth of
    ``cfg.tail_frac_max``.
    """
    nsteps = int(round(cfg.t_end / cfg.dt))
    if abs(nsteps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ValueError(f"t_end={cfg.t_end} is not a multiple of dt={cfg.dt}")
    t0 = S.t
    records: list = []
    sob0 = sobolev_half(S)
    trusted = None
    status, message = COMPLETED, ""

    def emit(state: OrbitalSet, potentials: PairPotentials) -> ObservableRecord:
        rec = observe(state, cfg.radii, potentials)
        if keep_records:
            records.append(rec)
        if sink is not None:
            sink(rec)
        return rec

    step = 0
    while True:
        sample = step % cfg.sample_every == 0 or step == nsteps
        potentials = None
        if sample:
            try:
                check_drift(S, cfg.drift_tol)
            except GramDriftError as err:
                status, message = DRIFT, str(err)
                break
            potentials = pair_potentials(S)
            rec = emit(S, potentials)
            mon = resolution_monitor(S, sob0, cfg.tail_frac_max, cfg.sobolev_growth_max)
            if mon.tail_frac <= 0.1 * cfg.tail_frac_max:
                trusted = rec.t
            if mon.fired:
                status, message = BLOWUP, mon.reason
                logger.info("t=%.4f: %s", S.t, mon.reason)
                break
        if step == nsteps:
            break
        S = rk4_step(S, cfg.dt, potentials)
        step += 1
        S = S.replace(t=t0 + step * cfg.dt)
        if cfg.reorthonormalize:
            S = lowdin_orthonormalize(S)
        if not np.all(np.isfinite(S.psi)):
            status, message = BLOWUP, "non-finite orbitals"
            break
    if status == DRIFT:
        drift = gram_drift(S)
        tail = tail_fraction(S)
        message = f"{message}; tail_frac {tail:.3e} (drift {drift:.3e})"
    return EvolveResult(S, status, records, trusted, step, message)
