"""Command-line entry point ``hfblowup``.

Subcommands ``simulate``, ``blowup``, ``verify`` and ``make-initial`` all take
``--config PATH`` plus the optional ``--out DIR``, ``--seed U64`` and
``--threads INT`` (0 = all cores). Each flag can also be set through an
environment variable ``HFBLOWUP_CONFIG``, ``HFBLOWUP_OUT``, ``HFBLOWUP_SEED``
or ``HFBLOWUP_THREADS``; an explicit flag wins.

Exit codes: 0 when the run produced its scientific outcome (including a
blow-up indication), 1 on a numerical-quality failure or failed assertion,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .analysis import assess_blowup, conservation_drifts, virial_identity_residuals
from .config import ConfigError, dump_config, load_config
from .grid import Grid
from .initial import (
    InitialDataError,
    ShellSpec,
    critical_coupling,
    dilate,
    hypothesis_checklist,
    shell_state,
)
from .integrator import BLOWUP, COMPLETED, IntegratorConfig, evolve
from .lemmas import LemmaResult, jsonable, render_report, report_json, run_lemma_battery
from .observables import CSV_COLUMNS_HEAD, CSV_COLUMNS_TAIL
from .orbitals import load_orbitals, save_orbitals

logger = logging.getLogger("hfblowup")

ENV_PREFIX = "HFBLOWUP_"
EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
CSV_VERSION = "hfblowup-observables/1"


# -- initial data --------------------------------------------------------------------


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    try:
        return Grid(g["n"], g["L"], g["m"], g["coulomb_pad"])
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from None


def build_initial(cfg: dict):
    """Initial orbital set with the configured coupling; returns ``(S, info)``."""
    grid = build_grid(cfg)
    init, phys = cfg["initial"], cfg["physics"]
    if "shells" in init:
        S = shell_state(ShellSpec.from_dicts(init["shells"]), grid, mode=phys["mode"])
    else:
        try:
            S = load_orbitals(init["container"], grid.coulomb_pad)
        except (OSError, ValueError) as err:
            raise ConfigError(f"initial.container: {err}") from None
        if (S.grid.n, S.grid.L, S.grid.m) != (grid.n, grid.L, grid.m):
            raise ConfigError(
                f"initial.container grid (n={S.grid.n}, L={S.grid.L}, m={S.grid.m}) "
                f"does not match grid (n={grid.n}, L={grid.L}, m={grid.m})"
            )
        S = S.replace(grid=grid, mode=phys["mode"], t=0.0)
    if init["dilation"] != 1.0:
        S = dilate(S, init["dilation"])
    info = {"kappa_star": None}
    if "margin" in phys:
        kstar = critical_coupling(S)
        info["kappa_star"] = kstar
        kappa = kstar * (1.0 + phys["margin"])
    else:
        kappa = float(phys["kappa"])
        if S.N > 1:
            try:
                info["kappa_star"] = critical_coupling(S)
            except InitialDataError:
                pass
    S = S.replace(kappa=kappa)
    info["kappa"] = kappa
    return S, info


def integrator_config(cfg: dict) -> IntegratorConfig:
    i = cfg["integrator"]
    try:
        return IntegratorConfig(
            dt=i["dt"],
            t_end=i["t_end"],
            sample_every=i["sample_every"],
            tail_frac_max=i["tail_frac_max"],
            sobolev_growth_max=i["sobolev_growth_max"],
            drift_tol=i["drift_tol"],
            radii=tuple(cfg["output"]["radii"]),
            reorthonormalize=i["reorthonormalize"],
        )
    except ValueError as err:
        raise ConfigError(f"integrator: {err}") from None


# -- outputs ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


class RunWriter:
    """Streams observable records to ``observables.csv`` and ``observables.jsonl``."""

    def __init__(self, out: Path, radii, write_csv: bool = True, write_jsonl: bool = True):
        self.out = out
        self.columns = list(CSV_COLUMNS_HEAD) + [f"conc_{r:g}" for r in radii] + list(CSV_COLUMNS_TAIL)
        self._csv = self._jsonl = None
        if write_csv:
            self._csv_fh = open(out / "observables.csv", "w", newline="")
            self._csv_fh.write(f"# {CSV_VERSION} columns: {','.join(self.columns)}\n")
            self._csv = csv.writer(self._csv_fh)
            self._csv.writerow(self.columns)
        if write_jsonl:
            self._jsonl = open(out / "observables.jsonl", "w")

    def __call__(self, rec) -> None:
        if self._csv is not None:
            self._csv.writerow([_fmt(v) for v in rec.row()])
            self._csv_fh.flush()
        if self._jsonl is not None:
            self._jsonl.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
            self._jsonl.flush()

    def close(self) -> None:
        if self._csv is not None:
            self._csv_fh.close()
        if self._jsonl is not None:
            self._jsonl.close()


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")


def _prepare_out(cfg: dict) -> Path:
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(dump_config(cfg))
    return out


def run_trajectory(cfg: dict, S, out: Path):
    icfg = integrator_config(cfg)
    writer = RunWriter(out, icfg.radii, cfg["output"]["csv"], cfg["output"]["jsonl"])
    t0 = time.perf_counter()
    try:
        result = evolve(S, icfg, sink=writer)
    finally:
        writer.close()
    logger.info("evolved %d steps in %.1f s: %s", result.steps, time.perf_counter() - t0, result.status)
    save_orbitals(result.state, out / "final.orb")
    return result


def trajectory_summary(result, info: dict) -> dict:
    records = result.records
    ident = virial_identity_residuals(records)
    vr = np.array([r.virial_rhs for r in records])
    E = np.array([r.E_hf for r in records])
    gap_err = [abs(r.virial_gap - 2 * (r.T - r.T_p2)) / max(abs(2 * (r.T - r.T_p2)), 1e-300) for r in records]
    return {
        "status": result.status,
        "message": result.message,
        "steps": result.steps,
        "t_final": result.state.t,
        "last_trusted_time": result.last_trusted_time,
        "kappa": info["kappa"],
        "kappa_star": info["kappa_star"],
        "mode": result.state.mode,
        "N_orbitals": result.state.N,
        "samples": len(records),
        "drifts": conservation_drifts(records) if records else {},
        "identity_max_rel_residual": ident.max_rel,
        "step2_max_excess": float(np.max(vr - 2 * E)) if records else None,
        "gap_max_rel_error": float(max(gap_err)) if gap_err else None,
    }


# -- subcommands -------------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    S, info = build_initial(cfg)
    out = _prepare_out(cfg)
    result = run_trajectory(cfg, S, out)
    summary = trajectory_summary(result, info)
    _write_json(out / "summary.json", summary)
    print(f"status: {result.status}  steps: {result.steps}  t: {result.state.t:g}")
    return EXIT_OK if result.status in (COMPLETED, BLOWUP) else EXIT_NUMERICAL


def cmd_blowup(cfg: dict) -> int:
    S, info = build_initial(cfg)
    hyp = hypothesis_checklist(S, info["kappa_star"])
    if not hyp.E_hf < 0:
        raise ConfigError(f"blow-up needs negative energy: hypothesis E_HF < 0 unmet (E_HF = {hyp.E_hf:.6g})")
    out = _prepare_out(cfg)
    result = run_trajectory(cfg, S, out)
    summary = trajectory_summary(result, info)
    assessment = assess_blowup(result.records, result.last_trusted_time, cfg["verify"]["identity_tol"])
    summary["hypotheses"] = {"checks": hyp.checks, "E_hf": hyp.E_hf, "kappa_star": hyp.kappa_star}
    summary["blowup"] = {
        "indicated": result.status == BLOWUP,
        "last_trusted_time": assessment.last_trusted_time,
        "C_hat": assessment.C_hat,
        "M_vir_quadratic_fit": assessment.quadratic_fit,
        "assertions": assessment.checks,
        "details": assessment.details,
    }
    _write_json(out / "summary.json", summary)
    for name, ok in assessment.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"status: {result.status}  last trusted time: {result.last_trusted_time}  C_hat: {assessment.C_hat:.6g}")
    if result.status != BLOWUP or not assessment.ok:
        return EXIT_NUMERICAL
    return EXIT_OK


def _suite_results(summary: dict, vcfg: dict) -> list:
    drifts = summary["drifts"]
    tol = vcfg["conservation_tol"]
    out = [
        LemmaResult(
            "conservation",
            {"case": name},
            {"drift": drifts[name]},
            {"drift": tol - drifts[name]},
            drifts[name] <= tol,
        )
        for name in ("E_hf", "N", "L2")
    ]
    out.append(LemmaResult("orthonormality", {"case": "gram"}, {"drift": drifts["gram"]}, {"drift": 1e-8 - drifts["gram"]}, drifts["gram"] <= 1e-8))
    res = summary["identity_max_rel_residual"]
    out.append(
        LemmaResult("virial", {"case": "identity"}, {"max_rel": res}, {"max_rel": vcfg["identity_tol"] - res}, summary["samples"] >= 5 and res <= vcfg["identity_tol"])
    )
    exc = summary["step2_max_excess"]
    gap = summary["gap_max_rel_error"]
    out.append(
        LemmaResult("virial", {"case": "step2"}, {"max_excess": exc, "gap_rel_err": gap}, {"excess": 1e-8 - exc, "gap": 1e-6 - gap}, exc <= 1e-8 and gap <= 1e-6)
    )
    return out


def cmd_verify(cfg: dict) -> int:
    vcfg = cfg["verify"]
    grid = build_grid(cfg)
    results = run_lemma_battery(grid, seed=cfg["seed"], iterations=vcfg["commutator_iterations"])
    S, info = build_initial(cfg)
    out = _prepare_out(cfg)
    traj = run_trajectory(cfg, S, out)
    summary = trajectory_summary(traj, info)
    if traj.status != COMPLETED:
        results.append(LemmaResult("trajectory", {"case": "status"}, {"status": traj.status}, {}, False))
    results.extend(_suite_results(summary, vcfg))
    (out / "verify.json").write_text(report_json(results) + "\n")
    _write_json(out / "summary.json", summary)
    text = render_report(results)
    (out / "verify.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def cmd_make_initial(cfg: dict) -> int:
    S, info = build_initial(cfg)
    hyp = hypothesis_checklist(S, info["kappa_star"])
    out = _prepare_out(cfg)
    save_orbitals(S, out / "initial.orb")
    payload = {
        "kappa_star": info["kappa_star"],
        "kappa": info["kappa"],
        "E_hf": hyp.E_hf,
        "T": hyp.T,
        "L2": hyp.L2,
        "N": hyp.N,
        "anisotropy": hyp.anisotropy,
        "x4": hyp.x4,
        "minus_laplacian": hyp.minus_laplacian,
        "gram_drift": hyp.gram_drift,
        "checks": hyp.checks,
        "all_pass": hyp.ok,
    }
    _write_json(out / "checklist.json", payload)
    kstar = info["kappa_star"]
    print(f"kappa*  {kstar:.10g}" if kstar is not None else "kappa*  n/a")
    print(f"kappa   {info['kappa']:.10g}")
    print(f"E_HF    {hyp.E_hf:.10g}")
    print(f"L2      {hyp.L2:.10g}")
    print(f"N       {hyp.N:.10g}")
    for name, ok in hyp.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "blowup": cmd_blowup,
    "verify": cmd_verify,
    "make-initial": cmd_make_initial,
}


# -- argument handling --------------------------------------------------------------------


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfblowup", description="Pseudo-relativistic Hartree-Fock collapse simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=_env("CONFIG"), help="JSON run configuration (env HFBLOWUP_CONFIG)")
        p.add_argument("--out", default=_env("OUT"), help="output directory (env HFBLOWUP_OUT)")
        p.add_argument("--seed", default=_env("SEED"), help="unsigned 64-bit seed (env HFBLOWUP_SEED)")
        p.add_argument("--threads", default=_env("THREADS") or "0", help="FFT worker threads, 0 = auto (env HFBLOWUP_THREADS)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(args) -> tuple:
    if not args.config:
        raise ConfigError("--config is required (or set HFBLOWUP_CONFIG)")
    cfg = load_config(args.config)
    if args.out:
        cfg["output"]["directory"] = str(args.out)
    if args.seed is not None:
        try:
            seed = int(args.seed)
        except ValueError:
            raise ConfigError(f"--seed must be an integer, got {args.seed!r}") from None
        if not 0 <= seed < 2**64:
            raise ConfigError(f"--seed must fit in an unsigned 64-bit integer, got {seed}")
        cfg["seed"] = seed
    try:
        threads = int(args.threads)
    except ValueError:
        raise ConfigError(f"--threads must be an integer, got {args.threads!r}") from None
    if threads < 0:
        raise ConfigError(f"--threads must be non-negative, got {threads}")
    return cfg, threads or (os.cpu_count() or 1)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, threads = resolve(args)
        with scipy.fft.set_workers(threads):
            return COMMANDS[args.command](cfg)
    except (ConfigError, InitialDataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
