"""Pseudo-relativistic Hartree-Fock dynamics on a periodic grid, with
diagnostics for the virial collapse mechanism."""

from .grid import Grid, MultiplierSymbol, apply_multiplier, coulomb_convolve, make_grid
from .hamiltonian import apply_hamiltonian, pair_potentials, rhs
from .initial import Shell, ShellSpec, critical_coupling, dilate, hypothesis_checklist, shell_state
from .integrator import IntegratorConfig, evolve, rk4_step
from .observables import ObservableRecord, energy, observe, virial_rhs
from .orbitals import OrbitalSet, density, load_orbitals, lowdin_orthonormalize, save_orbitals

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "IntegratorConfig",
    "MultiplierSymbol",
    "ObservableRecord",
    "OrbitalSet",
    "Shell",
    "ShellSpec",
    "apply_hamiltonian",
    "apply_multiplier",
    "coulomb_convolve",
    "critical_coupling",
    "density",
    "dilate",
    "energy",
    "evolve",
    "hypothesis_checklist",
    "load_orbitals",
    "lowdin_orthonormalize",
    "make_grid",
    "observe",
    "pair_potentials",
    "rhs",
    "rk4_step",
    "save_orbitals",
    "shell_state",
    "virial_rhs",
]
