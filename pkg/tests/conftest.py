import numpy as np
import pytest

from hfblowup.grid import Grid
from hfblowup.initial import Shell, shell_orbitals
from hfblowup.orbitals import OrbitalSet, lowdin_orthonormalize


def gaussian_field(grid: Grid, sigma: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    x, y, z = grid.coords
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    return np.exp(-0.5 * r2 / sigma**2)


def normalized(f: np.ndarray, grid: Grid) -> np.ndarray:
    return f / np.sqrt(np.sum(np.abs(f) ** 2) * grid.dv)


def plane_wave(grid: Grid, kint) -> np.ndarray:
    """Unit-normalized plane wave with integer wave vector (in units of 2 pi / L)."""
    x, y, z = grid.coords
    k = 2 * np.pi / grid.L * np.asarray(kint, dtype=float)
    return np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)) / np.sqrt(grid.L**3)


def shells_unchecked(grid: Grid, sigma: float, ls=(0, 1), kappa=0.0, mode="hartree-fock") -> OrbitalSet:
    """Filled shells without the resolution/containment guards (for small test grids)."""
    blocks = []
    for l in ls:
        orb = shell_orbitals(Shell(l, "gaussian", sigma), grid)
        blocks.append(orb / np.sqrt(np.sum(orb**2, axis=(1, 2, 3)) * grid.dv)[:, None, None, None])
    raw = OrbitalSet(np.concatenate(blocks), grid, kappa, 0.0, mode, validate=False)
    return lowdin_orthonormalize(raw)


def random_localized(grid: Grid, N: int, rng, sigma: float = 1.5) -> np.ndarray:
    """Smooth random complex fields under a Gaussian envelope."""
    env = gaussian_field(grid, sigma)
    out = []
    for _ in range(N):
        c = rng.standard_normal((4, 4, 4)) + 1j * rng.standard_normal((4, 4, 4))
        x, y, z = grid.coords
        poly = sum(
            c[a, b, d] * (x / sigma) ** a * (y / sigma) ** b * (z / sigma) ** d
            for a in range(2)
            for b in range(2)
            for d in range(2)
        )
        out.append(poly * env)
    return np.array(out)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32, 16.0, 1.0)


@pytest.fixture(scope="session")
def sp32(grid32):
    """s+p Gaussian shells on n=32, L=16 (N=4)."""
    return shells_unchecked(grid32, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
