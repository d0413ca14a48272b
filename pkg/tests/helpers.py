"""Random systems and independent oracles shared by the test modules."""
import numpy as np
import scipy.linalg as sla

from lfth2.lft_model import ClosedLoopLft, LftController, LftPlant, UncertaintyStructure


def stable_matrix(rng, n, radius=0.9):
    A = rng.standard_normal((n, n))
    r = max(abs(np.linalg.eigvals(A)))
    return A * (radius * rng.uniform(0.3, 1.0) / r) if r > 0 else A


def random_lti_loop(rng, n, nd=None, ne=None, radius=0.9):
    """Stable LTI closed loop without uncertainty channels."""
    nd = nd or int(rng.integers(1, 3))
    ne = ne or int(rng.integers(1, 3))
    return ClosedLoopLft.create(A=stable_matrix(rng, n, radius), B1=rng.standard_normal((n, nd)),
                                C1=rng.standard_normal((ne, n)), ts=1.0)


def gramian_h2(clp: ClosedLoopLft) -> float:
    """Discrete H2 norm from the observability gramian (Lyapunov equation)."""
    W = sla.solve_discrete_lyapunov(clp.A.T, clp.C1.T @ clp.C1)
    return float(np.sqrt(np.trace(clp.B1.T @ W @ clp.B1)))


def gramian_h2_sum(clp: ClosedLoopLft, tol=1e-14, kmax=100000) -> float:
    """Same norm by summing the impulse response energy (no Lyapunov solver)."""
    total, X = 0.0, clp.B1.copy()
    for _ in range(kmax):
        step = float(np.sum((clp.C1 @ X) ** 2))
        total += step
        if step < tol * max(total, 1e-300):
            break
        X = clp.A @ X
    return float(np.sqrt(total))


def random_structure(rng, np_max=2):
    k = int(rng.integers(1, np_max + 1))
    if k == 1:
        return UncertaintyStructure((1,))
    return UncertaintyStructure((1, 1)) if rng.random() < 0.5 else UncertaintyStructure((2,))


def random_lft_plant(rng, n=None, np_=None, nd=2, ne=2, nu=1, ny=1, unc=0.3, radius=0.8):
    """Random discrete LFT plant in the required layout (D01 = D11 = D22 = 0)."""
    n = n or int(rng.integers(1, 5))
    structure = random_structure(rng) if np_ is None else (
        UncertaintyStructure((1,) * np_) if np_ else UncertaintyStructure())
    npp = structure.n_p
    g = rng.standard_normal
    C1 = g((ne, n))
    D12 = np.zeros((ne, nu))
    C1[-nu:] = 0.0
    D12[-nu:] = np.eye(nu)
    D21 = np.zeros((ny, nd))
    D21[:, :min(ny, nd)] = np.eye(ny)[:, :min(ny, nd)]
    return LftPlant.create(stable_matrix(rng, n, radius) if radius else g((n, n)), structure=structure, ts=1.0,
                           np_=npp, nd=nd, ne=ne, nu=nu, ny=ny,
                           B0=unc * g((n, npp)), C0=unc * g((npp, n)), D00=0.1 * unc * g((npp, npp)),
                           B1=g((n, nd)), B2=g((n, nu)), C1=C1, C2=g((ny, n)),
                           D02=unc * g((npp, nu)), D10=unc * g((ne, npp)), D12=D12,
                           D20=unc * g((ny, npp)), D21=D21)


def random_controller(rng, plant: LftPlant, scale=0.3) -> LftController:
    n, nu, ny, npp = plant.n, plant.nu, plant.ny, plant.np
    g = lambda *s: scale * rng.standard_normal(s)
    return LftController(Ak=g(n, n), Bk1=g(n, ny), Bk0=g(n, npp), Ck1=g(nu, n), Ck0=g(npp, n),
                         Dk10=g(nu, npp), Dk00=g(npp, npp))


def scalar_loop(a, b, c) -> ClosedLoopLft:
    return ClosedLoopLft.create(A=[[a]], B1=[[b]], C1=[[c]], ts=1.0)


# criterion number -> (passed, detail); filled by test_acceptance, printed by conftest
ACCEPTANCE: dict = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)
