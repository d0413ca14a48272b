"""The robust H2 analysis and synthesis LMI programs.

Every program minimizes ``tr(Q)`` and carries four PSD constraints: the two
Lyapunov-type blocks (one per ``P_-``/``P_+`` or ``T_-``/``T_+``), the Schur
block that bounds ``Q`` through the disturbance input, and a positivity block.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .lft_model import ClosedLoopLft, LftPlant, validate_plant
from .lmi import LmiProgram, MatExpr, bmat, blkdiag, rect, scaling, sym, sym_bmat

FEAS_EPS = 1e-7


def _require_discrete(ts):
    if not ts > 0:
        raise ValueError("synthesis and analysis require a discrete-time system (ts > 0)")


def build_analysis(clp: ClosedLoopLft, eps: float = FEAS_EPS) -> LmiProgram:
    """Scaled state-space conditions certifying a robust H2 bound for ``clp``.

    For ``P`` in ``{P_-, P_+}``::

        diag(P, X, I) - N diag(P, X) N^T > 0,   N = [A B0; C0 D00; C1 D10]
        [Q  B1^T; B1  P_+ - P_-] > 0

    with one scaling ``X`` shared by both Lyapunov blocks.
    """
    _require_discrete(clp.ts)
    n, npp, nd, ne = clp.n, clp.np, clp.nd, clp.ne
    if clp.structure.n_p != npp:
        raise DimensionMismatch(f"structure dimension {clp.structure.n_p} != np {npp}")
    if np.any(clp.D01 != 0) or np.any(clp.D11 != 0):
        raise DimensionMismatch("analysis requires D01 = 0 and D11 = 0")
    Pm, Pp, Q = sym("P_minus", n), sym("P_plus", n), sym("Q", nd)
    variables = [Pm, Pp, Q]
    X = None
    if npp:
        X = scaling("X", clp.structure)
        variables.append(X)
    prog = LmiProgram(variables, name="analysis")
    Nx = np.vstack([clp.A, clp.C0, clp.C1])
    Np = np.vstack([clp.B0, clp.D00, clp.D10])

    def lyap(P):
        if npp:
            lhs = blkdiag(P, X, np.eye(ne)) if ne else blkdiag(P, X)
            return lhs - Nx @ P @ Nx.T - Np @ X @ Np.T
        lhs = blkdiag(P, np.eye(ne)) if ne else P.expr()
        return lhs - Nx @ P @ Nx.T

    prog.add_constraint("lyap_minus", lyap(Pm), eps=eps)
    prog.add_constraint("lyap_plus", lyap(Pp), eps=eps)
    prog.add_constraint("schur", sym_bmat([[Q], [clp.B1, Pp - Pm]]), eps=eps)
    prog.add_constraint("positivity", blkdiag(Pm, X) if npp else Pm.expr(), eps=eps)
    prog.objective = {"Q": np.eye(nd)}
    return prog


def build_sf_synthesis(plant: LftPlant, eps: float = FEAS_EPS) -> LmiProgram:
    """State-feedback conditions in ``V``, ``M`` (``F = M V^{-1}``).

    The (2,5) block is ``X D10^T``.  That is what the congruence
    ``diag(V^T, X, I, I, I)`` of the analysis inequality produces; a transcription
    with ``X D12^T`` would not even be dimensionally consistent in general.
    """
    validate_plant(plant)
    _require_discrete(plant.ts)
    n, npp, nd, ne, nu = plant.n, plant.np, plant.nd, plant.ne, plant.nu
    Pm, Pp, Q = sym("P_minus", n), sym("P_plus", n), sym("Q", nd)
    V, M = rect("V", n, n), rect("M", nu, n)
    variables = [Pm, Pp, Q, V, M]
    X = None
    if npp:
        X = scaling("X", plant.structure)
        variables.append(X)
    prog = LmiProgram(variables, name="state_feedback")

    AV = plant.A @ V + plant.B2 @ M
    C0V = plant.C0 @ V + plant.D02 @ M
    C1V = plant.C1 @ V + plant.D12 @ M

    def big(P):
        top = V + V.T - P
        rows = [[top]]
        if npp:
            rows.append([None, X.expr()])
            rows.append([AV, plant.B0 @ X, P.expr()])
            rows.append([C0V, plant.D00 @ X, None, X.expr()])
            if ne:
                rows.append([C1V, plant.D10 @ X, None, None, np.eye(ne)])
        else:
            rows.append([AV, P.expr()])
            if ne:
                rows.append([C1V, None, np.eye(ne)])
        return sym_bmat(rows)

    prog.add_constraint("lmi_plus", big(Pp), eps=eps)
    prog.add_constraint("lmi_minus", big(Pm), eps=eps)
    prog.add_constraint("schur", sym_bmat([[Q], [plant.B1, Pp - Pm]]), eps=eps)
    prog.add_constraint("positivity", blkdiag(Pm, X) if npp else Pm.expr(), eps=eps)
    prog.objective = {"Q": np.eye(nd)}
    return prog


# ---------------------------------------------------------------------------
# gain scheduling


def _khat_matrix(hat: dict, npp: int, ny: int, nu: int):
    """[[Ak, Bk1, Bk0], [Ck1, 0, Dk10], [Ck0, 0, Dk00]] from numeric or symbolic parts."""
    return bmat([[hat["Ak"], hat["Bk1"], hat["Bk0"]],
                 [hat["Ck1"], np.zeros((nu, ny)), hat["Dk10"]],
                 [hat["Ck0"], np.zeros((npp, ny)), hat["Dk00"]]])


def gs_outer_factors(plant: LftPlant):
    """Constant left/right factors of the second term of the G and H21 assemblies."""
    n, npp, ne, nu, ny = plant.n, plant.np, plant.ne, plant.nu, plant.ny
    Z, I = np.zeros, np.eye
    left = np.block([
        [Z((n, n)), plant.B2, Z((n, npp))],
        [I(n), Z((n, nu)), Z((n, npp))],
        [Z((npp, n)), Z((npp, nu)), I(npp)],
        [Z((npp, n)), plant.D02, Z((npp, npp))],
        [Z((ne, n)), plant.D12, Z((ne, npp))],
    ])
    right = np.block([
        [I(n), Z((n, n)), Z((n, npp)), Z((n, npp))],
        [Z((ny, n)), plant.C2, plant.D20, Z((ny, npp))],
        [Z((npp, n)), Z((npp, n)), Z((npp, npp)), I(npp)],
    ])
    return left, right


def gs_constant_term(plant: LftPlant, R, S, L, J):
    """First term of the G assembly.  Works on numbers or on MatExpr/Var operands.

    Row block layout (heights n, n, np, np, ne) by column blocks (n, n, np, np)::

        [A S,   A,    B0,    B0 J ]
        [0,     R A,  R B0,  0    ]
        [0,     L C0, L D00, 0    ]
        [C0 S,  C0,   D00,   D00 J]
        [C1 S,  C1,   D10,   D10 J]

    The third row is read as ``[0, L C0, L D00, 0]`` so that it agrees with the
    congruence ``W1^T C0cl V Z`` used to derive the condition.
    """
    p = plant
    n, npp, ne = p.n, p.np, p.ne

    mul = lambda a, b: a @ b
    rows = [
        [mul(p.A, S), p.A, p.B0, mul(p.B0, J)],
        [np.zeros((n, n)), mul(R, p.A), mul(R, p.B0), np.zeros((n, npp))],
        [np.zeros((npp, n)), mul(L, p.C0), mul(L, p.D00), np.zeros((npp, npp))],
        [mul(p.C0, S), p.C0, p.D00, mul(p.D00, J)],
    ]
    if ne:
        rows.append([mul(p.C1, S), p.C1, p.D10, mul(p.D10, J)])
    return rows


def gs_G_matrix(plant: LftPlant, R, S, L, J, hat):
    """``G = const(R, S, L, J) + left @ Khat @ right``, numeric or symbolic."""
    left, right = gs_outer_factors(plant)
    const_rows = gs_constant_term(plant, R, S, L, J)
    symbolic = any(not isinstance(h, np.ndarray) for h in hat.values()) or \
        any(not isinstance(v, np.ndarray) for v in (R, S, L, J))
    if symbolic:
        K = _khat_matrix(hat, plant.np, plant.ny, plant.nu)
        return bmat(const_rows) + left @ K @ right
    K = np.block([[hat["Ak"], hat["Bk1"], hat["Bk0"]],
                  [hat["Ck1"], np.zeros((plant.nu, plant.ny)), hat["Dk10"]],
                  [hat["Ck0"], np.zeros((plant.np, plant.ny)), hat["Dk00"]]])
    return np.block([[np.asarray(b, dtype=float) for b in r] for r in const_rows]) + left @ K @ right


def gs_H21(plant: LftPlant, R, hat):
    """``H21 = [B1; R B1] + [[0, B2, 0], [I, 0, 0]] Khat [0; D21; 0]``."""
    n, npp, nu = plant.n, plant.np, plant.nu
    left = np.block([[np.zeros((n, n)), plant.B2, np.zeros((n, npp))],
                     [np.eye(n), np.zeros((n, nu)), np.zeros((n, npp))]])
    right = np.vstack([np.zeros((n, plant.nd)), plant.D21, np.zeros((npp, plant.nd))])
    numeric = all(isinstance(h, np.ndarray) for h in hat.values()) and isinstance(R, np.ndarray)
    if numeric:
        K = np.block([[hat["Ak"], hat["Bk1"], hat["Bk0"]],
                      [hat["Ck1"], np.zeros((nu, plant.ny)), hat["Dk10"]],
                      [hat["Ck0"], np.zeros((npp, plant.ny)), hat["Dk00"]]])
        return np.vstack([plant.B1, R @ plant.B1]) + left @ K @ right
    K = _khat_matrix(hat, npp, plant.ny, nu)
    return bmat([[plant.B1], [R @ plant.B1]]) + left @ K @ right


HAT_NAMES = ("Ak", "Bk1", "Bk0", "Ck1", "Ck0", "Dk10", "Dk00")


def hat_shapes(plant: LftPlant) -> dict:
    n, npp, nu, ny = plant.n, plant.np, plant.nu, plant.ny
    return {"Ak": (n, n), "Bk1": (n, ny), "Bk0": (n, npp), "Ck1": (nu, n),
            "Ck0": (npp, n), "Dk10": (nu, npp), "Dk00": (npp, npp)}


def build_gs_synthesis(plant: LftPlant, eps: float = FEAS_EPS) -> LmiProgram:
    """Gain-scheduled output-feedback conditions (controller order n, scalings L, J)."""
    validate_plant(plant)
    _require_discrete(plant.ts)
    n, npp, nd, ne = plant.n, plant.np, plant.nd, plant.ne
    Tp, Tm, Q = sym("T_plus", 2 * n), sym("T_minus", 2 * n), sym("Q", nd)
    R, S, U = rect("R", n, n), rect("S", n, n), rect("U", n, n)
    hat = {k: rect("hat_" + k, *shp) for k, shp in hat_shapes(plant).items()}
    variables = [Tp, Tm, Q, R, S, U]
    L = J = None
    if npp:
        L, J = scaling("L", plant.structure), scaling("J", plant.structure)
        variables += [L, J]
    variables += [v for v in hat.values() if v.ncoords]
    prog = LmiProgram(variables, name="gain_scheduling")

    Lx = L.expr() if npp else np.zeros((0, 0))
    Jx = J.expr() if npp else np.zeros((0, 0))
    hat_e = {k: (v.expr() if v.ncoords else np.zeros(v.shape)) for k, v in hat.items()}
    G = gs_G_matrix(plant, R.expr(), S.expr(), Lx, Jx, hat_e)
    r = np.cumsum([0, n, n, npp, npp, ne])
    G3 = G[r[0]:r[2], :]
    G4 = G[r[2]:r[4], :]
    G5 = G[r[4]:r[5], :]
    I = np.eye(n)
    Y11 = bmat([[S + S.T, I + U.T], [U + I, R.T + R]])
    Y22 = bmat([[L, np.eye(npp)], [np.eye(npp), J]]) if npp else None
    H21 = gs_H21(plant, R.expr(), hat_e)

    def big(T):
        if npp:
            # G columns: first 2n against the state block, last 2np against the scaling block
            G31, G32 = G3[:, :2 * n], G3[:, 2 * n:]
            G41, G42 = G4[:, :2 * n], G4[:, 2 * n:]
            rows = [[Y11 - T], [None, Y22], [G31, G32, T.expr()], [G41, G42, None, Y22]]
            if ne:
                G51, G52 = G5[:, :2 * n], G5[:, 2 * n:]
                rows.append([G51, G52, None, None, np.eye(ne)])
        else:
            rows = [[Y11 - T], [G3, T.expr()]]
            if ne:
                rows.append([G5, None, np.eye(ne)])
        return sym_bmat(rows)

    prog.add_constraint("lmi_plus", big(Tp), eps=eps)
    prog.add_constraint("lmi_minus", big(Tm), eps=eps)
    prog.add_constraint("schur", sym_bmat([[Q], [H21, Tp - Tm]]), eps=eps)
    prog.add_constraint("positivity", Tm.expr(), eps=eps)
    prog.objective = {"Q": np.eye(nd)}
    return prog
