"""Standard-form SDPs and an infeasible-start primal-dual interior-point solver.

Problem (LMI form, all ``x`` free)::

    minimize  c^T x   s.t.  F_b(x) = F0_b + sum_k x_k F_kb  >= 0   for every block b

with dual ``maximize -sum_b <F0_b, Z_b>`` s.t. ``sum_b <F_kb, Z_b> = c_k``, ``Z_b >= 0``.
Search directions are Nesterov-Todd with Mehrotra predictor-corrector; the
normal equations are solved through a QR factorization of the scaled
constraint matrix, which keeps their conditioning at the square root of the
explicit Schur complement.  Primal
infeasibility is detected from a normalized dual improving ray.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .lmi import LmiProgram, coefficients, eval_expr

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SdpBlock:
    F0: np.ndarray          # (b, b)
    idx: np.ndarray         # coordinates with a nonzero coefficient in this block
    F: np.ndarray           # (len(idx), b, b)
    name: str = ""

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    def value(self, x) -> np.ndarray:
        if len(self.idx) == 0:
            return self.F0.copy()
        return self.F0 + np.tensordot(x[self.idx], self.F, axes=1)


@dataclass
class StandardSdp:
    c: np.ndarray
    blocks: list

    @property
    def m(self) -> int:
        return self.c.size

    @property
    def block_sizes(self) -> list:
        return [b.size for b in self.blocks]

    def value(self, x) -> list:
        return [b.value(np.asarray(x, dtype=float)) for b in self.blocks]

    def adjoint(self, Z) -> np.ndarray:
        out = np.zeros(self.m)
        for b, Zb in zip(self.blocks, Z):
            if len(b.idx):
                out[b.idx] += np.tensordot(b.F, Zb, axes=([1, 2], [0, 1]))
        return out

    def to_sdpa(self) -> str:
        """Sparse SDPA text.  SDPA's primal is ``sum x_k F_k - F_0 >= 0``, so F_0 flips sign."""
        lines = [f"{self.m}", f"{len(self.blocks)}",
                 " ".join(str(s) for s in self.block_sizes),
                 " ".join(repr(float(v)) for v in self.c)]
        for bi, b in enumerate(self.blocks, start=1):
            for i, j in zip(*np.nonzero(np.triu(b.F0))):
                lines.append(f"0 {bi} {i + 1} {j + 1} {float(-b.F0[i, j])!r}")
        for bi, b in enumerate(self.blocks, start=1):
            for k, coord in enumerate(b.idx):
                for i, j in zip(*np.nonzero(np.triu(b.F[k]))):
                    lines.append(f"{coord + 1} {bi} {i + 1} {j + 1} {float(b.F[k, i, j])!r}")
        return "\n".join(lines) + "\n"


def to_standard_form(program: LmiProgram) -> StandardSdp:
    """Scatter structured variables onto scalar coordinates; strictness margins move into F0."""
    offs = program.offsets
    blocks = []
    for con in program.constraints:
        e = con.expr
        b = e.shape[0]
        F0 = 0.5 * (e.const + e.const.T) - con.margin * np.eye(b)
        idx, mats = [], []
        for v, coef in coefficients(e).values():
            coef = 0.5 * (coef + coef.transpose(0, 2, 1))
            nz = np.any(coef != 0, axis=(1, 2))
            idx.append(offs[v.name] + np.nonzero(nz)[0])
            mats.append(coef[nz])
        if idx:
            idx = np.concatenate(idx)
            F = np.concatenate(mats, axis=0)
            order = np.argsort(idx, kind="stable")
            idx, F = idx[order], F[order]
            # a variable may enter through several terms: merge duplicates
            uniq, start = np.unique(idx, return_index=True)
            if len(uniq) != len(idx):
                F = np.add.reduceat(F, start, axis=0)
                idx = uniq
        else:
            idx, F = np.zeros(0, dtype=int), np.zeros((0, b, b))
        blocks.append(SdpBlock(F0, idx.astype(int), F, con.name))
    return StandardSdp(program.objective_vector(), blocks)


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    objective: float
    dual_objective: float
    margins: list
    iterations: int
    gap: float
    Z: list = field(default_factory=list, repr=False)
    primal_residual: float = np.nan
    dual_residual: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


@dataclass
class SolverOptions:
    tol: float = 1e-7
    max_iter: int = 200
    feas_margin: float = 1e-7
    step_fraction: float = 0.98
    verbose: bool = False


def _max_step(X, dX):
    """Largest alpha with X + alpha dX >= 0 (X positive definite)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    M = Li @ dX @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _margins(sdp, x):
    return [float(np.linalg.eigvalsh(V)[0]) if V.size else np.inf for V in sdp.value(x)]


def _dependent_coordinates(sdp: StandardSdp, rtol: float = 1e-11):
    """Coordinates whose coefficient matrices are combinations of the others.

    Returns ``(keep, ok)``: a sorted index array of independent coordinates,
    and whether the objective is constant along every null direction (if not,
    the problem is unbounded or ill-posed).  ``keep`` is None at full rank.
    """
    m = sdp.m
    rows = []
    for b in sdp.blocks:
        i, j = np.triu_indices(b.size)
        w = np.where(i == j, 1.0, np.sqrt(2.0))
        M = np.zeros((len(i), m))
        if len(b.idx):
            M[:, b.idx] = (b.F[:, i, j] * w).T
        rows.append(M)
    A = np.vstack(rows) if rows else np.zeros((0, m))
    norms = np.linalg.norm(A, axis=0)
    A = A / np.where(norms > 0, norms, 1.0)
    R, piv = sla.qr(A, mode="r", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R)) if R.size else np.zeros(0)
    r = int(np.sum(d > rtol * d[0])) if d.size else 0
    if r == m:
        return None, True
    keep, drop = piv[:r], piv[r:]
    # null vectors: v[drop_j] = 1, v[keep] = -R11^{-1} R12 e_j (in column-normalized coordinates)
    Nk = -sla.solve_triangular(R[:r, :r], R[:r, r:m]) if r else np.zeros((0, m - r))
    cn = sdp.c / np.where(norms > 0, norms, 1.0)
    slope = cn[drop] + cn[keep] @ Nk
    scale = (1.0 + np.abs(Nk).sum(axis=0)) * max(np.abs(cn).max(initial=0.0), 1e-300)
    ok = bool(np.all(np.abs(slope) <= 1e-9 * scale))
    return np.sort(keep), ok


def _restrict(sdp: StandardSdp, keep) -> StandardSdp:
    pos = -np.ones(sdp.m, dtype=int)
    pos[keep] = np.arange(len(keep))
    blocks = []
    for b in sdp.blocks:
        sel = pos[b.idx] >= 0
        blocks.append(SdpBlock(b.F0, pos[b.idx][sel], b.F[sel], b.name))
    return StandardSdp(sdp.c[keep], blocks)


def solve(sdp: StandardSdp, options: SolverOptions | None = None, **kw) -> SdpSolution:
    opts = options or SolverOptions(**{k: v for k, v in kw.items() if k != "_reduced"})
    m = sdp.m
    if m and sdp.blocks and not kw.get("_reduced"):
        keep, ok = _dependent_coordinates(sdp)
        if not ok:
            return SdpSolution(NUMERICAL_FAILURE, np.zeros(m), -np.inf, -np.inf, [], 0, np.inf)
        if keep is not None:
            # dependent coordinates move nothing the constraints or objective can see: pin them at 0
            log.info("dropping %d linearly dependent coordinates", m - len(keep))
            sub = solve(_restrict(sdp, keep), opts, _reduced=True)
            x = np.zeros(m)
            x[keep] = sub.x
            return SdpSolution(sub.status, x, sub.objective, sub.dual_objective, sub.margins, sub.iterations,
                               sub.gap, sub.Z, sub.primal_residual, sub.dual_residual)
    if not sdp.blocks:
        return SdpSolution(OPTIMAL if not np.any(sdp.c) else NUMERICAL_FAILURE, np.zeros(m), 0.0, 0.0,
                           [], 0, 0.0)
    if m == 0:
        marg = _margins(sdp, np.zeros(0))
        st = OPTIMAL if min(marg) >= -opts.tol else INFEASIBLE
        return SdpSolution(st, np.zeros(0), 0.0, 0.0 if st == OPTIMAL else np.inf, marg, 0, 0.0)

    # --- scaling: per block, per coordinate, objective
    bscale = []
    for b in sdp.blocks:
        mx = max(np.abs(b.F0).max(initial=0.0), np.abs(b.F).max(initial=0.0))
        bscale.append(1.0 / mx if mx > 0 else 1.0)
    colnorm = np.zeros(m)
    for b, s in zip(sdp.blocks, bscale):
        if len(b.idx):
            colnorm[b.idx] = np.maximum(colnorm[b.idx], s * np.sqrt(np.sum(b.F ** 2, axis=(1, 2))))
    if np.any(colnorm == 0):
        unused = np.nonzero(colnorm == 0)[0]
        if np.any(sdp.c[unused] != 0):
            # a coordinate that touches no constraint but carries cost: unbounded
            return SdpSolution(NUMERICAL_FAILURE, np.zeros(m), -np.inf, -np.inf, [], 0, np.inf)
        colnorm[unused] = 1.0
    dcol = 1.0 / colnorm
    cs = sdp.c * dcol
    cmax = np.abs(cs).max()
    cscale = 1.0 / cmax if cmax > 0 else 1.0
    cs = cs * cscale
    blocks = [SdpBlock(s * b.F0, b.idx, s * b.F * dcol[b.idx][:, None, None], b.name)
              for b, s in zip(sdp.blocks, bscale)]
    P = StandardSdp(cs, blocks)
    N = sum(P.block_sizes)

    ormqr = sla.get_lapack_funcs("ormqr", (np.zeros(1),))
    x = np.zeros(m)
    S = [max(10.0, np.sqrt(b.size)) * np.eye(b.size) for b in blocks]
    Z = [max(10.0, np.sqrt(b.size)) * np.eye(b.size) for b in blocks]
    normF0 = 1.0 + np.sqrt(sum(np.sum(b.F0 ** 2) for b in blocks))
    normc = 1.0 + np.linalg.norm(cs)
    # least squares over upper triangles; off-diagonal entries weighted by sqrt(2)
    # so that the Euclidean norm of the stacked rows is the Frobenius norm
    tri = [np.triu_indices(b.size) for b in blocks]
    tw = [np.where(i == j, 1.0, np.sqrt(2.0)) for i, j in tri]
    offsets = np.cumsum([0] + [len(w) for w in tw])

    status = MAX_ITERATIONS
    it = 0
    pinf = dinf = relgap = np.inf
    best = None
    for it in range(1, opts.max_iter + 1):
        Fx = P.value(x)
        Rp = [f - s for f, s in zip(Fx, S)]
        rd = cs - P.adjoint(Z)
        trSZ = sum(np.sum(s * z) for s, z in zip(S, Z))
        mu = trSZ / N
        pobj = cs @ x
        dobj = -sum(np.sum(b.F0 * z) for b, z in zip(blocks, Z))
        pinf = np.sqrt(sum(np.sum(r ** 2) for r in Rp)) / normF0
        dinf = np.linalg.norm(rd) / normc
        relgap = max(abs(pobj - dobj), trSZ) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(pinf, dinf, relgap)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), [s.copy() for s in S], [z.copy() for z in Z], pinf, dinf, relgap)
        if opts.verbose:
            log.info("it %3d pobj %+.8e dobj %+.8e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, relgap, pinf, dinf)
        if pinf <= opts.tol and dinf <= opts.tol and relgap <= opts.tol:
            status = OPTIMAL
            break
        # dual improving ray: Z >= 0 with A*(Z) ~ 0 and <F0, Z> < 0
        if dobj > 0:
            az = np.linalg.norm(P.adjoint(Z))
            trZ = sum(np.trace(z) for z in Z)
            if dobj > 1e-8 * trZ and az / dobj < 1e-9 and dobj > 1e6 * max(1.0, abs(pobj)):
                status = INFEASIBLE
                break
            if dobj > 1e12 * (1.0 + abs(pobj)) and az / dobj < 1e-6:
                status = INFEASIBLE
                break
        if it > 20 and merit > 1e3 * best[0]:
            # iterates are drifting away from the best point found: stop
            status = NUMERICAL_FAILURE
            break

        # Nesterov-Todd scaling: R^{-1} S R^{-T} = R^T Z R = diag(lam)
        try:
            scal = []
            for s, z in zip(S, Z):
                Ls = np.linalg.cholesky(s)
                Lz = np.linalg.cholesky(z)
                _, lam, Vt = np.linalg.svd(Lz.T @ Ls)
                Rinv = (np.sqrt(lam)[:, None] * Vt) @ sla.solve_triangular(Ls, np.eye(len(s)), lower=True)
                R = Ls @ (Vt.T / np.sqrt(lam)[None, :])
                scal.append((R, Rinv, lam))
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break
        Gm = np.zeros((offsets[-1], m))
        Gs, Rps = [], []
        for bi, (b, (R, Rinv, lam), r) in enumerate(zip(blocks, scal, Rp)):
            nb = b.size
            Rps.append(Rinv @ r @ Rinv.T)
            if len(b.idx):
                G = np.matmul(np.matmul(Rinv, b.F), Rinv.T)
                Gs.append(G)
                Gm[offsets[bi]:offsets[bi + 1], b.idx] = (G[:, tri[bi][0], tri[bi][1]] * tw[bi]).T
            else:
                Gs.append(None)
        try:
            (qr_raw, tau), R1 = sla.qr(Gm, mode="raw", overwrite_a=True, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            status = NUMERICAL_FAILURE
            break
        R1 = np.triu(R1[:m, :m])
        dR = np.abs(np.diag(R1))
        if not np.all(np.isfinite(dR)) or dR.min() <= 1e-14 * dR.max():
            R1 = R1 + np.diag(np.where(dR <= 1e-14 * dR.max(), 1e-14 * dR.max(), 0.0)
                              * np.sign(np.diag(R1) + (np.diag(R1) == 0)))

        def direction(Rc):
            # Lam o (dS~ + dZ~) = Rc ; dS~ = Rp~ + sum dx G ; <G_k, dZ~> = rd_k
            Us = [2.0 * rc / (lam[:, None] + lam[None, :]) for rc, (_, _, lam) in zip(Rc, scal)]
            rhs = np.concatenate([(u - rp)[t] * w for u, rp, t, w in zip(Us, Rps, tri, tw)])
            qtb = ormqr("L", "T", qr_raw, tau, rhs[:, None], max(1, 64))[0][:m, 0]
            y = sla.solve_triangular(R1, rd, trans="T")
            dx = sla.solve_triangular(R1, qtb - y)
            for _ in range(2):
                # one refinement step on the normal equations G*(U - Rp~ - G dx) = rd
                res = -rd.copy()
                for b, u, rp, G in zip(blocks, Us, Rps, Gs):
                    if G is not None:
                        w_ = u - rp - np.tensordot(dx[b.idx], G, axes=1)
                        res[b.idx] += np.tensordot(G, w_, axes=([1, 2], [0, 1]))
                if not np.all(np.isfinite(res)):
                    break
                dx = dx + sla.solve_triangular(R1, sla.solve_triangular(R1, res, trans="T"))
            dSt, dZt = [], []
            for b, u, rp, G in zip(blocks, Us, Rps, Gs):
                ds = rp + (np.tensordot(dx[b.idx], G, axes=1) if G is not None else 0.0)
                ds = 0.5 * (ds + ds.T)
                dSt.append(ds)
                dZt.append(0.5 * ((u - ds) + (u - ds).T))
            return dx, dSt, dZt

        def steps(dSt, dZt):
            a_p = a_d = np.inf
            for (_, _, lam), ds, dz in zip(scal, dSt, dZt):
                il = 1.0 / np.sqrt(lam)
                ev = np.linalg.eigvalsh(il[:, None] * ds * il[None, :])[0]
                if ev < 0:
                    a_p = min(a_p, -1.0 / ev)
                ev = np.linalg.eigvalsh(il[:, None] * dz * il[None, :])[0]
                if ev < 0:
                    a_d = min(a_d, -1.0 / ev)
            return a_p, a_d

        # predictor
        Rc = [-np.diag(lam ** 2) for (_, _, lam) in scal]
        dx, dSt, dZt = direction(Rc)
        ap, ad = steps(dSt, dZt)
        ap, ad = min(1.0, ap), min(1.0, ad)
        newgap = sum(np.sum((np.diag(lam) + ap * a) * (np.diag(lam) + ad * b_))
                     for (_, _, lam), a, b_ in zip(scal, dSt, dZt))
        sigma = min(1.0, max(0.0, newgap / trSZ)) ** 3 if trSZ > 0 else 0.0
        # corrector
        Rc = [sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - 0.5 * (a @ b_ + b_ @ a)
              for (_, _, lam), a, b_ in zip(scal, dSt, dZt)]
        dx, dSt, dZt = direction(Rc)
        ap, ad = steps(dSt, dZt)
        ap = min(1.0, opts.step_fraction * ap)
        ad = min(1.0, opts.step_fraction * ad)
        if not (np.isfinite(ap) and np.isfinite(ad)) or not np.all(np.isfinite(dx)):
            status = NUMERICAL_FAILURE
            break
        if ap < 1e-12 and ad < 1e-12:
            status = NUMERICAL_FAILURE
            break
        x = x + ap * dx
        # primal step in the original space keeps F(x) - S exactly on its (1 - ap) path
        S = [s + ap * (r + (np.tensordot(dx[b.idx], b.F, axes=1) if len(b.idx) else 0.0))
             for s, r, b in zip(S, Rp, blocks)]
        Z = [z + ad * (Rinv.T @ dz @ Rinv) for z, (_, Rinv, _), dz in zip(Z, scal, dZt)]
        S = [0.5 * (s + s.T) for s in S]
        Z = [0.5 * (z + z.T) for z in Z]

    if status != OPTIMAL and status != INFEASIBLE and best is not None:
        _, x, S, Z, pinf, dinf, relgap = best

    x_out = x * dcol
    Z_out = [z * s / cscale for z, s in zip(Z, bscale)]
    marg = _margins(sdp, x_out)
    obj = float(sdp.c @ x_out)
    dobj_out = -sum(float(np.sum(b.F0 * z)) for b, z in zip(sdp.blocks, Z_out))
    if status in (MAX_ITERATIONS, NUMERICAL_FAILURE) and min(marg) >= -opts.tol and pinf <= 1e-5:
        status = FEASIBLE
    if status in (OPTIMAL, FEASIBLE) and min(marg) < -1e-8 * max(1.0, max(np.abs(b.F0).max(initial=0) for b in sdp.blocks)):
        status = NUMERICAL_FAILURE if status == FEASIBLE else status
    return SdpSolution(status, x_out, obj, dobj_out, marg, it, float(relgap), Z_out,
                       float(pinf), float(dinf))


@dataclass
class MarginReport:
    margins: dict
    objective: float

    @property
    def min_margin(self) -> float:
        return min(self.margins.values()) if self.margins else np.inf

    @property
    def feasible(self) -> bool:
        return all(v > 0 for v in self.margins.values())


def check_solution(program: LmiProgram, assignment: dict, tol: float = 0.0) -> MarginReport:
    """Minimum eigenvalue of each (raw, unshifted) constraint at an assignment."""
    margins = {}
    for con in program.constraints:
        V = eval_expr(con.expr, assignment)
        margins[con.name] = float(np.linalg.eigvalsh(0.5 * (V + V.T))[0]) if V.size else np.inf
    obj = program.objective_value(assignment) if program.objective else 0.0
    return MarginReport(margins, obj)


def solve_program(program: LmiProgram, options: SolverOptions | None = None):
    """Convenience: standard form, solve, scatter back.  Returns (solution, assignment)."""
    sdp = to_standard_form(program)
    sol = solve(sdp, options)
    return sol, program.scatter(sol.x)
