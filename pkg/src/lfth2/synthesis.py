"""Robust H2 analysis, state-feedback synthesis and gain-scheduled synthesis."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import conditions as cond
from .errors import IllConditionedV, Infeasible, SingularFactor, SolverFailure
from .lft_model import (ClosedLoopLft, LftController, LftPlant, ScalingValue, UncertaintyStructure,
                        assemble_scaling, close_output_feedback, close_state_feedback, closed_loop_similarity,
                        extract_scaling, plant_similarity, validate_plant)
from .lmi import Constraint, LmiProgram, max_margin_program
from .sdp import FEASIBLE, INFEASIBLE, SdpSolution, SolverOptions, check_solution, solve, to_standard_form

log = logging.getLogger(__name__)


@dataclass
class AnalysisCertificate:
    P_minus: np.ndarray
    P_plus: np.ndarray
    X: np.ndarray            # full n_p x n_p scaling matrix (empty when n_p = 0)
    Q: np.ndarray
    gamma: float
    margins: dict
    structure: UncertaintyStructure
    status: str = "optimal"
    iterations: int = 0

    @property
    def scaling(self) -> ScalingValue | None:
        if self.X.size == 0:
            return None
        return ScalingValue(self.structure, extract_scaling(self.structure, self.X))


@dataclass
class SfSynthesisResult:
    F: np.ndarray
    gamma: float
    variables: dict
    margins: dict
    status: str = "optimal"
    gamma_verified: float | None = None


@dataclass
class GsSynthesisResult:
    controller: LftController
    gamma: float
    variables: dict
    M: np.ndarray
    N: np.ndarray
    L2: np.ndarray
    J2: np.ndarray
    X_cl: np.ndarray
    margins: dict
    roundtrip_error: float
    status: str = "optimal"
    gamma_verified: float | None = None
    perturbed: bool = False
    extras: dict = field(default_factory=dict)


# multiples of the stalled objective tried when looking for an interior point
BACKOFF_FACTORS = (1.0001, 1.001, 1.01, 1.1, 2.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6)


# factor applied to the strictness margins when the first solve gives no certificate
RELAXED_MARGIN = 1e-3


def _relaxed(prog: LmiProgram, factor: float) -> LmiProgram:
    cons = [Constraint(c.name, c.expr, c.margin * factor) for c in prog.constraints]
    return LmiProgram(prog.variables, cons, dict(prog.objective), prog.name)


def _solve(prog, opts):
    """Solve, falling back to thinner strictness margins and then to a most-interior point.

    Optimal H2 certificates often sit where the eigenvalue margins are tiny
    relative to the data (slow weights leave Lyapunov inequalities almost no
    slack).  When the first solve does not return a point with positive raw
    margins, the strictness margins are relaxed by :data:`RELAXED_MARGIN` and
    the problem is solved again.  If that also fails, the constraints are
    shifted by ``t I`` and ``t`` is maximized with the objective capped at
    growing multiples of the stalled value.  Any point with positive raw
    margins is a valid certificate.
    """
    opts = opts or SolverOptions()
    sol: SdpSolution = solve(to_standard_form(prog), opts)
    values = prog.scatter(sol.x)
    report = check_solution(prog, values)
    if sol.ok and report.min_margin > 0:
        return sol, values, report
    first = sol
    thin = _relaxed(prog, RELAXED_MARGIN)
    sol = solve(to_standard_form(thin), opts)
    values = prog.scatter(sol.x)
    report = check_solution(prog, values)
    log.info("%s: relaxed margins status %s margin %.3e", prog.name, sol.status, report.min_margin)
    if sol.status != INFEASIBLE and report.min_margin > 0:
        return sol if sol.ok else replace(sol, status=FEASIBLE), values, report
    ref = max(abs(first.objective), abs(first.dual_objective), 1e-12) if np.isfinite(first.objective) else 1.0
    best_t = -np.inf
    for f in BACKOFF_FACTORS:
        mp = max_margin_program(thin, f * ref)
        s2 = solve(to_standard_form(mp), opts)
        v2 = mp.scatter(s2.x)
        best_t = max(best_t, float(v2.pop("_margin")[0, 0]))
        r2 = check_solution(prog, v2)
        log.info("%s: backoff cap %.3e status %s margin %.3e", prog.name, f * ref, s2.status, r2.min_margin)
        if r2.min_margin > 0:
            return SdpSolution(FEASIBLE, s2.x[:-1], r2.objective, first.dual_objective, list(r2.margins.values()),
                               first.iterations + s2.iterations, abs(r2.objective - first.dual_objective)), v2, r2
    if first.status == INFEASIBLE or best_t < -1e-6:
        raise Infeasible(f"{prog.name}: no certificate exists in this LMI class")
    if not first.ok:
        raise SolverFailure(f"{prog.name}: solver returned {first.status} after {first.iterations} iterations")
    # strictness margins were eaten by round-off: not a certificate
    raise SolverFailure(f"{prog.name}: solution violates a constraint (margin {report.min_margin:.3e})")


def nominal_whitening(plant: LftPlant):
    """State similarity that turns the nominal LQ cost-to-go into the identity.

    Weighted plants mix time scales (slow weights next to fast actuators), and
    the synthesis LMIs are far better conditioned in these coordinates.
    Returns ``None`` when the Riccati equation has no usable solution.
    """
    n = plant.n
    if n == 0 or plant.nu == 0:
        return None
    Qc = plant.C1.T @ plant.C1
    Rc = plant.D12.T @ plant.D12
    Sc = plant.C1.T @ plant.D12
    Qc = Qc + 1e-9 * max(1.0, np.abs(Qc).max()) * np.eye(n)
    Rc = Rc + 1e-9 * max(1.0, np.abs(Rc).max()) * np.eye(plant.nu)
    try:
        X = sla.solve_discrete_are(plant.A, plant.B2, Qc, Rc, s=Sc)
    except (np.linalg.LinAlgError, ValueError):
        return None
    ev, U = np.linalg.eigh(0.5 * (X + X.T))
    if not np.all(np.isfinite(ev)) or ev[-1] <= 0:
        return None
    ev = np.maximum(ev, 1e-12 * ev[-1])
    T = U @ np.diag(ev ** -0.5)
    return T / abs(np.linalg.det(T)) ** (1.0 / n)


def _reg_dare(A, B, Q, R, S):
    n, m = B.shape
    Q = Q + 1e-9 * max(1.0, np.abs(Q).max()) * np.eye(n)
    R = R + 1e-9 * max(1.0, np.abs(R).max()) * np.eye(m)
    try:
        X = sla.solve_discrete_are(A, B, Q, R, s=S)
    except (np.linalg.LinAlgError, ValueError):
        return None
    X = 0.5 * (X + X.T)
    return X if np.all(np.isfinite(X)) else None


def riccati_balancing(plant: LftPlant):
    """State similarity ``T`` and disturbance scale ``alpha`` for output feedback.

    ``T`` turns the nominal control Riccati solution into the identity.
    Replacing ``d`` by ``alpha d`` and ``e`` by ``e / alpha`` leaves every
    closed-loop map ``d -> e`` unchanged; ``alpha`` is picked so that the
    filter Riccati solution has unit geometric mean in the new coordinates.
    Returns ``(None, 1.0)`` when either Riccati equation has no usable solution.
    """
    n = plant.n
    if n == 0 or plant.nu == 0 or plant.ny == 0 or plant.nd == 0:
        return None, 1.0
    X = _reg_dare(plant.A, plant.B2, plant.C1.T @ plant.C1, plant.D12.T @ plant.D12, plant.C1.T @ plant.D12)
    Y = _reg_dare(plant.A.T, plant.C2.T, plant.B1 @ plant.B1.T, plant.D21 @ plant.D21.T, plant.B1 @ plant.D21.T)
    if X is None or Y is None:
        return None, 1.0
    ev, U = np.linalg.eigh(X)
    if ev[-1] <= 0:
        return None, 1.0
    T = U @ np.diag(np.maximum(ev, 1e-12 * ev[-1]) ** -0.5)
    Ti = np.linalg.inv(T)
    ey = np.linalg.eigvalsh(Ti @ Y @ Ti.T)
    if ey[-1] <= 0:
        return T, 1.0
    ey = np.maximum(ey, 1e-12 * ey[-1])
    return T, float(np.exp(-0.5 * np.mean(np.log(ey))))


def scale_disturbance(plant: LftPlant, alpha: float) -> LftPlant:
    """``d -> alpha d``, ``e -> e / alpha``: same closed-loop ``d -> e`` maps."""
    if alpha == 1.0:
        return plant
    return plant.replace(B1=alpha * plant.B1, D21=alpha * plant.D21, C1=plant.C1 / alpha,
                         D10=plant.D10 / alpha, D12=plant.D12 / alpha)


def gramian_whitening(clp: ClosedLoopLft):
    """Similarity that turns the nominal closed-loop input gramian into the identity."""
    n = clp.n
    if n == 0 or max(abs(np.linalg.eigvals(clp.A))) >= 1:
        return None
    B = np.hstack([clp.B1, clp.B0])
    W = sla.solve_discrete_lyapunov(clp.A, B @ B.T + 1e-9 * max(1.0, np.abs(B).max() ** 2) * np.eye(n))
    ev, U = np.linalg.eigh(0.5 * (W + W.T))
    if not np.all(np.isfinite(ev)) or ev[0] <= 0:
        return None
    T = U @ np.diag(np.sqrt(ev))
    return T / abs(np.linalg.det(T)) ** (1.0 / n)


def _sqrt_psd(P):
    ev, U = np.linalg.eigh(0.5 * (P + P.T))
    if ev[0] <= 0:
        return None
    return U @ np.diag(np.sqrt(ev)) @ U.T


def analyze_robust_h2(clp: ClosedLoopLft, opts: SolverOptions | None = None,
                      transform="auto") -> AnalysisCertificate:
    """Smallest certified robust H2 bound; ``gamma = sqrt(tr Q)``.

    ``transform`` is a state similarity ``x = T z`` used while solving
    (``"auto"``: whiten the nominal input gramian; ``None``: none).  The
    returned ``P_minus``/``P_plus`` are always in the original coordinates.
    Raises :class:`Infeasible` when no scaled quadratic certificate exists,
    which does not by itself prove the loop unstable.
    """
    rho = max(abs(np.linalg.eigvals(clp.A)), default=0.0)
    if clp.ts > 0 and rho >= 1.0:
        # a certificate implies stability at Delta = 0, which is in the set
        raise Infeasible(f"analysis: nominal loop has spectral radius {rho:.6g} >= 1")
    T = gramian_whitening(clp) if isinstance(transform, str) else transform
    work = clp if T is None else closed_loop_similarity(clp, T)
    prog = cond.build_analysis(work)
    sol, v, report = _solve(prog, opts)
    Pm, Pp = v["P_minus"], v["P_plus"]
    if T is not None:
        Pm, Pp = T @ Pm @ T.T, T @ Pp @ T.T
    X = v.get("X", np.zeros((0, 0)))
    Q = v["Q"]
    return AnalysisCertificate(Pm, Pp, X, Q, float(np.sqrt(max(np.trace(Q), 0.0))),
                               report.margins, clp.structure, sol.status, sol.iterations)


def _sf_once(plant: LftPlant, T, opts):
    work = plant if T is None else plant_similarity(plant, T)
    prog = cond.build_sf_synthesis(work)
    sol, v, report = _solve(prog, opts)
    V = v["V"]
    s = np.linalg.svd(V, compute_uv=False)
    if s[-1] < 1e-9 * s[0]:
        raise IllConditionedV(f"sigma_min(V)/sigma_max(V) = {s[-1] / s[0]:.2e}")
    F = np.linalg.solve(V.T, v["M"].T).T
    if T is not None:
        F = np.linalg.solve(T.T, F.T).T
        v = dict(v, V=T @ V @ T.T, M=v["M"] @ T.T, P_plus=T @ v["P_plus"] @ T.T,
                 P_minus=T @ v["P_minus"] @ T.T)
    return SfSynthesisResult(F, float(np.sqrt(max(np.trace(v["Q"]), 0.0))), v, report.margins, sol.status)


def _unit_det(T):
    return T / abs(np.linalg.det(T)) ** (1.0 / len(T))


def synthesize_sf(plant: LftPlant, opts: SolverOptions | None = None, verify: bool = True,
                  precondition=True, refine: int = 3) -> SfSynthesisResult:
    """Robust state feedback ``u = F x`` with ``F = M V^{-1}``.

    With ``precondition`` (True or an explicit ``T``) the LMIs are solved in
    coordinates from :func:`nominal_whitening`; ``F`` and the returned
    variables are mapped back (``V -> T V T^T``, ``M -> M T^T``,
    ``P -> T P T^T``), margins stay those of the solved problem.  When the
    optimizer had to back off to an interior point, up to ``refine`` further
    solves are made in coordinates where the last ``P_plus`` is the identity,
    keeping the smallest bound.
    """
    validate_plant(plant)
    if isinstance(precondition, np.ndarray):
        T = precondition
    else:
        T = nominal_whitening(plant) if precondition else None
    res = _sf_once(plant, T, opts)
    for _ in range(refine if res.status == FEASIBLE else 0):
        Tn = _sqrt_psd(res.variables["P_plus"])
        if Tn is None:
            break
        try:
            nxt = _sf_once(plant, _unit_det(Tn), opts)
        except (SolverFailure, IllConditionedV):
            break
        if nxt.gamma >= res.gamma * (1 - 1e-3):
            res = nxt if nxt.gamma < res.gamma else res
            break
        res = nxt
    if verify:
        # the synthesis certificate is feasible for the analysis problem; its
        # P_plus gives well-balanced coordinates for the check
        Tv = _sqrt_psd(res.variables["P_plus"])
        res.gamma_verified = analyze_robust_h2(close_state_feedback(plant, res.F), opts,
                                               transform=Tv if Tv is not None else "auto").gamma
    return res


# ---------------------------------------------------------------------------
# gain-scheduling recovery


def _blocks3(plant: LftPlant, v: dict, M, N, L2, J2):
    """The constant part and the two bordered factors of the controller transformation."""
    n, npp, nu, ny = plant.n, plant.np, plant.nu, plant.ny
    R, S = v["R"], v["S"]
    L = v.get("L", np.zeros((0, 0)))
    J = v.get("J", np.zeros((0, 0)))
    Z = np.zeros
    K0 = np.block([[R @ plant.A @ S, Z((n, ny)), R @ plant.B0 @ J],
                   [Z((nu, n)), Z((nu, ny)), Z((nu, npp))],
                   [L @ plant.C0 @ S, Z((npp, ny)), L @ plant.D00 @ J]])
    left = np.block([[M, R @ plant.B2, Z((n, npp))],
                     [Z((nu, n)), np.eye(nu), Z((nu, npp))],
                     [Z((npp, n)), L @ plant.D02, L2]])
    right = np.block([[N, Z((n, ny)), Z((n, npp))],
                      [plant.C2 @ S, np.eye(ny), plant.D20 @ J],
                      [Z((npp, n)), Z((npp, ny)), J2.T]])
    return K0, left, right


def hat_matrix(plant: LftPlant, hat: dict) -> np.ndarray:
    return LftController(**hat).matrix()


def forward_transform(plant: LftPlant, K: LftController, v: dict, M, N, L2, J2) -> dict:
    """Hat variables produced by a controller: ``K0 + left K right``."""
    K0, left, right = _blocks3(plant, v, M, N, L2, J2)
    H = K0 + left @ K.matrix() @ right
    c = LftController.from_matrix(H, plant.n, plant.nu, plant.ny, plant.np)
    return {k: getattr(c, k) for k in cond.HAT_NAMES}


def _sing_ok(A):
    if A.size == 0:
        return True
    s = np.linalg.svd(A, compute_uv=False)
    return s[-1] >= 1e-9 * s[0]


def recover_gs_controller(v: dict, plant: LftPlant):
    """Invert the controller transformation with ``N = I, M = U - R S, J2 = I, L2 = I - L J``.

    Returns ``(controller, M, N, L2, J2)``.  Raises :class:`SingularFactor`
    when ``M`` or ``L2`` is numerically singular.
    """
    n, npp = plant.n, plant.np
    R, S, U = v["R"], v["S"], v["U"]
    L = v.get("L", np.zeros((0, 0)))
    J = v.get("J", np.zeros((0, 0)))
    M = U - R @ S
    N = np.eye(n)
    J2 = np.eye(npp)
    L2 = np.eye(npp) - L @ J
    if not _sing_ok(M):
        raise SingularFactor("M = U - R S is numerically singular")
    if not _sing_ok(L2):
        raise SingularFactor("L2 = I - L J is numerically singular")
    K0, left, right = _blocks3(plant, v, M, N, L2, J2)
    hat = {k: v["hat_" + k] if "hat_" + k in v else np.zeros(s) for k, s in cond.hat_shapes(plant).items()}
    H = hat_matrix(plant, hat)
    K = np.linalg.solve(left, H - K0)
    K = np.linalg.solve(right.T, K.T).T
    c = LftController.from_matrix(K, n, plant.nu, plant.ny, npp)
    # the two structural zero blocks come out exactly zero up to round-off; pin them
    return c, M, N, L2, J2


def completed_scaling(L, J, L2, J2) -> np.ndarray:
    """``X = W2 W1^{-1}`` with ``W1 = [L, I; L2^T, 0]``, ``W2 = [I, J; 0, J2^T]``."""
    npp = L.shape[0]
    if npp == 0:
        return np.zeros((0, 0))
    I, Z = np.eye(npp), np.zeros((npp, npp))
    W1 = np.block([[L, I], [L2.T, Z]])
    W2 = np.block([[I, J], [Z, J2.T]])
    X = np.linalg.solve(W1.T, W2.T).T
    return 0.5 * (X + X.T)


def closed_loop_lyapunov(v: dict, M, N) -> tuple:
    """Closed-loop ``P_+, P_-`` from ``T = Z^T P Z``, ``Z = [I, R^T; 0, M^T]``."""
    n = v["R"].shape[0]
    Zm = np.block([[np.eye(n), v["R"].T], [np.zeros((n, n)), M.T]])
    Zi = np.linalg.inv(Zm)
    return Zi.T @ v["T_plus"] @ Zi, Zi.T @ v["T_minus"] @ Zi


def _rel(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


def synthesize_gs(plant: LftPlant, opts: SolverOptions | None = None, verify: bool = True,
                  precondition=True) -> GsSynthesisResult:
    """Gain-scheduled LFT output feedback of order n.

    Neither a state similarity nor the ``d``/``e`` rescaling of
    :func:`scale_disturbance` changes which controllers achieve a given
    bound, so with ``precondition`` the LMIs are solved for the plant in
    :func:`riccati_balancing` coordinates.  The controller is returned for
    the original plant; the variables, factors and ``X_cl`` refer to the
    solved coordinates (``extras["transform"]``, ``extras["alpha"]``).
    """
    validate_plant(plant)
    alpha = 1.0
    if isinstance(precondition, np.ndarray):
        T = precondition
    elif precondition:
        T, alpha = riccati_balancing(plant)
    else:
        T = None
    work = scale_disturbance(plant if T is None else plant_similarity(plant, T), alpha)
    prog = cond.build_gs_synthesis(work)
    sol, v, report = _solve(prog, opts)
    perturbed = False
    try:
        K, M, N, L2, J2 = recover_gs_controller(v, work)
    except SingularFactor:
        v = dict(v)
        v["U"] = v["U"] + 1e-6 * np.eye(work.n)
        if check_solution(prog, v).min_margin <= 0:
            raise SingularFactor("degenerate factor and perturbed point is infeasible") from None
        perturbed = True
        K, M, N, L2, J2 = recover_gs_controller(v, work)
    hat = {k: v.get("hat_" + k, np.zeros(s)) for k, s in cond.hat_shapes(work).items()}
    fwd = forward_transform(work, K, v, M, N, L2, J2)
    rt = _rel(hat_matrix(work, fwd), hat_matrix(work, hat))
    Xcl = completed_scaling(v.get("L", np.zeros((0, 0))), v.get("J", np.zeros((0, 0))), L2, J2)
    res = GsSynthesisResult(K, float(np.sqrt(max(np.trace(v["Q"]), 0.0))), v, M, N, L2, J2, Xcl,
                            report.margins, rt, sol.status, perturbed=perturbed,
                            extras={"transform": T, "alpha": alpha})
    if verify:
        # as for state feedback: the synthesis P_plus, mapped back to the original
        # plant, gives well-balanced coordinates for the closed-loop check
        Pp, _ = closed_loop_lyapunov(v, M, N)
        Tb = sla.block_diag(np.eye(plant.n) if T is None else T, np.eye(plant.n))
        Tv = _sqrt_psd(Tb @ Pp @ Tb.T / alpha ** 2)
        try:
            res.gamma_verified = analyze_robust_h2(close_output_feedback(plant, K), opts,
                                                   transform=Tv if Tv is not None else "auto").gamma
        except (SolverFailure, Infeasible) as exc:
            # the design certificate stands on its own; keep it and report why the check failed
            log.warning("closed-loop verification failed: %s", exc)
            res.extras["verify_error"] = str(exc)
    return res
