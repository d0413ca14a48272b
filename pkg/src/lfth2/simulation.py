"""Time-domain simulation of closed-loop LFT systems and gain estimators."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IllPosedLoop, UnstableFrozenLoop
from .lft_model import ClosedLoopLft, UncertaintyStructure, vertex_deltas

COND_LIMIT = 1e12
CHUNK = 8          # runs per batch; fixed so results do not depend on worker count


@dataclass
class SimulationRun:
    x: np.ndarray          # (T+1, n)
    e: np.ndarray          # (T, ne)
    d: np.ndarray          # (T, nd)
    delta: str             # short description of the Delta trajectory
    seed: int | None = None

    @property
    def T(self) -> int:
        return self.e.shape[0]

    def to_csv(self, path) -> None:
        write_csv(self, path)


@dataclass
class GainEstimate:
    value: float
    kind: str                         # "white_noise_rms" | "induced_l2_lower_bound"
    standard_error: float = 0.0
    n_samples: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "kind": self.kind, "standard_error": self.standard_error,
                "n_samples": self.n_samples, **self.details}


def write_csv(run: SimulationRun, path) -> None:
    nd, ne = run.d.shape[1], run.e.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"d_{i + 1}" for i in range(nd)] + [f"e_{i + 1}" for i in range(ne)])
        for k in range(run.T):
            w.writerow([k] + [repr(float(v)) for v in run.d[k]] + [repr(float(v)) for v in run.e[k]])


# ---------------------------------------------------------------------------
# core loop


def _simulate_batch(clp: ClosedLoopLft, deltas, d, x0, keep_x=False):
    """Batched loop.  ``deltas``: (B, T, np, np) or None, ``d``: (B, T, nd), ``x0``: (B, n)."""
    B, T, _ = d.shape
    npp = clp.np
    x = np.array(x0, dtype=float)
    e = np.empty((B, T, clp.ne))
    xs = np.empty((B, T + 1, clp.n)) if keep_x else None
    D00 = clp.D00
    has_d00 = npp > 0 and np.any(D00 != 0)
    has_d01 = npp > 0 and np.any(clp.D01 != 0)
    # with ||D00|| = a < 1 and ||Delta|| <= 1, cond(I - Delta D00) <= (1 + a) / (1 - a)
    a = np.linalg.norm(D00, 2) if has_d00 else 0.0
    check_cond = has_d00 and (a >= 1 or (1 + a) / (1 - a) > COND_LIMIT)
    I = np.eye(npp)
    for k in range(T):
        dk = d[:, k]
        if keep_x:
            xs[:, k] = x
        if npp:
            q = x @ clp.C0.T
            if has_d01:
                q = q + dk @ clp.D01.T
            Dk = deltas[:, k]
            if has_d00:
                Mk = I - Dk @ D00
                if check_cond:
                    c = np.linalg.cond(Mk)
                    if np.any(~np.isfinite(c)) or np.any(c > COND_LIMIT):
                        raise IllPosedLoop(f"I - Delta D00 is ill-conditioned at step {k}", k)
                p = np.linalg.solve(Mk, np.einsum("bij,bj->bi", Dk, q)[..., None])[..., 0]
            else:
                p = np.einsum("bij,bj->bi", Dk, q)
            e[:, k] = x @ clp.C1.T + p @ clp.D10.T + dk @ clp.D11.T
            x = x @ clp.A.T + p @ clp.B0.T + dk @ clp.B1.T
        else:
            e[:, k] = x @ clp.C1.T + dk @ clp.D11.T
            x = x @ clp.A.T + dk @ clp.B1.T
    if keep_x:
        xs[:, T] = x
    if not np.all(np.isfinite(e)):
        raise IllPosedLoop("trajectory diverged to non-finite values", T)
    return e, xs


def _delta_traj(clp, delta_traj, T):
    npp = clp.np
    if npp == 0:
        return None, "none"
    if callable(delta_traj):
        D = np.stack([np.asarray(delta_traj(k), dtype=float) for k in range(T)])
        desc = "callable"
    else:
        D = np.asarray(delta_traj, dtype=float)
        if D.ndim == 2:
            D = np.broadcast_to(D, (T, npp, npp))
            desc = "constant"
        else:
            desc = "trajectory"
    if D.shape != (T, npp, npp):
        raise ValueError(f"Delta trajectory has shape {D.shape}, expected {(T, npp, npp)}")
    if np.max(np.linalg.norm(D, 2, axis=(1, 2))) > 1 + 1e-12:
        raise ValueError("Delta leaves the unit ball")
    return D, desc


def simulate(clp: ClosedLoopLft, delta_traj, d_traj, x0=None, T: int | None = None) -> SimulationRun:
    """Simulate the closed loop with ``p(k) = Delta(k) q(k)``.

    ``delta_traj`` may be a constant matrix, a (T, np, np) array or a
    callable ``k -> Delta``.
    """
    d = np.asarray(d_traj, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    T = d.shape[0] if T is None else int(T)
    d = d[:T]
    if d.shape != (T, clp.nd):
        raise ValueError(f"disturbance has shape {d.shape}, expected {(T, clp.nd)}")
    x0 = np.zeros(clp.n) if x0 is None else np.asarray(x0, dtype=float)
    D, desc = _delta_traj(clp, delta_traj, T)
    e, xs = _simulate_batch(clp, None if D is None else D[None], d[None], x0[None], keep_x=True)
    return SimulationRun(xs[0], e[0], d, desc)


# ---------------------------------------------------------------------------
# white-noise estimator


def sample_uncertainty_batch(structure: UncertaintyStructure, rng: np.random.Generator, size: int,
                             bound: float = 1.0) -> np.ndarray:
    """``size`` independent draws with the same law as ``sample_uncertainty``."""
    nb = structure.base_dim
    D = np.zeros((size, nb, nb))
    off = 0
    for m in structure.scalar_blocks:
        v = rng.uniform(-bound, bound, size)
        idx = np.arange(off, off + m)
        D[:, idx, idx] = v[:, None]
        off += m
    for r in structure.full_blocks:
        G = rng.standard_normal((size, r, r))
        s = np.linalg.norm(G, 2, axis=(1, 2))
        radius = rng.uniform(0.0, bound, size)
        scale = np.where(s > 0, radius / np.where(s > 0, s, 1.0), 0.0)
        D[:, off:off + r, off:off + r] = G * scale[:, None, None]
        off += r
    if structure.copies == 1:
        return D
    out = np.zeros((size, structure.n_p, structure.n_p))
    for c in range(structure.copies):
        out[:, c * nb:(c + 1) * nb, c * nb:(c + 1) * nb] = D
    return out


def _run_chunk(clp, structure, seed, indices, T, bound):
    ds, Ds = [], []
    for i in indices:
        rng = np.random.default_rng([seed, i])
        ds.append(rng.standard_normal((T, clp.nd)))
        if clp.np:
            Ds.append(sample_uncertainty_batch(structure, rng, T, bound))
    d = np.stack(ds)
    D = np.stack(Ds) if clp.np else None
    e, _ = _simulate_batch(clp, D, d, np.zeros((len(indices), clp.n)))
    return e


def estimate_h2_white_noise(clp: ClosedLoopLft, structure: UncertaintyStructure | None = None,
                            n_runs: int = 64, T: int = 4096, burn_in: int = 512, seed: int = 0,
                            workers: int = 1, bound: float = 1.0) -> GainEstimate:
    """Monte-Carlo RMS of ``e`` under unit white noise and per-step random Delta.

    Run ``i`` uses the generator seeded with ``(seed, i)``; runs are
    processed in fixed chunks and reduced in index order, so the result does
    not depend on ``workers``.
    """
    structure = clp.structure if structure is None else structure
    if clp.np and structure.n_p != clp.np:
        raise ValueError("structure does not match the closed loop")
    if burn_in >= T:
        raise ValueError("burn_in must be shorter than the horizon")
    chunks = [list(range(s, min(s + CHUNK, n_runs))) for s in range(0, n_runs, CHUNK)]
    job = lambda idx: _run_chunk(clp, structure, seed, idx, T, bound)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(job, chunks))
    else:
        outs = [job(c) for c in chunks]
    e = np.concatenate(outs)[:, burn_in:]
    ms = np.einsum("rki,rki->r", e, e) / e.shape[1]
    mean = float(np.mean(ms))
    value = float(np.sqrt(mean))
    se_ms = float(np.std(ms, ddof=1) / np.sqrt(n_runs)) if n_runs > 1 else 0.0
    se = se_ms / (2 * value) if value > 0 else 0.0
    return GainEstimate(value, "white_noise_rms", se, n_runs * (T - burn_in),
                        {"n_runs": n_runs, "T": T, "burn_in": burn_in, "seed": seed})


# ---------------------------------------------------------------------------
# frozen-parameter estimators


def default_freq_grid(n: int = 512) -> np.ndarray:
    return np.geomspace(1e-6, np.pi, n)


def delta_grid(structure: UncertaintyStructure, points: int = 9) -> list[np.ndarray]:
    """Tensor grid of constant Delta values with ``points`` levels per block."""
    return vertex_deltas(structure, np.linspace(-1.0, 1.0, points))


def _spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def frequency_gain(A, B, C, D, freqs) -> tuple[float, float]:
    """Peak of the largest singular value of ``C (zI - A)^{-1} B + D`` on ``z = e^{jw}``."""
    if A.size == 0:
        return float(np.linalg.norm(D, 2)) if D.size else 0.0, 0.0
    n = A.shape[0]
    best, wbest = -1.0, 0.0
    for w in freqs:
        H = C @ np.linalg.solve(np.exp(1j * w) * np.eye(n) - A, B) + D
        s = np.linalg.norm(H, 2) if H.size else 0.0
        if s > best:
            best, wbest = float(s), float(w)
    return best, wbest


def estimate_induced_gain(clp: ClosedLoopLft, param_grid: Sequence[np.ndarray] | int | None = None,
                          freq_grid: np.ndarray | None = None, add_pole_freqs: bool = True) -> GainEstimate:
    """Frozen-Delta lower bound on the worst-case induced l2 gain of d -> e.

    Pole angles of each frozen loop are appended to the frequency grid, which
    can only raise the estimate.
    """
    if param_grid is None or isinstance(param_grid, int):
        param_grid = delta_grid(clp.structure, 9 if param_grid is None else param_grid) if clp.np else [np.zeros((0, 0))]
    freqs = default_freq_grid() if freq_grid is None else np.asarray(freq_grid, dtype=float)
    best, arg = 0.0, None
    for delta in param_grid:
        A, B, C, D = clp.frozen(delta)
        if _spectral_radius(A) >= 1.0:
            raise UnstableFrozenLoop(f"frozen loop has spectral radius {_spectral_radius(A):.6f}", delta)
        fs = freqs
        if add_pole_freqs and A.size:
            ang = np.abs(np.angle(np.linalg.eigvals(A)))
            fs = np.concatenate([freqs, ang[(ang > 0) & (ang <= np.pi)]])
        g, w = frequency_gain(A, B, C, D, fs)
        if g > best or arg is None:
            best, arg = g, (np.asarray(delta), w)
    return GainEstimate(best, "induced_l2_lower_bound", 0.0, len(param_grid) * len(freqs),
                        {"grid_points": len(param_grid), "n_freqs": int(len(freqs)),
                         "argmax_delta": np.asarray(arg[0]).tolist(), "argmax_freq": arg[1]})


def step_disturbance_response(clp: ClosedLoopLft, delta, magnitude: float = 1e-3, T: int = 1000,
                              channels: Sequence[int] = (0, 1), signs: Sequence[float] = (1.0, -1.0),
                              x0=None) -> SimulationRun:
    """Hold Delta fixed and apply opposite-sign steps on two disturbance channels."""
    delta = np.asarray(delta, dtype=float).reshape(clp.np, clp.np)
    A = clp.frozen(delta)[0]
    if _spectral_radius(A) >= 1.0:
        raise UnstableFrozenLoop(f"frozen loop has spectral radius {_spectral_radius(A):.6f}", delta)
    d = np.zeros((T, clp.nd))
    for ch, s in zip(channels, signs):
        if ch < clp.nd:
            d[:, ch] = s * magnitude
    run = simulate(clp, delta, d, x0, T)
    run.delta = "frozen"
    return run


def settling_index(signal: np.ndarray, frac: float = 0.05) -> int | None:
    """First step after which ``max_i |signal_i|`` stays below ``frac`` times its peak.

    Returns ``None`` when the signal never settles within the horizon.
    """
    sig = np.asarray(signal, dtype=float)
    mag = np.max(np.abs(sig), axis=1) if sig.ndim > 1 else np.abs(sig)
    peak = float(np.max(mag)) if mag.size else 0.0
    if peak == 0.0:
        return 0
    above = np.nonzero(mag >= frac * peak)[0]
    k = int(above[-1]) + 1
    return k if k < len(mag) else None
