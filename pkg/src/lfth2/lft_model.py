"""Plants, uncertainty structures, scalings and interconnections for discrete-time LFT systems.

Block layout of a plant (rows = outputs, cols = inputs)::

    [x+]   [A   B0   B1   B2 ] [x]
    [q ] = [C0  D00  0    D02] [p]        p = Delta q
    [e ]   [C1  D10  0    D12] [d]
    [y ]   [C2  D20  D21  0  ] [u]
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    ImproperWeight,
    NonFiniteResult,
    RankDeficiencyWarning,
    StructuralViolation,
    TopologyMismatch,
)


def _arr(a, shape=None) -> np.ndarray:
    if a is None:
        out = np.zeros(shape)
    else:
        out = np.array(a, dtype=float, ndmin=2, copy=True)
        if out.size == 0 and shape is not None:
            out = np.zeros(shape)
    out.setflags(write=False)
    return out


def _freeze(obj):
    # numpy arrays stay shared but read-only
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray):
            v.setflags(write=False)


# ---------------------------------------------------------------------------
# uncertainty structure and scalings


@dataclass(frozen=True)
class UncertaintyStructure:
    """Repeated-scalar blocks ``delta_i I_{m_i}`` followed by full blocks of size ``r_j``.

    ``copies`` > 1 describes ``diag(Delta, ..., Delta)``, which is what a
    gain-scheduled closed loop sees.  Its commutant couples the copies.
    """

    scalar_blocks: tuple = ()
    full_blocks: tuple = ()
    copies: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scalar_blocks", tuple(int(m) for m in self.scalar_blocks))
        object.__setattr__(self, "full_blocks", tuple(int(r) for r in self.full_blocks))
        if any(m < 1 for m in self.scalar_blocks + self.full_blocks):
            raise DimensionMismatch("uncertainty block sizes must be >= 1")
        if self.copies < 1:
            raise DimensionMismatch("copies must be >= 1")

    @property
    def base_dim(self) -> int:
        return sum(self.scalar_blocks) + sum(self.full_blocks)

    @property
    def n_p(self) -> int:
        return self.copies * self.base_dim

    def doubled(self) -> "UncertaintyStructure":
        return dataclasses.replace(self, copies=2 * self.copies)

    def _offsets(self):
        off = 0
        scal, full = [], []
        for m in self.scalar_blocks:
            scal.append(np.arange(off, off + m))
            off += m
        for r in self.full_blocks:
            full.append(np.arange(off, off + r))
            off += r
        return scal, full

    def scalar_positions(self) -> list[np.ndarray]:
        """Indices (across all copies) sharing each repeated scalar."""
        scal, _ = self._offsets()
        nb = self.base_dim
        return [np.concatenate([idx + c * nb for c in range(self.copies)]) for idx in scal]

    def full_positions(self) -> list[list[np.ndarray]]:
        """For each full block, its index range within every copy."""
        _, full = self._offsets()
        nb = self.base_dim
        return [[idx + c * nb for c in range(self.copies)] for idx in full]

    def scaling_dims(self) -> list[int]:
        """Size of the free symmetric matrix behind each scaling block."""
        return [self.copies * m for m in self.scalar_blocks] + [self.copies] * len(self.full_blocks)

    def to_dict(self) -> dict:
        d = {"scalar_blocks": list(self.scalar_blocks), "full_blocks": list(self.full_blocks)}
        if self.copies != 1:
            d["copies"] = self.copies
        return d

    @classmethod
    def from_dict(cls, d) -> "UncertaintyStructure":
        return cls(tuple(d.get("scalar_blocks", ())), tuple(d.get("full_blocks", ())), int(d.get("copies", 1)))


def assemble_scaling(structure: UncertaintyStructure, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Place the free scaling blocks into the full ``n_p x n_p`` commutant matrix.

    ``blocks`` lists one symmetric matrix per scalar block (size copies*m) and one
    per full block (size copies x copies, Kronecker-expanded with ``I_r``).
    """
    npp = structure.n_p
    X = np.zeros((npp, npp))
    dims = structure.scaling_dims()
    if len(blocks) != len(dims):
        raise DimensionMismatch(f"expected {len(dims)} scaling blocks, got {len(blocks)}")
    k = 0
    for idx in structure.scalar_positions():
        B = np.asarray(blocks[k], dtype=float).reshape(dims[k], dims[k])
        X[np.ix_(idx, idx)] = B
        k += 1
    for pos in structure.full_positions():
        Y = np.asarray(blocks[k], dtype=float).reshape(dims[k], dims[k])
        for a, ia in enumerate(pos):
            for b, ib in enumerate(pos):
                X[np.ix_(ia, ib)] = Y[a, b] * np.eye(len(ia))
        k += 1
    return X


@dataclass(frozen=True)
class ScalingValue:
    structure: UncertaintyStructure
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(np.array(b, dtype=float, ndmin=2) for b in self.blocks))
        dims = self.structure.scaling_dims()
        if len(dims) != len(self.blocks):
            raise DimensionMismatch("scaling block count does not match structure")
        for d, b in zip(dims, self.blocks):
            if b.shape != (d, d):
                raise DimensionMismatch(f"scaling block shape {b.shape}, expected {(d, d)}")
            if not np.allclose(b, b.T, atol=1e-12 * (1 + np.abs(b).max())):
                raise StructuralViolation("scaling block is not symmetric")
            if np.linalg.eigvalsh((b + b.T) / 2).min() <= 0:
                raise StructuralViolation("scaling block is not positive definite")

    @property
    def matrix(self) -> np.ndarray:
        return assemble_scaling(self.structure, self.blocks)


def extract_scaling(structure: UncertaintyStructure, X: np.ndarray) -> list[np.ndarray]:
    """Inverse of :func:`assemble_scaling` (reads the free blocks back out)."""
    out = []
    for idx in structure.scalar_positions():
        out.append(X[np.ix_(idx, idx)].copy())
    for pos in structure.full_positions():
        c = len(pos)
        Y = np.empty((c, c))
        for a in range(c):
            for b in range(c):
                Y[a, b] = X[pos[a][0], pos[b][0]]
        out.append(Y)
    return out


def sample_uncertainty(structure: UncertaintyStructure, seed=None, bound: float = 1.0) -> np.ndarray:
    """Draw one block-diagonal Delta with every block norm <= ``bound``.

    Scalars are uniform on ``[-bound, bound]``; full blocks are Gaussian
    matrices rescaled to a spectral norm uniform on ``[0, bound]``.  With
    ``copies > 1`` the same Delta is repeated on the diagonal.
    """
    if not 0.0 <= bound <= 1.0:
        raise ValueError("bound must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    nb = structure.base_dim
    D = np.zeros((nb, nb))
    off = 0
    for m in structure.scalar_blocks:
        D[off:off + m, off:off + m] = rng.uniform(-bound, bound) * np.eye(m)
        off += m
    for r in structure.full_blocks:
        G = rng.standard_normal((r, r))
        s = np.linalg.norm(G, 2)
        radius = rng.uniform(0.0, bound)
        D[off:off + r, off:off + r] = G * (radius / s) if s > 0 else 0.0
        off += r
    return np.kron(np.eye(structure.copies), D)


def vertex_deltas(structure: UncertaintyStructure, levels: Sequence[float] = (-1.0, 1.0)) -> list[np.ndarray]:
    """Tensor grid over the repeated scalars; full blocks take ``level * I``."""
    nblk = len(structure.scalar_blocks) + len(structure.full_blocks)
    sizes = list(structure.scalar_blocks) + list(structure.full_blocks)
    out = []
    for combo in np.array(np.meshgrid(*([levels] * nblk), indexing="ij")).reshape(nblk, -1).T if nblk else [()]:
        diag = np.concatenate([np.full(s, v) for s, v in zip(sizes, combo)]) if nblk else np.zeros(0)
        out.append(np.kron(np.eye(structure.copies), np.diag(diag)))
    return out


# ---------------------------------------------------------------------------
# plants


_PLANT_BLOCKS = ("A", "B0", "B1", "B2", "C0", "C1", "C2",
                 "D00", "D01", "D02", "D10", "D11", "D12", "D20", "D21", "D22")
_ZERO_BLOCKS = ("D01", "D11", "D22")


def _block_shape(name: str, dims: dict) -> tuple:
    rows = {"A": "n", "B": "n", "C0": "np", "C1": "ne", "C2": "ny",
            "D0": "np", "D1": "ne", "D2": "ny"}
    cols = {"0": "np", "1": "nd", "2": "nu"}
    if name == "A":
        return dims["n"], dims["n"]
    if name[0] == "B":
        return dims["n"], dims[cols[name[1]]]
    if name[0] == "C":
        return dims[rows[name]], dims["n"]
    return dims[rows[name[:2]]], dims[cols[name[2]]]


@dataclass(frozen=True)
class LftPlant:
    n: int
    np: int
    nd: int
    ne: int
    nu: int
    ny: int
    A: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D00: np.ndarray
    D01: np.ndarray
    D02: np.ndarray
    D10: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D20: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    structure: UncertaintyStructure = field(default_factory=UncertaintyStructure)
    ts: float = 0.0

    def __post_init__(self):
        _freeze(self)

    @classmethod
    def create(cls, A, structure=None, ts=0.0, n=None, np_=None, nd=None, ne=None, nu=None, ny=None,
               **blocks) -> "LftPlant":
        """Build a plant from whichever blocks are given; missing blocks become zeros.

        Dimensions are inferred from the supplied blocks unless given explicitly.
        No consistency checks are made here; see :func:`validate_plant`.
        """
        unknown = set(blocks) - set(_PLANT_BLOCKS)
        if unknown:
            raise TypeError(f"unknown plant blocks {sorted(unknown)}")
        A = np.array(A, dtype=float, ndmin=2)
        structure = structure or UncertaintyStructure()
        mats = {k: (None if v is None else np.array(v, dtype=float, ndmin=2)) for k, v in blocks.items()}

        def guess(explicit, cands):
            if explicit is not None:
                return int(explicit)
            for name, axis in cands:
                m = mats.get(name)
                if m is not None and m.size:
                    return m.shape[axis]
            return 0

        dims = {
            "n": A.shape[0] if n is None else int(n),
            "np": structure.n_p if np_ is None else int(np_),
            "nd": guess(nd, [("B1", 1), ("D21", 1), ("D11", 1), ("D01", 1)]),
            "ne": guess(ne, [("C1", 0), ("D10", 0), ("D12", 0), ("D11", 0)]),
            "nu": guess(nu, [("B2", 1), ("D02", 1), ("D12", 1), ("D22", 1)]),
            "ny": guess(ny, [("C2", 0), ("D20", 0), ("D21", 0), ("D22", 0)]),
        }
        full = {"A": _arr(A)}
        for name in _PLANT_BLOCKS[1:]:
            full[name] = _arr(mats.get(name), _block_shape(name, dims))
        return cls(n=dims["n"], np=dims["np"], nd=dims["nd"], ne=dims["ne"], nu=dims["nu"],
                   ny=dims["ny"], structure=structure, ts=float(ts), **full)

    @property
    def dims(self) -> dict:
        return {"n": self.n, "np": self.np, "nd": self.nd, "ne": self.ne, "nu": self.nu, "ny": self.ny}

    def replace(self, **kw) -> "LftPlant":
        return dataclasses.replace(self, **kw)

    @property
    def is_discrete(self) -> bool:
        return self.ts > 0


def validate_plant(plant: LftPlant) -> LftPlant:
    """Check block dimensions and the structural zeros of the layout; return the plant."""
    dims = plant.dims
    if plant.structure.n_p != plant.np:
        raise DimensionMismatch(f"structure dimension {plant.structure.n_p} != np {plant.np}")
    for name in _PLANT_BLOCKS:
        M = getattr(plant, name)
        want = _block_shape(name, dims)
        if M.shape != want:
            raise DimensionMismatch(f"block {name} has shape {M.shape}, expected {want}")
        if not np.all(np.isfinite(M)):
            raise DimensionMismatch(f"block {name} has non-finite entries")
    for name in _ZERO_BLOCKS:
        if np.any(getattr(plant, name) != 0):
            raise StructuralViolation(f"block {name} must be zero")
    if plant.ts < 0:
        raise DimensionMismatch("sample time must be >= 0")
    return plant


@dataclass(frozen=True)
class AssumptionReport:
    stabilizable: bool
    detectable: bool
    uncontrollable_modes: tuple = ()
    unobservable_modes: tuple = ()


def _pbh_fails(A, B, discrete=True, tol=1e-9):
    n = A.shape[0]
    bad = []
    for lam in np.linalg.eigvals(A):
        unstable = abs(lam) >= 1 - 1e-12 if discrete else lam.real >= -1e-12
        if not unstable:
            continue
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        s = np.linalg.svd(M, compute_uv=False)
        scale = max(1.0, s[0]) if s.size else 1.0
        if s.size < n or s[n - 1] <= tol * scale:
            bad.append(complex(lam))
    return bad


def check_assumptions(plant: LftPlant) -> AssumptionReport:
    """PBH rank tests for stabilizability of (A, B2) and detectability of (A, C2)."""
    unc = _pbh_fails(plant.A, plant.B2, True)
    uno = _pbh_fails(plant.A.T, plant.C2.T, True)
    return AssumptionReport(not unc, not uno, tuple(unc), tuple(uno))


# ---------------------------------------------------------------------------
# closed loops and controllers


@dataclass(frozen=True)
class ClosedLoopLft:
    A: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    D00: np.ndarray
    D01: np.ndarray
    D10: np.ndarray
    D11: np.ndarray
    structure: UncertaintyStructure = field(default_factory=UncertaintyStructure)
    ts: float = 1.0

    def __post_init__(self):
        _freeze(self)

    @classmethod
    def create(cls, A, B1, C1, B0=None, C0=None, D00=None, D10=None, D01=None, D11=None,
               structure=None, ts=1.0) -> "ClosedLoopLft":
        A = _arr(A)
        B1 = _arr(B1)
        C1 = _arr(C1)
        structure = structure or UncertaintyStructure()
        n, npp, nd, ne = A.shape[0], structure.n_p, B1.shape[1], C1.shape[0]
        return cls(A=A, B0=_arr(B0, (n, npp)), B1=B1, C0=_arr(C0, (npp, n)), C1=C1,
                   D00=_arr(D00, (npp, npp)), D01=_arr(D01, (npp, nd)), D10=_arr(D10, (ne, npp)),
                   D11=_arr(D11, (ne, nd)), structure=structure, ts=float(ts))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def np(self):
        return self.B0.shape[1]

    @property
    def nd(self):
        return self.B1.shape[1]

    @property
    def ne(self):
        return self.C1.shape[0]

    def frozen(self, delta: np.ndarray):
        """LTI realization (A, B, C, D) of d -> e with Delta held constant."""
        npp = self.np
        delta = np.asarray(delta, dtype=float).reshape(npp, npp)
        if npp == 0:
            return self.A, self.B1, self.C1, self.D11
        K = delta @ np.linalg.solve(np.eye(npp) - self.D00 @ delta, np.eye(npp))
        return (self.A + self.B0 @ K @ self.C0,
                self.B1 + self.B0 @ K @ self.D01,
                self.C1 + self.D10 @ K @ self.C0,
                self.D11 + self.D10 @ K @ self.D01)


@dataclass(frozen=True)
class LftController:
    """Gain-scheduled controller; its scheduling channel mirrors the plant's Delta.

    ``xk+ = Ak xk + Bk1 y + Bk0 pk``, ``u = Ck1 xk + Dk10 pk``,
    ``qk = Ck0 xk + Dk00 pk``, ``pk = Delta qk``.
    """

    Ak: np.ndarray
    Bk1: np.ndarray
    Bk0: np.ndarray
    Ck1: np.ndarray
    Ck0: np.ndarray
    Dk10: np.ndarray
    Dk00: np.ndarray

    def __post_init__(self):
        for f in dataclasses.fields(self):
            object.__setattr__(self, f.name, _arr(getattr(self, f.name)))

    @property
    def nk(self):
        return self.Ak.shape[0]

    @property
    def np(self):
        return self.Dk00.shape[0]

    def matrix(self) -> np.ndarray:
        """The 3x3 block matrix with the two structural zero blocks in column 2."""
        nu, ny = self.Ck1.shape[0], self.Bk1.shape[1]
        npp = self.np
        return np.block([[self.Ak, self.Bk1, self.Bk0],
                         [self.Ck1, np.zeros((nu, ny)), self.Dk10],
                         [self.Ck0, np.zeros((npp, ny)), self.Dk00]])

    @classmethod
    def from_matrix(cls, K, nk, nu, ny, npp) -> "LftController":
        K = np.asarray(K)
        r1, r2 = nk, nk + nu
        c1, c2 = nk, nk + ny
        return cls(Ak=K[:r1, :c1], Bk1=K[:r1, c1:c2], Bk0=K[:r1, c2:],
                   Ck1=K[r1:r2, :c1], Dk10=K[r1:r2, c2:],
                   Ck0=K[r2:, :c1], Dk00=K[r2:, c2:])


def plant_similarity(plant: LftPlant, T) -> LftPlant:
    """Same plant in state coordinates ``x = T z``."""
    T = np.asarray(T, dtype=float)
    Ti = np.linalg.inv(T)
    return plant.replace(A=Ti @ plant.A @ T, B0=Ti @ plant.B0, B1=Ti @ plant.B1, B2=Ti @ plant.B2,
                         C0=plant.C0 @ T, C1=plant.C1 @ T, C2=plant.C2 @ T)


def closed_loop_similarity(clp: ClosedLoopLft, T) -> ClosedLoopLft:
    """Same closed loop in state coordinates ``x = T z``."""
    T = np.asarray(T, dtype=float)
    Ti = np.linalg.inv(T)
    return dataclasses.replace(clp, A=Ti @ clp.A @ T, B0=Ti @ clp.B0, B1=Ti @ clp.B1,
                               C0=clp.C0 @ T, C1=clp.C1 @ T)


def close_state_feedback(plant: LftPlant, F) -> ClosedLoopLft:
    F = np.array(F, dtype=float, ndmin=2)
    if F.shape != (plant.nu, plant.n):
        raise DimensionMismatch(f"F has shape {F.shape}, expected {(plant.nu, plant.n)}")
    return ClosedLoopLft(A=_arr(plant.A + plant.B2 @ F), B0=_arr(plant.B0), B1=_arr(plant.B1),
                         C0=_arr(plant.C0 + plant.D02 @ F), C1=_arr(plant.C1 + plant.D12 @ F),
                         D00=_arr(plant.D00), D01=_arr(plant.D01), D10=_arr(plant.D10),
                         D11=_arr(plant.D11), structure=plant.structure, ts=plant.ts)


def close_output_feedback(plant: LftPlant, K: LftController) -> ClosedLoopLft:
    """Interconnect plant and gain-scheduled controller; the loop sees diag(Delta, Delta)."""
    n, npp, nd, ne, nu, ny = (plant.n, plant.np, plant.nd, plant.ne, plant.nu, plant.ny)
    nk = K.nk
    expect = {"Ak": (nk, nk), "Bk1": (nk, ny), "Bk0": (nk, npp), "Ck1": (nu, nk),
              "Ck0": (npp, nk), "Dk10": (nu, npp), "Dk00": (npp, npp)}
    for name, shp in expect.items():
        if getattr(K, name).shape != shp:
            raise DimensionMismatch(f"controller block {name} has shape {getattr(K, name).shape}, expected {shp}")
    Z = np.zeros
    I = np.eye
    # rows [x+, xk+ | q, qk | e], cols [x, xk | p, pk | d]
    const = np.block([
        [plant.A, Z((n, nk)), plant.B0, Z((n, npp)), plant.B1],
        [Z((nk, n)), Z((nk, nk)), Z((nk, npp)), Z((nk, npp)), Z((nk, nd))],
        [plant.C0, Z((npp, nk)), plant.D00, Z((npp, npp)), Z((npp, nd))],
        [Z((npp, n)), Z((npp, nk)), Z((npp, npp)), Z((npp, npp)), Z((npp, nd))],
        [plant.C1, Z((ne, nk)), plant.D10, Z((ne, npp)), Z((ne, nd))],
    ])
    left = np.block([
        [Z((n, nk)), plant.B2, Z((n, npp))],
        [I(nk), Z((nk, nu)), Z((nk, npp))],
        [Z((npp, nk)), plant.D02, Z((npp, npp))],
        [Z((npp, nk)), Z((npp, nu)), I(npp)],
        [Z((ne, nk)), plant.D12, Z((ne, npp))],
    ])
    right = np.block([
        [Z((nk, n)), I(nk), Z((nk, npp)), Z((nk, npp)), Z((nk, nd))],
        [plant.C2, Z((ny, nk)), plant.D20, Z((ny, npp)), plant.D21],
        [Z((npp, n)), Z((npp, nk)), Z((npp, npp)), I(npp), Z((npp, nd))],
    ])
    M = const + left @ K.matrix() @ right
    nx = n + nk
    r = np.cumsum([0, nx, 2 * npp, ne])
    c = np.cumsum([0, nx, 2 * npp, nd])
    blk = lambda i, j: M[r[i]:r[i + 1], c[j]:c[j + 1]]
    return ClosedLoopLft(A=_arr(blk(0, 0)), B0=_arr(blk(0, 1)), B1=_arr(blk(0, 2)),
                         C0=_arr(blk(1, 0)), D00=_arr(blk(1, 1)),
                         # d never reaches q, qk or e directly: the controller has no y feedthrough
                         D01=_arr(np.zeros((2 * npp, nd))),
                         C1=_arr(blk(2, 0)), D10=_arr(blk(2, 1)),
                         D11=_arr(np.zeros((ne, nd))),
                         structure=plant.structure.doubled(), ts=plant.ts)


# ---------------------------------------------------------------------------
# discretization and LPV conversion


def zoh_discretize(plant: LftPlant, ts: float) -> LftPlant:
    """Exact zero-order hold on the stacked input ``[p; d; u]``."""
    if plant.ts != 0:
        raise ValueError("plant is already discrete")
    if not ts > 0:
        raise ValueError("sample time must be positive")
    n = plant.n
    B = np.hstack([plant.B0, plant.B1, plant.B2])
    m = B.shape[1]
    E = np.zeros((n + m, n + m))
    E[:n, :n] = plant.A
    E[:n, n:] = B
    with np.errstate(over="raise", invalid="raise"):
        try:
            Phi = sla.expm(E * ts)
        except FloatingPointError as exc:
            raise NonFiniteResult("matrix exponential overflowed") from exc
    if not np.all(np.isfinite(Phi)):
        raise NonFiniteResult("matrix exponential overflowed")
    Ad = Phi[:n, :n]
    Bd = Phi[:n, n:]
    npp, nd = plant.np, plant.nd
    return plant.replace(A=_arr(Ad), B0=_arr(Bd[:, :npp]), B1=_arr(Bd[:, npp:npp + nd]),
                         B2=_arr(Bd[:, npp + nd:]), ts=float(ts))


@dataclass(frozen=True)
class AffineLpvSystem:
    """``A(rho) = A0 + rho A1`` with rho measured in ``rho_range``."""

    A0: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    rho_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name != "rho_range":
                object.__setattr__(self, f.name, _arr(getattr(self, f.name)))
        lo, hi = self.rho_range
        if not lo < hi:
            raise ValueError("rho_range must satisfy rho_min < rho_max")
        n = self.A0.shape[0]
        if self.A1.shape != (n, n) or self.B1.shape[0] != n or self.B2.shape[0] != n:
            raise DimensionMismatch("inconsistent LPV state dimensions")
        if self.C1.shape[1] != n or self.C2.shape[1] != n:
            raise DimensionMismatch("inconsistent LPV output dimensions")

    def A(self, rho: float) -> np.ndarray:
        return self.A0 + rho * self.A1


def lpv_to_lft(sys: AffineLpvSystem, rtol: float = 1e-10) -> LftPlant:
    """Pull the affine parameter out into a repeated-scalar block, ``delta in [-1, 1]``."""
    lo, hi = sys.rho_range
    rho0, rho1 = (lo + hi) / 2.0, (hi - lo) / 2.0
    n = sys.A0.shape[0]
    U, s, Vt = np.linalg.svd(rho1 * sys.A1)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        r = 0
    else:
        r = int(np.sum(s > rtol * smax))
        near = (s > 0.1 * rtol * smax) & (s < 10 * rtol * smax)
        if np.any(near):
            warnings.warn("numerical rank of A1 is ambiguous at the truncation tolerance",
                          RankDeficiencyWarning, stacklevel=2)
    root = np.sqrt(s[:r])
    E = U[:, :r] * root
    G = root[:, None] * Vt[:r, :]
    if np.any(sys.D11 != 0):
        raise StructuralViolation("LPV d->e feedthrough D11 must be zero")
    if np.any(sys.D22 != 0):
        raise StructuralViolation("LPV u->y feedthrough D22 must be zero")
    structure = UncertaintyStructure((r,), ()) if r else UncertaintyStructure()
    return LftPlant.create(sys.A0 + rho0 * sys.A1, structure=structure, ts=0.0,
                           B0=E if r else np.zeros((n, 0)), C0=G if r else np.zeros((0, n)),
                           B1=sys.B1, B2=sys.B2, C1=sys.C1, C2=sys.C2, D12=sys.D12, D21=sys.D21,
                           D11=sys.D11, D22=sys.D22, nd=sys.B1.shape[1], ne=sys.C1.shape[0],
                           nu=sys.B2.shape[1], ny=sys.C2.shape[0])


def rho_to_delta(sys: AffineLpvSystem, rho) -> np.ndarray:
    lo, hi = sys.rho_range
    return (np.asarray(rho, dtype=float) - (lo + hi) / 2.0) / ((hi - lo) / 2.0)


# ---------------------------------------------------------------------------
# weights and interconnection


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    ts: float = 0.0

    def __post_init__(self):
        D = np.array(self.D, dtype=float, ndmin=2)
        A = np.array(self.A, dtype=float, ndmin=2) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        B = np.array(self.B, dtype=float, ndmin=2) if np.size(self.B) else np.zeros((n, D.shape[1]))
        C = np.array(self.C, dtype=float, ndmin=2) if np.size(self.C) else np.zeros((D.shape[0], n))
        for name, v in (("A", A), ("B", B), ("C", C), ("D", D)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def shape(self):
        return self.D.shape

    def freqresp(self, w: float) -> np.ndarray:
        z = np.exp(1j * w * self.ts) if self.ts > 0 else 1j * w
        if self.n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(z * np.eye(self.n) - self.A, self.B) + self.D


def weight_tf(num, den, size: int = 1) -> StateSpace:
    """Continuous SISO weight ``num(s)/den(s)`` repeated on a ``size``-channel diagonal."""
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    num = np.trim_zeros(num, "f") if np.any(num) else np.zeros(1)
    den = np.trim_zeros(den, "f")
    if den.size == 0:
        raise ImproperWeight("weight denominator is zero")
    if num.size > den.size:
        raise ImproperWeight("weight numerator degree exceeds denominator degree")
    from scipy.signal import tf2ss
    a, b, c, d = tf2ss(num, den)
    I = np.eye(size)
    return StateSpace(np.kron(I, a), np.kron(I, b), np.kron(I, c), np.kron(I, d))


def static_gain(g, size: int = 1) -> StateSpace:
    return StateSpace(np.zeros((0, 0)), np.zeros((0, size)), np.zeros((size, 0)), float(g) * np.eye(size))


@dataclass(frozen=True)
class Topology:
    """Where each named weight sits in the weighted interconnection.

    actuator: weight in series with u before it enters the plant.
    perf: ``(weight, source, rows)`` entries; source is "e", "y" or "u" and the
        weighted signals, stacked, form the new performance output.  Empty keeps e.
    sensor_noise: weight shaping new noise channels added to y.
    input_disturbance: weight scaling new disturbance channels added at the plant input u.
    d_weights: ``(weight, rows)`` prefilters on existing disturbance channels.
    """

    actuator: str | None = None
    perf: tuple = ()
    sensor_noise: str | None = None
    input_disturbance: str | None = None
    d_weights: tuple = ()


class _Diagram:
    # sub-inputs u_sub = H y_sub + G w ; external outputs z = Hz y_sub + Gz w

    def __init__(self):
        self.systems = []
        self.in_off = [0]
        self.out_off = [0]
        self.n_ext = 0
        self.links = []  # (sub_in_index, 'y'|'w', index, gain)
        self.outs = []   # ('y'|'w', index, gain) lists per external output

    def add(self, ss: StateSpace) -> int:
        self.systems.append(ss)
        self.in_off.append(self.in_off[-1] + ss.shape[1])
        self.out_off.append(self.out_off[-1] + ss.shape[0])
        return len(self.systems) - 1

    def sin(self, k, rows=None):
        rng = np.arange(self.in_off[k], self.in_off[k + 1])
        return rng if rows is None else rng[np.asarray(rows)]

    def sout(self, k, rows=None):
        rng = np.arange(self.out_off[k], self.out_off[k + 1])
        return rng if rows is None else rng[np.asarray(rows)]

    def ext(self, m) -> np.ndarray:
        idx = np.arange(self.n_ext, self.n_ext + m)
        self.n_ext += m
        return idx

    def link(self, dst, kind, src, gain=None):
        gain = np.eye(len(dst)) if gain is None else np.atleast_2d(gain)
        if gain.shape != (len(dst), len(src)):
            raise TopologyMismatch(f"cannot connect {len(src)} signals to {len(dst)} inputs")
        self.links.append((np.asarray(dst), kind, np.asarray(src), gain))

    def output(self, kind, src):
        for s in np.atleast_1d(src):
            self.outs.append((kind, int(s)))

    def build(self) -> StateSpace:
        A = sla.block_diag(*[s.A for s in self.systems])
        B = sla.block_diag(*[s.B for s in self.systems])
        C = sla.block_diag(*[s.C for s in self.systems])
        D = sla.block_diag(*[s.D for s in self.systems])
        nx = sum(s.n for s in self.systems)
        A = A.reshape(nx, nx)
        B = B.reshape(nx, self.in_off[-1])
        C = C.reshape(self.out_off[-1], nx)
        D = D.reshape(self.out_off[-1], self.in_off[-1])
        nin, nout, nw = self.in_off[-1], self.out_off[-1], self.n_ext
        H = np.zeros((nin, nout))
        G = np.zeros((nin, nw))
        for dst, kind, src, gain in self.links:
            target = H if kind == "y" else G
            target[np.ix_(dst, src)] += gain
        Mi = np.linalg.solve(np.eye(nin) - H @ D, np.eye(nin))
        Ux = Mi @ H @ C
        Uw = Mi @ G
        Acl = A + B @ Ux
        Bcl = B @ Uw
        Yx = C + D @ Ux
        Yw = D @ Uw
        Hz = np.zeros((len(self.outs), nout))
        Gz = np.zeros((len(self.outs), nw))
        for i, (kind, s) in enumerate(self.outs):
            (Hz if kind == "y" else Gz)[i, s] = 1.0
        return StateSpace(Acl, Bcl, Hz @ Yx, Hz @ Yw + Gz)


def augment_with_weights(plant: LftPlant, weights: dict, topology: Topology) -> LftPlant:
    """Wire LTI weights around a continuous plant; the uncertainty channel passes through.

    The result has inputs ``[p; d_new; u_new]`` and outputs ``[q; e_new; y_new]``
    with ``d_new = [d (possibly filtered); input disturbances; sensor noise]``.
    States are ordered plant first, then weights in the order they are wired.
    """
    for name, w in weights.items():
        if not isinstance(w, StateSpace):
            raise ImproperWeight(f"weight {name!r} is not a state-space system")
        if w.ts != plant.ts:
            raise TopologyMismatch(f"weight {name!r} sample time differs from plant")

    def W(name):
        if name not in weights:
            raise TopologyMismatch(f"topology references unknown weight {name!r}")
        return weights[name]

    dg = _Diagram()
    Pss = StateSpace(plant.A,
                     np.hstack([plant.B0, plant.B1, plant.B2]),
                     np.vstack([plant.C0, plant.C1, plant.C2]),
                     np.block([[plant.D00, plant.D01, plant.D02],
                               [plant.D10, plant.D11, plant.D12],
                               [plant.D20, plant.D21, plant.D22]]))
    P = dg.add(Pss)
    npp, nd, nu, ne, ny = plant.np, plant.nd, plant.nu, plant.ne, plant.ny
    p_in, d_in, u_in = (np.arange(npp), npp + np.arange(nd), npp + nd + np.arange(nu))
    q_out, e_out, y_out = (np.arange(npp), npp + np.arange(ne), npp + ne + np.arange(ny))

    w_p = dg.ext(npp)
    dg.link(dg.sin(P, p_in), "w", w_p)

    # existing disturbances, optionally prefiltered
    w_d = dg.ext(nd)
    covered = np.zeros(nd, dtype=bool)
    for name, rows in topology.d_weights:
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        if np.any(covered[rows]):
            raise TopologyMismatch("disturbance channel weighted twice")
        covered[rows] = True
        k = dg.add(W(name))
        dg.link(dg.sin(k), "w", w_d[rows])
        dg.link(dg.sin(P, d_in[rows]), "y", dg.sout(k))
    if np.any(~covered):
        dg.link(dg.sin(P, d_in[~covered]), "w", w_d[~covered])

    # plant control input: actuator(u_new) + input disturbance
    if topology.actuator is not None:
        act = dg.add(W(topology.actuator))
        if W(topology.actuator).shape != (nu, nu):
            raise TopologyMismatch("actuator weight must be nu x nu")
        dg.link(dg.sin(P, u_in), "y", dg.sout(act))
        u_src = ("act", act)
    else:
        u_src = None
    w_a = np.arange(0)
    if topology.input_disturbance is not None:
        wa = dg.add(W(topology.input_disturbance))
        if W(topology.input_disturbance).shape[0] != nu:
            raise TopologyMismatch("input disturbance weight must have nu outputs")
        w_a = dg.ext(W(topology.input_disturbance).shape[1])
        dg.link(dg.sin(wa), "w", w_a)
        dg.link(dg.sin(P, u_in), "y", dg.sout(wa))
    w_n = np.arange(0)
    if topology.sensor_noise is not None:
        wn = dg.add(W(topology.sensor_noise))
        if W(topology.sensor_noise).shape[0] != ny:
            raise TopologyMismatch("sensor noise weight must have ny outputs")
        w_n = dg.ext(W(topology.sensor_noise).shape[1])
        dg.link(dg.sin(wn), "w", w_n)
    w_u = dg.ext(nu)
    if u_src is not None:
        dg.link(dg.sin(u_src[1]), "w", w_u)
    else:
        dg.link(dg.sin(P, u_in), "w", w_u)

    # outputs: q, e_new, y_new
    dg.output("y", dg.sout(P, q_out))
    n_e_new = 0
    if topology.perf:
        for name, source, rows in topology.perf:
            k = dg.add(W(name))
            if source == "e":
                src_idx = dg.sout(P, e_out[np.asarray(rows, dtype=int)] if rows is not None else e_out)
                dg.link(dg.sin(k), "y", src_idx)
            elif source == "y":
                src_idx = dg.sout(P, y_out[np.asarray(rows, dtype=int)] if rows is not None else y_out)
                dg.link(dg.sin(k), "y", src_idx)
            elif source == "u":
                sel = np.arange(nu) if rows is None else np.asarray(rows, dtype=int)
                dg.link(dg.sin(k), "w", w_u[sel])
            else:
                raise TopologyMismatch(f"unknown performance source {source!r}")
            dg.output("y", dg.sout(k))
            n_e_new += W(name).shape[0]
    else:
        dg.output("y", dg.sout(P, e_out))
        n_e_new = ne
    y_idx = dg.sout(P, y_out)
    if topology.sensor_noise is not None:
        # y_new = y + W_n n: route through a summing static block
        summ = dg.add(StateSpace(np.zeros((0, 0)), np.zeros((0, 2 * ny)), np.zeros((ny, 0)),
                                 np.hstack([np.eye(ny), np.eye(ny)])))
        dg.link(dg.sin(summ, np.arange(ny)), "y", y_idx)
        dg.link(dg.sin(summ, ny + np.arange(ny)), "y", dg.sout(wn))
        dg.output("y", dg.sout(summ))
    else:
        dg.output("y", y_idx)

    ss = dg.build()
    nd_new = nd + len(w_a) + len(w_n)
    nx = ss.n
    order = np.concatenate([w_p, w_d, w_a, w_n, w_u])
    Bfull = ss.B[:, order]
    Dfull = ss.D[:, order]
    ro = np.cumsum([0, npp, n_e_new, ny])
    co = np.cumsum([0, npp, nd_new, nu])
    blk = lambda M, i, j: M[ro[i]:ro[i + 1], co[j]:co[j + 1]]
    out = LftPlant.create(
        ss.A, structure=plant.structure, ts=plant.ts, n=nx, np_=npp, nd=nd_new, ne=n_e_new, nu=nu, ny=ny,
        B0=Bfull[:, co[0]:co[1]], B1=Bfull[:, co[1]:co[2]], B2=Bfull[:, co[2]:co[3]],
        C0=ss.C[ro[0]:ro[1]], C1=ss.C[ro[1]:ro[2]], C2=ss.C[ro[2]:ro[3]],
        D00=blk(Dfull, 0, 0), D01=blk(Dfull, 0, 1), D02=blk(Dfull, 0, 2),
        D10=blk(Dfull, 1, 0), D11=blk(Dfull, 1, 1), D12=blk(Dfull, 1, 2),
        D20=blk(Dfull, 2, 0), D21=blk(Dfull, 2, 1), D22=blk(Dfull, 2, 2),
    )
    return validate_plant(out)
