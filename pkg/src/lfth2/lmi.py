"""Structured decision variables and affine matrix expressions.

An expression is ``const + sum_t L_t V_t R_t`` (or ``L_t V_t^T R_t``) where each
``V_t`` is a decision variable.  Variables expose only their free scalar
coordinates (upper triangle for symmetric, block entries for scalings).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MissingVariable
from .lft_model import UncertaintyStructure, assemble_scaling

_ids = itertools.count()


class Var:
    """A matrix decision variable.  Use :func:`sym`, :func:`rect` or :func:`scaling`."""

    def __init__(self, name: str, kind: str, shape: tuple, basis_map: np.ndarray, structure=None):
        self.id = next(_ids)
        self.name = name
        self.kind = kind
        self.shape = shape
        # vec(V) (row-major) = basis_map @ coords
        self.basis_map = basis_map
        self.structure = structure

    @property
    def ncoords(self) -> int:
        return self.basis_map.shape[1]

    def __repr__(self):
        return f"Var({self.name!r}, {self.kind}, {self.shape})"

    def expr(self) -> "MatExpr":
        m, n = self.shape
        return MatExpr((m, n), np.zeros((m, n)), [(np.eye(m), self, np.eye(n), False)])

    @property
    def T(self) -> "MatExpr":
        return self.expr().T

    def __matmul__(self, other):
        return self.expr() @ other

    def __rmatmul__(self, other):
        return other @ self.expr()

    def __add__(self, other):
        return self.expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return other - self.expr()

    def __neg__(self):
        return -self.expr()

    def __mul__(self, a):
        return self.expr() * a

    __rmul__ = __mul__
    __array_ufunc__ = None

    def from_coords(self, theta) -> np.ndarray:
        return (self.basis_map @ np.asarray(theta, dtype=float)).reshape(self.shape)

    def to_coords(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float).reshape(self.shape)
        # each coordinate owns a set of entries; read the first one it touches
        first = np.argmax(self.basis_map != 0, axis=0)
        return M.reshape(-1)[first] / self.basis_map[first, np.arange(self.ncoords)]


def _sym_map(n: int) -> np.ndarray:
    iu, ju = np.triu_indices(n)
    B = np.zeros((n * n, len(iu)))
    B[iu * n + ju, np.arange(len(iu))] = 1.0
    B[ju * n + iu, np.arange(len(iu))] = 1.0
    return B


def sym(name: str, n: int) -> Var:
    return Var(name, "symmetric", (n, n), _sym_map(n))


def rect(name: str, m: int, n: int) -> Var:
    return Var(name, "rectangular", (m, n), np.eye(m * n))


def scaling(name: str, structure: UncertaintyStructure) -> Var:
    """Scaling in the commutant of the structure (block entries only)."""
    npp = structure.n_p
    cols = []
    dims = structure.scaling_dims()
    zero_blocks = [np.zeros((d, d)) for d in dims]
    for k, d in enumerate(dims):
        for i, j in zip(*np.triu_indices(d)):
            blocks = [z.copy() for z in zero_blocks]
            blocks[k][i, j] = blocks[k][j, i] = 1.0
            cols.append(assemble_scaling(structure, blocks).reshape(-1))
    B = np.array(cols).T if cols else np.zeros((npp * npp, 0))
    return Var(name, "scaling", (npp, npp), B, structure)


def _as_const(M, shape=None) -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if shape is not None and M.shape != shape:
        if M.size == 1 and shape[0] == shape[1]:
            return float(M) * np.eye(shape[0])
        raise DimensionMismatch(f"constant of shape {M.shape} where {shape} is required")
    return M


class MatExpr:
    def __init__(self, shape, const, terms):
        self.shape = tuple(shape)
        self.const = const
        self.terms = terms

    __array_ufunc__ = None

    @staticmethod
    def lift(x) -> "MatExpr":
        if isinstance(x, MatExpr):
            return x
        if isinstance(x, Var):
            return x.expr()
        M = np.array(x, dtype=float, ndmin=2)
        return MatExpr(M.shape, M, [])

    @property
    def variables(self) -> list[Var]:
        seen = {}
        for _, v, _, _ in self.terms:
            seen.setdefault(v.id, v)
        return list(seen.values())

    @property
    def T(self) -> "MatExpr":
        return MatExpr(self.shape[::-1], self.const.T,
                       [(R.T, v, L.T, not t) for L, v, R, t in self.terms])

    def __add__(self, other):
        other = MatExpr.lift(other)
        if other.shape != self.shape:
            if other.shape == (1, 1) and not other.terms and self.shape[0] == self.shape[1]:
                other = MatExpr(self.shape, float(other.const[0, 0]) * np.eye(self.shape[0]), [])
            else:
                raise DimensionMismatch(f"cannot add shapes {self.shape} and {other.shape}")
        return MatExpr(self.shape, self.const + other.const, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return MatExpr(self.shape, -self.const, [(-L, v, R, t) for L, v, R, t in self.terms])

    def __sub__(self, other):
        return self + (-MatExpr.lift(other))

    def __rsub__(self, other):
        return MatExpr.lift(other) - self

    def __mul__(self, a):
        a = float(a)
        return MatExpr(self.shape, a * self.const, [(a * L, v, R, t) for L, v, R, t in self.terms])

    __rmul__ = __mul__

    def __matmul__(self, M):
        if isinstance(M, (MatExpr, Var)):
            raise TypeError("products of two decision-variable expressions are not affine")
        M = np.array(M, dtype=float, ndmin=2)
        if M.shape[0] != self.shape[1]:
            raise DimensionMismatch(f"cannot multiply {self.shape} by {M.shape}")
        return MatExpr((self.shape[0], M.shape[1]), self.const @ M,
                       [(L, v, R @ M, t) for L, v, R, t in self.terms])

    def __rmatmul__(self, M):
        M = np.array(M, dtype=float, ndmin=2)
        if M.shape[1] != self.shape[0]:
            raise DimensionMismatch(f"cannot multiply {M.shape} by {self.shape}")
        return MatExpr((M.shape[0], self.shape[1]), M @ self.const,
                       [(M @ L, v, R, t) for L, v, R, t in self.terms])

    def __getitem__(self, key):
        rows, cols = key
        r = np.arange(self.shape[0])[rows]
        c = np.arange(self.shape[1])[cols]
        return np.eye(self.shape[0])[r] @ self @ np.eye(self.shape[1])[:, c]

    def __repr__(self):
        return f"MatExpr(shape={self.shape}, vars={[v.name for v in self.variables]})"


def bmat(rows) -> MatExpr:
    """Block matrix from a nested list; ``None`` or 0 denote zero blocks of inferred size."""
    nr, nc = len(rows), len(rows[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(rows):
        if len(row) != nc:
            raise DimensionMismatch("ragged block rows")
        for j, b in enumerate(row):
            if b is None or (np.isscalar(b) and b == 0):
                continue
            shp = b.shape if hasattr(b, "shape") else np.array(b, ndmin=2).shape
            if heights[i] is None:
                heights[i] = shp[0]
            elif heights[i] != shp[0]:
                raise DimensionMismatch(f"block row {i} has inconsistent heights")
            if widths[j] is None:
                widths[j] = shp[1]
            elif widths[j] != shp[1]:
                raise DimensionMismatch(f"block column {j} has inconsistent widths")
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise DimensionMismatch("cannot infer the size of an all-zero block row or column")
    ro = np.concatenate([[0], np.cumsum(heights)])
    co = np.concatenate([[0], np.cumsum(widths)])
    H, W = int(ro[-1]), int(co[-1])
    const = np.zeros((H, W))
    terms = []
    for i, row in enumerate(rows):
        for j, b in enumerate(row):
            if b is None or (np.isscalar(b) and b == 0):
                continue
            e = MatExpr.lift(b)
            const[ro[i]:ro[i + 1], co[j]:co[j + 1]] += e.const
            if e.terms:
                Ei = np.zeros((H, heights[i]))
                Ei[ro[i]:ro[i + 1]] = np.eye(heights[i])
                Ej = np.zeros((widths[j], W))
                Ej[:, co[j]:co[j + 1]] = np.eye(widths[j])
                terms += [(Ei @ L, v, R @ Ej, t) for L, v, R, t in e.terms]
    return MatExpr((H, W), const, terms)


def sym_bmat(lower) -> MatExpr:
    """Symmetric block matrix from its lower triangle (row ``i`` lists blocks ``0..i``)."""
    n = len(lower)
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        if len(lower[i]) != i + 1:
            raise DimensionMismatch("sym_bmat expects a lower-triangular list of lists")
        for j in range(i + 1):
            b = lower[i][j]
            if b is None or (np.isscalar(b) and b == 0):
                continue
            rows[i][j] = b
            if i != j:
                rows[j][i] = MatExpr.lift(b).T
    return bmat(rows)


def blkdiag(*blocks) -> MatExpr:
    n = len(blocks)
    return bmat([[blocks[i] if i == j else None for j in range(n)] for i in range(n)])


# ---------------------------------------------------------------------------
# evaluation


def _resolve(assignment: dict, v: Var) -> np.ndarray:
    if v.name in assignment:
        return np.asarray(assignment[v.name], dtype=float).reshape(v.shape)
    raise MissingVariable(v.name)


def eval_expr(expr, assignment: dict) -> np.ndarray:
    """Numeric value of an expression; ``assignment`` maps variable names to matrices."""
    expr = MatExpr.lift(expr)
    out = expr.const.copy()
    for L, v, R, t in expr.terms:
        V = _resolve(assignment, v)
        out += L @ (V.T if t else V) @ R
    return out


def coefficients(expr: MatExpr) -> dict:
    """Map var id -> (var, tensor of shape (ncoords, rows, cols)) of coordinate coefficients."""
    r, c = expr.shape
    out = {}
    for L, v, R, t in expr.terms:
        n1, n2 = v.shape
        if t:
            # L V^T R: entry V[a, b] multiplies L[:, b] R[a, :]
            T = np.einsum("rb,ac->abrc", L, R)
        else:
            T = np.einsum("ra,bc->abrc", L, R)
        T = T.reshape(n1 * n2, r * c)
        coef = (v.basis_map.T @ T).reshape(v.ncoords, r, c)
        if v.id in out:
            out[v.id] = (v, out[v.id][1] + coef)
        else:
            out[v.id] = (v, coef)
    return out


# ---------------------------------------------------------------------------
# programs


@dataclass
class Constraint:
    name: str
    expr: MatExpr
    margin: float = 0.0   # enforce expr >= margin * I


@dataclass
class LmiProgram:
    variables: list
    constraints: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)   # var name -> weight W, objective sum <W, V>
    name: str = ""

    def var(self, name: str) -> Var:
        for v in self.variables:
            if v.name == name:
                return v
        raise MissingVariable(name)

    def add_constraint(self, name: str, expr, strict: bool = True, eps: float = 1e-7):
        expr = MatExpr.lift(expr)
        if expr.shape[0] != expr.shape[1]:
            raise DimensionMismatch(f"constraint {name} is not square")
        known = {v.id for v in self.variables}
        for v in expr.variables:
            if v.id not in known:
                raise MissingVariable(f"{v.name} is not declared in the program")
        margin = eps * (1.0 + (np.abs(expr.const).max() if expr.const.size else 0.0)) if strict else 0.0
        self.constraints.append(Constraint(name, expr, margin))

    @property
    def offsets(self) -> dict:
        off, out = 0, {}
        for v in self.variables:
            out[v.name] = off
            off += v.ncoords
        return out

    @property
    def ncoords(self) -> int:
        return sum(v.ncoords for v in self.variables)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.ncoords)
        offs = self.offsets
        for name, W in self.objective.items():
            v = self.var(name)
            W = _as_const(W, v.shape)
            c[offs[name]:offs[name] + v.ncoords] = v.basis_map.T @ W.reshape(-1)
        return c

    def objective_value(self, assignment: dict) -> float:
        return float(sum(np.sum(np.asarray(W) * _resolve(assignment, self.var(n)))
                         for n, W in self.objective.items()))

    def gather(self, assignment: dict) -> np.ndarray:
        """Assignment -> stacked coordinate vector."""
        return np.concatenate([v.to_coords(_resolve(assignment, v)) for v in self.variables]) \
            if self.variables else np.zeros(0)

    def scatter(self, theta) -> dict:
        """Stacked coordinate vector -> assignment."""
        theta = np.asarray(theta, dtype=float)
        out, off = {}, 0
        for v in self.variables:
            out[v.name] = v.from_coords(theta[off:off + v.ncoords])
            off += v.ncoords
        return out

    def to_json(self) -> str:
        """Debug dump: variable table plus sparse (i, j, var_coord, value) triplets per constraint."""
        offs = self.offsets
        doc = {"name": self.name,
               "variables": [{"name": v.name, "kind": v.kind, "shape": list(v.shape),
                              "offset": offs[v.name], "ncoords": v.ncoords} for v in self.variables],
               "constraints": []}
        for con in self.constraints:
            trip = []
            F0 = con.expr.const
            for i, j in zip(*np.nonzero(np.triu(F0))):
                trip.append({"i": int(i), "j": int(j), "var_coord": -1, "value": float(F0[i, j])})
            for v, coef in coefficients(con.expr).values():
                for k, i, j in zip(*np.nonzero(np.triu(coef))):
                    trip.append({"i": int(i), "j": int(j), "var_coord": int(offs[v.name] + k),
                                 "value": float(coef[k, i, j])})
            doc["constraints"].append({"name": con.name, "size": con.expr.shape[0],
                                       "margin": con.margin, "entries": trip})
        return json.dumps(doc)


def scalar_identity(t: Var, k: int) -> MatExpr:
    """``t I_k`` for a 1 x 1 variable ``t``."""
    E = np.eye(k)
    return MatExpr((k, k), np.zeros((k, k)), [(E[:, i:i + 1], t, E[i:i + 1, :], False) for i in range(k)])


def objective_expr(program: LmiProgram) -> MatExpr:
    """The linear objective as a 1 x 1 expression."""
    out = MatExpr((1, 1), np.zeros((1, 1)), [])
    for name, W in program.objective.items():
        v = program.var(name)
        W = _as_const(W, v.shape)
        E = np.eye(v.shape[0])
        # <W, V> = sum_i e_i^T V W^T e_i
        for i in range(v.shape[0]):
            out = out + MatExpr((1, 1), np.zeros((1, 1)), [(E[i:i + 1], v, W.T[:, i:i + 1], False)])
    return out


def max_margin_program(program: LmiProgram, cap: float, t_max: float = 1.0) -> LmiProgram:
    """Most interior point with objective at most ``cap``.

    Every constraint ``F(x)`` becomes ``F(x) - t I`` and ``t`` is maximized,
    capped at ``t_max`` so the problem stays bounded.
    """
    t = sym("_margin", 1)
    out = LmiProgram(list(program.variables) + [t], name=program.name + "_max_margin")
    for con in program.constraints:
        k = con.expr.shape[0]
        out.constraints.append(Constraint(con.name, con.expr - scalar_identity(t, k), con.margin))
    out.add_constraint("objective_cap", cap - objective_expr(program), strict=False)
    out.add_constraint("margin_cap", t_max - t.expr(), strict=False)
    out.objective = {"_margin": -np.ones((1, 1))}
    return out
