import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfth2.errors import DimensionMismatch, MissingVariable
from lfth2.lft_model import UncertaintyStructure
from lfth2.lmi import (LmiProgram, bmat, blkdiag, eval_expr, max_margin_program, rect, scaling, sym,
                       sym_bmat)
from lfth2.sdp import check_solution

seeds = st.integers(0, 2 ** 32 - 1)


def random_pair(rng, n):
    """Random P > 0 and an invertible V."""
    G = rng.standard_normal((n, n))
    P = G @ G.T + 0.1 * np.eye(n)
    V = rng.standard_normal((n, n)) + 0.5 * n * np.eye(n)
    return V, P


def inverse_bound_gap(V, P):
    """min eig of P^-1 - V^-T (V + V^T - P) V^-1; nonnegative since (V - P)^T P^-1 (V - P) >= 0."""
    Vi = np.linalg.inv(V)
    G = np.linalg.inv(P) - Vi.T @ (V + V.T - P) @ Vi
    return np.linalg.eigvalsh(0.5 * (G + G.T))[0]


def test_inverse_bound_on_200_pairs():
    rng = np.random.default_rng(2024)
    worst = min(inverse_bound_gap(*random_pair(rng, int(rng.integers(1, 6)))) for _ in range(200))
    assert worst >= -1e-10


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 5))
def test_inverse_bound_property(seed, n):
    V, P = random_pair(np.random.default_rng(seed), n)
    assert inverse_bound_gap(V, P) >= -1e-10 * max(1.0, np.abs(np.linalg.inv(P)).max())


def test_inverse_bound_is_tight_at_v_equal_p():
    V, P = random_pair(np.random.default_rng(1), 3)
    assert abs(inverse_bound_gap(P, P)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_expression_algebra_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    P, X = sym("P", 3), rect("X", 2, 3)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((2, 2))
    e = bmat([[A.T @ P.expr() @ A, X.T], [X, B @ B.T]])
    Pv = rng.standard_normal((3, 3))
    Pv = Pv + Pv.T
    Xv = rng.standard_normal((2, 3))
    ref = np.block([[A.T @ Pv @ A, Xv.T], [Xv, B @ B.T]])
    np.testing.assert_allclose(eval_expr(e, {"P": Pv, "X": Xv}), ref, atol=1e-12)
    np.testing.assert_allclose(eval_expr(2.0 * P.expr() - P.expr(), {"P": Pv}), Pv, atol=1e-12)


def test_sym_bmat_fills_upper_triangle():
    P = sym("P", 2)
    C = np.array([[1.0, 2.0]])
    e = sym_bmat([[P.expr()], [C, np.eye(1)]])
    Pv = np.array([[3.0, 1.0], [1.0, 4.0]])
    M = eval_expr(e, {"P": Pv})
    np.testing.assert_array_equal(M, M.T)
    np.testing.assert_array_equal(M[:2, 2:], C.T)


def test_blkdiag_shapes():
    e = blkdiag(sym("a", 2).expr(), np.eye(3))
    assert e.shape == (5, 5)


def test_gather_scatter_round_trip():
    s = UncertaintyStructure((1, 2), (2,))
    prog = LmiProgram([sym("P", 3), rect("M", 2, 3), scaling("L", s)])
    theta = np.random.default_rng(0).standard_normal(prog.ncoords)
    np.testing.assert_allclose(prog.gather(prog.scatter(theta)), theta, atol=1e-12)
    L = prog.scatter(theta)["L"]
    np.testing.assert_array_equal(L, L.T)


def test_program_rejects_bad_constraints():
    P = sym("P", 2)
    prog = LmiProgram([P])
    with pytest.raises(DimensionMismatch):
        prog.add_constraint("rect", rect("X", 2, 3).expr())
    with pytest.raises(MissingVariable):
        prog.add_constraint("foreign", sym("Q", 2).expr())


def test_strict_margin_and_json_dump():
    P = sym("P", 2)
    prog = LmiProgram([P], name="toy")
    prog.add_constraint("pos", P.expr() - 2.0 * np.eye(2))
    prog.add_constraint("soft", P.expr(), strict=False)
    assert prog.constraints[0].margin > 0 and prog.constraints[1].margin == 0
    doc = json.loads(prog.to_json())
    assert doc["name"] == "toy" and [c["name"] for c in doc["constraints"]] == ["pos", "soft"]


def test_max_margin_program_adds_slack():
    P = sym("P", 2)
    prog = LmiProgram([P])
    prog.add_constraint("pos", P.expr(), strict=False)
    prog.objective = {"P": np.eye(2)}
    mm = max_margin_program(prog, cap=1.0)
    assert mm.var("_margin").shape == (1, 1)
    rep = check_solution(mm, {"P": 0.4 * np.eye(2), "_margin": np.array([[0.3]])})
    assert rep.margins["pos"] == pytest.approx(0.1)
    assert rep.margins["objective_cap"] == pytest.approx(0.2)
