import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_controller, random_lft_plant
from lfth2.benchmarks import (AMB_TOPOLOGY, AmbParams, TWO_DISK_TOPOLOGY, TwoDiskParams, amb_delta, amb_lpv,
                              amb_weights, build_amb, build_two_disk, omega_to_delta, two_disk_raw,
                              two_disk_weights)
from lfth2.errors import DimensionMismatch, ImproperWeight, StructuralViolation
from lfth2.lft_model import (AffineLpvSystem, LftPlant, ScalingValue, UncertaintyStructure, assemble_scaling,
                             augment_with_weights, check_assumptions, close_output_feedback,
                             close_state_feedback, extract_scaling, lpv_to_lft, plant_similarity, rho_to_delta,
                             sample_uncertainty, validate_plant, vertex_deltas, weight_tf, zoh_discretize)

structures = st.builds(UncertaintyStructure,
                       st.lists(st.integers(1, 3), max_size=3).map(tuple),
                       st.lists(st.integers(1, 3), max_size=2).map(tuple),
                       st.integers(1, 2))


def random_scaling(structure, rng):
    blocks = []
    for d in structure.scaling_dims():
        G = rng.standard_normal((d, d))
        blocks.append(G @ G.T + d * np.eye(d))
    return ScalingValue(structure, blocks)


@settings(max_examples=100, deadline=None)
@given(structures, st.integers(0, 2 ** 32 - 1))
def test_scaling_commutes_with_delta(structure, seed):
    rng = np.random.default_rng(seed)
    X = random_scaling(structure, rng).matrix
    D = sample_uncertainty(structure, rng)
    assert np.abs(X @ D - D @ X).max(initial=0.0) <= 1e-13 * max(1.0, np.abs(X).max(initial=0.0))


@settings(max_examples=50, deadline=None)
@given(structures, st.integers(0, 2 ** 32 - 1))
def test_extract_inverts_assemble(structure, seed):
    S = random_scaling(structure, np.random.default_rng(seed))
    back = extract_scaling(structure, S.matrix)
    assert all(np.array_equal(a, b) for a, b in zip(back, S.blocks))


@settings(max_examples=50, deadline=None)
@given(structures, st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
def test_sampled_delta_is_in_the_ball(structure, seed, bound):
    D = sample_uncertainty(structure, seed, bound)
    assert D.shape == (structure.n_p, structure.n_p)
    assert D.size == 0 or np.linalg.norm(D, 2) <= bound + 1e-12


def test_sample_uncertainty_is_seeded():
    s = UncertaintyStructure((2, 1), (2,))
    assert np.array_equal(sample_uncertainty(s, 3), sample_uncertainty(s, 3))
    with pytest.raises(ValueError):
        sample_uncertainty(s, 0, bound=1.5)


def test_vertex_count_and_copies():
    s = UncertaintyStructure((1, 2))
    vs = vertex_deltas(s, (-1.0, 0.0, 1.0))
    assert len(vs) == 9
    assert all(v.shape == (3, 3) for v in vs)
    d2 = vertex_deltas(s.doubled())[0]
    assert np.array_equal(d2, np.kron(np.eye(2), vertex_deltas(s)[0]))


def test_scaling_value_rejects_indefinite():
    with pytest.raises(StructuralViolation):
        ScalingValue(UncertaintyStructure((1,)), [[[-1.0]]])
    with pytest.raises(DimensionMismatch):
        assemble_scaling(UncertaintyStructure((1, 1)), [np.eye(1)])


def test_validate_rejects_nonzero_structural_blocks():
    p = random_lft_plant(np.random.default_rng(0), n=2, np_=1)
    with pytest.raises(StructuralViolation):
        validate_plant(p.replace(D11=np.ones((p.ne, p.nd))))
    with pytest.raises(DimensionMismatch):
        validate_plant(p.replace(B1=np.ones((p.n + 1, p.nd))))


def test_create_infers_dimensions():
    p = LftPlant.create(np.eye(2) * 0.5, structure=UncertaintyStructure((1,)), ts=1.0,
                        B0=np.ones((2, 1)), C0=np.ones((1, 2)), B1=np.ones((2, 3)), C1=np.ones((1, 2)),
                        B2=np.ones((2, 1)), C2=np.ones((1, 2)))
    assert p.dims == {"n": 2, "np": 1, "nd": 3, "ne": 1, "nu": 1, "ny": 1}
    assert not np.any(p.D12)


def _frozen_plant(p, delta):
    """Plant with Delta absorbed, as plain (A, B, C, D) over [d, u] -> [e, y]."""
    K = delta @ np.linalg.inv(np.eye(p.np) - p.D00 @ delta)
    A = p.A + p.B0 @ K @ p.C0
    B = np.hstack([p.B1 + p.B0 @ K @ p.D01, p.B2 + p.B0 @ K @ p.D02])
    C = np.vstack([p.C1 + p.D10 @ K @ p.C0, p.C2 + p.D20 @ K @ p.C0])
    D = np.block([[p.D11 + p.D10 @ K @ p.D01, p.D12 + p.D10 @ K @ p.D02],
                  [p.D21 + p.D20 @ K @ p.D01, p.D22 + p.D20 @ K @ p.D02]])
    return A, B, C, D


def _frozen_controller(Kc, delta):
    K = delta @ np.linalg.inv(np.eye(Kc.np) - Kc.Dk00 @ delta)
    return (Kc.Ak + Kc.Bk0 @ K @ Kc.Ck0, Kc.Bk1, Kc.Ck1 + Kc.Dk10 @ K @ Kc.Ck0)


@pytest.mark.parametrize("seed", range(5))
def test_output_feedback_matches_frozen_interconnection(seed):
    rng = np.random.default_rng(seed)
    p = random_lft_plant(rng, n=3, np_=2)
    Kc = random_controller(rng, p)
    clp = close_output_feedback(p, Kc)
    delta = sample_uncertainty(p.structure, rng)
    A, B, C, D = _frozen_plant(p, delta)
    Ak, Bk, Ck = _frozen_controller(Kc, delta)
    nd, ne = p.nd, p.ne
    # u = Ck xk; Delta creates a u -> y feedthrough D_yu
    Dyu = D[ne:, nd:]
    Aref = np.block([[A, B[:, nd:] @ Ck], [Bk @ C[ne:], Ak + Bk @ Dyu @ Ck]])
    Bref = np.vstack([B[:, :nd], Bk @ D[ne:, :nd]])
    Cref = np.hstack([C[:ne], D[:ne, nd:] @ Ck])
    got = clp.frozen(np.kron(np.eye(2), delta))
    for g, r in zip(got, (Aref, Bref, Cref, D[:ne, :nd])):
        np.testing.assert_allclose(g, r, atol=1e-10)


def test_state_feedback_closure():
    rng = np.random.default_rng(1)
    p = random_lft_plant(rng, n=3, np_=1)
    F = rng.standard_normal((p.nu, p.n))
    clp = close_state_feedback(p, F)
    np.testing.assert_allclose(clp.A, p.A + p.B2 @ F)
    np.testing.assert_allclose(clp.C0, p.C0 + p.D02 @ F)
    with pytest.raises(DimensionMismatch):
        close_state_feedback(p, np.ones((p.nu, p.n + 1)))


def test_output_feedback_structural_zeros_exact():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_lft_plant(rng)
        clp = close_output_feedback(p, random_controller(rng, p))
        assert not np.any(clp.D01) and not np.any(clp.D11)
        assert clp.structure.copies == 2


def test_similarity_preserves_frozen_response():
    rng = np.random.default_rng(2)
    p = random_lft_plant(rng, n=3, np_=1)
    T = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    q = plant_similarity(p, T)
    z = np.exp(0.7j)
    delta = np.array([[0.4]])
    A1, B1, C1, D1 = _frozen_plant(p, delta)
    A2, B2, C2, D2 = _frozen_plant(q, delta)
    H1 = C1 @ np.linalg.solve(z * np.eye(3) - A1, B1) + D1
    H2 = C2 @ np.linalg.solve(z * np.eye(3) - A2, B2) + D2
    np.testing.assert_allclose(H1, H2, atol=1e-10)


def test_zoh_scalar_closed_form():
    a, b, ts = -2.0, 3.0, 0.1
    p = LftPlant.create([[a]], ts=0.0, B1=[[b]], C1=[[1.0]], nu=0, ny=0)
    d = zoh_discretize(p, ts)
    assert d.A[0, 0] == pytest.approx(np.exp(a * ts), rel=1e-12)
    assert d.B1[0, 0] == pytest.approx((np.exp(a * ts) - 1) / a * b, rel=1e-12)
    with pytest.raises(ValueError):
        zoh_discretize(d, ts)


def test_lpv_to_lft_reproduces_affine_family():
    rng = np.random.default_rng(3)
    n = 4
    A1 = rng.standard_normal((n, 2)) @ rng.standard_normal((2, n))
    sys = AffineLpvSystem(rng.standard_normal((n, n)), A1, np.ones((n, 1)), np.ones((n, 1)), np.ones((1, n)),
                          np.ones((1, n)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)),
                          np.zeros((1, 1)), (2.0, 6.0))
    p = lpv_to_lft(sys)
    assert p.np == 2
    for rho in (2.0, 3.3, 6.0):
        d = float(rho_to_delta(sys, rho)) * np.eye(p.np)
        np.testing.assert_allclose(p.A + p.B0 @ d @ p.C0, sys.A(rho), atol=1e-10)


def test_weight_tf_rejects_improper():
    with pytest.raises(ImproperWeight):
        weight_tf([1.0, 0.0, 1.0], [1.0, 1.0])
    w = weight_tf([0.3, 1.2], [1.0, 0.04])
    assert abs(w.freqresp(0.0)[0, 0] - 30.0) < 1e-9


def test_two_disk_plant_entries():
    p = TwoDiskParams()
    raw = two_disk_raw(p)
    assert raw.A[2, 0] == pytest.approx(4.5 - 200.0)
    assert raw.A[3, 1] == pytest.approx(12.5 - 400.0)
    assert raw.B0[2, 0] == 4.5 and raw.B0[3, 1] == 12.5
    assert raw.B1[2, 0] == pytest.approx(0.1) and raw.B1[3, 1] == pytest.approx(0.2)
    np.testing.assert_allclose(omega_to_delta(p, 3.0, 0.0), np.diag([1.0, -1.0]))
    built = build_two_disk(p)
    w = built["weighted"]
    orders = sum(two_disk_weights()[k].n for k in ("We", "Wu", "Wn", "Wa", "Act"))
    assert w.n == 4 + orders and w.ts == 0.01
    assert built["weighted_sf"].n == w.n - two_disk_weights()["Wn"].n
    assert TWO_DISK_TOPOLOGY.actuator == "Act"


def test_amb_model():
    p = AmbParams()
    c = p.constants()
    assert c["c1"] == pytest.approx(197149.08, rel=1e-6)
    assert c["d1"] == pytest.approx(20858.18, rel=1e-6)
    lpv = amb_lpv(p)
    assert lpv.A(1000.0)[2, 3] == pytest.approx(-1000.0 * p.Ja / p.Jr)
    w = build_amb(p)["weighted"]
    assert w.structure == UncertaintyStructure((2,))
    rep = check_assumptions(w)
    assert rep.stabilizable and rep.detectable
    np.testing.assert_allclose(amb_delta(p, 1100.0), np.eye(2))
    assert w.n == 6 + sum(amb_weights()[k].n for k in ("Wz", "Wu", "Wn"))
    assert AMB_TOPOLOGY.d_weights


def test_augment_requires_known_weights():
    with pytest.raises(Exception):
        augment_with_weights(two_disk_raw(), {"We": weight_tf([1.0], [1.0])}, TWO_DISK_TOPOLOGY)
