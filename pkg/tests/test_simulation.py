import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import gramian_h2, random_lft_plant, random_lti_loop, scalar_loop
from lfth2.errors import UnstableFrozenLoop
from lfth2.lft_model import ClosedLoopLft, close_state_feedback, sample_uncertainty
from lfth2.simulation import (delta_grid, estimate_h2_white_noise, estimate_induced_gain, frequency_gain,
                              settling_index, simulate, step_disturbance_response, write_csv)


def test_zero_delta_matches_convolution():
    rng = np.random.default_rng(0)
    p = random_lft_plant(rng, n=3, np_=1)
    clp = close_state_feedback(p, np.zeros((p.nu, p.n)))
    T = 60
    d = rng.standard_normal((T, clp.nd))
    run = simulate(clp, np.zeros((1, 1)), d)
    h = [clp.C1 @ np.linalg.matrix_power(clp.A, k - 1) @ clp.B1 for k in range(1, T)]
    ref = np.array([sum(h[k - j - 1] @ d[j] for j in range(k)) if k else np.zeros(clp.ne) for k in range(T)])
    np.testing.assert_allclose(run.e, ref, atol=1e-9)


def test_frozen_delta_matches_lti_recursion():
    rng = np.random.default_rng(1)
    p = random_lft_plant(rng, n=2, np_=2)
    clp = close_state_feedback(p, np.zeros((p.nu, p.n)))
    delta = sample_uncertainty(clp.structure, rng)
    A, B, C, D = clp.frozen(delta)
    d = rng.standard_normal((40, clp.nd))
    x, ref = np.zeros(clp.n), []
    for k in range(40):
        ref.append(C @ x + D @ d[k])
        x = A @ x + B @ d[k]
    np.testing.assert_allclose(simulate(clp, delta, d).e, np.array(ref), atol=1e-10)


def test_white_noise_is_seeded_and_worker_invariant():
    clp = random_lti_loop(np.random.default_rng(2), n=3)
    a = estimate_h2_white_noise(clp, n_runs=16, T=512, burn_in=64, seed=5)
    b = estimate_h2_white_noise(clp, n_runs=16, T=512, burn_in=64, seed=5, workers=3)
    c = estimate_h2_white_noise(clp, n_runs=16, T=512, burn_in=64, seed=6)
    assert a.value == b.value and a.standard_error == b.standard_error
    assert a.value != c.value


@pytest.mark.parametrize("seed", range(3))
def test_white_noise_estimates_gramian_norm(seed):
    clp = random_lti_loop(np.random.default_rng(seed), n=3)
    est = estimate_h2_white_noise(clp, n_runs=32, T=2048, seed=seed)
    assert abs(est.value - gramian_h2(clp)) <= 4 * est.standard_error + 0.02 * gramian_h2(clp)


def test_white_noise_rejects_bad_burn_in():
    with pytest.raises(ValueError):
        estimate_h2_white_noise(scalar_loop(0.5, 1.0, 1.0), T=10, burn_in=10)


def test_frequency_gain_scalar():
    a = 0.5
    g, w = frequency_gain(np.array([[a]]), np.eye(1), np.eye(1), np.zeros((1, 1)), np.linspace(0, np.pi, 64))
    assert g == pytest.approx(1 / (1 - a)) and w == 0.0


def test_induced_gain_grid_and_instability():
    rng = np.random.default_rng(3)
    p = random_lft_plant(rng, n=2, np_=1)
    clp = close_state_feedback(p, np.zeros((p.nu, p.n)))
    est = estimate_induced_gain(clp, 5)
    assert est.details["grid_points"] == 5 and est.value > 0
    assert len(delta_grid(clp.structure, 3)) == 3
    with pytest.raises(UnstableFrozenLoop):
        estimate_induced_gain(scalar_loop(1.1, 1.0, 1.0))


def test_step_settles_for_stable_scalar():
    run = step_disturbance_response(scalar_loop(0.5, 1.0, 1.0), np.zeros((0, 0)), magnitude=1.0, T=50,
                                    channels=(0,))
    assert run.e[-1, 0] == pytest.approx(2.0)
    assert settling_index(np.diff(run.e[:, 0])) is not None


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(50, 400))
def test_settling_index_on_geometric_decay(r, T):
    sig = r ** np.arange(T)
    k = settling_index(sig)
    expect = int(np.floor(np.log(0.05) / np.log(r))) + 1
    if expect < T - 1:
        assert abs(k - expect) <= 1
    elif expect > T:
        assert k is None


def test_settling_never():
    assert settling_index(np.ones(10)) is None
    assert settling_index(np.zeros((5, 2))) == 0


def test_csv_header_and_rows(tmp_path):
    clp = ClosedLoopLft.create(A=[[0.5]], B1=[[1.0, 0.0]], C1=[[1.0], [2.0], [0.0]], ts=1.0)
    run = simulate(clp, None, np.ones((4, 2)))
    path = tmp_path / "run.csv"
    write_csv(run, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["k", "d_1", "d_2", "e_1", "e_2", "e_3"]
    assert len(rows) == 5 and rows[1][0] == "0"
