import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import rel_entr

from qrecover import channels, info
from qrecover.classical import (
    Distribution,
    StochasticMap,
    check_theorem5,
    classical_conditional_mutual_information,
    deterministic_maps,
    diagonal_embedding,
    dumps_distribution,
    kl_divergence,
    load_distribution,
    loads_distribution,
    markov_projection,
    push,
    random_distribution,
    random_stochastic_map,
    save_distribution,
    transpose_channel,
)
from qrecover.errors import DimensionMismatch, InvalidState
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState, make_rng


def kl_oracle(p, q):
    """scipy's elementwise relative entropy, converted to bits."""
    return float(np.sum(rel_entr(p, q))) / math.log(2)


def bayes_gap(p, q, t):
    """Gap assembled from the Bayes inverse built by hand, independent of the kernel."""
    tp, tq = t @ p, t @ q
    r = (t * q[None, :]).T / np.where(tq > 0, tq, 1)[None, :]
    r[:, tq == 0] = q[:, None]
    return kl_oracle(p, q) - kl_oracle(tp, tq) - kl_oracle(p, r @ tp)


def test_distribution_validation():
    for bad, prefix in (([0.5, np.inf], "finite"), ([1.2, -0.2], "positive"), ([0.5, 0.4], "trace")):
        with pytest.raises(InvalidState, match=f"^{prefix}:"):
            Distribution(bad)
    with pytest.raises(InvalidState, match="^trace:"):
        StochasticMap([[0.5, 0.2], [0.4, 0.8]])
    with pytest.raises(DimensionMismatch):
        Distribution([0.5, 0.5], ("a",))


def test_push_examples(rng):
    p = random_distribution(rng, 4)
    np.testing.assert_allclose(push(StochasticMap(np.eye(4)), p).probs, p.probs)
    col = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(push(StochasticMap(np.tile(col[:, None], (1, 4))), p).probs, col, atol=1e-15)
    ds = StochasticMap(np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]]))
    np.testing.assert_allclose(push(ds, Distribution(np.ones(3) / 3)).probs, np.ones(3) / 3, atol=1e-15)
    with pytest.raises(DimensionMismatch):
        push(ds, p)


def test_transpose_identity(rng):
    q = Distribution([0.2, 0.8, 0.0])
    r = transpose_channel(StochasticMap(np.eye(3)), q)
    np.testing.assert_allclose(r.matrix[:, :2], np.eye(3)[:, :2])
    np.testing.assert_allclose(r.matrix[:, 2], q.probs)


def test_transpose_marginalization_reinstalls_conditional(rng):
    qx, qy = random_distribution(rng, 2).probs, random_distribution(rng, 3).probs
    q = Distribution(np.kron(qx, qy))
    t = np.zeros((3, 6))
    for x in range(2):
        for y in range(3):
            t[y, 3 * x + y] = 1
    r = transpose_channel(StochasticMap(t), q).matrix
    for y in range(3):
        expected = np.zeros(6)
        expected[[y, 3 + y]] = qx
        np.testing.assert_allclose(r[:, y], expected, atol=1e-15)


def test_transpose_uniform_doubly_stochastic():
    t = np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
    r = transpose_channel(StochasticMap(t), Distribution(np.ones(3) / 3)).matrix
    tt = t.T / t.T.sum(axis=0, keepdims=True)
    np.testing.assert_allclose(r, tt, atol=1e-15)


def test_transpose_fixes_q(rng):
    for _ in range(50):
        n, m = (int(x) for x in rng.integers(1, 7, size=2))
        q = random_distribution(rng, n, sparsity=0.3)
        t = random_stochastic_map(rng, m, n)
        r = transpose_channel(t, q)
        assert np.max(np.abs(r.matrix @ (t.matrix @ q.probs) - q.probs)) <= 1e-12


def test_transpose_matches_petz_on_diagonal(rng):
    for _ in range(10):
        q = random_distribution(rng, 4)
        t = random_stochastic_map(rng, 3, 4)
        r = transpose_channel(t, q).matrix
        ch = channels.classical_channel(t.matrix)
        rec = channels.petz_map(ch, MultipartiteState(diagonal_embedding(q), ch.in_layout))
        for u in range(3):
            e = np.zeros((3, 3))
            e[u, u] = 1
            np.testing.assert_allclose(rec(e), np.diag(r[:, u]), atol=1e-9)


def test_kl_matches_scipy(rng):
    for _ in range(20):
        p, q = random_distribution(rng, 5, 0.3), random_distribution(rng, 5)
        assert abs(kl_divergence(p, q) - kl_oracle(p.probs, q.probs)) < 1e-12
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf


def test_recovery_gap_p_equals_q(rng):
    p = random_distribution(rng, 5)
    lhs, rhs, gap, _, eq = check_theorem5(p, p, random_stochastic_map(rng, 3, 5))
    assert abs(lhs) < 1e-12 and abs(rhs) < 1e-12 and eq


def test_recovery_gap_marginalization_is_identity(rng):
    t = np.zeros((3, 6))
    for x in range(2):
        for y in range(3):
            t[y, 3 * x + y] = 1
    t = StochasticMap(t)
    for _ in range(50):
        c = check_theorem5(random_distribution(rng, 6), random_distribution(rng, 6), t)
        assert c.deterministic and abs(c.gap) <= 1e-10 and c.equality


def test_recovery_gap_exhaustive_deterministic():
    rng = make_rng(5)
    worst = 0.0
    for nx in range(1, 4):
        for nu in range(1, 4):
            for t in deterministic_maps(nx, nu):
                for _ in range(30):
                    p, q = random_distribution(rng, nx, 0.3), random_distribution(rng, nx)
                    worst = max(worst, abs(check_theorem5(p, q, t).gap))
    assert worst <= 1e-10


def test_recovery_gap_random_campaign_and_oracle():
    worst = math.inf
    for seed in range(2000):
        rng = make_rng(seed)
        nx, nu = (int(x) for x in rng.integers(1, 9, size=2))
        p, q = random_distribution(rng, nx, 0.2), random_distribution(rng, nx)
        t = random_stochastic_map(rng, nu, nx)
        c = check_theorem5(p, q, t)
        worst = min(worst, c.gap)
        if seed % 20 == 0:
            assert abs(c.gap - bayes_gap(p.probs, q.probs, t.matrix)) < 1e-9
    assert worst >= -1e-10


def test_recovery_gap_off_support_reports_infinity():
    c = check_theorem5(Distribution([0.5, 0.5]), Distribution([1.0, 0.0]), StochasticMap(np.eye(2)))
    assert c.lhs == math.inf and c.gap == math.inf and not c.equality


def test_recovery_gap_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        check_theorem5(Distribution([1.0]), Distribution([0.5, 0.5]), StochasticMap(np.eye(2)))


def test_deterministic_detection(rng):
    assert all(t.is_deterministic() for t in deterministic_maps(3, 2))
    assert not random_stochastic_map(rng, 2, 3).is_deterministic()
    assert len(list(deterministic_maps(3, 3))) == 27


def _markov_joint(rng):
    px = random_distribution(rng, 3).probs
    ty = random_stochastic_map(rng, 3, 3).matrix
    tz = random_stochastic_map(rng, 3, 3).matrix
    return Distribution(np.einsum("x,yx,zy->xyz", px, ty, tz).ravel())


def test_markov_projection_fixed_points(rng):
    p = _markov_joint(rng)
    np.testing.assert_allclose(markov_projection(p, (3, 3, 3)).probs, p.probs, atol=1e-15)
    prod = Distribution(np.einsum("x,y,z->xyz", *(random_distribution(rng, 3).probs for _ in range(3))).ravel())
    np.testing.assert_allclose(markov_projection(prod, (3, 3, 3)).probs, prod.probs, atol=1e-15)


def test_markov_projection_relative_entropy_is_cmi():
    for seed in range(200):
        rng = make_rng(seed)
        p = random_distribution(rng, 27, 0.1)
        q = markov_projection(p, (3, 3, 3))
        cmi = classical_conditional_mutual_information(p, (3, 3, 3))
        assert abs(kl_divergence(p, q) - cmi) <= 1e-10
        assert classical_conditional_mutual_information(q, (3, 3, 3)) <= 1e-12
        assert np.sum(np.abs(p.probs - q.probs)) <= math.sqrt(2 * math.log(2) * max(cmi, 0)) + 1e-9


def test_markov_projection_zero_y():
    p = np.zeros((2, 2, 2))
    p[:, 0, :] = 0.25
    q = markov_projection(Distribution(p.ravel()), (2, 2, 2))
    np.testing.assert_allclose(q.probs, p.ravel())


def test_classical_cmi_examples(rng):
    assert abs(classical_conditional_mutual_information(_markov_joint(rng), (3, 3, 3))) < 1e-12
    copy = np.zeros((2, 1, 2))
    copy[0, 0, 0] = copy[1, 0, 1] = 0.5
    assert abs(classical_conditional_mutual_information(Distribution(copy.ravel()), (2, 1, 2)) - 1) < 1e-15


def test_classical_cmi_matches_quantum_embedding(rng):
    for _ in range(20):
        p = random_distribution(rng, 12, 0.2)
        # quantum layout orders (X, Y, Z) as A, E, B
        rho = MultipartiteState(diagonal_embedding(p), SubsystemLayout(("A", "E", "B"), (2, 3, 2)))
        q = info.conditional_mutual_information(rho, "A", "B", "E")
        assert abs(q - classical_conditional_mutual_information(p, (2, 3, 2))) <= 1e-9


def test_distribution_file_round_trip(tmp_path, rng):
    p = Distribution(random_distribution(rng, 4).probs, ("a", "b", "c", "d"))
    save_distribution(p, tmp_path / "p.json")
    back = load_distribution(tmp_path / "p.json")
    assert np.array_equal(back.probs, p.probs) and back.alphabet == p.alphabet
    assert dumps_distribution(back) == dumps_distribution(p)
    with pytest.raises(InvalidState, match="^syntax:"):
        loads_distribution("[")
    with pytest.raises(InvalidState, match="^field:"):
        loads_distribution('{"version": 1}')


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_recovery_gap_gap_nonnegative(nx, nu, seed):
    rng = make_rng(seed)
    c = check_theorem5(random_distribution(rng, nx, 0.3), random_distribution(rng, nx), random_stochastic_map(rng, nu, nx))
    assert c.gap >= -1e-10
