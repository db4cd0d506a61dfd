import itertools
import math

import numpy as np
import pytest

from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState, make_rng, random_density_matrix


def ptrace_loops(m, dims, keep_axes):
    """Partial trace by explicit index loops; deliberately naive."""
    n = len(dims)
    kept = [dims[i] for i in keep_axes]
    traced = [i for i in range(n) if i not in keep_axes]
    dk = int(np.prod(kept)) if kept else 1
    out = np.zeros((dk, dk), dtype=complex)
    strides = [int(np.prod(dims[i + 1:])) for i in range(n)]
    for row in itertools.product(*[range(d) for d in kept]):
        for col in itertools.product(*[range(d) for d in kept]):
            r = int(np.ravel_multi_index(row, kept)) if kept else 0
            c = int(np.ravel_multi_index(col, kept)) if kept else 0
            acc = 0j
            for t in itertools.product(*[range(dims[i]) for i in traced]):
                ri = ci = 0
                for ax, v in zip(keep_axes, row):
                    ri += v * strides[ax]
                for ax, v in zip(keep_axes, col):
                    ci += v * strides[ax]
                for ax, v in zip(traced, t):
                    ri += v * strides[ax]
                    ci += v * strides[ax]
                acc += m[ri, ci]
            out[r, c] = acc
    return out


def bell_vector():
    v = np.zeros(4)
    v[0] = v[3] = 1 / math.sqrt(2)
    return v


def isotropic(f):
    phi = bell_vector()
    p = np.outer(phi, phi)
    return MultipartiteState(f * p + (1 - f) / 3 * (np.eye(4) - p), SubsystemLayout(("A", "B"), (2, 2)))


def random_aeb(seed, dims=(2, 2, 2), ensemble="hilbert_schmidt_mixed"):
    rng = make_rng(seed)
    d = int(np.prod(dims))
    return MultipartiteState(random_density_matrix(rng, d, ensemble), SubsystemLayout(("A", "E", "B"), dims))


def separable_state(seed, terms=4, da=2, db=2):
    rng = make_rng(seed)
    w = rng.dirichlet(np.ones(terms))
    m = sum(p * np.kron(random_density_matrix(rng, da, "haar_pure"), random_density_matrix(rng, db, "haar_pure"))
            for p in w)
    return MultipartiteState(m, SubsystemLayout(("A", "B"), (da, db)))


def h2(x):
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def wootters_eof(rho):
    """Two-qubit E_F from the concurrence; test oracle only."""
    sy = np.array([[0, -1j], [1j, 0]])
    yy = np.kron(sy, sy)
    r = rho @ yy @ rho.conj() @ yy
    lam = np.sqrt(np.clip(np.sort(np.real(np.linalg.eigvals(r)))[::-1], 0, None))
    c = max(0.0, lam[0] - lam[1] - lam[2] - lam[3])
    return h2((1 + math.sqrt(max(1 - c * c, 0.0))) / 2)


@pytest.fixture
def rng():
    return make_rng(12345)
