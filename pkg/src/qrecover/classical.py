"""Finite-alphabet distributions, stochastic maps and the Bayes transpose channel."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from qrecover import kernels, serialization
from qrecover.errors import DimensionMismatch, InvalidState

PROB_TOL = 1e-12
GAP_TOL = 1e-10
LN2 = math.log(2)


@dataclass(frozen=True)
class Distribution:
    probs: np.ndarray
    alphabet: tuple = field(default=())

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size == 0 or not np.all(np.isfinite(p)):
            raise InvalidState("finite: probabilities must be finite and nonempty")
        if np.any(p < -PROB_TOL):
            raise InvalidState(f"positive: negative probability {p.min():.3e}")
        if abs(p.sum() - 1) > PROB_TOL * max(1, p.size):
            raise InvalidState(f"trace: probabilities sum to {p.sum():.15f}")
        p = np.clip(p, 0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        alpha = tuple(self.alphabet) if self.alphabet else tuple(range(p.size))
        if len(alpha) != p.size:
            raise DimensionMismatch(f"{len(alpha)} labels for {p.size} probabilities")
        object.__setattr__(self, "alphabet", alpha)

    def __len__(self) -> int:
        return self.probs.size

    def support(self) -> np.ndarray:
        return self.probs > 0


@dataclass(frozen=True)
class StochasticMap:
    """t[u, x] = T(u|x); columns sum to one."""

    matrix: np.ndarray

    def __post_init__(self):
        t = np.array(self.matrix, dtype=float)
        if t.ndim != 2 or not np.all(np.isfinite(t)):
            raise InvalidState("finite: stochastic matrix must be a finite 2-d array")
        if np.any(t < -PROB_TOL):
            raise InvalidState("positive: negative transition probability")
        if np.max(np.abs(t.sum(axis=0) - 1)) > PROB_TOL * max(1, t.shape[0]):
            raise InvalidState("trace: a column does not sum to 1")
        t = np.clip(t, 0, None)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", t)

    @property
    def n_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_out(self) -> int:
        return self.matrix.shape[0]

    def is_deterministic(self) -> bool:
        return bool(np.all(np.sum(self.matrix >= 1 - PROB_TOL, axis=0) == 1))


def push(t: StochasticMap, p: Distribution) -> Distribution:
    if t.n_in != len(p):
        raise DimensionMismatch(f"map takes {t.n_in} symbols, distribution has {len(p)}")
    out = t.matrix @ p.probs
    return Distribution(out / out.sum())


def transpose_channel(t: StochasticMap, q: Distribution) -> StochasticMap:
    """R(x|u) = T(u|x) Q(x) / (TQ)(u); a column with (TQ)(u) = 0 is set to Q."""
    if t.n_in != len(q):
        raise DimensionMismatch(f"map takes {t.n_in} symbols, distribution has {len(q)}")
    tq = t.matrix @ q.probs
    joint = t.matrix * q.probs[None, :]          # u, x
    r = np.empty((t.n_in, t.n_out))
    for u in range(t.n_out):
        r[:, u] = joint[u] / tq[u] if tq[u] > 0 else q.probs
    r /= r.sum(axis=0, keepdims=True)
    return StochasticMap(r)


def kl_divergence(p: Distribution | np.ndarray, q: Distribution | np.ndarray) -> float:
    """D(P||Q) in bits, inf if supp P is not inside supp Q."""
    p = p.probs if isinstance(p, Distribution) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, Distribution) else np.asarray(q, dtype=float)
    on = p > 0
    if np.any(q[on] <= 0):
        return math.inf
    return float(np.sum(p[on] * np.log2(p[on] / q[on])))


@dataclass(frozen=True)
class Theorem5Check:
    lhs: float
    rhs: float
    gap: float
    deterministic: bool
    equality: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.gap, self.deterministic, self.equality))


def check_theorem5(p: Distribution, q: Distribution, t: StochasticMap) -> Theorem5Check:
    """lhs = D(P||Q) - D(TP||TQ), rhs = D(P||RTP), gap = lhs - rhs.

    With supp P outside supp Q the lhs is infinite and the gap is reported
    as inf (no error).
    """
    if not len(p) == len(q) == t.n_in:
        raise DimensionMismatch("P, Q and T disagree on the input alphabet")
    d_pq, d_tp_tq, d_p_rtp = kernels.theorem5_terms(
        np.ascontiguousarray(p.probs), np.ascontiguousarray(q.probs), np.ascontiguousarray(t.matrix))
    if math.isinf(d_pq):
        lhs = math.inf
    else:
        lhs = d_pq - d_tp_tq
    rhs = d_p_rtp
    gap = lhs - rhs if math.isfinite(lhs) else math.inf
    return Theorem5Check(lhs, rhs, gap, t.is_deterministic(),
                         bool(math.isfinite(gap) and abs(gap) <= GAP_TOL))


def deterministic_maps(n_in: int, n_out: int):
    """Every function x -> u as a 0/1 stochastic matrix."""
    for f in itertools.product(range(n_out), repeat=n_in):
        t = np.zeros((n_out, n_in))
        t[list(f), range(n_in)] = 1
        yield StochasticMap(t)


def random_distribution(rng: np.random.Generator, n: int, sparsity: float = 0.0) -> Distribution:
    p = rng.exponential(size=n)
    if sparsity:
        p[rng.random(n) < sparsity] = 0
        if p.sum() == 0:
            p[rng.integers(n)] = 1
    return Distribution(p / p.sum())


def random_stochastic_map(rng: np.random.Generator, n_out: int, n_in: int) -> StochasticMap:
    t = rng.exponential(size=(n_out, n_in))
    return StochasticMap(t / t.sum(axis=0, keepdims=True))


# --------------------------------------------------------------- three-party joints


def _joint(p: Distribution, shape: Sequence[int] | None) -> np.ndarray:
    if shape is None:
        raise DimensionMismatch("a joint distribution needs its (|X|, |Y|, |Z|) shape")
    if int(np.prod(shape)) != len(p):
        raise DimensionMismatch(f"shape {tuple(shape)} does not match {len(p)} probabilities")
    return p.probs.reshape(tuple(shape))


def markov_projection(p_xyz: Distribution, shape: Sequence[int]) -> Distribution:
    """Q(x,y,z) = P(x,y) P(z|y); P(z|y) is uniform where P(y) = 0."""
    p = _joint(p_xyz, shape)
    p_xy = p.sum(axis=2)
    p_yz = p.sum(axis=0)
    p_y = p_yz.sum(axis=1)
    cond = np.full_like(p_yz, 1.0 / p.shape[2])
    on = p_y > 0
    cond[on] = p_yz[on] / p_y[on, None]
    q = p_xy[:, :, None] * cond[None, :, :]
    return Distribution(q.reshape(-1) / q.sum(), p_xyz.alphabet)


def _shannon(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def classical_conditional_mutual_information(p_xyz: Distribution, shape: Sequence[int]) -> float:
    """I(X:Z|Y) = H(XY) + H(YZ) - H(Y) - H(XYZ)."""
    p = _joint(p_xyz, shape)
    return (_shannon(p.sum(axis=2).ravel()) + _shannon(p.sum(axis=0).ravel())
            - _shannon(p.sum(axis=(0, 2))) - _shannon(p.ravel()))


def pinsker_holds(p: Distribution, q: Distribution, slack: float = 1e-9) -> tuple[float, float, bool]:
    """(||P-Q||_1, sqrt(2 ln 2 D(P||Q)), first <= second + slack)."""
    l1 = float(np.sum(np.abs(p.probs - q.probs)))
    bound = math.sqrt(2 * LN2 * max(kl_divergence(p, q), 0.0))
    return l1, bound, bool(l1 <= bound + slack)


def diagonal_embedding(p: Distribution) -> np.ndarray:
    return np.diag(p.probs).astype(np.complex128)


# --------------------------------------------------------------- file format


def dumps_distribution(p: Distribution) -> str:
    doc = {
        "version": 1,
        "kind": "distribution",
        "alphabet": [str(a) for a in p.alphabet],
        "probs": [float(x) for x in p.probs],
    }
    return serialization.dumps(doc)


def loads_distribution(text: str) -> Distribution:
    try:
        doc = serialization.loads(text)
    except ValueError as exc:
        raise InvalidState(f"syntax: {exc}") from None
    if not isinstance(doc, dict) or doc.get("kind") != "distribution" or "probs" not in doc:
        raise InvalidState("field: expected a distribution document with 'probs'")
    if doc.get("version") != 1:
        raise InvalidState(f"version: unsupported version {doc.get('version')!r}")
    return Distribution(np.asarray(doc["probs"], dtype=float), tuple(doc.get("alphabet", ())))


def save_distribution(p: Distribution, path: str | Path) -> None:
    Path(path).write_text(dumps_distribution(p))


def load_distribution(path: str | Path) -> Distribution:
    return loads_distribution(Path(path).read_text())
