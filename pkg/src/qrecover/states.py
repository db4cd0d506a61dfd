"""Multipartite density matrices: validation, named states, purifications, sampling.

Random sampling uses numpy's PCG64 bit generator seeded with a 64-bit
integer; campaigns derive per-trial seeds as ``seed + trial_index``.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from qrecover import linalg, serialization
from qrecover.errors import (
    BlockMismatch,
    DimensionCap,
    InvalidState,
    NotSymmetric,
    TooManyCopies,
)
from qrecover.linalg import SubsystemLayout

STATE_TOL = 1e-10
DIMENSION_CAP = 4096
FILE_VERSION = 1


def default_labels(n: int) -> tuple[str, ...]:
    """Fixture labels: A | A,B | A,E,B | S1..Sn."""
    if n == 1:
        return ("A",)
    if n == 2:
        return ("A", "B")
    if n == 3:
        return ("A", "E", "B")
    return tuple(f"S{i + 1}" for i in range(n))


@dataclass(frozen=True)
class MultipartiteState:
    """A density matrix together with the subsystem layout it lives on.

    Construction checks Hermiticity, unit trace and positivity at 1e-10;
    pass ``check=False`` only for matrices produced by trusted internal
    pipelines.
    """

    matrix: np.ndarray
    layout: SubsystemLayout
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise InvalidState(
                f"dimension: matrix shape {m.shape} does not match layout dimension {self.layout.dim}"
            )
        if self.check:
            if not np.all(np.isfinite(m)):
                raise InvalidState("finite: matrix has non-finite entries")
            dev = float(np.max(np.abs(m - m.conj().T)))
            if dev > STATE_TOL:
                raise InvalidState(f"hermitian: max |rho - rho^dagger| = {dev:.3e}")
            tr = complex(np.trace(m))
            if abs(tr - 1) > STATE_TOL:
                raise InvalidState(f"trace: tr(rho) = {tr.real:.12g} differs from 1")
            lo = float(linalg.eigvalsh(m)[0])
            if lo < -STATE_TOL:
                raise InvalidState(f"positive: smallest eigenvalue {lo:.3e} is negative")
        m = linalg.hermitian_part(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_vector(cls, psi: np.ndarray, layout: SubsystemLayout) -> "MultipartiteState":
        psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), layout)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    @property
    def dim(self) -> int:
        return self.layout.dim

    def marginal(self, keep: Iterable[str]) -> "MultipartiteState":
        m, lay = linalg.partial_trace(self.matrix, self.layout, keep)
        return MultipartiteState(m, lay, check=False)

    def reorder(self, order: Sequence[str]) -> "MultipartiteState":
        order = tuple(order)
        if order == self.labels:
            return self
        m = linalg.permute_subsystems(self.matrix, self.layout, order)
        return MultipartiteState(m, self.layout.reorder(order), check=False)

    def rename(self, mapping: dict[str, str]) -> "MultipartiteState":
        return MultipartiteState(self.matrix, self.layout.rename(mapping), check=False)

    def tensor(self, other: "MultipartiteState") -> "MultipartiteState":
        return MultipartiteState(
            np.kron(self.matrix, other.matrix), self.layout + other.layout, check=False
        )

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return linalg.eigvalsh(self.matrix)[::-1]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))


def product_state(*states: MultipartiteState) -> MultipartiteState:
    out = states[0]
    for s in states[1:]:
        out = out.tensor(s)
    return out


# ---------------------------------------------------------------- sampling

_RANK_RE = re.compile(r"rank_limited\((\d+)\)$")


@dataclass(frozen=True)
class StateEnsembleSpec:
    """Which random ensemble to draw from, on which dimensions, with which seed.

    ``ensemble`` is one of ``haar_pure``, ``hilbert_schmidt_mixed``,
    ``bures_mixed`` or ``rank_limited`` (with ``rank``); the string form
    ``"rank_limited(r)"`` is also accepted.
    """

    ensemble: str
    dims: tuple[int, ...]
    seed: int = 0
    rank: int | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        m = _RANK_RE.match(self.ensemble)
        if m:
            object.__setattr__(self, "ensemble", "rank_limited")
            object.__setattr__(self, "rank", int(m.group(1)))
        if self.ensemble not in ("haar_pure", "hilbert_schmidt_mixed", "bures_mixed", "rank_limited"):
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if not self.dims:
            raise ValueError("dims must be nonempty")
        if self.ensemble == "rank_limited" and (self.rank is None or self.rank < 1):
            raise ValueError("rank_limited needs rank >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def descriptor(self) -> str:
        name = f"rank_limited({self.rank})" if self.ensemble == "rank_limited" else self.ensemble
        return f"{name}:{'x'.join(map(str, self.dims))}"


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the only RNG used for sampling in this package."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def haar_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Haar-random isometry C^cols -> C^rows (orthonormal columns)."""
    q, r = np.linalg.qr(ginibre(rng, rows, cols))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density_matrix(rng: np.random.Generator, d: int, ensemble: str = "hilbert_schmidt_mixed",
                          rank: int | None = None) -> np.ndarray:
    if ensemble == "haar_pure":
        psi = ginibre(rng, d, 1)[:, 0]
        psi /= np.linalg.norm(psi)
        return np.outer(psi, psi.conj())
    if ensemble == "hilbert_schmidt_mixed":
        g = ginibre(rng, d, d)
    elif ensemble == "rank_limited":
        g = ginibre(rng, d, int(rank))
    elif ensemble == "bures_mixed":
        u = haar_unitary(rng, d)
        g = (np.eye(d) + u) @ ginibre(rng, d, d)
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    rho = g @ g.conj().T
    return linalg.hermitian_part(rho / np.trace(rho).real)


def random_state(spec: StateEnsembleSpec, cap: int = DIMENSION_CAP) -> MultipartiteState:
    """Draw a state from ``spec``; identical specs give bitwise-identical matrices."""
    d = int(np.prod(spec.dims))
    if d > cap:
        raise DimensionCap(f"total dimension {d} exceeds cap {cap}")
    labels = spec.labels or default_labels(len(spec.dims))
    rho = random_density_matrix(make_rng(spec.seed), d, spec.ensemble, spec.rank)
    return MultipartiteState(rho, SubsystemLayout(labels, spec.dims))


# ---------------------------------------------------------------- purifications


def purify(rho: MultipartiteState, purifier_label: str = "P") -> MultipartiteState:
    """Canonical purification (sqrt(rho) x 1) sum_i |i>|i>, purifier appended last."""
    sq = linalg.psd_sqrt(rho.matrix)
    psi = sq.reshape(-1)
    psi = psi / np.linalg.norm(psi)
    layout = rho.layout + SubsystemLayout((purifier_label,), (rho.dim,))
    return MultipartiteState(np.outer(psi, psi.conj()), layout, check=False)


def _symmetry_residual(m: np.ndarray, layout: SubsystemLayout, labels: Sequence[str]) -> float:
    """Largest max-abs change of ``m`` under the transpositions (labels[0], labels[j])."""
    worst = 0.0
    for j in range(1, len(labels)):
        order = list(layout.labels)
        i0, ij = order.index(labels[0]), order.index(labels[j])
        order[i0], order[ij] = order[ij], order[i0]
        swapped = linalg.permute_subsystems(m, layout, order, in_place=True)
        worst = max(worst, float(np.max(np.abs(swapped - m))))
    return worst


def permutation_invariant_purification(
    omega: MultipartiteState, b_labels: Sequence[str], tol: float = 1e-8
) -> MultipartiteState:
    """Purify ``omega`` with one primed copy per factor, ordered X, X', Y, Y', ...

    Because |Phi> = sum_i |i>|i> is invariant under U x conj(U) for real
    permutation matrices, the result is invariant under simultaneously
    permuting the pairs (B_i, B_i') whenever ``omega`` is symmetric on B.

    Raises:
        NotSymmetric: if ``omega`` changes by more than ``tol`` under a swap of B factors.
    """
    res = _symmetry_residual(omega.matrix, omega.layout, list(b_labels))
    if res > tol:
        raise NotSymmetric(f"state is not permutation symmetric on {tuple(b_labels)} (residual {res:.3e})")
    sq = linalg.psd_sqrt(omega.matrix)
    psi = sq.reshape(-1)
    psi = psi / np.linalg.norm(psi)
    primed = SubsystemLayout(tuple(x + "'" for x in omega.labels), omega.dims)
    layout = omega.layout + primed
    n = len(omega.labels)
    order = [lab for i in range(n) for lab in (layout.labels[i], layout.labels[i + n])]
    axes = [layout.index(x) for x in order]
    psi = psi.reshape(layout.dims).transpose(axes).reshape(-1)
    return MultipartiteState(np.outer(psi, psi.conj()), layout.reorder(order), check=False)


# ---------------------------------------------------------------- named states


def antisymmetric_state(d: int, copies: int = 2) -> MultipartiteState:
    """Normalized projector onto the antisymmetric subspace of (C^d)^copies.

    Factors are labelled A, B1, ..., B_{copies-1} (A, B for two copies), so
    the ``copies``-fold state is a (copies-1)-extension of ``antisymmetric_state(d, 2)``.
    """
    if copies < 2:
        raise ValueError("copies must be >= 2")
    if copies > d:
        raise TooManyCopies(f"no antisymmetric vectors on {copies} copies of C^{d}")
    dim = d**copies
    proj = np.zeros((dim, dim), dtype=np.complex128)
    weights = [d ** (copies - 1 - i) for i in range(copies)]
    perms = list(itertools.permutations(range(copies)))
    signs = [_parity(p) for p in perms]
    for combo in itertools.combinations(range(d), copies):
        w = np.zeros(dim, dtype=np.complex128)
        for p, s in zip(perms, signs):
            w[sum(combo[p[i]] * weights[i] for i in range(copies))] += s
        w /= np.linalg.norm(w)
        proj += np.outer(w, w.conj())
    labels = ("A", "B") if copies == 2 else ("A",) + tuple(f"B{i}" for i in range(1, copies))
    return MultipartiteState(proj / math.comb(d, copies), SubsystemLayout(labels, (d,) * copies))


def _parity(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def quantum_markov_chain(
    blocks: Sequence[tuple[float, MultipartiteState, MultipartiteState]],
    labels: tuple[str, str, str] = ("A", "E", "B"),
) -> MultipartiteState:
    """Block-diagonal Markov state sum_j p_j sigma_j^{A e_j^L} x tau_j^{e_j^R B} on A x E x B.

    E is the direct sum of the e_j^L x e_j^R, concatenated in block order.
    Each ``sigma_j`` has two factors (A, e_j^L) and each ``tau_j`` two factors
    (e_j^R, B); their labels are ignored.
    """
    if not blocks:
        raise BlockMismatch("need at least one block")
    probs = np.array([float(b[0]) for b in blocks])
    if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
        raise BlockMismatch(f"block weights must be a probability vector, got {probs}")
    for _, s, t in blocks:
        if len(s.dims) != 2 or len(t.dims) != 2:
            raise BlockMismatch("sigma_j must live on (A, e_L) and tau_j on (e_R, B)")
    da = {s.dims[0] for _, s, _ in blocks}
    db = {t.dims[1] for _, _, t in blocks}
    if len(da) != 1 or len(db) != 1:
        raise BlockMismatch(f"inconsistent A dims {da} or B dims {db} across blocks")
    da, db = da.pop(), db.pop()
    sizes = [s.dims[1] * t.dims[0] for _, s, t in blocks]
    de = sum(sizes)
    rho = np.zeros((da * de * db,) * 2, dtype=np.complex128)
    offset = 0
    for (p, s, t), size in zip(blocks, sizes):
        emb = np.zeros((de, size))
        emb[offset:offset + size, :] = np.eye(size)
        iso = np.kron(np.kron(np.eye(da), emb), np.eye(db))
        rho += p * iso @ np.kron(s.matrix, t.matrix) @ iso.T
        offset += size
    return MultipartiteState(rho, SubsystemLayout(labels, (da, de, db)))


def random_markov_chain(rng: np.random.Generator, max_dim: int = 48, max_blocks: int = 3,
                        ensemble: str = "hilbert_schmidt_mixed") -> MultipartiteState:
    """Random block configuration with total dimension at most ``max_dim``."""
    while True:
        da, db = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        nblocks = int(rng.integers(1, max_blocks + 1))
        shapes = [(int(rng.integers(1, 3)), int(rng.integers(1, 3))) for _ in range(nblocks)]
        de = sum(l * r for l, r in shapes)
        if da * db * de <= max_dim and da * db > 1:
            break
    p = rng.dirichlet(np.ones(nblocks))
    p /= p.sum()
    blocks = []
    for (dl, dr), pj in zip(shapes, p):
        s = random_density_matrix(rng, da * dl, ensemble)
        t = random_density_matrix(rng, dr * db, ensemble)
        blocks.append((
            float(pj),
            MultipartiteState(s, SubsystemLayout(("A", "eL"), (da, dl))),
            MultipartiteState(t, SubsystemLayout(("eR", "B"), (dr, db))),
        ))
    return quantum_markov_chain(blocks)


_NAMED_RE = re.compile(r"^(\w+?)(?:\((\d+)\))?$")


def named_state(name: str, n: int | None = None) -> MultipartiteState:
    """Standard fixtures.

    ``bell``: (|00> + |11>)/sqrt2 on A, B. ``ghz(n)``: (|0..0> + |1..1>)/sqrt2
    on A, E, B for n = 3 and S1..Sn otherwise. ``maximally_mixed(d)``: 1/d on A.
    ``classical_copy(d)``: sum_i |ii><ii| / d on A, B (d = 2 by default).
    """
    m = _NAMED_RE.match(name.strip())
    if not m:
        raise ValueError(f"cannot parse state name {name!r}")
    base = m.group(1)
    if m.group(2) is not None:
        n = int(m.group(2))
    if base == "bell":
        psi = np.zeros(4)
        psi[0] = psi[3] = 1
        return MultipartiteState.from_vector(psi, SubsystemLayout(("A", "B"), (2, 2)))
    if base == "ghz":
        n = 3 if n is None else n
        psi = np.zeros(2**n)
        psi[0] = psi[-1] = 1
        return MultipartiteState.from_vector(psi, SubsystemLayout(default_labels(n), (2,) * n))
    if base == "maximally_mixed":
        d = 2 if n is None else n
        return MultipartiteState(np.eye(d) / d, SubsystemLayout(("A",), (d,)))
    if base == "classical_copy":
        d = 2 if n is None else n
        rho = np.zeros((d * d, d * d))
        for i in range(d):
            rho[i * d + i, i * d + i] = 1 / d
        return MultipartiteState(rho, SubsystemLayout(("A", "B"), (d, d)))
    raise ValueError(f"unknown named state {name!r}")


# ---------------------------------------------------------------- files


def dumps_state(state: MultipartiteState) -> str:
    doc = {
        "version": FILE_VERSION,
        "kind": "state",
        "labels": list(state.labels),
        "dims": list(state.dims),
        "matrix": serialization.complex_entries(state.matrix),
    }
    return serialization.dumps(doc)


def loads_state(text: str) -> MultipartiteState:
    """Parse a state document; failures name the violated invariant."""
    try:
        doc = serialization.loads(text)
    except ValueError as exc:
        raise InvalidState(f"syntax: not a JSON document ({exc})") from exc
    if not isinstance(doc, dict):
        raise InvalidState("syntax: top level must be an object")
    for key in ("version", "labels", "dims", "matrix"):
        if key not in doc:
            raise InvalidState(f"field: missing {key!r}")
    if doc["version"] != FILE_VERSION:
        raise InvalidState(f"version: unsupported version {doc['version']!r}")
    try:
        layout = SubsystemLayout(tuple(doc["labels"]), tuple(doc["dims"]))
        m = serialization.entries_to_matrix(doc["matrix"], layout.dim)
    except (ValueError, TypeError) as exc:
        raise InvalidState(f"layout: {exc}") from exc
    return MultipartiteState(m, layout)


def save_state(state: MultipartiteState, path: str | Path) -> None:
    Path(path).write_text(dumps_state(state))


def load_state(path: str | Path) -> MultipartiteState:
    return loads_state(Path(path).read_text())
