"""Entropic and distance functionals. Everything is in bits (log base 2)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from qrecover import kernels, linalg
from qrecover.errors import DimensionMismatch, DomainError, OverlappingLabels
from qrecover.states import MultipartiteState

LN2 = math.log(2)


@dataclass(frozen=True)
class EntropyReport:
    value: float
    support_rank: int
    cutoff_used: float


def _as_labels(x: str | Iterable[str]) -> tuple[str, ...]:
    return (x,) if isinstance(x, str) else tuple(x)


def spectrum_entropy(eigs: np.ndarray, cutoff: float | None = None) -> float:
    eigs = np.ascontiguousarray(eigs, dtype=float)
    if cutoff is None:
        cutoff = linalg.current_cutoff_rel() * max(float(eigs.max()) if eigs.size else 0.0, 0.0)
    return float(kernels.entropy_bits(eigs, float(cutoff)))


def matrix_entropy(m: np.ndarray) -> float:
    return spectrum_entropy(linalg.eigvalsh(m))


def entropy_report(rho: MultipartiteState, subsystems: str | Iterable[str] | None = None) -> EntropyReport:
    keep = rho.labels if subsystems is None else _as_labels(subsystems)
    m, _ = linalg.partial_trace(rho.matrix, rho.layout, keep)
    w = linalg.eigvalsh(m)
    cut = linalg.current_cutoff_rel() * max(float(w.max()), 0.0)
    return EntropyReport(spectrum_entropy(w, cut), int(np.sum(w > cut)), cut)


def entropy(rho: MultipartiteState, subsystems: str | Iterable[str] | None = None) -> float:
    """Von Neumann entropy of the marginal on ``subsystems`` (all of them by default)."""
    keep = rho.labels if subsystems is None else _as_labels(subsystems)
    if not keep:
        return 0.0
    m, _ = linalg.partial_trace(rho.matrix, rho.layout, keep)
    return matrix_entropy(m)


def _disjoint(*groups: Sequence[str]) -> None:
    seen: set[str] = set()
    for g in groups:
        if seen & set(g) or len(set(g)) != len(g):
            raise OverlappingLabels(f"label groups {groups} overlap")
        seen |= set(g)


def conditional_mutual_information(rho: MultipartiteState, a, b, e=()) -> float:
    """I(A:B|E) = S(AE) + S(BE) - S(E) - S(ABE), raw (not clamped).

    Labels outside A, B, E are traced out first.
    """
    a, b, e = _as_labels(a), _as_labels(b), _as_labels(e)
    _disjoint(a, b, e)
    for x in a + b + e:
        rho.layout.index(x)
    sub = rho.marginal(a + b + e) if set(a + b + e) != set(rho.labels) else rho
    return entropy(sub, a + e) + entropy(sub, b + e) - entropy(sub, e) - entropy(sub, a + b + e)


def mutual_information(rho: MultipartiteState, a, b) -> float:
    return conditional_mutual_information(rho, a, b, ())


def clamp_cmi(value: float, floor: float = -1e-8) -> float:
    """Report value for a CMI: eigensolver noise down to ``floor`` is shown as 0."""
    return 0.0 if floor <= value < 0 else value


def conditional_multi_information(rho: MultipartiteState, parts: Sequence, e=()) -> float:
    """sum_i S(A_i|E) - S(A_1...A_n|E)."""
    parts = [_as_labels(p) for p in parts]
    e = _as_labels(e)
    _disjoint(*parts, e)
    s_e = entropy(rho, e)
    everything = tuple(x for p in parts for x in p) + e
    total = sum(entropy(rho, p + e) - s_e for p in parts)
    return total - (entropy(rho, everything) - s_e)


def multi_information_chain(rho: MultipartiteState, parts: Sequence, e=()) -> float:
    """sum_{i<n} I(A_i : A_{i+1}...A_n | E): the chain-rule evaluation of the same quantity."""
    parts = [_as_labels(p) for p in parts]
    e = _as_labels(e)
    total = 0.0
    for i in range(len(parts) - 1):
        rest = tuple(x for p in parts[i + 1:] for x in p)
        total += conditional_mutual_information(rho, parts[i], rest, e)
    return total


def _matrix_of(x) -> np.ndarray:
    return x.matrix if isinstance(x, MultipartiteState) else np.asarray(x, dtype=np.complex128)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")


def relative_entropy(rho, sigma, support_tol: float = 1e-9) -> float:
    """D(rho||sigma) in bits; ``math.inf`` when rho has weight off the support of sigma."""
    r, s = _matrix_of(rho), _matrix_of(sigma)
    _same_shape(r, s)
    ws, vs = linalg.eigh(s)
    cut = linalg.current_cutoff_rel() * max(float(ws[-1]), 0.0)
    on = ws > cut
    # weight of rho on ker(sigma)
    r_in_s = vs.conj().T @ linalg.hermitian_part(r) @ vs
    leak = float(np.real(np.trace(r_in_s[np.ix_(~on, ~on)]))) if np.any(~on) else 0.0
    if leak > support_tol:
        return math.inf
    log_s_diag = np.log2(ws[on])
    cross = float(np.real(np.sum(np.diag(r_in_s)[on] * log_s_diag)))
    return -matrix_entropy(r) - cross


def fidelity(alpha, beta) -> float:
    """F = ||sqrt(alpha) sqrt(beta)||_1, the sum of singular values."""
    a, b = _matrix_of(alpha), _matrix_of(beta)
    _same_shape(a, b)
    sv = np.linalg.svd(linalg.psd_sqrt(a) @ linalg.psd_sqrt(b), compute_uv=False)
    return float(min(max(np.sum(sv), 0.0), 1.0 + 1e-12))


def fidelity_with_sqrt(sqrt_alpha: np.ndarray, beta: np.ndarray) -> float:
    """Fidelity when sqrt(alpha) is already known (hot loop in the swivel scan)."""
    sv = np.linalg.svd(sqrt_alpha @ linalg.psd_sqrt(beta), compute_uv=False)
    return float(np.sum(sv))


def trace_distance(alpha, beta) -> float:
    """||alpha - beta||_1 (no factor 1/2), in [0, 2] for states."""
    a, b = _matrix_of(alpha), _matrix_of(beta)
    _same_shape(a, b)
    return linalg.trace_norm(a - b)


def check_fuchs_van_de_graaf(alpha, beta, slack: float = 1e-9) -> tuple[float, float, float, bool]:
    """Return (1 - F, ||a - b||_1 / 2, sqrt(1 - F^2), both inequalities hold)."""
    f = min(fidelity(alpha, beta), 1.0)
    lhs, mid, rhs = 1 - f, trace_distance(alpha, beta) / 2, math.sqrt(max(1 - f * f, 0.0))
    return lhs, mid, rhs, bool(lhs <= mid + slack and mid <= rhs + slack)


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x in (0, 1):
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def alicki_fannes_bound(eps: float, dim_a: int) -> float:
    """8 eps log|A| + 4 H2(eps), the continuity bound for squashed entanglement."""
    if not 0 <= eps <= 1:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    return 8 * eps * math.log2(dim_a) + 4 * binary_entropy(eps)
