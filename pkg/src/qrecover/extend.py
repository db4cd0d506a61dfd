"""k-extensions by iterated recovery.

Given an extension rho^{AEB} of rho^{AB}, a recovery map R: E -> EB is
applied k-1 times to the E factor, producing copies B2..Bk next to the
original B1. Tracing out E and averaging over permutations of the B copies
yields a permutation-symmetric state whose AB_i marginals are all within
(k-1)/2 * ||rho^{AEB} - (id x R) rho^{AE}||_1 of rho^{AB}.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from qrecover import channels, info, linalg
from qrecover.errors import (
    DegenerateKWarning,
    DimensionCap,
    DimensionMismatch,
    DomainError,
    QRecoverError,
    TooManyFactors,
)
from qrecover.linalg import SubsystemLayout
from qrecover.states import DIMENSION_CAP, MultipartiteState, purify

LN2 = math.log(2)
BOOKKEEPING_SLACK = 1e-8


class BoundViolation(QRecoverError):
    """A marginal distance exceeded the triangle-inequality bound."""


def copy_label(b: str, i: int) -> str:
    return f"{b}{i}"


def iterate_recovery(rho_aeb: MultipartiteState, recovery: channels.RecoveryMap | np.ndarray, k: int,
                     e: Sequence[str] | str = ("E",), b: str = "B", cap: int = DIMENSION_CAP
                     ) -> MultipartiteState:
    """omega = (id x R^{E->EB_k} o ... o R^{E->EB_2}) rho^{AEB_1}.

    ``recovery`` maps the ``e`` factors to (e..., b) as laid out in its
    output layout. The result is ordered (others..., e..., b1, ..., bk).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    e = (e,) if isinstance(e, str) else tuple(e)
    kraus = recovery.kraus if isinstance(recovery, channels.RecoveryMap) else np.asarray(recovery)
    out_layout = recovery.channel.out_layout if isinstance(recovery, channels.RecoveryMap) else None
    if out_layout is None:
        raise ValueError("recovery must be a RecoveryMap")
    db = rho_aeb.dims[rho_aeb.layout.index(b)]
    total = rho_aeb.dim * db ** (k - 1)
    if total > cap:
        raise DimensionCap(f"k={k} needs total dimension {total} > cap {cap}")
    m = rho_aeb.matrix
    layout = rho_aeb.layout.rename({b: copy_label(b, 1)})
    for i in range(2, k + 1):
        out_i = out_layout.rename({b: copy_label(b, i)})
        m, layout = channels.apply_kraus_local(m, layout, kraus, e, out_i)
    others = [x for x in layout.labels if x not in e and not _is_copy(x, b, k)]
    order = others + list(e) + [copy_label(b, i) for i in range(1, k + 1)]
    if tuple(order) != layout.labels:
        m = linalg.permute_subsystems(m, layout, order)
    return MultipartiteState(m, layout.reorder(order), check=False)


def _is_copy(label: str, b: str, k: int) -> bool:
    return label in {copy_label(b, i) for i in range(1, k + 1)}


def _transpose_labels(layout: SubsystemLayout, x: str, y: str) -> list[str]:
    order = list(layout.labels)
    i, j = order.index(x), order.index(y)
    order[i], order[j] = order[j], order[i]
    return order


def symmetrize(omega: MultipartiteState, b_labels: Sequence[str]) -> MultipartiteState:
    """Average of U^pi omega U^pi^dagger over all permutations of the ``b_labels`` factors.

    Uses the coset decomposition S_j = U_i (i j) S_{j-1}, so only O(k^2)
    factor swaps are performed instead of k! conjugations.
    """
    b_labels = list(b_labels)
    if len(b_labels) > 8:
        raise TooManyFactors(f"symmetrization over {len(b_labels)} > 8 factors")
    dims = {omega.dims[omega.layout.index(x)] for x in b_labels}
    if len(dims) > 1:
        raise DimensionMismatch(f"factors {b_labels} have different dimensions {dims}")
    m = omega.matrix
    for j in range(1, len(b_labels)):
        acc = m.copy()
        for i in range(j):
            order = _transpose_labels(omega.layout, b_labels[i], b_labels[j])
            acc += linalg.permute_subsystems(m, omega.layout, order, in_place=True)
        m = acc / (j + 1)
    return MultipartiteState(linalg.hermitian_part(m), omega.layout, check=False)


def symmetry_residual(omega: MultipartiteState, b_labels: Sequence[str]) -> float:
    """Largest max-abs change under the transpositions (b_1 b_j), which generate S_k."""
    worst = 0.0
    for j in range(1, len(b_labels)):
        order = _transpose_labels(omega.layout, b_labels[0], b_labels[j])
        sw = linalg.permute_subsystems(omega.matrix, omega.layout, order, in_place=True)
        worst = max(worst, float(np.max(np.abs(sw - omega.matrix))))
    return worst


def symmetrize_bruteforce(omega: MultipartiteState, b_labels: Sequence[str]) -> MultipartiteState:
    """Literal 1/k! sum over all permutations (reference path, small k only)."""
    b_labels = list(b_labels)
    acc = np.zeros_like(omega.matrix)
    perms = list(itertools.permutations(b_labels))
    for p in perms:
        mapping = dict(zip(b_labels, p))
        order = [mapping.get(x, x) for x in omega.labels]
        acc += linalg.permute_subsystems(omega.matrix, omega.layout, order, in_place=True)
    return MultipartiteState(acc / len(perms), omega.layout, check=False)


@dataclass
class ExtensionReport:
    k: int
    step_distances: list[float]
    marginal_distances: list[float]
    theorem_bound: float
    measured_bound: float
    cmi_used: float
    symmetry_residual: float
    t_measured: float = 0.0
    swivel_t: float = 0.0
    strategy: str = "purification_extension"
    theorem_bound_holds: bool = True
    measured_bound_holds: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExtensionReport":
        return cls(**d)


def theorem_bound(k: int, cmi_bits: float) -> float:
    """(k-1) sqrt(2 ln 2) sqrt(eps) with eps = I/2."""
    return (k - 1) * math.sqrt(2 * LN2) * math.sqrt(max(cmi_bits, 0.0) / 2)


def build_k_extension(rho_ab: MultipartiteState, k: int, strategy: str = "purification_extension",
                      rho_abe: MultipartiteState | None = None,
                      swivel_grid: Sequence[float] = channels.DEFAULT_GRID,
                      a: Sequence[str] | str = ("A",), b: str = "B", e: Sequence[str] | str = ("E",),
                      refine: bool = True, check_bounds: bool = True,
                      ) -> tuple[ExtensionReport, MultipartiteState]:
    """Extension -> swivel scan -> iterated recovery -> trace E -> symmetrize.

    ``strategy`` is ``purification_extension`` (E = canonical purifier) or
    ``supplied`` (``rho_abe`` given). Returns the report and the symmetric
    state on (A..., B1, ..., Bk).

    Raises:
        BoundViolation: if ``check_bounds`` and some marginal distance exceeds
            (k-1)/2 * t_measured + 1e-8.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    a = (a,) if isinstance(a, str) else tuple(a)
    e = (e,) if isinstance(e, str) else tuple(e)
    rho_ab = rho_ab.marginal(a + (b,)).reorder(a + (b,))
    if strategy == "purification_extension":
        if len(e) != 1:
            raise ValueError("purification extension uses a single E label")
        ext = purify(rho_ab, e[0])
    elif strategy == "supplied":
        if rho_abe is None:
            raise ValueError("strategy 'supplied' needs rho_abe")
        ext = rho_abe
        marg = ext.marginal(a + (b,)).reorder(a + (b,))
        if info.trace_distance(marg, rho_ab) > 1e-8:
            raise DimensionMismatch("supplied extension does not reproduce rho_AB")
    else:
        raise ValueError(f"unknown extension strategy {strategy!r}")

    prob = channels.CMIRecoveryProblem(ext, a, e, (b,))
    scan = channels.best_swivel_scan(ext, a, e, (b,), swivel_grid, refine=refine, problem=prob)
    rec = prob.recovery(scan.t_best)
    t_meas = info.trace_distance(prob.target, prob.recovered(scan.t_best))
    omega = iterate_recovery(prob.target, rec, k, e, b)
    copies = [copy_label(b, i) for i in range(1, k + 1)]
    omega_ab = omega.marginal(a + tuple(copies))
    big_omega = symmetrize(omega_ab, copies)

    step = []
    for i in range(2, k + 1):
        mi = omega_ab.marginal(a + (copies[i - 1],)).rename({copies[i - 1]: b})
        step.append(info.trace_distance(mi, rho_ab))
    marg = []
    for c in copies:
        mi = big_omega.marginal(a + (c,)).rename({c: b})
        marg.append(info.trace_distance(mi, rho_ab))
    measured = (k - 1) / 2 * t_meas
    thm = theorem_bound(k, scan.cmi)
    rep = ExtensionReport(
        k=k,
        step_distances=step,
        marginal_distances=marg,
        theorem_bound=thm,
        measured_bound=measured,
        cmi_used=scan.cmi,
        symmetry_residual=symmetry_residual(big_omega, copies),
        t_measured=t_meas,
        swivel_t=scan.t_best,
        strategy=strategy,
        theorem_bound_holds=bool(max(marg) <= thm + BOOKKEEPING_SLACK),
        measured_bound_holds=bool(max(marg) <= measured + BOOKKEEPING_SLACK
                                  and all(s <= (i + 1) * t_meas + BOOKKEEPING_SLACK
                                          for i, s in enumerate(step))),
    )
    if check_bounds and not rep.measured_bound_holds:
        raise BoundViolation(
            f"marginal distance {max(marg):.3e} exceeds (k-1)/2 t = {measured:.3e}")
    return rep, big_omega


def corollary_k_choice(eps: float, dim_b: int) -> int:
    """floor((2/ln 2)^{1/4} |B| / eps^{1/4}), clamped to at least 1.

    Evaluated as floor(((2/ln2) |B|^4 / eps)^{1/4}) with a 1e-12 relative
    nudge so exact integers are not lost to rounding.
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if dim_b < 2:
        raise DomainError(f"dim_b must be >= 2, got {dim_b}")
    x = ((2 / LN2) * dim_b**4 / eps) ** 0.25
    k = math.floor(x * (1 + 1e-12))
    if k < 1:
        warnings.warn(f"k = {k} for eps = {eps}; clamped to 1", DegenerateKWarning, stacklevel=2)
        k = 1
    return k


def separable_distance_bound(report: ExtensionReport, dim_b: int) -> tuple[float, float]:
    """Return (measured_bound + 2|B|^2/k, 3.1 |B| eps^{1/4}) with eps = I/2."""
    cert = report.measured_bound + 2 * dim_b**2 / report.k
    eps = max(report.cmi_used, 0.0) / 2
    return cert, 3.1 * dim_b * eps**0.25


def multiparty_tuple_distances(rho: MultipartiteState, parts: Sequence[str], e: str, k: int,
                               swivel_t: float = 0.0) -> dict[tuple[int, ...], float]:
    """Distances ||rho^{A1..An} - omega^{A1 A2^{j2} .. An^{jn}}||_1 for every copy tuple.

    One recovery E -> E A_i per party i >= 2 (built from rho^{E A_i}) is
    applied k-1 times, parties in order. Only tuples with at most one
    j_i != 1 are covered by the triangle-inequality argument; the others are
    measured and returned without any pass/fail meaning.
    """
    parts = list(parts)
    cur = rho
    for p in parts[1:]:
        rec = channels.cmi_petz_map(rho.marginal((e, p)).reorder((e, p)), (e,), (p,), t=swivel_t)
        m = cur.matrix
        layout = cur.layout.rename({p: copy_label(p, 1)})
        for i in range(2, k + 1):
            m, layout = channels.apply_kraus_local(
                m, layout, rec.kraus, (e,), rec.channel.out_layout.rename({p: copy_label(p, i)}))
        cur = MultipartiteState(m, layout, check=False)
    ref = rho.marginal(parts).reorder(parts)
    out = {}
    for tup in itertools.product(range(1, k + 1), repeat=len(parts) - 1):
        labels = [parts[0]] + [copy_label(p, j) for p, j in zip(parts[1:], tup)]
        sub = cur.marginal(labels).reorder(labels)
        out[tup] = info.trace_distance(sub.matrix, ref.matrix)
    return out
