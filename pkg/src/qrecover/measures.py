"""Upper bounds on entanglement of formation and squashed entanglement.

Both quantities are minimizations over isometries:

* every pure-state decomposition {sqrt(p_i) phi_i} of rho is
  psi_i = sum_j U_ij sqrt(lambda_j) e_j for an isometry U (m x r);
* every extension rho^{ABE} with |E| = e arises from an isometry
  W: C^r -> C^e (x) C^f applied to the purifier, followed by tr_F.

The search is Riemannian gradient descent on the Stiefel manifold (polar
retraction, Armijo backtracking) from several seeded starting points. The
results are upper bounds; nothing here claims optimality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qrecover import info, linalg
from qrecover.errors import BadDecomposition, DimensionCap, DomainError
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState, haar_isometry, make_rng

LN2 = math.log(2)
EXTENSION_DIM_CAP = 512
DECOMP_TOL = 1e-9


@dataclass(frozen=True)
class Decomposition:
    """rho = sum_i p_i |phi_i><phi_i| on the layout of rho^{AB}."""

    probs: np.ndarray
    vectors: np.ndarray        # (m, d_AB), unit rows
    layout: SubsystemLayout

    @classmethod
    def from_unnormalized(cls, psis: np.ndarray, layout: SubsystemLayout, floor: float = 1e-14
                          ) -> "Decomposition":
        w = np.sum(np.abs(psis) ** 2, axis=1)
        keep = w > floor
        return cls(w[keep], psis[keep] / np.sqrt(w[keep])[:, None], layout)

    def matrix(self) -> np.ndarray:
        return np.einsum("i,ia,ib->ab", self.probs, self.vectors, self.vectors.conj())

    def reduced_a(self, a: Sequence[str]) -> np.ndarray:
        """phi_i^A for every element, stacked."""
        ab = self.layout.labels
        keep_first = tuple(ab[: len(a)]) == tuple(a)
        da = self.layout.dim_of(a)
        out = []
        for v in self.vectors:
            if keep_first:
                mv = v.reshape(da, -1)
                out.append(mv @ mv.conj().T)
            else:
                m, _ = linalg.partial_trace(np.outer(v, v.conj()), self.layout, a)
                out.append(m)
        return np.array(out)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.layout.labels),
            "dims": list(self.layout.dims),
            "probs": [float(p) for p in self.probs],
            "vectors": [[[float(z.real), float(z.imag)] for z in v] for v in self.vectors],
        }


@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    kind: str
    restarts: int
    converged: bool
    witness: object = field(default=None, compare=False)

    def to_dict(self) -> dict:
        w = self.witness
        if isinstance(w, Decomposition):
            wd = {"type": "decomposition", **w.to_dict()}
        elif isinstance(w, MultipartiteState):
            wd = {"type": "extension", "labels": list(w.labels), "dims": list(w.dims)}
        else:
            wd = None
        return {"value": self.value, "kind": self.kind, "restarts": self.restarts,
                "converged": self.converged, "witness": wd}


# ------------------------------------------------------------------ optimizer


def _polar(x: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(x, full_matrices=False)
    return u @ vh


def stiefel_descent(fg: Callable[[np.ndarray], tuple[float, np.ndarray]], w: np.ndarray,
                    steps: int = 200, step0: float = 0.5, grad_tol: float = 1e-9
                    ) -> tuple[np.ndarray, float, bool]:
    """Minimize f over isometries W (W^dagger W = 1).

    ``fg`` returns f(W) and the Wirtinger gradient G = df/d conj(W), so that
    df = 2 Re tr(G^dagger dW). Returns (W, f(W), converged).
    """
    f, g = fg(w)
    eta = step0
    for _ in range(steps):
        rg = g - w @ (w.conj().T @ g + g.conj().T @ w) / 2
        sq = float(np.real(np.vdot(rg, rg)))
        if sq < grad_tol**2:
            return w, f, True
        while True:
            cand = _polar(w - eta * rg)
            fc, gc = fg(cand)
            if fc <= f - 1e-4 * eta * 2 * sq or eta < 1e-12:
                break
            eta *= 0.5
        if fc > f:
            return w, f, True
        if f - fc < 1e-14 * max(1.0, abs(f)):
            return cand, fc, True
        w, f, g = cand, fc, gc
        eta = min(eta * 2, 8.0)
    return w, f, False


def _log2_on_support(x: np.ndarray, floor_rel: float = 1e-13) -> np.ndarray:
    w, v = np.linalg.eigh(linalg.hermitian_part(x))
    cut = floor_rel * max(float(w[..., -1].max()) if w.size else 0.0, 1e-300)
    lw = np.where(w > cut, np.log2(np.where(w > cut, w, 1.0)), 0.0)
    return (v * lw[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _entropy_bits(x: np.ndarray) -> float:
    w = np.linalg.eigvalsh(linalg.hermitian_part(x))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))


def _spectral_pieces(rho: MultipartiteState, ab: tuple[str, ...]):
    sub = rho.reorder(ab) if rho.labels != ab else rho
    w, v = linalg.hermitian_eig(sub.matrix)
    keep = w > linalg.DEFAULT_CUTOFF_REL * max(w[0], 0.0)
    return sub, v[:, keep] * np.sqrt(w[keep])[None, :]


# ------------------------------------------------------------ entanglement of formation


def _eof_objective(vmat: np.ndarray, da: int, db: int):
    """f(U) = sum_i p_i S(phi_i^A) with psi_i = sum_j U_ij v_j (rows of U are ensemble members)."""
    def fg(u: np.ndarray):
        psi = u @ vmat.T                                  # (m, dAB)
        m = psi.reshape(-1, da, db)
        x = m @ np.swapaxes(m.conj(), 1, 2)               # (m, dA, dA)
        w, vecs = np.linalg.eigh(x)
        p = np.real(np.trace(x, axis1=1, axis2=2))
        pos = np.clip(w, 0, None)
        f = 0.0
        grads = np.zeros_like(x)
        for i in range(x.shape[0]):
            if p[i] <= 1e-300:
                continue
            lam = pos[i] / p[i]
            on = lam > 1e-300
            f += p[i] * float(-np.sum(lam[on] * np.log2(lam[on])))
            # gradient of p S(X/p) w.r.t. X is -log2(X/p); kernel directions clipped
            lg = -np.log2(np.maximum(lam, 1e-16))
            grads[i] = (vecs[i] * lg[None, :]) @ vecs[i].conj().T
        gpsi = (grads @ m).reshape(psi.shape)
        return f, gpsi @ vmat.conj()
    return fg


def entanglement_of_formation(rho: MultipartiteState, a: Sequence[str] | str = ("A",),
                              b: Sequence[str] | str = ("B",), restarts: int = 4,
                              ensemble_size: int | None = None, seed: int = 0, steps: int = 200
                              ) -> MeasureEstimate:
    """Heuristic minimum of sum_i p_i S(phi_i^A) over pure-state decompositions."""
    a = (a,) if isinstance(a, str) else tuple(a)
    b = (b,) if isinstance(b, str) else tuple(b)
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    sub, vmat = _spectral_pieces(rho.marginal(a + b), a + b)
    r = vmat.shape[1]
    da, db = sub.layout.dim_of(a), sub.layout.dim_of(b)
    m = ensemble_size or max(r, da * db)
    if m < r:
        raise DomainError(f"ensemble_size {m} is below the rank {r}")
    fg = _eof_objective(vmat, da, db)
    rng = make_rng(seed)
    best = None
    for i in range(restarts):
        if i == 0:
            u0 = np.eye(m, r, dtype=np.complex128)        # eigendecomposition itself
        else:
            u0 = haar_isometry(rng, m, r)
        u, f, conv = stiefel_descent(fg, u0, steps)
        if best is None or f < best[1]:
            best = (u, f, conv)
    u, f, conv = best
    dec = Decomposition.from_unnormalized(u @ vmat.T, sub.layout)
    return MeasureEstimate(max(float(f), 0.0), "heuristic_min", restarts, conv, dec)


def random_decomposition(rho: MultipartiteState, m: int, rng: np.random.Generator,
                         ab: tuple[str, ...] = ("A", "B")) -> Decomposition:
    sub, vmat = _spectral_pieces(rho, ab)
    u = haar_isometry(rng, m, vmat.shape[1])
    return Decomposition.from_unnormalized(u @ vmat.T, sub.layout)


def decomposition_value(dec: Decomposition, a: Sequence[str] = ("A",)) -> float:
    return float(sum(p * _entropy_bits(x) for p, x in zip(dec.probs, dec.reduced_a(a))))


def _check_decomposition(rho: MultipartiteState, dec: Decomposition) -> MultipartiteState:
    sub = rho.marginal(dec.layout.labels).reorder(dec.layout.labels)
    dev = float(np.max(np.abs(dec.matrix() - sub.matrix)))
    if dev > DECOMP_TOL:
        raise BadDecomposition(f"decomposition misses rho by {dev:.3e}")
    return sub


def formation_extension(dec: Decomposition, e: str = "E") -> MultipartiteState:
    """sum_i p_i |phi_i><phi_i| (x) |i><i|_E."""
    n = len(dec.probs)
    m = np.zeros((dec.layout.dim * n,) * 2, dtype=np.complex128)
    for i, (p, v) in enumerate(zip(dec.probs, dec.vectors)):
        flag = np.zeros(n)
        flag[i] = 1
        m += p * np.kron(np.outer(v, v.conj()), np.diag(flag))
    return MultipartiteState(m, dec.layout + SubsystemLayout((e,), (n,)), check=False)


def formation_extension_cmi(rho: MultipartiteState, dec: Decomposition,
                            a: Sequence[str] | str = ("A",), b: Sequence[str] | str = ("B",)) -> float:
    """1/2 I(A:B|E) of the flagged extension; equals sum_i p_i S(phi_i^A)."""
    _check_decomposition(rho, dec)
    ext = formation_extension(dec)
    return 0.5 * info.conditional_mutual_information(ext, a, b, ("E",))


def separable_from_formation(rho: MultipartiteState, dec: Decomposition,
                             a: Sequence[str] | str = ("A",), b: Sequence[str] | str = ("B",)
                             ) -> tuple[MultipartiteState, float, float]:
    """sigma = sum_i p_i phi_i^A (x) phi_i^B, ||rho - sigma||_1 and sqrt(4 ln 2) sqrt(eps).

    eps = sum_i p_i I(A:B)_{phi_i} / 2, which is the formation value.
    """
    a = (a,) if isinstance(a, str) else tuple(a)
    b = (b,) if isinstance(b, str) else tuple(b)
    sub = _check_decomposition(rho, dec)
    sigma = np.zeros_like(sub.matrix)
    eps = 0.0
    for p, v in zip(dec.probs, dec.vectors):
        phi = MultipartiteState(np.outer(v, v.conj()), dec.layout, check=False)
        pa, pb = phi.marginal(a), phi.marginal(b)
        prod = pa.tensor(pb).reorder(dec.layout.labels)
        sigma += p * prod.matrix
        eps += p * info.mutual_information(phi, a, b) / 2
    dist = info.trace_distance(sub.matrix, sigma)
    bound = math.sqrt(4 * LN2) * math.sqrt(max(eps, 0.0))
    if dist > bound + 1e-8:
        raise AssertionError(f"separable approximation {dist:.6e} exceeds bound {bound:.6e}")
    return MultipartiteState(sigma, dec.layout, check=False), dist, bound


def nielsen_bound(delta: float, dim_a: int, dim_b: int) -> float:
    """5 log2(|A||B|) sqrt(delta) + sqrt(delta) log2(delta), valid for 0 < delta <= 1/e^2."""
    if not 0 < delta <= math.exp(-2) * (1 + 1e-12):
        raise DomainError(f"delta must lie in (0, 1/e^2], got {delta}")
    s = math.sqrt(delta)
    return 5 * math.log2(dim_a * dim_b) * s + s * math.log2(delta)


# ------------------------------------------------------------ squashed entanglement


def _cmi_objective(vmat: np.ndarray, da: int, db: int, e: int, f: int):
    """g(W) = 1/2 I(A:B|E) of tr_F (V W^T)(V W^T)^dagger on (A, B, E)."""
    dab = da * db

    def fg(w: np.ndarray):
        phi = vmat @ w.T                                   # (dAB, e*f)
        mm = phi.reshape(dab * e, f)
        rho = mm @ mm.conj().T                             # (A,B,E)
        t = rho.reshape(da, db, e, da, db, e)
        r_ae = np.einsum("abecbf->aecf", t).reshape(da * e, da * e)
        r_be = np.einsum("abeadf->bedf", t).reshape(db * e, db * e)
        r_e = np.einsum("abeabf->ef", t)
        s = (_entropy_bits(r_ae) + _entropy_bits(r_be) - _entropy_bits(r_e) - _entropy_bits(rho))
        l_ae = _log2_on_support(r_ae).reshape(da, e, da, e)
        l_be = _log2_on_support(r_be).reshape(db, e, db, e)
        l_e = _log2_on_support(r_e)
        l_abe = _log2_on_support(rho)
        eye_a, eye_b = np.eye(da), np.eye(db)
        g = (-np.einsum("aecf,bd->abecdf", l_ae, eye_b)
             - np.einsum("bedf,ac->abecdf", l_be, eye_a)
             + np.einsum("ef,ac,bd->abecdf", l_e, eye_a, eye_b)).reshape(dab * e, dab * e) + l_abe
        gm = 0.5 * (g @ mm)                                # d(I/2)/d conj(M)
        gphi = gm.reshape(dab, e * f)
        return 0.5 * s, gphi.T @ vmat.conj()
    return fg


def _extension_from_w(vmat, w, layout_ab: SubsystemLayout, e: int, f: int, e_label: str) -> MultipartiteState:
    mm = (vmat @ w.T).reshape(layout_ab.dim * e, f)
    return MultipartiteState(mm @ mm.conj().T, layout_ab + SubsystemLayout((e_label,), (e,)), check=False)


def _w_from_extension(vmat: np.ndarray, ext: np.ndarray, dab: int, e: int, f: int) -> np.ndarray | None:
    """Isometry W reproducing a given extension on (AB, E) through the purifier, or None."""
    w, v = linalg.hermitian_eig(ext)
    keep = w > 1e-12 * max(w[0], 0.0)
    if keep.sum() > f:
        return None
    chi = np.zeros((dab * e, f), dtype=np.complex128)
    chi[:, : keep.sum()] = v[:, keep] * np.sqrt(w[keep])[None, :]
    phi = chi.reshape(dab, e * f)
    wt = np.linalg.pinv(vmat) @ phi                        # (r, e*f)
    cand = _polar(wt.T)
    return cand


def squashed_entanglement_upper_bound(rho: MultipartiteState, a: Sequence[str] | str = ("A",),
                                      b: Sequence[str] | str = ("B",), env_dim: int | None = None,
                                      restarts: int = 3, seed: int = 0, steps: int = 200,
                                      aux_dim: int | None = None,
                                      initial_extensions: Sequence[MultipartiteState] = (),
                                      formation: Decomposition | None = None,
                                      ) -> MeasureEstimate:
    """min 1/2 I(A:B|E) over extensions with |E| = env_dim (an upper bound on E_sq).

    Starting points: the purification itself (when env_dim >= rank), the
    flagged formation extension (``formation``, or one computed on the fly
    when env_dim allows), any ``initial_extensions`` given on (A, B, E),
    then ``restarts`` seeded random isometries.
    """
    a = (a,) if isinstance(a, str) else tuple(a)
    b = (b,) if isinstance(b, str) else tuple(b)
    sub, vmat = _spectral_pieces(rho.marginal(a + b), a + b)
    r = vmat.shape[1]
    da, db = sub.layout.dim_of(a), sub.layout.dim_of(b)
    e = env_dim if env_dim is not None else max(r, da * db)
    if e < 1:
        raise DomainError("env_dim must be >= 1")
    f = aux_dim if aux_dim is not None else max(e, r)
    if da * db * e > EXTENSION_DIM_CAP or e * f > 4 * EXTENSION_DIM_CAP:
        raise DimensionCap(f"extension dimension {da * db * e} (aux {f}) exceeds the cap")
    if e * f < r:
        raise DomainError(f"env_dim * aux_dim = {e * f} cannot hold a rank-{r} purifier")
    fg = _cmi_objective(vmat, da, db, e, f)

    starts: list[np.ndarray] = []
    if e >= r:
        w0 = np.zeros((e * f, r), dtype=np.complex128)
        for p in range(r):
            w0[p * f, p] = 1                               # |p>_E |0>_F
        starts.append(w0)
    if formation is None and e >= 2:
        est = entanglement_of_formation(sub, a, b, restarts=2, ensemble_size=max(r, min(e, f)),
                                        seed=seed, steps=steps)
        formation = est.witness
    if formation is not None and len(formation.probs) <= min(e, f):
        dec_sub = Decomposition(formation.probs, formation.vectors, sub.layout)
        ext = formation_extension(dec_sub)
        pad = np.zeros((da * db * e,) * 2, dtype=np.complex128)
        n = len(formation.probs)
        idx = np.arange(da * db * e).reshape(da * db, e)[:, :n].ravel()
        pad[np.ix_(idx, idx)] = ext.matrix
        w_f = _w_from_extension(vmat, pad, da * db, e, f)
        if w_f is not None:
            starts.append(w_f)
    for ext in initial_extensions:
        x = ext.reorder(a + b + tuple(l for l in ext.labels if l not in a + b))
        if x.dim != da * db * e:
            continue
        w_x = _w_from_extension(vmat, x.matrix, da * db, e, f)
        if w_x is not None:
            starts.append(w_x)
    rng = make_rng(seed)
    for _ in range(restarts):
        starts.append(haar_isometry(rng, e * f, r))

    best = None
    for w0 in starts:
        w, val, conv = stiefel_descent(fg, w0, steps)
        if best is None or val < best[1] - 1e-15:
            best = (w, val, conv)
    w, val, conv = best
    ext = _extension_from_w(vmat, w, sub.layout, e, f, "E")
    value = 0.5 * info.conditional_mutual_information(ext, a, b, ("E",))
    return MeasureEstimate(max(float(value), 0.0), "upper_bound", len(starts), conv, ext)
