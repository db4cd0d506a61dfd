"""Kraus-form channels, the Petz transpose channel and its swivelled family.

For a channel T and a reference state sigma the Petz map is

    R(xi) = sqrt(sigma) T^*( (T sigma)^{-1/2} xi (T sigma)^{-1/2} ) sqrt(sigma)

and with T = tr_B, sigma = rho^A x rho^{EB} it reduces to the recovery
map E -> EB built from rho^{EB}. Input mass on the kernel of T(sigma) is
sent to sigma so the synthesized map is trace preserving everywhere.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qrecover import info, linalg
from qrecover.errors import DimensionMismatch, NotTracePreserving, RankDeficientWarning
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState

TP_TOL = 1e-9
KRAUS_CUTOFF_REL = 1e-14


@dataclass(frozen=True)
class KrausMap:
    """Linear map X -> sum_i K_i X K_i^dagger between two layouts.

    ``kraus`` has shape (n, d_out, d_in).
    """

    kraus: np.ndarray
    in_layout: SubsystemLayout
    out_layout: SubsystemLayout
    name: str = ""

    def __post_init__(self):
        k = np.array(self.kraus, dtype=np.complex128)
        if k.ndim == 2:
            k = k[None]
        if k.shape[1:] != (self.out_layout.dim, self.in_layout.dim):
            raise DimensionMismatch(
                f"Kraus operators of shape {k.shape[1:]} do not map "
                f"{self.in_layout.dim} -> {self.out_layout.dim}"
            )
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.in_layout.dim,) * 2:
            raise DimensionMismatch(f"input shape {x.shape} does not match map input {self.in_layout.dim}")
        k = self.kraus
        return np.einsum("kab,bc,kdc->ad", k, x, k.conj(), optimize=True)

    def adjoint(self) -> "KrausMap":
        """Heisenberg-picture map Y -> sum_i K_i^dagger Y K_i (unital when self is TP)."""
        return KrausMap(self.kraus.conj().transpose(0, 2, 1), self.out_layout, self.in_layout,
                        f"adjoint({self.name})")

    def tp_deviation(self) -> float:
        s = np.einsum("kab,kac->bc", self.kraus.conj(), self.kraus)
        return float(np.max(np.abs(s - np.eye(self.in_layout.dim))))

    def unital_deviation(self) -> float:
        s = np.einsum("kab,kcb->ac", self.kraus, self.kraus.conj())
        return float(np.max(np.abs(s - np.eye(self.out_layout.dim))))

    def choi(self) -> np.ndarray:
        """sum_i vec(K_i) vec(K_i)^dagger with row-major vec (output index first)."""
        v = self.kraus.reshape(self.kraus.shape[0], -1)
        return v.T @ v.conj()


@dataclass(frozen=True)
class QuantumChannel(KrausMap):
    """Completely positive trace-preserving map (checked at 1e-9)."""

    def __post_init__(self):
        super().__post_init__()
        dev = self.tp_deviation()
        if dev > TP_TOL:
            raise NotTracePreserving(f"sum K^dagger K deviates from identity by {dev:.3e}")


def canonical_kraus(kraus: np.ndarray) -> np.ndarray:
    """Minimal Kraus set from the eigendecomposition of the Choi matrix."""
    n, dout, din = kraus.shape
    v = kraus.reshape(n, -1)
    if n <= 1:
        return kraus
    w, u = linalg.eigh(v.T @ v.conj())
    keep = w > KRAUS_CUTOFF_REL * max(float(w[-1]), 0.0)
    ops = (u[:, keep] * np.sqrt(w[keep])).T[::-1]
    return ops.reshape(-1, dout, din)


# ---------------------------------------------------------------- constructors


def identity_channel(layout: SubsystemLayout) -> QuantumChannel:
    return QuantumChannel(np.eye(layout.dim)[None], layout, layout, "id")


def unitary_channel(u: np.ndarray, layout: SubsystemLayout) -> QuantumChannel:
    return QuantumChannel(np.asarray(u)[None], layout, layout, "unitary")


def partial_trace_channel(layout: SubsystemLayout, keep: Sequence[str]) -> QuantumChannel:
    """tr over everything outside ``keep``; Kraus ops are <j| on the traced factors."""
    keep = set(keep)
    kept_axes = tuple(i for i, x in enumerate(layout.labels) if x in keep)
    traced_axes = tuple(i for i, x in enumerate(layout.labels) if x not in keep)
    for x in keep:
        layout.index(x)
    ko = linalg._offsets(layout.dims, kept_axes)
    to = linalg._offsets(layout.dims, traced_axes)
    k = np.zeros((to.size, ko.size, layout.dim))
    for j, t in enumerate(to):
        k[j, np.arange(ko.size), ko + t] = 1.0
    out = layout.restrict(keep)
    return QuantumChannel(k, layout, out, f"tr_{''.join(layout.labels[i] for i in traced_axes)}")


def completely_depolarizing_channel(layout: SubsystemLayout) -> QuantumChannel:
    d = layout.dim
    k = np.zeros((d * d, d, d))
    for i in range(d):
        for j in range(d):
            k[i * d + j, i, j] = 1 / math.sqrt(d)
    return QuantumChannel(k, layout, layout, "depolarize")


def classical_channel(t: np.ndarray, in_layout: SubsystemLayout | None = None,
                      out_layout: SubsystemLayout | None = None) -> QuantumChannel:
    """Stochastic matrix t[u, x] as the measure-and-prepare channel sqrt(t_ux) |u><x|."""
    t = np.asarray(t, dtype=float)
    nu, nx = t.shape
    in_layout = in_layout or SubsystemLayout(("X",), (nx,))
    out_layout = out_layout or SubsystemLayout(("U",), (nu,))
    k = np.zeros((nu * nx, nu, nx))
    for u in range(nu):
        for x in range(nx):
            k[u * nx + x, u, x] = math.sqrt(t[u, x])
    keep = np.any(k != 0, axis=(1, 2))
    return QuantumChannel(k[keep], in_layout, out_layout, "classical")


def random_channel(rng: np.random.Generator, in_layout: SubsystemLayout, out_layout: SubsystemLayout,
                   kraus_rank: int = 2) -> QuantumChannel:
    """Channel from a Haar-random Stinespring isometry."""
    from qrecover.states import haar_isometry

    v = haar_isometry(rng, out_layout.dim * kraus_rank, in_layout.dim)
    k = v.reshape(out_layout.dim, kraus_rank, in_layout.dim).transpose(1, 0, 2)
    return QuantumChannel(k, in_layout, out_layout, "random")


def compose(second: KrausMap, first: KrausMap) -> QuantumChannel:
    """second o first."""
    if first.out_layout.dim != second.in_layout.dim:
        raise DimensionMismatch("cannot compose maps with mismatched dimensions")
    k = np.einsum("iab,jbc->ijac", second.kraus, first.kraus).reshape(
        -1, second.out_layout.dim, first.in_layout.dim)
    return QuantumChannel(canonical_kraus(k), first.in_layout, second.out_layout,
                          f"{second.name}o{first.name}")


def tensor_channels(t1: KrausMap, t2: KrausMap) -> QuantumChannel:
    k = np.einsum("iab,jcd->ijacbd", t1.kraus, t2.kraus).reshape(
        t1.kraus.shape[0] * t2.kraus.shape[0], t1.out_layout.dim * t2.out_layout.dim,
        t1.in_layout.dim * t2.in_layout.dim)
    return QuantumChannel(k, t1.in_layout + t2.in_layout, t1.out_layout + t2.out_layout,
                          f"{t1.name}x{t2.name}")


# ---------------------------------------------------------------- application


def apply(channel: KrausMap, rho: MultipartiteState) -> MultipartiteState:
    if rho.dim != channel.in_layout.dim:
        raise DimensionMismatch(f"state dimension {rho.dim} != channel input {channel.in_layout.dim}")
    return MultipartiteState(channel(rho.matrix), channel.out_layout, check=False)


def apply_kraus_local(m: np.ndarray, layout: SubsystemLayout, kraus: np.ndarray,
                      target: Sequence[str], out_layout: SubsystemLayout
                      ) -> tuple[np.ndarray, SubsystemLayout]:
    """sum_i (1 x K_i) m (1 x K_i)^dagger with K_i acting on the factors ``target``.

    The output factors replace ``target`` at the position of its first label;
    spectators keep their relative order.
    """
    target = list(target)
    spect = [x for x in layout.labels if x not in target]
    clash = set(spect) & set(out_layout.labels)
    if clash:
        raise DimensionMismatch(f"output labels {sorted(clash)} collide with spectators")
    order = spect + target
    m = linalg.permute_subsystems(m, layout, order) if tuple(order) != layout.labels else m
    ds = layout.dim_of(spect)
    dt = layout.dim_of(target)
    do = out_layout.dim
    m4 = m.reshape(ds, dt, ds, dt)
    y = np.tensordot(kraus, m4, axes=([2], [1]))          # k, o, a, b, u
    z = np.tensordot(y, kraus.conj(), axes=([0, 4], [0, 2]))  # o, a, b, p
    out = z.transpose(1, 0, 2, 3).reshape(ds * do, ds * do)
    tmp_layout = layout.restrict(spect) + out_layout
    first = layout.index(target[0])
    final = [x for x in layout.labels[:first] if x in spect] + list(out_layout.labels) + \
            [x for x in layout.labels[first:] if x in spect]
    if tuple(final) != tmp_layout.labels:
        out = linalg.permute_subsystems(out, tmp_layout, final)
    return out, tmp_layout.reorder(final)


def apply_on_subsystem(channel: KrausMap, rho: MultipartiteState, target: Sequence[str]) -> MultipartiteState:
    """Identity on spectators, ``channel`` on ``target``."""
    target = [target] if isinstance(target, str) else list(target)
    dims = tuple(rho.dims[rho.layout.index(x)] for x in target)
    if int(np.prod(dims)) != channel.in_layout.dim:
        raise DimensionMismatch(f"target dims {dims} do not match channel input {channel.in_layout.dims}")
    m, lay = apply_kraus_local(rho.matrix, rho.layout, channel.kraus, target, channel.out_layout)
    return MultipartiteState(m, lay, check=False)


# ---------------------------------------------------------------- recovery maps


@dataclass(frozen=True)
class RecoveryMap:
    """A recovery channel together with the (T, sigma, t) it was built from."""

    channel: QuantumChannel
    source_channel_id: str
    anchor_state: MultipartiteState
    swivel_t: float | None = None
    source: KrausMap | None = field(default=None, repr=False, compare=False)
    rank_deficient: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.channel(x)

    @property
    def kraus(self) -> np.ndarray:
        return self.channel.kraus

    def anchor_residual(self) -> float:
        """max-abs deviation of R(T(sigma)) from sigma."""
        ts = self.source(self.anchor_state.matrix)
        return float(np.max(np.abs(self.channel(ts) - self.anchor_state.matrix)))


@dataclass(frozen=True)
class _PetzParts:
    kraus: np.ndarray          # Kraus ops of R_0 including the kernel completion
    gen_in: tuple              # eigendecomposition of the swivel generator on T(sigma)
    gen_out: tuple             # eigendecomposition of the swivel generator on sigma
    rank_deficient: bool


def _generator(m: np.ndarray, generator: str) -> tuple[np.ndarray, np.ndarray]:
    w, v = linalg.eigh(m)
    if generator == "linear":
        return w, v
    if generator != "log":
        raise ValueError(f"unknown swivel generator {generator!r}")
    cut = linalg.current_cutoff_rel() * max(float(w[-1]), 0.0)
    g = np.zeros_like(w)
    g[w > cut] = np.log(w[w > cut])
    return g, v


def _petz_parts(channel: KrausMap, sigma: np.ndarray, generator: str = "log") -> _PetzParts:
    ts = channel(sigma)
    sq = linalg.psd_sqrt(sigma)
    inv_sq = linalg.psd_inv_sqrt(ts)
    ops = [sq @ k.conj().T @ inv_sq for k in channel.kraus]
    ker = linalg.kernel_basis(ts)
    rank_deficient = ker.shape[1] > 0
    if rank_deficient:
        ws, vs = linalg.eigh(sigma)
        cut = linalg.current_cutoff_rel() * max(float(ws[-1]), 0.0)
        for a in np.nonzero(ws > cut)[0]:
            for j in range(ker.shape[1]):
                ops.append(math.sqrt(ws[a]) * np.outer(vs[:, a], ker[:, j].conj()))
    kraus = canonical_kraus(np.array(ops))
    return _PetzParts(kraus, _generator(ts, generator), _generator(sigma, generator), rank_deficient)


def _unitary(gen: tuple, t: float) -> np.ndarray:
    g, v = gen
    return (v * np.exp(1j * t * g)) @ v.conj().T


def _swivel(parts: _PetzParts, t: float) -> np.ndarray:
    if t == 0:
        return parts.kraus
    u_in = _unitary(parts.gen_in, t)
    u_out = _unitary(parts.gen_out, -t)
    return np.einsum("ab,kbc,cd->kad", u_out, parts.kraus, u_in)


def swivelled_petz_map(channel: KrausMap, sigma: MultipartiteState, t: float,
                       generator: str = "log", _parts: _PetzParts | None = None) -> RecoveryMap:
    """R_t(xi) = U_sigma(-t) R(U_Tsigma(t) xi U_Tsigma(t)^dagger) U_sigma(-t)^dagger.

    ``generator="log"`` uses U_X(t) = X^{it} = exp(i t log X) on the support
    of X; ``generator="linear"`` uses exp(i t X). Both coincide with the Petz
    map at t = 0, fix sigma, and are t-independent on commuting instances.
    """
    if sigma.dim != channel.in_layout.dim:
        raise DimensionMismatch("sigma does not live on the channel input")
    parts = _parts or _petz_parts(channel, sigma.matrix, generator)
    if parts.rank_deficient:
        warnings.warn("T(sigma) is rank deficient; kernel mass is mapped to sigma",
                      RankDeficientWarning, stacklevel=2)
    rec = QuantumChannel(_swivel(parts, float(t)), channel.out_layout, channel.in_layout,
                         f"petz[{channel.name}]" + (f"_t={t:g}" if t else ""))
    return RecoveryMap(rec, channel.name, sigma, float(t), channel, parts.rank_deficient)


def petz_map(channel: KrausMap, sigma: MultipartiteState) -> RecoveryMap:
    """Petz transpose channel R(T, sigma) in Kraus form; R(T(sigma)) = sigma."""
    rec = swivelled_petz_map(channel, sigma, 0.0)
    return RecoveryMap(rec.channel, rec.source_channel_id, sigma, None, channel, rec.rank_deficient)


def _eb_split(rho_eb: MultipartiteState, e_labels, b_labels):
    e_labels = (e_labels,) if isinstance(e_labels, str) else tuple(e_labels)
    b_labels = (b_labels,) if isinstance(b_labels, str) else tuple(b_labels)
    if set(e_labels + b_labels) != set(rho_eb.labels):
        raise DimensionMismatch(f"labels {e_labels + b_labels} must cover {rho_eb.labels}")
    return e_labels, b_labels


def cmi_petz_map(rho_eb: MultipartiteState, e_labels=("E",), b_labels=("B",),
                 t: float = 0.0, generator: str = "log") -> RecoveryMap:
    """Recovery E -> EB: xi -> sqrt(rho^EB) (rho_E^{-1/2} xi rho_E^{-1/2} x 1_B) sqrt(rho^EB).

    With ``t != 0`` the swivelled version. The output layout is that of ``rho_eb``.
    """
    e_labels, _ = _eb_split(rho_eb, e_labels, b_labels)
    tr_b = partial_trace_channel(rho_eb.layout, e_labels)
    return swivelled_petz_map(tr_b, rho_eb, t, generator) if t else petz_map(tr_b, rho_eb)


# ---------------------------------------------------------------- swivel scan

TIE_TOL = 1e-12
DEFAULT_GRID = tuple(np.round(np.arange(-100, 101) * 0.1, 10))


@dataclass(frozen=True)
class SwivelScan:
    t_best: float
    fidelity_best: float
    value_best: float      # -log2 F^2 at t_best
    cmi: float
    bound_holds: bool


class CMIRecoveryProblem:
    """Precomputed pieces for evaluating (id_A x R_t) rho^{AE} against rho^{AEB}.

    The recovered state is laid out as (A..., E..., B...), and ``target`` is
    rho reordered the same way.
    """

    def __init__(self, rho: MultipartiteState, a, e, b, generator: str = "log"):
        self.a = (a,) if isinstance(a, str) else tuple(a)
        self.e = (e,) if isinstance(e, str) else tuple(e)
        self.b = (b,) if isinstance(b, str) else tuple(b)
        order = self.a + self.e + self.b
        sub = rho.marginal(order).reorder(order) if set(order) != set(rho.labels) else rho.reorder(order)
        self.target = sub
        self.rho_ae = sub.marginal(self.a + self.e)
        self.rho_eb = sub.marginal(self.e + self.b)
        self.tr_b = partial_trace_channel(self.rho_eb.layout, self.e)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            self.parts = _petz_parts(self.tr_b, self.rho_eb.matrix, generator)
        self.generator = generator
        self._sqrt_target: np.ndarray | None = None
        self.cmi = info.conditional_mutual_information(sub, self.a, self.b, self.e)

    def recovery(self, t: float = 0.0) -> RecoveryMap:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            return swivelled_petz_map(self.tr_b, self.rho_eb, t, self.generator, _parts=self.parts)

    def recovered(self, t: float = 0.0) -> np.ndarray:
        m, _ = apply_kraus_local(self.rho_ae.matrix, self.rho_ae.layout, _swivel(self.parts, t),
                                 self.e, self.rho_eb.layout)
        return m

    def recovered_state(self, t: float = 0.0) -> MultipartiteState:
        return MultipartiteState(self.recovered(t), self.target.layout, check=False)

    def neg_log_fidelity_sq(self, t: float) -> tuple[float, float]:
        if self._sqrt_target is None:
            self._sqrt_target = linalg.psd_sqrt(self.target.matrix)
        f = min(info.fidelity_with_sqrt(self._sqrt_target, self.recovered(t)), 1.0)
        return (math.inf if f <= 0 else -2 * math.log2(f)), f


def golden_section(f: Callable[[float], float], lo: float, hi: float, iters: int = 40) -> tuple[float, float]:
    """Minimize a unimodal-ish scalar function on [lo, hi]; returns (x, f(x))."""
    g = (math.sqrt(5) - 1) / 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def scan_grid(objective: Callable[[float], float], grid: Sequence[float], refine: bool = True
              ) -> tuple[float, float]:
    """Coarse grid minimum (ties -> smaller |t|, then smaller t), then golden refinement."""
    pts = sorted({float(t) for t in grid}, key=lambda t: (abs(t), t))
    if not pts:
        raise ValueError("swivel grid is empty")
    vals = [objective(t) for t in pts]
    floor = min(vals)
    # values within TIE_TOL of the minimum count as ties; pts is already in tie-break order
    best = next(i for i, v in enumerate(vals) if v <= floor + TIE_TOL)
    t_best, v_best = pts[best], vals[best]
    if refine and len(pts) > 2:
        ordered = sorted(pts)
        i = ordered.index(t_best)
        lo = ordered[max(i - 1, 0)]
        hi = ordered[min(i + 1, len(ordered) - 1)]
        if hi > lo:
            t_ref, v_ref = golden_section(objective, lo, hi)
            if v_ref < v_best - TIE_TOL:
                t_best, v_best = t_ref, v_ref
    return t_best, v_best


def best_swivel_scan(rho: MultipartiteState, a, e, b, grid: Sequence[float] = DEFAULT_GRID,
                     refine: bool = True, slack: float = 1e-6, generator: str = "log",
                     problem: CMIRecoveryProblem | None = None) -> SwivelScan:
    """Minimize -log2 F(rho^{AEB}, (id x R_t) rho^{AE})^2 over t and compare with I(A:B|E)."""
    prob = problem or CMIRecoveryProblem(rho, a, e, b, generator)
    t_best, v_best = scan_grid(lambda t: prob.neg_log_fidelity_sq(t)[0], grid, refine)
    f_best = 2.0 ** (-v_best / 2) if math.isfinite(v_best) else 0.0
    return SwivelScan(t_best, f_best, v_best, prob.cmi, bool(v_best <= prob.cmi + slack))
