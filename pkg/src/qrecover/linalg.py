"""Dense complex linear algebra on multipartite operators.

Index convention: row-major, the first subsystem in a layout is the most
significant index (the same convention as ``numpy.kron``).
"""
from __future__ import annotations

import contextlib
import contextvars
import functools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg

from qrecover import kernels
from qrecover.errors import (
    DimensionMismatch,
    NoConvergence,
    NotHermitian,
    NotPSD,
    UnknownLabel,
)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
DEFAULT_CUTOFF_REL = 1e-12


@dataclass(frozen=True)
class _Numerics:
    cutoff_rel: float = DEFAULT_CUTOFF_REL
    driver: str | None = None


_numerics: contextvars.ContextVar[_Numerics] = contextvars.ContextVar(
    "qrecover_numerics", default=_Numerics()
)


@contextlib.contextmanager
def tightened(cutoff_rel: float = 1e-15, driver: str = "ev"):
    """Re-run numerics with a smaller support cutoff and a different LAPACK eigensolver.

    Used to re-verify candidate counterexamples before they are archived.
    """
    token = _numerics.set(_Numerics(cutoff_rel=cutoff_rel, driver=driver))
    try:
        yield
    finally:
        _numerics.reset(token)


def current_cutoff_rel() -> float:
    return _numerics.get().cutoff_rel


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered subsystem names with their local dimensions."""

    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.labels) != len(self.dims):
            raise DimensionMismatch("labels and dims have different lengths")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate subsystem labels in {self.labels}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"local dimensions must be >= 1, got {self.dims}")

    @classmethod
    def of(cls, **dims: int) -> "SubsystemLayout":
        return cls(tuple(dims), tuple(dims.values()))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"unknown subsystem label {label!r}; have {self.labels}") from None

    def dim_of(self, labels: Iterable[str]) -> int:
        return int(np.prod([self.dims[self.index(x)] for x in labels], dtype=np.int64))

    def restrict(self, labels: Iterable[str]) -> "SubsystemLayout":
        """Sub-layout on ``labels``, kept in this layout's order."""
        wanted = set(labels)
        for x in wanted:
            self.index(x)
        pairs = [(x, d) for x, d in zip(self.labels, self.dims) if x in wanted]
        return SubsystemLayout(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def reorder(self, order: Sequence[str]) -> "SubsystemLayout":
        if sorted(order) != sorted(self.labels):
            raise UnknownLabel(f"{tuple(order)} is not a permutation of {self.labels}")
        return SubsystemLayout(tuple(order), tuple(self.dims[self.index(x)] for x in order))

    def rename(self, mapping: dict[str, str]) -> "SubsystemLayout":
        for x in mapping:
            self.index(x)
        return SubsystemLayout(tuple(mapping.get(x, x) for x in self.labels), self.dims)

    def __add__(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.labels + other.labels, self.dims + other.dims)


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def _checked_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotHermitian("matrix has non-finite entries")
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > HERMITIAN_TOL:
        raise NotHermitian(f"max |m - m^dagger| = {dev:.3e} exceeds {HERMITIAN_TOL}")
    return hermitian_part(m)


def _eigh(h: np.ndarray):
    driver = _numerics.get().driver
    try:
        if driver is None:
            return np.linalg.eigh(h)
        return scipy.linalg.eigh(h, driver=driver)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NoConvergence(str(exc)) from exc


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues in descending order and the matching unitary whose
    columns are eigenvectors, so ``m == V @ diag(w) @ V^dagger``.

    Raises:
        NotHermitian: if ``max|m - m^dagger| > 1e-10``.
        NoConvergence: if LAPACK fails.
    """
    w, v = _eigh(_checked_hermitian(m))
    return w[::-1].copy(), v[:, ::-1].copy()


def eigvalsh(m: np.ndarray) -> np.ndarray:
    """Eigenvalues (ascending) of the Hermitian part, without the Hermiticity check."""
    h = hermitian_part(np.asarray(m, dtype=np.complex128))
    if _numerics.get().driver is not None:
        return _eigh(h)[0]
    try:
        return np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigendecomposition of the Hermitian part, without the Hermiticity check."""
    return _eigh(hermitian_part(np.asarray(m, dtype=np.complex128)))


def matrix_function_on_support(
    m: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    support_cutoff: float | None = None,
) -> np.ndarray:
    """Apply ``f`` to the eigenvalues of a PSD matrix that lie above the cutoff.

    Eigenvalues at or below the cutoff (default ``1e-12 * lambda_max``) are
    sent to zero, so ``x ** -0.5`` gives the pseudo-inverse square root.

    Raises:
        NotPSD: if an eigenvalue is below ``-1e-8``.
    """
    w, v = _eigh(_checked_hermitian(m))
    if w.size and w[0] < -PSD_TOL:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} < -{PSD_TOL}")
    cut = _support_cut(w, support_cutoff)
    fw = np.zeros_like(w)
    on = w > cut
    if np.any(on):
        fw[on] = f(w[on])
    return (v * fw) @ v.conj().T


def _support_cut(w, cutoff):
    if cutoff is not None:
        return float(cutoff)
    top = float(w[-1]) if w.size else 0.0
    return current_cutoff_rel() * max(top, 0.0)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    return matrix_function_on_support(m, np.sqrt)


def psd_inv_sqrt(m: np.ndarray) -> np.ndarray:
    return matrix_function_on_support(m, lambda x: x ** -0.5)


def support_projector(m: np.ndarray) -> np.ndarray:
    return matrix_function_on_support(m, np.ones_like)


def kernel_basis(m: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the kernel (eigenvalues at or below the cutoff)."""
    w, v = _eigh(_checked_hermitian(m))
    return v[:, w <= _support_cut(w, None)]


def hermitian_exp_i(h: np.ndarray, t: float) -> np.ndarray:
    """exp(i t h) for Hermitian h."""
    w, v = _eigh(_checked_hermitian(h))
    return (v * np.exp(1j * t * w)) @ v.conj().T


def trace_norm(m: np.ndarray) -> float:
    """Sum of absolute eigenvalues of the Hermitian part of ``m``."""
    return float(np.sum(np.abs(eigvalsh(m))))


def tensor(*ms: np.ndarray) -> np.ndarray:
    """Kronecker product; the first factor is the most significant index."""
    out = np.ones((1, 1), dtype=np.complex128)
    for m in ms:
        out = np.kron(out, np.asarray(m))
    return out


@functools.lru_cache(maxsize=512)
def _offsets(dims: tuple[int, ...], axes: tuple[int, ...]) -> np.ndarray:
    strides = [int(np.prod(dims[i + 1:], dtype=np.int64)) for i in range(len(dims))]
    off = np.zeros(1, dtype=np.int64)
    for ax in axes:
        off = (off[:, None] + np.arange(dims[ax], dtype=np.int64)[None, :] * strides[ax]).ravel()
    off.setflags(write=False)
    return off


def _check_layout(m: np.ndarray, layout: SubsystemLayout) -> None:
    if m.shape != (layout.dim, layout.dim):
        raise DimensionMismatch(f"matrix shape {m.shape} does not match layout dimension {layout.dim}")


def partial_trace(
    m: np.ndarray, layout: SubsystemLayout, keep: Iterable[str]
) -> tuple[np.ndarray, SubsystemLayout]:
    """Trace out every subsystem not in ``keep``.

    The kept subsystems retain their order in ``layout``.
    """
    m = np.asarray(m, dtype=np.complex128)
    _check_layout(m, layout)
    keep = set(keep)
    for x in keep:
        layout.index(x)
    kept_axes = tuple(i for i, x in enumerate(layout.labels) if x in keep)
    traced_axes = tuple(i for i, x in enumerate(layout.labels) if x not in keep)
    new_layout = SubsystemLayout(
        tuple(layout.labels[i] for i in kept_axes), tuple(layout.dims[i] for i in kept_axes)
    )
    if not traced_axes:
        return m.copy(), new_layout
    out = kernels.ptrace_offsets(
        np.ascontiguousarray(m), _offsets(layout.dims, kept_axes), _offsets(layout.dims, traced_axes)
    )
    return np.asarray(out), new_layout


def permute_subsystems(
    m: np.ndarray, layout: SubsystemLayout, perm: Sequence[str], in_place: bool = False
) -> np.ndarray:
    """Reorder the tensor factors of ``m`` into the label order ``perm``.

    The result lives on ``layout.reorder(perm)``. With ``in_place=True`` the
    result is read back on the original ``layout``, i.e. it is conjugation by
    the permutation unitary U^pi; this requires every moved factor to land on
    a slot of equal dimension.
    """
    m = np.asarray(m, dtype=np.complex128)
    _check_layout(m, layout)
    target = layout.reorder(perm)
    if in_place and target.dims != layout.dims:
        raise DimensionMismatch(f"permutation {tuple(perm)} moves factors between unequal dimensions")
    n = len(layout.dims)
    axes = [layout.index(x) for x in perm]
    t = m.reshape(layout.dims + layout.dims).transpose(axes + [a + n for a in axes])
    return t.reshape(m.shape).copy()
