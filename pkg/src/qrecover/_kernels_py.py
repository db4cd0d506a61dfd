"""Pure-Python/numpy versions of the compiled kernels (same signatures)."""
import numpy as np


def ptrace_offsets(m, kept, traced):
    if kept.size * kept.size * traced.size <= 1 << 20:
        rows = kept[:, None] + traced[None, :]
        return m[rows[:, None, :], rows[None, :, :]].sum(axis=-1)
    out = np.zeros((kept.size, kept.size), dtype=np.complex128)
    for r in traced:
        idx = kept + r
        out += m[np.ix_(idx, idx)]
    return out


def entropy_bits(eigs, cutoff):
    lam = eigs[eigs > cutoff]
    return float(-np.sum(lam * np.log2(lam)))


def _kl_bits(a, b):
    mask = a > 0
    if np.any(b[mask] <= 0):
        return np.inf
    return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))


def theorem5_terms(p, q, t):
    """Return (D(P||Q), D(TP||TQ), D(P||RTP)) in bits for the transpose channel R(T, Q)."""
    tp = t @ p
    tq = t @ q
    pos = tq > 0
    ratio = np.where(pos, tp / np.where(pos, tq, 1.0), 0.0)
    # zero entries of TQ: that column of R is Q itself
    rtp = q * (t.T @ ratio) + q * np.sum(tp[~pos])
    return _kl_bits(p, q), _kl_bits(tp, tq), _kl_bits(p, rtp)
