"""Shared numerical kernels: Pfaffians, finite differences, Brownian increments.

Everything here is pure; values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

SKEW_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when a matrix is too large for a brute-force routine."""


def _as_square_matrix(a):
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _check_skew(m, tol=SKEW_TOL):
    dev = np.max(np.abs(m + m.T)) if m.size else 0.0
    if dev > tol:
        raise ValueError(f"matrix is not skew-symmetric (max |A + A^T| = {dev:.3e})")


@dataclass(frozen=True)
class SkewMatrix:
    """Antisymmetric complex matrix of pairwise kernels.

    A[i, j] = -A[j, i] is enforced on construction within ``SKEW_TOL``
    absolute; the stored matrix keeps the caller's entries unchanged.
    """

    entries: np.ndarray

    def __init__(self, entries):
        m = _as_square_matrix(entries)
        _check_skew(m)
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _matrix_of(a):
    if isinstance(a, SkewMatrix):
        return a.entries
    m = _as_square_matrix(a)
    _check_skew(m)
    return m


def pfaffian(a):
    """Pfaffian of a skew-symmetric matrix.

    Uses Parlett-Reid skew tridiagonalization with partial pivoting, O(n^3).
    Returns exactly 0 for odd dimension; satisfies pfaffian(A)**2 == det(A).
    """
    m = _matrix_of(a)
    n = m.shape[0]
    if n == 0:
        return 1.0
    if n % 2 == 1:
        return 0.0
    work = m.astype(complex if np.iscomplexobj(m) else float, copy=True)
    value = 1.0 + 0.0j if np.iscomplexobj(m) else 1.0
    for k in range(0, n - 1, 2):
        # move the largest entry of column k below the diagonal to row k+1
        kp = k + 1 + int(np.argmax(np.abs(work[k + 1:, k])))
        if kp != k + 1:
            work[[k + 1, kp], k:] = work[[kp, k + 1], k:]
            work[k:, [k + 1, kp]] = work[k:, [kp, k + 1]]
            value = -value
        pivot = work[k + 1, k]
        if pivot == 0.0:
            return 0.0 * value
        value *= work[k, k + 1]
        if k + 2 < n:
            tau = work[k, k + 2:] / work[k, k + 1]
            col = work[k + 2:, k + 1]
            work[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return value


def pfaffian_oracle(a, max_dim=12):
    """Pfaffian as the signed sum over perfect matchings.

    Independent of :func:`pfaffian`; factorial cost, so the dimension is
    capped at ``max_dim``.
    """
    m = _matrix_of(a)
    n = m.shape[0]
    if n > max_dim:
        raise DimensionError(f"matching-sum oracle limited to n <= {max_dim}, got {n}")
    if n % 2 == 1:
        return 0.0
    return _pf_expand(m, list(range(n)))


def _pf_expand(m, idx):
    if not idx:
        return 1.0
    first, rest = idx[0], idx[1:]
    total = 0.0
    for t, j in enumerate(rest):
        sub = rest[:t] + rest[t + 1:]
        term = m[first, j] * _pf_expand(m, sub)
        total += term if t % 2 == 0 else -term
    return total


def central_diff(f, z, order=1, h=None):
    """Central finite difference with one Richardson extrapolation level.

    order=1 uses (f(z+h)-f(z-h))/2h, order=2 the three-point second
    difference; Richardson over h and h/2 leaves an O(h^4) truncation
    error.  Default steps: 1e-5*max(1,|z|) for order 1 and 1e-3*max(1,|z|)
    for order 2 (the smaller step would lose ~1e-6 to cancellation in the
    second difference at double precision).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if h is None:
        scale = max(1.0, abs(z))
        h = (1e-5 if order == 1 else 1e-3) * scale
    if h <= 0:
        raise ValueError("step h must be positive")

    def stencil(step):
        if order == 1:
            vals = (f(z + step), f(z - step))
            out = (vals[0] - vals[1]) / (2.0 * step)
        else:
            vals = (f(z + step), f(z), f(z - step))
            out = (vals[0] - 2.0 * vals[1] + vals[2]) / (step * step)
        if not all(np.isfinite(v).all() if isinstance(v, np.ndarray) else np.isfinite(v) for v in vals):
            raise ValueError("non-finite function value in finite difference")
        return out

    coarse = stencil(h)
    fine = stencil(h / 2.0)
    return (4.0 * fine - coarse) / 3.0


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    The draw at index i is a pure function of (seed, stream_id, i), so
    disjoint stream_ids give independent sequences and any position can be
    reproduced without replaying the stream.
    """

    seed: int
    stream_id: int = 0
    position: int = 0

    def advanced(self, steps: int) -> "RngStream":
        return replace(self, position=self.position + int(steps))

    def _raw_uniforms(self, count: int) -> np.ndarray:
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        gen = np.random.Philox(key=key)
        # Philox.advance moves in blocks of four 64-bit words
        gen.advance(self.position // 4)
        skip = self.position % 4
        raw = gen.random_raw(skip + count)[skip:]
        return (raw >> np.uint64(11)) * 2.0**-53 + 2.0**-54

    def standard_normals(self, count: int) -> np.ndarray:
        return ndtri(self._raw_uniforms(count))


def brownian_increments(stream: RngStream, steps: int, dt: float) -> np.ndarray:
    """i.i.d. normal(0, dt) increments, reproducible per (seed, stream_id)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    return np.sqrt(dt) * stream.standard_normals(steps)
