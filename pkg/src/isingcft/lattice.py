"""Exact transfer-matrix Ising model on small strips.

Spins live on columns |j| <= M and rows |i| <= N with all-plus boundary:
the top and bottom rows are clamped by the boundary vectors, and the
hard-constraint limit of the vertical transfer matrix pins the two
boundary columns to the same values row after row, so they inherit the
plus state too.  Fermions sit on midpoints of horizontal edges (columns
k in Z+1/2) and propagate between rows by conjugation with the symmetric
transfer matrix.

Correlators are defined as row-ordered (fermionic time-ordered) operator
products: insertions are sorted by row, with the sign of the sorting
permutation.  Equal-row operators anticommute exactly, so this is the
unique antisymmetric extension of the transfer-matrix sandwich, and it is
the convention under which 2n-point functions reduce to Pfaffians of the
two-point table.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import cft
from .numerics import pfaffian

MAX_ROW_DIM = 2**13

CRITICAL_BETA = math.log(math.sqrt(2.0) - 1.0) * (-0.5)

# Continuum normalization constants: fixed once, used by the parafermion
# inversion and the lattice-to-continuum comparison.
A_PSI = (-1.0 - 1.0j) / math.sqrt(2.0)
A_PSI_BAR = (1.0 - 1.0j) / math.sqrt(2.0)
Z_NORM = -math.pi / 2.0

_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class StripGeometry:
    """Strip with columns |j| <= M, rows |i| <= N, inverse temperature beta.

    delta is the mesh size used only for scaling-limit comparisons.
    beta = 0 is allowed for counting checks; operations that conjugate by
    the transfer matrix need beta > 0 for invertibility.
    """

    M: int
    N: int
    beta: float
    delta: float = 1.0

    def __post_init__(self):
        if self.M < 0 or self.N < 1:
            raise ValueError("need M >= 0 and N >= 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.dim > MAX_ROW_DIM:
            raise ValueError(f"row Hilbert space 2^{2*self.M+1} exceeds {MAX_ROW_DIM}")

    @property
    def n_cols(self) -> int:
        return 2 * self.M + 1

    @property
    def dim(self) -> int:
        return 2 ** (2 * self.M + 1)

    @property
    def fermion_columns(self):
        """Midpoints of horizontal edges: k = -M+1/2, ..., M-1/2."""
        return [j + 0.5 for j in range(-self.M, self.M)]


def _site_operator(geom: StripGeometry, j: int, op2) -> np.ndarray:
    """op2 acting on column j, identity elsewhere; leftmost factor is j = -M."""
    out = np.array([[1.0 + 0.0j]])
    for col in range(-geom.M, geom.M + 1):
        out = np.kron(out, op2 if col == j else np.eye(2))
    return out


def _row_configurations(geom: StripGeometry):
    """All row configurations in basis order (+1 first per column)."""
    return list(product((1, -1), repeat=geom.n_cols))


@dataclass(frozen=True)
class CliffordFamily:
    sigma: dict          # j -> matrix, j in [-M, M]
    p: dict              # k -> matrix, k in I_M - 1/2
    q: dict              # k -> matrix, k in I_M + 1/2


def build_spin_and_clifford(geom: StripGeometry) -> CliffordFamily:
    """Spin operators and the spin-chain representation of the Clifford generators.

    p_k carries a string of sigma^x up to column k-1/2 followed by sigma^z
    at k+1/2; q_k the analogous string ending in sigma^y.  They satisfy
    {p_k, p_l} = {q_k, q_l} = 2 delta_{kl} and {p_k, q_l} = 0 as exact
    matrix identities.
    """
    sigma = {j: _site_operator(geom, j, _PAULI_Z) for j in range(-geom.M, geom.M + 1)}

    def string_times(last_col: int, tail_col: int, tail_op) -> np.ndarray:
        out = np.array([[1.0 + 0.0j]])
        for col in range(-geom.M, geom.M + 1):
            if col <= last_col:
                factor = _PAULI_X
            elif col == tail_col:
                factor = tail_op
            else:
                factor = np.eye(2)
            out = np.kron(out, factor)
        return out

    p = {}
    q = {}
    for j in range(-geom.M, geom.M + 1):
        k_p = j - 0.5                      # k in I_M - 1/2, tail at k + 1/2 = j
        p[k_p] = string_times(j - 1, j, _PAULI_Z)
        k_q = j + 0.5                      # k in I_M + 1/2, tail at k - 1/2 = j
        q[k_q] = string_times(j - 1, j, _PAULI_Y)
    return CliffordFamily(sigma=sigma, p=p, q=q)


@dataclass(frozen=True)
class TransferMatrices:
    v1: np.ndarray
    v1_sqrt: np.ndarray
    v2plus: np.ndarray
    vm: np.ndarray


def transfer_matrices(geom: StripGeometry) -> TransferMatrices:
    """V1 (horizontal bonds, diagonal), V2plus (vertical, boundary-pinned), VM.

    V2plus is the hard-constraint limit of the vertical step: its matrix
    element between rows rho and sigma is exp(beta * sum_{|j|<M} rho_j
    sigma_j) when the boundary columns agree and zero otherwise.
    VM = V1^{1/2} V2plus V1^{1/2} with the entrywise square root of the
    positive diagonal V1.
    """
    rows = _row_configurations(geom)
    horiz = np.array([
        sum(cfg[a] * cfg[a + 1] for a in range(geom.n_cols - 1)) for cfg in rows
    ], dtype=float)
    v1_diag = np.exp(geom.beta * horiz)
    v1 = np.diag(v1_diag)
    v1_sqrt = np.diag(np.sqrt(v1_diag))

    # factorized build: identity on boundary columns, symmetric 2x2 bond
    # weight on each interior column
    bond = np.array([[math.exp(geom.beta), math.exp(-geom.beta)],
                     [math.exp(-geom.beta), math.exp(geom.beta)]])
    v2 = np.array([[1.0]])
    for col in range(-geom.M, geom.M + 1):
        factor = np.eye(2) if abs(col) == geom.M and geom.M > 0 else bond
        if geom.M == 0:
            factor = np.eye(2)
        v2 = np.kron(v2, factor)
    vm = v1_sqrt @ v2 @ v1_sqrt
    return TransferMatrices(v1=v1, v1_sqrt=v1_sqrt, v2plus=v2, vm=vm)


def _plus_index(geom: StripGeometry) -> int:
    return 0  # +1 maps to the first basis vector in every column factor


def partition_function(geom: StripGeometry) -> float:
    """<e+| V1^{1/2} VM^{2N} V1^{1/2} |e+> with all-plus boundary rows."""
    tm = transfer_matrices(geom)
    w, u = np.linalg.eigh(tm.vm)
    scale = float(np.max(np.abs(w)))
    ket = tm.v1_sqrt[:, _plus_index(geom)].copy()
    coeffs = u.T @ ket
    val = coeffs @ ((w / scale) ** (2 * geom.N) * coeffs)
    return float(val * scale ** (2 * geom.N))


def partition_function_enum(geom: StripGeometry, max_cells: int = 25) -> float:
    """Brute-force sum over interior spin configurations.

    Boundary rows and columns are fixed to +1.  Horizontal bonds are
    counted in every row including the clamped ones; vertical bonds only
    on interior columns (the boundary-column vertical couplings are the
    hard constraint, which carries no weight).  This reproduces the
    transfer-matrix value exactly.
    """
    cells = (2 * geom.M + 1) * (2 * geom.N + 1)
    if cells > max_cells:
        raise ValueError(f"enumeration limited to {max_cells} sites, got {cells}")
    m, n = geom.M, geom.N
    inner_cols = list(range(-m + 1, m))
    inner_rows = list(range(-n + 1, n))
    total = 0.0
    grid = {}
    for i in range(-n, n + 1):
        for j in range(-m, m + 1):
            grid[(i, j)] = 1
    for assignment in product((1, -1), repeat=len(inner_rows) * len(inner_cols)):
        it = iter(assignment)
        for i in inner_rows:
            for j in inner_cols:
                grid[(i, j)] = next(it)
        energy = 0.0
        for i in range(-n, n + 1):
            for j in range(-m, m):
                energy += grid[(i, j)] * grid[(i, j + 1)]
        for i in range(-n, n):
            for j in inner_cols:
                energy += grid[(i, j)] * grid[(i + 1, j)]
        total += math.exp(geom.beta * energy)
    return total


def _apply_site_chain(vec: np.ndarray, n_cols: int, site_ops) -> np.ndarray:
    """Apply single-column 2x2 operators to a row-space vector.

    site_ops is a list of (site, op2) with site indexed from column -M;
    works on the reshaped (2,)*n_cols tensor, so no 2^n x 2^n matrix is
    ever materialized.
    """
    t = vec.reshape((2,) * n_cols)
    for site, op2 in site_ops:
        t = np.moveaxis(np.tensordot(op2, t, axes=([1], [site])), 0, site)
    return t.reshape(-1)


class _FermionEngine:
    """Shared eigen-decomposition and operator cache for one geometry."""

    def __init__(self, geom: StripGeometry):
        self.geom = geom
        self.tm = transfer_matrices(geom)
        w, u = np.linalg.eigh(self.tm.vm)
        self.scale = float(np.max(np.abs(w)))
        self.w_hat = w / self.scale
        self.u = u
        ket = self.tm.v1_sqrt[:, _plus_index(geom)].astype(complex)
        self.boundary = ket

    def apply_fermion(self, vec: np.ndarray, k: float, kind: str) -> np.ndarray:
        """psi_k or psibar_k applied to vec through the string operators."""
        n = self.geom.n_cols
        site_of = lambda j: int(round(j + self.geom.M))
        # q_k: sigma^x string through column k-3/2, sigma^y at k-1/2
        q_ops = [(site_of(j), _PAULI_X) for j in range(-self.geom.M, int(k - 0.5))]
        q_ops.append((site_of(k - 0.5), _PAULI_Y))
        # p_k: sigma^x string through column k-1/2, sigma^z at k+1/2
        p_ops = [(site_of(j), _PAULI_X) for j in range(-self.geom.M, int(k + 0.5))]
        p_ops.append((site_of(k + 0.5), _PAULI_Z))
        qv = _apply_site_chain(vec, n, q_ops)
        pv = _apply_site_chain(vec, n, p_ops)
        if kind == "psi":
            return A_PSI * (qv + pv)
        return A_PSI_BAR * (-qv + pv)

    def power_apply(self, steps: int, vec: np.ndarray) -> np.ndarray:
        """(VM / scale)^steps applied to vec; steps may be any integer."""
        if steps == 0:
            return vec
        coeffs = self.u.T @ vec
        return self.u @ (self.w_hat.astype(complex) ** steps * coeffs)

    def normalized_z(self) -> float:
        v = self.power_apply(2 * self.geom.N, self.boundary)
        return float(np.real(self.boundary @ v))


def _ordered_insertions(points, kinds):
    """Sort insertions by row, top first; returns (sign, sorted pairs)."""
    order = sorted(range(len(points)), key=lambda i: -points[i][1])
    sign = 1
    seen = list(order)
    # parity of the sorting permutation by counting inversions
    for a in range(len(seen)):
        for b in range(a + 1, len(seen)):
            if seen[a] > seen[b]:
                sign = -sign
    chosen = [(points[i], kinds[i]) for i in order]
    return sign, chosen


def lattice_fermion_correlator(geom: StripGeometry, points, kinds=None) -> complex:
    """Normalized row-ordered fermion correlator <prod psi(k + i m)>.

    points is a list of (k, m) with k a half-integer fermion column and
    |m| < N.  kinds optionally marks each insertion "psi" or "psibar".
    Operators are inserted between whole transfer-matrix steps; the value
    is antisymmetric under exchange of any two insertions.
    """
    points = [(float(k), int(m)) for k, m in points]
    if len(points) % 2 == 1:
        raise ValueError("even number of insertions required")
    if kinds is None:
        kinds = ["psi"] * len(points)
    if len(kinds) != len(points):
        raise ValueError("one kind per insertion required")
    eng = _FermionEngine(geom)
    cols = set(geom.fermion_columns)
    for k, m in points:
        if k not in cols:
            raise ValueError(f"column {k} is not a fermion column for M={geom.M}")
        if abs(m) >= geom.N:
            raise ValueError(f"row {m} out of range |m| < N={geom.N}")
    if not points:
        return 1.0 + 0.0j

    sign, chosen = _ordered_insertions(points, list(kinds))
    vec = eng.boundary.copy()
    prev_row = -geom.N
    for (k, m), kind in reversed(chosen):
        vec = eng.power_apply(m - prev_row, vec)
        vec = eng.apply_fermion(vec, k, kind)
        prev_row = m
    vec = eng.power_apply(geom.N - prev_row, vec)
    value = complex(eng.boundary @ vec)
    return sign * value / eng.normalized_z()


def two_point_table(geom: StripGeometry, points) -> np.ndarray:
    """Antisymmetric matrix of two-point correlators at the given insertions."""
    n = len(points)
    table = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            table[i, j] = lattice_fermion_correlator(geom, [points[i], points[j]])
            table[j, i] = -table[i, j]
    return table


def correlator_vs_pfaffian(geom: StripGeometry, points):
    """(direct 2n-point value, Pfaffian of the 2-point table)."""
    direct = lattice_fermion_correlator(geom, points)
    pf = complex(pfaffian(two_point_table(geom, points)))
    return direct, pf


def induced_rotation_check(geom: StripGeometry, operator: str = "vm") -> float:
    """Max deviation of the conjugation map from a bilinear-form isometry.

    T(V) v = V^{-1} v V for each Clifford generator v; the bilinear form
    is read off anticommutators, (a, b) I = ab + ba.  Returns the largest
    of: the deviation of the transformed Gram matrix from the original,
    and the residual of T(V)v outside the span of the generators.
    """
    fam = build_spin_and_clifford(geom)
    gens = list(fam.p.values()) + list(fam.q.values())
    if operator == "identity":
        v = np.eye(geom.dim)
        v_inv = v
    else:
        tm = transfer_matrices(geom)
        v = tm.vm if operator == "vm" else tm.v2plus
        if geom.beta <= 0:
            raise ValueError("conjugation needs beta > 0 for invertibility")
        v_inv = np.linalg.inv(v)
    dim = geom.dim
    transformed = [v_inv @ g @ v for g in gens]

    max_dev = 0.0
    # expansion in the generator basis: coefficients from anticommutators
    coeff = np.zeros((len(gens), len(gens)), dtype=complex)
    for a, w in enumerate(transformed):
        for b, g in enumerate(gens):
            coeff[a, b] = np.trace(w @ g + g @ w) / (2.0 * dim)
        residual = w - sum(coeff[a, b] * gens[b] for b in range(len(gens)))
        max_dev = max(max_dev, float(np.max(np.abs(residual))))
    gram = 2.0 * coeff @ coeff.T
    max_dev = max(max_dev, float(np.max(np.abs(gram - 2.0 * np.eye(len(gens))))))
    return max_dev


def parafermion_from_correlators(geom: StripGeometry, z, zp):
    """(F_up, F_down) recovered from the two fermion correlators at z, zp.

    Inverts the linear relations
        <psi(z) psi(zp)>        = 2 A_psi^2    Z (F_up - F_down)
        <psi(z) psibar(zp~)>    = 2i A A_bar   Z (F_up + F_down)
    with the frozen constants A_PSI, A_PSI_BAR, Z_NORM.
    """
    if tuple(z) == tuple(zp):
        raise ValueError("points must be distinct")
    c_psi_psi = lattice_fermion_correlator(geom, [z, zp])
    c_psi_bar = lattice_fermion_correlator(geom, [z, zp], kinds=["psi", "psibar"])
    a = np.array([
        [2.0 * A_PSI**2 * Z_NORM, -2.0 * A_PSI**2 * Z_NORM],
        [2.0j * A_PSI * A_PSI_BAR * Z_NORM, 2.0j * A_PSI * A_PSI_BAR * Z_NORM],
    ])
    f_up, f_down = np.linalg.solve(a, np.array([c_psi_psi, c_psi_bar]))
    return complex(f_up), complex(f_down)


def reconstruct_correlators(f_up: complex, f_down: complex):
    """Forward map of the parafermion relations; round-trip partner of the solve."""
    c_psi_psi = 2.0 * A_PSI**2 * Z_NORM * (f_up - f_down)
    c_psi_bar = 2.0j * A_PSI * A_PSI_BAR * Z_NORM * (f_up + f_down)
    return c_psi_psi, c_psi_bar


@dataclass(frozen=True)
class ScalingRow:
    M: int
    delta: float
    lattice_value: complex
    continuum_value: complex
    rel_error: float


def scaling_limit_report(widths, beta: float = CRITICAL_BETA, ell: float = 1.0,
                         aspect: int = 3):
    """Lattice two-point function against the continuum strip correlator.

    For each half-width M the mesh is delta = ell / (2M) and the two
    insertions sit on the mid row, M columns apart (physical separation
    ell/2) and as close to the strip center as the half-integer grid
    allows; the continuum value is evaluated at the actual lattice
    positions.  Keeping the physical separation fixed across M makes the
    sequence of relative errors directly comparable, and the scaled
    lattice value Z_NORM * <psi psi> / delta converges to the strip
    correlator.  aspect = N/M controls finite-height contamination.
    """
    rows = []
    chart = cft.vertical_strip_to_h(ell)
    for m_width in widths:
        m_width = int(m_width)
        delta = ell / (2 * m_width)
        n_height = aspect * m_width
        if n_height < 2 * m_width:
            warnings.warn("strip height below twice the width: finite-height "
                          "contamination may dominate the comparison")
        geom = StripGeometry(M=m_width, N=n_height, beta=beta, delta=delta)
        if m_width % 2 == 0:
            k1, k2 = -m_width / 2 + 0.5, m_width / 2 + 0.5
        else:
            k1, k2 = -m_width / 2, m_width / 2
        pts = [(k1, 0), (k2, 0)]
        latt = lattice_fermion_correlator(geom, pts)
        scaled = Z_NORM * latt / delta
        cont = cft.two_point(chart, k1 * delta + 0.0j, k2 * delta + 0.0j)
        rel = abs(scaled - cont) / abs(cont)
        rows.append(ScalingRow(M=m_width, delta=delta, lattice_value=complex(scaled),
                               continuum_value=complex(cont), rel_error=float(rel)))
    return rows
