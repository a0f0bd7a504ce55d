"""Clifford vertex operator algebra on a level-truncated fermion Fock space.

States are exact-rational linear combinations of ordered monomials
psi_{-k_n-1/2} ... psi_{-k_1-1/2} |0> with k_n > ... > k_1 >= 0; modes are
half-odd integers stored as twice their value, so -1 means psi_{-1/2}.
All structure constants are dyadic rationals and every identity checked
in this module holds with zero tolerance.

Truncation at level L is tracked explicitly: whenever a creation operator
would push a term past the cap the result is marked clipped, and callers
only assert on clip-free values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "ModeIndex", "FockVector", "TruncationConfig", "TruncationOverflow",
    "vacuum", "single_mode_state", "psi_state", "conformal_vector",
    "basis_states", "distinct_part_count", "apply_psi_mode",
    "apply_virasoro_mode", "commutator_tables", "singular_vector",
    "vertex_mode", "chi_correlator", "state_in_descendant_span",
]


class TruncationOverflow(RuntimeError):
    """A creation operator pushed a state past the level cap."""


@dataclass(frozen=True)
class ModeIndex:
    """Half-odd-integer fermion mode n stored as twice_value = 2n (odd)."""

    twice_value: int

    def __post_init__(self):
        if self.twice_value % 2 == 0:
            raise ValueError("fermion modes are half-odd integers")

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice_value, 2)


def _twice(n) -> int:
    if isinstance(n, ModeIndex):
        return n.twice_value
    f = Fraction(n)
    t = f * 2
    if t.denominator != 1 or t.numerator % 2 == 0:
        raise ValueError(f"{n} is not a half-odd integer mode")
    return t.numerator


def _monomial_level(mono) -> Fraction:
    return Fraction(sum(-t for t in mono), 2)


def _format_mode(t: int) -> str:
    return f"psi_{{{t}/2}}"


class FockVector:
    """Finite rational combination of ordered fermion monomials on the vacuum.

    terms maps tuples of twice-modes (strictly increasing, all negative,
    deepest mode first) to nonzero Fractions.  clipped records whether any
    truncated contribution was dropped on the way to this value.
    """

    __slots__ = ("terms", "clipped")

    def __init__(self, terms=None, clipped: bool = False):
        clean = {}
        for mono, coeff in (terms or {}).items():
            c = Fraction(coeff)
            if c == 0:
                continue
            mono = tuple(int(t) for t in mono)
            if any(t >= 0 or t % 2 == 0 for t in mono):
                raise ValueError("monomial modes must be negative half-odd integers")
            if list(mono) != sorted(mono) or len(set(mono)) != len(mono):
                raise ValueError("monomial modes must be strictly increasing")
            clean[mono] = c
        self.terms = clean
        self.clipped = bool(clipped)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def level(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        return max(_monomial_level(m) for m in self.terms)

    def fermion_parity(self) -> int:
        parities = {len(m) % 2 for m in self.terms}
        if len(parities) > 1:
            raise ValueError("state mixes fermion parities")
        return parities.pop() if parities else 0

    def coefficient(self, mono) -> Fraction:
        return self.terms.get(tuple(int(t) for t in mono), Fraction(0))

    def __add__(self, other):
        out = dict(self.terms)
        for mono, c in other.terms.items():
            s = out.get(mono, Fraction(0)) + c
            if s == 0:
                out.pop(mono, None)
            else:
                out[mono] = s
        return FockVector(out, clipped=self.clipped or other.clipped)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, factor) -> "FockVector":
        f = Fraction(factor)
        if f == 0:
            return FockVector({}, clipped=self.clipped)
        return FockVector({m: c * f for m, c in self.terms.items()}, clipped=self.clipped)

    def __eq__(self, other):
        return isinstance(other, FockVector) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono in sorted(self.terms, key=lambda m: (_monomial_level(m), m)):
            c = self.terms[mono]
            body = "".join(_format_mode(t) for t in mono) + "|0>"
            parts.append(f"({c})*{body}" if mono else f"({c})*|0>")
        return " + ".join(parts)


def vacuum() -> FockVector:
    return FockVector({(): Fraction(1)})


def single_mode_state(n) -> FockVector:
    t = _twice(n)
    if t >= 0:
        raise ValueError("single-mode states need a creation mode")
    return FockVector({(t,): Fraction(1)})


def psi_state() -> FockVector:
    """psi_{-1/2}|0>, the weight-1/2 generator."""
    return single_mode_state(Fraction(-1, 2))


def conformal_vector() -> FockVector:
    """nu = (1/2) psi_{-3/2} psi_{-1/2} |0>, the weight-2 conformal vector."""
    return FockVector({(-3, -1): Fraction(1, 2)})


@dataclass(frozen=True)
class TruncationConfig:
    """Level cap and the constant term of the zero mode.

    a0 is the additive constant of L_0; the default 0 keeps the Virasoro
    relations exact, a0 = 1/16 is kept as a diagnostic option.
    """

    level: Fraction
    a0: Fraction = Fraction(0)

    def __init__(self, level, a0=Fraction(0)):
        level = Fraction(level)
        if level < Fraction(5, 2):
            raise ValueError("truncation level must be at least 5/2")
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "a0", Fraction(a0))


def basis_states(level_cap) -> list:
    """All monomials (strictly decreasing k's) with total level <= level_cap."""
    cap2 = int(Fraction(level_cap) * 2)
    out = []

    def rec(prefix, min_mag, budget2):
        out.append(tuple(sorted(prefix)))
        mag = min_mag
        while mag <= budget2:
            rec(prefix + [-mag], mag + 2, budget2 - mag)
            mag += 2

    rec([], 1, cap2)
    return sorted(set(out), key=lambda m: (_monomial_level(m), m))


def distinct_part_count(level_cap) -> dict:
    """Degeneracy per level from the generating function prod_k (1 + q^{k+1/2}).

    Independent of the recursive enumeration in basis_states.
    """
    cap2 = int(Fraction(level_cap) * 2)
    coeffs = {0: 1}
    mag = 1
    while mag <= cap2:
        new = dict(coeffs)
        for deg, c in coeffs.items():
            if deg + mag <= cap2:
                new[deg + mag] = new.get(deg + mag, 0) + c
        coeffs = new
        mag += 2
    return {Fraction(d, 2): c for d, c in sorted(coeffs.items())}


def _create(t: int, mono, sign: Fraction):
    """Left-multiply by creation mode t; None if excluded."""
    if t in mono:
        return None
    passed = sum(1 for m in mono if m < t)
    new = tuple(sorted(mono + (t,)))
    return new, sign * (-1) ** passed


def _annihilate(t: int, mono, sign: Fraction):
    """Left-multiply by annihilation mode t; contraction against -t or zero."""
    target = -t
    if target not in mono:
        return None
    j = mono.index(target)
    new = mono[:j] + mono[j + 1:]
    return new, sign * (-1) ** j


def apply_psi_mode(n, v: FockVector, cfg: TruncationConfig | None = None,
                   on_clip: str = "raise") -> FockVector:
    """Left action of the fermion mode psi_n on v.

    Creation inserts the mode with the fermionic reordering sign and kills
    repeated modes; annihilation contracts through {psi_n, psi_m} =
    delta_{n+m,0}.  With a truncation config, creations past the cap
    either raise TruncationOverflow (on_clip="raise") or are dropped with
    the clipped flag set (on_clip="flag").
    """
    t = _twice(n)
    out = {}
    clipped = v.clipped
    for mono, coeff in v.terms.items():
        if t < 0:
            if cfg is not None and _monomial_level(mono) + Fraction(-t, 2) > cfg.level:
                if on_clip == "raise":
                    raise TruncationOverflow(
                        f"creation psi_{{{t}/2}} exceeds level cap {cfg.level}")
                clipped = True
                continue
            res = _create(t, mono, coeff)
        else:
            res = _annihilate(t, mono, coeff)
        if res is None:
            continue
        new, c = res
        s = out.get(new, Fraction(0)) + c
        if s == 0:
            out.pop(new, None)
        else:
            out[new] = s
    return FockVector(out, clipped=clipped)


def apply_virasoro_mode(m: int, v: FockVector, cfg: TruncationConfig,
                        on_clip: str = "flag") -> FockVector:
    """Quadratic-mode realization of L_m with the configured constant term.

    L_m = -(1/2) sum_k (k + m/2) :psi_{m+k} psi_{-k}: + a0 delta_{m,0},
    normal ordering placing the smaller mode index first with a sign.
    The sum over k is finite on any truncated state.
    """
    m = int(m)
    if v.is_zero():
        return FockVector({}, clipped=v.clipped)
    cap2 = int(cfg.level * 2)
    window = cap2 + 2 * abs(m) + 4
    start = -window if window % 2 == 1 else -window + 1
    total = FockVector({}, clipped=v.clipped)
    for t in range(start, window + 1, 2):
        k = Fraction(t, 2)
        coeff = -(k + Fraction(m, 2)) / 2
        if coeff == 0:
            continue
        t_first, t_second = 2 * m + t, -t
        if t_first > t_second:
            t_first, t_second = t_second, t_first
            coeff = -coeff
        inner = apply_psi_mode(Fraction(t_second, 2), v, cfg, on_clip=on_clip)
        if inner.is_zero():
            total = FockVector(total.terms, clipped=total.clipped or inner.clipped)
            continue
        outer = apply_psi_mode(Fraction(t_first, 2), inner, cfg, on_clip=on_clip)
        total = total + outer.scale(coeff)
    if m == 0 and cfg.a0 != 0:
        total = total + v.scale(cfg.a0)
    return total


def apply_virasoro_word(ks, v: FockVector, cfg: TruncationConfig,
                        on_clip: str = "flag") -> FockVector:
    """L_{-k_n} ... L_{-k_1} v for ks = [k_n, ..., k_1] (rightmost first)."""
    out = v
    for k in reversed(list(ks)):
        out = apply_virasoro_mode(-int(k), out, cfg, on_clip=on_clip)
    return out


@dataclass
class CommutatorEntry:
    m: int
    n: int | Fraction
    kind: str          # "L_psi" or "L_L"
    max_deviation: Fraction
    checked: int       # basis states that were truncation-safe


@dataclass
class CommutatorReport:
    level: Fraction
    a0: Fraction
    entries: list
    max_deviation: Fraction


def commutator_tables(level_cap, cfg: TruncationConfig | None = None) -> CommutatorReport:
    """Deviation tables for the mixed and Virasoro commutation relations.

    Checks [L_m, psi_n] + (m/2 + n) psi_{m+n} and
    [L_m, L_n] - (m - n) L_{m+n} - (1/24) m (m^2 - 1) delta_{m+n,0}
    on every basis state where no intermediate result is clipped.
    Deviations are exact rationals; with a0 = 0 they are all zero.
    """
    level_cap = Fraction(level_cap)
    if cfg is None:
        cfg = TruncationConfig(level_cap)
    basis = [FockVector({mono: Fraction(1)}) for mono in basis_states(level_cap)]
    bound = int(level_cap - Fraction(1, 2))
    entries = []
    worst = Fraction(0)

    def max_coeff(x: FockVector) -> Fraction:
        return max((abs(c) for c in x.terms.values()), default=Fraction(0))

    for m in range(-bound, bound + 1):
        for tn in range(-2 * bound - 1, 2 * bound + 2, 2):
            n = Fraction(tn, 2)
            dev = Fraction(0)
            checked = 0
            for v in basis:
                a = apply_virasoro_mode(m, apply_psi_mode(n, v, cfg, "flag"), cfg, "flag")
                b = apply_psi_mode(n, apply_virasoro_mode(m, v, cfg, "flag"), cfg, "flag")
                rhs = apply_psi_mode(n + m, v, cfg, "flag").scale(-(Fraction(m, 2) + n))
                resid = a - b - rhs
                if resid.clipped:
                    continue
                checked += 1
                dev = max(dev, max_coeff(resid))
            entries.append(CommutatorEntry(m, n, "L_psi", dev, checked))
            worst = max(worst, dev)

    for m in range(-bound, bound + 1):
        for n in range(-bound, bound + 1):
            dev = Fraction(0)
            checked = 0
            central = Fraction(m * (m * m - 1), 24) if m + n == 0 else Fraction(0)
            for v in basis:
                a = apply_virasoro_mode(m, apply_virasoro_mode(n, v, cfg, "flag"), cfg, "flag")
                b = apply_virasoro_mode(n, apply_virasoro_mode(m, v, cfg, "flag"), cfg, "flag")
                rhs = apply_virasoro_mode(m + n, v, cfg, "flag").scale(m - n)
                resid = a - b - rhs - v.scale(central)
                if resid.clipped:
                    continue
                checked += 1
                dev = max(dev, max_coeff(resid))
            entries.append(CommutatorEntry(m, n, "L_L", dev, checked))
            worst = max(worst, dev)

    return CommutatorReport(level=level_cap, a0=cfg.a0, entries=entries,
                            max_deviation=worst)


def singular_vector(sign: int, cfg: TruncationConfig) -> FockVector:
    """(L_{-2} + sign (3/4) L_{-1}^2) psi_{-1/2}|0>, exact.

    sign = -1 gives the vanishing level-two descendant of the fermion;
    sign = +1 gives 3 psi_{-5/2}|0>.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    psi = psi_state()
    l2 = apply_virasoro_mode(-2, psi, cfg, on_clip="raise")
    l11 = apply_virasoro_mode(-1, apply_virasoro_mode(-1, psi, cfg, on_clip="raise"),
                              cfg, on_clip="raise")
    return l2 + l11.scale(Fraction(3 * sign, 4))


# ---------------------------------------------------------------------------
# vertex operators by reconstruction
# ---------------------------------------------------------------------------

def _field_mode_coeff(i: int, k: int) -> Fraction:
    """Coefficient of psi_{i-k+1/2} in the i-th mode of d^k psi / k!."""
    num = Fraction(1)
    for t in range(k):
        num *= (i - k + 1 + t)
    fact = 1
    for t in range(1, k + 1):
        fact *= t
    return Fraction((-1) ** k) * num / fact


def vertex_mode(u: FockVector, j: int, v: FockVector, cfg: TruncationConfig,
                on_clip: str = "flag") -> FockVector:
    """u_(j) v: the j-th mode of the reconstructed field Y(u, z) acting on v.

    Y of psi_{-k-1/2} u' is the normal-ordered product of d^k psi / k!
    with Y(u', z); the normal ordering splits the derivative field into
    creation and annihilation halves, with the fermionic sign for moving
    the annihilation half through Y(u', z).  The generator case reduces
    to u_(j) = psi_{j+1/2}.
    """
    total = FockVector({}, clipped=u.clipped or v.clipped)
    for mono, coeff in u.terms.items():
        total = total + _vertex_mode_monomial(mono, int(j), v, cfg, on_clip).scale(coeff)
    return total


def _vertex_mode_monomial(mono, j, v, cfg, on_clip) -> FockVector:
    if not mono:
        return v if j == -1 else FockVector({})
    t_head = mono[0]
    k = (-t_head - 1) // 2
    rest = mono[1:]
    wt_rest = _monomial_level(rest)
    sign_rest = (-1) ** len(rest)
    out = FockVector({})

    lv = v.level
    # a_(i) shifts level by (k + 1/2) - i - 1; keep results within [0, cap]
    i_min = int((Fraction(2 * k + 1, 2) - 1 - cfg.level))
    i_max_creation = k - 1
    # creation half: a_(i) with mode i - k + 1/2 < 0, i.e. i <= k - 1
    for i in range(i_min - 1, i_max_creation + 1):
        c = _field_mode_coeff(i, k)
        if c == 0:
            continue
        jp = j - i - 1
        inner = _rest_mode(rest, jp, v, cfg, on_clip)
        if inner.is_zero() and not inner.clipped:
            continue
        term = apply_psi_mode(Fraction(2 * (i - k) + 1, 2), inner, cfg, on_clip)
        out = out + term.scale(c)
    # annihilation half, moved through Y(u', z) with the parity sign
    i_top = k + int(2 * lv) + 1
    for i in range(k, i_top + 1):
        c = _field_mode_coeff(i, k)
        if c == 0:
            continue
        hit = apply_psi_mode(Fraction(2 * (i - k) + 1, 2), v, cfg, on_clip)
        if hit.is_zero() and not hit.clipped:
            continue
        jp = j - i - 1
        term = _rest_mode(rest, jp, hit, cfg, on_clip)
        out = out + term.scale(c * sign_rest)
    return out


def _rest_mode(rest, jp, w, cfg, on_clip) -> FockVector:
    if not rest:
        return w if jp == -1 else FockVector({}, clipped=w.clipped)
    return _vertex_mode_monomial(rest, jp, w, cfg, on_clip)


# ---------------------------------------------------------------------------
# the map from tensors of states to correlator values
# ---------------------------------------------------------------------------

def _partitions(total: int, max_part: int | None = None):
    """Partitions of total into parts >= 1, non-increasing."""
    if max_part is None:
        max_part = total
    if total == 0:
        yield ()
        return
    for first in range(min(total, max_part), 0, -1):
        for tail in _partitions(total - first, first):
            yield (first,) + tail


def _rational_solve(columns, rhs_vec):
    """Solve sum_c x_c * columns[c] = rhs_vec over the rationals.

    columns and rhs_vec are dicts monomial -> Fraction.  Returns the
    coefficient list or None if the system is inconsistent.
    """
    keys = sorted(set().union(rhs_vec.keys(), *[c.keys() for c in columns]))
    a = [[col.get(k, Fraction(0)) for col in columns] for k in keys]
    b = [rhs_vec.get(k, Fraction(0)) for k in keys]
    ncols = len(columns)
    row = 0
    where = [-1] * ncols
    for col in range(ncols):
        pivot = next((r for r in range(row, len(a)) if a[r][col] != 0), None)
        if pivot is None:
            continue
        a[row], a[pivot] = a[pivot], a[row]
        b[row], b[pivot] = b[pivot], b[row]
        inv = 1 / a[row][col]
        a[row] = [x * inv for x in a[row]]
        b[row] *= inv
        for r in range(len(a)):
            if r != row and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[row])]
                b[r] -= factor * b[row]
        where[col] = row
        row += 1
    x = [Fraction(0)] * ncols
    for col in range(ncols):
        if where[col] >= 0:
            x[col] = b[where[col]]
    for r in range(len(a)):
        if all(v == 0 for v in a[r]) and b[r] != 0:
            return None
    return x


def state_in_descendant_span(state: FockVector, cfg: TruncationConfig):
    """Expand a state over Virasoro words applied to psi_{-1/2}|0>.

    Returns a list of (word, coefficient) with word a non-increasing tuple
    of positive levels, or raises ValueError when the state lies outside
    the descendant span of the fermion (vacuum-sector states like the
    conformal vector are rejected, matching the scope of the reduction
    rules).
    """
    if state.is_zero():
        return []
    out = []
    by_level = {}
    for mono, c in state.terms.items():
        by_level.setdefault(_monomial_level(mono), {})[mono] = c
    for level, comp in sorted(by_level.items()):
        gap = level - Fraction(1, 2)
        if gap < 0 or gap.denominator != 1:
            raise ValueError("state outside the Virasoro-descendant span of the fermion")
        words = list(_partitions(int(gap)))
        columns = []
        for word in words:
            vec = apply_virasoro_word(word, psi_state(), cfg, on_clip="raise")
            columns.append(vec.terms)
        coeffs = _rational_solve(columns, comp)
        if coeffs is None:
            raise ValueError("state outside the Virasoro-descendant span of the fermion")
        out.extend([(w, c) for w, c in zip(words, coeffs) if c != 0])
    return out


def chi_correlator(states, points, chart=None, cfg: TruncationConfig | None = None):
    """Correlator value assigned to a tensor of Fock states at given points.

    All-fermion tensors return the Pfaffian of the domain two-point
    kernel; an L_{-1} acting in slot i becomes d/dz_i; deeper descendants
    reduce through the lowering differential operators before the
    Pfaffian is evaluated (upper half-plane chart only).  Odd overall
    fermion parity returns 0 after a warning.
    """
    import warnings as _warnings

    from . import cft as _cft

    if cfg is None:
        cfg = TruncationConfig(max(Fraction(5, 2), max((s.level for s in states),
                                                       default=Fraction(5, 2)) + 2))
    if chart is None:
        chart = _cft.Identity()
    if len(states) != len(points):
        raise ValueError("one point per state required")
    pts = [complex(p) for p in points]

    parity = sum(s.fermion_parity() for s in states) % 2
    if parity:
        _warnings.warn("odd fermion parity: correlator vanishes identically")
        return 0.0 + 0.0j

    expansions = [state_in_descendant_span(s, cfg) for s in states]
    identity_chart = isinstance(chart, _cft.Identity)

    total = 0.0 + 0.0j
    from itertools import product as _product
    for combo in _product(*expansions):
        coeff = 1.0
        for word, c in combo:
            coeff *= float(c)
        general_slots = [i for i, (word, _) in enumerate(combo)
                         if any(k >= 2 for k in word)]
        if len(general_slots) > 1:
            raise ValueError("at most one slot may carry levels >= 2 descendants")
        if general_slots and not identity_chart:
            raise ValueError("deep descendant reduction is defined on the "
                             "half-plane chart only")

        def fn(coords):
            return _cft.npoint(chart, coords)

        value_fn = fn
        # pure-derivative slots: L_{-1}^p acts as d^p/dz_i^p on any chart
        for i, (word, _) in enumerate(combo):
            if i in general_slots:
                continue
            for _ in word:
                value_fn = _partial_in_slot(value_fn, i)
        if general_slots:
            slot = general_slots[0]
            word = combo[slot][0]
            value_fn = _lowering_word_in_slot(value_fn, slot, word)
        total += coeff * value_fn(pts)
    return total


def _partial_in_slot(fn, i):
    from .numerics import central_diff

    def out(coords):
        def along(z):
            q = list(coords)
            q[i] = z
            return fn(q)
        return central_diff(along, coords[i], order=1)
    return out


def _lowering_word_in_slot(fn, slot, word):
    """Apply the lowering operators for `word` at `slot`, innermost first."""
    from .numerics import central_diff

    out = fn
    for k in reversed(word):
        out = _single_lowering(out, slot, int(k))
    return out


def _single_lowering(fn, slot, k):
    from .numerics import central_diff

    def out(coords):
        z = coords[slot]
        total = 0.0 + 0.0j
        for i, w in enumerate(coords):
            if i == slot:
                continue
            def along(wi, idx=i):
                q = list(coords)
                q[idx] = wi
                return fn(q)
            dterm = central_diff(along, coords[i], order=1)
            total += 0.5 * (k - 1) / (w - z) ** k * fn(coords) \
                - dterm / (w - z) ** (k - 1)
        return total
    return out
