"""Continuum free-fermion correlators on conformally mapped domains.

A domain D is described by a chart g: D -> H (upper half-plane) carried
around as an analytic jet (g, g', g'', g''').  The boundary two-point
kernel

    K(z, w) = sqrt(g'(z)) sqrt(g'(w)) / (g(z) - g(w))

generates all 2n-point functions as Pfaffians, and the stress tensor is
evaluated through the subtracted point-split limit of -(1/2) psi d(psi),
so every identity checked here is exercised numerically rather than by
symbolic manipulation.

Square roots use the principal branch per point; the test charts are
chosen so g' stays off the negative real axis on all probe sets.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .numerics import central_diff, pfaffian, pfaffian_oracle

WICK_MAX_POINTS = 10


# ---------------------------------------------------------------------------
# conformal charts
# ---------------------------------------------------------------------------

class ConformalChart:
    """An analytic map with its first three derivatives."""

    def jet(self, z):
        """Return (g, g', g'', g''') at z."""
        raise NotImplementedError

    def map(self, z):
        return self.jet(z)[0]


@dataclass(frozen=True)
class Identity(ConformalChart):
    def jet(self, z):
        return (complex(z), 1.0 + 0.0j, 0.0j, 0.0j)


@dataclass(frozen=True)
class Moebius(ConformalChart):
    """g(z) = (a z + b) / (c z + d) with ad - bc != 0."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise ValueError("degenerate moebius map (ad - bc = 0)")

    def jet(self, z):
        det = self.a * self.d - self.b * self.c
        den = self.c * z + self.d
        g = (self.a * z + self.b) / den
        g1 = det / den**2
        g2 = -2.0 * self.c * det / den**3
        g3 = 6.0 * self.c**2 * det / den**4
        return (g, g1, g2, g3)


@dataclass(frozen=True)
class Rotation(ConformalChart):
    """g(z) = e^{i angle} z."""

    angle: float

    def jet(self, z):
        phase = cmath.exp(1j * self.angle)
        return (phase * z, phase, 0.0j, 0.0j)


@dataclass(frozen=True)
class HorizontalStripToH(ConformalChart):
    """g(z) = exp(pi z / height) maps {0 < Im z < height} onto H."""

    height: float

    def jet(self, z):
        k = cmath.pi / self.height
        g = cmath.exp(k * z)
        return (g, k * g, k * k * g, k**3 * g)


@dataclass(frozen=True)
class Composition(ConformalChart):
    """Pipeline of charts, applied first-to-last."""

    parts: tuple

    def jet(self, z):
        g, g1, g2, g3 = complex(z), 1.0 + 0.0j, 0.0j, 0.0j
        for part in self.parts:
            f, f1, f2, f3 = part.jet(g)
            g3 = f3 * g1**3 + 3.0 * f2 * g1 * g2 + f1 * g3
            g2 = f2 * g1**2 + f1 * g2
            g1 = f1 * g1
            g = f
        return (g, g1, g2, g3)


def compose(*charts) -> Composition:
    return Composition(tuple(charts))


def translation(b) -> Moebius:
    return Moebius(1.0, b, 0.0, 1.0)


def vertical_strip_to_h(width: float) -> Composition:
    """Chart from the vertical strip {|Re z| < width/2} onto H.

    Rotates to a horizontal strip before exponentiating; with this choice
    arg g' stays inside (-pi/2, pi/2) on the whole strip, so the principal
    square root in the fermion kernel never jumps.
    """
    a = width / 2.0
    return compose(Rotation(-cmath.pi / 2), translation(1j * a), HorizontalStripToH(2.0 * a))


def schwarzian(chart: ConformalChart, z) -> complex:
    """S_g = g'''/g' - (3/2)(g''/g')^2."""
    _, g1, g2, g3 = chart.jet(z)
    if g1 == 0:
        raise ZeroDivisionError("chart derivative vanishes at the evaluation point")
    return g3 / g1 - 1.5 * (g2 / g1) ** 2


# ---------------------------------------------------------------------------
# half-plane boundary-value-problem solutions
# ---------------------------------------------------------------------------

def f_up_halfplane(z, zp) -> complex:
    """Holomorphic solution with residue -1/(2 pi i) at zp (up variant)."""
    if z == zp:
        raise ValueError("coincident points")
    return (1j / (2.0 * cmath.pi)) * (1.0 / (z - zp) + 1.0 / (z - np.conj(zp)))


def f_down_halfplane(z, zp) -> complex:
    """Down variant: opposite sign on the 1/(z - zp) pole."""
    if z == zp:
        raise ValueError("coincident points")
    return (1j / (2.0 * cmath.pi)) * (-1.0 / (z - zp) + 1.0 / (z - np.conj(zp)))


# ---------------------------------------------------------------------------
# fermion kernel and its analytic derivatives
# ---------------------------------------------------------------------------

_TAYLOR_GAP = 2e-3


def _map_difference(chart, z, w, gz, gw):
    """g(z) - g(w), rewritten around the midpoint when z and w are close.

    The direct difference of two O(1) map values loses ~|delta| digits of
    relative accuracy; the midpoint product form
        g(z) - g(w) = delta * (g'(c) + g'''(c) delta^2 / 24) + O(delta^5)
    keeps the kernel accurate through the point-split stress-tensor limits.
    """
    delta = z - w
    if abs(delta) > _TAYLOR_GAP * max(1.0, abs(z), abs(w)):
        return gz - gw
    c = 0.5 * (z + w)
    _, g1c, _, g3c = chart.jet(c)
    return delta * (g1c + g3c * delta * delta / 24.0)


def two_point(chart: ConformalChart, z, w) -> complex:
    """<psi(z) psi(w)>_D = sqrt(g'(z)) sqrt(g'(w)) / (g(z) - g(w))."""
    if z == w:
        raise ValueError("coincident points")
    return _kernel_with_orders(chart, complex(z), complex(w), 0, 0)


def _kernel_with_orders(chart, z, w, oz, ow):
    """d^oz_z d^ow_w of the two-point kernel, orders 0 or 1, analytic."""
    gz, g1z, g2z, _ = chart.jet(z)
    gw, g1w, g2w, _ = chart.jet(w)
    sz = np.sqrt(complex(g1z))
    sw = np.sqrt(complex(g1w))
    s1z = g2z / (2.0 * sz)
    s1w = g2w / (2.0 * sw)
    p = sz * sw
    d = _map_difference(chart, z, w, gz, gw)
    if oz == 0 and ow == 0:
        return p / d
    if oz == 1 and ow == 0:
        return s1z * sw / d - p * g1z / d**2
    if oz == 0 and ow == 1:
        return sz * s1w / d + p * g1w / d**2
    if oz == 1 and ow == 1:
        return (s1z * s1w / d + s1z * sw * g1w / d**2
                - sz * s1w * g1z / d**2 - 2.0 * p * g1z * g1w / d**3)
    raise ValueError("analytic kernel derivatives support orders 0 and 1 only")


def _kernel_matrix(chart, points, orders=None):
    pts = [complex(p) for p in points]
    n = len(pts)
    if orders is None:
        orders = [0] * n
    m = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            if pts[i] == pts[j]:
                raise ValueError("coincident points")
            m[i, j] = _kernel_with_orders(chart, pts[i], pts[j], orders[i], orders[j])
            m[j, i] = -m[i, j]
    return m


def npoint(chart: ConformalChart, points) -> complex:
    """2n-point fermion correlator as the Pfaffian of the two-point table."""
    if len(points) % 2 == 1:
        raise ValueError("fermion correlators need an even number of points")
    if len(points) == 0:
        return 1.0 + 0.0j
    return complex(pfaffian(_kernel_matrix(chart, points)))


def wick_pairing_oracle(chart: ConformalChart, points) -> complex:
    """Signed sum over perfect pairings of two-point values.

    Independent route to the same number as :func:`npoint`.
    """
    if len(points) > WICK_MAX_POINTS:
        raise ValueError(f"pairing oracle limited to {WICK_MAX_POINTS} points")
    if len(points) % 2 == 1:
        raise ValueError("even number of points required")
    if len(points) == 0:
        return 1.0 + 0.0j
    return complex(pfaffian_oracle(_kernel_matrix(chart, points)))


def _npoint_with_orders(chart, points, orders) -> complex:
    """Correlator with first derivatives applied at selected points.

    Differentiating a Pfaffian whose row/column pair i depends on z_i only
    replaces that pair's entries by kernel derivatives, so this is exact.
    """
    return complex(pfaffian(_kernel_matrix(chart, points, orders)))


# ---------------------------------------------------------------------------
# derivative correlators via finite differences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelatorRequest:
    chart: ConformalChart
    points: tuple
    derivative_orders: tuple

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "derivative_orders", tuple(int(o) for o in self.derivative_orders))
        if len(pts) != len(self.derivative_orders):
            raise ValueError("one derivative order per point required")
        if len(set(pts)) != len(pts):
            raise ValueError("points must be pairwise distinct")
        if any(o < 0 or o > 3 for o in self.derivative_orders):
            raise ValueError("derivative orders must lie in 0..3")


def derivative_correlator(request: CorrelatorRequest) -> complex:
    """Mixed partial of the n-point function, per-point orders <= 3.

    Built by nesting Richardson-extrapolated central differences, one
    coordinate at a time.
    """
    chart = request.chart

    def base(pts):
        return npoint(chart, pts)

    fn = base
    for i, order in enumerate(request.derivative_orders):
        if order == 0:
            continue
        fn = _differentiate_slot(fn, i, order)
    return fn(list(request.points))


def _differentiate_slot(fn, i, order):
    def wrap_once(inner, diff_order):
        def g(pts):
            def along(zi):
                q = list(pts)
                q[i] = zi
                return inner(q)
            return central_diff(along, pts[i], order=diff_order)
        return g

    out = fn
    rem = order
    while rem > 0:
        step = 2 if rem >= 2 else 1
        out = wrap_once(out, step)
        rem -= step
    return out


# ---------------------------------------------------------------------------
# stress-tensor insertions via subtracted point splitting
# ---------------------------------------------------------------------------

DEFAULT_ETA = 1e-4


def t_insertion(chart: ConformalChart, z, points, eta: float | None = None) -> complex:
    """<T(z) psi(p_1)...psi(p_2n)>_D by the point-split limit.

    T(z) = lim_{u->z} -(1/2) [ psi(z) d(psi)(u) - 1/(z-u)^2 ], evaluated at
    finite separation eta with +/- averaging and one Richardson level in
    eta (O(eta^4) truncation).  The flat 1/(z-u)^2 subtraction (not the
    domain kernel) makes T the quasi-primary field whose one-point value
    on D is S_g(z)/24.

    eta defaults to 1e-4, shrunk to a thirtieth of the gap to the nearest
    insertion point: the split must not straddle other operators, while
    too small an eta loses the limit to roundoff in the subtraction.
    """
    pts = [complex(p) for p in points]
    z = complex(z)
    if eta is None:
        eta = DEFAULT_ETA
        if pts:
            eta = min(eta, min(abs(z - p) for p in pts) / 30.0)
    base = npoint(chart, pts)

    def split(u):
        full = _npoint_with_orders(chart, [z, u] + pts, [0, 1] + [0] * len(pts))
        flat = 1.0 / (z - u) ** 2
        return -0.5 * (full - flat * base)

    def averaged(e):
        return 0.5 * (split(z + e) + split(z - e))

    coarse = averaged(eta)
    fine = averaged(eta / 2.0)
    return (4.0 * fine - coarse) / 3.0


def _tt_correlator(chart, z, w, eta: float | None = None) -> complex:
    """<T(z) T(w)>_D via the double point-split limit.

    Both splits use eta ~ |z - w|/40: the subtraction cancels O(1/eta^4)
    against a result of size O(1/|z-w|^4), so roundoff grows like
    (|z-w|/eta)^4 while truncation falls with eta; the balanced choice
    keeps the relative error near 5e-8.
    """
    z = complex(z)
    w = complex(w)
    if eta is None:
        eta = abs(z - w) / 40.0

    def split(u, v):
        p4 = _npoint_with_orders(chart, [z, u, w, v], [0, 1, 0, 1])
        p2_zu = _npoint_with_orders(chart, [z, u], [0, 1])
        p2_wv = _npoint_with_orders(chart, [w, v], [0, 1])
        flat_zu = 1.0 / (z - u) ** 2
        flat_wv = 1.0 / (w - v) ** 2
        return 0.25 * (p4 - flat_zu * p2_wv - flat_wv * p2_zu + flat_zu * flat_wv)

    def averaged(e):
        vals = [split(z + s1 * e, w + s2 * e) for s1 in (1, -1) for s2 in (1, -1)]
        return 0.25 * sum(vals)

    # two Richardson levels: the +/- average leaves even powers only, so
    # this removes eta^2 and eta^4 and leaves O(eta^6)
    b0, b1, b2 = averaged(eta), averaged(eta / 2.0), averaged(eta / 4.0)
    r0 = (4.0 * b1 - b0) / 3.0
    r1 = (4.0 * b2 - b1) / 3.0
    return (16.0 * r1 - r0) / 15.0


# ---------------------------------------------------------------------------
# Ward identities
# ---------------------------------------------------------------------------

def _ward_sum(chart, z, ws, correlator_value):
    """sum_i [ (1/2)/(z-w_i)^2 + (1/(z-w_i)) d_{w_i} ] applied by finite differences."""
    total = 0.0j
    for i, w in enumerate(ws):
        orders = [0] * len(ws)
        orders[i] = 1
        dcorr = derivative_correlator(CorrelatorRequest(chart, tuple(ws), tuple(orders)))
        total += 0.5 / (z - w) ** 2 * correlator_value + dcorr / (z - w)
    return total


def ward_halfplane(z, ws, eta: float = DEFAULT_ETA):
    """Both sides of the half-plane Ward identity; caller compares them.

    lhs inserts T through the point-split limit, rhs applies the sum of
    (1/2)/(z-w_i)^2 + (1/(z-w_i)) d_{w_i} to the plain correlator.
    """
    chart = Identity()
    z = complex(z)
    ws = [complex(w) for w in ws]
    lhs = t_insertion(chart, z, ws, eta=eta)
    rhs = _ward_sum(chart, z, ws, npoint(chart, ws))
    return lhs, rhs


def ward_domain(chart: ConformalChart, z, ws, eta: float = DEFAULT_ETA):
    """Domain Ward identity: transported lhs vs direct rhs.

    lhs: <T(z) prod psi>_D = g'(z)^2 <T(gz) prod psi(gw)>_H prod sqrt(g'(w))
         + S_g(z)/24 <prod psi>_D.
    rhs: the same correlator assembled from domain quantities,

         sum_i [ g'(z)^2 / (2 D_i^2)
                 + (g'(z)^2 / (D_i g'(w_i))) (d_{w_i} - g''(w_i)/(2 g'(w_i))) ]
         <prod psi>_D  +  S_g(z)/24 <prod psi>_D,

    with D_i = g(z) - g(w_i).  The g''/(2g') piece is what the chain rule
    produces when d/du_i is traded for d/dw_i against the sqrt(g') weights.
    """
    z = complex(z)
    ws = [complex(w) for w in ws]
    base_domain = npoint(chart, ws)

    gz, g1z, _, _ = chart.jet(z)
    mapped_ws = [chart.map(w) for w in ws]
    jacobian = 1.0 + 0.0j
    for w in ws:
        jacobian *= np.sqrt(complex(chart.jet(w)[1]))
    lhs = (g1z**2 * t_insertion(Identity(), gz, mapped_ws, eta=eta) * jacobian
           + schwarzian(chart, z) / 24.0 * base_domain)

    rhs = schwarzian(chart, z) / 24.0 * base_domain
    for i, w in enumerate(ws):
        _, g1w, g2w, _ = chart.jet(w)
        delta = gz - chart.map(w)
        orders = [0] * len(ws)
        orders[i] = 1
        dcorr = derivative_correlator(CorrelatorRequest(chart, tuple(ws), tuple(orders)))
        rhs += g1z**2 / (2.0 * delta**2) * base_domain
        rhs += (g1z**2 / (delta * g1w)) * (dcorr - g2w / (2.0 * g1w) * base_domain)
    return lhs, rhs


def ward_expansion_terms(chart: ConformalChart, z, ws):
    """Term-by-term values of the short-distance expansion of the domain Ward sum.

    Reported for inspection only: the expansion mixes orders in (z - w_i)
    and is asymptotic, so no equality is asserted anywhere.
    """
    z = complex(z)
    ws = [complex(w) for w in ws]
    base = npoint(chart, ws)
    rows = []
    for i, w in enumerate(ws):
        _, g1, g2, g3 = chart.jet(w)
        s = schwarzian(chart, w)
        orders = [0] * len(ws)
        orders[i] = 1
        dcorr = derivative_correlator(CorrelatorRequest(chart, tuple(ws), tuple(orders)))
        eps = z - w
        rows.append({
            "point": w,
            "double_pole": 0.5 / eps**2 * base,
            "single_pole": (1.0 / eps) * (0.5 * g2 / g1 * base + dcorr),
            "linear": eps * (s - g3 / (6.0 * g1) + 1.75 * (g2 / g1) ** 2) * dcorr,
            "constant_derivative": 1.5 * g2 / g1 * dcorr,
            "constant_scalar": (0.125 * s + 0.25 * g3 / g1) * base,
        })
    return rows


# ---------------------------------------------------------------------------
# descendants and the null-field equation
# ---------------------------------------------------------------------------

def _lowering_operator(fn, k):
    """Differential operator reducing one level-k descendant at the first slot.

    L_{-k} acts on correlator functions F(z, w_1..w_n) as
    sum_i [ (1/2)(k-1)/(w_i - z)^k - (w_i - z)^{-(k-1)} d_{w_i} ].
    """
    def out(z, ws):
        total = 0.0j
        for i, w in enumerate(ws):
            def along(wi, idx=i):
                q = list(ws)
                q[idx] = wi
                return fn(z, q)
            dterm = central_diff(lambda wi: along(wi), ws[i], order=1)
            total += 0.5 * (k - 1) / (w - z) ** k * fn(z, ws) - dterm / (w - z) ** (k - 1)
        return total
    return out


def descendant_correlator(ks, z, ws) -> complex:
    """<(L_{-k_n}..L_{-k_1} psi)(z) prod psi(w_i)>_H by successive reduction.

    ks lists the string outermost-first, i.e. ks = [k_n, ..., k_1]; the
    innermost operator is applied to the primary correlator first.
    """
    z = complex(z)
    ws = [complex(w) for w in ws]

    def base(zz, wws):
        return npoint(Identity(), [zz] + list(wws))

    fn = base
    for k in reversed([int(k) for k in ks]):
        if k < 1:
            raise ValueError("descendant levels must be positive")
        fn = _lowering_operator(fn, k)
    return fn(z, ws)


def null_field_residual(z, ws) -> complex:
    """(3/4) d_z^2 F - sum_i [ (1/2)/(z-w_i)^2 + (1/(z-w_i)) d_{w_i} ] F on H.

    F = <psi(z) prod psi(w_i)>_H; vanishes because the fermion is
    degenerate at level two.
    """
    z = complex(z)
    ws = [complex(w) for w in ws]
    pts = [z] + ws

    def in_z(zz):
        return npoint(Identity(), [zz] + ws)

    d2 = central_diff(in_z, z, order=2)
    total = 0.75 * d2
    fval = npoint(Identity(), pts)
    for i, w in enumerate(ws):
        orders = [0] * len(pts)
        orders[i + 1] = 1
        dcorr = derivative_correlator(CorrelatorRequest(Identity(), tuple(pts), tuple(orders)))
        total -= 0.5 / (z - w) ** 2 * fval + dcorr / (z - w)
    return total


# ---------------------------------------------------------------------------
# OPE singular-part checks
# ---------------------------------------------------------------------------

@dataclass
class OpeReport:
    pair: str
    chart_kind: str
    eps: tuple
    remainders: tuple
    singular_coefficients: dict
    expected_coefficients: dict
    fitted_regular: complex | None
    reference_regular: complex | None
    max_deviation: float
    bounded: bool
    notes: list = field(default_factory=list)


_DEFAULT_EPS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


def _fit_leading(eps_vals, scaled_vals, powers):
    """Least-squares fit of scaled_vals(eps) on the monomials eps**p."""
    a = np.array([[e**p for p in powers] for e in eps_vals], dtype=complex)
    coef, *_ = np.linalg.lstsq(a, np.array(scaled_vals, dtype=complex), rcond=None)
    return coef


def ope_singularity_check(chart: ConformalChart, pair: str,
                          base: complex = 0.4 + 1.1j,
                          spectator: complex = -0.9 + 2.3j,
                          direction: complex = None,
                          eps: tuple = _DEFAULT_EPS) -> OpeReport:
    """Compare a product correlator against its singular template as points merge.

    pair is one of psi_psi, T_psi, T_T.  The singular coefficients are the
    same on every chart; the remainder must stay bounded as the separation
    shrinks.  For T_psi the fitted constant term is reported (together
    with a (3/4)<d^2 psi ...> reference) but never asserted.
    """
    if direction is None:
        direction = cmath.exp(0.7j)
    kind = type(chart).__name__
    eps_sorted = tuple(sorted(eps, reverse=True))
    seps = [e * direction for e in eps_sorted]
    notes = []

    if pair == "psi_psi":
        values = [two_point(chart, base + s, base) for s in seps]
        remainders = [v - 1.0 / s for v, s in zip(values, seps)]
        coeff = values[-1] * seps[-1]
        singular = {"pole1": coeff}
        expected = {"pole1": 1.0 + 0.0j}
        max_dev = abs(coeff - 1.0)
        fitted_reg = reference_reg = None

    elif pair == "T_psi":
        pts = [base, spectator]
        base_corr = npoint(chart, pts)
        dpsi_corr = _npoint_with_orders(chart, pts, [1, 0])
        values = [t_insertion(chart, base + s, pts) for s in seps]
        # C(eps) eps^2 = (1/2) F0 + F1 eps + O(eps^2); fit out the subleading part
        scaled = [v * s**2 for v, s in zip(values, seps)]
        coef = _fit_leading(seps, scaled, (0, 1, 2, 3))
        pole2 = complex(coef[0]) / base_corr
        remainders = [v - 0.5 / s**2 * base_corr - dpsi_corr / s
                      for v, s in zip(values, seps)]
        reg_coef = _fit_leading(seps, remainders, (0, 1))
        fitted_reg = complex(reg_coef[0])

        def dpsi_at(w):
            return _npoint_with_orders(chart, [w, spectator], [1, 0])

        reference_reg = 0.75 * central_diff(dpsi_at, base, order=1)
        notes.append("constant term reported, not asserted")
        singular = {"pole2": pole2}
        expected = {"pole2": 0.5 + 0.0j}
        max_dev = abs(pole2 - 0.5)

    elif pair == "T_T":
        t_w = t_insertion(chart, base, [])
        values = [_tt_correlator(chart, base + s, base) for s in seps]
        scaled = [v * s**4 for v, s in zip(values, seps)]
        coef = _fit_leading(seps, scaled, (0, 2, 3, 4))
        leading = complex(coef[0])
        # coefficient of 1/(z-w), after removing the fitted 4th and known 2nd
        # pole; fitted on the wide separations only, where the point-split
        # noise (~5e-8/eps^3 after the eps^4 division) has not yet blown up
        reduced = [(v - leading / s**4 - 2.0 * t_w / s**2) * s
                   for v, s in zip(values, seps)]
        nwide = max(2, len(seps) // 2 + 1)
        red_coef = _fit_leading(seps[:nwide], reduced[:nwide], (0, 1))
        pole1_coeff = complex(red_coef[0])
        remainders = [v - leading / s**4 - 2.0 * t_w / s**2 - pole1_coeff / s
                      for v, s in zip(values, seps)]

        def t_at(w):
            return t_insertion(chart, w, [])

        reference_reg = None
        fitted_reg = pole1_coeff
        dT = central_diff(t_at, base, order=1)
        singular = {"pole4": leading, "pole2": 2.0 * t_w, "pole1": pole1_coeff}
        expected = {"pole4": 0.25 + 0.0j, "pole2": 2.0 * t_w, "pole1": dT}
        max_dev = abs(leading - 0.25)
        notes.append("pole1 coefficient compared against finite-difference dT for information")

    else:
        raise ValueError("pair must be one of psi_psi, T_psi, T_T")

    # The point-split T T product cancels O(1/eta^4) terms, so its value
    # carries ~1e-8 relative noise; below noise_floor the remainder is
    # measurement-limited, not a sign of an unremoved singular term.
    if pair == "T_T":
        floors = [1e-6 * 0.25 / abs(s) ** 4 for s in seps]
    else:
        floors = [0.0] * len(seps)
    rem_abs = [abs(r) for r in remainders]
    half = max(1, len(rem_abs) // 2)
    ceiling = 2.0 * max(rem_abs[:half]) + 1e-6
    bounded = all(r <= max(ceiling, fl) for r, fl in zip(rem_abs, floors))
    return OpeReport(
        pair=pair,
        chart_kind=kind,
        eps=eps_sorted,
        remainders=tuple(remainders),
        singular_coefficients=singular,
        expected_coefficients=expected,
        fitted_regular=fitted_reg,
        reference_regular=reference_reg,
        max_deviation=float(max_dev),
        bounded=bool(bounded),
        notes=notes,
    )
