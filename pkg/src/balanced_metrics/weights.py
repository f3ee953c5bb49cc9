"""Chow weights and Donaldson-Futaki invariants in exact rational arithmetic.

A toric test configuration over the product polytope ``P = prod [0, l_j]``
is given by a convex piecewise-linear function ``g = max_p (s_p . x + c_p)``
on ``P``.  At level ``m`` the monomial with exponent ``u in mP`` has weight
``sign * m * g(u / m) = sign * max_p (s_p . u + m c_p)``; the dimension and
total weight tables are fitted by exact (quasi-)polynomial interpolation,
and the Chow weight and DF invariant are read off the leading coefficients.
No floating point is used anywhere in this module.
"""

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError


def _q(x):
    if isinstance(x, float):
        raise ValidationError(f"floats are not allowed here: {x!r}",
                              invariant="rational")
    return Fraction(x)


def frac_str(x):
    """``"p/q"`` with an explicit denominator, e.g. ``"0/1"``."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class ToricConfigData:
    """Product polytope with a convex PL function given by affine pieces.

    Each piece is ``(slope_1, ..., slope_n, intercept)``.
    """

    lengths: tuple
    pieces: tuple
    weight_sign: int = -1

    def __post_init__(self):
        lengths = tuple(_q(x) for x in self.lengths)
        if not lengths or any(x <= 0 for x in lengths):
            raise ValidationError("polytope lengths must be positive",
                                  invariant="positive-lengths")
        n = len(lengths)
        pieces = tuple(tuple(_q(c) for c in p) for p in self.pieces)
        if not pieces or any(len(p) != n + 1 for p in pieces):
            raise ValidationError(f"each piece needs {n} slopes and an intercept",
                                  invariant="piece-shape")
        if self.weight_sign not in (1, -1):
            raise ValidationError("weight_sign must be +1 or -1",
                                  invariant="weight-sign")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "pieces", pieces)

    @property
    def n(self):
        return len(self.lengths)

    def g(self, x):
        return max(sum(s * xi for s, xi in zip(p[:-1], x)) + p[-1]
                   for p in self.pieces)

    def level_weight(self, u, m):
        """``m g(u / m)`` for a lattice point ``u`` of ``mP``."""
        return max(sum(s * ui for s, ui in zip(p[:-1], u)) + m * p[-1]
                   for p in self.pieces)

    def scaled(self, c):
        c = _q(c)
        if c <= 0:
            raise ValidationError("scale must be positive", invariant="scale")
        return ToricConfigData(self.lengths,
                               tuple(tuple(c * x for x in p) for p in self.pieces),
                               self.weight_sign)

    @classmethod
    def from_breakpoints(cls, length, points, weight_sign=-1):
        """1-D configuration from values ``[(x_0, g_0), ...]`` at breakpoints.

        ``g`` is the linear interpolation; it must be convex.
        """
        pts = sorted((_q(x), _q(y)) for x, y in points)
        length = _q(length)
        if len(pts) < 2 or pts[0][0] != 0 or pts[-1][0] != length:
            raise ValidationError("breakpoints must span [0, length]",
                                  invariant="breakpoints")
        slopes = [(y1 - y0) / (x1 - x0)
                  for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
        if any(b < a for a, b in zip(slopes, slopes[1:])):
            raise ValidationError("piecewise-linear g is not convex",
                                  invariant="convex-g")
        pieces = tuple((s, y0 - s * x0) for s, (x0, y0) in zip(slopes, pts))
        return cls((length,), pieces, weight_sign)

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            return cls(tuple(Fraction(str(x)) for x in doc["lengths"]),
                       tuple(tuple(Fraction(str(c)) for c in p) for p in doc["pieces"]),
                       int(doc.get("sign", -1)))
        except KeyError as exc:
            raise ValidationError(f"missing field {exc}", invariant="schema",
                                  path=f"/{exc.args[0]}") from exc

    def to_json(self):
        return {"lengths": [frac_str(x) for x in self.lengths],
                "pieces": [[frac_str(c) for c in p] for p in self.pieces],
                "sign": self.weight_sign}


@dataclass(frozen=True)
class WeightTable:
    """``m -> (N_m, w_m)`` for ``m = 1..m_max``."""

    entries: dict
    n: int

    def __post_init__(self):
        ms = sorted(self.entries)
        if ms != list(range(1, len(ms) + 1)):
            raise ValidationError("table must cover m = 1..m_max",
                                  invariant="contiguous")
        if len(ms) < self.n + 3:
            raise ValidationError(f"need at least n + 3 = {self.n + 3} levels",
                                  invariant="range-length")
        dims = [self.entries[m][0] for m in ms]
        if any(b <= a for a, b in zip(dims, dims[1:])) or dims[0] <= 0:
            raise ValidationError("N_m must be positive and strictly increasing",
                                  invariant="increasing-dims")

    @property
    def m_max(self):
        return len(self.entries)

    def dim(self, m):
        return self.entries[m][0]

    def weight(self, m):
        return self.entries[m][1]


@dataclass(frozen=True)
class ExpansionCoefficients:
    a0: Fraction
    a1: Fraction
    b0: Fraction
    b1: Fraction
    fit_period: int = 1

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValidationError("a0 must be positive", invariant="volume")


def lattice_points(cfg, m):
    ranges = [range(math.floor(m * x) + 1) for x in cfg.lengths]
    return itertools.product(*ranges)


def toric_weight_table(cfg, m_max):
    if m_max < cfg.n + 3:
        raise ValidationError(f"m_max must be >= n + 3 = {cfg.n + 3}",
                              invariant="range-length")
    entries = {}
    for m in range(1, m_max + 1):
        count = 0
        total = Fraction(0)
        for u in lattice_points(cfg, m):
            count += 1
            total += cfg.level_weight(u, m)
        entries[m] = (count, cfg.weight_sign * total)
    return WeightTable(entries, cfg.n)


def _interpolate(points, degree):
    """Exact coefficients (lowest first) of the degree-``degree`` interpolant.

    Uses the first ``degree + 1`` points and returns ``None`` if any other
    point disagrees.
    """
    base = points[:degree + 1]
    if len(base) < degree + 1:
        raise ValidationError("not enough levels to fit the expansion",
                              invariant="range-length")
    coeffs = [Fraction(0)] * (degree + 1)
    for j, (xj, yj) in enumerate(base):
        # Lagrange basis polynomial, expanded
        basis = [Fraction(1)]
        denom = Fraction(1)
        for i, (xi, _) in enumerate(base):
            if i == j:
                continue
            basis = [Fraction(0)] + basis
            for d in range(len(basis) - 1):
                basis[d] -= xi * basis[d + 1]
            denom *= xj - xi
        for d in range(degree + 1):
            coeffs[d] += yj * basis[d] / denom
    for x, y in points[degree + 1:]:
        if sum(c * x ** d for d, c in enumerate(coeffs)) != y:
            return None
    return coeffs


def _fit_class(table, ms):
    n = table.n
    dims = _interpolate([(m, Fraction(table.dim(m))) for m in ms], n)
    wts = _interpolate([(m, Fraction(table.weight(m))) for m in ms], n + 1)
    return dims, wts


def fit_expansion(table):
    """Leading coefficients of ``N_m`` (degree n) and ``w_m`` (degree n + 1).

    Tries a single polynomial first and falls back to one polynomial per
    parity class of ``m``; leading coefficients must agree across classes.
    """
    n = table.n
    ms = list(range(1, table.m_max + 1))
    dims, wts = _fit_class(table, ms)
    period = 1
    if dims is None or wts is None:
        period = 2
        fits = [_fit_class(table, ms[r::2]) for r in range(2)]
        if any(d is None or w is None for d, w in fits):
            raise ValidationError("table is not a quasi-polynomial of period <= 2",
                                  invariant="quasi-polynomial")
        (d0, w0), (d1, w1) = fits
        if d0[n] != d1[n] or d0[n - 1] != d1[n - 1] or w0[n + 1] != w1[n + 1] \
                or w0[n] != w1[n]:
            raise ValidationError("leading coefficients differ across parity classes",
                                  invariant="leading-coefficients")
        dims, wts = d0, w0
    return ExpansionCoefficients(a0=dims[n], a1=dims[n - 1], b0=wts[n + 1],
                                 b1=wts[n], fit_period=period)


def chow_weight(k, coeffs, table):
    """``k b0 - a0 w_k / N_k``."""
    if not 1 <= k <= table.m_max:
        raise ValidationError(f"k = {k} outside table range 1..{table.m_max}",
                              invariant="k-range")
    return k * coeffs.b0 - coeffs.a0 * Fraction(table.weight(k)) / table.dim(k)


def df_invariant(coeffs):
    """``(a1 b0 - a0 b1) / a0``."""
    return (coeffs.a1 * coeffs.b0 - coeffs.a0 * coeffs.b1) / coeffs.a0


@dataclass(frozen=True)
class ChowLimitReport:
    df: Fraction
    chow: dict
    max_tail_error: Fraction
    k_head: Fraction
    k_tail: Fraction
    passed: bool


def chow_limit_check(cfg, m_max=50):
    """Check ``Chow_m -> DF`` at rate ``O(1/m)``.

    ``K_tail = max m |Chow_m - DF|`` over ``m in [m_max/2, m_max]`` is the
    fitted constant; the sequence counts as divergent if ``K_tail`` exceeds
    twice the corresponding maximum over the earlier levels.
    """
    if m_max < 10:
        raise ValidationError("m_max must be >= 10", invariant="m-max")
    table = toric_weight_table(cfg, m_max)
    coeffs = fit_expansion(table)
    df = df_invariant(coeffs)
    chow = {m: chow_weight(m, coeffs, table) for m in range(1, m_max + 1)}
    half = m_max // 2
    tail = range(half, m_max + 1)
    head = range(1, half)
    k_tail = max(m * abs(chow[m] - df) for m in tail)
    k_head = max(m * abs(chow[m] - df) for m in head)
    if k_tail > 2 * k_head and k_tail > 0:
        raise ValidationError("Chow weights do not converge at rate O(1/m)",
                              invariant="chow-limit")
    max_err = max(abs(chow[m] - df) for m in tail)
    passed = all(abs(chow[m] - df) <= k_tail / m for m in tail)
    return ChowLimitReport(df, chow, max_err, k_head, k_tail, passed)


def table_csv(table, coeffs):
    """CSV text ``m,N_m,w_m,Chow_m`` with exact ``p/q`` strings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["m", "N_m", "w_m", "Chow_m"])
    for m in range(1, table.m_max + 1):
        writer.writerow([m, table.dim(m), frac_str(table.weight(m)),
                         frac_str(chow_weight(m, coeffs, table))])
    return buf.getvalue()
