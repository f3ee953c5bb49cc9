"""Analysis of geodesically convex functions on the cone of Hermitian forms.

Everything here is generic: a function is probed only through its values
(and, where required, a gradient or an exact slope oracle).  The routines
mirror the classical facts about convex functions of one variable: one-sided
derivatives exist and are monotone, difference quotients increase, and the
asymptotic slope ``lim f(t)/t`` equals the limit of the derivatives.  On the
cone these give a decision procedure for the existence of a minimiser.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ContractError, ConvergenceError, ConvexityViolation,
                     InvariantViolation, NotProperError, PreconditionError,
                     ValidationError)
from .hermitian import (HermitianForm, TangentDirection, check_positive,
                        condition_number, connecting_direction, det_normalize,
                        distance, geodesic_point, hermitize, random_positive,
                        random_unit_direction, reduced_distance,
                        traceless_part)

logger = logging.getLogger(__name__)

INF_SLOPE = math.inf


@dataclass(frozen=True)
class RayFunction:
    """``t -> f(gamma(t))`` together with an optional exact slope at infinity."""

    evaluate: Callable[[float], float]
    exact_slope: Optional[float] = None
    label: str = ""

    def __call__(self, t):
        return float(self.evaluate(t))

    @classmethod
    def along(cls, f, h0, a, exact_slope=None):
        """Restrict a function on the cone to the geodesic ``(h0, a)``."""
        h0 = np.asarray(h0)
        a = np.asarray(a)
        return cls(lambda t: f(geodesic_point(h0, a, t)), exact_slope)


def _as_ray_function(f):
    return f if isinstance(f, RayFunction) else RayFunction(f)


# One-sided derivatives and convexity checks


def _quotient_noise(f0, h):
    return 8 * np.finfo(float).eps * (1.0 + abs(f0)) / h


def one_sided_derivatives(f, tau, h_min=1e-4, h_max=1.0, tol=1e-9):
    """Left and right derivatives of a convex function at ``tau``.

    Difference quotients are taken over step sizes halving from ``h_max`` to
    ``h_min``.  For a convex function the right quotients decrease and the
    left quotients increase as the step shrinks; a violation larger than
    ``tol`` (plus round-off) raises :class:`ConvexityViolation`.  The result
    is a Richardson extrapolation of the two smallest steps, which is exact
    for piecewise quadratic functions.  At smooth points the ``h^2`` errors
    of the left and right extrapolations coincide, so the default ``h_min``
    is chosen large enough to keep round-off far below ``tol``.

    Returns
    -------
    (left, right) : tuple of float
    """
    if h_min <= 0 or h_max < h_min:
        raise ValidationError("need 0 < h_min <= h_max", invariant="step-range")
    f = _as_ray_function(f)
    f0 = f(tau)
    steps = []
    h = h_max
    while h >= h_min:
        steps.append(h)
        h /= 2
    if len(steps) < 2:
        steps = [2 * h_min, h_min]
    right = [(f(tau + h) - f0) / h for h in steps]
    left = [(f0 - f(tau - h)) / h for h in steps]
    for i in range(1, len(steps)):
        slack = tol + _quotient_noise(f0, steps[i])
        if right[i] > right[i - 1] + slack:
            raise ConvexityViolation(
                f"right quotients increase at tau={tau}",
                triple=(tau, tau + steps[i], tau + steps[i - 1]))
        if left[i] < left[i - 1] - slack:
            raise ConvexityViolation(
                f"left quotients decrease at tau={tau}",
                triple=(tau - steps[i - 1], tau - steps[i], tau))
    r = 2 * right[-1] - right[-2]
    lft = 2 * left[-1] - left[-2]
    if lft > r + tol + _quotient_noise(f0, steps[-1]):
        raise ConvexityViolation(f"left derivative exceeds right at tau={tau}",
                                 triple=(tau - steps[-1], tau, tau + steps[-1]))
    return lft, r


@dataclass(frozen=True)
class ConvexityReport:
    max_violation: float
    strict_margin: float
    worst_triple: tuple


def convexity_report(f, grid):
    """Compare ``f`` with its chords over consecutive triples of ``grid``.

    ``max_violation`` is the largest amount by which ``f`` exceeds the chord
    through its neighbours (0 when convex); ``strict_margin`` is the smallest
    chord gap, positive exactly when the sampled values are strictly convex.
    """
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) < 3:
        raise ValidationError("grid needs at least three points",
                              invariant="grid-length")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("grid must be strictly increasing",
                              invariant="grid-sorted")
    f = _as_ray_function(f)
    y = np.array([f(x) for x in t])
    t0, t1, t2 = t[:-2], t[1:-1], t[2:]
    chord = ((t2 - t1) * y[:-2] + (t1 - t0) * y[2:]) / (t2 - t0)
    gap = chord - y[1:-1]
    worst = int(np.argmin(gap))
    return ConvexityReport(
        max_violation=float(max(0.0, -gap.min())),
        strict_margin=float(gap.min()),
        worst_triple=(float(t0[worst]), float(t1[worst]), float(t2[worst])),
    )


def second_differences(f, grid):
    """Plain second differences ``f(t-h) - 2 f(t) + f(t+h)`` on a uniform grid."""
    f = _as_ray_function(f)
    y = np.array([f(x) for x in grid])
    return y[:-2] - 2 * y[1:-1] + y[2:]


# Asymptotic slopes


@dataclass(frozen=True)
class SlopeEstimate:
    """Chord slope on the trailing window ``(t1, t2)``.

    ``value`` is ``math.inf`` when the chords exceed the cap while still
    increasing.  ``drift`` compares with the chord on the halved window.
    """

    value: float
    window: tuple
    drift: float
    converged: bool
    tolerance: float

    @property
    def is_infinite(self):
        return math.isinf(self.value)


def chord(f, t1, t2):
    return (f(t2) - f(t1)) / (t2 - t1)


def asymptotic_slope(f, t_max=60.0, tol=1e-8, cap=1e6, window=1.0 / 3,
                     max_doublings=40, mono_tol=1e-10):
    """Estimate ``lim_{t -> inf} f(t) / t`` for ``f`` convex on ``[0, inf)``.

    The chord over ``[(1 - window) t_max, t_max]`` is compared with the chord
    over the halved window.  If they agree to ``tol`` the estimate is
    converged.  Otherwise ``t_max`` doubles until convergence, until the chord
    exceeds ``cap`` (reported as ``+inf``) or ``max_doublings`` is reached.
    Chords must not decrease as the window moves right.
    """
    if not 0 < window < 1:
        raise ValidationError("window must lie in (0, 1)", invariant="window")
    f = _as_ray_function(f)
    t2 = float(t_max)
    prev = None
    for _ in range(max_doublings + 1):
        t1 = (1 - window) * t2
        c_far = chord(f, t1, t2)
        c_near = chord(f, t1 / 2, t2 / 2)
        scale = 1.0 + abs(c_far)
        if c_near > c_far + mono_tol * scale:
            raise ConvexityViolation(
                f"chord slopes decrease: {c_near!r} on ({t1 / 2}, {t2 / 2}) "
                f"vs {c_far!r} on ({t1}, {t2})",
                triple=(t1 / 2, t2 / 2, t2))
        if prev is not None and prev > c_far + mono_tol * scale:
            raise ConvexityViolation("chord slopes decrease under doubling",
                                     triple=(t1, t2, 2 * t2))
        drift = abs(c_far - c_near)
        if not np.isfinite(c_far) or (c_far > cap and c_far > c_near):
            return SlopeEstimate(INF_SLOPE, (t1, t2), drift, True, tol)
        if drift <= tol:
            return SlopeEstimate(float(c_far), (t1, t2), drift, True, tol)
        prev = c_far
        t2 *= 2
    return SlopeEstimate(float(c_far), (t1, t2 / 2), drift, False, tol)


# Properness


@dataclass(frozen=True, eq=False)
class PropernessCertificate:
    """Constants with ``f(y) >= C d(y, y0) - D`` on every stored probe."""

    C: float
    D: float
    base: np.ndarray
    probes: list
    residual: float
    min_slope: float
    validation_residual: float


def _ray_factory(f, ray):
    if ray is not None:
        return ray
    return lambda h0, a: RayFunction.along(f, h0, a)


def _probe_slope(rf, t_max, tol, cap=1e6):
    if rf.exact_slope is not None:
        return rf.exact_slope
    return asymptotic_slope(rf, t_max=t_max, tol=tol, cap=cap).value


def properness_certificate(f, y0, directions, t_max=10.0, ray=None,
                           n_validation=1000, n_grid=21, seed=0,
                           slope_tol=1e-6, slope_cap=1e3):
    """Certify ``f(y) >= C d(y, y0) - D`` from slopes along probe directions.

    ``ray(y0, A)``, if given, must return a :class:`RayFunction` for ``f``
    along the geodesic; this lets callers supply numerically stable
    restrictions.  ``C`` is half the smallest probe slope (``1`` when every
    slope is infinite, i.e. exceeds ``slope_cap`` while still growing; a low
    cap keeps probes of fast-growing functions inside floating-point range).
    ``D`` makes the bound hold on all probe evaluations
    and is then checked on ``n_validation`` random points within distance
    ``t_max`` of ``y0``.

    Raises
    ------
    NotProperError
        Some direction has nonpositive slope; it is returned as a witness.
    InvariantViolation
        The validation points break the certified bound.
    """
    y0 = check_positive(y0, "y0")
    make_ray = _ray_factory(f, ray)
    units = []
    for a in directions:
        a = np.asarray(a, dtype=complex)
        nrm = np.linalg.norm(a)
        if nrm == 0:
            raise ValidationError("zero probe direction", invariant="unit-norm")
        units.append(a / nrm)

    slopes = []
    for a in units:
        rf = make_ray(y0, a)
        slopes.append(_probe_slope(rf, t_max, slope_tol, slope_cap))
    worst = int(np.argmin(slopes))
    if slopes[worst] <= 0:
        raise NotProperError(
            f"direction {worst} has slope {slopes[worst]:.6g} <= 0",
            direction=units[worst], slope=slopes[worst])
    finite = [s for s in slopes if np.isfinite(s)]
    c = 0.5 * min(finite) if finite else 1.0

    probes = []
    deficit = -np.inf
    ts = np.linspace(0.0, t_max, n_grid)
    for a in units:
        rf = make_ray(y0, a)
        for t in ts:
            val = rf(t)
            probes.append((float(t), val, float(t)))
            deficit = max(deficit, c * t - val)
    d = max(deficit, 0.0) + 1e-9 * (1.0 + abs(deficit))
    if d <= 0:
        d = 1e-9

    rng = np.random.default_rng(seed)
    n = y0.shape[0]
    validation = np.inf
    for _ in range(n_validation):
        a = random_unit_direction(rng, n)
        t = rng.uniform(0.0, t_max)
        val = make_ray(y0, a)(t)
        validation = min(validation, val - (c * t - d))
    if validation < 0:
        raise InvariantViolation(
            f"properness bound fails on validation set (residual {validation:.3e})")
    residual = min(v - (c * dist - d) for _, v, dist in probes)
    return PropernessCertificate(C=c, D=d, base=y0, probes=probes,
                                 residual=float(residual),
                                 min_slope=float(slopes[worst]),
                                 validation_residual=float(validation))


# Minimisation and the existence decision


@dataclass(frozen=True, eq=False)
class Minimizer:
    point: HermitianForm
    gradient_norm: float
    value: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class Degenerate:
    """Iterates escaped to infinity along ``direction``.

    ``certified_slope`` is the exact slope along ``direction`` when an oracle
    was available (``slope_source == "exact"``), otherwise a numerical chord
    estimate.
    """

    direction: TangentDirection
    certified_slope: float
    witness_iterates: dict = field(default_factory=dict)
    slope_source: str = "exact"


MAX_STRETCH = 2.0


@dataclass
class DescentOptions:
    step: float = 1.0
    max_iter: int = 20000
    stat_tol: float = 1e-9
    cond_cap: float = 1e12
    radius: float = 1e3
    max_step: float = 64.0
    armijo: float = 1e-4
    fd_check: bool = True
    fd_rtol: float = 1e-4
    seed: int = 0


def _check_gradient(f, grad, h, rng, rtol):
    n = h.shape[0]
    a = random_unit_direction(rng, n)
    g = grad(h)
    analytic = float(np.real(np.trace(a @ g)))
    eps = 1e-5
    fd = (f(geodesic_point(h, a, eps)) - f(geodesic_point(h, a, -eps))) / (2 * eps)
    scale = max(abs(fd), abs(analytic), np.linalg.norm(g))
    # central-difference round-off ~ eps_mach |f| / eps
    noise = 1e-10 * (1 + abs(f(h)))
    if abs(fd - analytic) > rtol * scale + noise:
        raise ContractError(
            f"gradient disagrees with finite differences: {analytic!r} vs {fd!r}")


def escape_direction(h_init, h_last):
    """Unit traceless part of the generator from ``h_init`` to ``h_last``."""
    a = traceless_part(connecting_direction(h_init, h_last))
    nrm = np.linalg.norm(a)
    if nrm == 0:
        return a
    return hermitize(a / nrm)


def minimize_convex(f, grad, h_init, opts=None, slope_oracle=None):
    """Riemannian gradient descent with backtracking along geodesics.

    Each step is ``H <- geodesic_point(H, -s G, 1)`` where ``G = grad(H)``
    represents the derivative, ``d/dt f(gamma(t)) = tr(A G)``.  The run ends
    with a :class:`Minimizer` once ``||G||_F <= stat_tol`` or with a
    :class:`Degenerate` verdict once the iterates leave every compact set
    (condition number above ``cond_cap`` or distance from ``h_init`` above
    ``radius``).

    ``slope_oracle(h0, A)``, when given, certifies the escape direction.
    """
    opts = opts or DescentOptions()
    h_init = check_positive(h_init, "H_init")
    rng = np.random.default_rng(opts.seed)
    if opts.fd_check:
        _check_gradient(f, grad, h_init, rng, opts.fd_rtol)

    h = h_init
    val = f(h)
    step = opts.step
    g = grad(h)
    gnorm = float(np.linalg.norm(g))
    for it in range(opts.max_iter):
        if gnorm <= opts.stat_tol:
            return Minimizer(HermitianForm(h), gnorm, float(val), it)
        noise = 1e-13 * (1.0 + abs(val))
        # one step may stretch the spectrum by at most exp(2 * MAX_STRETCH)
        gop = float(np.max(np.abs(np.linalg.eigvalsh(hermitize(g)))))
        step = min(step, MAX_STRETCH / gop)
        while True:
            trial = geodesic_point(h, -step * g, 1.0)
            try:
                tval = f(trial)
            except ValidationError:
                tval = np.inf
            if step * gnorm ** 2 > noise:
                if tval <= val - opts.armijo * step * gnorm ** 2:
                    tgrad = None
                    break
            else:
                # decrease below round-off: accept on gradient reduction instead
                tgrad = grad(trial)
                if np.linalg.norm(tgrad) < gnorm and tval <= val + noise:
                    break
            step /= 2
            if step < 1e-14:
                if gnorm <= 1e3 * opts.stat_tol:
                    return Minimizer(HermitianForm(h), gnorm, float(val), it)
                raise ConvergenceError(
                    f"line search failed at iteration {it}, |grad| = {gnorm:.3e}")
        if tval > val + noise:
            raise ContractError("objective increased along an accepted step")
        h, val = trial, tval
        step = min(2 * step, opts.max_step)
        g = grad(h) if tgrad is None else tgrad
        gnorm = float(np.linalg.norm(g))
        cond = condition_number(h)
        dist = distance(h_init, h) if cond <= opts.cond_cap else np.inf
        if cond > opts.cond_cap or dist > opts.radius:
            direction = escape_direction(h_init, h)
            if slope_oracle is not None:
                slope = float(slope_oracle(h_init, direction))
                source = "exact"
            else:
                rf = RayFunction.along(f, h_init, direction)
                slope = asymptotic_slope(rf, t_max=min(opts.radius, 30.0),
                                         tol=1e-6).value
                source = "estimated"
            witness = {"iterations": it + 1, "condition_number": float(cond),
                       "value": float(val), "gradient_norm": gnorm}
            return Degenerate(TangentDirection(direction), slope, witness,
                              source)
    if gnorm <= opts.stat_tol:
        return Minimizer(HermitianForm(h), gnorm, float(val), opts.max_iter)
    raise ConvergenceError(
        f"no decision after {opts.max_iter} iterations (|grad| = {gnorm:.3e})")


def _snap_direction(energy, h0, a, snap_tol=1e-6):
    """Nearby direction whose eigenvectors avoid nearly-orthogonal sample vectors.

    Eigen-coordinates of a sample vector below ``snap_tol`` (relative) are
    treated as structural zeros: the eigenvectors are projected off those
    vectors and re-orthonormalised, which is a small perturbation of ``a``.
    """
    w = energy.whitened(h0)
    lam, u = np.linalg.eigh(hermitize(a))
    coords = np.abs(u.conj().T @ w) ** 2
    norms = coords.sum(axis=0)
    q_new = []
    for i in range(len(lam)):
        vanish = coords[i] <= snap_tol * norms
        basis = [w[:, vanish]] if vanish.any() else []
        basis += [np.stack(q_new, axis=1)] if q_new else []
        q = u[:, i]
        if basis:
            b = np.concatenate(basis, axis=1)
            qb, _ = np.linalg.qr(b)
            rank = np.linalg.matrix_rank(b)
            qb = qb[:, :rank]
            q = q - qb @ (qb.conj().T @ q)
        nrm = np.linalg.norm(q)
        if nrm < 1e-3:
            return None
        q_new.append(q / nrm)
    qn = np.stack(q_new, axis=1)
    return hermitize((qn * lam) @ qn.conj().T)


def certify_escape(energy, h0, a, snap_tol=1e-6, max_move=1e-2):
    """Exact slope of ``a``, falling back to a snapped nearby direction.

    Returns ``(slope, direction)`` where ``direction`` is the direction whose
    exact slope was taken.
    """
    slope = float(energy.exact_slope(h0, a))
    if slope <= 0:
        return slope, a
    snapped = _snap_direction(energy, h0, a, snap_tol)
    if snapped is None or np.linalg.norm(snapped - a) > max_move:
        return slope, a
    s2 = float(energy.exact_slope(h0, snapped))
    if s2 <= 0:
        return s2, snapped
    return slope, a


def decide_existence(energy, h_init=None, opts=None, n_checks=100, seed=0,
                     scale_tol=1e-9):
    """Decide whether a scale-invariant convex energy has a critical point.

    ``energy`` must provide ``dim``, ``value(H)``, ``gradient(H)``,
    ``exact_slope(H0, A)`` and ``whitened(H0)``.  Descent runs from the
    determinant-normalised ``h_init``.  A minimiser is confirmed by positive
    exact slopes along ``n_checks`` random traceless directions from random
    base points; an escape is confirmed by a nonpositive exact slope along
    the escape direction (or a snapped nearby one).

    Raises
    ------
    InvariantViolation
        The two certificates contradict each other.
    """
    n = energy.dim
    h_init = np.eye(n, dtype=complex) if h_init is None else check_positive(h_init)
    for c in (1e-3, 1e3):
        if abs(energy.value(c * h_init) - energy.value(h_init)) > scale_tol * (
                1.0 + abs(energy.value(h_init))):
            raise PreconditionError(f"energy is not invariant under H -> {c} H")
    h0 = det_normalize(h_init)
    verdict = minimize_convex(energy.value, energy.gradient, h0, opts,
                              slope_oracle=energy.exact_slope)
    rng = np.random.default_rng(seed)
    if isinstance(verdict, Minimizer):
        if n == 1:
            return verdict
        for _ in range(n_checks):
            base = random_positive(rng, n, spread=rng.uniform(0.0, 2.0))
            a = random_unit_direction(rng, n, traceless=True)
            s = energy.exact_slope(base, a)
            if s <= 0:
                raise InvariantViolation(
                    f"minimiser found but direction has exact slope {s:.6g}")
        return verdict
    slope, direction = certify_escape(energy, h0, verdict.direction.entries)
    if slope > 0:
        raise InvariantViolation(
            f"iterates escaped but escape direction has exact slope {slope:.6g}")
    return Degenerate(TangentDirection(direction), slope,
                      verdict.witness_iterates, "exact")


# Liminf harness


@dataclass(frozen=True, eq=False)
class LiminfReport:
    limit_slope: float
    threshold: float
    ratios: list
    gaps: list
    floor: float
    passed: bool


def liminf_harness(f, ray_family, limit_ray, i0=0, ray=None, t_max=60.0):
    """Check ``liminf f(gamma_i(tau_i)) / tau_i >= slope(gamma*) / 4``.

    ``ray_family`` is a sequence of ``(GeodesicRay, tau_i)`` whose rays
    approach ``limit_ray`` at time 1.  The floor reported is the minimum of
    the ratios over ``i >= i0``.
    """
    make_ray = _ray_factory(f, ray)
    rf_star = make_ray(limit_ray.base.entries, limit_ray.direction.entries)
    slope = _probe_slope(rf_star, t_max, 1e-8)
    if not slope > 0:
        raise PreconditionError(
            f"limit ray has nonpositive slope {slope:.6g}; lemma does not apply")
    star1 = limit_ray(1.0)
    ratios, gaps = [], []
    for gamma, tau in ray_family:
        if tau <= 0:
            raise PreconditionError("tau_i must be positive")
        rf = make_ray(gamma.base.entries, gamma.direction.entries)
        ratios.append(rf(tau) / tau)
        gaps.append(distance(gamma(1.0), star1))
    tail = ratios[i0:]
    if not tail:
        raise PreconditionError("no rays at or beyond i0")
    floor = float(min(tail))
    if np.isfinite(slope):
        threshold = slope / 4
        passed = floor >= threshold
    else:
        # infinite slope: any positive floor is what the lemma promises
        threshold = 0.0
        passed = floor > 0
    return LiminfReport(float(slope), float(threshold), ratios, gaps, floor,
                        bool(passed))


def equivariant_agreement(h1, h2):
    """Reduced distance between two minimisers (zero iff equal up to scaling)."""
    return reduced_distance(h1, h2)
