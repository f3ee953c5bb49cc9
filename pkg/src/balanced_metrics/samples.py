"""Concrete polarised samples used as test beds.

P^1 with L = O(1) is described in moment coordinates: ``tau in (0, 1)`` and
an angle ``theta``.  With the Kahler form normalised to total area 1, any
S^1-invariant metric pushes forward to ``d tau d theta / 2 pi``, so one
product quadrature (Gauss-Legendre in ``tau``, equispaced in ``theta``)
serves every metric.  The section ``z^i`` of ``O(k)`` has pointwise norm

    |s_i|^2 = exp(k u(tau) + (i - k tau) u'(tau)),

where ``u`` is the symplectic potential; for the round metric this is
``tau^i (1 - tau)^(k - i)``.  Scalar curvature is ``S = -2 pi (1/u'')''``,
which equals ``4 pi`` on the round sphere of area 1, so the Bergman
expansion reads ``rho_k = k + S / (4 pi) + O(1/k)``.
"""

from dataclasses import dataclass
from math import comb

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ValidationError
from .quantization import AnticanonicalSample, PolarizedSample, bergman_density

MAX_SECTIONS = 64
MAX_POINTS = 20000


@dataclass(frozen=True)
class QuadratureSpec:
    n_polar: int
    n_angular: int

    def check_exact(self, degree):
        """Require exactness for Gram entries of sections of ``O(degree)``."""
        if self.n_polar < degree + 1 or self.n_angular < 2 * degree + 1:
            raise ValidationError(
                f"quadrature ({self.n_polar}, {self.n_angular}) is not exact "
                f"for degree {degree}: need n_polar >= {degree + 1} and "
                f"n_angular >= {2 * degree + 1}", invariant="quadrature-exactness")

    @classmethod
    def minimal(cls, degree, oversample=1):
        return cls(oversample * (degree + 1), oversample * (2 * degree + 1))


def quadrature_nodes(q):
    """Nodes ``(tau, theta)`` and weights summing to 1, polar-major order."""
    x, w = np.polynomial.legendre.leggauss(q.n_polar)
    tau = (x + 1) / 2
    theta = 2 * np.pi * np.arange(q.n_angular) / q.n_angular
    tt, th = np.meshgrid(tau, theta, indexing="ij")
    weights = np.repeat(w / 2, q.n_angular) / q.n_angular
    return tt.ravel(), th.ravel(), weights


def _check_size(n_sections, n_points):
    if n_sections > MAX_SECTIONS:
        raise ValidationError(f"N = {n_sections} exceeds cap {MAX_SECTIONS}",
                              invariant="size-cap")
    if n_points > MAX_POINTS:
        raise ValidationError(f"M = {n_points} exceeds cap {MAX_POINTS}",
                              invariant="size-cap")


def _monomial_evals(degree, tau, theta, log_norms=None):
    i = np.arange(degree + 1)[:, None]
    if log_norms is None:
        with np.errstate(divide="ignore"):
            log_norms = i * np.log(tau) + (degree - i) * np.log1p(-tau)
    return np.exp(0.5 * log_norms + 1j * i * theta)


def balanced_p1_form(k):
    """Closed-form balanced form ``diag(1 / C(k, i))`` of the round P^1."""
    return np.diag([1.0 / comb(k, i) for i in range(k + 1)]).astype(complex)


def build_p1_sample(k, q=None):
    """Round P^1 at level ``k`` on an exact product quadrature (``V = 1``)."""
    if k < 0:
        raise ValidationError("level must be >= 0", invariant="level")
    q = q or QuadratureSpec.minimal(k)
    q.check_exact(k)
    _check_size(k + 1, q.n_polar * q.n_angular)
    tau, theta, w = quadrature_nodes(q)
    return PolarizedSample(_monomial_evals(k, tau, theta), w, k=k, n=1,
                           label=f"P1 k={k}")


def build_ac_p1_sample(k, q=None, oversample=1):
    """Anticanonical P^1: sections of ``O(2k)`` with the round volume form."""
    if k < 1:
        raise ValidationError("anticanonical level must be >= 1",
                              invariant="level")
    q = q or QuadratureSpec.minimal(2 * k, oversample)
    q.check_exact(2 * k)
    _check_size(2 * k + 1, q.n_polar * q.n_angular)
    tau, theta, w = quadrature_nodes(q)
    return AnticanonicalSample(_monomial_evals(2 * k, tau, theta), w, k=k, n=1,
                               label=f"P1 anticanonical k={k}", base=w.copy())


def product_sample(s1, s2):
    """Segre-type product: Kronecker products of section vectors."""
    n_sec, n_pts = s1.N * s2.N, s1.M * s2.M
    _check_size(n_sec, n_pts)
    ev = np.einsum("ia,jb->ijab", s1.evals, s2.evals).reshape(n_sec, n_pts)
    w = np.outer(s1.weights, s2.weights).ravel()
    return PolarizedSample(ev, w, k=max(s1.k, s2.k), n=s1.n + s2.n,
                           label=f"({s1.label}) x ({s2.label})",
                           allow_degenerate=s1.allow_degenerate or s2.allow_degenerate)


def degenerate_sample(n_sections, n_points, hyperplane_dim, allow_degenerate=False,
                      seed=0):
    """Points whose section vectors vanish in the first ``hyperplane_dim`` slots.

    The reference Gram matrix is singular, so construction fails unless
    ``allow_degenerate`` is set.
    """
    if not 1 <= hyperplane_dim < n_sections:
        raise ValidationError(
            f"need 1 <= hyperplane_dim < N, got {hyperplane_dim}",
            invariant="hyperplane-dim")
    _check_size(n_sections, n_points)
    rng = np.random.default_rng(seed)
    ev = np.zeros((n_sections, n_points), dtype=complex)
    free = n_sections - hyperplane_dim
    ev[hyperplane_dim:] = (rng.normal(size=(free, n_points))
                           + 1j * rng.normal(size=(free, n_points)))
    w = np.full(n_points, 1.0 / n_points)
    return PolarizedSample(ev, w, k=1, n=1,
                           label=f"degenerate N={n_sections} h={hyperplane_dim}",
                           allow_degenerate=allow_degenerate)


def unstable_direction(n_sections, hyperplane_dim):
    """Unit traceless diagonal direction destabilising a degenerate sample."""
    d = np.full(n_sections, hyperplane_dim / (n_sections - hyperplane_dim))
    d[:hyperplane_dim] = -1.0
    d /= np.linalg.norm(d)
    return np.diag(d).astype(complex)


def random_sample(rng, n_sections, n_points=None, weights="random"):
    """Generic sample with complex Gaussian section values."""
    n_points = n_points or 2 * n_sections + 3
    ev = rng.normal(size=(n_sections, n_points)) + 1j * rng.normal(
        size=(n_sections, n_points))
    if weights == "random":
        w = rng.uniform(0.5, 1.5, size=n_points)
    else:
        w = np.ones(n_points)
    return PolarizedSample(ev, w / w.sum(), k=1, n=1, label="random")


def random_ac_sample(rng, n_sections, k=1, n_points=None):
    n_points = n_points or 2 * n_sections + 3
    ev = rng.normal(size=(n_sections, n_points)) + 1j * rng.normal(
        size=(n_sections, n_points))
    w = rng.uniform(0.5, 1.5, size=n_points)
    return AnticanonicalSample(ev, w / w.sum(), k=k, n=1, label="random ac",
                               base=rng.uniform(0.5, 1.5, size=n_points))


# Deformed S^1-invariant metrics


_GL_X, _GL_W = np.polynomial.legendre.leggauss(60)
_GL_X = (_GL_X + 1) / 2
_GL_W = _GL_W / 2
_ROUND_Q = np.array([0.0, 1.0, -1.0])  # tau - tau^2


@dataclass(frozen=True, eq=False)
class MetricProfile:
    """S^1-invariant metric on P^1 given by ``1/u'' = Q`` with

        Q(tau) = tau (1 - tau) (1 + tau (1 - tau) p(tau)),

    ``p`` a polynomial (coefficients lowest degree first).  The perturbation
    ``tau^2 (1 - tau)^2 p`` vanishes to second order at both poles, so the
    metric extends smoothly; ``margin`` is ``min (1 + tau (1 - tau) p)``.
    """

    coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.margin <= 0:
            raise ValidationError(
                f"profile loses positivity (margin {self.margin:.3g})",
                invariant="metric-positivity")

    @property
    def p(self):
        return np.array(self.coeffs or (0.0,))

    @property
    def margin(self):
        t = np.linspace(0.0, 1.0, 2001)
        return float(np.min(1 + t * (1 - t) * P.polyval(t, self.p)))

    def inverse_hessian(self):
        """Coefficients of the polynomial ``Q = 1/u''``."""
        base = _ROUND_Q
        return P.polyadd(base, P.polymul(P.polymul(base, base), self.p))

    def scalar_curvature(self, tau):
        return -2 * np.pi * P.polyval(tau, P.polyder(self.inverse_hessian(), 2))

    def _r(self, s):
        # (1/Q - 1/Q_round), smooth on [0, 1]
        p = P.polyval(s, self.p)
        return -p / (1 + s * (1 - s) * p)

    def gradient(self, tau):
        """``u'(tau)``, normalised so the perturbation vanishes at 1/2."""
        tau = np.asarray(tau, dtype=float)
        s = 0.5 + np.outer(tau - 0.5, _GL_X)
        corr = (tau - 0.5) * (self._r(s) @ _GL_W)
        return np.log(tau) - np.log1p(-tau) + corr

    def potential(self, tau):
        """``u(tau)``; the perturbation and its derivative vanish at 1/2."""
        tau = np.asarray(tau, dtype=float)
        s = 0.5 + np.outer(tau - 0.5, _GL_X)
        corr = (tau - 0.5) * (((tau[:, None] - s) * self._r(s)) @ _GL_W)
        return tau * np.log(tau) + (1 - tau) * np.log1p(-tau) + corr

    def log_section_norms(self, k, tau):
        """``log |z^i|^2_{h^k}`` for ``i = 0..k`` at moment coordinates ``tau``."""
        i = np.arange(k + 1)[:, None]
        return k * self.potential(tau) + (i - k * tau) * self.gradient(tau)


@dataclass(frozen=True, eq=False)
class CurvatureGrid:
    nodes: np.ndarray
    values: np.ndarray


def deformed_p1_sample(k, profile, q=None):
    """Sample of ``O(k)`` sections for a deformed metric, plus its curvature.

    The weights are the metric's own area form, so the reference Gram matrix
    is the L^2 Gram matrix and ``bergman_density(s, s.gram(), "paper")`` is
    the Bergman function of the metric.  The polar quadrature must oversample
    by at least a factor 2.
    """
    q = q or QuadratureSpec(4 * (k + 1), 2 * k + 1)
    if q.n_polar < 2 * (k + 1):
        raise ValidationError("deformed samples need n_polar >= 2 (k + 1)",
                              invariant="oversampling")
    q.check_exact(k)
    _check_size(k + 1, q.n_polar * q.n_angular)
    tau, theta, w = quadrature_nodes(q)
    ev = _monomial_evals(k, tau, theta, profile.log_section_norms(k, tau))
    s = PolarizedSample(ev, w, k=k, n=1, label=f"deformed P1 k={k}")
    nodes = np.polynomial.legendre.leggauss(q.n_polar)[0]
    nodes = (nodes + 1) / 2
    return s, CurvatureGrid(nodes, profile.scalar_curvature(nodes))


def expansion_residual(k, profile, q=None):
    """``max_a |rho_k - k - S / 4 pi|`` for the deformed sample at level ``k``."""
    s, _ = deformed_p1_sample(k, profile, q)
    rho = bergman_density(s, s.gram(), "paper")
    tau = quadrature_nodes(q or QuadratureSpec(4 * (k + 1), 2 * k + 1))[0]
    return float(np.max(np.abs(rho - k - profile.scalar_curvature(tau) / (4 * np.pi))))
