"""Discrete quantisation of a polarised manifold.

A :class:`PolarizedSample` stores, for each sample point ``a``, the vector
``v_a`` of section values against the reference metric and a positive
weight ``nu_a``.  A positive Hermitian form ``H`` on the section space gives
the density ``rho_a(H) = v_a^H H^{-1} v_a``, i.e. the sum of ``|s_i|^2`` over
an ``H``-orthonormal basis.  Balanced forms are fixed points of

    T(H) = (N / V) sum_a nu_a v_a v_a^H / rho_a(H),

equivalently critical points of the scale-invariant convex energy

    Z(H) = sum_a nu_a log rho_a(H) + (V / N) log det H.

The anticanonical variant weights points by ``beta_a rho_a^{-1/k}`` so that
the measure itself moves with ``H``.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .convex import RayFunction
from .errors import ValidationError
from .hermitian import (EIGEN_FLOOR, HermitianForm, TangentDirection,
                        check_hermitian, check_positive, condition_number,
                        det_normalize, hermitize, traceless_part)

logger = logging.getLogger(__name__)

SUPPORT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PolarizedSample:
    """Section values ``evals`` (N x M) at M weighted points.

    ``allow_degenerate`` skips the check that the reference Gram matrix is
    positive definite; only unstable test samples should set it.
    """

    evals: np.ndarray
    weights: np.ndarray
    k: int = 1
    n: int = 1
    label: str = ""
    allow_degenerate: bool = False

    def __post_init__(self):
        ev = np.array(self.evals, dtype=complex)
        w = np.array(self.weights, dtype=float)
        if ev.ndim != 2:
            raise ValidationError("evals must be an N x M array", invariant="shape")
        if w.shape != (ev.shape[1],):
            raise ValidationError(
                f"need {ev.shape[1]} weights, got {w.shape}", invariant="shape")
        if not np.all(np.isfinite(ev)) or not np.all(np.isfinite(w)):
            raise ValidationError("non-finite sample data", invariant="finite")
        if np.any(w <= 0):
            raise ValidationError("weights must be positive",
                                  invariant="positive-weights")
        if self.k < 0 or self.n < 1:
            raise ValidationError("need k >= 0 and n >= 1", invariant="level")
        ev.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "evals", ev)
        object.__setattr__(self, "weights", w)
        if np.any(np.sum(np.abs(ev) ** 2, axis=0) == 0):
            raise ValidationError("some sample point has all sections vanishing",
                                  invariant="nonzero-evals")
        if not self.allow_degenerate:
            g = self.gram()
            lam = np.linalg.eigvalsh(g)
            if lam[0] <= 1e-14 * max(lam[-1], EIGEN_FLOOR):
                raise ValidationError(
                    "reference Gram matrix is not positive definite "
                    "(some section vanishes on the sample)",
                    invariant="gram-positive")

    @property
    def N(self):
        return self.evals.shape[0]

    @property
    def M(self):
        return self.evals.shape[1]

    @property
    def V(self):
        return float(np.sum(self.weights))

    def gram(self, coeffs=None):
        """``sum_a c_a v_a v_a^H`` with ``c = weights`` by default."""
        c = self.weights if coeffs is None else coeffs
        return hermitize((self.evals * c) @ self.evals.conj().T)

    def transformed(self, g):
        """Sample with every ``v_a`` replaced by ``g v_a``."""
        return _replace(self, evals=np.asarray(g) @ self.evals)


@dataclass(frozen=True, eq=False)
class AnticanonicalSample(PolarizedSample):
    """Polarised sample with reference anticanonical density weights ``base``."""

    base: Optional[np.ndarray] = None

    def __post_init__(self):
        super().__post_init__()
        if self.base is None:
            raise ValidationError("anticanonical sample needs base weights",
                                  invariant="base")
        b = np.array(self.base, dtype=float)
        if b.shape != (self.M,) or np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise ValidationError("base weights must be M positive reals",
                                  invariant="positive-base")
        if self.k < 1:
            raise ValidationError("anticanonical level must be >= 1",
                                  invariant="level")
        b.setflags(write=False)
        object.__setattr__(self, "base", b)


def _replace(s, **changes):
    kw = dict(evals=s.evals, weights=s.weights, k=s.k, n=s.n, label=s.label,
              allow_degenerate=s.allow_degenerate)
    if isinstance(s, AnticanonicalSample):
        kw["base"] = s.base
    kw.update(changes)
    return type(s)(**kw)


def _check_form(s, h):
    h = check_positive(h, "H")
    if h.shape[0] != s.N:
        raise ValidationError(f"H has dim {h.shape[0]}, sample has N={s.N}",
                              invariant="dimension")
    return h


def densities(s, h):
    """Internal densities ``rho_a = v_a^H H^{-1} v_a``."""
    h = _check_form(s, h)
    lower = np.linalg.cholesky(hermitize(h))
    y = np.linalg.solve(lower, s.evals)
    rho = np.sum(np.abs(y) ** 2, axis=0)
    if not np.all(rho > 0) or not np.all(np.isfinite(rho)):
        raise ValidationError("nonpositive Bergman density", invariant="density")
    return rho


def bergman_density(s, h, normalization="internal"):
    """Bergman density at the sample points.

    ``"internal"`` returns ``v^H H^{-1} v``.  ``"paper"`` rescales ``H`` so
    that ``sum_a nu_a rho_a = V`` and multiplies by ``N / V``; the result is
    scale invariant, integrates to ``N``, and equals ``N / V`` identically at
    a balanced form.
    """
    rho = densities(s, h)
    if normalization == "internal":
        return rho
    if normalization == "paper":
        return s.N * rho / np.sum(s.weights * rho)
    raise ValidationError(f"unknown normalization {normalization!r}",
                          invariant="normalization")


def gram_normalize(s, h):
    """Rescale ``h`` so that ``sum_a nu_a rho_a(h) = V``."""
    rho = densities(s, h)
    return h * (np.sum(s.weights * rho) / s.V)


def t_operator(s, h):
    rho = densities(s, h)
    return (s.N / s.V) * s.gram(s.weights / rho)


def balancing_energy(s, h):
    h = _check_form(s, h)
    rho = densities(s, h)
    _, logdet = np.linalg.slogdet(h)
    return float(np.sum(s.weights * np.log(rho)) + (s.V / s.N) * logdet)


def _inv_sqrt(h):
    w, v = np.linalg.eigh(hermitize(h))
    return (v / np.sqrt(w)) @ v.conj().T


def energy_gradient(s, h):
    """Gradient ``G`` with ``d/dt Z(H^{1/2} e^{tA} H^{1/2})|_0 = tr(A G)``."""
    h = _check_form(s, h)
    rho = densities(s, h)
    r = _inv_sqrt(h)
    m = s.gram(s.weights / rho)
    return hermitize((s.V / s.N) * np.eye(s.N) - r @ m @ r)


# Anticanonical energy


def _ac_terms(s, h):
    rho = densities(s, h)
    log_terms = np.log(s.base) - np.log(rho) / s.k
    log_f = logsumexp(log_terms)
    return rho, log_terms, log_f


def ac_energy(s, h):
    """``(1/N) log det H - k log sum_a beta_a rho_a^{-1/k}``."""
    h = _check_form(s, h)
    _, _, log_f = _ac_terms(s, h)
    _, logdet = np.linalg.slogdet(h)
    return float(logdet / s.N - s.k * log_f)


def ac_t_operator(s, h):
    rho, log_terms, log_f = _ac_terms(s, h)
    c = np.exp(log_terms - log_f) / rho
    return s.N * s.gram(c)


def ac_energy_gradient(s, h):
    h = _check_form(s, h)
    rho, log_terms, log_f = _ac_terms(s, h)
    c = np.exp(log_terms - log_f) / rho
    r = _inv_sqrt(h)
    return hermitize(np.eye(s.N) / s.N - r @ s.gram(c) @ r)


# Exact restriction to geodesics and slopes at infinity


@dataclass(frozen=True, eq=False)
class RaySpectrum:
    """Sample data in the eigenbasis of a geodesic generator.

    ``log_coords[i, a] = log |u_{a,i}|^2`` with ``u_a = U^H H0^{-1/2} v_a``.
    """

    eigenvalues: np.ndarray
    log_coords: np.ndarray
    coords: np.ndarray
    logdet: float

    def min_supported(self, rtol=SUPPORT_RTOL):
        norms = self.coords.sum(axis=0)
        support = self.coords > rtol * norms
        if not np.all(support.any(axis=0)):
            raise ValidationError("sample point with empty support",
                                  invariant="support")
        lam = np.where(support, self.eigenvalues[:, None], np.inf)
        return lam.min(axis=0)


def whitened(s, h0):
    """``H0^{-1/2} v_a`` for every sample point (columns)."""
    h0 = _check_form(s, h0)
    return _inv_sqrt(h0) @ s.evals


def ray_spectrum(s, h0, a):
    h0 = _check_form(s, h0)
    a = check_hermitian(a, "A")
    if a.shape != h0.shape:
        raise ValidationError("A and H0 dimensions differ", invariant="dimension")
    lam, u = np.linalg.eigh(hermitize(a))
    coords = np.abs(u.conj().T @ whitened(s, h0)) ** 2
    with np.errstate(divide="ignore"):
        log_coords = np.log(coords)
    _, logdet = np.linalg.slogdet(h0)
    return RaySpectrum(lam, log_coords, coords, float(logdet))


def energy_along_ray(s, h0, a):
    """Numerically stable ``t -> Z(H0^{1/2} e^{tA} H0^{1/2})``.

    Evaluated in the eigenbasis of ``A`` with log-sum-exp, so large ``|t|``
    never forms an ill-conditioned matrix.
    """
    sp = ray_spectrum(s, h0, a)
    w = s.weights
    trace = float(np.sum(sp.eigenvalues))
    ratio = s.V / s.N

    def z(t):
        log_rho = logsumexp(sp.log_coords - sp.eigenvalues[:, None] * t, axis=0)
        return float(np.sum(w * log_rho) + ratio * (t * trace + sp.logdet))

    return RayFunction(z, exact_slope=_slope_from_spectrum(s, sp), label="Z")


def ac_energy_along_ray(s, h0, a):
    sp = ray_spectrum(s, h0, a)
    trace = float(np.sum(sp.eigenvalues))
    log_beta = np.log(s.base)

    def z(t):
        log_rho = logsumexp(sp.log_coords - sp.eigenvalues[:, None] * t, axis=0)
        return float((t * trace + sp.logdet) / s.N
                     - s.k * logsumexp(log_beta - log_rho / s.k))

    return RayFunction(z, exact_slope=_ac_slope_from_spectrum(s, sp),
                       label="Zac")


def _slope_from_spectrum(s, sp):
    mins = sp.min_supported()
    return float((s.V / s.N) * np.sum(sp.eigenvalues) - np.sum(s.weights * mins))


def _ac_slope_from_spectrum(s, sp):
    mins = sp.min_supported()
    return float(np.sum(sp.eigenvalues) / s.N - np.max(mins))


def exact_slope(s, h0, a):
    """``lim_{t -> inf} Z(gamma(t)) / t`` from the spectrum of ``A``.

    Equals ``(V/N) tr A - sum_a nu_a min{lambda_i : u_{a,i} != 0}`` where
    coordinates below ``SUPPORT_RTOL`` (relative) count as zero.
    """
    return _slope_from_spectrum(s, ray_spectrum(s, h0, a))


def ac_exact_slope(s, h0, a):
    """``tr A / N - max_a min{lambda_i : u_{a,i} != 0}``."""
    return _ac_slope_from_spectrum(s, ray_spectrum(s, h0, a))


# Energies as objects for the convex-analysis toolkit


class BalancingEnergy:
    """Bundles the balancing energy of a sample for generic routines."""

    def __init__(self, sample):
        self.sample = sample

    @property
    def dim(self):
        return self.sample.N

    def value(self, h):
        return balancing_energy(self.sample, h)

    def gradient(self, h):
        return energy_gradient(self.sample, h)

    def fixed_point_map(self, h):
        return t_operator(self.sample, h)

    def exact_slope(self, h0, a):
        return exact_slope(self.sample, h0, a)

    def restriction(self, h0, a):
        return energy_along_ray(self.sample, h0, a)

    def whitened(self, h0):
        return whitened(self.sample, h0)

    def normalize(self, h):
        return gram_normalize(self.sample, h)


class AnticanonicalEnergy(BalancingEnergy):

    def value(self, h):
        return ac_energy(self.sample, h)

    def gradient(self, h):
        return ac_energy_gradient(self.sample, h)

    def fixed_point_map(self, h):
        return ac_t_operator(self.sample, h)

    def exact_slope(self, h0, a):
        return ac_exact_slope(self.sample, h0, a)

    def restriction(self, h0, a):
        return ac_energy_along_ray(self.sample, h0, a)

    def normalize(self, h):
        rho = densities(self.sample, h)
        b = self.sample.base
        return h * (np.sum(b * rho) / np.sum(b))


def energy_for(s):
    if isinstance(s, AnticanonicalSample):
        return AnticanonicalEnergy(s)
    return BalancingEnergy(s)


# Fixed-point iteration


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True, eq=False)
class BalanceResult:
    H: HermitianForm
    residual: float
    iterations: int
    status: Status
    escape_direction: Optional[TangentDirection] = None
    residual_history: list = field(default_factory=list)
    monotone: bool = True


def _escape_from(t):
    w, v = np.linalg.eigh(hermitize(t))
    floor = max(w[-1], EIGEN_FLOOR) * EIGEN_FLOOR
    a = traceless_part((v * np.log(np.maximum(w, floor))) @ v.conj().T)
    nrm = np.linalg.norm(a)
    return hermitize(a / nrm) if nrm > 0 else a


def balance_iterate(s, h0=None, eps_bal=1e-12, max_iter=2000, cond_cap=1e12):
    """Iterate the (anticanonical) T-operator with determinant gauge.

    Converged forms are returned in the normalisation of
    :meth:`BalancingEnergy.normalize` (for the ordinary energy,
    ``sum nu_a rho_a = V``).  ``Diverged`` is reported when an iterate's
    condition number exceeds ``cond_cap``; the escape direction is the unit
    traceless log of that iterate.
    """
    energy = energy_for(s)
    h = det_normalize(_check_form(s, np.eye(s.N) if h0 is None else h0))
    history = []
    for it in range(1, max_iter + 1):
        th = energy.fixed_point_map(h)
        if condition_number(th) > cond_cap:
            logger.info("balance_iterate: diverged at iteration %d", it)
            return BalanceResult(HermitianForm(h), history[-1] if history else np.inf,
                                 it, Status.DIVERGED,
                                 TangentDirection(_escape_from(th)), history,
                                 _monotone(history))
        res = float(np.linalg.norm(th - h) / np.linalg.norm(h))
        history.append(res)
        h = det_normalize(th)
        if res <= eps_bal:
            return BalanceResult(HermitianForm(energy.normalize(h)), res, it,
                                 Status.CONVERGED, None, history,
                                 _monotone(history))
    logger.warning("balance_iterate: no convergence in %d iterations", max_iter)
    return BalanceResult(HermitianForm(h), history[-1], max_iter, Status.MAX_ITER,
                         None, history, _monotone(history))


def _monotone(history):
    return bool(all(b <= a * (1 + 1e-12) + 1e-15
                    for a, b in zip(history, history[1:])))
