"""Geometry of the cone of positive definite Hermitian forms.

Points are positive definite N x N complex matrices.  The tangent space at
``H`` is identified with Hermitian matrices ``A`` through the geodesic

    gamma(t) = H^{1/2} exp(tA) H^{1/2},

and the length of ``A`` is its Frobenius norm.  With these conventions the
Riemannian distance has the closed form ``||log(H1^{-1/2} H2 H1^{-1/2})||_F``
and every geodesic is globally minimising.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

HERMITIAN_RTOL = 1e-12
EIGEN_FLOOR = 1e-300
# exponents whose exp stays normal in double precision
LOG_RANGE = (-690.0, 690.0)

PARAMETRIZATIONS = ("arc-length", "reduced-arc-length", "raw")


def _hermitian_defect(a):
    return np.max(np.abs(a - a.conj().T), initial=0.0)


def check_hermitian(a, name="matrix"):
    """Return ``a`` as a complex square array, raising if it is not Hermitian."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}",
                              invariant="square")
    scale = 1.0 + np.max(np.abs(a), initial=0.0)
    if _hermitian_defect(a) > HERMITIAN_RTOL * scale:
        raise ValidationError(f"{name} is not Hermitian", invariant="hermitian")
    return a


def hermitize(a):
    """Symmetrize away round-off: ``(a + a^H) / 2``."""
    return 0.5 * (a + a.conj().T)


def _eigh_positive(h, name="H"):
    w, v = np.linalg.eigh(hermitize(h))
    if not np.all(np.isfinite(w)) or w[0] <= EIGEN_FLOOR:
        raise ValidationError(
            f"{name} is not positive definite (smallest eigenvalue {w[0]:.3e})",
            invariant="positive-definite")
    return w, v


def check_positive(h, name="H"):
    """Validate a positive definite Hermitian form and return it as an array."""
    h = check_hermitian(h, name)
    _eigh_positive(h, name)
    return h


def _spectral(h, func, name="H"):
    w, v = _eigh_positive(h, name)
    return (v * func(w)) @ v.conj().T


def sqrtm(h):
    return _spectral(h, np.sqrt)


def inv_sqrtm(h):
    return _spectral(h, lambda w: 1.0 / np.sqrt(w))


def logm(h):
    """Matrix logarithm of a positive definite form."""
    return _spectral(h, np.log)


def expm_hermitian(a):
    w, v = np.linalg.eigh(hermitize(a))
    return (v * np.exp(w)) @ v.conj().T


def condition_number(h):
    w = np.linalg.eigvalsh(hermitize(h))
    if w[0] <= 0:
        return np.inf
    return w[-1] / w[0]


@dataclass(frozen=True, eq=False)
class HermitianForm:
    """A validated point of the cone of positive definite Hermitian forms."""

    entries: np.ndarray

    def __post_init__(self):
        h = check_positive(np.array(self.entries, dtype=complex), "HermitianForm")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class TangentDirection:
    """A Hermitian generator of a geodesic, with its Frobenius norm."""

    entries: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        a = check_hermitian(np.array(self.entries, dtype=complex),
                            "TangentDirection")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "norm", float(np.linalg.norm(a)))

    @property
    def dim(self):
        return self.entries.shape[0]

    def traceless(self):
        a = self.entries
        return a - np.trace(a).real / a.shape[0] * np.eye(a.shape[0])

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class GeodesicRay:
    """``t -> base^{1/2} exp(t direction) base^{1/2}`` for ``t >= 0``."""

    base: HermitianForm
    direction: TangentDirection
    parametrization: str = "raw"

    def __post_init__(self):
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValidationError(
                f"unknown parametrization {self.parametrization!r}",
                invariant="parametrization")
        if self.base.dim != self.direction.dim:
            raise ValidationError("base and direction dimensions differ",
                                  invariant="dimension")
        if self.parametrization == "arc-length":
            if abs(self.direction.norm - 1.0) > 1e-12:
                raise ValidationError("arc-length ray needs a unit direction",
                                      invariant="unit-norm")
        elif self.parametrization == "reduced-arc-length":
            if abs(np.linalg.norm(self.direction.traceless()) - 1.0) > 1e-12:
                raise ValidationError(
                    "reduced-arc-length ray needs a unit traceless part",
                    invariant="unit-traceless-norm")

    def __call__(self, t):
        return geodesic_point(self.base.entries, self.direction.entries, t)

    @classmethod
    def from_arrays(cls, base, direction, parametrization="raw"):
        return cls(HermitianForm(base), TangentDirection(direction),
                   parametrization)


def geodesic_point(h0, a, t):
    """Point at time ``t`` on the geodesic through ``h0`` with generator ``a``."""
    h0 = check_positive(h0, "H0")
    a = check_hermitian(a, "A")
    if h0.shape != a.shape:
        raise ValidationError("H0 and A dimensions differ", invariant="dimension")
    if not np.isfinite(t):
        raise ValidationError("t must be finite", invariant="finite-t")
    if t == 0:
        return h0.copy()
    w, v = np.linalg.eigh(hermitize(a))
    tw = t * w
    if tw.min() < LOG_RANGE[0] or tw.max() > LOG_RANGE[1]:
        raise ValidationError(
            f"geodesic point at t={t} leaves the floating-point range",
            invariant="finite-range")
    # H = X X^H with X = H0^{1/2} V exp(t Lambda / 2): positive by construction
    x = sqrtm(h0) @ (v * np.exp(0.5 * tw))
    return hermitize(x @ x.conj().T)


def _relative_log(h1, h2):
    h1 = check_positive(h1, "H1")
    h2 = check_positive(h2, "H2")
    if h1.shape != h2.shape:
        raise ValidationError(
            f"dimension mismatch: {h1.shape[0]} vs {h2.shape[0]}",
            invariant="dimension")
    s = inv_sqrtm(h1)
    return logm(hermitize(s @ h2 @ s))


def connecting_direction(h1, h2):
    """Generator ``A`` with ``geodesic_point(h1, A, 1) == h2``."""
    return hermitize(_relative_log(h1, h2))


def distance(h1, h2):
    return float(np.linalg.norm(_relative_log(h1, h2)))


def traceless_part(a):
    n = a.shape[0]
    return a - (np.trace(a).real / n) * np.eye(n)


def reduced_distance(h1, h2):
    """Distance between the scaling orbits ``R_+ h1`` and ``R_+ h2``."""
    return float(np.linalg.norm(traceless_part(_relative_log(h1, h2))))


def det_normalize(h):
    """Rescale ``h`` to unit determinant."""
    w = np.linalg.eigvalsh(hermitize(h))
    return h * np.exp(-np.mean(np.log(w)))


def random_hermitian(rng, n, scale=1.0):
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * hermitize(b)


def random_unit_direction(rng, n, traceless=False):
    a = random_hermitian(rng, n)
    if traceless:
        a = traceless_part(a)
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else a


def random_positive(rng, n, spread=1.0):
    """Random positive definite form ``exp(spread * A)`` with unit-norm ``A``."""
    return expm_hermitian(spread * random_unit_direction(rng, n))
