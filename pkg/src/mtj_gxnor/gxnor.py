"""Software GXNOR primitives: discrete spaces, activations, projection.

Everything here is pure numpy and works on scalars or arrays. Randomness comes
in through an explicit generator (or pre-drawn uniforms) so the same draws can
be replayed against the hardware synapse model.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParameterError

MAX_BITS = 8
DEFAULT_M = 3.0


@dataclass(frozen=True)
class QuantSpace:
    """Discrete space ``{n / 2**(N-1) - 1 : n = 0..2**N}`` inside [-1, 1]."""

    n_bits: int
    resolution: Fraction

    @property
    def dz(self) -> float:
        return float(self.resolution)

    @property
    def states(self) -> np.ndarray:
        n = np.arange(2 ** self.n_bits + 1)
        return n * self.dz - 1.0

    @property
    def is_binary(self) -> bool:
        return self.n_bits == 0

    @property
    def is_ternary(self) -> bool:
        return self.n_bits == 1

    def contains(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        k = (w + 1.0) / self.dz
        return (np.abs(k - np.round(k)) < 1e-12) & (w >= -1.0) & (w <= 1.0)


def quantize_space(n_bits: int) -> QuantSpace:
    if not isinstance(n_bits, (int, np.integer)) or n_bits < 0:
        raise ParameterError(f"n_bits must be a non-negative integer, got {n_bits!r}")
    if n_bits > MAX_BITS:
        raise ParameterError(f"n_bits={n_bits} exceeds supported maximum {MAX_BITS}")
    return QuantSpace(int(n_bits), Fraction(1, 2 ** n_bits) * 2)


BINARY = quantize_space(0)
TERNARY = quantize_space(1)


@dataclass(frozen=True)
class ActivationWindow:
    """Rectangular surrogate derivative: 1/(2a) on [r-a, r+a]."""

    r: float = 0.5
    a: float = 0.5

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterError(f"window half-width must be positive, got {self.a}")


@dataclass
class ProjectionResult:
    kappa: np.ndarray
    nu: np.ndarray
    bernoulli_p: np.ndarray
    delta_w: np.ndarray


def bound_update(w, delta):
    """Clip an update so that ``w + result`` stays in [-1, 1]."""
    w = np.asarray(w, dtype=float)
    delta = np.asarray(delta, dtype=float)
    out = np.where(delta > 0, np.minimum(1.0 - w, delta), np.maximum(-1.0 - w, delta))
    return out if out.ndim else float(out)


def split_update(space: QuantSpace, value):
    """Quotient and remainder of ``value / dz``, truncating toward zero.

    ``kappa * dz + nu == value`` holds exactly in floating point because dz
    is a power of two.
    """
    value = np.asarray(value, dtype=float)
    nu = np.fmod(value, space.dz)
    kappa = np.trunc(value / space.dz)
    # trunc(value/dz) can round up when value/dz lands one ulp below an integer
    fix = np.abs(kappa * space.dz + nu - value) > 0
    if np.any(fix):
        kappa = np.where(fix, (value - nu) / space.dz, kappa)
    return kappa.astype(np.int64), nu


def tau(space: QuantSpace, nu, m: float = DEFAULT_M):
    if not m > 0:
        raise ParameterError(f"adjustment factor m must be positive, got {m}")
    return np.tanh(m * np.abs(np.asarray(nu, dtype=float)) / space.dz)


def project(space: QuantSpace, bounded_delta, m: float = DEFAULT_M, rng=None,
            uniforms=None) -> ProjectionResult:
    """Stochastic projection of an already bounded update onto the space grid.

    Either ``rng`` or ``uniforms`` (same shape as ``bounded_delta``) supplies
    the Bernoulli draws; a draw succeeds when ``u < tau``.
    """
    bounded_delta = np.asarray(bounded_delta, dtype=float)
    kappa, nu = split_update(space, bounded_delta)
    p = tau(space, nu, m)
    if uniforms is None:
        if rng is None:
            raise ParameterError("project needs an rng or pre-drawn uniforms")
        uniforms = rng.random(bounded_delta.shape)
    bern = np.asarray(uniforms) < p
    delta_w = (kappa + np.sign(nu) * bern) * space.dz
    return ProjectionResult(kappa=kappa, nu=nu, bernoulli_p=p, delta_w=delta_w)


def expected_delta(space: QuantSpace, bounded_delta, m: float = DEFAULT_M):
    kappa, nu = split_update(space, bounded_delta)
    return (kappa + np.sign(nu) * tau(space, nu, m)) * space.dz


def activate(space: QuantSpace, x, r: float | None = None):
    """Quantized step activation.

    Binary: sign (zero maps to +1). Ternary: threshold at +-r (defaults to the
    midpoint 0.5). Finer spaces: nearest state of ``clip(x, -1, 1)``.
    """
    x = np.asarray(x, dtype=float)
    if space.is_binary:
        out = np.where(x >= 0, 1.0, -1.0)
    elif space.is_ternary:
        thr = 0.5 if r is None else r
        out = np.where(x > thr, 1.0, np.where(x < -thr, -1.0, 0.0))
    else:
        c = np.clip(x, -1.0, 1.0)
        out = np.floor((c + 1.0) / space.dz + 0.5) * space.dz - 1.0
    return out if out.ndim else float(out)


def activate_grad(window: ActivationWindow, x):
    x = np.asarray(x, dtype=float)
    inside = (x >= window.r - window.a) & (x <= window.r + window.a)
    out = np.where(inside, 1.0 / (2.0 * window.a), 0.0)
    return out if out.ndim else float(out)


def symmetric_grad(window: ActivationWindow, x):
    """Window derivative applied to |x|, covering both steps of a ternary unit."""
    return activate_grad(window, np.abs(np.asarray(x, dtype=float)))


def surrogate_activation(window: ActivationWindow, x):
    """Piecewise-linear ramp whose derivative is exactly ``symmetric_grad``.

    Continuous only when r >= a; used for finite-difference gradient checks.
    """
    x = np.asarray(x, dtype=float)
    ramp = np.clip((np.abs(x) - (window.r - window.a)) / (2.0 * window.a), 0.0, 1.0)
    return np.sign(x) * ramp
