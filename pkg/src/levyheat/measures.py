"""Jump intensity measures on (0, infinity).

Every measure kind exposes closed-form partial moments

    mu_{a,b}(p) = integral of z^p over [a, b)

together with tail masses, the small-jump compensator
kappa_a = mu_{a,1}(1), and samplers for the restricted and the
size-biased (z-weighted) jump laws.  All samplers draw from an
externally owned ``numpy.random.Generator``; measures themselves are
immutable value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, gammaln

INF = float("inf")


class DivergentIntegralError(ValueError):
    """A partial moment / tail mass is infinite for the requested window."""


class EmptySupportError(ValueError):
    """The restricted jump law carries no mass on the requested window."""


def _check_window(a: float, b: float) -> None:
    if not (0.0 <= a <= b):
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")


@dataclass(frozen=True)
class LevyMeasure:
    """Base class: an intensity measure on (0, infinity) with finite mass on [1, inf)."""

    #: effective support bounds; derived per kind in __post_init__
    support_lo: float = field(init=False, default=0.0, compare=False)
    support_hi: float = field(init=False, default=INF, compare=False)

    # -- core interface -------------------------------------------------

    def partial_moment(self, a: float, b: float, p: float) -> float:
        """mu_{a,b}(p) = int_[a,b) z^p lambda(dz), exact where a closed form exists."""
        raise NotImplementedError

    def tail_mass(self, a: float, b: float = INF) -> float:
        """lambda([a,b)); the Poisson rate per unit space-time volume."""
        return self.partial_moment(a, b, 0.0)

    def compensator(self, a: float) -> float:
        """kappa_a = mu_{a,1}(1) for a in (0, 1]."""
        if not (0.0 < a <= 1.0):
            raise ValueError(f"compensator needs a in (0,1], got {a}")
        return self.partial_moment(a, 1.0, 1.0)

    def sample_jump(self, a: float, b: float, rng: np.random.Generator, size=None):
        """Draw from lambda restricted to [a,b), normalized to a probability law."""
        raise NotImplementedError

    def sample_size_biased(self, a: float, b: float, rng: np.random.Generator, size=None):
        """Draw from the z-weighted law with density proportional to z lambda(dz) on [a,b)."""
        raise NotImplementedError

    def conditional_cdf(self, z, a: float, b: float):
        """CDF of the restricted law at z; vectorized over z."""
        raise NotImplementedError

    # -- descriptors -----------------------------------------------------

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _require_mass(self, a: float, b: float) -> float:
        mass = self.tail_mass(a, b)
        if not np.isfinite(mass):
            raise DivergentIntegralError(f"infinite mass on [{a},{b})")
        if mass <= 0.0:
            raise EmptySupportError(f"no mass on [{a},{b})")
        return mass


def _power_partial_moment(alpha: float, a: float, b: float, p: float) -> float:
    """int_[a,b) z^p * alpha z^{-1-alpha} dz for a pure power-law density."""
    _check_window(a, b)
    if a == b:
        return 0.0
    e = p - alpha
    if a == 0.0 and e <= 0.0:
        raise DivergentIntegralError(
            f"mu_(0,b)(p) diverges for power law: p={p} <= alpha={alpha}"
        )
    if b == INF and e >= 0.0:
        raise DivergentIntegralError(
            f"mu_(a,inf)(p) diverges for power law: p={p} >= alpha={alpha}"
        )
    if e == 0.0:
        return alpha * math.log(b / a)
    hi = 0.0 if b == INF else b**e
    lo = 0.0 if a == 0.0 else a**e
    return alpha * (hi - lo) / e


def _power_inverse_cdf(alpha: float, a: float, b: float, u):
    """Inverse conditional CDF of the density ~ z^{-1-alpha} on [a,b); alpha may be <= 0."""
    if alpha > 0.0:
        ba = 0.0 if b == INF else b**-alpha
        return (a**-alpha - u * (a**-alpha - ba)) ** (-1.0 / alpha)
    if alpha == 0.0:
        if b == INF:
            raise DivergentIntegralError("density ~ 1/z not normalizable up to infinity")
        return a * (b / a) ** u
    # alpha < 0: density ~ z^{|alpha|-1}, increasing tail; needs b < inf
    if b == INF:
        raise DivergentIntegralError("density ~ z^{-1-alpha} with alpha<0 not normalizable up to infinity")
    e = -alpha
    return (a**e + u * (b**e - a**e)) ** (1.0 / e)


@dataclass(frozen=True)
class AlphaStable(LevyMeasure):
    """lambda(dz) = alpha z^{-(1+alpha)} dz on (0, infinity), alpha in (0, 2)."""

    alpha: float = 1.5

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0,2), got {self.alpha}")
        object.__setattr__(self, "support_lo", 0.0)
        object.__setattr__(self, "support_hi", INF)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.alpha * z ** (-1.0 - self.alpha)

    def partial_moment(self, a, b, p):
        return _power_partial_moment(self.alpha, a, b, p)

    def sample_jump(self, a, b, rng, size=None):
        self._require_mass(a, b)
        u = rng.random(size)
        return _power_inverse_cdf(self.alpha, a, b, u)

    def sample_size_biased(self, a, b, rng, size=None):
        if not np.isfinite(self.partial_moment(a, b, 1.0)):
            raise DivergentIntegralError("size-biased law needs mu_{a,b}(1) < infinity")
        u = rng.random(size)
        return _power_inverse_cdf(self.alpha - 1.0, a, b, u)

    def conditional_cdf(self, z, a, b):
        self._require_mass(a, b)
        z = np.clip(np.asarray(z, dtype=float), a, b)
        bt = 0.0 if b == INF else b**-self.alpha
        return (a**-self.alpha - z**-self.alpha) / (a**-self.alpha - bt)

    def to_dict(self):
        return {"kind": "alpha_stable", "alpha": self.alpha}


@dataclass(frozen=True)
class PowerTail(LevyMeasure):
    """Power-law density alpha z^{-(1+alpha)} restricted to [z_min, z_max).

    ``z_min = 0`` together with alpha >= 2 makes int_(0,1) z^2 lambda(dz)
    infinite; such measures are only constructible with
    ``allow_degenerate=True`` (degeneracy experiments).
    """

    alpha: float = 1.5
    z_min: float = 1e-6
    z_max: float = 10.0
    allow_degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (0.0 <= self.z_min < self.z_max):
            raise ValueError(f"need 0 <= z_min < z_max, got [{self.z_min},{self.z_max})")
        if self.z_min == 0.0 and self.alpha >= 2.0 and not self.allow_degenerate:
            raise ValueError(
                "int_(0,1) z^2 lambda(dz) is infinite for this power tail; "
                "pass allow_degenerate=True to build it for degeneracy experiments"
            )
        object.__setattr__(self, "support_lo", self.z_min)
        object.__setattr__(self, "support_hi", self.z_max)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.z_min) & (z < self.z_max)
        return np.where(inside, self.alpha * z ** (-1.0 - self.alpha), 0.0)

    def _clip(self, a, b):
        return max(a, self.z_min), min(b, self.z_max)

    def partial_moment(self, a, b, p):
        _check_window(a, b)
        lo, hi = self._clip(a, b)
        if lo >= hi:
            return 0.0
        return _power_partial_moment(self.alpha, lo, hi, p)

    def sample_jump(self, a, b, rng, size=None):
        self._require_mass(a, b)
        lo, hi = self._clip(a, b)
        u = rng.random(size)
        return _power_inverse_cdf(self.alpha, lo, hi, u)

    def sample_size_biased(self, a, b, rng, size=None):
        lo, hi = self._clip(a, b)
        if lo >= hi:
            raise EmptySupportError(f"no mass on [{a},{b})")
        u = rng.random(size)
        return _power_inverse_cdf(self.alpha - 1.0, lo, hi, u)

    def conditional_cdf(self, z, a, b):
        self._require_mass(a, b)
        lo, hi = self._clip(a, b)
        z = np.clip(np.asarray(z, dtype=float), lo, hi)
        return (lo**-self.alpha - z**-self.alpha) / (lo**-self.alpha - hi**-self.alpha)

    def to_dict(self):
        return {"kind": "power_tail", "alpha": self.alpha, "z_min": self.z_min, "z_max": self.z_max}


@dataclass(frozen=True)
class Atom(LevyMeasure):
    """A single jump size z0 occurring with rate ``mass`` per unit space-time."""

    z0: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.z0 <= 0.0 or self.mass < 0.0:
            raise ValueError(f"need z0 > 0 and mass >= 0, got z0={self.z0}, mass={self.mass}")
        object.__setattr__(self, "support_lo", self.z0)
        object.__setattr__(self, "support_hi", self.z0)

    def partial_moment(self, a, b, p):
        _check_window(a, b)
        if a <= self.z0 < b:
            return self.mass * self.z0**p
        return 0.0

    def sample_jump(self, a, b, rng, size=None):
        self._require_mass(a, b)
        if size is None:
            return self.z0
        return np.full(size, self.z0)

    sample_size_biased = sample_jump

    def conditional_cdf(self, z, a, b):
        self._require_mass(a, b)
        return (np.asarray(z, dtype=float) >= self.z0).astype(float)

    def to_dict(self):
        return {"kind": "atom", "z0": self.z0, "mass": self.mass}


@dataclass(frozen=True)
class Mixture(LevyMeasure):
    """Finite mixture of atoms."""

    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("mixture needs at least one atom")
        zs = [at.z0 for at in self.atoms]
        object.__setattr__(self, "support_lo", min(zs))
        object.__setattr__(self, "support_hi", max(zs))

    def partial_moment(self, a, b, p):
        return sum(at.partial_moment(a, b, p) for at in self.atoms)

    def _window_atoms(self, a, b):
        return [at for at in self.atoms if a <= at.z0 < b]

    def sample_jump(self, a, b, rng, size=None):
        sel = self._window_atoms(a, b)
        if not sel:
            raise EmptySupportError(f"no atoms in [{a},{b})")
        w = np.array([at.mass for at in sel])
        zv = np.array([at.z0 for at in sel])
        idx = rng.choice(len(sel), size=size, p=w / w.sum())
        return zv[idx]

    def sample_size_biased(self, a, b, rng, size=None):
        sel = self._window_atoms(a, b)
        if not sel:
            raise EmptySupportError(f"no atoms in [{a},{b})")
        w = np.array([at.mass * at.z0 for at in sel])
        zv = np.array([at.z0 for at in sel])
        idx = rng.choice(len(sel), size=size, p=w / w.sum())
        return zv[idx]

    def conditional_cdf(self, z, a, b):
        mass = self._require_mass(a, b)
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z, dtype=float)
        for at in self._window_atoms(a, b):
            out = out + at.mass * (z >= at.z0)
        return out / mass

    def to_dict(self):
        return {"kind": "mixture", "atoms": [at.to_dict() for at in self.atoms]}


@dataclass(frozen=True)
class ExponentialTail(LevyMeasure):
    """lambda(dz) = (rate/scale) exp(-z/scale) dz: finite total activity, all moments finite."""

    rate: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.rate <= 0.0 or self.scale <= 0.0:
            raise ValueError("rate and scale must be positive")
        object.__setattr__(self, "support_lo", 0.0)
        object.__setattr__(self, "support_hi", INF)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.rate / self.scale * np.exp(-z / self.scale)

    def partial_moment(self, a, b, p):
        _check_window(a, b)
        if a == b:
            return 0.0
        # int z^p e^{-z/s}/s dz = s^p Gamma(p+1) [P(p+1,b/s) - P(p+1,a/s)]
        hi = 1.0 if b == INF else gammainc(p + 1.0, b / self.scale)
        lo = gammainc(p + 1.0, a / self.scale)
        return self.rate * self.scale**p * math.exp(gammaln(p + 1.0)) * (hi - lo)

    def sample_jump(self, a, b, rng, size=None):
        self._require_mass(a, b)
        u = rng.random(size)
        ea = math.exp(-a / self.scale)
        eb = 0.0 if b == INF else math.exp(-b / self.scale)
        return -self.scale * np.log(ea - u * (ea - eb))

    def sample_size_biased(self, a, b, rng, size=None):
        # tilted density ~ z e^{-z/s}: invert mu_{a,z}(1)/mu_{a,b}(1) by bisection
        total = self.partial_moment(a, b, 1.0)
        if total <= 0.0:
            raise EmptySupportError(f"no mass on [{a},{b})")
        hi = b if b != INF else a + 50.0 * self.scale
        u = np.atleast_1d(rng.random(size if size is not None else 1))
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            out[i] = brentq(
                lambda z: self.partial_moment(a, z, 1.0) - ui * total, a, hi, xtol=1e-14
            )
        if size is None:
            return float(out[0])
        return out.reshape(np.shape(u))

    def conditional_cdf(self, z, a, b):
        mass = self._require_mass(a, b)
        z = np.clip(np.asarray(z, dtype=float), a, b)
        ea = math.exp(-a / self.scale)
        return self.rate * (ea - np.exp(-z / self.scale)) / mass

    def to_dict(self):
        return {"kind": "exponential_tail", "rate": self.rate, "scale": self.scale}


_KINDS = {
    "alpha_stable": lambda d: AlphaStable(alpha=d["alpha"]),
    "power_tail": lambda d: PowerTail(
        alpha=d["alpha"], z_min=d["z_min"], z_max=d["z_max"],
        allow_degenerate=d.get("allow_degenerate", False),
    ),
    "atom": lambda d: Atom(z0=d["z0"], mass=d["mass"]),
    "mixture": lambda d: Mixture(atoms=tuple(Atom(z0=a["z0"], mass=a["mass"]) for a in d["atoms"])),
    "exponential_tail": lambda d: ExponentialTail(rate=d["rate"], scale=d["scale"]),
}


def measure_from_dict(desc: dict) -> LevyMeasure:
    """Build a measure from its JSON descriptor, e.g. {"kind":"alpha_stable","alpha":1.5}."""
    try:
        kind = desc["kind"]
    except (TypeError, KeyError):
        raise ValueError(f"measure descriptor needs a 'kind' field, got {desc!r}")
    if kind not in _KINDS:
        raise ValueError(f"unknown measure kind {kind!r}; known: {sorted(_KINDS)}")
    return _KINDS[kind](desc)
