"""Offspring distributions and their probability generating functions.

Every distribution here is a law on the non-negative integers with
chi(0) < 1, i.e. a vertex of the random tree has at least one child with
positive probability.  Each family exposes its PGF G(x) = sum x^m chi(m),
the derivative G'(x), the mean G'(1), and seeded sampling.  Game iteration
only ever evaluates G on [0, 1], but the PGF domain can be larger (all of
x >= 0 for the polynomial and exponential families, [0, 1/(1-pi)) for the
negative binomial ones).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a PGF is evaluated outside its domain."""


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, (arr.ndim == 0)


class OffspringDistribution:
    """Base class; subclasses fill in the family-specific formulas."""

    #: supremum of the PGF domain [0, domain_sup); np.inf for entire families
    domain_sup: float = np.inf

    def pgf(self, x):
        """Evaluate G(x).  Raises DomainError outside [0, domain_sup)."""
        arr, scalar = _as_array(x)
        self._check_domain(arr)
        out = self._pgf(arr)
        return float(out) if scalar else out

    def pgf_derivative(self, x):
        """Evaluate G'(x).  Same domain rules as pgf."""
        arr, scalar = _as_array(x)
        self._check_domain(arr)
        out = self._pgf_derivative(arr)
        return float(out) if scalar else out

    def pgf_unchecked(self, x):
        """G(x) by analytic continuation, skipping the x >= 0 check.

        Only the hard singularity (negative binomial pole) is still
        enforced.  Used for curvature analysis past the game interval.
        """
        arr, scalar = _as_array(x)
        self._check_singularity(arr)
        out = self._pgf(arr)
        return float(out) if scalar else out

    def pgf_derivative_unchecked(self, x):
        """G'(x) by analytic continuation; see pgf_unchecked."""
        arr, scalar = _as_array(x)
        self._check_singularity(arr)
        out = self._pgf_derivative(arr)
        return float(out) if scalar else out

    def mean(self) -> float:
        """Mean offspring count, equal to G'(1)."""
        return self.pgf_derivative(1.0)

    def sample(self, rng: np.random.Generator, size=None):
        """Draw offspring counts from chi using the caller's rng stream."""
        raise NotImplementedError

    def spec_string(self) -> str:
        """Canonical CLI spec string for this distribution."""
        raise NotImplementedError

    def _pgf(self, arr):
        raise NotImplementedError

    def _pgf_derivative(self, arr):
        raise NotImplementedError

    def _check_domain(self, arr):
        if arr.size and float(np.min(arr)) < 0.0:
            raise DomainError(f"pgf evaluated at x < 0 (got {float(np.min(arr))})")
        self._check_singularity(arr)

    def _check_singularity(self, arr):
        if np.isfinite(self.domain_sup) and arr.size:
            hi = float(np.max(arr))
            if hi >= self.domain_sup:
                raise DomainError(
                    f"pgf evaluated at x = {hi}, outside [0, {self.domain_sup})"
                )


def _require_chi0_below_one(chi0: float, what: str):
    if not chi0 < 1.0:
        raise ValueError(f"{what}: chi(0) = {chi0} but chi(0) < 1 is required")


@dataclass(frozen=True)
class Binomial(OffspringDistribution):
    """Binomial(d, pi) offspring: G(x) = (pi*x + 1 - pi)^d."""

    d: int
    pi: float

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 2):
            raise ValueError("Binomial needs integer d >= 2")
        if not (0.0 < self.pi <= 1.0):
            raise ValueError("Binomial needs pi in (0, 1]")

    def _pgf(self, x):
        return (self.pi * x + (1.0 - self.pi)) ** self.d

    def _pgf_derivative(self, x):
        return self.d * self.pi * (self.pi * x + (1.0 - self.pi)) ** (self.d - 1)

    def sample(self, rng, size=None):
        return rng.binomial(self.d, self.pi, size=size)

    def spec_string(self):
        return f"binomial:d={self.d},pi={self.pi!r}"


@dataclass(frozen=True)
class Poisson(OffspringDistribution):
    """Poisson(lam) offspring: G(x) = exp(lam*(x - 1))."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("Poisson needs lambda > 0")

    def _pgf(self, x):
        return np.exp(self.lam * (x - 1.0))

    def _pgf_derivative(self, x):
        return self.lam * np.exp(self.lam * (x - 1.0))

    def sample(self, rng, size=None):
        return rng.poisson(self.lam, size=size)

    def spec_string(self):
        return f"poisson:lambda={self.lam!r}"


@dataclass(frozen=True)
class NegativeBinomial(OffspringDistribution):
    """NegativeBinomial(r, pi): failures before the r-th success.

    chi(m) = C(m+r-1, r-1) (1-pi)^m pi^r and
    G(x) = pi^r (1 - (1-pi) x)^(-r) on [0, 1/(1-pi)).
    """

    r: int
    pi: float

    def __post_init__(self):
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 1):
            raise ValueError("NegativeBinomial needs integer r >= 1")
        if not (0.0 < self.pi < 1.0):
            raise ValueError(
                "NegativeBinomial needs pi in (0, 1); pi = 1 would give chi(0) = 1"
            )

    @property
    def domain_sup(self):
        return 1.0 / (1.0 - self.pi)

    def _pgf(self, x):
        return (self.pi / (1.0 - (1.0 - self.pi) * x)) ** self.r

    def _pgf_derivative(self, x):
        base = 1.0 - (1.0 - self.pi) * x
        return self.r * (1.0 - self.pi) * self.pi**self.r * base ** (-(self.r + 1))

    def sample(self, rng, size=None):
        return rng.negative_binomial(self.r, self.pi, size=size)

    def spec_string(self):
        return f"negbin:r={self.r},pi={self.pi!r}"


@dataclass(frozen=True)
class Geometric(OffspringDistribution):
    """Geometric(pi) offspring, chi(m) = pi*(1-pi)^m; same law as
    NegativeBinomial(1, pi)."""

    pi: float

    def __post_init__(self):
        if not (0.0 < self.pi < 1.0):
            raise ValueError("Geometric needs pi in (0, 1); pi = 1 would give chi(0) = 1")

    @property
    def domain_sup(self):
        return 1.0 / (1.0 - self.pi)

    def _pgf(self, x):
        return self.pi / (1.0 - (1.0 - self.pi) * x)

    def _pgf_derivative(self, x):
        return self.pi * (1.0 - self.pi) / (1.0 - (1.0 - self.pi) * x) ** 2

    def sample(self, rng, size=None):
        # numpy's geometric counts trials up to the first success
        return rng.geometric(self.pi, size=size) - 1

    def spec_string(self):
        return f"geometric:pi={self.pi!r}"


@dataclass(frozen=True)
class ZeroOrD(OffspringDistribution):
    """Two-point offspring on {0, d}: chi(d) = pi, chi(0) = 1 - pi."""

    d: int
    pi: float

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 2):
            raise ValueError("ZeroOrD needs integer d >= 2")
        if not (0.0 < self.pi < 1.0):
            raise ValueError("ZeroOrD needs pi in (0, 1)")

    def _pgf(self, x):
        return (1.0 - self.pi) + self.pi * x**self.d

    def _pgf_derivative(self, x):
        return self.pi * self.d * x ** (self.d - 1)

    def sample(self, rng, size=None):
        if size is None:
            return self.d if rng.random() < self.pi else 0
        return np.where(rng.random(size) < self.pi, self.d, 0)

    def spec_string(self):
        return f"zerod:d={self.d},pi={self.pi!r}"


@dataclass(frozen=True)
class Dirac(OffspringDistribution):
    """Deterministic offspring: every vertex has exactly d children."""

    d: int

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ValueError("Dirac needs integer d >= 1")

    def _pgf(self, x):
        return x**self.d

    def _pgf_derivative(self, x):
        return self.d * x ** (self.d - 1)

    def sample(self, rng, size=None):
        if size is None:
            return self.d
        return np.full(size, self.d, dtype=np.int64)

    def spec_string(self):
        return f"dirac:d={self.d}"


class FiniteSupport(OffspringDistribution):
    """Generic law on {0, ..., K} given by its mass vector.

    The PGF and its derivative are evaluated by Horner's scheme, which is
    stable for K up to the tens of thousands.
    """

    def __init__(self, masses):
        m = np.asarray(masses, dtype=float)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("FiniteSupport needs a 1-D, non-empty mass vector")
        if np.any(m < 0.0):
            raise ValueError("FiniteSupport masses must be non-negative")
        total = float(m.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"FiniteSupport masses must sum to 1 (got {total})")
        _require_chi0_below_one(float(m[0]), "FiniteSupport")
        self.masses = m
        self.masses.flags.writeable = False

    def __repr__(self):
        return f"FiniteSupport({self.masses.tolist()})"

    def __eq__(self, other):
        return isinstance(other, FiniteSupport) and np.array_equal(
            self.masses, other.masses
        )

    def __hash__(self):
        return hash(self.masses.tobytes())

    def _pgf(self, x):
        return np.polynomial.polynomial.polyval(x, self.masses)

    def _pgf_derivative(self, x):
        k = np.arange(1, self.masses.size)
        return np.polynomial.polynomial.polyval(x, self.masses[1:] * k)

    def sample(self, rng, size=None):
        return rng.choice(self.masses.size, size=size, p=self.masses)

    def spec_string(self):
        return "finite:" + ",".join(repr(float(v)) for v in self.masses)


def _parse_kv(body: str) -> dict:
    out = {}
    for part in body.split(","):
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_distribution(spec: str) -> OffspringDistribution:
    """Parse a CLI distribution spec.

    Formats: ``binomial:d=3,pi=0.5``, ``poisson:lambda=2.0``,
    ``negbin:r=2,pi=0.4``, ``geometric:pi=0.5``, ``zerod:d=2,pi=0.7``,
    ``dirac:d=3``, ``finite:0.2,0.3,0.5`` (masses for 0, 1, 2).
    """
    if ":" not in spec:
        raise ValueError(f"distribution spec {spec!r} has no ':' separator")
    name, body = spec.split(":", 1)
    name = name.strip().lower()
    if name == "finite":
        return FiniteSupport([float(v) for v in body.split(",")])
    kv = _parse_kv(body)
    try:
        if name == "binomial":
            return Binomial(d=int(kv["d"]), pi=float(kv["pi"]))
        if name == "poisson":
            return Poisson(lam=float(kv["lambda"]))
        if name == "negbin":
            return NegativeBinomial(r=int(kv["r"]), pi=float(kv["pi"]))
        if name == "geometric":
            return Geometric(pi=float(kv["pi"]))
        if name == "zerod":
            return ZeroOrD(d=int(kv["d"]), pi=float(kv["pi"]))
        if name == "dirac":
            return Dirac(d=int(kv["d"]))
    except KeyError as exc:
        raise ValueError(f"distribution spec {spec!r} is missing field {exc}") from None
    raise ValueError(f"unknown distribution family {name!r}")
