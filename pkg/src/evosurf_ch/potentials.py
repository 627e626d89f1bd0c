"""Homogeneous free energies F and their derivatives.

Every potential is split as ``F = F1 + F2`` where ``F1`` is convex (treated
implicitly by the time stepper) and ``F2`` is the non-convex remainder
(treated explicitly under convex-concave splitting).  Three families are
provided:

* :class:`SmoothPotential` -- user supplied ``F1``, ``F2`` with the growth
  constants ``alpha``, ``beta`` and ``q``; :meth:`SmoothPotential.quartic`
  gives ``(r**2 - 1)**2 / 4``.
* :class:`LogPotential` -- ``theta/2 * Flog(r) + (1 - r**2)/2`` with the
  logarithmic part ``Flog(r) = (1+r)log(1+r) + (1-r)log(1-r)``; ``delta > 0``
  replaces ``Flog`` by its quadratic continuation outside ``|r| <= 1-delta``.
* :class:`ObstaclePenalty` -- ``Fobs_delta(r) + (1 - r**2)/2``, a C^2 penalty
  approximation of the double obstacle potential.

All functions act elementwise on floats or numpy arrays.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import DomainError

Array = np.ndarray


def _xlogx(s):
    s = np.asarray(s, dtype=float)
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, s * np.log(safe), 0.0)


class Potential:
    """Common interface.  Subclasses implement the six split functions."""

    name = "potential"

    def F1(self, r):
        raise NotImplementedError

    def dF1(self, r):
        raise NotImplementedError

    def d2F1(self, r):
        raise NotImplementedError

    def F2(self, r):
        raise NotImplementedError

    def dF2(self, r):
        raise NotImplementedError

    def d2F2(self, r):
        raise NotImplementedError

    def F(self, r):
        return self.F1(r) + self.F2(r)

    def dF(self, r):
        return self.dF1(r) + self.dF2(r)

    def d2F(self, r):
        return self.d2F1(r) + self.d2F2(r)

    def F_exact(self, r):
        """Energy density of the limiting (unregularised) potential."""
        return self.F(r)

    @property
    def is_singular(self):
        return False


def _concave_quadratic(r):
    return 0.5 * (1.0 - np.asarray(r, dtype=float) ** 2)


@dataclass(frozen=True)
class SmoothPotential(Potential):
    """Potential satisfying the polynomial growth assumptions (A1)-(A2).

    ``alpha = (a1, a2, a3, a4)``, ``beta = (b0, b1, b2, b3, b4)`` and ``q`` are
    the constants in

    * ``F >= b0``
    * ``F1 >= 0`` convex, ``|F1'| <= a1 |r|**q + b1``
    * ``|F1'| <= a2 F1 + b2`` and ``|r F1'| <= a3 F1 + b3``
    * ``|F2'| <= a4 |r| + b4``
    """

    f1: Callable = field(repr=False)
    df1: Callable = field(repr=False)
    d2f1: Callable = field(repr=False)
    f2: Callable = field(repr=False)
    df2: Callable = field(repr=False)
    d2f2: Callable = field(repr=False)
    alpha: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    beta: Tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)
    q: float = 1.0
    name: str = "smooth"

    @classmethod
    def quartic(cls, alpha=(0.25, 3.0, 0.25, 1.0), beta=(0.0, 0.0, 0.25, 0.0, 0.0), q=4.0):
        """``F(r) = (r**2 - 1)**2 / 4`` split as ``r**4/4 + (1 - 2 r**2)/4``.

        The default constants are the ones quoted alongside this potential in
        the literature; :func:`check_assumptions` tests them by sampling.
        """
        return cls(
            f1=lambda r: 0.25 * r**4,
            df1=lambda r: r**3,
            d2f1=lambda r: 3.0 * r**2,
            f2=lambda r: 0.25 * (1.0 - 2.0 * r**2),
            df2=lambda r: -r,
            d2f2=lambda r: -np.ones_like(r),
            alpha=tuple(alpha),
            beta=tuple(beta),
            q=q,
            name="smooth-quartic",
        )

    @classmethod
    def zero(cls):
        z = lambda r: np.zeros_like(r)
        return cls(z, z, z, z, z, z, name="zero")

    def F1(self, r):
        return self.f1(np.asarray(r, dtype=float))

    def dF1(self, r):
        return self.df1(np.asarray(r, dtype=float))

    def d2F1(self, r):
        return self.d2f1(np.asarray(r, dtype=float))

    def F2(self, r):
        return self.f2(np.asarray(r, dtype=float))

    def dF2(self, r):
        return self.df2(np.asarray(r, dtype=float))

    def d2F2(self, r):
        return self.d2f2(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class LogPotential(Potential):
    """Logarithmic (Flory-Huggins type) potential with critical temperature 1.

    ``F(r) = theta/2 * Flog_delta(r) + (1 - r**2)/2``.  ``phi`` is the
    derivative of the *unscaled* log part, so the chemical potential carries
    exactly one factor ``theta/2``.  ``delta = 0`` is the exact potential on
    ``[-1, 1]``; derivatives then require ``|r| < 1``.
    """

    theta: float = 0.5
    delta: float = 0.0
    name: str = "log"

    def __post_init__(self):
        if not 0.0 < self.theta:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def is_singular(self):
        return self.delta == 0.0

    # unscaled logarithmic part and its derivatives
    def flog(self, r):
        r = np.asarray(r, dtype=float)
        if self.delta == 0.0:
            if np.any(np.abs(r) > 1.0):
                raise DomainError("exact logarithmic potential evaluated at |r| > 1")
            return _xlogx(1.0 + r) + _xlogx(1.0 - r)
        d = self.delta
        rc = np.clip(r, -1.0 + d, 1.0 - d)
        mid = _xlogx(1.0 + rc) + _xlogx(1.0 - rc)
        ld, l2 = np.log(d), np.log(2.0 - d)
        hi = (1 - r) * ld + (1 + r) * l2 + (1 - r) ** 2 / (2 * d) + (1 + r) ** 2 / (2 * (2 - d)) - 1.0
        lo = (1 + r) * ld + (1 - r) * l2 + (1 + r) ** 2 / (2 * d) + (1 - r) ** 2 / (2 * (2 - d)) - 1.0
        return np.where(r > 1.0 - d, hi, np.where(r < -1.0 + d, lo, mid))

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.delta == 0.0:
            if np.any(np.abs(r) >= 1.0):
                raise DomainError("log potential derivative needs |r| < 1")
            return np.log1p(r) - np.log1p(-r)
        d = self.delta
        rc = np.clip(r, -1.0 + d, 1.0 - d)
        mid = np.log1p(rc) - np.log1p(-rc)
        ld, l2 = np.log(d), np.log(2.0 - d)
        hi = -ld + l2 - (1 - r) / d + (1 + r) / (2 - d)
        lo = ld - l2 + (1 + r) / d - (1 - r) / (2 - d)
        return np.where(r > 1.0 - d, hi, np.where(r < -1.0 + d, lo, mid))

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        if self.delta == 0.0:
            if np.any(np.abs(r) >= 1.0):
                raise DomainError("log potential derivative needs |r| < 1")
            return 2.0 / (1.0 - r**2)
        d = self.delta
        rc = np.clip(r, -1.0 + d, 1.0 - d)
        return np.where(np.abs(r) > 1.0 - d, 1.0 / d + 1.0 / (2.0 - d), 2.0 / (1.0 - rc**2))

    def F1(self, r):
        return 0.5 * self.theta * self.flog(r)

    def dF1(self, r):
        return 0.5 * self.theta * self.phi(r)

    def d2F1(self, r):
        return 0.5 * self.theta * self.dphi(r)

    def F2(self, r):
        return _concave_quadratic(r)

    def dF2(self, r):
        return -np.asarray(r, dtype=float)

    def d2F2(self, r):
        return -np.ones_like(np.asarray(r, dtype=float))

    def F_exact(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(np.abs(r) > 1.0):
            raise DomainError("exact logarithmic energy needs |u| <= 1")
        return 0.5 * self.theta * (_xlogx(1.0 + r) + _xlogx(1.0 - r)) + _concave_quadratic(r)


@dataclass(frozen=True)
class ObstaclePenalty(Potential):
    """C^2 penalty approximation ``Fobs_delta + (1 - r**2)/2`` of the double obstacle.

    ``phi = Fobs_delta'`` vanishes on ``[-1, 1]``; ``beta_delta = delta * phi``
    converges to ``beta(r) = sign(r) * max(|r| - 1, 0)`` with
    ``|beta - beta_delta| <= delta/2`` and ``0 <= beta_delta' <= 1``.
    """

    delta: float = 1e-2
    name: str = "obstacle"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"penalty delta must lie in (0, 1), got {self.delta}")

    def fobs(self, r):
        r = np.asarray(r, dtype=float)
        d = self.delta
        s = np.abs(r)
        cubic = (s - 1.0) ** 3 / (6.0 * d**2)
        quad = (s - (1.0 + 0.5 * d)) ** 2 / (2.0 * d) + d / 24.0
        return np.where(s <= 1.0, 0.0, np.where(s <= 1.0 + d, cubic, quad))

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        d = self.delta
        s = np.abs(r)
        inner = (s - 1.0) ** 2 / (2.0 * d**2)
        outer = (s - 1.0 - 0.5 * d) / d
        return np.sign(r) * np.where(s <= 1.0, 0.0, np.where(s <= 1.0 + d, inner, outer))

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        d = self.delta
        s = np.abs(r)
        return np.where(s <= 1.0, 0.0, np.where(s <= 1.0 + d, (s - 1.0) / d**2, 1.0 / d))

    def beta_delta(self, r):
        return self.delta * self.phi(r)

    def dbeta_delta(self, r):
        return self.delta * self.dphi(r)

    @staticmethod
    def beta(r):
        r = np.asarray(r, dtype=float)
        return np.sign(r) * np.maximum(np.abs(r) - 1.0, 0.0)

    def F1(self, r):
        return self.fobs(r)

    def dF1(self, r):
        return self.phi(r)

    def d2F1(self, r):
        return self.dphi(r)

    def F2(self, r):
        return _concave_quadratic(r)

    def dF2(self, r):
        return -np.asarray(r, dtype=float)

    def d2F2(self, r):
        return -np.ones_like(np.asarray(r, dtype=float))

    def F_exact(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(np.abs(r) <= 1.0, _concave_quadratic(r), np.inf)


def eval_potential(p: Potential, r):
    """Return ``(F, F', F'')`` at ``r``.

    Raises :class:`~evosurf_ch.errors.DomainError` for the exact logarithmic
    potential at ``|r| >= 1``.
    """
    if isinstance(p, LogPotential) and p.delta == 0.0:
        if np.any(np.abs(np.asarray(r)) >= 1.0):
            raise DomainError("exact logarithmic potential needs |r| < 1")
    return p.F(r), p.dF(r), p.d2F(r)


def beta_eval(p: ObstaclePenalty, r):
    """Return ``(beta_delta(r), beta(r))``."""
    return p.beta_delta(r), p.beta(r)


@dataclass
class InequalityResult:
    passed: bool
    witness: Optional[float]
    worst_violation: float


@dataclass
class AssumptionReport:
    results: Dict[str, InequalityResult]

    @property
    def passed(self):
        return all(res.passed for res in self.results.values())

    def failures(self):
        return {k: v for k, v in self.results.items() if not v.passed}

    def __str__(self):
        lines = []
        for key, res in self.results.items():
            status = "pass" if res.passed else f"FAIL (witness r = {res.witness:.6g})"
            lines.append(f"{key:8s} {status}")
        return "\n".join(lines)


ASSUMPTION_NAMES = ("A1", "A2.2a", "A2.2b", "A2.2c", "A2.3a", "A2.3b", "A2.4")


def check_assumptions(p: SmoothPotential, lo=-10.0, hi=10.0, count=2001, rtol=1e-12) -> AssumptionReport:
    """Sample the growth assumptions of a smooth potential on ``linspace(lo, hi, count)``.

    ``A1``: ``F >= b0``; ``A2.2a``: ``F1 >= 0``; ``A2.2b``: ``F1'' >= 0``;
    ``A2.2c``: ``|F1'| <= a1 |r|^q + b1``; ``A2.3a``: ``|F1'| <= a2 F1 + b2``;
    ``A2.3b``: ``|r F1'| <= a3 F1 + b3``; ``A2.4``: ``|F2'| <= a4 |r| + b4``.
    A failing inequality reports the sample with the largest violation.
    """
    if count < 1:
        raise ValueError("sampling grid must be nonempty")
    r = np.linspace(lo, hi, count)
    a1, a2, a3, a4 = p.alpha
    b0, b1, b2, b3, b4 = p.beta
    F1, dF1, d2F1 = p.F1(r), p.dF1(r), p.d2F1(r)
    F, dF2 = F1 + p.F2(r), p.dF2(r)
    pairs = {
        "A1": (b0 * np.ones_like(r), F),
        "A2.2a": (np.zeros_like(r), F1),
        "A2.2b": (np.zeros_like(r), d2F1),
        "A2.2c": (np.abs(dF1), a1 * np.abs(r) ** p.q + b1),
        "A2.3a": (np.abs(dF1), a2 * F1 + b2),
        "A2.3b": (np.abs(r * dF1), a3 * F1 + b3),
        "A2.4": (np.abs(dF2), a4 * np.abs(r) + b4),
    }
    results = {}
    for key, (small, big) in pairs.items():
        slack = rtol * np.maximum(1.0, np.maximum(np.abs(small), np.abs(big)))
        excess = small - big - slack
        k = int(np.argmax(excess))
        ok = bool(excess[k] <= 0.0)
        results[key] = InequalityResult(ok, None if ok else float(r[k]), float(max(excess[k], 0.0)))
    return AssumptionReport(results)
