"""Problem parameters, the nonlinearity and the closed-form constants.

The equation is ``(-Δ)^s u + eps u = u^{p-1} - u^{q-1}`` on R^N with
``s in (0, 1)``, ``N > 2s`` and ``q > p > 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidParams

CRITICAL_TOL = 1e-12


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def critical_exponent(N: int, s: float) -> float:
    """Critical Sobolev exponent 2N/(N-2s)."""
    return 2.0 * N / (N - 2.0 * s)


@dataclass(frozen=True)
class ProblemParams:
    N: int
    s: float
    p: float
    q: float
    eps: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N not in (1, 2, 3):
            raise InvalidParams(f"dimension N must be 1, 2 or 3, got {self.N}")
        if not 0.0 < self.s < 1.0:
            raise InvalidParams(f"order s must lie in (0, 1), got {self.s}")
        if not self.N > 2.0 * self.s:
            raise InvalidParams(f"need N > 2s, got N={self.N}, s={self.s}")
        if not self.q > self.p > 2.0:
            raise InvalidParams(f"need q > p > 2, got p={self.p}, q={self.q}")
        if not (self.eps >= 0.0 and math.isfinite(self.eps)):
            raise InvalidParams(f"eps must be a finite nonnegative real, got {self.eps}")

    @property
    def two_star(self) -> float:
        return critical_exponent(self.N, self.s)

    @property
    def regime(self) -> Regime:
        return classify_regime(self)

    @property
    def k(self) -> float:
        """q(p-2)/(2(q-p)); the critical-regime norm ratio."""
        return self.q * (self.p - 2.0) / (2.0 * (self.q - self.p))

    @property
    def alpha(self) -> float:
        """Exponent of eps in front of the q-term after the subcritical rescaling."""
        return (self.q - 2.0) / (self.s * (self.p - 2.0)) - 1.0

    @property
    def eps_star(self) -> float:
        return eps_star(self.p, self.q)

    def with_eps(self, eps: float) -> "ProblemParams":
        return ProblemParams(self.N, self.s, self.p, self.q, eps)

    def nonlinearity(self, truncated: bool = True) -> "Nonlinearity":
        return Nonlinearity(self.p, self.q, mass=self.eps, q_coef=1.0,
                            cap=1.0 if truncated else None)


def classify_regime(params: ProblemParams) -> Regime:
    diff = params.p - params.two_star
    if abs(diff) <= CRITICAL_TOL:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if diff < 0 else Regime.SUPERCRITICAL


def _is_integer(x: float) -> bool:
    return float(x).is_integer()


@dataclass(frozen=True)
class Nonlinearity:
    """f(u) = -mass*u + u^{p-1} - q_coef*u^{q-1} and its primitive F.

    With ``cap`` set, f is frozen at its value at ``cap`` beyond it and is
    zero for negative u (the truncated form used inside the solver). With
    ``cap=None`` only the negative half-line is cut off.
    """

    p: float
    q: float
    mass: float = 0.0
    q_coef: float = 1.0
    cap: Optional[float] = 1.0

    def _raw(self, u, want_f=True, want_F=True):
        p, q = self.p, self.q
        lo = _pow(u, p - 2.0)
        hi = _pow(u, q - p)
        hi = np.multiply(hi, lo, out=hi if (hi is not u and np.ndim(hi)) else None)
        if lo is u:
            lo = np.array(u, dtype=float)
        f = F = None
        if want_f:
            f = lo - self.q_coef * hi
            f -= self.mass
            f *= u
        if want_F:
            lo *= 1.0 / p
            hi *= self.q_coef / q
            lo -= hi
            lo -= 0.5 * self.mass
            lo *= u
            lo *= u
            F = lo
        return f, F

    def _eval(self, u, want_f, want_F):
        scalar = np.ndim(u) == 0
        u = np.asarray(u, dtype=float)
        if self.cap is None:
            uc = np.maximum(u, 0.0)
        else:
            uc = np.clip(u, 0.0, self.cap)
        f, F = self._raw(uc, want_f, want_F)
        if self.cap is not None and (u.max() if u.size else 0.0) > self.cap:
            c = self.cap
            fc, Fc = self._raw(np.float64(c))
            over = u > c
            if want_f:
                f = np.where(over, fc, f)
            if want_F:
                F = np.where(over, Fc + fc * (u - c), F)
        if scalar:
            f = None if f is None else float(f)
            F = None if F is None else float(F)
        return f, F

    def __call__(self, u):
        """Return (f(u), F(u)) for a scalar or array, truncated form."""
        return self._eval(u, True, True)

    def f(self, u):
        return self._eval(u, True, False)[0]

    def F(self, u):
        return self._eval(u, False, True)[1]

    def df(self, u):
        """Derivative of the truncated f (zero where it is frozen)."""
        u = np.asarray(u, dtype=float)
        p, q = self.p, self.q
        up = np.maximum(u, 0.0)
        d = -self.mass + (p - 1.0) * _pow(up, p - 2.0) - self.q_coef * (q - 1.0) * _pow(up, q - 2.0)
        d = np.where(u < 0, 0.0, d)
        if self.cap is not None:
            d = np.where(u > self.cap, 0.0, d)
        return d


def _pow(u, e: float):
    """u**e for u >= 0, using multiplications when e is a small integer."""
    if float(e).is_integer() and 0 <= e <= 16:
        n = int(e)
        if n == 0:
            return np.ones_like(u)
        result = None
        base = u
        while n:
            if n & 1:
                result = base if result is None else result * base
            n >>= 1
            if n:
                base = base * base
        return result
    return np.power(u, e)


def nonlinearity(u, params: ProblemParams, truncated: bool = False):
    """Evaluate (f_eps(u), F_eps(u)).

    The untruncated form is only defined for u >= 0 unless both exponents are
    integers, in which case the literal polynomial is used.
    """
    if truncated:
        return params.nonlinearity(truncated=True)(u)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        if not (_is_integer(params.p) and _is_integer(params.q)):
            raise DomainError("negative argument with non-integer exponent; use truncated=True")
        p, q, eps = params.p, params.q, params.eps
        f = -eps * u + u ** (p - 1) - u ** (q - 1)
        F = u ** p / p - u ** q / q - 0.5 * eps * u * u
        if f.ndim == 0:
            return float(f), float(F)
        return f, F
    return Nonlinearity(params.p, params.q, mass=params.eps, cap=None)(u)


def eps_star(p: float, q: float) -> float:
    """Threshold above which F_eps <= 0 on (0, inf).

    At the threshold F and f share a double root zeta_*, which gives
    zeta_*^{q-p} = q(p-2)/(p(q-2)) and eps_* = zeta_*^{p-2} - zeta_*^{q-2}.
    """
    if not q > p > 2.0:
        raise InvalidParams(f"need q > p > 2, got p={p}, q={q}")
    zeta = (q * (p - 2.0) / (p * (q - 2.0))) ** (1.0 / (q - p))
    return zeta ** (p - 2.0) - zeta ** (q - 2.0)


@dataclass(frozen=True)
class LimitConstants:
    eps_star: float
    supercritical_p_norm: Optional[float] = None
    supercritical_q_norm: Optional[float] = None
    subcritical_two_norm: Optional[float] = None
    subcritical_p_norm: Optional[float] = None
    k: Optional[float] = None


def limit_constants(params: ProblemParams) -> LimitConstants:
    p, q, ts = params.p, params.q, params.two_star
    regime = params.regime
    es = eps_star(p, q)
    if regime is Regime.SUPERCRITICAL:
        return LimitConstants(
            eps_star=es,
            supercritical_p_norm=(q - ts) * p / ((q - p) * ts),
            supercritical_q_norm=(p - ts) * q / ((q - p) * ts),
        )
    if regime is Regime.SUBCRITICAL:
        return LimitConstants(
            eps_star=es,
            subcritical_two_norm=2.0 * (ts - p) / (ts * (p - 2.0)),
            subcritical_p_norm=(ts - 2.0) * p / ((p - 2.0) * ts),
        )
    return LimitConstants(eps_star=es, k=params.k)
