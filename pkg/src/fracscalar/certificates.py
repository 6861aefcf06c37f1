"""Numerical certificates for computed ground states.

Each residual is a relative error of an exact identity satisfied by true
solutions (Pohožaev, Nehari, energy level, regime-specific norm relations)
or a qualitative property (a priori bound, radial symmetry and monotonicity,
algebraic tail decay).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import InsufficientTail, WrongRegime, ZeroField
from .problem import Nonlinearity, ProblemParams, Regime, limit_constants
from .spectral import Field, RadialProfile, hs_seminorm_sq, irfft, lt_norm_pow, radialize, rfft

TINY = 1e-300


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    amplitude: float
    r_squared: float
    window: Tuple[float, float]
    points: int = 0


@dataclass
class CertificateReport:
    pohozaev_res: float
    nehari_res: float
    multiplier_res: float
    energy_level_res: float
    apriori_max: float
    asymmetry: float
    monotonicity_violation: float
    decay: Optional[DecayFit] = None
    regime_identities: Dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        """One ``name=value`` line per entry, floats with 17 significant digits."""
        lines = []
        for key in ("pohozaev_res", "nehari_res", "multiplier_res", "energy_level_res",
                    "apriori_max", "asymmetry", "monotonicity_violation"):
            lines.append(f"{key}={_fmt(getattr(self, key))}")
        if self.decay is not None:
            d = self.decay
            lines += [f"decay_exponent={_fmt(d.exponent)}",
                      f"decay_amplitude={_fmt(d.amplitude)}",
                      f"decay_r_squared={_fmt(d.r_squared)}",
                      f"decay_r_min={_fmt(d.window[0])}",
                      f"decay_r_max={_fmt(d.window[1])}"]
        for key in sorted(self.regime_identities):
            lines.append(f"{key}={_fmt(self.regime_identities[key])}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> Dict[str, float]:
        out = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = float(value)
        return out


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _nl(params: ProblemParams, nl: Optional[Nonlinearity]) -> Nonlinearity:
    return nl if nl is not None else params.nonlinearity(truncated=True)


def pohozaev_residual(u: Field, params: ProblemParams, theta: float = 1.0,
                      nl: Nonlinearity = None) -> float:
    """|A - θ 2* int F(u)| / A with A the squared seminorm; 0 for the zero field."""
    if not np.any(u.values):
        return 0.0
    A = hs_seminorm_sq(u, params.s)
    if A == 0.0:
        raise ZeroField("seminorm vanishes on a nonzero field")
    rhs = theta * params.two_star * float(np.sum(_nl(params, nl).F(u.values))) * u.grid.cell_volume
    return abs(A - rhs) / A


def nehari_residual(u: Field, params: ProblemParams, theta: float = 1.0,
                    nl: Nonlinearity = None) -> float:
    """|A - θ int f(u) u| / A; 0 for the zero field."""
    if not np.any(u.values):
        return 0.0
    A = hs_seminorm_sq(u, params.s)
    if A == 0.0:
        raise ZeroField("seminorm vanishes on a nonzero field")
    v = u.values
    rhs = theta * float(np.sum(_nl(params, nl).f(v) * v)) * u.grid.cell_volume
    return abs(A - rhs) / A


def multiplier_residual(w: Field, params: ProblemParams, theta: float,
                        nl: Nonlinearity = None) -> float:
    """Relative L^2 residual of (-Δ)^s w = θ f(w)."""
    v = w.values
    Lw = irfft(rfft(v) * w.grid.symbol(params.s), w.grid.shape)
    rhs = theta * _nl(params, nl).f(v)
    den = max(np.linalg.norm(Lw), np.linalg.norm(rhs), TINY)
    return float(np.linalg.norm(Lw - rhs) / den)


def energy(u: Field, params: ProblemParams, nl: Nonlinearity = None) -> float:
    """½ ||u||^2_{H^s} - int F(u)."""
    A = hs_seminorm_sq(u, params.s)
    return 0.5 * A - float(np.sum(_nl(params, nl).F(u.values))) * u.grid.cell_volume


def energy_level(s_eps: float, params: ProblemParams) -> float:
    """Energy of the ground state predicted from the level: (s/N) S^{N/2s}."""
    return params.s / params.N * s_eps ** (params.N / (2.0 * params.s))


def energy_level_residual(u: Field, s_eps: float, params: ProblemParams) -> float:
    target = energy_level(s_eps, params)
    return abs(energy(u, params) - target) / target


def symmetry_monotonicity(u: Field, r_max: float = None) -> Tuple[float, float]:
    """Asymmetry and largest radial increase, both relative to the center value."""
    prof = radialize(u, r_max=r_max)
    center = abs(u.center)
    if center == 0.0:
        center = max(float(np.max(np.abs(u.values))), TINY)
    return prof.asymmetry / center, prof.monotonicity_violation() / center


def fit_decay(profile: RadialProfile, window: Tuple[float, float],
              box_half_length: float = None, min_points: int = 8,
              noise_rel: float = 1e-12) -> DecayFit:
    """Least-squares fit of log(value) against log(radius) inside ``window``.

    Points whose value is below ``noise_rel`` times the central value are
    dropped as round-off. Raises InsufficientTail with fewer than
    ``min_points`` usable points.
    """
    r_min, r_max = float(window[0]), float(window[1])
    if not 0 < r_min < r_max:
        raise ValueError(f"decay window must satisfy 0 < r_min < r_max, got {window}")
    if box_half_length is not None and r_max > 0.5 * box_half_length * (1 + 1e-12):
        raise ValueError("decay window must stay inside half the box")
    r = profile.radii
    v = profile.values
    floor = noise_rel * abs(v[0]) if len(v) else 0.0
    mask = (r >= r_min) & (r <= r_max) & (v > max(floor, 0.0)) & (v > 0)
    if int(mask.sum()) < min_points:
        raise InsufficientTail(
            f"only {int(mask.sum())} usable tail points in [{r_min:.4g}, {r_max:.4g}]")
    x = np.log(r[mask])
    y = np.log(v[mask])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(exponent=-float(slope), amplitude=math.exp(intercept),
                    r_squared=min(max(r2, 0.0), 1.0), window=(r_min, r_max),
                    points=int(mask.sum()))


def default_decay_window(grid_half_length: float) -> Tuple[float, float]:
    return grid_half_length / 8.0, grid_half_length / 4.0


def _norms(w: Field, params: ProblemParams):
    return (lt_norm_pow(w, 2.0), lt_norm_pow(w, params.p), lt_norm_pow(w, params.q))


def critical_identities(w: Field, params: ProblemParams) -> Dict[str, float]:
    """Norm relations of a normalized critical minimizer.

    ||w||_q^q = k eps ||w||_2^2 and ||w||_p^p = 1 + (k+1) eps ||w||_2^2.
    """
    if params.regime is not Regime.CRITICAL:
        raise WrongRegime(f"critical identities need p = 2*, regime is {params.regime.value}")
    l2, lp, lq = _norms(w, params)
    k, eps = params.k, params.eps
    return {
        "critical_res_q": abs(lq - k * eps * l2) / max(lq, TINY),
        "critical_res_p": abs(lp - 1.0 - (k + 1.0) * eps * l2) / lp,
        "norm2sq": l2, "normp_p": lp, "normq_q": lq,
        "eps_norm2sq": eps * l2, "k": k,
    }


def supercritical_limit_residuals(w: Field, params: ProblemParams) -> Dict[str, float]:
    """Distances of the L^p and L^q powers to their eps -> 0 limits."""
    if params.regime is not Regime.SUPERCRITICAL:
        raise WrongRegime(f"supercritical limits need p > 2*, regime is {params.regime.value}")
    lc = limit_constants(params)
    l2, lp, lq = _norms(w, params)
    # exact finite-eps relations from constraint, Nehari and Pohožaev
    ts, p, q, eps = params.two_star, params.p, params.q, params.eps
    a = p * (q - ts) / (ts * (q - p)) + p * (q - 2.0) / (2.0 * (q - p)) * eps * l2
    b = a - 1.0 - eps * l2
    return {
        "super_res_p_limit": abs(lp - lc.supercritical_p_norm) / lc.supercritical_p_norm,
        "super_res_q_limit": abs(lq - lc.supercritical_q_norm) / lc.supercritical_q_norm,
        "super_res_p_exact": abs(lp - a) / lp,
        "super_res_q_exact": abs(lq - b) / max(lq, TINY),
        "norm2sq": l2, "normp_p": lp, "normq_q": lq, "eps_norm2sq": eps * l2,
    }


def subcritical_limit_residuals(w_prime: Field, params: ProblemParams) -> Dict[str, float]:
    """Affine identity between ||w'||_p^p and ||w'||_2^2 plus distances to the limits.

    ``w_prime`` is the normalized minimizer of the rescaled functional with
    unit mass term.
    """
    if params.regime is not Regime.SUBCRITICAL:
        raise WrongRegime(f"subcritical limits need p < 2*, regime is {params.regime.value}")
    lc = limit_constants(params)
    l2 = lt_norm_pow(w_prime, 2.0)
    lp = lt_norm_pow(w_prime, params.p)
    ts, p, q = params.two_star, params.p, params.q
    predicted = p * (q - 2.0) / (2.0 * (q - p)) * l2 + p * (q - ts) / (ts * (q - p))
    return {
        "sub_res_affine": abs(lp - predicted) / lp,
        "sub_dist_two_norm": abs(l2 - lc.subcritical_two_norm) / lc.subcritical_two_norm,
        "sub_dist_p_norm": abs(lp - lc.subcritical_p_norm) / lc.subcritical_p_norm,
        "sub_norm2sq": l2, "sub_normp_p": lp,
    }


def radial_lt_bound_ratio(u: Field, t: float, radii) -> float:
    """Largest ratio u(r) / (|B_1|^{-1/t} r^{-N/t} ||u||_t) over sample radii.

    A value at most 1 certifies the radial L^t bound for decreasing profiles.
    """
    N = u.grid.dim
    unit_ball = math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)
    norm_t = lt_norm_pow(u, t) ** (1.0 / t)
    prof = radialize(u)
    vals = np.interp(radii, prof.radii, prof.values)
    bound = unit_ball ** (-1.0 / t) * np.asarray(radii) ** (-N / t) * norm_t
    return float(np.max(vals / bound))


def certify(u: Field, w: Field, s_eps: float, params: ProblemParams,
            decay_window: Tuple[float, float] = None,
            w_prime: Field = None) -> CertificateReport:
    """Full report for the ground state u and its normalized minimizer w."""
    poho = pohozaev_residual(w, params, theta=s_eps)
    neh = nehari_residual(w, params, theta=s_eps)
    mult = multiplier_residual(w, params, theta=s_eps)
    e_res = energy_level_residual(u, s_eps, params)
    asym, viol = symmetry_monotonicity(u)
    window = decay_window or default_decay_window(u.grid.L)
    try:
        decay = fit_decay(radialize(u), window, box_half_length=u.grid.L)
    except InsufficientTail:
        decay = None
    regime = params.regime
    ids: Dict[str, float] = {}
    if regime is Regime.CRITICAL:
        ids = critical_identities(w, params)
    elif regime is Regime.SUPERCRITICAL:
        ids = supercritical_limit_residuals(w, params)
    elif w_prime is not None:
        ids = subcritical_limit_residuals(w_prime, params)
    return CertificateReport(
        pohozaev_res=poho, nehari_res=neh, multiplier_res=mult,
        energy_level_res=e_res, apriori_max=float(np.max(u.values)),
        asymmetry=asym, monotonicity_violation=viol, decay=decay,
        regime_identities=ids)
