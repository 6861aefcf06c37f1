"""Small-eps behavior: rescalings, limit problems, sweeps and power-law fits."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bubble
from .certificates import CertificateReport, certify
from .errors import (DegenerateFit, FitSkipped, FracScalarError, InvalidParams,
                     NotSolvable, WrongRegime)
from .minimizer import (Bubble, FromField, Gaussian, InitSpec, MinimizeOptions,
                        MinimizerResult, ground_state, minimize, normalize_constraint)
from .problem import Nonlinearity, ProblemParams, Regime
from .spectral import Field, Grid, lt_norm_pow, radialize

log = logging.getLogger(__name__)


@dataclass
class SweepRecord:
    eps: float
    s_eps: float
    u_center: float
    lambda_eps: Optional[float] = None
    norms: Dict[str, float] = field(default_factory=dict)
    certificate: Optional[CertificateReport] = None
    wall_time: float = 0.0
    converged: bool = True
    iterations: int = 0
    extras: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None
    result: Optional[MinimizerResult] = field(default=None, repr=False)
    ground: Optional[Field] = field(default=None, repr=False)


@dataclass
class ScalingStudy:
    records: List[SweepRecord]
    fits: Dict[str, Tuple[float, float, float]]
    regime: Regime
    params: ProblemParams
    reference: Dict[str, float] = field(default_factory=dict)

    @property
    def successful(self) -> List[SweepRecord]:
        """Records that produced a converged minimizer."""
        return [r for r in self.records if r.error is None and r.converged]

    def column(self, name: str) -> np.ndarray:
        out = []
        for r in self.successful:
            if hasattr(r, name):
                out.append(getattr(r, name))
            elif name in r.norms:
                out.append(r.norms[name])
            else:
                out.append(r.extras.get(name, np.nan))
        return np.asarray(out, dtype=float)


def fit_power_law(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """Least squares of log y on log x: returns (slope, intercept, r^2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise DegenerateFit("a power-law fit needs at least 4 points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateFit("power-law fits need positive data")
    lx, ly = np.log(x), np.log(y)
    if np.log10(x.max() / x.min()) < 0.5:
        raise DegenerateFit("abscissae span less than half a decade")
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def rescale_critical(u: Field, lam: float, params: ProblemParams) -> Field:
    """λ^{(N-2s)/2} u(λ x), realized exactly by shrinking the box by λ."""
    if not lam > 0:
        raise InvalidParams("lambda must be positive")
    a = (params.N - 2.0 * params.s) / 2.0
    return Field(u.grid.scaled(1.0 / lam), u.values * lam ** a)


def concentration_lambda(w: Field, params: ProblemParams, q_star_value: float,
                         rel_tol: float = 1e-6) -> float:
    """Radius λ at which the 2*-power mass of w inside B_λ equals ``q_star_value``.

    The mass curve is continuous and nondecreasing (see bubble.radial_mass_curve);
    λ is located by bisection.
    """
    curve = bubble.radial_mass_curve(w, params.two_star)
    if not curve.total > q_star_value:
        raise NotSolvable(
            f"total mass {curve.total:.6g} does not exceed the target {q_star_value:.6g}")
    lo, hi = 0.0, float(curve.radii[-1])
    q_lo = float(curve(lo))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        q_mid = float(curve(mid))
        if q_mid < q_lo - 1e-15 * curve.total:
            raise FracScalarError("concentration function is not monotone")
        if q_mid < q_star_value:
            lo, q_lo = mid, q_mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    return 0.5 * (lo + hi)


def amplitude_exponent(params: ProblemParams) -> float:
    """Exponent b in u(0) ~ eps^b v(0) for the subcritical rescaling.

    Balancing the mass term against the p-power term under
    u(x) = eps^b v(eps^{1/2s} x) gives b = 1/(p-2).
    """
    return 1.0 / (params.p - 2.0)


def rescaled_q_coefficient(params: ProblemParams) -> float:
    """Coefficient of v^{q-1} after the subcritical rescaling: eps^{(q-p)/(p-2)}."""
    return params.eps ** ((params.q - params.p) / (params.p - 2.0))


def rescale_subcritical(u: Field, params: ProblemParams, exponent: float = None) -> Field:
    """v(x) = eps^{-b} u(eps^{-1/2s} x) with b from ``amplitude_exponent``."""
    if params.regime is not Regime.SUBCRITICAL:
        raise WrongRegime("the subcritical rescaling needs p < 2*")
    if not params.eps > 0:
        raise InvalidParams("the subcritical rescaling needs eps > 0")
    b = amplitude_exponent(params) if exponent is None else exponent
    eps = params.eps
    return Field(u.grid.scaled(eps ** (1.0 / (2.0 * params.s))), u.values * eps ** (-b))


def rescaled_nonlinearity(params: ProblemParams, eps: float = None) -> Nonlinearity:
    """Unit-mass nonlinearity v^{p-1} - c v^{q-1} - v of the rescaled equation."""
    p = params if eps is None else params.with_eps(eps)
    coef = rescaled_q_coefficient(p) if p.eps > 0 else 0.0
    return Nonlinearity(p.p, p.q, mass=1.0, q_coef=coef, cap=None)


def rescaled_minimizer(w: Field, params: ProblemParams) -> Field:
    """Normalized minimizer of the rescaled problem obtained from w exactly.

    Amplitude scaling by eps^{-b} maps the original minimizer onto a
    minimizer of the unit-mass functional; a dilation restores its
    constraint.
    """
    v = Field(w.grid, w.values * params.eps ** (-amplitude_exponent(params)))
    w_prime, _ = normalize_constraint(v, params, nl=rescaled_nonlinearity(params))
    return w_prime


@dataclass
class LimitSolution:
    profile: Field
    level: Optional[float] = None
    minimizer: Optional[MinimizerResult] = None


def solve_limit_problem(params: ProblemParams, grid: Grid, opts: MinimizeOptions = None,
                        init: InitSpec = None, regime: Regime = None) -> LimitSolution:
    """Solution of the eps = 0 problem attached to the regime.

    Critical: the bubble U_1. Subcritical: v_0 with (-Δ)^s v + v = v^{p-1}.
    Supercritical: u_0 with (-Δ)^s u = u^{p-1} - u^{q-1}.
    """
    regime = regime or params.regime
    if regime is not params.regime:
        raise WrongRegime(f"requested {regime.value} limit for a {params.regime.value} problem")
    if regime is Regime.CRITICAL:
        return LimitSolution(bubble.sample_bubble(grid, 1.0, params.s, "U"))
    if regime is Regime.SUBCRITICAL:
        nl = Nonlinearity(params.p, params.q, mass=1.0, q_coef=0.0, cap=None)
        res = minimize(params.with_eps(0.0), grid, init, opts, nl=nl)
        v0 = res.w.dilated(res.s_eps ** (1.0 / (2.0 * params.s)))
        return LimitSolution(v0, res.s_eps, res)
    # with eps = 0 constants cost nothing on the torus and absorb the mass, so
    # the iterate is confined to the inscribed ball
    opts = opts or MinimizeOptions()
    if opts.support_radius is None:
        opts = replace(opts, support_radius=grid.L)
    res = minimize(params.with_eps(0.0), grid, init, opts)
    return LimitSolution(ground_state(res, params.with_eps(0.0), require_converged=False),
                         res.s_eps, res)


def _spline(prof):
    from scipy.interpolate import CubicSpline

    return CubicSpline(prof.radii, prof.values, bc_type=((1, 0.0), "not-a-knot"))


def radial_interp(source: Field, target_grid: Grid) -> Field:
    """Evaluate the radial profile of ``source`` at the radii of ``target_grid``.

    Cubic spline through the shell values with zero slope at the origin.
    Cores only a few cells wide make linear interpolation too coarse.
    Radii beyond the source's inscribed ball get zero.
    """
    prof = radialize(source)
    spline = _spline(prof)
    r = target_grid.radius
    vals = np.where(r <= prof.radii[-1], spline(np.minimum(r, prof.radii[-1])), 0.0)
    return Field(target_grid, vals)


def profile_distance_max(a: Field, b: Field) -> float:
    """Max-norm distance of the radial profiles of a and b.

    Compared at the shell radii of ``a`` inside both inscribed balls, so the
    lattice anisotropy of either field does not enter.
    """
    pa, pb = radialize(a), radialize(b)
    r_max = min(pa.radii[-1], pb.radii[-1])
    keep = pa.radii <= r_max
    return float(np.max(np.abs(pa.values[keep] - _spline(pb)(pa.radii[keep]))))


def profile_distance_lq(a: Field, b: Field, q: float) -> float:
    """L^q distance of two radial fields over the common inscribed ball."""
    b_on_a = radial_interp(b, a.grid)
    inside = a.grid.radius <= min(a.grid.L, b.grid.L)
    diff = np.abs(a.values - b_on_a.values)[inside]
    return float(np.sum(diff ** q) * a.grid.cell_volume) ** (1.0 / q)


def _record(params: ProblemParams, res: MinimizerResult, t0: float) -> SweepRecord:
    u = ground_state(res, params, require_converged=False)
    w = res.w
    w_prime = rescaled_minimizer(w, params) if params.regime is Regime.SUBCRITICAL else None
    cert = certify(u, w, res.s_eps, params, w_prime=w_prime)
    norms = {"norm2sq": lt_norm_pow(w, 2.0), "normp_p": lt_norm_pow(w, params.p),
             "normq_q": lt_norm_pow(w, params.q)}
    rec = SweepRecord(eps=params.eps, s_eps=res.s_eps, u_center=u.center, norms=norms,
                      certificate=cert, converged=res.converged, iterations=res.iterations,
                      result=res, ground=u)
    rec.extras["eps_norm2sq"] = params.eps * norms["norm2sq"]
    if w_prime is not None:
        rec.extras.update(cert.regime_identities)
    rec.wall_time = time.perf_counter() - t0
    return rec


def sweep(params_base: ProblemParams, eps_list: Sequence[float], grid: Grid,
          opts: MinimizeOptions = None, init: InitSpec = None, warm_start: bool = True,
          limit_init: InitSpec = None, keep_fields: bool = True) -> ScalingStudy:
    """Solve for each eps (decreasing), certify, and fit the regime's scaling laws."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise InvalidParams("a sweep needs at least 4 eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParams("eps values must be strictly decreasing")
    es = params_base.eps_star
    if eps_list[0] >= es:
        raise InvalidParams(f"eps values must stay below eps_* = {es:.10g}")
    regime = params_base.regime
    opts = opts or MinimizeOptions()
    records: List[SweepRecord] = []
    prev_raw = None
    for eps in eps_list:
        params = params_base.with_eps(eps)
        t0 = time.perf_counter()
        try:
            start = FromField(prev_raw) if (warm_start and prev_raw is not None) else init
            res = minimize(params, grid, start, opts)
            rec = _record(params, res, t0)
            prev_raw = res.raw
        except FracScalarError as exc:
            log.warning("eps=%g failed: %s", eps, exc)
            rec = SweepRecord(eps=eps, s_eps=math.nan, u_center=math.nan, error=str(exc),
                              converged=False, wall_time=time.perf_counter() - t0)
        records.append(rec)
        log.info("eps=%.6g S=%.10g u(0)=%.6g iterations=%d converged=%s %.1fs", eps, rec.s_eps,
                 rec.u_center, rec.iterations, rec.converged, rec.wall_time)

    study = ScalingStudy(records=records, fits={}, regime=regime, params=params_base)
    _regime_analysis(study, grid, opts, limit_init)
    if not keep_fields:
        for r in records:
            r.result = None
            r.ground = None
    return study


def _regime_analysis(study: ScalingStudy, grid: Grid, opts: MinimizeOptions,
                     limit_init: InitSpec):
    params = study.params
    ok = study.successful
    if study.regime is Regime.CRITICAL:
        sstar = bubble.compute_S_star(grid, params.s, strict=False)
        qs = bubble.q_star(grid, params.s, sstar.value)
        study.reference.update(S_star=sstar.value, q_star=qs,
                               S_star_self_consistency=sstar.self_consistency)
        for r in ok:
            try:
                r.lambda_eps = concentration_lambda(r.result.w, params.with_eps(r.eps), qs)
            except FracScalarError as exc:
                r.extras["lambda_error"] = 1.0
                log.warning("lambda at eps=%g: %s", r.eps, exc)
                continue
            r.extras["sigma"] = r.s_eps - sstar.value
            v = rescale_critical(r.ground, r.lambda_eps, params)
            u1 = bubble.sample_bubble(v.grid, 1.0, params.s, "U")
            r.extras["dist_to_bubble"] = float(np.max(np.abs(v.values - u1.values)))
        _fit(study, "u_center", lambda r: r.u_center)
        _fit(study, "lambda_eps", lambda r: r.lambda_eps)
        _fit(study, "sigma", lambda r: r.extras.get("sigma"))
    elif study.regime is Regime.SUBCRITICAL:
        lim = solve_limit_problem(params, grid, opts, limit_init)
        v0 = lim.profile
        study.reference.update(v0_center=v0.center, limit_level=lim.level)
        b = amplitude_exponent(params)
        for r in ok:
            r.extras["center_ratio"] = r.u_center * r.eps ** (-b)
            r.extras["center_ratio_alt"] = r.u_center * r.eps ** (-1.0 / (params.s * (params.p - 2.0)))
            v = rescale_subcritical(r.ground, params.with_eps(r.eps))
            r.extras["dist_to_limit"] = profile_distance_max(v, v0)
        _fit(study, "u_center", lambda r: r.u_center)
        study.reference["_limit_field"] = v0
    else:
        lim = solve_limit_problem(params, grid, opts, limit_init)
        u0 = lim.profile
        study.reference.update(S_0=lim.level)
        for r in ok:
            r.extras["gap"] = r.s_eps - lim.level
            r.extras["dist_to_limit"] = profile_distance_lq(r.ground, u0, params.q)
        _fit(study, "gap", lambda r: r.extras.get("gap"))
        study.reference["_limit_field"] = u0


def _fit(study: ScalingStudy, name: str, getter):
    pts = []
    for r in study.successful:
        y = getter(r)
        if y is not None and np.isfinite(y) and y > 0:
            pts.append((r.eps, y))
    if len(pts) < 4:
        study.fits[name] = (math.nan, math.nan, math.nan)
        log.warning("fit of %s skipped: %d usable records", name, len(pts))
        return
    try:
        study.fits[name] = fit_power_law(pts)
    except DegenerateFit as exc:
        log.warning("fit of %s skipped: %s", name, exc)
        study.fits[name] = (math.nan, math.nan, math.nan)


def require_fits(study: ScalingStudy):
    if len(study.successful) < 4:
        raise FitSkipped(f"only {len(study.successful)} successful records")
