"""Simulated maximum likelihood estimation.

The optimizer is BFGS with a strong-Wolfe line search on the negative
simulated log-likelihood. Line search failures fall back to bounded
bisection; if no acceptable step exists the best point seen so far is
returned with ``converged=False``. Accepted iterates never decrease the
log-likelihood.

Covariance comes in two flavours: classical (inverse of the negative
numeric Hessian, central differences on the analytic score) and robust
(the sandwich H^-1 B H^-1 where B sums outer products of per-individual
score contributions, respecting the panel structure).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernel
from .dataset import ChoiceDataset
from .draws import DrawPlan, DrawTensor, build_draw_tensor, make_plan
from .errors import (ConfigurationError, EstimationError, EvaluationError)
from .modelspec import (FIXED, NEGATED_LOGNORMAL, PREFERENCE_SPACE, WTP_SPACE,
                        ModelSpec, ParameterDef, format_model_spec,
                        parse_model_spec)
from .serialize import canonical_json

_HESSIAN_STEP = 1e-4
_CURVATURE_EPS = 1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6   # infinity norm
    step_tolerance: float = 1e-10
    c1: float = 1e-4
    c2: float = 0.9
    fd_check: bool = False

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ConfigurationError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")


@dataclass
class EstimationResult:
    estimates: np.ndarray
    names: tuple[str, ...]
    classical_se: np.ndarray
    robust_se: np.ndarray
    robust_t: np.ndarray
    ll_final: float
    ll_null: float
    adjusted_rho_sq: float
    n_individuals: int
    n_outcomes: int
    n_draws: int
    converged: bool
    iterations: int
    spec: ModelSpec
    plan: DrawPlan | None = None
    classical_cov: np.ndarray | None = None
    robust_cov: np.ndarray | None = None

    def estimate(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])


# ---------------------------------------------------------------------------
# BFGS with strong Wolfe line search
# ---------------------------------------------------------------------------

@dataclass
class BfgsOutcome:
    x: np.ndarray
    value: float          # maximized objective at x
    gradient: np.ndarray
    converged: bool
    iterations: int
    n_evaluations: int = 0


def bfgs_maximize(value_and_grad, x0, config: OptimizerConfig | None = None) -> BfgsOutcome:
    """Maximize a smooth objective given a joint (value, gradient) callable.

    The callable may signal an infeasible point by returning a non-finite
    value; the line search treats that as a too-long step.
    """
    cfg = config or OptimizerConfig()
    n_evals = 0

    def fg(x):
        nonlocal n_evals
        n_evals += 1
        f, g = value_and_grad(x)
        return -float(f), -np.asarray(g, dtype=float)

    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    if not math.isfinite(f):
        raise EstimationError("objective is not finite at the starting point")

    n = x.size
    H = None  # inverse Hessian approximation; built after the first step
    converged = False
    iterations = 0

    for _ in range(cfg.max_iterations):
        gnorm = float(np.abs(g).max()) if n else 0.0
        if gnorm < cfg.gradient_tolerance:
            converged = True
            break
        d = -g if H is None else -(H @ g)
        if float(d @ g) >= 0.0:  # not a descent direction: reset
            H = None
            d = -g
        scale = float(np.abs(d).max())
        alpha0 = 1.0 if H is not None else min(1.0, 1.0 / max(scale, 1e-12))
        step = _wolfe_line_search(fg, x, f, g, d, cfg, alpha0)
        if step is None and H is not None:
            # Quasi-Newton direction stalled; retry once along the gradient
            # before declaring failure.
            H = None
            d = -g
            alpha0 = min(1.0, 1.0 / max(float(np.abs(d).max()), 1e-12))
            step = _wolfe_line_search(fg, x, f, g, d, cfg, alpha0)
        if step is None:
            break  # line search failed; return best-so-far (current) point
        alpha, f_new, g_new = step
        s = alpha * d
        y = g_new - g
        iterations += 1
        x = x + s
        f, g = f_new, g_new
        if float(np.abs(s).max()) < cfg.step_tolerance:
            converged = True
            break
        sy = float(s @ y)
        if sy > _CURVATURE_EPS * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if H is None:
                H = (sy / float(y @ y)) * np.eye(n)
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        # else: skip the update; curvature too weak for a stable inverse.

    return BfgsOutcome(x=x, value=-f, gradient=-g, converged=converged,
                       iterations=iterations, n_evaluations=n_evals)


def _wolfe_line_search(fg, x, f0, g0, d, cfg, alpha0=1.0,
                       max_bracket=20, max_zoom=40):
    """Strong Wolfe search via bracketing plus bisection zoom.

    Returns (alpha, f_at_step, g_at_step) or None when no acceptable step
    exists within the iteration bounds.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return None

    def phi(a):
        fa, ga = fg(x + a * d)
        dfa = float(ga @ d) if math.isfinite(fa) else math.inf
        return fa, dfa, ga

    def zoom(lo, f_lo, hi):
        best = None
        for _ in range(max_zoom):
            a = 0.5 * (lo + hi)
            fa, dfa, ga = phi(a)
            if not math.isfinite(fa) or fa > f0 + cfg.c1 * a * dphi0 or fa >= f_lo:
                hi = a
            else:
                if abs(dfa) <= -cfg.c2 * dphi0:
                    return a, fa, ga
                best = (a, fa, ga)
                if dfa * (hi - lo) >= 0.0:
                    hi = lo
                lo, f_lo = a, fa
            if abs(hi - lo) < 1e-14 * max(1.0, abs(lo)):
                break
        # Bisection exhausted: accept the best Armijo point if any.
        return best

    prev_a, prev_f = 0.0, f0
    a = alpha0
    for i in range(max_bracket):
        fa, dfa, ga = phi(a)
        if not math.isfinite(fa) or fa > f0 + cfg.c1 * a * dphi0 or (i > 0 and fa >= prev_f):
            return zoom(prev_a, prev_f, a)
        if abs(dfa) <= -cfg.c2 * dphi0:
            return a, fa, ga
        if dfa >= 0.0:
            return zoom(a, fa, prev_a)
        prev_a, prev_f = a, fa
        a *= 2.0
    return None


# ---------------------------------------------------------------------------
# Fit statistics and covariance
# ---------------------------------------------------------------------------

def fit_statistics(ll_final: float, k_params: int, n_outcomes: int,
                   n_alts_available) -> tuple[float, float]:
    """Equal-shares null log-likelihood and the adjusted rho-square.

    ll_null = sum over tasks of ln(1/J_task); the adjustment penalizes the
    number of estimated parameters: 1 - (ll_final - K) / ll_null.
    """
    counts = np.asarray(n_alts_available, dtype=float)
    if counts.size != n_outcomes:
        raise ConfigurationError(f"expected {n_outcomes} per-task counts, "
                                 f"got {counts.size}")
    if n_outcomes <= 0 or np.any(counts < 1):
        raise ConfigurationError("counts must be positive")
    ll_null = -float(np.log(counts).sum())
    adjusted = 1.0 - (ll_final - k_params) / ll_null
    return ll_null, adjusted


def _eigen_floor(mat: np.ndarray, label: str) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < 0.0:
        warnings.warn(f"{label} covariance had negative eigenvalues "
                      f"(min {vals.min():.3e}); floored at zero")
        vals = np.clip(vals, 0.0, None)
        sym = (vecs * vals) @ vecs.T
        sym = 0.5 * (sym + sym.T)
    return sym


def robust_covariance(dataset: ChoiceDataset, spec: ModelSpec, p_hat,
                      tensor: DrawTensor, threads: int = 1):
    """(classical, robust) covariance at a converged point.

    Classical is the inverse of the negative numeric Hessian of the
    simulated log-likelihood (central differences on the analytic score);
    robust is the sandwich H^-1 B H^-1 with B the sum over individuals of
    score outer products. Both are symmetrized and eigen-floored at zero.
    """
    packed = kernel.pack_model(dataset, spec)
    p_hat = np.asarray(p_hat, dtype=float)
    k = p_hat.size

    def total_score(p):
        _, s = kernel.evaluate_packed(packed, p, tensor, need_score=True,
                                      threads=threads)
        return s.sum(axis=0)

    hess = np.empty((k, k))
    for j in range(k):
        h = _HESSIAN_STEP * max(1.0, abs(p_hat[j]))
        ej = np.zeros(k)
        ej[j] = h
        hess[:, j] = (total_score(p_hat + ej) - total_score(p_hat - ej)) / (2.0 * h)
    hess = 0.5 * (hess + hess.T)
    info = -hess  # negative Hessian of the log-likelihood

    # Singularity test on the correlation-scaled information matrix, so the
    # verdict does not depend on parameter units.
    diag = np.diag(info)
    if np.any(diag <= 0.0):
        j = int(np.argmin(diag))
        raise EstimationError(
            f"Hessian is singular; parameter {packed.names[j]!r} appears "
            f"unidentified (no curvature at the reported point)")
    scale = 1.0 / np.sqrt(diag)
    vals, vecs = np.linalg.eigh(info * np.outer(scale, scale))
    if vals.min() < 1e-10:
        j = int(np.argmax(np.abs(vecs[:, int(np.argmin(vals))])))
        raise EstimationError(
            f"Hessian is singular; parameter {packed.names[j]!r} appears "
            f"unidentified (scaled eigenvalue {vals.min():.3e})")
    classical = np.linalg.inv(info)
    classical = _eigen_floor(classical, "classical")

    _, score_pp = kernel.evaluate_packed(packed, p_hat, tensor, need_score=True,
                                         threads=threads)
    bread = np.linalg.inv(info)
    meat = score_pp.T @ score_pp
    robust = bread @ meat @ bread
    robust = _eigen_floor(robust, "robust")
    return classical, robust


# ---------------------------------------------------------------------------
# Main entry points
# ---------------------------------------------------------------------------

def maximize(dataset: ChoiceDataset, spec: ModelSpec, plan: DrawPlan,
             config: OptimizerConfig | None = None, start=None,
             threads: int = 1, compute_covariance: bool = True) -> EstimationResult:
    """Maximize the simulated log-likelihood by BFGS and report diagnostics.

    On a line-search failure the result carries the best point found with
    ``converged=False``; covariance is still attempted so the diagnostics
    are complete.
    """
    cfg = config or OptimizerConfig()
    if plan.dimensions != spec.n_random:
        raise ConfigurationError(f"draw plan has {plan.dimensions} dimensions but "
                                 f"the spec declares {spec.n_random} random parameters")
    packed = kernel.pack_model(dataset, spec)
    tensor = build_draw_tensor(plan, packed.n_persons)
    x0 = spec.start_vector() if start is None else np.asarray(start, dtype=float)
    if not np.isfinite(x0).all():
        raise EstimationError("starting values must be finite")

    def value_and_grad(p):
        try:
            ll_pp, score_pp = kernel.evaluate_packed(packed, p, tensor,
                                                     need_score=True, threads=threads)
        except EvaluationError:
            return -math.inf, np.zeros(packed.n_estimated)
        return math.fsum(ll_pp.tolist()), score_pp.sum(axis=0)

    if cfg.fd_check:
        _finite_difference_check(value_and_grad, x0)

    outcome = bfgs_maximize(value_and_grad, x0, cfg)
    ll_final = outcome.value
    ll_null, adj_rho = fit_statistics(ll_final, packed.n_estimated,
                                      packed.n_tasks, packed.available_counts())

    k = packed.n_estimated
    classical_se = np.full(k, math.nan)
    robust_se = np.full(k, math.nan)
    robust_t = np.full(k, math.nan)
    classical_cov = robust_cov = None
    if compute_covariance:
        try:
            classical_cov, robust_cov = robust_covariance(
                dataset, spec, outcome.x, tensor, threads=threads)
        except (EstimationError, EvaluationError) as e:
            # Degenerate fits (parameters run against the probability floor,
            # unidentified directions) still return full point diagnostics;
            # standard errors stay NaN and serialize as null.
            warnings.warn(f"covariance unavailable at the reported point: {e}")
        else:
            classical_se = np.sqrt(np.diag(classical_cov))
            robust_se = np.sqrt(np.diag(robust_cov))
            with np.errstate(divide="ignore", invalid="ignore"):
                robust_t = np.where(robust_se > 0.0, outcome.x / robust_se,
                                    math.nan)

    return EstimationResult(
        estimates=outcome.x, names=packed.names,
        classical_se=classical_se, robust_se=robust_se, robust_t=robust_t,
        ll_final=ll_final, ll_null=ll_null, adjusted_rho_sq=adj_rho,
        n_individuals=packed.n_persons, n_outcomes=packed.n_tasks,
        n_draws=plan.n_draws, converged=outcome.converged,
        iterations=outcome.iterations, spec=spec, plan=plan,
        classical_cov=classical_cov, robust_cov=robust_cov,
    )


def _finite_difference_check(value_and_grad, x, tol=1e-4):
    _, g = value_and_grad(x)
    for j in range(x.size):
        h = 1e-5 * max(1.0, abs(x[j]))
        e = np.zeros(x.size)
        e[j] = h
        fp, _ = value_and_grad(x + e)
        fm, _ = value_and_grad(x - e)
        fd = (fp - fm) / (2.0 * h)
        denom = max(1.0, abs(fd), abs(g[j]))
        if abs(fd - g[j]) / denom > tol:
            raise EstimationError(f"analytic gradient check failed at "
                                  f"component {j}: analytic {g[j]!r}, fd {fd!r}")


def two_stage_start(dataset: ChoiceDataset, spec: ModelSpec,
                    config: OptimizerConfig | None = None,
                    threads: int = 1) -> np.ndarray:
    """Warm start: a plain fixed-coefficient preference-space logit from
    zeros, mapped into the target spec.

    Random spreads start at 0.5; negated-lognormal locations start at
    ln|stage-1 value|. In wtp space the stage-1 coefficients are converted
    to money metric by dividing through the stage-1 price coefficient.
    """
    stage1 = ModelSpec(
        space=PREFERENCE_SPACE,
        parameters=tuple(ParameterDef(name=p.name, kind=FIXED, init=0.0)
                         for p in spec.parameters),
        terms=spec.terms,
        price_attribute=spec.price_attribute,
        reference_alternative=spec.reference_alternative,
    )
    plan1 = make_plan(n_draws=1, dimensions=0)
    r1 = maximize(dataset, stage1, plan1, config=config, threads=threads,
                  compute_covariance=False)
    beta = {p.name: r1.estimate(p.name) for p in spec.parameters}

    price_name = spec.price_parameter_name()
    scale = 1.0
    if spec.space == WTP_SPACE:
        phi_hat = beta[price_name]
        if abs(phi_hat) < 1e-8:
            phi_hat = -0.01  # degenerate stage 1; any small negative scale works
        scale = phi_hat

    def location(pd, value):
        if pd.is_random and pd.distribution == NEGATED_LOGNORMAL:
            return math.log(max(abs(value), 1e-4))
        return value

    start: list[float] = []
    for pd in spec.parameters:
        b = beta[pd.name]
        if spec.space == WTP_SPACE:
            value = b if pd.name == price_name else b / scale
        else:
            value = b
        start.append(location(pd, value))
        if pd.is_random:
            start.append(0.5)
    return np.asarray(start, dtype=float)


def estimate_pipeline(dataset: ChoiceDataset, spec: ModelSpec, n_draws: int,
                      burn_in: int | None = None, primes=None,
                      config: OptimizerConfig | None = None,
                      threads: int = 1) -> EstimationResult:
    """Two-stage warm start followed by the full mixed-model estimation."""
    kwargs = {} if burn_in is None else {"burn_in": burn_in}
    if spec.n_random == 0:
        n_draws = 1  # the simulated likelihood is exact for fixed models
    plan = make_plan(n_draws=n_draws, dimensions=spec.n_random,
                     primes=primes, **kwargs)
    start = two_stage_start(dataset, spec, config=config, threads=threads)
    return maximize(dataset, spec, plan, config=config, start=start,
                    threads=threads)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def result_to_json(result: EstimationResult) -> str:
    """Single JSON document per the result schema; byte-stable."""
    names = list(result.names)

    def named(values) -> dict:
        return {n: (None if not math.isfinite(float(v)) else float(v))
                for n, v in zip(names, values)}

    plan = result.plan
    doc = {
        "estimates": named(result.estimates),
        "robust_se": named(result.robust_se),
        "robust_t": named(result.robust_t),
        "classical_se": named(result.classical_se),
        "ll_final": float(result.ll_final),
        "ll_null": float(result.ll_null),
        "adjusted_rho_sq": float(result.adjusted_rho_sq),
        "n_individuals": int(result.n_individuals),
        "n_outcomes": int(result.n_outcomes),
        "n_draws": int(result.n_draws),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "spec_echo": format_model_spec(result.spec),
        "draw_plan": None if plan is None else {
            "n_draws": plan.n_draws,
            "dimensions": plan.dimensions,
            "primes": list(plan.primes),
            "burn_in": plan.burn_in,
            "blocking": plan.blocking,
            "permutation_seed": plan.permutation_seed,
        },
    }
    return canonical_json(doc) + "\n"


def result_from_json(text: str) -> EstimationResult:
    """Rebuild a result (without covariance matrices) from its JSON form."""
    try:
        doc = json.loads(text)
        return _result_from_doc(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"malformed result document: {e}")


def _result_from_doc(doc: dict) -> EstimationResult:
    spec = parse_model_spec(doc["spec_echo"])
    names = spec.estimated_names()

    def vector(key) -> np.ndarray:
        mapping = doc.get(key) or {}
        values = [mapping.get(n) for n in names]
        return np.array([math.nan if v is None else float(v) for v in values])

    plan_doc = doc.get("draw_plan")
    plan = None
    if plan_doc:
        plan = DrawPlan(n_draws=plan_doc["n_draws"], dimensions=plan_doc["dimensions"],
                        primes=tuple(plan_doc["primes"]), burn_in=plan_doc["burn_in"],
                        blocking=plan_doc.get("blocking", "contiguous"),
                        permutation_seed=plan_doc.get("permutation_seed"))
    return EstimationResult(
        estimates=vector("estimates"), names=names,
        classical_se=vector("classical_se"), robust_se=vector("robust_se"),
        robust_t=vector("robust_t"),
        ll_final=float(doc["ll_final"]), ll_null=float(doc["ll_null"]),
        adjusted_rho_sq=float(doc["adjusted_rho_sq"]),
        n_individuals=int(doc["n_individuals"]), n_outcomes=int(doc["n_outcomes"]),
        n_draws=int(doc["n_draws"]), converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]), spec=spec, plan=plan,
    )
