"""
Dimension Planner
Parameter choice for a target dimension alpha and the Hausdorff content chain
of the sets F_m.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from mpmath import mp, mpf
from scipy.special import logsumexp

from qsmetric.config import ARITY_GRID, BETA_LADDER, MP_DIGITS
from qsmetric.constants import constants
from qsmetric.errors import DomainError
from qsmetric.rng import generator
from qsmetric.stochastic import KmEstimate, geometric_mean, sample_log_weights, select_km
from qsmetric.weights import Params

logger = logging.getLogger("qsmetric.dimension")


@dataclass
class DimensionPlan:
    """
    Bookkeeping for a dimension-alpha image: mu, rho* = M^(n-alpha) (2 mu)^alpha
    and the three feasibility inequalities.
    """

    params: Params
    alpha: float
    beta: mpf
    mu: mpf
    log_mu: mpf
    rho_star: mpf
    checks: Dict[str, bool]
    k_m: Dict[int, KmEstimate] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.checks.values())

    @property
    def status(self) -> str:
        if self.feasible:
            return "feasible"
        failed = ", ".join(name for name, ok in self.checks.items() if not ok)
        return f"infeasible: {failed}"

    def log10_epsilon(self, k: int) -> float:
        """log10 of eps = 2n C1 (2 mu / M)^k, the diameter bound for F_m cubes."""
        c = constants(self.params)
        n, M = self.params.n, self.params.M
        with mp.workdps(MP_DIGITS):
            step = mp.log10(2 * self.mu / M)
        return math.log10(2 * n) + c.log10_C1 + k * float(step)

    def to_record(self) -> Dict[str, Any]:
        return {
            "params": self.params.describe(),
            "alpha": self.alpha,
            "beta": mp.nstr(self.beta, 20),
            "mu": mp.nstr(self.mu, 30),
            "log_mu": mp.nstr(self.log_mu, 30),
            "rho_star": mp.nstr(self.rho_star, 20),
            "checks": self.checks,
            "status": self.status,
            "k_m": {str(m): est.to_record() for m, est in sorted(self.k_m.items())},
        }


def make_plan(params: Params, alpha: float) -> DimensionPlan:
    """
    Evaluate the dimension plan for given parameters.

    Args:
        params: Construction parameters; beta = log_M L when not recorded
        alpha: Target dimension in (0, n)

    Raises:
        DomainError: if alpha is outside (0, n)
    """
    n, M = params.n, params.M
    if not 0 < alpha < n:
        raise DomainError(f"alpha must lie in (0, {n}), got {alpha}")
    gm = geometric_mean(params)
    with mp.workdps(MP_DIGITS):
        a = mpf(alpha)
        if params.beta is not None:
            beta = mpf(params.beta.numerator) / params.beta.denominator
        else:
            beta = (mp.log(params.L.numerator) - mp.log(params.L.denominator)) / mp.log(M)
        log_content = (n - a) * mp.log(M) + a * gm.log_mu
        rho_star = mp.exp(log_content + a * mp.log(2))
        checks = {
            "alpha_in_range": bool(a > n / (1 + beta)),
            "mu_below_one": bool(gm.mu < 1),
            "content_ratio_below_2^-alpha": bool(log_content < -a * mp.log(2)),
            "rho_star_below_one": bool(rho_star < 1),
        }
    return DimensionPlan(
        params=params,
        alpha=alpha,
        beta=beta,
        mu=gm.mu,
        log_mu=gm.log_mu,
        rho_star=rho_star,
        checks=checks,
    )


def choose_parameters(
    n: int,
    alpha: float,
    ladder: Sequence[int] = BETA_LADDER,
    arities: Sequence[int] = ARITY_GRID,
) -> Optional[DimensionPlan]:
    """
    Smallest beta on the ladder with alpha > n/(1+beta), then the smallest M
    on the grid giving a feasible plan. Later rungs are tried when a rung has
    no feasible M.

    Returns:
        The plan (re-verified), or the last infeasible plan evaluated, or
        None when no rung admits alpha
    """
    if not 0 < alpha < n:
        raise DomainError(f"alpha must lie in (0, {n}), got {alpha}")
    last = None
    for beta in ladder:
        if not alpha > n / (1 + beta):
            continue
        for M in arities:
            if M <= 2 * n:
                continue
            plan = make_plan(Params.from_beta(n, M, beta), alpha)
            logger.debug(f"beta={beta} M={M}: rho*={mp.nstr(plan.rho_star, 6)} {plan.status}")
            if plan.feasible:
                logger.info(f"📐 alpha={alpha}: chose beta={beta}, M={M} (rho*={mp.nstr(plan.rho_star, 6)})")
                return plan
            last = plan
    logger.warning(f"no feasible plan for n={n}, alpha={alpha} within the ladder")
    return last


def _require_feasible(plan: DimensionPlan):
    if not plan.feasible:
        raise DomainError(f"plan is {plan.status}")


def empirical_content(plan: DimensionPlan, m: int, level: int, samples: int, seed: int) -> float:
    """
    log10 of M^(nk) * mean(1[cube in F_m] * (2n C1 r_k M^-k)^alpha) over
    uniformly sampled level-k cubes.
    """
    params = plan.params
    n, M = params.n, params.M
    rng = generator(seed, "content", m, level)
    log_r = sample_log_weights(params, level, samples, rng)
    inside = log_r <= level * (math.log1p(2.0**-m) + float(plan.log_mu))
    if not inside.any():
        return -math.inf
    log_2nc1 = math.log(2 * n) + constants(params).log10_C1 * math.log(10)
    terms = plan.alpha * (log_2nc1 + log_r[inside] - level * math.log(M))
    log_mean = logsumexp(terms) - math.log(samples)
    return (n * level * math.log(M) + log_mean) / math.log(10)


def content_table(
    plan: DimensionPlan,
    m_values: Sequence[int],
    samples: int,
    seed: int,
    m_empirical: int = 3,
    max_level: int = 2**16,
) -> pd.DataFrame:
    """
    Content bounds for the sets F_m.

    Columns: m, k_m, k_m_found, log10_epsilon, analytic_bound (=(2nC1)^alpha rho*^m),
    log10_analytic_bound, log10_tail_bound (union over j >= m), log10_empirical_content
    (NaN above m_empirical), fraction, ci_low.

    Raises:
        DomainError: if the plan is infeasible
    """
    _require_feasible(plan)
    n = plan.params.n
    c = constants(plan.params)
    with mp.workdps(MP_DIGITS):
        log10_base = plan.alpha * (math.log10(2 * n) + c.log10_C1)
        log10_rho = float(mp.log10(plan.rho_star))
        log10_geometric = float(-mp.log10(1 - plan.rho_star))

    rows = []
    previous = 0
    for m in m_values:
        estimate = select_km(plan, m, samples, seed, max_level, start=previous)
        previous = estimate.k
        plan.k_m[m] = estimate
        log10_bound = log10_base + m * log10_rho
        empirical = (
            empirical_content(plan, m, estimate.k, samples, seed) if m <= m_empirical else math.nan
        )
        rows.append(
            {
                "m": m,
                "k_m": estimate.k,
                "k_m_found": estimate.found,
                "log10_epsilon": plan.log10_epsilon(estimate.k),
                "analytic_bound": 10.0**log10_bound if log10_bound < 300 else math.inf,
                "log10_analytic_bound": log10_bound,
                "log10_tail_bound": log10_bound + log10_geometric,
                "log10_empirical_content": empirical,
                "fraction": estimate.fraction,
                "ci_low": estimate.ci_low,
            }
        )
    return pd.DataFrame(rows)


def content_checks(plan: DimensionPlan, table: pd.DataFrame) -> Dict[str, bool]:
    """Geometric analytic column, monotone decrease, empirical below analytic, k_m >= m."""
    log_bounds = table["log10_analytic_bound"].to_numpy()
    steps = np.diff(log_bounds)
    with mp.workdps(MP_DIGITS):
        log10_rho = float(mp.log10(plan.rho_star))
    empirical = table.dropna(subset=["log10_empirical_content"])
    return {
        "geometric": bool(np.allclose(steps, log10_rho, rtol=1e-10, atol=1e-10)),
        "decreasing": bool((steps < 0).all()),
        "empirical_below_analytic": bool(
            (empirical["log10_empirical_content"] <= empirical["log10_analytic_bound"] + 1e-9).all()
        ),
        "k_m_at_least_m": bool((table["k_m"] >= table["m"]).all()),
        "k_m_nondecreasing": bool((np.diff(table["k_m"].to_numpy()) >= 0).all()),
    }


def lemma_limit_series(n: int, alpha: float, beta, arities: Sequence[int]) -> pd.DataFrame:
    """
    M^(n-alpha) mu^alpha along a sequence of arities with L = M^beta; it tends
    to 0 like M^(n - alpha(1+beta)) when alpha > n/(1+beta).
    """
    if not 0 < alpha < n:
        raise DomainError(f"alpha must lie in (0, {n}), got {alpha}")
    beta = Fraction(beta)
    exponent = n - alpha * (1 + float(beta))
    rows = []
    for M in arities:
        if M <= 2 * n:
            continue
        params = Params.from_beta(n, M, beta)
        gm = geometric_mean(params)
        with mp.workdps(MP_DIGITS):
            log10_value = (n - alpha) * mp.log10(M) + alpha * gm.log_mu / mp.log(10)
        rows.append(
            {
                "M": M,
                "log10_value": float(log10_value),
                "value": float(mp.power(10, log10_value)),
                "asymptotic_exponent": exponent,
            }
        )
    return pd.DataFrame(rows)
