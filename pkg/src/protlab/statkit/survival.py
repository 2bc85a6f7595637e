"""
Survival statistics: a percentile-threshold log-rank sweep and a
univariate Cox proportional-hazards fit (Breslow ties, Newton-Raphson).
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from lifelines.statistics import logrank_test
from scipy import stats

from .errors import AllSplitsDegenerate, ConstantExpression, LengthMismatch, NoEvents, NonConvergence, TooShort
from .tables import SurvivalResult

logger = logging.getLogger(__name__)


SWEEP_PERCENTILES = (20, 30, 40, 50, 60, 70, 80)
COX_TOL = 1e-8
COX_MAX_ITER = 50


def _validate(expr, time, event) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(expr, dtype=float)
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=int)
    if not (x.shape == t.shape == e.shape):
        raise LengthMismatch(f"Lengths differ: expr {x.size}, time {t.size}, event {e.size}")
    if x.size < 4:
        raise TooShort(f"Need at least 4 observations, got {x.size}")
    if not set(np.unique(e).tolist()) <= {0, 1}:
        raise LengthMismatch("Event vector must hold only 0/1")
    if e.sum() == 0:
        raise NoEvents("No events observed")
    if np.unique(x).size < 2:
        raise ConstantExpression("Expression has a single distinct value")
    return x, t, e


# =============================================================================
# Log-rank sweep
# =============================================================================


def logrank_split(x: np.ndarray, t: np.ndarray, e: np.ndarray, threshold: float) -> tuple[float, float]:
    """Log-rank chi-square and p for high (> threshold) vs low (<= threshold)."""
    high = x > threshold
    result = logrank_test(t[high], t[~high], event_observed_A=e[high], event_observed_B=e[~high])
    chi2 = float(result.test_statistic)
    p = float(result.p_value)
    if math.isnan(p):
        return 0.0, 1.0
    return chi2, float(np.clip(p, 0.0, 1.0))


def logrank_threshold_sweep(expr: Sequence[float], time: Sequence[float], event: Sequence[int], molecule: str = "") -> SurvivalResult:
    """
    Split at the 20th..80th expression percentiles (step 10) and keep the
    split with the smallest log-rank p (ties go to the lower percentile).
    Splits leaving one side empty are skipped.
    """
    x, t, e = _validate(expr, time, event)

    best = None
    for percentile in SWEEP_PERCENTILES:
        threshold = float(np.percentile(x, percentile))
        high = x > threshold
        if high.all() or not high.any():
            logger.debug(f"[Statkit] Log-rank split at P{percentile} leaves an empty group; skipped")
            continue
        chi2, p = logrank_split(x, t, e, threshold)
        if best is None or p < best[3]:
            best = (percentile, threshold, chi2, p)

    if best is None:
        raise AllSplitsDegenerate("Every percentile split leaves one group empty")
    percentile, threshold, chi2, p = best
    return SurvivalResult(
        molecule=molecule,
        method="discrete",
        statistic=chi2,
        p=p,
        threshold=threshold,
        percentile=percentile,
    )


# =============================================================================
# Cox univariate
# =============================================================================


class _BreslowLikelihood:
    """Partial log-likelihood of one covariate with Breslow tie handling."""

    def __init__(self, x: np.ndarray, t: np.ndarray, e: np.ndarray):
        order = np.argsort(-t, kind="mergesort")  # descending time
        self.x = x[order]
        self.t = t[order]
        self.e = e[order]
        # Within a run of tied times the risk set is everyone up to the run's end
        _, last_index = np.unique(self.t[::-1], return_index=True)
        ends = {}
        for value, idx in zip(np.unique(self.t[::-1]), last_index):
            ends[value] = len(self.t) - 1 - idx
        self.risk_end = np.array([ends[v] for v in self.t])
        self.event_mask = self.e == 1

    def evaluate(self, beta: float) -> tuple[float, float, float]:
        """Return (log-likelihood, score, information) at beta."""
        eta = beta * self.x
        shift = eta.max()
        w = np.exp(eta - shift)
        s0 = np.cumsum(w)[self.risk_end]
        s1 = np.cumsum(w * self.x)[self.risk_end]
        s2 = np.cumsum(w * self.x * self.x)[self.risk_end]

        ev = self.event_mask
        loglik = float(np.sum(eta[ev] - shift - np.log(s0[ev])))
        mean = s1[ev] / s0[ev]
        score = float(np.sum(self.x[ev] - mean))
        info = float(np.sum(s2[ev] / s0[ev] - mean * mean))
        return loglik, score, info


def cox_partial_loglik(expr, time, event, beta: float) -> float:
    """Breslow partial log-likelihood at beta."""
    x, t, e = (np.asarray(v, dtype=float) for v in (expr, time, event))
    return _BreslowLikelihood(x, t, e.astype(int)).evaluate(beta)[0]


def cox_univariate(expr: Sequence[float], time: Sequence[float], event: Sequence[int], molecule: str = "") -> SurvivalResult:
    """
    Fit a one-covariate Cox model by Newton's method from beta = 0.

    Converges when |delta beta| < 1e-8 within 50 iterations; steps that
    lower the likelihood are halved. Returns beta, HR = exp(beta) and the
    Wald p-value.

    Raises:
        ConstantExpression, NoEvents, NonConvergence (separation flagged)
    """
    x, t, e = _validate(expr, time, event)
    model = _BreslowLikelihood(x, t, e)
    scale = float(np.std(x))

    beta = 0.0
    loglik, score, info = model.evaluate(beta)
    converged = False
    for iteration in range(COX_MAX_ITER):
        if info <= 1e-300:
            break
        step = score / info
        new_beta = beta + step
        new_loglik, new_score, new_info = model.evaluate(new_beta)
        halvings = 0
        while new_loglik < loglik - 1e-12 and halvings < 30:
            step /= 2.0
            new_beta = beta + step
            new_loglik, new_score, new_info = model.evaluate(new_beta)
            halvings += 1
        beta, loglik, score, info = new_beta, new_loglik, new_score, new_info
        if abs(step) < COX_TOL:
            converged = True
            break

    separated = abs(beta) * scale > 20.0 or info <= 1e-300
    if not converged or separated:
        if separated:
            raise NonConvergence(
                f"Monotone likelihood for {molecule or 'covariate'}: groups are separated by the covariate",
                separation=True,
            )
        raise NonConvergence(f"Cox fit for {molecule or 'covariate'} did not converge in {COX_MAX_ITER} iterations")

    z = beta * math.sqrt(info)
    p = float(2.0 * stats.norm.sf(abs(z)))
    logger.debug(f"[Statkit] Cox {molecule}: beta={beta:.6g} after {iteration + 1} iterations")
    return SurvivalResult(
        molecule=molecule,
        method="continuous",
        statistic=float(beta),
        p=float(np.clip(p, 0.0, 1.0)),
        hazard_ratio=float(math.exp(beta)),
    )
