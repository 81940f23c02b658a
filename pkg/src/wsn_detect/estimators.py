"""Constrained maximum-likelihood estimation of the per-node signal parameters.

Two estimators operate on an :class:`~wsn_detect.model.EnergyMatrix` under the
Gaussian energy model: a closed-form per-node estimate that maximizes each
marginal likelihood over the half line, and a joint estimate that maximizes
the full likelihood over the nonnegative cone by projected gradient ascent.
The covariance structure (rank-one plus diagonal) keeps every likelihood and
gradient evaluation closed-form and cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EnergyMatrix

__all__ = [
    "SummaryMoments",
    "LikelihoodEval",
    "GlobalMleResult",
    "summary_moments",
    "local_mle",
    "marginal_loglik",
    "cov_inverse_logdet",
    "joint_loglik_grad",
    "global_mle",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SummaryMoments:
    """Per-node first and second sample moments of the energies."""

    m1: np.ndarray  # (N,) sample means
    m2: np.ndarray  # (N,) sample second moments
    count: int  # windows per node

    def __post_init__(self) -> None:
        if np.any(self.m2 < 0):
            raise ValueError("second moments must be nonnegative")
        # Second moment dominates squared mean up to rounding.
        slack = 64.0 * np.finfo(float).eps * np.maximum(self.m2, 1.0)
        if np.any(self.m2 - self.m1**2 < -slack):
            raise ValueError("invalid moments: m2 < m1**2 beyond rounding")


@dataclass(frozen=True)
class LikelihoodEval:
    """Joint log-likelihood value and its gradient in theta."""

    value: float
    gradient: np.ndarray  # (N,)


@dataclass(frozen=True)
class GlobalMleResult:
    """Outcome of the joint constrained maximization."""

    theta: np.ndarray  # (N,) nonnegative
    converged: bool
    iterations: int
    kkt_residual: float


def summary_moments(data: EnergyMatrix) -> SummaryMoments:
    """Exact per-node sample mean and second moment of the energy windows."""
    z = data.values
    return SummaryMoments(m1=z.mean(axis=1), m2=(z**2).mean(axis=1), count=z.shape[1])


def local_mle(moments: SummaryMoments, m: int) -> np.ndarray:
    """Closed-form per-node constrained MLE from the summary moments.

    Each node's marginal likelihood has a unique stationary point on the half
    line given by the positive root of a quadratic in theta; the estimate is
    that root clamped to zero.  The radicand can only go negative through
    rounding at the clamp boundary and is clamped to zero before the root.

    Parameters
    ----------
    moments : SummaryMoments
        Output of :func:`summary_moments`.
    m : int
        Samples per energy window.

    Returns
    -------
    ndarray
        Nonnegative estimate per node.
    """
    root_m = np.sqrt(m)
    b = m + 2.0 + root_m * moments.m1
    c = moments.m2 + root_m * moments.m1 - 1.0
    radicand = np.maximum(b * b + 4.0 * c, 0.0)
    return np.maximum(0.5 * (np.sqrt(radicand) - b), 0.0)


def marginal_loglik(zk: np.ndarray, theta_k: float, m: int) -> float:
    """Log-likelihood of one node's windows under its marginal Gaussian model.

    The marginal law of a single energy is normal with mean
    ``sqrt(m) * theta_k`` and standard deviation ``1 + theta_k``.  All
    constants are included, so values are comparable with the joint form.
    """
    if theta_k < 0:
        raise ValueError("theta_k must be nonnegative")
    zk = np.asarray(zk, dtype=float)
    count = zk.size
    resid = (zk - np.sqrt(m) * theta_k) / (1.0 + theta_k)
    return float(
        -0.5 * count * _LOG_2PI - count * np.log1p(theta_k) - 0.5 * np.sum(resid**2)
    )


def cov_inverse_logdet(theta: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of the energy covariance at ``theta``.

    Exploits the rank-one-plus-diagonal structure: with
    ``d = 1 + 2 theta`` and ``u = theta / d``,

    ``inv = diag(1/d) - u u^T / (1 + theta . u)``
    ``logdet = sum(log d) + log(1 + theta . u)``
    """
    theta = np.asarray(theta, dtype=float)
    d = 1.0 + 2.0 * theta
    u = theta / d
    denom = 1.0 + theta @ u
    inv = np.diag(1.0 / d) - np.outer(u, u) / denom
    logdet = float(np.sum(np.log(d)) + np.log(denom))
    return inv, logdet


def _loglik_and_grad(
    theta: np.ndarray,
    mean_z: np.ndarray,
    second_z: np.ndarray,
    count: int,
    m: int,
) -> tuple[float, np.ndarray]:
    """Joint log-likelihood and gradient from sufficient statistics.

    ``mean_z`` is the per-node window mean and ``second_z`` the uncentered
    second-moment matrix ``(1/L) sum_l z_l z_l^T``; together they make every
    evaluation independent of the window count.
    """
    n = theta.size
    inv, logdet = cov_inverse_logdet(theta)
    mu = np.sqrt(m) * theta
    # (1/L) sum_l q_l q_l^T for q_l = z_l - mu.
    centered = (
        second_z - np.outer(mean_z, mu) - np.outer(mu, mean_z) + np.outer(mu, mu)
    )
    quad = float(np.sum(inv * centered))
    value = -0.5 * count * (n * _LOG_2PI + logdet + quad)
    inv_centered = inv @ centered
    inv_centered_inv = inv_centered @ inv
    gradient = count * (
        -(inv @ theta + np.diag(inv))
        + np.sqrt(m) * (inv @ (mean_z - mu))
        + inv_centered_inv @ theta
        + np.diag(inv_centered_inv)
    )
    return value, gradient


def joint_loglik_grad(data: EnergyMatrix, theta: np.ndarray, m: int) -> LikelihoodEval:
    """Joint Gaussian log-likelihood of all windows and its gradient.

    Parameters
    ----------
    data : EnergyMatrix
        Observed energies, one row per node.
    theta : ndarray
        Nonnegative parameter vector.
    m : int
        Samples per energy window.

    Raises
    ------
    ValueError
        If ``theta`` leaves the cone or the result is non-finite.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    z = data.values
    count = z.shape[1]
    value, gradient = _loglik_and_grad(
        theta, z.mean(axis=1), (z @ z.T) / count, count, m
    )
    if not (np.isfinite(value) and np.all(np.isfinite(gradient))):
        raise ValueError("non-finite likelihood evaluation; invalid data or theta")
    return LikelihoodEval(value=value, gradient=gradient)


def global_mle(
    data: EnergyMatrix,
    m: int,
    init: np.ndarray | None = None,
    max_iterations: int = 500,
    tolerance: float = 1e-6,
) -> GlobalMleResult:
    """Joint constrained MLE over the nonnegative cone.

    Projected gradient ascent with Armijo backtracking, warm-started from the
    closed-form per-node estimate.  The first step uses the inverse null
    information scale ``1 / (L (m + 2))``; later steps are proposed by the
    Barzilai-Borwein curvature estimate and safeguarded by the line search.
    Convergence is declared when the projected-gradient residual

    ``max_k | theta_k - max(theta_k + g_k / (L (m + 2)), 0) |``

    drops below ``tolerance``.  A run that exhausts ``max_iterations`` returns
    the best iterate flagged as non-converged; it never fails silently.
    """
    z = data.values
    count = z.shape[1]
    mean_z = z.mean(axis=1)
    second_z = (z @ z.T) / count

    if init is None:
        init = local_mle(summary_moments(data), m)
    theta = np.maximum(np.asarray(init, dtype=float), 0.0)

    fisher_scale = count * (m + 2.0)
    base_step = 1.0 / fisher_scale
    step = base_step
    value, grad = _loglik_and_grad(theta, mean_z, second_z, count, m)

    iterations = 0
    residual = np.inf
    for iterations in range(max_iterations + 1):
        residual = float(
            np.max(np.abs(theta - np.maximum(theta + grad / fisher_scale, 0.0)))
        )
        if residual < tolerance:
            return GlobalMleResult(theta=theta, converged=True, iterations=iterations, kkt_residual=residual)
        if iterations == max_iterations:
            break
        trial_step = step
        for _ in range(60):
            candidate = np.maximum(theta + trial_step * grad, 0.0)
            cand_value, cand_grad = _loglik_and_grad(
                candidate, mean_z, second_z, count, m
            )
            if cand_value >= value + 1e-4 * grad @ (candidate - theta):
                move = candidate - theta
                grad_change = cand_grad - grad
                theta, value, grad = candidate, cand_value, cand_grad
                curvature = -(move @ grad_change)
                if curvature > 0:
                    step = float((move @ move) / curvature)
                    step = min(max(step, 1e-3 * base_step), 1e6 * base_step)
                else:
                    step = base_step
                break
            trial_step *= 0.5
        else:
            # Line search cannot make progress; report the current iterate.
            break
    return GlobalMleResult(theta=theta, converged=False, iterations=iterations, kkt_residual=residual)
