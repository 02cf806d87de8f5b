"""Adaptive scatterplot smoothing with a per-coefficient ridge penalty.

The fit alternates three closed-form updates in the transformed basis
``W(t)``:

* coefficients: ``beta = (W'W + sigma2 * Lambda)^-1 W'y``
* residual variance: ``sigma2 = ||y - W beta||^2 / J``
* tuning weights: ``Lambda = diag(0, 0, 1/beta_3^2, ..., 1/beta_P^2)``

starting from ``Lambda = 0`` (ordinary least squares). Progress is monitored
on the penalized negative log-likelihood

    J/2 log(sigma2) + ||y - W beta||^2 / (2 sigma2) + beta' Lambda beta / 2

whose stationary point in ``beta`` is exactly the coefficient update.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .basis import TransformedBasis, make_knots, penalty_fn_values, wand_transform
from .exceptions import DataValidationError, RankDeficiencyError

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-6
MODES = ("adaptive", "baseline")
_TINY = np.finfo(float).tiny


def normalize_mode(mode: str) -> str:
    if mode in ("nonadaptive-baseline", "nonadaptive"):
        return "baseline"
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive-definite system.

    Cholesky first; if that fails on a matrix that is not numerically
    singular, fall back to a least-squares solve with a warning.
    """
    try:
        return linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), b, check_finite=False)
    except linalg.LinAlgError:
        pass
    ev = np.linalg.eigvalsh(A)
    if ev[-1] <= 0 or ev[0] <= ev[-1] * A.shape[0] * np.finfo(float).eps:
        raise RankDeficiencyError(
            "penalized normal equations are singular; reduce the basis dimension P "
            "(or the number of components)"
        )
    msg = "Cholesky factorization failed; using a least-squares solve"
    logger.warning(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def update_beta(W, y, lambda_diag, sigma2: float) -> np.ndarray:
    """Closed-form ridge coefficients ``(W'W + sigma2 Lambda)^-1 W'y``."""
    W = np.asarray(W, dtype=float)
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lambda_diag, dtype=float)
    if W.shape[0] != y.shape[0] or lam.shape != (W.shape[1],):
        raise DataValidationError("update_beta: non-conformable inputs")
    if not np.any(lam) and W.shape[0] < W.shape[1]:
        raise RankDeficiencyError(
            f"{W.shape[0]} observations cannot determine {W.shape[1]} unpenalized "
            "coefficients; use a smaller P"
        )
    A = W.T @ W + np.diag(sigma2 * lam)
    return solve_spd(A, W.T @ y)


def update_lambda(beta, floor: float = BETA_FLOOR, null_dim: int = 2) -> np.ndarray:
    """Adaptive ridge weights ``1 / max(|beta_p|, floor)^2``, zero for the null space."""
    beta = np.asarray(beta, dtype=float)
    lam = 1.0 / np.maximum(np.abs(beta), floor) ** 2
    lam[:null_dim] = 0.0
    return lam


def nonadaptive_lambda(beta, floor: float = BETA_FLOOR, null_dim: int = 2) -> np.ndarray:
    """Single shared weight ``(P - 2) / sum beta_pen^2`` on every penalized entry."""
    beta = np.asarray(beta, dtype=float)
    pen = beta[null_dim:]
    ss = max(float(pen @ pen), pen.size * floor**2)
    lam = np.full(beta.shape, pen.size / ss)
    lam[:null_dim] = 0.0
    return lam


def tuning_update(beta, floor: float = BETA_FLOOR, mode: str = "adaptive") -> np.ndarray:
    if normalize_mode(mode) == "adaptive":
        return update_lambda(beta, floor)
    return nonadaptive_lambda(beta, floor)


def update_sigma2(residuals) -> float:
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size == 0:
        raise DataValidationError("cannot estimate a variance from zero residuals")
    return float(r @ r) / r.size


def lambda_coefficients(beta, floor: float = BETA_FLOOR, null_dim: int = 2) -> np.ndarray:
    """Signed tuning coefficients ``lambda_p = 1 / beta_p`` with the magnitude floor."""
    beta = np.asarray(beta, dtype=float)
    sign = np.where(beta < 0, -1.0, 1.0)
    lam = sign / np.maximum(np.abs(beta), floor)
    lam[:null_dim] = 0.0
    return lam


def penalized_nll(rss: float, n: int, sigma2: float, beta, lambda_diag) -> float:
    s2 = max(sigma2, _TINY)
    beta = np.asarray(beta, dtype=float)
    return 0.5 * n * np.log(s2) + rss / (2.0 * s2) + 0.5 * float(beta @ (lambda_diag * beta))


def converged_step(prev: float, cur: float, tol: float) -> bool:
    return abs(cur - prev) < max(tol * abs(cur), 1e-10)


@dataclass
class SmoothConfig:
    P: int = 40
    max_iter: int = 100
    tol: float = 1e-6
    beta_floor: float = BETA_FLOOR
    mode: str = "adaptive"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.beta_floor > 0:
            raise ValueError("beta_floor must be positive")
        self.mode = normalize_mode(self.mode)


@dataclass
class SmoothFit:
    """Result of :func:`fit_adaptive_smooth`.

    ``lambda_diag`` holds the ridge weights (the squared tuning coefficients)
    that enter ``Lambda``; ``lambda_coef`` gives the signed coefficients.
    """

    basis: TransformedBasis
    beta: np.ndarray
    lambda_diag: np.ndarray
    sigma2: float
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    beta_floor: float = BETA_FLOOR
    mode: str = "adaptive"

    def predict(self, t) -> np.ndarray:
        return self.basis.eval(t) @ self.beta

    @property
    def lambda_coef(self) -> np.ndarray:
        if self.mode == "adaptive":
            return lambda_coefficients(self.beta, self.beta_floor)
        return np.sqrt(self.lambda_diag)

    def lambda_fn(self, grid) -> np.ndarray:
        """Pointwise penalty function on ``grid``; NaN where undefined."""
        return penalty_fn_values(self.basis, self.beta, self.lambda_coef, grid)


def fit_adaptive_smooth(t, y, config: Optional[SmoothConfig] = None, basis: Optional[TransformedBasis] = None) -> SmoothFit:
    """Fit ``f(t) = W(t) beta`` with an adaptively weighted ridge penalty.

    Parameters
    ----------
    t, y : array_like
        Abscissae and observations, same length ``J >= P``.
    config : SmoothConfig, optional
        ``mode="baseline"`` swaps the per-coefficient weights for a single
        shared weight (a conventional one-parameter smoother).
    basis : TransformedBasis, optional
        Defaults to an equally spaced cubic basis over ``[min t, max t]``.

    Returns
    -------
    SmoothFit
    """
    config = config or SmoothConfig()
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if t.shape != y.shape:
        raise DataValidationError(f"t and y lengths differ ({t.size} vs {y.size})")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise DataValidationError("t and y must be finite")
    if basis is None:
        if t.size == 0 or t.min() == t.max():
            raise DataValidationError("t must span a non-degenerate range")
        basis = wand_transform(make_knots((t.min(), t.max()), config.P))
    J, P = t.size, basis.P
    if J < P:
        raise RankDeficiencyError(f"J={J} observations is fewer than P={P} basis functions; use a smaller P")

    W = basis.eval(t)
    WtW, Wty = W.T @ W, W.T @ y
    lam = np.zeros(P)
    sigma2 = 0.0
    trace = []
    converged = False
    for it in range(1, config.max_iter + 1):
        beta = solve_spd(WtW + np.diag(sigma2 * lam), Wty)
        resid = y - W @ beta
        sigma2 = update_sigma2(resid)
        lam = tuning_update(beta, config.beta_floor, config.mode)
        trace.append(penalized_nll(float(resid @ resid), J, sigma2, beta, lam))
        if it > 1 and converged_step(trace[-2], trace[-1], config.tol):
            converged = True
            break
    return SmoothFit(
        basis=basis,
        beta=beta,
        lambda_diag=lam,
        sigma2=sigma2,
        objective_trace=trace,
        converged=converged,
        n_iter=it,
        beta_floor=config.beta_floor,
        mode=config.mode,
    )
