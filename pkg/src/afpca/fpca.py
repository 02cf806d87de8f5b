"""Adaptive functional principal component analysis.

The mean ``mu(t) = W(t) beta_mu`` and components ``phi_k(t) = W(t) beta_k``
share the transformed spline basis of :mod:`afpca.basis`. Fitting alternates

1. a joint penalized least-squares solve for all spline coefficients given
   the scores,
2. best linear unbiased predictions of the scores given the curves,
3. tuning-weight and residual-variance updates,

with a rotation after the score step that makes the components orthonormal,
uncorrelated and ordered by variance. The number of components is finally
cut back to the smallest count reaching the requested share of variance.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .basis import TransformedBasis, make_knots, penalty_fn_values, wand_transform
from .data import FunctionalDataset
from .exceptions import DataValidationError, NumericalFailureError
from .smooth import (
    BETA_FLOOR,
    converged_step,
    normalize_mode,
    solve_spd,
    tuning_update,
    _TINY,
)

logger = logging.getLogger(__name__)

QUAD_POINTS = 1024
# components whose variance falls below this fraction of the largest are dropped
PRUNE_RTOL = 1e-10


@dataclass
class FpcaConfig:
    """Settings for :func:`fit_afpca`.

    ``mode`` is ``"adaptive"`` (one weight per spline coefficient) or
    ``"baseline"`` (one shared weight per function).
    """

    P: int = 40
    K_init: int = 15
    pve: float = 0.99
    max_iter: int = 200
    tol: float = 1e-6
    beta_floor: float = BETA_FLOOR
    mode: str = "adaptive"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.K_init < self.P:
            raise ValueError(f"K_init must satisfy 1 <= K_init < P, got K_init={self.K_init}, P={self.P}")
        if not 0 < self.pve <= 1:
            raise ValueError("pve must lie in (0, 1]")
        if self.max_iter < 1 or not self.tol > 0 or not self.beta_floor > 0:
            raise ValueError("max_iter, tol and beta_floor must be positive")
        self.mode = normalize_mode(self.mode)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Trapezoid rule on an equally spaced grid with the basis pre-evaluated."""

    grid: np.ndarray
    weights: np.ndarray
    W: np.ndarray

    @classmethod
    def build(cls, basis: TransformedBasis, n: int = QUAD_POINTS) -> "QuadratureGrid":
        a, b = basis.domain
        grid = np.linspace(a, b, n)
        weights = np.full(n, (b - a) / (n - 1))
        weights[[0, -1]] *= 0.5
        return cls(grid, weights, basis.eval(grid))

    def gram(self, coef: np.ndarray) -> np.ndarray:
        """``int f_k f_l`` for the functions with basis coefficients in the columns of ``coef``."""
        F = self.W @ coef
        return F.T @ (self.weights[:, None] * F)


class Design:
    """Per-subject basis evaluations, grouped by identical observation grids.

    Subjects sharing a grid share ``W`` and ``W'W``, so the normal equations
    reduce to one Kronecker product per group.
    """

    def __init__(self, data: FunctionalDataset, basis: TransformedBasis):
        self.data = data
        self.basis = basis
        self.P = basis.P
        self.n_subjects = data.n_subjects
        self.n_obs = data.n_obs
        keyed = {}
        for i, ti in enumerate(data.t):
            keyed.setdefault(ti.tobytes(), []).append(i)
        self.groups = []
        for members in keyed.values():
            idx = np.asarray(members)
            W = basis.eval(data.t[idx[0]])
            Y = np.vstack([data.y[i] for i in idx])
            self.groups.append((idx, W, W.T @ W, Y))
        self.Wty = np.empty((self.n_subjects, self.P))
        for idx, W, _, Y in self.groups:
            self.Wty[idx] = Y @ W


def _thetas(scores: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(scores.shape[0]), scores])


def update_coefficients(design: Design, scores, lambdas, sigma2: float):
    """Joint penalized solve for the mean and component coefficients.

    Solves ``(Theta'Theta + sigma2 Lambda) B = Theta'Y`` where subject ``i``
    contributes ``theta_i (x) W(t_i)`` with ``theta_i = (1, xi_i)``. The
    design is never formed; ``Theta'Theta`` and ``Theta'Y`` are accumulated
    grid group by grid group.

    Parameters
    ----------
    design : Design
    scores : ndarray, shape (I, K)
    lambdas : ndarray, shape (K + 1, P)
        Diagonal tuning weights, mean first.
    sigma2 : float

    Returns
    -------
    beta_mu : ndarray, shape (P,)
    beta_phi : ndarray, shape (P, K)
    """
    scores = np.asarray(scores, dtype=float).reshape(design.n_subjects, -1)
    K1 = scores.shape[1] + 1
    P = design.P
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (K1, P):
        raise DataValidationError(f"lambdas must have shape {(K1, P)}, got {lambdas.shape}")
    theta = _thetas(scores)
    A = np.zeros((K1, P, K1, P))
    for idx, _, G, _ in design.groups:
        M = theta[idx].T @ theta[idx]
        A += M[:, None, :, None] * G[None, :, None, :]
    A = A.reshape(K1 * P, K1 * P)
    A[np.diag_indices_from(A)] += sigma2 * lambdas.ravel()
    rhs = (theta.T @ design.Wty).ravel()
    B = solve_spd(A, rhs).reshape(K1, P)
    return B[0].copy(), B[1:].T.copy()


def blup_scores(phi_values, centered, sigma2: float) -> np.ndarray:
    """Best linear unbiased predictor of one subject's scores.

    ``xi = (Phi'Phi / sigma2 + I)^-1 Phi' (y - mu) / sigma2``, the posterior
    mean under unit-variance score priors. ``centered`` may also be a
    ``J x n`` matrix holding several subjects sharing ``phi_values``.
    """
    Phi = np.asarray(phi_values, dtype=float)
    K = Phi.shape[1]
    A = Phi.T @ Phi + sigma2 * np.eye(K)
    return np.linalg.solve(A, Phi.T @ np.asarray(centered, dtype=float))


def _all_scores(design: Design, beta_mu, beta_phi, sigma2) -> np.ndarray:
    K = beta_phi.shape[1]
    out = np.zeros((design.n_subjects, K))
    if K == 0:
        return out
    for idx, W, _, Y in design.groups:
        centered = (Y - W @ beta_mu).T
        out[idx] = blup_scores(W @ beta_phi, centered, max(sigma2, _TINY)).T
    return out


def _residual_ss(design: Design, beta_mu, beta_phi, scores) -> float:
    rss = 0.0
    for idx, W, _, Y in design.groups:
        fit = W @ beta_mu + (scores[idx] @ beta_phi.T) @ W.T
        rss += float(np.sum((Y - fit) ** 2))
    return rss


def update_sigma2_fpca(design: Design, beta_mu, beta_phi, scores) -> float:
    """Pooled mean squared residual over all observations."""
    if design.n_obs == 0:
        raise DataValidationError("no observations")
    return _residual_ss(design, beta_mu, beta_phi, scores) / design.n_obs


def update_tuning(beta_mu, beta_phi, floor: float = BETA_FLOOR, mode: str = "adaptive") -> np.ndarray:
    """Tuning weights for every function, stacked as ``(K + 1) x P`` (mean first)."""
    coef = np.column_stack([beta_mu, beta_phi]).T
    return np.vstack([tuning_update(c, floor, mode) for c in coef])


def center_scores(beta_mu, beta_phi, scores):
    """Move the score means into the mean function.

    ``mu + Phi xi_i`` is unchanged; without this the mean and components can
    drift together along ``mu + c phi_k``, ``xi_ik - c``.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape[1] == 0:
        return np.asarray(beta_mu, dtype=float).copy(), scores.copy()
    shift = scores.mean(axis=0)
    return beta_mu + beta_phi @ shift, scores - shift


def orthogonalize(beta_phi, scores, quad: QuadratureGrid):
    """Rotate components to be orthonormal, uncorrelated and variance-ordered.

    With ``G`` the Gram matrix of the current components and ``S`` the
    second-moment matrix of the scores, ``G^(1/2) S G^(1/2) = V D V'`` gives
    new coefficients ``beta_phi G^(-1/2) V`` and scores ``xi G^(1/2) V``. The
    product ``sum_k xi_ik phi_k(t)`` is unchanged. Signs are fixed so each
    component's largest-magnitude value on the quadrature grid is positive.

    Returns
    -------
    beta_phi, scores : ndarray
    variances : ndarray
        Score variances of the unit-norm components, non-increasing.
    """
    beta_phi = np.asarray(beta_phi, dtype=float)
    scores = np.asarray(scores, dtype=float)
    K = beta_phi.shape[1]
    if K == 0:
        return beta_phi.copy(), scores.copy(), np.zeros(0)
    G = quad.gram(beta_phi)
    g, E = np.linalg.eigh(0.5 * (G + G.T))
    if not np.all(np.isfinite(g)) or g[-1] <= 0:
        raise NumericalFailureError("component Gram matrix is degenerate")
    g = np.maximum(g, g[-1] * 1e-14)
    G_half = (E * np.sqrt(g)) @ E.T
    G_ihalf = (E / np.sqrt(g)) @ E.T
    S = scores.T @ scores / scores.shape[0]
    M = G_half @ S @ G_half
    d, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(d, kind="stable")[::-1]
    d, V = np.maximum(d[order], 0.0), V[:, order]
    new_beta = beta_phi @ G_ihalf @ V
    new_scores = scores @ G_half @ V
    values = quad.W @ new_beta
    peak = values[np.argmax(np.abs(values), axis=0), np.arange(K)]
    signs = np.where(peak < 0, -1.0, 1.0)
    return new_beta * signs, new_scores * signs, d


def select_components(variances, pve: float, total: Optional[float] = None) -> int:
    """Smallest count whose cumulative variance share reaches ``pve`` (at least 1).

    Shares are taken relative to ``total`` (default: the sum of ``variances``).
    """
    v = np.asarray(variances, dtype=float)
    if v.size == 0:
        return 0
    total = float(v.sum()) if total is None else float(total)
    if total <= 0:
        return 1
    share = np.cumsum(v) / total
    return int(min(np.searchsorted(share, pve - 1e-12) + 1, v.size))


@dataclass
class FpcaModel:
    """Fitted (adaptive) FPCA model.

    Attributes
    ----------
    basis : TransformedBasis
    beta_mu : ndarray, shape (P,)
    beta_phi : ndarray, shape (P, K)
    scores : ndarray, shape (I, K)
    lambda_mu : ndarray, shape (P,)
        Ridge weights of the mean.
    lambda_phi : ndarray, shape (P, K)
        Ridge weights, one column per component. They apply to the
        component coefficients scaled by ``sqrt(eigenvalues)``, the
        parametrization in which scores have unit variance.
    sigma2 : float
    eigenvalues : ndarray, shape (K,)
        Score variances of the unit-norm components.
    pve_cum : ndarray, shape (K,)
        Cumulative share of the variance of all fitted components.
    total_variance : float
        Sum of the variances of all components fitted before truncation.
    k_fitted : int
        Requested starting count. Components whose variance collapses to
        zero during fitting are dropped, so fewer may survive.
    """

    basis: TransformedBasis
    beta_mu: np.ndarray
    beta_phi: np.ndarray
    scores: np.ndarray
    lambda_mu: np.ndarray
    lambda_phi: np.ndarray
    sigma2: float
    eigenvalues: np.ndarray
    pve_cum: np.ndarray
    total_variance: float
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    mode: str = "adaptive"
    beta_floor: float = BETA_FLOOR
    k_fitted: int = 0
    ids: Optional[List[str]] = None

    @property
    def K(self) -> int:
        return self.beta_phi.shape[1]

    @property
    def domain(self):
        return self.basis.domain

    def mean(self, grid) -> np.ndarray:
        return self.basis.eval(grid) @ self.beta_mu

    def fpcs(self, grid) -> np.ndarray:
        """Components evaluated on ``grid`` as a ``len(grid) x K`` matrix."""
        return self.basis.eval(grid) @ self.beta_phi

    def curves(self, grid, scores=None) -> np.ndarray:
        """Reconstructions ``mu + sum_k xi_ik phi_k`` for all subjects (rows)."""
        scores = self.scores if scores is None else np.asarray(scores, dtype=float)
        W = self.basis.eval(grid)
        return (W @ self.beta_mu)[None, :] + scores @ (W @ self.beta_phi).T

    def reconstruct(self, subject: int, grid) -> np.ndarray:
        W = self.basis.eval(grid)
        return W @ self.beta_mu + W @ (self.beta_phi @ self.scores[subject])

    def lambda_functions(self, grid) -> np.ndarray:
        """Pointwise penalty functions, columns ``[mean, phi_1, ..., phi_K]``; NaN where undefined."""
        cols = [self._lambda_fn(self.beta_mu, self.lambda_mu, grid)]
        cols += [self._lambda_fn(self.beta_phi[:, k], self.lambda_phi[:, k], grid) for k in range(self.K)]
        return np.column_stack(cols)

    def _lambda_fn(self, beta, weights, grid):
        lam = np.sqrt(weights)
        if self.mode == "adaptive":
            # lambda_p = 1 / beta_p keeps the sign of the coefficient
            lam = np.where(beta < 0, -lam, lam)
        return penalty_fn_values(self.basis, beta, lam, grid)


@dataclass
class Reconstruction:
    subject: int
    grid: np.ndarray
    values: np.ndarray


def reconstruct(model: FpcaModel, subject: int, grid) -> Reconstruction:
    grid = np.asarray(grid, dtype=float)
    return Reconstruction(subject, grid, model.reconstruct(subject, grid))


def truncate_pve(model: FpcaModel, pve: float) -> FpcaModel:
    """Keep the leading components explaining at least ``pve`` of the variance."""
    if model.K == 0:
        return model
    total = model.total_variance
    share = np.cumsum(model.eigenvalues) / total if total > 0 else np.ones(model.K)
    k = select_components(model.eigenvalues, pve, total)
    return replace(
        model,
        beta_phi=model.beta_phi[:, :k].copy(),
        scores=model.scores[:, :k].copy(),
        lambda_phi=model.lambda_phi[:, :k].copy(),
        eigenvalues=model.eigenvalues[:k].copy(),
        pve_cum=share[:k].copy(),
    )


def fpca_objective(design: Design, beta_mu, beta_phi, scores, lambdas, sigma2) -> float:
    """Penalized negative log-likelihood monitored for convergence."""
    s2 = max(sigma2, _TINY)
    rss = _residual_ss(design, beta_mu, beta_phi, scores)
    coef = np.column_stack([beta_mu, beta_phi]).T
    pen = float(np.sum(lambdas * coef**2))
    return 0.5 * design.n_obs * np.log(s2) + rss / (2 * s2) + 0.5 * float(np.sum(scores**2)) + 0.5 * pen


@dataclass
class InitialState:
    beta_mu: np.ndarray
    beta_phi: np.ndarray
    scores: np.ndarray
    sigma2: float


def initial_scores(data: FunctionalDataset, K: int, seed: int = 0) -> np.ndarray:
    """Starting scores: SVD of the centred data on a common grid, else seeded normals.

    Columns are scaled to unit mean square to match the score prior. Columns
    beyond the numerical rank of the centred data are filled with seeded
    standard normal draws.
    """
    I = data.n_subjects
    rng = np.random.default_rng(seed)
    out = rng.standard_normal((I, K))
    if data.common_grid() is None:
        return out
    Y = data.as_matrix()
    Yc = Y - Y.mean(axis=0)
    try:
        U, s, _ = np.linalg.svd(Yc, full_matrices=False)
    except np.linalg.LinAlgError:
        return out
    rank = int(np.sum(s > s[0] * 1e-10)) if s.size and s[0] > 0 else 0
    k = min(K, rank)
    out[:, :k] = U[:, :k] * np.sqrt(I)
    return out


def initialize(design: Design, K: int, seed: int = 0) -> InitialState:
    """Initial scores, then an unpenalized coefficient solve and moment variance."""
    scores = initial_scores(design.data, K, seed)
    zeros = np.zeros((K + 1, design.P))
    beta_mu, beta_phi = update_coefficients(design, scores, zeros, 0.0)
    sigma2 = update_sigma2_fpca(design, beta_mu, beta_phi, scores)
    return InitialState(beta_mu, beta_phi, scores, sigma2)


def _flat_model(design: Design, config: FpcaConfig) -> FpcaModel:
    P = design.P
    beta_mu, _ = update_coefficients(design, np.zeros((design.n_subjects, 0)), np.zeros((1, P)), 0.0)
    sigma2 = update_sigma2_fpca(design, beta_mu, np.zeros((P, 0)), np.zeros((design.n_subjects, 0)))
    return FpcaModel(
        basis=design.basis,
        beta_mu=beta_mu,
        beta_phi=np.zeros((P, 0)),
        scores=np.zeros((design.n_subjects, 0)),
        lambda_mu=tuning_update(beta_mu, config.beta_floor, config.mode),
        lambda_phi=np.zeros((P, 0)),
        sigma2=sigma2,
        eigenvalues=np.zeros(0),
        pve_cum=np.zeros(0),
        total_variance=0.0,
        converged=True,
        n_iter=0,
        mode=config.mode,
        beta_floor=config.beta_floor,
        k_fitted=0,
        ids=list(design.data.ids),
    )


@dataclass
class FitState:
    """Iterate of the fitting loop.

    Components are stored with unit norm and the scores carry the variance
    ``sd**2``. The likelihood models unit-variance scores, so the coefficient
    and score steps work with ``beta_phi * sd`` and ``scores / sd``;
    ``lambdas`` refer to those scaled coefficients.
    """

    beta_mu: np.ndarray
    beta_phi: np.ndarray
    scores: np.ndarray
    sd: np.ndarray
    lambdas: np.ndarray
    sigma2: float

    @property
    def scaled(self):
        return self.beta_phi * self.sd, self.scores / self.sd


def fpca_step(design: Design, state: FitState, quad: QuadratureGrid, config: FpcaConfig, solve: bool = True):
    """One pass of the three updates plus rotation.

    Returns the new state and its objective value. With ``solve=False`` the
    coefficient solve is skipped (the first pass reuses the initial fit).
    """
    beta_mu = state.beta_mu
    beta_phi, unit_scores = state.scaled
    if solve:
        beta_mu, beta_phi = update_coefficients(design, unit_scores, state.lambdas, state.sigma2)
    scores = _all_scores(design, beta_mu, beta_phi, state.sigma2)
    beta_mu, scores = center_scores(beta_mu, beta_phi, scores)
    beta_phi, scores, variances = orthogonalize(beta_phi, scores, quad)
    if variances.size:
        keep = variances > PRUNE_RTOL * variances.max()
        beta_phi, scores, variances = beta_phi[:, keep], scores[:, keep], variances[keep]
    sd = np.sqrt(np.maximum(variances, _TINY))
    scaled_phi, unit_scores = beta_phi * sd, scores / sd
    lambdas = update_tuning(beta_mu, scaled_phi, config.beta_floor, config.mode)
    sigma2 = update_sigma2_fpca(design, beta_mu, scaled_phi, unit_scores)
    obj = fpca_objective(design, beta_mu, scaled_phi, unit_scores, lambdas, sigma2)
    return FitState(beta_mu, beta_phi, scores, sd, lambdas, sigma2), obj


def fit_afpca(
    data: FunctionalDataset,
    config: Optional[FpcaConfig] = None,
    basis: Optional[TransformedBasis] = None,
    truncate: bool = True,
    callback: Optional[Callable[[int, FitState], None]] = None,
) -> FpcaModel:
    """Fit adaptive (or single-weight baseline) FPCA.

    Parameters
    ----------
    data : FunctionalDataset
    config : FpcaConfig, optional
    basis : TransformedBasis, optional
        Defaults to ``config.P`` equally spaced cubic B-splines over the data
        domain.
    truncate : bool, default=True
        Apply the variance-share truncation; with ``False`` all surviving
        components are returned in order.
    callback : callable, optional
        Called as ``callback(iteration, state)`` after every pass.
    """
    config = config or FpcaConfig()
    if basis is None:
        basis = wand_transform(make_knots(data.domain, config.P))
    design = Design(data, basis)
    K = config.K_init
    if design.n_obs < (K + 1) * basis.P:
        warnings.warn(
            f"{design.n_obs} observations for {(K + 1) * basis.P} coefficients; "
            "consider lowering K_init or P",
            RuntimeWarning,
            stacklevel=2,
        )
    all_y = np.concatenate(data.y)
    if np.ptp(all_y) == 0:
        warnings.warn("all observations are identical; returning a mean-only model", RuntimeWarning, stacklevel=2)
        return _flat_model(design, config)

    quad = QuadratureGrid.build(basis)
    init = initialize(design, K, config.seed)
    state = FitState(init.beta_mu, init.beta_phi, init.scores, np.ones(K),
                     np.zeros((K + 1, basis.P)), init.sigma2)
    trace = []
    converged = False
    for it in range(1, config.max_iter + 1):
        state, obj = fpca_step(design, state, quad, config, solve=it > 1)
        if not np.isfinite(obj):
            raise NumericalFailureError(f"objective became non-finite at iteration {it}")
        trace.append(obj)
        if callback is not None:
            callback(it, state)
        if it > 1 and converged_step(trace[-2], trace[-1], config.tol):
            converged = True
            break
    model = _to_model(design, state, config, trace, converged, it)
    logger.debug("fit_afpca: mode=%s iterations=%d converged=%s", config.mode, it, converged)
    return truncate_pve(model, config.pve) if truncate else model


def _to_model(design: Design, state: FitState, config: FpcaConfig, trace, converged, n_iter) -> FpcaModel:
    variances = state.sd**2
    lambdas = state.lambdas
    total = float(variances.sum())
    return FpcaModel(
        basis=design.basis,
        beta_mu=state.beta_mu,
        beta_phi=state.beta_phi,
        scores=state.scores,
        lambda_mu=lambdas[0].copy(),
        lambda_phi=lambdas[1:].T.copy(),
        sigma2=state.sigma2,
        eigenvalues=variances,
        pve_cum=np.cumsum(variances) / total if total > 0 else np.ones(variances.size),
        total_variance=total,
        objective_trace=list(trace),
        converged=converged,
        n_iter=n_iter,
        mode=config.mode,
        beta_floor=config.beta_floor,
        k_fitted=config.K_init,
        ids=list(design.data.ids),
    )
