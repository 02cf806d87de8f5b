"""Cubic B-spline bases, the roughness penalty and the ridge-form basis change.

The transformed basis ``W(t) = S(t) U`` turns the integrated squared second
derivative penalty into ``blockdiag(0, 0, 1, ..., 1)``: the first two columns
span the affine functions (unpenalized) and the remaining columns have
orthonormal second derivatives. A diagonal weight per coefficient then acts
as an adaptive ridge penalty.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import (
    InvalidDimensionError,
    InvalidDomainError,
    NumericalFailureError,
    OutOfDomainError,
)

DEGREE = 3
NULL_DIM = 2
# relative slack when checking abscissae against the domain ends
_DOMAIN_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped knot sequence for a B-spline basis on ``[lower, upper]``.

    Parameters
    ----------
    lower, upper : float
        Domain end points. The boundary knots are repeated ``degree + 1``
        times.
    interior : ndarray
        Strictly increasing interior knots inside ``(lower, upper)``.
    degree : int, default=3
    """

    lower: float
    upper: float
    interior: np.ndarray
    degree: int = DEGREE

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.lower >= self.upper:
            raise InvalidDomainError(f"invalid domain [{self.lower}, {self.upper}]")
        interior = np.asarray(self.interior, dtype=float)
        if interior.ndim != 1:
            raise InvalidDomainError("interior knots must be one-dimensional")
        if interior.size and (
            np.any(np.diff(interior) <= 0)
            or interior[0] <= self.lower
            or interior[-1] >= self.upper
        ):
            raise InvalidDomainError("interior knots must be strictly increasing inside the domain")
        interior.setflags(write=False)
        object.__setattr__(self, "interior", interior)
        if self.P < self.degree + 3:
            raise InvalidDimensionError(
                f"basis dimension P={self.P} too small; need at least {self.degree + 3}"
            )

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.lower, self.upper)

    @property
    def P(self) -> int:
        return self.interior.size + self.degree + 1

    @cached_property
    def full(self) -> np.ndarray:
        """The full clamped knot array of length ``P + degree + 1``."""
        k = self.degree + 1
        return np.concatenate([np.full(k, self.lower), self.interior, np.full(k, self.upper)])

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[self.lower], self.interior, [self.upper]])

    @cached_property
    def greville(self) -> np.ndarray:
        """Knot averages; the coefficient vector reproducing ``f(t) = t``."""
        t = self.full
        d = self.degree
        return np.array([t[i + 1 : i + d + 1].mean() for i in range(self.P)])

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.full, np.eye(self.P), self.degree, extrapolate=False)


def make_knots(domain, P: int = 40) -> KnotVector:
    """Equally spaced interior knots with clamped cubic boundaries.

    Parameters
    ----------
    domain : (float, float)
    P : int
        Number of basis functions; ``P - 4`` interior knots are placed.

    Examples
    --------
    >>> make_knots((0.0, 1.0), 6).interior
    array([0.33333333, 0.66666667])
    """
    a, b = (float(v) for v in domain)
    if P < DEGREE + 3:
        raise InvalidDimensionError(f"P must be at least {DEGREE + 3}, got {P}")
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise InvalidDomainError(f"invalid domain [{a}, {b}]")
    n_interior = P - DEGREE - 1
    interior = a + (b - a) * np.arange(1, n_interior + 1) / (n_interior + 1)
    return KnotVector(a, b, interior)


def _check_abscissae(knots: KnotVector, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1:
        raise OutOfDomainError("abscissae must be a one-dimensional array")
    if not np.all(np.isfinite(t)):
        raise OutOfDomainError("abscissae must be finite")
    a, b = knots.domain
    slack = _DOMAIN_RTOL * (b - a)
    if t.size and (t.min() < a - slack or t.max() > b + slack):
        raise OutOfDomainError(
            f"abscissae span [{t.min()}, {t.max()}] outside domain [{a}, {b}]"
        )
    return np.clip(t, a, b)


def eval_basis(knots: KnotVector, t, deriv: int = 0) -> np.ndarray:
    """Evaluate all B-spline basis functions (or a derivative) at ``t``.

    Returns a ``len(t) x P`` matrix. Abscissae outside the domain raise
    :class:`OutOfDomainError`; there is no extrapolation.
    """
    if deriv not in (0, 1, 2):
        raise ValueError(f"deriv must be 0, 1 or 2, got {deriv}")
    t = _check_abscissae(knots, t)
    return knots._spline(t, nu=deriv)


def gauss_legendre_nodes(breakpoints: np.ndarray, order: int = 3):
    """Composite Gauss-Legendre nodes and weights over consecutive breakpoints."""
    x, w = np.polynomial.legendre.leggauss(order)
    left, right = breakpoints[:-1], breakpoints[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def penalty_matrix(knots: KnotVector) -> np.ndarray:
    """Gram matrix of basis second derivatives, ``int s_p'' s_q'' dt``.

    Three-point Gauss-Legendre on each knot interval integrates the piecewise
    quadratic integrand exactly.
    """
    nodes, weights = gauss_legendre_nodes(knots.breakpoints, order=3)
    d2 = eval_basis(knots, nodes, deriv=2)
    omega = d2.T @ (weights[:, None] * d2)
    return 0.5 * (omega + omega.T)


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


@dataclass(frozen=True, eq=False)
class TransformedBasis:
    """Basis ``W(t) = S(t) U`` with ridge-form second-derivative penalty.

    Attributes
    ----------
    knots : KnotVector
    U : ndarray, shape (P, P)
        ``[Q1 | Q2 diag(psi)^(-1/2)]``. ``Q1`` holds the constant and centred
        linear directions, ``Q2`` the penalized eigenvectors by decreasing
        eigenvalue.
    eigenvalues : ndarray, shape (P - 2,)
        Positive penalty eigenvalues matching the columns of ``Q2``.
    null_dim : int
        Number of leading unpenalized columns (always 2).
    """

    knots: KnotVector
    U: np.ndarray
    eigenvalues: np.ndarray
    null_dim: int = NULL_DIM

    @property
    def P(self) -> int:
        return self.knots.P

    @property
    def domain(self) -> Tuple[float, float]:
        return self.knots.domain

    def eval(self, t, deriv: int = 0) -> np.ndarray:
        return eval_basis(self.knots, t, deriv) @ self.U

    @cached_property
    def penalized(self) -> np.ndarray:
        """Boolean mask of penalized columns."""
        mask = np.ones(self.P, dtype=bool)
        mask[: self.null_dim] = False
        return mask


def wand_transform(knots: KnotVector) -> TransformedBasis:
    """Diagonalize the roughness penalty by an eigendecomposition.

    The numerically-null eigenpair is replaced by the exact constant and
    centred-linear coefficient vectors (an in-plane rotation of the same
    subspace), so ``w_1`` is an intercept and ``w_2`` a slope.
    """
    omega = penalty_matrix(knots)
    P = knots.P
    try:
        psi, Q = np.linalg.eigh(omega)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigendecomposition of the penalty failed: {exc}") from exc
    if not np.all(np.isfinite(psi)):
        raise NumericalFailureError("non-finite penalty eigenvalues")
    order = np.argsort(psi)[::-1]
    psi, Q = psi[order], Q[:, order]
    pos_psi, Q2 = psi[: P - NULL_DIM], Q[:, : P - NULL_DIM]
    if pos_psi[-1] <= 1e-8 * pos_psi[0]:
        raise NumericalFailureError("penalty has fewer than P - 2 positive eigenvalues")

    g = knots.greville - knots.greville.mean()
    Q1 = np.column_stack([np.full(P, 1.0 / np.sqrt(P)), g / np.linalg.norm(g)])
    # remove the tiny null-space leakage so the blocks are exactly decoupled
    Q2 = Q2 - Q1 @ (Q1.T @ Q2)
    Q2 = _fix_sign(Q2 / np.linalg.norm(Q2, axis=0))
    U = np.column_stack([Q1, Q2 / np.sqrt(pos_psi)])
    U.setflags(write=False)
    pos_psi.setflags(write=False)
    return TransformedBasis(knots=knots, U=U, eigenvalues=pos_psi)


def penalty_fn_values(tb: TransformedBasis, beta, lambda_coef, grid, atol: float = 1e-12) -> np.ndarray:
    """Pointwise tuning function implied by coefficient-level tuning values.

    Computes ``(sum_p lambda_p beta_p w_p''(t) / sum_p beta_p w_p''(t))**2``.
    ``lambda_coef`` holds the (unsquared) tuning coefficients ``lambda_p``;
    the first two are ignored since ``w_1'' = w_2'' = 0``. Points where the
    denominator magnitude falls below ``atol`` are returned as NaN.
    """
    beta = np.asarray(beta, dtype=float)
    lam = np.asarray(lambda_coef, dtype=float)
    if beta.shape != (tb.P,) or lam.shape != (tb.P,):
        raise InvalidDimensionError(f"beta and lambda must have length {tb.P}")
    w2 = tb.eval(grid, deriv=2)[:, tb.penalized]
    b = beta[tb.penalized]
    den = w2 @ b
    num = w2 @ (lam[tb.penalized] * b)
    out = np.full(den.shape, np.nan)
    ok = np.abs(den) >= atol
    out[ok] = (num[ok] / den[ok]) ** 2
    return out
