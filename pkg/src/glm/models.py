"""
Weighted Gaussian and binomial GLMs.

OLS is solved through a column-pivoted QR decomposition; the logistic fit
is IRLS (Newton) with offsets, step-halving and fractional outcomes.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit

from src.config import Config
from src.formula.design import DesignMatrix
from src.utils.helpers import clamp_probability

GAUSSIAN = 'gaussian'
BINOMIAL = 'binomial'
FAMILIES = (GAUSSIAN, BINOMIAL)

# |X beta| beyond this on a weighted row means the MLE is running off to infinity
SEPARATION_LINK = 30.0


@dataclass(frozen=True)
class FittedGlm:
    family: str
    coefficients: np.ndarray
    labels: Tuple[str, ...]
    converged: bool
    iterations: int
    max_score: float
    loglik_path: Tuple[float, ...] = ()
    diagnostics: Tuple[str, ...] = ()
    dropped: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family '{self.family}'")
        if len(self.coefficients) != len(self.labels):
            raise ValueError("coefficient count must equal the number of design columns")


def _as_matrix(X) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if isinstance(X, DesignMatrix):
        return np.asarray(X.values, dtype=float), X.labels
    values = np.asarray(X, dtype=float)
    if values.ndim != 2:
        raise ValueError("design must be a 2-d matrix")
    return values, tuple(f'x{j}' for j in range(values.shape[1]))


def _check_inputs(X: np.ndarray, y, w, offset=None):
    n = X.shape[0]
    y = np.asarray(y, dtype=float)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise ValueError(f"dimension mismatch: X has {n} rows, y {y.shape}, w {w.shape}")
    if offset is None:
        offset = np.zeros(n)
    else:
        offset = np.broadcast_to(np.asarray(offset, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)) or not np.all(np.isfinite(offset)):
        raise ValueError("design, outcome and offset must be finite")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if not np.sum(w) > 0:
        raise ValueError("all weights are zero")
    return y, w, offset


def _independent_columns(Xw: np.ndarray) -> np.ndarray:
    """Indices of a maximal set of linearly independent columns (pivoted QR)."""
    p = Xw.shape[1]
    if Xw.shape[0] == 0 or p == 0:
        return np.arange(0)
    _, R, perm = linalg.qr(Xw, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.arange(0)
    rank = int(np.sum(diag > Config.RANK_TOL * diag[0]))
    return np.sort(perm[:rank])


def fit_ols(X, y, w=None) -> FittedGlm:
    """
    Weighted least squares; rank-deficient columns get a zero coefficient.

    Raises:
        ValueError: dimension mismatch or all-zero weights
    """
    values, labels = _as_matrix(X)
    y, w, _ = _check_inputs(values, y, w)
    keep_rows = w > 0
    sw = np.sqrt(w[keep_rows])
    Xw = values[keep_rows] * sw[:, None]
    yw = y[keep_rows] * sw
    beta = np.zeros(values.shape[1])
    _, R, perm = linalg.qr(Xw, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > Config.RANK_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank:
        Q, R = linalg.qr(Xw[:, perm[:rank]], mode='economic')
        beta[perm[:rank]] = linalg.solve_triangular(R, Q.T @ yw)
    dropped = tuple(labels[j] for j in sorted(perm[rank:]))
    diagnostics = []
    if dropped:
        diagnostics.append(f"rank deficient design: dropped {', '.join(dropped)}")
    score = values.T @ (w * (y - values @ beta))
    return FittedGlm(
        family=GAUSSIAN,
        coefficients=beta,
        labels=labels,
        converged=True,
        iterations=1,
        max_score=float(np.max(np.abs(score))) if score.size else 0.0,
        diagnostics=tuple(diagnostics),
        dropped=dropped,
    )


def binomial_loglik(X, y, w, offset, beta) -> float:
    """Weighted binomial log-likelihood, stable for large |eta|."""
    values, _ = _as_matrix(X)
    eta = values @ np.asarray(beta, dtype=float) + offset
    return float(np.sum(w * (-y * np.logaddexp(0.0, -eta) - (1.0 - y) * np.logaddexp(0.0, eta))))


def binomial_score(X, y, w, offset, beta) -> np.ndarray:
    """Gradient of binomial_loglik with respect to beta."""
    values, _ = _as_matrix(X)
    mu = expit(values @ np.asarray(beta, dtype=float) + offset)
    return values.T @ (w * (y - mu))


def _newton_direction(info: np.ndarray, score: np.ndarray) -> np.ndarray:
    try:
        return linalg.solve(info, score, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        return linalg.lstsq(info, score)[0]


def fit_logistic(X, y, w=None, offset=None,
                 tol: Optional[float] = None,
                 max_iter: Optional[int] = None,
                 max_halvings: Optional[int] = None) -> FittedGlm:
    """
    Weighted logistic regression by IRLS.

    Args:
        X: Design
        y: Outcomes in [0, 1] (fractional values allowed)
        w: Nonnegative row weights
        offset: Fixed logit-scale offset per row
        tol: Convergence threshold on max |weighted score|

    Returns:
        FittedGlm; separation and non-convergence come back as
        converged=False with diagnostics instead of raising
    """
    tol = Config.IRLS_TOL if tol is None else tol
    max_iter = Config.IRLS_MAX_ITER if max_iter is None else max_iter
    max_halvings = Config.IRLS_MAX_HALVINGS if max_halvings is None else max_halvings

    values, labels = _as_matrix(X)
    y, w, offset = _check_inputs(values, y, w, offset)
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("binomial outcomes must lie in [0, 1]")

    rows = w > 0
    Xr, yr, wr, offr = values[rows], y[rows], w[rows], offset[rows]
    cols = _independent_columns(Xr * np.sqrt(wr)[:, None])
    dropped = tuple(labels[j] for j in range(values.shape[1]) if j not in set(cols))
    Xk = Xr[:, cols]
    threshold = tol

    beta = np.zeros(len(cols))
    loglik = binomial_loglik(Xk, yr, wr, offr, beta)
    path: List[float] = [loglik]
    diagnostics: List[str] = []
    if dropped:
        diagnostics.append(f"rank deficient design: dropped {', '.join(dropped)}")

    converged = False
    iterations = 0
    score = binomial_score(Xk, yr, wr, offr, beta)
    for iterations in range(1, max_iter + 1):
        if score.size == 0 or np.max(np.abs(score)) <= threshold:
            converged = True
            iterations -= 1
            break
        mu = expit(Xk @ beta + offr)
        info = Xk.T @ (Xk * (wr * mu * (1.0 - mu))[:, None])
        step = _newton_direction(info, score)
        accepted = False
        scale = 1.0
        for _ in range(max_halvings + 1):
            candidate = beta + scale * step
            cand_loglik = binomial_loglik(Xk, yr, wr, offr, candidate)
            if np.isfinite(cand_loglik) and cand_loglik >= loglik - 1e-12 * max(1.0, abs(loglik)):
                accepted = True
                break
            scale /= 2.0
        if not accepted:
            diagnostics.append(f"step-halving failed at iteration {iterations}")
            break
        beta, loglik = candidate, cand_loglik
        path.append(loglik)
        score = binomial_score(Xk, yr, wr, offr, beta)
    else:
        converged = score.size == 0 or np.max(np.abs(score)) <= threshold

    if converged and score.size:
        # one extra Newton step to land on machine precision
        mu = expit(Xk @ beta + offr)
        info = Xk.T @ (Xk * (wr * mu * (1.0 - mu))[:, None])
        candidate = beta + _newton_direction(info, score)
        cand_loglik = binomial_loglik(Xk, yr, wr, offr, candidate)
        cand_score = binomial_score(Xk, yr, wr, offr, candidate)
        if (np.isfinite(cand_loglik) and cand_loglik >= loglik - 1e-12 * max(1.0, abs(loglik))
                and np.max(np.abs(cand_score)) <= np.max(np.abs(score))):
            beta, loglik, score = candidate, cand_loglik, cand_score
            path.append(loglik)

    if Xk.size and np.max(np.abs(Xk @ beta)) > SEPARATION_LINK:
        converged = False
        diagnostics.append("separation: fitted probabilities numerically 0 or 1")
    elif not converged and not diagnostics:
        diagnostics.append(f"IRLS did not converge in {max_iter} iterations")

    coefficients = np.zeros(values.shape[1])
    coefficients[cols] = beta
    full_score = binomial_score(values, y, w, offset, coefficients)
    return FittedGlm(
        family=BINOMIAL,
        coefficients=coefficients,
        labels=labels,
        converged=bool(converged),
        iterations=int(iterations),
        max_score=float(np.max(np.abs(full_score))) if full_score.size else 0.0,
        loglik_path=tuple(path),
        diagnostics=tuple(diagnostics),
        dropped=dropped,
    )


def linear_predictor(model: FittedGlm, X, offset=None) -> np.ndarray:
    """X beta + offset after checking column alignment."""
    values, labels = _as_matrix(X)
    if isinstance(X, DesignMatrix) and labels != model.labels:
        raise ValueError(f"design labels {labels} do not match the fit {model.labels}")
    if values.shape[1] != len(model.coefficients):
        raise ValueError("design column count does not match the fit")
    eta = values @ model.coefficients
    if offset is not None:
        eta = eta + np.asarray(offset, dtype=float)
    return eta


def predict(model: FittedGlm, X, offset=None) -> np.ndarray:
    """Gaussian: X beta + offset. Binomial: clamped expit(X beta + offset)."""
    eta = linear_predictor(model, X, offset)
    if model.family == BINOMIAL:
        return clamp_probability(expit(eta))
    return eta


def fit_model(family: str, X, y, w=None, offset=None) -> FittedGlm:
    """Dispatch on family name."""
    if family == GAUSSIAN:
        if offset is not None and np.any(np.asarray(offset) != 0):
            y = np.asarray(y, dtype=float) - np.asarray(offset, dtype=float)
        return fit_ols(X, y, w)
    if family == BINOMIAL:
        return fit_logistic(X, y, w, offset)
    raise ValueError(f"unknown family '{family}'")


def fit_fluctuation(y, offset, w, clever=None,
                    tol: float = 1e-12, max_iter: int = 100) -> float:
    """
    One-parameter logistic fluctuation with a fixed offset.

    Without `clever` this is an intercept-only fit; with it, a no-intercept
    fit on the clever covariate.

    Returns:
        epsilon maximizing the weighted binomial likelihood; 0.0 when the
        weights carry no information
    """
    offset = np.asarray(offset, dtype=float)
    if not np.all(np.isfinite(offset)):
        raise ValueError("fluctuation offset has non-finite entries")
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    h = np.ones_like(offset) if clever is None else np.asarray(clever, dtype=float)
    if not (y.shape == offset.shape == w.shape == h.shape):
        raise ValueError("fluctuation inputs must have equal length")
    active = (w > 0) & (h != 0)
    if not np.any(active):
        return 0.0
    y, offset, w, h = y[active], offset[active], w[active], h[active]
    scale = max(1.0, float(np.sum(w * np.abs(h))))

    def loglik(eps: float) -> float:
        eta = offset + eps * h
        return float(np.sum(w * (-y * np.logaddexp(0.0, -eta) - (1.0 - y) * np.logaddexp(0.0, eta))))

    eps = 0.0
    current = loglik(eps)
    for _ in range(max_iter):
        mu = expit(offset + eps * h)
        score = float(np.sum(w * h * (y - mu)))
        if abs(score) <= tol * scale:
            return eps
        info = float(np.sum(w * h * h * mu * (1.0 - mu)))
        if info <= 0:
            break
        step = score / info
        for _ in range(Config.IRLS_MAX_HALVINGS + 1):
            candidate = loglik(eps + step)
            if candidate >= current - 1e-14 * max(1.0, abs(current)):
                break
            step /= 2.0
        eps += step
        current = loglik(eps)
        if abs(step) < 1e-15 * max(1.0, abs(eps)):
            return eps
    logging.warning(f"fluctuation fit stopped without meeting the score tolerance (epsilon={eps:.4g})")
    return eps
