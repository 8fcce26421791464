"""Convex solvers used across the library.

Everything here reduces to one primal template

    min_u  0.5*||u||^2 + cost * sum_k max(0, rho_k - q_k.u)

solved in the dual by cyclic coordinate descent: alpha_k is clipped to
[0, cost] after a Newton step on its coordinate, u = sum_k alpha_k q_k is
maintained incrementally, and the stopping rule is the max projected-gradient
residual over one full sweep.

  - standard bias-free SVM:   q_k = y_k x_k, rho_k = 1
  - adaptive SVM:             substitute psi' = psi - c1*psi_src, which turns
                              the source-anchored program into the template
                              with rho_k = 1 - c1*y_k*(psi_src.x_k)
  - threshold QP:             u = B - B_prior, sparse rows over path nodes,
                              rho_k = -(constraint value at B_prior)

The one exception is the SVM with an unregularized bias. Its dual carries the
equality constraint sum(y*alpha) = 0, so it is solved by pairwise updates on
the maximal violating pair (exact line step along the constraint manifold);
the bias falls out of the KKT interval at the end. Coordinate-at-a-time
descent plus an outer root search on the bias is tempting but crawls whenever
the dual has a flat valley: every re-solve across a kink of h(b) = y.alpha(b)
moves mass one coordinate at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    InvalidArgumentError,
    SolverConvergenceError,
)


@dataclass(frozen=True)
class SvmConfig:
    reg_cost: float = 1.0
    tol: float = 1e-6
    max_iter: int = 100_000

    def __post_init__(self):
        if self.reg_cost <= 0.0:
            raise InvalidArgumentError("reg_cost must be positive")
        if self.tol <= 0.0:
            raise InvalidArgumentError("tol must be positive")
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float
    converged: bool


@dataclass
class Hyperplane:
    """weights.x + bias; node experts carry bias 0 (tau plays that role)."""

    weights: np.ndarray
    bias: float = 0.0
    stats: SolveStats | None = field(default=None, repr=False)

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


@njit(cache=True)
def _cd_dense(Q, qsq, rho, cost, alpha, u, tol, max_sweeps):
    """Cyclic dual CD on dense rows Q; updates alpha and u in place."""
    n, d = Q.shape
    res = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        res = 0.0
        for k in range(n):
            if qsq[k] <= 0.0:
                continue
            g = rho[k]
            for j in range(d):
                g -= Q[k, j] * u[j]
            a = alpha[k]
            if a <= 0.0:
                pg = g if g > 0.0 else 0.0
            elif a >= cost:
                pg = g if g < 0.0 else 0.0
            else:
                pg = g
            if abs(pg) > res:
                res = abs(pg)
            if pg != 0.0:
                anew = a + g / qsq[k]
                if anew < 0.0:
                    anew = 0.0
                elif anew > cost:
                    anew = cost
                delta = anew - a
                if delta != 0.0:
                    alpha[k] = anew
                    for j in range(d):
                        u[j] += delta * Q[k, j]
        if res <= tol:
            break
    return res, sweeps


@njit(cache=True)
def _cd_sparse(indptr, colidx, coeff, qsq, rho, cost, alpha, u, tol, max_sweeps):
    """Same update with CSR rows touching only a few coordinates of u."""
    n = rho.size
    res = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        res = 0.0
        for k in range(n):
            if qsq[k] <= 0.0:
                continue
            g = rho[k]
            for p in range(indptr[k], indptr[k + 1]):
                g -= coeff[p] * u[colidx[p]]
            a = alpha[k]
            if a <= 0.0:
                pg = g if g > 0.0 else 0.0
            elif a >= cost:
                pg = g if g < 0.0 else 0.0
            else:
                pg = g
            if abs(pg) > res:
                res = abs(pg)
            if pg != 0.0:
                anew = a + g / qsq[k]
                if anew < 0.0:
                    anew = 0.0
                elif anew > cost:
                    anew = cost
                delta = anew - a
                if delta != 0.0:
                    alpha[k] = anew
                    for p in range(indptr[k], indptr[k + 1]):
                        u[colidx[p]] += delta * coeff[p]
        if res <= tol:
            break
    return res, sweeps


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise InvalidArgumentError("X must be 2-D with at least one column")
    if y.shape != (X.shape[0],):
        raise DimensionMismatchError("X and y lengths disagree")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite training data")
    if not np.all(np.isin(y, (1.0, -1.0))):
        raise InvalidArgumentError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateDataError("training data contains a single class")
    return X, y


def _solve_margin(Q, qsq, rho, cost, tol, max_sweeps):
    alpha = np.zeros(rho.size)
    u = np.zeros(Q.shape[1])
    res, sweeps = _cd_dense(Q, qsq, rho, cost, alpha, u, tol, max_sweeps)
    return u, alpha, float(res), int(sweeps)


def train_linear_svm(X, y, cfg: SvmConfig = SvmConfig(), fit_bias: bool = True) -> Hyperplane:
    """Soft-margin linear SVM: 0.5*||w||^2 + reg_cost * sum hinge(y*(w.x + b)).

    With fit_bias=False the bias is pinned at 0 and the program is the pure
    template above. The bias itself is never regularized.
    """
    X, y = _check_xy(X, y)
    if not fit_bias:
        Q = np.ascontiguousarray(y[:, None] * X)
        qsq = np.einsum("ij,ij->i", Q, Q)
        rho = np.ones(y.size)
        w, _, res, iters = _solve_margin(Q, qsq, rho, cfg.reg_cost, cfg.tol, cfg.max_iter)
        b = 0.0
    else:
        w, b, res, iters = _smo_biased(X, y, cfg.reg_cost, cfg.tol, cfg.max_iter)
    if not np.any(w != 0.0):
        raise DegenerateDataError("SVM collapsed to the zero hyperplane")
    return Hyperplane(w, float(b), SolveStats(int(iters), float(res), res <= cfg.tol))


@njit(cache=True)
def _smo_biased(X, y, cost, tol, max_iter):
    """Maximal-violating-pair updates for the biased SVM dual.

    Minimizes 0.5*||w(alpha)||^2 - sum(alpha) over the box [0, cost]^n cut by
    sum(y*alpha) = 0, with w(alpha) = sum_k alpha_k y_k x_k. Writing
    F_k = y_k - w.x_k, the KKT conditions read

        max_{k in I_up} F_k  <=  b  <=  min_{k in I_low} F_k

    where I_up are the rows whose alpha can still grow in the feasible
    direction and I_low those that can shrink. The violation m - M of that
    sandwich is the stopping residual, and its midpoint is the bias.
    """
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    sq = np.empty(n)
    for k in range(n):
        s = 0.0
        for j in range(d):
            s += X[k, j] * X[k, j]
        sq[k] = s
    res = np.inf
    it = 0
    while it < max_iter:
        it += 1
        i = -1
        jdx = -1
        m = -np.inf
        M = np.inf
        for k in range(n):
            s = 0.0
            for j in range(d):
                s += X[k, j] * w[j]
            F = y[k] - s
            if (y[k] > 0.0 and alpha[k] < cost) or (y[k] < 0.0 and alpha[k] > 0.0):
                if F > m:
                    m = F
                    i = k
            if (y[k] > 0.0 and alpha[k] > 0.0) or (y[k] < 0.0 and alpha[k] < cost):
                if F < M:
                    M = F
                    jdx = k
        res = m - M
        if res <= tol or i < 0 or jdx < 0:
            break
        # exact minimizer along alpha_i += y_i*lam, alpha_j -= y_j*lam,
        # which keeps sum(y*alpha) = 0; curvature is ||x_i - x_j||^2
        dot = 0.0
        for j in range(d):
            dot += X[i, j] * X[jdx, j]
        eta = sq[i] + sq[jdx] - 2.0 * dot
        cap_i = cost - alpha[i] if y[i] > 0.0 else alpha[i]
        cap_j = alpha[jdx] if y[jdx] > 0.0 else cost - alpha[jdx]
        lam = cap_i if cap_i < cap_j else cap_j
        if eta > 0.0:
            step = (m - M) / eta
            if step < lam:
                lam = step
        alpha[i] += y[i] * lam
        alpha[jdx] -= y[jdx] * lam
        if alpha[i] < 0.0:
            alpha[i] = 0.0
        elif alpha[i] > cost:
            alpha[i] = cost
        if alpha[jdx] < 0.0:
            alpha[jdx] = 0.0
        elif alpha[jdx] > cost:
            alpha[jdx] = cost
        for j in range(d):
            w[j] += lam * (X[i, j] - X[jdx, j])
    # bias from a fresh KKT pass; one-sided sandwiches pin b to the
    # informative end (e.g. every alpha at a bound on one side)
    m = -np.inf
    M = np.inf
    for k in range(n):
        s = 0.0
        for j in range(d):
            s += X[k, j] * w[j]
        F = y[k] - s
        if (y[k] > 0.0 and alpha[k] < cost) or (y[k] < 0.0 and alpha[k] > 0.0):
            if F > m:
                m = F
        if (y[k] > 0.0 and alpha[k] > 0.0) or (y[k] < 0.0 and alpha[k] < cost):
            if F < M:
                M = F
    if m == -np.inf and M == np.inf:
        b = 0.0
    elif m == -np.inf:
        b = M
    elif M == np.inf:
        b = m
    else:
        b = 0.5 * (m + M)
    return w, b, res, it


def train_adaptive_svm(X, y, source: Hyperplane, c1: float, c2: float,
                       cfg: SvmConfig = SvmConfig()) -> Hyperplane:
    """Source-anchored SVM: 0.5*||psi - c1*psi_src||^2 + c2*sum slack,
    subject to y_k*(psi.x_k) >= 1 - slack_k. No bias term.

    Solved by the shift psi' = psi - c1*psi_src, which is the standard
    bias-free template with margin targets 1 - c1*y_k*(psi_src.x_k).
    """
    X, y = _check_xy(X, y)
    if c1 < 0.0:
        raise InvalidArgumentError("c1 must be >= 0")
    if c2 <= 0.0:
        raise InvalidArgumentError("c2 must be positive")
    ws = np.asarray(source.weights, dtype=np.float64)
    if ws.shape != (X.shape[1],):
        raise DimensionMismatchError(
            f"source weights dim {ws.shape} does not match data dim {X.shape[1]}"
        )
    Q = np.ascontiguousarray(y[:, None] * X)
    qsq = np.einsum("ij,ij->i", Q, Q)
    rho = 1.0 - c1 * y * (X @ ws)
    u, _, res, sweeps = _solve_margin(Q, qsq, rho, c2, cfg.tol, cfg.max_iter)
    w = u + c1 * ws
    if not np.any(w != 0.0):
        raise DegenerateDataError("adaptive SVM collapsed to the zero hyperplane")
    return Hyperplane(w, 0.0, SolveStats(sweeps, res, res <= cfg.tol))


@dataclass(frozen=True)
class QpConstraintRow:
    """One (path, sample) margin constraint of the threshold program."""

    node_ids: tuple[int, ...]
    fixed_scores: np.ndarray   # per-node expert scores along the path, no threshold
    path_weights: np.ndarray   # source prefix hyperplane over the path projection
    path_bias: float
    label: float


@dataclass
class ThresholdQpProblem:
    """min 0.5*||B - prior||^2 + penalty * sum slack over all rows, with
    y * (W_p . (fixed + B[node_ids]) + b_p) >= -slack for each row."""

    n_thresholds: int
    prior_thresholds: np.ndarray
    rows: list[QpConstraintRow]
    penalty: float

    def validate(self):
        if self.n_thresholds < 1:
            raise InvalidArgumentError("n_thresholds must be positive")
        prior = np.asarray(self.prior_thresholds, dtype=np.float64)
        if prior.shape != (self.n_thresholds,) or not np.all(np.isfinite(prior)):
            raise InvalidArgumentError("prior_thresholds must be finite, length n_thresholds")
        if self.penalty < 0.0 or not np.isfinite(self.penalty):
            raise InvalidArgumentError("penalty must be finite and >= 0")
        for r in self.rows:
            k = len(r.node_ids)
            if len(r.fixed_scores) != k or len(r.path_weights) != k:
                raise InvalidArgumentError("row arity mismatch")
            if any(i < 0 or i >= self.n_thresholds for i in r.node_ids):
                raise InvalidArgumentError("row node id out of range")
            if not (np.all(np.isfinite(r.fixed_scores)) and np.all(np.isfinite(r.path_weights))
                    and np.isfinite(r.path_bias)):
                raise InvalidArgumentError("non-finite row data")
            if r.label not in (1.0, -1.0):
                raise InvalidArgumentError("row label must be +1 or -1")
        return prior

    def to_debug_dict(self) -> dict:
        """Plain-data dump for cross-checking against external solvers."""
        return {
            "n_thresholds": self.n_thresholds,
            "prior_thresholds": [float(v) for v in self.prior_thresholds],
            "penalty": float(self.penalty),
            "rows": [
                {
                    "node_ids": list(r.node_ids),
                    "fixed_scores": [float(v) for v in r.fixed_scores],
                    "path_weights": [float(v) for v in r.path_weights],
                    "path_bias": float(r.path_bias),
                    "label": float(r.label),
                }
                for r in self.rows
            ],
        }


def solve_threshold_qp(problem: ThresholdQpProblem, cfg: SvmConfig = SvmConfig()) -> np.ndarray:
    """Adapted thresholds B minimizing the program in ThresholdQpProblem.

    The stopping rule is cfg.tol relative to the worst violation at the prior
    (floored at 1, so it stays absolute on small well-scaled problems).
    Raises SolverConvergenceError if the residual is still above that when the
    sweep budget runs out.
    """
    prior = problem.validate()
    if problem.penalty == 0.0 or not problem.rows:
        return prior.copy()
    n = len(problem.rows)
    lens = np.array([len(r.node_ids) for r in problem.rows], dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lens, out=indptr[1:])
    colidx = np.empty(indptr[-1], dtype=np.int64)
    coeff = np.empty(indptr[-1])
    rho = np.empty(n)
    for k, r in enumerate(problem.rows):
        s, e = indptr[k], indptr[k + 1]
        colidx[s:e] = r.node_ids
        w = np.asarray(r.path_weights, dtype=np.float64)
        coeff[s:e] = r.label * w
        at_prior = w @ (np.asarray(r.fixed_scores, dtype=np.float64) + prior[list(r.node_ids)])
        rho[k] = -r.label * (at_prior + r.path_bias)
    qsq = np.zeros(n)
    np.add.at(qsq, np.repeat(np.arange(n), lens), coeff * coeff)
    alpha = np.zeros(n)
    u = np.zeros(problem.n_thresholds)
    stop = cfg.tol * max(1.0, float(np.max(np.maximum(rho, 0.0), initial=0.0)))
    res, sweeps = _cd_sparse(indptr, colidx, coeff, qsq, rho, problem.penalty,
                             alpha, u, stop, cfg.max_iter)
    if res > stop:
        raise SolverConvergenceError(
            f"threshold QP stalled at residual {res:.3e} after {sweeps} sweeps"
        )
    return prior + u
