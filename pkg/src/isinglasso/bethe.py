"""Closed-form population quantities for spin models on acyclic graphs.

On a forest at zero field the pair correlation is the product of tanh(J_e)
over the unique connecting path, the inverse covariance is sparse with
support on the graph, and the population least-squares regression of one
spin on the rest has an explicit solution that keeps the sign pattern of
the couplings. Degree-regular graphs additionally admit scalar constants
(support-block eigenvalue floor, incoherence margin) in closed form.

All of these are wrong on graphs with cycles, so the tree-only operations
reject cyclic inputs outright instead of returning plausible garbage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graphs import SignedGraph
from .sampler import ExactMoments

EIG_FLOOR = 1e-12


class SingularMatrixError(ValueError):
    """Support block is numerically singular; carries the offending eigenvalue."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def _require_acyclic(graph: SignedGraph) -> None:
    if not graph.is_acyclic():
        raise ValueError(
            "operation is only defined on acyclic graphs: the closed forms "
            "are exact on trees and wrong in the presence of cycles"
        )


@dataclass(frozen=True)
class RescaledParams:
    """Population regression targets theta_tilde per ordered pair.

    matrix[r, t] is the coefficient of spin t when regressing spin r on all
    others; zero exactly on non-edges. node_scale[r] is the per-vertex
    prefactor sum_{u in N(r)} 1/(1 - tanh^2 J_ru) - d_r + 1 (also the
    diagonal of the inverse covariance); matrix[r, t] equals
    tanh(J_rt) / (1 - tanh^2 J_rt) / node_scale[r] on edges.
    """

    matrix: np.ndarray
    node_scale: np.ndarray

    @cached_property
    def min_magnitude(self) -> float:
        """Smallest |theta_tilde| over ordered pairs that are edges."""
        nz = np.abs(self.matrix[self.matrix != 0.0])
        return float(nz.min()) if nz.size else 0.0

    def row_excluding(self, r: int) -> np.ndarray:
        """theta_tilde for node r's regression, aligned with the p-1
        predictors (vertex order with r deleted)."""
        return np.delete(self.matrix[r], r)


@dataclass(frozen=True)
class RRConstants:
    """Scalar theory constants for degree-d regular graphs with uniform
    coupling magnitude theta0."""

    d: int
    theta0: float
    c_min: float
    alpha: float
    lambda_max_qss: float
    theta_tilde_rr: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 < self.c_min <= 1.0):
            raise ValueError("c_min must lie in (0, 1]")
        if self.lambda_max_qss < 1.0:
            raise ValueError("lambda_max_qss must be >= 1")


def bethe_inverse_covariance(graph: SignedGraph) -> np.ndarray:
    """Inverse covariance of an acyclic model: diagonal
    sum_u 1/(1-tanh^2 J_ru) - d_r + 1, off-diagonal
    -tanh(J_rt)/(1-tanh^2 J_rt) on edges, zero elsewhere."""
    _require_acyclic(graph)
    graph._require_couplings()
    p = graph.p
    out = np.zeros((p, p))
    diag = np.ones(p) - graph.degrees.astype(np.float64)
    for (r, t), j in graph.couplings.items():
        th = np.tanh(j)
        sech2 = 1.0 - th * th
        diag[r] += 1.0 / sech2
        diag[t] += 1.0 / sech2
        out[r, t] = out[t, r] = -th / sech2
    out[np.diag_indices(p)] = diag
    return out


def tree_covariance(graph: SignedGraph) -> np.ndarray:
    """Pair correlations E[x_r x_t] on an acyclic graph: unit diagonal and
    the product of tanh(J_e) along the unique r-t path (zero across
    components)."""
    _require_acyclic(graph)
    graph._require_couplings()
    p = graph.p
    cov = np.eye(p)
    for root in range(p):
        # DFS outward from root, multiplying tanh factors edge by edge
        stack = [(root, -1, 1.0)]
        while stack:
            v, parent, acc = stack.pop()
            for u in graph.neighbors[v]:
                if u == parent:
                    continue
                val = acc * math.tanh(graph.coupling(v, u))
                cov[root, u] = val
                stack.append((u, v, val))
    return cov


def tree_moments(graph: SignedGraph) -> ExactMoments:
    """Exact population moments of an acyclic model in closed form: zero
    mean, path-product covariance, and log Z = p log 2 + sum_e log cosh J_e."""
    cov = tree_covariance(graph)
    log_z = graph.p * math.log(2.0) + sum(
        math.log(math.cosh(j)) for j in graph.couplings.values()
    )
    return ExactMoments(mean=np.zeros(graph.p), covariance=cov, log_partition=log_z)


def rescaled_theta(graph: SignedGraph) -> RescaledParams:
    """Solve the population zero-gradient condition of the per-node square
    loss on an acyclic graph.

    The solution is a rescaled copy of the couplings: same support, same
    signs, magnitudes shrunk by the per-vertex prefactor. Computed from the
    sparse inverse covariance (theta_tilde[r, t] = -inv[r, t] / inv[r, r]).
    """
    inv = bethe_inverse_covariance(graph)
    scale = np.diag(inv).copy()
    matrix = -inv / scale[:, None]
    np.fill_diagonal(matrix, 0.0)
    return RescaledParams(matrix=matrix, node_scale=scale)


def rescaled_theta_rr(d: int, theta0: float, sign: int = 1) -> float:
    """Rescaled coupling magnitude on a degree-d regular graph with uniform
    |J| = theta0: sign * tanh(theta0) / (1 + (d-1) tanh^2(theta0))."""
    if d < 3:
        raise ValueError("degree must be >= 3")
    if theta0 <= 0:
        raise ValueError("theta0 must be positive")
    th = math.tanh(theta0)
    return sign * th / (1.0 + (d - 1) * th * th)


def rr_constants(d: int, theta0: float) -> RRConstants:
    """Closed-form theory constants for degree-d regular graphs.

    The support block of the population covariance has unit diagonal and
    constant off-diagonal tanh^2(theta0), hence exactly two eigenvalues:
    1 - tanh^2 (multiplicity d-1, the floor c_min) and 1 + (d-1) tanh^2.
    The incoherence norm equals tanh(theta0), giving alpha = 1 - tanh(theta0).
    """
    if d < 3:
        raise ValueError("degree must be >= 3")
    if theta0 <= 0:
        raise ValueError("theta0 must be positive")
    th = math.tanh(theta0)
    return RRConstants(
        d=d,
        theta0=theta0,
        c_min=1.0 - th * th,
        alpha=1.0 - th,
        lambda_max_qss=1.0 + (d - 1) * th * th,
        theta_tilde_rr=rescaled_theta_rr(d, theta0),
    )


def rr_support_block(d: int, theta0: float) -> np.ndarray:
    """Explicit d x d support covariance block of a degree-d regular graph:
    unit diagonal, tanh^2(theta0) off-diagonal."""
    th2 = math.tanh(theta0) ** 2
    return np.full((d, d), th2) + (1.0 - th2) * np.eye(d)


def rr_neighbor_row(d: int, theta0: float) -> np.ndarray:
    """Worst-case cross-covariance row for the incoherence norm on a
    degree-d regular graph: one entry tanh(theta0) (the adjacent support
    vertex) and d-1 entries tanh^3(theta0) (distance three)."""
    th = math.tanh(theta0)
    row = np.full(d, th**3)
    row[0] = th
    return row


def incoherence_norm(q_full: np.ndarray, r: int, support: list[int] | tuple[int, ...]) -> float:
    """Max-absolute-row-sum norm of Q_{S^c S} (Q_SS)^{-1}, where Q is
    q_full with row/column r removed and S indexes the given support
    vertices among the remaining ones."""
    p = q_full.shape[0]
    support = sorted(support)
    if r in support:
        raise ValueError("support must not contain the regression vertex")
    q = np.delete(np.delete(q_full, r, axis=0), r, axis=1)
    reduced = [v - 1 if v > r else v for v in support]
    mask = np.zeros(p - 1, dtype=bool)
    mask[reduced] = True
    q_ss = q[np.ix_(mask, mask)]
    q_scs = q[np.ix_(~mask, mask)]
    eig_min = float(np.linalg.eigvalsh(q_ss).min())
    if eig_min <= EIG_FLOOR:
        raise SingularMatrixError(
            f"support covariance block is singular (min eigenvalue {eig_min:.3e})",
            min_eigenvalue=eig_min,
        )
    if q_scs.shape[0] == 0:
        return 0.0
    factor = cho_factor(q_ss)
    a = cho_solve(factor, q_scs.T).T
    return float(np.abs(a).sum(axis=1).max())


def support_eig_min(q_full: np.ndarray, r: int, support: list[int] | tuple[int, ...]) -> float:
    """Minimum eigenvalue of the support block of q_full with vertex r
    removed."""
    support = sorted(support)
    q = np.delete(np.delete(q_full, r, axis=0), r, axis=1)
    reduced = [v - 1 if v > r else v for v in support]
    block = q[np.ix_(reduced, reduced)]
    return float(np.linalg.eigvalsh(block).min())


@dataclass(frozen=True)
class ThresholdReport:
    """Both sides of the minimum-signal condition for exact signed
    recovery: theta_tilde_min against 6 * lambda * sqrt(d) / c_min."""

    theta_tilde_min: float
    c_min: float
    max_degree: int
    lam: float
    threshold: float
    passes: bool


def theorem_thresholds(graph: SignedGraph, lam: float) -> ThresholdReport:
    """Evaluate the minimum-rescaled-magnitude condition on an acyclic
    graph, with c_min taken as the minimum over vertices of the smallest
    support-block eigenvalue of the population covariance."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    params = rescaled_theta(graph)
    cov = tree_covariance(graph)
    c_min = 1.0
    for r in range(graph.p):
        nbrs = graph.neighbors[r]
        if nbrs:
            c_min = min(c_min, support_eig_min(cov, r, nbrs))
    d = graph.max_degree
    threshold = 6.0 * lam * math.sqrt(d) / c_min
    return ThresholdReport(
        theta_tilde_min=params.min_magnitude,
        c_min=c_min,
        max_degree=d,
        lam=lam,
        threshold=threshold,
        passes=params.min_magnitude >= threshold,
    )
