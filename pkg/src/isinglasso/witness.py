"""Primal-dual certificates for signed-neighborhood recovery.

Given data for node r, a candidate support S, the population regression
targets theta_tilde, and a penalty lambda, the certificate is built in
four steps: (a) solve the Lasso restricted to S and set the support dual
to the solution signs, (b) pin everything off S to zero, (c) back out the
off-support dual from the stationarity system,

    z_off = [W_off - Q_{off,S} (theta_hat_S - theta_tilde_S)] / lambda,

where W = b - Q theta_tilde is the empirical noise at the population
regression point, and (d) record every inequality the recovery argument
relies on: strict dual feasibility, sign agreement, the l2 deviation
against 3 lambda sqrt(|S|) / c_min, and the sup deviation against half the
minimum rescaled magnitude.

All constructions accept either a SampleMatrix or ExactMoments, so the
same code path runs in the population limit (where W vanishes).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .bethe import (
    EIG_FLOOR,
    RescaledParams,
    SingularMatrixError,
    incoherence_norm,
    tree_covariance,
)
from .graphs import SignedGraph
from .sampler import ExactMoments, SampleMatrix, SamplerConfig, gibbs_sample, iter_weighted_states
from .solvers import SolverConfig, lasso_cd_gram


def _moment_form(data: SampleMatrix | ExactMoments, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Predictor second-moment matrix Q and cross-moment vector b for
    node r, from samples or exact moments."""
    if isinstance(data, SampleMatrix):
        x = data.as_float()
        y = x[:, r]
        xs = np.delete(x, r, axis=1)
        n = data.n
        return (xs.T @ xs) / n, (xs.T @ y) / n
    second = data.second_moment()
    q = np.delete(np.delete(second, r, axis=0), r, axis=1)
    b = np.delete(second[:, r], r)
    return q, b


def _reduced_support(support_vertices, p: int, r: int) -> np.ndarray:
    idx = []
    for v in support_vertices:
        if v == r:
            raise ValueError("support must not contain the regression vertex")
        if not 0 <= v < p:
            raise ValueError(f"support vertex {v} out of range")
        idx.append(v - 1 if v > r else v)
    return np.asarray(sorted(idx), dtype=np.int64)


def _incoherence_reduced(q: np.ndarray, s_idx: np.ndarray) -> float:
    """Max-row-sum norm of Q_{S^c S} (Q_SS)^{-1} in reduced coordinates."""
    m = q.shape[0]
    mask = np.zeros(m, dtype=bool)
    mask[s_idx] = True
    q_ss = q[np.ix_(mask, mask)]
    eig_min = float(np.linalg.eigvalsh(q_ss).min())
    if eig_min <= EIG_FLOOR:
        raise SingularMatrixError(
            f"support covariance block is singular (min eigenvalue {eig_min:.3e})",
            min_eigenvalue=eig_min,
        )
    q_scs = q[np.ix_(~mask, mask)]
    if q_scs.shape[0] == 0:
        return 0.0
    a = cho_solve(cho_factor(q_ss), q_scs.T).T
    return float(np.abs(a).sum(axis=1).max())


@dataclass(frozen=True)
class CovarianceReport:
    """Empirical second-moment matrix for one node with the eigenvalue and
    incoherence measurements the recovery conditions are stated in."""

    node: int
    support: tuple[int, ...]
    q: np.ndarray
    eig_min_ss: float
    eig_max_full: float
    incoherence: float


def sample_covariance(samples: SampleMatrix, r: int, support) -> CovarianceReport:
    """Second-moment matrix (1/n) sum_i x_without_r x_without_r^T; its
    diagonal is exactly 1 for +/-1 data."""
    q, _ = _moment_form(samples, r)
    s_idx = _reduced_support(support, samples.p, r)
    mask = np.zeros(samples.p - 1, dtype=bool)
    mask[s_idx] = True
    eig_min_ss = float(np.linalg.eigvalsh(q[np.ix_(mask, mask)]).min())
    eig_max_full = float(np.linalg.eigvalsh(q).max())
    try:
        inc = _incoherence_reduced(q, s_idx)
    except SingularMatrixError:
        inc = float("inf")
    return CovarianceReport(
        node=r,
        support=tuple(sorted(int(v) for v in support)),
        q=q,
        eig_min_ss=eig_min_ss,
        eig_max_full=eig_max_full,
        incoherence=inc,
    )


@dataclass(frozen=True)
class NoiseVector:
    """Empirical noise W at the population regression point, with
    per-coordinate summaries of the underlying per-sample statistics
    Z_s_i = x_s_i (x_r_i - <theta_tilde, x_i>)."""

    node: int
    w: np.ndarray
    inf_norm: float
    max_abs_z: np.ndarray
    z_variance: np.ndarray


def compute_noise_vector(
    samples: SampleMatrix, r: int, theta_tilde: RescaledParams
) -> NoiseVector:
    """W_s = (1/n) sum_i Z_s_i per predictor coordinate."""
    if theta_tilde.matrix.shape[0] != samples.p:
        raise ValueError(
            f"theta_tilde is for p = {theta_tilde.matrix.shape[0]} vertices, "
            f"samples have p = {samples.p}"
        )
    x = samples.as_float()
    y = x[:, r]
    xs = np.delete(x, r, axis=1)
    tt = theta_tilde.row_excluding(r)
    resid = y - xs @ tt
    z = xs * resid[:, None]
    w = z.mean(axis=0)
    return NoiseVector(
        node=r,
        w=w,
        inf_norm=float(np.abs(w).max()),
        max_abs_z=np.abs(z).max(axis=0),
        z_variance=z.var(axis=0),
    )


@dataclass(frozen=True)
class ZStatistics:
    """Exact enumeration statistics of Z_s = x_s (x_r - <theta_tilde, x>):
    per-coordinate mean, the common second moment, and the largest |Z|
    over all configurations."""

    node: int
    means: np.ndarray
    second_moment: float
    max_abs: float


def enumerate_z_statistics(
    graph: SignedGraph, r: int, theta_tilde: RescaledParams
) -> ZStatistics:
    """Brute-force the Z statistics over all 2^p states. Because spins are
    +/-1, E[Z_s^2] and max |Z_s| do not depend on s."""
    tt = theta_tilde.row_excluding(r)
    mean = np.zeros(graph.p - 1)
    second = 0.0
    max_abs = 0.0
    for spins, weights in iter_weighted_states(graph):
        xs = np.delete(spins, r, axis=1)
        resid = spins[:, r] - xs @ tt
        mean += (weights * resid) @ xs
        second += float(weights @ (resid * resid))
        max_abs = max(max_abs, float(np.abs(resid).max()))
    return ZStatistics(node=r, means=mean, second_moment=second, max_abs=max_abs)


@dataclass(frozen=True)
class WitnessCertificate:
    """Raw witness quantities; every pass/fail is re-derived from them."""

    node: int
    support: tuple[int, ...]
    lam: float
    theta_hat_s: np.ndarray
    theta_tilde_s: np.ndarray
    true_signs: np.ndarray
    z_s: np.ndarray
    z_sc: np.ndarray
    w_s_inf: float
    w_sc_inf: float
    kkt_residual_s: float
    solver_tol: float
    c_min: float
    alpha: float
    c_min_measured: float
    alpha_measured: float
    half_theta_tilde_min: float

    @property
    def z_sc_inf(self) -> float:
        return float(np.abs(self.z_sc).max()) if self.z_sc.size else 0.0

    @property
    def strict_feasibility_margin(self) -> float:
        return 1.0 - self.z_sc_inf

    @property
    def w_inf(self) -> float:
        return max(self.w_s_inf, self.w_sc_inf)

    @property
    def l2_error(self) -> float:
        return float(np.linalg.norm(self.theta_hat_s - self.theta_tilde_s))

    @property
    def l2_bound(self) -> float:
        return 3.0 * self.lam * math.sqrt(len(self.support)) / self.c_min

    @property
    def linf_error(self) -> float:
        return float(np.abs(self.theta_hat_s - self.theta_tilde_s).max())

    @property
    def sign_consistent(self) -> bool:
        return bool(np.array_equal(self.z_s, self.true_signs))

    @property
    def noise_hypothesis(self) -> bool:
        """Whether the conditional l2 bound's hypothesis held on this data."""
        return self.w_inf <= self.lam / 2.0

    def checks(self) -> dict[str, bool]:
        return {
            "strict_dual_feasibility": self.z_sc_inf < 1.0,
            "sign_consistency": self.sign_consistent,
            "l2_within_bound": self.l2_error <= self.l2_bound + 1e-12,
            "linf_within_half_min": self.linf_error <= self.half_theta_tilde_min + 1e-12,
            "kkt_stationarity": self.kkt_residual_s <= self.solver_tol + 1e-10,
        }

    def passes_all(self) -> bool:
        return all(self.checks().values())

    def to_json(self) -> str:
        return json.dumps(
            {
                "node": self.node,
                "support": list(self.support),
                "lambda": self.lam,
                "theta_hat_s": self.theta_hat_s.tolist(),
                "theta_tilde_s": self.theta_tilde_s.tolist(),
                "z_s": self.z_s.tolist(),
                "z_sc": self.z_sc.tolist(),
                "z_sc_inf": self.z_sc_inf,
                "strict_feasibility_margin": self.strict_feasibility_margin,
                "w_s_inf": self.w_s_inf,
                "w_sc_inf": self.w_sc_inf,
                "kkt_residual_s": self.kkt_residual_s,
                "c_min": self.c_min,
                "alpha": self.alpha,
                "c_min_measured": self.c_min_measured,
                "alpha_measured": self.alpha_measured,
                "l2_error": self.l2_error,
                "l2_bound": self.l2_bound,
                "linf_error": self.linf_error,
                "half_theta_tilde_min": self.half_theta_tilde_min,
                "noise_hypothesis": self.noise_hypothesis,
                "checks": self.checks(),
            }
        )


def construct_witness(
    data: SampleMatrix | ExactMoments,
    r: int,
    support,
    theta_tilde: RescaledParams,
    lam: float,
    config: SolverConfig | None = None,
    c_min: float | None = None,
    alpha: float | None = None,
) -> WitnessCertificate:
    """Build the primal-dual witness for node r on the given support.

    c_min / alpha default to the quantities measured on the supplied data;
    pass closed-form targets to check against theory instead. Raises
    SingularMatrixError when the support block is singular and ValueError
    for lambda <= 0 or empty support.
    """
    if lam <= 0:
        raise ValueError("witness construction needs lambda > 0")
    support = tuple(sorted(int(v) for v in support))
    if not support:
        raise ValueError("support must be nonempty")
    cfg = config or SolverConfig()
    p = theta_tilde.matrix.shape[0]
    q, b = _moment_form(data, r)
    s_idx = _reduced_support(support, p, r)
    mask = np.zeros(p - 1, dtype=bool)
    mask[s_idx] = True

    eig_min = float(np.linalg.eigvalsh(q[np.ix_(mask, mask)]).min())
    if eig_min <= EIG_FLOOR:
        raise SingularMatrixError(
            f"support covariance block is singular (min eigenvalue {eig_min:.3e})",
            min_eigenvalue=eig_min,
        )
    alpha_measured = 1.0 - _incoherence_reduced(q, s_idx)

    tt = theta_tilde.row_excluding(r)
    w = b - q @ tt

    sol = lasso_cd_gram(q, b, lam, support=s_idx, config=cfg)
    theta_hat_s = sol.coefficients[s_idx]
    z_s = np.sign(theta_hat_s)
    dev = theta_hat_s - tt[s_idx]
    z_sc = (w[~mask] - q[np.ix_(~mask, mask)] @ dev) / lam

    return WitnessCertificate(
        node=r,
        support=support,
        lam=lam,
        theta_hat_s=theta_hat_s,
        theta_tilde_s=tt[s_idx],
        true_signs=np.sign(tt[s_idx]),
        z_s=z_s,
        z_sc=z_sc,
        w_s_inf=float(np.abs(w[mask]).max()),
        w_sc_inf=float(np.abs(w[~mask]).max()) if (~mask).any() else 0.0,
        kkt_residual_s=sol.kkt_residual,
        solver_tol=cfg.tol,
        c_min=c_min if c_min is not None else eig_min,
        alpha=alpha if alpha is not None else alpha_measured,
        c_min_measured=eig_min,
        alpha_measured=alpha_measured,
        half_theta_tilde_min=theta_tilde.min_magnitude / 2.0,
    )


@dataclass(frozen=True)
class ConditionCheck:
    """Sample-level dependency/incoherence checks with signed margins
    (positive margin = condition satisfied with room to spare)."""

    eig_min: float
    eig_target: float
    eig_margin: float
    eig_pass: bool
    incoherence: float
    incoherence_target: float
    incoherence_margin: float
    incoherence_pass: bool
    delta: float


_CHECK_SLACK = 1e-12


def check_conditions(
    report: CovarianceReport,
    c_min_target: float,
    alpha_target: float,
    delta: float = 0.0,
) -> ConditionCheck:
    """Evaluate eig_min(Q_SS) >= c_min - delta and
    incoherence <= 1 - alpha/2 on a covariance report.

    Pass/fail comparisons carry a 1e-12 slack so that population inputs
    hitting their targets exactly do not flip on eigensolver rounding;
    the reported margins stay raw.
    """
    eig_target = c_min_target - delta
    inc_target = 1.0 - alpha_target / 2.0
    return ConditionCheck(
        eig_min=report.eig_min_ss,
        eig_target=eig_target,
        eig_margin=report.eig_min_ss - eig_target,
        eig_pass=report.eig_min_ss >= eig_target - _CHECK_SLACK,
        incoherence=report.incoherence,
        incoherence_target=inc_target,
        incoherence_margin=inc_target - report.incoherence,
        incoherence_pass=report.incoherence <= inc_target + _CHECK_SLACK,
        delta=delta,
    )


def tail_bound_lambda(c: float, alpha: float, p: int, n: int) -> float:
    """Penalty floor 4 sqrt(c+1) (2 - alpha) / alpha * sqrt(log(p)/n) that
    the noise concentration statement requires."""
    return 4.0 * math.sqrt(c + 1.0) * (2.0 - alpha) / alpha * math.sqrt(math.log(p) / n)


@dataclass(frozen=True)
class ProbeRow:
    n: int
    lam: float
    trials: int
    exceed_count: int
    empirical_prob: float
    stderr: float
    bound: float
    within_precondition: bool


def tail_rate_probe(
    graph: SignedGraph,
    theta_tilde: RescaledParams,
    n_grid,
    trials: int,
    c: float,
    node: int | None = None,
    alpha: float | None = None,
    sampler: SamplerConfig | None = None,
    seed: int = 0,
) -> list[ProbeRow]:
    """Monte Carlo estimate, per sample size, of the probability that the
    scaled noise (2-alpha)/lambda * sup|W| reaches alpha/2, next to its
    theoretical ceiling 2 exp(-c log p).

    lambda is set at the concentration statement's own floor. Rows with
    n < (c+1) d^2 log p are flagged as outside the statement's premise.
    """
    if trials < 0:
        raise ValueError("trials must be >= 0")
    if trials == 0:
        return []
    p = graph.p
    d = graph.max_degree
    if node is None:
        node = int(np.argmax(graph.degrees))
    if alpha is None:
        # population incoherence margin at the probe node
        alpha = 1.0 - incoherence_norm(tree_covariance(graph), node, graph.neighbors[node])
    base = sampler or SamplerConfig()
    tt = theta_tilde.row_excluding(node)
    bound = 2.0 * math.exp(-c * math.log(p))
    precondition_n = (c + 1.0) * d * d * math.log(p)

    rows = []
    for i, n in enumerate(n_grid):
        n = int(n)
        if n < 1:
            raise ValueError("sample sizes must be >= 1")
        lam = tail_bound_lambda(c, alpha, p, n)
        threshold = 0.5 * alpha * lam / (2.0 - alpha)
        exceed = 0
        for t in range(trials):
            chain_seed = int(np.random.SeedSequence(entropy=(seed, i, t)).generate_state(1)[0])
            cfg = SamplerConfig(
                burn_in_sweeps=base.burn_in_sweeps,
                thinning_sweeps=base.thinning_sweeps,
                seed=chain_seed,
            )
            samples = gibbs_sample(graph, n, cfg)
            x = samples.as_float()
            resid = x[:, node] - np.delete(x, node, axis=1) @ tt
            w = (np.delete(x, node, axis=1) * resid[:, None]).mean(axis=0)
            if float(np.abs(w).max()) >= threshold:
                exceed += 1
        prob = exceed / trials
        stderr = max(math.sqrt(prob * (1.0 - prob) / trials), 0.5 / trials)
        rows.append(
            ProbeRow(
                n=n,
                lam=lam,
                trials=trials,
                exceed_count=exceed,
                empirical_prob=prob,
                stderr=stderr,
                bound=bound,
                within_precondition=n >= precondition_n,
            )
        )
    return rows


def probe_rows_to_csv(rows: list[ProbeRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda", "empirical_prob", "bound", "trials"])
        for row in rows:
            writer.writerow(
                [
                    row.n,
                    format(row.lam, ".17g"),
                    format(row.empirical_prob, ".17g"),
                    format(row.bound, ".17g"),
                    row.trials,
                ]
            )
