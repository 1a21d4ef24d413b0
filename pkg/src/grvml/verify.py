"""Independent correctness oracles for the ML solver.

Nothing here reuses the solver's own recovery formulas: the KKT check
rebuilds the primal and dual variables from x̂ alone, and the grid search
evaluates the likelihood directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCase, DimensionTooLarge, DomainViolation, GenerationTimeout
from .estimator import SolverOptions, compute_S, decompose, neg_log_likelihood, solve
from .model import CaseTag, MlSolution, ProblemInstance

GRID_CHUNK = 1 << 20


@dataclass(frozen=True)
class KktReport:
    stationarity_w: np.ndarray
    stationarity_z: float
    primal_feas: float
    dual_feas_min: float
    comp_slack_max: float
    tol_kkt: float
    passed: bool

    @property
    def max_residual(self) -> float:
        return float(max(np.max(np.abs(self.stationarity_w), initial=0.0),
                         abs(self.stationarity_z), self.primal_feas, self.comp_slack_max))

    def to_json(self) -> dict:
        return {"stationarity_w": self.stationarity_w.tolist(),
                "stationarity_z": self.stationarity_z, "primal_feas": self.primal_feas,
                "dual_feas_min": self.dual_feas_min, "comp_slack_max": self.comp_slack_max,
                "tol_kkt": self.tol_kkt, "passed": self.passed}


def kkt_check(solution: MlSolution, instance: ProblemInstance, tol_kkt: float = 1e-8,
              opts: SolverOptions | None = None) -> KktReport:
    """Evaluate the KKT system of the lifted problem at the point implied by x̂.

    (w, z) are rebuilt from x̂ as z = 1 / (se2 ||x̂||^2 + sn2), w = (V^T x̂)^2 z;
    nu is taken from the solution; eta_i = nu se2 off the range of H and, on
    it, zero wherever ỹ_j != 0. The w-stationarity rows are multiplied by
    |x̃_j| (keeping the sign of x̃_j) so that they stay finite at w_j = 0 and
    also flag x̃ components whose sign disagrees with ỹ.
    """
    if instance.sigma_e2 == 0 or solution.case_tag is CaseTag.DegenerateLsFallback:
        raise DegenerateCase("the sigma_e2 = 0 least-squares fallback has no KKT certificate")
    opts = opts or SolverOptions()
    sf = decompose(instance, opts)
    M, N, R = instance.M, instance.N, sf.rank
    se, sn = instance.sigma_e2, instance.sigma_eps2
    nu = float(solution.nu_star)

    x_tilde = sf.V.T @ np.asarray(solution.x_hat, float)
    z = 1.0 / (se * float(x_tilde @ x_tilde) + sn)
    w = x_tilde ** 2 * z
    yh, lam = sf.y_head, sf.lambdas

    eta = np.full(N, nu * se)
    eta[:R] = np.where(yh != 0, 0.0, 0.5 * lam ** 2 + nu * se)

    stat = np.empty(N)
    stat[:R] = (0.5 * lam ** 2 + nu * se - eta[:R]) * x_tilde[:R] - 0.5 * yh * lam
    stat[R:] = nu * se - eta[R:]
    stat_z = (0.5 * float(yh @ yh) - 0.5 * float(np.sum(yh * lam * x_tilde[:R]))
              + 0.5 * sf.tail_energy - 0.5 * M / z + nu * sn)
    primal = abs(se * float(np.sum(w)) + sn * z - 1.0)
    dual_min = float(min(eta.min(), w.min()))
    slack = float(np.max(np.abs(eta * w)))
    passed = bool(np.all(np.abs(stat) <= tol_kkt) and abs(stat_z) <= tol_kkt
                  and primal <= tol_kkt and slack <= tol_kkt and dual_min >= -tol_kkt)
    return KktReport(stationarity_w=stat, stationarity_z=float(stat_z), primal_feas=primal,
                     dual_feas_min=dual_min, comp_slack_max=slack, tol_kkt=tol_kkt,
                     passed=passed)


def default_halfwidth(instance: ProblemInstance) -> float:
    x_ls = np.linalg.lstsq(instance.H, instance.y, rcond=None)[0]
    return 2.0 * (float(np.linalg.norm(x_ls)) + 1.0)


def _grid_pass(instance, center, halfwidth, points):
    N = instance.N
    axis = np.linspace(-halfwidth, halfwidth, points)
    mesh = np.meshgrid(*([axis] * N), indexing="ij")
    pts = center + np.stack([m.ravel() for m in mesh], axis=1)
    H, y = instance.H, instance.y
    best_val, best_idx = math.inf, 0
    step = max(1, GRID_CHUNK // max(1, instance.M))
    for start in range(0, pts.shape[0], step):
        X = pts[start:start + step]
        r = y[None, :] - X @ H.T
        s = instance.sigma_e2 * np.einsum("ij,ij->i", X, X) + instance.sigma_eps2
        f = np.einsum("ij,ij->i", r, r) / (2.0 * s) + 0.5 * instance.M * np.log(s)
        i = int(np.argmin(f))
        # strict < keeps the lexicographically first grid index on ties
        if f[i] < best_val:
            best_val, best_idx = float(f[i]), start + i
    return pts[best_idx], best_val


def grid_minimize(instance: ProblemInstance, box_halfwidth: float | None = None,
                  points_per_axis: int = 201) -> tuple[np.ndarray, float]:
    """Brute-force minimum of the negative log-likelihood over a box at the origin.

    A second pass re-grids a box ten times smaller around the coarse argmin.
    """
    if instance.N > 3:
        raise DimensionTooLarge(f"grid search is limited to N <= 3, got N={instance.N}")
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    if points_per_axis % 2 == 0:
        points_per_axis += 1
    hw = default_halfwidth(instance) if box_halfwidth is None else float(box_halfwidth)
    x0, f0 = _grid_pass(instance, np.zeros(instance.N), hw, points_per_axis)
    x1, f1 = _grid_pass(instance, x0, hw / 10.0, points_per_axis)
    if f1 <= f0:
        return x1, f1
    return x0, f0


def _coupling_hessian(C, w, z):
    qzz = 0.25 * float(np.sum(C * np.sqrt(w))) * z ** -1.5
    p = 0.25 * C * w ** -1.5 * math.sqrt(z)
    d = -0.25 * C / np.sqrt(w) / math.sqrt(z)
    return qzz, p, d


def schur_residual(C, w, z) -> float:
    """d2q/dz2 - d^T diag(p)^{-1} d, which vanishes identically."""
    qzz, p, d = _coupling_hessian(*_check_domain(C, w, z))
    return qzz - float(np.sum(d * d / p))


def _check_domain(C, w, z):
    C = np.atleast_1d(np.asarray(C, float))
    w = np.atleast_1d(np.asarray(w, float))
    if C.shape != w.shape:
        raise DomainViolation("C and w must have the same length")
    if not (np.all(C > 0) and np.all(w > 0) and z > 0):
        raise DomainViolation("C, w and z must be strictly positive")
    return C, w, float(z)


def lifted_hessian_psd(C, w, z: float, tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Hessian of q(w, z) = -sqrt(z) sum_j C_j sqrt(w_j), ordered (z, w_1..w_R).

    The flag is True when the smallest eigenvalue is >= -tol times the
    largest and the Schur complement of diag(p) vanishes to within tol
    (relative to d2q/dz2).
    """
    C, w, z = _check_domain(C, w, z)
    qzz, p, d = _coupling_hessian(C, w, z)
    R = C.shape[0]
    hess = np.empty((R + 1, R + 1))
    hess[0, 0] = qzz
    hess[0, 1:] = d
    hess[1:, 0] = d
    hess[1:, 1:] = np.diag(p)
    eig = np.linalg.eigvalsh(hess)
    schur = qzz - float(np.sum(d * d / p))
    ok = bool(eig[0] >= -tol * eig[-1] and abs(schur) <= tol * max(1.0, qzz))
    return hess, ok


# ---------------------------------------------------------------- generators

def _rank_deficient_H(rng, M, N):
    base = rng.standard_normal((M, 1 + int(rng.integers(0, N - 1))))
    extra = base @ rng.standard_normal((base.shape[1], N - base.shape[1]))
    H = np.column_stack([base, extra])
    return H[:, rng.permutation(N)]


def _draw(rng, tag, M, N):
    rank_deficient = tag in (CaseTag.RankDeficientNuZero, CaseTag.RankDeficientNuPositive)
    if M is None:
        if tag is CaseTag.RankDeficientNuPositive and N > 1 and rng.random() < 0.3:
            M = int(rng.integers(1, N))
        else:
            M = int(rng.integers(N + 1, N + 5))
    H = _rank_deficient_H(rng, M, N) if rank_deficient else rng.standard_normal((M, N))
    se = float(rng.uniform(0.02, 0.5))
    sn = float(rng.uniform(0.01, 0.2))
    x = rng.standard_normal(N) * rng.uniform(0.3, 3.0)
    noise_scale = rng.uniform(0.5, 3.0)
    E = rng.standard_normal((M, N)) * math.sqrt(se) * noise_scale
    eps = rng.standard_normal(M) * math.sqrt(sn) * noise_scale
    return ProblemInstance(H=H, y=(H + E) @ x + eps, sigma_e2=se, sigma_eps2=sn)


def _force_S_zero(inst, opts, max_ulps=400):
    """Rescale the off-range part of y so that S evaluates to exactly 0.0."""
    sf = decompose(inst, opts)
    if sf.rank != inst.N or inst.M <= inst.N:
        return None
    se, sn, M = inst.sigma_e2, inst.sigma_eps2, inst.M
    span = sf.U[:, :sf.rank] @ sf.y_head
    off = inst.y - span
    off_norm = math.sqrt(float(off @ off))
    if off_norm == 0:
        return None
    target = M * (se * float(np.sum(sf.y_head ** 2 / sf.lambdas ** 2)) + sn)
    scale = math.sqrt(target) / off_norm
    up = down = scale
    candidates = [scale]
    for _ in range(max_ulps):
        up, down = math.nextafter(up, math.inf), math.nextafter(down, 0.0)
        candidates += [up, down]
    for c in candidates:
        trial = ProblemInstance(H=inst.H, y=span + c * off, sigma_e2=se, sigma_eps2=sn)
        if compute_S(decompose(trial, opts), se, sn, M, opts) == 0.0:
            return trial
    return None


def make_case_instance(case_tag, rng_seed: int, M: int | None = None, N: int = 2,
                       max_draws: int = 1000, opts: SolverOptions | None = None) -> ProblemInstance:
    """Rejection-sample a random instance whose solution lands in ``case_tag``.

    Rank-deficient tags build H from fewer independent columns than N; the
    S = 0 tag rescales the residual part of y until S is exactly zero.
    """
    tag = CaseTag(case_tag)
    if tag is CaseTag.DegenerateLsFallback:
        raise ValueError("DegenerateLsFallback is not a sampled case")
    if tag in (CaseTag.RankDeficientNuZero, CaseTag.RankDeficientNuPositive) and N < 2:
        raise ValueError("rank-deficient cases need N >= 2")
    opts = opts or SolverOptions()
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_draws):
        inst = _draw(rng, tag, M, N)
        if tag is CaseTag.FullRankSZero:
            inst = _force_S_zero(inst, opts)
            if inst is None:
                continue
        if solve(inst, opts).case_tag is tag:
            return inst
    raise GenerationTimeout(f"no {tag.value} instance in {max_draws} draws (seed {rng_seed})")
