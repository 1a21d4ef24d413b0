"""Maximum-likelihood estimation for y = (H + E) x + eps with Gaussian E.

The negative log-likelihood

    f(x) = ||y - H x||^2 / (2 s(x)) + (M/2) log s(x),   s(x) = se2 ||x||^2 + sn2

is quasiconvex in x but becomes a convex problem after rotating into the
singular basis of H and lifting (x̃, s) to (w, z) = (x̃^2 / s, 1 / s). The
optimum then follows from one decision scalar S and, in most cases, the root
of a monotone scalar function g(nu) of the dual variable of the lifted
equality constraint.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (BracketFailure, MaxIterExceeded, PoleViolation,
                     SvdFailure, ZeroSigmaE)
from .model import (CaseTag, DualCertificate, MlSolution, Multiplicity,
                    ProblemInstance, SpectralForm)

POSITIVE = "Positive"
NEGATIVE = "Negative"
MAX_POLE_EXPANSIONS = 60


@dataclass(frozen=True)
class SolverOptions:
    rank_tol_rel: float = 1e-10
    tail_energy_tol: float = 1e-12
    bisect_tol_nu_rel: float = 1e-13
    bisect_tol_g_abs: float = 1e-12
    max_bisect_iters: int = 200
    pole_approach_factor: float = 0.5
    sign_convention_free: int = 1
    free_mass_allocation: str = "FirstIndex"

    def __post_init__(self):
        for name in ("rank_tol_rel", "tail_energy_tol", "bisect_tol_nu_rel", "bisect_tol_g_abs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_bisect_iters < 1:
            raise ValueError("max_bisect_iters must be >= 1")
        if not 0 < self.pole_approach_factor < 1:
            raise ValueError("pole_approach_factor must lie in (0, 1)")
        if self.sign_convention_free not in (1, -1):
            raise ValueError("sign_convention_free must be +1 or -1")
        if self.free_mass_allocation not in ("FirstIndex", "Uniform"):
            raise ValueError("free_mass_allocation must be FirstIndex or Uniform")


DEFAULT_OPTIONS = SolverOptions()


def decompose(instance: ProblemInstance, opts: SolverOptions = DEFAULT_OPTIONS) -> SpectralForm:
    """SVD of H with a deterministic sign convention.

    Every column of V is flipped so that its largest-magnitude entry is
    positive (ties go to the first such entry), and the matching column of U
    follows it.
    """
    H, y = instance.H, instance.y
    M, N = H.shape
    try:
        U, s, Vt = np.linalg.svd(H, full_matrices=M < N)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    U, V = U.copy(), Vt.T.copy()
    K = s.shape[0]
    pivot = np.argmax(np.abs(V), axis=0)
    flip = V[pivot, np.arange(N)] < 0
    V[:, flip] *= -1
    U[:, flip[:K]] *= -1

    R = int(np.count_nonzero(s > opts.rank_tol_rel * s[0])) if s[0] > 0 else 0
    y_tilde = U.T @ y
    # explicit residual instead of ||y||^2 - ||y_R||^2 to avoid cancellation
    resid = y - U[:, :R] @ y_tilde[:R]
    for a in (U, V, s, y_tilde):
        a.setflags(write=False)
    return SpectralForm(U=U, V=V, singular_values=s, rank=R, y_tilde=y_tilde,
                        tail_energy=float(resid @ resid), y_norm2=float(y @ y))


def neg_log_likelihood(instance: ProblemInstance, x) -> float:
    x = np.asarray(x, dtype=float)
    s = instance.sigma_e2 * float(x @ x) + instance.sigma_eps2
    r = instance.y - instance.H @ x
    return float(r @ r) / (2.0 * s) + 0.5 * instance.M * math.log(s)


def compute_S(spec: SpectralForm, sigma_e2: float, sigma_eps2: float, M: int,
              opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    """Decision scalar selecting the KKT branch; -inf when y lies in range(H)."""
    if sigma_e2 == 0:
        raise ZeroSigmaE("S is undefined for sigma_e2 = 0; use the LS fallback")
    if spec.tail_energy <= opts.tail_energy_tol * max(1.0, spec.y_norm2):
        return -math.inf
    ratio = float(np.sum(spec.y_head ** 2 / spec.lambdas ** 2))
    return 1.0 / sigma_e2 - (ratio + sigma_eps2 / sigma_e2) * M / spec.tail_energy


def pole(spec: SpectralForm, sigma_e2: float) -> float:
    """Rightmost singularity of g, or -inf when g has none."""
    if spec.rank == 0 or sigma_e2 == 0:
        return -math.inf
    return -spec.lambdas[-1] ** 2 / (2.0 * sigma_e2)


def _denominators(nu, spec, sigma_e2):
    d = spec.lambdas ** 2 + 2.0 * nu * sigma_e2
    if d.size and not np.all(d > 0):
        raise PoleViolation(f"nu={nu!r} is at or left of the pole {pole(spec, sigma_e2)!r}")
    return d


def g_of_nu(nu: float, spec: SpectralForm, sigma_e2: float, sigma_eps2: float, M: int) -> float:
    d = _denominators(nu, spec, sigma_e2)
    a = spec.y_head ** 2
    lam2 = spec.lambdas ** 2
    shrink = float(np.sum(a * nu * sigma_e2 / d))
    spread = float(np.sum(sigma_e2 * a * lam2 / d ** 2))
    return shrink + 0.5 * spec.tail_energy - 0.5 * M * (spread + sigma_eps2) + nu * sigma_eps2


def g_prime_of_nu(nu: float, spec: SpectralForm, sigma_e2: float, sigma_eps2: float, M: int) -> float:
    d = _denominators(nu, spec, sigma_e2)
    b = spec.y_head ** 2 * spec.lambdas ** 2
    return (float(np.sum(b * sigma_e2 / d ** 2))
            + 2.0 * M * float(np.sum(sigma_e2 ** 2 * b / d ** 3)) + sigma_eps2)


def _bisect(g: Callable[[float], float], lo: float, hi: float, g_lo: float, g_hi: float,
            opts: SolverOptions) -> tuple[float, int]:
    for it in range(1, opts.max_bisect_iters + 1):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid) <= opts.bisect_tol_g_abs:
            return mid, it
        if g_mid < 0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
        if hi - lo <= opts.bisect_tol_nu_rel * max(1.0, abs(mid)):
            return (lo if abs(g_lo) <= abs(g_hi) else hi), it
    raise MaxIterExceeded(f"bisection did not converge in {opts.max_bisect_iters} iterations")


def bisect_dual_iter(spec: SpectralForm, sigma_e2: float, sigma_eps2: float, M: int,
                     bracket_hint: str, opts: SolverOptions = DEFAULT_OPTIONS,
                     g: Callable[[float], float] | None = None) -> tuple[float, int]:
    """Root of g on the bracket named by ``bracket_hint``; returns (nu, iterations).

    ``g`` overrides the dual function (test seam); by default it is
    :func:`g_of_nu` bound to the given spectral data.
    """
    if g is None:
        def g(nu):
            return g_of_nu(nu, spec, sigma_e2, sigma_eps2, M)

    if bracket_hint == POSITIVE:
        lo, hi = 0.0, 0.5 * M
        g_lo, g_hi = g(lo), g(hi)
        if not g_lo < 0:
            raise BracketFailure(f"positive bracket needs g(0) < 0, got {g_lo!r}")
        if g_hi == 0:
            return hi, 0
        if not g_hi > 0:
            raise BracketFailure(f"positive bracket needs g(M/2) >= 0, got {g_hi!r}")
    elif bracket_hint == NEGATIVE:
        p = pole(spec, sigma_e2)
        if not math.isfinite(p) or spec.rank != len(spec.V):
            raise BracketFailure("negative bracket requires sigma_e2 > 0 and full column rank")
        hi = 0.0
        g_hi = g(hi)
        if not g_hi > 0:
            raise BracketFailure(f"negative bracket needs g(0) > 0, got {g_hi!r}")
        lo = 0.5 * p
        try:
            g_lo = g(lo)
            for _ in range(MAX_POLE_EXPANSIONS):
                if g_lo < 0:
                    break
                lo = p + opts.pole_approach_factor * (lo - p)
                g_lo = g(lo)
        except PoleViolation as exc:
            raise BracketFailure("ran into the pole before g turned negative") from exc
        if not g_lo < 0:
            raise BracketFailure("g stayed nonnegative all the way to the pole")
    else:
        raise ValueError(f"unknown bracket hint {bracket_hint!r}")
    return _bisect(g, lo, hi, g_lo, g_hi, opts)


def bisect_dual(spec: SpectralForm, sigma_e2: float, sigma_eps2: float, M: int,
                bracket_hint: str, opts: SolverOptions = DEFAULT_OPTIONS,
                g: Callable[[float], float] | None = None) -> float:
    return bisect_dual_iter(spec, sigma_e2, sigma_eps2, M, bracket_hint, opts, g)[0]


def lifted_objective(w, z: float, spec: SpectralForm, sigma_e2: float, sigma_eps2: float,
                     M: int) -> float:
    """Objective of the lifted convex problem; free entries of ``w`` beyond R are ignored."""
    R = spec.rank
    w = np.asarray(w, dtype=float)[:R]
    yh, lam = spec.y_head, spec.lambdas
    fit = 0.5 * np.sum(yh ** 2 * z + lam ** 2 * w - 2.0 * np.abs(yh) * lam * np.sqrt(w * z))
    return float(fit) + 0.5 * spec.tail_energy * z - 0.5 * M * math.log(z)


def _dual_slacks(spec, w, nu, sigma_e2, N):
    R = spec.rank
    eta = np.full(N, nu * sigma_e2)
    lam2 = spec.lambdas ** 2
    eta[:R] = np.where(w[:R] > 0, 0.0, 0.5 * lam2 + nu * sigma_e2)
    return eta


def _residual_max(spec, x_tilde, w, z, nu, eta, sigma_e2, sigma_eps2, M):
    R = spec.rank
    yh, lam = spec.y_head, spec.lambdas
    xh = x_tilde[:R]
    # gradient in the signed (u, t) form, divided by sqrt(z)
    stat_w = (0.5 * lam ** 2 + nu * sigma_e2 - eta[:R]) * xh - 0.5 * yh * lam
    stat_free = nu * sigma_e2 - eta[R:]
    stat_z = (0.5 * float(yh @ yh) - 0.5 * float(np.sum(yh * lam * xh))
              + 0.5 * spec.tail_energy - 0.5 * M / z + nu * sigma_eps2)
    primal = sigma_e2 * float(np.sum(w)) + sigma_eps2 * z - 1.0
    parts = [np.abs(stat_w), np.abs(stat_free), np.abs(eta * w), [abs(stat_z), abs(primal)]]
    return float(max(np.max(np.abs(p)) if len(p) else 0.0 for p in parts))


def solve(instance: ProblemInstance, opts: SolverOptions | None = None) -> MlSolution:
    """Global minimiser of the negative log-likelihood.

    Dispatch on rank R of H and the sign of S:

    * sigma_e2 = 0: minimum-norm least squares.
    * R < N, S >= 0: closed form with nu = 0; the leftover mass S goes into
      the null-space components (sign and, for R < N-1, direction free).
    * R < N, S < 0 and R = N, S < 0: root of g on (0, M/2].
    * R = N, S > 0: root of g between the pole and 0.
    * R = N, S = 0: x̃ = ỹ / lambda.
    """
    opts = opts or DEFAULT_OPTIONS
    sf = decompose(instance, opts)
    M, N, R = instance.M, instance.N, sf.rank
    se, sn = instance.sigma_e2, instance.sigma_eps2
    yh, lam = sf.y_head, sf.lambdas
    x_tilde = np.zeros(N)
    nu, iters, S = 0.0, 0, None
    multiplicity = Multiplicity.unique()

    if se == 0:
        case = CaseTag.DegenerateLsFallback
        x_tilde[:R] = yh / lam
        if R < N:
            multiplicity = Multiplicity.continuum(R, N)
    else:
        S = compute_S(sf, se, sn, M, opts)
        if R < N and S >= 0:
            case = CaseTag.RankDeficientNuZero
            z = M / sf.tail_energy
            x_tilde[:R] = yh / lam
            w_free = np.zeros(N - R)
            if opts.free_mass_allocation == "FirstIndex":
                w_free[0] = S
            else:
                w_free[:] = S / (N - R)
            x_tilde[R:] = opts.sign_convention_free * np.sqrt(w_free / z)
            if S > 0:
                multiplicity = (Multiplicity.two_fold(R) if R == N - 1
                                else Multiplicity.continuum(R, N))
        elif R == N and S == 0:
            case = CaseTag.FullRankSZero
            x_tilde[:] = yh / lam
        else:
            if R < N:
                case, hint = CaseTag.RankDeficientNuPositive, POSITIVE
            elif S > 0:
                case, hint = CaseTag.FullRankNuNegative, NEGATIVE
            else:
                case, hint = CaseTag.FullRankNuPositive, POSITIVE
            nu, iters = bisect_dual_iter(sf, se, sn, M, hint, opts)
            x_tilde[:R] = yh / (lam + 2.0 * nu * se / lam)

    x_hat = sf.V @ x_tilde
    z = 1.0 / (se * float(x_tilde @ x_tilde) + sn)
    w = x_tilde ** 2 * z
    eta = _dual_slacks(sf, w, nu, se, N)
    resid = _residual_max(sf, x_tilde, w, z, nu, eta, se, sn, M)
    cert = DualCertificate(w=w, z=z, nu=nu, eta=eta, S_value=S, kkt_residual_max=resid)
    return MlSolution(x_hat=x_hat, x_tilde_star=x_tilde, nu_star=nu, case_tag=case,
                      multiplicity=multiplicity,
                      objective_value=neg_log_likelihood(instance, x_hat),
                      certificate=cert, iterations=iters)


def sign_variants(solution: MlSolution, spec: SpectralForm, limit: int = 12) -> list[np.ndarray]:
    """All x̂ obtained by flipping the signs of the nonzero free components.

    The first entry is the solution's own estimate. Unique solutions return
    a single element.
    """
    if solution.multiplicity.kind == "Unique":
        return [solution.x_hat.copy()]
    start = spec.rank
    xt = np.asarray(solution.x_tilde_star)
    free = [i for i in range(start, xt.shape[0]) if xt[i] != 0][:limit]
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=len(free)):
        v = xt.copy()
        v[free] *= signs
        out.append(spec.V @ v)
    return out
