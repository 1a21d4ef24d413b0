"""Reference estimators (LS, oracle LS, TLS) and the Cramér–Rao bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, SvdFailure, TlsNongeneric


@dataclass(frozen=True)
class CrbResult:
    fim: np.ndarray
    crb_trace: float
    well_posed: bool


def ls(H, y) -> np.ndarray:
    """Minimum-norm least squares, i.e. pinv(H) @ y."""
    try:
        return np.linalg.lstsq(np.asarray(H, float), np.asarray(y, float), rcond=None)[0]
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc


def oracle_ls(H, E, y) -> np.ndarray:
    H, E = np.asarray(H, float), np.asarray(E, float)
    if H.shape != E.shape:
        raise ValueError(f"E has shape {E.shape}, H has {H.shape}")
    return ls(H + E, y)


def ridge_form(H, y, alpha: float) -> np.ndarray:
    """(H^T H + alpha I)^{-1} H^T y, the shared shape of LS, TLS and the ML estimate."""
    H = np.asarray(H, float)
    return np.linalg.solve(H.T @ H + alpha * np.eye(H.shape[1]), H.T @ np.asarray(y, float))


def tls_sigma_min(H, y, rank_tol: float = 1e-10) -> float:
    """Smallest singular value of [H | y] after checking the TLS genericity condition."""
    H = np.asarray(H, float)
    y = np.asarray(y, float)
    M, N = H.shape
    try:
        s_h = np.linalg.svd(H, compute_uv=False)
        s_aug = np.linalg.svd(np.column_stack([H, y]), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    if M < N or s_h[-1] <= rank_tol * s_h[0]:
        raise RankDeficient("TLS needs H with full column rank")
    # [H | y] has N + 1 columns; missing singular values are zero when M = N
    s_aug = np.concatenate([s_aug, np.zeros(N + 1 - s_aug.size)])
    if not s_aug[N] < s_h[N - 1]:
        raise TlsNongeneric("sigma_min([H|y]) is not strictly below sigma_min(H)")
    if s_aug[N] > 0 and s_aug[N - 1] - s_aug[N] <= 1e-12 * s_aug[0]:
        raise TlsNongeneric("smallest singular value of [H|y] is repeated")
    return float(s_aug[N])


def tls(H, y) -> np.ndarray:
    s = tls_sigma_min(H, y)
    return ridge_form(H, y, -s * s)


def crb(H, x_true, sigma_e2: float, sigma_eps2: float, M: int | None = None,
        rank_tol: float = 1e-10) -> CrbResult:
    """Fisher information of y ~ N(H x, s I) with s = se2 ||x||^2 + sn2.

    FIM = H^T H / s + 2 M se2^2 x x^T / s^2; the second term is the
    information the covariance carries about ||x||.
    """
    H = np.asarray(H, float)
    x = np.asarray(x_true, float)
    M = H.shape[0] if M is None else M
    s = sigma_e2 * float(x @ x) + sigma_eps2
    fim = H.T @ H / s + 2.0 * M * sigma_e2 ** 2 * np.outer(x, x) / s ** 2
    fim = 0.5 * (fim + fim.T)
    eig = np.linalg.eigvalsh(fim)
    well_posed = bool(eig[-1] > 0 and eig[0] > rank_tol * eig[-1])
    return CrbResult(fim=fim, crb_trace=float(np.trace(np.linalg.pinv(fim, hermitian=True))),
                     well_posed=well_posed)
