"""Problem instances, spectral forms, solutions and their JSON file formats.

All containers are frozen dataclasses holding read-only numpy arrays, so an
instance or solution can be shared between threads without copying.

Floats are written with ``repr`` semantics (shortest string that parses back
to the same double), which makes every save/load round trip bit-exact.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (DimensionMismatch, InvalidVariance, IoFailure,
                     MalformedFile, NonFiniteEntry)


class CaseTag(str, enum.Enum):
    RankDeficientNuZero = "RankDeficientNuZero"
    RankDeficientNuPositive = "RankDeficientNuPositive"
    FullRankSZero = "FullRankSZero"
    FullRankNuNegative = "FullRankNuNegative"
    FullRankNuPositive = "FullRankNuPositive"
    DegenerateLsFallback = "DegenerateLsFallback"


NON_DEGENERATE_CASES = tuple(c for c in CaseTag if c is not CaseTag.DegenerateLsFallback)


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Multiplicity:
    """Uniqueness class of the ML optimum.

    ``indices`` are 0-based positions in the rotated coordinates x̃: the
    sign-free component for ``TwoFold``, or the half-open range
    ``(start, stop)`` of free components for ``Continuum``.
    """

    kind: str = "Unique"
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("Unique", "TwoFold", "Continuum"):
            raise ValueError(f"unknown multiplicity kind {self.kind!r}")

    @classmethod
    def unique(cls) -> "Multiplicity":
        return cls("Unique")

    @classmethod
    def two_fold(cls, *sign_indices: int) -> "Multiplicity":
        return cls("TwoFold", tuple(int(i) for i in sign_indices))

    @classmethod
    def continuum(cls, start: int, stop: int) -> "Multiplicity":
        return cls("Continuum", (int(start), int(stop)))

    def to_json(self) -> str | dict:
        if self.kind == "Unique":
            return "Unique"
        if self.kind == "TwoFold":
            return {"kind": "TwoFold", "sign_indices": list(self.indices)}
        return {"kind": "Continuum", "free_range": list(self.indices)}

    @classmethod
    def from_json(cls, obj) -> "Multiplicity":
        if obj == "Unique":
            return cls.unique()
        if isinstance(obj, dict) and obj.get("kind") == "TwoFold":
            return cls.two_fold(*obj["sign_indices"])
        if isinstance(obj, dict) and obj.get("kind") == "Continuum":
            start, stop = obj["free_range"]
            return cls.continuum(start, stop)
        raise MalformedFile(f"bad multiplicity field: {obj!r}")


@dataclass(frozen=True)
class ProblemInstance:
    """Observed data of ``y = (H + E) x + eps``.

    ``sigma_e2`` is the variance of every entry of E and ``sigma_eps2`` the
    variance of the additive noise.
    """

    H: np.ndarray
    y: np.ndarray
    sigma_e2: float
    sigma_eps2: float

    def __post_init__(self):
        H = _frozen(self.H, 2, "H")
        y = _frozen(self.y, 1, "y")
        if H.shape[0] < 1 or H.shape[1] < 1:
            raise DimensionMismatch(f"H must have M, N >= 1, got shape {H.shape}")
        if y.shape[0] != H.shape[0]:
            raise DimensionMismatch(f"y has length {y.shape[0]} but H has {H.shape[0]} rows")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(y))):
            raise NonFiniteEntry("H and y must be finite")
        se, sn = float(self.sigma_e2), float(self.sigma_eps2)
        if not (math.isfinite(se) and math.isfinite(sn)):
            raise NonFiniteEntry("noise variances must be finite")
        if se < 0:
            raise InvalidVariance(f"sigma_e2 must be >= 0, got {se}")
        if sn <= 0:
            raise InvalidVariance(f"sigma_eps2 must be > 0, got {sn}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_e2", se)
        object.__setattr__(self, "sigma_eps2", sn)

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1]

    def to_json(self) -> dict:
        return {"M": self.M, "N": self.N, "H": self.H.tolist(), "y": self.y.tolist(),
                "sigma_e2": self.sigma_e2, "sigma_eps2": self.sigma_eps2}


@dataclass(frozen=True)
class SpectralForm:
    """Cached SVD of H.

    ``U`` holds the first ``min(M, N)`` left singular vectors only; ``V`` is
    always the full N x N factor since rank-deficient recovery needs its
    null-space columns. ``y_tilde`` is ``U.T @ y`` (length ``min(M, N)``) and
    ``tail_energy`` the squared norm of the part of y outside the rank-R
    column space.
    """

    U: np.ndarray
    V: np.ndarray
    singular_values: np.ndarray
    rank: int
    y_tilde: np.ndarray
    tail_energy: float
    y_norm2: float

    @property
    def lambdas(self) -> np.ndarray:
        return self.singular_values[:self.rank]

    @property
    def y_head(self) -> np.ndarray:
        """ỹ restricted to the R retained directions."""
        return self.y_tilde[:self.rank]


@dataclass(frozen=True)
class DualCertificate:
    w: np.ndarray
    z: float
    nu: float
    eta: np.ndarray
    S_value: float | None
    kkt_residual_max: float

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(self.w, 1, "w"))
        object.__setattr__(self, "eta", _frozen(self.eta, 1, "eta"))

    def lifting(self, x_tilde) -> tuple[np.ndarray, float, np.ndarray]:
        """Intermediate lifting variables ``(u, t, o)`` for a given x̃."""
        t = math.sqrt(self.z)
        u = np.asarray(x_tilde, dtype=float) * t
        return u, t, np.abs(u)


@dataclass(frozen=True)
class MlSolution:
    x_hat: np.ndarray
    x_tilde_star: np.ndarray
    nu_star: float
    case_tag: CaseTag
    multiplicity: Multiplicity
    objective_value: float
    certificate: DualCertificate
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_hat", _frozen(self.x_hat, 1, "x_hat"))
        object.__setattr__(self, "x_tilde_star", _frozen(self.x_tilde_star, 1, "x_tilde_star"))
        object.__setattr__(self, "case_tag", CaseTag(self.case_tag))

    def to_json(self) -> dict:
        c = self.certificate
        return {
            "x_hat": self.x_hat.tolist(),
            "x_tilde_star": self.x_tilde_star.tolist(),
            "nu_star": self.nu_star,
            "case": self.case_tag.value,
            "multiplicity": self.multiplicity.to_json(),
            "objective": self.objective_value,
            "iterations": self.iterations,
            "certificate": {
                "w": c.w.tolist(),
                "z": c.z,
                "eta": c.eta.tolist(),
                "S": _encode_extended(c.S_value),
                "kkt_residual_max": c.kkt_residual_max,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MlSolution":
        try:
            c = obj["certificate"]
            cert = DualCertificate(w=c["w"], z=float(c["z"]), nu=float(obj["nu_star"]),
                                   eta=c["eta"], S_value=_decode_extended(c["S"]),
                                   kkt_residual_max=float(c["kkt_residual_max"]))
            return cls(x_hat=obj["x_hat"], x_tilde_star=obj["x_tilde_star"],
                       nu_star=float(obj["nu_star"]), case_tag=CaseTag(obj["case"]),
                       multiplicity=Multiplicity.from_json(obj["multiplicity"]),
                       objective_value=float(obj["objective"]), certificate=cert,
                       iterations=int(obj.get("iterations", 0)))
        except MalformedFile:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"solution file does not match the schema: {exc}") from exc


@dataclass(frozen=True)
class SampledTruth:
    x_true: np.ndarray
    E: np.ndarray
    epsilon: np.ndarray
    seed_path: tuple[int, ...] = field(default=())


def _encode_extended(v: float | None):
    if v is None:
        return None
    if v == -math.inf:
        return "-inf"
    return float(v)


def _decode_extended(v):
    if v is None:
        return None
    if v == "-inf":
        return -math.inf
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise MalformedFile(f"bad S value {v!r}")


def _reject_constant(name):
    raise NonFiniteEntry(f"non-finite literal {name} in file")


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path} is not valid JSON: {exc}") from exc


def _write_json(obj, path) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def instance_from_json(obj) -> ProblemInstance:
    if not isinstance(obj, dict):
        raise MalformedFile("instance file must hold a JSON object")
    missing = {"M", "N", "H", "y", "sigma_e2", "sigma_eps2"} - obj.keys()
    if missing:
        raise MalformedFile(f"instance file is missing {sorted(missing)}")
    M, N, H, y = obj["M"], obj["N"], obj["H"], obj["y"]
    if not (isinstance(M, int) and isinstance(N, int)) or isinstance(M, bool) or isinstance(N, bool):
        raise MalformedFile("M and N must be integers")
    if M < 1 or N < 1:
        raise MalformedFile("M and N must be positive")
    if not isinstance(H, list) or not all(isinstance(r, list) for r in H):
        raise MalformedFile("H must be a nested array (row-major)")
    if not isinstance(y, list):
        raise MalformedFile("y must be an array")
    if not all(_is_number(v) for row in H for v in row) or not all(_is_number(v) for v in y):
        raise MalformedFile("H and y entries must be numbers")
    if not (_is_number(obj["sigma_e2"]) and _is_number(obj["sigma_eps2"])):
        raise MalformedFile("variances must be numbers")
    if len(H) != M or any(len(r) != N for r in H):
        raise DimensionMismatch(f"H is not {M}x{N}")
    if len(y) != M:
        raise DimensionMismatch(f"y has length {len(y)}, expected M={M}")
    return ProblemInstance(H=H, y=y, sigma_e2=obj["sigma_e2"], sigma_eps2=obj["sigma_eps2"])


def load_instance(path) -> ProblemInstance:
    return instance_from_json(_read_json(path))


def save_instance(instance: ProblemInstance, path) -> None:
    _write_json(instance.to_json(), path)


def save_solution(solution: MlSolution, path) -> None:
    _write_json(solution.to_json(), path)


def load_solution(path) -> MlSolution:
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise MalformedFile("solution file must hold a JSON object")
    return MlSolution.from_json(obj)
