"""Linear DAE ``C x' + G x = b(t)`` with single-tone sinusoidal excitation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigError

logger = logging.getLogger(__name__)

# JSON system format field names
JSON_FIELDS = ("N", "C", "G", "b_c", "b_s", "omega")


def _frozen(array, shape, name: str) -> np.ndarray:
    out = np.array(array, dtype=float)
    if out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


def derivative_amplitudes(a_c: np.ndarray, a_s: np.ndarray, omega: float, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes of the i-th derivative of a_c cos(wt) + a_s sin(wt).

    Each derivative rotates (a_c, a_s) -> (w a_s, -w a_c), so the result is a
    quarter-phase rotation by i steps scaled by w**i.
    """
    if i < 0:
        raise ValueError(f"derivative order must be non-negative, got {i}")
    scale = omega ** i
    quarter = i % 4
    if quarter == 0:
        c, s = a_c, a_s
    elif quarter == 1:
        c, s = a_s, -a_c
    elif quarter == 2:
        c, s = -a_c, -a_s
    else:
        c, s = -a_s, a_c
    return scale * c, scale * s


@dataclass(frozen=True, eq=False)
class SinusoidalSource:
    """b(t) = b_c cos(omega t) + b_s sin(omega t)."""
    b_c: np.ndarray
    b_s: np.ndarray
    omega: float

    def __post_init__(self):
        b_c = np.array(self.b_c, dtype=float).ravel()
        object.__setattr__(self, "b_c", _frozen(b_c, b_c.shape, "b_c"))
        object.__setattr__(self, "b_s", _frozen(self.b_s, b_c.shape, "b_s"))
        omega = float(self.omega)
        if not np.isfinite(omega) or omega < 0:
            raise ValueError(f"omega must be a finite non-negative number, got {self.omega!r}")
        object.__setattr__(self, "omega", omega)

    @property
    def dim(self) -> int:
        return self.b_c.shape[0]

    @property
    def period(self) -> float:
        if self.omega == 0:
            raise ValueError("a constant source has no period")
        return 2.0 * np.pi / self.omega

    @classmethod
    def zero(cls, dim: int, omega: float = 0.0) -> "SinusoidalSource":
        return cls(np.zeros(dim), np.zeros(dim), omega)


def source_value(source: SinusoidalSource, t: float) -> np.ndarray:
    wt = source.omega * t
    return source.b_c * np.cos(wt) + source.b_s * np.sin(wt)


def source_derivative(source: SinusoidalSource, i: int, t: float) -> np.ndarray:
    """Analytic i-th time derivative of the source at t."""
    c, s = derivative_amplitudes(source.b_c, source.b_s, source.omega, i)
    wt = source.omega * t
    return c * np.cos(wt) + s * np.sin(wt)


@dataclass(frozen=True, eq=False)
class LinearDae:
    """The problem C x' + G x = b(t).

    Attributes:
        C: N x N matrix, possibly singular.
        G: N x N matrix.
        source: Sinusoidal right-hand side.
        regular: Regularity of the pencil G + lambda C once it has been checked,
                 None while unknown.
        labels: Optional human-readable name per unknown.
    """
    C: np.ndarray
    G: np.ndarray
    source: SinusoidalSource
    regular: bool | None = None
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
            raise ValueError(f"C must be a non-empty square matrix, got shape {C.shape}")
        n = C.shape[0]
        object.__setattr__(self, "C", _frozen(C, (n, n), "C"))
        object.__setattr__(self, "G", _frozen(self.G, (n, n), "G"))
        if self.source.dim != n:
            raise ValueError(f"source has dimension {self.source.dim}, expected {n}")
        if self.labels and len(self.labels) != n:
            raise ValueError(f"expected {n} unknown labels, got {len(self.labels)}")

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    @property
    def omega(self) -> float:
        return self.source.omega

    def with_regularity(self, regular: bool) -> "LinearDae":
        return replace(self, regular=bool(regular))


def dae_to_json(dae: LinearDae) -> dict[str, Any]:
    return {
        "N": dae.dim,
        "C": dae.C.tolist(),
        "G": dae.G.tolist(),
        "b_c": dae.source.b_c.tolist(),
        "b_s": dae.source.b_s.tolist(),
        "omega": dae.source.omega,
    }


def dae_from_json(data: dict[str, Any]) -> LinearDae:
    """Builds a LinearDae from the JSON system format.

    Raises:
        ConfigError: On missing fields or inconsistent shapes.
    """
    if not isinstance(data, dict):
        raise ConfigError("system JSON must be an object")
    missing = [key for key in JSON_FIELDS if key not in data]
    if missing:
        raise ConfigError(f"system JSON is missing field(s): {', '.join(missing)}")
    try:
        n = int(data["N"])
        if n <= 0:
            raise ValueError(f"N must be positive, got {n}")
        source = SinusoidalSource(
            _frozen(data["b_c"], (n,), "b_c"),
            _frozen(data["b_s"], (n,), "b_s"),
            float(data["omega"]),
        )
        return LinearDae(
            C=_frozen(data["C"], (n, n), "C"),
            G=_frozen(data["G"], (n, n), "G"),
            source=source,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid system JSON: {e}") from e


def load_dae(path: str | Path) -> LinearDae:
    path = Path(path)
    with open(path, "r") as f:
        data = json.load(f)
    dae = dae_from_json(data)
    logger.info(f"Loaded system N={dae.dim}, omega={dae.omega:g} from {path}")
    return dae


def save_dae(dae: LinearDae, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(dae_to_json(dae), f, indent=2)
