"""Builtin benchmark systems of known differentiation index.

Each system is assembled in canonical coordinates,

    z_D' + J z_D = u_D        (differential block, J stable)
    N z_A' + z_A = u_A        (algebraic block, N a nilpotent shift)

and then hidden behind a seeded, well-conditioned pair of conjugating
matrices: C = L blockdiag(I, N) R, G = L blockdiag(J, I) R, b = L u.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dae import LinearDae, SinusoidalSource

logger = logging.getLogger(__name__)

# Fixed per release so that a given --seed always yields the same matrices.
RELEASE_SEED = 20240117

# Benchmarks are excited at 1 Hz, like a cos(2 pi t) + sin(2 pi t) source.
BENCHMARK_OMEGA = 2.0 * np.pi

# Singular values of the conjugating matrices are drawn from this range,
# which bounds their condition number by 4.
CONJUGATOR_SV_RANGE = (1.0, 4.0)

_J2 = np.array([[1.0, 0.5],
                [-0.5, 1.0]])
_J3 = np.array([[1.0, 0.5, 0.0],
                [-0.5, 1.0, 0.0],
                [0.0, 0.0, 2.0]])

# kind -> (J block, algebraic size s, nilpotency index of the shift block)
_LAYOUTS = {
    "ode": (_J3, 0, 0),
    "index1": (_J2, 2, 1),
    "index2": (_J2, 2, 2),
    "index3": (_J2, 3, 3),
    "algebraic": (np.zeros((0, 0)), 3, 3),
}

KINDS = tuple(_LAYOUTS)


@dataclass(frozen=True, eq=False)
class BenchmarkSystem:
    """A synthesized DAE together with the facts used to build it."""
    dae: LinearDae
    declared_index: int
    construction_seed: int
    kind: str
    left: np.ndarray
    right: np.ndarray
    J: np.ndarray
    Nnil: np.ndarray


def shift_matrix(size: int, nilpotency: int) -> np.ndarray:
    """size x size nilpotent matrix with the given nilpotency index.

    Ones on the superdiagonal of a leading nilpotency x nilpotency block;
    nilpotency 1 gives the zero matrix.
    """
    if size == 0:
        return np.zeros((0, 0))
    if not 1 <= nilpotency <= size:
        raise ValueError(f"nilpotency {nilpotency} impossible for a {size}x{size} block")
    N = np.zeros((size, size))
    for i in range(nilpotency - 1):
        N[i, i + 1] = 1.0
    return N


def _conjugator(n: int, rng: np.random.Generator) -> np.ndarray:
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    sv = rng.uniform(*CONJUGATOR_SV_RANGE, size=n)
    return U @ np.diag(sv) @ V.T


def builtin_system(kind: str, seed: int = 42) -> BenchmarkSystem:
    """Synthesizes the benchmark ``kind`` with conjugation seed ``seed``.

    Args:
        kind: One of "ode", "index1", "index2", "index3" or "algebraic"
              (purely algebraic, r = 0, k = 3).
        seed: Integer seed for the conjugating pair and the source amplitudes.
    """
    if kind not in _LAYOUTS:
        raise ValueError(f"unknown builtin system '{kind}'. Available: {', '.join(KINDS)}")
    J, s, nilpotency = _LAYOUTS[kind]
    r = J.shape[0]
    n = r + s
    rng = np.random.default_rng([RELEASE_SEED, int(seed)])

    Nnil = shift_matrix(s, nilpotency)
    C_can = scipy.linalg.block_diag(np.eye(r), Nnil)
    G_can = scipy.linalg.block_diag(J, np.eye(s))

    left = _conjugator(n, rng)
    right = _conjugator(n, rng)
    u_c = rng.uniform(-1.0, 1.0, size=n)
    u_s = rng.uniform(-1.0, 1.0, size=n)

    dae = LinearDae(
        C=left @ C_can @ right,
        G=left @ G_can @ right,
        source=SinusoidalSource(left @ u_c, left @ u_s, BENCHMARK_OMEGA),
        labels=tuple(f"x{i}" for i in range(n)),
    )
    logger.debug(f"Built benchmark '{kind}' (seed={seed}): N={n}, r={r}, s={s}, k={nilpotency}")
    return BenchmarkSystem(
        dae=dae,
        declared_index=nilpotency,
        construction_seed=int(seed),
        kind=kind,
        left=left,
        right=right,
        J=J.copy(),
        Nnil=Nnil,
    )
