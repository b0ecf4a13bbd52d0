"""Matrix pencil analysis: regularity, Weierstrass transform and index.

For a regular pencil (C, G) the decomposition finds nonsingular P, Q with

    P C Q = blockdiag(I_r, N),    P G Q = blockdiag(J, I_s)

where N is nilpotent. The nilpotency index of N is the differentiation index
of C x' + G x = b(t); a nonsingular C gives s = 0 and index 0, and a zero N
block gives index 1.

The split is computed by shift-and-invert: with M = G + lambda0 C
nonsingular, A = M^-1 C has an invertible core on range(A^p) and is
nilpotent on null(A^p), p being the smallest power at which the rank of A^p
stops dropping. Each block is then normalized to the canonical shape.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import IllConditionedSplitError, SingularPencilError
from ..model.dae import LinearDae, SinusoidalSource, derivative_amplitudes

logger = logging.getLogger(__name__)

# --- Configuration ---
DEFAULT_RANK_TOL = 1e-9
RANK_TOL_ENV = "OBX_RANK_TOL"

# |det(G + lambda C)| must exceed this fraction of the Hadamard bound.
DET_TOL = 1e-10
# lambda0 candidates 1, -1, 2, -2, ... up to this magnitude
MAX_SHIFT = 64


def rank_tolerance() -> float:
    """Rank tolerance, overridable through the OBX_RANK_TOL environment variable."""
    raw = os.getenv(RANK_TOL_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_RANK_TOL
    try:
        tol = float(raw)
        if not 0.0 < tol < 1.0:
            raise ValueError("must lie in (0, 1)")
        return tol
    except ValueError as e:
        logger.warning(f"Invalid {RANK_TOL_ENV}={raw!r}: {e}. Falling back to {DEFAULT_RANK_TOL}.")
        return DEFAULT_RANK_TOL


def numerical_rank(A: np.ndarray, threshold: float) -> int:
    """Number of singular values of A strictly above ``threshold``."""
    if A.size == 0:
        return 0
    return int(np.sum(scipy.linalg.svdvals(A) > threshold))


def _log_hadamard(M: np.ndarray) -> float:
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0):
        return -np.inf
    return float(np.sum(np.log(norms)))


def _det_is_significant(M: np.ndarray) -> bool:
    sign, logdet = np.linalg.slogdet(M)
    if sign == 0:
        return False
    bound = _log_hadamard(M)
    return bool(np.isfinite(bound) and logdet > np.log(DET_TOL) + bound)


def _check_square_pair(C: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    C = np.asarray(C, dtype=float)
    G = np.asarray(G, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape != G.shape:
        raise ValueError(f"C and G must be square matrices of equal size, got {C.shape} and {G.shape}")
    return C, G


def probe_points(n: int) -> np.ndarray:
    """n+1 distinct real probes for the determinant polynomial."""
    j = np.arange(n + 1)
    return np.where(j % 2 == 0, 1.0, -1.0) * (0.5 + j / (n + 1.0))


def is_regular(C: np.ndarray, G: np.ndarray) -> bool:
    """True iff det(G + lambda C) is not identically zero.

    The determinant is a polynomial of degree <= N in lambda, so it is
    identically zero iff it vanishes at N+1 distinct points.
    """
    C, G = _check_square_pair(C, G)
    n = C.shape[0]
    for lam in probe_points(n):
        if _det_is_significant(G + lam * C):
            return True
    return False


def check_regularity(dae: LinearDae) -> LinearDae:
    """Returns ``dae`` with its regularity flag set; raises if the pencil is singular."""
    if dae.regular is None:
        dae = dae.with_regularity(is_regular(dae.C, dae.G))
    if not dae.regular:
        raise SingularPencilError("pencil is singular: det(G + lambda C) vanishes identically")
    return dae


def choose_shift(C: np.ndarray, G: np.ndarray) -> float:
    """First lambda0 in 1, -1, 2, -2, ... with G + lambda0 C safely nonsingular."""
    for magnitude in range(1, MAX_SHIFT + 1):
        for lam in (float(magnitude), -float(magnitude)):
            if _det_is_significant(G + lam * C):
                logger.debug(f"Selected shift lambda0={lam:g}")
                return lam
    raise SingularPencilError("pencil is singular: no admissible shift found for G + lambda C")


@dataclass(frozen=True, eq=False)
class WeierstrassDecomposition:
    """P C Q = blockdiag(I_r, Nnil) and P G Q = blockdiag(J, I_s)."""
    P: np.ndarray
    Q: np.ndarray
    J: np.ndarray
    Nnil: np.ndarray
    r: int
    s: int
    index_k: int
    lambda0: float
    residual: float

    @property
    def Q_D(self) -> np.ndarray:
        return self.Q[:, :self.r]

    @property
    def Q_A(self) -> np.ndarray:
        return self.Q[:, self.r:]


@dataclass(frozen=True, eq=False)
class DecoupledState:
    """x = Q_D z_D + Q_A z_A."""
    z_D: np.ndarray
    z_A: np.ndarray

    def recompose(self, decomp: WeierstrassDecomposition) -> np.ndarray:
        return decomp.Q_D @ self.z_D + decomp.Q_A @ self.z_A


def _index_by_rank_stabilization(A: np.ndarray, tol: float) -> tuple[int, list[int]]:
    """Smallest p with rank(A^p) == rank(A^{p+1}), for A scaled to unit 2-norm."""
    n = A.shape[0]
    ranks = [n]
    power = np.eye(n)
    for p in range(1, n + 2):
        power = power @ A
        ranks.append(numerical_rank(power, tol))
        if ranks[p] == ranks[p - 1]:
            return p - 1, ranks
    # Ranks are non-increasing integers bounded by n, so they must stabilize.
    raise IllConditionedSplitError(f"rank sequence did not stabilize: {ranks}")


def reconstruction_residual(C: np.ndarray, G: np.ndarray, decomp: WeierstrassDecomposition) -> float:
    """||P C Q - blockdiag(I, N)|| + ||P G Q - blockdiag(J, I)|| (Frobenius)."""
    target_C = scipy.linalg.block_diag(np.eye(decomp.r), decomp.Nnil)
    target_G = scipy.linalg.block_diag(decomp.J, np.eye(decomp.s))
    return float(
        np.linalg.norm(decomp.P @ C @ decomp.Q - target_C)
        + np.linalg.norm(decomp.P @ G @ decomp.Q - target_G)
    )


def weierstrass(C: np.ndarray, G: np.ndarray, rank_tol: float | None = None) -> WeierstrassDecomposition:
    """Computes the Weierstrass transform of the pencil (C, G).

    Raises:
        SingularPencilError: If the pencil is not regular.
        IllConditionedSplitError: If the core and nilpotent subspaces cannot be
            separated above the rank tolerance.
    """
    C, G = _check_square_pair(C, G)
    if not is_regular(C, G):
        raise SingularPencilError("pencil is singular: det(G + lambda C) vanishes identically")
    tol = rank_tolerance() if rank_tol is None else rank_tol
    n = C.shape[0]

    lambda0 = choose_shift(C, G)
    M = G + lambda0 * C
    A = scipy.linalg.solve(M, C)
    a_norm = np.linalg.norm(A, 2)

    if a_norm == 0.0:
        # C = 0: purely algebraic with N = 0.
        index_k, ranks = 1, [n, 0]
    else:
        index_k, ranks = _index_by_rank_stabilization(A / a_norm, tol)
    r = ranks[index_k]
    s = n - r
    if s > 0 and index_k == 0:
        raise IllConditionedSplitError("nilpotent part detected without any rank drop")

    if s == 0:
        T = np.eye(n)
    elif r == 0:
        T = np.eye(n)
    else:
        power = np.linalg.matrix_power(A / a_norm, index_k)
        U, _, Vt = scipy.linalg.svd(power)
        T = np.hstack([U[:, :r], Vt[r:].T])
    t_sv = scipy.linalg.svdvals(T)
    if t_sv[-1] <= tol * t_sv[0]:
        raise IllConditionedSplitError(
            f"core and nilpotent subspaces are nearly dependent (sigma_min={t_sv[-1]:.3e})"
        )

    blocks = scipy.linalg.solve(T, A @ T)
    A1 = blocks[:r, :r]
    A2 = blocks[r:, r:]
    try:
        left = scipy.linalg.block_diag(
            scipy.linalg.inv(A1) if r else np.zeros((0, 0)),
            scipy.linalg.inv(np.eye(s) - lambda0 * A2) if s else np.zeros((0, 0)),
        )
    except (np.linalg.LinAlgError, ValueError) as e:
        raise IllConditionedSplitError(f"cannot normalize the canonical blocks: {e}") from e
    P = left @ scipy.linalg.solve(T, scipy.linalg.inv(M))
    Q = T

    PCQ = P @ C @ Q
    PGQ = P @ G @ Q
    J = PGQ[:r, :r].copy()
    Nnil = PCQ[r:, r:].copy()
    decomp = WeierstrassDecomposition(
        P=P, Q=Q, J=J, Nnil=Nnil, r=r, s=s, index_k=index_k, lambda0=lambda0, residual=0.0,
    )
    residual = reconstruction_residual(C, G, decomp)
    scale = np.linalg.norm(C) + np.linalg.norm(G)
    if residual > 1e-10 * max(scale, 1e-300):
        logger.warning(f"Weierstrass reconstruction residual {residual:.3e} exceeds 1e-10*(|C|+|G|)={1e-10 * scale:.3e}")
    logger.debug(f"Weierstrass split: r={r}, s={s}, k={index_k}, lambda0={lambda0:g}, rank sequence={ranks}")
    return WeierstrassDecomposition(
        P=P, Q=Q, J=J, Nnil=Nnil, r=r, s=s, index_k=index_k, lambda0=lambda0, residual=residual,
    )


def differentiation_index(C: np.ndarray, G: np.ndarray) -> int:
    return weierstrass(C, G).index_k


def nilpotency_ranks(decomp: WeierstrassDecomposition, rank_tol: float | None = None) -> tuple[int, int]:
    """(rank N^k, rank N^{k-1}) under the rank tolerance, the nilpotency certificate.

    For k = 0 both entries are 0 (no algebraic block).
    """
    tol = rank_tolerance() if rank_tol is None else rank_tol
    k = decomp.index_k
    if decomp.s == 0 or k == 0:
        return 0, 0
    scale = max(1.0, float(np.linalg.norm(decomp.Nnil, 2)))

    def rank_of_power(j: int) -> int:
        if j == 0:
            return decomp.s
        return numerical_rank(np.linalg.matrix_power(decomp.Nnil, j), tol * scale ** j)

    return rank_of_power(k), rank_of_power(k - 1)


def generalized_eigenvalues(decomp: WeierstrassDecomposition) -> np.ndarray:
    """Finite eigenvalues of the pencil, i.e. the roots of det(G + lambda C)."""
    if decomp.r == 0:
        return np.zeros(0, dtype=complex)
    return np.sort_complex(np.linalg.eigvals(-decomp.J).astype(complex))


def decouple_source(decomp: WeierstrassDecomposition, source: SinusoidalSource) -> tuple[SinusoidalSource, SinusoidalSource]:
    """Splits P b(t) into the differential (u_D) and algebraic (u_A) sources."""
    pc = decomp.P @ source.b_c
    ps = decomp.P @ source.b_s
    r = decomp.r
    return (
        SinusoidalSource(pc[:r], ps[:r], source.omega),
        SinusoidalSource(pc[r:], ps[r:], source.omega),
    )


def exact_algebraic_solution(decomp: WeierstrassDecomposition, u_A: SinusoidalSource, t: float) -> np.ndarray:
    """z_A(t) = sum_{i<k} (-1)^i N^i u_A^(i)(t), the unique solution of N z_A' + z_A = u_A."""
    z = np.zeros(decomp.s)
    if decomp.s == 0:
        return z
    wt = u_A.omega * t
    power = np.eye(decomp.s)
    for i in range(decomp.index_k):
        c, s = derivative_amplitudes(u_A.b_c, u_A.b_s, u_A.omega, i)
        z += (-1) ** i * (power @ (c * np.cos(wt) + s * np.sin(wt)))
        power = power @ decomp.Nnil
    return z


def decouple_state(decomp: WeierstrassDecomposition, x: np.ndarray) -> DecoupledState:
    z = scipy.linalg.solve(decomp.Q, np.asarray(x, dtype=float))
    return DecoupledState(z_D=z[:decomp.r], z_A=z[decomp.r:])


def decomposition_to_json(decomp: WeierstrassDecomposition) -> dict:
    return {
        "r": decomp.r,
        "s": decomp.s,
        "k": decomp.index_k,
        "P": decomp.P.tolist(),
        "Q": decomp.Q.tolist(),
        "J": decomp.J.tolist(),
        "N": decomp.Nnil.tolist(),
    }
