"""Sinusoidal steady state (AC analysis) used as the exact reference solution.

The phasor pair (X_c, X_s) of x_ss(t) = X_c cos(wt) + X_s sin(wt) solves

    [  G   wC ] [X_c]   [b_c]
    [ -wC   G ] [X_s] = [b_s]

which is the real form of (G + jwC) X = b.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import ResonanceError
from ..model.dae import LinearDae, derivative_amplitudes

logger = logging.getLogger(__name__)

# Condition numbers above this count as a singular block system.
RESONANCE_COND = 1e13
RESIDUAL_WARN = 1e-12


@dataclass(frozen=True, eq=False)
class PhasorSolution:
    X_c: np.ndarray
    X_s: np.ndarray
    omega: float
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.X_c.shape[0]


def ac_block_matrix(dae: LinearDae) -> np.ndarray:
    w = dae.omega
    return np.block([[dae.G, w * dae.C], [-w * dae.C, dae.G]])


def ac_solve(dae: LinearDae) -> PhasorSolution:
    """Solves the AC system of ``dae`` at its source frequency.

    Raises:
        ResonanceError: If j*omega is (numerically) a generalized eigenvalue,
            so no unique steady state exists.
    """
    n = dae.dim
    K = ac_block_matrix(dae)
    rhs = np.concatenate([dae.source.b_c, dae.source.b_s])
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > RESONANCE_COND:
        raise ResonanceError(
            f"AC system is singular at omega={dae.omega:g} (cond={cond:.3e}): "
            "the source frequency hits a pencil eigenvalue"
        )
    try:
        X = scipy.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as e:
        raise ResonanceError(f"AC system could not be solved at omega={dae.omega:g}: {e}") from e

    residual = float(np.linalg.norm(K @ X - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if residual > RESIDUAL_WARN:
        logger.warning(f"AC residual {residual:.3e} exceeds {RESIDUAL_WARN:g}")
    logger.debug(f"AC solve: N={n}, omega={dae.omega:g}, cond={cond:.3e}, residual={residual:.3e}")
    return PhasorSolution(X_c=X[:n], X_s=X[n:], omega=dae.omega, residual=residual)


def steady_state_value(phasor: PhasorSolution, t: float) -> np.ndarray:
    wt = phasor.omega * t
    return phasor.X_c * np.cos(wt) + phasor.X_s * np.sin(wt)


def steady_state_derivative(phasor: PhasorSolution, i: int, t: float) -> np.ndarray:
    """Analytic i-th time derivative of x_ss at t."""
    c, s = derivative_amplitudes(phasor.X_c, phasor.X_s, phasor.omega, i)
    wt = phasor.omega * t
    return c * np.cos(wt) + s * np.sin(wt)


def phasor_to_json(phasor: PhasorSolution) -> dict:
    return {
        "omega": phasor.omega,
        "X_c": phasor.X_c.tolist(),
        "X_s": phasor.X_s.tolist(),
        "residual": phasor.residual,
    }
