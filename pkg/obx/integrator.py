"""Per-step augmented system of the Obreshkov method for C x' + G x = b(t).

The unknown of step n stacks the h-scaled derivatives

    xi_n = [x_n, h x_n', h^2 x_n'', ..., h^m x_n^(m)]

and solves (C~ + G~) xi_n = b~_n, where block row i < m is the i-th time
derivative of the DAE,

    (1/h) C xi_{i+1} + G xi_i = h^i b^(i)(t_n),

and the last block row is the Obreshkov formula itself,

    sum_i (-1)^i a(i,l,m) xi_i = sum_{i<=l} a(i,m,l) h^i x_{n-1}^(i).
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .analysis.pencil import check_regularity
from .analysis.steady_state import PhasorSolution, steady_state_derivative, steady_state_value
from .coefficients import ObreshkovScheme
from .errors import InsufficientHistoryError, SingularStepError
from .model.dae import LinearDae, source_derivative

logger = logging.getLogger(__name__)

# Relative solution residual above which a step is reported.
STEP_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StepState:
    """Scaled derivative blocks of the numerical solution at time t.

    Attributes:
        t: Time of the state.
        scaled_derivatives: Array of shape (q, N), row i holding h^i x^(i)(t).
        h_used: Step size the rows are scaled with.
    """
    t: float
    scaled_derivatives: np.ndarray
    h_used: float

    def __post_init__(self):
        blocks = np.array(self.scaled_derivatives, dtype=float)
        if blocks.ndim != 2 or blocks.shape[0] == 0:
            raise ValueError(f"scaled_derivatives must be a non-empty (q, N) array, got shape {blocks.shape}")
        if not self.h_used > 0:
            raise ValueError(f"h_used must be positive, got {self.h_used!r}")
        blocks.setflags(write=False)
        object.__setattr__(self, "scaled_derivatives", blocks)

    @property
    def x(self) -> np.ndarray:
        return self.scaled_derivatives[0]

    @property
    def block_count(self) -> int:
        return self.scaled_derivatives.shape[0]

    def derivative(self, i: int) -> np.ndarray:
        """Unscaled x^(i)(t)."""
        return self.scaled_derivatives[i] / self.h_used ** i

    def rescale(self, h: float) -> "StepState":
        """Same state with every row rescaled to step size h."""
        if h == self.h_used:
            return self
        ratio = h / self.h_used
        factors = ratio ** np.arange(self.block_count)
        return StepState(self.t, self.scaled_derivatives * factors[:, None], h)


def assemble(dae: LinearDae, scheme: ObreshkovScheme, h: float) -> np.ndarray:
    """(m+1)N x (m+1)N matrix C~ + G~ of the step with size h.

    Raises:
        ValueError: If h is not positive.
        SingularPencilError: If the pencil of ``dae`` is singular.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    check_regularity(dae)
    n = dae.dim
    m = scheme.m
    size = (m + 1) * n
    A = np.zeros((size, size))
    for i in range(m):
        rows = slice(i * n, (i + 1) * n)
        A[rows, i * n:(i + 1) * n] = dae.G
        A[rows, (i + 1) * n:(i + 2) * n] = dae.C / h
    identity = np.eye(n)
    for i, w in enumerate(scheme.signed_current_weights):
        A[m * n:, i * n:(i + 1) * n] = w * identity
    return A


def build_rhs(dae: LinearDae, scheme: ObreshkovScheme, prev: StepState, t_n: float, h: float | None = None) -> np.ndarray:
    """Right-hand side b~_n of the step ending at t_n.

    Args:
        prev: State at t_n - h; rescaled first if it was scaled with another h.
        h: Step size, defaults to ``prev.h_used``.

    Raises:
        InsufficientHistoryError: If prev has fewer than l+1 derivative blocks.
    """
    h = prev.h_used if h is None else h
    if prev.block_count < scheme.l + 1:
        raise InsufficientHistoryError(
            f"scheme (l={scheme.l}, m={scheme.m}) needs {scheme.l + 1} past derivative blocks, "
            f"state at t={prev.t:g} has {prev.block_count}"
        )
    prev = prev.rescale(h)
    blocks = [h ** i * source_derivative(dae.source, i, t_n) for i in range(scheme.m)]
    past = np.zeros(dae.dim)
    for i, w in enumerate(scheme.past_weights):
        past += w * prev.scaled_derivatives[i]
    blocks.append(past)
    return np.concatenate(blocks)


class AugmentedSystem:
    """LU factorization of C~ + G~ for one (h, l, m)."""

    def __init__(self, dae: LinearDae, scheme: ObreshkovScheme, h: float):
        self.h = h
        self.scheme = scheme
        self.matrix = assemble(dae, scheme, h)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu, self._piv = scipy.linalg.lu_factor(self.matrix, check_finite=False)
        # Derivative rows scale with 1/h and the formula row does not, so a
        # small pivot alone says nothing; only an exact zero is singular and
        # ill-conditioned steps show up in the residual check of solve().
        pivots = np.abs(np.diag(self._lu))
        if not np.all(np.isfinite(self._lu)) or pivots.min() == 0.0:
            raise SingularStepError(h, scheme.l, scheme.m, f"smallest pivot {pivots.min():.3e}")

    @property
    def key(self) -> tuple[float, int, int]:
        return (self.h, self.scheme.l, self.scheme.m)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        xi = scipy.linalg.lu_solve((self._lu, self._piv), rhs, check_finite=False)
        residual = np.linalg.norm(self.matrix @ xi - rhs)
        bound = STEP_RESIDUAL_TOL * max(np.linalg.norm(rhs), 1e-300)
        if residual > bound:
            logger.warning(
                f"Step residual {residual:.3e} exceeds {STEP_RESIDUAL_TOL:g}*|b| "
                f"(h={self.h:g}, l={self.scheme.l}, m={self.scheme.m})"
            )
        return xi


class StepFactorization:
    """Holds the factorization of the current (h, l, m), rebuilt on any change."""

    def __init__(self, dae: LinearDae):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.dae = check_regularity(dae)
        self._system: AugmentedSystem | None = None
        self.factorizations = 0

    def get(self, scheme: ObreshkovScheme, h: float) -> AugmentedSystem:
        key = (h, scheme.l, scheme.m)
        if self._system is not None and self._system.key == key:
            return self._system
        self.logger.debug(f"Factorizing augmented system for h={h:g}, l={scheme.l}, m={scheme.m}")
        self._system = AugmentedSystem(self.dae, scheme, h)
        self.factorizations += 1
        return self._system


def step(
    dae: LinearDae,
    scheme: ObreshkovScheme,
    prev: StepState,
    h: float,
    factorization: StepFactorization | None = None,
) -> StepState:
    """Advances ``prev`` by one step of size h.

    Raises:
        SingularStepError: If the augmented matrix is singular.
        InsufficientHistoryError: If prev lacks past derivative blocks.
    """
    if factorization is None:
        factorization = StepFactorization(dae)
    system = factorization.get(scheme, h)
    t_n = prev.t + h
    rhs = build_rhs(factorization.dae, scheme, prev, t_n, h)
    xi = system.solve(rhs)
    return StepState(t_n, xi.reshape(scheme.m + 1, dae.dim), h)


def march(dae: LinearDae, scheme: ObreshkovScheme, initial: StepState, h: float, steps: int) -> list[StepState]:
    """Takes ``steps`` fixed steps from ``initial``; returns the new states in order.

    Raises:
        InsufficientHistoryError: If l > m and more than one step is asked
            for, since each step leaves only m+1 derivative blocks behind.
    """
    if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)) or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if scheme.l > scheme.m and steps > 1:
        raise InsufficientHistoryError(
            f"scheme (l={scheme.l}, m={scheme.m}) reads {scheme.l + 1} past derivative blocks but each step "
            f"produces {scheme.m + 1}; marching more than one step needs l <= m"
        )
    factorization = StepFactorization(dae)
    states = []
    state = initial
    for _ in range(steps):
        state = step(dae, scheme, state, h, factorization)
        states.append(state)
    logger.info(f"Marched {steps} steps of h={h:g} with scheme (l={scheme.l}, m={scheme.m}) to t={state.t:g}")
    return states


def initial_state_from_steady_state(
    dae: LinearDae,
    phasor: PhasorSolution,
    scheme: ObreshkovScheme,
    h: float,
    t0: float = 0.0,
) -> StepState:
    """Exact start: row i is h^i times the i-th derivative of x_ss at t0.

    Fills max(l, m) + 1 rows so that the first step has all the past
    derivatives the scheme reads.
    """
    if phasor.dim != dae.dim:
        raise ValueError(f"phasor has dimension {phasor.dim}, expected {dae.dim}")
    count = max(scheme.l, scheme.m) + 1
    blocks = np.array([h ** i * steady_state_derivative(phasor, i, t0) for i in range(count)])
    return StepState(t0, blocks, h)


def trajectory_to_csv(states: Sequence[StepState], derivatives: bool = False) -> str:
    """CSV with columns t, x_0..x_{N-1}, plus h^i x^(i) columns when asked."""
    if not states:
        raise ValueError("no states to export")
    n = states[0].scaled_derivatives.shape[1]
    q = min(s.block_count for s in states) if derivatives else 1
    headers = ["t"] + [f"x_{j}" for j in range(n)]
    for i in range(1, q):
        headers += [f"h{i}_x{i}_{j}" for j in range(n)]

    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(headers)
    for state in states:
        row = [repr(float(state.t))]
        for i in range(q):
            row += [repr(float(v)) for v in state.scaled_derivatives[i]]
        writer.writerow(row)
    return output.getvalue()


def trajectory_errors(states: Iterable[StepState], phasor: PhasorSolution) -> np.ndarray:
    """Euclidean distance of each state's x to the steady state at its time."""
    return np.array([np.linalg.norm(s.x - steady_state_value(phasor, s.t)) for s in states])
