"""Single-step convergence experiment.

Starting from the exact steady state at t = 0, one step of size h is taken
and the h-scaled derivative blocks are compared with h^i x_ss^(i)(h). The
log-log slope of error against h is the measured local order, checked
against the order predicted from (l, m) and the differentiation index k.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..analysis.pencil import check_regularity, differentiation_index
from ..analysis.steady_state import PhasorSolution, ac_solve, steady_state_derivative, steady_state_value
from ..coefficients import ObreshkovScheme
from ..errors import ConfigError, TooFewSamplesError
from ..integrator import StepFactorization, initial_state_from_steady_state, step
from ..model.dae import LinearDae

logger = logging.getLogger(__name__)

DEFAULT_POINTS = 10
# h window as fractions of the source period
H_WINDOW = (1e-3, 1e-2)
SLOPE_TOLERANCE = 0.2
MIN_FIT_SAMPLES = 4
# The default grid grows towards larger h until i = 0 has this many samples
# above the floor, never past H_WIDEN_LIMIT times the period.
WIDEN_TARGET = MIN_FIT_SAMPLES + 3
H_WIDEN_LIMIT = 5e-2
# Errors under FLOOR_FACTOR * eps * |x_ss(h)| are roundoff, not truncation.
FLOOR_FACTOR = 1e3

CSV_HEADERS = ["h", "i", "error", "log10_h", "log10_error"]


def predicted_order(l: int, m: int, k: int, i: int) -> int:
    """Expected log-log slope of the one-step error in h^i x^(i).

    l+m+2-k when the derivative budget is short of the index (m - i < k),
    otherwise l+m+1+i. k = 0 is the ODE case.
    """
    if not 0 <= i <= m:
        raise ValueError(f"derivative order i={i} outside [0, {m}]")
    if k < 0:
        raise ValueError(f"index must be non-negative, got {k}")
    if k > 0 and m - i < k:
        return l + m + 2 - k
    return l + m + 1 + i


@dataclass(frozen=True)
class OrderSample:
    h: float
    i: int
    error: float
    floor: float

    @property
    def below_floor(self) -> bool:
        return self.error < self.floor


@dataclass(frozen=True)
class OrderResult:
    i: int
    predicted: int
    slope: float | None
    used: int
    below_floor: int
    passed: bool | None


@dataclass(frozen=True)
class OrderStudyReport:
    """Outcome of a study for one scheme on one system.

    ``passed`` of an OrderResult is None when too few samples stay above the
    roundoff floor to fit a slope.
    """
    l: int
    m: int
    index_k: int
    h_values: tuple[float, ...]
    samples: tuple[OrderSample, ...]
    results: tuple[OrderResult, ...] = field(default=())

    @property
    def scheme(self) -> tuple[int, int]:
        return (self.l, self.m)

    @property
    def all_passed(self) -> bool:
        """The i = 0 slope was fitted and passed, and no other order failed.

        Higher orders whose error sits at roundoff level do not fail the study.
        """
        if not self.results or self.results[0].passed is not True:
            return False
        return all(r.passed is not False for r in self.results)

    def result(self, i: int) -> OrderResult:
        return self.results[i]

    def slope(self, i: int) -> float | None:
        return self.results[i].slope


def default_h_values(omega: float, points: int = DEFAULT_POINTS,
                     h_min: float | None = None, h_max: float | None = None) -> np.ndarray:
    """Log-spaced h grid, descending, over H_WINDOW times the source period.

    A constant source (omega = 0) uses a unit period.
    """
    if points < 2:
        raise ConfigError(f"need at least 2 step sizes, got {points}")
    period = 2.0 * math.pi / omega if omega > 0 else 1.0
    lo = H_WINDOW[0] * period if h_min is None else h_min
    hi = H_WINDOW[1] * period if h_max is None else h_max
    if not 0 < lo < hi:
        raise ConfigError(f"invalid step-size window [{lo!r}, {hi!r}]")
    return np.logspace(math.log10(hi), math.log10(lo), points)


def widening_steps(h_values: Sequence[float], count: int, omega: float) -> list[float]:
    """Up to ``count`` steps above h_values[0], continuing the grid ratio.

    Returned largest first, so prepending them keeps the grid descending.
    Nothing beyond H_WIDEN_LIMIT times the source period is proposed.
    """
    if count < 1 or len(h_values) < 2:
        return []
    period = 2.0 * math.pi / omega if omega > 0 else 1.0
    ceiling = H_WIDEN_LIMIT * period * (1 + 1e-12)
    ratio = float(h_values[0]) / float(h_values[1])
    if not ratio > 1:
        return []
    extra = []
    h = float(h_values[0])
    for _ in range(count):
        h *= ratio
        if h > ceiling:
            break
        extra.append(h)
    return extra[::-1]


def widen_count(report: "OrderStudyReport") -> int:
    if not report.results:
        return 0
    return max(0, WIDEN_TARGET - report.results[0].used)


def one_step_sample(dae: LinearDae, scheme: ObreshkovScheme, phasor: PhasorSolution, h: float,
                    factorization: StepFactorization | None = None) -> list[OrderSample]:
    """Errors of every derivative block after one exact-start step of size h."""
    initial = initial_state_from_steady_state(dae, phasor, scheme, h)
    state = step(dae, scheme, initial, h, factorization)
    floor = FLOOR_FACTOR * np.finfo(float).eps * float(np.linalg.norm(steady_state_value(phasor, h)))
    samples = []
    for i in range(scheme.m + 1):
        exact = h ** i * steady_state_derivative(phasor, i, h)
        error = float(np.linalg.norm(state.scaled_derivatives[i] - exact))
        samples.append(OrderSample(h=float(h), i=i, error=error, floor=floor))
    logger.debug(f"h={h:.4e}: errors {[f'{s.error:.3e}' for s in samples]}")
    return samples


def one_step_errors(dae: LinearDae, scheme: ObreshkovScheme, h_values: Sequence[float],
                    phasor: PhasorSolution | None = None) -> list[OrderSample]:
    """Samples for every h (in the given order) and every i = 0..m."""
    if len(h_values) == 0 or any(not h > 0 for h in h_values):
        raise ConfigError("step sizes must be positive and non-empty")
    dae = check_regularity(dae)
    if phasor is None:
        phasor = ac_solve(dae)
    factorization = StepFactorization(dae)
    samples: list[OrderSample] = []
    for h in h_values:
        samples.extend(one_step_sample(dae, scheme, phasor, h, factorization))
    return samples


def fit_slope(h_values: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log10(error) against log10(h).

    Raises:
        TooFewSamplesError: If fewer than 4 positive, finite errors remain.
    """
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = (h > 0) & (e > 0) & np.isfinite(e)
    if keep.sum() < MIN_FIT_SAMPLES:
        raise TooFewSamplesError(f"slope fit needs {MIN_FIT_SAMPLES} usable samples, got {int(keep.sum())}")
    slope, _ = np.polyfit(np.log10(h[keep]), np.log10(e[keep]), 1)
    return float(slope)


def summarize(scheme: ObreshkovScheme, index_k: int, h_values: Sequence[float],
              samples: Sequence[OrderSample], tolerance: float = SLOPE_TOLERANCE) -> OrderStudyReport:
    """Fits one slope per derivative order and compares it with the prediction."""
    results = []
    for i in range(scheme.m + 1):
        per_i = [s for s in samples if s.i == i]
        usable = [s for s in per_i if not s.below_floor]
        dropped = len(per_i) - len(usable)
        if dropped:
            logger.warning(f"i={i}: {dropped} of {len(per_i)} samples below the roundoff floor, excluded from the fit")
        predicted = predicted_order(scheme.l, scheme.m, index_k, i)
        try:
            slope = fit_slope([s.h for s in usable], [s.error for s in usable])
            passed = abs(slope - predicted) <= tolerance
        except TooFewSamplesError:
            slope, passed = None, None
        results.append(OrderResult(i=i, predicted=predicted, slope=slope, used=len(usable),
                                   below_floor=dropped, passed=passed))
        if passed is None:
            logger.info(f"i={i}: unresolved, error at roundoff level (predicted order {predicted})")
        else:
            logger.info(f"i={i}: slope {slope:.3f} vs predicted {predicted} -> {'PASS' if passed else 'FAIL'}")
    return OrderStudyReport(
        l=scheme.l,
        m=scheme.m,
        index_k=index_k,
        h_values=tuple(float(h) for h in h_values),
        samples=tuple(samples),
        results=tuple(results),
    )


def run_study(dae: LinearDae, scheme: ObreshkovScheme, h_values: Sequence[float] | None = None,
              points: int = DEFAULT_POINTS, tolerance: float = SLOPE_TOLERANCE) -> OrderStudyReport:
    """Full study: index, steady state, one-step errors, slopes and pass flags.

    With the default grid, larger steps are added when too few i = 0 errors
    stay above the roundoff floor (see ``widening_steps``). An explicit
    ``h_values`` is used as given.
    """
    dae = check_regularity(dae)
    index_k = differentiation_index(dae.C, dae.G)
    phasor = ac_solve(dae)
    widen = h_values is None
    if widen:
        h_values = default_h_values(dae.omega, points)
    logger.info(f"Order study: scheme (l={scheme.l}, m={scheme.m}), k={index_k}, {len(h_values)} step sizes")
    samples = one_step_errors(dae, scheme, h_values, phasor)
    report = summarize(scheme, index_k, h_values, samples, tolerance)
    if widen:
        extra = widening_steps(h_values, widen_count(report), dae.omega)
        if extra:
            logger.info(f"i=0 keeps {report.results[0].used} samples above the floor, adding {len(extra)} larger steps")
            samples = one_step_errors(dae, scheme, extra, phasor) + samples
            report = summarize(scheme, index_k, [*extra, *h_values], samples, tolerance)
    return report


def report_to_json(report: OrderStudyReport) -> dict:
    return {
        "scheme": {"l": report.l, "m": report.m},
        "k": report.index_k,
        "h_values": list(report.h_values),
        "orders": [
            {
                "i": r.i,
                "slope": r.slope,
                "predicted": r.predicted,
                "pass": r.passed,
                "samples_used": r.used,
                "samples_below_floor": r.below_floor,
            }
            for r in report.results
        ],
        "passed": report.all_passed,
    }


def _log10(value: float) -> float:
    return math.log10(value) if value > 0 else float("-inf")


def format_samples_csv(samples: Iterable[OrderSample]) -> str:
    """CSV rows grouped by derivative order, largest h first."""
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(CSV_HEADERS)
    for s in sorted(samples, key=lambda s: (s.i, -s.h)):
        writer.writerow([repr(s.h), s.i, repr(s.error), repr(_log10(s.h)), repr(_log10(s.error))])
    return output.getvalue()


def samples_to_csv(report: OrderStudyReport) -> str:
    return format_samples_csv(report.samples)


def compare_orders(baseline: OrderStudyReport, other: OrderStudyReport, i: int = 0) -> dict:
    """Slope change at derivative order i between two studies.

    Used for order reduction (same scheme, higher index) and recovery (same
    index, larger m).
    """
    a, b = baseline.slope(i), other.slope(i)
    return {
        "i": i,
        "baseline": {"l": baseline.l, "m": baseline.m, "k": baseline.index_k, "slope": a},
        "other": {"l": other.l, "m": other.m, "k": other.index_k, "slope": b},
        "difference": None if a is None or b is None else b - a,
    }
