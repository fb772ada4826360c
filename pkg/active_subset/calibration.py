"""Temperature scaling of classifier logits.

A single scalar T divides the logits before the softmax. It is fitted by
minimising the negative log-likelihood of held-out (logits, label) pairs
with a golden-section search over a log-spaced bracket.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax

from active_subset.components.classifiers import softmax
from active_subset.exceptions import InvalidInputError, InvalidParameterError

logger = logging.getLogger(__name__)

T_MIN = 0.05
T_MAX = 20.0
T_TOLERANCE = 1e-4
GRID_POINTS = 101

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARED = (3 - math.sqrt(5)) / 2  # 1 / phi^2


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of a temperature fit.

    Attributes:
        temperature: Fitted T in [T_MIN, T_MAX].
        nll_before: NLL at T = 1.
        nll_after: NLL at the fitted T.
        fit_set_size: Number of pairs used.
    """
    temperature: float
    nll_before: float
    nll_after: float
    fit_set_size: int


def apply_temperature(logits, temperature: float) -> np.ndarray:
    """softmax(logits / T); argmax is unchanged for every T > 0."""
    if not temperature > 0:
        raise InvalidParameterError(f"temperature must be > 0, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature)


def nll_at_temperature(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    """Mean negative log-likelihood of `labels` under softmax(logits / T)."""
    log_probs = log_softmax(logits / temperature, axis=1)
    return float(-np.mean(log_probs[np.arange(len(labels)), labels]))


def golden_section_search(
    func: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-5
) -> Tuple[float, float]:
    """Shrink [a, b] around the minimum of a unimodal `func`.

    Reuses one evaluation per step and returns a bracketing interval
    [c, d] with d - c <= tol.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return a, b

    # Required steps to achieve tolerance
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARED * h
    d = a + INV_PHI * h
    yc = func(c)
    yd = func(d)

    for _ in range(n - 1):
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARED * h
            yc = func(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = func(d)

    if yc < yd:
        return a, d
    return c, b


def _search_log_temperature(objective: Callable[[float], float], lo: float, hi: float) -> float:
    """Golden-section in log T, tolerance expressed in T at the upper end of the bracket."""
    log_lo, log_hi = math.log(lo), math.log(hi)
    # d(T) = T d(log T), so a log-space width of tol / hi is at most tol wide in T
    c, d = golden_section_search(lambda s: objective(math.exp(s)), log_lo, log_hi, tol=T_TOLERANCE / hi)
    return math.exp((c + d) / 2)


def fit_temperature(
    logits: Sequence,
    labels: Sequence[int],
    t_min: float = T_MIN,
    t_max: float = T_MAX
) -> CalibrationResult:
    """Fit T minimising the NLL of (logits, label) pairs.

    Args:
        logits: Matrix (n, C) of logits.
        labels: True classes (n,).
        t_min: Lower end of the search bracket.
        t_max: Upper end of the search bracket.

    Returns:
        CalibrationResult; nll_after never exceeds nll_before.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(logits) == 0:
        raise InvalidInputError("fit_temperature needs a non-empty (n, C) logit matrix")
    if len(labels) != len(logits):
        raise InvalidInputError("logits and labels differ in length")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise InvalidInputError(f"labels must lie in [0, {logits.shape[1]})")
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits must be finite")

    def objective(t: float) -> float:
        return nll_at_temperature(logits, labels, t)

    nll_before = objective(1.0)
    best_t = _search_log_temperature(objective, t_min, t_max)
    best_nll = objective(best_t)

    # Grid scan guards against a non-unimodal objective
    grid = np.geomspace(t_min, t_max, GRID_POINTS)
    grid_nll = np.array([objective(t) for t in grid])
    g = int(np.argmin(grid_nll))
    if grid_nll[g] < best_nll - 1e-12:
        logger.warning(
            f"Grid point T={grid[g]:.4f} beats golden-section optimum T={best_t:.4f}; refining locally"
        )
        lo, hi = grid[max(g - 1, 0)], grid[min(g + 1, GRID_POINTS - 1)]
        best_t = _search_log_temperature(objective, lo, hi)
        best_nll = objective(best_t)
        if grid_nll[g] < best_nll:
            best_t, best_nll = float(grid[g]), float(grid_nll[g])

    if best_nll > nll_before:
        best_t, best_nll = 1.0, nll_before

    logger.debug(f"Temperature fit on {len(labels)} pairs: T={best_t:.4f}, NLL {nll_before:.4f} -> {best_nll:.4f}")
    return CalibrationResult(
        temperature=float(best_t),
        nll_before=float(nll_before),
        nll_after=float(best_nll),
        fit_set_size=int(len(labels)),
    )
