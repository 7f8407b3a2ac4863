"""
Per-iteration bookkeeping shared by the ALS / HOOI solvers.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.core.errors import NumericalFailureError, TensorBenchError

logger = logging.getLogger(__name__)

# allowed upward drift of a residual that should be nonincreasing, relative to ||t||
MONOTONE_SLACK = 1e-12


class StopReason(str, Enum):
    TOLERANCE = 'tolerance'
    MAX_ITERATIONS = 'max_iterations'
    STALL = 'stall'


@dataclass
class DecompositionTrace:
    """
    Residual ||T - T_hat||_F after every refinement sweep, plus named stage errors.
    """
    residuals: list = field(default_factory=list)
    relative_errors_by_stage: dict = field(default_factory=dict)
    converged: bool = False
    stop_reason: StopReason = None
    warnings: list = field(default_factory=list)
    stage_times: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.residuals)

    @property
    def upper_residual(self):
        """Largest recorded residual (upper bound of the residual curve)."""
        return max(self.residuals) if self.residuals else float('nan')

    @property
    def lower_residual(self):
        """Smallest recorded residual (lower bound of the residual curve)."""
        return min(self.residuals) if self.residuals else float('nan')

    @property
    def final_relative_error(self):
        if not self.relative_errors_by_stage:
            return float('nan')
        return list(self.relative_errors_by_stage.values())[-1]

    def warn(self, message):
        logger.warning(message)
        self.warnings.append(message)

    def extend(self, other):
        """Append another stage's sweeps (used by multi-stage pipelines)."""
        self.residuals.extend(other.residuals)
        self.warnings.extend(other.warnings)
        self.converged = other.converged
        self.stop_reason = other.stop_reason

    def to_dict(self):
        return {
            'residuals': [float(r) for r in self.residuals],
            'relative_errors_by_stage': {k: float(v) for k, v in self.relative_errors_by_stage.items()},
            'iterations': self.iterations,
            'converged': self.converged,
            'stop_reason': self.stop_reason.value if self.stop_reason else None,
            'warnings': list(self.warnings),
        }


class ConvergenceMonitor(object):
    """
    Decides after each sweep whether to stop.
    Stops when |res_k - res_{k-1}| / ||t|| < tolerance, after max_iterations sweeps,
    or (stall) when a sweep increased the residual beyond the monotone slack.
    """

    def __init__(self, trace, norm, tolerance, max_iterations, initial_residual, label):
        self.trace = trace
        self.norm = norm
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.previous = initial_residual
        self.label = label
        self.sweeps = 0

    def update(self, residual):
        """
        Record one sweep. Returns (accepted, stop) where accepted is False when the
        sweep must be discarded.
        """
        self.sweeps += 1
        if residual > self.previous + MONOTONE_SLACK * self.norm:
            self.trace.warn(f'[{self.label}] residual increased from {self.previous:.6e} to {residual:.6e}; stopping')
            self._finish(StopReason.STALL, converged=False)
            return False, True

        self.trace.residuals.append(float(residual))
        logger.debug('[{} {}] Residual : {:.6e}'.format(self.label, self.sweeps, residual))

        change = abs(self.previous - residual) / self.norm
        self.previous = min(residual, self.previous)
        if change < self.tolerance:
            self._finish(StopReason.TOLERANCE, converged=True)
            return True, True
        if self.sweeps >= self.max_iterations:
            self._finish(StopReason.MAX_ITERATIONS, converged=False)
            return True, True
        return True, False

    def _finish(self, reason, converged):
        self.trace.stop_reason = reason
        self.trace.converged = converged
        logger.info('[{}] stopped after {} sweeps ({}), residual {:.6e}'.format(
            self.label, self.trace.iterations, reason.value, self.previous))


def all_finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


@contextmanager
def guarded_sweep(label, sweep, last_iterate, trace):
    """
    Linear-algebra failures inside a sweep (non-finite input to an SVD, Cholesky or
    condition estimate) surface as NumericalFailureError carrying the last finite model.
    """
    try:
        yield
    except NumericalFailureError as exc:
        if exc.last_iterate is None:
            exc.last_iterate = last_iterate
        if exc.trace is None:
            exc.trace = trace
        raise
    except TensorBenchError:
        raise
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        raise NumericalFailureError(f"[{label}] sweep {sweep} failed: {exc}",
                                    last_iterate=last_iterate, trace=trace) from exc
