"""
Comparison report: one record per method, the best-method verdict and the table rendering.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

from src.core.errors import ModelError

TABLE_COLUMNS = ('method', 'iterations', 'relative_error')


@dataclass
class MethodRecord:
    method: str
    iterations: int = 0
    relative_error: float = float('nan')
    stage_errors: dict = field(default_factory=dict)
    wall_time: float = 0.0
    stage_times: dict = field(default_factory=dict)
    converged: bool = False
    stop_reason: Optional[str] = None
    parameter_count: int = 0
    upper_residual: float = float('nan')
    lower_residual: float = float('nan')
    warnings: list = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None

    @classmethod
    def from_trace(cls, method, trace, parameter_count, wall_time=0.0):
        return cls(method=method,
                   iterations=trace.iterations,
                   relative_error=float(trace.final_relative_error),
                   stage_errors={k: float(v) for k, v in trace.relative_errors_by_stage.items()},
                   wall_time=float(wall_time),
                   stage_times={k: float(v) for k, v in trace.stage_times.items()},
                   converged=bool(trace.converged),
                   stop_reason=trace.stop_reason.value if trace.stop_reason else None,
                   parameter_count=int(parameter_count),
                   upper_residual=float(trace.upper_residual),
                   lower_residual=float(trace.lower_residual),
                   warnings=list(trace.warnings))

    @classmethod
    def failure(cls, method, exc):
        return cls(method=method, failed=True, error=f'{type(exc).__name__}: {exc}')

    def to_dict(self):
        d = asdict(self)
        # JSON has no NaN
        for key in ('relative_error', 'upper_residual', 'lower_residual'):
            if math.isnan(d[key]):
                d[key] = None
        return d


def select_best(records):
    """
    Index of the record with the smallest relative error; ties go to fewer parameters,
    then fewer iterations, then the earlier record. Failed records never win.
    """
    candidates = [i for i, r in enumerate(records) if not r.failed]
    if not candidates:
        return None
    return min(candidates, key=lambda i: (records[i].relative_error, records[i].parameter_count,
                                          records[i].iterations, i))


def select_best_by_upper_bound(records):
    candidates = [i for i, r in enumerate(records) if not r.failed and not math.isnan(r.upper_residual)]
    if not candidates:
        return None
    return min(candidates, key=lambda i: (records[i].upper_residual, i))


@dataclass
class ComparisonReport:
    records: List[MethodRecord]
    traces: dict = field(default_factory=dict)
    best_method: Optional[str] = None
    best_by_upper_bound: Optional[str] = None

    def __post_init__(self):
        names = [r.method for r in self.records]
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate methods in report: {names}")
        best = select_best(self.records)
        self.best_method = None if best is None else self.records[best].method
        upper = select_best_by_upper_bound(self.records)
        self.best_by_upper_bound = None if upper is None else self.records[upper].method

    @property
    def all_failed(self):
        return all(r.failed for r in self.records)

    def strip_timings(self):
        """Zero wall-clock fields so reports of identical runs compare byte for byte."""
        for r in self.records:
            r.wall_time = 0.0
            r.stage_times = {k: 0.0 for k in r.stage_times}

    def to_dict(self):
        return {
            'methods': [r.to_dict() for r in self.records],
            'best_method': self.best_method,
            'best_by_upper_bound': self.best_by_upper_bound,
            'traces': {k: [float(v) for v in vals] for k, vals in self.traces.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def check_best_invariant(report_dict):
    """
    True when best_method attains the minimum relative error among successful methods
    of a report loaded from JSON.
    """
    ok = [m for m in report_dict['methods'] if not m['failed']]
    if not ok:
        return report_dict['best_method'] is None
    best = min(m['relative_error'] for m in ok)
    winner = [m for m in ok if m['method'] == report_dict['best_method']]
    return len(winner) == 1 and winner[0]['relative_error'] == best


def format_table(report):
    """Plain-text table with columns method, iterations, relative_error."""
    rows = [TABLE_COLUMNS]
    for r in report.records:
        if r.failed:
            rows.append((r.method, '-', 'failed'))
        else:
            rows.append((r.method, str(r.iterations), f'{r.relative_error:.13f}'))
    widths = [max(len(row[c]) for row in rows) for c in range(len(TABLE_COLUMNS))]
    lines = ['  '.join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, '  '.join('-' * w for w in widths))
    return '\n'.join(lines) + '\n'
