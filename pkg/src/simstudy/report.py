"""
Study metrics and the files they are written to.
"""
import io
import json
import logging
import math
import os
import sys
from dataclasses import astuple, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

METRICS_COLUMNS = ('scenario', 'estimator', 'regime', 'n', 'reps', 'mean_psi', 'scaled_abs_bias',
                   'scaled_sd', 'coverage', 'mean_se', 'failures')
REPLICATION_COLUMNS = ('scenario', 'estimator', 'regime', 'n', 'rep', 'seed', 'psi', 'se', 'lo', 'hi',
                       'failed', 'message')


@dataclass(frozen=True)
class MetricsRow:
    """
    One (scenario, estimator, regime, n) cell.

    scaled_abs_bias = sqrt(n) * |mean_psi - truth| and scaled_sd = sqrt(n) * sd
    over completed replications; coverage and mean_se are None for
    estimators without intervals.
    """
    scenario: str
    estimator: str
    regime: str
    n: int
    reps: int
    mean_psi: Optional[float]
    scaled_abs_bias: Optional[float]
    scaled_sd: Optional[float]
    coverage: Optional[float]
    mean_se: Optional[float]
    failures: int


@dataclass
class StudyReport:
    rows: List[MetricsRow] = field(default_factory=list)
    replications: Optional[pd.DataFrame] = None
    metadata: Dict = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([astuple(r) for r in self.rows], columns=list(METRICS_COLUMNS))


def _mean(values: np.ndarray) -> Optional[float]:
    return math.fsum(values) / len(values) if len(values) else None


def summarize_cell(scenario: str, estimator: str, regime: str, n: int, cell: pd.DataFrame,
                   truth: float) -> MetricsRow:
    """Aggregate the replications of one cell, failed ones excluded."""
    done = cell[~cell['failed']].sort_values('rep')
    psi = done['psi'].to_numpy(dtype=float)
    reps = len(psi)
    mean_psi = _mean(psi)
    scaled_abs_bias = math.sqrt(n) * abs(mean_psi - truth) if mean_psi is not None else None
    scaled_sd = None
    if reps >= 2:
        squares = (psi - mean_psi) ** 2
        scaled_sd = math.sqrt(n) * math.sqrt(math.fsum(squares) / (reps - 1))
    coverage = mean_se = None
    with_ci = done.dropna(subset=['lo', 'hi'])
    if reps and len(with_ci) == reps:
        covered = ((with_ci['lo'] <= truth) & (truth <= with_ci['hi'])).to_numpy(dtype=float)
        coverage = _mean(covered)
        mean_se = _mean(with_ci['se'].to_numpy(dtype=float))
    return MetricsRow(scenario=scenario, estimator=estimator, regime=regime, n=int(n), reps=reps,
                      mean_psi=mean_psi, scaled_abs_bias=scaled_abs_bias, scaled_sd=scaled_sd,
                      coverage=coverage, mean_se=mean_se, failures=int(cell['failed'].sum()))


def write_metrics(report: StudyReport, target):
    report.frame().to_csv(target, index=False, lineterminator='\n')


def read_metrics(path: str) -> StudyReport:
    """Parse metrics.csv back into a StudyReport (rows only)."""
    frame = pd.read_csv(path, dtype={'scenario': str, 'estimator': str, 'regime': str},
                        keep_default_na=False, na_values=[''])
    missing = [c for c in METRICS_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: metrics file lacks columns {', '.join(missing)}")

    def optional(value) -> Optional[float]:
        return None if pd.isna(value) else float(value)

    rows = [
        MetricsRow(scenario=r.scenario, estimator=r.estimator, regime=r.regime, n=int(r.n),
                   reps=int(r.reps), mean_psi=optional(r.mean_psi),
                   scaled_abs_bias=optional(r.scaled_abs_bias), scaled_sd=optional(r.scaled_sd),
                   coverage=optional(r.coverage), mean_se=optional(r.mean_se), failures=int(r.failures))
        for r in frame[list(METRICS_COLUMNS)].itertuples(index=False)
    ]
    return StudyReport(rows=rows)


def emit_report(report: StudyReport, out_dir: str, plots: bool = True) -> List[str]:
    """
    Write metrics.csv, replications.csv, metadata.json and the SVG figures.

    out_dir '-' writes metrics.csv to stdout only.
    """
    if out_dir == '-':
        buffer = io.StringIO()
        write_metrics(report, buffer)
        sys.stdout.write(buffer.getvalue())
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, 'metrics.csv')
    write_metrics(report, path)
    written.append(path)
    if report.replications is not None:
        path = os.path.join(out_dir, 'replications.csv')
        report.replications.to_csv(path, index=False, lineterminator='\n')
        written.append(path)
    if report.metadata:
        path = os.path.join(out_dir, 'metadata.json')
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(report.metadata, fh, indent=2, sort_keys=True)
            fh.write('\n')
        written.append(path)
    if plots:
        from src.simstudy.plots import plot_metrics
        written.extend(plot_metrics(report.rows, out_dir))
    logging.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
