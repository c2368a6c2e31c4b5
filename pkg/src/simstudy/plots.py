import logging
import os
from typing import List, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from src.simstudy.report import MetricsRow  # noqa: E402

FIGURES = (
    ('scaled_bias.svg', 'scaled_abs_bias', 'sqrt(n) x |bias|'),
    ('scaled_sd.svg', 'scaled_sd', 'sqrt(n) x sd'),
    ('coverage.svg', 'coverage', 'coverage'),
)

# byte-stable SVG output
SVG_STYLE = {
    'svg.hashsalt': 'frontdoor',
    'svg.fonttype': 'path',
    'font.family': 'DejaVu Sans',
}


def _series(rows: Sequence[MetricsRow], scenario: str, metric: str):
    keys = sorted({(r.estimator, r.regime) for r in rows if r.scenario == scenario})
    for estimator, regime in keys:
        points = sorted((r.n, getattr(r, metric)) for r in rows
                        if r.scenario == scenario and r.estimator == estimator and r.regime == regime
                        and getattr(r, metric) is not None)
        if points:
            yield f"{estimator} ({regime})", [p[0] for p in points], [p[1] for p in points]


def plot_metrics(rows: Sequence[MetricsRow], out_dir: str, nominal: float = 0.95) -> List[str]:
    """
    One SVG per metric, one panel per scenario, one line per estimator and regime.

    Returns:
        Paths written; empty when there are no rows
    """
    scenarios = sorted({r.scenario for r in rows})
    if not scenarios:
        logging.warning("No metrics rows; skipping figures")
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []
    with plt.rc_context(SVG_STYLE):
        for filename, metric, label in FIGURES:
            fig, axes = plt.subplots(1, len(scenarios), figsize=(4 * len(scenarios), 3.5),
                                     sharey=True, squeeze=False)
            for ax, scenario in zip(axes[0], scenarios):
                for name, xs, ys in _series(rows, scenario, metric):
                    ax.plot(xs, ys, marker='o', label=name)
                if metric == 'coverage':
                    ax.axhline(nominal, color='grey', linestyle='--', linewidth=0.8)
                ax.set_title(f"scenario {scenario}")
                ax.set_xlabel('n')
                ax.grid(True, linestyle='--', alpha=0.7)
            axes[0][0].set_ylabel(label)
            handles, labels = axes[0][-1].get_legend_handles_labels()
            if handles:
                axes[0][-1].legend(fontsize='small')
            fig.tight_layout()
            path = os.path.join(out_dir, filename)
            fig.savefig(path, format='svg', metadata={'Date': None})
            plt.close(fig)
            written.append(path)
    return written
