"""Sample-quality metrics for the 25-Gaussians benchmark.

A sample is high quality when it lies within 4 (normalized) standard
deviations of its nearest mixture mode. The KDE score fits an isotropic
Gaussian kernel density (bandwidth 0.1) to the generated samples and sums the
log-density over held-out real points, evaluated with log-sum-exp.
"""

from dataclasses import dataclass

import numpy as np

from dgflow.datasets import gaussian_mode_table, nearest_mode
from dgflow.errors import ConfigurationError

KDE_BANDWIDTH = 0.1


@dataclass
class MetricReport:
    pct_high_quality: float
    kde_score: float
    n_samples: int
    seed: int = 0
    run_index: int = 0


@dataclass
class EvaluationSummary:
    pct_mean: float
    pct_std: float
    kde_mean: float
    kde_std: float
    reports: list

    def as_dict(self):
        return {
            "pct_high_quality": {"mean": self.pct_mean, "std": self.pct_std},
            "kde_score": {"mean": self.kde_mean, "std": self.kde_std},
            "runs": [
                {
                    "run_index": r.run_index,
                    "pct_high_quality": r.pct_high_quality,
                    "kde_score": r.kde_score,
                    "n_samples": r.n_samples,
                }
                for r in self.reports
            ],
        }


def pct_high_quality(samples, modes=None):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ConfigurationError("pct_high_quality needs at least one sample")
    if modes is None:
        modes = gaussian_mode_table()
    _, dist = nearest_mode(samples, modes)
    return float(100.0 * np.mean(dist <= modes.high_quality_radius))


def kde_log_density(generated, query, bandwidth=KDE_BANDWIDTH):
    """log of (1/n) sum_i N(query; x_i, h^2 I) per query row, chunked."""
    gen = np.asarray(generated, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    n = len(gen)
    h2 = bandwidth * bandwidth
    log_norm = -np.log(n) - np.log(2.0 * np.pi * h2)
    out = np.empty(len(q))
    chunk = max(1, int(4e6 // max(n, 1)))
    gen_sq = np.sum(gen * gen, axis=1)
    for lo in range(0, len(q), chunk):
        qc = q[lo:lo + chunk]
        d2 = (
            np.sum(qc * qc, axis=1)[:, None]
            - 2.0 * qc @ gen.T
            + gen_sq[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        expo = -d2 / (2.0 * h2)
        peak = expo.max(axis=1, keepdims=True)
        out[lo:lo + chunk] = peak[:, 0] + np.log(np.exp(expo - peak).sum(axis=1))
    return out + log_norm


def kde_score(generated, reference, bandwidth=KDE_BANDWIDTH):
    """Total log-likelihood of `reference` under a KDE fit to `generated`."""
    if len(generated) < 1 or len(reference) < 1:
        raise ConfigurationError("kde_score needs nonempty sample sets")
    return float(np.sum(kde_log_density(generated, reference, bandwidth)))


def evaluate_run(samples, data, runs=10, per_run=5000, modes=None, seed=0):
    """Both metrics over `runs` disjoint chunks of `samples`, mean and std.

    `samples` must hold at least runs*per_run rows (independent draws from the
    pipeline under test); the KDE reference is the dataset's held-out slice.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < runs * per_run:
        raise ConfigurationError(
            f"need {runs * per_run} samples for {runs} runs of {per_run}, got {len(samples)}"
        )
    reference = data.holdout_points()
    reports = []
    for k in range(runs):
        chunk = samples[k * per_run:(k + 1) * per_run]
        reports.append(MetricReport(
            pct_high_quality=pct_high_quality(chunk, modes),
            kde_score=kde_score(chunk, reference),
            n_samples=per_run,
            seed=seed,
            run_index=k,
        ))
    pcts = np.array([r.pct_high_quality for r in reports])
    kdes = np.array([r.kde_score for r in reports])
    return EvaluationSummary(
        pct_mean=float(pcts.mean()), pct_std=float(pcts.std()),
        kde_mean=float(kdes.mean()), kde_std=float(kdes.std()),
        reports=reports,
    )
