"""Reusable experiment pipelines shared by the CLI and the test suite."""

import numpy as np

from dgflow import models, refine
from dgflow.divergences import get_divergence
from dgflow.metrics import evaluate_run

COMPARE_METHODS = ("gan", "dot", "ddls", "dgflow_kl", "dgflow_js", "dgflow_logd")


def refined_samples(method, gen, disc, latents, seed, workers=1, gamma=0.01,
                    corrector=None):
    """Samples for one comparison row from shared latent particles."""
    batch = refine.ParticleBatch(latents, space=refine.LATENT_SPACE)
    if method == "gan":
        return models.generate(gen, latents)
    if method == "dot":
        out = refine.dot_refine(gen, disc, batch, refine.DotConfig(), workers=workers)
        return models.generate(gen, out.positions)
    if method == "ddls":
        out = refine.ddls_refine(gen, disc, batch, refine.DdlsConfig(seed=seed),
                                 workers=workers)
        return models.generate(gen, out.positions)
    if method.startswith("dgflow_"):
        div = get_divergence(method.split("_", 1)[1])
        cfg = refine.FlowConfig(divergence=div, seed=seed, gamma=gamma)
        stack = [disc] if corrector is None else [disc, corrector]
        _, samples, _ = refine.refine_latent(gen, stack, batch, cfg, workers=workers)
        return samples
    raise ValueError(f"unknown method {method!r}")


def table_compare(gen, disc, data, runs=10, per_run=5000, seed=1234, workers=1,
                  methods=COMPARE_METHODS, gamma=0.01):
    """Refine one shared latent pool with every method and score each.

    Returns (summaries, samples) keyed by method; all methods see the same
    latents and the same per-chunk noise seeds.
    """
    latents = models.sample_prior(runs * per_run, seed)
    summaries = {}
    samples_by_method = {}
    for method in methods:
        samples = refined_samples(method, gen, disc, latents, seed, workers=workers,
                                  gamma=gamma)
        summaries[method] = evaluate_run(samples, data, runs=runs, per_run=per_run,
                                         seed=seed)
        samples_by_method[method] = samples
    return summaries, samples_by_method


def results_table_rows(summaries, methods=COMPARE_METHODS):
    rows = []
    for method in methods:
        s = summaries[method]
        rows.append((method, s.pct_mean, s.pct_std, s.kde_mean, s.kde_std))
    return rows


def write_results_table(path, summaries, methods=COMPARE_METHODS):
    with open(path, "w") as fh:
        fh.write("method,pct_high_quality_mean,pct_high_quality_std,"
                 "kde_score_mean,kde_score_std\n")
        for method, pm, ps, km, ks in results_table_rows(summaries, methods):
            fh.write(f"{method},{pm:.4f},{ps:.4f},{km:.4f},{ks:.4f}\n")


def drift_field(disc, divergence, lim=2.0, cells=30, stack_extra=None):
    """Drift vectors -grad f'(exp(-d)) on a square grid; returns (points, vectors)."""
    axis = np.linspace(-lim, lim, cells)
    xx, yy = np.meshgrid(axis, axis)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    discs = [disc] if stack_extra is None else [disc] + list(stack_extra)
    stack = refine.RatioStack(discs)
    logit, grad = stack.logit_and_grad(pts)
    coef = divergence.drift_coef(logit)
    return pts, coef[:, None] * grad
