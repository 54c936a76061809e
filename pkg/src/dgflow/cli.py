"""Command-line pipeline: data, training, refinement, evaluation, oracles.

    dgflow gen-data 25gaussians --n 100000 --seed 1 --out data.csv
    dgflow train wgan_gp --data data.csv --out-dir run/
    dgflow refine --method dgflow --generator g.json --discriminator d.json \
        --divergence kl --out-dir refined/
    dgflow eval --samples refined/samples_after.csv --data data.csv
    dgflow compare --data data.csv --out-dir table1/
    dgflow oracle --case bimodal --divergence js --gamma 0.1 --out-dir fpe/
    dgflow field --discriminator d.json --divergence kl --out-dir field/
    dgflow verify-manifest run/manifest.json

Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 verification
failure. `--threads` (or DGFLOW_THREADS) caps worker count without changing
any output bytes.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from dgflow import datasets, fpe, models, nn, pipelines, plots, refine, training
from dgflow.divergences import get_divergence
from dgflow.errors import (
    CheckpointError,
    ConfigurationError,
    NumericError,
    VerificationError,
)
from dgflow.manifest import RunManifest, sha256_file, verify_manifest
from dgflow.metrics import evaluate_run

TRAIN_KINDS = ("wgan_gp", "non_saturating", "wgan_sn", "vae")


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DGFLOW_THREADS")
    return max(1, int(env)) if env else 1


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen_data(args):
    data = datasets.generate_dataset(args.dataset, args.n, args.seed)
    out_dir = _ensure_dir(os.path.dirname(os.path.abspath(args.out)) or ".")
    datasets.save_points_csv(args.out, data.points)
    man = RunManifest("gen-data",
                      {"dataset": args.dataset, "n": args.n, "seed": args.seed},
                      seeds={"data": args.seed})
    man.add_output(args.out, rel_to=out_dir)
    man_path = f"{args.out}.manifest.json"
    man.doc["timings"]["total_s"] = 0.0
    _write_json(man_path, man.doc)
    print(f"wrote {args.n} points to {args.out}")
    return 0


def _merge_config(cls, config_path, overrides):
    """Config file fields, overridden by any explicitly set CLI flags."""
    base = {}
    if config_path:
        with open(config_path) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ConfigurationError(f"{config_path}: config must be a JSON object")
    base.update({k: v for k, v in overrides.items() if v is not None})
    if "betas" in base:
        base["betas"] = tuple(base["betas"])
    try:
        return cls(**base)
    except TypeError as exc:
        raise ConfigurationError(f"bad config field: {exc}") from None


def cmd_train(args):
    data_pts = datasets.load_points_csv(args.data)
    name = "Gaussians25"
    data = datasets.Dataset2D(points=data_pts, name=name, normalization=1.0)
    out_dir = _ensure_dir(args.out_dir)
    t0 = time.perf_counter()

    if args.kind == "vae":
        overrides = {"seed": args.seed, "batch": args.batch, "lr": args.lr,
                     "epochs": args.epochs}
        cfg = _merge_config(training.VaeConfig, args.config, overrides)
        man = RunManifest("train", vars(cfg) | {"kind": "vae"}, seeds={"train": cfg.seed})
        man.add_input("data", args.data)
        vae, history = training.train_vae(data, cfg.epochs, cfg)
        ckpt = os.path.join(out_dir, "vae.json")
        models.save_checkpoint(vae, ckpt, meta={"dataset": args.data, "seed": cfg.seed})
        man.add_output(ckpt, rel_to=out_dir)
        trace_path = os.path.join(out_dir, "elbo_trace.csv")
        with open(trace_path, "w") as fh:
            fh.write("epoch,neg_elbo\n")
            for i, v in enumerate(history):
                fh.write(f"{i},{v:.17g}\n")
        man.add_output(trace_path, rel_to=out_dir)
    else:
        overrides = {"loss": args.kind, "seed": args.seed, "gen_iters": args.gen_iters,
                     "disc_iters_per_gen": args.disc_iters, "batch": args.batch,
                     "lr": args.lr, "gp_lambda": args.gp_lambda,
                     "hidden": args.hidden, "depth": args.depth}
        cfg = _merge_config(training.GanConfig, args.config, overrides)
        man = RunManifest("train", vars(cfg), seeds={"train": cfg.seed})
        man.add_input("data", args.data)

        initial = None
        start_iter = 0
        prev_trace_rows = []
        if args.resume_from:
            gen_ck = os.path.join(args.resume_from, "generator.json")
            disc_ck = os.path.join(args.resume_from, "discriminator.json")
            gen0 = models.load_checkpoint(gen_ck)
            disc0 = models.load_checkpoint(disc_ck)
            initial = (gen0, disc0)
            start_iter = int((gen0.meta or {}).get("gen_iters", 0))
            man.add_input("resume_generator", gen_ck)
            man.add_input("resume_discriminator", disc_ck)
            prev_trace = os.path.join(args.resume_from, "loss_trace.csv")
            if os.path.exists(prev_trace):
                with open(prev_trace) as fh:
                    prev_trace_rows = fh.read().splitlines()[1:]

        def progress(it, total, ld, lg):
            print(f"  iter {it}/{total}  loss_d={ld:.4f}  loss_g={lg:.4f}", flush=True)

        gen, disc, trace = training.train_gan(data, cfg, progress=progress,
                                              initial=initial, start_iter=start_iter)
        gen_path = os.path.join(out_dir, "generator.json")
        disc_path = os.path.join(out_dir, "discriminator.json")
        meta = {"dataset": args.data, "seed": cfg.seed, "loss": cfg.loss}
        models.save_checkpoint(gen, gen_path, meta=meta)
        models.save_checkpoint(disc, disc_path, meta=meta)
        trace_path = os.path.join(out_dir, "loss_trace.csv")
        with_gp = cfg.loss == "wgan_gp"
        training.save_trace_csv(trace_path, trace, with_gp=with_gp)
        if prev_trace_rows:
            new_rows = open(trace_path).read().splitlines()
            header, fresh = new_rows[0], new_rows[1:]
            with open(trace_path, "w") as fh:
                fh.write("\n".join([header] + prev_trace_rows + fresh) + "\n")
        for p in (gen_path, disc_path, trace_path):
            man.add_output(p, rel_to=out_dir)

    man.add_timing("train_s", time.perf_counter() - t0)
    man.write(out_dir)
    print(f"checkpoints written to {out_dir}")
    return 0


def _load_disc(path):
    model = models.load_checkpoint(path)
    if not isinstance(model, models.DiscriminatorModel):
        raise ConfigurationError(f"{path} is not a discriminator checkpoint")
    return model


def cmd_refine(args):
    gen = models.load_checkpoint(args.generator)
    if not isinstance(gen, models.GeneratorModel):
        raise ConfigurationError(f"{args.generator} is not a generator checkpoint")
    disc = _load_disc(args.discriminator)
    corrector = _load_disc(args.corrector) if args.corrector else None
    out_dir = _ensure_dir(args.out_dir)
    workers = _threads(args)
    div = get_divergence(args.divergence)

    man = RunManifest("refine", {
        "method": args.method, "divergence": div.name, "eta": args.eta,
        "steps": args.steps, "gamma": args.gamma, "space": args.space,
        "n": args.n, "seed": args.seed, "workers": workers,
    }, seeds={"latent": args.seed, "noise": args.seed})
    man.add_input("generator", args.generator)
    man.add_input("discriminator", args.discriminator)
    if corrector is not None:
        man.add_input("corrector", args.corrector)

    t0 = time.perf_counter()
    steps = args.steps
    if steps is None:
        steps = {"dgflow": 100, "dot": 100, "ddls": 50}[args.method]
    latents = models.sample_prior(args.n, args.seed, dim=gen.latent_dim)
    before = models.generate(gen, latents)
    snapshots = []
    if args.method == "dgflow":
        cfg = refine.FlowConfig(eta=args.eta, steps=steps, gamma=args.gamma,
                                space=args.space, divergence=div, seed=args.seed)
        stack = [disc] if corrector is None else [disc, corrector]
        if args.space == refine.LATENT_SPACE:
            batch = refine.ParticleBatch(latents, space=refine.LATENT_SPACE)
            _, after, snapshots = refine.refine_latent(gen, stack, batch, cfg,
                                                       workers=workers)
        else:
            batch = refine.ParticleBatch(before, space=refine.DATA_SPACE)
            if corrector is not None:
                raise ConfigurationError("data-space refinement takes a single discriminator")
            refined, snapshots = refine.refine_data_space(disc, batch, cfg,
                                                          workers=workers)
            after = refined.positions
    elif args.method == "ddls":
        cfg = refine.DdlsConfig(steps=steps, seed=args.seed)
        batch = refine.ParticleBatch(latents, space=refine.LATENT_SPACE)
        out = refine.ddls_refine(gen, disc, batch, cfg, workers=workers)
        after = models.generate(gen, out.positions)
    else:
        cfg = refine.DotConfig(steps=steps)
        batch = refine.ParticleBatch(latents, space=refine.LATENT_SPACE)
        out = refine.dot_refine(gen, disc, batch, cfg, workers=workers)
        after = models.generate(gen, out.positions)
    man.add_timing("refine_s", time.perf_counter() - t0)

    before_path = os.path.join(out_dir, "samples_before.csv")
    after_path = os.path.join(out_dir, "samples_after.csv")
    datasets.save_points_csv(before_path, before)
    datasets.save_points_csv(after_path, after)
    man.add_output(before_path, rel_to=out_dir)
    man.add_output(after_path, rel_to=out_dir)
    if snapshots:
        snap_dir = _ensure_dir(os.path.join(out_dir, "snapshots"))
        for step, pts in snapshots:
            p = os.path.join(snap_dir, f"step_{step:04d}.csv")
            datasets.save_points_csv(p, pts)
            man.add_output(p, rel_to=out_dir)
    fig_path = os.path.join(out_dir, "refinement.svg")
    plots.scatter_panel(fig_path, real=None, base=before, refined=after,
                        title=f"{args.method} ({div.name})")
    man.add_output(fig_path, rel_to=out_dir)
    man.write(out_dir)
    print(f"refined {args.n} samples with {args.method}; outputs in {out_dir}")
    return 0


def cmd_eval(args):
    samples = datasets.load_points_csv(args.samples)
    pts = datasets.load_points_csv(args.data)
    data = datasets.Dataset2D(points=pts, name="Gaussians25", normalization=1.0)
    summary = evaluate_run(samples, data, runs=args.runs, per_run=args.per_run)
    doc = summary.as_dict()
    print(json.dumps(doc["pct_high_quality"] | {"kde": doc["kde_score"]}, indent=2))
    if args.out:
        out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
        _write_json(args.out, doc)
        man = RunManifest("eval", {"runs": args.runs, "per_run": args.per_run})
        man.add_input("samples", args.samples)
        man.add_input("data", args.data)
        man.add_output(args.out, rel_to=out_dir)
        man.doc["metrics"] = {
            "pct_high_quality": doc["pct_high_quality"],
            "kde_score": doc["kde_score"],
        }
        _write_json(f"{args.out}.manifest.json", man.doc)
    return 0


def cmd_compare(args):
    pts = datasets.load_points_csv(args.data)
    data = datasets.Dataset2D(points=pts, name="Gaussians25", normalization=1.0)
    out_dir = _ensure_dir(args.out_dir)
    workers = _threads(args)

    man = RunManifest("compare", {
        "seed": args.seed, "eval_seed": args.eval_seed, "runs": args.runs,
        "per_run": args.per_run, "gen_iters": args.gen_iters, "hidden": args.hidden,
    }, seeds={"train": args.seed, "eval": args.eval_seed})
    man.add_input("data", args.data)

    t0 = time.perf_counter()
    if args.load_dir:
        gen = models.load_checkpoint(os.path.join(args.load_dir, "generator.json"))
        disc = models.load_checkpoint(os.path.join(args.load_dir, "discriminator.json"))
        man.add_input("generator", os.path.join(args.load_dir, "generator.json"))
        man.add_input("discriminator", os.path.join(args.load_dir, "discriminator.json"))
    else:
        cfg = training.GanConfig(seed=args.seed, gen_iters=args.gen_iters,
                                 hidden=args.hidden, gp_lambda=args.gp_lambda)
        print(f"training wgan_gp for {cfg.gen_iters} iterations ...", flush=True)
        gen, disc, _ = training.train_gan(data, cfg)
        for name, model in (("generator", gen), ("discriminator", disc)):
            p = os.path.join(out_dir, f"{name}.json")
            models.save_checkpoint(model, p)
            man.add_output(p, rel_to=out_dir)
    man.add_timing("train_s", time.perf_counter() - t0)

    t0 = time.perf_counter()
    summaries, samples = pipelines.table_compare(
        gen, disc, data, runs=args.runs, per_run=args.per_run,
        seed=args.eval_seed, workers=workers)
    man.add_timing("refine_eval_s", time.perf_counter() - t0)

    table_path = os.path.join(out_dir, "results_table.csv")
    pipelines.write_results_table(table_path, summaries)
    man.add_output(table_path, rel_to=out_dir)

    real = data.holdout_points()
    base = samples["gan"][:args.per_run]
    for method in pipelines.COMPARE_METHODS[1:]:
        fig_path = os.path.join(out_dir, f"scatter_{method}.svg")
        plots.scatter_panel(fig_path, real=real, base=base,
                            refined=samples[method][:args.per_run], title=method)
        man.add_output(fig_path, rel_to=out_dir)

    man.add_metrics({m: {"pct_high_quality": summaries[m].pct_mean,
                         "kde_score": summaries[m].kde_mean}
                     for m in pipelines.COMPARE_METHODS})
    man.write(out_dir)
    for method, pm, ps, km, ks in pipelines.results_table_rows(summaries):
        print(f"{method:12s}  %HQ {pm:6.2f} ± {ps:4.2f}   KDE {km:9.1f} ± {ks:5.1f}")
    return 0


def cmd_oracle(args):
    out_dir = _ensure_dir(args.out_dir)
    div = get_divergence(args.divergence)
    man = RunManifest("oracle", {
        "case": args.case, "divergence": div.name, "gamma": args.gamma,
        "particles": args.particles, "eta": args.eta, "seed": args.seed,
    }, seeds={"particles": args.seed})
    report = {"case": args.case, "divergence": div.name, "gamma": args.gamma}
    ok = True

    if args.case == "gaussian":
        mu = fpe.gaussian_density(0.0, 1.0)
        initial = fpe.gaussian_density(0.5, 0.8)  # variance 0.64
        checks = []
        estimates = []
        for target_t in (0.5, 1.0):
            # deterministic counter-based noise: a longer run replays the
            # shorter one's prefix exactly, so a fresh run per horizon is fine
            steps = int(round(target_t / args.eta))
            x, estimates = fpe.simulate_particles_running_ratio(
                args.particles, mu, div, args.gamma, args.eta, steps, args.seed,
                initial, store_every=max(steps // 10, 1))
            m_ref, s2_ref = fpe.gaussian_flow_closed_form(0.5, 0.64, target_t)
            m_err = abs(float(np.mean(x)) - m_ref) / abs(m_ref)
            s2_err = abs(float(np.var(x)) - s2_ref) / s2_ref
            checks.append({"t": target_t, "mean_rel_err": m_err, "var_rel_err": s2_err,
                           "pass": bool(m_err < 0.05 and s2_err < 0.05)})
        ok = all(c["pass"] for c in checks)
        report["moment_checks"] = checks
        rho_path = os.path.join(out_dir, "particle_rho.csv")
        with open(rho_path, "w") as fh:
            fh.write("t,x,rho\n")
            for t_snap, centers, density in estimates:
                for xc, rc in zip(centers, density):
                    fh.write(f"{t_snap:.6g},{xc:.10g},{rc:.10g}\n")
        man.add_output(rho_path, rel_to=out_dir)
    else:
        mu = fpe.mixture_density([-2.0, 2.0], [0.5, 0.5], [0.5, 0.5])
        initial = fpe.gaussian_density(0.0, 1.2)
        grid = fpe.uniform_grid(-8.0, 8.0, 400, initial.pdf)
        mass0 = grid.mass()
        lyap = [fpe.fpe_functional(grid, mu, div, args.gamma)]
        mass_err = [0.0]

        def track(_t, g):
            lyap.append(fpe.fpe_functional(g, mu, div, args.gamma))
            mass_err.append(abs(g.mass() - mass0))

        t_end = 1.0
        grid = fpe.fpe_solve(grid, mu, div, args.gamma, t_end, callback=track)
        steps = int(round(t_end / args.eta))
        x, estimates = fpe.simulate_particles_running_ratio(
            args.particles, mu, div, args.gamma, args.eta, steps, args.seed,
            initial, store_every=max(steps // 10, 1))
        ks = fpe.ks_distance(x, grid)
        lyap_arr = np.array(lyap)
        monotone = bool(np.all(np.diff(lyap_arr) <= 1e-9))
        report.update({
            "ks_distance": ks, "ks_pass": bool(ks < 0.03),
            "max_mass_error": float(max(mass_err)),
            "mass_pass": bool(max(mass_err) < 1e-9),
            "lyapunov_monotone": monotone,
        })
        ok = report["ks_pass"] and report["mass_pass"] and monotone

        rho_path = os.path.join(out_dir, "grid_rho.csv")
        with open(rho_path, "w") as fh:
            fh.write("t,x,rho\n")
            for t_snap, centers, density in estimates:
                for xc, rc in zip(centers, density):
                    fh.write(f"{t_snap:.6g},{xc:.10g},{rc:.10g}\n")
            for xc, rc in zip(grid.centers(), grid.rho):
                fh.write(f"{t_end:.6g},{xc:.10g},{rc:.10g}\n")
        man.add_output(rho_path, rel_to=out_dir)
        fig_path = os.path.join(out_dir, "density_comparison.svg")
        plots.density_comparison(fig_path, grid.centers(), grid.rho, x,
                                 title=f"{div.name}, gamma={args.gamma}")
        man.add_output(fig_path, rel_to=out_dir)

    report["pass"] = bool(ok)
    report_path = os.path.join(out_dir, "oracle_report.json")
    _write_json(report_path, report)
    man.add_output(report_path, rel_to=out_dir)
    man.add_metrics(report)
    man.write(out_dir)
    print(json.dumps(report, indent=2))
    return 0 if ok else 4


def cmd_field(args):
    disc = _load_disc(args.discriminator)
    extra = [_load_disc(p) for p in (args.corrector or [])]
    div = get_divergence(args.divergence)
    out_dir = _ensure_dir(args.out_dir)
    man = RunManifest("field", {
        "divergence": div.name, "grid_min": args.grid_min,
        "grid_max": args.grid_max, "grid_n": args.grid_n,
    })
    man.add_input("discriminator", args.discriminator)
    lim = max(abs(args.grid_min), abs(args.grid_max))
    pts, vecs = pipelines.drift_field(disc, div, lim=lim, cells=args.grid_n,
                                      stack_extra=extra or None)
    csv_path = os.path.join(out_dir, "field.csv")
    with open(csv_path, "w") as fh:
        fh.write("x0,x1,v0,v1\n")
        for (x0, x1), (v0, v1) in zip(pts, vecs):
            fh.write(f"{x0:.17g},{x1:.17g},{v0:.17g},{v1:.17g}\n")
    man.add_output(csv_path, rel_to=out_dir)
    fig_path = os.path.join(out_dir, "field.svg")
    plots.vector_field(fig_path, pts, vecs, title=f"drift ({div.name})")
    man.add_output(fig_path, rel_to=out_dir)
    man.write(out_dir)
    print(f"field written to {csv_path}")
    return 0


def cmd_verify_manifest(args):
    n = verify_manifest(args.manifest)
    print(f"{args.manifest}: {n} outputs verified")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dgflow", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: DGFLOW_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("dataset", choices=["25gaussians", "swissroll"])
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset CSV")
    p.add_argument("kind", choices=TRAIN_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON config file; flags override")
    p.add_argument("--resume-from", help="continue from checkpoints in this directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gen-iters", type=int, default=None)
    p.add_argument("--disc-iters", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--gp-lambda", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None, help="vae only")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="refine generator samples")
    p.add_argument("--method", choices=["dgflow", "dot", "ddls"], default="dgflow")
    p.add_argument("--generator", required=True)
    p.add_argument("--discriminator", required=True)
    p.add_argument("--corrector", help="additional ratio-corrector checkpoint")
    p.add_argument("--divergence", choices=["kl", "js", "logd"], default="kl")
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=None,
                   help="default: 100 for dgflow/dot, 50 for ddls")
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--space", choices=["latent", "data"], default="latent")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="score a samples CSV against a dataset CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--per-run", type=int, default=5000)
    p.add_argument("--out", help="write the metric report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="reproduce the 25-Gaussians comparison table")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--load-dir", help="reuse generator/discriminator checkpoints")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-seed", type=int, default=1234)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--per-run", type=int, default=5000)
    p.add_argument("--gen-iters", type=int, default=10000)
    p.add_argument("--hidden", type=int, default=128)
    # the documented factor 10 over-smooths the critic on this dataset (see
    # README); 0.1 reproduces the comparison-table regime
    p.add_argument("--gp-lambda", type=float, default=0.1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="verify the flow against PDE/closed-form oracles")
    p.add_argument("--case", choices=["gaussian", "bimodal"], default="gaussian")
    p.add_argument("--divergence", choices=["kl", "js", "logd"], default="kl")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--particles", type=int, default=10000)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("field", help="export the drift vector field of a discriminator")
    p.add_argument("--discriminator", required=True)
    p.add_argument("--corrector", action="append", help="stacked logit checkpoints")
    p.add_argument("--divergence", choices=["kl", "js", "logd"], default="kl")
    p.add_argument("--grid-min", type=float, default=-2.0)
    p.add_argument("--grid-max", type=float, default=2.0)
    p.add_argument("--grid-n", type=int, default=30)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("verify-manifest", help="re-hash a manifest's outputs")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_verify_manifest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
