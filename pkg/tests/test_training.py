import numpy as np
import pytest

from dgflow import datasets, models, nn, training
from dgflow.errors import ConfigurationError

TINY = dict(gen_iters=5, hidden=16, depth=2, batch=32)


class TestTrainGan:
    def test_zero_iterations_returns_initialized_models(self, small_gauss_data):
        cfg = training.GanConfig(gen_iters=0, hidden=16, depth=2, seed=3)
        gen, disc, trace = training.train_gan(small_gauss_data, cfg)
        assert trace == []
        # identical to a fresh init drawn from the same seed stream
        rng = np.random.default_rng(3)
        ref_gen = models.make_generator(rng, hidden=16, depth=2)
        for ours, ref in zip(gen.net.layers, ref_gen.net.layers):
            assert np.array_equal(ours.w, ref.w)

    def test_deterministic_loss_traces(self, small_gauss_data):
        cfg = training.GanConfig(seed=11, **TINY)
        _, _, t1 = training.train_gan(small_gauss_data, cfg)
        _, _, t2 = training.train_gan(small_gauss_data, cfg)
        assert t1 == t2

    def test_single_disc_step_decreases_loss_on_frozen_batch(self, small_gauss_data):
        rng = np.random.default_rng(0)
        for loss_kind in ("non_saturating", "wgan_gp"):
            cfg = training.GanConfig(loss=loss_kind, hidden=32, depth=2, batch=64,
                                     lr=1e-3, seed=2)
            gen = models.make_generator(rng, hidden=32, depth=2)
            disc = models.make_discriminator(rng, hidden=32, depth=2)
            opt = nn.adam_init(disc.net.params(), cfg.lr, *cfg.betas)
            real = small_gauss_data.points[:64]
            z = rng.standard_normal((64, 2))
            fake, _ = nn.mlp_forward(gen.net, z)
            gp_eps = rng.random((64, 1))
            before = training.disc_loss_on(disc, real, fake, cfg, gp_eps)
            training._disc_update(disc, gen, real, z, gp_eps, cfg, opt)
            after = training.disc_loss_on(disc, real, fake, cfg, gp_eps)
            assert after < before, loss_kind

    def test_wgan_sn_keeps_unit_spectral_norm(self, small_gauss_data):
        cfg = training.GanConfig(loss="wgan_sn", seed=5, **TINY)
        _, disc, _ = training.train_gan(small_gauss_data, cfg)
        for layer in disc.net.layers:
            sigma = np.linalg.svd(layer.w, compute_uv=False)[0]
            assert sigma < 1.3

    def test_trace_csv_round_trip(self, tmp_path):
        trace = [(0, 1.5, -0.25, 0.125), (1, 1.25, 0.5, 0.0625)]
        path = tmp_path / "trace.csv"
        training.save_trace_csv(path, trace)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iter,loss_d,loss_g,gp"
        assert lines[1] == "0,1.5,-0.25,0.125"

    def test_bad_loss_rejected(self):
        with pytest.raises(ConfigurationError):
            training.GanConfig(loss="hinge")


class TestGradientPenaltyInvariant:
    def test_penalty_zero_for_unit_gradient_critic(self):
        w = np.array([[0.6], [0.8]])  # ||grad d|| = 1 everywhere
        disc = models.DiscriminatorModel(
            net=nn.Mlp([nn.Layer(w, np.zeros(1), "identity")]), kind="wgan_critic")
        x = np.random.default_rng(0).standard_normal((32, 2))
        value, grads = nn.gp_value_and_param_gradient(disc.net, x)
        assert value == 0.0
        assert all(np.allclose(g, 0.0, atol=1e-14) for g in grads)


class TestVaeTraining:
    def test_elbo_improves_over_epochs(self):
        data = datasets.gen_25gaussians(12000, seed=8)
        cfg = training.VaeConfig(epochs=10, batch=256, lr=1e-3, seed=1,
                                 hidden=32, depth=2)
        vae, history = training.train_vae(data, cfg.epochs, cfg)
        # history stores negative ELBO per epoch: downward trend
        assert history[-1] < history[0]
        assert min(history[5:]) < min(history[:3])

    def test_kl_term_zero_for_standard_normal_posterior(self, rng):
        vae = models.make_vae(rng, hidden=8)
        for layer in vae.encoder.layers:
            layer.w[:] = 0.0
            layer.b[:] = 0.0
        _, kl = models.elbo_terms(vae, rng.standard_normal((9, 2)), seed=0)
        assert np.allclose(kl, 0.0, atol=1e-15)

    def test_reconstruction_term_at_perfect_fit(self, rng):
        # decoder reproducing x almost exactly: recon -> -log(2 pi sigma^2)
        vae = models.VaeModel(
            encoder=nn.Mlp([nn.Layer(np.hstack([np.eye(2), np.zeros((2, 2))]),
                                     np.array([0.0, 0.0, -1e9, -1e9]), "identity")]),
            decoder=nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), "identity")]),
            obs_sigma=0.1)
        x = rng.standard_normal((20, 2))
        recon, _ = models.elbo_terms(vae, x, seed=4)
        expected = -np.log(2.0 * np.pi * 0.01)
        # the clamped posterior still has std e^-5, so allow that much slack
        assert np.allclose(recon, expected, atol=0.05)


class TestCorrector:
    def test_zero_iterations_copies_weights(self, rng):
        d_phi = models.make_discriminator(rng, hidden=16, depth=2)
        gen_phi = models.make_generator(rng, hidden=16, depth=2)
        cfg = training.CorrectorConfig(iters=0)
        d_lam = training.finetune_corrector(d_phi, gen_phi, lambda n, r: r.standard_normal((n, 2)), cfg)
        for l1, l2 in zip(d_phi.net.layers, d_lam.net.layers):
            assert np.array_equal(l1.w, l2.w)
            assert np.array_equal(l1.b, l2.b)
        # and it is a copy, not a view
        d_lam.net.layers[0].w[0, 0] += 1.0
        assert d_phi.net.layers[0].w[0, 0] != d_lam.net.layers[0].w[0, 0]

    def test_identical_distributions_drive_logit_to_zero(self, rng):
        # g_theta == g_phi: the optimal corrector logit is 0 everywhere
        gen_phi = models.make_generator(rng, hidden=16, depth=2)
        d_phi = models.make_discriminator(rng, hidden=16, depth=2)
        # give the starting logit a visible offset
        d_phi.net.layers[-1].b[0] = 2.0

        def sample_theta(n, r):
            z = r.standard_normal((n, gen_phi.latent_dim))
            return models.generate(gen_phi, z)

        cfg = training.CorrectorConfig(iters=3000, batch=64, sgd_lr=2e-3,
                                       momentum=0.9, seed=6)
        d_lam = training.finetune_corrector(d_phi, gen_phi, sample_theta, cfg)
        held_out = sample_theta(2000, np.random.default_rng(123))
        assert np.mean(np.abs(d_lam.logits(held_out))) < 0.2

    def test_sign_convention_recovers_analytic_ratio(self):
        # g_phi samples N(0, I), g_theta samples N((1, 0), I):
        # exp(-d_lambda) must track p_theta/p_phi = exp(x0 - 1/2) on a grid
        rng = np.random.default_rng(10)
        gen_phi = models.GeneratorModel(
            net=nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), "identity")]))
        d_phi = models.make_discriminator(rng, hidden=32, depth=2)
        shift = np.array([1.0, 0.0])

        def sample_theta(n, r):
            return r.standard_normal((n, 2)) + shift

        cfg = training.CorrectorConfig(iters=4000, batch=128, sgd_lr=5e-3,
                                       momentum=0.9, seed=0)
        d_lam = training.finetune_corrector(d_phi, gen_phi, sample_theta, cfg)
        axis = np.linspace(-1.5, 2.5, 21)
        xx, yy = np.meshgrid(axis, np.linspace(-1.0, 1.0, 9))
        grid = np.column_stack([xx.ravel(), yy.ravel()])
        learned = np.exp(-d_lam.logits(grid))
        true_ratio = np.exp(grid[:, 0] - 0.5)
        r = np.corrcoef(learned, true_ratio)[0, 1]
        assert r > 0.9
