import numpy as np
import pytest

from contexture import (CovariancePair, DiscreteDistribution, FiniteContext,
                        PointSet, SampleEncoder, build_rbf_context,
                        contexture_svd, estimate_covariances,
                        estimate_spectrum_posthoc, subsample_support)
from contexture._linalg import principal_angle_cosines


def dense_context(seed, n, m):
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(m) * 0.5, size=n)
    return FiniteContext(rows, DiscreteDistribution.uniform(n))


def top_encoder(ctx, d, mixer=None):
    spec = contexture_svd(ctx)
    values = spec.left_functions[:, 1:d + 1]
    if mixer is not None:
        values = values @ mixer
    return SampleEncoder(values, "input", ctx.input_marginal), spec


class TestEstimateCovariances:
    def test_exact_on_singular_functions(self):
        ctx = dense_context(0, 10, 8)
        enc, spec = top_encoder(ctx, 2)
        cov = estimate_covariances(enc, ctx)
        assert np.allclose(cov.c_phi, np.eye(2), atol=1e-10)
        assert np.allclose(cov.b_phi,
                           np.diag(spec.nontrivial_values[:2] ** 2),
                           atol=1e-10)

    def test_independent_context_annihilates(self, independent_context):
        rng = np.random.default_rng(1)
        enc = SampleEncoder(rng.standard_normal((4, 2)), "input",
                            independent_context.input_marginal)
        cov = estimate_covariances(enc, independent_context)
        assert np.max(np.abs(cov.b_phi)) < 1e-12

    def test_pair_sampled_converges(self, two_state):
        spec = contexture_svd(two_state)
        enc = SampleEncoder(spec.left_functions[:, 1:2], "input",
                            two_state.input_marginal)
        cov = estimate_covariances(enc, two_state, mode="pair_sampled",
                                   n_pairs=100_000, seed=7)
        assert cov.mode == "pair_sampled"
        assert cov.n_pairs == 100_000
        assert abs(cov.b_phi[0, 0] - 0.64) < 0.01

    def test_pair_sampled_seeded_and_validated(self, two_state):
        spec = contexture_svd(two_state)
        enc = SampleEncoder(spec.left_functions[:, 1:2], "input",
                            two_state.input_marginal)
        a = estimate_covariances(enc, two_state, "pair_sampled", 500, seed=3)
        b = estimate_covariances(enc, two_state, "pair_sampled", 500, seed=3)
        assert np.array_equal(a.b_phi, b.b_phi)
        with pytest.raises(ValueError):
            estimate_covariances(enc, two_state, "pair_sampled", 0)

    def test_psd_order_validated_in_exact_mode(self):
        with pytest.raises(ValueError, match="PSD order"):
            CovariancePair(c_phi=np.eye(2), b_phi=2 * np.eye(2), mode="exact")


class TestEstimateSpectrumPosthoc:
    def test_consistency_on_exact_functions(self):
        ctx = dense_context(2, 12, 9)
        enc, spec = top_encoder(ctx, 3)
        cov = estimate_covariances(enc, ctx)
        evals, funcs = estimate_spectrum_posthoc(enc, cov, top=3)
        assert np.allclose(evals, spec.nontrivial_values[:3] ** 2, atol=1e-10)
        cos = principal_angle_cosines(funcs.values,
                                      spec.left_functions[:, 1:4],
                                      ctx.input_marginal.weights)
        assert np.min(cos) > 1 - 1e-8

    def test_mixing_invariance(self):
        ctx = dense_context(3, 10, 8)
        mixer = np.array([[1.2, -0.3, 0.1],
                          [0.4, 0.9, -0.2],
                          [0.0, 0.5, 1.1]])
        enc, spec = top_encoder(ctx, 3, mixer=mixer)
        cov = estimate_covariances(enc, ctx)
        evals, _ = estimate_spectrum_posthoc(enc, cov, top=3)
        assert np.allclose(evals, spec.nontrivial_values[:3] ** 2, atol=1e-8)

    def test_noise_column_adds_zero_eigenvalue(self, independent_context):
        ctx = dense_context(4, 10, 8)
        spec = contexture_svd(ctx)
        rng = np.random.default_rng(5)
        noise = rng.standard_normal((10, 1))
        # orthogonalize the noise against the signal columns so the pencil
        # splits into exact blocks
        w = ctx.input_marginal.weights
        signal = spec.left_functions[:, 1:3]
        for j in range(signal.shape[1]):
            col = signal[:, j]
            noise[:, 0] -= float((w * col) @ noise[:, 0]) * col
        dead = noise - (w @ noise)
        dead = dead @ np.linalg.inv(np.sqrt(dead.T @ (w[:, None] * dead)))
        # replace the "1"-direction content so its pushed image vanishes
        values = np.concatenate([signal, dead], axis=1)
        enc = SampleEncoder(values, "input", ctx.input_marginal)
        cov = estimate_covariances(enc, ctx)
        base = spec.nontrivial_values[:2] ** 2
        evals, _ = estimate_spectrum_posthoc(enc, cov, top=3)
        assert np.allclose(np.sort(evals)[::-1][:2], base, atol=1e-6)

    def test_top_validated(self):
        ctx = dense_context(6, 8, 6)
        enc, _ = top_encoder(ctx, 2)
        cov = estimate_covariances(enc, ctx)
        with pytest.raises(ValueError):
            estimate_spectrum_posthoc(enc, cov, top=3)

    def test_eigenvalues_bounded_by_one(self):
        for seed in range(5):
            ctx = dense_context(seed + 10, 9, 7)
            rng = np.random.default_rng(seed)
            enc = SampleEncoder(rng.standard_normal((9, 3)), "input",
                                ctx.input_marginal)
            cov = estimate_covariances(enc, ctx)
            evals, _ = estimate_spectrum_posthoc(enc, cov, top=3)
            assert np.max(evals) <= 1.0 + 1e-8


class TestSubsampleSupport:
    def test_full_restriction_is_identity(self):
        pts = PointSet(np.random.default_rng(7).normal(size=(12, 3)))
        ctx = build_rbf_context(pts, gamma=0.5)
        sub = subsample_support(ctx, m=12, seed=1)
        assert np.array_equal(sub.conditional, ctx.conditional)
        assert np.array_equal(sub.input_marginal.weights,
                              ctx.input_marginal.weights)

    def test_single_row_has_trivial_spectrum(self):
        pts = PointSet(np.random.default_rng(8).normal(size=(6, 2)))
        ctx = build_rbf_context(pts, gamma=1.0)
        sub = subsample_support(ctx, m=1, seed=2)
        spec = contexture_svd(sub)
        assert spec.rank == 1
        assert spec.singular_values[0] == 1.0

    def test_seeded_rerun_is_bit_exact(self):
        pts = PointSet(np.random.default_rng(9).normal(size=(16, 3)))
        ctx = build_rbf_context(pts, gamma=0.8)
        a = subsample_support(ctx, m=8, seed=5)
        b = subsample_support(ctx, m=8, seed=5)
        assert np.array_equal(a.conditional, b.conditional)

    def test_dead_row_is_error(self):
        # knn rows lose all mass when every neighbor is dropped
        pts = PointSet(np.array([[0.0], [1.0], [100.0], [101.0]]))
        from contexture import build_knn_context
        ctx = build_knn_context(pts, k=1)
        with pytest.raises(ValueError, match="loses all context mass"):
            # keep rows {0, 2}: each points at its dropped twin
            subsample_support(ctx, m=2, seed=193)

    def test_label_context_restricts_rows_only(self):
        from contexture import build_label_context
        ctx = build_label_context(np.array([0, 0, 1, 1, 2, 2]))
        sub = subsample_support(ctx, m=3, seed=4)
        assert sub.n_inputs == 3
        assert np.allclose(sub.conditional.sum(axis=1), 1.0)

    def test_monotone_refinement_in_m(self):
        rng = np.random.default_rng(11)
        pts = PointSet(rng.normal(size=(48, 3)))
        ctx = build_rbf_context(pts, gamma=0.8)
        truth = contexture_svd(ctx).nontrivial_values[:6] ** 2
        errors = []
        for m in (6, 12, 24, 48):
            per_seed = []
            for seed in range(20):
                sub = subsample_support(ctx, m, seed=seed)
                vals = contexture_svd(sub).nontrivial_values[:6] ** 2
                est = np.zeros(6)
                est[:vals.size] = vals
                per_seed.append(np.mean(np.abs(est - truth)))
            errors.append(float(np.mean(per_seed)))
        assert all(b <= a + 0.01 for a, b in zip(errors, errors[1:]))
