"""Generator tests: dictionary geometry, sampler bounds, reconstruction."""

import numpy as np
import pytest

from contrastlab.errors import RankDeficiencyError
from contrastlab.synthetic import (
    BatchData,
    GenerativeModel,
    ModelConfig,
    UniqueFeatureSampler,
    build_generative_model,
    build_latent_dictionary,
    dump_samples_csv,
    load_model_config,
    model_config_from_dict,
    model_config_to_dict,
    prompt_confound_model,
    sample_arrays,
    sample_batch,
    sample_pair,
    save_model_config,
)


class TestLatentDictionary:
    def test_orthogonal_case(self):
        d = build_latent_dictionary(K=2, K1=3, gamma=1.0, seed=0)
        assert np.allclose(d.vectors[0], [1, 0, 0], atol=1e-12)
        assert np.allclose(d.vectors[1], [0, 1, 0], atol=1e-12)
        assert abs(float(d.vectors[0] @ d.vectors[1])) < 1e-12

    def test_half_margin_inner_product(self):
        # direct evaluation of sqrt(1-g)*u + sqrt(g)*e_k at g = 0.5
        d = build_latent_dictionary(K=2, K1=3, gamma=0.5, seed=0)
        assert abs(float(d.vectors[0] @ d.vectors[1]) - 0.5) < 1e-12
        assert np.allclose(np.linalg.norm(d.vectors, axis=1), 1.0, atol=1e-12)

    def test_margin_exact_for_random_shapes(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            K = int(rng.integers(2, 9))
            K1 = K + 1 + int(rng.integers(0, 4))
            gamma = float(rng.uniform(0.01, 1.0))
            d = build_latent_dictionary(K, K1, gamma, seed=trial)
            gram = d.vectors @ d.vectors.T
            off = gram[~np.eye(K, dtype=bool)]
            assert abs(np.max(off) - (1.0 - gamma)) < 1e-12
            # the construction makes every off-diagonal equal
            assert np.ptp(off) < 1e-12
            assert np.max(np.abs(np.linalg.norm(d.vectors, axis=1) - 1.0)) < 1e-12

    def test_dimension_too_small(self):
        with pytest.raises(ValueError, match="dimension too small"):
            build_latent_dictionary(K=4, K1=4, gamma=0.5)

    @pytest.mark.parametrize("gamma", [0.0, -0.1, 1.5])
    def test_invalid_margin(self, gamma):
        with pytest.raises(ValueError, match="margin"):
            build_latent_dictionary(K=2, K1=3, gamma=gamma)

    def test_bad_probs(self):
        with pytest.raises(ValueError, match="sum to 1"):
            build_latent_dictionary(K=2, K1=3, gamma=0.5, probs=[0.9, 0.3])
        with pytest.raises(ValueError, match="positive"):
            build_latent_dictionary(K=2, K1=3, gamma=0.5, probs=[1.0, 0.0])

    def test_custom_probs_kept(self):
        d = build_latent_dictionary(K=3, K1=4, gamma=0.3, probs=[0.5, 0.25, 0.25])
        assert np.allclose(d.probs, [0.5, 0.25, 0.25])


class TestUniqueFeatureSampler:
    def test_zero_kind(self, make_rng):
        s = UniqueFeatureSampler(kind="zero", dimension=3)
        assert np.all(s.sample(make_rng(), 10) == 0.0)
        assert np.all(s.mean() == 0.0)

    def test_ball_kind_stays_in_ball(self, make_rng):
        s = UniqueFeatureSampler(kind="ball", dimension=4, radius=0.7)
        draws = s.sample(make_rng(1), 5000)
        norms = np.linalg.norm(draws, axis=1)
        assert np.all(norms <= 0.7 + 1e-12)
        # uniform in the ball actually fills it
        assert norms.max() > 0.6

    def test_discrete_kind(self, make_rng):
        sup = ((np.array([1.0, 0.0]), 0.25), (np.array([0.0, 1.0]), 0.75))
        s = UniqueFeatureSampler(kind="discrete", dimension=2, radius=1.0, support=sup)
        draws = s.sample(make_rng(2), 4000)
        frac_e2 = np.mean(draws[:, 1] == 1.0)
        assert abs(frac_e2 - 0.75) < 3 * np.sqrt(0.25 * 0.75 / 4000)
        assert np.allclose(s.mean(), [0.25, 0.75])

    def test_discrete_support_must_fit_radius(self):
        sup = ((np.array([2.0, 0.0]), 1.0),)
        with pytest.raises(ValueError, match="radius"):
            UniqueFeatureSampler(kind="discrete", dimension=2, radius=1.0, support=sup)

    def test_discrete_probs_must_be_distribution(self):
        sup = ((np.array([1.0, 0.0]), 0.5), (np.array([0.0, 1.0]), 0.2))
        with pytest.raises(ValueError, match="distribution"):
            UniqueFeatureSampler(kind="discrete", dimension=2, radius=1.0, support=sup)


class TestGenerativeModel:
    def test_rank_deficient_G_rejected(self):
        d = build_latent_dictionary(K=2, K1=3, gamma=0.5)
        G = np.zeros((4, 3))
        G[:, 0] = [1, 0, 0, 0]
        G[:, 1] = [1, 0, 0, 0]  # duplicate column
        G[:, 2] = [0, 1, 0, 0]
        H = np.eye(4, 3)
        zero = UniqueFeatureSampler(kind="zero", dimension=0)
        with pytest.raises(RankDeficiencyError):
            GenerativeModel(latent=d, G=G, H=H, xi_sampler=zero, zeta_sampler=zero)

    def test_dictionaries_full_rank(self, mixed_gen):
        for M in (mixed_gen.G, mixed_gen.H):
            assert np.linalg.svd(M, compute_uv=False)[-1] > 1e-10


class TestSampling:
    def test_zero_kind_pair_is_pure_latent(self, separable_gen, make_rng):
        p = sample_pair(separable_gen, make_rng(0))
        v = separable_gen.latent.vectors[p.latent_index]
        assert np.allclose(p.x, separable_gen.G[:, : separable_gen.K1] @ v, atol=1e-12)
        assert np.allclose(p.y, separable_gen.H[:, : separable_gen.K1] @ v, atol=1e-12)

    def test_reconstruction_invariant(self, mixed_gen, make_rng):
        batch = sample_batch(mixed_gen, 64, make_rng(1))
        for s in batch.samples:
            v = mixed_gen.latent.vectors[s.latent_index]
            x_hat = mixed_gen.G @ np.concatenate([v, s.xi])
            y_hat = mixed_gen.H @ np.concatenate([v, s.zeta])
            assert np.linalg.norm(s.x - x_hat) < 1e-10
            assert np.linalg.norm(s.y - y_hat) < 1e-10

    def test_norm_bound_hard(self, default_gen, make_rng):
        _, _, _, xi, zeta = sample_arrays(default_gen, 20000, make_rng(2))
        R = default_gen.feature_radius
        assert np.all(np.linalg.norm(xi, axis=1) <= R + 1e-12)
        assert np.all(np.linalg.norm(zeta, axis=1) <= R + 1e-12)

    def test_latent_frequencies_match_probs(self, make_rng):
        probs = (0.5, 0.2, 0.2, 0.1)
        gen = build_generative_model(
            ModelConfig(K=4, K1=5, K2=0, K3=0, d1=5, d2=5, gamma=0.4,
                        xi_kind="zero", zeta_kind="zero", probs=probs)
        )
        n = 100000
        _, _, lat, _, _ = sample_arrays(gen, n, make_rng(3))
        for k, p in enumerate(probs):
            se = np.sqrt(p * (1 - p) / n)
            assert abs(np.mean(lat == k) - p) < 3 * se

    def test_conditional_independence_given_latent(self, make_rng):
        # cross-covariance between xi and zeta entries vanishes within class
        gen = build_generative_model(
            ModelConfig(K=2, K1=3, K2=3, K3=3, d1=6, d2=6, gamma=0.5,
                        xi_kind="ball", zeta_kind="ball", radius=1.0)
        )
        n = 100000
        _, _, lat, xi, zeta = sample_arrays(gen, n, make_rng(4))
        xi0, zeta0 = xi[lat == 0], zeta[lat == 0]
        m = len(xi0)
        cov = (xi0 - xi0.mean(0)).T @ (zeta0 - zeta0.mean(0)) / m
        prod_var = np.outer(np.var(xi0, axis=0), np.var(zeta0, axis=0))
        se = np.sqrt(prod_var / m)
        assert np.all(np.abs(cov) < 4 * se)

    def test_single_pair_batch(self, default_gen, make_rng):
        batch = sample_batch(default_gen, 1, make_rng(5))
        assert len(batch) == 1
        assert batch.X.shape == (1, default_gen.d1)

    def test_batch_order_and_size(self, default_gen, make_rng):
        batch = sample_batch(default_gen, 64, make_rng(6))
        assert len(batch.samples) == 64
        assert np.array_equal(batch.X[10], batch.samples[10].x)

    def test_positive_collision_count(self, separable_gen, make_rng):
        # birthday oracle: E[#same-latent pairs] = C(B,2) * sum_k p_k^2
        B, n_batches = 16, 3000
        probs = separable_gen.latent.probs
        expected = B * (B - 1) / 2 * float(np.sum(probs**2))
        rng = make_rng(7)
        counts = []
        for _ in range(n_batches):
            _, _, lat, _, _ = sample_arrays(separable_gen, B, rng)
            same = lat[:, None] == lat[None, :]
            counts.append((same.sum() - B) / 2)
        counts = np.array(counts)
        se = counts.std(ddof=1) / np.sqrt(n_batches)
        assert abs(counts.mean() - expected) < 4 * se

    def test_determinism(self, default_gen):
        a = sample_arrays(default_gen, 100, np.random.default_rng(42))
        b = sample_arrays(default_gen, 100, np.random.default_rng(42))
        for left, right in zip(a, b):
            assert np.array_equal(left, right)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            BatchData(samples=())


class TestConfoundModel:
    def test_zeta_frequencies(self, confound_gen, make_rng):
        n = 100000
        _, _, _, _, zeta = sample_arrays(confound_gen, n, make_rng(8))
        frac_e1 = np.mean(zeta[:, 0] == 1.0)
        se = np.sqrt((1 / 3) * (2 / 3) / n)
        assert abs(frac_e1 - 1 / 3) < 3 * se

    def test_cross_class_inner_product_above_two_thirds(self, confound_gen):
        gram = confound_gen.latent.vectors @ confound_gen.latent.vectors.T
        off = gram[~np.eye(confound_gen.K, dtype=bool)]
        assert np.max(off) > 2 / 3
        assert abs(np.max(off) - 0.8) < 1e-12

    def test_text_contains_latent_verbatim(self, confound_gen, make_rng):
        p = sample_pair(confound_gen, make_rng(9))
        K1 = confound_gen.K1
        v = confound_gen.latent.vectors[p.latent_index]
        assert np.allclose(p.y[:K1], v, atol=1e-12)
        assert p.zeta[0] in (0.0, 1.0)
        # zero padding after the [z; zeta] block
        assert np.all(p.y[K1 + confound_gen.K3 :] == 0.0)

    def test_margin_precondition(self):
        with pytest.raises(ValueError, match="margin"):
            prompt_confound_model(4, 0.4)


class TestSerialization:
    def test_model_config_roundtrip(self, tmp_path):
        cfg = ModelConfig(K=4, K1=5, gamma=0.3, probs=(0.4, 0.3, 0.2, 0.1),
                          zeta_kind="discrete",
                          zeta_support=(((1.0, 0.0, 0.0, 0.0), 0.5), ((0.0, 1.0, 0.0, 0.0), 0.5)))
        path = tmp_path / "model.json"
        save_model_config(cfg, path)
        assert load_model_config(path) == cfg
        assert model_config_from_dict(model_config_to_dict(cfg)) == cfg

    def test_sample_dump_csv(self, default_gen, make_rng, tmp_path):
        batch = sample_batch(default_gen, 5, make_rng(10))
        path = tmp_path / "samples.csv"
        dump_samples_csv(batch, path)
        lines = path.read_text().strip().split("\n")
        header = lines[0].split(",")
        assert header[:2] == ["sample_id", "latent_index"]
        assert header[2] == "x_0"
        assert f"x_{default_gen.d1 - 1}" in header
        assert f"y_{default_gen.d2 - 1}" == header[-1]
        assert len(lines) == 6
        row = lines[3].split(",")
        assert float(row[2]) == batch.X[2][0]
