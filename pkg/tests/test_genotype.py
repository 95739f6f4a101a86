import numpy as np
import pytest

from biotune import (
    BlockSpec,
    ConfigurationError,
    Genotype,
    as_genotype,
    decode,
    importance_weights,
    selection_mask,
    trainable_fraction,
)

# Frozen oracle values, computed independently with 50-digit mpmath powers.
WEIGHT_AT_075 = 3.1622776601683795
WEIGHT_AT_08 = 3.9810717055349727
RATE_BLOCK0 = 0.0039810717055349725


def spec_of(block_count, rate=0.001):
    return BlockSpec(block_count=block_count, base_rates=np.full(block_count, rate))


class TestGenotype:
    def test_rejects_out_of_range_genes(self):
        with pytest.raises(ConfigurationError):
            Genotype(np.array([0.2, 1.2, 0.5]))
        with pytest.raises(ConfigurationError):
            Genotype(np.array([-0.1, 0.3, 0.5]))

    def test_rejects_non_finite_and_too_short(self):
        with pytest.raises(ConfigurationError):
            Genotype(np.array([0.2, np.nan, 0.5]))
        with pytest.raises(ConfigurationError):
            Genotype(np.array([0.5]))

    def test_genes_are_immutable(self):
        g = as_genotype([0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            g.genes[0] = 0.9


class TestSelectionMask:
    def test_below_threshold_freezes(self):
        assert selection_mask([0.3, 0.5]).tolist() == [0]

    def test_boundary_is_inclusive(self):
        # gene equal to the threshold freezes the block
        assert selection_mask([0.5, 0.5]).tolist() == [0]

    def test_positive_gene_beats_zero_threshold(self):
        assert selection_mask([0.9, 0.0]).tolist() == [1]

    def test_threshold_gene_not_in_output(self):
        assert selection_mask([0.1, 0.9, 0.4, 0.2]).shape == (3,)


class TestImportanceWeights:
    def test_midpoint_is_identity(self):
        assert importance_weights([0.5, 0.0])[0] == pytest.approx(1.0, abs=1e-12)

    def test_endpoints_span_two_decades(self):
        assert importance_weights([1.0, 0.0])[0] == pytest.approx(10.0, abs=1e-12)
        assert importance_weights([0.0, 0.0])[0] == pytest.approx(0.1, abs=1e-12)

    def test_against_arbitrary_precision_oracle(self):
        assert importance_weights([0.75, 0.0])[0] == pytest.approx(WEIGHT_AT_075, abs=1e-14)

    def test_range_property(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            genes = rng.uniform(0, 1, size=rng.integers(2, 25))
            w = importance_weights(genes)
            assert np.all(w >= 0.1 - 1e-12) and np.all(w <= 10.0 + 1e-12)

    def test_symmetry_product_is_one(self):
        rng = np.random.default_rng(8)
        genes = rng.uniform(0, 1, size=50)
        flipped = 1.0 - genes
        w = importance_weights(np.append(genes, 0.5))
        w_flipped = importance_weights(np.append(flipped, 0.5))
        assert np.allclose(w * w_flipped, 1.0, atol=1e-12, rtol=0)


class TestDecode:
    def test_hand_composed_example(self):
        config = decode([0.8, 0.2, 0.5], spec_of(2))
        assert config.mask.tolist() == [1, 0]
        assert config.weights[0] == pytest.approx(WEIGHT_AT_08, abs=1e-14)
        assert config.rates[0] == pytest.approx(RATE_BLOCK0, abs=1e-15)
        assert config.rates[1] == 0.0
        assert config.eta[1] == 0.0

    def test_all_genes_at_threshold_freezes_everything(self):
        config = decode([0.5, 0.5, 0.5], spec_of(2))
        assert config.mask.tolist() == [0, 0]
        assert np.all(config.rates == 0.0)

    def test_unit_base_rates_make_rates_equal_weights(self):
        genes = [0.9, 0.6, 0.0]
        config = decode(genes, spec_of(2, rate=1.0))
        assert np.array_equal(config.rates, config.weights)

    def test_length_mismatch_is_configuration_error(self):
        with pytest.raises(ConfigurationError):
            decode([0.1, 0.2, 0.3, 0.4], spec_of(2))

    def test_pure_and_bitwise_deterministic(self):
        g = as_genotype([0.81, 0.17, 0.44, 0.3])
        spec = spec_of(3, rate=0.01)
        a, b = decode(g, spec), decode(g, spec)
        assert a.rates.tobytes() == b.rates.tobytes()
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_invariants_on_random_genotypes(self):
        rng = np.random.default_rng(42)
        spec = spec_of(6, rate=0.003)
        for _ in range(300):
            genes = rng.uniform(0, 1, size=7)
            config = decode(genes, spec)
            assert np.array_equal(config.eta, config.mask * config.weights)
            assert np.array_equal(config.rates, config.eta * spec.base_rates)
            assert np.all(config.rates[config.mask == 0] == 0.0)
            selected = config.mask == 1
            assert np.all(config.weights[selected] >= 0.1 - 1e-12)
            assert np.all(config.weights[selected] <= 10.0 + 1e-12)
            # mask/threshold consistency
            assert np.array_equal(config.mask == 1, genes[:-1] > genes[-1])

    def test_monotonicity_in_single_gene(self):
        spec = spec_of(3)
        rng = np.random.default_rng(11)
        for _ in range(100):
            genes = rng.uniform(0, 1, size=4)
            lo, hi = sorted(rng.uniform(0, 1, size=2))
            g_lo, g_hi = genes.copy(), genes.copy()
            g_lo[1], g_hi[1] = lo, hi
            eta_lo = decode(g_lo, spec).eta[1]
            eta_hi = decode(g_hi, spec).eta[1]
            assert eta_hi >= eta_lo


class TestTrainableFraction:
    def test_all_unfrozen_is_one(self):
        config = decode([0.9, 0.9, 0.1], spec_of(2))
        assert trainable_fraction(config, [10, 20]) == 1.0

    def test_all_frozen_is_zero(self):
        config = decode([0.1, 0.1, 0.9], spec_of(2))
        assert trainable_fraction(config, [10, 20]) == 0.0

    def test_weighted_by_param_counts(self):
        # oracle: manual sum -> 700 / 1000
        config = decode([0.2, 0.8, 0.5], spec_of(2))
        assert config.mask.tolist() == [0, 1]
        assert trainable_fraction(config, [300, 700]) == pytest.approx(0.7)

    def test_zero_total_params_rejected(self):
        config = decode([0.9, 0.9, 0.1], spec_of(2))
        with pytest.raises(ConfigurationError):
            trainable_fraction(config, [0, 0])


class TestBlockSpec:
    def test_rejects_nonpositive_base_rates(self):
        with pytest.raises(ConfigurationError):
            BlockSpec(block_count=2, base_rates=np.array([0.001, 0.0]))

    def test_rejects_wrong_name_count(self):
        with pytest.raises(ConfigurationError):
            BlockSpec(block_count=2, base_rates=np.array([0.1, 0.1]), block_names=("a",))

    def test_default_names_generated(self):
        spec = BlockSpec(block_count=3, base_rates=np.array([0.1, 0.1, 0.1]))
        assert spec.block_names == ("block0", "block1", "block2")
        assert spec.genotype_length == 4
