import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdag import linalg, synth


class TestSampleErDag:
    def test_expected_edge_count_monte_carlo(self):
        counts = [synth.sample_er_dag(10, 1, seed=s).sum() for s in range(1000)]
        assert abs(np.mean(counts) - 10.0) <= 0.5

    def test_er4_edge_probability(self):
        # ER4 at d=10: p = 40/45, so nearly complete in the sampled order
        counts = [synth.sample_er_dag(10, 4, seed=s).sum() for s in range(300)]
        assert abs(np.mean(counts) - 40.0) <= 1.0

    def test_infeasible_budget_rejected(self):
        with pytest.raises(ValueError, match="infeasible"):
            synth.sample_er_dag(2, 1, seed=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 12), st.integers(0, 2**32 - 1))
    def test_always_acyclic(self, d, seed):
        g = synth.sample_er_dag(d, 1, seed=seed)
        assert linalg.is_acyclic(g)
        assert not g.diagonal().any()

    def test_deterministic(self):
        a = synth.sample_er_dag(8, 2, seed=42)
        b = synth.sample_er_dag(8, 2, seed=42)
        assert np.array_equal(a, b)


class TestSimulateSem:
    def test_empty_graph_is_pure_unit_noise(self):
        gt = synth.ground_truth_for(np.zeros((4, 4), dtype=bool), "gp")
        data = synth.simulate_sem(gt, 100_000, seed=0)
        # mean se = 1/sqrt(n); var se ~ sqrt(2/n)
        assert np.abs(data.mean(axis=0)).max() <= 3 / np.sqrt(100_000)
        assert np.abs(data.var(axis=0) - 1.0).max() <= 3 * np.sqrt(2 / 100_000)

    def test_chain_correlation_detectable(self):
        g = np.zeros((2, 2), dtype=bool)
        g[0, 1] = True
        gt = synth.ground_truth_for(g, "gp")
        found = []
        for seed in range(5):
            data = synth.simulate_sem(gt, 1000, seed=seed)
            corr = abs(np.corrcoef(data[:, 0], data[:, 1])[0, 1])
            found.append(corr)
        assert max(found) > 0.15  # dependence shows up for non-degenerate draws

    def test_roots_are_independent(self):
        gt = synth.ground_truth_for(np.zeros((3, 3), dtype=bool), "gp")
        data = synth.simulate_sem(gt, 5000, seed=3)
        corr = np.corrcoef(data.T)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.abs(off).max() <= 0.05

    def test_deterministic_bitwise(self):
        g = synth.sample_er_dag(5, 1, seed=1)
        gt = synth.ground_truth_for(g, "gp")
        a = synth.simulate_sem(gt, 200, seed=9)
        b = synth.simulate_sem(gt, 200, seed=9)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("mechanism", synth.MECHANISMS)
    def test_mechanisms_produce_finite_data(self, mechanism):
        g = synth.sample_er_dag(6, 1, seed=4)
        gt = synth.ground_truth_for(g, mechanism)
        data = synth.simulate_sem(gt, 300, seed=5)
        assert data.shape == (300, 6)
        assert np.isfinite(data).all()

    def test_column_depends_only_on_ancestors(self):
        # chain 0 -> 1 -> 2 with isolated node 3: reseeding 3 leaves 0..2 alone,
        # reseeding 0 changes its descendants but never node 3
        g = np.zeros((4, 4), dtype=bool)
        g[0, 1] = g[1, 2] = True
        gt = synth.ground_truth_for(g, "gp")
        base_seeds = [11, 22, 33, 44]
        base = synth.simulate_sem(gt, 150, node_seeds=base_seeds)

        reseed_isolated = synth.simulate_sem(gt, 150, node_seeds=[11, 22, 33, 99])
        assert np.array_equal(base[:, :3], reseed_isolated[:, :3])
        assert not np.array_equal(base[:, 3], reseed_isolated[:, 3])

        reseed_root = synth.simulate_sem(gt, 150, node_seeds=[77, 22, 33, 44])
        assert np.array_equal(base[:, 3], reseed_root[:, 3])
        assert not np.array_equal(base[:, 0], reseed_root[:, 0])
        assert not np.array_equal(base[:, 1], reseed_root[:, 1])
        assert not np.array_equal(base[:, 2], reseed_root[:, 2])

    def test_noise_scale_range_option(self):
        g = np.zeros((5, 5), dtype=bool)
        gt = synth.ground_truth_for(g, "gp", noise_scale_range=(1.0, 2.0), seed=7)
        assert ((gt.noise_scale >= 1.0) & (gt.noise_scale <= 2.0)).all()
        data = synth.simulate_sem(gt, 50_000, seed=1)
        assert np.abs(data.std(axis=0) - gt.noise_scale).max() <= 0.05

    def test_kernel_is_symmetric_psd(self, rng):
        pts = rng.standard_normal((40, 3))
        k = synth.rbf_kernel(pts, pts)
        assert np.allclose(k, k.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(k + synth.BASE_JITTER * np.eye(40))
        assert eigs.min() > 0

    def test_cyclic_ground_truth_rejected(self):
        g = np.zeros((2, 2), dtype=bool)
        g[0, 1] = g[1, 0] = True
        with pytest.raises(ValueError, match="acyclic"):
            synth.ground_truth_for(g, "gp")
