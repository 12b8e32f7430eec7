import numpy as np
import pytest
from numpy.testing import assert_allclose

from icvec import estimation, model, training
from icvec.model import ScenarioConfig


def make_setup(K=2, N=4, T=32, alpha=0.5, sigma2=0.1, seed=0, orthogonal=True):
    cfg = ScenarioConfig(num_operators=K, lines_per_operator=N, training_length=T,
                         alpha=alpha, sigma2=sigma2, seed=seed)
    ch = model.synth_channel(cfg, model.substream(seed, model.STREAM_CHANNEL))
    ts = training.gen_training(cfg, model.substream(seed, model.STREAM_TRAINING))
    if orthogonal:
        ts = training.orthogonalize(ts)
    return cfg, ch, ts


def observe(cfg, ch, ts, sigma2=None, seed=None):
    s2 = cfg.sigma2 if sigma2 is None else sigma2
    rng = model.substream(cfg.seed if seed is None else seed, model.STREAM_NOISE)
    Y = ch.full_matrix @ ts.stacked
    if s2 > 0:
        Y = Y + np.sqrt(s2 / 2) * (rng.standard_normal(Y.shape)
                                   + 1j * rng.standard_normal(Y.shape))
    return Y


class TestMleCentralized:
    def test_noiseless_exact(self):
        cfg, ch, ts = make_setup()
        est = estimation.mle_centralized(observe(cfg, ch, ts, sigma2=0.0), ts)
        err = np.linalg.norm(est.full_matrix - ch.full_matrix)
        assert err / np.linalg.norm(ch.full_matrix) < 1e-10

    def test_scalar_average(self):
        ts = training.TrainingSet(per_operator=np.ones((1, 1, 4), dtype=complex))
        est = estimation.mle_centralized(2.0 * np.ones((1, 4), dtype=complex), ts)
        assert est.full_matrix[0, 0] == pytest.approx(2.0)

    def test_monte_carlo_variance_matches_formula(self):
        # per-entry error variance sigma^2/T for orthogonal training
        sigma2, T = 0.1, 64
        cfg, ch, ts = make_setup(K=1, N=2, T=T, alpha=0.3, sigma2=sigma2, seed=3)
        H = ch.full_matrix
        acc, count = 0.0, 0
        for t in range(10_000):
            Y = observe(cfg, ch, ts, seed=5000 + t)
            est = estimation.mle_centralized(Y, ts)
            acc += np.sum(np.abs(est.full_matrix - H) ** 2)
            count += H.size
        assert acc / count == pytest.approx(sigma2 / T, rel=0.05)

    def test_rank_deficient_training_rejected(self):
        bad = training.TrainingSet(per_operator=np.ones((1, 2, 8), dtype=complex))
        with pytest.raises(np.linalg.LinAlgError):
            estimation.mle_centralized(np.ones((2, 8), dtype=complex), bad)


class TestDcEstimate:
    def test_noiseless_row_group(self):
        cfg, ch, ts = make_setup()
        Y = observe(cfg, ch, ts, sigma2=0.0)
        for k in range(cfg.num_operators):
            est = estimation.dc_estimate(Y[k * 4:(k + 1) * 4], ts, k)
            assert_allclose(est.row_group(k), ch.row_group(k), atol=1e-10)

    def test_matches_centralized_rows(self):
        cfg, ch, ts = make_setup(sigma2=0.05)
        Y = observe(cfg, ch, ts)
        full = estimation.mle_centralized(Y, ts)
        N = cfg.lines_per_operator
        for k in range(cfg.num_operators):
            est = estimation.dc_estimate(Y[k * N:(k + 1) * N], ts, k)
            assert_allclose(est.row_group(k), full.row_group(k), atol=1e-12)

    def test_variance_matches_crb(self):
        sigma2 = 0.1
        cfg, ch, ts = make_setup(K=2, N=2, T=32, sigma2=sigma2, seed=9)
        bound = estimation.crb(sigma2, ts)
        acc, count = 0.0, 0
        for t in range(3000):
            Y = observe(cfg, ch, ts, seed=9000 + t)
            est = estimation.dc_estimate(Y[0:2], ts, 0)
            err = est.row_group(0) - ch.row_group(0)
            acc += np.sum(np.abs(err) ** 2)
            count += err.size
        assert acc / count == pytest.approx(bound.per_entry, rel=0.05)

    def test_grouping_guard(self):
        cfg, ch, ts = make_setup()
        est = estimation.dc_estimate(observe(cfg, ch, ts)[0:4], ts, 0)
        with pytest.raises(ValueError):
            est.column_group(0)


class TestCrb:
    def test_orthogonal_value(self):
        cfg, ch, ts = make_setup(K=2, N=4, T=64, seed=1)
        rep = estimation.crb(0.1, ts)
        assert rep.per_entry == pytest.approx(0.1 / 64, rel=1e-9)
        assert rep.trace_bound == pytest.approx(8 * 0.1 / 64, rel=1e-9)

    def test_zero_noise(self):
        cfg, ch, ts = make_setup()
        assert estimation.crb(0.0, ts).trace_bound == 0.0

    def test_doubling_t_halves_bound(self):
        _, _, t64 = make_setup(K=1, N=2, T=64, seed=2)
        _, _, t128 = make_setup(K=1, N=2, T=128, seed=2)
        b64 = estimation.crb(0.1, t64).per_entry
        b128 = estimation.crb(0.1, t128).per_entry
        assert b64 == pytest.approx(2 * b128, rel=1e-9)


class TestIcInit:
    def test_orthogonal_noiseless_exact(self):
        cfg, ch, ts = make_setup()
        Y = observe(cfg, ch, ts, sigma2=0.0)
        H11 = estimation.ic_init(Y[0:4], ts.handle(0))
        assert_allclose(H11, ch.block(0, 0), atol=1e-10)

    def test_alpha_zero_any_training(self):
        cfg, ch, ts = make_setup(alpha=0.0, orthogonal=False)
        Y = observe(cfg, ch, ts, sigma2=0.0)
        H11 = estimation.ic_init(Y[0:4], ts.handle(0))
        assert_allclose(H11, ch.block(0, 0), atol=1e-10)

    def test_random_training_bias_bounded(self):
        # self-block bias stays below the cross-correlation level times the
        # alien amplitude, with the centralized MLE as reference
        cfg, ch, ts = make_setup(K=2, N=4, T=64, alpha=0.5, sigma2=0.1,
                                 orthogonal=False, seed=21)
        Y = observe(cfg, ch, ts, sigma2=0.0)
        init = estimation.ic_init(Y[0:4], ts.handle(0))
        mle = estimation.mle_centralized(Y, ts).block(0, 0)
        rep = training.crosscorr_report(ts)
        alien_power = np.sqrt(sum(
            np.linalg.norm(ch.block(m, 0)) ** 2 for m in range(1, 2)))
        bias = np.linalg.norm(init - mle)
        assert bias <= 4 * rep.max_cross_operator * alien_power


class TestRunIcEstimation:
    def test_block_assignment(self):
        cfg, ch, ts = make_setup()
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=3)
        for k, est in enumerate(res.estimates):
            assert est.grouping == "column"
            assert est.valid[k, :].all()
            assert est.valid.sum() == cfg.num_operators
            est.column_group(k)
            with pytest.raises(ValueError):
                est.row_group(k)

    def test_orthogonal_one_exchange_suffices(self):
        cfg, ch, ts = make_setup(sigma2=0.1)
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=3)
        mle = estimation.mle_centralized(res.observations, ts)
        gap = np.linalg.norm(res.assembled.blocks - mle.blocks)
        assert gap / np.linalg.norm(mle.blocks) < 1e-10

    def test_alpha_zero_converges_immediately(self):
        cfg, ch, ts = make_setup(alpha=0.0, orthogonal=False, sigma2=0.1)
        res = estimation.run_ic_estimation(cfg, ch, training=ts,
                                           observations=ch.full_matrix @ ts.stacked,
                                           n_iterations=2)
        for k, est in enumerate(res.estimates):
            assert_allclose(est.block(k, k), ch.block(k, k), atol=1e-10)
            for m in range(cfg.num_operators):
                if m != k:
                    assert np.abs(est.block(k, m)).max() < 1e-10

    def test_replay_is_bit_identical(self):
        cfg, ch, _ = make_setup(orthogonal=False)
        a = estimation.run_ic_estimation(cfg, ch, n_iterations=4)
        b = estimation.run_ic_estimation(cfg, ch, n_iterations=4)
        np.testing.assert_array_equal(a.assembled.blocks, b.assembled.blocks)
        assert a.trace.mse_self_db == b.trace.mse_self_db
        assert a.trace.residual == b.trace.residual

    def test_terminal_equals_centralized_mle_random_training(self):
        cfg, ch, ts = make_setup(K=2, N=4, T=64, alpha=1.2, sigma2=0.1,
                                 orthogonal=False, seed=31)
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=20)
        mle = estimation.mle_centralized(res.observations, ts)
        gap = np.linalg.norm(res.assembled.blocks - mle.blocks)
        assert gap / np.linalg.norm(mle.blocks) < 1e-6

    def test_attains_crb_with_random_training(self):
        # K=2, N=10, T=128, SNR 15 dB, alpha=0.5: normalized MSE within 1 dB
        # of the CRB by iteration 5, averaged over 100 trials
        K, N, T, sigma2 = 2, 10, 128, 10 ** -1.5
        err_self = np.zeros(5)
        err_alien = np.zeros(5)
        trials = 100
        from icvec.metrics import block_error_power
        for t in range(trials):
            cfg = ScenarioConfig(num_operators=K, lines_per_operator=N,
                                 training_length=T, alpha=0.5, sigma2=sigma2,
                                 seed=1000 + t)
            ch = model.synth_channel(cfg, model.substream(cfg.seed, model.STREAM_CHANNEL))
            res = estimation.run_ic_estimation(cfg, ch, n_iterations=5,
                                               record_states=True)
            for i, blocks in enumerate(res.states):
                es, ea = block_error_power(blocks, ch)
                err_self[i] += es
                err_alien[i] += ea
        per_entry = sigma2 / T
        self_entries = K * N * N * trials
        alien_entries = K * (K - 1) * N * N * trials
        excess_self = 10 * np.log10(err_self[4] / self_entries / per_entry)
        excess_alien = 10 * np.log10(err_alien[4] / alien_entries / per_entry)
        assert excess_self < 1.0
        assert excess_alien < 1.0

    def test_early_stop(self):
        cfg, ch, ts = make_setup(sigma2=0.1)
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=20,
                                           early_stop_tol=1e-8)
        assert len(res.trace.iterations) < 20

    def test_trace_csv_schema(self):
        cfg, ch, ts = make_setup()
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=3)
        header, rows = res.trace.csv_rows()
        assert header == ["iteration", "mse_self_db", "mse_alien_db", "crb_db",
                          "residual", "msgs_sent"]
        assert len(rows) == 3
        assert [r[0] for r in rows] == [1, 2, 3]


class TestFixedPointAndMonotonicity:
    def test_mle_is_fixed_point(self):
        cfg, ch, ts = make_setup(K=2, N=3, T=24, sigma2=0.1, orthogonal=False, seed=8)
        Y = observe(cfg, ch, ts)
        mle = estimation.mle_centralized(Y, ts)
        N = cfg.lines_per_operator
        nodes = [estimation.EstimationNode(k, 2, Y[k * N:(k + 1) * N], ts.handle(k))
                 for k in range(2)]
        # seed every node with the centralized solution
        for k, node in enumerate(nodes):
            node.self_block = mle.block(k, k).copy()
            node.alien_blocks = {m: mle.block(k, m).copy() for m in node.peers}
            node.products_in = {m: mle.block(m, k) @ ts.operator(m) for m in node.peers}
        from icvec.backhaul import Protocol, run_rounds
        # round index 1: past the bootstrap asymmetry
        run_rounds(nodes, Protocol.IC_ESTIMATION, 1, start_round=1)
        after = estimation.assemble_estimates(nodes)
        assert np.abs(after.blocks - mle.blocks).max() < 1e-10

    def test_residual_monotone_orthogonal(self):
        cfg, ch, ts = make_setup(K=2, N=4, T=32, sigma2=0.1)
        res = estimation.run_ic_estimation(cfg, ch, training=ts, n_iterations=6)
        r = res.trace.residual
        for a, b in zip(r, r[1:]):
            assert b <= a + 1e-9

    def test_self_mse_below_alien_mse(self):
        # E||H_ii||^2 > E||H_ij||^2 for alpha < 1, so normalized self MSE
        # is lower at matched iterations once both block kinds have been
        # refined (the bootstrap self estimate is interference-limited)
        gaps = []
        for t in range(100):
            cfg = ScenarioConfig(num_operators=2, lines_per_operator=4,
                                 training_length=64, alpha=0.5, sigma2=10 ** -1.5,
                                 seed=4000 + t)
            ch = model.synth_channel(cfg, model.substream(cfg.seed, model.STREAM_CHANNEL))
            res = estimation.run_ic_estimation(cfg, ch, n_iterations=4)
            gaps.append(np.mean(res.trace.mse_alien_db[1:])
                        - np.mean(res.trace.mse_self_db[1:]))
        assert np.mean(gaps) > 0


class TestKnowledgeBoundaryEstimation:
    def test_node_holds_only_own_training(self):
        cfg, ch, ts = make_setup(K=3, N=3, T=32, orthogonal=False)
        Y = observe(cfg, ch, ts)
        node = estimation.EstimationNode(1, 3, Y[3:6], ts.handle(1))
        np.testing.assert_array_equal(node.X, ts.operator(1))
        assert node.X.shape == (3, 32)
        # nothing on the node references the other operators' training
        for attr in vars(node).values():
            if isinstance(attr, np.ndarray) and attr.shape == (3, 32):
                assert not np.array_equal(attr, ts.operator(0))
                assert not np.array_equal(attr, ts.operator(2))
