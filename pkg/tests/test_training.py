import numpy as np
import pytest
from numpy.testing import assert_allclose

from icvec import model, training
from icvec.model import ScenarioConfig


def make_config(K=2, N=10, T=256, seed=0):
    return ScenarioConfig(num_operators=K, lines_per_operator=N, training_length=T,
                          alpha=0.5, sigma2=0.1, seed=seed)


class TestGenTraining:
    def test_unit_modulus_entries(self):
        ts = training.gen_training(make_config(), model.substream(0, 1))
        assert_allclose(np.abs(ts.stacked), 1.0)

    def test_rejects_short_training(self):
        with pytest.raises(ValueError):
            make_config(N=10, T=10)

    def test_cross_correlation_concentration(self):
        # O(1/sqrt(T)) concentration: max cross-operator correlation below
        # 0.25 should hold essentially always at T=256
        failures = 0
        for seed in range(50):
            ts = training.gen_training(make_config(seed=seed), model.substream(seed, 1))
            rep = training.crosscorr_report(ts)
            if rep.max_cross_operator >= 0.25:
                failures += 1
        assert failures == 0

    def test_determinism(self):
        a = training.gen_training(make_config(), model.substream(3, 1))
        b = training.gen_training(make_config(), model.substream(3, 1))
        np.testing.assert_array_equal(a.stacked, b.stacked)


class TestOrthogonalize:
    def test_exact_orthogonality(self):
        ts = training.gen_training(make_config(), model.substream(0, 1))
        ot = training.orthogonalize(ts)
        T, KN = ot.length, 20
        gram = ot.stacked @ ot.stacked.conj().T
        assert np.abs(gram - T * np.eye(KN)).max() < 1e-10 * T

    def test_cross_blocks_vanish(self):
        ts = training.gen_training(make_config(K=2, N=4, T=32), model.substream(1, 1))
        ot = training.orthogonalize(ts)
        cross = ot.operator(0) @ ot.operator(1).conj().T
        assert np.abs(cross).max() < 1e-10 * ot.length

    def test_requires_t_at_least_kn(self):
        ts = training.gen_training(make_config(K=3, N=10, T=16), model.substream(2, 1))
        with pytest.raises(ValueError):
            training.orthogonalize(ts)

    def test_idempotent_row_space(self):
        ts = training.gen_training(make_config(K=2, N=3, T=24), model.substream(4, 1))
        once = training.orthogonalize(ts)
        twice = training.orthogonalize(once)

        def projector(mat):
            q, _ = np.linalg.qr(mat.conj().T)
            return q @ q.conj().T

        assert_allclose(projector(once.stacked), projector(twice.stacked), atol=1e-9)

    def test_single_row(self):
        ts = training.gen_training(make_config(K=1, N=1, T=4), model.substream(5, 1))
        ot = training.orthogonalize(ts)
        assert np.linalg.norm(ot.stacked) ** 2 == pytest.approx(4.0)

    def test_preserves_row_power(self):
        ts = training.gen_training(make_config(K=2, N=4, T=32), model.substream(6, 1))
        ot = training.orthogonalize(ts)
        assert_allclose(np.sum(np.abs(ot.stacked) ** 2, axis=1), 32.0, rtol=1e-10)


class TestCrossCorrReport:
    def test_orthogonal_reports_zero(self):
        ts = training.orthogonalize(
            training.gen_training(make_config(K=2, N=4, T=32), model.substream(0, 1)))
        rep = training.crosscorr_report(ts)
        assert rep.max_offdiag < 1e-12

    def test_random_in_unit_interval(self):
        ts = training.gen_training(make_config(K=2, N=4, T=64), model.substream(1, 1))
        rep = training.crosscorr_report(ts)
        assert 0.0 < rep.max_offdiag < 1.0

    def test_mean_offdiag_scales_with_root_t(self):
        # doubling T shrinks the mean correlation by about 1/sqrt(2)
        ratios = []
        for seed in range(40):
            r64 = training.crosscorr_report(
                training.gen_training(make_config(K=2, N=4, T=64, seed=seed),
                                      model.substream(seed, 2)))
            r128 = training.crosscorr_report(
                training.gen_training(make_config(K=2, N=4, T=128, seed=seed),
                                      model.substream(seed, 3)))
            ratios.append(r128.mean_offdiag / r64.mean_offdiag)
        assert np.mean(ratios) == pytest.approx(1.0 / np.sqrt(2.0), rel=0.05)


class TestKnowledgeBoundary:
    def test_handle_exposes_single_operator(self):
        ts = training.gen_training(make_config(K=3, N=4, T=32), model.substream(0, 1))
        h = ts.handle(1)
        assert h.operator == 1
        np.testing.assert_array_equal(h.matrix, ts.operator(1))
        assert h.matrix.shape == (4, 32)


class TestCsvRoundTrip:
    def test_export_import(self, tmp_path):
        ts = training.gen_training(make_config(K=2, N=3, T=8), model.substream(0, 1))
        path = tmp_path / "training.csv"
        ts.to_csv(path)
        back = training.TrainingSet.from_csv(path)
        np.testing.assert_array_equal(back.per_operator, ts.per_operator)
