import numpy as np
import pytest

from ccspnet import data, harness
from ccspnet.errors import ConfigError, DataError
from ccspnet.model import ModelConfig


def fast_config(**overrides):
    base = dict(epochs=2, batch_size=400, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def small_dataset():
    cfg = data.SynthConfig(n_subjects=3, trials_per_class=10, n_channels=8,
                           seed=5)
    return data.preprocess(data.synthesize(cfg))


class TestRunSd:
    def test_one_entry_per_subject_in_range(self, small_dataset):
        result = harness.run_sd(small_dataset, fast_config())
        assert result.subject_ids == small_dataset.subjects()
        assert all(0.0 <= a <= 100.0 for a in result.accuracies)
        assert result.approach == "SD"
        assert result.wall_time_s > 0

    def test_smoke_accuracy_on_separable_data(self, small_dataset):
        result = harness.run_sd(small_dataset, fast_config(epochs=3))
        assert result.mean() >= 60.0

    def test_seed_determinism(self, small_dataset):
        a = harness.run_sd(small_dataset, fast_config(seed=4))
        b = harness.run_sd(small_dataset, fast_config(seed=4))
        assert a.accuracies == b.accuracies

    def test_models_are_finalized_per_subject(self, small_dataset):
        result = harness.run_sd(small_dataset, fast_config())
        assert sorted(result.models) == result.subject_ids
        assert all(net.finalized for net in result.models.values())


class TestRunLoso:
    def test_fold_structure(self, small_dataset):
        result = harness.run_loso(small_dataset, fast_config(), "offline")
        assert result.approach == "SI-offline"
        assert result.subject_ids == small_dataset.subjects()

    def test_worker_pool_matches_serial(self, small_dataset):
        serial = harness.run_loso(small_dataset, fast_config(), "online", jobs=1)
        pooled = harness.run_loso(small_dataset, fast_config(), "online", jobs=3)
        assert serial.accuracies == pooled.accuracies

    def test_subject_order_does_not_change_folds(self, small_dataset):
        base = harness.run_sd(small_dataset, fast_config())
        # rebuild the set with whole-subject blocks in reverse order
        chunks = [np.where(small_dataset.subject_ids == sid)[0]
                  for sid in reversed(small_dataset.subjects())]
        shuffled = small_dataset.select(np.concatenate(chunks))
        again = harness.run_sd(shuffled, fast_config())
        assert base.subject_ids == again.subject_ids
        assert base.accuracies == again.accuracies

    def test_fold_seeds_are_order_independent(self):
        assert harness.fold_seed(7, 3) == harness.fold_seed(7, 3)
        assert harness.fold_seed(7, 3) != harness.fold_seed(7, 4)
        assert harness.fold_seed(7, 3) != harness.fold_seed(8, 3)


class TestRunAblation:
    @pytest.mark.parametrize("component", ["wkcnn", "lda"])
    def test_ablated_runs_complete(self, small_dataset, component):
        result = harness.run_ablation(small_dataset, fast_config(), component)
        assert result.ablation == component
        assert len(result.accuracies) == 3

    def test_unknown_component_rejected(self, small_dataset):
        with pytest.raises(ConfigError):
            harness.run_ablation(small_dataset, fast_config(), "dropout")


class TestSubjectSweep:
    def test_sweep_points(self):
        synth = data.SynthConfig(trials_per_class=10, n_channels=8, seed=6)
        points = harness.run_subject_sweep(fast_config(), synth, [1, 2])
        assert [n for n, _ in points] == [1, 2]
        assert all(0.0 <= acc <= 100.0 for _, acc in points)


class TestCsvAndSummary:
    def test_round_trip(self, small_dataset, tmp_path):
        result = harness.run_sd(small_dataset, fast_config())
        path = tmp_path / "results.csv"
        harness.write_results_csv(path, result)
        rows = harness.read_results_csv(path)
        assert [r["subject_id"] for r in rows] == result.subject_ids
        assert [r["accuracy"] for r in rows] == pytest.approx(result.accuracies,
                                                              abs=1e-4)
        assert {r["approach"] for r in rows} == {"SD"}
        assert {r["ablation"] for r in rows} == {"none"}

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataError):
            harness.read_results_csv(path)

    def test_summary_fields(self, small_dataset):
        result = harness.run_sd(small_dataset, fast_config())
        text = harness.summary_text(result, timestamp="2026-01-01T00:00:00")
        assert "mean accuracy:" in text
        assert "generated: 2026-01-01T00:00:00" in text
        # timestamp only appears when provided
        assert "generated" not in harness.summary_text(result)
