import csv
import math
import os

import numpy as np
import pytest

from app.envgen.lattice import distance_field
from app.errors import ConfigurationError, ContractError, LabelingError, TrainingDivergedError
from app.grad.tensor import Tensor, parameter
from app.policy.policies import make_policy
from app.sim.types import Action, Pose
from app.tools.storage import ArtifactStore
from app.train import trainer as trainer_module
from app.train.check import check_gradients
from app.train.labels import batch_loss, distance_reductions, good_actions, imitation_loss, step_losses
from app.train.trainer import LAST_GOOD_CHECKPOINT, Trainer, batch_seeds, episode_gradients, reduce_gradients

# cell (20, 20) has its center at (4.1, 4.1)
CENTER = (4.1, 4.1)


class TestGoodActions:
    @pytest.fixture
    def field(self, empty_world):
        return distance_field(empty_world, (30, 20))

    def test_goal_straight_ahead(self, empty_world, field):
        assert good_actions(empty_world, Pose(*CENTER, 0.0), field) == {Action.FORWARD}

    def test_goal_behind(self, empty_world, field):
        good = good_actions(empty_world, Pose(*CENTER, 180.0), field)
        assert good == {Action.STAY, Action.ROTATE_LEFT, Action.ROTATE_RIGHT}

    def test_at_the_goal_every_staying_action_is_good(self, empty_world, field):
        good = good_actions(empty_world, Pose(6.1, 4.1, 0.0), field)
        assert good == {Action.STAY, Action.ROTATE_LEFT, Action.ROTATE_RIGHT}

    def test_stay_is_good_exactly_when_forward_loses_ground(self, empty_world, field):
        for theta in range(0, 360, 30):
            pose = Pose(*CENTER, float(theta))
            forward = distance_reductions(empty_world, pose, field)[Action.FORWARD]
            assert (Action.STAY in good_actions(empty_world, pose, field)) == (forward < 0), theta

    def test_nothing_beats_forward(self, empty_world, field):
        for theta in range(0, 360, 30):
            pose = Pose(*CENTER, float(theta))
            reductions = distance_reductions(empty_world, pose, field)
            if max(reductions.values()) == reductions[Action.FORWARD]:
                assert good_actions(empty_world, pose, field) == {Action.FORWARD}

    def test_unreachable_pose(self, walled_world):
        field = distance_field(walled_world, (10, 20))
        with pytest.raises(LabelingError):
            good_actions(walled_world, Pose(7.1, 4.1, 0.0), field)


class TestLoss:
    def test_closed_forms(self):
        logits = [Tensor(np.zeros(4))] * 3
        good = [
            frozenset({Action.FORWARD}),
            frozenset({Action.ROTATE_LEFT, Action.ROTATE_RIGHT}),
            frozenset(Action),
        ]
        losses = step_losses(logits, good).data
        assert losses == pytest.approx([math.log(4), math.log(2), 0.0], abs=1e-5)
        assert imitation_loss(logits, good).item() == pytest.approx((math.log(4) + math.log(2)) / 3, abs=1e-5)

    def test_gradient_moves_mass_onto_good_actions(self):
        logits = parameter(np.zeros(4), "logits")
        imitation_loss([logits], [frozenset({Action.FORWARD})]).backward()
        assert logits.grad[int(Action.FORWARD)] == pytest.approx(-0.75, abs=1e-6)
        assert logits.grad[int(Action.STAY)] == pytest.approx(0.25, abs=1e-6)

    def test_confident_correct_logits_cost_nothing(self):
        logits = Tensor(np.array([-50.0, -50.0, -50.0, 50.0]))
        assert imitation_loss([logits], [frozenset({Action.FORWARD})]).item() == pytest.approx(0.0, abs=1e-6)

    def test_malformed_inputs(self):
        logits = [Tensor(np.zeros(4))]
        with pytest.raises(ContractError):
            step_losses(logits, [frozenset()])
        with pytest.raises(ContractError):
            step_losses(logits, [frozenset({Action.STAY})] * 2)
        with pytest.raises(ContractError):
            step_losses([], [])
        with pytest.raises(ContractError):
            batch_loss([])

    def test_batch_loss_is_the_mean(self):
        parts = [Tensor(np.array(1.0)), Tensor(np.array(3.0))]
        assert batch_loss(parts).item() == pytest.approx(2.0)


class TestTrainerPieces:
    def test_batch_seeds_are_train_seeds(self, tiny_config):
        seeds = batch_seeds(tiny_config, 0)
        assert len(seeds) == tiny_config.trainer.batch
        train = tiny_config.seeds.train
        assert all(train.start <= w <= train.end for w, _ in seeds)
        assert seeds == batch_seeds(tiny_config, 0)
        assert seeds != batch_seeds(tiny_config, 1)

    def test_reduce_skips_discarded_episodes(self):
        a = trainer_module.EpisodeGradients(loss=1.0, grads=[np.ones(2)], steps=3)
        b = trainer_module.EpisodeGradients(loss=3.0, grads=[np.zeros(2)], steps=3)
        grads, loss = reduce_gradients([a, None, b])
        assert loss == pytest.approx(2.0)
        assert np.allclose(grads[0], 0.5)
        assert reduce_gradients([None])[0] is None

    def test_episode_gradients_cover_the_parameters(self, tiny_config):
        policy = make_policy(tiny_config)
        result = episode_gradients(tiny_config, policy, 0, 11)
        assert result is not None
        assert result.steps == tiny_config.eval.horizon
        assert len(result.grads) == len(policy.named_parameters())
        assert math.isfinite(result.loss) and result.loss >= 0


class TestTrainer:
    def _train(self, config, root):
        store = ArtifactStore(str(root)).open()
        trainer = Trainer(config, store)
        return trainer, trainer.run()

    def test_tiny_run_writes_checkpoints_and_metrics(self, tiny_config, tmp_path):
        trainer, path = self._train(tiny_config, tmp_path / "a")
        assert os.path.isdir(path)
        assert os.path.isdir(tmp_path / "a" / "checkpoints" / "iter_000001")
        assert os.path.isdir(tmp_path / "a" / "checkpoints" / "iter_000002")

        with open(tmp_path / "a" / "metrics.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [r["iteration"] for r in rows] == ["1", "2"]
        assert set(rows[0]) == set(trainer_module.METRICS_FIELDS)

        restored = make_policy(tiny_config, seed=99)
        metadata = restored.load(path)
        assert metadata["iteration"] == 2
        assert metadata["task"] == "following"
        for (name, p), (_, q) in zip(trainer.policy.named_parameters(), restored.named_parameters()):
            assert p.data.tobytes() == q.data.tobytes(), name

    def test_single_worker_runs_are_reproducible(self, tiny_config, tmp_path):
        first, _ = self._train(tiny_config, tmp_path / "a")
        second, _ = self._train(tiny_config, tmp_path / "b")
        for (name, p), (_, q) in zip(first.policy.named_parameters(), second.policy.named_parameters()):
            assert np.array_equal(p.data, q.data), name

    def test_training_changes_the_parameters(self, tiny_config, tmp_path):
        initial = [p.data.copy() for _, p in make_policy(tiny_config).named_parameters()]
        trainer, _ = self._train(tiny_config, tmp_path)
        assert any(not np.array_equal(a, p.data) for a, (_, p) in zip(initial, trainer.policy.named_parameters()))

    def test_open_loop_cannot_be_trained(self, tiny_config, tmp_path):
        config = tiny_config.with_overrides({"policy.kind": "open_loop"})
        with pytest.raises(ConfigurationError):
            Trainer(config, ArtifactStore(str(tmp_path)).open())

    def test_divergence_keeps_the_last_good_parameters(self, tiny_config, tmp_path, monkeypatch):
        real = trainer_module.reduce_gradients

        def poisoned(results):
            grads, _ = real(results)
            return grads, float("nan")

        monkeypatch.setattr(trainer_module, "reduce_gradients", poisoned)
        store = ArtifactStore(str(tmp_path)).open()
        trainer = Trainer(tiny_config, store)
        initial = [p.data.copy() for p in trainer.params]
        with pytest.raises(TrainingDivergedError, match="last good checkpoint"):
            trainer.run()
        assert store.exists(LAST_GOOD_CHECKPOINT)
        assert all(np.array_equal(a, p.data) for a, p in zip(initial, trainer.params))


@pytest.mark.slow
def test_controller_gradients_match_finite_differences(tiny_config):
    report = check_gradients(tiny_config, np.float64)
    assert len(report.max_rel_error) == len(make_policy(tiny_config).named_parameters())
    assert report.passed(1e-4), "\n".join(report.lines())
