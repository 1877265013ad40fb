import json
import queue

import pytest

from app.core.exceptions import FogAppoError, ShapeMismatch
from app.schemas.training import ApoHyper, RunConfig
from app.services import training
from app.services.checkpoints import list_checkpoints, load_checkpoint
from app.services.dataset import generate_dataset
from app.services.training import METRICS_FILE, TRAIN_LOG_FILE, run_training


@pytest.fixture
def services(tiny_dataset_spec):
    dags, _ = generate_dataset(tiny_dataset_spec)
    return dags[:6], dags[6:9]


@pytest.fixture
def run_config(tmp_path, small_scenario):
    """Execução mínima: rollouts de 8 passos, 1 rodada a cada 16 transições"""
    def build(name="run", **overrides):
        values = dict(
            num_actors=1,
            total_steps=64,
            seed=5,
            backend="serial",
            scenario=small_scenario,
            hyper=ApoHyper(hidden_size=8, rollout_len=8, train_batch_size=16, gradient_steps=1),
            output_dir=tmp_path / name,
            eval_every=2,
        )
        values.update(overrides)
        return RunConfig(**values)
    return build


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestSerialTraining:
    """Testes para o treino no backend serial"""

    def test_budget_rounds_and_outputs(self, run_config, services):
        """64 passos com rodadas de 16 transições: 4 versões e avaliações a cada 2"""
        cfg = run_config()
        result = run_training(cfg, *services)
        assert result.env_steps == 64
        assert result.rounds == 4
        assert [m.version for m in result.metrics] == [0, 2, 4]
        assert result.final_checkpoint is not None and result.final_checkpoint.is_file()

        assert len(read_jsonl(cfg.output_dir / TRAIN_LOG_FILE)) == 4
        metrics = read_jsonl(cfg.output_dir / METRICS_FILE)
        assert [m["version"] for m in metrics] == [0, 2, 4]
        assert all(m["wall_time"] is None for m in metrics)

    def test_same_seed_same_files(self, run_config, services):
        """Duas execuções seriais com a mesma seed geram arquivos idênticos"""
        a = run_config("a")
        b = run_config("b")
        run_training(a, *services)
        run_training(b, *services)
        for name in (METRICS_FILE, TRAIN_LOG_FILE):
            assert (a.output_dir / name).read_bytes() == (b.output_dir / name).read_bytes()

    def test_max_rounds_stops_early(self, run_config, services):
        result = run_training(run_config(total_steps=10_000, max_rounds=2), *services)
        assert result.rounds == 2
        assert result.env_steps == 32

    def test_checkpoint_retention(self, run_config, services):
        cfg = run_config(checkpoint_every=1, checkpoint_keep=2)
        run_training(cfg, *services)
        assert [p.name for p in list_checkpoints(cfg.resolved_checkpoint_dir)] == [
            "ckpt_000003.json", "ckpt_000004.json",
        ]


class TestResume:
    """Testes para retomada a partir de checkpoint"""

    def test_resume_continues_version_and_steps(self, run_config, services):
        first = run_training(run_config("first"), *services)
        resumed = run_training(
            run_config("second", total_steps=128, resume_from=first.final_checkpoint), *services
        )
        assert resumed.env_steps == 128
        assert resumed.rounds == 4
        assert load_checkpoint(resumed.final_checkpoint).version == 8
        assert [m.version for m in resumed.metrics] == [4, 6, 8]

    def test_missing_checkpoint(self, run_config, services, tmp_path):
        with pytest.raises(FileNotFoundError):
            run_training(run_config(resume_from=tmp_path / "nope.json"), *services)

    def test_checkpoint_for_other_system_size(self, run_config, services, small_scenario):
        first = run_training(run_config("first"), *services)
        other = run_config("second", scenario=small_scenario.with_num_servers(6), resume_from=first.final_checkpoint)
        with pytest.raises(ShapeMismatch):
            run_training(other, *services)


class TestTrainingInputs:
    def test_needs_dataset_or_services(self, run_config):
        with pytest.raises(FogAppoError):
            run_training(run_config())

    def test_dataset_dir_must_exist(self, run_config, tmp_path):
        with pytest.raises(FogAppoError):
            run_training(run_config(dataset_dir=tmp_path / "empty"))


class TestThreadBackend:
    """Testes para o backend com um thread por ator"""

    def test_two_actors_reach_budget(self, run_config, services):
        cfg = run_config(backend="thread", num_actors=2)
        result = run_training(cfg, *services)
        assert result.env_steps >= 64
        assert result.rounds >= 1
        assert result.wall_time is not None and result.wall_time > 0
        assert load_checkpoint(result.final_checkpoint).version == result.rounds

    def test_traces_written_per_actor(self, run_config, services):
        cfg = run_config(backend="thread", num_actors=2, trace_episodes=True)
        run_training(cfg, *services)
        assert sorted(p.name for p in (cfg.output_dir / "traces").glob("*.jsonl")) == [
            "actor-0.jsonl", "actor-1.jsonl",
        ]


class ClosingQueue(queue.Queue):
    """Fila que passa a falhar como um canal fechado depois de `limit` itens entregues"""
    limit = 6

    def get(self, block=True, timeout=None):
        delivered = getattr(self, "_delivered", 0)
        if delivered >= self.limit:
            raise EOFError("canal fechado")
        item = super().get(block, timeout)
        self._delivered = delivered + 1
        return item


class TestClosedChannel:
    """Canal de experiências fechado no meio do treino"""

    def test_closed_inbox_still_writes_final_checkpoint(self, run_config, services, monkeypatch):
        """Seis batches de 8 passos: 3 rodadas, avaliação e checkpoint finais na versão 3"""
        monkeypatch.setattr(training.queue, "Queue", ClosingQueue)
        cfg = run_config(backend="thread", total_steps=10_000)
        result = run_training(cfg, *services)

        assert result.env_steps == 48
        assert result.rounds == 3
        assert result.final_checkpoint is not None and result.final_checkpoint.is_file()
        assert load_checkpoint(result.final_checkpoint).version == 3
        assert result.metrics[-1].version == 3
