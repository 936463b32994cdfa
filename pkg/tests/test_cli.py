"""Command-line surface: files, exit codes, determinism, replay."""

import hashlib
import json

import numpy as np
import pytest

from geohmm.cli import (EXIT_IMPOSSIBLE, EXIT_INCONSISTENT, EXIT_INPUT,
                        EXIT_OK, main)
from geohmm.io import load_experience, load_model, save_experience, save_model
from geohmm.model import ExperienceSequence
from geohmm.simgen import LoopSpec, make_loop_model


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def loop_model_path(tmp_path):
    path = tmp_path / "loop.json"
    save_model(make_loop_model(LoopSpec()), str(path))
    return path


@pytest.fixture
def experience_path(tmp_path, loop_model_path):
    path = tmp_path / "exp.txt"
    code = main(["simulate", str(loop_model_path), "-o", str(path),
                 "-T", "300", "--seed", "11"])
    assert code == EXIT_OK
    return path


class TestSimulate:
    def test_writes_sequence_of_requested_shape(self, tmp_path,
                                                loop_model_path):
        out = tmp_path / "exp800.txt"
        code = main(["simulate", str(loop_model_path), "-o", str(out),
                     "-T", "800", "--seed", "1"])
        assert code == EXIT_OK
        seq = load_experience(str(out))
        assert len(seq) == 800
        assert seq.readings.shape == (799, 3)

    def test_length_one(self, tmp_path, loop_model_path):
        out = tmp_path / "one.txt"
        assert main(["simulate", str(loop_model_path), "-o", str(out),
                     "-T", "1"]) == EXIT_OK
        seq = load_experience(str(out))
        assert len(seq) == 1 and seq.readings.shape == (0, 3)

    def test_same_seed_identical_files(self, tmp_path, loop_model_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        main(["simulate", str(loop_model_path), "-o", str(a), "-T", "100",
              "--seed", "9"])
        main(["simulate", str(loop_model_path), "-o", str(b), "-T", "100",
              "--seed", "9"])
        assert sha(a) == sha(b)

    def test_missing_model_is_input_error(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.json"), "-o",
                     str(tmp_path / "x.txt"), "-T", "5"]) == EXIT_INPUT


class TestLearn:
    def test_square_walk_recovers_cycle(self, tmp_path):
        from square_walk_data import write_square_walk_experience
        exp = write_square_walk_experience(tmp_path / "walk.txt")
        out = tmp_path / "m.json"
        code = main(["learn", str(exp), "-o", str(out), "-n", "4",
                     "--sigma-x", "20", "--sigma-y", "20",
                     "--sigma-theta", "0.349", "--seed", "0"])
        assert code == EXIT_OK
        model = load_model(str(out))
        for i in range(4):
            assert model.A[i].argmax() == (i + 1) % 4

    def test_restart_determinism_byte_identical(self, tmp_path,
                                                experience_path):
        out1, out2 = tmp_path / "m1.json", tmp_path / "m2.json"
        argv = ["learn", str(experience_path), "-n", "16", "--restarts", "3",
                "--seed", "7", "--max-iters", "30"]
        assert main(argv + ["-o", str(out1)]) == EXIT_OK
        assert main(argv + ["-o", str(out2)]) == EXIT_OK
        assert sha(out1) == sha(out2)
        r1 = json.loads((tmp_path / "m1.json.report.json").read_text())
        r2 = json.loads((tmp_path / "m2.json.report.json").read_text())
        assert r1 == r2
        assert len(r1["runs"]) == 3

    def test_additive_output_passes_check(self, tmp_path, experience_path):
        out = tmp_path / "m.json"
        assert main(["learn", str(experience_path), "-o", str(out),
                     "-n", "16", "--constraints", "additive",
                     "--max-iters", "30"]) == EXIT_OK
        assert main(["check", str(out), "--level", "additive"]) == EXIT_OK

    def test_no_odometry_baseline(self, tmp_path, experience_path):
        out = tmp_path / "b.json"
        assert main(["learn", str(experience_path), "-o", str(out),
                     "-n", "16", "--no-odometry", "--max-iters", "15",
                     "--seed", "2"]) == EXIT_OK
        report = json.loads((tmp_path / "b.json.report.json").read_text())
        assert report["runs"][0]["iterations"] >= 1

    def test_prefix_sweep_outputs(self, tmp_path, experience_path):
        out = tmp_path / "sweep.json"
        assert main(["learn", str(experience_path), "-o", str(out),
                     "-n", "16", "--prefix-lengths", "100,200",
                     "--max-iters", "15", "--seed", "5"]) == EXIT_OK
        assert (tmp_path / "sweep.p100.model.json").exists()
        assert (tmp_path / "sweep.p200.model.json").exists()
        report = json.loads((tmp_path / "sweep.report.json").read_text())
        assert set(report["prefix_sweep"]) == {"100", "200"}

    def test_missing_n_states_is_input_error(self, tmp_path,
                                             experience_path):
        assert main(["learn", str(experience_path), "-o",
                     str(tmp_path / "m.json")]) == EXIT_INPUT

    def test_impossible_sequence_exit_code(self, tmp_path, loop_model_path,
                                           experience_path):
        # an out-of-alphabet observation makes the sequence impossible to
        # parse against the model: corrupt a reading instead so loading
        # works but the density underflows
        seq = load_experience(str(experience_path))
        readings = seq.readings.copy()
        readings[5] = [1e9, 1e9, 0.0]
        bad = ExperienceSequence(observations=seq.observations,
                                 readings=readings)
        bad_path = tmp_path / "bad.txt"
        save_experience(bad, str(bad_path))
        code = main(["learn", str(bad_path), "-o", str(tmp_path / "m.json"),
                     "--initial", str(loop_model_path), "--max-iters", "5"])
        assert code == EXIT_IMPOSSIBLE


class TestCheck:
    def test_consistent_model_exit_zero(self, loop_model_path):
        assert main(["check", str(loop_model_path)]) == EXIT_OK

    def test_violations_exit_code(self, tmp_path, loop_model_path):
        model = load_model(str(loop_model_path))
        model.relations.mu_x[0, 1] += 0.5   # break anti-symmetry
        bad = tmp_path / "bad.json"
        save_model(model, str(bad))
        assert main(["check", str(bad), "--level", "antisym"]) \
            == EXIT_INCONSISTENT

    def test_json_format(self, loop_model_path, capsys):
        assert main(["check", str(loop_model_path), "--format",
                     "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["consistent"] is True


class TestEvalKl:
    def test_self_comparison_near_zero(self, tmp_path, loop_model_path,
                                       capsys):
        assert main(["eval-kl", str(loop_model_path), str(loop_model_path),
                     "-L", "200", "-n", "4", "--format", "json",
                     "--seed", "3"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert abs(payload["value_nats_per_symbol"]) \
            <= 3 * payload["std_error"] + 1e-12

    def test_alphabet_mismatch_is_input_error(self, tmp_path,
                                              loop_model_path):
        other = make_loop_model(LoopSpec())
        small = tmp_path / "small.json"
        import numpy as np
        from geohmm.model import GeoHmm, RelationMatrix
        tiny = GeoHmm(n_states=1, obs_dims=(2,), A=np.ones((1, 1)),
                      B=(np.array([[0.5], [0.5]]),), start_state=0,
                      relations=RelationMatrix.zero(1))
        save_model(tiny, str(small))
        assert main(["eval-kl", str(loop_model_path),
                     str(small)]) == EXIT_INPUT


class TestRenderAndReplay:
    def test_render_svg(self, tmp_path, loop_model_path):
        out = tmp_path / "map.svg"
        assert main(["render", str(loop_model_path), "-o",
                     str(out)]) == EXIT_OK
        svg = out.read_text()
        assert svg.startswith("<?xml") and "<svg" in svg
        assert svg.count("<circle") == 16

    def test_replay_reproduces_outputs(self, tmp_path, loop_model_path):
        out = tmp_path / "exp.txt"
        main(["simulate", str(loop_model_path), "-o", str(out), "-T", "60",
              "--seed", "21"])
        before = sha(out)
        assert main(["replay", str(tmp_path / "exp.txt.manifest.json")]) \
            == EXIT_OK
        assert sha(out) == before

    def test_replay_rejects_non_manifest(self, tmp_path, loop_model_path):
        assert main(["replay", str(loop_model_path)]) == EXIT_INPUT

    def test_env_seed_fallback(self, tmp_path, loop_model_path, monkeypatch):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        monkeypatch.setenv("GEOHMM_SEED", "77")
        main(["simulate", str(loop_model_path), "-o", str(a), "-T", "40"])
        monkeypatch.delenv("GEOHMM_SEED")
        main(["simulate", str(loop_model_path), "-o", str(b), "-T", "40",
              "--seed", "77"])
        assert sha(a) == sha(b)


class TestEndToEndScript:
    def test_loop_script_runs_unattended(self, tmp_path):
        import os
        import subprocess
        import sys

        env = dict(os.environ, SEQS="1", RESTARTS="1", LENGTH="120",
                   GEOHMM="%s -m geohmm.cli" % sys.executable)
        proc = subprocess.run(
            ["bash", "experiments/loop.sh", str(tmp_path / "out"), "3"],
            capture_output=True, text=True, env=env, timeout=300,
            cwd=os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
        assert proc.returncode == 0, proc.stderr
        assert "KL(nats/symbol)" in proc.stdout
        assert "with" in proc.stdout and "without" in proc.stdout
        assert (tmp_path / "out" / "map_with1.svg").exists()
