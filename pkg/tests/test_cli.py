import copy
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from test_config import FULL, MINIMAL

from multigrid_video.clipbin import read_clipbin, write_clipbin
from multigrid_video.cli import THREADS_ENV, main
from multigrid_video.config import parse_config
from multigrid_video.nn.model import VideoNet
from multigrid_video.nn.optim import SgdMomentum
from multigrid_video.presets import preset_dict, preset_names
from multigrid_video.schedule import compile
from multigrid_video.synth import generate
from multigrid_video.trainer import save_training_checkpoint, train

REPO_CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(FULL))
    return path


@pytest.fixture(scope="module")
def train_dir(cfg_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "a"
    assert main(["train", "--config", str(cfg_file),
                 "--out-dir", str(out)]) == 0
    return out


class TestPlan:
    def test_preset_prints_summary(self, capsys):
        assert main(["plan", "--preset", "toy_multigrid"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("toy_multigrid:")
        assert "cost ratio" in out

    def test_two_comparable_presets(self, capsys):
        rc = main(["plan", "--preset", "toy_baseline",
                   "--preset", "toy_multigrid"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2

    def test_incomparable_presets_fail(self, capsys):
        rc = main(["plan", "--preset", "toy_baseline",
                   "--preset", "kinetics_baseline"])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_output_files(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "plan.jsonl"
        summary = tmp_path / "summary.json"
        csv_path = tmp_path / "cmp.csv"
        rc = main(["plan", "--config", str(cfg_file), "--out", str(out),
                   "--summary", str(summary), "--csv", str(csv_path)])
        assert rc == 0
        plan = compile_config(cfg_file)
        lines = out.read_text().splitlines()
        assert len(lines) == plan.total_iters
        first = json.loads(lines[0])
        assert first["iter"] == 0
        s = json.loads(summary.read_text())
        assert s["total_iters"] == plan.total_iters
        assert csv_path.read_text().startswith("plan,metric,value")
        assert capsys.readouterr().out.startswith("tiny:")

    def test_plan_jsonl_out_rejects_multiple(self, cfg_file, tmp_path, capsys):
        rc = main(["plan", "--config", str(cfg_file),
                   "--config", str(cfg_file),
                   "--out", str(tmp_path / "x.jsonl")])
        assert rc == 2
        assert "--out" in capsys.readouterr().err

    def test_no_config_fails(self, capsys):
        assert main(["plan"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_preset_fails(self, capsys):
        assert main(["plan", "--preset", "nope"]) == 2
        assert "nope" in capsys.readouterr().err


def compile_config(cfg_file):
    cfg = parse_config(json.loads(Path(cfg_file).read_text()))
    return compile(cfg.base, cfg.schedule, cfg.cycles,
                   dataset_size=cfg.dataset_size, bn_base=cfg.bn_base)


class TestTrain:
    def test_outputs(self, cfg_file, train_dir, capsys):
        names = {p.name for p in train_dir.iterdir()}
        assert names == {"plan.jsonl", "metrics.jsonl", "checkpoint.mgck",
                         "summary.json"}
        n = compile_config(cfg_file).total_iters
        summary = json.loads((train_dir / "summary.json").read_text())
        assert summary["config"] == "tiny"
        assert summary["seed"] == FULL["seed"]
        assert summary["plan"]["total_iters"] == n
        assert summary["train"]["iterations"] == n
        assert "eval" in summary
        assert 0.0 <= summary["eval"]["top1"] <= 1.0
        rows = [json.loads(l) for l in
                (train_dir / "metrics.jsonl").read_text().splitlines()]
        assert len(rows) == n
        assert all(r["wall_ms"] is None for r in rows)

    def test_deterministic_outputs(self, cfg_file, train_dir, tmp_path):
        out2 = tmp_path / "b"
        assert main(["train", "--config", str(cfg_file),
                     "--out-dir", str(out2)]) == 0
        for name in ("plan.jsonl", "metrics.jsonl", "checkpoint.mgck",
                     "summary.json"):
            assert (train_dir / name).read_bytes() == \
                (out2 / name).read_bytes(), name

    def test_seed_override_and_no_eval(self, cfg_file, tmp_path):
        out = tmp_path / "c"
        assert main(["train", "--config", str(cfg_file),
                     "--out-dir", str(out), "--seed", "42",
                     "--no-eval"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 42
        assert "eval" not in summary

    def test_timing_flag(self, cfg_file, tmp_path):
        out = tmp_path / "d"
        assert main(["train", "--config", str(cfg_file),
                     "--out-dir", str(out), "--timing", "--no-eval"]) == 0
        rows = [json.loads(l) for l in
                (out / "metrics.jsonl").read_text().splitlines()]
        assert all(r["wall_ms"] > 0 for r in rows)

    def test_resume_matches_uninterrupted(self, cfg_file, train_dir, tmp_path):
        cfg = parse_config(json.loads(cfg_file.read_text()))
        plan = compile_config(cfg_file)
        seed = cfg.seed
        cut = plan.total_iters // 2

        model = VideoNet(num_classes=cfg.train.synth.num_classes,
                         in_channels=cfg.model_in_channels,
                         widths=cfg.model_widths, seed=seed)
        opt = SgdMomentum(cfg.train.params.momentum,
                          cfg.train.params.weight_decay)
        partial = replace(plan, records=plan.records[:cut])
        train(partial, model, generate(cfg.train.synth, cfg.train.synth_seed),
              cfg.train.params, seed=seed, optimizer=opt)
        ckpt = tmp_path / "half.mgck"
        save_training_checkpoint(ckpt, model, opt, seed=seed,
                                 next_iteration=cut)

        out = tmp_path / "resumed"
        assert main(["train", "--config", str(cfg_file),
                     "--out-dir", str(out), "--resume", str(ckpt)]) == 0
        assert (out / "checkpoint.mgck").read_bytes() == \
            (train_dir / "checkpoint.mgck").read_bytes()
        rows = (out / "metrics.jsonl").read_text().splitlines()
        assert len(rows) == plan.total_iters - cut

    def test_resume_seed_mismatch_fails(self, cfg_file, train_dir, tmp_path,
                                        capsys):
        out = tmp_path / "e"
        rc = main(["train", "--config", str(cfg_file), "--out-dir", str(out),
                   "--resume", str(train_dir / "checkpoint.mgck"),
                   "--seed", "999"])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_config_without_synth_fails(self, tmp_path, capsys):
        path = tmp_path / "nosynth.json"
        path.write_text(json.dumps(MINIMAL))
        rc = main(["train", "--config", str(path),
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2
        assert "train.synth" in capsys.readouterr().err


class TestEval:
    def test_eval_checkpoint(self, cfg_file, train_dir, tmp_path, capsys):
        out = tmp_path / "eval.json"
        rc = main(["eval", "--config", str(cfg_file),
                   "--checkpoint", str(train_dir / "checkpoint.mgck"),
                   "--out", str(out)])
        assert rc == 0
        assert "top1" in capsys.readouterr().out
        payload = json.loads(out.read_text())
        assert payload["split"] == "val"
        assert payload["n_videos"] == FULL["train"]["synth"]["val_videos"]
        assert 0.0 <= payload["top1"] <= payload["topn"] <= 1.0

    def test_eval_matches_train_summary(self, cfg_file, train_dir, tmp_path):
        out = tmp_path / "eval.json"
        main(["eval", "--config", str(cfg_file),
              "--checkpoint", str(train_dir / "checkpoint.mgck"),
              "--out", str(out)])
        payload = json.loads(out.read_text())
        summary = json.loads((train_dir / "summary.json").read_text())
        for key in ("top1", "topn", "mean_loss"):
            assert payload[key] == summary["eval"][key], key

    def test_train_split_and_clip_override(self, cfg_file, train_dir,
                                           tmp_path):
        out = tmp_path / "eval.json"
        rc = main(["eval", "--config", str(cfg_file),
                   "--checkpoint", str(train_dir / "checkpoint.mgck"),
                   "--split", "train", "--n-clips", "1", "--out", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["split"] == "train"
        assert payload["n_videos"] == FULL["train"]["synth"]["num_videos"]
        assert payload["clips_per_video"] == 1

    def test_missing_checkpoint_fails(self, cfg_file, tmp_path, capsys):
        rc = main(["eval", "--config", str(cfg_file),
                   "--checkpoint", str(tmp_path / "none.mgck")])
        assert rc == 2


class TestResample:
    @pytest.fixture()
    def clip_file(self, tmp_path):
        rng = np.random.default_rng(0)
        clip = rng.normal(size=(12, 24, 20, 1)).astype(np.float32)
        path = tmp_path / "in.clb"
        write_clipbin(path, clip)
        return path

    def test_center_mode(self, clip_file, tmp_path, capsys):
        out = tmp_path / "out.clb"
        rc = main(["resample", "--input", str(clip_file),
                   "--output", str(out), "--target", "6", "12", "12"])
        assert rc == 0
        result = read_clipbin(out)
        assert result.shape == (6, 12, 12, 1)
        assert "->" in capsys.readouterr().out

    def test_random_mode_seeded(self, clip_file, tmp_path):
        outs = []
        for name, seed in (("a.clb", "3"), ("b.clb", "3"), ("c.clb", "4")):
            out = tmp_path / name
            rc = main(["resample", "--input", str(clip_file),
                       "--output", str(out), "--target", "4", "8", "8",
                       "--mode", "random", "--scale", "16",
                       "--scale-max", "20", "--t-stride-max", "2",
                       "--seed", seed])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_missing_input_fails(self, tmp_path, capsys):
        rc = main(["resample", "--input", str(tmp_path / "none.clb"),
                   "--output", str(tmp_path / "o.clb"),
                   "--target", "4", "8", "8"])
        assert rc == 2


class TestThreads:
    def test_env_var_invalid(self, monkeypatch, capsys):
        monkeypatch.setenv(THREADS_ENV, "lots")
        assert main(["plan", "--preset", "toy_baseline"]) == 2
        assert THREADS_ENV in capsys.readouterr().err

    def test_env_var_valid(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "1")
        assert main(["plan", "--preset", "toy_baseline"]) == 0

    def test_flag_beats_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "lots")
        assert main(["plan", "--preset", "toy_baseline",
                     "--threads", "1"]) == 0

    def test_nonpositive_flag_fails(self, capsys):
        assert main(["plan", "--preset", "toy_baseline",
                     "--threads", "0"]) == 2


class TestMisc:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_repo_configs_match_presets(self):
        on_disk = sorted(p.stem for p in REPO_CONFIGS.glob("*.json"))
        assert on_disk == sorted(preset_names())
        for name in preset_names():
            data = json.loads((REPO_CONFIGS / f"{name}.json").read_text())
            assert data == preset_dict(name), name

    def test_preset_dict_is_a_copy(self):
        d = preset_dict("toy_baseline")
        d["base"]["b"] = 12345
        assert preset_dict("toy_baseline")["base"]["b"] != 12345
