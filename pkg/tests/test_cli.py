import json

import numpy as np
import pytest

from reconprune.cli import main, read_ppm, write_ppm


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny datagen -> train pipeline shared by the downstream-command tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run("datagen", "--count", "12", "--test-count", "4",
               "--size", "32", "--seed", "0", "--out", str(data)) == 0
    ck = root / "ck.rpck"
    assert run("train", "--data", str(data / "train.nfgs"), "--epochs", "1",
               "--batch-size", "4", "--out", str(ck)) == 0
    return {"root": root, "data": data, "ck": ck}


# ------------------------------------------------------------------- prune


def test_prune_arithmetic_table(capsys):
    assert run("prune", "--n-tokens", "3249", "--ratio", "0.75") == 0
    out = json.loads(capsys.readouterr().out)
    assert (out["n"], out["m"], out["p"]) == (3249, 812, 0.75)


def test_prune_needs_tokens_or_checkpoint(capsys):
    assert run("prune", "--ratio", "0.5") == 2
    assert "error:" in capsys.readouterr().err


def test_prune_checkpoint_mode(workspace, capsys):
    assert run("prune", "--checkpoint", str(workspace["ck"]),
               "--data", str(workspace["data"] / "test.nfgs"),
               "--index", "1", "--ratio", "0.5") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n"] == 16 and out["m"] == 8
    assert len(out["kept_indices"]) == 8 and len(out["scores"]) == 16
    assert out["kept_indices"] == sorted(out["kept_indices"])


# ----------------------------------------------------------------- datagen


def test_datagen_repeat_byte_identical(tmp_path):
    for tag in ("a", "b"):
        assert run("datagen", "--count", "6", "--test-count", "2",
                   "--size", "32", "--seed", "7", "--out", str(tmp_path / tag)) == 0
    for name in ("train.nfgs", "test.nfgs"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_datagen_train_and_test_differ(workspace):
    train = (workspace["data"] / "train.nfgs").read_bytes()
    test = (workspace["data"] / "test.nfgs").read_bytes()
    assert train[16:] != test[16:]  # disjoint scene indices, not a reslice


# ------------------------------------------------------------------- train


def test_train_missing_data_exit_2(tmp_path, capsys):
    assert run("train", "--data", str(tmp_path / "absent.nfgs")) == 2
    assert "error:" in capsys.readouterr().err


def test_train_artifacts(workspace):
    ck = workspace["ck"]
    assert ck.exists() and ck.with_suffix(".rpck.decoder").exists()
    log_rows = [json.loads(l) for l in
                (workspace["root"] / "ck.rpck.log.jsonl").read_text().splitlines()]
    assert len(log_rows) == 1  # one epoch -> one JSON line
    side = json.loads((workspace["root"] / "ck.rpck.json").read_text())
    assert side["provenance"]["version"]
    assert side["provenance"]["config"]["epochs"] == 1


def test_train_indivisible_size_exit_2(tmp_path, capsys):
    data = tmp_path / "d"
    assert run("datagen", "--count", "4", "--test-count", "1",
               "--size", "36", "--out", str(data)) == 0
    assert run("train", "--data", str(data / "train.nfgs"),
               "--epochs", "1", "--out", str(tmp_path / "ck")) == 2
    assert "error:" in capsys.readouterr().err


# -------------------------------------------------------------------- eval


def test_eval_report(workspace, tmp_path):
    out = tmp_path / "report.json"
    assert run("eval", "--checkpoint", str(workspace["ck"]),
               "--data", str(workspace["data"] / "test.nfgs"),
               "--ratios", "0.5,0.75", "--out", str(out)) == 0
    rep = json.loads(out.read_text())
    assert set(rep["retention"]) == {"0.5", "0.75"}
    assert "reconstruction" in rep  # decoder sidecar was found
    assert rep["sample_count"] == 4


def test_eval_reports_byte_identical(workspace, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        assert run("eval", "--checkpoint", str(workspace["ck"]),
                   "--data", str(workspace["data"] / "test.nfgs"),
                   "--out", str(out)) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


# -------------------------------------------------------------------- bench


def test_bench_states_convention(capsys):
    assert run("bench", "--layers", "2", "--hidden", "8", "--intermediate", "16",
               "--heads", "2", "--visual-tokens", "10", "--ratio", "0.5") == 0
    out = json.loads(capsys.readouterr().out)
    assert "multiply-accumulate" in out["convention"]
    assert out["spec"]["retained"] == 5
    assert out["flops_unpruned"] > out["flops_pruned"] > 0


# --------------------------------------------------------------------- viz


def test_viz_emits_exactly_four_ppms(workspace, tmp_path):
    out = tmp_path / "viz"
    assert run("viz", "--checkpoint", str(workspace["ck"]),
               "--data", str(workspace["data"] / "test.nfgs"),
               "--index", "0", "--out", str(out)) == 0
    ppms = sorted(p.name for p in out.glob("*.ppm"))
    assert ppms == ["viz0000_input.ppm", "viz0000_recon_back.ppm",
                    "viz0000_recon_fore.ppm", "viz0000_saliency.ppm"]
    img = read_ppm(out / "viz0000_input.ppm")
    assert img.shape == (32, 32, 3)


def test_viz_bad_index_exit_2(workspace, tmp_path, capsys):
    assert run("viz", "--checkpoint", str(workspace["ck"]),
               "--data", str(workspace["data"] / "test.nfgs"),
               "--index", "99", "--out", str(tmp_path)) == 2
    assert "error:" in capsys.readouterr().err


def test_ppm_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = np.round(rng.uniform(size=(5, 7, 3)) * 255.0) / 255.0
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    np.testing.assert_allclose(read_ppm(path), img, atol=1e-12)


# ----------------------------------------------------------- config plumbing


def test_config_file_used_and_flags_win(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n_tokens = 100\nratio = 0.5  # half\n")
    assert run("prune", "--config", str(cfg)) == 0
    assert json.loads(capsys.readouterr().out)["m"] == 50
    assert run("prune", "--config", str(cfg), "--ratio", "0.75") == 0
    assert json.loads(capsys.readouterr().out)["m"] == 25


def test_config_file_unknown_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus=1\n")
    assert run("prune", "--config", str(cfg), "--n-tokens", "8") == 2
    assert "bogus" in capsys.readouterr().err


def test_config_file_malformed_exit_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("just a line\n")
    assert run("prune", "--config", str(cfg)) == 2
    assert "key=value" in capsys.readouterr().err


def test_unknown_flag_usage_exit_2():
    assert run("prune", "--frobnicate", "1") == 2


def test_unknown_subcommand_exit_2():
    assert run("explode") == 2
