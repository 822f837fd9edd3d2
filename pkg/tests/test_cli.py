import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mvkoopman import cli
from mvkoopman.core import PairDataSet, read_mvmp

DETERMINISTIC = ("config.json", "ips_meta.json", "measure_path.mvmp", "pairs.csv",
                 "spectrum.json", "spectrum_pf.json", "eigenfunctions.csv",
                 "eigenfunctions_pf.csv", "bench.json", "matrix_K.npy", "matrix_G.npy",
                 "sweep.csv", "sweep.json")


def run(*argv):
    return cli.main([str(a) for a in argv])


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name in DETERMINISTIC}


@pytest.mark.parametrize("cmd", [[], ["ips"], ["decoupled"], ["edmd"], ["sweep"], ["bench"]])
def test_help_exits_zero(cmd):
    proc = subprocess.run([sys.executable, "-m", "mvkoopman", *cmd, "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "usage" in proc.stdout


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as err:
        run("ips", "--no-such-flag")
    assert err.value.code == 2


def test_bad_config_exits_two(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ips": {"particles": -3}}))
    assert run("ips", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 2
    cfg.write_text("{not json")
    assert run("ips", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("ips", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 2


def test_ips_defaults_and_config_echo(tmp_path):
    out = tmp_path / "ips"
    assert run("ips", "--model", "cormier", "--particles", 200, "--out", out, "--quiet") == 0
    path = read_mvmp(out / "measure_path.mvmp")
    assert len(path) == 51  # h = 0.1, horizon 5
    echo = json.loads((out / "config.json").read_text())
    assert echo["ips"] == {"particles": 200, "step": 0.1, "horizon": 5.0}
    assert echo["model"]["name"] == "cormier" and echo["seed"] == 0
    assert "threads" not in json.dumps(echo)


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ips": {"particles": 300, "horizon": 1.0}, "seed": 5}))
    out = tmp_path / "o"
    assert run("ips", "--config", cfg, "--particles", 40, "--out", out, "--quiet") == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["ips"]["particles"] == 40 and echo["ips"]["horizon"] == 1.0 and echo["seed"] == 5


def test_zero_noise_zero_drift(tmp_path):
    out = tmp_path / "o"
    assert run("ips", "--model", "ou", "--param", "a=0", "--param", "sigma=0",
               "--particles", 10, "--horizon", 1, "--out", out, "--quiet") == 0
    snaps = read_mvmp(out / "measure_path.mvmp").snapshots
    assert all(np.array_equal(s, snaps[0]) for s in snaps)


def test_decoupled_single_row(tmp_path):
    out = tmp_path / "o"
    assert run("ips", "--particles", 20, "--horizon", 1, "--out", out, "--quiet") == 0
    assert run("decoupled", "--path", out / "measure_path.mvmp", "--trajectories", 1,
               "--out", out, "--quiet") == 0
    assert len((out / "pairs.csv").read_text().splitlines()) == 2


def test_decoupled_path_too_short(tmp_path):
    out = tmp_path / "o"
    run("ips", "--particles", 20, "--horizon", 0.5, "--out", out, "--quiet")
    code = run("decoupled", "--path", out / "measure_path.mvmp",
               "--lag", 1.0, "--out", out, "--quiet")
    assert code == 2


def test_kuramoto_circle_decoupled(tmp_path):
    out = tmp_path / "o"
    cfg = tmp_path / "c.json"
    from mvkoopman.benchmarks import recipe
    cfg.write_text(json.dumps(recipe("kuramoto-circle")))
    assert run("ips", "--config", cfg, "--out", out, "--quiet") == 0
    assert run("decoupled", "--config", cfg, "--path", out / "measure_path.mvmp",
               "--out", out, "--quiet") == 0
    data = PairDataSet.load_csv(out / "pairs.csv", 1.0)
    assert data.count == 5000
    both = np.concatenate([data.xi, data.x_T])
    assert both.min() >= 0 and both.max() < 2 * math.pi


def test_edmd_identity_dataset(tmp_path):
    x = np.random.default_rng(0).uniform(0, 1, (100, 1))
    PairDataSet(x, x, 0.5).save_csv(tmp_path / "pairs.csv")
    out = tmp_path / "o"
    code = run("edmd", "--data", tmp_path / "pairs.csv", "--set", "dictionary={\"kind\": \"indicator1d\", \"n\": 10}",
               "--n-eig", 4, "--out", out, "--save-matrices")
    assert code == 0
    spectrum = json.loads((out / "spectrum.json").read_text())
    assert spectrum["operator"] == "koopman" and spectrum["N"] == 10 and spectrum["M"] == 100
    for ev in spectrum["eigenvalues"]:
        assert ev["re"] == pytest.approx(1.0) and ev["im"] == pytest.approx(0.0)
    header = (out / "eigenfunctions.csv").read_text().splitlines()[0]
    assert header.startswith("x_1,f1_re,f1_im")
    assert (out / "matrix_K.npy").exists()


def test_edmd_singular_exits_four(tmp_path):
    x = np.zeros((10, 1))
    PairDataSet(x, x, 0.5).save_csv(tmp_path / "pairs.csv")
    code = run("edmd", "--data", tmp_path / "pairs.csv",
               "--set", "dictionary={\"kind\": \"monomial\", \"max_order\": 2}", "--out", tmp_path / "o")
    assert code == 4


def test_model_blowup_exits_three(tmp_path):
    code = run("ips", "--model", "ou", "--param", "a=-1e308", "--particles", 4,
               "--horizon", 1, "--out", tmp_path / "o", "--quiet")
    assert code == 3


def test_ips_data_flag(tmp_path, caplog):
    out = tmp_path / "o"
    run("ips", "--particles", 500, "--horizon", 1, "--out", out, "--quiet")
    code = run("edmd", "--from-path", out / "measure_path.mvmp", "--lag", 0.5, "--out", out)
    assert code == 0
    assert "dependent" in caplog.text


def test_cormier_pipeline(tmp_path):
    out = tmp_path / "c"
    assert run("bench", "cormier", "--out", out, "--quiet") == 0
    lam = json.loads((out / "spectrum.json").read_text())["eigenvalues"]
    assert 0.55 <= lam[1]["re"] <= 0.66


def test_circle_pipeline(tmp_path):
    out = tmp_path / "k"
    assert run("bench", "kuramoto-circle", "--out", out, "--quiet") == 0
    lam = json.loads((out / "spectrum.json").read_text())["eigenvalues"]
    assert abs(complex(lam[2]["re"], lam[2]["im"])) < 0.15


def test_sweep_gram(tmp_path):
    out = tmp_path / "g"
    assert run("sweep", "gram", "--out", out) == 0
    js = json.loads((out / "sweep.json").read_text())
    assert -0.65 <= js["slope"] <= -0.35
    assert len((out / "sweep.csv").read_text().splitlines()) == 5


def test_sweep_strong_ou(tmp_path):
    out = tmp_path / "s"
    assert run("sweep", "strong", "--model", "ou", "--out", out) == 0
    assert json.loads((out / "sweep.json").read_text())["slope"] >= 0.85


def test_sweep_exit_code_reflects_window(tmp_path):
    out = tmp_path / "p"
    code = run("sweep", "particles", "--set", "ips.horizon=0.5",
               "--set", "sweep.values=[20, 40, 80]", "--set", "sweep.n_seeds=3",
               "--set", "sweep.window=[-100, 100]", "--out", out)
    assert code == 0
    code = run("sweep", "particles", "--set", "ips.horizon=0.5", "--set", "sweep.values=[20, 40, 80]",
               "--set", "sweep.n_seeds=3", "--set", "sweep.window=[5, 6]", "--out", out)
    assert code == 1


@pytest.mark.parametrize("threads", [2, 8])
def test_bench_byte_identical_across_threads(tmp_path, monkeypatch, threads):
    import mvkoopman._parallel as par
    monkeypatch.setattr(par, "CHUNK_ROWS", 512)
    args = ["--set", "ips.particles=3000", "--set", "decoupled.trajectories=3000", "--quiet",
            "--save-matrices"]
    out = tmp_path / "run"
    assert run("bench", "cormier", "--out", out, "--threads", 1, *args) == 0
    a = _files(out)
    assert run("bench", "cormier", "--out", out, "--threads", threads, *args) == 0
    assert len(a) >= 10 and a == _files(out)


def test_threads_from_environment(tmp_path, monkeypatch):
    import mvkoopman._parallel as par
    monkeypatch.setattr(par, "CHUNK_ROWS", 256)
    run("ips", "--particles", 1000, "--horizon", 1, "--out", tmp_path, "--quiet")
    a = _files(tmp_path)
    monkeypatch.setenv("MVK_THREADS", "8")
    run("ips", "--particles", 1000, "--horizon", 1, "--out", tmp_path, "--quiet")
    assert a == _files(tmp_path)


def test_sweep_metric_option(tmp_path):
    base = ["sweep", "particles", "--set", "ips.horizon=0.5", "--set", "sweep.values=[20, 40, 80]",
            "--set", "sweep.n_seeds=3", "--set", "sweep.window=[-100, 100]"]
    assert run(*base, "--set", 'sweep.metric="w2"', "--out", tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "sweep.json").read_text())["metric"] == "w2"
    assert run(*base, "--out", tmp_path / "b") == 0
    assert json.loads((tmp_path / "b" / "sweep.json").read_text())["metric"] == "w2_squared"
    assert run(*base, "--set", "sweep.metric=w1", "--out", tmp_path / "c") == 2
