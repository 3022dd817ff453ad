import csv
import json
import math
import textwrap

import numpy as np
import pytest

from qtflow import checkpoint, cli, experiments
from qtflow.config import ConfigError, initial_state, load_config, parse_config
from qtflow.grid import Grid
from qtflow.qtensor import derive_constants
from qtflow.timestepper import State


def write_cfg(tmp_path, body, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


SMALL = """\
grid: {dim: 2, n: 16}
solver: {dt: 1.0e-3, t_end: 0.02, record_every: 5}
potential: {a: 1, b: 1, c: 1}
initial: {family: random_bandlimited, seed: 3, band: 3, amplitude_fraction: 0.1,
          u_amplitude: 0.05}
"""


def test_unknown_key_reports_line(tmp_path):
    p = write_cfg(tmp_path, """\
        grid: {dim: 2, n: 16}
        solver:
          dt: 1.0e-3
          tend: 1
        """)
    with pytest.raises(ConfigError, match=r"line 4.*solver\.tend"):
        load_config(p)
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("body, msg", [
    ("fluid: {a: 1}\n", "unknown section"),
    ("grid: {n: 15}\n", "even"),
    ("grid: {n: 16}\ngrid: {n: 32}\n", "duplicate"),
    ("solver: {dt: -1}\n", "dt"),
    ("solver: {dt: abc}\n", "bad value"),
    ("potential: {a: 1, b: 1, c: -1}\n", "c"),
    ("initial: {family: spiral, amplitude: 1}\n", "family"),
    ("initial: {amplitude: 0.1, amplitude_fraction: 0.1}\n", "not both"),
    ("initial: {family: from_checkpoint}\n", "path"),
    ("diagnostics: {q_list: [0.5]}\n", "q_list"),
])
def test_invalid_configs(body, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(body + ("initial: {amplitude: 0.1}\n" if "initial" not in body else ""))


def test_scientific_notation_and_defaults():
    cfg = parse_config("solver: {dt: 1e-3}\ninitial: {amplitude: 0.2}\n")
    assert cfg.dt == 1e-3 and cfg.scheme == "IMEX2" and cfg.q_list[-1] == math.inf
    assert cfg.potential.r == pytest.approx(math.sqrt(6) / 2)


def test_t_end_zero_writes_initial_record(tmp_path):
    p = write_cfg(tmp_path, SMALL.replace("t_end: 0.02", "t_end: 0"))
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(p), "--out", str(out)]) == 0
    with open(out / "run.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 2 and rows[0][0] == "t" and float(rows[1][0]) == 0.0
    assert len((out / "run.jsonl").read_text().splitlines()) == 1


def test_same_seed_gives_identical_files(tmp_path):
    p = write_cfg(tmp_path, SMALL)
    for d in ("a", "b"):
        assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / d)]) == 0
    names = sorted(f.name for f in (tmp_path / "a").iterdir())
    assert "run.csv" in names and any(n.endswith(".svg") for n in names)
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "c"),
                     "--seed", "99"]) == 0
    assert (tmp_path / "c" / "run.csv").read_bytes() != (tmp_path / "a" / "run.csv").read_bytes()


def test_decay_rejects_large_amplitude(tmp_path, capsys):
    p = write_cfg(tmp_path, SMALL.replace("amplitude_fraction: 0.1", "amplitude_fraction: 0.6"))
    assert cli.main(["decay", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "r/2" in capsys.readouterr().err


def test_cfl_abort_exit_code(tmp_path):
    p = write_cfg(tmp_path, SMALL.replace("record_every: 5", "record_every: 5, cfl: 1.0e-4"))
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_nan_abort_exit_code(tmp_path):
    body = """\
        grid: {dim: 2, n: 16}
        solver: {dt: 0.5, t_end: 50, scheme: IMEX1, cfl: 1.0e+300}
        potential: {a: 1, b: 0, c: 1.0e+6}
        initial: {family: uniaxial_mode, amplitude: 10}
        """
    p = write_cfg(tmp_path, body)
    with np.errstate(all="ignore"):
        assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 4


def test_missing_config_and_file(tmp_path):
    assert cli.main(["simulate"]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_checkpoint_round_trip(tmp_path):
    g = Grid(2, 16)
    rng = np.random.default_rng(0)
    s = State(0.25, rng.standard_normal((2,) + g.shape), rng.standard_normal((5,) + g.shape))
    params = {"n": 16, "potential": derive_constants(1, 1, 1).as_dict()}
    checkpoint.save(tmp_path / "c.npz", s, params)
    s2, p2 = checkpoint.load(tmp_path / "c.npz")
    assert s2.t == s.t and np.array_equal(s2.u, s.u) and np.array_equal(s2.q, s.q)
    assert p2 == json.loads(json.dumps(params))
    with np.load(tmp_path / "c.npz") as z:
        assert {"u0", "u1", "q11", "q12", "q13", "q22", "q23", "time"} <= set(z.files)
        assert z["q11"].dtype == np.dtype("<f8")


def test_restart_from_checkpoint(tmp_path):
    g = Grid(2, 16)
    rng = np.random.default_rng(1)
    s = State(0.0, np.zeros((2,) + g.shape), 0.1 * g.band_limit(
        rng.standard_normal((5,) + g.shape), 3))
    checkpoint.save(tmp_path / "c.npz", s, {})
    cfg = parse_config(f"grid: {{n: 16}}\ninitial: {{family: from_checkpoint, "
                       f"path: {tmp_path / 'c.npz'}}}\n")
    s0 = initial_state(cfg, g)
    assert np.array_equal(s0.q, s.q)
    with pytest.raises(ConfigError):
        initial_state(cfg, Grid(2, 32))


def test_checkpoint_missing_key(tmp_path):
    np.savez(tmp_path / "bad.npz", u0=np.zeros((4, 4)))
    with pytest.raises(ValueError):
        checkpoint.load(tmp_path / "bad.npz")


def test_periodic_checkpoints_written(tmp_path):
    p = write_cfg(tmp_path, SMALL.replace("record_every: 5", "record_every: 5, checkpoint_every: 10"))
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(p), "--out", str(out)]) == 0
    assert len(list(out.glob("run_t*.npz"))) == 2 and (out / "run_final.npz").exists()


def test_linear_oracle_config(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", "configs/linear_oracle.yaml", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["linear_oracle_error"] <= 1e-5


def test_selftest_exit_code(capsys):
    assert cli.main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_threads_from_env(monkeypatch):
    monkeypatch.setenv("QTF_THREADS", "3")
    assert experiments.threads_from_env() == 3
    assert experiments.threads_from_env(2) == 2
    monkeypatch.setenv("QTF_THREADS", "x")
    assert experiments.threads_from_env() == 1
    monkeypatch.delenv("QTF_THREADS")
    assert experiments.threads_from_env() == 1
