import csv
from pathlib import Path

import pytest

from harnack.cli import main
from harnack.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CONSTANT = str(CONFIGS / "constant.toml")

SMALL = """
seed = 3
[space]
kind = "grid2d"
n = 24
periodic = true
[ball]
center = [12, 12]
radius = 8
[ledger]
nu = 2.0
doubling_radii = [2, 4, 8]
c1_radii = [1, 2, 4, 8]
[harnack]
sampler = "mixed"
samples = 6
deltas = [1e-4, 1e-5]
[oscillation]
r = 1
steps = 1
"""


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return str(p)


def test_constants_writes_ledger(tmp_path):
    assert main(["constants", CONSTANT, "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "ledger.csv")
    assert [float(r["radius"]) for r in rows] == [1, 2, 4, 8]
    assert all(float(r["nu"]) == 2.0 and float(r["sigma"]) == 2.0 for r in rows)
    env = [float(r["c1_envelope"]) for r in rows]
    assert env == sorted(env, reverse=True)


def test_harnack_constant_boundary(tmp_path):
    assert main(["harnack", CONSTANT, "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "harnack.csv")
    assert len(rows) == 5
    for r in rows:
        assert float(r["ratio"]) == pytest.approx(1.0, abs=1e-12)
        assert r["pass"] == "true"


def test_space_export(tmp_path):
    assert main(["space", CONSTANT, "--out-dir", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "vertices.csv")) == 32 * 32
    assert len(read_rows(tmp_path / "edges.csv")) == 2 * 32 * 32


def test_moser_bound_subcommand(tmp_path):
    assert main(["moser-bound", CONSTANT, "--out-dir", str(tmp_path)]) == 0
    (row,) = read_rows(tmp_path / "moser.csv")
    assert float(row["d"]) == 2.0 and float(row["gamma"]) > 0
    assert float(row["log_bound"]) == pytest.approx(
        float(row["gamma"]) * float(row["mu"]) ** 2 * float(row["mu_prime"]), rel=1e-12)


def test_oscillation_subcommand(tmp_path, small_config):
    assert main(["oscillation", small_config, "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "oscillation.csv")
    assert [float(r["r"]) for r in rows] == [4, 1]
    assert float(rows[1]["omega"]) <= float(rows[0]["omega"])


def test_report_and_run_alias(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["report", small_config, "--out-dir", str(a)]) == 0
    assert main(["run", small_config, "--out-dir", str(b)]) == 0
    text = (a / "report.txt").read_text()
    for section in ("== constants ==", "== lemmas ==", "== theorem ==", "== corollary =="):
        assert section in text
    assert text == (b / "report.txt").read_text()


def test_determinism(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["report", small_config, "--out-dir", str(out), "--seed", "11"]) == 0
    for name in ("ledger.csv", "harnack.csv", "oscillation.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_changes_samples(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["harnack", small_config, "--out-dir", str(a), "--seed", "1"])
    main(["harnack", small_config, "--out-dir", str(b), "--seed", "2"])
    assert (a / "harnack.csv").read_bytes() != (b / "harnack.csv").read_bytes()


def test_samples_override(tmp_path, small_config):
    assert main(["harnack", small_config, "--out-dir", str(tmp_path), "--samples", "2"]) == 0
    assert len(read_rows(tmp_path / "harnack.csv")) == 2 * 2


@pytest.mark.parametrize("body", [
    "[space]\nkind = 'grid2d'\nn = 8\n",  # no [ball]
    "[space]\nkind = 'grid2d'\nn = 8\n[ball]\nradius = -1\n",
    "[space]\nkind = 'grid2d'\nn = 8\nperiodic = true\n[ball]\nradius = 50\n",  # beyond R0
    "[space]\nkind = 'sphere'\n[ball]\nradius = 2\n",
    "this is = = not toml",
])
def test_bad_config_exit_code(tmp_path, body):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    assert main(["constants", str(p), "--out-dir", str(tmp_path)]) == 1


def test_missing_file_and_unknown_command(tmp_path):
    assert main(["constants", str(tmp_path / "nope.toml")]) == 1
    assert main(["frobnicate", CONSTANT]) == 1


def test_parse_config_defaults():
    cfg = parse_config({"space": {"kind": "path", "n": 10}, "ball": {"radius": 3}})
    assert cfg.operator == {"kind": "elliptic"}
    assert (cfg.samples, cfg.sampler, cfg.delta, cfg.deltas) == (200, "uniform", 1e-6, [])
    with pytest.raises(ConfigError):
        parse_config({"space": {}, "ball": {"radius": 1}, "seed": -4})


def test_shipped_configs_load():
    for name in ("elliptic", "grushin", "constant"):
        cfg = load_config(CONFIGS / f"{name}.toml")
        assert cfg.radius > 0
