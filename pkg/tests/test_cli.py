import json
import subprocess
import sys

import pytest

from bracketflow.cli import ConfigError, build_config, main


def run_cli(*args):
    return main(list(args))


def read_manifest(prefix, name):
    with open(f"{prefix}{name}_manifest.json") as fh:
        return json.load(fh)


def test_series_subcommand(tmp_path):
    out = str(tmp_path) + "/"
    assert run_cli("series", "--eps", "0.1", "--q", "2", "--J", "1", "--kmax", "200", "--out", out) == 0
    man = read_manifest(out, "series")
    assert man["passed"] and man["summary"]["radius"] == pytest.approx(5, rel=0.02)
    assert man["config"]["kmax"] == 200 and man["error"] is None
    assert "numpy" in man["versions"] and man["wall_time_s"] >= 0


def test_eigencheck_subcommand(tmp_path):
    out = str(tmp_path) + "/"
    assert run_cli("eigencheck", "--n", "4", "--out", out) == 0
    lines = (tmp_path / "eigencheck.csv").read_text().splitlines()
    assert lines[0] == "string,charge,eigenvalue,expected,residual,pass"
    assert len(lines) == 1 + 4 ** 4
    assert all(line.endswith(",1") for line in lines[1:])


def test_lightcone_sweep_at_zero_B(tmp_path):
    out = str(tmp_path) + "/"
    assert run_cli("lemma1", "--n", "32", "--instances", "2", "--B", "[0]", "--out", out) == 0
    rows = (tmp_path / "lemma1_instance000.csv").read_text().splitlines()[1:]
    for row in rows:
        k, _, _, measured, _, ok = row.split(",")
        assert ok == "1"
        if int(k) >= 1:
            assert float(measured) == 0.0


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "series", "eps": 0.2, "q": 1, "kmax": 50}))
    out = str(tmp_path) + "/"
    assert run_cli("series", "--config", str(cfg), "--q", "4", "--out", out) == 0
    man = read_manifest(out, "series")
    assert man["config"]["eps"] == 0.2 and man["config"]["q"] == 4 and man["config"]["kmax"] == 50


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        build_config("series", {"bogus": 1}, {})
    with pytest.raises(ConfigError):
        build_config("series", {"experiment": "lemma1"}, {})
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert run_cli("series", "--config", str(cfg)) == 2
    with pytest.raises(SystemExit):
        run_cli("series", "--nope", "1")
    with pytest.raises(SystemExit):
        run_cli("unknown-experiment")


def test_manifest_written_on_failure(tmp_path):
    out = str(tmp_path) + "/"
    status = run_cli("series", "--kind", "nonsense", "--out", out)
    assert status == 2
    man = read_manifest(out, "series")
    assert man["passed"] is False and "nonsense" in man["error"]


def test_module_error_gives_nonzero_status(tmp_path):
    out = str(tmp_path) + "/"
    assert run_cli("series", "--kmax", "5", "--out", out) == 2
    assert read_manifest(out, "series")["error"].startswith("ValueError")


def test_failed_criterion_gives_nonzero_status(tmp_path):
    out = str(tmp_path) + "/"
    # at B = 0 the profile has finite range, so no growth fit is possible
    assert run_cli("dimer-growth", "--n", "128", "--B", "[0,0.5]", "--out", out) == 1
    man = read_manifest(out, "dimer_growth")
    assert man["passed"] is False and man["error"] is None


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for prefix in (a, b):
        assert run_cli("lemma1", "--n", "32", "--instances", "3", "--B", "[0.5]", "--seed", "7", "--out", f"{prefix}/") == 0
        assert run_cli("imagtime", "--n", "32", "--m_max", "10", "--seed", "7", "--out", f"{prefix}/") == 0
    for name in ["lemma1_instance000.csv", "lemma1_instance002.csv", "imagtime.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    assert run_cli("lemma1", "--n", "32", "--instances", "1", "--B", "[0.5]", "--seed", "8", "--out", f"{c}/") == 0
    assert (c / "lemma1_instance000.csv").read_bytes() != (a / "lemma1_instance000.csv").read_bytes()


def test_spin_probe_and_dimer_small(tmp_path):
    out = str(tmp_path) + "/"
    assert run_cli("spin-probe", "--sizes", "[4,5]", "--B", "0.5", "--out", out) == 0
    assert (tmp_path / "spin_probe_weights.csv").read_text().startswith("size,diameter,weight")
    assert read_manifest(out, "spin_probe")["passed"] is None
    assert run_cli("dimer-growth", "--n", "256", "--B", "[0.5,1.0]", "--out", out) in (0, 1)
    assert (tmp_path / "dimer_growth.csv").read_text().startswith("B,xi,theta_star,abs_cos_theta_star")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "bracketflow.cli", "series", "--kind", "jk", "--B", "1", "--out", f"{tmp_path}/"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
