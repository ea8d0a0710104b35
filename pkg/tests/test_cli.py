import json
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from quaddrift.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    ScenarioConfig,
    csv_text,
    main,
)

finite = st.floats(1e-3, 10, allow_nan=False)


@given(st.floats(0.01, 0.99), st.integers(0, 4), st.floats(0.01, 100),
       st.lists(finite, min_size=1, max_size=4), st.integers(0, 2 ** 31))
def test_config_text_round_trip(s, n, T, amps, seed):
    cfg = ScenarioConfig("drift-integer", s=s, n=n, T=T, amplitudes=tuple(amps), seed=seed)
    again = ScenarioConfig.from_text(cfg.to_text())
    assert again == cfg


def test_config_parser_rejects_bad_input():
    with pytest.raises(ConfigError, match="unknown key"):
        ScenarioConfig.from_text("scenario = moment-solve\nbogus = 1\n")
    with pytest.raises(ConfigError, match="duplicate"):
        ScenarioConfig.from_text("scenario = moment-solve\nT = 1\nT = 2\n")
    with pytest.raises(ConfigError, match="out of range"):
        ScenarioConfig.from_text("scenario = moment-solve\nT = -1\n")
    with pytest.raises(ConfigError, match="bad value"):
        ScenarioConfig.from_text("scenario = moment-solve\nN = many\n")
    cfg = ScenarioConfig.from_text("# comment\nscenario = moment-solve  # trailing\n")
    assert cfg.T == 1.0


def test_empty_rows_give_header_only_csv():
    assert csv_text(("a", "b"), []) == "a,b\n"


def write(tmp_path, text):
    p = tmp_path / "cfg.txt"
    p.write_text(text)
    return str(p)


def test_unknown_scenario_and_bad_values_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "N = 8\n")
    assert main(["no-such", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    bad = write(tmp_path, "T = -1\n")
    assert main(["moment-solve", "--config", bad, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["exit"] == EXIT_CONFIG and err["status"] == "error"
    assert main(["moment-solve", "--config", str(tmp_path / "missing.txt")]) == EXIT_CONFIG
    assert main(["moment-solve"]) == EXIT_CONFIG


def test_thread_cap_is_validated(tmp_path, monkeypatch):
    cfg = write(tmp_path, "N = 6\n")
    monkeypatch.setenv("QUADDRIFT_THREADS", "zero")
    assert main(["moment-solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    monkeypatch.setenv("QUADDRIFT_THREADS", "1")
    assert main(["moment-solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK


def test_numerical_failure_exits_3(tmp_path):
    # the first-round plateau lies between the sampled and the peak regimes
    cfg = write(tmp_path, "K_max = 1\nn = 1\n")
    assert main(["infinite-recover", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NUMERICAL
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["type"] == "ResolutionError"


def test_runs_are_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, "N = 8\ncount = 3\n")
    digests = []
    for sub in ("a", "b"):
        assert main(["ibp-check", "--config", cfg, "--out", str(tmp_path / sub), "--seed", "7"]) == 0
        digests.append(json.loads(capsys.readouterr().out)["digest"])
    assert digests[0] == digests[1]
    assert (tmp_path / "a" / "ibp-check.csv").read_text() == (tmp_path / "b" / "ibp-check.csv").read_text()
    saved = ScenarioConfig.from_file(tmp_path / "a" / "config.txt")
    assert saved.seed == 7 and saved.N == 8


def test_drift_report_columns(tmp_path):
    cfg = write(tmp_path, "N = 12\nT = 0.5\namplitudes = 1e-2, 1e-3\n")
    assert main(["drift-integer", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    header = (tmp_path / "drift-integer.csv").read_text().splitlines()[0]
    assert header == "amplitude,drift,un_norm_sq,ratio,ratio_second_order"
    summary = json.loads((tmp_path / "drift-integer.json").read_text())["summary"]
    assert abs(summary["slope"] - 2) < 0.05
    assert (tmp_path / "drift-integer.gp").read_text().startswith("set datafile")


def test_kernel_spectrum_scenario(tmp_path):
    cfg = write(tmp_path, "J = 20000\nxi = 1e3, 1e4\n")
    assert main(["kernel-spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "kernel-spectrum.csv").read_text().splitlines()
    assert len(rows) == 3


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "N = 6\n")
    proc = subprocess.run([sys.executable, "-m", "quaddrift.cli", "moment-solve", "--config", cfg,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
