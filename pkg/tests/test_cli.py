"""Command-line front end."""

import subprocess
import sys

import numpy as np
import pytest

from bayesgof.cli import main, read_data_file
from bayesgof.distributions import GammaParams, GpdParams, gamma_sample, gpd_sample
from bayesgof.errors import ResultParseError
from bayesgof.harness import parse_result_line, read_result, sibling_paths


@pytest.fixture
def gpd_file(tmp_path):
    x = gpd_sample(GpdParams(0.25, 1), 24, np.random.default_rng(1))
    p = tmp_path / "gpd.txt"
    p.write_text("# excesses over threshold\n" + "\n".join(f"{v:.17g}" for v in x) + "\n\n")
    return p


@pytest.fixture
def gamma_file(tmp_path):
    x = gamma_sample(GammaParams(4, 8), 12, np.random.default_rng(2))
    p = tmp_path / "gamma.txt"
    p.write_text("\n".join(f"{v:.17g}" for v in x) + "\n")
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestDataFile:
    def test_comments_and_blanks(self, gpd_file):
        assert read_data_file(gpd_file).shape == (24,)

    @pytest.mark.parametrize("text,needle", [
        ("1.0\nabc\n", ":2:"),
        ("1.0\nnan\n", ":2:"),
        ("1.0\n", "at least 2"),
    ])
    def test_errors(self, tmp_path, text, needle):
        p = tmp_path / "d.txt"
        p.write_text(text)
        with pytest.raises(ResultParseError, match=needle):
            read_data_file(p)


class TestCmdTest:
    def test_bayes_gpd_deterministic(self, capsys, gpd_file):
        args = ("test", "--data", gpd_file, "--model", "gpd", "--method", "bayes", "--N", 999, "--seed", 1)
        code, out1, _ = run(capsys, *args)
        assert code == 0
        p = float(next(line.split()[1] for line in out1.splitlines() if line.startswith("p_value")))
        assert 0 < p < 1
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    @pytest.mark.parametrize("method", ["plugin", "parboot", "ppp", "bayes"])
    def test_machine_line_parses(self, capsys, gamma_file, method):
        code, out, _ = run(capsys, "test", "--data", gamma_file, "--model", "gamma",
                           "--method", method, "--N", 49, "--n-outer", 5, "--machine")
        assert code == 0
        rep, name, p, stat, nf = parse_result_line(out.strip())
        assert (rep, name) == (0, method) and 0 < p < 1 and nf >= 0

    def test_exact_with_theta0(self, capsys, gamma_file):
        code, out, _ = run(capsys, "test", "--data", gamma_file, "--model", "gamma",
                           "--method", "exact", "--theta0", "4,8", "--N", 99)
        assert code == 0 and "p_value" in out

    def test_bayes_exact_mode(self, capsys, gamma_file):
        code, _, _ = run(capsys, "test", "--data", gamma_file, "--model", "gamma", "--method", "bayes",
                         "--mode", "exact", "--inner-n", 3, "--N", 20)
        assert code == 0

    @pytest.mark.parametrize("extra", [
        ["--method", "exact"],                         # theta0 missing
        ["--method", "bayes", "--theta0", "4,8"],      # theta0 not allowed
        ["--method", "exact", "--theta0", "4"],
        ["--method", "exact", "--theta0", "-4,8"],
        ["--method", "bayes", "--N", "0"],
        ["--method", "magic"],
    ])
    def test_usage_errors(self, capsys, gamma_file, extra):
        code, _, err = run(capsys, "test", "--data", gamma_file, "--model", "gamma", *extra)
        assert code == 2
        assert err

    def test_unparseable_data(self, capsys, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1\n2\nx\n")
        code, _, err = run(capsys, "test", "--data", p, "--model", "gamma", "--method", "parboot")
        assert code == 2 and "bad.txt:3" in err

    def test_missing_data_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "test", "--data", tmp_path / "nope.txt", "--model", "gpd", "--method", "bayes")
        assert code == 2

    def test_nonpositive_data(self, capsys, tmp_path):
        p = tmp_path / "neg.txt"
        p.write_text("1\n-2\n3\n")
        code, _, _ = run(capsys, "test", "--data", p, "--model", "gpd", "--method", "bayes")
        assert code == 2

    def test_estimation_failure_exit_code(self, capsys, tmp_path):
        p = tmp_path / "const.txt"
        p.write_text("2\n2\n2\n2\n")
        code, _, err = run(capsys, "test", "--data", p, "--model", "gamma", "--method", "parboot", "--N", 9)
        assert code == 1 and "failed" in err


CONFIG = """model = gamma
sampling = gamma(4, 8)
sample_size = 12
repetitions = 16
seed = 5
methods = bayes, parboot
N = 29
output_path = g48.csv
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "study.cfg"
    p.write_text(CONFIG)
    return p


class TestCmdExperiment:
    def test_writes_results_and_prints_rows(self, capsys, config_file, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = run(capsys, "experiment", "--config", config_file, "--workers", 1, "--output-dir", out_dir)
        assert code == 0
        rows = out.strip().splitlines()
        assert len(rows) == 2
        for row, method in zip(rows, ["bayes", "parboot"]):
            assert row.startswith(f"gamma(4.0, 8.0) {method} ")
            assert 0 <= float(row.split()[-1]) <= 1
        res = read_result(out_dir / "g48.csv")
        assert res.config.repetitions == 16
        assert all(p.exists() for p in sibling_paths(out_dir / "g48.csv"))

    def test_worker_count_does_not_change_csv(self, capsys, config_file, tmp_path):
        run(capsys, "experiment", "--config", config_file, "--workers", 1, "--output-dir", tmp_path / "a")
        run(capsys, "experiment", "--config", config_file, "--workers", 4, "--output-dir", tmp_path / "b")
        assert (tmp_path / "a/g48.csv").read_text() == (tmp_path / "b/g48.csv").read_text()
        assert (tmp_path / "a/g48.summary.csv").read_text() == (tmp_path / "b/g48.summary.csv").read_text()

    def test_missing_config(self, capsys, tmp_path):
        code, _, err = run(capsys, "experiment", "--config", tmp_path / "none.cfg")
        assert code == 2 and "not found" in err

    def test_config_error_names_key(self, capsys, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text(CONFIG.replace("repetitions = 16", "repetitions = lots"))
        code, _, err = run(capsys, "experiment", "--config", p, "--output-dir", tmp_path)
        assert code == 2 and "repetitions" in err
        assert not (tmp_path / "g48.csv").exists()


class TestCmdReport:
    @pytest.fixture
    def uniform_results(self, tmp_path):
        u = np.random.default_rng(3).random(2000)
        p = tmp_path / "u.csv"
        p.write_text("rep,method,p_value,observed_stat,n_failed\n"
                     + "".join(f"{i},bayes,{v:.6f},1.0,0\n" for i, v in enumerate(u)))
        return p

    def test_histogram_and_coverage(self, capsys, uniform_results):
        code, out, _ = run(capsys, "report", "--results", uniform_results, "--grid-size", 20)
        assert code == 0
        hist, cov = out.strip().split("\n\n")
        hist = hist.splitlines()
        assert hist[0] == "method,bin_lo,bin_hi,count"
        counts = [int(line.split(",")[3]) for line in hist[1:]]
        assert len(counts) == 20 and sum(counts) == 2000
        assert all(abs(c - 100) < 45 for c in counts)
        cov = cov.splitlines()
        assert cov[0] == "method,level,coverage"
        assert len(cov) == 1 + 19
        for line in cov[1:]:
            _, lv, c = line.split(",")
            assert abs(float(c) - float(lv)) < 0.05

    def test_experiment_output_reports(self, capsys, config_file, tmp_path):
        run(capsys, "experiment", "--config", config_file, "--workers", 1, "--output-dir", tmp_path)
        code, out, _ = run(capsys, "report", "--results", tmp_path / "g48.csv")
        assert code == 0
        assert out.count("bayes,") == 20 + 99

    def test_empty_csv(self, capsys, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        code, _, err = run(capsys, "report", "--results", p)
        assert code == 2 and "empty.csv" in err

    def test_bad_row_names_line(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("rep,method,p_value,observed_stat,n_failed\n0,bayes,zzz,1,0\n")
        code, _, err = run(capsys, "report", "--results", p)
        assert code == 2 and "bad.csv:2" in err

    def test_bad_grid(self, capsys, uniform_results):
        code, _, _ = run(capsys, "report", "--results", uniform_results, "--grid-size", 1)
        assert code == 2


class TestEntryPoint:
    def test_console_script(self, gamma_file):
        proc = subprocess.run([sys.executable, "-m", "bayesgof.cli", "test", "--data", str(gamma_file),
                               "--model", "gamma", "--method", "parboot", "--N", "19", "--machine"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("0,parboot,")

    def test_no_command_is_usage_error(self):
        proc = subprocess.run([sys.executable, "-m", "bayesgof.cli"], capture_output=True, text=True)
        assert proc.returncode == 2

    def test_help_succeeds(self, capsys):
        assert main(["--help"]) == 0
