import csv
import io
import os
import subprocess

import pytest

CLI = os.environ.get("CRT_ANCOVA_CLI", "crt-ancova")
WRITE_TRIAL = os.environ.get("CRT_WRITE_TRIAL", "crt_write_trial")


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.pop("CRT_ANCOVA_THREADS", None)
    if env:
        full_env.update(env)
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=full_env)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def scenario3_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s3.csv"
    subprocess.run([WRITE_TRIAL, "3", "200", "0", "11", str(path)], check=True)
    return path


@pytest.fixture(scope="module")
def no_covariates_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s3_nocov.csv"
    subprocess.run([WRITE_TRIAL, "3", "60", "0", "11", str(path), "--no-covariates"], check=True)
    return path


def test_simulate_is_deterministic_across_runs_and_threads():
    args = ["simulate", "--scenario", "1", "--clusters", "20", "--reps", "10", "--seed", "1"]
    a = run(*args)
    b = run(*args)
    c = run(*args, "--threads", "3")
    d = run(*args, env={"CRT_ANCOVA_THREADS": "2"})
    assert a.returncode == 0, a.stderr
    assert a.stdout == b.stdout == c.stdout == d.stdout
    assert "mixed-unadj" in a.stdout and "cluster-ancova" in a.stdout


def test_simulate_csv_output_file(tmp_path):
    out = tmp_path / "t.csv"
    r = run("simulate", "--scenario", "3", "--clusters", "30", "--reps", "5",
            "--estimators", "mixed-ancova:reml,mixed-ancova:ml:sandwich", "--format", "csv", "--out", out)
    assert r.returncode == 0, r.stderr
    assert r.stdout == ""
    table = rows(out.read_text())
    assert [t["estimator"] for t in table] == ["mixed-ancova:reml", "mixed-ancova:ml:sandwich"]
    assert all(t["n_reps"] == "5" for t in table)


@pytest.mark.parametrize("args", [
    ["simulate", "--scenario", "4"],
    ["simulate", "--scenario", "1", "--reps", "0"],
    ["compare-reml", "--scenario", "1", "--reps", "0"],
    ["simulate", "--scenario", "1", "--pi", "1.5"],
    ["simulate", "--scenario", "1", "--estimators", "mixed-ancova:robust"],
    ["simulate", "--scenario", "1", "--format", "json"],
    ["simulate", "--scenario", "1", "--unknown-flag"],
    ["simulate"],
    ["icc", "--scenario", "0"],
    ["icc", "--scenario", "1", "--mc-clusters", "10"],
    ["bogus"],
])
def test_usage_errors_exit_2(args):
    r = run(*args)
    assert r.returncode == 2, (args, r.stdout, r.stderr)
    assert r.stderr


def test_invalid_thread_env_is_a_usage_error():
    r = run("simulate", "--scenario", "1", "--clusters", "20", "--reps", "3",
            env={"CRT_ANCOVA_THREADS": "many"})
    assert r.returncode == 2


def test_help_documents_every_flag():
    expected = {
        "simulate": ["--scenario", "--clusters", "--reps", "--seed", "--pi", "--gamma", "--superpop-n",
                     "--estimators", "--out", "--format", "--threads"],
        "compare-reml": ["--scenario", "--clusters", "--reps", "--seed", "--pi", "--gamma",
                         "--superpop-n", "--out", "--format", "--threads"],
        "analyze": ["--data", "--cluster", "--treatment", "--outcome", "--covariates", "--method",
                    "--estimation", "--variance", "--pi", "--level", "--out"],
        "icc": ["--scenario", "--gamma", "--superpop-n", "--mc-clusters", "--seed"],
    }
    for cmd, flags in expected.items():
        r = run(cmd, "--help")
        assert r.returncode == 0
        for flag in flags:
            assert flag in r.stdout, (cmd, flag)
    assert "--estimators" not in run("compare-reml", "--help").stdout


def test_compare_reml_layout_and_determinism():
    args = ["compare-reml", "--scenario", "3", "--clusters", "20", "--reps", "20", "--seed", "5",
            "--format", "csv"]
    a = run(*args)
    assert a.returncode == 0, a.stderr
    assert a.stdout == run(*args).stdout
    labels = [t["estimator"] for t in rows(a.stdout)]
    assert labels == ["unadjusted ML", "unadjusted REML", "ANCOVA ML", "ANCOVA REML"]


def test_analyze_all_methods_reports_positive_pvr(scenario3_csv):
    r = run("analyze", "--data", scenario3_csv, "--covariates", "X", "--format", "csv")
    assert r.returncode == 0, r.stderr
    table = rows(r.stdout)
    assert len(table) == 3
    assert table[0]["pvr"] == "NA"
    assert float(table[1]["pvr"]) > 0.0


def test_analyze_reml_matches_ml_estimate(scenario3_csv):
    def est(mode):
        r = run("analyze", "--data", scenario3_csv, "--covariates", "X", "--method", "mixed-ancova",
                "--estimation", mode, "--format", "csv")
        assert r.returncode == 0, r.stderr
        return rows(r.stdout)[0]

    ml, reml = est("ml"), est("reml")
    assert round(float(ml["estimate"]), 3) == round(float(reml["estimate"]), 3)
    assert "REML" in reml["estimator"]


def test_analyze_influence_rows(scenario3_csv):
    r = run("analyze", "--data", scenario3_csv, "--covariates", "X", "--method", "mixed-ancova",
            "--pi", "0.5", "--format", "csv")
    assert r.returncode == 0, r.stderr
    table = rows(r.stdout)
    assert [t["variance"] for t in table] == ["model-based", "influence"]


def test_analyze_without_covariates_is_a_usage_error(no_covariates_csv):
    r = run("analyze", "--data", no_covariates_csv, "--method", "mixed-ancova")
    assert r.returncode == 2
    assert "covariates" in r.stderr
    ok = run("analyze", "--data", no_covariates_csv, "--method", "mixed-unadj")
    assert ok.returncode == 0, ok.stderr


def test_analyze_runtime_failures_exit_3(tmp_path, no_covariates_csv):
    assert run("analyze", "--data", tmp_path / "missing.csv", "--method", "mixed-unadj").returncode == 3
    r = run("analyze", "--data", no_covariates_csv, "--covariates", "X")
    assert r.returncode == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("cluster,treatment,y\n1,1,2.0\n1,0,3.0\n2,0,1.0\n")
    assert run("analyze", "--data", bad, "--method", "mixed-unadj").returncode == 3


@pytest.mark.parametrize("scenario,gamma,expected", [(3, False, 0.03), (1, True, 0.47), (2, False, 0.09)])
def test_icc(scenario, gamma, expected):
    args = ["icc", "--scenario", scenario, "--mc-clusters", "100000"]
    if gamma:
        args.append("--gamma")
    r = run(*args)
    assert r.returncode == 0, r.stderr
    line = next(l for l in r.stdout.splitlines() if l.startswith("icc "))
    assert abs(float(line.split()[1]) - expected) <= 0.01
    assert r.stdout == run(*args).stdout
