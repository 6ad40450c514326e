import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mlab import cli, markov
from mlab import CuspFunction, CuspidalDomain

D1_BLOCK = """
[domain]
a = 0.5
k = 3
family = "Power"
r = 2.0
b = 0.9
"""

# Slope of the exact eigen factors over n = 2..10 from the extended-precision oracle.
ORACLE_Y_SLOPE_2_10 = 2.78763546


def write_config(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def run(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def summary_of(out):
    return json.loads(out[out.index("{"): out.rindex("}") + 1])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def markov_config(tmp_path, axis="Y", n_min=2, n_max=10, extra=""):
    body = D1_BLOCK + f"""
[compute]
p = 2.0
n_min = {n_min}
n_max = {n_max}
axis = "{axis}"
method = "exact-eigen"
{extra}
"""
    return write_config(tmp_path, body)


def test_check_valid_domain(tmp_path, capsys):
    cfg = write_config(tmp_path, D1_BLOCK)
    code, out, _ = run(capsys, ["check", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 0
    s = summary_of(out)
    assert s["valid"] is True
    assert s["predicted_exponent"] == pytest.approx(4.0, abs=1e-6)
    assert (tmp_path / "o" / "check.csv").exists()
    assert json.loads((tmp_path / "o" / "check.json").read_text()) == s


def test_check_failing_hypothesis(tmp_path, capsys):
    cfg = write_config(tmp_path, '[domain]\na = 1.0\nk = 3\nfamily = "Power"\nr = 2.0\nb = 1.0\n')
    code, out, err = run(capsys, ["check", "--config", cfg, "--out", str(tmp_path)])
    assert code == 3
    assert "f(1)>a" in summary_of(out)["failed"]
    assert "f(1)>a" in err


def test_check_missing_config(tmp_path, capsys):
    code, _, err = run(capsys, ["check", "--config", str(tmp_path / "nope.toml")])
    assert code == 2
    assert "cannot read config" in err


def test_invalid_toml(tmp_path, capsys):
    cfg = write_config(tmp_path, "[domain\na = ")
    assert run(capsys, ["check", "--config", cfg])[0] == 2


@pytest.mark.parametrize(
    "body, field",
    [
        ('[domain]\nk = 3\n', "domain.a"),
        ('[domain]\na = 0.5\nk = "3"\n', "domain.k"),
        ('[domain]\na = 0.5\nk = 3\nfamily = "Spline"\n', "domain.family"),
        (D1_BLOCK + "[compute]\nn_min = 5\nn_max = 2\n", "compute.n_max"),
        (D1_BLOCK + '[compute]\naxis = "Z"\n', "compute.axis"),
        (D1_BLOCK + "[compute]\np = 0.5\n", "compute.p"),
        (D1_BLOCK + '[compute]\nmethod = "magic"\n', "compute.method"),
        (D1_BLOCK + "[compute]\nx_lo = 1.0\n", "compute.x_lo"),
        (D1_BLOCK + "[witness]\nomega = -1.0\n", "witness.omega"),
        (D1_BLOCK + '[output]\nformats = ["xml"]\n', "output.formats"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, body, field):
    cfg = write_config(tmp_path, body)
    code, _, err = run(capsys, ["check", "--config", cfg, "--out", str(tmp_path)])
    assert code == 2
    assert field in err


def test_markov_y_series(tmp_path, capsys):
    cfg = markov_config(tmp_path)
    code, out, _ = run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "markov.csv")
    assert len(rows) == 9
    assert list(rows[0]) == ["n", "factor", "ln_n", "ln_factor", "method"]
    assert all(r["method"] == "exact-eigen" for r in rows)
    s = summary_of(out)
    assert s["fit"]["slope"] == pytest.approx(ORACLE_Y_SLOPE_2_10, abs=1e-4)


def test_markov_y_slope_band(tmp_path, capsys):
    cfg = markov_config(tmp_path)
    code, out, _ = run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0
    assert 3.4 <= summary_of(out)["fit"]["slope"] <= 4.6


def test_markov_x_slope_band(tmp_path, capsys):
    cfg = markov_config(tmp_path, axis="X")
    code, out, _ = run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0
    assert 1.7 <= summary_of(out)["fit"]["slope"] <= 2.4


def test_markov_beyond_cap_keeps_partial_rows(tmp_path, capsys):
    cfg = markov_config(tmp_path, n_min=1, n_max=20)
    code, out, err = run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    assert code == 4
    rows = read_rows(tmp_path / "markov.csv")
    assert [int(r["n"]) for r in rows] == list(range(1, 15))
    assert summary_of(out)["rows"] == 14
    assert "error" in err


def test_markov_invalid_domain_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path, '[domain]\na = 1.0\nk = 3\nfamily = "Power"\nr = 2.0\nb = 1.0\n')
    assert run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])[0] == 3


def test_markov_window_too_small_exits_5(tmp_path, capsys):
    cfg = markov_config(tmp_path, n_max=6)
    code, _, _ = run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path), "--window", "5:6"])
    assert code == 5


def test_markov_exact_route_rejects_p_not_two(tmp_path, capsys):
    cfg = markov_config(tmp_path)
    text = open(cfg).read().replace("p = 2.0", "p = 3.0")
    cfg = write_config(tmp_path, text, "p3.toml")
    assert run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])[0] == 2


def test_csv_round_trip_reproduces_fit(tmp_path, capsys):
    cfg = markov_config(tmp_path)
    run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    code, out, _ = run(capsys, ["fit", str(tmp_path / "markov.csv")])
    assert code == 0
    d1 = CuspidalDomain(0.5, 3, CuspFunction.power(2.0, 0.9))
    direct = markov.fit_exponent(markov.factor_series(d1, "MarkovY", 2, range(2, 11)))
    s = summary_of(out)
    assert s["slope"] == pytest.approx(direct.slope, rel=1e-12, abs=0)
    assert s["intercept"] == pytest.approx(direct.intercept, rel=1e-12, abs=1e-12)


def witness_config(tmp_path, omega='"auto"', n_max=12):
    body = f"""
[domain]
a = 0.5
k = 2
family = "Power"
r = 2.0
b = 0.9

[compute]
p = 2.0
n_min = 2
n_max = {n_max}

[witness]
omega = {omega}
"""
    return write_config(tmp_path, body)


def test_witness_auto_selects_eight(tmp_path, capsys):
    code, out, _ = run(capsys, ["witness", "--config", witness_config(tmp_path), "--out", str(tmp_path)])
    assert code == 0
    s = summary_of(out)
    assert s["omega"] == 8
    assert s["warnings"] == []
    rows = read_rows(tmp_path / "witness.csv")
    assert list(rows[0]) == ["n", "rho", "eta_prime", "normalized"]
    assert len(rows) == 11
    assert all(float(r["normalized"]) > 0 for r in rows)


def test_witness_non_admissible_warns(tmp_path, capsys):
    code, out, err = run(capsys, ["witness", "--config", witness_config(tmp_path, "6.0"), "--out", str(tmp_path)])
    assert code == 0
    s = summary_of(out)
    assert len(s["warnings"]) == 1 and "not admissible" in s["warnings"][0]
    assert "warning" in err


def remez_config(tmp_path, n_min=2, n_max=12, x_lo=None):
    extra = "" if x_lo is None else f"x_lo = {x_lo}\n"
    return write_config(tmp_path, D1_BLOCK + f"[compute]\nn_min = {n_min}\nn_max = {n_max}\n{extra}")


def test_remez_ratios_at_least_one(tmp_path, capsys):
    code, out, _ = run(capsys, ["remez", "--config", remez_config(tmp_path), "--out", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "remez.csv")
    assert list(rows[0]) == ["n", "x_lo", "ratio"]
    assert len(rows) == 11
    for r in rows:
        assert float(r["ratio"]) >= 1.0
        assert float(r["x_lo"]) == pytest.approx(1 / int(r["n"]) ** 2, rel=1e-15)
    assert summary_of(out)["all_at_least_one"] is True


def test_remez_growth_recorded(tmp_path, capsys):
    code, out, _ = run(capsys, ["remez", "--config", remez_config(tmp_path, 7, 14), "--out", str(tmp_path)])
    assert code == 0
    assert summary_of(out)["ratio_14_over_7"] <= 1.5


def test_remez_zero_override_gives_one(tmp_path, capsys):
    code, _, _ = run(capsys, ["remez", "--config", remez_config(tmp_path, x_lo=0.0), "--out", str(tmp_path)])
    assert code == 0
    assert all(float(r["ratio"]) == 1.0 for r in read_rows(tmp_path / "remez.csv"))


def write_series(path, rows, col="factor"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", col])
        w.writerows(rows)
    return str(path)


def test_fit_exact_power_law(tmp_path, capsys):
    src = write_series(tmp_path / "s.csv", [(n, repr(3.0 * n**4)) for n in range(1, 11)])
    code, out, _ = run(capsys, ["fit", src, "--out", str(tmp_path / "f")])
    assert code == 0
    s = summary_of(out)
    assert s["slope"] == pytest.approx(4.0, abs=1e-12)
    assert s["intercept"] == pytest.approx(np.log(3.0), abs=1e-12)
    assert json.loads((tmp_path / "f" / "fit.json").read_text()) == s


def test_fit_two_rows(tmp_path, capsys):
    src = write_series(tmp_path / "s.csv", [(1, 3.0), (2, 48.0)])
    assert run(capsys, ["fit", src])[0] == 5


def test_fit_window_excludes_everything(tmp_path, capsys):
    src = write_series(tmp_path / "s.csv", [(n, 3.0 * n**4) for n in range(1, 11)])
    assert run(capsys, ["fit", src, "--window", "20:30"])[0] == 5


@pytest.mark.parametrize(
    "text",
    ["n,factor\n1,abc\n", "degree,value\n1,2\n", "n,factor\n1\n"],
)
def test_fit_malformed_csv(tmp_path, capsys, text):
    src = tmp_path / "bad.csv"
    src.write_text(text)
    assert run(capsys, ["fit", str(src)])[0] == 2


def test_fit_missing_file(tmp_path, capsys):
    assert run(capsys, ["fit", str(tmp_path / "none.csv")])[0] == 2


def test_bad_window_syntax(tmp_path, capsys):
    src = write_series(tmp_path / "s.csv", [(n, n) for n in range(1, 5)])
    assert run(capsys, ["fit", src, "--window", "a:b"])[0] == 2


def test_missing_subcommand(capsys):
    assert run(capsys, [])[0] == 2


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("command", ["markov", "remez"])
def test_outputs_byte_identical_across_runs_and_threads(tmp_path, capsys, command):
    cfg = markov_config(tmp_path, n_max=9)
    snaps = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"out{i}"
        assert run(capsys, [command, "--config", cfg, "--out", str(out), "--threads", threads])[0] == 0
        snaps.append(_snapshot(out))
    assert snaps[0] == snaps[1] == snaps[2]


def test_search_method_deterministic_given_seed(tmp_path, capsys):
    cfg = markov_config(tmp_path, n_min=1, n_max=3, extra="budget = 400")
    text = open(cfg).read().replace('method = "exact-eigen"', 'method = "search"')
    cfg = write_config(tmp_path, text, "search.toml")
    snaps = []
    for i, threads in enumerate(("1", "3")):
        out = tmp_path / f"s{i}"
        assert run(capsys, ["markov", "--config", cfg, "--out", str(out), "--seed", "7", "--threads", threads])[0] == 0
        snaps.append(_snapshot(out))
    assert snaps[0] == snaps[1]
    assert json.loads(snaps[0]["markov.json"])["lower_bound"] is True


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("MLAB_THREADS", "3")
    assert cli._threads_default() == 3
    monkeypatch.setenv("MLAB_THREADS", "x")
    assert cli._threads_default() == 1
    monkeypatch.delenv("MLAB_THREADS")
    assert cli._threads_default() == 1


def test_csv_numbers_round_trip_exactly(tmp_path, capsys):
    cfg = markov_config(tmp_path, n_max=5)
    run(capsys, ["markov", "--config", cfg, "--out", str(tmp_path)])
    d1 = CuspidalDomain(0.5, 3, CuspFunction.power(2.0, 0.9))
    s = markov.factor_series(d1, "MarkovY", 2, range(2, 6))
    got = [float(r["factor"]) for r in read_rows(tmp_path / "markov.csv")]
    assert got == list(s.values())


def test_formats_restrict_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, D1_BLOCK + '[output]\nformats = ["json"]\n')
    assert run(capsys, ["check", "--config", cfg, "--out", str(tmp_path / "o")])[0] == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["check.json"]


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, D1_BLOCK)
    env = dict(os.environ)
    proc = subprocess.run(
        [sys.executable, "-m", "mlab", "check", "--config", cfg, "--out", str(tmp_path)],
        capture_output=True, text=True, env=env, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["valid"] is True
