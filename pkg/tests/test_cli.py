import csv
import io
import json

import pytest

from rishap import analytic, cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def table(text):
    return list(csv.DictReader(io.StringIO("\n".join(body(text)))))


# ---------------------------------------------------------------- config

def test_parse_list_forms():
    assert cli.parse_list("1, 2,3") == (1.0, 2.0, 3.0)
    assert cli.parse_list("-30:30:10") == (-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0)
    assert cli.parse_list("0.1:0.3:0.1") == (0.1, 0.2, 0.3)
    assert cli.parse_list("  ") == ()
    for bad in ("1:2", "1:2:0", "1:5:-1", "a,b"):
        with pytest.raises(ValueError):
            cli.parse_list(bad)


def test_print_config_round_trip(tmp_path, capsys):
    code, first, _ = run(capsys, "analytic", "--preset", "fig3", "--set", "h_ris=75",
                         "--seed", "11", "--print-config")
    assert code == 0
    path = tmp_path / "cfg.txt"
    path.write_text(first)
    code, second, _ = run(capsys, "analytic", "--config", str(path), "--print-config")
    assert code == 0 and second == first
    assert "h_ris = 75" in first and "seed = 11" in first


def test_later_sources_override(tmp_path, capsys):
    path = tmp_path / "c.cfg"
    path.write_text("num_re = 32\nseed = 4\n")
    _, out, _ = run(capsys, "analytic", "--config", str(path), "--set", "num_re=16",
                    "--print-config")
    assert "num_re = 16" in out and "seed = 4" in out


@pytest.mark.parametrize("argv, where", [
    (["--set", "sweep=h_ris", "--set", "values="], "--set:2: values"),
    (["--set", "values=1,2"], "values"),
    (["--set", "bogus_key=1"], "bogus_key"),
    (["--set", "h_ris=-5"], "h_ris"),
    (["--set", "sweep=lambda_b", "--set", "values=1e-4,-1"], "lambda_b"),
    (["--set", "num_re"], "--set:1"),
    (["--threads", "0"], "--threads"),
])
def test_config_errors_exit_2(capsys, argv, where):
    code, out, err = run(capsys, "analytic", *argv)
    assert code == cli.EXIT_CONFIG and out == ""
    assert where in err


def test_config_file_error_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("# header\nnum_re = 64\nlambda_ris = zero\n")
    code, _, err = run(capsys, "analytic", "--config", str(path))
    assert code == 2 and f"{path}:3: lambda_ris" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "analytic", "--config", str(tmp_path / "nope.cfg"))
    assert code == 2 and "nope.cfg" in err


def test_unknown_preset(capsys):
    code, _, _ = run(capsys, "analytic", "--preset", "fig9")
    assert code == 2


@pytest.mark.parametrize("name", cli.PRESETS)
def test_presets_build(name):
    entries = cli.read_entries(cli.load_preset(name), name)
    cfg = cli.build_config(entries)
    assert list(cli.iter_points(cfg))


# ---------------------------------------------------------------- output

def test_analytic_csv(capsys):
    code, out, _ = run(capsys, "analytic", "--set", "sweep=num_re", "--set", "values=64,128",
                       "--set", "thresholds_db=0")
    assert code == 0
    assert out.startswith("# rishap ") and "# paths = analytic" in out
    rows = table(out)
    assert [r["sweep_value"] for r in rows] == ["64", "128"]
    assert float(rows[1]["an_coverage"]) > float(rows[0]["an_coverage"])
    assert all(r["mc_coverage"] == "" and r["status"] == "ok" for r in rows)


def test_series_outer_sweep_inner(capsys):
    _, out, _ = run(capsys, "analytic", "--set", "series.num_re=64,128",
                    "--set", "sweep=h_ris", "--set", "values=25,50,100",
                    "--set", "thresholds_db=0")
    rows = table(out)
    assert [r["series"] for r in rows] == ["num_re=64"] * 3 + ["num_re=128"] * 3
    assert [r["sweep_value"] for r in rows[:3]] == ["25", "50", "100"]


def test_threshold_sweep(capsys):
    _, out, _ = run(capsys, "analytic", "--set", "sweep=s_th_db", "--set", "values=-10:10:10")
    rows = table(out)
    assert [r["s_th_db"] for r in rows] == ["-10", "0", "10"]
    cov = [float(r["an_coverage"]) for r in rows]
    assert cov[0] > cov[1] > cov[2]


def test_compare_json_with_histograms(tmp_path, capsys):
    out_path = tmp_path / "o.json"
    code, out, _ = run(capsys, "compare", "--trials", "400", "--seed", "2", "--format", "json",
                       "--set", "thresholds_db=0", "--out", str(out_path))
    assert code == 0 and out == ""
    doc = json.loads(out_path.read_text())
    assert doc["paths"] == "both" and doc["columns"] == list(cli.COLUMNS)
    row = doc["rows"][0]
    assert row["mc_trials"] == 400 and row["status"] in ("pass", "fail")
    h = doc["histograms"][0]
    assert len(h["edges"]) == len(h["density"]) + 1 == len(h["analytic_pdf"]) + 1


def test_strict_compare_exit_4(capsys):
    argv = ["compare", "--trials", "300", "--set", "thresholds_db=0", "--set", "tol_ks=1e-9"]
    code, out, _ = run(capsys, *argv)
    assert code == 0 and "ks_fail" in out
    code, _, _ = run(capsys, *argv, "--strict")
    assert code == cli.EXIT_COMPARE


def test_numerical_failure_exit_3(monkeypatch, capsys):
    real = analytic.evaluate

    def flaky(params, *a, **k):
        if params.num_re == 128:
            raise ArithmeticError("forced")
        return real(params, *a, **k)

    monkeypatch.setattr(analytic, "evaluate", flaky)
    code, out, err = run(capsys, "analytic", "--set", "sweep=num_re",
                         "--set", "values=64,128,256", "--set", "thresholds_db=0")
    assert code == cli.EXIT_NUMERIC and "forced" in err
    assert [r["status"] for r in table(out)] == ["ok", "error", "ok"]


def test_simulate_deterministic_across_threads(capsys):
    argv = ["simulate", "--trials", "2500", "--seed", "8", "--set", "num_re=64",
            "--set", "sweep=h_ris", "--set", "values=50,100"]
    _, one, _ = run(capsys, *argv, "--threads", "1")
    _, two, _ = run(capsys, *argv, "--threads", "2")
    _, again, _ = run(capsys, *argv, "--threads", "1")
    assert body(one) == body(two) == body(again)
    _, other, _ = run(capsys, *argv[:4], "9", *argv[5:])
    assert body(other) != body(one)


def test_scene_dump(capsys):
    code, out, _ = run(capsys, "scene-dump", "--set", "lambda_hap=2e-4", "--seed", "3",
                       "--trial", "2")
    assert code == 0
    doc = json.loads(out)
    assert doc["trial"] == 2 and doc["seed"] == 3 and doc["window_radius"] > 0
    assert len(doc["hap_visible"]) == len(doc["haps"])
    code, again, _ = run(capsys, "scene-dump", "--set", "lambda_hap=2e-4", "--seed", "3",
                         "--trial", "2")
    assert again == out


def test_scene_dump_rejects_negative_trial(capsys):
    code, _, _ = run(capsys, "scene-dump", "--trial", "-1")
    assert code == 2


def test_argparse_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--mode", "raytrace"])
    assert exc.value.code == 2
