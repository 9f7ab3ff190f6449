import csv
import io
import json

import pytest
import yaml

from epipanel.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from epipanel.regions import CASE_REGIONS


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text("utf-8"))))


def test_ingest_prints_manifest_and_refuses_overwrite(capsys, synthetic_files, tmp_path):
    args = ["ingest", "--snapshot", tmp_path / "snap"]
    for name, path in synthetic_files.items():
        args += ["--source", f"{name}={path}"]
    code, out, _ = run(capsys, *args)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert len(doc["mortality_regions"]) == 20
    code, _, err = run(capsys, *args)
    assert code == EXIT_USAGE and "never overwritten" in err


def test_ingest_bad_source(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,region,confirmed,deaths,tests\n2020-03-01,Lazio,x,0,1\n")
    code, _, err = run(capsys, "ingest", "--snapshot", tmp_path / "s", "--source", f"hub={bad}")
    assert code == EXIT_DATA and "line 2" in err
    assert not (tmp_path / "s").exists()
    code, _, err = run(capsys, "ingest", "--snapshot", tmp_path / "s", "--source", f"nomap={bad}")
    assert code == EXIT_USAGE


def test_usage_errors_write_nothing(capsys, snapshot_dir, tmp_path):
    out = tmp_path / "out"
    cases = [
        ("regress", "--snapshot", tmp_path / "missing", "--out", out),
        ("regress", "--snapshot", snapshot_dir, "--out", out, "--config", tmp_path / "nope.yaml"),
        ("regress", "--snapshot", snapshot_dir, "--out", out, "--regions", "Atlantis"),
        ("curves", "--snapshot", snapshot_dir, "--out", out, "--kind", "NotAKind"),
        ("regress", "--snapshot", snapshot_dir, "--out", out, "--workers", "0"),
    ]
    for argv in cases:
        code, _, err = run(capsys, *argv)
        assert code == EXIT_USAGE, argv
        assert "error" in err
    assert not out.exists()
    with pytest.raises(SystemExit) as e:
        main(["regress", "--bogus"])
    assert e.value.code == EXIT_USAGE


def test_corrupt_snapshot_is_data_error(capsys, snapshot_dir, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    for f in snapshot_dir.iterdir():
        (bad / f.name).write_bytes(f.read_bytes())
    (bad / "mortality.csv").write_bytes(b"region\n")
    code, _, err = run(capsys, "quality", "--snapshot", bad, "--out", tmp_path / "o")
    assert code == EXIT_DATA and "checksum" in err


def test_quality_flags_planted_anomalies(capsys, snapshot_dir, tmp_path):
    code, out, _ = run(capsys, "quality", "--snapshot", snapshot_dir, "--out", tmp_path)
    assert code == EXIT_OK
    found = {(r["region"], r["date"], r["kind"]) for r in rows(tmp_path / "quality" / "quality_report.csv")}
    assert ("Basilicata", "2020-03-09", "zero_tests_spike") in found
    assert ("Calabria", "2020-04-03", "zero_tests_spike") in found
    assert ("Sardegna", "2020-04-20", "fraction_exceeds_one") in found


def test_regress_outputs_and_notices(capsys, snapshot_dir, tmp_path):
    code, out, err = run(
        capsys, "regress", "--snapshot", snapshot_dir, "--out", tmp_path, "--no-charts",
        "--regions", "Lombardia,Emilia-Romagna,Molise",
    )  # fmt: skip
    assert code == EXIT_OK
    assert "Molise" in err and "regression_ineligible" in err
    fits = rows(tmp_path / "regress" / "fits.csv")
    assert {r["region"] for r in fits} == {"Lombardia", "Emilia-Romagna"}
    assert {r["series_kind"] for r in fits} == {"daily_fraction", "daily_confirmed", "daily_tests", "cumulative_fraction"}
    removed = rows(tmp_path / "regress" / "removals.csv")
    er = [r["date"] for r in removed if r["region"] == "Emilia-Romagna" and r["entry"] == "removal"]
    assert er == ["2020-03-28", "2020-03-29", "2020-03-30"]
    eff = yaml.safe_load((tmp_path / "effective_config.yaml").read_text())
    assert eff["regions"] == ["Lombardia", "Emilia-Romagna", "Molise"]
    assert "Lombardia" in out


def test_curves_kind_over_all_regions(capsys, snapshot_dir, tmp_path):
    code, out, _ = run(
        capsys, "curves", "--snapshot", snapshot_dir, "--out", tmp_path,
        "--kind", "ConfirmedOverTests", "--regions", "all", "--no-charts",
    )  # fmt: skip
    assert code == EXIT_OK
    table = rows(tmp_path / "curves" / "curves.csv")
    assert {r["kind"] for r in table} == {"ConfirmedOverTests"}
    assert len({r["region"] for r in table}) == 21 == len(CASE_REGIONS)


def test_bolzano_gets_notice_not_mortality_curves(capsys, snapshot_dir, tmp_path):
    code, _, err = run(
        capsys, "curves", "--snapshot", snapshot_dir, "--out", tmp_path, "--regions", "P.A. Bolzano", "--no-charts"
    )
    assert code == EXIT_OK
    assert "reported jointly" in err
    kinds = {r["kind"] for r in rows(tmp_path / "curves" / "curves.csv")}
    assert not kinds & {f"CovidFrac{s}" for s in ("CumulDeaths", "CumulDeathsWrtPast", "ExcessDeaths", "WeeklyDeaths")}
    assert "ConfirmedOverTests" in kinds and "DPConfirmedScaled" in kinds


def test_italy_rollup_curves(capsys, snapshot_dir, tmp_path):
    code, _, _ = run(
        capsys, "curves", "--snapshot", snapshot_dir, "--out", tmp_path, "--regions", "Italy", "--no-charts"
    )
    assert code == EXIT_OK
    kinds = {r["kind"] for r in rows(tmp_path / "curves" / "curves.csv") if r["region"] == "Italy"}
    assert "Deaths2020WrtPast" in kinds
    assert (tmp_path / "curves" / "peaks.csv").exists()


def test_outputs_are_byte_identical_across_runs(capsys, snapshot_dir, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        code, _, _ = run(capsys, "all", "--snapshot", snapshot_dir, "--out", out, "--regions", "Lazio,Veneto")
        assert code == EXIT_OK
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert any(f.suffix == ".svg" for f in files)
    assert files == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    for f in files:
        if f.name == "effective_config.yaml":
            continue  # records the output path
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_workers_do_not_change_results(capsys, snapshot_dir, tmp_path):
    for w in ("1", "3"):
        run(capsys, "regress", "--snapshot", snapshot_dir, "--out", tmp_path / w, "--workers", w, "--no-charts")
    a = (tmp_path / "1" / "regress" / "fits.csv").read_bytes()
    assert a == (tmp_path / "3" / "regress" / "fits.csv").read_bytes()


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest", "--seed", "11", "--trials", "4000")
    doc = json.loads(out)
    assert doc["trials"] == 4000
    assert abs(doc["band_coverage"] - 0.95) < 0.02
    assert code in (EXIT_OK, EXIT_DATA)
