import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degparab.harness import cli_main
from degparab.harness.config import (KIND_DEFAULTS, STUDY_KINDS, ConfigError,
                                     ExperimentConfig, default_config, emit_config,
                                     load_config, parse_config)
from degparab.harness.output import format_cell, write_result
from degparab.harness.studies import (StudyFailure, fit_exponent, gmres_stats, run_study)
from degparab.records import RunRecord


def small(kind, **kw):
    return dataclasses.replace(default_config(kind), **kw).validate()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration --------------------------------------------------------

def test_minimal_config_echoes_defaults(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[study]\nkind = porous-convergence\n")
    cfg = load_config(path)
    assert cfg == default_config("porous-convergence")
    assert cfg.N == (32, 64, 128, 256, 512) and cfg.m == 4.0 and cfg.T == 20 / 32
    assert cfg.gmres_rtol == 1e-6 and cfg.format == "csv"


def test_kind_defaults_applied():
    cfg = parse_config("[study]\nkind = sulfation-2d\n")
    assert cfg.dim == 2 and cfg.N == (32,) and cfg.a == 10.0


def test_small_N_names_key():
    text = "[study]\nkind = porous-convergence\nN = 4, 8\n"
    with pytest.raises(ConfigError, match="N") as info:
        parse_config(text)
    assert info.value.key == "N" and info.value.line == 3


def test_unknown_key_named_with_line():
    text = "[study]\nkind = porous-convergence\n\n[porous]\nm = 3\nmass = 2\n"
    with pytest.raises(ConfigError, match="mass") as info:
        parse_config(text)
    assert info.value.line == 6 and "line 6" in str(info.value)


def test_key_in_wrong_section():
    with pytest.raises(ConfigError, match=r"belongs in \[sulfation\]"):
        parse_config("[porous]\na = 3\n")


def test_parse_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("[study]\nkind = porous-convergence\nthis line is garbage\n")
    assert info.value.line == 3


def test_missing_section_header():
    with pytest.raises(ConfigError, match="section"):
        parse_config("kind = porous-convergence\n")


def test_bad_value():
    with pytest.raises(ConfigError, match="lam") as info:
        parse_config("[study]\nkind = porous-convergence\n[porous]\nlam = fast\n")
    assert info.value.line == 4


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


@pytest.mark.parametrize("kind", STUDY_KINDS)
def test_round_trip_defaults(kind):
    cfg = default_config(kind)
    assert parse_config(emit_config(cfg)) == cfg


@given(kind=st.sampled_from(STUDY_KINDS),
       N=st.lists(st.integers(8, 2048), min_size=1, max_size=5),
       T=st.floats(1e-3, 10), gmres_rtol=st.floats(1e-12, 1e-2),
       a=st.floats(0, 1e5), dt=st.one_of(st.none(), st.floats(1e-5, 1)),
       fmt=st.sampled_from(["csv", "json"]), jobs=st.integers(1, 8))
def test_round_trip_property(kind, N, T, gmres_rtol, a, dt, fmt, jobs):
    base = default_config(kind)
    snaps = tuple(t for t in base.snapshot_times if t <= T)
    cfg = dataclasses.replace(base, N=tuple(N), T=T, gmres_rtol=gmres_rtol, a=a, dt=dt,
                              format=fmt, jobs=jobs, snapshot_times=snaps).validate()
    assert parse_config(emit_config(cfg)) == cfg


# -- records and helpers --------------------------------------------------

def test_run_record_ordering():
    RunRecord(1, 0.1, 3, 2, 2.5, 3)
    with pytest.raises(ValueError):
        RunRecord(1, 0.1, 3, 4, 2.5, 3)


def test_fit_exponent():
    N = np.array([32, 64, 128])
    assert fit_exponent(N, 3 * N ** 0.5) == pytest.approx(0.5)
    assert np.isnan(fit_exponent([32], [1.0]))


def test_gmres_stats_weights_by_solves():
    recs = [RunRecord(1, 0.1, 1, 4, 4.0, 4), RunRecord(2, 0.2, 3, 1, 2.0, 3)]
    stats = gmres_stats(recs)
    assert stats == {"gmres_min": 1, "gmres_avg": 2.5, "gmres_max": 4, "newton_avg": 2.0}


def test_format_cell():
    assert format_cell(0.1) == "0.10000000000000001"
    assert float(format_cell(1 / 3)) == 1 / 3
    assert format_cell(None) == "" and format_cell(True) == "true" and format_cell(7) == "7"


# -- studies --------------------------------------------------------------

def test_porous_convergence_2d():
    res = run_study(small("porous-convergence", dim=2, N=(32, 64, 128)))
    assert 0.8 <= res.summary["crank-nicholson_l1_exponent"] <= 1.4
    assert res.summary["cn_below_ie"] is True
    for row in res.tables["errors"]:
        assert row["gmres_min"] <= row["gmres_avg"] <= row["gmres_max"]


def test_sulfation_profile_without_reaction():
    res = run_study(small("sulfation-profile", a=0.0, N=(32,), T=0.1,
                          snapshot_times=(0.05, 0.1)))
    assert all(row["c"] == 1.0 for row in res.tables["profiles"])


def test_sulfation_profile_fast_reaction():
    # implicit Euler keeps s monotone in depth; see the ledger for Crank-Nicholson
    res = run_study(small("sulfation-profile", N=(64,), schemes=("implicit-euler",)))
    rows = res.tables["profiles"]
    fronts = []
    for t in sorted({r["t"] for r in rows}):
        snap = sorted((r for r in rows if r["t"] == t), key=lambda r: r["j"])
        c = np.array([r["c"] for r in snap])
        s = np.array([r["s"] for r in snap])
        assert c[0] < 0.05 and c[-1] > 0.9
        assert np.all(np.diff(c) >= -1e-8)
        assert np.all(np.diff(s) <= 1e-8)
        fronts.append(np.argmax(c > 0.5))
    assert all(b >= a for a, b in zip(fronts, fronts[1:])) and fronts[-1] > fronts[0]


def test_front_positions_quantised():
    fine = None
    for N in (32, 64):
        res = run_study(small("sulfation-front", N=(N,), T=0.125, dt=1 / 256))
        x = np.array([r["x_front"] for r in res.tables["front"]])
        assert len(x) == 32
        assert np.allclose(x * N, np.round(x * N), atol=1e-9)
        fine = x
    # the finer grid resolves positions between the coarse nodes
    assert np.any(np.abs(fine * 32 - np.round(fine * 32)) > 0.25)


def test_sulfation_2d_symmetry_and_corner():
    res = run_study(small("sulfation-2d", N=(16,), T=0.25, preconditioners=("one-v-cycle",)))
    assert res.summary["c_symmetry_error"] <= 1e-10
    assert res.summary["c_corner"] < res.summary["c_mid_edge"]
    assert len(res.tables["fields"]) == 16 * 16


def test_iteration_study_rows():
    res = run_study(small("sulfation-iterations", N=(16, 32), T=0.125,
                          preconditioners=("none", "one-v-cycle")))
    rows = res.tables["iterations"]
    assert [(r["N"], r["preconditioner_mode"]) for r in rows] == [
        (16, "none"), (32, "none"), (16, "one-v-cycle"), (32, "one-v-cycle")]
    assert list(rows[0])[:6] == ["N", "preconditioner_mode", "gmres_min", "gmres_avg",
                                 "gmres_max", "newton_avg"]


def test_parallel_matches_sequential():
    cfg = small("porous-iterations", N=(16, 32), preconditioners=("one-v-cycle",))
    seq = run_study(cfg)
    par = run_study(dataclasses.replace(cfg, jobs=2))
    assert seq.tables == par.tables


def test_study_failure_keeps_partial_results():
    cfg = small("porous-iterations", N=(16, 32), lam=0.5, preconditioners=("one-v-cycle",),
                guard_C=0.25)
    with pytest.raises(StudyFailure, match="step 1") as info:
        run_study(cfg)
    assert info.value.result.partial


# -- output ---------------------------------------------------------------

def test_csv_and_json_agree(tmp_path):
    res = run_study(small("porous-iterations", N=(16, 32), preconditioners=("one-v-cycle",)))
    csv_paths = write_result(res, tmp_path / "c", "csv")
    (json_path,) = write_result(res, tmp_path / "j", "json")
    doc = json.loads(json_path.read_text())
    table = read_csv(tmp_path / "c" / "porous-iterations_iterations.csv")
    header, body = table[0], table[1:]
    assert header == ["N", "preconditioner_mode", "gmres_min", "gmres_avg", "gmres_max",
                      "newton_avg", "mgm_cycles_avg"]
    for row, ref in zip(body, doc["tables"]["iterations"]):
        for key, cell in zip(header, row):
            if isinstance(ref[key], float):
                assert float(cell) == ref[key]
            elif ref[key] is None:
                assert cell == ""
            else:
                assert cell == str(ref[key])
    assert len(csv_paths) == 2
    assert doc["summary"]["partial"] is False
    assert all(r["gmres_min"] <= r["gmres_avg"] <= r["gmres_max"]
               for run in doc["runs"] for r in run["records"])


def test_output_is_deterministic(tmp_path):
    cfg = small("porous-iterations", N=(16,), preconditioners=("none",))
    write_result(run_study(cfg), tmp_path / "a")
    write_result(run_study(cfg), tmp_path / "b")
    name = "porous-iterations_iterations.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r\n" not in (tmp_path / "a" / name).read_bytes()


# -- command line ---------------------------------------------------------

def test_cli_success(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[study]\nkind = porous-iterations\nN = 16, 32\n"
                   "preconditioners = one-v-cycle\n")
    code = cli_main(["iterations", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--quiet"])
    assert code == 0
    assert (tmp_path / "o" / "porous-iterations_iterations.csv").is_file()


def test_cli_json(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[study]\nkind = sulfation-front\nN = 32\nT = 0.125\n"
                   "[sulfation]\ndt = 0.00390625\n")
    code = cli_main(["front", "--config", str(cfg), "--out", str(tmp_path), "--format", "json",
                     "--quiet"])
    assert code == 0
    doc = json.loads((tmp_path / "sulfation-front.json").read_text())
    assert "slope_N32" in doc["summary"]


def test_cli_unknown_subcommand(capsys):
    assert cli_main(["plot"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[study]\nkind = porous-convergence\nN = 4\n")
    assert cli_main(["porous-convergence", "--config", str(cfg)]) == 2
    assert "N" in capsys.readouterr().err


def test_cli_kind_mismatch(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[study]\nkind = sulfation-2d\n")
    assert cli_main(["front", "--config", str(cfg)]) == 2


def test_cli_solver_failure(tmp_path, capsys):
    # an absurd time step: Newton cannot converge in two iterations
    cfg = tmp_path / "c.ini"
    cfg.write_text("[study]\nkind = sulfation-iterations\nN = 16\npreconditioners = one-v-cycle\n"
                   "T = 10\n[sulfation]\na = 10000\ndt = 5\n[solver]\nnewton_max_iter = 2\n")
    code = cli_main(["iterations", "--config", str(cfg), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 1
    assert "step 1" in err
    summary = read_csv(tmp_path / "o" / "sulfation-iterations_summary.csv")
    assert ["partial", "true"] in summary


def test_every_kind_has_defaults():
    assert set(KIND_DEFAULTS) == set(STUDY_KINDS)
    assert ExperimentConfig().validate().kind == "porous-convergence"
