"""Tests for config parsing, presets, CSV output and the CLI."""

import csv
import json
import math

import numpy as np
import pytest

from combdtc import cli, harness
from combdtc.errors import ConfigError, InvalidParameter, NumericalFailure
from combdtc.harness import (
    ExperimentSpec,
    load_spec,
    parse_config,
    preset_spec,
    resolve_points,
    run_experiment,
    validate_spec,
)

TINY = """\
n_sites = 3
epsilon = 0.15
gamma = 0.5
tau = 0.005
periods = 3
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ #
# parse_config                                                       #
# ------------------------------------------------------------------ #


class TestParseConfig:
    def test_defaults(self):
        spec = parse_config("n_sites = 4\n")
        ((_, _, p),) = resolve_points(spec)
        assert (p.jz, p.period, p.hx, p.jx, p.tau, p.phi) == (1.0, 0.05, 0.1, 0.1, 2e-4, math.pi)
        assert (p.bin_dim, p.bins_per_delay) == (2, 1)
        assert spec.engine == "comb" and spec.run.periods == 100

    def test_empty_config_names_missing_key(self):
        with pytest.raises(ConfigError, match="n_sites"):
            parse_config("")

    def test_unknown_key_has_line_number(self):
        with pytest.raises(ConfigError, match="line 3: unknown key 'gama'"):
            parse_config("n_sites = 2\n# comment\ngama = 1\n")

    def test_invalid_value_has_line_number(self):
        with pytest.raises(ConfigError, match="line 2: invalid value for epsilon"):
            parse_config("n_sites = 2\nepsilon = abc\n")

    def test_non_integer_site_count(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("n_sites = 2.5\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="line 2: duplicate key"):
            parse_config("n_sites = 2\nn_sites = 3\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("n_sites 2\n")

    def test_delay_mismatch_prints_both_values(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("n_sites = 2\ntau = 2e-4\ndt = 1e-4\nbins_per_delay = 1\n")
        msg = str(exc.value)
        assert "0.0002" in msg and "0.0001" in msg

    def test_guard_violation_is_config_error(self):
        with pytest.raises(ConfigError, match="individual reservoirs"):
            parse_config("n_sites = 3\ngamma = 1\nmode = global\n")

    def test_pi_values(self):
        spec = parse_config("n_sites = 2\nphi = 0.95pi\n")
        assert spec.params["phi"] == pytest.approx(0.95 * math.pi)
        spec = parse_config("n_sites = 2\nphi = 2*pi\n")
        assert spec.params["phi"] == pytest.approx(2 * math.pi)

    def test_sweep(self):
        spec = parse_config("n_sites = 2\nsweep.gamma_l = 0, 0.5, 1\n")
        assert spec.sweep == [("gamma_l", [0.0, 0.5, 1.0])]
        assert len(resolve_points(spec)) == 3

    def test_sweep_over_unknown_parameter(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("n_sites = 2\nsweep.colour = 1, 2\n")

    def test_unknown_engine(self):
        with pytest.raises(ConfigError, match="line 2: unknown engine"):
            parse_config("n_sites = 2\nengine = magic\n")


# ------------------------------------------------------------------ #
# presets                                                            #
# ------------------------------------------------------------------ #


class TestPresets:
    def test_fig4a(self):
        spec = preset_spec("fig4a")
        assert spec.engine == "dense_qsse"
        points = resolve_points(spec)
        assert [a["mode"] for _, a, _ in points] == ["individual", "global", "markovian"]
        for _, a, p in points:
            assert p.gamma_l == 1.0
            assert p.gamma_r == (0.0 if a["mode"] == "markovian" else 1.0)
        assert [p.reservoir for _, _, p in points] == ["individual", "global", "global"]

    def test_fig4b_phases(self):
        spec = preset_spec("fig4b")
        phis = [p.phi / math.pi for _, _, p in resolve_points(spec)]
        np.testing.assert_allclose(phis, [1.0, 0.95, 0.90])
        assert spec.delta_reference == pytest.approx(math.pi)

    def test_fig1(self):
        points = resolve_points(preset_spec("fig1"))
        assert [p.gamma_l for _, _, p in points] == [0.0, 0.3, 1.0]
        assert all(p.n_sites == 40 and p.epsilon == 0.15 for _, _, p in points)

    def test_fig3_presets(self):
        a = preset_spec("fig3a")
        assert a.engine == "dense_qsse"
        assert all(p.gamma_r == 0 and p.reservoir == "global" for _, _, p in resolve_points(a))
        b = preset_spec("fig3b")
        assert b.realizations == 8 and b.engine == "dense_qsse"
        assert all(p.phi == math.pi and p.reservoir == "global" for _, _, p in resolve_points(b))

    def test_override(self):
        spec = preset_spec("fig4b", ["n_sites=3", "periods=7"])
        assert spec.params["n_sites"] == 3 and spec.run.periods == 7

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            preset_spec("fig4b", ["n_sites"])
        with pytest.raises(ConfigError):
            preset_spec("nope")


# ------------------------------------------------------------------ #
# run_experiment                                                     #
# ------------------------------------------------------------------ #


class TestRunExperiment:
    def test_csv_columns_and_bound(self, tmp_path):
        spec = parse_config(TINY + "record_sz = true\n")
        spec.output = str(tmp_path)
        manifest = run_experiment(spec)
        (entry,) = manifest["runs"]
        rows = read_rows(tmp_path / entry["file"])
        assert list(rows[0]) == ["period", "time", "m_mean", "m_std", "norm_error", "max_bond", "sz_0", "sz_1", "sz_2"]
        assert len(rows) == 4
        for r in rows:
            assert abs(float(r["m_mean"])) <= 1 + 10 * float(r["norm_error"])

    def test_float_format_and_line_endings(self, tmp_path):
        spec = parse_config(TINY)
        spec.output = str(tmp_path)
        run_experiment(spec)
        raw = (tmp_path / "custom_run.csv").read_bytes()
        assert b"\r" not in raw
        m = raw.decode().splitlines()[2].split(",")[2]
        assert len(m.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) <= 17
        assert float(m) == float(format(float(m), ".17g"))

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for k in range(2):
            spec = parse_config(TINY)
            spec.output = str(tmp_path / str(k))
            run_experiment(spec)
            outs.append((tmp_path / str(k) / "custom_run.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_worker_count_does_not_change_output(self, tmp_path):
        outs = []
        for w in (1, 2):
            spec = parse_config(TINY + "realizations = 3\n")
            spec.output = str(tmp_path / str(w))
            run_experiment(spec, workers=w)
            outs.append((tmp_path / str(w) / "custom_run.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_manifest_round_trip(self, tmp_path):
        spec = parse_config(TINY + "sweep.phi = pi, 0.5pi\n")
        spec.output = str(tmp_path / "a")
        manifest = run_experiment(spec)
        assert manifest["units"].startswith("energies in units of jz")
        assert manifest["seed"] == 0
        again = load_spec(tmp_path / "a" / "manifest.json")
        again.output = str(tmp_path / "b")
        run_experiment(again)
        for entry in manifest["runs"]:
            assert (tmp_path / "a" / entry["file"]).read_bytes() == (tmp_path / "b" / entry["file"]).read_bytes()

    def test_manifest_records_resolved_params(self, tmp_path):
        spec = parse_config(TINY)
        spec.output = str(tmp_path)
        run_experiment(spec)
        data = json.loads((tmp_path / "manifest.json").read_text())
        params = data["runs"][0]["params"]
        assert params["gamma_l"] == 0.5 and params["gamma_r"] == 0.5 and params["n_sites"] == 3

    def test_delta_column(self, tmp_path):
        spec = preset_spec("fig4b", ["n_sites=2", "periods=2", "tau=0.005"])
        spec.output = str(tmp_path)
        manifest = run_experiment(spec)
        files = [e["file"] for e in manifest["runs"]]
        assert len(files) == 3
        ref = read_rows(tmp_path / files[0])
        assert all(float(r["delta_m"]) == 0.0 for r in ref)
        other = read_rows(tmp_path / files[2])
        for r, r0 in zip(other, ref):
            assert float(r["delta_m"]) == pytest.approx(abs(float(r["m_mean"]) - float(r0["m_mean"])), abs=1e-15)

    def test_delta_reference_must_be_swept(self):
        with pytest.raises(ConfigError, match="delta_reference"):
            parse_config("n_sites = 2\nsweep.phi = pi, 0.5pi\ndelta_reference = 0.3\n")

    def test_partial_outputs_removed(self, tmp_path, monkeypatch):
        spec = parse_config(TINY + "sweep.phi = pi, 0.5pi\n")
        spec.output = str(tmp_path / "out")
        real = harness.write_csv
        calls = []

        def flaky(*args, **kw):
            calls.append(1)
            if len(calls) == 2:
                raise NumericalFailure("injected")
            return real(*args, **kw)

        monkeypatch.setattr(harness, "write_csv", flaky)
        with pytest.raises(NumericalFailure):
            run_experiment(spec)
        assert not (tmp_path / "out").exists()

    def test_validate_returns_points(self):
        spec = ExperimentSpec(params={"n_sites": 2}, sweep=[("gamma", [0.0, 1.0])])
        assert len(validate_spec(spec)) == 2

    def test_missing_site_count(self):
        with pytest.raises(InvalidParameter, match="missing required key 'n_sites'"):
            resolve_points(ExperimentSpec())


# ------------------------------------------------------------------ #
# CLI                                                                #
# ------------------------------------------------------------------ #


class TestCli:
    def test_run_ok(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY)
        assert cli.main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "custom_run.csv").exists()
        assert "custom_run.csv" in capsys.readouterr().out

    def test_validate_ok(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY)
        assert cli.main(["validate", str(cfg)]) == 0
        assert capsys.readouterr().out.startswith("ok: 1 run(s)")

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n_sites = 2\nfoo = 1\n")
        assert cli.main(["validate", str(cfg)]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_file_exit(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 1

    def test_resource_guard_exit(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n_sites = 9\ngamma = 1\nengine = lindblad\nmode = markovian\n")
        assert cli.main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 2
        assert "resource guard" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_numerical_failure_exit(self, tmp_path, monkeypatch):
        def boom(*args, **kw):
            raise NumericalFailure("norm drift")

        monkeypatch.setattr(cli, "run_experiment", boom)
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY)
        assert cli.main(["run", str(cfg)]) == 3

    def test_preset_with_override(self, tmp_path):
        out = tmp_path / "p"
        rc = cli.main(["preset", "fig3a", "--override", "n_sites=2", "--override", "periods=1",
                       "--override", "tau=0.005", "--override", f"output={out}"])
        assert rc == 0
        assert len(list(out.glob("fig3a_*.csv"))) == 3
