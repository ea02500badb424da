import csv
import json

import numpy as np
import pytest
import yaml

from subsea_capacity.cli import main
from subsea_capacity.config import (
    ConfigError,
    build_config,
    cached_sweep,
    dump_config,
    load_config,
    load_results,
    persist_results,
    report_for,
    run_sweep,
    spatial_dims_curve,
)
from subsea_capacity.capacity import FeedSpec
from subsea_capacity.gn import IntegrityError


def tiny(tmp_path, **sections):
    raw = {
        "link": {"n_channels": 6, "first_wavelength_nm": 1545.0},
        "swarm": {"particles": 6, "max_iter": 4, "stall": 4},
        "newton": {"max_iter": 1},
        "sweep": {"kind": "pump", "values": [40.0, 60.0]},
        "run": {"tensor_cache": str(tmp_path / "cache"), "out": str(tmp_path / "res")},
    }
    for sec, vals in sections.items():
        raw.setdefault(sec, {}).update(vals)
    return raw


@pytest.fixture(scope="module")
def tiny_result(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    cfg = build_config(tiny(tmp))
    return cfg, run_sweep(cfg)


class TestSchema:
    def test_defaults(self):
        cfg = build_config({})
        assert cfg.link.n_channels == 150
        assert cfg.link.spans == 287
        assert cfg.pump_power == pytest.approx(0.06)
        assert cfg.link.coding_gap == pytest.approx(10**-0.1)
        assert cfg.link.edf.pump_absorption == pytest.approx(0.96)

    def test_unit_conversion(self):
        cfg = build_config({"fiber": {"attenuation_dB_per_km": 0.165}})
        assert cfg.fiber.alpha == pytest.approx(3.80e-5, rel=2e-3)

    def test_round_trip(self, tmp_path):
        cfg = build_config(tiny(tmp_path))
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(cfg))
        again = load_config(p)
        assert again.to_dict() == cfg.to_dict()
        assert again.config_hash() == cfg.config_hash()

    def test_hash_ignores_output_settings(self, tmp_path):
        a = build_config(tiny(tmp_path))
        b = a.with_updates(run={"out": "elsewhere", "format": "csv", "threads": 3})
        c = a.with_updates(link={"pump_mW": 61.0})
        assert a.config_hash() == b.config_hash() != c.config_hash()

    @pytest.mark.parametrize("raw,match", [
        ({"link": {"channel_spacing_GHz": -50}}, "channel_spacing_GHz must be > 0"),
        ({"link": {"colour": 1}}, "unknown key"),
        ({"optics": {}}, "unknown section"),
        ({"link": {"n_channels": 1.5}}, "integer"),
        ({"link": {"nonlinear": "yes"}}, "true or false"),
        ({"sweep": {"values": [3, 2]}}, "increasing"),
        ({"sweep": {"kind": "voltage"}}, "sweep.kind"),
        ({"sweep": {"kind": "spatial_dims", "values": [1.5, 2]}}, "integers"),
        ({"run": {"format": "xml"}}, "run.format"),
        ({"run": {"threads": 0}}, "threads"),
        ({"edf": {"table": "/nonexistent.csv"}}, "cannot read"),
        ({"link": {"total_length_km": 1000.5}}, "whole number"),
        ({"swarm": {"particles": 1}}, "particles"),
    ])
    def test_rejections(self, raw, match):
        with pytest.raises(ConfigError, match=match):
            build_config(raw)

    def test_relative_table_path(self, tmp_path):
        from subsea_capacity.config import default_edf_table

        (tmp_path / "t.csv").write_text(default_edf_table().read_text())
        (tmp_path / "c.yaml").write_text(yaml.safe_dump({"edf": {"table": "t.csv"}}))
        assert load_config(tmp_path / "c.yaml").edf_table == tmp_path / "t.csv"

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("link: [unclosed")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(p)


class TestPersistence:
    def test_reload_reproduces_report(self, tiny_result, tmp_path):
        cfg, res = tiny_result
        (path,) = persist_results(res, tmp_path / "r", "json", cfg)
        back = load_results(path, expected_hash=cfg.config_hash())
        assert back.kind == "pump" and back.seed == cfg.seed
        np.testing.assert_allclose(back.wavelengths, res.wavelengths, rtol=1e-12)
        for a, b in zip(res.points, back.points):
            assert b.hard_capacity == a.hard_capacity
            np.testing.assert_array_equal(b.powers_dbm, a.powers_dbm)
            ra, rb = report_for(cfg, a), report_for(cfg, b)
            assert rb.hard_capacity == ra.hard_capacity
            assert rb.smoothed_capacity == ra.smoothed_capacity
        doc = json.loads(path.read_text())
        assert doc["metadata"]["config_hash"] == cfg.config_hash()
        assert set(doc["metadata"]["versions"]) >= {"numpy", "scipy", "python"}
        assert doc["config"]["link"]["n_channels"] == 6

    def test_csv_rows_per_value_and_channel(self, tiny_result, tmp_path):
        cfg, res = tiny_result
        paths = persist_results(res, tmp_path / "r", "csv", cfg)
        names = sorted(p.name for p in paths)
        assert names == ["r_allocation.csv", "r_summary.csv"]
        text = (tmp_path / "r_allocation.csv").read_text().splitlines()
        meta = [ln for ln in text if ln.startswith("#")]
        assert any("config_hash" in ln for ln in meta)
        rows = list(csv.DictReader([ln for ln in text if not ln.startswith("#")]))
        assert len(rows) == 2 * 6
        assert {float(r["axis_value"]) for r in rows} == {0.04, 0.06}

    def test_refuses_foreign_results(self, tiny_result, tmp_path):
        cfg, res = tiny_result
        (path,) = persist_results(res, tmp_path / "r", "json", cfg)
        other = cfg.with_updates(link={"pump_mW": 10.0})
        with pytest.raises(IntegrityError, match="refusing"):
            load_results(path, expected_hash=other.config_hash())
        with pytest.raises(IntegrityError, match="resume"):
            run_sweep(other, resume=res)

    def test_resume_reuses_points(self, tiny_result):
        cfg, res = tiny_result
        again = run_sweep(cfg, resume=res)
        assert again.points[0] is res.points[0]

    def test_cached_sweep_is_keyed_by_hash(self, tiny_result, tmp_path):
        cfg, res = tiny_result
        first = cached_sweep(cfg, tmp_path)
        files = list(tmp_path.glob("pump_*.json"))
        assert [f.name for f in files] == [f"pump_{cfg.config_hash()}.json"]
        again = cached_sweep(cfg, tmp_path)
        assert [p.hard_capacity for p in again.points] == [p.hard_capacity for p in first.points]
        other = cfg.with_updates(link={"pump_mW": 40.0}, sweep={"values": [40.0]})
        cached_sweep(other, tmp_path)
        assert len(list(tmp_path.glob("pump_*.json"))) == 2

    def test_failed_point_is_recorded(self, tmp_path):
        cfg = build_config(tiny(tmp_path, sweep={"values": [0.0, 40.0]}, link={"nonlinear": False}))
        res = run_sweep(cfg)
        bad, good = res.points
        assert "no pump power" in bad.error and good.error is None
        (path,) = persist_results(res, tmp_path / "r", "json", cfg)
        back = load_results(path)
        assert back.points[0].error == bad.error
        assert np.isnan(back.points[0].hard_capacity)
        assert back.points[1].hard_capacity == good.hard_capacity


class TestSweeps:
    def test_span_sweep_keeps_total_pump(self, tmp_path):
        cfg = build_config(tiny(tmp_path, sweep={"kind": "span_length", "values": [40.0, 70.0]},
                               link={"total_length_km": 1400.0, "nonlinear": False}))
        res = run_sweep(cfg)
        for p, spans in zip(res.points, (35, 20)):
            assert p.pump_power * spans == pytest.approx(14.35)
            assert p.error is None

    def test_spatial_dims_curve(self):
        feed = FeedSpec()
        pumps = [0.01, 0.05, 0.1, 2.0]
        caps = [10e12, 30e12, 40e12, 60e12]
        out = spatial_dims_curve(pumps, caps, feed, 14350, 287, [1, 10], [0.1])
        c = out[0.1]
        pp1 = 0.4 * (2508.710801393728 / (2 * 287) - 0.1)
        assert c["pump_power"][0] == pytest.approx(pp1, rel=1e-12)
        expect = 10 * np.interp(c["pump_power"][1], [0] + pumps, [0] + caps)
        assert c["capacity"][1] == pytest.approx(expect, rel=1e-12)
        with pytest.raises(ValueError, match="exceeds"):
            spatial_dims_curve(pumps[:2], caps[:2], feed, 14350, 287, [1], [0.1])


class TestCli:
    def test_optimize_and_validate(self, tmp_path, capsys):
        cfgp = tmp_path / "c.yaml"
        cfgp.write_text(yaml.safe_dump(tiny(tmp_path, link={"total_length_km": 500.0})))
        out = tmp_path / "opt"
        assert main(["optimize", "--config", str(cfgp), "--out", str(out), "--pump-mW", "50"]) == 0
        text = capsys.readouterr().out
        assert "hard" in text and "wrote" in text
        res = load_results(out.with_suffix(".json"))
        assert res.points[0].pump_power == pytest.approx(0.05)
        rc = main(["validate-link", "--config", str(cfgp), "--results", str(out.with_suffix(".json")),
                   "--model", "semi", "--out", str(tmp_path / "val"), "--format", "csv"])
        assert rc == 0
        assert (tmp_path / "val_chain.csv").is_file() and (tmp_path / "val_se.csv").is_file()

    def test_error_exit_code(self, tmp_path, capsys):
        cfgp = tmp_path / "c.yaml"
        cfgp.write_text(yaml.safe_dump({"link": {"spacing": 1}}))
        assert main(["optimize", "--config", str(cfgp)]) == 2

    def test_validate_needs_allocation(self, tmp_path):
        cfgp = tmp_path / "c.yaml"
        cfgp.write_text(yaml.safe_dump(tiny(tmp_path)))
        assert main(["validate-link", "--config", str(cfgp)]) == 2
