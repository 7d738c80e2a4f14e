import json
import math
import os

import numpy as np
import pytest

from dumbbell import cli
from dumbbell import pipeline as pl
from dumbbell.scaled import ScaledAmplitude

COARSE = dict(eps_sweep=(0.3, 0.2), h0=0.2, grade_levels=6,
              profile_level=0, sweep_level=0, fit_points=9)


def synthetic_record(values_by_eps, name="R3"):
    """Record with a single hand-built ratio series and no solves."""
    sweep = [{"eps": e, "track": "direct", "ratios": {name: v}}
             for e, v in values_by_eps]
    constants = pl.ProfileConstants(
        lam_k0=1.64, d0=0.135, d0_spread=0.0, c_phi=0.337, c_phihat=0.373,
        m_phihat=122.6, a0_phihat=1.075, norm_gamma={1.0: 1.0}, level=0)
    return pl.RunRecord("deadbeef", {}, constants, sweep)


class TestRunConfig:
    def test_sweep_must_decrease(self):
        with pytest.raises(ValueError):
            pl.RunConfig(eps_sweep=(0.2, 0.3)).validate()
        with pytest.raises(ValueError):
            pl.RunConfig(eps_sweep=(0.2, 0.2)).validate()

    def test_small_eps_needs_cascade_mode(self):
        with pytest.raises(ValueError):
            pl.RunConfig(eps_sweep=(0.1, 0.01)).validate()
        pl.RunConfig(eps_sweep=(0.1, 0.01), cascade_only=True).validate()

    def test_single_eps_rejected(self):
        with pytest.raises(ValueError):
            pl.RunConfig(eps_sweep=(0.2,)).validate()

    def test_hash_ignores_io_fields(self):
        a = pl.RunConfig(out_dir="x", jobs=1, cache=True)
        b = pl.RunConfig(out_dir="y", jobs=4, cache=False)
        assert a.hash() == b.hash()
        c = pl.RunConfig(h0=0.2)
        assert a.hash() != c.hash()


class TestVerify:
    def test_converging_series_passes(self):
        eps = [0.3, 0.25, 0.2, 0.15, 0.1]
        rec = synthetic_record([(e, 1.0 + 0.5 * e) for e in eps])
        v = pl.verify(rec)
        assert v["R3"]["verdict"] == "converging"
        assert v["R3"]["pass"]
        assert v["overall_pass"]

    def test_flat_series_fails(self):
        rec = synthetic_record([(0.3, 1.3), (0.2, 1.3), (0.1, 1.3)])
        v = pl.verify(rec)
        assert v["R3"]["verdict"] == "flat"
        assert not v["R3"]["pass"]
        assert not v["overall_pass"]

    def test_diverging_series_fails(self):
        rec = synthetic_record([(0.3, 1.01), (0.2, 1.1), (0.1, 1.4)])
        v = pl.verify(rec)
        assert v["R3"]["verdict"] == "diverging"
        assert not v["overall_pass"]

    def test_converging_but_large_final_fails(self):
        rec = synthetic_record([(0.3, 3.0), (0.2, 2.2), (0.1, 1.6)])
        v = pl.verify(rec)
        assert v["R3"]["verdict"] == "converging"
        assert not v["R3"]["pass"]

    def test_floor_series_passes_despite_slope_noise(self):
        # deviations never rise above the discretization floor: the trend
        # label is meaningless and must not fail the series
        rec = synthetic_record([(0.3, 1.0001), (0.2, 1.0004), (0.1, 1.0002)])
        v = pl.verify(rec)
        assert v["R3"]["at_floor"]
        assert v["R3"]["pass"]

    def test_r1_uses_tighter_guard(self):
        rec = synthetic_record([(0.3, 1.30), (0.2, 1.20), (0.1, 1.10)],
                               name="R1")
        v = pl.verify(rec)
        assert v["R1"]["verdict"] == "converging"
        assert not v["R1"]["pass"]  # final 10% > 5% guard


class TestEmit:
    def test_json_round_trip_bit_exact(self, tmp_path):
        rec = synthetic_record([(0.3, 1.0 + math.pi * 1e-3), (0.2, 1.0002)])
        rec.verdicts = pl.verify(rec)
        paths = pl.emit(rec, str(tmp_path))
        back = pl.load_record(os.path.join(str(tmp_path), "record.json"))
        assert back.to_dict() == rec.to_dict()
        assert back.sweep[0]["ratios"]["R3"] == 1.0 + math.pi * 1e-3

    def test_csv_rows(self, tmp_path):
        eps = [0.3, 0.2, 0.1]
        rec = synthetic_record([(e, 1.0 + e) for e in eps])
        rec.verdicts = pl.verify(rec)
        pl.emit(rec, str(tmp_path), formats=("csv",))
        lines = open(tmp_path / "R3.csv").read().strip().splitlines()
        assert len(lines) == 1 + len(eps)
        assert lines[0] == "series,eps,value,deviation"
        assert float(lines[1].split(",")[1]) == 0.3

    def test_svg_polyline_per_variant(self, tmp_path):
        sweep = [{"eps": e, "track": "direct",
                  "ratios": {"R5[kt=0.5]": 1.0 + e, "R5[kt=1]": 1.0 - e}}
                 for e in (0.3, 0.2, 0.1)]
        rec = synthetic_record([])
        rec.sweep = sweep
        rec.verdicts = pl.verify(rec)
        pl.emit(rec, str(tmp_path), formats=("svg",))
        svg = open(tmp_path / "R5.svg").read()
        assert svg.count("<polyline") == 2
        assert svg.count("<circle") == 6

    def test_scaled_amplitudes_survive_serialization(self, tmp_path):
        rec = synthetic_record([(0.3, 1.1), (0.2, 1.05)])
        amp = ScaledAmplitude.from_float(3.25).scale_exp(-2000.0)
        rec.sweep[0]["htilde_eps"] = amp.to_dict()
        rec.verdicts = pl.verify(rec)
        pl.emit(rec, str(tmp_path))
        back = pl.load_record(os.path.join(str(tmp_path), "record.json"))
        got = ScaledAmplitude.from_dict(back.sweep[0]["htilde_eps"])
        assert got.sign == amp.sign
        assert got.exponent == amp.exponent
        assert got.mantissa == amp.mantissa


class TestProfileCache:
    def test_cache_hit_is_bit_identical(self, tmp_path):
        cfg = pl.RunConfig(out_dir=str(tmp_path), **COARSE)
        first = pl.run_profiles(cfg)
        cache = tmp_path / "cache" / f"profiles-{cfg.hash()}.json"
        assert cache.exists()
        stamp = cache.stat().st_mtime_ns
        second = pl.run_profiles(cfg)
        assert cache.stat().st_mtime_ns == stamp  # not recomputed
        assert first.to_dict() == second.to_dict()

    def test_cache_disabled(self, tmp_path):
        cfg = pl.RunConfig(out_dir=str(tmp_path), cache=False, **COARSE)
        pl.run_profiles(cfg)
        assert not (tmp_path / "cache").exists()


@pytest.fixture(scope="module")
def coarse_record(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("sweep"))
    cfg = pl.RunConfig(out_dir=out, **COARSE)
    record = pl.run_sweep(cfg)
    pl.emit(record, out)
    return cfg, record, out


class TestSweep:
    def test_entries_complete(self, coarse_record):
        _, rec, _ = coarse_record
        assert len(rec.sweep) == 2
        for entry in rec.sweep:
            assert "error" not in entry
            assert entry["track"] == "direct"
            assert 1.0 < entry["lam_eps"] < 2.0
            assert entry["lam_eps"] < entry["lam_ref"]

    def test_ratio_series_present(self, coarse_record):
        _, rec, _ = coarse_record
        names = set(rec.sweep[0]["ratios"])
        assert {"R1", "R3", "R4", "R6"} <= names
        assert any(n.startswith("R2[") for n in names)
        assert any(n.startswith("R5[") for n in names)

    def test_ratios_near_one(self, coarse_record):
        _, rec, _ = coarse_record
        for entry in rec.sweep:
            for name, v in entry["ratios"].items():
                tol = 0.15 if name != "R6" else 1.0
                target = 1.0 if name != "R6" else 0.0
                assert abs(v - target) < tol, (name, v)

    def test_cascade_matches_direct_htilde(self, coarse_record):
        _, rec, _ = coarse_record
        for entry in rec.sweep:
            direct = ScaledAmplitude.from_dict(entry["htilde_eps"]).sqrt()
            casc = ScaledAmplitude.from_dict(
                entry["sqrt_htilde_eps_cascade"])
            assert (direct / casc).to_float() == pytest.approx(1.0, abs=0.02)

    def test_b_defect_matches_cascade(self, coarse_record):
        _, rec, _ = coarse_record
        for entry in rec.sweep:
            bd = ScaledAmplitude.from_dict(entry["b_defect"])
            bc = ScaledAmplitude.from_dict(entry["b_cascade"])
            assert (bd / bc).to_float() == pytest.approx(1.0, abs=0.5)

    def test_failed_entry_keeps_sweep_alive(self, monkeypatch, tmp_path):
        cfg = pl.RunConfig(out_dir=str(tmp_path), **COARSE)
        pset = pl.run_profiles(cfg, return_fields=True)
        calls = {"n": 0}
        orig = pl._sweep_entry

        def flaky(cfg_, eps, pset_):
            calls["n"] += 1
            if eps == 0.3:
                raise RuntimeError("synthetic failure")
            return orig(cfg_, eps, pset_)

        monkeypatch.setattr(pl, "_sweep_entry", flaky)
        rec = pl.run_sweep(cfg, pset)
        assert "error" in rec.sweep[0]
        assert "synthetic failure" in rec.sweep[0]["error"]
        assert "error" not in rec.sweep[1]


class TestCLI:
    def test_cross_section(self, capsys):
        assert cli.main(["cross-section"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["sqrt_lambda1"] == pytest.approx(2.404825557695773)
        assert out["upsilon3"] == pytest.approx(math.sqrt(2 * math.pi / 3))

    def test_verify_pass_and_fail_codes(self, tmp_path, capsys):
        good = synthetic_record([(0.3, 1.15), (0.2, 1.1), (0.1, 1.05)])
        good.verdicts = pl.verify(good)
        pl.emit(good, str(tmp_path / "good"), formats=("json",))
        assert cli.main(["verify",
                         str(tmp_path / "good" / "record.json")]) == 0
        bad = synthetic_record([(0.3, 1.3), (0.2, 1.3), (0.1, 1.3)])
        bad.verdicts = pl.verify(bad)
        pl.emit(bad, str(tmp_path / "bad"), formats=("json",))
        assert cli.main(["verify",
                         str(tmp_path / "bad" / "record.json")]) == 2
        capsys.readouterr()

    def test_missing_record_is_execution_error(self, capsys):
        assert cli.main(["verify", "/nonexistent/record.json"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_is_execution_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"eps_sweep": [0.1, 0.2]}))
        assert cli.main(["profiles", "--config", str(cfg)]) == 1
        capsys.readouterr()

    def test_report_from_record(self, tmp_path, capsys):
        rec = synthetic_record([(0.3, 1.1), (0.2, 1.05)])
        rec.verdicts = pl.verify(rec)
        pl.emit(rec, str(tmp_path), formats=("json",))
        code = cli.main(["report", str(tmp_path / "record.json"),
                         "--out", str(tmp_path / "rep")])
        assert code == 0
        assert (tmp_path / "rep" / "R3.csv").exists()
        assert (tmp_path / "rep" / "R3.svg").exists()
        capsys.readouterr()
