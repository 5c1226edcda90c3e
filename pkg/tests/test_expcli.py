import csv
import json

import numpy as np
import pytest

from resdrift import expcli, numerics as nm


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))




class TestConfig:
    def test_defaults(self):
        cfg = expcli.ExperimentConfig("stable-re")
        assert cfg.gauge == "spherical" and cfg.dt == 0.05 and cfg.steps is None

    def test_per_experiment_gauge(self):
        assert expcli.ExperimentConfig("zero-momentum").gauge == "natural"

    def test_roundtrip(self, tmp_path):
        d = {"experiment": "phase-jump", "out": str(tmp_path), "dt": 0.02, "seed": 7, "gauge": "natural",
             "j1": 0.003, "options": {"rods": False}}
        cfg = expcli.ExperimentConfig.from_dict(json.loads(json.dumps(d)))
        assert cfg.opt("j1", None) == 0.003 and cfg.opt("rods", True) is False
        again = expcli.ExperimentConfig.from_dict({**{k: getattr(cfg, k) for k in
                                                      ("experiment", "out", "dt", "seed", "gauge")},
                                                   "options": cfg.options})
        assert again == cfg

    @pytest.mark.parametrize("kw", [{"experiment": "fly"}, {"experiment": "reduce", "gauge": "round"},
                                    {"experiment": "reduce", "dt": 0.0}, {"experiment": "reduce", "steps": 0},
                                    {"experiment": "reduce", "calibration": "/nonexistent/cal.json"},
                                    {"experiment": "zero-momentum", "radii": []}])
    def test_invalid(self, kw):
        with pytest.raises(expcli.ConfigError):
            expcli.ExperimentConfig.from_dict(kw)

    def test_check_as_dict(self):
        d = expcli.Check("x", np.float64(1.5), "< 2", np.bool_(True)).as_dict()
        assert d == {"name": "x", "value": 1.5, "threshold": "< 2", "pass": True}
        json.dumps(d)


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as err:
            expcli.main(["nonsense"])
        assert err.value.code == 2

    def test_bad_config_file(self, tmp_path):
        assert expcli.main(["reduce", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2

    def test_bad_option(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"gauge": "diagonal"}))
        assert expcli.main(["reduce", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_success(self, tmp_path, capsys):
        assert expcli.main(["calibrate", "--out", str(tmp_path)]) == 0
        assert "PASS kappa" in capsys.readouterr().out
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["pass"] is True
        assert summary["results"]["params"]["kappa"] == pytest.approx(0.9115064, abs=1e-4)

    def test_threshold_failure(self, tmp_path, capsys):
        # a coarse step breaks the conservation thresholds
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"system": "drift", "duration": 50.0,
                                   "initial": {"x": [0.3, 0.1], "pi": [0.2, -0.1, 0.3]}}))
        code = expcli.main(["simulate", "--config", str(cfg), "--dt", "0.5", "--out", str(tmp_path)])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
        assert json.loads((tmp_path / "summary.json").read_text())["pass"] is False

    def test_stage_error(self, tmp_path, capsys):
        # too few samples for the averaging window
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"radii": [0.05, 0.1, 0.15], "angles": [0.0]}))
        code = expcli.main(["zero-momentum", "--config", str(cfg), "--steps", "3", "--out", str(tmp_path)])
        assert code == 1
        assert "average: TooShort" in capsys.readouterr().err


class TestOutputs:
    def test_calibration_file_reused(self, tmp_path):
        expcli.main(["calibrate", "--out", str(tmp_path)])
        path = tmp_path / "calibration.json"
        cfg = expcli.ExperimentConfig("reduce", out=str(tmp_path / "r"), calibration=str(path),
                                      options={"duration": 5.0})
        results, checks = expcli.run_experiment(cfg)
        assert all(c.passed for c in checks)

    def test_natural_gauge_needs_full_calibration(self, tmp_path):
        expcli.main(["calibrate", "--out", str(tmp_path)])
        cfg = expcli.ExperimentConfig("zero-momentum", out=str(tmp_path / "z"),
                                      calibration=str(tmp_path / "calibration.json"))
        with pytest.raises(expcli.ConfigError):
            expcli.run_experiment(cfg)

    def test_simulate_rods_schema(self, tmp_path):
        cfg = expcli.ExperimentConfig("simulate", out=str(tmp_path), steps=40,
                                      options={"system": "rods", "initial": {"x": [0.05, 0.0], "pi": [0, 0, 0]}})
        _, checks = expcli.run_experiment(cfg)
        rows = read_csv(tmp_path / "trajectory.csv")
        assert rows[0] == expcli.ROD_COLUMNS
        assert len(rows) == 42
        assert checks[0].name == "momentum_drift" and checks[0].passed

    def test_simulate_drift_schema(self, tmp_path):
        from resdrift.drift import TRAJECTORY_COLUMNS
        cfg = expcli.ExperimentConfig("simulate", out=str(tmp_path), steps=20, options={"system": "drift"})
        expcli.run_experiment(cfg)
        assert read_csv(tmp_path / "trajectory.csv")[0] == TRAJECTORY_COLUMNS

    def test_reduce_schema(self, tmp_path):
        from resdrift.monopole import TRAJECTORY_COLUMNS
        cfg = expcli.ExperimentConfig("reduce", out=str(tmp_path), options={"duration": 10.0})
        results, checks = expcli.run_experiment(cfg)
        assert read_csv(tmp_path / "trajectory.csv")[0] == TRAJECTORY_COLUMNS
        assert {c.name for c in checks} == {"monopole_vs_projected_drift", "hopf_cone", "hopf_plane"}
        assert all(c.passed for c in checks)

    def test_phase_schema(self, tmp_path):
        cfg = expcli.ExperimentConfig("phase-jump", out=str(tmp_path),
                                      options={"h_rel": [1e-2], "duration": 2000.0, "rods": False})
        results, checks = expcli.run_experiment(cfg)
        rows = read_csv(tmp_path / "phases.csv")
        assert rows[0] == expcli.PHASE_COLUMNS
        assert len(rows) == 3
        h = [float(r[0]) for r in rows[1:]]
        assert h[0] < 0 < h[1]

    def test_spectrum_schema(self, tmp_path):
        peaks = [nm.Peak(0.1024, 1.0), nm.Peak(0.04449, 2.0)]
        fits = nm.harmonic_fit(peaks, (0.04449, 0.05791, 0.0))
        expcli.write_spectrum_csv(tmp_path / "s.csv", fits, peaks)
        rows = read_csv(tmp_path / "s.csv")
        assert rows[0] == expcli.SPECTRUM_COLUMNS
        assert rows[1][2:5] == ["1", "1", "0"]

    def test_deterministic(self, tmp_path):
        outs = []
        for k in range(2):
            d = tmp_path / str(k)
            cfg = expcli.ExperimentConfig("simulate", out=str(d), steps=20, seed=3, options={"system": "drift"})
            expcli.run_experiment(cfg)
            outs.append((d / "trajectory.csv").read_text())
        assert outs[0] == outs[1]


class TestHelpers:
    def test_fast_average(self):
        t = np.arange(0.0, 100.0, 0.1)
        v = np.column_stack([np.sin(2 * np.pi * t), np.ones_like(t)])
        tm, avg = expcli.fast_average(t, v, 1.0)
        assert np.abs(avg[:, 0]).max() < 1e-12
        assert np.allclose(avg[:, 1], 1.0)
        assert len(tm) == len(avg)

    def test_fast_average_too_short(self):
        with pytest.raises(nm.TooShort):
            expcli.fast_average(np.arange(5.0), np.ones((5, 1)), 10.0)

    def test_great_circle_fit(self):
        s = np.linspace(0, 2 * np.pi, 200)
        u = np.column_stack([np.cos(s), np.zeros_like(s), np.sin(s)])
        n0, r0, r1, off, n1, c = expcli.great_circle_fit(u)
        assert abs(abs(n0[1]) - 1) < 1e-12 and r0 < 1e-12 and off < 1e-12

    def test_rotation_rate(self):
        t = np.linspace(0, 10, 500)
        u = np.column_stack([np.cos(0.3 * t), np.sin(0.3 * t), np.zeros_like(t)])
        assert expcli.rotation_rate(t, u, np.array([0.0, 0.0, 1.0]), np.zeros(3)) == pytest.approx(0.3)
