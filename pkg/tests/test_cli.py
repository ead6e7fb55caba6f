import json
from pathlib import Path

import pytest

from bergbundle import cli


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def small_curvature_config(**overrides):
    cfg = {
        "command": "curvature",
        "weight": {"name": "fock_shift", "params": [0.25]},
        "domain": {"kind": "plane-truncation", "radii": [6.0], "quad_order": [40],
                   "gaussian_decay": True},
        "basis_degree": 6,
        "convergence_degrees": [4, 6],
        "t_points": [[[0.4, 0.2]]],
        "samples": 10,
        "seed": 99,
        "expect_nakano": {"value": 0.25, "rtol": 0.02},
    }
    cfg.update(overrides)
    return cfg


def load_report(out_dir, name):
    return json.loads((Path(out_dir) / name).read_text())


class TestSchema:
    def test_defaults_are_echoed(self):
        cfg = cli.validate_config(small_curvature_config())
        assert cfg["samples"] == 10
        assert cfg["convergence_degrees"] == [4, 6]
        assert cfg["tolerances"]["route_final_rel"] == 1e-3
        assert cfg["tolerances"]["hormander_slack"] == 1e-8
        assert cfg["output"] is None

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError, match="mystery"):
            cli.validate_config(small_curvature_config(mystery=1))

    def test_unknown_tolerance_key_rejected(self):
        cfg = small_curvature_config(tolerances={"hormander_slck": 1e-8})
        with pytest.raises(cli.ConfigError, match="hormander_slck"):
            cli.validate_config(cfg)

    def test_missing_seed_rejected(self):
        cfg = small_curvature_config()
        del cfg["seed"]
        with pytest.raises(cli.ConfigError, match="seed"):
            cli.validate_config(cfg)

    def test_bad_command(self):
        with pytest.raises(cli.ConfigError, match="command"):
            cli.validate_config({"command": "explode"})

    def test_type_errors_name_the_key(self):
        cfg = small_curvature_config(basis_degree="six")
        with pytest.raises(cli.ConfigError, match="basis_degree"):
            cli.validate_config(cfg)


class TestExitCodes:
    def test_pass_run_is_zero(self, tmp_path):
        path = write_config(tmp_path, small_curvature_config())
        assert cli.main(["run", path, "--out", str(tmp_path / "out")]) == 0
        report = load_report(tmp_path / "out", "curvature_report.json")
        assert report["passed"] is True
        assert report["config"]["samples"] == 10

    def test_low_quad_order_is_config_error(self, tmp_path, capsys):
        cfg = small_curvature_config()
        cfg["domain"]["quad_order"] = [2]
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", path]) == 2
        assert "quad_order" in capsys.readouterr().err

    def test_unknown_key_exit_two(self, tmp_path):
        path = write_config(tmp_path, small_curvature_config(mystery=1))
        assert cli.main(["run", path]) == 2

    def test_negative_control_exits_one_and_lists_nodes(self, tmp_path):
        cfg = {
            "command": "kernel-psh",
            "weight": {"name": "fock_shift", "params": [0.0]},
            "domain": {"kind": "plane-truncation", "radii": [6.0],
                       "quad_order": [40], "gaussian_decay": True},
            "basis_degree": 4,
            "map": {"coeffs": [[0.0, 0.0]]},
            "t_grid": {"center": [0.0, 0.0], "halfwidth": 1.0, "points": 7},
            "negative_control": True,
        }
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", path, "--out", str(tmp_path / "out")]) == 1
        report = load_report(tmp_path / "out", "kernel_psh_report.json")
        control = next(c for c in report["checks"]
                       if c["name"].startswith("psh_certification"))
        assert control["passed"] is False
        assert control["violation_count"] == 25
        assert len(control["violation_nodes"]) == 25

    def test_conditioning_abort_exits_three(self, tmp_path, capsys):
        cfg = small_curvature_config(
            basis_degree=20, convergence_degrees=[20],
            t_points=[[[3.0, 0.0]]],
            domain={"kind": "plane-truncation", "radii": [7.0],
                    "quad_order": [60], "gaussian_decay": True},
        )
        cfg["weight"] = {"name": "fock_shift", "params": [0.0]}
        del cfg["expect_nakano"]
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", path]) == 3
        assert "numerical abort" in capsys.readouterr().err

    def test_validate_subcommand(self, tmp_path):
        path = write_config(tmp_path, small_curvature_config())
        assert cli.main(["validate", path]) == 0
        bad = write_config(tmp_path, small_curvature_config(mystery=2), name="bad.json")
        assert cli.main(["validate", bad]) == 2

    def test_mismatched_point_dimension(self, tmp_path):
        cfg = small_curvature_config(t_points=[[[0.1, 0.0], [0.2, 0.0]]])
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", path]) == 2


class TestReports:
    def test_replay_and_thread_invariance(self, tmp_path):
        path = write_config(tmp_path, small_curvature_config())
        outs = []
        for label, threads in (("a", "1"), ("b", "2")):
            out = tmp_path / label
            assert cli.main(["run", path, "--out", str(out), "--threads", threads]) == 0
            outs.append(out)

        def canonical(out):
            data = load_report(out, "curvature_report.json")
            del data["wall_time_s"]
            return json.dumps(data, sort_keys=True)

        assert canonical(outs[0]) == canonical(outs[1])
        for csv_name in ("route_convergence.csv", "deltas.csv", "delta_convergence.csv"):
            assert (outs[0] / csv_name).read_bytes() == (outs[1] / csv_name).read_bytes()

    def test_report_written_atomically(self, tmp_path):
        path = write_config(tmp_path, small_curvature_config())
        out = tmp_path / "out"
        cli.main(["run", path, "--out", str(out)])
        assert not list(out.glob("*.tmp"))

    def test_env_output_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("BERGBUNDLE_OUT", str(target))
        path = write_config(tmp_path, small_curvature_config())
        assert cli.main(["run", path]) == 0
        assert (target / "curvature_report.json").exists()

    def test_custom_output_name(self, tmp_path):
        cfg = small_curvature_config(output="mylab.json")
        path = write_config(tmp_path, cfg)
        cli.main(["run", path, "--out", str(tmp_path / "out")])
        assert (tmp_path / "out" / "mylab.json").exists()

    def test_block_export_sidecars(self, tmp_path):
        cfg = small_curvature_config(export_blocks=True)
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert cli.main(["run", path, "--out", str(out)]) == 0
        direct = out / "curvature_blocks_t0_direct.txt"
        sub = out / "curvature_blocks_t0_subbundle.txt"
        assert direct.exists() and sub.exists()
        header = direct.read_text().splitlines()[0].split()
        assert header[:2] == ["1", "7"]


class TestEmitCsv:
    def test_psh_grid_row_count(self, tmp_path):
        cfg = {
            "command": "kernel-psh",
            "weight": {"name": "fock_shift", "params": [0.0]},
            "domain": {"kind": "plane-truncation", "radii": [6.0],
                       "quad_order": [40], "gaussian_decay": True},
            "basis_degree": 6,
            "map": {"coeffs": [[0.0, 0.0]]},
            "t_grid": {"center": [0.0, 0.0], "halfwidth": 1.0, "points": 21},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert cli.main(["run", path, "--out", str(out)]) == 0
        lines = (out / "kernel_grid.csv").read_text().splitlines()
        assert lines[0] == "t_re,t_im,value"
        assert len(lines) == 1 + 441

    def test_convergence_table_rows(self, tmp_path):
        cfg = small_curvature_config(convergence_degrees=[4, 5, 6], basis_degree=6)
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        cli.main(["run", path, "--out", str(out)])
        lines = (out / "route_convergence.csv").read_text().splitlines()
        assert len(lines) == 1 + 3

    def test_empty_table_keeps_header(self, tmp_path):
        report = {"csv_tables": {"empty_section": {"header": ["a", "b"], "rows": []}}}
        written = cli.emit_csv(report, tmp_path)
        assert written == [tmp_path / "empty_section.csv"]
        assert (tmp_path / "empty_section.csv").read_text() == "a,b\n"

    def test_full_precision_round_trip(self, tmp_path):
        value = 0.1 + 2.0 ** -45
        report = {"csv_tables": {"one": {"header": ["x"], "rows": [[value]]}}}
        cli.emit_csv(report, tmp_path)
        text = (tmp_path / "one.csv").read_text().splitlines()[1]
        assert float(text) == value
