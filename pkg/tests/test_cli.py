"""End-to-end command behavior: exit codes, files, printed reports."""

from __future__ import annotations

import json

import numpy as np
import pytest

from affineform import cli, save_framework, save_scenario
from affineform.demo import build_demo_scenario
from affineform.framework import load_framework

from test_simulator import hold_maneuver, lone_scenario, translation_maneuver


@pytest.fixture()
def demo_file(tmp_path, demo_framework):
    path = tmp_path / "demo_fw.json"
    save_framework(demo_framework, path)
    return str(path)


@pytest.fixture()
def lone_file(tmp_path, lone_follower_fw):
    path = tmp_path / "lone_fw.json"
    save_framework(lone_follower_fw, path)
    return str(path)


def write_json(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestVerify:
    def test_sound_framework_passes(self, demo_file, capsys):
        assert cli.main(["verify", demo_file]) == 0
        out = capsys.readouterr().out
        assert "verification: PASS" in out
        assert "layerable:          True" in out

    def test_json_report(self, demo_file, capsys):
        assert cli.main(["verify", demo_file, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["passed"] is True
        assert payload["cycle"] is None

    def test_report_file(self, demo_file, tmp_path):
        report = tmp_path / "report.json"
        assert cli.main(["verify", demo_file, "--report", str(report)]) == 0
        assert json.loads(report.read_text())["layerable"] is True

    def test_cyclic_framework_fails_gate(self, tmp_path, cyclic_fw, capsys):
        path = tmp_path / "cyclic.json"
        save_framework(cyclic_fw, path)
        assert cli.main(["verify", str(path)]) == 1
        assert "directed cycle" in capsys.readouterr().out

    def test_malformed_file(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{oops")
        assert cli.main(["verify", str(path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["verify", str(tmp_path / "absent.json")]) == 2


class TestConstruct:
    spec = {
        "dim": 2,
        "leaders": [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]],
        "attachments": [
            {"node": 4, "position": [2.0, 0.0], "in_neighbors": [1, 2]},
        ],
    }

    def test_build_and_save(self, tmp_path, capsys):
        spec = write_json(tmp_path, "spec.json", self.spec)
        out = tmp_path / "fw.json"
        assert cli.main(["construct", spec, "-o", str(out)]) == 0
        assert "constructed 4 nodes (3 leaders)" in capsys.readouterr().out
        fw = load_framework(out)
        assert fw.weights[(4, 1)] == pytest.approx(0.5)

    def test_degenerate_leaders(self, tmp_path, capsys):
        bad = dict(self.spec, leaders=[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        spec = write_json(tmp_path, "spec.json", bad)
        assert cli.main(["construct", spec, "-o", str(tmp_path / "x.json")]) == 1
        assert "span" in capsys.readouterr().err

    def test_malformed_spec(self, tmp_path):
        spec = write_json(tmp_path, "spec.json", {"leaders": [[0, 0]]})
        assert cli.main(["construct", spec, "-o", str(tmp_path / "x.json")]) == 2


class TestReconfigure:
    def test_remove_end_node(self, demo_file, tmp_path, capsys):
        event = write_json(tmp_path, "ev.json",
                           {"time": 0.0, "action": "remove", "node": 9})
        out = tmp_path / "after.json"
        msgs = tmp_path / "messages.jsonl"
        code = cli.main(["reconfigure", demo_file, event,
                         "-o", str(out), "--messages", str(msgs)])
        assert code == 0
        assert "verification PASS" in capsys.readouterr().out
        assert len(load_framework(out).node_ids) == 8
        lines = msgs.read_text().splitlines()
        assert len(lines) == 3

    def test_remove_mid_chain_is_local(self, demo_file, tmp_path, demo_framework):
        event = write_json(tmp_path, "ev.json",
                           {"time": 0.0, "action": "remove", "node": 4})
        out = tmp_path / "after.json"
        msgs = tmp_path / "messages.jsonl"
        assert cli.main(["reconfigure", demo_file, event,
                         "-o", str(out), "--messages", str(msgs)]) == 0
        records = [json.loads(line) for line in msgs.read_text().splitlines()]
        assert len(records) == 16
        # node 5 senses only leaders, so nothing it stores may change
        after = load_framework(out)
        assert after.in_entries(5) == demo_framework.in_entries(5)
        assert 4 not in after.node_ids

    def test_add_node(self, demo_file, tmp_path):
        event = write_json(tmp_path, "ev.json", {
            "time": 0.0, "action": "add", "node": 10,
            "attachment": {"node": 10, "position": [2.0, 0.0],
                           "in_neighbors": [1, 2]},
        })
        out = tmp_path / "after.json"
        msgs = tmp_path / "messages.jsonl"
        assert cli.main(["reconfigure", demo_file, event,
                         "-o", str(out), "--messages", str(msgs)]) == 0
        assert len(load_framework(out).node_ids) == 10
        assert len(msgs.read_text().splitlines()) == 2

    def test_leader_removal_rejected(self, demo_file, tmp_path, capsys):
        event = write_json(tmp_path, "ev.json",
                           {"time": 0.0, "action": "remove", "node": 1})
        code = cli.main(["reconfigure", demo_file, event,
                         "-o", str(tmp_path / "x.json")])
        assert code == 1
        assert "leader" in capsys.readouterr().err

    def test_malformed_event(self, demo_file, tmp_path):
        event = write_json(tmp_path, "ev.json", {"action": "remove", "node": 9})
        assert cli.main(["reconfigure", demo_file, event,
                         "-o", str(tmp_path / "x.json")]) == 2


class TestGains:
    def test_first_order_defaults_feasible(self, lone_file, capsys):
        assert cli.main(["gains", lone_file, "--order", "1"]) == 0
        assert "feasible: True" in capsys.readouterr().out

    def test_json_payload(self, lone_file, capsys):
        assert cli.main(["gains", lone_file, "--order", "1", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["conditions"]["feasible"] is True
        assert payload["q"] == {"4": 1.0}
        assert len(payload["gamma"]) == 1

    def test_manual_gains_feasible(self, lone_file, capsys):
        code = cli.main(["gains", lone_file, "--order", "1",
                         "--xi", "1.0", "--beta", "2.0"])
        assert code == 0
        assert "beta = 2.0" in capsys.readouterr().out

    def test_manual_beta_too_small(self, lone_file, capsys):
        code = cli.main(["gains", lone_file, "--order", "1",
                         "--xi", "1.0", "--beta", "0.5"])
        assert code == 1
        assert "note:" in capsys.readouterr().out

    def test_second_order_demo_infeasible(self, demo_file, capsys):
        assert cli.main(["gains", demo_file]) == 1
        assert "feasible: False" in capsys.readouterr().out

    def test_unlayerable_framework_rejected(self, tmp_path, cyclic_fw, capsys):
        path = tmp_path / "cyclic.json"
        save_framework(cyclic_fw, path)
        assert cli.main(["gains", str(path)]) == 1
        assert "fails verification" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["gains", str(tmp_path / "absent.json")]) == 2


class TestSimulate:
    def test_zero_horizon_writes_headers_only(self, tmp_path, lone_follower_fw,
                                              capsys):
        sc = lone_scenario(lone_follower_fw, horizon=0.0)
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        outdir = tmp_path / "out"
        assert cli.main(["simulate", str(path), "--out", str(outdir)]) == 0
        assert "epochs: 0" in capsys.readouterr().out
        lines = (outdir / "trajectories.csv").read_text().splitlines()
        assert lines == ["t,agent,x1,x2,x3,x4"]
        assert (outdir / "lyapunov.csv").read_text() == "t,V,V1,V2,V3\n"
        assert json.loads((outdir / "epochs.json").read_text())["epochs"] == []

    def test_short_run_reports_decay(self, tmp_path, lone_follower_fw, capsys):
        sc = lone_scenario(lone_follower_fw, horizon=4.0,
                           maneuver=translation_maneuver())
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        outdir = tmp_path / "out"
        assert cli.main(["simulate", str(path), "--out", str(outdir)]) == 0
        out = capsys.readouterr().out
        assert "epochs: 1" in out
        assert "flow bound held" in out
        for name in ("trajectories.csv", "errors.csv", "lyapunov.csv",
                     "epochs.json", "messages.log"):
            assert (outdir / name).exists()

    def test_env_var_supplies_outdir(self, tmp_path, lone_follower_fw,
                                     monkeypatch, capsys):
        sc = lone_scenario(lone_follower_fw, horizon=0.0)
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        envdir = tmp_path / "from-env"
        monkeypatch.setenv("AFFINEFORM_OUT", str(envdir))
        monkeypatch.chdir(tmp_path)
        assert cli.main(["simulate", str(path)]) == 0
        assert (envdir / "lyapunov.csv").exists()

    def test_horizon_override(self, tmp_path, lone_follower_fw, capsys):
        sc = lone_scenario(lone_follower_fw, horizon=4.0)
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        code = cli.main(["simulate", str(path), "--horizon", "0",
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert "epochs: 0" in capsys.readouterr().out

    def test_requires_scenario_or_demo(self, capsys):
        assert cli.main(["simulate"]) == 2
        assert "--demo" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{oops")
        assert cli.main(["simulate", str(path)]) == 2

    def test_contract_violations_are_parse_errors(self, tmp_path,
                                                  lone_follower_fw, capsys):
        sc = lone_scenario(lone_follower_fw, horizon=1.0, smsi=0.3, dt=0.1,
                           gains={"xi": 1.0, "beta": 1.5, "t_star": 0.1})
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        assert cli.main(["simulate", str(path)]) == 2
        assert "invalid scenario" in capsys.readouterr().err

    def test_infeasible_margins_flag_domain_error(self, tmp_path, capsys):
        sc = build_demo_scenario(horizon=2.0, events=[], init_offset=0.0)
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        code = cli.main(["simulate", str(path), "--out",
                         str(tmp_path / "out")])
        assert code == 1
        assert "infeasible" in capsys.readouterr().err


class TestExportPlots:
    def test_svg_files_rendered(self, tmp_path, lone_follower_fw):
        from affineform import run, write_outputs

        sc = lone_scenario(lone_follower_fw, horizon=0.5,
                           maneuver=translation_maneuver())
        datadir = tmp_path / "data"
        write_outputs(run(sc), datadir)
        assert cli.main(["export-plots", str(datadir)]) == 0
        assert (datadir / "trajectories.svg").exists()
        assert (datadir / "errors.svg").exists()

        other = tmp_path / "plots"
        assert cli.main(["export-plots", str(datadir),
                         "--out", str(other)]) == 0
        assert (other / "errors.svg").exists()

    def test_missing_data(self, tmp_path):
        assert cli.main(["export-plots", str(tmp_path)]) == 2


class TestParser:
    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_command_required(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 2
