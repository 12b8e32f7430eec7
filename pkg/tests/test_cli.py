import json

from icvec import cli
from icvec.service import create_app


def write_scenario(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def chanest_doc(seed=7):
    return {
        "experiment": "chanest",
        "link": {"num_operators": 2, "lines_per_operator": 3,
                 "training_length": 24, "seed": seed},
        "snr_db": [15.0],
        "alpha": [0.5],
        "trials": 3,
        "iterations": 3,
    }


class TestCliRuns:
    def test_chanest_end_to_end(self, tmp_path):
        scn = write_scenario(tmp_path, chanest_doc())
        out = tmp_path / "out"
        rc = cli.main(["chanest", "--scenario", scn, "--out", str(out)])
        assert rc == 0
        assert (out / "chanest_snr15_alpha0.5.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["experiment"] == "chanest"
        assert "created_at" in summary["metadata"]

    def test_rerun_is_byte_identical(self, tmp_path):
        scn = write_scenario(tmp_path, chanest_doc())
        outs = []
        for i, threads in enumerate(("1", "3")):
            out = tmp_path / f"out{i}"
            rc = cli.main(["chanest", "--scenario", scn, "--out", str(out),
                           "--threads", threads])
            assert rc == 0
            outs.append((out / "chanest_snr15_alpha0.5.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_flag_changes_results(self, tmp_path):
        scn = write_scenario(tmp_path, chanest_doc())
        bodies = []
        for i, seed in enumerate(("100", "200")):
            out = tmp_path / f"seed{i}"
            rc = cli.main(["chanest", "--scenario", scn, "--out", str(out),
                           "--seed", seed])
            assert rc == 0
            bodies.append((out / "chanest_snr15_alpha0.5.csv").read_text())
        assert bodies[0] != bodies[1]

    def test_env_seed_override(self, tmp_path, monkeypatch):
        scn = write_scenario(tmp_path, chanest_doc())
        out_env = tmp_path / "env"
        monkeypatch.setenv("ICVEC_SEED", "100")
        assert cli.main(["chanest", "--scenario", scn, "--out", str(out_env)]) == 0
        monkeypatch.delenv("ICVEC_SEED")
        out_flag = tmp_path / "flag"
        assert cli.main(["chanest", "--scenario", scn, "--out", str(out_flag),
                         "--seed", "100"]) == 0
        assert (out_env / "chanest_snr15_alpha0.5.csv").read_bytes() == \
            (out_flag / "chanest_snr15_alpha0.5.csv").read_bytes()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        scn = write_scenario(tmp_path, chanest_doc())
        monkeypatch.setenv("ICVEC_SEED", "100")
        out_a = tmp_path / "a"
        assert cli.main(["chanest", "--scenario", scn, "--out", str(out_a),
                         "--seed", "200"]) == 0
        monkeypatch.delenv("ICVEC_SEED")
        out_b = tmp_path / "b"
        assert cli.main(["chanest", "--scenario", scn, "--out", str(out_b),
                         "--seed", "200"]) == 0
        assert (out_a / "chanest_snr15_alpha0.5.csv").read_bytes() == \
            (out_b / "chanest_snr15_alpha0.5.csv").read_bytes()


class TestCliErrors:
    def test_missing_scenario_file(self, tmp_path, capsys):
        rc = cli.main(["chanest", "--scenario", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "cannot read scenario" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        rc = cli.main(["chanest", "--scenario", str(path),
                       "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_schema_violation(self, tmp_path):
        doc = chanest_doc()
        doc["mystery"] = True
        scn = write_scenario(tmp_path, doc)
        rc = cli.main(["chanest", "--scenario", scn,
                       "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_wrong_subcommand_for_scenario(self, tmp_path):
        scn = write_scenario(tmp_path, chanest_doc())
        rc = cli.main(["mud", "--scenario", scn, "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_unwritable_output(self, tmp_path, capsys):
        scn = write_scenario(tmp_path, chanest_doc())
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        rc = cli.main(["chanest", "--scenario", scn, "--out", str(blocker)])
        assert rc == 3


class TestThinClientMode:
    def test_server_mode_matches_local(self, tmp_path, monkeypatch):
        from fastapi.testclient import TestClient

        app = create_app()

        def fake_client(server):
            return TestClient(app, base_url=server)

        monkeypatch.setattr(cli, "_make_client", fake_client)
        scn = write_scenario(tmp_path, chanest_doc())
        out_remote = tmp_path / "remote"
        rc = cli.main(["chanest", "--scenario", scn, "--out", str(out_remote),
                       "--server", "http://icvec.test"])
        assert rc == 0
        out_local = tmp_path / "local"
        assert cli.main(["chanest", "--scenario", scn,
                         "--out", str(out_local)]) == 0
        name = "chanest_snr15_alpha0.5.csv"
        assert (out_remote / name).read_bytes() == (out_local / name).read_bytes()

    def test_server_rejects_bad_scenario(self, tmp_path, monkeypatch):
        from fastapi.testclient import TestClient

        app = create_app()
        monkeypatch.setattr(cli, "_make_client",
                            lambda server: TestClient(app, base_url=server))
        doc = chanest_doc()
        doc["trials"] = 0  # violates ge=1
        scn = write_scenario(tmp_path, doc)
        rc = cli.main(["chanest", "--scenario", scn,
                       "--out", str(tmp_path / "out"),
                       "--server", "http://icvec.test"])
        assert rc == 2
