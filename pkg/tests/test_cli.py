import json

import numpy as np
import pytest

from panelmxl import bundled
from panelmxl.cli import main
from panelmxl.dataset import load_long_table, save_long_table
from panelmxl.estimate import result_from_json
from panelmxl.modelspec import parse_model_spec
from panelmxl.serialize import canonical_json
from panelmxl.simulate import TrueParameters, generate_design, simulate_choices

SMALL_SPEC = """space preference
param b_cost fixed init=0
param b_peer fixed init=0
term b_cost on cost alts=1,2,3,4
term b_peer on peer_share alts=1,2,3,4
"""


@pytest.fixture
def small_world(tmp_path):
    """A small spec, truth file, and simulated dataset on disk."""
    spec_path = tmp_path / "small.spec"
    spec_path.write_text(SMALL_SPEC)
    spec = parse_model_spec(SMALL_SPEC)
    truth_path = tmp_path / "truth.json"
    truth_path.write_text(canonical_json({"b_cost": -0.08, "b_peer": 2.0}) + "\n")
    truth = TrueParameters(values=np.array([-0.08, 2.0]), spec=spec, seed=5)
    data = simulate_choices(generate_design(40, seed=5), truth)
    data_path = tmp_path / "small.csv"
    save_long_table(data, data_path)
    return tmp_path, spec_path, truth_path, data_path


class TestHelpAndErrors:
    @pytest.mark.parametrize("cmd", ["estimate", "simulate", "wtp", "recover",
                                     "summarize"])
    def test_help_exits_zero(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "--" in out

    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["summarize", "--data", "x.csv", "--bogus"])
        assert exc.value.code == 2

    def test_missing_data_file_names_path(self, capsys):
        code = main(["summarize", "--data", "no_such_file.csv"])
        assert code == 2
        assert "no_such_file.csv" in capsys.readouterr().err

    def test_estimate_missing_data(self, tmp_path, capsys):
        spec = tmp_path / "m.spec"
        spec.write_text(SMALL_SPEC)
        code = main(["estimate", "--data", str(tmp_path / "missing.csv"),
                     "--spec", str(spec), "--draws", "10",
                     "--out", str(tmp_path / "o.json")])
        assert code == 2
        assert "missing.csv" in capsys.readouterr().err
        assert not (tmp_path / "o.json").exists()

    def test_spec_errors_positioned(self, small_world, capsys):
        tmp_path, _, _, data_path = small_world
        bad = tmp_path / "bad.spec"
        bad.write_text("param a fixed init=zero\nterm a on cost alts=1\n")
        code = main(["estimate", "--data", str(data_path), "--spec", str(bad),
                     "--draws", "5", "--out", str(tmp_path / "o.json")])
        assert code == 2
        assert "line 1" in capsys.readouterr().err


class TestEstimate:
    def test_smoke_and_byte_identical_rerun(self, small_world, capsys):
        tmp_path, spec_path, _, data_path = small_world
        out = tmp_path / "result.json"
        args = ["estimate", "--data", str(data_path), "--spec", str(spec_path),
                "--draws", "1", "--out", str(out), "--threads", "1"]
        assert main(args) == 0
        doc = json.loads(out.read_text())
        assert "adjusted_rho_sq" in doc
        assert doc["converged"] is True
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first

    def test_result_is_loadable(self, small_world):
        tmp_path, spec_path, _, data_path = small_world
        out = tmp_path / "result.json"
        main(["estimate", "--data", str(data_path), "--spec", str(spec_path),
              "--draws", "1", "--out", str(out), "--threads", "1"])
        res = result_from_json(out.read_text())
        assert res.n_individuals == 40
        assert res.names == ("b_cost", "b_peer")

    def test_halton_primes_flag(self, small_world):
        tmp_path, _, _, data_path = small_world
        spec_path = tmp_path / "mixed.spec"
        spec_path.write_text(
            "space preference\n"
            "param b_cost random normal init=0 init_sd=0.3\n"
            "param b_peer fixed init=0\n"
            "term b_cost on cost alts=1,2,3,4\n"
            "term b_peer on peer_share alts=1,2,3,4\n")
        out3 = tmp_path / "r3.json"
        out2 = tmp_path / "r2.json"
        base = ["estimate", "--data", str(data_path), "--spec", str(spec_path),
                "--draws", "16", "--threads", "1"]
        # Convergence of this deliberately tiny model is not the point here;
        # the flags must land in the plan and change the QMC sequence.
        assert main([*base, "--halton-primes", "3", "--burn-in", "5",
                     "--out", str(out3)]) in (0, 1)
        assert main([*base, "--halton-primes", "2", "--out", str(out2)]) in (0, 1)
        a = json.loads(out3.read_text())
        b = json.loads(out2.read_text())
        assert a["draw_plan"]["primes"] == [3]
        assert a["draw_plan"]["burn_in"] == 5
        assert b["draw_plan"]["primes"] == [2]
        assert b["draw_plan"]["burn_in"] == 10
        assert a["ll_final"] != b["ll_final"]  # different QMC sequences

    def test_bad_primes_flag(self, small_world, capsys):
        tmp_path, spec_path, _, data_path = small_world
        code = main(["estimate", "--data", str(data_path), "--spec",
                     str(spec_path), "--draws", "4", "--halton-primes", "2;3",
                     "--out", str(tmp_path / "x.json")])
        assert code == 2


class TestDegenerateEstimate:
    def test_diagnostics_written_even_when_inference_fails(self, tmp_path,
                                                           capsys):
        """A hopeless fit (24 parameters, 25 individuals) must still produce
        a result artifact; exit 0 only for a healthy converged fit."""
        spec_path = bundled.data_path("evac.spec")
        truth_path = bundled.data_path("table4_fixture.json")
        data_path = tmp_path / "tiny.csv"
        main(["simulate", "--spec", str(spec_path), "--truth", str(truth_path),
              "--n", "25", "--seed", "3", "--out", str(data_path)])
        out = tmp_path / "tiny_result.json"
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = main(["estimate", "--data", str(data_path), "--spec",
                         str(spec_path), "--draws", "25", "--out", str(out),
                         "--threads", "1"])
        assert code in (0, 1)
        doc = json.loads(out.read_text())
        assert "estimates" in doc and "ll_final" in doc


class TestSimulateCommand:
    def test_writes_dataset_and_truth_echo(self, small_world):
        tmp_path, spec_path, truth_path, _ = small_world
        out = tmp_path / "sim.csv"
        assert main(["simulate", "--spec", str(spec_path), "--truth",
                     str(truth_path), "--n", "12", "--seed", "3",
                     "--out", str(out)]) == 0
        d = load_long_table(out)
        assert len(d.individuals) == 12
        assert d.n_observations == 108
        echo = json.loads((tmp_path / "sim.truth.json").read_text())
        assert echo["seed"] == 3
        assert echo["estimates"]["b_peer"] == 2.0

    def test_accepts_result_document_as_truth(self, small_world, tmp_path):
        _, spec_path, _, _ = small_world
        doc = {"estimates": {"b_cost": -0.1, "b_peer": 1.0}}
        truth = tmp_path / "res_truth.json"
        truth.write_text(json.dumps(doc))
        out = tmp_path / "sim2.csv"
        assert main(["simulate", "--spec", str(spec_path), "--truth", str(truth),
                     "--n", "3", "--out", str(out)]) == 0

    def test_deterministic_in_seed(self, small_world):
        tmp_path, spec_path, truth_path, _ = small_world
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            main(["simulate", "--spec", str(spec_path), "--truth",
                  str(truth_path), "--n", "6", "--seed", "9", "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()


class TestWtpCommand:
    def test_extreme_scenario_row(self, tmp_path, capsys):
        fixture = bundled.data_path("table4_fixture.json")
        out = tmp_path / "report.csv"
        assert main(["wtp", "--result", str(fixture), "--scenario", "extreme",
                     "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        line = next(l for l in stdout.splitlines()
                    if l.startswith("peers_staying") and "extreme" in l)
        assert "76.85" in line and "compensate" in line
        csv_lines = out.read_text().splitlines()
        assert "peers_staying,extreme,76.85,compensate,per unit" in csv_lines

    def test_all_scenarios_by_default(self, capsys):
        fixture = bundled.data_path("table4_fixture.json")
        assert main(["wtp", "--result", str(fixture)]) == 0
        stdout = capsys.readouterr().out
        for scenario in ("low", "moderate", "extreme"):
            assert scenario in stdout

    def test_missing_result(self, capsys):
        assert main(["wtp", "--result", "ghost.json"]) == 2
        assert "ghost.json" in capsys.readouterr().err


class TestRecoverCommand:
    def test_small_recovery_table(self, small_world, capsys):
        tmp_path, spec_path, truth_path, _ = small_world
        out = tmp_path / "recovered.json"
        code = main(["recover", "--spec", str(spec_path), "--truth",
                     str(truth_path), "--n", "60", "--draws", "1",
                     "--seed", "21", "--threads", "1", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "within 2 robust SEs" in stdout
        assert "b_cost" in stdout
        assert out.exists()


class TestSummarizeCommand:
    def test_table_output(self, small_world, capsys):
        _, _, _, data_path = small_world
        assert main(["summarize", "--data", str(data_path)]) == 0
        stdout = capsys.readouterr().out
        assert "peer_share" in stdout
        assert "40 individuals" in stdout

    def test_bundled_dataset(self, capsys):
        path = bundled.data_path("evac_synthetic.csv.gz")
        assert main(["summarize", "--data", str(path)]) == 0
        assert "5274 choice tasks" in capsys.readouterr().out
