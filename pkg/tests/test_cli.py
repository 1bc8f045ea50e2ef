import json

import pytest

from egsloss import presets
from egsloss.cli import main
from egsloss.scenario_io import save_scenario
from egsloss.sweep import CSV_COLUMNS, SweepSpec, compute_error_metric, error_table, read_csv, rows_to_csv, run_sweep

from helpers import one_flow


class TestErrorMetric:
    def test_examples(self):
        assert compute_error_metric([0.2, 0.4], [0.2, 0.4]) == 0.0
        assert compute_error_metric([0.5], [0.45]) == pytest.approx(0.1)

    def test_signed_maximum(self):
        # the largest positive gap wins even when a larger negative gap exists
        assert compute_error_metric([0.5, 0.2], [0.45, 0.4]) == pytest.approx(0.1)
        assert compute_error_metric([0.5, 0.2], [0.6, 0.25]) == pytest.approx(0.05 / 0.2)

    def test_zero_only_on_matching_maximizer(self):
        assert compute_error_metric([0.3, 0.3], [0.3, 0.35]) == 0.0
        assert compute_error_metric([0.3, 0.3], [0.3, 0.25]) > 0.0

    def test_errors(self):
        with pytest.raises(ZeroDivisionError):
            compute_error_metric([0.0], [-0.1])
        with pytest.raises(ValueError):
            compute_error_metric([0.1, 0.2], [0.1])


class TestSweep:
    def test_analytic_only(self):
        rows = run_sweep(SweepSpec(presets.table1(), [0.1 * k for k in range(1, 11)]))
        assert [r["flow_id_or_avg"] for r in rows[:2]] == ["avg", "weighted"]
        assert len({r["sweep_value"] for r in rows}) == 10
        assert {r["series"] for r in rows} == {"analytic:strict_single"}

    def test_series_per_engine(self):
        sc = one_flow((3, 3), 2, rate=2.0)
        rows = run_sweep(SweepSpec(sc, [1.0, 2.0], engines=["discrete", "exponential", "cox"], duration=20.0,
                                   replications=2))
        assert {r["series"] for r in rows} == {"analytic:strict_single", "discrete:strict_single",
                                               "exponential:strict_single", "cox:strict_single"}
        assert set(error_table(rows)) == {"discrete:strict_single", "exponential:strict_single",
                                          "cox:strict_single"}

    def test_qubit_grid(self):
        rows = run_sweep(SweepSpec(presets.table1(), range(1, 4), axis="qubits", rates=[0.5, 1.0]))
        vals = [r["sweep_value"] for r in rows if r["flow_id_or_avg"] == "avg"]
        assert vals == [f"qubits={q};rate={r}" for q in (1, 2, 3) for r in ("0.5", "1")]

    def test_groups_and_flows(self):
        rows = run_sweep(SweepSpec(presets.table2(), [1.0], per_flow=True))
        labels = [r["flow_id_or_avg"] for r in rows]
        assert labels[:4] == ["avg", "weighted", "group:S1", "group:S2"] and labels[-1] == "f27"

    def test_csv_byte_stable(self):
        sc = one_flow((3, 3), 2, rate=2.0, mode="jump_over")
        spec = lambda: SweepSpec(sc, [1.0, 3.0], engines=["cox"], duration=10.0, replications=2, seed=4)  # noqa: E731
        a, b = rows_to_csv(run_sweep(spec())), rows_to_csv(run_sweep(spec()))
        assert a == b
        assert a.splitlines()[0] == ",".join(CSV_COLUMNS)

    @pytest.mark.parametrize("kw", [dict(axis="time"), dict(values=[]), dict(replications=0), dict(rates=[1.0])])
    def test_invalid(self, kw):
        from egsloss.model import ScenarioError
        args = dict(scenario=presets.table1(), values=[1.0]) | kw
        with pytest.raises(ScenarioError):
            SweepSpec(**args)


class TestCommands:
    def test_presets(self, capsys, tmp_path):
        assert main(["presets"]) == 0
        assert "table2" in capsys.readouterr().out
        path = tmp_path / "t1.json"
        assert main(["presets", "--dump", "table1", str(path)]) == 0
        assert json.loads(path.read_text())["name"] == "table1"

    def test_blocking_json(self, capsys):
        assert main(["blocking", "-p", "table1", "--rate", "0.5", "--json"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(out["flows"]) == 28 and 0 < out["average_blocking"] < 1

    def test_blocking_text(self, capsys):
        assert main(["blocking", "-p", "table2", "--per-flow"]) == 0
        text = capsys.readouterr().out
        assert "group S1" in text and "f27" in text

    def test_simulate(self, capsys, tmp_path):
        path = tmp_path / "s.json"
        save_scenario(one_flow((3, 3), 2, rate=2.0), path)
        assert main(["simulate", "-s", str(path), "--duration", "5", "--replications", "2"]) == 0
        assert "mean service time" in capsys.readouterr().out
        assert main(["simulate", "-s", str(path), "--duration", "5", "--replications", "2", "--json"]) == 0
        assert len(json.loads(capsys.readouterr().out)["runs"]) == 2

    def test_oracle(self, capsys, tmp_path):
        path = tmp_path / "s.json"
        save_scenario(one_flow((3, 3), 2), path)
        assert main(["oracle", "-s", str(path), "--dump", str(tmp_path / "c.json")]) == 0
        assert "3 states" in capsys.readouterr().out
        assert (tmp_path / "c.json").exists()

    def test_sweep_and_delta(self, capsys, tmp_path):
        scen = tmp_path / "s.json"
        save_scenario(one_flow((3, 3), 2), scen)
        out = tmp_path / "o.csv"
        assert main(["sweep", "-s", str(scen), "--values", "1,2", "--engines", "cox", "--duration", "5",
                     "--replications", "2", "-o", str(out)]) == 0
        assert "delta[cox:strict_single]" in capsys.readouterr().err
        assert len(read_csv(out)) == 8
        assert main(["delta", str(out)]) == 0
        assert "cox:strict_single" in capsys.readouterr().out

    def test_errors_exit_2(self, capsys, tmp_path):
        assert main(["blocking", "-s", str(tmp_path / "none.json")]) == 2
        assert main(["oracle", "-p", "table1"]) == 2
        assert "error" in capsys.readouterr().err
        with pytest.raises(SystemExit):
            main(["sweep", "-p", "table1", "--values", "1", "--engines", "warp"])
