"""End-to-end tests of the command-line front end.

Every test drives oddball.cli.main with an argv list and inspects the
return code plus captured stdout/stderr or files written via --out.
Numerical values are compared against the library calls the commands
delegate to; JSON float round-trips are exact, so == is used freely.
"""

import json
import math

import pytest

from oddball.cli import main
from oddball.dissimilarity import MATRIX_HEADER, FiringRateTable, pairwise_dstar
from oddball.experiments import REPORT_HEADER, ExperimentSpec, drift_experiment, run_experiment
from oddball.solver import (
    CURVE_HEADER,
    OddConfig,
    curve_rows,
    d_star,
    lambda_star_continuous_extension,
    lower_bound_expected_tau,
    solve_lambda_star,
)

DEGENERATE_WARNING = (
    "r1 == r2: the configuration is undetectable; weights are the nu -> 1/2 extension"
)

RATES_CSV = """image_id,c1
a,1.0
b,4.0
c,9.0
"""

SPEC = {
    "k": 3,
    "odd_index": 1,
    "r1": 8.0,
    "r2": 1.0,
    "l_grid": [5.0, 20.0],
    "trials": 30,
    "seed": 0,
}


def run_cli(capsys, *argv):
    """Invoke the CLI once and return (exit code, stdout, stderr)."""
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDstarCommand:
    def test_payload_matches_solver(self, capsys):
        """dstar emits the solver's values under stable key names."""
        code, out, err = run_cli(capsys, "dstar", "--k", "3", "--r1", "1.0", "--r2", "2.0")
        assert code == 0
        assert err == ""
        payload = json.loads(out)
        sol = solve_lambda_star(OddConfig(3, 1, 1.0, 2.0))
        assert set(payload) == {"k", "d_star", "lambda_odd", "lambda_vector", "r_tilde", "nu"}
        assert payload["k"] == 3
        assert payload["d_star"] == sol.d_star
        assert payload["lambda_odd"] == sol.lam_odd
        assert payload["lambda_vector"] == list(sol.lam)
        assert payload["r_tilde"] == list(sol.r_tilde)
        assert payload["nu"] == OddConfig(3, 1, 1.0, 2.0).nu

    def test_lambda_hat_not_exposed(self, capsys):
        code, out, _ = run_cli(capsys, "dstar", "--k", "4", "--r1", "3.0", "--r2", "1.0")
        assert code == 0
        assert "lambda_hat" not in json.loads(out)

    def test_vector_rates_have_null_nu(self, capsys):
        """Multi-channel configurations carry no scalar rate ratio."""
        code, out, _ = run_cli(capsys, "dstar", "--k", "3", "--r1", "1.0,5.0", "--r2", "2.0,2.0")
        assert code == 0
        payload = json.loads(out)
        assert payload["nu"] is None
        sol = solve_lambda_star(OddConfig(3, 1, (1.0, 5.0), (2.0, 2.0)))
        assert payload["d_star"] == sol.d_star

    def test_degenerate_configuration_warns(self, capsys):
        """Equal rates produce the extension weights plus a warning."""
        code, out, _ = run_cli(capsys, "dstar", "--k", "3", "--r1", "2.0", "--r2", "2.0")
        assert code == 0
        payload = json.loads(out)
        assert payload["warning"] == DEGENERATE_WARNING
        ext = lambda_star_continuous_extension(OddConfig(3, 1, 2.0, 2.0))
        assert payload["d_star"] == 0.0
        assert payload["lambda_odd"] == ext.lam_odd
        assert payload["lambda_vector"] == list(ext.lam)

    def test_out_writes_file(self, capsys, tmp_path):
        path = tmp_path / "dstar.json"
        code, out, _ = run_cli(
            capsys, "dstar", "--k", "3", "--r1", "1.0", "--r2", "2.0", "--out", str(path)
        )
        assert code == 0
        assert out == ""
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload["d_star"] == solve_lambda_star(OddConfig(3, 1, 1.0, 2.0)).d_star


class TestLambdaCommand:
    def test_keeps_lambda_hat(self, capsys):
        code, out, _ = run_cli(capsys, "lambda", "--k", "3", "--r1", "1.0", "--r2", "2.0")
        assert code == 0
        payload = json.loads(out)
        sol = solve_lambda_star(OddConfig(3, 1, 1.0, 2.0))
        assert payload["lambda_hat"] == sol.lam_hat

    def test_superset_of_dstar_payload(self, capsys):
        """lambda output is the dstar output plus the 1-D weight."""
        code, lam_out, _ = run_cli(capsys, "lambda", "--k", "5", "--r1", "2.0", "--r2", "3.0")
        assert code == 0
        code, dstar_out, _ = run_cli(capsys, "dstar", "--k", "5", "--r1", "2.0", "--r2", "3.0")
        assert code == 0
        lam_payload = json.loads(lam_out)
        lam_payload.pop("lambda_hat")
        assert lam_payload == json.loads(dstar_out)


class TestCurveCommand:
    def test_csv_matches_library(self, capsys):
        code, out, _ = run_cli(capsys, "curve", "--k-list", "3,5", "--nu-steps", "21")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == CURVE_HEADER
        rows = curve_rows([3, 5], 21)
        assert len(lines) == 1 + len(rows)
        expected = [
            f"{k},{nu:.12g},{lam_odd:.12g},{lam_hat:.12g},{scaled:.12g}"
            for k, nu, lam_odd, lam_hat, scaled in rows
        ]
        assert lines[1:] == expected

    def test_rejects_empty_k_list(self, capsys):
        code, _, err = run_cli(capsys, "curve", "--k-list", "", "--nu-steps", "21")
        assert code == 2
        assert err.startswith("error: ")

    def test_rejects_single_step_grid(self, capsys):
        code, _, err = run_cli(capsys, "curve", "--k-list", "3", "--nu-steps", "1")
        assert code == 2
        assert err.startswith("error: ")


class TestSimulateCommand:
    def test_report_matches_library(self, capsys, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SPEC), encoding="utf-8")
        code, out, err = run_cli(capsys, "simulate", "--spec", str(spec_path))
        assert code == 0
        assert err == ""
        assert out == run_experiment(ExperimentSpec.from_dict(SPEC)).to_csv()
        assert out.splitlines()[0] == REPORT_HEADER

    def test_jobs_do_not_change_output(self, capsys, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SPEC), encoding="utf-8")
        code, serial, _ = run_cli(capsys, "simulate", "--spec", str(spec_path))
        assert code == 0
        code, parallel, _ = run_cli(capsys, "simulate", "--spec", str(spec_path), "--jobs", "2")
        assert code == 0
        assert parallel == serial

    def test_trace_dir_is_created_and_filled(self, capsys, tmp_path):
        spec = dict(SPEC, trials=10, trace_sampling=0.25)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec), encoding="utf-8")
        trace_dir = tmp_path / "traces" / "run1"
        code, _, _ = run_cli(
            capsys, "simulate", "--spec", str(spec_path), "--trace-dir", str(trace_dir)
        )
        assert code == 0
        files = sorted(p.name for p in trace_dir.iterdir())
        assert len(files) == 6
        assert all(name.endswith(".jsonl") for name in files)

    def test_malformed_spec_reports_position(self, capsys, tmp_path):
        spec_path = tmp_path / "bad.json"
        spec_path.write_text('{"k": 3,\n  "odd_index": }\n', encoding="utf-8")
        code, _, err = run_cli(capsys, "simulate", "--spec", str(spec_path))
        assert code == 2
        assert err.startswith("error: spec JSON parse error at line 2 column")

    def test_missing_spec_file(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "simulate", "--spec", str(tmp_path / "absent.json"))
        assert code == 2
        assert "cannot read spec file" in err

    def test_unknown_spec_key(self, capsys, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(dict(SPEC, bogus=1)), encoding="utf-8")
        code, _, err = run_cli(capsys, "simulate", "--spec", str(spec_path))
        assert code == 2
        assert err.startswith("error: ")


class TestDriftCommand:
    ARGV = (
        "drift",
        "--k", "3",
        "--odd", "1",
        "--r1", "1.0",
        "--r2", "2.0",
        "--slots", "400",
        "--seed", "0",
        "--num-seeds", "3",
    )

    def test_summary_json(self, capsys):
        """Stdout JSON is the library summary plus the solver targets."""
        code, out, err = run_cli(capsys, *self.ARGV)
        assert code == 0
        assert err == ""
        result = drift_experiment(OddConfig(3, 1, 1.0, 2.0), 400, [0, 1, 2])
        expected = {
            "lambda_star": list(result.lambda_star),
            "mixed_rate": result.mixed_rate,
            **result.summary(),
        }
        assert json.loads(out) == expected

    def test_out_writes_checkpoint_csv(self, capsys, tmp_path):
        path = tmp_path / "drift.csv"
        code, out, _ = run_cli(capsys, *self.ARGV, "--out", str(path))
        assert code == 0
        # Summary JSON still goes to stdout; the CSV goes to the file.
        assert json.loads(out)["seeds"] == 3
        result = drift_experiment(OddConfig(3, 1, 1.0, 2.0), 400, [0, 1, 2])
        assert path.read_text(encoding="utf-8") == result.to_csv()

    def test_checkpoints_flag(self, capsys, tmp_path):
        path = tmp_path / "drift.csv"
        code, _, _ = run_cli(
            capsys, *self.ARGV, "--checkpoints", "100,400", "--out", str(path)
        )
        assert code == 0
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 3 * 2

    def test_rejects_malformed_checkpoints(self, capsys):
        code, _, err = run_cli(capsys, *self.ARGV, "--checkpoints", "1,,2")
        assert code == 2
        assert "--checkpoints" in err


class TestBoundCommand:
    def test_payload(self, capsys):
        code, out, _ = run_cli(
            capsys, "bound", "--k", "3", "--r1", "1.0", "--r2", "2.0", "--alpha", "0.001"
        )
        assert code == 0
        payload = json.loads(out)
        config = OddConfig(3, 1, 1.0, 2.0)
        assert payload == {
            "k": 3,
            "alpha": 0.001,
            "d_star": solve_lambda_star(config).d_star,
            "lower_bound": lower_bound_expected_tau(config, 0.001),
            "degenerate": False,
        }

    def test_degenerate_bound_is_null(self, capsys):
        """An undetectable configuration has no finite bound."""
        code, out, _ = run_cli(
            capsys, "bound", "--k", "3", "--r1", "2.0", "--r2", "2.0", "--alpha", "0.01"
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["d_star"] == 0.0
        assert payload["lower_bound"] is None
        assert payload["degenerate"] is True

    def test_rejects_alpha_outside_unit_interval(self, capsys):
        code, _, err = run_cli(
            capsys, "bound", "--k", "3", "--r1", "1.0", "--r2", "2.0", "--alpha", "1.5"
        )
        assert code == 2
        assert err.startswith("error: ")


class TestIndexCommand:
    def test_matrix_matches_library(self, capsys, tmp_path):
        rates_path = tmp_path / "rates.csv"
        rates_path.write_text(RATES_CSV, encoding="utf-8")
        code, out, _ = run_cli(capsys, "index", "--rates", str(rates_path), "--k", "3")
        assert code == 0
        table = FiringRateTable.from_csv(RATES_CSV)
        assert out == pairwise_dstar(table, 3).to_csv()
        lines = out.splitlines()
        assert lines[0] == MATRIX_HEADER
        assert len(lines) == 1 + 3 * 2

    def test_floor_flag_is_forwarded(self, capsys, tmp_path):
        text = "image_id,c1\na,1.0\nb,0.0\nc,9.0\n"
        rates_path = tmp_path / "rates.csv"
        rates_path.write_text(text, encoding="utf-8")
        code, out, _ = run_cli(
            capsys, "index", "--rates", str(rates_path), "--k", "3", "--floor", "0.5"
        )
        assert code == 0
        assert out == pairwise_dstar(FiringRateTable.from_csv(text, floor=0.5), 3).to_csv()

    def test_missing_rates_file(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "index", "--rates", str(tmp_path / "absent.csv"), "--k", "3"
        )
        assert code == 2
        assert "cannot read firing-rate CSV" in err

    def test_malformed_rates_report_line(self, capsys, tmp_path):
        rates_path = tmp_path / "rates.csv"
        rates_path.write_text("image_id,c1\na,1.0\nb,fast\n", encoding="utf-8")
        code, _, err = run_cli(capsys, "index", "--rates", str(rates_path), "--k", "3")
        assert code == 2
        assert "line 3" in err


class TestAnalyzeCommand:
    def _write_dataset(self, tmp_path, repeats):
        """Noise-free delays: mean delay exactly 2 / index for each pair."""
        rates_path = tmp_path / "rates.csv"
        rates_path.write_text(RATES_CSV, encoding="utf-8")
        pairs = [("a", "b"), ("b", "a"), ("a", "c"), ("c", "b")]
        lines = ["odd_id,distractor_id,delay"]
        for odd, dist in pairs:
            rate_odd = {"a": 1.0, "b": 4.0, "c": 9.0}[odd]
            rate_dist = {"a": 1.0, "b": 4.0, "c": 9.0}[dist]
            delay = 2.0 / d_star(OddConfig(3, 1, rate_odd, rate_dist))
            lines.extend(f"{odd},{dist},{delay!r}" for _ in range(repeats))
        delays_path = tmp_path / "delays.csv"
        delays_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return rates_path, delays_path

    def test_noise_free_metrics(self, capsys, tmp_path):
        """Reciprocal delays give perfect correlation; infinities become
        the string "inf" in the JSON output."""
        rates_path, delays_path = self._write_dataset(tmp_path, repeats=2)
        code, out, _ = run_cli(
            capsys,
            "analyze", "--rates", str(rates_path), "--delays", str(delays_path), "--k", "3",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["pairs"] == 4
        assert payload["pearson_r"] > 1.0 - 1e-9
        assert payload["log_am_gm"] < 1e-9
        assert payload["anova_f"] == "inf"
        assert payload["anova_p"] == 0.0

    def test_nan_encoded_as_null(self, capsys, tmp_path):
        """Single-sample pairs leave the variance test undefined."""
        rates_path, delays_path = self._write_dataset(tmp_path, repeats=1)
        code, out, _ = run_cli(
            capsys,
            "analyze", "--rates", str(rates_path), "--delays", str(delays_path), "--k", "3",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["anova_f"] is None
        assert payload["anova_p"] is None
        assert payload["pearson_r"] > 1.0 - 1e-9

    def test_missing_delays_file(self, capsys, tmp_path):
        rates_path = tmp_path / "rates.csv"
        rates_path.write_text(RATES_CSV, encoding="utf-8")
        code, _, err = run_cli(
            capsys,
            "analyze",
            "--rates", str(rates_path),
            "--delays", str(tmp_path / "absent.csv"),
            "--k", "3",
        )
        assert code == 2
        assert "cannot read delays CSV" in err


class TestExitDiscipline:
    def test_domain_error_exits_two(self, capsys):
        code, out, err = run_cli(capsys, "dstar", "--k", "2", "--r1", "1.0", "--r2", "2.0")
        assert code == 2
        assert out == ""
        assert err.startswith("error: ")

    def test_unparsable_rate_exits_two(self, capsys):
        code, _, err = run_cli(capsys, "dstar", "--k", "3", "--r1", "fast", "--r2", "2.0")
        assert code == 2
        assert "--r1 must be a comma-separated list of numbers" in err

    def test_empty_rate_segment_exits_two(self, capsys):
        code, _, err = run_cli(capsys, "dstar", "--k", "3", "--r1", "1,,2", "--r2", "2.0")
        assert code == 2
        assert "--r1" in err

    def test_missing_required_flag_exits_two(self, capsys):
        code, _, _ = run_cli(capsys, "dstar", "--k", "3", "--r1", "1.0")
        assert code == 2

    def test_unknown_command_exits_two(self, capsys):
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 2

    def test_no_command_exits_two(self, capsys):
        code, _, _ = run_cli(capsys)
        assert code == 2

    def test_non_integer_k_exits_two(self, capsys):
        code, _, _ = run_cli(capsys, "dstar", "--k", "three", "--r1", "1.0", "--r2", "2.0")
        assert code == 2

    def test_help_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "--help")
        assert code == 0
        assert "oddball" in out

    def test_unwritable_out_is_runtime_failure(self, capsys, tmp_path):
        """I/O faults outside input validation exit 1, not 2."""
        target = tmp_path / "no_such_dir" / "out.json"
        code, _, err = run_cli(
            capsys, "dstar", "--k", "3", "--r1", "1.0", "--r2", "2.0", "--out", str(target)
        )
        assert code == 1
        assert err.startswith("runtime failure: ")
