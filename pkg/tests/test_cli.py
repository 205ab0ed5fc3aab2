import io
import json
import math

import pytest

from cbdi.cli_io import dump_config, gnuplot_blocks, parse_config, read_csv
from cbdi.cli_io.cli import EXIT_INDETERMINATE, EXIT_OK, EXIT_ORACLE_FAILED, EXIT_USAGE, run
from cbdi.cli_io.output import csv_text, format_value
from cbdi.errors import ParseError, ValidationError

DETERMINATE = """
[psi]
terms = [[-2.0, 0.0]]
[psi_hat]
terms = [[1.0, 2.0]]
"""

UNDECIDED = """
[psi]
terms = [[1.0, 2.0]]
[psi_hat]
terms = [[1.0, 2.0]]
"""

SIMULATE = """
seed = 4
[psi]
terms = [[1.0, 2.0]]
[psi_hat]
terms = []
[sim]
dt = 0.01
paths = 2000
[simulate]
times = [0.5, 1.0]
y = [0.0, 1.0, 2.0]
"""

DUALITY = """
seed = 2
[psi]
terms = [[1.0, 2.0]]
[psi_hat]
terms = [[1.0, 2.0]]
[sim]
dt = 0.01
paths = 1000
[duality]
x = [0.5, 1.0]
y = [1.0]
times = [0.5]
"""

LEVY_KHINTCHINE = """
seed = 9
out = "results"
[psi]
form = "lk"
diffusion = 0.5
drift = -1.0
killing = 0.1
[psi.jumps]
family = "sum"
parts = [{family = "stable", intensity = 1.0, index = 1.5}, {family = "atoms", positions = [1.0, 3.0], masses = [0.5, 0.25]}]
[psi_hat]
terms = [[1.0, 1.5], [-1.0, 0.4]]
[phase]
alpha = [0.3, 0.7]
tau = 0.0001
[sim]
jump_cap = inf
"""


def records(text):
    _, header, rows = read_csv(text)
    return [dict(zip(header, row)) for row in rows]


def invoke(tmp_path, text, command, *extra):
    path = tmp_path / "run.toml"
    path.write_text(text)
    out, err = io.StringIO(), io.StringIO()
    code = run([command, "--config", str(path), *extra], out, err)
    return code, out.getvalue(), err.getvalue()


class TestParsing:
    def test_levy_khintchine_example(self):
        cfg = parse_config(LEVY_KHINTCHINE)
        psi, psi_hat = cfg.mechanisms()
        assert cfg.seed == 9 and cfg.out == "results"
        assert cfg.phase.alpha == (0.3, 0.7) and math.isinf(cfg.sim.jump_cap)
        assert psi.diffusion == 0.5 and psi.killing == 0.1

    def test_defaults(self):
        cfg = parse_config(DETERMINATE)
        assert (cfg.sim.dt, cfg.sim.paths, cfg.classify.tau, cfg.seed) == (1e-3, 10000, 0.05, 0)

    def test_misspelled_key_names_its_path(self):
        with pytest.raises(ValidationError) as info:
            parse_config('[psi]\nform = "lk"\ndifusion = 1.0\n')
        assert info.value.key == "psi.difusion"

    def test_misspelled_nested_family_key(self):
        text = '[psi]\nform = "lk"\n[psi.jumps]\nfamily = "sum"\nparts = [{family = "atoms", positions = [1.0], masse = [1.0]}]\n'
        with pytest.raises(ValidationError) as info:
            parse_config(text)
        assert info.value.key == "psi.jumps.parts[0].masse"

    def test_negative_killing_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config('[psi]\nform = "lk"\nkilling = -1.0\n')
        assert info.value.key == "psi.killing"

    def test_inadmissible_power_term_rejected(self):
        with pytest.raises(ValidationError):
            parse_config("[psi]\nterms = [[1.0, 0.5]]\n")

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as info:
            parse_config("seed = 1\n[psi\n")
        assert (info.value.line, info.value.column) == (2, 5)

    def test_unterminated_document_has_position(self):
        with pytest.raises(ParseError) as info:
            parse_config("[psi]\nterms = [[1.0, 2.0]\n")
        assert info.value.line == 3

    def test_missing_mechanism(self):
        with pytest.raises(ValidationError):
            parse_config("seed = 1\n").mechanisms()

    def test_round_trip(self):
        cfg = parse_config(LEVY_KHINTCHINE)
        assert parse_config(dump_config(cfg)) == cfg


class TestOutputFormat:
    def test_floats_read_back_exactly(self):
        for v in (0.1, 1 / 3, 1e-300, 2.5e17):
            assert float(format_value(v)) == v
        assert [format_value(v) for v in (math.inf, True, None)] == ["inf", "true", ""]

    def test_schema_line_then_header(self):
        text = csv_text("demo", 2, ["a", "b"], [[1.0, "x"]])
        assert text.splitlines()[:2] == ["# schema: cbdi.demo v2", "a,b"]
        assert read_csv(text) == ("# schema: cbdi.demo v2", ["a", "b"], [["1.0", "x"]])

    def test_gnuplot_blocks_are_separated(self):
        text = gnuplot_blocks(["g", "v"], [[1, 1.0], [1, 2.0], [2, 3.0]], "g")
        assert text.count("\n\n\n") == 1


class TestExitCodes:
    def test_classify_determinate(self, tmp_path):
        code, out, _ = invoke(tmp_path, DETERMINATE, "classify")
        assert code == EXIT_OK
        assert out.startswith("# schema: cbdi.classify v1\n")
        assert "Exit" in out and "Entrance" in out

    def test_classify_indeterminate(self, tmp_path):
        assert invoke(tmp_path, UNDECIDED, "classify")[0] == EXIT_INDETERMINATE

    def test_params(self, tmp_path):
        code, out, _ = invoke(tmp_path, DETERMINATE, "params")
        assert code in (EXIT_OK, EXIT_INDETERMINATE)
        rows = records(out)
        assert {r["parameter"] for r in rows} >= {"theta(Phi,Sigma_hat)", "rho(Sigma_hat,Phi)"}

    def test_simulate_passes_oracle(self, tmp_path):
        code, out, _ = invoke(tmp_path, SIMULATE, "simulate")
        assert code == EXIT_OK
        rows = records(out)
        assert len(rows) == 6 and all(r["passed"] == "true" for r in rows)

    def test_simulate_fails_tight_oracle(self, tmp_path):
        tight = SIMULATE + "k = 1e-9\nabs_tol = 0.0\n"
        assert invoke(tmp_path, tight, "simulate")[0] == EXIT_ORACLE_FAILED

    def test_duality_passes(self, tmp_path):
        code, out, _ = invoke(tmp_path, DUALITY, "duality")
        assert code == EXIT_OK
        assert len(records(out)) == 2

    def test_bad_config_is_a_usage_error(self, tmp_path):
        code, _, err = invoke(tmp_path, "[psi]\ndifusion = 1\n", "classify")
        assert code == EXIT_USAGE and "psi.difusion" in err

    def test_time_off_the_step_grid(self, tmp_path):
        assert invoke(tmp_path, SIMULATE.replace("[0.5, 1.0]", "[0.505]").replace("dt = 0.01", "dt = 0.02"),
                      "simulate")[0] == EXIT_USAGE


class TestEdgeCases:
    def test_zero_paths_gives_header_only(self, tmp_path):
        code, out, _ = invoke(tmp_path, SIMULATE, "simulate", "--paths", "0")
        assert code == EXIT_OK
        assert out.splitlines() == ["# schema: cbdi.simulate.laplace v1", out.splitlines()[1]]

    def test_empty_sweep_gives_header_only(self, tmp_path):
        code, out, _ = invoke(tmp_path, DETERMINATE + "[phase]\nratio_count = 0\n", "phase")
        assert code == EXIT_OK and len(out.splitlines()) == 2

    def test_single_point_sweep(self, tmp_path):
        text = DETERMINATE + "[phase]\nratio_start = 0.7\nratio_stop = 0.7\nratio_count = 1\n"
        code, out, _ = invoke(tmp_path, text, "phase")
        rows = records(out)
        assert code == EXIT_OK and len(rows) == 1
        assert rows[0]["verdict_infinity_X"] == "Regular"

    def test_phase_files(self, tmp_path):
        text = DETERMINATE + "[phase]\nalpha = [0.3, 0.5]\nratio_count = 8\n"
        code, _, _ = invoke(tmp_path, text, "phase", "--out", str(tmp_path / "o"))
        assert code in (EXIT_OK, EXIT_INDETERMINATE)
        dat = (tmp_path / "o" / "phase.dat").read_text()
        assert dat.count("\n\n\n") == 1
        record = json.loads((tmp_path / "o" / "phase.json").read_text())
        assert "transitions" in record


class TestReplay:
    def test_identical_config_gives_identical_bytes(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            invoke(tmp_path, SIMULATE, "simulate", "--paths", "200", "--out", str(tmp_path / name))
            outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
        assert outputs[0] == outputs[1]
        assert set(outputs[0]) == {"simulate.csv", "simulate_states.csv", "simulate.json"}

    def test_seed_flag_changes_the_sample(self, tmp_path):
        first = invoke(tmp_path, SIMULATE, "simulate", "--paths", "200")[1]
        second = invoke(tmp_path, SIMULATE, "simulate", "--paths", "200", "--seed", "5")[1]
        assert first != second

    def test_record_replays(self, tmp_path):
        invoke(tmp_path, DETERMINATE, "classify", "--out", str(tmp_path / "o"))
        record = json.loads((tmp_path / "o" / "classify.json").read_text())
        assert "out" not in record["config"]
        assert record["config"]["psi"]["terms"] == [[-2.0, 0.0]]
