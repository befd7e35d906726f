import os
import textwrap

import pytest

from repchain.cli import main
from repchain.experiments import (
    load_experiment,
    parse_tolerances,
    read_result_csv,
    run_experiment,
)
from repchain.model import ValidationError


def write(path, text):
    path.write_text(textwrap.dedent(text))
    return str(path)


def body_lines(path):
    """CSV lines with the volatile generated_at metadata line dropped."""
    with open(path) as handle:
        return [line for line in handle if not line.startswith("# generated_at")]


@pytest.fixture
def ratio_config(tmp_path):
    return write(
        tmp_path / "ratio.yaml",
        """
        name: ratio-k2
        mode: ratio-curve
        output: ratio_k2.csv
        chain: {k: 2, p: 1.0, q: 0.5}
        allocation: {kind: reserved, levels: [1, 1]}
        grid: {q: [0.5, 0.1, 0.01]}
        """,
    )


class TestRunVerb:
    def test_ratio_curve_values(self, tmp_path, ratio_config):
        assert main(["run", ratio_config]) == 0
        header, rows = read_result_csv(tmp_path / "ratio_k2.csv")
        assert header == ["k", "p", "alloc", "policy", "q", "exact_rate", "rate_bound", "ratio"]
        assert len(rows) == 3
        assert rows[0][header.index("alloc")] == "reserved:1|1"
        ratios = [float(r[header.index("ratio")]) for r in rows]
        assert ratios[0] < ratios[1] < ratios[2] < 1.0
        bound = float(rows[0][header.index("rate_bound")])
        assert bound == pytest.approx(0.25 * 4 / 9, rel=1e-12)

    def test_analytic_start_exponent(self, tmp_path):
        cfg = write(
            tmp_path / "i0.yaml",
            """
            name: start-exponent
            mode: analytic
            output: i0.csv
            quantity: select-i0
            grid: {gamma: [1.5], delta: [0.5]}
            """,
        )
        assert main(["run", cfg]) == 0
        header, rows = read_result_csv(tmp_path / "i0.csv")
        assert rows[0][header.index("i0")] == "2"

    def test_simulate_schema_and_reproducibility(self, tmp_path):
        cfg = write(
            tmp_path / "sim.yaml",
            """
            name: sim
            mode: simulate
            output: sim.csv
            seed: 9
            chain: {k: 1, p: 1.0, q: 0.5}
            allocation: {kind: reserved, levels: [1]}
            sim: {horizon_time: 5000}
            grid: {q: [0.5, 0.2]}
            """,
        )
        assert main(["run", cfg]) == 0
        first = body_lines(tmp_path / "sim.csv")
        header, rows = read_result_csv(tmp_path / "sim.csv")
        assert ",".join(header) == (
            "k,p,q,alloc,protocol,policy,delay_mode,seed,horizon,delivered,elapsed,"
            "rate,rate_ci,comm_mem_avg,queue_mem_avg,delay_mean,delay_max"
        )
        assert len(rows) == 2
        assert main(["run", cfg]) == 0
        assert body_lines(tmp_path / "sim.csv") == first

    def test_sweep_rows_echo_their_configuration(self, tmp_path):
        cfg = write(
            tmp_path / "sweep.yaml",
            """
            name: sweep
            mode: sweep
            output: sweep.csv
            seed: 5
            chain: {k: 1, p: 1.0, q: 0.5}
            allocation: {kind: reserved, constant: 1}
            sim: {horizon_time: 2000}
            grid: {q: [0.5, 0.2], B: [1, 2]}
            """,
        )
        assert main(["run", cfg]) == 0
        header, rows = read_result_csv(tmp_path / "sweep.csv")
        assert len(rows) == 4
        combos = {(r[header.index("q")][:3], r[header.index("alloc")]) for r in rows}
        assert combos == {
            ("0.5", "reserved:1"),
            ("0.5", "reserved:2"),
            ("0.2", "reserved:1"),
            ("0.2", "reserved:2"),
        }
        seeds = {r[header.index("seed")] for r in rows}
        assert len(seeds) == 4  # one derived stream per cell

    def test_malformed_config_exits_one(self, tmp_path, capsys):
        cfg = write(
            tmp_path / "bad.yaml",
            """
            name: broken
            mode: ratio-curve
            output: out.csv
            chain: {k: 2, p: 1.0, q: 0.5}
            allocation: {kind: reserved, levels: [1]}
            grid: {q: [0.5]}
            """,
        )
        assert main(["run", cfg]) == 1
        assert "dimension mismatch" in capsys.readouterr().err

    def test_unknown_mode_exits_one(self, tmp_path):
        cfg = write(
            tmp_path / "mode.yaml",
            """
            name: x
            mode: nonsense
            output: out.csv
            """,
        )
        assert main(["run", cfg]) == 1

    def test_state_space_cap_exits_two(self, tmp_path):
        cfg = write(
            tmp_path / "huge.yaml",
            """
            name: huge
            mode: exact
            output: out.csv
            chain: {k: 4, p: 1.0, q: 0.5}
            allocation: {kind: reserved, levels: [3, 3, 3, 3]}
            """,
        )
        assert main(["run", cfg]) == 2

    def test_figures_flag_renders_png(self, tmp_path, ratio_config):
        assert main(["run", ratio_config, "--figures"]) == 0
        assert (tmp_path / "ratio_k2.png").exists()


class TestCompareVerb:
    def _write_pair(self, tmp_path, perturb=0.0):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("# meta\nq,rate,rate_ci\n0.5,0.3300,0.002\n0.2,0.1330,0.002\n")
        b.write_text(
            "# meta\nq,rate,rate_ci\n"
            f"0.5,{0.3305 + perturb},0.002\n0.2,{0.1328 + perturb},0.002\n"
        )
        return str(a), str(b)

    def test_within_tolerance_exit_zero(self, tmp_path):
        a, b = self._write_pair(tmp_path)
        assert main(["compare", a, b, "--tol", "rate=3ci", "--quiet"]) == 0

    def test_perturbed_exit_two(self, tmp_path):
        a, b = self._write_pair(tmp_path, perturb=0.05)
        assert main(["compare", a, b, "--tol", "rate=3ci", "--quiet"]) == 2

    def test_schema_mismatch_exit_one(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("q,rate\n0.5,0.33\n")
        b.write_text("q,throughput\n0.5,0.33\n")
        assert main(["compare", str(a), str(b), "--tol", "rate=0.01"]) == 1

    def test_relative_and_absolute_modes(self, tmp_path):
        a, b = self._write_pair(tmp_path)
        assert main(["compare", a, b, "--tol", "rate=0.01", "--quiet"]) == 0
        assert main(["compare", a, b, "--tol", "rate=1e-5", "--quiet"]) == 2
        assert main(["compare", a, b, "--tol", "rate=0.01rel", "--quiet"]) == 0

    def test_bad_tolerance_spec(self):
        with pytest.raises(ValidationError):
            parse_tolerances("rate")
        with pytest.raises(ValidationError):
            parse_tolerances("")
        with pytest.raises(ValidationError):
            parse_tolerances("rate=abc")


class TestVersionVerb:
    def test_prints_version(self, capsys):
        assert main(["version"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("repchain ")


class TestExperimentLoading:
    def test_missing_fields(self, tmp_path):
        cfg = write(tmp_path / "m.yaml", "name: x\nmode: analytic\n")
        with pytest.raises(ValidationError, match="output"):
            load_experiment(cfg)

    def test_unparseable_yaml(self, tmp_path):
        cfg = tmp_path / "u.yaml"
        cfg.write_text("{::::")
        with pytest.raises(ValidationError):
            load_experiment(str(cfg))

    def test_output_relative_to_config(self, tmp_path):
        sub = tmp_path / "nested"
        sub.mkdir()
        cfg = write(
            sub / "exp.yaml",
            """
            name: rel
            mode: analytic
            output: out/table.csv
            quantity: memory-constant
            grid: {B: [1, 2], k: [3]}
            """,
        )
        exp = load_experiment(cfg)
        path = run_experiment(exp)
        assert os.path.dirname(path) == str(sub / "out")
        header, rows = read_result_csv(path)
        assert len(rows) == 2
