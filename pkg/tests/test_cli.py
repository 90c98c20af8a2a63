import json

import numpy as np
import pytest

from pidcert.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


def test_synthesize_corollary_example(tmp_path, capsys):
    out_stem = tmp_path / "synth"
    code, out = run_cli(
        ["synthesize", "--L", "1", "--mode", "corollary", "--epsilon", "0.1",
         "--a", "10", "--out", str(out_stem)],
        capsys,
    )
    assert code == 0
    assert "verdict: PASS" in out
    data = json.loads((tmp_path / "synth.json").read_text())
    g = data["results"]["gains"]
    assert g["kp"] == pytest.approx(-12.11)
    assert g["ki"] == pytest.approx(-1.1)
    assert g["kd"] == pytest.approx(-11.2)
    assert data["results"]["member"] is True


def test_synthesize_zero_lipschitz_bound(capsys):
    code, out = run_cli(["synthesize", "--L", "0"], capsys)
    assert code == 0
    assert "verdict: PASS" in out


def test_synthesize_search_mode(capsys):
    code, out = run_cli(["synthesize", "--L", "1", "--mode", "search", "--seed", "7"], capsys)
    assert code == 0
    assert "member: True" in out


def test_synthesize_rejects_bad_parameters(capsys):
    assert main(["synthesize", "--L", "1", "--epsilon", "0.3", "--a", "10"]) == 2
    assert main(["synthesize", "--L", "1", "--epsilon", "0.1", "--a", "4"]) == 2


def test_check_examples(capsys):
    code, _ = run_cli(["check", "--kp", "-302", "--ki", "-200", "--kd", "-103", "--L", "1"], capsys)
    assert code == 0
    code, out = run_cli(["check", "--kp", "-11", "--ki", "-6", "--kd", "-6", "--L", "1"], capsys)
    assert code == 1
    assert "ProductNotBelowOne" in out
    code, out = run_cli(["check", "--kp", "0", "--ki", "0", "--kd", "0", "--L", "1"], capsys)
    assert code == 1
    assert "NotNegative" in out


def test_simulate_zero_plant_converges(tmp_path, capsys):
    out_stem = tmp_path / "run"
    code, out = run_cli(
        ["simulate", "--plant", "zero", "--kp", "-12.11", "--ki", "-1.1", "--kd", "-11.2",
         "--setpoint", "5", "--x1", "0", "--x2", "0", "--out", str(out_stem)],
        capsys,
    )
    assert code == 0
    data = json.loads((tmp_path / "run.json").read_text())
    assert data["results"]["outcome"]["kind"] == "Converged"
    assert data["results"]["outcome"]["final_error"] < 1e-9
    csv_lines = (tmp_path / "run.csv").read_text().splitlines()
    assert csv_lines[0] == "t,y0_1,x1_1,x2_1,err_norm,V"
    assert len(csv_lines) > 100
    # 17-significant-digit floats survive the round trip exactly
    first = csv_lines[2].split(",")
    assert float(first[0]) == float(first[0])


def test_simulate_report_bytes_are_stable(tmp_path, capsys):
    # identical flags (including the output path) give identical bytes
    args = ["simulate", "--plant", "sine_mix", "--param", "alpha=0.6", "--param", "beta=0.8",
            "--kp", "-12.11", "--ki", "-1.1", "--kd", "-11.2", "--setpoint", "2",
            "--x1", "1", "--x2", "0", "--out", str(tmp_path / "run")]
    assert main(args) == 0
    first_json = (tmp_path / "run.json").read_bytes()
    first_csv = (tmp_path / "run.csv").read_bytes()
    assert main(args) == 0
    capsys.readouterr()
    assert (tmp_path / "run.json").read_bytes() == first_json
    assert (tmp_path / "run.csv").read_bytes() == first_csv


def test_simulate_refuses_power_law(capsys):
    code = main(["simulate", "--plant", "power_law", "--param", "epsilon=1",
                 "--kp", "-12.11", "--ki", "-1.1", "--kd", "-11.2"])
    err = capsys.readouterr().err
    assert code == 2
    assert "demo-escape" in err


def test_simulate_unknown_plant_exit_code(capsys):
    assert main(["simulate", "--plant", "warp_drive", "--kp", "-1", "--ki", "-1",
                 "--kd", "-1"]) == 2


def test_simulate_uncertified_gains_inconclusive(tmp_path, capsys):
    # positive pole: not a member, nothing claimed, run cannot PASS
    code, out = run_cli(
        ["simulate", "--plant", "zero", "--kp", "-0.5", "--ki", "1", "--kd", "-2.5",
         "--setpoint", "1", "--x1", "0", "--x2", "0", "--t-max", "40"],
        capsys,
    )
    assert code == 1
    assert "verdict: INCONCLUSIVE" in out


def test_verify_small_run_with_adversarial(tmp_path, capsys):
    out_stem = tmp_path / "verify"
    code, out = run_cli(
        ["verify", "--L", "1", "--trials", "4", "--seed", "0", "--adversarial",
         "--out", str(out_stem)],
        capsys,
    )
    assert code == 0
    data = json.loads((tmp_path / "verify.json").read_text())
    assert data["results"]["trials_passed"] == 4
    assert data["results"]["adversarial"]["label"] == "INCONCLUSIVE"
    assert data["results"]["adversarial"]["member"] is False


def test_verify_alias_subcommand(capsys):
    code, out = run_cli(["verify-theorem1", "--L", "1", "--trials", "2", "--seed", "1"], capsys)
    assert code == 0
    assert "verdict: PASS" in out


def test_verify_vector_case(capsys):
    code, out = run_cli(["verify", "--L", "1", "--trials", "2", "--seed", "0", "--n", "2"], capsys)
    assert code == 0


def test_demo_escape_rejects_zero_exponent(capsys):
    assert main(["demo-escape", "--epsilon", "0"]) == 2


def test_demo_escape_passes_and_writes_outputs(tmp_path, capsys):
    out_stem = tmp_path / "esc"
    plot_dir = tmp_path / "figs"
    code, out = run_cli(
        ["demo-escape", "--epsilon", "1", "--kp", "0", "--ki", "0", "--kd", "0",
         "--out", str(out_stem), "--plot-dir", str(plot_dir)],
        capsys,
    )
    assert code == 0
    data = json.loads((tmp_path / "esc.json").read_text())
    assert data["results"]["checks"] == {k: True for k in data["results"]["checks"]}
    assert data["results"]["outcome"]["kind"] == "FiniteEscape"
    assert (plot_dir / "escape_demo.png").exists()
    header = (tmp_path / "esc.csv").read_text().splitlines()[0]
    assert header == "t,y0,y1,y2,envelope,error_floor"


def test_demo_third_order_passes(tmp_path, capsys):
    code, out = run_cli(
        ["demo-third-order", "--kp", "-11", "--ki", "-6", "--kd", "-6", "--L", "1",
         "--out", str(tmp_path / "third")],
        capsys,
    )
    assert code == 0
    data = json.loads((tmp_path / "third.json").read_text())
    assert data["results"]["checks"]["error_exceeds_threshold"] is True
    assert data["results"]["checks"]["closed_form_match"] is True
    assert abs(data["results"]["real_part_sum"] - data["results"]["feedthrough_c"]) <= 1e-9


def test_demo_third_order_reduced_variants(capsys):
    code, out = run_cli(["demo-third-order", "--kp", "-11", "--ki", "0", "--kd", "-6"], capsys)
    assert code == 0
    assert "variant: reduced" in out
    code, out = run_cli(["demo-third-order", "--kp", "0", "--ki", "0", "--kd", "0"], capsys)
    assert code == 0
    assert "variant: reduced-degenerate" in out


def test_config_file_supplies_defaults_and_flags_win(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"L": 1.0, "epsilon": 0.1, "a": 10.0}))
    code, out = run_cli(["synthesize", "--config", str(cfg)], capsys)
    assert code == 0
    assert "-12.11" in out
    # explicit flag overrides the config value
    code, out = run_cli(["synthesize", "--config", str(cfg), "--a", "20"], capsys)
    assert code == 0
    assert "-24.11" in out  # kp = -(0.11 + 1.2*20)


def test_plot_dir_renders_figures(tmp_path, capsys):
    plot_dir = tmp_path / "figs"
    code, _ = run_cli(
        ["simulate", "--plant", "zero", "--kp", "-11", "--ki", "-6", "--kd", "-6",
         "--setpoint", "1", "--x1", "0", "--x2", "0", "--t-max", "60",
         "--plot-dir", str(plot_dir)],
        capsys,
    )
    assert code == 0
    assert (plot_dir / "simulate_trajectory.png").exists()
    assert (plot_dir / "simulate_lyapunov.png").exists()


def test_results_csv_flatten_for_scalar_commands(tmp_path, capsys):
    out_stem = tmp_path / "chk"
    code, _ = run_cli(
        ["check", "--kp", "-302", "--ki", "-200", "--kd", "-103", "--L", "1",
         "--out", str(out_stem), "--format", "csv"],
        capsys,
    )
    assert code == 0
    text = (tmp_path / "chk.csv").read_text()
    assert text.startswith("key,value")
    assert "member,True" in text


def test_csv_floats_round_trip_exactly():
    from pidcert.reporting import fmt

    rng = np.random.default_rng(8)
    for x in rng.uniform(-1e6, 1e6, size=200):
        assert float(fmt(float(x))) == float(x)
    for x in (1.0 / 3.0, np.pi, 5.839421303620145e-10, -2.2250738585072014e-308):
        assert float(fmt(x)) == x


def test_config_with_repeatable_param_flag(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "plant": "sine_mix",
        "param": ["alpha=0.6", "beta=0.8"],
        "kp": -12.11, "ki": -1.1, "kd": -11.2,
        "setpoint": "2", "x1": "0", "x2": "0",
    }))
    code, out = run_cli(["simulate", "--config", str(cfg)], capsys)
    assert code == 0
    assert "sine_mix(alpha=0.6, beta=0.8)" in out


def test_demo_third_order_renders_figure(tmp_path, capsys):
    plot_dir = tmp_path / "figs"
    code, _ = run_cli(
        ["demo-third-order", "--kp", "-11", "--ki", "-6", "--kd", "-6",
         "--plot-dir", str(plot_dir)],
        capsys,
    )
    assert code == 0
    assert (plot_dir / "third_order_demo.png").exists()


def test_synthesize_renders_region_figure(tmp_path, capsys):
    plot_dir = tmp_path / "figs"
    code, _ = run_cli(
        ["synthesize", "--L", "1", "--mode", "search", "--seed", "3",
         "--plot-dir", str(plot_dir)],
        capsys,
    )
    assert code == 0
    assert (plot_dir / "synthesize_region.png").exists()
