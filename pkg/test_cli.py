import json

import numpy as np
import pytest

from cbtest.cli import main, manifest_argv, parse_model, run_test, snr_summary
from cbtest.distmodel import DistributionSpec, builtin_alternative, sample_equality_alt, sample_null
from cbtest.errors import ConfigError, DataError
from cbtest.montecarlo import DependenceModel, EqualityModel, NullModel, SimConfig, simulate


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def pairs_csv(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "pairs.csv"
    rows = ["first,second"] + [f"{float(a)!r},{float(b)!r}" for a, b in rng.random((40, 2))]
    path.write_text("\n".join(rows) + "\n")
    return path


# --- snr ---------------------------------------------------------------------------


def test_snr_linear(capsys):
    code, out = run_json(capsys, ["snr", "--alt", "example-4-2", "--n", "400", "--variant", "linear"])
    assert code == 0
    assert out["snr"] == pytest.approx(1.972, abs=0.005)
    assert out["tv_power"] == pytest.approx(0.676, abs=0.002)
    assert out["shift"] == pytest.approx(-20.0 * (np.log(3.0) - 1.0) ** 2, abs=1e-6)


def test_snr_maxima(capsys):
    code, out = run_json(capsys, ["snr", "--alt", "example-5-2", "--n", "400", "--variant", "maxima",
                                  "--reps", "2000", "--seed", "5"])
    assert code == 0
    assert out["variance"] == pytest.approx(0.0030, abs=0.0002)
    assert out["snr"] == pytest.approx(1.74, abs=0.03)
    assert out["shift_quadrature"] / 20.0 == pytest.approx(-0.00477, abs=0.0001)
    assert out["shift"] == out["mc_shift"]
    assert (out["mc_replications"], out["mc_seed"]) == (2000, 5)
    assert abs(out["mc_shift"] - out["shift_quadrature"]) <= 5.0 * out["mc_stderr"]
    assert out["cone_member"] is True


def test_snr_without_signal(capsys):
    code, out = run_json(capsys, ["snr", "--alt", "example-4-2", "--n", "400", "--epsilon", "0"])
    assert code == 0
    assert out["snr"] == 0.0
    assert out["tv_power"] == 0.0


def test_snr_of_a_degenerate_direction(capsys):
    alt = json.dumps({"kind": "pair", "a1": "uniform", "a2": "uniform"})
    code, _ = run_json(capsys, ["snr", "--alt", alt, "--n", "100"])
    assert code == 4


def test_snr_summary_with_a_kernel():
    out = snr_summary("example-4-2", 400, "linear", kernel="max:x")
    assert out["kernel"] == "max:x"
    assert abs(out["snr"]) < 1.972


# --- test ---------------------------------------------------------------------------


def test_test_subcommand(capsys, pairs_csv, tmp_path):
    out_path = tmp_path / "report.json"
    code, out = run_json(capsys, ["test", str(pairs_csv), "--statistic", "cross-prob",
                                  "--reps", "50", "--seed", "3", "--out", str(out_path)])
    assert code == 0
    assert 0.0 < out["p_value"] <= 1.0
    assert out["replications"] == 50
    assert out["n"] == 40
    assert set(out["critical_values"]) == {"0.1", "0.05", "0.01"}
    assert json.loads(out_path.read_text())["observed"] == out["observed"]
    manifest = json.loads((tmp_path / "report.manifest.json").read_text())
    assert manifest["inputs"] == [str(pairs_csv)]
    assert manifest["config"]["args"]["statistic"] == "cross-prob"
    assert (manifest["config"]["args"]["reps"], manifest["config"]["args"]["seed"]) == (50, 3)


def test_test_subcommand_with_a_direction(capsys, pairs_csv):
    code, out = run_json(capsys, ["test", str(pairs_csv), "--statistic", "maxima", "--alt", "example-5-2",
                                  "--reps", "30", "--level", "0.2"])
    assert code == 0
    assert "0.2" in out["critical_values"]
    assert any("mixture" in note or "uniform+square" in note for note in out["notes"])


@pytest.mark.parametrize(
    "extra, code",
    [
        (["--statistic", "ks-full"], 2),
        (["--statistic", "linear"], 2),
        (["--statistic", "ks-sym", "--model", "example-4-2"], 2),
    ],
)
def test_test_subcommand_config_errors(capsys, pairs_csv, extra, code):
    assert main(["test", str(pairs_csv), "--reps", "10"] + extra) == code


def test_test_subcommand_data_errors(capsys, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["test", str(empty), "--statistic", "ks-sym"]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,0.2\n0.3,0.4\n0.5,abc\n")
    assert main(["test", str(bad), "--statistic", "ks-sym"]) == 3
    assert main(["test", str(tmp_path / "missing.csv"), "--statistic", "ks-sym"]) == 3


def test_run_test_rescales_and_needs_two_pairs():
    report = run_test([10.0, 20.0, 30.0], [15.0, 5.0, 40.0], "ks-sym", reps=20, seed=1)
    assert any("rescaled to" in note for note in report.notes)
    with pytest.raises(DataError):
        run_test([0.5], [0.4], "ks-sym", reps=20)


def write_pairs(path, a, b):
    rows = ["first,second"] + [f"{float(x)!r},{float(y)!r}" for x, y in zip(a, b)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_cross_probability_of_null_data(capsys, tmp_path):
    n = 400
    s = sample_null(DistributionSpec.uniform(), n, np.random.default_rng(12))
    data = write_pairs(tmp_path / "null.csv", s.x, s.y)
    code, out = run_json(capsys, ["test", str(data), "--statistic", "cross-prob", "--reps", "100", "--seed", "2"])
    assert code == 0
    assert out["tail"] == "right"
    spread = simulate(SimConfig("cross-prob", n, 300, 13, NullModel(DistributionSpec.uniform()))).values.std(ddof=1)
    assert abs(out["observed"] - 5.0 / 6.0) <= 3.0 * spread


def test_linear_test_rejects_the_example_alternative():
    alt = builtin_alternative("example-4-2")
    rejections = 0
    for seed in range(15):
        s = sample_equality_alt(alt, 400, np.random.default_rng(100 + seed))
        report = run_test(s.x, s.y, "linear", alt="example-4-2", reps=200, seed=seed, tail="left", levels=(0.1,))
        rejections += report.p_value < 0.1
    assert rejections >= 8


def test_reports_carry_the_tail():
    a, b = [0.1, 0.5, 0.9, 0.3], [0.4, 0.2, 0.8, 0.6]
    assert run_test(a, b, "linear", alt="example-4-2", reps=20, seed=1).to_dict()["tail"] == "two-sided"
    assert run_test(a, b, "cross-prob", reps=20, seed=1).to_dict()["tail"] == "right"


# --- simulate -------------------------------------------------------------------------


def test_simulate_writes_ecdf_and_manifest(capsys, tmp_path):
    out = tmp_path / "ecdf.csv"
    code, summary = run_json(capsys, ["simulate", "--statistic", "ks-sym", "--model", "null-uniform",
                                      "--n", "20", "--reps", "25", "--seed", "4", "--out", str(out),
                                      "--level", "0.1"])
    assert code == 0
    assert summary["replications"] == 25
    lines = out.read_text().splitlines()
    assert lines[0] == "value,probability"
    assert len(lines) == 26
    values = [float(line.split(",")[0]) for line in lines[1:]]
    assert values == sorted(values)
    assert json.loads((tmp_path / "ecdf.json").read_text())["config"]["n"] == 20
    manifest = json.loads((tmp_path / "ecdf.manifest.json").read_text())
    assert manifest["seed"] == 4
    assert summary["critical_value"] == values[22]


def test_simulate_single_replication(capsys, tmp_path):
    out = tmp_path / "one.csv"
    assert main(["simulate", "--statistic", "cross-prob", "--n", "5", "--reps", "1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_simulate_is_reproducible_across_worker_counts(capsys, tmp_path):
    args = ["simulate", "--statistic", "maxima", "--model", "equality:example-5-2", "--n", "30",
            "--reps", "40", "--seed", "8"]
    assert main(args + ["--workers", "1", "--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--workers", "4", "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_dependence_model(capsys, tmp_path):
    alt = json.dumps({"kind": "dependence", "q": "uniform", "g": "(2*x-1)*(2*y-1)", "epsilon": 0.5})
    out = tmp_path / "dep.csv"
    assert main(["simulate", "--statistic", "ks-full", "--model", alt, "--n", "30", "--reps", "10",
                 "--out", str(out)]) == 0


def test_simulate_rejects_bad_replication_counts(capsys, tmp_path):
    assert main(["simulate", "--statistic", "ks-sym", "--n", "10", "--reps", "0",
                 "--out", str(tmp_path / "x.csv")]) == 2


def test_simulation_reruns_from_its_manifest(capsys, tmp_path):
    model = json.dumps({"kind": "equality", "q": "uniform", "h": "0.5*(1-2*x)"})
    first = tmp_path / "a.csv"
    assert main(["simulate", "--statistic", "linear", "--model", model, "--n", "30",
                 "--reps", "20", "--seed", "6", "--out", str(first)]) == 0
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    assert "0.5*(1-2*x)" in manifest["config"]["args"]["model"]
    assert manifest["config"]["resolved"]["replications"] == 20

    second = tmp_path / "b.csv"
    argv = manifest_argv(manifest, out=str(second))
    assert argv[0] == "simulate"
    assert main(argv) == 0
    assert second.read_bytes() == first.read_bytes()


def test_simulation_rerun_uses_the_resolved_defaults(capsys, tmp_path):
    first = tmp_path / "a.csv"
    assert main(["simulate", "--statistic", "cross-prob", "--n", "6", "--out", str(first)]) == 0
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    assert (manifest["config"]["args"]["reps"], manifest["config"]["args"]["seed"]) == (200, 20240601)
    second = tmp_path / "b.csv"
    assert main(manifest_argv(manifest, out=str(second))) == 0
    assert second.read_bytes() == first.read_bytes()


# --- figures ---------------------------------------------------------------------------


def test_figures(capsys, tmp_path):
    out = tmp_path / "figs"
    code, summary = run_json(capsys, ["figures", "--n", "20", "--reps", "20", "--grid", "11",
                                      "--out", str(out)])
    assert code == 0
    for name in ("fig1", "fig3", "fig4", "fig5"):
        assert (out / f"{name}.csv").is_file()
        assert (out / f"{name}.manifest.json").is_file()
    rows = (out / "fig1.csv").read_text().splitlines()
    assert rows[0] == "x,lo,mid,hi"
    x, lo, mid, hi = map(float, rows[6].split(","))
    assert x == 0.5
    assert (lo, mid) == pytest.approx((0.125, 0.140625), abs=1e-12)
    assert hi == pytest.approx(0.150255, abs=1e-6)
    curves = {line.split(",")[0] for line in (out / "fig3.csv").read_text().splitlines()[1:]}
    assert curves == {"ks-full", "ks-sym"}
    assert "fig4_gap" in summary and "fig5_gap" in summary


def test_figure_curves_are_ordered(capsys, tmp_path):
    code, summary = run_json(capsys, ["figures", "--n", "300", "--reps", "200", "--grid", "11",
                                      "--seed", "9", "--out", str(tmp_path / "figs")])
    assert code == 0
    assert summary["fig3_min_gap"] >= 0.0
    assert summary["fig5_gap"] > summary["fig4_gap"]
    manifest = json.loads((tmp_path / "figs" / "fig4.manifest.json").read_text())
    assert manifest["config"]["args"]["n"] == 300
    assert manifest["config"]["resolved"]["null"]["statistic"] == "ks-sym"


# --- models ------------------------------------------------------------------------------


def test_parse_model():
    assert isinstance(parse_model("null-mixture"), NullModel)
    assert isinstance(parse_model("equality:example-4-2", 0.5), EqualityModel)
    assert parse_model("example-4-2", 0.5).alt.epsilon == 0.5
    dep = json.dumps({"kind": "dependence", "q": "uniform", "g": "(2*x-1)*(2*y-1)"})
    assert isinstance(parse_model(dep), DependenceModel)
    with pytest.raises(ConfigError):
        parse_model("dependence:example-4-2")
    with pytest.raises(ConfigError):
        parse_model("null-cauchy")
