import math

import numpy as np
import pytest

from kicked_atoms import recipes
from kicked_atoms.cli import main
from kicked_atoms.ensemble import InitialDistribution, atom_rng, sample_atom
from kicked_atoms.errors import ParameterError
from kicked_atoms.io import read_csv
from kicked_atoms.units import DimensionlessParams


def test_scan_spec_validation():
    base = DimensionlessParams(tau=1.0)
    with pytest.raises(ParameterError):
        recipes.ScanSpec("tau", 2.0, 1.0, 5, base)
    with pytest.raises(ParameterError):
        recipes.ScanSpec("tau", 1.0, 2.0, 1, base)
    with pytest.raises(ParameterError):
        recipes.ScanSpec("lambda", 1.0, 2.0, 5, base)


def test_node_seeds_distinct_and_stable():
    seeds = [recipes.node_seed(0, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [recipes.node_seed(0, i) for i in range(100)]
    assert recipes.node_seed(1, 0) != seeds[0]


def test_local_maxima():
    assert recipes.local_maxima([0, 3, 1, 5, 2, 2, 4, 1]) == [3, 6, 1]


def test_degenerate_scan_two_rows(tmp_path):
    assert main(["tau-scan", "--steps", "2", "--atoms", "50", "--kicks", "5", "--out-dir", str(tmp_path)]) == 0
    meta, header, rows = read_csv(tmp_path / "scan.csv")
    assert header[:4] == ["tau", "E_true", "E_meas", "stderr"]
    assert len(rows) == 2
    assert "fingerprint" in meta and meta["seed"] == "0"


def test_scan_records_node_failures():
    base = DimensionlessParams(tau=2 * math.pi, n_kicks=10, n_atoms=20, n_max=40)
    table = recipes.run_scan(recipes.ScanSpec("phi_d", 0.1, 3.0, 4, base))
    assert len(table.rows) == 4
    assert table.rows[0].status == "ok"
    assert table.rows[-1].status.startswith("error") and math.isnan(table.rows[-1].E_meas)


def test_distribution_outputs_and_overlay(tmp_path):
    out = tmp_path / "d"
    rc = main(["distribution", "--atoms", "200", "--kicks", "10", "--out-dir", str(out),
               "--dump-state", str(tmp_path / "state.csv")])
    assert rc == 0
    for name in ("histogram.csv", "energy.csv", "overlay.csv", "metadata.json", "stationary.json"):
        assert (out / name).exists()
    _, header, rows = read_csv(out / "overlay.csv")
    assert header == ["n", "simulated", "windowed", "stationary"]
    _, header, rows = read_csv(out / "energy.csv")
    assert header == ["N", "E", "stderr", "E_meas"] and len(rows) == 11
    assert (tmp_path / "state.csv").read_text().startswith("# beta:")


def test_no_overlay_off_resonance(tmp_path):
    assert main(["distribution", "--atoms", "50", "--kicks", "5", "--tau", "5.1", "--out-dir", str(tmp_path)]) == 0
    assert not (tmp_path / "overlay.csv").exists()


def test_reruns_byte_identical(tmp_path):
    args = ["--seed", "9", "distribution", "--atoms", "300", "--kicks", "8", "--n-se", "0.2", "--threads", "2"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in ("histogram.csv", "energy.csv", "overlay.csv"):
        a, b = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
        assert a == b
        assert b"# fingerprint:" in a and b"# seed: 9" in a


def test_zero_kicks_histogram_is_binned_initial_sample():
    params = DimensionlessParams(tau=2 * math.pi, n_kicks=0, n_atoms=400, seed=2)
    run = recipes.run_distribution(params, overlay=False)
    d = InitialDistribution("gaussian", fwhm=6.0)
    p0 = np.array([sum(sample_atom(atom_rng(2, i), d, (i, 400))) for i in range(400)])
    bins = np.floor(p0 + 0.5).astype(int)
    h = run.result.final_histogram
    for k in range(-15, 16):
        assert h.at(k) == pytest.approx(np.mean(bins == k), abs=1e-12)


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("tau = 4pi\nn_kicks = 4\nn_atoms = 30\nwindow_max = 20\n")
    assert main(["--config", str(cfg), "distribution", "--kicks", "6", "--no-overlay",
                 "--out-dir", str(tmp_path / "o")]) == 0
    meta, _, rows = read_csv(tmp_path / "o" / "energy.csv")
    assert len(rows) == 7
    assert '"tau":12.566370614359172' in meta["params"] and '"p_max":20.0' in meta["window"]


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["--config", str(cfg), "distribution"]) == 2


def test_unknown_figure_usage_error():
    assert main(["reproduce", "fig9"]) == 2


def test_unknown_subcommand_usage_error():
    assert main(["plot"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    rc = main(["stationary", "--nodes", "64", "--tolerance", "1e-12", "--out-dir", str(tmp_path)])
    assert rc == 3


def test_stationary_command(tmp_path):
    assert main(["stationary", "--n-range", "10", "--out-dir", str(tmp_path)]) == 0
    _, header, rows = read_csv(tmp_path / "stationary.csv")
    assert header == ["n", "probability"] and len(rows) == 21
    assert '"nodes_xi": 1024' in (tmp_path / "stationary.json").read_text()


def test_reproduce_fig2a_bundle(tmp_path):
    assert main(["--atoms", "500", "reproduce", "fig2a", "--out-dir", str(tmp_path)]) == 0
    bundle = tmp_path / "fig2a"
    assert (bundle / "overlay.csv").exists() and (bundle / "metadata.json").exists()
    summary = (bundle / "summary.txt").read_text()
    assert "FAIL" not in summary and summary.count("PASS") == 2


def test_reproduce_fig2b_broadening(tmp_path):
    lines = recipes.reproduce("fig2b", tmp_path, n_atoms=2000)
    assert all(ok for _, ok, _ in lines), lines


def test_reproduce_fig1b_enhancement(tmp_path):
    lines = recipes.reproduce("fig1b", tmp_path, n_atoms=1000)
    assert all(ok for _, ok, _ in lines), lines
    _, _, rows = read_csv(tmp_path / "fig1b" / "scan.csv")
    assert len(rows) == recipes.FIG1_STEPS


@pytest.fixture(scope="module")
def fifty_node_scans():
    spec = recipes.ScanSpec("tau", 0.19 * math.pi, 6.31 * math.pi, 50, recipes.recipe_params(1000, 5, 0.0))
    coherent = recipes.run_scan(spec, threads=4)
    noisy = recipes.run_scan(recipes.ScanSpec("tau", spec.lo, spec.hi, 50, spec.base.replace(n_se_mean=0.14)),
                             threads=4)
    return coherent, noisy


def test_fifty_node_scan_peaks_at_resonant_nodes(fifty_node_scans):
    coherent, _ = fifty_node_scans
    lines = recipes.peak_check(coherent)[1:]
    assert all(ok for _, ok, _ in lines), [detail for _, ok, detail in lines if not ok]


def test_fifty_node_scan_enhanced_by_emission(fifty_node_scans):
    lines = recipes.enhancement_check(*fifty_node_scans)
    assert all(ok for _, ok, _ in lines), lines
