import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortex_spike.cli import main
from vortex_spike.io import read_json, write_field, write_json
from vortex_spike.pipeline import (
    THRESHOLDS,
    ConfigError,
    RunConfig,
    check,
    cmd_diagnose,
    cmd_plot,
    fit_scaling,
    scaling_report,
)

# config ------------------------------------------------------------------------------


def test_defaults_are_valid():
    cfg = RunConfig.from_dict({})
    assert cfg.delta == 0.35 and cfg.scheme == "fd4"
    assert cfg.tols().tau == 1e-8


def test_hash_ignores_output_location_and_threads():
    a = RunConfig.from_dict({})
    b = RunConfig.from_dict({"out": "elsewhere", "threads": 3})
    c = RunConfig.from_dict({"delta": 0.3})
    assert a.hash == b.hash != c.hash
    assert len(a.hash) == 16


@pytest.mark.parametrize("data", [
    {"nonsense": 1},
    {"tolerances": {"bogus": 1e-3}},
    {"p": 0},
    {"p": 2.5},
    {"g": -1},
    {"alpha": float("nan")},
    {"delta": 1.2},
    {"delta_list": []},
    {"bracket": 0.5},
    {"Nx": 63},
    {"scheme": "fd6"},
    {"threads": 0},
    {"tolerances": {"tau": 0}},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_overrides_win_and_none_is_ignored():
    cfg = RunConfig.from_dict({"delta": 0.3}, {"delta": 0.25, "out": None})
    assert cfg.delta == 0.25 and cfg.out == "runs"


def test_delta_outside_calibrated_range_warns():
    with pytest.warns(UserWarning, match="calibrated"):
        RunConfig.from_dict({"delta": 0.1})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        RunConfig.from_dict({"delta": 0.3})


def test_grid_overrides_are_checked():
    cfg = RunConfig.from_dict({"Nx": 64})
    with pytest.raises(ConfigError):
        cfg.grid(0.35)  # spacing too coarse for the spike


# scaling ---------------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.floats(-3, -1), st.sampled_from([0.0, 0.25, 0.5]), st.sampled_from([0.0, 0.5]))
def test_fit_recovers_synthetic_exponent(c0, c2, c1, lp):
    d = np.array([0.25, 0.3, 0.35, 0.4, 0.5])
    y = np.exp(c0 + c2 / d) * d**c1 * np.abs(np.log(d)) ** lp
    f0, f2, r2 = fit_scaling(d, y, c1, lp)
    assert f0 == pytest.approx(c0, abs=1e-9)
    assert f2 == pytest.approx(c2, abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_scaling_report_needs_five_points():
    rows = [{"delta": d, "l": np.exp(-2 / d) * d**0.5, "F_norm": 1.0} for d in (0.3, 0.4, 0.5)]
    rep = {r["quantity"]: r for r in scaling_report(rows, [])}
    assert rep["l"]["c2"] is None and not rep["l"]["accepted"]
    rows += [{"delta": d, "l": np.exp(-2 / d) * d**0.5, "F_norm": 1.0} for d in (0.25, 0.35)]
    rep = {r["quantity"]: r for r in scaling_report(rows, [])}
    assert rep["l"]["c2"] == pytest.approx(-2.0) and rep["l"]["accepted"]
    assert not rep["F_norm"]["accepted"]  # flat data has the wrong exponent


# thresholds ----------------------------------------------------------------------------------


def good_diag():
    return {"boundary_identity_rel": 1e-14, "pde_residual": 1e-11, "bernoulli_residual": 1e-12,
            "vorticity_ratio": 1e-4, "kinetic_ratio": 1.02, "residual_v": 1e-12, "residual_s": 1e-13,
            "min_eta": -0.1, "omega_center_negative": True, "omega_negative": 10, "omega_positive": 100,
            "closed_streamlines": True}


def good_root():
    return {"b_boundary_relative": 1e-12, "b_sign_change": True, "b_boundary_sign_change": True}


def test_check_passes_and_flags_each_rule():
    table = check(good_diag(), good_root())
    assert len(table) == len(THRESHOLDS) and all(r["pass"] for r in table.values())
    bad = good_diag() | {"pde_residual": 1e-5, "min_eta": 0.01}
    table = check(bad, good_root() | {"b_sign_change": False})
    failed = {k for k, r in table.items() if not r["pass"]}
    assert failed == {"pde_residual", "depression", "zero_sets"}


# bundles and the command line ---------------------------------------------------------------


@pytest.fixture
def bundle(tmp_path):
    """A small synthetic solution bundle with the stored layout."""
    d = tmp_path / "delta_0.3500"
    x = np.linspace(-2, 2, 41)
    y = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(x, y, indexing="ij")
    psi = 2 * np.exp(-(X**2 + Y**2) / 0.1)
    omega = (psi - psi**3) / 0.35**2
    eta = -0.1 * np.exp(-x**2)
    window = {"config_hash": "h", "axes": "physical window", "x": [-2.0, 2.0, 41], "y": [-1.0, 1.0, 21]}
    line = {"config_hash": "h", "axes": "physical surface line", "x": [-2.0, 2.0, 41]}
    for name, arr, meta in (("psi", psi, window), ("omega", omega, window), ("eta", eta, line),
                            ("eta0", 1.1 * eta, line)):
        write_field(d / "fields" / f"{name}.bin", arr, 4.0, 0.35, meta)
    write_json(d / "diagnostics.json", {"diagnostics": good_diag()})
    write_json(d / "root.json", {"root": good_root()})
    return d


def test_diagnose_and_plot_bundle(bundle, capsys):
    table, ok = cmd_diagnose(bundle)
    assert ok and set(table) == {name for name, *_ in THRESHOLDS}
    figs = cmd_plot(bundle)
    assert [f.name for f in figs] == ["streamlines.svg", "surface.svg", "vorticity.svg"]
    for f in figs:
        text = f.read_text()
        assert text.startswith("<!-- config_hash h -->") and "<svg" in text and text.rstrip().endswith("</svg>")
    assert main(["diagnose", str(bundle)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_diagnose_strict_exit_code(bundle):
    write_json(bundle / "diagnostics.json", {"diagnostics": good_diag() | {"closed_streamlines": False}})
    assert main(["diagnose", str(bundle)]) == 0
    assert main(["diagnose", str(bundle), "--strict"]) == 2


def test_missing_bundle_is_an_input_error(tmp_path):
    assert main(["diagnose", str(tmp_path / "nothing")]) == 1
    assert main(["plot", "--out", str(tmp_path), "--delta", "0.3"]) == 1


def test_ground_state_command_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["ground-state", "--out", str(a)]) == 0
    assert main(["ground-state", "--out", str(b)]) == 0
    for name in ("ground_state.csv", "ground_state.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = read_json(a / "ground_state.json")
    assert summary["kernel_modes"] == [1]
    assert summary["center_value"] == pytest.approx(2.2062008647, abs=1e-9)
    assert "U(0) = 2.2062008" in capsys.readouterr().out


def test_malformed_config_exits_1_without_output(tmp_path):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "out"
    cfg.write_text("{not json")
    assert main(["ground-state", "--config", str(cfg), "--out", str(out)]) == 1
    cfg.write_text(json.dumps({"delta": 0.35, "mystery": 1}))
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 1
    cfg.write_text(json.dumps([1, 2]))
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_solve_outside_regime_exits_2_with_error_record(tmp_path):
    # at delta = 0.5 the surface grows past the amplitude ceiling before the root
    assert main(["solve", "--delta", "0.5", "--out", str(tmp_path)]) == 2
    err = read_json(tmp_path / "delta_0.5000" / "error.json")
    assert err["stage"] == "root" and err["log"]
    assert not (tmp_path / "delta_0.5000" / "diagnostics.json").exists()


def test_invalid_grid_exits_1_without_output(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"Nx": 64}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
    assert not (tmp_path / "out").exists()
