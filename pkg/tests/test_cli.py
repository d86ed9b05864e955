"""End-to-end command-line runs (in process, via cli.main)."""
import json
import os

import numpy as np
import pytest

import stayerfx
from stayerfx import AdditiveLinearDgp, BootstrapRun, EffectCurve
from stayerfx.cli import main
from stayerfx.dgp import RegressorLaw, dgp_to_dict

DGP_JSON = json.dumps(dgp_to_dict(AdditiveLinearDgp(
    theta=1.0, rho=0.5, het_sd=0.3, noise_sd=0.3,
    regressors=RegressorLaw(stayer_prob=0.15),
)))


@pytest.fixture(scope="module")
def panel_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("panel")
    rc = main(["simulate", "--dgp", DGP_JSON, "--n", "400", "--seed", "1",
               "--out", str(out)])
    assert rc == 0
    return out


def _read_manifest(out):
    with open(os.path.join(out, "manifest.json")) as fh:
        return json.load(fh)


def _read_curve(out, stem):
    with open(os.path.join(out, stem + ".json")) as fh:
        return EffectCurve.from_json(fh.read())


# ---------------------------------------------------------------------------
# simulate


def test_simulate_outputs(panel_dir, capsys):
    for name in ("panel.csv", "dgp.json", "manifest.json"):
        assert (panel_dir / name).exists()
    manifest = _read_manifest(panel_dir)
    assert manifest["command"] == "simulate"
    assert manifest["outputs"] == ["dgp.json", "panel.csv"]
    assert manifest["version"] == stayerfx.__version__
    assert len(manifest["config_digest"]) == 16
    header = (panel_dir / "panel.csv").read_text().splitlines()[0]
    assert header == "id,t,y,x"
    with open(panel_dir / "dgp.json") as fh:
        assert json.load(fh)["family"] == "additive-linear"


def test_simulate_rerun_is_byte_identical(panel_dir, tmp_path, capsys):
    rc = main(["simulate", "--dgp", DGP_JSON, "--n", "400", "--seed", "1",
               "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "panel.csv").read_bytes() == (panel_dir / "panel.csv").read_bytes()
    assert (tmp_path / "dgp.json").read_bytes() == (panel_dir / "dgp.json").read_bytes()
    # and twice into the same directory: the manifest itself is stable
    before = (tmp_path / "manifest.json").read_bytes()
    main(["simulate", "--dgp", DGP_JSON, "--n", "400", "--seed", "1",
          "--out", str(tmp_path)])
    assert (tmp_path / "manifest.json").read_bytes() == before


def test_simulate_requires_dgp(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_simulate_rejects_unknown_family(tmp_path, capsys):
    rc = main(["simulate", "--dgp", '{"family": "mystery"}', "--out", str(tmp_path)])
    assert rc == 2


def test_config_file_defaults_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dgp": json.loads(DGP_JSON), "n": 123, "seed": 7}))
    a = tmp_path / "a"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert len((a / "panel.csv").read_text().splitlines()) == 1 + 2 * 123
    b = tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--n", "50", "--out", str(b)]) == 0
    assert len((b / "panel.csv").read_text().splitlines()) == 1 + 2 * 50


# ---------------------------------------------------------------------------
# summarize


def test_summarize(panel_dir, tmp_path, capsys):
    rc = main(["summarize", "--data", str(panel_dir / "panel.csv"),
               "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "summary.json") as fh:
        report = json.load(fh)
    assert report["n"] == 400
    assert (tmp_path / "ingest_log.json").exists()
    assert json.loads(capsys.readouterr().out)["n"] == 400


def test_summarize_homogeneity_flag(tmp_path, capsys):
    # the stayer-bin check needs a decent stayer count, so draw a larger panel
    big = tmp_path / "big"
    assert main(["simulate", "--dgp", DGP_JSON, "--n", "1500", "--seed", "4",
                 "--out", str(big)]) == 0
    rc = main(["summarize", "--data", str(big / "panel.csv"),
               "--homogeneity", "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "homogeneity.json") as fh:
        hom = json.load(fh)
    assert 0.0 <= hom["pass_fraction"] <= 1.0
    assert "homogeneity.json" in _read_manifest(tmp_path)["outputs"]


# ---------------------------------------------------------------------------
# point-estimate commands


def test_fit_mean(panel_dir, tmp_path, capsys):
    rc = main(["fit-mean", "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "11", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "mean_effect")
    assert curve.kind == "mean-homogeneous" and curve.n_points == 11
    assert abs(np.nanmedian(curve.estimate) - 1.0) < 0.5
    assert (tmp_path / "basis.json").exists()
    assert (tmp_path / "mean_effect.csv").exists()
    assert "fit-mean" in capsys.readouterr().out


def test_fit_quantile(panel_dir, tmp_path, capsys):
    rc = main(["fit-quantile", "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "5", "--taus", "0.25,0.75", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "quantile_effect")
    assert curve.n_points == 10
    assert sorted(set(curve.tau)) == [0.25, 0.75]


def test_fit_quantile_tau_range_syntax(panel_dir, tmp_path, capsys):
    rc = main(["fit-quantile", "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "3", "--taus", "0.2:0.8:4", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "quantile_effect")
    np.testing.assert_allclose(sorted(set(curve.tau)), [0.2, 0.4, 0.6, 0.8])


def test_effects_kind_dispatch(panel_dir, tmp_path, capsys):
    rc = main(["effects", "--kind", "quantile-te",
               "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "7", "--taus", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "quantile_te_effect")
    assert curve.kind == "quantile-time-adjusted"
    assert _read_manifest(tmp_path)["command"] == "effects"


def test_time_effects(panel_dir, tmp_path, capsys):
    rc = main(["time-effects", "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "9", "--out", str(tmp_path)])
    assert rc == 0
    scale = _read_curve(tmp_path, "scale")
    shift = _read_curve(tmp_path, "shift")
    assert scale.n_points == shift.n_points == 9
    # the generator has homogeneous noise across periods: scale should sit near 1
    assert abs(np.nanmedian(scale.estimate) - 1.0) < 0.4
    assert {"scale.csv", "shift.csv"} <= set(_read_manifest(tmp_path)["outputs"])


def test_diff_effect_pair_grid(panel_dir, tmp_path, capsys):
    rc = main(["diff-effect", "--data", str(panel_dir / "panel.csv"),
               "--taus", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "transformed_effect")
    assert curve.n_points == 21 * 21  # pair grid at the command's default resolution
    assert _read_manifest(tmp_path)["config"]["grid_nx"] == 21
    assert "difference" in capsys.readouterr().out


def test_cross_section_quantile(panel_dir, tmp_path, capsys):
    rc = main(["cross-section", "--kind", "quantile",
               "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "5", "--taus", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "cross_section_quantile")
    assert curve.kind == "cross-section-quantile"
    assert curve.n_points == 5


# ---------------------------------------------------------------------------
# bands and mc


def test_bands(panel_dir, tmp_path, capsys):
    rc = main(["bands", "--kind", "mean", "--B", "25", "--seed", "0",
               "--data", str(panel_dir / "panel.csv"),
               "--grid-nx", "7", "--out", str(tmp_path)])
    assert rc == 0
    curve = _read_curve(tmp_path, "mean_band")
    assert curve.lower is not None and curve.upper is not None
    assert curve.meta["band_t_crit"] > 0
    run = BootstrapRun.load(tmp_path / "bootstrap_run.npz")
    assert run.B == 25 and run.draws.shape == (25, 7)
    assert "t-crit" in capsys.readouterr().out
    assert "bootstrap_run.npz" in _read_manifest(tmp_path)["outputs"]


def test_mc_smoke(tmp_path, capsys):
    rc = main(["mc", "--dgp", DGP_JSON, "--kind", "mean", "--n", "200",
               "--R", "2", "--B", "20", "--grid-nx", "5",
               "--basis", "polynomial", "--degree", "1",
               "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "coverage.json") as fh:
        report = json.load(fh)
    assert report["R"] == 2
    assert 0.0 <= report["coverage"] <= 1.0
    assert "coverage" in capsys.readouterr().out


def test_mc_rejects_mismatched_kind(tmp_path, capsys):
    rc = main(["mc", "--dgp", DGP_JSON, "--kind", "mean-te", "--R", "2",
               "--B", "20", "--out", str(tmp_path)])
    assert rc == 2


# ---------------------------------------------------------------------------
# failure modes map to exit codes


def test_missing_data_flag_is_config_error(tmp_path, capsys):
    assert main(["fit-mean", "--out", str(tmp_path)]) == 2


def test_nonexistent_data_file_is_data_error(tmp_path, capsys):
    rc = main(["fit-mean", "--data", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path)])
    assert rc == 3
    assert "data error" in capsys.readouterr().err


def test_single_unit_panel_is_data_error(tmp_path, capsys):
    path = tmp_path / "tiny.csv"
    path.write_text("id,t,y,x\nu1,1,0.1,0.2\nu1,2,0.3,0.4\n")
    assert main(["summarize", "--data", str(path), "--out", str(tmp_path)]) == 3


def test_rank_deficient_design_is_numerical_error(tmp_path, capsys):
    small = tmp_path / "small"
    assert main(["simulate", "--dgp", DGP_JSON, "--n", "10", "--seed", "2",
                 "--out", str(small)]) == 0
    rc = main(["fit-quantile", "--data", str(small / "panel.csv"),
               "--basis", "polynomial", "--raw-polynomial",
               "--structure", "tensor", "--degree", "3",
               "--taus", "0.5", "--grid-nx", "3", "--out", str(tmp_path)])
    assert rc == 4
    assert "numerical failure" in capsys.readouterr().err


def test_unknown_command_raises_systemexit(capsys):
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_column_map(panel_dir, tmp_path, capsys):
    renamed = tmp_path / "renamed.csv"
    lines = (panel_dir / "panel.csv").read_text().splitlines()
    lines[0] = "unit,period,outcome,reg"
    renamed.write_text("\n".join(lines) + "\n")
    rc = main(["summarize", "--data", str(renamed),
               "--column-map", '{"id": "unit", "t": "period", "y": "outcome", "x": "reg"}',
               "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "summary.json") as fh:
        assert json.load(fh)["n"] == 400
