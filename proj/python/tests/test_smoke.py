import json
import math

import numpy as np
import pytest

try:
    import fpovi
except ImportError:  # running against the in-tree CMake build
    import _fpovi as fpovi


def test_network_spec_counts():
    spec = fpovi.NetworkSpec([1, 50, 1])
    assert spec.param_count() == 151
    assert spec.input_dim() == 1
    assert spec.output_dim() == 1
    with pytest.raises(Exception):
        fpovi.NetworkSpec([1])


def test_forward_zero_params_is_zero():
    spec = fpovi.NetworkSpec([2, 3, 1])
    out = fpovi.forward(np.zeros(spec.param_count()), spec, np.random.randn(4, 2))
    assert np.allclose(out, 0.0)


def test_init_params_is_seed_deterministic():
    spec = fpovi.NetworkSpec([2, 8, 1])
    a = fpovi.init_params(spec, 1.4, 0)
    b = fpovi.init_params(spec, 1.4, 0)
    c = fpovi.init_params(spec, 1.4, 1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_synthetic_dataset_layout():
    ds = fpovi.gen_synthetic_1d(0)
    assert ds.size() == 20
    x = ds.X[:, 0]
    assert ((x > 0) & (x < 0.6)).sum() == 12
    assert ((x > 0.8) & (x < 1.0)).sum() == 8

    clean = fpovi.gen_synthetic_1d(0, noiseless=True)
    xs = clean.X[:, 0]
    assert np.allclose(clean.Y[:, 0], xs + np.sin(4 * xs) + np.sin(13 * xs))


def test_median_bandwidth_and_gram():
    pts = np.array([[0.0], [2.0]])
    assert fpovi.median_bandwidth(pts) == pytest.approx(4.0 / math.log(3.0))
    K = fpovi.rbf_gram_matrix(pts, 1.0)
    assert K[0, 0] == pytest.approx(1.0)
    assert K[0, 1] == pytest.approx(math.exp(-4.0))


def test_gp_posterior_interpolates_noiselessly():
    X = np.array([[-1.0], [0.0], [1.0]])
    y = np.array([0.3, -0.2, 0.9])
    post = fpovi.gp_posterior(X, y, X, 0.0, 1.0)
    assert np.allclose(post.mean, y, atol=1e-7)
    assert np.allclose(post.cov, 0.0, atol=1e-6)


def test_ensemble_predictions_match_forward():
    spec = fpovi.NetworkSpec([1, 6, 1])
    ens = fpovi.ParticleEnsemble(spec, 3, 1.4, 0)
    X = np.linspace(-1, 1, 5).reshape(-1, 1)
    f = fpovi.forward(ens.params[1], spec, X)
    assert np.allclose(ens.predict(1, X), f)


def test_train_fpovi_fits_the_toy_data():
    ds = fpovi.gen_synthetic_1d(0)
    preds = fpovi.train_fpovi(
        data=ds, hidden=[20], n_particles=5, epochs=800, lr=0.01, sigma_w2=1.4,
        sigma_y2=0.0009, flow="svgd", seed=0, X_eval=ds.X,
    )
    assert preds.shape == (5, 20)
    err = fpovi.rmse(preds, ds.Y[:, 0])
    assert err < 0.6  # data spread is ~1; an untrained net sits near 0.95
    nll = fpovi.mixture_nll(preds, np.full(5, 0.0009), ds.Y[:, 0])
    assert np.isfinite(nll)


def test_run_config_toy1d(tmp_path):
    cfg = {
        "experiment": "toy1d",
        "method": "fsvgd",
        "particles": 4,
        "hidden": [8],
        "epochs": 10,
        "grid_points": 21,
        "out": str(tmp_path / "run"),
    }
    code, summary_path = fpovi.run_config(json.dumps(cfg))
    assert code == 0
    summary = json.loads(open(summary_path).read())
    assert summary["experiment"] == "toy1d"
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "checkpoint.bin").exists()


def test_run_config_rejects_unknown_keys():
    with pytest.raises(Exception, match="frobnicate"):
        fpovi.run_config(json.dumps({"experiment": "toy1d", "frobnicate": 1}))


def test_predict_csv_round_trip(tmp_path):
    cfg = {
        "experiment": "toy1d",
        "method": "ensemble",
        "particles": 3,
        "hidden": [8],
        "epochs": 5,
        "out": str(tmp_path / "run"),
    }
    code, _ = fpovi.run_config(json.dumps(cfg))
    assert code == 0
    inp = tmp_path / "input.csv"
    inp.write_text("x\n0.1\n0.5\n0.9\n")
    out = tmp_path / "pred.csv"
    fpovi.predict_csv(str(tmp_path / "run" / "checkpoint.bin"), str(inp), str(out))
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "mean,epistemic_std,pred_lo,pred_hi"
    assert len(lines) == 4
    row = [float(v) for v in lines[1].split(",")]
    assert row[2] <= row[0] <= row[3]
