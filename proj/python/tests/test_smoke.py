import json
import os
import pathlib

import jsonschema
import numpy as np
import pytest

import lmmsubset

SCHEMA_DIR = pathlib.Path(
    os.environ.get("LMMSUBSET_SCHEMA_DIR", pathlib.Path(__file__).resolve().parents[2] / "schemas")
)


def schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


@pytest.fixture(scope="module")
def fitted():
    data, beta_star, active = lmmsubset.simulate_dataset(n=40, p=5, m=3, p_star=2, snr=2.0, seed=3)
    draws = lmmsubset.fit(data, n_save=1500, n_burn=500, seed=1)
    return data, draws, beta_star, active


def test_version():
    assert lmmsubset.__version__ == "0.3.0"


def test_weight_block_is_dense_inverse():
    for m in (1, 2, 5):
        cov = 0.8 * np.eye(m) + 1.3
        np.testing.assert_allclose(lmmsubset.weight_block(0.8, 1.3, m), np.linalg.inv(cov), rtol=1e-10)


def test_fit_shapes(fitted):
    data, draws, _, _ = fitted
    assert draws.beta.shape == (1500, 6)
    assert draws.u.shape == (1500, data.subjects)
    assert draws.y_tilde.shape == (1500, data.X.shape[0])
    assert np.all(draws.sigma2_eps > 0) and np.all(draws.sigma2_u > 0)


def test_coefficients_match_weighted_least_squares(fitted):
    data, draws, _, _ = fitted
    subset = [0, 1, 2]
    out = lmmsubset.optimal_coefficients(draws, data, subset)
    delta = out["delta_hat"]
    assert np.all(delta[3:] == 0)
    assert np.all(out["lower"][subset] <= delta[subset])
    assert np.all(delta[subset] <= out["upper"][subset])

    # Dense oracle: average the per-draw weight matrices.
    sizes = data.group_sizes
    n_rows = data.X.shape[0]
    omega = np.zeros((n_rows, n_rows))
    y_omega = np.zeros(n_rows)
    T = draws.draws
    for t in range(T):
        w = np.zeros((n_rows, n_rows))
        off = 0
        for m in sizes:
            w[off:off + m, off:off + m] = lmmsubset.weight_block(draws.sigma2_eps[t], draws.sigma2_u[t], m)
            off += m
        omega += w / T
        y_omega += w @ draws.y_tilde[t] / T
    Xs = data.X[:, subset]
    ref = np.linalg.solve(Xs.T @ omega @ Xs, Xs.T @ y_omega)
    np.testing.assert_allclose(delta[subset], ref, rtol=1e-8)


def test_search_and_select(fitted):
    data, draws, _, active = fitted
    cands = lmmsubset.search(draws, data, s_k=3)
    subsets = [c["subset"] for level in cands["sizes"] for c in level["subsets"]]
    assert subsets and all(s[0] == 0 for s in subsets)
    fam = lmmsubset.select(data, draws, subsets, K=3, eta=1.0, epsilon=0.1, seed=2, n_save=600, n_burn=200)
    jsonschema.validate(fam, schema("family"))
    assert len(fam["s_small"]) <= len(fam["s_min"])
    assert any(m["subset"] == fam["s_min"] for m in fam["members"])
    for j in active:
        assert j in fam["s_min"]


def test_cli_round_trip(tmp_path, fitted):
    data, _, _, _ = fitted
    (tmp_path / "data.csv").write_text(data.to_csv())
    (tmp_path / "schema.json").write_text(json.dumps(data.schema()))
    jsonschema.validate(data.schema(), schema("schema"))
    rc, _, err = lmmsubset.run_cli(["fit", "--data", str(tmp_path / "data.csv"), "--schema",
                                    str(tmp_path / "schema.json"), "--draws", "800", "--burn", "200",
                                    "--out", str(tmp_path / "fit")])
    assert rc == 0, err
    jsonschema.validate(json.loads((tmp_path / "fit" / "manifest.json").read_text()), schema("manifest"))
    rc, _, err = lmmsubset.run_cli(["search", "--draws", str(tmp_path / "fit"), "--sk", "2",
                                    "--out", str(tmp_path / "c.json")])
    assert rc == 0, err
    jsonschema.validate(json.loads((tmp_path / "c.json").read_text()), schema("candidates"))
    jsonschema.validate(json.loads((tmp_path / "c.json.manifest.json").read_text()), schema("run_manifest"))
    rc, out, _ = lmmsubset.run_cli(["coefficients", "--draws", str(tmp_path / "fit"), "--subset", "0,1"])
    assert rc == 0
    jsonschema.validate(json.loads(out), schema("coefficients"))


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        lmmsubset.Dataset(np.zeros(3), np.ones((2, 1)), [3])
    rc, _, _ = lmmsubset.run_cli(["select", "--bogus"])
    assert rc == 1
