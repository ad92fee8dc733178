import numpy as np
import pytest

from cafpo.data import SyntheticSpec, generate_synthetic_panel, preprocess_characteristics
from cafpo.diffcore import Tensor
from cafpo.errors import DataError, ShapeError
from cafpo.factors import (
    ConditionalAutoencoder, ca_forward, ca_train, canonical_correlations, extract_factor_series, load_model,
    load_observable_factors, save_model, total_r2,
)


def _zero(model):
    model.load_state_dict({k: np.zeros_like(v) for k, v in model.state_dict().items()})


def test_zero_weights_propagate_biases():
    m = ConditionalAutoencoder(4, ["A", "B", "C"], n_factors=2, hidden_sizes=[3])
    _zero(m)
    m.beta_out.b.values = np.array([0.5, -1.0])
    m.factor_net.b.values = np.array([2.0, 3.0])
    out = ca_forward(m, np.random.default_rng(0).uniform(-1, 1, (3, 4)), [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(out.factors, [2.0, 3.0])
    np.testing.assert_array_equal(out.loadings, np.tile([0.5, -1.0], (3, 1)))
    np.testing.assert_allclose(out.reconstruction, 0.5 * 2.0 - 1.0 * 3.0)


def test_hand_set_single_factor_single_asset():
    m = ConditionalAutoencoder(1, ["A"], n_factors=1, hidden_sizes=[1])
    _zero(m)
    m.beta_out.b.values = np.array([2.0])
    m.factor_net.W.values = np.array([[3.0]])
    out = ca_forward(m, [[0.4]], [0.1])
    assert out.factors[0] == pytest.approx(0.3)
    assert out.reconstruction[0] == pytest.approx(0.6)
    assert out.residual[0] == pytest.approx(-0.5)


def test_forward_rejects_dimension_mismatch():
    m = ConditionalAutoencoder(2, ["A", "B"], n_factors=1)
    with pytest.raises(ShapeError):
        ca_forward(m, np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ShapeError):
        ca_forward(m, np.zeros((2, 3)), np.zeros(2))


def test_reconstruction_identity_is_exact():
    rng = np.random.default_rng(4)
    m = ConditionalAutoencoder(5, list("ABCDEF"), n_factors=3, seed=2)
    for _ in range(10):
        r = rng.normal(0, 0.05, 6)
        out = ca_forward(m, rng.uniform(-1, 1, (6, 5)), r)
        np.testing.assert_allclose(out.reconstruction + out.residual, r, rtol=0, atol=1e-15)


def test_loadings_are_permutation_equivariant():
    rng = np.random.default_rng(1)
    m = ConditionalAutoencoder(4, list("ABCDE"), n_factors=2, seed=3)
    z = rng.uniform(-1, 1, (5, 4))
    perm = rng.permutation(5)
    b1 = ca_forward(m, z, np.zeros(5)).loadings
    b2 = ca_forward(m, z[perm], np.zeros(5)).loadings
    np.testing.assert_allclose(b1[perm], b2, rtol=0, atol=1e-15)


@pytest.fixture(scope="module")
def noiseless():
    syn = generate_synthetic_panel(SyntheticSpec(n_assets=30, n_periods=120, n_factors=3, noise_scale=0.0, seed=7))
    z = preprocess_characteristics(syn.characteristics, syn.schedule)
    return syn, z


@pytest.fixture(scope="module")
def trained(noiseless):
    syn, z = noiseless
    R = syn.returns
    m = ConditionalAutoencoder(z.P, R.assets, n_factors=3, seed=0)
    m, log = ca_train(m, R, z, (R.dates[0], R.dates[-1]), epochs=500, lr=0.01)
    return m, log


def test_training_fits_noiseless_panel(noiseless, trained):
    syn, z = noiseless
    m, log = trained
    R = syn.returns
    _, _, recon = m.reconstruct(Tensor(z.values), Tensor(R.filled()))
    assert total_r2(R.filled(), recon.values) >= 0.95
    assert np.mean((R.filled() - recon.values) ** 2) <= 1e-3
    assert log.losses[-1] <= 0.01 * log.losses[0]
    assert log.running_min == sorted(log.running_min, reverse=True)


def test_extracted_factors_match_truth(noiseless, trained):
    syn, _ = noiseless
    fs = extract_factor_series(trained[0], syn.returns)
    assert fs.T == syn.returns.T and np.isfinite(fs.values).all()
    assert canonical_correlations(fs.values, syn.factors.values).min() >= 0.8


def test_zero_epochs_leave_model_unchanged(noiseless):
    syn, z = noiseless
    m = ConditionalAutoencoder(z.P, syn.returns.assets, n_factors=3, seed=0)
    before = m.state_dict()
    _, log = ca_train(m, syn.returns, z, (syn.returns.dates[0], syn.returns.dates[-1]), epochs=0)
    assert log.losses == []
    for k, v in m.state_dict().items():
        assert v.tobytes() == before[k].tobytes()


def test_training_is_deterministic(noiseless):
    syn, z = noiseless
    R = syn.returns
    states = []
    for _ in range(2):
        m = ConditionalAutoencoder(z.P, R.assets, n_factors=2, seed=1)
        ca_train(m, R, z, (R.dates[0], R.dates[40]), epochs=20, seed=9, batch_size=8)
        states.append(m.state_dict())
    for k in states[0]:
        assert states[0][k].tobytes() == states[1][k].tobytes()


def test_training_rejects_empty_window(noiseless):
    syn, z = noiseless
    m = ConditionalAutoencoder(z.P, syn.returns.assets, n_factors=2)
    with pytest.raises(DataError):
        ca_train(m, syn.returns, z, (syn.returns.dates[5], syn.returns.dates[2]), epochs=1)


def test_extract_matches_forward_and_is_repeatable(noiseless):
    syn, z = noiseless
    m = ConditionalAutoencoder(z.P, syn.returns.assets, n_factors=2, seed=5)
    d = syn.returns.dates[3]
    one = extract_factor_series(m, syn.returns, window=(d, d))
    assert one.T == 1
    np.testing.assert_array_equal(one.values[0], ca_forward(m, z.values[3], syn.returns.filled()[3]).factors)
    a = extract_factor_series(m, syn.returns)
    b = extract_factor_series(m, syn.returns)
    assert a.values.tobytes() == b.values.tobytes()


def test_missing_returns_still_give_complete_factors():
    syn = generate_synthetic_panel(SyntheticSpec(n_assets=10, n_periods=30, churn_rate=0.2, seed=2))
    m = ConditionalAutoencoder(syn.spec.n_characteristics, syn.returns.assets, n_factors=2)
    fs = extract_factor_series(m, syn.returns)
    assert np.isfinite(fs.values).all() and fs.T == 30


def test_factors_inherit_characteristic_order():
    K = 3
    syn = generate_synthetic_panel(SyntheticSpec(n_assets=40, n_periods=120, n_factors=K, n_characteristics=K,
                                                 loading_map=np.eye(K).tolist(), noise_scale=0.002, seed=3))
    z = preprocess_characteristics(syn.characteristics, syn.schedule)
    R = syn.returns
    m = ConditionalAutoencoder(K, R.assets, n_factors=K, hidden_sizes=[K], seed=0)
    # pass-through covariates network: z + 1 > 0 keeps LeakyReLU linear, then subtract 1
    m.hidden[0].W.values = np.eye(K)
    m.hidden[0].b.values = np.ones(K)
    m.beta_out.W.values = np.eye(K)
    m.beta_out.b.values = -np.ones(K)
    ca_train(m, R, z, (R.dates[0], R.dates[-1]), epochs=400, lr=0.01, train_covariates=False)
    f = extract_factor_series(m, R).values
    managed = np.einsum("tnk,tn->tk", z.values, R.filled()) / np.einsum("tnk,tnk->tk", z.values, z.values)
    corr = np.corrcoef(f.T, managed.T)[:K, K:]
    assert list(np.argmax(np.abs(corr), axis=1)) == list(range(K))


def test_canonical_correlations_against_eigen_oracle():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    Y = X @ rng.normal(size=(3, 2)) + rng.normal(size=(200, 2))
    Xc, Yc = X - X.mean(0), Y - Y.mean(0)
    Sxx, Syy, Sxy = Xc.T @ Xc, Yc.T @ Yc, Xc.T @ Yc
    M = np.linalg.solve(Syy, Sxy.T) @ np.linalg.solve(Sxx, Sxy)
    oracle = np.sqrt(np.sort(np.linalg.eigvals(M).real)[::-1])
    np.testing.assert_allclose(canonical_correlations(X, Y), oracle, rtol=1e-10)


def _factor_file(path, months, names=("MKT", "SMB", "HML", "RMW", "CMA"), skip=None, dup=False):
    lines = ["date,factor,value"]
    for m in months:
        if m == skip:
            continue
        for k, n in enumerate(names):
            lines.append(f"{m},{n},{0.01 * k}")
    if dup:
        lines.append(lines[1])
    path.write_text("\n".join(lines) + "\n")
    return path


MONTHS = [f"2020-{m:02d}" for m in range(1, 13)]


def test_load_observable_factors(tmp_path):
    fs = load_observable_factors(_factor_file(tmp_path / "f.csv", MONTHS))
    assert fs.values.shape == (12, 5)
    assert fs.names == ("MKT", "SMB", "HML", "RMW", "CMA")
    sub = load_observable_factors(tmp_path / "f.csv", ("2020-03", "2020-05"))
    assert sub.dates == ("2020-03", "2020-04", "2020-05")
    with pytest.raises(DataError):
        load_observable_factors(tmp_path / "f.csv", ("2019-12", "2020-05"))


def test_observable_factor_gap_and_duplicate_rejected(tmp_path):
    with pytest.raises(DataError, match="2020-06"):
        load_observable_factors(_factor_file(tmp_path / "g.csv", MONTHS, skip="2020-06"))
    with pytest.raises(DataError, match="duplicate"):
        load_observable_factors(_factor_file(tmp_path / "d.csv", MONTHS, dup=True))


def test_model_round_trip(tmp_path):
    m = ConditionalAutoencoder(3, ["A", "B"], n_factors=2, seed=4)
    save_model(m, tmp_path)
    m2 = load_model(tmp_path)
    assert m2.universe == ("A", "B") and m2.K == 2
    for k, v in m.state_dict().items():
        assert m2.state_dict()[k].tobytes() == v.tobytes()
