import numpy as np
import pytest
from numpy.testing import assert_allclose

from kolepi import kernels as ker
from kolepi import kol
from kolepi.controls import ControlSignal
from kolepi.epimodels import TimeGrid
from kolepi.errors import ConditioningError, ConfigError, DataError, FormatError

GRID = TimeGrid(t_star=3.0, dt=1.0)  # n = 4


def make_ts(mode, inputs, targets, d=2, x0=(0.9, 0.1)):
    return kol.TrainingSet(mode=mode, grid=GRID, inputs=np.asarray(inputs, float),
                           targets=np.asarray(targets, float), x0=np.asarray(x0, float), d=d)


def test_single_pair_closed_form():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    target = np.array([[0.5, 0.4, 0.3, 0.2, 0.5, 0.6, 0.7, 0.8]])
    ts = make_ts(kol.MODE_MAP, u, target)
    lam = 1e-10
    model = kol.fit(ts, ker.RBF(sigma=1.0), ridge=lam)
    pred = kol.predict_samples(model, u[0])
    s11 = 1.0  # RBF(a, a)
    expected = (s11 / (s11 + lam)) ** 2 * target.reshape(2, 4)
    assert_allclose(pred.values, expected, rtol=1e-12)


def test_interpolation_at_zero_ridge():
    rng = np.random.default_rng(0)
    u = rng.uniform(0.0, 1.0, (6, GRID.n))
    targets = rng.uniform(0.1, 0.9, (6, 2 * GRID.n))
    ts = make_ts(kol.MODE_MAP, u, targets)
    model = kol.fit(ts, ker.RBF(sigma=1.0), ridge=0.0, positivity=False)
    for i in range(6):
        pred = kol.predict_samples(model, u[i])
        assert_allclose(pred.values.reshape(-1), targets[i], atol=1e-8)


def test_near_interpolation_default_ridge():
    rng = np.random.default_rng(1)
    u = rng.uniform(0.0, 1.0, (20, GRID.n))
    targets = rng.uniform(0.1, 0.9, (20, 2 * GRID.n))
    ts = make_ts(kol.MODE_MAP, u, targets)
    model = kol.fit(ts, ker.Ntk(depth=1, activation="relu"))
    preds = np.stack([kol.predict_samples(model, row).values.reshape(-1) for row in u])
    rel = np.abs(preds - targets) / targets
    assert rel.max() <= 1e-4


def test_positivity_square():
    rng = np.random.default_rng(2)
    u = rng.uniform(0.0, 1.0, (10, GRID.n))
    targets = rng.uniform(0.0, 1.0, (10, 2 * GRID.n))
    ts = make_ts(kol.MODE_MAP, u, targets)
    model = kol.fit(ts, ker.RBF(sigma=0.6))
    assert model.positivity
    for q in rng.uniform(-0.5, 1.5, (50, GRID.n)):
        assert kol.predict_samples(model, q).values.min() >= 0.0


def test_positivity_rejections():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    ts = make_ts(kol.MODE_PARTIAL, u, -np.ones((1, 2 * GRID.n)))
    with pytest.raises(ConfigError):
        kol.fit(ts, ker.Linear(), positivity=True)
    # mode-m targets are compartment fractions: out-of-range sets are rejected
    with pytest.raises(DataError):
        make_ts(kol.MODE_MAP, u, -np.ones((1, 2 * GRID.n)))
    with pytest.raises(DataError):
        make_ts(kol.MODE_MAP, u, 1.5 * np.ones((1, 2 * GRID.n)))


def test_partial_mode_zero_derivative_is_constant():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    ts = make_ts(kol.MODE_PARTIAL, u, np.zeros((1, 2 * GRID.n)))
    model = kol.fit(ts, ker.RBF(sigma=1.0))
    pred = kol.predict_samples(model, u[0])
    assert_allclose(pred.values, np.array([[0.9], [0.1]]) * np.ones((2, GRID.n)), atol=1e-12)
    assert pred.raw_derivative is not None


def test_partial_mode_constant_derivative_linear_ramp():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    c = np.array([0.02, -0.01])
    targets = np.repeat(c, GRID.n)[None, :]
    ts = make_ts(kol.MODE_PARTIAL, u, targets)
    model = kol.fit(ts, ker.RBF(sigma=1.0), ridge=0.0)
    pred = kol.predict_samples(model, u[0])
    k = np.arange(GRID.n)
    assert_allclose(pred.values[0], 0.9 + c[0] * k * GRID.dt, atol=1e-10)
    assert_allclose(pred.values[1], 0.1 + c[1] * k * GRID.dt, atol=1e-10)


def test_linear_kernel_homogeneity():
    u = np.array([[0.3, 0.1, 0.5, 0.2]])
    v = np.array([[0.5, 0.4, 0.3, 0.2, 0.1, 0.2, 0.3, 0.4]])
    ts = make_ts(kol.MODE_MAP, u, v)
    model = kol.fit(ts, ker.Linear(), positivity=False)
    base = kol.predict_samples(model, u[0]).values
    scaled = kol.predict_samples(model, 3.0 * u[0]).values
    assert_allclose(scaled, 3.0 * base, rtol=1e-8)


def test_predict_at():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    targets = np.array([[0.5, 0.4, 0.3, 0.2, 0.5, 0.6, 0.7, 0.8]])
    ts = make_ts(kol.MODE_MAP, u, targets)
    model = kol.fit(ts, ker.RBF(sigma=1.0), positivity=False)
    pred = kol.predict_samples(model, u[0])
    for k, t in enumerate(GRID.points):
        assert np.array_equal(kol.predict_at(model, u[0], float(t)), pred.values[:, k])
    mid = kol.predict_at(model, u[0], 0.5)
    assert_allclose(mid, (pred.values[:, 0] + pred.values[:, 1]) / 2, rtol=1e-15)
    with pytest.raises(ConfigError):
        kol.predict_at(model, u[0], 3.5)


def test_partial_predict_at_zero_is_x0():
    u = np.array([[0.1, 0.2, 0.3, 0.4]])
    rng = np.random.default_rng(3)
    ts = make_ts(kol.MODE_PARTIAL, u, rng.standard_normal((1, 2 * GRID.n)))
    model = kol.fit(ts, ker.RBF(sigma=1.0))
    assert np.array_equal(kol.predict_at(model, u[0], 0.0), model.x0)


def test_batch_predict():
    rng = np.random.default_rng(4)
    u = rng.uniform(0.0, 1.0, (5, GRID.n))
    ts = make_ts(kol.MODE_MAP, u, rng.uniform(0.1, 0.9, (5, 2 * GRID.n)))
    model = kol.fit(ts, ker.RBF(sigma=0.8))
    assert kol.batch_predict(model, []) == []
    queries = [rng.uniform(0.0, 1.0, GRID.n) for _ in range(100)]
    batch = kol.batch_predict(model, queries)
    single = [kol.predict_samples(model, q) for q in queries]
    for b, s in zip(batch, single):
        assert np.array_equal(b.values, s.values)
    with pytest.raises(DataError, match="batch element 1"):
        kol.batch_predict(model, [queries[0], np.zeros(GRID.n + 2)])


def test_grid_mismatch():
    rng = np.random.default_rng(5)
    u = rng.uniform(0.0, 1.0, (3, GRID.n))
    ts = make_ts(kol.MODE_MAP, u, rng.uniform(0.1, 0.9, (3, 2 * GRID.n)))
    model = kol.fit(ts, ker.RBF(sigma=0.8))
    other = ControlSignal(grid=TimeGrid(t_star=4.0, dt=1.0), samples=np.zeros(5))
    with pytest.raises(DataError):
        kol.predict_samples(model, other)


def test_conditioning_error_reports_pivot():
    u = np.tile(np.array([[0.1, 0.2, 0.3, 0.4]]), (3, 1))  # duplicate rows
    rng = np.random.default_rng(6)
    ts = make_ts(kol.MODE_MAP, u, rng.uniform(0.1, 0.9, (3, 2 * GRID.n)))
    with pytest.raises(ConditioningError, match="eigenvalue"):
        kol.fit(ts, ker.RBF(sigma=1.0), ridge=0.0)


def test_dense_solve_oracle_small_instances():
    rng = np.random.default_rng(7)
    for n_train, n in [(2, 3), (4, 4), (5, 2)]:
        grid = TimeGrid(t_star=float(n - 1), dt=1.0)
        u = rng.uniform(0.0, 1.0, (n_train, n))
        targets = rng.uniform(0.1, 0.9, (n_train, 2 * n))
        ts = kol.TrainingSet(mode=kol.MODE_MAP, grid=grid, inputs=u, targets=targets,
                             x0=np.array([0.9, 0.1]), d=2)
        lam = 1e-10
        model = kol.fit(ts, ker.RBF(sigma=0.7), ridge=lam, positivity=False)
        gram = ker.gram(ker.RBF(sigma=0.7), u).matrix
        dense = np.linalg.solve(gram + lam * np.eye(n_train), targets)
        assert np.max(np.abs(model.coeff - dense)) <= 1e-10


def test_coeff_reproduces_targets():
    rng = np.random.default_rng(8)
    u = rng.uniform(0.0, 1.0, (30, GRID.n))
    targets = rng.uniform(0.1, 0.9, (30, 2 * GRID.n))
    ts = make_ts(kol.MODE_MAP, u, targets)
    model = kol.fit(ts, ker.Ntk(depth=1, activation="erf"))
    gram = ker.gram(model.kernel, u, ridge=model.ridge).regularized
    resid = gram @ model.coeff - np.sqrt(targets)
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(np.sqrt(targets)))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    u = rng.uniform(0.0, 1.0, (8, GRID.n))
    ts = make_ts(kol.MODE_PARTIAL, u, rng.standard_normal((8, 2 * GRID.n)))
    model = kol.fit(ts, ker.Ntk(depth=2, activation="erf", w_var=0.7, b_var=1.3))
    path = tmp_path / "model.kol"
    kol.save(model, path)
    loaded = kol.load(path)
    assert loaded.kernel == model.kernel
    assert loaded.mode == model.mode and loaded.ridge == model.ridge
    q = rng.uniform(0.0, 1.0, GRID.n)
    assert np.array_equal(kol.predict_samples(model, q).values,
                          kol.predict_samples(loaded, q).values)


def test_load_truncated_file(tmp_path):
    rng = np.random.default_rng(10)
    u = rng.uniform(0.0, 1.0, (4, GRID.n))
    ts = make_ts(kol.MODE_MAP, u, rng.uniform(0.1, 0.9, (4, 2 * GRID.n)))
    model = kol.fit(ts, ker.RBF(sigma=1.0))
    path = tmp_path / "model.kol"
    kol.save(model, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(FormatError):
        kol.load(path)
    path.write_bytes(b"not json\n" + blob)
    with pytest.raises(FormatError):
        kol.load(path)
