import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sou_privacy.attack import AttackConfig, PGDProtector, fgsm, pgd, project_linf, protect_dataset
from sou_privacy.features import FeatureTensor
from sou_privacy.nn import CNNClassifier, Dense, Flatten, ModelGraph, TrainConfig, gender_cnn, train

R = np.random.default_rng


def linear_model(shape=(4, 5), seed=0):
    m = ModelGraph([Flatten(), Dense(shape[0] * shape[1], 2, R(seed), bias=False)], (1, *shape))
    return m


def small_cnn(seed=0):
    return gender_cnn((1, 8, 8), channels=(4, 8), hidden=8, seed=seed)


def test_default_attack_config_values():
    cfg = AttackConfig()
    assert (cfg.epsilon, cfg.alpha, cfg.iterations, cfg.method, cfg.random_start) == (0.1, 0.0005, 20, "pgd", False)


@pytest.mark.parametrize("kwargs", [{"epsilon": -1}, {"alpha": -0.1}, {"iterations": 0}, {"method": "cw"}])
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        AttackConfig(**kwargs)


# ---------------------------------------------------------------- projection


def test_projection_clamps():
    assert project_linf(np.array([0.25]), np.array([0.0]), 0.1)[0] == pytest.approx(0.1)
    inside = np.array([0.03, -0.07])
    np.testing.assert_array_equal(project_linf(inside, np.zeros(2), 0.1), inside)
    with pytest.raises(ValueError):
        project_linf(np.zeros(2), np.zeros(3), 0.1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2))
def test_projection_is_idempotent(seed, eps):
    rng = R(seed)
    z, x = rng.normal(scale=2, size=10), rng.normal(size=10)
    once = project_linf(z, x, eps)
    np.testing.assert_array_equal(project_linf(once, x, eps), once)
    assert np.abs(once - x).max() <= eps + 1e-12


# ---------------------------------------------------------------- FGSM


def test_fgsm_zero_eps_is_identity():
    x = R(0).standard_normal((8, 8))
    res = fgsm(small_cnn(), x, 1, 0.0)
    np.testing.assert_array_equal(res.x_adv.values, x)
    assert len(res.loss_trace) == 1


def test_fgsm_on_linear_model_follows_closed_form():
    m = linear_model()
    w = m.layers[1].params["weight"].reshape(2, 4, 5)
    x = R(1).standard_normal((4, 5))
    for y in (0, 1):
        res = fgsm(m, x, y, 0.05)
        np.testing.assert_array_equal(res.x_adv.values, x + 0.05 * np.sign(w[1 - y] - w[y]))
        assert res.linf_delta == pytest.approx(0.05)


def test_fgsm_step_is_eps_where_gradient_is_nonzero():
    m = small_cnn(1)
    x = R(2).standard_normal((8, 8))
    _, g = m.input_gradient(x[None, None], np.array([0]))
    res = fgsm(m, x, 0, 0.2)
    d = np.abs(res.x_adv.values - x)
    nz = g[0, 0] != 0
    np.testing.assert_allclose(d[nz], 0.2, rtol=0, atol=1e-15)
    assert (d[~nz] == 0).all()


def test_fgsm_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        fgsm(small_cnn(), np.zeros((4, 4)), 0, 0.1)


# ---------------------------------------------------------------- PGD


def test_pgd_default_budget_bound():
    res = pgd(small_cnn(), R(3).standard_normal((8, 8)), 0)
    assert res.linf_delta <= min(0.1, 0.0005 * 20) + 1e-12
    assert len(res.loss_trace) == 20


def test_pgd_zero_eps_is_identity_bitwise():
    x = R(4).standard_normal((8, 8))
    res = pgd(small_cnn(), x, 1, AttackConfig(epsilon=0.0, alpha=0.5, iterations=7))
    assert res.x_adv.values.tobytes() == x.tobytes()


def test_pgd_on_linear_model_loss_is_monotone():
    m = linear_model(seed=2)
    x = R(5).standard_normal((4, 5))
    free = pgd(m, x, 0, AttackConfig(epsilon=1.0, alpha=0.01, iterations=15)).loss_trace
    assert all(b > a for a, b in zip(free, free[1:]))
    clipped = pgd(m, x, 0, AttackConfig(epsilon=0.03, alpha=0.01, iterations=15)).loss_trace
    assert all(b >= a for a, b in zip(clipped, clipped[1:]))


def test_zero_gradient_fixed_point():
    m = linear_model()
    m.layers[1].params["weight"][:] = 0.0
    x = R(6).standard_normal((4, 5))
    np.testing.assert_array_equal(pgd(m, x, 0, AttackConfig(0.5, 0.1, 5)).x_adv.values, x)


def test_random_start_stays_in_ball_and_is_seeded():
    x = R(7).standard_normal((8, 8))
    cfg = AttackConfig(epsilon=0.2, alpha=0.05, iterations=3, random_start=True, seed=4)
    a = pgd(small_cnn(), x, 0, cfg)
    b = pgd(small_cnn(), x, 0, cfg)
    assert a.linf_delta <= 0.2 + 1e-12
    np.testing.assert_array_equal(a.x_adv.values, b.x_adv.values)


def test_fgsm_equals_one_step_pgd_bitwise():
    m = small_cnn(3)
    for seed in range(20):
        rng = R(seed)
        x, y, eps = rng.standard_normal((8, 8)), int(rng.integers(2)), float(rng.uniform(0, 1))
        a = fgsm(m, x, y, eps).x_adv.values
        b = pgd(m, x, y, AttackConfig(epsilon=eps, alpha=eps, iterations=1)).x_adv.values
        assert a.tobytes() == b.tobytes()


def test_feature_tensor_metadata_is_kept():
    ft = FeatureTensor(R(8).standard_normal((8, 8)), "rec", 3, standardized=True, fitted_on="train")
    out = pgd(small_cnn(), ft, 0, AttackConfig(iterations=2)).x_adv
    assert (out.recording_id, out.chunk_index, out.standardized, out.fitted_on) == ("rec", 3, True, "train")


# ---------------------------------------------------------------- datasets


def test_protect_dataset_empty_and_bound():
    m = small_cnn()
    assert protect_dataset(m, []) == []
    items = [(R(i).standard_normal((8, 8)), i % 2) for i in range(6)]
    cfg = AttackConfig(epsilon=0.05, alpha=0.02, iterations=5)
    assert all(r.linf_delta <= 0.05 + 1e-12 for r in protect_dataset(m, items, cfg))


def test_protect_dataset_is_order_independent():
    m = small_cnn(4)
    items = [(R(i).standard_normal((8, 8)), i % 2) for i in range(7)]
    cfg = AttackConfig(epsilon=0.1, alpha=0.03, iterations=4)
    base = protect_dataset(m, items, cfg)
    perm = R(0).permutation(7)
    shuffled = protect_dataset(m, [items[i] for i in perm], cfg)
    for j, i in enumerate(perm):
        assert shuffled[j].x_adv.values.tobytes() == base[i].x_adv.values.tobytes()


def test_protect_dataset_reports_failing_index():
    m = small_cnn()
    items = [(np.zeros((8, 8)), 0), (np.zeros((4, 4)), 1)]
    with pytest.raises(RuntimeError, match="item 1"):
        protect_dataset(m, items)
    m.mode = "train"
    with pytest.raises(ValueError, match="eval"):
        protect_dataset(m, items[:1])


def test_attack_raises_loss_of_a_trained_model():
    rng = R(0)
    y = np.arange(80) % 2
    X = rng.standard_normal((80, 1, 8, 8)) + (2 * y - 1)[:, None, None, None]
    m, _ = train(small_cnn(), X, y, TrainConfig(batch_size=16, epochs=8))
    res = protect_dataset(m, zip(X[:, 0], y), AttackConfig(epsilon=0.3, alpha=0.05, iterations=10))
    clean = np.mean([r.loss_trace[0] for r in res])
    attacked = np.mean([m.input_gradient(r.x_adv.values[None, None], [t])[0] for r, t in zip(res, y)])
    assert attacked >= clean


def test_protector_estimator():
    rng = R(1)
    y = np.where(np.arange(40) % 2, "M", "F")
    X = rng.standard_normal((40, 8, 8)) + np.where(y == "M", 1.0, -1.0)[:, None, None]
    clf = CNNClassifier(channels=(4, 8), hidden=8, epochs=3, batch_size=8).fit(X, y)
    prot = PGDProtector(clf, epsilon=0.2, alpha=0.05, iterations=6).fit()
    X_adv = prot.transform(X, y)
    assert X_adv.shape == X.shape
    assert np.abs(X_adv - X).max() <= 0.2 + 1e-12
    assert prot.linf_.shape == (40,) and len(prot.loss_traces_) == 40
    with pytest.raises(ValueError, match="labels"):
        prot.transform(X)
    with pytest.raises(ValueError):
        PGDProtector().fit()
    assert prot.get_params()["epsilon"] == 0.2
