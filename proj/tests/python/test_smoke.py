"""End-to-end smoke tests for the python module against a tiny task."""

import math

import numpy as np
import pytest

import purelab

TINY = """
task.d = 32
task.k = 4
task.sigma_x = 0.25
net.m = 48
sched.n_train = 64
sched.t_f = 6
sched.t_g = 4
sched.eval_every = 3
sched.metrics_samples = 32
sched.metrics_attacks = fgm:l2:0.25
adv.attack = fgm:l2:0.25
"""


def test_config_round_trip():
    text = purelab.default_config_text()
    assert "task.d = 128" in text
    assert purelab.normalize_config(text) == text
    h = purelab.config_hash("")
    assert len(h) == 16 and int(h, 16) >= 0
    assert purelab.config_hash("run.out = elsewhere") == h
    assert purelab.config_hash("task.d = 64") != h


def test_derive_seed_stable():
    a = purelab.derive_seed(0, "data", 0)
    assert a == purelab.derive_seed(0, "data", 0)
    assert a != purelab.derive_seed(0, "data", 1)
    assert a != purelab.derive_seed(1, "data", 0)


def test_dataset_shapes_and_model():
    X, y, Z = purelab.sample_dataset(TINY, 100, seed=3)
    assert X.shape == (100, 32) and Z.shape == (100, 32)
    assert set(np.unique(y)) <= {-1.0, 1.0}
    M = purelab.dictionary(TINY, seed=3)
    assert np.allclose(M.T @ M, np.eye(32), atol=1e-10)
    w = purelab.planted_direction(TINY, seed=3)
    assert set(np.unique(w)) <= {-1.0, 1.0}
    # labels follow the hidden code, not the noise
    s = Z @ w
    expected = np.where(s >= 0, 1.0, -1.0)
    assert np.array_equal(y, expected)
    X2, y2, _ = purelab.sample_dataset(TINY, 100, seed=3)
    assert np.array_equal(X, X2) and np.array_equal(y, y2)


def test_forward_antisymmetry_and_grad():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(8, 32)) * 0.3
    x = rng.normal(size=32)
    rho = rng.normal(size=8) * 0.1
    f = purelab.forward(W, 0.2, 0.1, x, rho)
    g = purelab.forward(W, 0.2, 0.1, -x, rho)
    assert abs(f + g) < 1e-12
    fd = np.empty(32)
    h = 1e-5
    for j in range(32):
        up, dn = x.copy(), x.copy()
        up[j] += h
        dn[j] -= h
        fd[j] = (
            purelab.forward_smoothed(W, 0.2, 0.1, up)
            - purelab.forward_smoothed(W, 0.2, 0.1, dn)
        ) / (2 * h)
    assert np.allclose(fd, purelab.grad_input(W, 0.2, 0.1, x), atol=1e-7)


def test_attack_budget():
    rng = np.random.default_rng(1)
    W = rng.normal(size=(8, 32)) * 0.5
    x = rng.normal(size=32)
    for spec, norm in [("fgm:l2:0.3", 2), ("fgm:linf:0.05", np.inf)]:
        delta = purelab.attack(spec, TINY, W, 0.2, 0.1, x, 1.0)
        assert np.linalg.norm(delta, norm) <= (0.3 if norm == 2 else 0.05) + 1e-9


def test_train_eval_cycle():
    res = purelab.train_clean(TINY, seed=0)
    assert res["W"].shape == (48, 32)
    assert res["metrics"]["t"] == [0, 3, 6]
    assert res["b"] > 0
    res2 = purelab.train_clean(TINY, seed=0)
    assert np.array_equal(res["W"], res2["W"])

    adv = purelab.train_adv(
        TINY, 0, res["W"], res["b"], res["sigma_rho"], res["late_phase"], t0=6
    )
    assert adv["W"].shape == (48, 32)
    assert adv["b"] == res["b"]  # bias frozen in the adversarial stage

    rep = purelab.evaluate(TINY, adv["W"], adv["b"], adv["sigma_rho"],
                           ["fgm:l2:0.25"], n=64, seed=0)
    assert 0.0 <= rep["clean_error"] <= 1.0
    assert rep["robust_error"]["fgm_l2_t0.25"] >= rep["clean_error"]


def test_diagnostics_and_lasso():
    res = purelab.train_clean(TINY, seed=1)
    sets = purelab.classify_neurons(TINY, res["W_init"], 0.01, seed=1)
    mean, median, per = purelab.dense_projection(
        TINY, res["W"], [(0, 1.0), (1, -1.0)], seed=1
    )
    assert len(per) == 2 and math.isfinite(mean) and math.isfinite(median)
    assert isinstance(sets["ept"], list)

    x = np.array([1.0, -0.4, 0.05, 0.0])
    out = purelab.lasso(np.eye(4), x, lambda1=0.2)
    want = np.sign(x) * np.maximum(np.abs(x) - 0.1, 0.0)
    assert np.allclose(out["code"], want, atol=1e-8)
    assert out["kkt"] <= 1e-8


def test_theta():
    u = np.array([1.0, 0.0])
    assert purelab.theta(u, -2 * u) == 1.0
    assert purelab.theta(u, np.array([0.0, 3.0])) == 0.0


def test_ntk_smoke():
    cfg = TINY + "ntk.m = 32\nntk.iters = 10\nntk.n_train = 64\nntk.eval_every = 5\n"
    res = purelab.train_ntk(cfg, seed=0)
    assert res["W"].shape == (32, 32)
    assert res["V_plus"].shape == (32, 32)
    losses = res["metrics"]["train_loss"]
    assert losses[0] == pytest.approx(math.log(2.0), abs=1e-9)
    assert res["final_loss"] <= losses[0]


def test_pipeline_files(tmp_path):
    man = purelab.run_pipeline(TINY + f"run.out = {tmp_path}/out\n")
    assert man["status"] == "ok"
    assert man["stages"]["clean-train"] == "ok"
    ck = purelab.load_checkpoint(f"{tmp_path}/out/ckpt_adv.bin")
    assert ck["W"].shape == (48, 32)
    assert ck["schema"] == "net1"
    assert (tmp_path / "out" / "metrics.csv").exists()
