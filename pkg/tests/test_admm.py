import itertools

import numpy as np
import pytest

from maskdecomp.admm import (
    INITS,
    TOY_1D_CONFIG,
    AdmmConfig,
    additive_objective,
    additive_solve,
    admm_solve,
    alpha_least_squares,
    binarize,
    initial_mask,
    loss,
    solve_spd,
    update_alpha,
    update_w,
    w_system,
)
from maskdecomp.bases import make_custom_basis, make_dct2_basis, make_hadamard_basis, make_sinusoid_basis
from maskdecomp.errors import InvalidArgumentError, SingularSystemError
from maskdecomp.operators import diff_1d, diff_2d, soft_threshold
from maskdecomp.testkit import gen_masked_1d, metrics, toy_1d_instance

P1_4 = make_custom_basis(np.array([[0.5, 0.5, 0.5, 0.5]]).T)
P2_4 = make_custom_basis(np.array([[0.5, -0.5, 0.5, -0.5]]).T)
X_4 = np.array([1.0, -1.0, 1.0, 1.0])


def loss_loop(x, m1, m2, a1, a2, w, l1, l2, dense_d):
    """Straight-line evaluation with explicit loops."""
    total = 0.0
    for i in range(len(x)):
        c1 = sum(m1[i, j] * a1[j] for j in range(len(a1)))
        c2 = sum(m2[i, j] * a2[j] for j in range(len(a2)))
        r = x[i] - (1 - w[i]) * c1 - w[i] * c2
        total += 0.5 * r * r
    total += l1 * sum(abs(v) for v in w)
    for row in dense_d:
        total += l2 * abs(sum(row[i] * w[i] for i in range(len(w))))
    return total


def random_problem(n=12, k1=3, k2=3, seed=0):
    rng = np.random.default_rng(seed)
    m1 = rng.standard_normal((n, k1))
    m2 = rng.standard_normal((n, k2))
    return rng, m1, m2


# --- loss ----------------------------------------------------------------------


def test_loss_zero_when_x_in_p1():
    rng, m1, m2 = random_problem()
    a1 = rng.standard_normal(3)
    assert loss(m1 @ a1, m1, m2, a1, np.zeros(3), np.zeros(12), 0.5, 0.5, diff_1d(12)) == 0.0


def test_loss_worked_example():
    value = loss(X_4, P1_4, P2_4, [2.0], [2.0], np.array([0, 1, 0, 0.0]), 0.1, 0.1, diff_1d(4))
    assert value == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_loss_matches_loop(seed):
    rng, m1, m2 = random_problem(seed=seed)
    x = rng.standard_normal(12)
    a1, a2 = rng.standard_normal(3), rng.standard_normal(3)
    w = rng.random(12)
    d = diff_1d(12)
    ref = loss_loop(x, m1, m2, a1, a2, w, 0.7, 1.3, d.matrix.toarray())
    assert abs(loss(x, m1, m2, a1, a2, w, 0.7, 1.3, d) - ref) <= 1e-12 * max(1.0, ref)


def test_loss_dimension_mismatch():
    rng, m1, m2 = random_problem()
    with pytest.raises(InvalidArgumentError):
        loss(np.zeros(12), m1, m2, np.zeros(3), np.zeros(3), np.zeros(11), 1, 1, diff_1d(12))


# --- alpha update ----------------------------------------------------------------


def test_alpha_all_ones_is_least_squares():
    rng, m1, m2 = random_problem(n=20, k1=4, k2=5)
    x = rng.standard_normal(20)
    ref, *_ = np.linalg.lstsq(m2, x, rcond=None)
    got = alpha_least_squares(x, m2, m1, rng.standard_normal(4), np.ones(20), 2, gram_eps=0.0)
    np.testing.assert_allclose(got, ref, atol=1e-10)
    top = update_alpha(x, m2, m1, np.zeros(4), np.ones(20), 2, k=2, gram_eps=0.0)
    assert np.count_nonzero(top) == 2
    keep = np.argsort(-np.abs(ref))[:2]
    np.testing.assert_allclose(top[keep], ref[keep], atol=1e-10)


def test_alpha_empty_mask_is_singular():
    rng, m1, m2 = random_problem()
    with pytest.raises(SingularSystemError) as err:
        update_alpha(rng.standard_normal(12), m2, m1, np.zeros(3), np.zeros(12), 2, k=3, gram_eps=0.0)
    assert err.value.component == 2


def test_alpha_ridge_repairs_empty_mask():
    rng, m1, m2 = random_problem()
    a = update_alpha(rng.standard_normal(12), m2, m1, np.zeros(3), np.zeros(12), 2, k=3, gram_eps=1e-8)
    np.testing.assert_array_equal(a, 0.0)


@pytest.mark.parametrize("which", [1, 2])
@pytest.mark.parametrize("seed", range(4))
def test_alpha_local_optimality(which, seed):
    rng, m1, m2 = random_problem(seed=seed)
    x = rng.standard_normal(12)
    w = rng.random(12)
    other = rng.standard_normal(3)
    ms, mo = (m1, m2) if which == 1 else (m2, m1)
    a = alpha_least_squares(x, ms, mo, other, w, which)

    def quad(alpha):
        a1, a2 = (alpha, other) if which == 1 else (other, alpha)
        r = x - (1 - w) * (m1 @ a1) - w * (m2 @ a2)
        return 0.5 * r @ r

    base = quad(a)
    for _ in range(50):
        delta = rng.standard_normal(3)
        delta *= 1e-3 / np.linalg.norm(delta)
        assert quad(a + delta) >= base - 1e-9


# --- w update --------------------------------------------------------------------


def test_w_zero_when_components_agree():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(10)
    x = rng.standard_normal(10)
    zeros = np.zeros(10)
    w = update_w(x, c, c, zeros, np.zeros(9), zeros, np.zeros(9), 1.0, 1.0, diff_1d(10))
    np.testing.assert_allclose(w, 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_w_system_residual_and_box(seed):
    rng = np.random.default_rng(seed)
    n = 30
    d = diff_1d(n)
    args = [rng.standard_normal(n) * 3 for _ in range(3)] + [
        rng.random(n),
        rng.standard_normal(n - 1),
        rng.standard_normal(n),
        rng.standard_normal(n - 1),
    ]
    m, rhs = w_system(*args, 0.7, 2.0, d)
    sol = solve_spd(m, rhs, 1e-10)
    assert np.linalg.norm(m @ sol - rhs) <= 1e-10 * np.linalg.norm(rhs)
    w = update_w(*args, 0.7, 2.0, d)
    assert np.all((w >= 0) & (w <= 1))
    np.testing.assert_allclose(w, np.clip(sol, 0, 1), atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_w_step_local_optimality(seed):
    # the pre-projection solution minimizes the w-part of the augmented Lagrangian
    rng = np.random.default_rng(seed)
    n = 16
    d = diff_2d(4, 4)
    dm = d.matrix.toarray()
    x, p1a1, p2a2 = (rng.standard_normal(n) for _ in range(3))
    y, u1 = rng.random(n), rng.standard_normal(n)
    z, u2 = rng.standard_normal(d.rows), rng.standard_normal(d.rows)
    r1, r2 = 1.5, 0.5

    def f(w):
        r = x - (1 - w) * p1a1 - w * p2a2
        return (
            0.5 * r @ r
            + u1 @ (w - y)
            + 0.5 * r1 * np.sum((w - y) ** 2)
            + u2 @ (dm @ w - z)
            + 0.5 * r2 * np.sum((dm @ w - z) ** 2)
        )

    m, rhs = w_system(x, p1a1, p2a2, y, z, u1, u2, r1, r2, d)
    w = solve_spd(m, rhs, 1e-12)
    base = f(w)
    for _ in range(50):
        delta = rng.standard_normal(n)
        assert f(w + 1e-3 * delta / np.linalg.norm(delta)) >= base - 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_auxiliary_steps_are_prox(seed):
    # y = soft(w + u/rho, lam/rho) minimizes lam|y| - u'y + rho/2 ||w - y||^2
    rng = np.random.default_rng(seed)
    w, u = rng.random(20), rng.standard_normal(20)
    lam, rho = 0.4, 1.7

    def f(y):
        return lam * np.abs(y).sum() + u @ (w - y) + 0.5 * rho * np.sum((w - y) ** 2)

    y = soft_threshold(w + u / rho, lam / rho)
    base = f(y)
    for _ in range(50):
        delta = rng.standard_normal(20)
        assert f(y + 1e-3 * delta / np.linalg.norm(delta)) >= base - 1e-9


# --- binarize / config / init ------------------------------------------------------


def test_binarize_examples():
    np.testing.assert_array_equal(binarize([0.7, 0.2], 0.5), [1, 0])
    np.testing.assert_array_equal(binarize([0.5], 0.5), [1])
    for t in (0.1, 0.5, 0.9):
        np.testing.assert_array_equal(binarize([0, 1, 1, 0], t), [0, 1, 1, 0])
    with pytest.raises(InvalidArgumentError):
        binarize([0.3], 1.0)


@pytest.mark.parametrize(
    "kw",
    [
        {"lambda1": -1},
        {"rho1": 0},
        {"k2": 0},
        {"t_max": 0},
        {"tol": 0},
        {"init": "ones"},
        {"init": "gaussian"},
        {"binarize_mode": "never"},
        {"bin_threshold": 1.0},
        {"gram_eps": -1},
    ],
)
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        AdmmConfig(**kw)


def test_initial_masks():
    x = np.random.default_rng(0).standard_normal(50)
    p1 = make_sinusoid_basis(50, 4)
    cfg = AdmmConfig(seed=3)
    assert np.all(initial_mask(x, p1, cfg.with_(init="zeros")) == 0)
    assert np.all(initial_mask(x, p1, cfg.with_(init="half")) == 0.5)
    for init in ("gaussian", "uniform01"):
        a = initial_mask(x, p1, cfg.with_(init=init))
        assert np.all((a >= 0) & (a <= 1))
        np.testing.assert_array_equal(a, initial_mask(x, p1, cfg.with_(init=init)))
    r = initial_mask(x, p1, cfg.with_(init="p1_residual"))
    assert set(np.unique(r)) <= {0.0, 1.0} and r.sum() >= 1
    # a signal the first basis explains exactly starts with an empty mask
    assert initial_mask(p1.matrix @ np.ones(4), p1, cfg.with_(init="p1_residual")).sum() == 0


# --- full solver --------------------------------------------------------------------


def test_worked_example_reaches_oracle():
    cfg = AdmmConfig(lambda1=0.1, lambda2=0.1, rho1=1.0, rho2=1.0, k1=1, k2=1)
    dec = admm_solve(X_4, P1_4, P2_4, cfg)
    assert dec.objective <= 1.05 * 0.3
    np.testing.assert_array_equal(dec.w_bin, [0, 1, 0, 0])


def test_signal_in_p1_gives_empty_mask():
    p1, p2 = make_sinusoid_basis(64, 4), make_hadamard_basis(64, 4)
    x = p1.matrix @ np.array([3.0, -1.0, 2.0, 0.5])
    dec = admm_solve(x, p1, p2, AdmmConfig(lambda1=0.3, lambda2=1.0, k1=4, k2=4))
    assert dec.w_bin.sum() == 0
    assert dec.objective <= 1e-12


@pytest.mark.parametrize("mode", ["at_end", "per_step"])
def test_decomposition_invariants(mode):
    inst, p1, p2 = toy_1d_instance(5)
    cfg = TOY_1D_CONFIG.with_(binarize_mode=mode, t_max=6)
    dec = admm_solve(inst.x, p1, p2, cfg)
    assert np.all((dec.w_cont >= 0) & (dec.w_cont <= 1))
    assert set(np.unique(dec.w_bin)) <= {0.0, 1.0}
    assert np.count_nonzero(dec.alpha1) <= cfg.k1
    assert np.count_nonzero(dec.alpha2) <= cfg.k2
    assert len(dec.loss_trace) == dec.iterations
    np.testing.assert_allclose(dec.comp1, p1.matrix @ dec.alpha1)
    np.testing.assert_allclose(dec.comp2, p2.matrix @ dec.alpha2)
    if mode == "per_step":
        assert set(np.unique(dec.w_cont)) <= {0.0, 1.0}


def test_every_iteration_keeps_invariants():
    inst, p1, p2 = toy_1d_instance(9)
    for t in range(1, 6):
        dec = admm_solve(inst.x, p1, p2, TOY_1D_CONFIG.with_(t_max=t, tol=1e-300))
        assert dec.iterations == t
        assert np.all((dec.w_cont >= 0) & (dec.w_cont <= 1))


@pytest.mark.parametrize("seed", range(4))
def test_stopping_rule(seed):
    inst, p1, p2 = toy_1d_instance(seed)
    cfg = TOY_1D_CONFIG.with_(tol=1e-2, t_max=40)
    dec = admm_solve(inst.x, p1, p2, cfg)
    tr = dec.loss_trace
    if dec.converged:
        assert len(tr) >= 2 and abs(tr[-1] - tr[-2]) / abs(tr[-2]) <= cfg.tol
        for a, b in zip(tr[:-2], tr[1:-1]):
            assert abs(b - a) / abs(a) > cfg.tol
    else:
        assert dec.iterations == cfg.t_max


def test_deterministic():
    inst, p1, p2 = toy_1d_instance(2)
    cfg = TOY_1D_CONFIG.with_(init="gaussian", seed=11)
    a = admm_solve(inst.x, p1, p2, cfg)
    b = admm_solve(inst.x, p1, p2, cfg)
    np.testing.assert_array_equal(a.w_cont, b.w_cont)
    assert a.loss_trace == b.loss_trace


def test_two_dimensional_block_runs():
    p1 = make_dct2_basis(8, 8, 6)
    p2 = make_hadamard_basis(64, 4, (8, 8))
    x = np.random.default_rng(0).standard_normal(64)
    dec = admm_solve(x, p1, p2, AdmmConfig(lambda1=1.0, lambda2=0.2, k1=6, k2=4, t_max=4), diff_2d(8, 8))
    assert dec.w_bin.shape == (64,)


def test_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        admm_solve(np.zeros(5), make_sinusoid_basis(8, 2), make_sinusoid_basis(8, 2))


def test_init_schemes_agree():
    # the five initializations should land on similar masks (mean pairwise F1 >= 0.9)
    masks = {init: [] for init in INITS}
    for seed in range(20):
        inst, p1, p2 = toy_1d_instance(seed)
        for init in INITS:
            masks[init].append(admm_solve(inst.x, p1, p2, TOY_1D_CONFIG.with_(init=init, seed=seed)).w_bin)
    agree = [
        np.mean([metrics(masks[a][i], masks[b][i]).f1 for i in range(20)])
        for a, b in itertools.combinations(INITS, 2)
    ]
    print("pairwise init agreement:", np.round(agree, 3))
    assert np.mean(agree) >= 0.9


# --- additive baseline ----------------------------------------------------------------


def test_additive_signal_in_p1():
    p1, p2 = make_sinusoid_basis(64, 4), make_hadamard_basis(64, 4)
    x = p1.matrix @ np.array([3.0, -1.0, 2.0, 0.5])
    dec = additive_solve(x, p1, p2, AdmmConfig(lambda1=0.3, lambda2=1.0, k1=4, k2=4))
    assert np.abs(dec.comp2).max() < 1e-6
    assert dec.w_bin.sum() == 0


def test_additive_deterministic_and_objective():
    inst, p1, p2 = toy_1d_instance(4)
    a = additive_solve(inst.x, p1, p2)
    b = additive_solve(inst.x, p1, p2)
    np.testing.assert_array_equal(a.w_bin, b.w_bin)
    d = diff_1d(256)
    assert a.objective == pytest.approx(
        additive_objective(inst.x, p1, p2, a.alpha1, a.alpha2, 0.3, 10.0, d), rel=1e-12
    )
    assert np.count_nonzero(a.alpha2) <= 10


def test_generated_instance_roundtrip():
    p1, p2 = make_sinusoid_basis(32, 2), make_hadamard_basis(32, 2)
    inst = gen_masked_1d(32, p1, p2, seed=1)
    np.testing.assert_array_equal(inst.x, (1 - inst.gt_mask) * inst.gt_comp1 + inst.gt_mask * inst.gt_comp2)
