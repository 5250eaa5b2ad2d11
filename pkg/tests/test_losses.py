"""Loss-function oracles, properties, and finite-difference gradient checks.

Hand values below were computed independently (high-precision arithmetic)
before being frozen here.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
import torch

from conftest import leaf, max_fd_error
from mtac.losses import (
    ccc,
    class_weights,
    confidence_weighted_ce,
    ramp_weights,
    total_loss,
    weighted_au_bce,
    weighted_ccc_loss,
)

LN7 = 1.9459101490553132
LN2 = 0.6931471805599453
LN_1P_EXP_NEG2 = 0.1269280110429726  # ln(1 + e^-2)
E_NEG1 = 0.36787944117144233
E_NEG_QUARTER = 0.7788007830714049  # exp(-1/4)
NEG_LN_BCE_EPS = 16.11809565095832  # -ln(1e-7)


# independent reference implementations, written from the formulas

def np_wce(logits, labels, alphas, gamma=None):
    z = alphas[:, None] * logits
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    per = -logp[np.arange(len(labels)), labels]
    if gamma is not None:
        per = per * gamma[labels]
    return per.mean()


def np_ccc(y, yh, eps=1e-8):
    my, mh = y.mean(), yh.mean()
    vy = ((y - my) ** 2).mean()
    vh = ((yh - mh) ** 2).mean()
    cov = ((y - my) * (yh - mh)).mean()
    return 2.0 * cov / (vy + vh + (my - mh) ** 2 + eps)


def np_wccc(va_pred, va_label, labels, gamma):
    total = 0.0
    for j in np.unique(labels):
        m = labels == j
        if m.sum() < 2:
            continue
        rho_v = np_ccc(va_label[m, 0], va_pred[m, 0])
        rho_a = np_ccc(va_label[m, 1], va_pred[m, 1])
        total += gamma[j] * (1.0 - (rho_v + rho_a) / 2.0)
    return total


def np_au_bce(pred, label, alphas, eps=1e-7):
    p = np.clip(pred, eps, 1.0 - eps)
    per = -(label * np.log(p) + (1 - label) * np.log(1 - p)).sum(axis=1)
    return (alphas * per).mean()


# ---------------------------------------------------------------- weighted CE

def test_wce_uniform_logits_full_confidence_gives_log_c():
    logits = torch.zeros(1, 7, dtype=torch.float64)
    loss = confidence_weighted_ce(logits, torch.tensor([3]), torch.ones(1, dtype=torch.float64))
    assert abs(loss.item() - LN7) < 1e-12


def test_wce_two_class_hand_value():
    # z = (2, 0), y = 0, alpha = 1: loss = ln(1 + e^-2)
    logits = torch.tensor([[2.0, 0.0]], dtype=torch.float64)
    loss = confidence_weighted_ce(logits, torch.tensor([0]), torch.ones(1, dtype=torch.float64))
    assert abs(loss.item() - LN_1P_EXP_NEG2) < 1e-12


def test_wce_vanishing_confidence_approaches_log_c():
    rng = np.random.default_rng(5)
    for _ in range(20):
        c = int(rng.integers(2, 9))
        logits = torch.tensor(rng.normal(size=(1, c)) * 4.0)
        loss = confidence_weighted_ce(logits, torch.tensor([0]), torch.tensor([1e-9]))
        assert abs(loss.item() - math.log(c)) < 1e-7


def test_wce_alpha_scales_inside_the_softmax():
    logits = torch.tensor([[3.0, -1.0, 0.5]], dtype=torch.float64)
    y = torch.tensor([1])
    half = confidence_weighted_ce(logits, y, torch.tensor([0.5], dtype=torch.float64))
    rescaled = confidence_weighted_ce(0.5 * logits, y, torch.ones(1, dtype=torch.float64))
    full = confidence_weighted_ce(logits, y, torch.ones(1, dtype=torch.float64))
    assert abs(half.item() - rescaled.item()) < 1e-12
    assert abs(half.item() - 0.5 * full.item()) > 0.1  # not an outer multiplier


def test_wce_matches_reference_on_random_batches():
    rng = np.random.default_rng(17)
    for _ in range(120):
        n = int(rng.integers(1, 9))
        c = int(rng.integers(2, 7))
        logits = rng.normal(size=(n, c)) * 3.0
        labels = rng.integers(0, c, size=n)
        alphas = rng.uniform(0.05, 1.0, size=n)
        gamma = rng.uniform(0.1, 1.0, size=c) if rng.random() < 0.5 else None
        got = confidence_weighted_ce(
            torch.tensor(logits),
            torch.tensor(labels),
            torch.tensor(alphas),
            class_gamma=None if gamma is None else torch.tensor(gamma),
        )
        assert abs(got.item() - np_wce(logits, labels, alphas, gamma)) < 1e-10


def test_wce_is_batch_mean_of_single_sample_losses():
    rng = np.random.default_rng(2)
    logits = torch.tensor(rng.normal(size=(5, 4)))
    labels = torch.tensor(rng.integers(0, 4, size=5))
    alphas = torch.tensor(rng.uniform(0.2, 1.0, size=5))
    whole = confidence_weighted_ce(logits, labels, alphas)
    singles = [
        confidence_weighted_ce(logits[i : i + 1], labels[i : i + 1], alphas[i : i + 1]).item()
        for i in range(5)
    ]
    assert abs(whole.item() - np.mean(singles)) < 1e-12


def test_wce_rejects_bad_inputs():
    logits = torch.zeros(2, 3)
    labels = torch.tensor([0, 1])
    good = torch.tensor([0.5, 0.5])
    for bad in ([0.0, 0.5], [-0.1, 0.5], [1.1, 0.5]):
        with pytest.raises(ValueError, match=r"\(0, 1\]"):
            confidence_weighted_ce(logits, labels, torch.tensor(bad))
    with pytest.raises(ValueError, match="NaN"):
        confidence_weighted_ce(torch.tensor([[float("nan"), 0.0]]), torch.tensor([0]), torch.ones(1))
    with pytest.raises(ValueError, match="do not match"):
        confidence_weighted_ce(torch.zeros(3, 2), labels, good)
    with pytest.raises(ValueError, match="do not match"):
        confidence_weighted_ce(torch.zeros(4), torch.tensor([0]), torch.ones(1))


def test_wce_decreases_in_alpha_when_true_logit_is_max():
    rng = np.random.default_rng(23)
    grid = np.linspace(0.05, 1.0, 12)
    for _ in range(100):
        c = int(rng.integers(2, 7))
        z = rng.normal(size=c) * 2.0
        y = int(np.argmax(z))
        z[y] += 0.5  # unique max
        zt = torch.tensor(z[None, :])
        vals = [
            confidence_weighted_ce(zt, torch.tensor([y]), torch.tensor([a])).item()
            for a in grid
        ]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_wce_increases_in_alpha_when_true_logit_at_or_below_mean():
    rng = np.random.default_rng(29)
    grid = np.linspace(0.05, 1.0, 12)
    for _ in range(100):
        c = int(rng.integers(2, 7))
        z = rng.normal(size=c) * 2.0
        if np.ptp(z) < 1e-3:
            z[0] += 1.0
        y = int(np.argmin(z))  # min <= mean, strictly below max
        zt = torch.tensor(z[None, :])
        vals = [
            confidence_weighted_ce(zt, torch.tensor([y]), torch.tensor([a])).item()
            for a in grid
        ]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_wce_alpha_monotonicity_fails_between_mean_and_max():
    # z = (5, 4, 0), y = 1: mean(z) = 3 < z_y = 4 < max(z) = 5.
    # The loss first falls, then rises: the derivative changes sign on (0, 1],
    # so "true logit below the max implies increasing in alpha" is only valid
    # in the regimes covered by the two tests above.
    z = torch.tensor([[5.0, 4.0, 0.0]], dtype=torch.float64)
    y = torch.tensor([1])

    def dloss(a):
        alpha = torch.tensor([a], dtype=torch.float64, requires_grad=True)
        loss = confidence_weighted_ce(z, y, alpha)
        return torch.autograd.grad(loss, alpha)[0].item()

    assert dloss(0.05) < -0.5
    assert dloss(1.0) > 0.5


def test_wce_gradients_match_finite_differences():
    rng = np.random.default_rng(31)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        c = int(rng.integers(2, 5))
        logits = leaf(rng.normal(size=(n, c)) * 2.0)
        alphas = leaf(rng.uniform(0.1, 0.9, size=n))
        labels = torch.tensor(rng.integers(0, c, size=n))
        gamma = torch.tensor(rng.uniform(0.2, 1.0, size=c))
        err = max_fd_error(
            lambda: confidence_weighted_ce(logits, labels, alphas, class_gamma=gamma),
            [logits, alphas],
        )
        assert err <= 1e-4


# ------------------------------------------------------------------------ ccc

def test_ccc_perfect_agreement_near_one():
    y = torch.tensor([-1.0, 0.0, 1.0], dtype=torch.float64)
    assert abs(ccc(y, y.clone()).item() - 1.0) < 1e-7  # eps keeps it just below 1


def test_ccc_perfect_reversal_near_minus_one():
    y = torch.tensor([-1.0, 0.0, 1.0], dtype=torch.float64)
    yh = torch.tensor([1.0, 0.0, -1.0], dtype=torch.float64)
    assert abs(ccc(y, yh).item() + 1.0) < 1e-7


def test_ccc_constant_prediction_is_zero():
    y = torch.tensor([0.0, 0.0, 1.0, 1.0])
    yh = torch.full((4,), 0.5)
    assert ccc(y, yh).item() == 0.0


def test_ccc_matches_reference_and_is_symmetric_and_bounded():
    rng = np.random.default_rng(37)
    for _ in range(120):
        k = int(rng.integers(2, 12))
        y = rng.normal(size=k) * rng.uniform(0.5, 2.0)
        yh = rng.normal(size=k) * rng.uniform(0.5, 2.0)
        got = ccc(torch.tensor(y), torch.tensor(yh)).item()
        assert abs(got - np_ccc(y, yh)) < 1e-10
        assert abs(got - ccc(torch.tensor(yh), torch.tensor(y)).item()) < 1e-12
        assert abs(got) <= 1.0


def test_ccc_penalizes_mean_shift():
    # against a mean-matched positively-correlated prediction, any constant
    # offset strictly lowers the coefficient
    rng = np.random.default_rng(41)
    for _ in range(100):
        k = int(rng.integers(4, 16))
        y = rng.normal(size=k)
        y = y - y.mean()
        if y.std() < 0.3:
            y = y * (0.5 / max(y.std(), 1e-6))
        yh = 0.8 * y + 0.2 * rng.normal(size=k)
        yh = yh - yh.mean() + y.mean()
        if np_ccc(y, yh) <= 0.05:
            continue
        base = ccc(torch.tensor(y), torch.tensor(yh)).item()
        shift = rng.uniform(0.2, 2.0) * rng.choice([-1.0, 1.0])
        assert ccc(torch.tensor(y), torch.tensor(yh + shift)).item() < base


def test_ccc_degenerate_and_mismatched_inputs_raise():
    with pytest.raises(ValueError, match="fewer than 2"):
        ccc(torch.tensor([1.0]), torch.tensor([1.0]))
    with pytest.raises(ValueError, match="equal length"):
        ccc(torch.zeros(3), torch.zeros(4))
    with pytest.raises(ValueError, match="1-D"):
        ccc(torch.zeros(3, 2), torch.zeros(3, 2))
    assert float(ccc(torch.tensor([0.0, 1.0]), torch.tensor([0.0, 1.0]))) > 0.99


def test_ccc_gradients_match_finite_differences():
    rng = np.random.default_rng(43)
    for _ in range(100):
        k = int(rng.integers(3, 10))
        y = leaf(rng.normal(size=k))
        yh = leaf(rng.normal(size=k))
        assert max_fd_error(lambda: ccc(y, yh), [y, yh]) <= 1e-4


# -------------------------------------------------------------- class weights

def test_class_weights_hand_values():
    cw = class_weights([50, 30, 20])
    assert np.allclose(cw.gamma, [0.5, 0.7, 0.8], atol=1e-12)
    assert cw.gamma_fractions() == [Fraction(1, 2), Fraction(7, 10), Fraction(4, 5)]

    cw = class_weights([700, 100, 100, 100])
    assert np.allclose(cw.gamma, [0.3, 0.9, 0.9, 0.9], atol=1e-12)

    assert class_weights([100]).gamma.tolist() == [0.0]
    assert class_weights([25, 25, 25, 25]).gamma.tolist() == [0.75] * 4


def test_class_weights_sum_is_c_minus_one():
    rng = np.random.default_rng(47)
    for _ in range(120):
        c = int(rng.integers(1, 10))
        counts = rng.integers(0, 50, size=c)
        if counts.sum() == 0:
            counts[0] = 1
        cw = class_weights(counts)
        assert sum(cw.gamma_fractions()) == c - 1  # exact, as rationals
        assert abs(cw.gamma.sum() - (c - 1)) < 1e-12
        assert np.all(cw.gamma >= 0.0) and np.all(cw.gamma <= 1.0)


def test_class_weights_order_reverses_counts():
    gamma = class_weights([5, 50, 500]).gamma
    assert gamma[0] > gamma[1] > gamma[2]


def test_class_weights_rejects_bad_counts():
    with pytest.raises(ValueError, match="negative"):
        class_weights([3, -1])
    with pytest.raises(ValueError, match="all-zero"):
        class_weights([0, 0])
    with pytest.raises(ValueError, match="1-D"):
        class_weights(np.zeros((2, 2), dtype=int))


def test_class_weights_tensor_dtype():
    t = class_weights([1, 3]).as_tensor()
    assert t.dtype == torch.float32
    assert t.shape == (2,)


# ----------------------------------------------------------- weighted ccc sum

def test_wccc_perfect_predictions_near_zero():
    rng = np.random.default_rng(53)
    labels = torch.tensor([0, 0, 0, 1, 1, 1])
    va = torch.tensor(rng.uniform(-1, 1, size=(6, 2)))
    loss = weighted_ccc_loss(va.clone(), va, labels, torch.ones(2, dtype=va.dtype))
    assert abs(loss.item()) < 1e-6


def test_wccc_hand_value_perfect_valence_reversed_arousal():
    # class 0: valence tracks exactly (rho_v ~ 1), arousal exactly reversed
    # (rho_a ~ -1) -> term = gamma_0 * (1 - 0) = 0.5; class 1 perfect -> 0
    va_label = torch.tensor(
        [[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0], [-0.5, 0.5], [0.0, 0.0], [0.5, -0.5]],
        dtype=torch.float64,
    )
    va_pred = va_label.clone()
    va_pred[0:3, 1] = torch.tensor([1.0, 0.0, -1.0])
    labels = torch.tensor([0, 0, 0, 1, 1, 1])
    gamma = torch.tensor([0.5, 0.25], dtype=torch.float64)
    loss = weighted_ccc_loss(va_pred, va_label, labels, gamma)
    assert abs(loss.item() - 0.5) < 1e-6


def test_wccc_singleton_classes_contribute_nothing():
    va = torch.tensor([[0.1, 0.2], [0.3, -0.4], [-0.5, 0.6]])
    labels = torch.tensor([0, 1, 2])
    loss = weighted_ccc_loss(torch.rand(3, 2), va, labels, torch.ones(3))
    assert loss.item() == 0.0


def test_wccc_matches_reference_on_random_batches():
    rng = np.random.default_rng(59)
    for _ in range(100):
        n = int(rng.integers(2, 14))
        c = int(rng.integers(2, 5))
        labels = rng.integers(0, c, size=n)
        va_label = rng.uniform(-1, 1, size=(n, 2))
        va_pred = rng.uniform(-1, 1, size=(n, 2))
        gamma = rng.uniform(0.1, 1.0, size=c)
        got = weighted_ccc_loss(
            torch.tensor(va_pred), torch.tensor(va_label), torch.tensor(labels), torch.tensor(gamma)
        )
        assert abs(got.item() - np_wccc(va_pred, va_label, labels, gamma)) < 1e-10


def test_wccc_shape_validation():
    with pytest.raises(ValueError, match="N x 2"):
        weighted_ccc_loss(torch.zeros(3, 3), torch.zeros(3, 3), torch.zeros(3, dtype=torch.long), torch.ones(2))
    with pytest.raises(ValueError, match="N x 2"):
        weighted_ccc_loss(torch.zeros(3, 2), torch.zeros(4, 2), torch.zeros(3, dtype=torch.long), torch.ones(2))


def test_wccc_gradients_match_finite_differences():
    rng = np.random.default_rng(61)
    checked = 0
    while checked < 100:
        n = int(rng.integers(4, 10))
        labels = torch.tensor(rng.integers(0, 3, size=n))
        if max(np.bincount(labels.numpy(), minlength=3)) < 2:
            continue
        va_pred = leaf(rng.uniform(-0.9, 0.9, size=(n, 2)))
        va_label = torch.tensor(rng.uniform(-1, 1, size=(n, 2)))
        gamma = torch.tensor(rng.uniform(0.2, 1.0, size=3))
        err = max_fd_error(lambda: weighted_ccc_loss(va_pred, va_label, labels, gamma), [va_pred])
        assert err <= 1e-4
        checked += 1


# --------------------------------------------------------------------- au bce

def test_au_bce_hand_values():
    half = torch.tensor([[0.5]], dtype=torch.float64)
    one = torch.ones(1, dtype=torch.float64)
    assert abs(weighted_au_bce(half, torch.tensor([[1]]), one).item() - LN2) < 1e-12
    assert abs(weighted_au_bce(half, torch.tensor([[0]]), one).item() - LN2) < 1e-12


def test_au_bce_clips_extreme_predictions():
    pred = torch.tensor([[0.0]], dtype=torch.float64)
    loss = weighted_au_bce(pred, torch.tensor([[1]]), torch.ones(1, dtype=torch.float64))
    assert abs(loss.item() - NEG_LN_BCE_EPS) < 1e-9

    perfect = torch.tensor([[1.0, 0.0, 1.0]], dtype=torch.float64)
    labels = torch.tensor([[1, 0, 1]])
    assert weighted_au_bce(perfect, labels, torch.ones(1, dtype=torch.float64)).item() < 1e-6


def test_au_bce_zero_confidence_contributes_zero():
    pred = torch.tensor([[0.3, 0.9], [0.5, 0.5]], dtype=torch.float64)
    labels = torch.tensor([[1, 0], [0, 1]])
    alphas = torch.tensor([0.0, 1.0], dtype=torch.float64)
    only_second = weighted_au_bce(pred[1:], labels[1:], alphas[1:])
    both = weighted_au_bce(pred, labels, alphas)
    assert abs(both.item() - only_second.item() / 2.0) < 1e-12  # mean over the full batch


def test_au_bce_matches_reference_on_random_batches():
    rng = np.random.default_rng(67)
    for _ in range(120):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 9))
        pred = rng.uniform(0.0, 1.0, size=(n, m))
        labels = rng.integers(0, 2, size=(n, m))
        alphas = rng.uniform(0.0, 1.0, size=n)
        got = weighted_au_bce(torch.tensor(pred), torch.tensor(labels), torch.tensor(alphas))
        assert abs(got.item() - np_au_bce(pred, labels, alphas)) < 1e-10


def test_au_bce_rejects_non_binary_labels():
    with pytest.raises(ValueError, match="0/1"):
        weighted_au_bce(torch.rand(2, 3), torch.full((2, 3), 2), torch.ones(2))
    with pytest.raises(ValueError, match="shapes differ"):
        weighted_au_bce(torch.rand(2, 3), torch.zeros(2, 4), torch.ones(2))


def test_au_bce_gradients_match_finite_differences():
    rng = np.random.default_rng(71)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        pred = leaf(rng.uniform(0.05, 0.95, size=(n, m)))
        labels = torch.tensor(rng.integers(0, 2, size=(n, m)))
        alphas = leaf(rng.uniform(0.1, 1.0, size=n))
        err = max_fd_error(lambda: weighted_au_bce(pred, labels, alphas), [pred, alphas])
        assert err <= 1e-4


# ----------------------------------------------------------------- ramp pair

def test_ramp_hand_values():
    assert ramp_weights(5, 5) == (1.0, 1.0)
    lam1, lam2 = ramp_weights(0, 5)
    assert abs(lam1 - E_NEG1) < 1e-15
    assert lam2 == 1.0
    lam1, lam2 = ramp_weights(10, 5)  # beta = 2H: exp(-(1 - 1/2)^2) = exp(-1/4)
    assert lam1 == 1.0
    assert abs(lam2 - E_NEG_QUARTER) < 1e-15


def test_ramp_limits_and_continuity():
    _, lam2 = ramp_weights(5e6, 5)
    assert abs(lam2 - E_NEG1) < 1e-5  # decays toward exp(-1)
    for h in (1, 5, 9):
        lam1_lo, lam2_lo = ramp_weights(h - 1e-9, h)
        lam1_hi, lam2_hi = ramp_weights(h + 1e-9, h)
        assert abs(lam1_lo - 1.0) < 1e-8 and lam1_hi == 1.0
        assert lam2_lo == 1.0 and abs(lam2_hi - 1.0) < 1e-8


def test_ramp_monotone_and_bounded():
    for h in (1, 3, 5, 8):
        lam1s, lam2s = zip(*(ramp_weights(b, h) for b in range(0, 50)))
        assert all(b >= a for a, b in zip(lam1s, lam1s[1:]))
        assert all(b <= a for a, b in zip(lam2s, lam2s[1:]))
        for v in (*lam1s, *lam2s):
            assert E_NEG1 - 1e-12 <= v <= 1.0


def test_ramp_rejects_bad_arguments():
    with pytest.raises(ValueError, match=">= 1"):
        ramp_weights(0, 0)
    with pytest.raises(ValueError, match="non-negative"):
        ramp_weights(-1, 5)


# ---------------------------------------------------------------- total loss

def test_total_loss_hand_values():
    assert total_loss(1.0, 1.0, 1.0, beta=5, ramp_epochs=5) == 3.0
    got = total_loss(2.0, 0.0, 4.0, beta=0, ramp_epochs=5)
    assert abs(got - (2.0 * E_NEG1 + 4.0)) < 1e-15
    assert abs(got - 4.735758882342885) < 1e-15


def test_total_loss_matches_ramp_composition():
    rng = np.random.default_rng(73)
    for _ in range(50):
        a, b, c = rng.uniform(0, 3, size=3)
        beta = float(rng.uniform(0, 20))
        h = int(rng.integers(1, 9))
        lam1, lam2 = ramp_weights(beta, h)
        assert abs(total_loss(a, b, c, beta, h) - (lam1 * (a + b) + lam2 * c)) < 1e-12


def test_total_loss_carries_gradients():
    wce = leaf(np.array(1.5))
    wau = leaf(np.array(0.5))
    out = total_loss(wce, torch.zeros(()), wau, beta=0, ramp_epochs=5)
    out.backward()
    assert abs(wce.grad.item() - E_NEG1) < 1e-12
    assert wau.grad.item() == 1.0
