import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dascl import tensor as T
from dascl.losses import SupConConfig, combined_loss, cross_entropy, supcon_loss

from helpers import fd_grad, grad_rel_err


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def supcon_oracle(z, labels, tau):
    """Independent double-loop reference; no vectorisation, no shared code."""
    n = len(labels)
    total = 0.0
    valid = 0
    for i in range(n):
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        valid += 1
        denom = 0.0
        for a in range(n):
            if a != i:
                denom += math.exp(float(np.dot(z[i], z[a])) / tau)
        inner = 0.0
        for p in pos:
            inner += math.log(math.exp(float(np.dot(z[i], z[p])) / tau) / denom)
        total += -inner / len(pos)
    return total / valid if valid else 0.0


def cross_entropy_oracle(logits, labels):
    total = 0.0
    for i, lab in enumerate(labels):
        row = logits[i]
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += -(row[lab] - lse)
    return total / len(labels)


# -- cross entropy -----------------------------------------------------------


def test_ce_uniform_logits_is_log_c():
    for c in (2, 3, 7):
        loss = cross_entropy(T.Tensor(np.zeros((4, c))), [0, 1, 0, c - 1])
        assert float(loss.data) == pytest.approx(math.log(c), abs=1e-12)


def test_ce_saturated_true_class():
    logits = np.zeros((2, 3))
    logits[0, 1] = 30.0
    logits[1, 2] = 30.0
    loss = cross_entropy(T.Tensor(logits), [1, 2])
    assert float(loss.data) < 1e-9


def test_ce_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(4, 3), scale=2.0)
    labels = [2, 0, 1, 1]
    loss = cross_entropy(T.Tensor(logits), labels)
    assert float(loss.data) == pytest.approx(
        cross_entropy_oracle(logits, labels), abs=1e-10
    )


def test_ce_label_out_of_range():
    with pytest.raises(IndexError):
        cross_entropy(T.Tensor(np.zeros((2, 3))), [0, 3])


def test_ce_gradient_matches_fd():
    rng = np.random.default_rng(12)
    logits0 = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    tape = T.Tape()
    x = tape.leaf(logits0.copy())
    g = T.backward(cross_entropy(x, labels))[x.node_id].data
    fd = fd_grad(lambda v: cross_entropy(T.Tensor(v), labels).data, logits0)
    assert grad_rel_err(g, fd) < 1e-4


# -- supervised contrastive --------------------------------------------------


def test_supcon_two_same_label_is_zero():
    rng = np.random.default_rng(13)
    z = unit_rows(rng, 2, 4)
    loss = supcon_loss(T.Tensor(z), [3, 3], temperature=0.5)
    assert float(loss.data) == 0.0


def test_supcon_no_positive_batch_is_zero():
    rng = np.random.default_rng(14)
    z = unit_rows(rng, 2, 4)
    loss = supcon_loss(T.Tensor(z), [0, 1], temperature=0.5)
    assert float(loss.data) == 0.0


def test_supcon_matches_double_loop_oracle():
    rng = np.random.default_rng(15)
    z = unit_rows(rng, 6, 4)
    labels = [0, 0, 1, 1, 2, 2]
    got = float(supcon_loss(T.Tensor(z), labels, temperature=0.5).data)
    assert got == pytest.approx(supcon_oracle(z, labels, 0.5), abs=1e-8)


def test_supcon_gradient_matches_fd():
    rng = np.random.default_rng(16)
    for n in range(3, 9):
        d = int(rng.integers(2, 6))
        z0 = unit_rows(rng, n, d)
        labels = rng.integers(0, 3, size=n)
        if not np.any(labels[:, None] == labels[None, :] & ~np.eye(n, dtype=bool)):
            labels[1] = labels[0]
        tape = T.Tape()
        z = tape.leaf(z0.copy())
        # normalize inside the graph so FD perturbations stay on-contract
        loss = supcon_loss(T.l2_normalize_rows(z), labels, temperature=0.5)
        g = T.backward(loss)[z.node_id].data
        fd = fd_grad(
            lambda v: supcon_loss(
                T.l2_normalize_rows(T.Tensor(v)), labels, temperature=0.5
            ).data,
            z0,
        )
        assert grad_rel_err(g, fd) < 1e-4


def test_supcon_contract_errors():
    rng = np.random.default_rng(17)
    with pytest.raises(ValueError):
        supcon_loss(T.Tensor(unit_rows(rng, 1, 3)), [0], temperature=0.5)
    with pytest.raises(ValueError):
        supcon_loss(T.Tensor(2.0 * unit_rows(rng, 3, 3)), [0, 0, 1], temperature=0.5)
    with pytest.raises(ValueError):
        supcon_loss(T.Tensor(unit_rows(rng, 3, 3)), [0, 0, 1], temperature=0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_supcon_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    z = unit_rows(rng, n, 4)
    labels = rng.integers(0, 3, size=n)
    perm = rng.permutation(n)
    a = float(supcon_loss(T.Tensor(z), labels, temperature=0.5).data)
    b = float(supcon_loss(T.Tensor(z[perm]), labels[perm], temperature=0.5).data)
    assert b == pytest.approx(a, abs=1e-10)


def test_supcon_orthogonal_invariant():
    rng = np.random.default_rng(18)
    for _ in range(10):
        z = unit_rows(rng, 6, 5)
        labels = rng.integers(0, 3, size=6)
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        a = float(supcon_loss(T.Tensor(z), labels, temperature=0.5).data)
        b = float(supcon_loss(T.Tensor(z @ q), labels, temperature=0.5).data)
        assert b == pytest.approx(a, abs=1e-8)


def test_supcon_temperature_sensitivity():
    rng = np.random.default_rng(19)
    z = unit_rows(rng, 4, 3)
    labels = [0, 0, 1, 1]  # at least one negative per anchor
    a = float(supcon_loss(T.Tensor(z), labels, temperature=0.5).data)
    b = float(supcon_loss(T.Tensor(z), labels, temperature=0.1).data)
    assert abs(a - b) > 0.0


# -- combined ----------------------------------------------------------------


def test_combined_reduces_to_ce_at_zero_weight():
    rng = np.random.default_rng(20)
    logits = rng.normal(size=(4, 3))
    z = unit_rows(rng, 4, 4)
    labels = [0, 1, 2, 0]
    cfg = SupConConfig(temperature=0.5, weight=0.0)
    total = combined_loss(T.Tensor(logits), T.Tensor(z), labels, cfg)
    ce = cross_entropy(T.Tensor(logits), labels)
    assert float(total.data) == float(ce.data)


def test_combined_same_label_pair_equals_ce():
    rng = np.random.default_rng(21)
    logits = rng.normal(size=(2, 3))
    z = unit_rows(rng, 2, 4)
    cfg = SupConConfig(temperature=0.5, weight=1.0)
    total = combined_loss(T.Tensor(logits), T.Tensor(z), [1, 1], cfg)
    ce = cross_entropy(T.Tensor(logits), [1, 1])
    assert float(total.data) == pytest.approx(float(ce.data), abs=1e-15)


def test_combined_is_sum_of_terms():
    rng = np.random.default_rng(22)
    logits = rng.normal(size=(6, 3))
    z = unit_rows(rng, 6, 4)
    labels = [0, 0, 1, 1, 2, 2]
    cfg = SupConConfig(temperature=0.2, weight=0.7)
    total = float(combined_loss(T.Tensor(logits), T.Tensor(z), labels, cfg).data)
    ce = float(cross_entropy(T.Tensor(logits), labels).data)
    sc = float(supcon_loss(T.Tensor(z), labels, cfg.temperature).data)
    assert total == pytest.approx(ce + cfg.weight * sc, abs=1e-12)


def test_supcon_config_validation():
    with pytest.raises(ValueError):
        SupConConfig(temperature=0.0)
    with pytest.raises(ValueError):
        SupConConfig(weight=-0.1)
