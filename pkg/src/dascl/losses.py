"""Training objective: cross-entropy plus a cross-domain supervised
contrastive term.

The contrastive loss treats every same-label pair in the batch as positive,
no matter which domain or augmented view the samples come from. Anchors
without positives are dropped from both the inner sum and the outer average.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class SupConConfig:
    temperature: float = 0.1
    weight: float = 1.0  # contrastive weight in the combined objective

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.weight < 0:
            raise ValueError("contrastive weight must be >= 0")


def cross_entropy(logits: T.Tensor, labels) -> T.Tensor:
    """Mean negative log-likelihood of the true class."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError(f"labels must lie in [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = T.mul(T.log_softmax(logits), T.Tensor(onehot))
    return T.scale(picked.sum(), -1.0 / n)


def supcon_loss(z: T.Tensor, labels, temperature: float) -> T.Tensor:
    """Supervised contrastive loss over unit-norm embeddings.

    For each anchor i with positive set P(i) = {same-label rows != i}:
        -1/|P(i)| * sum_{p in P(i)} log( exp(z_i.z_p/t) / sum_{a != i} exp(z_i.z_a/t) )
    averaged over anchors with non-empty P(i); 0 when no anchor qualifies.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    labels = np.asarray(labels, dtype=np.int64)
    n = z.data.shape[0]
    if n < 2:
        raise ValueError("supcon_loss needs at least 2 samples")
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("supcon_loss expects unit-norm rows")

    same = labels[:, None] == labels[None, :]
    offdiag = ~np.eye(n, dtype=bool)
    pos_mask = (same & offdiag).astype(np.float64)
    pos_counts = pos_mask.sum(axis=1)
    valid = pos_counts > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        return T.Tensor(np.asarray(0.0))

    sim = T.scale(T.matmul(z, z.transpose()), 1.0 / temperature)

    # per-anchor max over a != i, treated as a constant shift for stability
    masked = np.where(offdiag, sim.data, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    shifted = T.sub(sim, T.Tensor(np.broadcast_to(row_max, (n, n)).copy()))
    expd = T.mul(shifted.exp(), T.Tensor(offdiag.astype(np.float64)))
    denom = T.matmul(expd, T.Tensor(np.ones((n, 1))))
    log_denom = T.add(denom.log(), T.Tensor(row_max))  # [n, 1]

    anchor_w = np.where(valid, 1.0, 0.0)[:, None] / n_valid
    denom_term = T.mul(log_denom, T.Tensor(anchor_w)).sum()
    pair_w = pos_mask / (np.maximum(pos_counts, 1.0)[:, None] * n_valid)
    pos_term = T.mul(sim, T.Tensor(pair_w)).sum()
    return T.sub(denom_term, pos_term)


def combined_loss(logits: T.Tensor, z, labels, cfg: SupConConfig) -> T.Tensor:
    """cross_entropy + weight * supcon_loss (contrastive term skipped at weight 0)."""
    ce = cross_entropy(logits, labels)
    if cfg.weight == 0.0:
        return ce
    return T.add(ce, T.scale(supcon_loss(z, labels, cfg.temperature), cfg.weight))
