"""Batch and population contrastive losses, square loss, and regularizers.

The batch loss sums two softmax directions: for each aligned pair, the
log-sum-exp of score differences against all images sharing its text, and
against all texts sharing its image, scaled by the temperature. Both
directions are evaluated in the max-subtracted log-sum-exp form so any
score magnitude stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, NonFiniteScoreError
from .scores import score_matrix
from .synthetic import BatchData, GenerativeModel, sample_arrays


@dataclass(frozen=True)
class LossValue:
    """A scalar loss plus optional per-sample decomposition.

    When per-sample terms are present, the value is their exact mean.
    """

    value: float
    per_sample_terms: np.ndarray | None = None


@dataclass(frozen=True)
class PopulationEstimate:
    """Monte Carlo estimate of the population loss over fresh batches."""

    mean: float
    standard_error: float
    n_batches: int


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))
    return out


def clip_loss_terms(S: np.ndarray, tau: float) -> np.ndarray:
    """Per-sample two-direction loss terms from a pairwise score matrix.

    ``S[i, j] = f(x_i, y_j)``. Term i is
    lse_j((S[j,i]-S[i,i])/tau) + lse_j((S[i,j]-S[i,i])/tau).
    """
    Sd = np.diagonal(S, axis1=-2, axis2=-1)
    A = S / tau
    text_anchor = _logsumexp(A, axis=-2) - Sd / tau
    image_anchor = _logsumexp(A, axis=-1) - Sd / tau
    return text_anchor + image_anchor


def clip_batch_loss(model, batch: BatchData, tau: float | None = None) -> LossValue:
    """Two-direction contrastive loss of a batch under the model.

    ``tau`` overrides the model's temperature when given. The value is 0 for
    a single-pair batch and at most 4 M log(B) / tau where M bounds the
    scores on the batch.
    """
    if len(batch) < 1:
        raise ValueError("batch must be nonempty")
    t = model.temperature_tau if tau is None else tau
    if not t > 0:
        raise ValueError("temperature must be positive")
    S = score_matrix(model, batch.X, batch.Y)
    if not np.all(np.isfinite(S)):
        raise NonFiniteScoreError("score matrix contains non-finite entries")
    terms = clip_loss_terms(S, t)
    return LossValue(value=float(np.mean(terms)), per_sample_terms=terms)


def batched_score_matrices(model, Xb: np.ndarray, Yb: np.ndarray) -> np.ndarray:
    """Score matrices for a stack of batches: (n, B, d) -> (n, B, B)."""
    n, B, d1 = Xb.shape
    gx = model.embed_images(Xb.reshape(n * B, d1)).reshape(n, B, -1)
    hy = model.embed_texts(Yb.reshape(n * B, -1)).reshape(n, B, -1)
    kind = model.similarity_kind
    if kind == "cosine":
        gn = np.linalg.norm(gx, axis=-1, keepdims=True)
        hn = np.linalg.norm(hy, axis=-1, keepdims=True)
        if np.any(gn < 1e-300) or np.any(hn < 1e-300):
            raise DegenerateInputError("cosine similarity with zero-norm embedding")
        gx = gx / gn
        hy = hy / hn
        kind = "inner"
    if kind == "inner":
        return np.einsum("nie,nje->nij", gx, hy)
    sq = (
        np.sum(gx**2, axis=-1)[:, :, None]
        + np.sum(hy**2, axis=-1)[:, None, :]
        - 2.0 * np.einsum("nie,nje->nij", gx, hy)
    )
    return -np.sqrt(np.maximum(sq, 0.0))


def population_loss_estimate(
    model,
    gen: GenerativeModel,
    B: int,
    n_batches: int,
    rng: np.random.Generator,
    tau: float | None = None,
) -> PopulationEstimate:
    """Mean contrastive loss over freshly sampled batches, with its
    standard error (sample standard deviation / sqrt(n_batches))."""
    if n_batches < 2:
        raise ValueError("need at least two batches for a standard error")
    t = model.temperature_tau if tau is None else tau
    X, Y, _, _, _ = sample_arrays(gen, n_batches * B, rng)
    Xb = X.reshape(n_batches, B, -1)
    Yb = Y.reshape(n_batches, B, -1)
    S = batched_score_matrices(model, Xb, Yb)
    if not np.all(np.isfinite(S)):
        raise NonFiniteScoreError("score matrix contains non-finite entries")
    per_batch = np.mean(clip_loss_terms(S, t), axis=-1)
    mean = float(np.mean(per_batch))
    se = float(np.std(per_batch, ddof=1) / np.sqrt(n_batches))
    return PopulationEstimate(mean=mean, standard_error=se, n_batches=n_batches)


def square_loss(encoder, batch: BatchData) -> LossValue:
    """Mean squared distance between the encoded image and its text."""
    if hasattr(encoder, "batch"):
        G = encoder.batch(batch.X)
    else:
        G = np.stack([encoder(x) for x in batch.X])
    if G.shape != batch.Y.shape:
        raise ValueError(
            f"encoder output shape {G.shape} does not match text shape {batch.Y.shape}"
        )
    terms = np.sum((G - batch.Y) ** 2, axis=1)
    return LossValue(value=float(np.mean(terms)), per_sample_terms=terms)


def positive_pair_regularizer(model, batch: BatchData) -> LossValue:
    """Negative mean similarity of the aligned pairs.

    For unit-norm embeddings under the inner similarity this equals half the
    mean squared embedding distance minus one, so minimizing it pulls
    aligned embeddings together.
    """
    S = score_matrix(model, batch.X, batch.Y)
    terms = -np.diagonal(S)
    return LossValue(value=float(np.mean(terms)), per_sample_terms=terms)


def negative_pair_regularizer(
    model, batch: BatchData, lambda_: float | None = None
) -> LossValue:
    """Scaled sum of all off-diagonal (presumed negative) pair scores.

    Defaults to lambda = 0.1 / (B^2 - B), i.e. 0.1 times the mean
    off-diagonal score. Off-diagonal pairs within an unlabeled batch can
    still share a latent, which is why this variant is an ablation rather
    than the default regularizer.
    """
    B = len(batch)
    if B < 2:
        raise DegenerateInputError("negative-pair regularizer needs B >= 2")
    if lambda_ is None:
        lambda_ = 0.1 / (B * B - B)
    S = score_matrix(model, batch.X, batch.Y)
    off_sum = float(S.sum() - np.trace(S))
    return LossValue(value=lambda_ * off_sum, per_sample_terms=None)


def oracle_contrast_regularizer(model, batch: BatchData) -> LossValue:
    """Latent-labelled two-sided regularizer: mean score over true negative
    pairs minus mean score over true positive pairs.

    Diagnostic only; it needs the latent labels that real data do not carry.
    """
    S = score_matrix(model, batch.X, batch.Y)
    same = batch.latents[:, None] == batch.latents[None, :]
    if not np.any(~same):
        raise DegenerateInputError("batch has no cross-latent pair")
    value = float(np.mean(S[~same]) - np.mean(S[same]))
    return LossValue(value=value, per_sample_terms=None)


REG_KINDS = ("none", "positive", "negative")


def regularized_loss(
    model, batch: BatchData, lambda_: float = 0.0, reg_kind: str = "none"
) -> LossValue:
    """Contrastive loss plus lambda times the selected regularizer.

    The negative kind uses the mean off-diagonal score as its unit, so a
    single lambda has the same scale for both kinds.
    """
    if lambda_ < 0:
        raise ValueError("lambda must be nonnegative")
    if reg_kind not in REG_KINDS:
        raise ValueError(f"unknown regularizer kind {reg_kind!r}")
    base = clip_batch_loss(model, batch)
    if reg_kind == "none" or lambda_ == 0.0:
        return base
    if reg_kind == "positive":
        reg = positive_pair_regularizer(model, batch)
        terms = base.per_sample_terms + lambda_ * reg.per_sample_terms
        return LossValue(value=float(np.mean(terms)), per_sample_terms=terms)
    B = len(batch)
    reg = negative_pair_regularizer(model, batch, lambda_=lambda_ / (B * B - B))
    return LossValue(value=base.value + reg.value, per_sample_terms=None)
