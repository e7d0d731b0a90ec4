"""Score functions over image-text pairs.

A score model embeds each side into a common space and compares the
embeddings with one of three similarities:

    inner        <g(x), h(y)>
    cosine       <g(x)/|g(x)|, h(y)/|h(y)|>
    negative_l2  -|g(x) - h(y)|_2

The locked-tuning model trains only the image projection W (image embedding
W @ x) while the text side is the identity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateInputError, RankDeficiencyError
from .synthetic import RANK_TOL, GenerativeModel

SIMILARITY_KINDS = ("inner", "cosine", "negative_l2")

_NORM_FLOOR = 1e-300


def _check_similarity(kind: str) -> None:
    if kind not in SIMILARITY_KINDS:
        raise ValueError(f"unknown similarity kind {kind!r}")


@dataclass(frozen=True)
class LinearScoreModel:
    """Image projection W with identity text embedding."""

    W: np.ndarray
    temperature_tau: float = 0.07
    similarity_kind: str = "inner"

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        if self.W.ndim != 2:
            raise ValueError("W must be a matrix")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("W must be finite-valued")
        if not self.temperature_tau > 0:
            raise ValueError("temperature must be positive")
        _check_similarity(self.similarity_kind)

    def embed_images(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.W.T

    def embed_texts(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y)

    def with_weights(self, W: np.ndarray) -> "LinearScoreModel":
        return LinearScoreModel(
            W=W, temperature_tau=self.temperature_tau, similarity_kind=self.similarity_kind
        )


@dataclass(frozen=True)
class AffineEncoder:
    """x -> weight @ x + offset."""

    weight: np.ndarray
    offset: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.weight @ np.asarray(x) + self.offset

    def batch(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weight.T + self.offset


@dataclass(frozen=True)
class EncoderScoreModel:
    """Score model built from an arbitrary image encoder; text side identity."""

    encoder: Callable
    temperature_tau: float = 0.07
    similarity_kind: str = "inner"

    def __post_init__(self):
        if not self.temperature_tau > 0:
            raise ValueError("temperature must be positive")
        _check_similarity(self.similarity_kind)

    def embed_images(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if hasattr(self.encoder, "batch"):
            return self.encoder.batch(X)
        return np.stack([self.encoder(x) for x in X])

    def embed_texts(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y)


@dataclass(frozen=True)
class FunctionScoreModel:
    """Score model from explicit embedding maps; used for planted diagnostics."""

    image_map: Callable[[np.ndarray], np.ndarray]
    text_map: Callable[[np.ndarray], np.ndarray]
    temperature_tau: float = 0.07
    similarity_kind: str = "inner"

    def embed_images(self, X: np.ndarray) -> np.ndarray:
        return self.image_map(np.asarray(X))

    def embed_texts(self, Y: np.ndarray) -> np.ndarray:
        return self.text_map(np.asarray(Y))


def _unit_rows(E: np.ndarray, side: str) -> np.ndarray:
    norms = np.linalg.norm(E, axis=-1, keepdims=True)
    if np.any(norms < _NORM_FLOOR):
        raise DegenerateInputError(
            f"cosine similarity is undefined for zero-norm {side} embeddings"
        )
    return E / norms


def score_matrix(model, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All pairwise scores; entry [i, j] is f(x_i, y_j)."""
    gx = model.embed_images(np.atleast_2d(X))
    hy = model.embed_texts(np.atleast_2d(Y))
    kind = model.similarity_kind
    if kind == "inner":
        return gx @ hy.T
    if kind == "cosine":
        return _unit_rows(gx, "image") @ _unit_rows(hy, "text").T
    # negative_l2
    sq = (
        np.sum(gx**2, axis=1)[:, None]
        + np.sum(hy**2, axis=1)[None, :]
        - 2.0 * gx @ hy.T
    )
    return -np.sqrt(np.maximum(sq, 0.0))


def score(model, x: np.ndarray, y: np.ndarray) -> float:
    """Similarity of one image-text pair under the model's score kind."""
    return float(score_matrix(model, x[None, :], y[None, :])[0, 0])


def diagonal_scores(model, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """f(x_i, y_i) for the aligned pairs only."""
    gx = model.embed_images(np.atleast_2d(X))
    hy = model.embed_texts(np.atleast_2d(Y))
    kind = model.similarity_kind
    if kind == "inner":
        return np.sum(gx * hy, axis=1)
    if kind == "cosine":
        return np.sum(_unit_rows(gx, "image") * _unit_rows(hy, "text"), axis=1)
    return -np.linalg.norm(gx - hy, axis=1)


# ---------------------------------------------------------------------------
# closed-form constructions
# ---------------------------------------------------------------------------


def _pinv_checked(M: np.ndarray, name: str) -> np.ndarray:
    if M.shape[1] == 0:
        return np.zeros((0, M.shape[0]))
    smin = np.linalg.svd(M, compute_uv=False)[-1]
    if smin < RANK_TOL:
        raise RankDeficiencyError(
            f"{name} is rank deficient (smallest singular value {smin:.3e})"
        )
    return np.linalg.pinv(M)


def completeness_weights(model: GenerativeModel) -> np.ndarray:
    """The weight matrix whose score equals the latent inner product.

    Built from the pseudo-inverses of both dictionaries around the rank-K1
    block projection, so that for every pair of samples the score is exactly
    <z, z'>: 1 on matched latents and at most 1 - gamma across classes,
    independent of the unique features.
    """
    Gp = _pinv_checked(model.G, "G")
    Hp = _pinv_checked(model.H, "H")
    K1 = model.K1
    P = np.zeros((K1 + model.K3, K1 + model.K2))
    P[:K1, :K1] = np.eye(K1)
    return Hp.T @ P @ Gp


def shared_projection(model: GenerativeModel) -> np.ndarray:
    """The block projection P that H^T W* G must reproduce."""
    K1 = model.K1
    P = np.zeros((K1 + model.K3, K1 + model.K2))
    P[:K1, :K1] = np.eye(K1)
    return P


def bayes_square_encoder(model: GenerativeModel) -> AffineEncoder:
    """Minimizer of E|g(x) - y|^2 over measurable g.

    Recovers [z; xi] from x through the pseudo-inverse of G, keeps the
    latent part, and appends the conditional mean of the text unique
    feature: g(x) = H @ [z; E[zeta | z]].
    """
    Gp = _pinv_checked(model.G, "G")
    K1 = model.K1
    H1 = model.H[:, :K1]
    H2 = model.H[:, K1:]
    zeta_mean = model.zeta_sampler.mean()
    weight = H1 @ Gp[:K1, :]
    offset = H2 @ zeta_mean if model.K3 else np.zeros(model.d2)
    return AffineEncoder(weight=weight, offset=offset)


# ---------------------------------------------------------------------------
# weight matrix persistence
# ---------------------------------------------------------------------------

_WEIGHT_MAGIC = b"CLWB0001"


def save_weights(path, W: np.ndarray) -> None:
    """Binary weight format: 16-byte header (8-byte magic, uint32 rows,
    uint32 cols, little-endian) followed by row-major float64 entries."""
    W = np.ascontiguousarray(np.asarray(W, dtype="<f8"))
    with open(path, "wb") as f:
        f.write(_WEIGHT_MAGIC)
        f.write(struct.pack("<II", W.shape[0], W.shape[1]))
        f.write(W.tobytes(order="C"))


def load_weights(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _WEIGHT_MAGIC:
            raise ValueError(f"bad weight file magic {magic!r}")
        rows, cols = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError("weight file payload does not match its header")
    return data.reshape(rows, cols).copy()


def weights_to_csv(path, W: np.ndarray) -> None:
    W = np.asarray(W, dtype=float)
    with open(path, "w") as f:
        for row in W:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def weights_from_csv(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=float)
