"""Synthetic image-text pair generator with a shared discrete latent.

An image-text pair is assembled from a shared latent vector ``z`` (one of K
dictionary vectors) and modality-specific unique features ``xi`` and
``zeta`` that are independent of each other given the latent:

    x = G @ [z; xi]        y = H @ [z; zeta]

``G`` and ``H`` are full-column-rank dictionaries, so the latent and unique
parts are exactly recoverable from every sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RankDeficiencyError

RANK_TOL = 1e-10

SAMPLER_KINDS = ("zero", "ball", "discrete")


# ---------------------------------------------------------------------------
# latent dictionary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatentDictionary:
    """K unit-norm latent vectors with a controlled pairwise margin.

    ``vectors`` has shape (K, dim). Every off-diagonal inner product equals
    ``1 - margin_gamma`` exactly, so the margin (1 minus the worst cross-class
    inner product) is ``margin_gamma`` by construction.
    """

    vectors: np.ndarray
    probs: np.ndarray
    margin_gamma: float

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "probs", p)
        if V.ndim != 2 or V.shape[0] < 2:
            raise ValueError("need at least two latent vectors")
        if p.shape != (V.shape[0],):
            raise ValueError("probs length must match number of vectors")
        norms = np.linalg.norm(V, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("latent vectors must be unit norm")
        gram = V @ V.T
        off = gram[~np.eye(V.shape[0], dtype=bool)]
        if abs(np.max(off) - (1.0 - self.margin_gamma)) > 1e-12:
            raise ValueError("max off-diagonal inner product must equal 1 - margin_gamma")
        if np.any(p <= 0):
            raise ValueError("all class probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("class probabilities must sum to 1")

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_latent_dictionary(
    K: int,
    K1: int,
    gamma: float,
    probs: Sequence[float] | None = None,
    seed: int = 0,
) -> LatentDictionary:
    """Construct K unit vectors in R^K1 whose pairwise inner products all
    equal ``1 - gamma``.

    Each vector is ``sqrt(1-gamma) * u + sqrt(gamma) * e_k`` where ``u`` is a
    seeded unit vector orthogonal to the K coordinate axes used by the
    ``e_k``. This pins the margin exactly for any gamma in (0, 1].
    """
    if K < 2:
        raise ValueError("need K >= 2 latent classes")
    if K1 < K + 1:
        raise ValueError(
            f"dimension too small: K1 must be at least K + 1 = {K + 1}, got {K1}"
        )
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"invalid margin: gamma must lie in (0, 1], got {gamma}")
    if probs is None:
        p = np.full(K, 1.0 / K)
    else:
        p = np.asarray(probs, dtype=float)
        if p.shape != (K,):
            raise ValueError(f"probs must have length K = {K}")
        if np.any(p <= 0):
            raise ValueError("all class probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("class probabilities must sum to 1")
        p = p / p.sum()

    rng = np.random.default_rng(np.random.SeedSequence([seed, K, K1]))
    u = np.zeros(K1)
    tail = rng.standard_normal(K1 - K)
    u[K:] = tail / np.linalg.norm(tail)

    V = np.sqrt(1.0 - gamma) * u[None, :] + np.sqrt(gamma) * np.eye(K, K1)
    # renormalize away the last few ulps so the norm invariant is airtight
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return LatentDictionary(vectors=V, probs=p, margin_gamma=gamma)


# ---------------------------------------------------------------------------
# unique-feature samplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniqueFeatureSampler:
    """Sampler for a modality-specific feature bounded in norm by ``radius``.

    kind:
        "zero"     -- always the zero vector
        "ball"     -- uniform in the Euclidean ball of the given radius
        "discrete" -- one of a finite support of (vector, probability) pairs
    """

    kind: str
    dimension: int
    radius: float = 0.0
    support: tuple[tuple[np.ndarray, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.dimension < 0:
            raise ValueError("dimension must be nonnegative")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.kind == "discrete":
            if not self.support:
                raise ValueError("discrete sampler needs a nonempty support")
            vecs = tuple(np.asarray(v, dtype=float) for v, _ in self.support)
            ps = np.array([p for _, p in self.support], dtype=float)
            for v in vecs:
                if v.shape != (self.dimension,):
                    raise ValueError("support vectors must match the sampler dimension")
                if np.linalg.norm(v) > self.radius + 1e-12:
                    raise ValueError("support vector norm exceeds the sampler radius")
            if np.any(ps < 0) or abs(ps.sum() - 1.0) > 1e-9:
                raise ValueError("support probabilities must be a distribution")
            object.__setattr__(
                self, "support", tuple(zip(vecs, (ps / ps.sum()).tolist()))
            )
        elif self.support is not None:
            raise ValueError("support is only meaningful for the discrete kind")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` feature vectors, shape (n, dimension)."""
        d = self.dimension
        if self.kind == "zero" or d == 0:
            return np.zeros((n, d))
        if self.kind == "ball":
            if self.radius == 0.0:
                return np.zeros((n, d))
            direction = rng.standard_normal((n, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            r = self.radius * rng.random(n) ** (1.0 / d)
            return direction * r[:, None]
        # discrete
        vecs = np.stack([v for v, _ in self.support])
        ps = np.array([p for _, p in self.support])
        idx = rng.choice(len(ps), size=n, p=ps)
        return vecs[idx]

    def mean(self) -> np.ndarray:
        """Expected feature vector (conditional mean given any latent; the
        samplers here do not couple to the latent)."""
        if self.kind == "discrete":
            return sum(p * v for v, p in self.support)
        return np.zeros(self.dimension)


# ---------------------------------------------------------------------------
# generative model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerativeModel:
    """Full generative description of the paired-sample distribution."""

    latent: LatentDictionary
    G: np.ndarray
    H: np.ndarray
    xi_sampler: UniqueFeatureSampler
    zeta_sampler: UniqueFeatureSampler

    def __post_init__(self):
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        K1 = self.latent.dim
        if self.G.shape[1] != K1 + self.xi_sampler.dimension:
            raise ValueError("G column count must equal K1 + K2")
        if self.H.shape[1] != K1 + self.zeta_sampler.dimension:
            raise ValueError("H column count must equal K1 + K3")
        for name, M in (("G", self.G), ("H", self.H)):
            if M.shape[0] < M.shape[1]:
                raise RankDeficiencyError(f"{name} has more columns than rows")
            smin = np.linalg.svd(M, compute_uv=False)[-1] if M.shape[1] else np.inf
            if smin <= RANK_TOL:
                raise RankDeficiencyError(
                    f"{name} is rank deficient (smallest singular value {smin:.3e})"
                )

    @property
    def K(self) -> int:
        return self.latent.n_classes

    @property
    def K1(self) -> int:
        return self.latent.dim

    @property
    def K2(self) -> int:
        return self.xi_sampler.dimension

    @property
    def K3(self) -> int:
        return self.zeta_sampler.dimension

    @property
    def d1(self) -> int:
        return self.G.shape[0]

    @property
    def d2(self) -> int:
        return self.H.shape[0]

    @property
    def feature_radius(self) -> float:
        """Upper bound R on the norm of either unique feature."""
        return max(self.xi_sampler.radius, self.zeta_sampler.radius)


@dataclass(frozen=True)
class PairedSample:
    """One (image, text) draw together with its generating variables."""

    x: np.ndarray
    y: np.ndarray
    latent_index: int
    xi: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True)
class BatchData:
    """An ordered batch of independently drawn pairs."""

    samples: tuple[PairedSample, ...]
    batch_size_B: int = 0
    X: np.ndarray = field(repr=False, default=None)
    Y: np.ndarray = field(repr=False, default=None)
    latents: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        B = len(self.samples)
        if B == 0:
            raise ValueError("batch must be nonempty")
        object.__setattr__(self, "batch_size_B", B)
        if self.X is None:
            object.__setattr__(self, "X", np.stack([s.x for s in self.samples]))
            object.__setattr__(self, "Y", np.stack([s.y for s in self.samples]))
            object.__setattr__(
                self, "latents", np.array([s.latent_index for s in self.samples])
            )

    def __len__(self) -> int:
        return self.batch_size_B


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_arrays(
    model: GenerativeModel, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized draw of ``n`` pairs: (X, Y, latents, xi, zeta).

    Latents are drawn first, then xi, then zeta, each as one block, so a
    given generator state maps to a fixed sample set regardless of caller.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    lat = rng.choice(model.K, size=n, p=model.latent.probs)
    xi = model.xi_sampler.sample(rng, n)
    zeta = model.zeta_sampler.sample(rng, n)
    Z = model.latent.vectors[lat]
    X = np.concatenate([Z, xi], axis=1) @ model.G.T
    Y = np.concatenate([Z, zeta], axis=1) @ model.H.T
    return X, Y, lat, xi, zeta


def sample_pair(model: GenerativeModel, rng: np.random.Generator) -> PairedSample:
    """Draw one pair: latent index per class probabilities, then the two
    unique features independently given the latent."""
    X, Y, lat, xi, zeta = sample_arrays(model, 1, rng)
    return PairedSample(x=X[0], y=Y[0], latent_index=int(lat[0]), xi=xi[0], zeta=zeta[0])


def sample_batch(model: GenerativeModel, B: int, rng: np.random.Generator) -> BatchData:
    """Draw ``B`` independent pairs, order preserved."""
    X, Y, lat, xi, zeta = sample_arrays(model, B, rng)
    samples = tuple(
        PairedSample(x=X[i], y=Y[i], latent_index=int(lat[i]), xi=xi[i], zeta=zeta[i])
        for i in range(B)
    )
    return BatchData(samples=samples, X=X, Y=Y, latents=lat)


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    """Plain-data recipe for a GenerativeModel; serializes to JSON."""

    K: int = 8
    K1: int = 9
    K2: int = 4
    K3: int = 4
    d1: int = 16
    d2: int = 16
    gamma: float = 0.5
    probs: tuple[float, ...] | None = None
    xi_kind: str = "ball"
    zeta_kind: str = "ball"
    radius: float = 0.25
    zeta_support: tuple[tuple[tuple[float, ...], float], ...] | None = None
    mix: bool = False
    seed: int = 0


def _stacked_dictionary(
    rows: int, cols: int, mix: bool, rng: np.random.Generator
) -> np.ndarray:
    """Identity block stacked into ``rows`` ambient dimensions, optionally
    followed by a seeded orthogonal mixing rotation (condition number 1)."""
    if rows < cols:
        raise ValueError("ambient dimension must be at least the column count")
    M = np.eye(rows, cols)
    if mix and rows > 0:
        A = rng.standard_normal((rows, rows))
        Q, R = np.linalg.qr(A)
        Q *= np.sign(np.diag(R))[None, :]
        M = Q @ M
    return M


def _make_sampler(kind: str, dim: int, radius: float, support=None) -> UniqueFeatureSampler:
    if kind == "discrete":
        if not support:
            raise ValueError("discrete sampler kind requires a support")
        sup = tuple((np.asarray(v, dtype=float), float(p)) for v, p in support)
        max_norm = max(np.linalg.norm(v) for v, _ in sup)
        return UniqueFeatureSampler(
            kind="discrete", dimension=dim, radius=max(radius, max_norm), support=sup
        )
    return UniqueFeatureSampler(kind=kind, dimension=dim, radius=radius if kind == "ball" else 0.0)


def build_generative_model(config: ModelConfig) -> GenerativeModel:
    """Materialize a GenerativeModel from its config.

    G and H default to identity-block stacking; with ``mix=True`` a seeded
    orthogonal rotation is applied on each side so nothing downstream can
    rely on axis alignment.
    """
    latent = build_latent_dictionary(
        config.K, config.K1, config.gamma, probs=config.probs, seed=config.seed
    )
    rng_g = np.random.default_rng(np.random.SeedSequence([config.seed, _PURPOSE_G]))
    rng_h = np.random.default_rng(np.random.SeedSequence([config.seed, _PURPOSE_H]))
    G = _stacked_dictionary(config.d1, config.K1 + config.K2, config.mix, rng_g)
    H = _stacked_dictionary(config.d2, config.K1 + config.K3, config.mix, rng_h)
    xi = _make_sampler(config.xi_kind, config.K2, config.radius)
    zeta = _make_sampler(config.zeta_kind, config.K3, config.radius, config.zeta_support)
    return GenerativeModel(latent=latent, G=G, H=H, xi_sampler=xi, zeta_sampler=zeta)


_PURPOSE_G = int.from_bytes(b"dict-G", "little")
_PURPOSE_H = int.from_bytes(b"dict-H", "little")


def prompt_confound_model(K: int, gamma: float, seed: int = 0) -> GenerativeModel:
    """Model on which square-loss encoders provably fail zero-shot transfer.

    The text unique feature takes one of two basis values with probabilities
    1/3 and 2/3, H stacks [z; zeta] onto the leading coordinates of y, and
    the margin is small enough (gamma < 1/3) that a prompt's unique feature
    can outweigh a cross-class latent gap.
    """
    if not (0.0 < gamma < 1.0 / 3.0):
        raise ValueError(
            f"invalid margin: gamma must lie in (0, 1/3) for this construction, got {gamma}"
        )
    K1 = K + 1
    K3 = 2
    e1 = np.zeros(K3)
    e1[0] = 1.0
    e2 = np.zeros(K3)
    e2[1] = 1.0
    config = ModelConfig(
        K=K,
        K1=K1,
        K2=0,
        K3=K3,
        d1=K1,
        d2=K1 + K3 + 2,
        gamma=gamma,
        probs=None,
        xi_kind="zero",
        zeta_kind="discrete",
        radius=1.0,
        zeta_support=((tuple(e1), 1.0 / 3.0), (tuple(e2), 2.0 / 3.0)),
        mix=False,
        seed=seed,
    )
    return build_generative_model(config)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_config_to_dict(config: ModelConfig) -> dict:
    d = {
        "K": config.K,
        "K1": config.K1,
        "K2": config.K2,
        "K3": config.K3,
        "d1": config.d1,
        "d2": config.d2,
        "gamma": config.gamma,
        "probs": None if config.probs is None else list(config.probs),
        "xi_kind": config.xi_kind,
        "zeta_kind": config.zeta_kind,
        "radius": config.radius,
        "zeta_support": None
        if config.zeta_support is None
        else [[list(v), p] for v, p in config.zeta_support],
        "mix": config.mix,
        "seed": config.seed,
    }
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    sup = d.get("zeta_support")
    return ModelConfig(
        K=int(d["K"]),
        K1=int(d["K1"]),
        K2=int(d["K2"]),
        K3=int(d["K3"]),
        d1=int(d["d1"]),
        d2=int(d["d2"]),
        gamma=float(d["gamma"]),
        probs=None if d.get("probs") is None else tuple(float(p) for p in d["probs"]),
        xi_kind=d.get("xi_kind", "zero"),
        zeta_kind=d.get("zeta_kind", "zero"),
        radius=float(d.get("radius", 0.0)),
        zeta_support=None
        if sup is None
        else tuple((tuple(float(c) for c in v), float(p)) for v, p in sup),
        mix=bool(d.get("mix", False)),
        seed=int(d.get("seed", 0)),
    )


def save_model_config(config: ModelConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(model_config_to_dict(config), f, indent=2, sort_keys=True)
        f.write("\n")


def load_model_config(path) -> ModelConfig:
    with open(path) as f:
        return model_config_from_dict(json.load(f))


def dump_samples_csv(batch: BatchData, path) -> None:
    """Write a batch as CSV: sample_id, latent_index, x_0.., y_0..."""
    d1 = batch.X.shape[1]
    d2 = batch.Y.shape[1]
    header = (
        ["sample_id", "latent_index"]
        + [f"x_{j}" for j in range(d1)]
        + [f"y_{j}" for j in range(d2)]
    )
    lines = [",".join(header)]
    for i in range(len(batch)):
        row = [str(i), str(int(batch.latents[i]))]
        row += [repr(float(v)) for v in batch.X[i]]
        row += [repr(float(v)) for v in batch.Y[i]]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
