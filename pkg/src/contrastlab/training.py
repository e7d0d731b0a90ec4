"""Gradient descent on the (optionally regularized) contrastive objective.

Training follows the locked-tuning setup: only the image projection W moves,
the text embedding stays the identity, and the similarity is the inner
product, for which the softmax gradient has a closed form. A central
difference oracle is provided to verify that form entry by entry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, UnsupportedSimilarityError
from .losses import clip_loss_terms
from .scores import LinearScoreModel, completeness_weights
from .synthetic import BatchData, GenerativeModel, sample_arrays

INIT_KINDS = ("zero", "scaled_wstar", "seeded_random")


@dataclass
class TrainConfig:
    """Hyperparameters for one gradient-descent run."""

    batch_size_B: int = 16
    iterations_T: int = 500
    eta: float | None = None  # None -> default_learning_rate(gen, tau)
    tau: float = 0.07
    tau_trainable: bool = False
    tau_min: float = 0.01
    tau_max: float = 1.0
    eta_tau: float | None = None  # None -> eta
    lambda_: float = 0.0
    reg_kind: str = "none"
    init_kind: str = "zero"
    init_scale: float = 1.0
    pool_batches_n: int = 256
    fresh_batches: bool = False
    early_stop_window: int = 50
    early_stop_tol: float = 1e-9
    divergence_threshold: float = 1e6

    def validate(self) -> None:
        if self.batch_size_B < 1:
            raise ValueError("batch size must be positive")
        if self.iterations_T < 1:
            raise ValueError("iteration count must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("learning rate must be positive")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        if self.tau_trainable and not (self.tau_min <= self.tau <= self.tau_max):
            raise ValueError("trainable temperature must start inside its clip range")
        if self.lambda_ < 0:
            raise ValueError("lambda must be nonnegative")
        if self.reg_kind not in ("none", "positive", "negative"):
            raise ValueError(f"unknown regularizer kind {self.reg_kind!r}")
        if self.init_kind not in INIT_KINDS:
            raise ValueError(f"unknown init kind {self.init_kind!r}")
        if self.pool_batches_n < 1:
            raise ValueError("pool must contain at least one batch")


@dataclass
class TrainTrajectory:
    """Per-iteration training records."""

    iteration: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    tau: list[float] = field(default_factory=list)
    min_diag_score: list[float] = field(default_factory=list)
    max_offdiag_score: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def record(self, it, loss, grad_norm, tau, min_diag, max_offdiag, wall_ms):
        self.iteration.append(int(it))
        self.loss.append(float(loss))
        self.grad_norm.append(float(grad_norm))
        self.tau.append(float(tau))
        self.min_diag_score.append(float(min_diag))
        self.max_offdiag_score.append(float(max_offdiag))
        self.wall_ms.append(float(wall_ms))

    def __len__(self) -> int:
        return len(self.iteration)

    def to_csv(self, path, include_wall_ms: bool = True) -> None:
        """Write the trajectory as CSV. Wall times vary run to run, so
        deterministic pipelines drop that column."""
        cols = ["iteration", "loss", "grad_norm", "tau"]
        if include_wall_ms:
            cols.append("wall_ms")
        lines = [",".join(cols)]
        for i in range(len(self)):
            row = [str(self.iteration[i]), repr(self.loss[i]), repr(self.grad_norm[i]), repr(self.tau[i])]
            if include_wall_ms:
                row.append(repr(self.wall_ms[i]))
            lines.append(",".join(row))
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def default_learning_rate(gen: GenerativeModel, tau: float, constant: float = 0.1) -> float:
    """Step size proportional to tau^2 over the squared dictionary norms and
    the fourth power of (1 + R); the constant trades safety for speed."""
    gnorm = np.linalg.norm(gen.G, 2)
    hnorm = np.linalg.norm(gen.H, 2)
    R = gen.feature_radius
    return constant * tau**2 / (gnorm**2 * hnorm**2 * (1.0 + R) ** 4)


def softmax_plateau_scale(
    gen: GenerativeModel, B: int, tau: float, eta: float, T: int
) -> float:
    """Margin multiple (in units of tau) beyond which the softmax gradient
    is too small to move the weights within eta * T of total step budget."""
    gnorm = np.linalg.norm(gen.G, 2)
    hnorm = np.linalg.norm(gen.H, 2)
    R = gen.feature_radius
    return 2.0 * np.log(16.0 * gnorm**2 * hnorm**2 * (R**2 + 1.0) ** 2 * B * eta * T / tau)


def plateau_wstar_init_scale(
    gen: GenerativeModel, B: int, tau: float, eta: float, T: int
) -> float:
    """Multiplier c such that c * W* starts training on the softmax plateau:
    margins of order tau times a log factor, which unregularized descent
    cannot improve within T iterations."""
    return softmax_plateau_scale(gen, B, tau, eta, T) * tau / gen.latent.margin_gamma


def gradient_norm_bound(gen: GenerativeModel, tau: float, lambda_: float = 0.0) -> float:
    """Frobenius bound on the regularized-loss gradient for any W."""
    prod = np.linalg.norm(gen.G, 2) * np.linalg.norm(gen.H, 2) * (gen.feature_radius**2 + 1.0)
    return 2.0 / tau * prod + lambda_ * prod


def _softmax(A: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(A, axis=axis, keepdims=True)
    E = np.exp(A - m)
    return E / np.sum(E, axis=axis, keepdims=True)


def pool_objective_and_gradient(
    W: np.ndarray,
    Xp: np.ndarray,
    Yp: np.ndarray,
    tau: float,
    lambda_: float = 0.0,
    reg_kind: str = "none",
    want_tau_grad: bool = False,
):
    """Loss, gradient, and score stats of the pooled objective at W.

    ``Xp``/``Yp`` are stacked batches of shape (n, B, d). The objective is
    the mean over the n batches of the per-batch regularized loss. Returns
    (loss, grad, tau_grad_or_None, min_diag, max_offdiag).
    """
    n, B, _ = Xp.shape
    XW = Xp @ W.T  # (n, B, d2)
    S = np.einsum("nie,nje->nij", XW, Yp)
    terms = clip_loss_terms(S, tau)
    loss = float(np.mean(terms))

    # text anchors: softmax over images (axis 1 of S[n, image, text])
    WA = _softmax(S / tau, axis=1)
    # image anchors: softmax over texts (axis 2)
    WB = _softmax(S / tau, axis=2)

    Xbar = np.einsum("nji,njd->nid", WA, Xp)
    Ybar = np.einsum("nij,nje->nie", WB, Yp)
    scale = 1.0 / (n * B * tau)
    grad = scale * (
        np.einsum("nie,nid->ed", Yp, Xbar - Xp)
        + np.einsum("nie,nid->ed", Ybar - Yp, Xp)
    )

    diag = np.diagonal(S, axis1=1, axis2=2)
    min_diag = float(np.min(diag))
    if B > 1:
        off_mask = ~np.eye(B, dtype=bool)
        max_offdiag = float(np.max(S[:, off_mask]))
    else:
        max_offdiag = float("nan")

    if reg_kind == "positive" and lambda_ > 0:
        loss += lambda_ * float(np.mean(-diag))
        grad += -(lambda_ / (n * B)) * np.einsum("nie,nid->ed", Yp, Xp)
    elif reg_kind == "negative" and lambda_ > 0:
        if B < 2:
            raise ValueError("negative-pair regularizer needs B >= 2")
        off_mean = float(np.mean(S[:, ~np.eye(B, dtype=bool)]))
        loss += lambda_ * off_mean
        ysum = Yp.sum(axis=1)  # (n, d2)
        xsum = Xp.sum(axis=1)  # (n, d1)
        grad += (lambda_ / (n * (B * B - B))) * (
            np.einsum("ne,nd->ed", ysum, xsum) - np.einsum("nie,nid->ed", Yp, Xp)
        )

    tau_grad = None
    if want_tau_grad:
        Sd = np.diagonal(S, axis1=1, axis2=2)
        DA = S - Sd[:, None, :]  # [n, j, i]: S[j,i] - S[i,i]
        DB = S - Sd[:, :, None]  # [n, i, j]: S[i,j] - S[i,i]
        tau_grad = float(
            -(np.sum(WA * DA) + np.sum(WB * DB)) / (n * B * tau**2)
        )
    return loss, grad, tau_grad, min_diag, max_offdiag


def clip_gradient(
    model: LinearScoreModel,
    batch: BatchData,
    lambda_: float = 0.0,
    reg_kind: str = "none",
    tau: float | None = None,
    want_tau_grad: bool = False,
):
    """Analytic gradient of the regularized batch loss with respect to W.

    Only the inner-product similarity has this closed form; cosine and
    negative-L2 models must go through ``finite_diff_gradient``. Returns the
    gradient matrix, or (gradient, tau_gradient) when ``want_tau_grad``.
    """
    if model.similarity_kind != "inner":
        raise UnsupportedSimilarityError(
            f"analytic gradient requires the inner similarity, got {model.similarity_kind!r}"
        )
    t = model.temperature_tau if tau is None else tau
    _, grad, tau_grad, _, _ = pool_objective_and_gradient(
        model.W,
        batch.X[None, :, :],
        batch.Y[None, :, :],
        t,
        lambda_=lambda_,
        reg_kind=reg_kind,
        want_tau_grad=want_tau_grad,
    )
    if want_tau_grad:
        return grad, tau_grad
    return grad


def finite_diff_gradient(objective, W: np.ndarray, step_h: float = 1e-6) -> np.ndarray:
    """Entrywise central differences of a scalar objective of W."""
    if not (1e-8 <= step_h <= 1e-3):
        raise ValueError("step size must lie in [1e-8, 1e-3]")
    W = np.asarray(W, dtype=float)
    grad = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        Wp = W.copy()
        Wp[idx] += step_h
        Wm = W.copy()
        Wm[idx] -= step_h
        grad[idx] = (objective(Wp) - objective(Wm)) / (2.0 * step_h)
    return grad


def initial_weights(
    gen: GenerativeModel, config: TrainConfig, rng: np.random.Generator
) -> np.ndarray:
    if config.init_kind == "zero":
        return np.zeros((gen.d2, gen.d1))
    if config.init_kind == "scaled_wstar":
        return config.init_scale * completeness_weights(gen)
    W = rng.standard_normal((gen.d2, gen.d1))
    return config.init_scale * W / np.sqrt(gen.d1 * gen.d2)


def train_gd(
    gen: GenerativeModel, config: TrainConfig, rng: np.random.Generator
) -> tuple[LinearScoreModel, TrainTrajectory]:
    """Full-pool gradient descent on the regularized contrastive objective.

    A fixed pool of ``pool_batches_n`` batches is sampled up front (fresh
    resampling per iteration is available for population-loss studies) and
    every iteration steps against the exact pool gradient, so the pool loss
    is nonincreasing for any stable step size. The temperature can move too,
    by its gradient in log space, clipped back into [tau_min, tau_max].
    """
    config.validate()
    eta = config.eta if config.eta is not None else default_learning_rate(gen, config.tau)
    eta_tau = config.eta_tau if config.eta_tau is not None else eta
    init_rng, pool_rng = rng.spawn(2)

    W = initial_weights(gen, config, init_rng)
    tau = float(config.tau)
    n, B = config.pool_batches_n, config.batch_size_B

    def draw_pool():
        X, Y, _, _, _ = sample_arrays(gen, n * B, pool_rng)
        return X.reshape(n, B, -1), Y.reshape(n, B, -1)

    Xp, Yp = draw_pool()
    traj = TrainTrajectory()
    t0 = time.perf_counter()

    for it in range(config.iterations_T):
        if config.fresh_batches and it > 0:
            Xp, Yp = draw_pool()
        loss, grad, tau_grad, min_diag, max_off = pool_objective_and_gradient(
            W, Xp, Yp, tau,
            lambda_=config.lambda_,
            reg_kind=config.reg_kind,
            want_tau_grad=config.tau_trainable,
        )
        if not np.isfinite(loss) or abs(loss) > config.divergence_threshold:
            raise DivergenceError(
                f"loss {loss} at iteration {it} exceeds the divergence threshold"
            )
        gnorm = float(np.linalg.norm(grad))
        traj.record(it, loss, gnorm, tau, min_diag, max_off,
                    (time.perf_counter() - t0) * 1e3)

        W = W - eta * grad
        if config.tau_trainable:
            log_tau = np.log(tau) - eta_tau * tau * tau_grad
            tau = float(np.clip(np.exp(log_tau), config.tau_min, config.tau_max))

        w = config.early_stop_window
        if not config.fresh_batches and len(traj) > w:
            if traj.loss[-1 - w] - traj.loss[-1] < config.early_stop_tol:
                break

    model = LinearScoreModel(W=W, temperature_tau=tau, similarity_kind="inner")
    return model, traj
