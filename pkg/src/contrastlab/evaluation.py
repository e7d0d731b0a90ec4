"""Zero-shot transfer evaluation, margins, and distributional diagnostics.

Zero-shot prediction ranks one prompt per class by similarity against the
image and returns the top-r class indices. The margin diagnostics estimate,
with and without access to the latent labels, how often the score fails to
separate pairs by a requested gap.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scores import diagonal_scores, score_matrix
from .synthetic import BatchData, GenerativeModel, UniqueFeatureSampler, sample_arrays


@dataclass(frozen=True)
class PromptSet:
    """One text prompt per latent class, in class order."""

    prompts: np.ndarray  # (K, d2)
    zetas: np.ndarray  # (K, K3)
    source: str = "in_distribution"

    def __post_init__(self):
        if self.prompts.ndim != 2:
            raise ValueError("prompts must be a (K, d2) array")


def sample_prompt_set(
    gen: GenerativeModel,
    rng: np.random.Generator,
    zeta_sampler: UniqueFeatureSampler | None = None,
    source: str | None = None,
) -> PromptSet:
    """Draw one prompt per class: y_k = H [v_k; zeta_k].

    ``zeta_sampler`` overrides the model's text-feature sampler to produce
    distribution-shifted prompts.
    """
    sampler = gen.zeta_sampler if zeta_sampler is None else zeta_sampler
    if source is None:
        source = "in_distribution" if zeta_sampler is None else "shifted"
    zetas = sampler.sample(rng, gen.K)
    prompts = np.concatenate([gen.latent.vectors, zetas], axis=1) @ gen.H.T
    return PromptSet(prompts=prompts, zetas=zetas, source=source)


def zero_shot_predict(model, x: np.ndarray, prompts: PromptSet, r: int) -> list[int]:
    """Indices of the r best-scoring classes, descending, ties to the lower
    index."""
    K = prompts.prompts.shape[0]
    if not (1 <= r <= K):
        raise ValueError(f"r must lie in [1, {K}], got {r}")
    scores = score_matrix(model, x[None, :], prompts.prompts)[0]
    order = np.argsort(-scores, kind="stable")
    return [int(k) for k in order[:r]]


@dataclass(frozen=True)
class ZeroShotTrials:
    """Vectorized per-trial results of repeated zero-shot evaluation."""

    true_class: np.ndarray  # (n,)
    rank_of_true: np.ndarray  # (n,) 0-based rank under the tie rule
    top1_correct: np.ndarray  # (n,) bool
    top1_gap: np.ndarray  # (n,) score gap between best and runner-up
    soft_margin: np.ndarray  # (n,) lse_k((s_k - s_true) / tau)

    def top_r_error(self, r: int) -> float:
        return float(np.mean(self.rank_of_true >= r))

    def margin_fraction(self, threshold: float) -> float:
        return float(np.mean(self.top1_correct & (self.top1_gap >= threshold)))

    def soft_margin_mean(self) -> tuple[float, float]:
        """Mean and standard error of the soft margin-failure statistic.

        Whenever the true class misses the top r, at least r+1 exponentials
        are >= 1, so the statistic is at least log(1+r) on that trial; its
        mean therefore upper-bounds top_r_error(r) * log(1+r) on the same
        trial stream.
        """
        n = len(self.soft_margin)
        return (
            float(np.mean(self.soft_margin)),
            float(np.std(self.soft_margin, ddof=1) / np.sqrt(n)),
        )


def _trial_chunk(
    model,
    gen: GenerativeModel,
    n: int,
    rng: np.random.Generator,
    prompt_zeta_sampler: UniqueFeatureSampler | None,
    fixed_prompts: PromptSet | None,
) -> tuple[np.ndarray, ...]:
    lat = rng.choice(gen.K, size=n, p=gen.latent.probs)
    xi = gen.xi_sampler.sample(rng, n)
    X = np.concatenate([gen.latent.vectors[lat], xi], axis=1) @ gen.G.T

    K = gen.K
    if fixed_prompts is not None:
        scores = score_matrix(model, X, fixed_prompts.prompts)
    else:
        gx = model.embed_images(X)
        sampler = prompt_zeta_sampler if prompt_zeta_sampler is not None else gen.zeta_sampler
        zetas = sampler.sample(rng, n * K).reshape(n, K, -1)
        V = np.broadcast_to(gen.latent.vectors, (n, K, gen.K1))
        P = np.concatenate([V, zetas], axis=2) @ gen.H.T  # (n, K, d2)
        hy = model.embed_texts(P.reshape(n * K, -1)).reshape(n, K, -1)
        kind = model.similarity_kind
        if kind == "cosine":
            gx = gx / np.linalg.norm(gx, axis=-1, keepdims=True)
            hy = hy / np.linalg.norm(hy, axis=-1, keepdims=True)
            kind = "inner"
        if kind == "inner":
            scores = np.einsum("ne,nke->nk", gx, hy)
        else:
            sq = (
                np.sum(gx**2, axis=-1)[:, None]
                + np.sum(hy**2, axis=-1)
                - 2.0 * np.einsum("ne,nke->nk", gx, hy)
            )
            scores = -np.sqrt(np.maximum(sq, 0.0))

    s_true = scores[np.arange(n), lat]
    greater = np.sum(scores > s_true[:, None], axis=1)
    ties_lower = np.sum(
        (scores == s_true[:, None]) & (np.arange(K)[None, :] < lat[:, None]), axis=1
    )
    rank = greater + ties_lower
    top1 = np.argmax(scores, axis=1)  # first max: ties go to the lower index
    top_two = np.partition(scores, K - 2, axis=1)[:, -2:]
    gap = top_two[:, 1] - top_two[:, 0]
    excess = (scores - s_true[:, None]) / model.temperature_tau
    m = np.max(excess, axis=1, keepdims=True)
    soft = m.squeeze(1) + np.log(np.sum(np.exp(excess - m), axis=1))
    return lat, rank, top1 == lat, gap, soft


def zero_shot_trials(
    model,
    gen: GenerativeModel,
    n_trials: int,
    rng: np.random.Generator,
    prompt_zeta_sampler: UniqueFeatureSampler | None = None,
    fixed_prompts: PromptSet | None = None,
    chunk_size: int = 20000,
    threads: int = 1,
) -> ZeroShotTrials:
    """Run fresh zero-shot trials; each trial draws a new image and (unless
    fixed) a new prompt set. Chunks own independent substreams, so the
    result is identical for any thread count."""
    if n_trials < 1:
        raise ValueError("need at least one trial")
    sizes = [chunk_size] * (n_trials // chunk_size)
    if n_trials % chunk_size:
        sizes.append(n_trials % chunk_size)
    rngs = rng.spawn(len(sizes))

    def run(args):
        size, crng = args
        return _trial_chunk(model, gen, size, crng, prompt_zeta_sampler, fixed_prompts)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, zip(sizes, rngs)))
    else:
        parts = [run(a) for a in zip(sizes, rngs)]
    lat = np.concatenate([p[0] for p in parts])
    rank = np.concatenate([p[1] for p in parts])
    correct = np.concatenate([p[2] for p in parts])
    gap = np.concatenate([p[3] for p in parts])
    soft = np.concatenate([p[4] for p in parts])
    return ZeroShotTrials(
        true_class=lat, rank_of_true=rank, top1_correct=correct, top1_gap=gap, soft_margin=soft
    )


def zero_shot_error(
    model,
    gen: GenerativeModel,
    r: int,
    n_trials: int,
    rng: np.random.Generator,
    prompt_zeta_sampler: UniqueFeatureSampler | None = None,
    fixed_prompts: PromptSet | None = None,
    threads: int = 1,
) -> float:
    """Fraction of trials whose true class misses the top-r prediction."""
    if not (1 <= r <= gen.K):
        raise ValueError(f"r must lie in [1, {gen.K}], got {r}")
    trials = zero_shot_trials(
        model, gen, n_trials, rng,
        prompt_zeta_sampler=prompt_zeta_sampler,
        fixed_prompts=fixed_prompts,
        threads=threads,
    )
    return trials.top_r_error(r)


def margin_of_correct_fraction(
    model,
    gen: GenerativeModel,
    thresholds,
    n_trials: int,
    rng: np.random.Generator,
    prompt_zeta_sampler: UniqueFeatureSampler | None = None,
    threads: int = 1,
) -> dict[float, float]:
    """Fraction of trials whose top-1 is correct and beats the runner-up by
    at least each threshold. At threshold 0 this is exactly one minus the
    top-1 error of the same trial stream."""
    thresholds = [float(t) for t in thresholds]
    if any(t < 0 for t in thresholds):
        raise ValueError("thresholds must be nonnegative")
    trials = zero_shot_trials(
        model, gen, n_trials, rng, prompt_zeta_sampler=prompt_zeta_sampler, threads=threads
    )
    return {t: trials.margin_fraction(t) for t in thresholds}


def batch_margins(model, batch: BatchData) -> np.ndarray:
    """All 2B(B-1) within-batch margins: diagonal score minus each
    off-diagonal score sharing its text, then sharing its image."""
    B = len(batch)
    if B < 2:
        raise ValueError("need a batch of at least two pairs")
    S = score_matrix(model, batch.X, batch.Y)
    d = np.diagonal(S)
    off = ~np.eye(B, dtype=bool)
    text_dir = (d[None, :] - S)[off]  # f(x_i,y_i) - f(x_j,y_i), over j != i
    image_dir = (d[:, None] - S)[off]  # f(x_i,y_i) - f(x_i,y_j), over j != i
    return np.concatenate([text_dir, image_dir])


# ---------------------------------------------------------------------------
# margin-failure curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaCurves:
    """Margin-failure estimates over a gamma grid from one shared pool.

    ``alpha_hat`` counts all pairs; ``alpha_exact`` restricts to pairs with
    different latents, which needs the labels. Standard errors come from the
    per-pair statistics.
    """

    gamma: np.ndarray
    alpha_hat: np.ndarray
    alpha_exact: np.ndarray
    se_hat: np.ndarray
    se_exact: np.ndarray
    se_diff: np.ndarray
    n_pairs: int


def margin_gap_samples(
    model, gen: GenerativeModel, n_pairs: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw independent tuple pairs and return (text-side gaps, image-side
    gaps, same-latent mask): gaps are f(x,y)-f(x,y') and f(x,y)-f(x',y)."""
    X, Y, lat, _, _ = sample_arrays(gen, n_pairs, rng)
    X2, Y2, lat2, _, _ = sample_arrays(gen, n_pairs, rng)
    f_xy = diagonal_scores(model, X, Y)
    f_xy2 = diagonal_scores(model, X, Y2)
    f_x2y = diagonal_scores(model, X2, Y)
    return f_xy - f_xy2, f_xy - f_x2y, lat == lat2


def alpha_curves(
    model,
    gen: GenerativeModel,
    n_pairs: int,
    gamma_grid,
    rng: np.random.Generator,
) -> AlphaCurves:
    """Estimate both margin-failure curves on one sample pool.

    Sharing the pool across the grid makes the curves exactly nondecreasing
    in gamma and makes alpha_hat dominate alpha_exact pointwise.
    """
    if n_pairs < 100:
        raise ValueError("need at least 100 pairs")
    grid = np.asarray(sorted(float(g) for g in gamma_grid))
    d_text, d_image, same = margin_gap_samples(model, gen, n_pairs, rng)
    ind_text = d_text[:, None] <= grid[None, :]
    ind_image = d_image[:, None] <= grid[None, :]
    s = ind_text.astype(float) + ind_image.astype(float)
    t = s * (~same)[:, None]
    d = s - t
    root_n = np.sqrt(n_pairs)
    return AlphaCurves(
        gamma=grid,
        alpha_hat=s.mean(axis=0),
        alpha_exact=t.mean(axis=0),
        se_hat=s.std(axis=0, ddof=1) / root_n,
        se_exact=t.std(axis=0, ddof=1) / root_n,
        se_diff=d.std(axis=0, ddof=1) / root_n,
        n_pairs=n_pairs,
    )


def alpha_hat(
    model, n_pairs: int, gen: GenerativeModel, gamma_grid, rng: np.random.Generator
) -> list[tuple[float, float]]:
    """Label-free margin-failure curve: for each grid gamma, the summed
    probabilities that either score gap fails to exceed it."""
    curves = alpha_curves(model, gen, n_pairs, gamma_grid, rng)
    return list(zip(curves.gamma.tolist(), curves.alpha_hat.tolist()))


def alpha_exact(
    model, n_pairs: int, gen: GenerativeModel, gamma_grid, rng: np.random.Generator
) -> list[tuple[float, float]]:
    """Latent-labelled margin-failure curve: as alpha_hat but counting only
    cross-latent pairs."""
    curves = alpha_curves(model, gen, n_pairs, gamma_grid, rng)
    return list(zip(curves.gamma.tolist(), curves.alpha_exact.tolist()))


def sum_squared_probs(gen: GenerativeModel) -> float:
    """Collision probability of two independent latents."""
    return float(np.sum(gen.latent.probs**2))


def conditional_variance(
    model, gen: GenerativeModel, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimates of the expected within-class score variance.

    Uses paired resampling: two images for one (text, latent) give an
    unbiased variance estimate from half the squared difference; same on the
    text side.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    V = gen.latent.vectors

    lat = rng.choice(gen.K, size=n_samples, p=gen.latent.probs)
    Z = V[lat]
    Y = np.concatenate([Z, gen.zeta_sampler.sample(rng, n_samples)], axis=1) @ gen.H.T
    X1 = np.concatenate([Z, gen.xi_sampler.sample(rng, n_samples)], axis=1) @ gen.G.T
    X2 = np.concatenate([Z, gen.xi_sampler.sample(rng, n_samples)], axis=1) @ gen.G.T
    x_side = float(np.mean((diagonal_scores(model, X1, Y) - diagonal_scores(model, X2, Y)) ** 2) / 2.0)

    lat = rng.choice(gen.K, size=n_samples, p=gen.latent.probs)
    Z = V[lat]
    X = np.concatenate([Z, gen.xi_sampler.sample(rng, n_samples)], axis=1) @ gen.G.T
    Y1 = np.concatenate([Z, gen.zeta_sampler.sample(rng, n_samples)], axis=1) @ gen.H.T
    Y2 = np.concatenate([Z, gen.zeta_sampler.sample(rng, n_samples)], axis=1) @ gen.H.T
    y_side = float(np.mean((diagonal_scores(model, X, Y1) - diagonal_scores(model, X, Y2)) ** 2) / 2.0)
    return x_side, y_side


# ---------------------------------------------------------------------------
# evaluation report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Bundle of evaluation outputs, serializable to a report plus CSVs."""

    top_r_error: dict[int, float]
    top_r_se: dict[int, float]
    margin_bin_edges: np.ndarray
    margin_bin_counts: np.ndarray
    alpha: AlphaCurves
    conditional_variance_x: float
    conditional_variance_y: float
    margin_of_correct_fraction: dict[float, float]
    n_trials: int

    def __post_init__(self):
        for r, e in self.top_r_error.items():
            if not (0.0 <= e <= 1.0):
                raise ValueError(f"top-{r} error {e} outside [0, 1]")
        for t, fr in self.margin_of_correct_fraction.items():
            if not (0.0 <= fr <= 1.0):
                raise ValueError(f"margin fraction {fr} at threshold {t} outside [0, 1]")


def build_eval_report(
    model,
    gen: GenerativeModel,
    rng: np.random.Generator,
    r_values=(1, 3),
    n_trials: int = 10000,
    margin_batches: int = 64,
    margin_batch_size: int = 16,
    gamma_grid=None,
    n_pairs: int = 10000,
    thresholds=(0.0, 0.1, 0.25),
    n_variance_samples: int = 10000,
    histogram_bins: int = 60,
    threads: int = 1,
) -> EvalReport:
    """Run the full evaluation battery with per-purpose substreams."""
    if gamma_grid is None:
        gamma_grid = np.linspace(0.0, 1.2, 41)
    rng_trials, rng_margins, rng_alpha, rng_var = rng.spawn(4)

    trials = zero_shot_trials(model, gen, n_trials, rng_trials, threads=threads)
    top_r_error = {int(r): trials.top_r_error(int(r)) for r in r_values}
    top_r_se = {
        r: float(np.sqrt(max(e * (1 - e), 1e-12) / n_trials))
        for r, e in top_r_error.items()
    }
    fractions = {float(t): trials.margin_fraction(float(t)) for t in thresholds}

    margins = []
    for _ in range(margin_batches):
        X, Y, lat, _, _ = sample_arrays(gen, margin_batch_size, rng_margins)
        batch = _arrays_to_batch(X, Y, lat)
        margins.append(batch_margins(model, batch))
    margins = np.concatenate(margins)
    counts, edges = np.histogram(margins, bins=histogram_bins)

    alpha = alpha_curves(model, gen, n_pairs, gamma_grid, rng_alpha)
    var_x, var_y = conditional_variance(model, gen, n_variance_samples, rng_var)

    return EvalReport(
        top_r_error=top_r_error,
        top_r_se=top_r_se,
        margin_bin_edges=edges,
        margin_bin_counts=counts,
        alpha=alpha,
        conditional_variance_x=var_x,
        conditional_variance_y=var_y,
        margin_of_correct_fraction=fractions,
        n_trials=n_trials,
    )


def _arrays_to_batch(X, Y, lat) -> BatchData:
    from .synthetic import PairedSample

    samples = tuple(
        PairedSample(x=X[i], y=Y[i], latent_index=int(lat[i]), xi=np.zeros(0), zeta=np.zeros(0))
        for i in range(len(lat))
    )
    return BatchData(samples=samples, X=np.asarray(X), Y=np.asarray(Y), latents=np.asarray(lat))


def save_eval_report(report: EvalReport, outdir, margins: np.ndarray | None = None) -> list[str]:
    """Write report.json plus alpha.csv and zeroshot.csv (and margins.csv
    when raw margins are supplied). Returns the file names written."""
    import os

    os.makedirs(outdir, exist_ok=True)
    files = []

    payload = {
        "top_r_error": {str(r): e for r, e in report.top_r_error.items()},
        "top_r_se": {str(r): e for r, e in report.top_r_se.items()},
        "margin_histogram": {
            "edges": [float(v) for v in report.margin_bin_edges],
            "counts": [int(c) for c in report.margin_bin_counts],
        },
        "conditional_variance": {
            "x_side": report.conditional_variance_x,
            "y_side": report.conditional_variance_y,
        },
        "margin_of_correct_fraction": {
            repr(t): f for t, f in report.margin_of_correct_fraction.items()
        },
        "n_trials": report.n_trials,
    }
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    files.append("report.json")

    path = os.path.join(outdir, "alpha.csv")
    with open(path, "w") as f:
        f.write("gamma,alpha_hat,alpha_exact,se\n")
        a = report.alpha
        for i in range(len(a.gamma)):
            f.write(
                f"{float(a.gamma[i])!r},{float(a.alpha_hat[i])!r},"
                f"{float(a.alpha_exact[i])!r},{float(a.se_hat[i])!r}\n"
            )
    files.append("alpha.csv")

    path = os.path.join(outdir, "zeroshot.csv")
    with open(path, "w") as f:
        f.write("r,error,se\n")
        for r in sorted(report.top_r_error):
            f.write(f"{r},{report.top_r_error[r]!r},{report.top_r_se[r]!r}\n")
    files.append("zeroshot.csv")

    if margins is not None:
        path = os.path.join(outdir, "margins.csv")
        with open(path, "w") as f:
            f.write("value\n")
            for v in margins:
                f.write(f"{float(v)!r}\n")
        files.append("margins.csv")
    return files
