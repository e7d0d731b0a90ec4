"""Config-driven experiment runner.

Five seeded desk-scale experiments wire the generator, trainer, and
evaluator together and emit deterministic CSVs plus a run manifest:

    E1_temp_margin      within-batch margin distributions vs temperature
    E2_clip_vs_square   contrastive training vs the square-loss encoder on
                        the prompt-confound construction
    E3_regularization   margin-of-correct curves with and without the
                        positive-pair regularizer (plus the negative-pair
                        ablation) from a softmax-plateau warm start
    E4_concentration    pooled-loss deviation from the population loss vs
                        pool size
    E5_shifted_prompts  zero-shot error under prompt-distribution shift

Every float written to CSV uses ``repr`` (shortest round-trip form), so a
rerun with the same seed reproduces each CSV byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ConfigValidationError
from .evaluation import (
    batch_margins,
    sample_prompt_set,
    zero_shot_trials,
)
from .losses import population_loss_estimate
from .scores import (
    EncoderScoreModel,
    LinearScoreModel,
    bayes_square_encoder,
    completeness_weights,
    save_weights,
)
from .seeding import substream
from .synthetic import (
    GenerativeModel,
    ModelConfig,
    UniqueFeatureSampler,
    build_generative_model,
    model_config_from_dict,
    model_config_to_dict,
    prompt_confound_model,
    sample_arrays,
)
from .training import (
    TrainConfig,
    default_learning_rate,
    initial_weights,
    plateau_wstar_init_scale,
    train_gd,
)

EXPERIMENT_IDS = (
    "E1_temp_margin",
    "E2_clip_vs_square",
    "E3_regularization",
    "E4_concentration",
    "E5_shifted_prompts",
)

SIMILARITIES = ("inner", "cosine", "negative_l2")


@dataclass(frozen=True)
class TrainSection:
    batch_size_B: int = 16
    iterations_T: int = 1500
    eta: float | None = None  # None -> default_learning_rate with eta_constant
    eta_constant: float = 0.1
    tau: float = 0.07
    lambda_: float = 0.0
    reg_kind: str = "none"
    init_kind: str = "zero"
    init_scale: float = 1.0
    pool_batches_n: int = 256


@dataclass(frozen=True)
class EvalSection:
    n_trials: int = 10000
    r: int = 1
    n_pairs: int = 10000
    margin_batches: int = 128
    histogram_bins: int = 60


@dataclass(frozen=True)
class ParamsSection:
    """Per-experiment sweep settings; unused fields are ignored."""

    taus: tuple[float, ...] = (0.07, 0.01)
    lambdas: tuple[float, ...] = (0.0, 0.1)
    pool_sizes: tuple[int, ...] = (64, 256, 1024)
    n_rep: int = 24
    reference_batches: int = 8192
    shift_scales: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    thresholds: tuple[float, ...] | None = None  # None -> grid over [0, gamma]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    seed: int
    output_dir: str
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    threads: int = 1


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    artifact_version: str
    started_at: str
    finished_at: str
    files: tuple[str, ...]


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "experiment_id": config.experiment_id,
        "seed": config.seed,
        "output_dir": config.output_dir,
        "threads": config.threads,
        "model": model_config_to_dict(config.model),
        "train": {
            "batch_size_B": config.train.batch_size_B,
            "iterations_T": config.train.iterations_T,
            "eta": config.train.eta,
            "eta_constant": config.train.eta_constant,
            "tau": config.train.tau,
            "lambda_": config.train.lambda_,
            "reg_kind": config.train.reg_kind,
            "init_kind": config.train.init_kind,
            "init_scale": config.train.init_scale,
            "pool_batches_n": config.train.pool_batches_n,
        },
        "eval": {
            "n_trials": config.eval.n_trials,
            "r": config.eval.r,
            "n_pairs": config.eval.n_pairs,
            "margin_batches": config.eval.margin_batches,
            "histogram_bins": config.eval.histogram_bins,
        },
        "params": {
            "taus": list(config.params.taus),
            "lambdas": list(config.params.lambdas),
            "pool_sizes": list(config.params.pool_sizes),
            "n_rep": config.params.n_rep,
            "reference_batches": config.params.reference_batches,
            "shift_scales": list(config.params.shift_scales),
            "thresholds": None
            if config.params.thresholds is None
            else list(config.params.thresholds),
        },
    }


def config_hash(config: ExperimentConfig) -> str:
    """Stable digest of the full config; key order never matters."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _section(d: dict, key: str, cls, problems: list[str], path: str):
    raw = d.get(key, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{path}: must be an object")
        return cls()
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for k, v in raw.items():
        if k not in known:
            problems.append(f"{path}.{k}: unknown field")
            continue
        kwargs[k] = v
    try:
        # tuples for list-valued fields
        for k, v in list(kwargs.items()):
            if isinstance(v, list):
                kwargs[k] = tuple(v)
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{path}: {exc}")
        return cls()


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from a parsed JSON object, collecting every problem."""
    problems: list[str] = []

    experiment_id = d.get("experiment_id")
    if experiment_id is None:
        problems.append("experiment_id: missing required field")
    elif experiment_id not in EXPERIMENT_IDS:
        problems.append(
            f"experiment_id: {experiment_id!r} is not one of {', '.join(EXPERIMENT_IDS)}"
        )

    seed = d.get("seed")
    if seed is None:
        problems.append("seed: missing required field")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed: must be a nonnegative integer")

    output_dir = d.get("output_dir")
    if not output_dir or not isinstance(output_dir, str):
        problems.append("output_dir: missing required field")

    threads = d.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        problems.append("threads: must be a positive integer")
        threads = 1

    model_raw = d.get("model", {})
    try:
        model = model_config_from_dict({**model_config_to_dict(ModelConfig()), **model_raw})
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"model: {exc}")
        model = ModelConfig()

    train = _section(d, "train", TrainSection, problems, "train")
    eval_s = _section(d, "eval", EvalSection, problems, "eval")
    params = _section(d, "params", ParamsSection, problems, "params")

    # cross-field constraints
    if model.K < 2:
        problems.append("model.K: need at least two latent classes")
    if model.K1 < model.K + 1:
        problems.append(f"model.K1: must be at least K + 1 = {model.K + 1}")
    if not (0.0 < model.gamma <= 1.0):
        problems.append("model.gamma: must lie in (0, 1]")
    if experiment_id == "E2_clip_vs_square" and not (0.0 < model.gamma < 1.0 / 3.0):
        problems.append(
            "model.gamma: the square-loss failure construction requires gamma < 1/3"
        )
    if experiment_id == "E5_shifted_prompts" and not (
        model.zeta_kind == "ball" and model.radius > 0
    ):
        problems.append(
            "model.zeta_kind: shifted-prompt sweeps need a ball text-feature sampler with radius > 0"
        )
    if model.d1 < model.K1 + model.K2:
        problems.append("model.d1: must be at least K1 + K2")
    if model.d2 < model.K1 + model.K3:
        problems.append("model.d2: must be at least K1 + K3")
    if model.xi_kind not in ("zero", "ball", "discrete"):
        problems.append(f"model.xi_kind: unknown sampler kind {model.xi_kind!r}")
    if model.zeta_kind not in ("zero", "ball", "discrete"):
        problems.append(f"model.zeta_kind: unknown sampler kind {model.zeta_kind!r}")
    if model.zeta_kind == "discrete" and not model.zeta_support:
        problems.append("model.zeta_support: required for the discrete sampler kind")

    if train.batch_size_B < 2:
        problems.append("train.batch_size_B: must be at least 2")
    if train.iterations_T < 1:
        problems.append("train.iterations_T: must be positive")
    if train.eta is not None and not train.eta > 0:
        problems.append("train.eta: must be positive when given")
    if not train.tau > 0:
        problems.append("train.tau: must be positive")
    if train.lambda_ < 0:
        problems.append("train.lambda_: must be nonnegative")
    if train.reg_kind not in ("none", "positive", "negative"):
        problems.append(f"train.reg_kind: unknown kind {train.reg_kind!r}")
    if train.pool_batches_n < 1:
        problems.append("train.pool_batches_n: must be positive")

    if eval_s.n_trials < 1:
        problems.append("eval.n_trials: must be positive")
    if model.K >= 2 and not (1 <= eval_s.r <= model.K):
        problems.append(f"eval.r: must lie in [1, K] = [1, {model.K}]")
    if eval_s.n_pairs < 100:
        problems.append("eval.n_pairs: must be at least 100")
    if eval_s.margin_batches < 1:
        problems.append("eval.margin_batches: must be positive")
    if eval_s.histogram_bins < 1:
        problems.append("eval.histogram_bins: must be positive")

    for i, t in enumerate(params.taus):
        if not t > 0:
            problems.append(f"params.taus[{i}]: must be positive")
    for i, lam in enumerate(params.lambdas):
        if lam < 0:
            problems.append(f"params.lambdas[{i}]: must be nonnegative")
    for i, n in enumerate(params.pool_sizes):
        if n < 2:
            problems.append(f"params.pool_sizes[{i}]: must be at least 2")
    if params.n_rep < 2:
        problems.append("params.n_rep: must be at least 2")
    if params.reference_batches < max(params.pool_sizes, default=2):
        problems.append("params.reference_batches: must be at least the largest pool size")

    if problems:
        raise ConfigValidationError(problems)
    return ExperimentConfig(
        experiment_id=experiment_id,
        seed=seed,
        output_dir=output_dir,
        model=model,
        train=train,
        eval=eval_s,
        params=params,
        threads=threads,
    )


def default_config(experiment_id: str, seed: int = 0, output_dir: str = "runs/out") -> ExperimentConfig:
    """Calibrated desk-scale defaults for each experiment.

    Sized so the full suite completes in minutes on one CPU core while every
    headline comparison resolves well beyond its Monte Carlo noise.
    """
    if experiment_id not in EXPERIMENT_IDS:
        raise ConfigValidationError(
            [f"experiment_id: {experiment_id!r} is not one of {', '.join(EXPERIMENT_IDS)}"]
        )
    model = ModelConfig(seed=seed)
    train = TrainSection()
    eval_s = EvalSection()
    params = ParamsSection()
    if experiment_id == "E1_temp_margin":
        train = TrainSection(
            iterations_T=900, eta_constant=5.0, init_kind="seeded_random", init_scale=0.1
        )
    elif experiment_id == "E2_clip_vs_square":
        model = ModelConfig(
            K=4, K1=5, K2=0, K3=2, d1=5, d2=9, gamma=0.2,
            xi_kind="zero", zeta_kind="discrete", radius=1.0,
            zeta_support=(((1.0, 0.0), 1.0 / 3.0), ((0.0, 1.0), 2.0 / 3.0)),
            seed=seed,
        )
        train = TrainSection(iterations_T=1200, eta_constant=5.0, tau=0.01)
        eval_s = EvalSection(n_trials=100000)
    elif experiment_id == "E3_regularization":
        model = ModelConfig(
            K=8, K1=9, K2=0, K3=0, d1=9, d2=9, gamma=0.5,
            xi_kind="zero", zeta_kind="zero", radius=0.0, seed=seed,
        )
        train = TrainSection(iterations_T=1500, eta=0.5, tau=0.002)
    elif experiment_id == "E4_concentration":
        train = TrainSection(tau=0.07)
    elif experiment_id == "E5_shifted_prompts":
        model = ModelConfig(radius=0.5, seed=seed)
        train = TrainSection(iterations_T=400, eta_constant=5.0, tau=0.07)
        eval_s = EvalSection(n_trials=20000)
    return ExperimentConfig(
        experiment_id=experiment_id,
        seed=seed,
        output_dir=output_dir,
        model=model,
        train=train,
        eval=eval_s,
        params=params,
    )


def load_config_file(path) -> dict:
    """Parse a JSON config file; parse errors carry the line number."""
    with open(path) as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            [f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc


def validate_config(path) -> ExperimentConfig:
    """Load and validate a config file; raises ConfigValidationError listing
    every violation with its field path."""
    return config_from_dict(load_config_file(path))


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class _OutputTracker:
    """Collects written files so a failed run can clean up after itself."""

    def __init__(self, outdir: str):
        self.outdir = outdir
        self.files: list[str] = []

    def write_csv(self, name: str, header: list[str], rows) -> None:
        path = os.path.join(self.outdir, name)
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(name)

    def write_json(self, name: str, payload: dict) -> None:
        path = os.path.join(self.outdir, name)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        self.files.append(name)

    def write_weights(self, name: str, W) -> None:
        save_weights(os.path.join(self.outdir, name), W)
        self.files.append(name)

    def cleanup(self) -> None:
        for name in self.files:
            path = os.path.join(self.outdir, name)
            if os.path.exists(path):
                os.remove(path)


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def _build_model(config: ExperimentConfig) -> GenerativeModel:
    if config.experiment_id == "E2_clip_vs_square":
        return prompt_confound_model(config.model.K, config.model.gamma, seed=config.model.seed)
    return build_generative_model(replace(config.model, seed=config.model.seed))


def _train_config(
    section: TrainSection,
    gen: GenerativeModel,
    tau: float | None = None,
    lambda_: float | None = None,
    reg_kind: str | None = None,
    init_kind: str | None = None,
    init_scale: float | None = None,
) -> TrainConfig:
    t = section.tau if tau is None else tau
    eta = section.eta
    if eta is None:
        eta = default_learning_rate(gen, t, constant=section.eta_constant)
    return TrainConfig(
        batch_size_B=section.batch_size_B,
        iterations_T=section.iterations_T,
        eta=eta,
        tau=t,
        lambda_=section.lambda_ if lambda_ is None else lambda_,
        reg_kind=section.reg_kind if reg_kind is None else reg_kind,
        init_kind=section.init_kind if init_kind is None else init_kind,
        init_scale=section.init_scale if init_scale is None else init_scale,
        pool_batches_n=section.pool_batches_n,
    )


def _collect_margins(model, gen, config: ExperimentConfig, label: str) -> np.ndarray:
    rng = substream(config.seed, "margins", label)
    B = config.train.batch_size_B
    out = []
    for _ in range(config.eval.margin_batches):
        X, Y, lat, _, _ = sample_arrays(gen, B, rng)
        from .evaluation import _arrays_to_batch

        out.append(batch_margins(model, _arrays_to_batch(X, Y, lat)))
    return np.concatenate(out)


def _histogram_rows(values: np.ndarray, bins: int):
    counts, edges = np.histogram(values, bins=bins)
    return [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]


def _binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


# ---------------------------------------------------------------------------
# the five experiments
# ---------------------------------------------------------------------------


def _run_e1(config: ExperimentConfig, gen: GenerativeModel, out: _OutputTracker) -> None:
    summary = []
    margin_rng_label_models = []

    init_cfg = _train_config(config.train, gen, tau=config.params.taus[0])
    untrained = LinearScoreModel(
        W=initial_weights(gen, init_cfg, substream(config.seed, "train", "init")),
        temperature_tau=config.params.taus[0],
        similarity_kind="inner",
    )
    margin_rng_label_models.append(("untrained", untrained))

    for tau in config.params.taus:
        cfg = _train_config(config.train, gen, tau=tau)
        model, traj = train_gd(gen, cfg, substream(config.seed, "train", f"tau={tau!r}"))
        label = f"tau_{tau:g}"
        traj.to_csv(os.path.join(out.outdir, f"trajectory_{label}.csv"), include_wall_ms=False)
        out.files.append(f"trajectory_{label}.csv")
        out.write_weights(f"weights_{label}.bin", model.W)
        margin_rng_label_models.append((label, model))

    for label, model in margin_rng_label_models:
        margins = _collect_margins(model, gen, config, label)
        out.write_csv(f"margins_{label}.csv", ["value"], [(v,) for v in margins])
        out.write_csv(
            f"histogram_{label}.csv",
            ["bin_left", "bin_right", "count"],
            _histogram_rows(margins, config.eval.histogram_bins),
        )
        summary.append((label, float(np.median(margins)), float(np.mean(margins)), len(margins)))

    out.write_csv("summary.csv", ["label", "median_margin", "mean_margin", "n_values"], summary)


def _run_e2(config: ExperimentConfig, gen: GenerativeModel, out: _OutputTracker) -> None:
    cfg = _train_config(config.train, gen)
    clip_model, traj = train_gd(gen, cfg, substream(config.seed, "train", "clip"))
    traj.to_csv(os.path.join(out.outdir, "trajectory_clip.csv"), include_wall_ms=False)
    out.files.append("trajectory_clip.csv")
    out.write_weights("weights_clip.bin", clip_model.W)

    encoder = bayes_square_encoder(gen)
    n = config.eval.n_trials
    rows_clip, rows_square = [], []
    for sim in SIMILARITIES:
        m_clip = LinearScoreModel(W=clip_model.W, temperature_tau=cfg.tau, similarity_kind=sim)
        m_sq = EncoderScoreModel(encoder=encoder, temperature_tau=cfg.tau, similarity_kind=sim)
        err_c = zero_shot_trials(
            m_clip, gen, n, substream(config.seed, "eval", "clip", sim), threads=config.threads
        ).top_r_error(config.eval.r)
        err_s = zero_shot_trials(
            m_sq, gen, n, substream(config.seed, "eval", "square", sim), threads=config.threads
        ).top_r_error(config.eval.r)
        rows_clip.append((sim, config.eval.r, err_c, _binomial_se(err_c, n), n))
        rows_square.append((sim, config.eval.r, err_s, _binomial_se(err_s, n), n))

    header = ["similarity", "r", "error", "se", "n_trials"]
    out.write_csv("zeroshot_clip.csv", header, rows_clip)
    out.write_csv("zeroshot_square.csv", header, rows_square)
    bound = 1.0 / (3.0 * gen.K)
    out.write_csv(
        "summary.csv",
        ["model", "similarity", "error", "se", "failure_bound"],
        [("clip", sim, e, se, bound) for sim, _, e, se, _ in rows_clip]
        + [("square", sim, e, se, bound) for sim, _, e, se, _ in rows_square],
    )


def _e3_thresholds(config: ExperimentConfig) -> list[float]:
    if config.params.thresholds is not None:
        return [float(t) for t in config.params.thresholds]
    gamma = config.model.gamma
    grid = list(np.linspace(0.0, gamma, 21))
    half = 0.5 * gamma
    if half not in grid:
        grid.append(half)
    return sorted(grid)


def _run_e3(config: ExperimentConfig, gen: GenerativeModel, out: _OutputTracker) -> None:
    thresholds = _e3_thresholds(config)
    gamma = gen.latent.margin_gamma
    B = config.train.batch_size_B
    tau = config.train.tau
    summary = []

    runs = [("lambda_0", 0.0, "none")]
    for lam in config.params.lambdas:
        if lam > 0:
            runs.append((f"lambda_{lam:g}", lam, "positive"))
    runs.append(("negative_ablation", 0.1, "negative"))

    for label, lam, reg_kind in runs:
        cfg = _train_config(config.train, gen, lambda_=lam, reg_kind=reg_kind)
        init_scale = plateau_wstar_init_scale(gen, B, tau, cfg.eta, cfg.iterations_T)
        cfg = replace(cfg, init_kind="scaled_wstar", init_scale=init_scale)
        model, traj = train_gd(gen, cfg, substream(config.seed, "train", label))
        traj.to_csv(os.path.join(out.outdir, f"trajectory_{label}.csv"), include_wall_ms=False)
        out.files.append(f"trajectory_{label}.csv")
        out.write_weights(f"weights_{label}.bin", model.W)

        trials = zero_shot_trials(
            model, gen, config.eval.n_trials, substream(config.seed, "eval", label),
            threads=config.threads,
        )
        rows = [(t, trials.margin_fraction(t)) for t in thresholds]
        out.write_csv(f"margin_fraction_{label}.csv", ["threshold", "fraction"], rows)
        summary.append(
            (
                label,
                lam,
                reg_kind,
                trials.margin_fraction(0.5 * gamma),
                trials.top_r_error(1),
            )
        )

    out.write_csv(
        "summary.csv",
        ["label", "lambda", "reg_kind", "fraction_at_half_gamma", "top1_error"],
        summary,
    )


def _run_e4(config: ExperimentConfig, gen: GenerativeModel, out: _OutputTracker) -> None:
    tau = config.train.tau
    B = config.train.batch_size_B
    model = LinearScoreModel(
        W=completeness_weights(gen), temperature_tau=tau, similarity_kind="inner"
    )
    ref = population_loss_estimate(
        model, gen, B, config.params.reference_batches, substream(config.seed, "reference")
    )

    rows, dev_rows = [], []
    for n in config.params.pool_sizes:
        devs = []
        for rep in range(config.params.n_rep):
            est = population_loss_estimate(
                model, gen, B, n, substream(config.seed, "pool", int(n), int(rep))
            )
            devs.append(abs(est.mean - ref.mean))
            dev_rows.append((n, rep, est.mean, devs[-1]))
        devs = np.array(devs)
        rows.append(
            (
                n,
                float(np.mean(devs)),
                float(np.std(devs, ddof=1) / np.sqrt(len(devs))),
                float(np.sqrt(np.mean(devs**2))),
                len(devs),
            )
        )
    out.write_csv("deviations.csv", ["n", "rep", "pool_loss", "abs_deviation"], dev_rows)
    out.write_csv(
        "concentration.csv", ["n", "mean_abs_dev", "se", "rms_dev", "n_rep"], rows
    )
    out.write_json(
        "reference.json",
        {"population_loss": ref.mean, "se": ref.standard_error, "n_batches": ref.n_batches},
    )


def _run_e5(config: ExperimentConfig, gen: GenerativeModel, out: _OutputTracker) -> None:
    cfg = _train_config(config.train, gen)
    model, traj = train_gd(gen, cfg, substream(config.seed, "train", "e5"))
    traj.to_csv(os.path.join(out.outdir, "trajectory.csv"), include_wall_ms=False)
    out.files.append("trajectory.csv")
    out.write_weights("weights.bin", model.W)

    base = gen.zeta_sampler
    rows = []
    n = config.eval.n_trials
    for s in config.params.shift_scales:
        radius = base.radius * (1.0 + s)
        sampler = UniqueFeatureSampler(kind="ball", dimension=base.dimension, radius=radius)
        err = zero_shot_trials(
            model,
            gen,
            n,
            substream(config.seed, "eval", f"shift={s!r}"),
            prompt_zeta_sampler=None if s == 0.0 else sampler,
            threads=config.threads,
        ).top_r_error(config.eval.r)
        rows.append((s, radius, err, _binomial_se(err, n), n))
    out.write_csv("shifted.csv", ["shift", "prompt_radius", "error", "se", "n_trials"], rows)


_RUNNERS = {
    "E1_temp_margin": _run_e1,
    "E2_clip_vs_square": _run_e2,
    "E3_regularization": _run_e3,
    "E4_concentration": _run_e4,
    "E5_shifted_prompts": _run_e5,
}


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Execute one experiment and write its outputs plus manifest.json.

    On failure every file written so far is removed before the error
    propagates, so an output directory never holds a partial run.
    """
    started = datetime.now(timezone.utc).isoformat()
    os.makedirs(config.output_dir, exist_ok=True)
    out = _OutputTracker(config.output_dir)
    try:
        out.write_json("config.json", config_to_dict(config))
        gen = _build_model(config)
        _RUNNERS[config.experiment_id](config, gen, out)
    except Exception:
        out.cleanup()
        raise
    manifest = RunManifest(
        config_hash=config_hash(config),
        seed=config.seed,
        artifact_version=__version__,
        started_at=started,
        finished_at=datetime.now(timezone.utc).isoformat(),
        files=tuple(sorted(out.files)),
    )
    with open(os.path.join(config.output_dir, "manifest.json"), "w") as f:
        json.dump(
            {
                "config_hash": manifest.config_hash,
                "seed": manifest.seed,
                "artifact_version": manifest.artifact_version,
                "started_at": manifest.started_at,
                "finished_at": manifest.finished_at,
                "files": list(manifest.files),
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    return manifest
