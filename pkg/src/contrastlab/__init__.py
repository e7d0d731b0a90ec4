"""Laboratory for multi-modal contrastive representation learning on
synthetic latent-variable data: generator, linear score models, contrastive
losses and regularizers, gradient-descent training, zero-shot evaluation,
and a seeded experiment runner."""

__version__ = "0.1.0"

from .errors import (
    ConfigValidationError,
    ContrastLabError,
    DegenerateInputError,
    DivergenceError,
    NonFiniteScoreError,
    RankDeficiencyError,
    UnsupportedSimilarityError,
)
from .synthetic import (
    BatchData,
    GenerativeModel,
    LatentDictionary,
    ModelConfig,
    PairedSample,
    UniqueFeatureSampler,
    build_generative_model,
    build_latent_dictionary,
    prompt_confound_model,
    sample_batch,
    sample_pair,
)
from .scores import (
    AffineEncoder,
    EncoderScoreModel,
    FunctionScoreModel,
    LinearScoreModel,
    bayes_square_encoder,
    completeness_weights,
    score,
    score_matrix,
)
from .losses import (
    LossValue,
    PopulationEstimate,
    clip_batch_loss,
    negative_pair_regularizer,
    population_loss_estimate,
    positive_pair_regularizer,
    regularized_loss,
    square_loss,
)
from .training import (
    TrainConfig,
    TrainTrajectory,
    clip_gradient,
    default_learning_rate,
    finite_diff_gradient,
    train_gd,
)
from .evaluation import (
    EvalReport,
    PromptSet,
    alpha_exact,
    alpha_hat,
    batch_margins,
    conditional_variance,
    margin_of_correct_fraction,
    sample_prompt_set,
    zero_shot_error,
    zero_shot_predict,
)
