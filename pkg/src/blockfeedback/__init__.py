"""Zero-shot feedback for block-based student programs.

Experts author a label-annotated probabilistic grammar (a "rubric"); the
engine samples synthetic labeled corpora from it, tunes rule probabilities
against unlabeled submissions, infers per-program feedback labels with
token-level highlighting via max-probability parsing, and trains/evaluates
classifiers over Zipf-split corpora.
"""

from . import rubrics
from .errors import (
    BlockFeedbackError,
    CycleDetected,
    DataFormatError,
    DegenerateLabels,
    DimensionMismatch,
    EmptyInput,
    EmptyTable,
    ForeignDerivation,
    NonFiniteFitness,
    NonPositiveWeight,
    OutOfSupport,
    ProbSumMismatch,
    RubricSyntaxError,
    SupportTooLarge,
    TooFewEntries,
    UnbalancedParens,
    UnknownLabel,
    UnknownSymbol,
)
from .grammar import (
    Derivation,
    HighlightMask,
    NonterminalRef,
    ProductionRule,
    RubricGrammar,
    SynExample,
    Terminal,
    count_derivations,
    derivation_labels,
    derivation_logprob,
    derivation_mask,
    derivation_tokens,
    enumerate_derivations,
    enumerate_support,
    parse_rubric,
    render_rubric,
    sample,
    sample_corpus,
    sample_derivation,
)
from .labels import LabelDef, LabelSchema, LabelVector
from .models import (
    EvalReport,
    MultiLabelModel,
    TraceReport,
    TrainConfig,
    bce_loss,
    bce_gradients,
    evaluate,
    featurize,
    featurize_trace,
    knowledge_trace,
    majority_baseline,
    predict,
    predict_matrix,
    score_predictions,
    train_multilabel,
)
from .programs import (
    ExecutionTrace,
    Program,
    Token,
    Trajectory,
    execute,
    is_block_program,
    render,
    tokenize,
)
from .tuner import (
    ESConfig,
    FitnessEvaluator,
    TuneReport,
    fitness,
    logits_from_theta,
    random_logits,
    theta_from_logits,
    tune,
)
from .viterbi import (
    ParseResult,
    SearchStats,
    build_heuristic,
    highlight,
    predict_labels_grammar,
    viterbi_parse,
)
from .zipf import (
    FrequencyTable,
    ZipfFit,
    ZipfSplit,
    build_frequency,
    exp_zipf,
    fit_zipf,
    log_zipf,
    rank_order_distance,
    split_zipf,
)

__version__ = "0.1.0"
