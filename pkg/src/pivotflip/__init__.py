"""Hard-label black-box text attack: pivot token search plus synonym substitution."""

from .bandit_core import (
    ArmState,
    ExplorationParams,
    Sampler,
    Verdict,
    bernoulli_kl,
    best_candidate,
    exploration_rate,
    kl_lower_bound,
    kl_upper_bound,
    verify_threshold,
)
from .config import MASK_TOKEN, AttackConfig
from .embeddings import (
    EmbeddingStore,
    SentenceEmbedding,
    cosine,
    load_vectors,
    nearest,
    sentence_embed,
)
from .harness import (
    DatasetEntry,
    RunSummary,
    derive_seed,
    load_dataset,
    read_records,
    run_attack,
    run_dataset,
    summarize,
    write_records,
)
from .perturbation import (
    AdversarialCandidate,
    AttackRecord,
    SubstitutionSet,
    build_substitution_set,
    dynamic_threshold,
    execute_attack,
    perturbation_rate,
    select_adversarial,
)
from .pivot_search import (
    CullResult,
    MaskingDistribution,
    PivotCandidate,
    PivotResult,
    TokenSequence,
    cull_check,
    find_pivot,
    generate_candidates,
    sample_masked,
    true_retention_precision,
)
from .victim import (
    AuditEntry,
    BagOfWordsVictim,
    BudgetExhaustedError,
    KeywordVictim,
    MalformedResponseError,
    RemoteVictim,
    TransportError,
    VictimError,
    VictimOracle,
)

__version__ = "0.1.0"
