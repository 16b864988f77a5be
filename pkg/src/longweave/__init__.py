"""longweave: synthesis, verification and curriculum tooling for
long-context RL training data."""

from .client import (
    ChatCompletionsClient,
    CompletionBatch,
    ProtocolError,
    SampleJob,
    SamplingParams,
    TransportError,
)
from .curation import CurationReport, PassRateCache, curate, estimate_pass_rate
from .curriculum import Manifest, build_mixture, mine_hard, stage_filter
from .extension import Budget, ExtendedInstance, TokenCounter, count_tokens, extend
from .grpo import AdvantageResult, GrpoConfig, group_advantage, reward_group, surrogate_objective
from .keychain import (
    ChainConfig,
    InsertionPlan,
    TraceResult,
    build_chains,
    gen_uuid,
    render_prompt,
    splice,
    synthesize,
    trace,
    trace_context,
)
from .records import (
    ChainRecord,
    Document,
    KeyChainTask,
    MixtureEntry,
    MixtureSpec,
    QAInstance,
    RolloutGroup,
    Trajectory,
    derive_rng,
    load_instances,
    save_records,
)
from .retrieval import (
    NIAHGrid,
    NeedleTask,
    VTTask,
    gen_needle_task,
    gen_niah_grid,
    gen_vt_task,
    vt_oracle,
)
from .verify import (
    Normalization,
    VerifierOutcome,
    extract_boxed,
    verify_exact,
    verify_f1,
    verify_set,
    verify_two_way,
)

__version__ = "0.1.0"
