"""graphhop: deterministic environment, curriculum scheduler, and evaluation
harness for agents that answer questions over typed text-attributed graphs."""

from .curriculum import (
    CurriculumConfig,
    EmptyLevelError,
    LevelDistribution,
    gaussian_level_scores,
    level_distribution,
    default_training_config,
    partition_by_level,
    sample_instance,
    sample_level,
)
from .diagnostics import BehaviorReport, build_report, evidence_hit, load_episode_log, rouge_l
from .episode import (
    Episode,
    EpisodeConfig,
    LoopingPolicy,
    OraclePolicy,
    PolicyInterface,
    PrematurePolicy,
    RandomValidPolicy,
    ScriptedPolicy,
    classify_outcome,
    run_campaign,
    run_episode,
    scripted_policies,
)
from .executor import (
    FunctionCall,
    FunctionResult,
    call_validity,
    execute,
    execute_block,
    parse_call,
)
from .protocol import (
    Block,
    FormatVerdict,
    Transcript,
    TranscriptParseError,
    agent_mask,
    agent_text,
    emit,
    extract_answer,
    extract_calls,
    parse_transcript,
    validate_format,
)
from .reward import RewardBreakdown, RewardConfig, compute_reward, normalize_answer
from .rounds import (
    DifficultyLabel,
    RoundRecord,
    classify_difficulty,
    decompose_rounds,
    label_question,
)
from .service import RolloutService, ServiceError, ServiceServer
from .store import (
    GraphSchema,
    GraphStore,
    NodeRecord,
    QuestionInstance,
    load_graph,
    load_question_set,
)

__version__ = "0.1.0"
