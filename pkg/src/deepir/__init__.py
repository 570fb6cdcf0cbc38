"""White-box harness for agentic search over a fixed corpus."""

from .corpus import (
    Corpus,
    CorpusError,
    Document,
    Passage,
    TokenizerAdapter,
    WhitespaceTokenizer,
    WHITESPACE,
    doc_of_unit,
    ingest_documents,
    segment_corpus,
    segment_document,
    split_sentences,
    truncate_text,
)
from .lexindex import (
    Analyzer,
    Bm25Params,
    DEFAULT_ANALYZER,
    InvertedIndex,
    LexIndexError,
    PRESETS,
    RankedList,
    bm25_score,
    build_index,
    load_index,
    save_index,
    search,
)
from .pipeline import (
    Bm25Retriever,
    LocalScorer,
    PipelineConfig,
    PipelineError,
    RemoteScorer,
    ScorerEndpoint,
    ScorerError,
    ScorerLengthMismatchError,
    ScorerResponseError,
    ScorerTimeoutError,
    ScorerUnreachableError,
    check_scorer_health,
    maxp_aggregate,
    rerank_top,
    run_pipeline,
    score_remote,
)
from .toolsvc import NotFoundError, SearchResult, ToolError, ToolService, serve_http
from .agentloop import (
    AgentError,
    Budgets,
    BudgetUsage,
    ChatAgent,
    ChatCompletionClient,
    Episode,
    ReformulatorConfig,
    ScriptedAgent,
    Step,
    Turn,
    count_episode,
    episode_from_dict,
    episode_to_dict,
    load_exemplars,
    reformulate_q2q,
    replay_context_tokens,
    run_episode,
    run_many,
    serialize_search_result,
)
from .evalkit import (
    DEFAULT_B_SWEEP,
    DEFAULT_K1_SWEEP,
    EvalError,
    GridResult,
    GridSpec,
    JudgeError,
    Judgments,
    MetricsReport,
    accuracy_judge,
    aggregate_run,
    grid_search_bm25,
    load_judgments,
    load_queries,
    ndcg_at_10,
    normalize_answer,
    recall_at_k,
    recall_evidence,
    render_heatmap,
)
from .tracestore import (
    TraceAuthError,
    TraceError,
    TraceFile,
    TraceFormatError,
    TraceVersionError,
    analyze_queries,
    read_traces,
    trace_header,
    write_traces,
)

__version__ = "0.1.0"
