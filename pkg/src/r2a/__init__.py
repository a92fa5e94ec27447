"""Retrieval-augmented zero-shot video question answering engine."""

from .answering import (
    AnswerResult,
    CandidateSet,
    HttpScorer,
    MockScorer,
    Scorer,
    http_scorer,
    mock_embed,
    mock_score,
    select_answer,
)
from .corpus import (
    CorpusIndex,
    EmbeddingMatrix,
    TextCorpus,
    build_index,
    ingest_texts,
    load_index,
    make_shards,
    normalize_rows,
    read_vector_file,
    save_index,
    write_vector_file,
)
from .errors import (
    BackendError,
    BudgetError,
    FormatError,
    R2AError,
    TransportError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    QARecord,
    compare_runs,
    evaluate,
    exact_match,
    normalize_answer,
    run_pipeline,
)
from .masking import (
    MaskedSequence,
    MaskingConfig,
    ProjectionMatrix,
    TrainingExample,
    apply_projection,
    assemble_training_example,
    mask_tokens,
)
from .prompting import (
    AnswerPrompt,
    VideoContext,
    build_answer_prompt,
    build_context,
    render_for_scorer,
    temporal_connective,
    truncate_to_budget,
)
from .retrieval import (
    FrameFeatures,
    Hit,
    VideoRetrieval,
    dedup_captions,
    random_sample,
    retrieval_to_jsonl,
    retrieve_video,
    similarity,
    topk_frame,
)

__version__ = "0.1.0"
