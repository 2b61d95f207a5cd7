"""Batch UNSPSC classification with chat-completion LLMs, plus hierarchical scoring."""

from .cache import CacheEntry, ResponseCache
from .client import (
    LlmRequest,
    LlmResponse,
    MockBackend,
    MockOracleConfig,
    OpenAiBackend,
    RawResult,
    classify_batch,
    complete,
    mock_complete,
)
from .evaluation import AccuracyMatrix, ClassificationResult, aggregate, compare_matrices, score
from .ingest import DatasetSchema, PurchaseRecord, RejectionReport, census, clean_text, load_dataset, sample
from .parsing import Outcome, ParsedPrediction, extract_code
from .prompts import PromptTemplate, RenderedPrompt, builtin_template, prompt_digest, render
from .reporting import render_report
from .taxonomy import (
    HierarchyLevel,
    UnspscCode,
    level_of,
    lineage,
    load_catalog,
    match_at,
    parse_code,
    truncate,
)

__version__ = "0.1.0"
