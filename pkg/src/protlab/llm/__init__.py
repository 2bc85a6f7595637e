"""Chat client, prompt templates, response parsers and record/replay transports."""

from .client import (
    ChatClient,
    ChatMessage,
    Completion,
    LiveTransport,
    ModelParams,
    RecordingStore,
    RecordingTransport,
    ReplayTransport,
    TokenUsage,
    Transcript,
    request_hash,
)
from .errors import (
    CountMismatch,
    LLMError,
    MissingSlot,
    NetworkError,
    OutOfRange,
    ParseFailure,
    ProviderError,
    ReplayMiss,
    RetriesExhausted,
    UnknownTemplate,
)
from .parsing import (
    CellTypeAnswer,
    parse_cell_type,
    parse_comma_list,
    parse_evaluation,
    parse_hypotheses,
    parse_json_object,
    parse_labeled_value,
    parse_numbered_list,
    parse_query,
    parse_refined_annotations,
    parse_score,
)
from .templates import TEMPLATE_IDS, PromptTemplate, get_template, render

__all__ = [
    "TEMPLATE_IDS",
    "CellTypeAnswer",
    "ChatClient",
    "ChatMessage",
    "Completion",
    "CountMismatch",
    "LLMError",
    "LiveTransport",
    "MissingSlot",
    "ModelParams",
    "NetworkError",
    "OutOfRange",
    "ParseFailure",
    "PromptTemplate",
    "ProviderError",
    "RecordingStore",
    "RecordingTransport",
    "ReplayMiss",
    "ReplayTransport",
    "RetriesExhausted",
    "TokenUsage",
    "Transcript",
    "UnknownTemplate",
    "get_template",
    "parse_cell_type",
    "parse_comma_list",
    "parse_evaluation",
    "parse_hypotheses",
    "parse_json_object",
    "parse_labeled_value",
    "parse_numbered_list",
    "parse_query",
    "parse_refined_annotations",
    "parse_score",
    "render",
    "request_hash",
]
