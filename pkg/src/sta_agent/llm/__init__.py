from sta_agent.llm.backend import (
    ChatCompletionLlm,
    FailingLlm,
    LlmBackend,
    LlmClient,
    LlmError,
    LlmReply,
    LlmRequest,
    LlmTask,
    LlmUsage,
    StubLlm,
    TokenBucket,
    count_tokens,
)
from sta_agent.llm.tasks import (
    CeaChoice,
    CtaChoice,
    correct_cell_text,
    detect_column_topic,
    link_entity_freeform,
    select_cea,
    select_cta,
)

__all__ = [
    "CeaChoice",
    "ChatCompletionLlm",
    "CtaChoice",
    "FailingLlm",
    "LlmBackend",
    "LlmClient",
    "LlmError",
    "LlmReply",
    "LlmRequest",
    "LlmTask",
    "LlmUsage",
    "StubLlm",
    "TokenBucket",
    "correct_cell_text",
    "count_tokens",
    "detect_column_topic",
    "link_entity_freeform",
    "select_cea",
    "select_cta",
]
