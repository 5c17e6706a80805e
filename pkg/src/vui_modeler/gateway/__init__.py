"""Language-model gateway: prompt templates, chat sessions and backends."""

from vui_modeler.gateway.backends import (
    FAULTS,
    BackendUnavailable,
    ChatMessage,
    ContextOverflow,
    NoisyBackend,
    OracleRequest,
    PerfectBackend,
    RemoteBackend,
)
from vui_modeler.gateway.client import Gateway, GatewayConfig, GatewaySession
from vui_modeler.gateway.prompts import (
    MissingSlot,
    PromptTemplate,
    TemplateError,
    TemplateSet,
    render,
)

__all__ = [
    "FAULTS",
    "BackendUnavailable",
    "ChatMessage",
    "ContextOverflow",
    "Gateway",
    "GatewayConfig",
    "GatewaySession",
    "MissingSlot",
    "NoisyBackend",
    "OracleRequest",
    "PerfectBackend",
    "PromptTemplate",
    "RemoteBackend",
    "TemplateError",
    "TemplateSet",
    "render",
]
