"""
LLM provider registry.

Maps `llm.provider` names to the any-llm provider key, the environment
variable holding the API key, and the default endpoint of local
OpenAI-compatible runtimes.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

from ..core.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Provider:
    any_llm_key: str
    env_var: str = ""
    local_url: str = ""

    @property
    def hosted(self) -> bool:
        return not self.local_url


PROVIDERS: dict[str, Provider] = {
    "openai": Provider("openai", "OPENAI_API_KEY"),
    "anthropic": Provider("anthropic", "ANTHROPIC_API_KEY"),
    "gemini": Provider("gemini", "GEMINI_API_KEY"),
    "mistral": Provider("mistral", "MISTRAL_API_KEY"),
    "together": Provider("together", "TOGETHER_API_KEY"),
    "openrouter": Provider("openrouter", "OPENROUTER_API_KEY"),
    "huggingface": Provider("huggingface", "HF_TOKEN"),
    # local runtimes: no key, OpenAI wire format at local_url
    "ollama": Provider("ollama", local_url="http://localhost:11434"),
    "vllm": Provider("vllm", local_url="http://localhost:8000/v1"),
    "lmstudio": Provider("lmstudio", local_url="http://localhost:1234/v1"),
}


def get_provider(name: str) -> Provider:
    """Look up a provider, raising ConfigError for unknown names."""
    try:
        return PROVIDERS[name.lower()]
    except KeyError:
        raise ConfigError(f"Unknown LLM provider {name!r}; choose from {', '.join(sorted(PROVIDERS))}")


def resolve_api_key(name: str) -> Optional[str]:
    """A hosted provider's API key from its environment variable."""
    env_var = get_provider(name).env_var
    if not env_var:
        return None
    key = os.environ.get(env_var)
    if not key:
        logger.debug(f"[LLM] {env_var} is not set")
    return key or None


def resolve_base_url(name: str, configured: str = "") -> Optional[str]:
    """Configured base URL, else the local runtime default (None for hosted)."""
    return configured or get_provider(name).local_url or None
