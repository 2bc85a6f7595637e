"""
Provider-agnostic chat client with record/replay transports.

Every request is identified by a SHA-256 hash over its canonical form
(template id, messages with normalized line endings, model parameters).
The live transport calls any-llm; the recording transport wraps another
transport and appends each exchange to a JSONL store; the replay transport
answers only from that store and never touches the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Sequence, TypeVar

from ..services.llm_providers import get_provider, resolve_api_key, resolve_base_url
from .errors import NetworkError, ParseFailure, ProviderError, ReplayMiss, RetriesExhausted
from .templates import render

logger = logging.getLogger(__name__)

ANY_LLM_IMPORT_ERROR: Optional[str] = None
try:
    from any_llm import completion
    from any_llm.exceptions import (
        AnyLLMError,
        AuthenticationError,
        InvalidRequestError,
        MissingApiKeyError,
        RateLimitError,
    )
    from any_llm.exceptions import ProviderError as AnyLLMProviderError
    from genai_prices import Usage, calc_price

    HAS_ANY_LLM = True
except ImportError as exc:
    HAS_ANY_LLM = False
    ANY_LLM_IMPORT_ERROR = repr(exc)


T = TypeVar("T")

VALID_ROLES = ("system", "user", "assistant")

CORRECTIVE_INSTRUCTION = (
    "Your previous response could not be used: {error}. "
    "Answer again, following the required output format exactly."
)


# =============================================================================
# Data Classes
# =============================================================================


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    attachments: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"Invalid chat role: {self.role!r}")
        if self.role in ("user", "assistant") and not self.text:
            raise ValueError(f"{self.role} message text must be nonempty")


@dataclass(frozen=True)
class ModelParams:
    model: str
    provider: str = "openai"
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: Optional[int] = 0
    base_url: str = ""
    images: bool = False

    def canonical(self) -> dict:
        """Fields that identify a request (endpoint location excluded)."""
        return {
            "model": self.model,
            "provider": self.provider,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }


@dataclass
class TokenUsage:
    """Container for API token usage information."""

    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    total_tokens: Optional[int] = None
    estimated_cost: Optional[float] = None


@dataclass(frozen=True)
class Completion:
    text: str
    usage: Optional[TokenUsage] = None


@dataclass(frozen=True)
class Transcript:
    request_hash: str
    template_id: str
    prompt: str
    response: str
    timestamp: str
    model: str
    usage: Optional[dict] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> Transcript:
        data = json.loads(line)
        return cls(**{k: data.get(k) for k in cls.__dataclass_fields__})


def _normalize(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def request_hash(template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> str:
    """SHA-256 of the canonical UTF-8 JSON form of a request."""
    canonical = {
        "template_id": template_id,
        "messages": [
            {
                "role": m.role,
                "text": _normalize(m.text),
                "attachments": [Path(a).name for a in m.attachments],
            }
            for m in messages
        ],
        "params": params.canonical(),
    }
    payload = json.dumps(canonical, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def flatten_prompt(messages: Sequence[ChatMessage]) -> str:
    return "\n\n".join(f"[{m.role.upper()}]\n{_normalize(m.text)}" for m in messages)


# =============================================================================
# Recording Store
# =============================================================================


class RecordingStore:
    """
    Append-only JSONL transcript store.

    Appends are serialized with a lock; lookups return the first transcript
    recorded for a hash.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: Optional[dict[str, Transcript]] = None

    def _load(self) -> dict[str, Transcript]:
        index: dict[str, Transcript] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for lineno, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        transcript = Transcript.from_json(line)
                    except (json.JSONDecodeError, TypeError) as e:
                        logger.warning(f"[LLM] Skipping malformed recording line {lineno} in {self.path}: {e}")
                        continue
                    index.setdefault(transcript.request_hash, transcript)
        return index

    def lookup(self, request_hash: str) -> Optional[Transcript]:
        with self._lock:
            if self._index is None:
                self._index = self._load()
            return self._index.get(request_hash)

    def append(self, transcript: Transcript) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(transcript.to_json() + "\n")
            if self._index is not None:
                self._index.setdefault(transcript.request_hash, transcript)

    def __len__(self) -> int:
        with self._lock:
            if self._index is None:
                self._index = self._load()
            return len(self._index)


# =============================================================================
# Transports
# =============================================================================


class Transport(Protocol):
    uses_network: bool

    def send(self, template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> Completion:
        ...


class LiveTransport:
    """Chat completions over any-llm, with exponential backoff on transient errors."""

    # Retry configuration for transient errors
    MAX_RETRIES = 3
    RETRY_DELAY = 2.0  # Initial delay in seconds (exponential backoff)

    uses_network = True

    def __init__(self, sleep: Callable[[float], None] = time.sleep):
        if not HAS_ANY_LLM:
            detail = f" Underlying error: {ANY_LLM_IMPORT_ERROR}" if ANY_LLM_IMPORT_ERROR else ""
            raise ImportError(
                "any-llm package failed to import. Install with: pip install any-llm-sdk" + detail
            )
        self._sleep = sleep

    def _build_messages(self, messages: Sequence[ChatMessage], params: ModelParams) -> list[dict]:
        built = []
        for m in messages:
            if m.attachments and params.images:
                content: list[dict] = [{"type": "text", "text": m.text}]
                for path in m.attachments:
                    mime = mimetypes.guess_type(path)[0] or "image/png"
                    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
                    content.append({"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}})
                built.append({"role": m.role, "content": content})
            else:
                built.append({"role": m.role, "content": m.text})
        return built

    def _extract_token_usage(self, response, params: ModelParams) -> TokenUsage:
        """Token counts from an OpenAI-shaped response, plus an estimated cost."""
        token_usage = TokenUsage()
        try:
            if hasattr(response, "usage") and response.usage:
                token_usage.prompt_tokens = getattr(response.usage, "prompt_tokens", None)
                token_usage.completion_tokens = getattr(response.usage, "completion_tokens", None)
                token_usage.total_tokens = getattr(response.usage, "total_tokens", None)

            # local runtimes have no public pricing
            if get_provider(params.provider).hosted:
                try:
                    price = calc_price(
                        Usage(
                            input_tokens=token_usage.prompt_tokens or 0,
                            output_tokens=token_usage.completion_tokens or 0,
                        ),
                        model_ref=params.model,
                        provider_id=get_provider(params.provider).any_llm_key,
                    )
                    token_usage.estimated_cost = float(price.total_price)
                except Exception:
                    # genai-prices may not have entries for every model
                    pass
        except Exception as e:
            logger.debug(f"[LLM] Failed to extract token usage: {e}")
        return token_usage

    def send(self, template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> Completion:
        info = get_provider(params.provider)
        completion_kwargs = {
            "model": params.model,
            "provider": info.any_llm_key,
            "messages": self._build_messages(messages, params),
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
        }
        if params.seed is not None:
            completion_kwargs["seed"] = params.seed
        if info.hosted:
            api_key = resolve_api_key(params.provider)
            if api_key:
                completion_kwargs["api_key"] = api_key
            if params.base_url:
                completion_kwargs["api_base"] = params.base_url
        else:
            completion_kwargs["api_base"] = resolve_base_url(params.provider, params.base_url)

        try:
            for attempt in range(self.MAX_RETRIES + 1):
                try:
                    response = completion(**completion_kwargs)
                    break
                except (RateLimitError, AnyLLMProviderError) as e:
                    if attempt < self.MAX_RETRIES:
                        delay = self.RETRY_DELAY * (2 ** attempt)
                        logger.warning(
                            f"[LLM] Attempt {attempt + 1}/{self.MAX_RETRIES + 1} failed for "
                            f"'{template_id}': {e}. Retrying in {delay:.1f}s..."
                        )
                        self._sleep(delay)
                        continue
                    raise
        except RateLimitError as e:
            raise ProviderError(f"Rate limit exceeded for {params.provider}: {e}")
        except (AuthenticationError, MissingApiKeyError) as e:
            raise ProviderError(f"Invalid API key for {params.provider}: {e}")
        except InvalidRequestError as e:
            raise ProviderError(f"Request rejected by {params.provider}: {e}")
        except AnyLLMProviderError as e:
            raise NetworkError(f"Connection or server error to {params.provider}: {e}")
        except AnyLLMError as e:
            raise ProviderError(f"API error ({params.provider}): {e}")

        text = response.choices[0].message.content or ""
        return Completion(text=text, usage=self._extract_token_usage(response, params))


class RecordingTransport:
    """Forward to an inner transport and append every exchange to a store."""

    def __init__(self, inner: Transport, store: RecordingStore):
        self.inner = inner
        self.store = store
        self.uses_network = getattr(inner, "uses_network", True)

    def send(self, template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> Completion:
        result = self.inner.send(template_id, messages, params)
        self.store.append(
            Transcript(
                request_hash=request_hash(template_id, messages, params),
                template_id=template_id,
                prompt=flatten_prompt(messages),
                response=result.text,
                timestamp=datetime.now(timezone.utc).isoformat(),
                model=params.model,
                usage=asdict(result.usage) if result.usage else None,
            )
        )
        return result


class ReplayTransport:
    """Answer from recorded transcripts only."""

    uses_network = False

    def __init__(self, store: RecordingStore):
        self.store = store

    def send(self, template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> Completion:
        digest = request_hash(template_id, messages, params)
        transcript = self.store.lookup(digest)
        if transcript is None:
            raise ReplayMiss(digest, template_id, flatten_prompt(messages))
        usage = TokenUsage(**transcript.usage) if transcript.usage else None
        return Completion(text=transcript.response, usage=usage)


# =============================================================================
# Rate limiting
# =============================================================================


class TokenBucket:
    """Blocking token bucket: at most `rate` acquisitions per second on average."""

    def __init__(self, rate: float, capacity: Optional[float] = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(1.0, rate))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


# =============================================================================
# Client
# =============================================================================


class ChatClient:
    """
    Template-aware chat client.

    Routes each template to a model (per-template overrides in step_models),
    caps in-flight requests with a semaphore and rate-limits network
    transports with a token bucket.
    """

    def __init__(
        self,
        transport: Transport,
        params: ModelParams,
        step_models: Optional[Mapping[str, str]] = None,
        max_in_flight: int = 4,
        requests_per_second: float = 0.0,
    ):
        self.transport = transport
        self.params = params
        self.step_models = dict(step_models or {})
        self.max_in_flight = max(1, max_in_flight)
        self._semaphore = threading.BoundedSemaphore(self.max_in_flight)
        self._bucket = TokenBucket(requests_per_second) if requests_per_second > 0 else None
        self._usage_lock = threading.Lock()
        self.request_count = 0
        self.total_cost = 0.0
        self.total_tokens = 0

    def params_for(self, template_id: str) -> ModelParams:
        model = self.step_models.get(template_id)
        return replace(self.params, model=model) if model else self.params

    def with_params(self, params: ModelParams) -> ChatClient:
        """A client sharing this transport but using other model params."""
        return ChatClient(
            self.transport,
            params,
            step_models=self.step_models,
            max_in_flight=self.max_in_flight,
            requests_per_second=self._bucket.rate if self._bucket else 0.0,
        )

    def send(self, template_id: str, messages: Sequence[ChatMessage]) -> str:
        """Send prepared messages and return the assistant text."""
        params = self.params_for(template_id)
        if self._bucket is not None and getattr(self.transport, "uses_network", False):
            self._bucket.acquire()
        with self._semaphore:
            result = self.transport.send(template_id, list(messages), params)
        with self._usage_lock:
            self.request_count += 1
            if result.usage:
                self.total_tokens += result.usage.total_tokens or 0
                self.total_cost += result.usage.estimated_cost or 0.0
        logger.debug(f"[LLM] {template_id}: {len(result.text)} chars from {params.model}")
        return result.text

    def complete(
        self,
        template_id: str,
        bindings: Mapping[str, object],
        attachments: Sequence[str] = (),
    ) -> str:
        """Render a template, send it as one user message, return the response text."""
        prompt = render(template_id, bindings)
        return self.send(template_id, [ChatMessage("user", prompt, tuple(attachments))])

    def complete_with_retry(
        self,
        template_id: str,
        bindings: Mapping[str, object],
        parser: Callable[[str], T],
        budget: int = 3,
        attachments: Sequence[str] = (),
    ) -> T:
        """
        Complete and parse, re-prompting with a corrective instruction on
        ParseFailure, for at most `budget` attempts.

        Raises:
            RetriesExhausted carrying the last raw response.
        """
        if budget < 1:
            raise ValueError("budget must be at least 1")
        messages = [ChatMessage("user", render(template_id, bindings), tuple(attachments))]
        last_raw = ""
        last_error: Exception = ParseFailure("no attempt made")
        for attempt in range(budget):
            raw = self.send(template_id, messages)
            try:
                return parser(raw)
            except ParseFailure as e:
                last_raw, last_error = raw, e
                logger.info(f"[LLM] {template_id} attempt {attempt + 1}/{budget} unparseable: {e}")
                messages = messages + [
                    ChatMessage("assistant", raw or "(empty response)"),
                    ChatMessage("user", CORRECTIVE_INSTRUCTION.format(error=e)),
                ]
        raise RetriesExhausted(template_id, budget, last_raw, last_error)
