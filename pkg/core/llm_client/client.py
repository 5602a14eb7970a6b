"""
Chat-completion clients behind a one-method port.

HttpChatClient calls an OpenAI-compatible endpoint through langchain-openai. MockChatClient is a
pure function of the prompt pair. ReplayChatClient and RecordingChatClient
serve and capture JSON fixtures keyed by the prompt hash.
"""
import json
import logging
import os
import re
import time
from pathlib import Path
from typing import Callable, List, Optional, Protocol

import httpx
import openai
from dotenv import load_dotenv
from langchain_core.messages import HumanMessage, SystemMessage
from langchain_openai import ChatOpenAI

from core.captioner.prompts import prompt_sha256
from core.config import LlmDefaults
from core.models.main import ChatExchange
from core.models.settings import LlmConfig
from core.utils.error_handling import (
    FixtureMissingError,
    LlmCredentialsError,
    LlmResponseError,
    LlmTransportError,
    RetryableError,
    RetryConfig,
    run_with_retry,
)

load_dotenv(override=True)
logger = logging.getLogger(__name__)

_COMPLETIONS_PATH = "/chat/completions"
_SEGMENT_ACTION = re.compile(r"\] (.+?) \(confidence")

_MOCK_OPENERS = (
    "Over the recording the person is seen",
    "The camera shows the person",
    "In this clip the person is observed",
    "The timeline indicates the person is",
)


class ChatClient(Protocol):
    def complete(self, system: str, user: str) -> ChatExchange:
        ...


class HttpChatClient:
    """OpenAI-compatible endpoint through ChatOpenAI; retries are counted here, not inside the SDK."""

    def __init__(self, config: LlmConfig, http_client: Optional[httpx.Client] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.http_client = http_client
        self.sleep = sleep

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise LlmCredentialsError(self.config.api_key_env)
        return key

    def _chat_model(self) -> ChatOpenAI:
        return ChatOpenAI(
            api_key=self._api_key(),
            base_url=self.config.endpoint.removesuffix(_COMPLETIONS_PATH),
            model=self.config.model,
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            timeout=self.config.timeout_ms / 1000.0,
            max_retries=0,
            http_client=self.http_client,
        )

    def complete(self, system: str, user: str) -> ChatExchange:
        """
        One chat completion, retrying on 429, 5xx, timeouts and connection failures.

        Raises:
            LlmCredentialsError: the API key variable is unset
            LlmTransportError: retries exhausted or a non-retriable HTTP status
            LlmResponseError: malformed response or an empty completion
        """
        llm = self._chat_model()
        messages = [SystemMessage(content=system), HumanMessage(content=user)]
        attempts = 0

        def attempt():
            nonlocal attempts
            attempts += 1
            try:
                message = llm.invoke(messages)
            except (openai.APITimeoutError, openai.APIConnectionError) as e:
                raise RetryableError(f"{type(e).__name__}: request to chat endpoint failed") from e
            except openai.APIStatusError as e:
                if e.status_code in LlmDefaults.RETRYABLE_STATUS:
                    raise RetryableError(f"HTTP {e.status_code}", status_code=e.status_code) from e
                raise LlmTransportError(f"HTTP {e.status_code} from chat endpoint",
                                        attempts=attempts, retriable=False) from e
            except (openai.APIResponseValidationError, ValueError, KeyError, IndexError, TypeError) as e:
                raise LlmResponseError(f"Malformed completion response: {e}", attempts=attempts) from e

            content = message.content if isinstance(message.content, str) else ""
            if not content.strip():
                raise LlmResponseError("Empty completion", attempts=attempts)
            return content

        retry = RetryConfig(max_retries=self.config.max_retries,
                            initial_delay=self.config.backoff_base_ms / 1000.0)
        started = time.perf_counter()
        content, used = run_with_retry(attempt, retry, sleep=self.sleep)
        latency_ms = (time.perf_counter() - started) * 1000.0
        logger.info(f"🤖 Completion from {self.config.model} after {used} attempt(s) in {latency_ms:.0f} ms")
        return ChatExchange(system=system, user=user, response=content, latency_ms=latency_ms,
                            attempts=used, model=self.config.model)


class MockChatClient:
    """Deterministic stand-in: echoes the actions of the runtime prompt's segment lines."""

    def __init__(self, model: str = "mock"):
        self.model = model

    def complete(self, system: str, user: str) -> ChatExchange:
        key = prompt_sha256(system, user)
        opener = _MOCK_OPENERS[int(key, 16) % len(_MOCK_OPENERS)]
        actions: List[str] = []
        for action in _SEGMENT_ACTION.findall(user):
            if action not in actions:
                actions.append(action)
        body = ", then ".join(actions) if actions else "without a clearly recognizable action"
        return ChatExchange(system=system, user=user, response=f"{opener} {body}.", latency_ms=0.0,
                            attempts=1, model=self.model)


class ReplayChatClient:
    """Serves recorded fixtures `<dir>/<sha256>.json` without network access."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def complete(self, system: str, user: str) -> ChatExchange:
        key = prompt_sha256(system, user)
        path = self.directory / f"{key}.json"
        if not path.is_file():
            raise FixtureMissingError(key, str(self.directory))
        try:
            fixture = json.loads(path.read_text(encoding="utf-8"))
            response = fixture["response"]
        except (json.JSONDecodeError, KeyError) as e:
            raise LlmResponseError(f"Malformed fixture {path}: {e}") from e
        if not response or not response.strip():
            raise LlmResponseError(f"Fixture {path} holds an empty completion")
        logger.debug(f"Replayed fixture {key[:12]}")
        return ChatExchange(system=system, user=user, response=response, latency_ms=0.0,
                            attempts=1, model=fixture.get("model"))


class RecordingChatClient:
    """Wraps another client and writes each exchange as a replay fixture; never stores credentials."""

    def __init__(self, inner: ChatClient, directory: Path):
        self.inner = inner
        self.directory = Path(directory)

    def complete(self, system: str, user: str) -> ChatExchange:
        exchange = self.inner.complete(system, user)
        key = prompt_sha256(system, user)
        self.directory.mkdir(parents=True, exist_ok=True)
        fixture = {"key": key, "model": exchange.model, "system": system, "user": user,
                   "response": exchange.response}
        (self.directory / f"{key}.json").write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n",
                                                    encoding="utf-8")
        return exchange


def build_client(config: LlmConfig) -> ChatClient:
    if config.mode == "http":
        client: ChatClient = HttpChatClient(config)
    elif config.mode == "replay":
        client = ReplayChatClient(Path(config.fixtures_dir))
    else:
        client = MockChatClient(model=f"mock:{config.model}")
    if config.record_dir:
        client = RecordingChatClient(client, Path(config.record_dir))
    logger.debug(f"LLM client mode={config.mode} record={bool(config.record_dir)}")
    return client


def complete(config: LlmConfig, system: str, user: str) -> ChatExchange:
    """One chat exchange through the client `config` selects."""
    return build_client(config).complete(system, user)
