"""Generator-side plumbing: input rendering, output parsing, chat prompt
templates, and the mock / copy / chat-completions backends."""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import requests

from .corpus import CorpusError, LanguageMode, normalize_hashtag

__all__ = [
    "AUGMENTED_CHAT_TEMPLATE",
    "CHAT_KEY_ENV_VAR",
    "ChatBackend",
    "CopyBackend",
    "GeneratorBackendKind",
    "GeneratorConfig",
    "GeneratorError",
    "GeneratorExchange",
    "MockBackend",
    "PLAIN_CHAT_TEMPLATE",
    "PromptVariant",
    "build_backend",
    "generate",
    "input_digest",
    "parse_output",
    "render_chat_prompt",
    "render_input",
    "run_generator",
]

CHAT_KEY_ENV_VAR = "RIGHT_CHAT_KEY"

PLAIN_CHAT_TEMPLATE = (
    "I want you to act as a hashtag annotator. I will provide you a tweet and "
    "your role is to annotate the relevant hashtag. You should use the related "
    "knowledge and find the topic. I want you only reply the hashtags segmented "
    'by "#" and nothing else, do not write explanations. I want you segment the '
    "word in a hashtag by space. My first tweet is {tweet}."
)

AUGMENTED_CHAT_TEMPLATE = (
    "I want you to act as a hashtag annotator. I will provide you with a tweet, "
    "and your role is to annotate the relevant hashtag. Using your related "
    "knowledge, you should identify the topic and reply with only the hashtags "
    'segmented by "#", without any explanations. Make sure to capitalize the '
    "first letter of the word. Make sure to split every word in a hashtag by a "
    "space. There are some potential hashtags:[{hashtags}]. You can decide "
    "whether use the part of them or not. My first tweet is {tweet}."
)


class GeneratorBackendKind(str, Enum):
    MOCK = "mock"
    COPY = "copy"
    CHAT_API = "chat-api"


class PromptVariant(str, Enum):
    PLAIN = "plain"
    RETRIEVAL_AUGMENTED = "retrieval-augmented"


class GeneratorError(RuntimeError):
    """Backend transport failure, bad completion, or backend misuse."""


@dataclass(frozen=True)
class GeneratorConfig:
    sep1: str = "<extra_id_0>"
    sep2: str = "<extra_id_1>"
    backend: GeneratorBackendKind = GeneratorBackendKind.COPY
    max_hashtags_in: int = 9
    chat_model_name: str = "gpt-3.5-turbo"
    chat_endpoint: str = ""
    prompt_variant: PromptVariant = PromptVariant.RETRIEVAL_AUGMENTED
    chat_temperature: float = 0.0
    chat_max_retries: int = 3
    chat_backoff_seconds: float = 0.5
    mock_responses_path: str | None = None

    def __post_init__(self) -> None:
        if not self.sep1 or not self.sep2:
            raise ValueError("separator tokens must be non-empty")
        if self.sep1 == self.sep2:
            raise ValueError("sep1 and sep2 must differ")
        if self.max_hashtags_in < 0:
            raise ValueError("max_hashtags_in must be >= 0")
        if self.chat_max_retries < 0:
            raise ValueError("chat_max_retries must be >= 0")


@dataclass
class GeneratorExchange:
    input_sequence: str
    output_sequence: str
    parsed_hashtags: list[str]


def render_input(tweet: str, selected: list[str], config: GeneratorConfig) -> str:
    """``tweet SEP1 h1 SEP1 h2 ...`` with single spaces; no tags means the tweet alone."""
    if len(selected) > config.max_hashtags_in:
        raise ValueError(
            f"{len(selected)} hashtags exceed the configured maximum of {config.max_hashtags_in}"
        )
    parts = [tweet]
    for tag in selected:
        if config.sep1 in tag:
            raise ValueError(f"hashtag {tag!r} contains the input separator token")
        parts.append(config.sep1)
        parts.append(tag)
    return " ".join(parts)


def parse_output(
    raw: str, config: GeneratorConfig, language_mode: LanguageMode = LanguageMode.SPACE
) -> list[str]:
    """Split an output sequence on sep2 into canonical, deduplicated hashtags.

    Never fails: empty pieces and pieces that canonicalize to nothing are
    dropped, and the worst case is an empty list.
    """
    tags: list[str] = []
    seen: set[str] = set()
    for piece in raw.split(config.sep2):
        piece = piece.strip()
        if not piece:
            continue
        try:
            tag = normalize_hashtag(piece, language_mode)
        except CorpusError:
            continue
        if tag in seen:
            continue
        seen.add(tag)
        tags.append(tag)
    return tags


def render_chat_prompt(
    tweet: str, retrieved: list[str] | None, config: GeneratorConfig
) -> str:
    """Instantiate the chat instruction for the configured prompt variant.

    The plain variant takes no retrieved list; the retrieval-augmented
    variant requires one (possibly empty) and inserts it comma-separated.
    Substitution never alters the tweet text.
    """
    if config.prompt_variant is PromptVariant.PLAIN:
        if retrieved is not None:
            raise ValueError("plain prompt variant does not accept retrieved hashtags")
        return PLAIN_CHAT_TEMPLATE.replace("{tweet}", tweet)
    if retrieved is None:
        raise ValueError("retrieval-augmented prompt variant requires a retrieved hashtag list")
    rendered = AUGMENTED_CHAT_TEMPLATE.replace("{hashtags}", ", ".join(retrieved))
    return rendered.replace("{tweet}", tweet)


def input_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class MockBackend:
    """Replays canned outputs keyed by the sha256 digest of the exact input."""

    def __init__(self, responses: dict[str, str] | None = None):
        self._responses = dict(responses or {})

    @classmethod
    def from_inputs(cls, pairs: dict[str, str]) -> "MockBackend":
        return cls({input_digest(text): output for text, output in pairs.items()})

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        """Load line-delimited {"hash","output"} records."""
        responses: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    record = json.loads(stripped)
                    responses[record["hash"]] = record["output"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise GeneratorError(f"mock response file line {lineno} is malformed") from exc
        return cls(responses)

    def generate(self, rendered: str) -> str:
        key = input_digest(rendered)
        try:
            return self._responses[key]
        except KeyError:
            raise GeneratorError(f"no canned response for input hash {key}") from None


class CopyBackend:
    """Echoes the hashtags out of the rendered input, joined by sep2.

    This is the extractive no-op generator: downstream parsing recovers
    exactly the selected hashtags.
    """

    def __init__(self, config: GeneratorConfig):
        self.config = config

    def generate(self, rendered: str) -> str:
        pieces = [piece.strip() for piece in rendered.split(self.config.sep1)]
        return f" {self.config.sep2} ".join(piece for piece in pieces[1:] if piece)


class ChatBackend:
    """Client for a chat-completions style endpoint with retry and backoff.

    Sends the rendered prompt as a single user message; the completion text
    is split on '#' marks and re-joined with sep2 so every backend shares
    one parse path. The API key comes only from the environment.
    """

    def __init__(self, config: GeneratorConfig, session: requests.Session | None = None):
        if not config.chat_endpoint:
            raise GeneratorError("chat backend requires a chat_endpoint")
        self.config = config
        self._session = session or requests.Session()

    def _api_key(self) -> str:
        key = os.environ.get(CHAT_KEY_ENV_VAR, "")
        if not key:
            raise GeneratorError(
                f"chat backend requires the {CHAT_KEY_ENV_VAR} environment variable"
            )
        return key

    def generate(self, prompt: str) -> str:
        payload = {
            "model": self.config.chat_model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.chat_temperature,
        }
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: GeneratorError | None = None
        for attempt in range(self.config.chat_max_retries + 1):
            if attempt:
                time.sleep(self.config.chat_backoff_seconds * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    self.config.chat_endpoint, json=payload, headers=headers, timeout=30
                )
            except requests.RequestException as exc:
                last_error = GeneratorError(f"chat endpoint unreachable: {exc}")
                continue
            if response.status_code != 200:
                last_error = GeneratorError(
                    f"chat endpoint returned status {response.status_code}"
                )
                continue
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                last_error = GeneratorError("chat endpoint returned a malformed completion")
                continue
            if not isinstance(content, str) or not content.strip():
                last_error = GeneratorError("chat endpoint returned an empty completion")
                continue
            return self._normalize_completion(content)
        assert last_error is not None
        raise last_error

    def _normalize_completion(self, content: str) -> str:
        tags = [piece.strip() for piece in content.split("#")]
        return f" {self.config.sep2} ".join(tag for tag in tags if tag)

    def generate_batch(self, prompts: list[str], max_in_flight: int = 4) -> list[str]:
        """Bounded-concurrency generation; outputs come back in input order."""
        with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
            return list(pool.map(self.generate, prompts))


def build_backend(config: GeneratorConfig):
    if config.backend is GeneratorBackendKind.COPY:
        return CopyBackend(config)
    if config.backend is GeneratorBackendKind.MOCK:
        if config.mock_responses_path:
            return MockBackend.from_file(config.mock_responses_path)
        return MockBackend()
    return ChatBackend(config)


def generate(rendered: str, config: GeneratorConfig, backend=None) -> str:
    """Run the configured (or given) backend on a rendered input sequence."""
    backend = backend if backend is not None else build_backend(config)
    return backend.generate(rendered)


def run_generator(
    rendered: str,
    config: GeneratorConfig,
    backend,
    language_mode: LanguageMode = LanguageMode.SPACE,
) -> GeneratorExchange:
    output = backend.generate(rendered)
    return GeneratorExchange(
        input_sequence=rendered,
        output_sequence=output,
        parsed_hashtags=parse_output(output, config, language_mode),
    )
