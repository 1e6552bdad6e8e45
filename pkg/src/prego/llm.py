"""HTTP client for remote LLM sequence completion.

Wire contract: POST JSON {"prompt", "temperature", "max_tokens"} to the
endpoint; the response is JSON {"text": emission}. Hosted-API dialects are
adapted to this shape by a thin proxy on the operator side. The API key is
read from the PREGO_LLM_KEY environment variable and sent as a bearer
token when present.

The emission is parsed by taking the text before the first newline,
splitting it on commas and stripping whitespace; the first (up to k)
tokens that belong to the alphabet are decoded. An emission whose leading
token falls outside the alphabet is recorded as an unknown-symbol outcome
(empty predictions, raw emission preserved) rather than aborting the run.

Spending is capped by a process-wide token budget: each call charges the
whitespace-token count of the prompt plus max_tokens, and a call that
would overrun raises BudgetExceeded before anything is sent.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import requests

from .anticipation import AnticipationResult
from .errors import BudgetExceeded, TransportError
from .prompts import PromptSpec, render_prompt

API_KEY_ENV = "PREGO_LLM_KEY"

RETRY_STATUS = {429, 500, 502, 503, 504}

# Supplementary-material defaults: Llama-style endpoints run at
# temperature 0.6 with 4 output tokens; GPT-style endpoints at 0.0.
DEFAULT_TEMPERATURE = 0.6
GPT_STYLE_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 4


class TokenBudget:
    """Process-wide spend guard, safe under concurrent backends."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("budget limit must be >= 1")
        self.limit = limit
        self.used = 0
        self._lock = threading.Lock()

    def charge(self, tokens: int) -> None:
        with self._lock:
            if self.used + tokens > self.limit:
                raise BudgetExceeded(
                    f"charging {tokens} tokens would exceed the budget "
                    f"({self.used}/{self.limit} used)")
            self.used += tokens


def estimate_tokens(prompt: str, max_tokens: int) -> int:
    return len(prompt.split()) + max_tokens


@dataclass
class LLMClient:
    endpoint: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.1
    backoff_cap: float = 2.0
    budget: Optional[TokenBudget] = None
    session: requests.Session = field(default_factory=requests.Session)

    def complete(self, prompt: str) -> str:
        """Send one prompt, returning the raw emission text."""
        if self.budget is not None:
            self.budget.charge(estimate_tokens(prompt, self.max_tokens))
        body = {
            "prompt": prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        headers = {}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        attempt = 0
        while True:
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=headers,
                    timeout=self.timeout)
            except requests.RequestException as e:
                if attempt >= self.max_retries:
                    raise TransportError(
                        f"request failed after {attempt + 1} attempts: {e}"
                    ) from e
                time.sleep(self._delay(attempt))
                attempt += 1
                continue
            if resp.status_code in RETRY_STATUS and attempt < self.max_retries:
                time.sleep(self._delay(attempt))
                attempt += 1
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"endpoint returned HTTP {resp.status_code}")
            try:
                text = resp.json()["text"]
            except (ValueError, KeyError) as e:
                raise TransportError(f"malformed response body: {e}") from e
            return str(text)

    def _delay(self, attempt: int) -> float:
        return min(self.backoff_base * (2 ** attempt), self.backoff_cap)


def parse_emission(alphabet, emission: str, k: int = 1) -> AnticipationResult:
    """Decode an emission into up to k distinct predicted actions."""
    first_line = emission.split("\n", 1)[0]
    tokens = [t.strip() for t in first_line.split(",")]
    tokens = [t for t in tokens if t]
    if not tokens or tokens[0] not in alphabet:
        return AnticipationResult(predictions=(), raw_emission=emission)
    predictions: list[int] = []
    for token in tokens:
        if token not in alphabet:
            break
        action = alphabet.action(token)
        if action not in predictions:
            predictions.append(action)
        if len(predictions) == k:
            break
    return AnticipationResult(
        predictions=tuple(predictions), raw_emission=emission)


def llm_predict(client: LLMClient, spec: PromptSpec, k: int = 1) -> AnticipationResult:
    """Render, send and decode one anticipation query."""
    emission = client.complete(render_prompt(spec))
    return parse_emission(spec.alphabet, emission, k)


class LLMBackend:
    """Remote LLM wrapped as a detection backend."""

    def __init__(self, client: LLMClient, alphabet, context, style="referenced_context"):
        self.client = client
        self.alphabet = alphabet
        self.context = context
        self.style = style

    def predict(self, history, k: int = 1) -> AnticipationResult:
        spec = PromptSpec(
            style=self.style, alphabet=self.alphabet,
            context=self.context, history=tuple(history))
        return llm_predict(self.client, spec, k)
