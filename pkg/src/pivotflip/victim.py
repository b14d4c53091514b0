"""Hard-label victims: budget-metered oracle, rule-based victims, remote client.

The oracle exposes exactly one thing about the victim per query: a discrete
label. The meter is checked before dispatch, so an exhausted oracle never
reaches the victim, and every accepted query lands in the audit log. A victim
may decline to answer (a refusal); that still consumes budget and is reported
as label None.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import requests

from .config import MASK_TOKEN


class VictimError(Exception):
    """Base class for victim-side failures."""


class BudgetExhaustedError(VictimError):
    """Raised when a query arrives after the meter hit its budget."""


class TransportError(VictimError):
    """Remote victim unreachable or returned a non-2xx status after retries."""


class MalformedResponseError(VictimError):
    """Remote victim answered 2xx but the body did not carry an integer label."""


class Victim(Protocol):
    def classify(self, tokens: Sequence[str]) -> Optional[int]:
        """Return the label for a token list, or None to refuse."""


@dataclass(frozen=True)
class AuditEntry:
    tokens: tuple[str, ...]
    label: Optional[int]


class VictimOracle:
    """Metered front door to a victim.

    Thread-safe: the guard check, the dispatch, and the meter increment happen
    under one lock, so concurrent helpers of a single attack instance cannot
    oversubscribe the budget. Victim exceptions propagate without consuming
    budget or logging an entry, keeping used == len(audit_log) at all times.
    """

    def __init__(self, victim: Victim, budget: int):
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        self._victim = victim
        self._budget = budget
        self._used = 0
        self._lock = threading.Lock()
        self.audit_log: list[AuditEntry] = []

    @property
    def budget(self) -> int:
        return self._budget

    @property
    def used(self) -> int:
        return self._used

    @property
    def remaining(self) -> int:
        return self._budget - self._used

    def query(self, tokens: Sequence[str]) -> Optional[int]:
        frozen = tuple(tokens)
        with self._lock:
            if self._used >= self._budget:
                raise BudgetExhaustedError(
                    f"query budget of {self._budget} exhausted"
                )
            label = self._victim.classify(frozen)
            self._used += 1
            self.audit_log.append(AuditEntry(frozen, label))
            return label


@dataclass(frozen=True)
class KeywordVictim:
    """Labels by keyword presence: one label when every keyword occurs as a token,
    the other otherwise. Masked positions count as absent."""

    keywords: frozenset[str]
    label_present: int = 1
    label_absent: int = 0

    def classify(self, tokens: Sequence[str]) -> int:
        present = set(tokens)
        present.discard(MASK_TOKEN)
        return self.label_present if self.keywords <= present else self.label_absent


@dataclass
class BagOfWordsVictim:
    """Linear bag-of-words rule: label 1 iff bias + sum of token weights > 0.

    The mask token always contributes weight zero, whatever the weight table says.
    """

    weights: Mapping[str, int]
    bias: int = 0

    def classify(self, tokens: Sequence[str]) -> int:
        score = self.bias
        for token in tokens:
            if token == MASK_TOKEN:
                continue
            score += self.weights.get(token, 0)
        return 1 if score > 0 else 0


@dataclass
class RemoteVictim:
    """Client for a served classifier.

    Wire format: POST a JSON object {"text": "<space-joined tokens>"} to the
    endpoint; a 2xx response must be a JSON object carrying an integer under
    `label_field`. Non-2xx statuses and connection failures are retried up to
    `retries` extra attempts and then surface as TransportError; a 2xx body
    without a proper integer label raises MalformedResponseError immediately.
    """

    endpoint: str
    timeout: float = 10.0
    retries: int = 2
    label_field: str = "label"
    bearer_token: Optional[str] = None
    _session: requests.Session = field(default_factory=requests.Session, repr=False)

    def classify(self, tokens: Sequence[str]) -> int:
        payload = {"text": " ".join(tokens)}
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        last_error: Optional[TransportError] = None
        for _ in range(self.retries + 1):
            try:
                response = self._session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"request to {self.endpoint} failed: {exc}")
                continue
            if not 200 <= response.status_code < 300:
                last_error = TransportError(
                    f"{self.endpoint} returned status {response.status_code}"
                )
                continue
            return self._parse_label(response)
        assert last_error is not None
        raise last_error

    def _parse_label(self, response: requests.Response) -> int:
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response body is not JSON: {exc}") from exc
        if not isinstance(body, dict) or self.label_field not in body:
            raise MalformedResponseError(
                f"response lacks the {self.label_field!r} field: {body!r}"
            )
        value = body[self.label_field]
        if isinstance(value, bool) or not isinstance(value, int):
            raise MalformedResponseError(
                f"field {self.label_field!r} must be an integer, got {value!r}"
            )
        return value
