"""Prompt assembly, the strict marker/TSV output contract, transports
(HTTP, replay, mock), and the per-(model, horizon, universe, date) cache.

The gateway treats the completion endpoint as an opaque text-in/text-out
service. A response is accepted only if it carries exactly one
<<BEGIN>>...<<END>> block whose lines are TICKER<TAB>SCORE covering the
expected tickers exactly; anything else is a contract violation with a
machine-readable reason code. Missing tickers are never zero-filled.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from .errors import CacheError, ConfigError
from .prompts import SYSTEM_PROMPT

logger = logging.getLogger(__name__)

BEGIN = "<<BEGIN>>"
END = "<<END>>"

STATUS_OK = "ok"
STATUS_VIOLATION = "contract_violation"
STATUS_TRANSPORT = "transport_error"

# violation reason codes
MISSING_BEGIN = "missing_begin"
MISSING_END = "missing_end"
MULTIPLE_BLOCKS = "multiple_blocks"
BAD_LINE = "bad_line"
BAD_SCORE = "bad_score"
UNKNOWN_TICKER = "unknown_ticker"
DUPLICATE_TICKER = "duplicate_ticker"
MISSING_TICKER = "missing_ticker"

RETRY_BUDGET = 1


@dataclass
class PromptBundle:
    """System + user text and the tickers a reply must cover."""

    system: str
    user: str
    expected: tuple[str, ...]


@dataclass(frozen=True)
class CacheKey:
    model: str
    horizon: int
    universe_sig: str
    date: Date

    @staticmethod
    def universe_signature(universe: tuple[str, ...]) -> str:
        """Hash of the ordered ticker list; order and membership both matter."""
        digest = hashlib.sha256("\n".join(universe).encode("utf-8"))
        return digest.hexdigest()[:16]


@dataclass
class LlmResponse:
    raw: str
    scores: dict[str, float] = field(default_factory=dict)
    status: str = STATUS_OK
    reason: str | None = None
    retries: int = 0
    soft_flags: tuple[str, ...] = ()


def build_user_message(
    features_by_ticker: dict[str, dict[str, float]],
    day: Date,
    k: int,
    effort: str | None = None,
) -> str:
    """Deterministic user message for one date.

    One line per ticker listing only present features as name=value with
    fixed 6-decimal formatting (absent features are omitted, never zeroed),
    plus the marker/TSV output instruction.
    """
    if not features_by_ticker:
        raise ValueError("empty universe: no tickers to serialize")
    lines = ["INPUT", f"date={day.isoformat()}", f"k={k}"]
    if effort is not None:
        lines.append(f"effort={effort}")
    lines.append("FEATURES")
    for ticker in features_by_ticker:
        feats = features_by_ticker[ticker]
        parts = [f"{name}={feats[name]:.6f}" for name in sorted(feats)]
        lines.append(f"{ticker} " + " ".join(parts) if parts else ticker)
    lines.append(
        f"OUTPUT: one line per input ticker, strictly between {BEGIN} and {END}, "
        "formatted TICKER<TAB>SCORE. No other text."
    )
    return "\n".join(lines)


def build_bundle(
    spec_kind: str,
    features_by_ticker: dict[str, dict[str, float]],
    universe: tuple[str, ...],
    day: Date,
    k: int,
    effort: str = "high",
) -> PromptBundle:
    """Bundle with the effort flag present exactly when the forecaster is a
    thinking variant."""
    flag = effort if spec_kind == "tllm" else None
    user = build_user_message(features_by_ticker, day, k, effort=flag)
    return PromptBundle(system=SYSTEM_PROMPT, user=user, expected=tuple(universe))


def parse_response(raw: str, expected: tuple[str, ...]) -> LlmResponse:
    """Validate a completion against the marker/TSV contract.

    Extracts the single <<BEGIN>>..<<END>> block (surrounding commentary is
    tolerated but flagged), then requires each line to be TICKER, one tab, a
    finite decimal; the parsed ticker set must equal the expected set exactly.
    """
    text = raw.replace("\r\n", "\n")
    first = text.find(BEGIN)
    if first < 0:
        return LlmResponse(raw, status=STATUS_VIOLATION, reason=MISSING_BEGIN)
    if text.find(BEGIN, first + len(BEGIN)) >= 0:
        return LlmResponse(raw, status=STATUS_VIOLATION, reason=MULTIPLE_BLOCKS)
    end = text.find(END, first + len(BEGIN))
    if end < 0:
        return LlmResponse(raw, status=STATUS_VIOLATION, reason=MISSING_END)

    soft_flags = []
    before = text[:first].strip()
    after = text[end + len(END):].strip()
    if before or after:
        soft_flags.append("extra_text")

    block = text[first + len(BEGIN): end].strip("\n")
    scores: dict[str, float] = {}
    expected_set = set(expected)
    for line in block.split("\n"):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=BAD_LINE,
                soft_flags=tuple(soft_flags),
            )
        ticker, score_text = parts
        if not ticker or ticker != ticker.strip():
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=BAD_LINE,
                soft_flags=tuple(soft_flags),
            )
        try:
            score = float(score_text)
        except ValueError:
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=BAD_SCORE,
                soft_flags=tuple(soft_flags),
            )
        if not math.isfinite(score):
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=BAD_SCORE,
                soft_flags=tuple(soft_flags),
            )
        if ticker not in expected_set:
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=UNKNOWN_TICKER,
                soft_flags=tuple(soft_flags),
            )
        if ticker in scores:
            return LlmResponse(
                raw, status=STATUS_VIOLATION, reason=DUPLICATE_TICKER,
                soft_flags=tuple(soft_flags),
            )
        scores[ticker] = score
    if set(scores) != expected_set:
        return LlmResponse(
            raw, status=STATUS_VIOLATION, reason=MISSING_TICKER,
            soft_flags=tuple(soft_flags),
        )
    return LlmResponse(raw, scores=scores, status=STATUS_OK, soft_flags=tuple(soft_flags))


# -- transports -----------------------------------------------------------------


class TransportError(Exception):
    """Completion endpoint failure (network, HTTP status, bad envelope)."""


class MockTransport:
    """Calls a scoring function instead of a network endpoint.

    The scorer receives the parsed user message (date, k, per-ticker features)
    and returns ticker -> score; the transport renders a contract-conformant
    reply. A queue of canned responses can be used instead for failure drills.
    """

    def __init__(self, scorer=None, scripted: list[str] | None = None):
        self.scorer = scorer
        self.scripted = list(scripted or [])
        self.calls = 0

    def complete(self, system: str, user: str, params: dict) -> str:
        self.calls += 1
        if self.scripted:
            return self.scripted.pop(0)
        day, k, features = parse_user_message(user)
        scores = self.scorer(day, k, features)
        lines = [BEGIN]
        for ticker in features:
            if ticker in scores:
                lines.append(f"{ticker}\t{scores[ticker]:.6f}")
        lines.append(END)
        return "\n".join(lines)


def parse_user_message(user: str) -> tuple[Date, int, dict[str, dict[str, float]]]:
    """Inverse of build_user_message (used by the mock transport)."""
    day = None
    k = None
    features: dict[str, dict[str, float]] = {}
    in_features = False
    for line in user.split("\n"):
        if line.startswith("date="):
            day = Date.fromisoformat(line[5:])
        elif line.startswith("k="):
            k = int(line[2:])
        elif line == "FEATURES":
            in_features = True
        elif line.startswith("OUTPUT:"):
            break
        elif in_features and line:
            parts = line.split(" ")
            feats = {}
            for chunk in parts[1:]:
                name, _, value = chunk.partition("=")
                feats[name] = float(value)
            features[parts[0]] = feats
    if day is None or k is None:
        raise ValueError("user message missing date/k headers")
    return day, k, features


class ReplayTransport:
    """Serves only cached responses; any miss is a transport error."""

    def __init__(self):
        self.calls = 0

    def complete(self, system: str, user: str, params: dict) -> str:
        self.calls += 1
        raise TransportError("replay transport has no live endpoint (cache miss)")


class HttpTransport:
    """Opaque text-completion endpoint described entirely by configuration.

    The request body template carries {system}, {user}, {budget} and
    {model_id} placeholders; the response is JSON and the completion text is
    pulled from a dotted path (e.g. "choices.0.text").
    """

    def __init__(
        self,
        url: str,
        body_template: str,
        response_path: str,
        auth_env: str | None = None,
        timeout: float = 60.0,
    ):
        self.url = url
        self.body_template = body_template
        self.response_path = response_path
        self.auth_env = auth_env
        self.timeout = timeout
        self.calls = 0

    def complete(self, system: str, user: str, params: dict) -> str:
        import os

        import requests

        self.calls += 1
        body = self.body_template.format(
            system=json.dumps(system),
            user=json.dumps(user),
            budget=params.get("budget", 0),
            model_id=json.dumps(params.get("model_id", "")),
        )
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise TransportError(f"auth env var {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.url, data=body.encode("utf-8"), headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from None
        if resp.status_code != 200:
            raise TransportError(f"endpoint returned HTTP {resp.status_code}")
        if not self.response_path:
            return resp.text
        node = resp.json()
        for part in self.response_path.split("."):
            try:
                node = node[int(part)] if part.isdigit() else node[part]
            except (KeyError, IndexError, TypeError):
                raise TransportError(
                    f"response path {self.response_path!r} not found"
                ) from None
        if not isinstance(node, str):
            raise TransportError("response path did not resolve to text")
        return node


# -- cache ----------------------------------------------------------------------


class ResponseCache:
    """Content-addressed response store: one raw-text file per CacheKey plus a
    JSON sidecar with parse status and retry count."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[CacheKey, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, key: CacheKey) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _paths(self, key: CacheKey) -> tuple[Path, Path]:
        base = self.root / key.model / str(key.horizon) / key.universe_sig
        return base / f"{key.date.isoformat()}.txt", base / f"{key.date.isoformat()}.status.json"

    def get(self, key: CacheKey) -> tuple[str, dict] | None:
        raw_path, status_path = self._paths(key)
        if not raw_path.exists():
            return None
        if not status_path.exists():
            raise CacheError(f"cache entry {raw_path} has no status sidecar")
        try:
            meta = json.loads(status_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CacheError(f"corrupt cache sidecar {status_path}: {exc}") from None
        return raw_path.read_text(encoding="utf-8"), meta

    def put(self, key: CacheKey, raw: str, meta: dict) -> None:
        raw_path, status_path = self._paths(key)
        raw_path.parent.mkdir(parents=True, exist_ok=True)
        raw_path.write_text(raw, encoding="utf-8")
        status_path.write_text(
            json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
        )


def forecast_date(
    key: CacheKey,
    bundle: PromptBundle,
    cache: ResponseCache | None,
    transport,
    params: dict | None = None,
) -> LlmResponse:
    """One date's forecast with cache short-circuit and a single retry.

    Warm cache hits make zero transport calls. On a miss the transport is
    called once and retried once on a contract violation or transport error;
    a second failure marks the date invalid for this model (the caller
    excludes it from metrics and counts it in the manifest). Only ok
    responses are persisted.
    """
    params = dict(params or {})
    lock = cache.lock_for(key) if cache is not None else threading.Lock()
    with lock:
        if cache is not None:
            hit = cache.get(key)
            if hit is not None:
                raw, meta = hit
                parsed = parse_response(raw, bundle.expected)
                if parsed.status != STATUS_OK:
                    raise CacheError(
                        f"cached response for {key} no longer parses "
                        f"({parsed.reason}); cache is corrupt or universe changed"
                    )
                parsed.retries = int(meta.get("retries", 0))
                return parsed

        last: LlmResponse | None = None
        for attempt in range(1 + RETRY_BUDGET):
            try:
                raw = transport.complete(bundle.system, bundle.user, params)
            except TransportError as exc:
                logger.warning("transport error for %s (attempt %d): %s", key, attempt, exc)
                last = LlmResponse("", status=STATUS_TRANSPORT, reason=str(exc), retries=attempt)
                continue
            parsed = parse_response(raw, bundle.expected)
            parsed.retries = attempt
            if parsed.status == STATUS_OK:
                if cache is not None:
                    cache.put(
                        key,
                        raw,
                        {
                            "status": STATUS_OK,
                            "retries": attempt,
                            "soft_flags": list(parsed.soft_flags),
                        },
                    )
                return parsed
            logger.warning(
                "contract violation for %s (attempt %d): %s", key, attempt, parsed.reason
            )
            last = parsed
        return last
