"""Deterministic intent classification and slot filling for the chat flow.

The conversational model is two JSON datasets: user patterns (pattern ->
intent, with {account}/{amount} placeholders) and bot templates (prompts
for missing slots, confirmations, fallbacks). Classification is pure
pattern matching: longest pattern wins, ties break to the lowest id, so
the same utterance always produces the same analysis.

Entity extraction runs independently of which pattern matched: any
10-digit token is an accountNumber, shorter integer tokens (optionally
followed by "unit"/"units") are amounts. A 10-digit token is never read
as an amount. Affirmation/denial markers come only from whole-utterance
patterns, so the "no" inside "account no 1123158964" cannot cancel
anything.

Every operation demands the shared secret credential first; a caller
without it gets an authorization error and no entities.
"""
from __future__ import annotations

import hmac
import json
import os
import re
import secrets
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

INTENTS = ("balQuery", "transfer", "smalltalk", "unknown")
ENTITY_KINDS = ("accountNumber", "amount", "intentMarker")
SLOT_KINDS = ("accountNumber", "amount")

_PLACEHOLDERS = {
    "account": r"(?P<account>[0-9]{10})",
    "amount": r"(?P<amount>[0-9]{1,9})",
}
_CAPTURE_KIND = {"account": "accountNumber", "amount": "amount"}

# token = digit run not embedded in a longer digit run
_DIGIT_TOKEN = re.compile(r"(?<![0-9])[0-9]+(?![0-9])")
_NORMALIZE_WS = re.compile(r"\s+")

DEFAULT_USER_DATASET = os.path.join(os.path.dirname(__file__), "data", "user_dataset.json")
DEFAULT_BOT_DATASET = os.path.join(os.path.dirname(__file__), "data", "bot_dataset.json")


class NluError(Exception):
    pass


class DatasetError(NluError):
    """A dataset record failed validation; the message names the record."""


class AuthorizationError(NluError):
    """Credential check failed; no analysis is performed."""


@dataclass(frozen=True)
class Utterance:
    text: str
    turn_index: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise NluError("utterance text must be non-empty")


@dataclass(frozen=True)
class Entity:
    kind: str
    value: str
    source_span: Tuple[int, int]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "source_span": list(self.source_span)}


@dataclass(frozen=True)
class EntitySet:
    intent: str
    entities: Tuple[Entity, ...]
    complete: bool

    def first(self, kind: str) -> Optional[Entity]:
        for entity in self.entities:
            if entity.kind == kind:
                return entity
        return None

    def marker(self) -> Optional[str]:
        entity = self.first("intentMarker")
        return entity.value if entity else None

    def to_dict(self) -> dict:
        return {
            "intent": self.intent,
            "entities": [e.to_dict() for e in self.entities],
            "complete": self.complete,
        }


@dataclass
class Conversation:
    """Per-session dialog state: alternating turns plus the slot-filling
    carryover (an intent still waiting for entities)."""

    session_id: str
    history: List[Tuple[str, Utterance]] = field(default_factory=list)
    pending_intent: Optional[str] = None
    pending_entities: Tuple[Entity, ...] = ()

    def add_turn(self, speaker: str, utterance: Utterance) -> None:
        if self.history and self.history[-1][0] == speaker:
            raise NluError(f"two consecutive {speaker} turns")
        self.history.append((speaker, utterance))

    @property
    def next_turn_index(self) -> int:
        return len(self.history)


@dataclass(frozen=True)
class NluCredential:
    secret_key: str

    def __post_init__(self):
        if not re.fullmatch(r"[0-9a-f]{64}", self.secret_key):
            raise NluError("secret_key must be 64 lowercase hex chars (256 bits)")


@dataclass(frozen=True)
class UserPattern:
    id: int
    pattern: str
    intent: str
    slots: Dict[str, str]
    regex: "re.Pattern[str]"


@dataclass(frozen=True)
class BotTemplate:
    template_id: str
    intent: str
    missing_slot: Optional[str]
    text: str


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace, drop trailing punctuation; all
    matching and entity spans refer to this normalized form."""
    out = _NORMALIZE_WS.sub(" ", text.strip().lower()).strip()
    return out.rstrip(".!?").strip()


def _compile_pattern(record_id: int, pattern: str) -> "re.Pattern[str]":
    parts: List[str] = []
    pos = 0
    for m in re.finditer(r"\{([a-z]+)\}", pattern):
        parts.append(re.escape(pattern[pos : m.start()]))
        name = m.group(1)
        if name not in _PLACEHOLDERS:
            raise DatasetError(f"user pattern {record_id}: unknown placeholder {{{name}}}")
        parts.append(_PLACEHOLDERS[name])
        pos = m.end()
    parts.append(re.escape(pattern[pos:]))
    try:
        return re.compile("".join(parts))
    except re.error as exc:
        raise DatasetError(f"user pattern {record_id}: {exc}") from exc


def load_datasets(
    user_dataset_path: str = DEFAULT_USER_DATASET,
    bot_dataset_path: str = DEFAULT_BOT_DATASET,
) -> Tuple[List[UserPattern], List[BotTemplate]]:
    patterns = _load_user_dataset(user_dataset_path)
    templates = _load_bot_dataset(bot_dataset_path)
    return patterns, templates


def _read_json_array(path: str, what: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{what} dataset {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, list) or not data:
        raise DatasetError(f"{what} dataset {path}: must be a non-empty JSON array")
    return data


def _load_user_dataset(path: str) -> List[UserPattern]:
    records = _read_json_array(path, "user")
    patterns: List[UserPattern] = []
    seen_ids = set()
    for record in records:
        if not isinstance(record, dict) or set(record) != {"id", "pattern", "intent", "slots"}:
            raise DatasetError(f"user record {record!r}: expected keys id/pattern/intent/slots")
        rid, text, intent, slots = record["id"], record["pattern"], record["intent"], record["slots"]
        if not isinstance(rid, int):
            raise DatasetError(f"user record {record!r}: id must be an integer")
        if rid in seen_ids:
            raise DatasetError(f"user pattern {rid}: duplicate id")
        seen_ids.add(rid)
        if not isinstance(text, str) or not text.strip():
            raise DatasetError(f"user pattern {rid}: pattern must be a non-empty string")
        if intent not in INTENTS:
            raise DatasetError(f"user pattern {rid}: unknown intent {intent!r}")
        if not isinstance(slots, dict):
            raise DatasetError(f"user pattern {rid}: slots must be an object")
        regex = _compile_pattern(rid, text)
        for kind, spec in slots.items():
            if kind not in ENTITY_KINDS:
                raise DatasetError(f"user pattern {rid}: unknown slot kind {kind!r}")
            if spec.startswith("capture:"):
                group = spec.split(":", 1)[1]
                if group not in regex.groupindex:
                    raise DatasetError(f"user pattern {rid}: no capture group {group!r}")
            elif not spec.startswith("const:"):
                raise DatasetError(f"user pattern {rid}: slot spec must be capture:... or const:...")
        patterns.append(UserPattern(id=rid, pattern=text, intent=intent, slots=slots, regex=regex))
    return patterns


def _load_bot_dataset(path: str) -> List[BotTemplate]:
    records = _read_json_array(path, "bot")
    templates: List[BotTemplate] = []
    seen_ids = set()
    seen_prompts = set()
    for record in records:
        if not isinstance(record, dict) or set(record) != {
            "template_id",
            "intent",
            "missing_slot",
            "text",
        }:
            raise DatasetError(
                f"bot record {record!r}: expected keys template_id/intent/missing_slot/text"
            )
        tid, intent, missing, text = (
            record["template_id"],
            record["intent"],
            record["missing_slot"],
            record["text"],
        )
        if not isinstance(tid, str) or not tid:
            raise DatasetError(f"bot record {record!r}: template_id must be a non-empty string")
        if tid in seen_ids:
            raise DatasetError(f"bot template {tid}: duplicate template_id")
        seen_ids.add(tid)
        if intent not in INTENTS:
            raise DatasetError(f"bot template {tid}: unknown intent {intent!r}")
        if missing is not None:
            if missing not in SLOT_KINDS:
                raise DatasetError(f"bot template {tid}: bad missing_slot {missing!r}")
            if (intent, missing) in seen_prompts:
                raise DatasetError(f"bot template {tid}: duplicate prompt for {intent}/{missing}")
            seen_prompts.add((intent, missing))
        if not isinstance(text, str) or not text.strip():
            raise DatasetError(f"bot template {tid}: text must be a non-empty string")
        templates.append(
            BotTemplate(template_id=tid, intent=intent, missing_slot=missing, text=text)
        )
    return templates


def extract_entities(normalized: str) -> List[Entity]:
    """Pattern-independent extraction over the normalized utterance."""
    out: List[Entity] = []
    for m in _DIGIT_TOKEN.finditer(normalized):
        token = m.group(0)
        if len(token) == 10:
            out.append(Entity("accountNumber", token, (m.start(), m.end())))
        elif len(token) < 10:
            out.append(Entity("amount", str(int(token)), (m.start(), m.end())))
        # longer digit runs fit no known entity and are ignored
    return out


class _RenderMap(dict):
    def __missing__(self, key):  # leave unknown placeholders visible
        return "{" + key + "}"


def render_template(template: BotTemplate, values: Dict[str, str]) -> str:
    return template.text.format_map(_RenderMap(values))


class NluService:
    """Loaded pattern tables plus the shared-secret gate. Immutable after
    construction; per-conversation state lives in Conversation objects."""

    def __init__(
        self,
        user_dataset_path: str = DEFAULT_USER_DATASET,
        bot_dataset_path: str = DEFAULT_BOT_DATASET,
        secret_key: Optional[str] = None,
    ):
        self.patterns, self.templates = load_datasets(user_dataset_path, bot_dataset_path)
        self.credential = NluCredential(secret_key or secrets.token_hex(32))
        self._templates_by_id = {t.template_id: t for t in self.templates}
        self._prompts = {
            (t.intent, t.missing_slot): t for t in self.templates if t.missing_slot is not None
        }

    # -- authorization ---------------------------------------------------

    def _authorize(self, credential: NluCredential) -> None:
        if not isinstance(credential, NluCredential) or not hmac.compare_digest(
            credential.secret_key.encode("ascii"), self.credential.secret_key.encode("ascii")
        ):
            raise AuthorizationError("invalid NLU credential")

    # -- classification ----------------------------------------------------

    def _classify(self, normalized: str) -> Optional[UserPattern]:
        best: Optional[UserPattern] = None
        for pattern in self.patterns:
            if pattern.regex.fullmatch(normalized) is None:
                continue
            if (
                best is None
                or len(pattern.pattern) > len(best.pattern)
                or (len(pattern.pattern) == len(best.pattern) and pattern.id < best.id)
            ):
                best = pattern
        return best

    def _pattern_entities(self, pattern: UserPattern, normalized: str) -> List[Entity]:
        match = pattern.regex.fullmatch(normalized)
        out: List[Entity] = []
        for kind, spec in pattern.slots.items():
            if spec.startswith("capture:"):
                group = spec.split(":", 1)[1]
                out.append(Entity(kind, match.group(group), match.span(group)))
            else:
                out.append(Entity(kind, spec.split(":", 1)[1], (0, len(normalized))))
        return out

    @staticmethod
    def _dedupe(entities: List[Entity]) -> Tuple[Entity, ...]:
        seen = set()
        out = []
        for entity in entities:
            key = (entity.kind, entity.value)
            if key not in seen:
                seen.add(key)
                out.append(entity)
        return tuple(out)

    @staticmethod
    def _is_complete(intent: str, entities: Tuple[Entity, ...]) -> bool:
        if intent == "transfer":
            kinds = {e.kind for e in entities}
            return "accountNumber" in kinds and "amount" in kinds
        if intent == "balQuery":
            return True  # the account slot is resolved from the session downstream
        if intent == "smalltalk":
            return True
        return False

    # -- the model ---------------------------------------------------------

    def d_flow_model(
        self, conversation: Conversation, utterance: Utterance, credential: NluCredential
    ) -> EntitySet:
        """String -> entities, with slot carryover.

        A fresh command intent replaces any pending slot-filling state; an
        unmatched utterance that supplies entities feeds the pending
        intent instead of being discarded.
        """
        self._authorize(credential)
        conversation.add_turn("user", utterance)
        normalized = normalize(utterance.text)
        if not normalized:
            raise NluError("utterance is empty after normalization")
        matched = self._classify(normalized)
        extracted = extract_entities(normalized)

        if matched is not None and matched.intent in ("transfer", "balQuery"):
            entities = self._dedupe(extracted + self._pattern_entities(matched, normalized))
            entity_set = EntitySet(
                intent=matched.intent,
                entities=entities,
                complete=self._is_complete(matched.intent, entities),
            )
        elif matched is not None:
            # smalltalk (possibly an affirm/deny marker): pass through,
            # leaving any pending slot-filling untouched
            entities = self._dedupe(self._pattern_entities(matched, normalized) + extracted)
            return EntitySet(intent=matched.intent, entities=entities, complete=True)
        elif conversation.pending_intent is not None and extracted:
            entities = self._dedupe(list(conversation.pending_entities) + extracted)
            entity_set = EntitySet(
                intent=conversation.pending_intent,
                entities=entities,
                complete=self._is_complete(conversation.pending_intent, entities),
            )
        else:
            return EntitySet(intent="unknown", entities=self._dedupe(extracted), complete=False)

        if entity_set.intent == "transfer" and not entity_set.complete:
            conversation.pending_intent = entity_set.intent
            conversation.pending_entities = entity_set.entities
        else:
            conversation.pending_intent = None
            conversation.pending_entities = ()
        return entity_set

    def next_bot_response(self, entity_set: EntitySet, conversation: Conversation) -> Utterance:
        """Prompt for what is missing, confirm what is complete, fall back
        otherwise. Command execution itself happens at the gateway; this
        only chooses words."""
        values = {e.kind: e.value for e in entity_set.entities}
        if entity_set.intent == "transfer" and not entity_set.complete:
            missing = "accountNumber" if "accountNumber" not in values else "amount"
            template = self._prompts[("transfer", missing)]
        elif entity_set.intent == "transfer":
            template = self._templates_by_id["transfer_confirm"]
        elif entity_set.intent == "balQuery":
            template = self._templates_by_id["balquery_ack"]
        elif entity_set.intent == "smalltalk":
            template = self._templates_by_id["smalltalk_reply"]
        else:
            template = self._templates_by_id["unknown_fallback"]
        utterance = Utterance(
            text=render_template(template, values), turn_index=conversation.next_turn_index
        )
        conversation.add_turn("bot", utterance)
        return utterance

    def template(self, template_id: str) -> BotTemplate:
        try:
            return self._templates_by_id[template_id]
        except KeyError:
            raise NluError(f"no bot template {template_id!r}") from None

    # -- service API -------------------------------------------------------

    def handle(self, payload: dict, conversation: Conversation) -> dict:
        """The wire-shaped entry point: {session_id, utterance, secret_key}
        in, {intent, entities, complete, bot_text} out."""
        try:
            credential = NluCredential(str(payload.get("secret_key", "")))
        except NluError:
            raise AuthorizationError("invalid NLU credential") from None
        utterance = Utterance(
            text=str(payload.get("utterance", "")), turn_index=conversation.next_turn_index
        )
        entity_set = self.d_flow_model(conversation, utterance, credential)
        bot = self.next_bot_response(entity_set, conversation)
        out = entity_set.to_dict()
        out["bot_text"] = bot.text
        return out
