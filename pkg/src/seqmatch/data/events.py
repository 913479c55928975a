"""Interaction records, sessions, user histories and their JSON forms."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

SCHEMA_VERSION = 1

# item feature scales, in the fixed concatenation order used everywhere
ITEM_FEATURES = ("id", "leaf_cate", "cate", "brand", "shop")
DEFAULT_PROFILE_FEATURES = ("user_id", "age_band", "gender")

DAY_SECONDS = 86_400


class SchemaError(ValueError):
    """A dataset file is missing its header or has an unsupported version."""


@dataclass(frozen=True)
class InteractionEvent:
    user_id: str
    item_id: str
    timestamp: int
    session_id: Optional[str] = None
    item_features: Mapping[str, str] = field(default_factory=dict)
    profile_features: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        feats = dict(self.item_features)
        feats["id"] = self.item_id
        object.__setattr__(self, "item_features", feats)

    @classmethod
    def from_json(cls, rec: Mapping) -> "InteractionEvent":
        feats = {f: str(rec[f]) for f in ITEM_FEATURES[1:] if rec.get(f) is not None}
        sid = rec.get("session_id")
        return cls(
            user_id=str(rec["user_id"]),
            item_id=str(rec["item_id"]),
            timestamp=int(rec["ts"]),
            session_id=None if sid is None else str(sid),
            item_features=feats,
            profile_features={k: str(v) for k, v in (rec.get("profile") or {}).items()},
        )

    def to_json(self) -> dict:
        rec = {"user_id": self.user_id, "item_id": self.item_id, "ts": self.timestamp}
        if self.session_id is not None:
            rec["session_id"] = self.session_id
        for f in ITEM_FEATURES[1:]:
            if f in self.item_features:
                rec[f] = self.item_features[f]
        if self.profile_features:
            rec["profile"] = dict(self.profile_features)
        return rec


@dataclass(frozen=True)
class Session:
    user_id: str
    events: tuple

    def __len__(self) -> int:
        return len(self.events)

    @property
    def item_ids(self) -> list[str]:
        return [e.item_id for e in self.events]

    @property
    def start(self) -> int:
        return self.events[0].timestamp


@dataclass(frozen=True)
class UserHistory:
    user_id: str
    short_term: Session
    long_term: Mapping[str, tuple]
    profile: Mapping[str, str]

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "profile": dict(self.profile),
            "short_term": [e.to_json() for e in self.short_term.events],
            "long_term": {f: list(self.long_term.get(f, ())) for f in ITEM_FEATURES},
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "UserHistory":
        events = tuple(InteractionEvent.from_json(e) for e in rec["short_term"])
        return cls(
            user_id=str(rec["user_id"]),
            short_term=Session(str(rec["user_id"]), events),
            long_term={f: tuple(rec.get("long_term", {}).get(f, ())) for f in ITEM_FEATURES},
            profile=dict(rec.get("profile", {})),
        )


@dataclass(frozen=True)
class TrainingExample:
    user_id: str
    prefix: tuple
    targets: tuple
    long_term: Mapping[str, tuple]
    profile: Mapping[str, str]


@dataclass(frozen=True)
class TestCase:
    user_id: str
    prefix: tuple
    ground_truth: tuple
    long_term: Mapping[str, tuple]
    profile: Mapping[str, str]

    __test__ = False  # keep pytest from collecting this

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "profile": dict(self.profile),
            "prefix": [e.to_json() for e in self.prefix],
            "long_term": {f: list(self.long_term.get(f, ())) for f in ITEM_FEATURES},
            "ground_truth": list(self.ground_truth),
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "TestCase":
        return cls(
            user_id=str(rec["user_id"]),
            prefix=tuple(InteractionEvent.from_json(e) for e in rec["prefix"]),
            ground_truth=tuple(rec["ground_truth"]),
            long_term={f: tuple(rec.get("long_term", {}).get(f, ())) for f in ITEM_FEATURES},
            profile=dict(rec.get("profile", {})),
        )


# ---------------------------------------------------------------------------
# files


def read_events(path) -> list[InteractionEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(InteractionEvent.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad event record ({exc})") from exc
    return events


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def write_events(path, events: Iterable[InteractionEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(_dumps(e.to_json()) + "\n")


def write_dataset(path, kind: str, records: Iterable[Mapping]) -> int:
    records = list(records)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"schema_version": SCHEMA_VERSION, "kind": kind, "count": len(records)}) + "\n")
        for rec in records:
            fh.write(_dumps(rec) + "\n")
    return len(records)


def iter_dataset(path, kind: str) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: missing schema header") from exc
        if not isinstance(header, dict) or "schema_version" not in header:
            raise SchemaError(f"{path}: missing schema header")
        if header["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(
                f"{path}: schema_version {header['schema_version']} unsupported (expected {SCHEMA_VERSION})"
            )
        if header.get("kind") != kind:
            raise SchemaError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
        for line in fh:
            if line.strip():
                yield json.loads(line)


TRAIN_FILE = "histories.jsonl"
TEST_FILE = "cases.jsonl"


def load_train_histories(data_dir) -> list[UserHistory]:
    path = Path(data_dir)
    if path.is_dir():
        path = path / TRAIN_FILE
    return [UserHistory.from_json(r) for r in iter_dataset(path, "train_histories")]


def load_test_cases(test_dir) -> list[TestCase]:
    path = Path(test_dir)
    if path.is_dir():
        path = path / TEST_FILE
    return [TestCase.from_json(r) for r in iter_dataset(path, "test_cases")]
