"""Turn a raw event log into training histories and test cases on disk."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

from .events import (
    DAY_SECONDS,
    TEST_FILE,
    TRAIN_FILE,
    InteractionEvent,
    TestCase,
    UserHistory,
    read_events,
    write_dataset,
)
from .sessions import build_user_histories, filter_dataset, make_test_cases, segment_all

log = logging.getLogger(__name__)


@dataclass
class PrepareConfig:
    gap_seconds: int = 600
    max_session_len: int = 50
    lookback_days: int = 7
    longterm_cap: int = 20
    min_item_count: int = 5
    spam_threshold: int = 1000
    min_session_len: int = 2
    test_prefix: float = 0.25
    test_days: int = 1


def split_by_day(events: list[InteractionEvent], test_days: int) -> tuple[list, list]:
    """Events on the last ``test_days`` calendar days (UTC) form the test period."""
    if not events:
        return [], []
    last_day = max(e.timestamp for e in events) // DAY_SECONDS
    cutoff = (last_day - test_days + 1) * DAY_SECONDS
    train = [e for e in events if e.timestamp < cutoff]
    test = [e for e in events if e.timestamp >= cutoff]
    return train, test


def prepare_events(events: list[InteractionEvent], cfg: PrepareConfig) -> tuple[list[UserHistory], list[TestCase], dict]:
    per_user = Counter(e.user_id for e in events)
    events = [e for e in events if per_user[e.user_id] <= cfg.spam_threshold]
    train_raw, test_raw = split_by_day(events, cfg.test_days)

    train = filter_dataset(
        train_raw,
        min_item_count=cfg.min_item_count,
        spam_threshold=cfg.spam_threshold,
        min_session_len=cfg.min_session_len,
        training=True,
        gap_seconds=cfg.gap_seconds,
        max_len=cfg.max_session_len,
    )
    train_sessions = segment_all(train, cfg.gap_seconds, cfg.max_session_len)
    train_histories = [
        h
        for h in build_user_histories(train_sessions, cfg.lookback_days, cfg.longterm_cap, all_sessions=True)
        if len(h.short_term) >= cfg.min_session_len
    ]

    # test: the user's latest session must lie in the test period; long-term
    # context comes from the (filtered) training window plus earlier test events
    test = filter_dataset(test_raw, spam_threshold=cfg.spam_threshold, training=False)
    # the item vocabulary is decided on the training window only
    kept_items = {e.item_id for e in train}
    test = [e for e in test if e.item_id in kept_items]
    test_users = {e.user_id for e in test}
    combined = [e for e in train if e.user_id in test_users] + test
    cutoff = min((e.timestamp for e in test), default=0)
    sessions = segment_all(combined, cfg.gap_seconds, cfg.max_session_len)
    test_histories = [
        h for h in build_user_histories(sessions, cfg.lookback_days, cfg.longterm_cap) if h.short_term.start >= cutoff
    ]
    cases = make_test_cases(test_histories, cfg.test_prefix)

    stats = {
        "raw_events": len(train_raw) + len(test_raw),
        "train_events": len(train),
        "train_histories": len(train_histories),
        "train_items": len({e.item_id for e in train}),
        "test_events": len(test),
        "test_cases": len(cases),
    }
    return train_histories, cases, stats


def prepare(input_path, output_dir, cfg: PrepareConfig) -> dict:
    events = read_events(input_path)
    histories, cases, stats = prepare_events(events, cfg)
    out = Path(output_dir)
    write_dataset(out / "train" / TRAIN_FILE, "train_histories", (h.to_json() for h in histories))
    write_dataset(out / "test" / TEST_FILE, "test_cases", (c.to_json() for c in cases))
    manifest = {"config": asdict(cfg), "stats": stats}
    write_dataset(out / "manifest.jsonl", "prepare_manifest", [manifest])
    log.info("prepared %s", stats)
    return stats
