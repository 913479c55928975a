"""Session segmentation, history construction, filtering and example building."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

from .events import (
    DAY_SECONDS,
    ITEM_FEATURES,
    InteractionEvent,
    Session,
    TestCase,
    TrainingExample,
    UserHistory,
)

GAP_SECONDS = 600
MAX_SESSION_LEN = 50
LOOKBACK_DAYS = 7
LONGTERM_CAP = 20


def sort_events(events: Iterable[InteractionEvent]) -> list[InteractionEvent]:
    # stable: equal timestamps keep input order
    return sorted(events, key=lambda e: e.timestamp)


def segment_sessions(
    events: Sequence[InteractionEvent],
    gap_seconds: int = GAP_SECONDS,
    max_len: int = MAX_SESSION_LEN,
) -> list[Session]:
    """Split one user's events into sessions.

    A new session starts when both neighbours carry a backend session id and
    the ids differ, when the gap to the previous event is ``>= gap_seconds``,
    or when the running session already holds ``max_len`` events.
    """
    if not events:
        return []
    ordered = sort_events(events)
    user = ordered[0].user_id
    sessions: list[Session] = []
    current = [ordered[0]]
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.user_id != user:
            raise ValueError("segment_sessions expects events of a single user")
        id_break = prev.session_id is not None and cur.session_id is not None and prev.session_id != cur.session_id
        if id_break or cur.timestamp - prev.timestamp >= gap_seconds or len(current) >= max_len:
            sessions.append(Session(user, tuple(current)))
            current = []
        current.append(cur)
    sessions.append(Session(user, tuple(current)))
    return sessions


def group_by_user(events: Iterable[InteractionEvent]) -> dict[str, list[InteractionEvent]]:
    grouped: dict[str, list[InteractionEvent]] = defaultdict(list)
    for e in events:
        grouped[e.user_id].append(e)
    return dict(grouped)


def segment_all(events: Iterable[InteractionEvent], gap_seconds=GAP_SECONDS, max_len=MAX_SESSION_LEN) -> list[Session]:
    out = []
    for user_events in group_by_user(events).values():
        out.extend(segment_sessions(user_events, gap_seconds, max_len))
    return out


def long_term_subsets(
    earlier: Sequence[InteractionEvent],
    before_ts: int,
    lookback_days: int = LOOKBACK_DAYS,
    cap: int = LONGTERM_CAP,
) -> dict[str, tuple]:
    """Per-feature value lists, newest first, deduplicated, truncated to ``cap``."""
    horizon = before_ts - lookback_days * DAY_SECONDS
    window = [e for e in earlier if horizon <= e.timestamp <= before_ts]
    subsets = {}
    for f in ITEM_FEATURES:
        seen: list[str] = []
        for e in reversed(window):
            v = e.item_features.get(f)
            if v is None or v in seen:
                continue
            seen.append(v)
            if len(seen) == cap:
                break
        subsets[f] = tuple(seen)
    return subsets


def _history(user: str, target: Session, earlier: list, lookback_days: int, cap: int) -> UserHistory:
    last = target.events[-1]
    profile = dict(last.profile_features)
    profile.setdefault("user_id", user)
    return UserHistory(
        user_id=user,
        short_term=target,
        long_term=long_term_subsets(earlier, target.start, lookback_days, cap),
        profile=profile,
    )


def build_user_histories(
    sessions: Iterable[Session],
    lookback_days: int = LOOKBACK_DAYS,
    longterm_cap: int = LONGTERM_CAP,
    all_sessions: bool = False,
) -> list[UserHistory]:
    """Latest session per user as short-term, earlier in-window events as long-term.

    With ``all_sessions`` every session yields a history (used to build the
    training set, where each past session is its own short-term sequence).
    """
    per_user: dict[str, list[Session]] = defaultdict(list)
    for s in sessions:
        if len(s):
            per_user[s.user_id].append(s)
    out = []
    for user, user_sessions in per_user.items():
        user_sessions.sort(key=lambda s: s.start)
        targets = range(len(user_sessions)) if all_sessions else [len(user_sessions) - 1]
        for k in targets:
            earlier = [e for s in user_sessions[:k] for e in s.events]
            out.append(_history(user, user_sessions[k], earlier, lookback_days, longterm_cap))
    return out


def filter_dataset(
    events: Sequence[InteractionEvent],
    min_item_count: int = 5,
    spam_threshold: int = 1000,
    min_session_len: int = 2,
    training: bool = True,
    gap_seconds: int = GAP_SECONDS,
    max_len: int = MAX_SESSION_LEN,
) -> list[InteractionEvent]:
    """Drop spam users, rare items and (training only) short sessions.

    The three rules interact (dropping a rare item can shorten a session
    below the minimum, which can make another item rare), so they are
    applied until nothing changes. That makes the filter idempotent.
    Test data (``training=False``) only gets the spam rule.
    """
    current = list(events)
    while True:
        per_user = Counter(e.user_id for e in current)
        kept = [e for e in current if per_user[e.user_id] <= spam_threshold]
        if training:
            per_item = Counter(e.item_id for e in kept)
            kept = [e for e in kept if per_item[e.item_id] >= min_item_count]
            long_enough = []
            for user_events in group_by_user(kept).values():
                for s in segment_sessions(user_events, gap_seconds, max_len):
                    if len(s) >= min_session_len:
                        long_enough.extend(s.events)
            kept_ids = {id(e) for e in long_enough}
            kept = [e for e in kept if id(e) in kept_ids]
        if len(kept) == len(current):
            return kept
        current = kept


def make_training_examples(history: UserHistory, n_targets: int = 1) -> list[TrainingExample]:
    """One example per position ``t`` with targets ``i_{t+1} .. i_{t+n_targets}``."""
    events = history.short_term.events
    m = len(events)
    out = []
    for t in range(1, m):
        targets = tuple(e.item_id for e in events[t : min(t + n_targets, m)])
        out.append(TrainingExample(history.user_id, events[:t], targets, history.long_term, history.profile))
    return out


def make_test_cases(histories: Iterable[UserHistory], prefix_fraction: float = 0.25) -> list[TestCase]:
    """Feed the first ceil(fraction*m) items; the rest, deduplicated, is ground truth."""
    cases = []
    for h in histories:
        events = h.short_term.events
        m = len(events)
        # tolerance keeps e.g. 0.1*30 from rounding up to 4
        n_fed = min(m, max(1, math.ceil(prefix_fraction * m - 1e-9)))
        fed = events[:n_fed]
        fed_ids = {e.item_id for e in fed}
        truth: list[str] = []
        for e in events[n_fed:]:
            if e.item_id not in fed_ids and e.item_id not in truth:
                truth.append(e.item_id)
        if truth:
            cases.append(TestCase(h.user_id, fed, tuple(truth), h.long_term, h.profile))
    return cases
