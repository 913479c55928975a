import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from golden import SESSION_CASES, session_events
from seqmatch.data import (
    InteractionEvent,
    PrepareConfig,
    SchemaError,
    Session,
    SyntheticConfig,
    build_user_histories,
    filter_dataset,
    generate,
    load_test_cases,
    load_train_histories,
    make_test_cases,
    make_training_examples,
    prepare,
    prepare_events,
    read_events,
    segment_sessions,
    write_events,
    write_synthetic,
)
from seqmatch.data.events import DAY_SECONDS, UserHistory, iter_dataset, write_dataset
from seqmatch.data.sessions import long_term_subsets

DAY = DAY_SECONDS


def ev(ts, item="a", user="u1", sid=None, **feats):
    return InteractionEvent(user, item, ts, sid, feats)


# -- events -------------------------------------------------------------------


def test_event_always_carries_id_feature():
    e = InteractionEvent("u", "x", 5, item_features={"brand": "b"})
    assert e.item_features == {"brand": "b", "id": "x"}


@pytest.mark.parametrize("kwargs", [{"item_id": ""}, {"timestamp": -1}])
def test_event_invariants(kwargs):
    base = {"user_id": "u", "item_id": "x", "timestamp": 0}
    base.update(kwargs)
    with pytest.raises(ValueError):
        InteractionEvent(**base)


def test_event_json_round_trip():
    rec = {"user_id": "u", "item_id": "x", "ts": 9, "session_id": "s", "brand": "b", "shop": "s1", "profile": {"gender": "f"}}
    e = InteractionEvent.from_json(rec)
    assert e.to_json() == rec
    assert InteractionEvent.from_json(e.to_json()) == e


def test_read_write_events(tmp_path):
    events = [ev(1, "a"), ev(2, "b", sid="s", brand="x")]
    path = tmp_path / "log.jsonl"
    write_events(path, events)
    assert read_events(path) == events


def test_read_events_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"user_id": "u", "item_id": "a", "ts": 1}\n{"user_id": "u"}\n')
    with pytest.raises(ValueError, match=":2:"):
        read_events(path)


def test_dataset_header_checked(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(path, "train_histories", [{"x": 1}])
    assert json.loads(path.read_text().splitlines()[0])["schema_version"] == 1
    assert list(iter_dataset(path, "train_histories")) == [{"x": 1}]
    with pytest.raises(SchemaError, match="kind"):
        list(iter_dataset(path, "test_cases"))
    path.write_text('{"schema_version": 99, "kind": "train_histories"}\n')
    with pytest.raises(SchemaError, match="99"):
        list(iter_dataset(path, "train_histories"))
    path.write_text('{"x": 1}\n')
    with pytest.raises(SchemaError, match="header"):
        list(iter_dataset(path, "train_histories"))


# -- segmentation -----------------------------------------------------------------


@pytest.mark.parametrize("name,rows,gap,max_len,expected", SESSION_CASES, ids=[c[0] for c in SESSION_CASES])
def test_sessionization_golden(name, rows, gap, max_len, expected):
    events = session_events(rows)
    sessions = segment_sessions(events, gap, max_len)
    assert [[int(e.item_id[1:]) for e in s.events] for s in sessions] == expected


def test_segment_rejects_mixed_users():
    with pytest.raises(ValueError):
        segment_sessions([ev(0, user="a"), ev(1, user="b")])


event_lists = st.lists(
    st.tuples(st.integers(0, 5000), st.sampled_from([None, "a", "b", "c"])),
    min_size=0,
    max_size=120,
)


@settings(max_examples=60, deadline=None)
@given(event_lists, st.integers(1, 900), st.integers(1, 60))
def test_resegmenting_sessions_is_a_noop(rows, gap, max_len):
    sessions = segment_sessions(session_events(rows), gap, max_len)
    again = [s2 for s in sessions for s2 in segment_sessions(list(s.events), gap, max_len)]
    assert again == sessions


@settings(max_examples=60, deadline=None)
@given(event_lists, st.integers(1, 900), st.integers(1, 60))
def test_sessions_respect_invariants(rows, gap, max_len):
    sessions = segment_sessions(session_events(rows), gap, max_len)
    assert sum(len(s) for s in sessions) == len(rows)
    for s in sessions:
        assert 1 <= len(s) <= max_len
        ts = [e.timestamp for e in s.events]
        assert ts == sorted(ts)
        assert all(b - a < gap for a, b in zip(ts, ts[1:]))
    for a, b in zip(sessions, sessions[1:]):
        assert a.events[-1].timestamp <= b.events[0].timestamp


# -- histories ---------------------------------------------------------------------


def test_single_session_has_empty_long_term():
    (h,) = build_user_histories([Session("u1", (ev(0), ev(10)))])
    assert all(v == () for v in h.long_term.values())
    assert h.profile["user_id"] == "u1"


def test_long_term_dedup_keeps_most_recent_first():
    earlier = [ev(100, "p", shop="A"), ev(200, "q", shop="B"), ev(300, "r", shop="A")]
    lt = long_term_subsets(earlier, before_ts=1000)
    assert lt["shop"] == ("A", "B")
    assert lt["id"] == ("r", "q", "p")


def test_long_term_cap_keeps_newest():
    earlier = [ev(k, f"i{k}", brand=f"b{k}") for k in range(25)]
    lt = long_term_subsets(earlier, before_ts=100, cap=20)
    assert lt["brand"] == tuple(f"b{k}" for k in range(24, 4, -1))


def test_long_term_lookback_window():
    start = 10 * DAY
    earlier = [ev(start - 8 * DAY, "old"), ev(start - 7 * DAY, "edge"), ev(start - 1, "new")]
    assert long_term_subsets(earlier, start, lookback_days=7)["id"] == ("new", "edge")


def test_latest_session_is_short_term():
    s1 = Session("u1", (ev(0, "a", shop="A"), ev(5, "b", shop="B")))
    s2 = Session("u1", (ev(5000, "c"), ev(5010, "d")))
    (h,) = build_user_histories([s2, s1])
    assert h.short_term == s2
    assert h.long_term["id"] == ("b", "a")
    assert h.long_term["shop"] == ("B", "A")
    both = build_user_histories([s1, s2], all_sessions=True)
    assert [x.short_term for x in both] == [s1, s2]


def test_history_json_round_trip():
    s1 = Session("u1", (ev(0, "a", shop="A"),))
    s2 = Session("u1", (ev(5000, "c", brand="z"),))
    (h,) = build_user_histories([s1, s2])
    assert UserHistory.from_json(json.loads(json.dumps(h.to_json()))) == h


# -- filtering ---------------------------------------------------------------------


def _sessions_of(items, user="u1", start=0):
    return [ev(start + 10 * k, it, user=user) for k, it in enumerate(items)]


def test_filter_drops_rare_item():
    events = _sessions_of(["a"] * 5 + ["b"] * 4)
    kept = filter_dataset(events)
    assert {e.item_id for e in kept} == {"a"}


def test_filter_drops_spam_user():
    events = _sessions_of(["a"] * 1001, user="spam") + _sessions_of(["a"] * 6, user="ok", start=0)
    kept = filter_dataset(events)
    assert {e.user_id for e in kept} == {"ok"}


def test_filter_drops_single_event_training_session():
    events = _sessions_of(["a"] * 5) + [ev(100_000, "a")]
    kept = filter_dataset(events)
    assert len(kept) == 5
    # test data keeps short sessions and rare items
    assert len(filter_dataset([ev(0, "z")], training=False)) == 1


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["u1", "u2", "u3"]), st.sampled_from("abcdefg"), st.integers(0, 20_000)),
        max_size=150,
    ),
    st.integers(1, 6),
    st.integers(1, 60),
)
def test_filter_is_idempotent(rows, min_count, spam):
    events = [ev(ts, it, user=u) for u, it, ts in rows]
    once = filter_dataset(events, min_item_count=min_count, spam_threshold=spam)
    assert filter_dataset(once, min_item_count=min_count, spam_threshold=spam) == once


# -- examples and test cases -------------------------------------------------------


def _history(items):
    return UserHistory("u1", Session("u1", tuple(ev(k, it) for k, it in enumerate(items))), {}, {})


def test_training_examples_next_item():
    ex = make_training_examples(_history("abc"))
    assert [([e.item_id for e in x.prefix], x.targets) for x in ex] == [(["a"], ("b",)), (["a", "b"], ("c",))]


def test_training_examples_truncated_targets():
    ex = make_training_examples(_history("abcd"), n_targets=5)
    assert ex[0].targets == ("b", "c", "d")
    assert len(make_training_examples(_history("ab"))) == 1
    assert make_training_examples(_history("a")) == []


@given(st.text("abcde", min_size=1, max_size=20), st.integers(1, 6))
def test_training_targets_follow_prefix(items, n):
    for x in make_training_examples(_history(items), n):
        t = len(x.prefix)
        assert 1 <= len(x.targets) <= n
        assert list(x.targets) == list(items[t : t + len(x.targets)])


def test_test_case_prefix_is_ceiling():
    (c,) = make_test_cases([_history("abcdefgh")])
    assert [e.item_id for e in c.prefix] == ["a", "b"]
    assert c.ground_truth == tuple("cdefgh")


def test_test_case_ground_truth_dedup():
    (c,) = make_test_cases([_history("axyx")])
    assert c.ground_truth == ("x", "y")
    (c,) = make_test_cases([_history("abxax")])
    assert [e.item_id for e in c.prefix] == ["a", "b"]
    assert c.ground_truth == ("x",)


def test_test_case_dropped_when_truth_empty():
    assert make_test_cases([_history("aaaa")]) == []


def test_prefix_minimum_one():
    (c,) = make_test_cases([_history("ab")], prefix_fraction=0.01)
    assert len(c.prefix) == 1


# -- synthetic generator and prepare -------------------------------------------------


def test_synthetic_record_count():
    events, manifest = generate(SyntheticConfig(n_users=1000, events_per_user=50))
    assert len(events) == 50_000 == manifest["n_records"]


def test_synthetic_noise_free_cycles_are_deterministic():
    events, manifest = generate(SyntheticConfig(n_users=30, noise_rate=0.0))
    succ = manifest["successor"]
    sessions = [s for u_events in _by_user(events).values() for s in segment_sessions(u_events)]
    pairs = [(a.item_id, b.item_id) for s in sessions for a, b in zip(s.events, s.events[1:])]
    assert pairs and all(succ[a] == b for a, b in pairs)


def _by_user(events):
    out = {}
    for e in events:
        out.setdefault(e.user_id, []).append(e)
    return out


def test_synthetic_same_seed_same_bytes(tmp_path):
    cfg = SyntheticConfig(n_users=20)
    write_synthetic(cfg, tmp_path / "a.jsonl")
    write_synthetic(cfg, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.jsonl.manifest.json").exists()


def test_synthetic_longterm_layout():
    events, manifest = generate(SyntheticConfig(scenario="longterm", n_users=10, n_clusters=8))
    assert len(manifest["groups"]["hub"]) == 40
    assert all(len(u["preferred"]) == 1 for u in manifest["users"])


def test_synthetic_rejects_unknown_scenario():
    with pytest.raises(ValueError):
        SyntheticConfig(scenario="nope")


def test_prepare_writes_versioned_datasets(tmp_path):
    write_synthetic(SyntheticConfig(n_users=60), tmp_path / "ev.jsonl")
    stats = prepare(tmp_path / "ev.jsonl", tmp_path / "out", PrepareConfig())
    histories = load_train_histories(tmp_path / "out" / "train")
    cases = load_test_cases(tmp_path / "out" / "test")
    assert len(histories) == stats["train_histories"] > 0
    assert len(cases) == stats["test_cases"] > 0
    for name in ("train/histories.jsonl", "test/cases.jsonl"):
        head = json.loads((tmp_path / "out" / name).read_text().splitlines()[0])
        assert head["schema_version"] == 1


def test_prepared_histories_satisfy_invariants():
    events, _ = generate(SyntheticConfig(n_users=80, noise_rate=0.2))
    cfg = PrepareConfig()
    histories, cases, _ = prepare_events(events, cfg)
    train_items = set()
    for h in histories:
        ts = [e.timestamp for e in h.short_term.events]
        assert 2 <= len(ts) <= 50 and ts == sorted(ts)
        for f, values in h.long_term.items():
            assert len(values) <= cfg.longterm_cap
            assert len(set(values)) == len(values)
        train_items.update(e.item_id for e in h.short_term.events)
    for c in cases:
        fed = {e.item_id for e in c.prefix}
        assert c.ground_truth and not fed & set(c.ground_truth)
        assert set(c.ground_truth) <= train_items
