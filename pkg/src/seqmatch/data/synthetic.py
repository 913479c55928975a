"""Synthetic interaction logs with a known, learnable structure.

Two scenarios:

``transitions``
    Items are partitioned into clusters; inside each cluster the items form a
    fixed cycle and a session walks along it. With probability ``noise_rate``
    a step jumps to a uniformly random item instead (and the walk continues
    from there). The next item is therefore predictable from the current one.

``longterm``
    A pool of ``n_hub_items`` generic items plus categories of regular items.
    Every user has one preferred category. An *ambiguous* session opens with
    ``hub_prefix`` hub items and then browses the preferred category; an
    *explicit* session browses some other category from its first item on.
    After a hub-only prefix the short-term session says nothing about what
    follows; the long-term history does.

The last day holds exactly one session per user; earlier days hold the
training traffic. The planted structure goes to a sidecar manifest.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .events import DAY_SECONDS, InteractionEvent, write_events

BASE_TS = 19_676 * DAY_SECONDS  # a UTC midnight in Nov 2023


@dataclass
class SyntheticConfig:
    scenario: str = "transitions"
    n_users: int = 500
    n_items: int = 200
    events_per_user: int = 60
    session_len_min: int = 4
    session_len_max: int = 8
    test_session_len: int = 3
    n_clusters: int = 20
    noise_rate: float = 0.1
    train_days: int = 7
    n_hub_items: int = 40
    hub_prefix: int = 2
    ambiguous_fraction: float = 0.5
    with_session_ids: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in ("transitions", "longterm"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.test_session_len >= self.events_per_user:
            raise ValueError("events_per_user must exceed test_session_len")


AGE_BANDS = ("18-24", "25-29", "30-34", "35-44", "45+")
GENDERS = ("f", "m")


def _item_features(item: str, group: str, j: int, n_groups_per_cate: int, gnum: int) -> dict:
    return {
        "leaf_cate": f"leaf_{group}",
        "cate": f"cate_{gnum // n_groups_per_cate}" if group != "hub" else "cate_hub",
        "brand": f"brand_{group}_{j % 3}",
        "shop": f"shop_{group}_{j % 2}",
    }


def _layout(cfg: SyntheticConfig, rng: np.random.Generator):
    items = [f"i{k:04d}" for k in range(cfg.n_items)]
    perm = [items[k] for k in rng.permutation(cfg.n_items)]
    features: dict[str, dict] = {}
    groups: dict[str, list[str]] = {}
    if cfg.scenario == "longterm":
        hub, rest = perm[: cfg.n_hub_items], perm[cfg.n_hub_items :]
        groups["hub"] = hub
        for j, it in enumerate(hub):
            features[it] = _item_features(it, "hub", j, 4, 0)
    else:
        rest = perm
    for c in range(cfg.n_clusters):
        members = rest[c :: cfg.n_clusters]
        groups[f"c{c}"] = members
        for j, it in enumerate(members):
            features[it] = _item_features(it, f"c{c}", j, 4, c)
    return items, features, groups


def _sessions_lengths(cfg: SyntheticConfig, rng: np.random.Generator) -> list[int]:
    budget = cfg.events_per_user - cfg.test_session_len
    lengths = []
    while budget > 0:
        n = int(rng.integers(cfg.session_len_min, cfg.session_len_max + 1))
        n = min(n, budget)
        lengths.append(n)
        budget -= n
    return lengths


def generate(cfg: SyntheticConfig) -> tuple[list[InteractionEvent], dict]:
    rng = np.random.default_rng(cfg.seed)
    items, features, groups = _layout(cfg, rng)
    clusters = [g for g in groups if g != "hub"]

    successor = {}
    if cfg.scenario == "transitions":
        for g in clusters:
            members = groups[g]
            for j, it in enumerate(members):
                successor[it] = members[(j + 1) % len(members)]

    # slot spacing leaves a gap of at least 20 minutes between sessions
    longest = max(cfg.session_len_max, cfg.test_session_len)
    spacing = 600 + 180 * longest + 1200
    users = []
    events: list[InteractionEvent] = []
    for u in range(cfg.n_users):
        uid = f"u{u:05d}"
        profile = {"age_band": AGE_BANDS[int(rng.integers(len(AGE_BANDS)))], "gender": GENDERS[int(rng.integers(2))]}
        if cfg.scenario == "transitions":
            prefs = [clusters[int(k)] for k in rng.choice(len(clusters), size=min(2, len(clusters)), replace=False)]
        else:
            prefs = [clusters[int(rng.integers(len(clusters)))]]
        users.append({"user_id": uid, "profile": profile, "preferred": prefs})

        lengths = _sessions_lengths(cfg, rng)
        per_day = -(-len(lengths) // cfg.train_days)
        if 8 * 3600 + per_day * spacing > DAY_SECONDS:
            raise ValueError("too many sessions per day; raise session lengths or train_days")
        plan = [(k % cfg.train_days, k // cfg.train_days, n) for k, n in enumerate(lengths)]
        plan.append((cfg.train_days, 0, cfg.test_session_len))
        for s_idx, (day, slot, n) in enumerate(plan):
            seq = _walk(cfg, rng, n, prefs, groups, clusters, successor, items)
            ts = BASE_TS + day * DAY_SECONDS + 8 * 3600 + slot * spacing + int(rng.integers(0, 600))
            sid = f"{uid}-s{s_idx}" if cfg.with_session_ids else None
            for it in seq:
                events.append(
                    InteractionEvent(
                        user_id=uid,
                        item_id=it,
                        timestamp=ts,
                        session_id=sid,
                        item_features=features[it],
                        profile_features=profile,
                    )
                )
                ts += int(rng.integers(20, 180))

    manifest = {
        "config": asdict(cfg),
        "n_records": len(events),
        "item_features": features,
        "groups": groups,
        "successor": successor,
        "users": users,
    }
    return events, manifest


def _walk(cfg, rng, n, prefs, groups, clusters, successor, items) -> list[str]:
    if cfg.scenario == "transitions":
        members = groups[prefs[int(rng.integers(len(prefs)))]]
        cur = members[int(rng.integers(len(members)))]
        seq = [cur]
        while len(seq) < n:
            if rng.random() < cfg.noise_rate:
                cur = items[int(rng.integers(len(items)))]
            else:
                cur = successor[cur]
            seq.append(cur)
        return seq

    hub = groups["hub"]
    if rng.random() < cfg.ambiguous_fraction:
        n_hub = min(cfg.hub_prefix, n - 1)
        head = [hub[int(k)] for k in rng.choice(len(hub), size=n_hub, replace=False)]
        body = groups[prefs[0]]
    else:
        head = []
        others = [c for c in clusters if c != prefs[0]]
        body = groups[others[int(rng.integers(len(others)))]]
    picks = rng.choice(len(body), size=min(n - len(head), len(body)), replace=False)
    seq = head + [body[int(k)] for k in picks]
    # noise replaces an item by a uniformly random one
    return [items[int(rng.integers(len(items)))] if rng.random() < cfg.noise_rate else it for it in seq]


def write_synthetic(cfg: SyntheticConfig, path) -> dict:
    """Write the event log to ``path`` and the manifest to ``<path>.manifest.json``."""
    events, manifest = generate(cfg)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_events(path, events)
    with open(manifest_path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")
