"""Small deterministic models and batches for model/training tests."""

import functools

import numpy as np

from seqmatch.config import TrainingConfig
from seqmatch.data.prepare import PrepareConfig, prepare_events
from seqmatch.data.synthetic import SyntheticConfig, generate
from seqmatch.model import Batch, FeatureVocab, SDMModel
from seqmatch.training import train

SIZES = {"id": 29, "leaf_cate": 6, "cate": 3, "brand": 7, "shop": 5, "user_id": 9, "age_band": 4, "gender": 2}


def toy_vocab(sizes=SIZES):
    return FeatureVocab({f: [f"{f}{k:02d}" for k in range(n)] for f, n in sizes.items()})


def toy_model(seed=0, **overrides):
    kw = dict(d=8, heads=2, lstm_layers=2, dropout=0.2, negatives=5, seed=seed)
    kw.update(overrides)
    return SDMModel(TrainingConfig(**kw), toy_vocab())


def toy_batch(model, B=3, T=5, seed=1, n_targets=1, empty_row=True):
    """Random indices for every input; row 0 gets empty long-term subsets."""
    rng = np.random.default_rng(seed)
    V = model.vocab
    items = np.stack([rng.integers(0, V.size(f), size=(B, T)) for f in model.item_features], axis=-1)
    profile = np.stack([rng.integers(0, V.size(p), size=B) for p in model.profile_features], axis=-1)
    rows = []
    for b in range(B):
        n = 0 if (empty_row and b == 0) else int(rng.integers(1, 5))
        rows.append({f: rng.integers(1, V.size(f), size=n) for f in model.long_term_features})
    targets = rng.integers(1, V.size("id"), size=(B, T, n_targets))
    return Batch(
        items=items,
        profile=profile,
        long_term=model.pad_long_term(rows),
        targets=targets,
        target_mask=np.ones_like(targets, dtype=bool),
    )


@functools.lru_cache(maxsize=None)
def small_dataset(noise=0.0, users=60, items=60, seed=0):
    """Prepared (histories, test cases) from a small synthetic log."""
    cfg = SyntheticConfig(n_users=users, n_items=items, events_per_user=30, n_clusters=6, noise_rate=noise, seed=seed)
    events, _ = generate(cfg)
    histories, cases, _ = prepare_events(events, PrepareConfig(min_item_count=1))
    return histories, cases


@functools.lru_cache(maxsize=None)
def small_checkpoint():
    """One quick epoch on the small dataset; enough for plumbing tests."""
    histories, _ = small_dataset()
    cfg = TrainingConfig(d=8, heads=2, batch_size=32, negatives=10, epochs=1)
    return train(histories, cfg)


def request_for(case, n=5, gap=3600):
    """A serving request whose last session is the case prefix, preceded by an older session."""
    t0 = case.prefix[0].timestamp
    older = [e.to_json() | {"ts": t0 - gap - 60 * k, "session_id": "old"} for k, e in enumerate(case.prefix[:2])]
    return {
        "user_id": case.user_id,
        "profile": dict(case.profile),
        "events": older + [e.to_json() for e in case.prefix],
        "n": n,
    }
