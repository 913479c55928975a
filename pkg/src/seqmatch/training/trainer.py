"""Mini-batch training loop: length buckets, sampled softmax, clipping, Adam."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .. import core
from ..config import TrainingConfig
from ..core import AdamState, Tape, adam_step, clip_global_norm
from ..data.events import DEFAULT_PROFILE_FEATURES, UserHistory
from ..model.embedding import FeatureVocab
from ..model.sdm import Batch, SDMModel
from .checkpoint import Checkpoint
from .loss import sampled_softmax_loss
from .sampler import LogUniformSampler


class TrainingError(RuntimeError):
    """Training diverged or was given nothing to learn from."""


@dataclass
class Bucket:
    """All training sequences of one prefix length ``T``."""

    T: int
    items: np.ndarray  # (N, T, n_features)
    targets: np.ndarray  # (N, T, P)
    target_mask: np.ndarray  # (N, T, P)
    profile: np.ndarray  # (N, n_profile)
    long_term: list  # per row: feature -> index array

    def __len__(self) -> int:
        return self.items.shape[0]

    def batch(self, model: SDMModel, rows: np.ndarray) -> Batch:
        return Batch(
            items=self.items[rows],
            profile=self.profile[rows],
            long_term=model.pad_long_term([self.long_term[r] for r in rows]),
            targets=self.targets[rows],
            target_mask=self.target_mask[rows],
        )


def _targets(ids: np.ndarray, n_targets: int, last_only: bool) -> tuple[np.ndarray, np.ndarray]:
    """Position ``t`` of the prefix predicts the next ``n_targets`` items (duplicates dropped)."""
    T = len(ids) - 1
    tgt = np.zeros((T, n_targets), dtype=np.int64)
    mask = np.zeros((T, n_targets), dtype=bool)
    for t in range(T):
        if last_only and t != T - 1:
            continue
        seen = set()
        for k, item in enumerate(ids[t + 1 : t + 1 + n_targets]):
            if item in seen:
                continue
            seen.add(item)
            tgt[t, k] = item
            mask[t, k] = True
    return tgt, mask


def build_buckets(model: SDMModel, histories: Sequence[UserHistory]) -> list[Bucket]:
    cfg = model.config
    grouped: dict[int, list] = {}
    id_col = model.item_features.index("id")
    for h in histories:
        events = h.short_term.events
        if len(events) < 2:
            continue
        feats = model.featurize_events(events)
        tgt, mask = _targets(feats[:, id_col], cfg.n_targets, cfg.train_last_only)
        grouped.setdefault(len(events) - 1, []).append(
            (feats[:-1], tgt, mask, model.featurize_profile(h.profile), model.featurize_long_term_row(h.long_term))
        )
    buckets = []
    for T in sorted(grouped):
        rows = grouped[T]
        buckets.append(
            Bucket(
                T=T,
                items=np.stack([r[0] for r in rows]),
                targets=np.stack([r[1] for r in rows]),
                target_mask=np.stack([r[2] for r in rows]),
                profile=np.stack([r[3] for r in rows]),
                long_term=[r[4] for r in rows],
            )
        )
    return buckets


def item_counts(buckets: Sequence[Bucket], n_items: int, id_col: int = 0) -> np.ndarray:
    """Occurrences of each item index across all training sequences."""
    counts = np.zeros(n_items, dtype=np.int64)
    for b in buckets:
        np.add.at(counts, b.items[:, :, id_col].ravel(), 1)
        # the final item of each sequence only shows up as a target
        np.add.at(counts, b.targets[:, -1, 0][b.target_mask[:, -1, 0]], 1)
    return counts


def epoch_batches(buckets: Sequence[Bucket], batch_size: int, rng: np.random.Generator) -> list[tuple[int, np.ndarray]]:
    """Shuffle within each length bucket, chunk, then shuffle the order of chunks."""
    batches = []
    for k, b in enumerate(buckets):
        perm = rng.permutation(len(b))
        for start in range(0, len(b), batch_size):
            batches.append((k, perm[start : start + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def batch_loss(
    model: SDMModel,
    batch: Batch,
    sampler: LogUniformSampler,
    rng: np.random.Generator,
    training: bool = True,
) -> Optional[core.Tensor]:
    cfg = model.config
    res = model.forward(batch, training=training, rng=rng)
    B, T, d = res.behaviour.shape
    P = batch.targets.shape[-1]
    tmask = batch.target_mask.reshape(B * T, P)
    rows = np.flatnonzero(tmask.any(axis=1))
    if rows.size == 0:
        return None
    o = core.reshape(res.behaviour, (B * T, d))[rows]
    n_neg = min(cfg.negatives, sampler.V)
    negatives, expected = sampler.sample(n_neg, rng)
    return sampled_softmax_loss(
        o,
        model.output_matrix(),
        batch.targets.reshape(B * T, P)[rows],
        tmask[rows],
        negatives,
        expected if cfg.logit_correction else None,
    )


def train_step(model: SDMModel, batch: Batch, sampler, opt: AdamState, rng) -> Optional[float]:
    with Tape() as tape:
        loss = batch_loss(model, batch, sampler, rng)
    if loss is None:
        return None
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at optimizer step {opt.t + 1}")
    by_id = tape.backward(loss)
    grads = {name: by_id.get(id(p)) for name, p in model.params.items()}
    grads = clip_global_norm(grads, model.config.clip_norm) if model.config.clip_norm > 0 else grads
    adam_step(opt, model.params, grads)
    return value


def train(
    histories: Sequence[UserHistory],
    config: TrainingConfig,
    vocab: Optional[FeatureVocab] = None,
    profile_features: Sequence[str] = DEFAULT_PROFILE_FEATURES,
    log: Optional[Callable[[dict], None]] = None,
    epochs: Optional[int] = None,
    checkpoint: Optional[Checkpoint] = None,
) -> Checkpoint:
    """Fit a model on training histories and return it as a checkpoint.

    ``log`` receives ``{"epoch", "loss", "wall_ms"}`` after every epoch.
    Pass ``checkpoint`` to continue training an existing model.
    """
    if checkpoint is None:
        if vocab is None:
            vocab = FeatureVocab.build(histories, profile_features)
        model = SDMModel(config, vocab, profile_features)
        opt = AdamState(lr=config.lr)
        history_log: list = []
    else:
        model = checkpoint.model
        opt = checkpoint.optimizer or AdamState(lr=config.lr)
        history_log = list(checkpoint.metadata.get("epochs", []))
    buckets = build_buckets(model, histories)
    if not buckets:
        raise TrainingError("no training sequence has two or more events")
    counts = item_counts(buckets, model.n_items, model.item_features.index("id"))
    sampler = LogUniformSampler.from_counts(counts)
    rng = np.random.default_rng(config.seed + len(history_log))
    n_epochs = config.epochs if epochs is None else epochs
    for _ in range(n_epochs):
        start = time.perf_counter()
        total, n = 0.0, 0
        for k, rows in epoch_batches(buckets, config.batch_size, rng):
            value = train_step(model, buckets[k].batch(model, rows), sampler, opt, rng)
            if value is not None:
                total += value * len(rows)
                n += len(rows)
        entry = {
            "epoch": len(history_log) + 1,
            "loss": total / max(n, 1),
            "wall_ms": round((time.perf_counter() - start) * 1000.0, 3),
        }
        history_log.append({"epoch": entry["epoch"], "loss": entry["loss"]})
        if log is not None:
            log(entry)
    return Checkpoint(model, opt, {"epochs": history_log})
