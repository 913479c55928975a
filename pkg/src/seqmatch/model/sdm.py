"""The user prediction network: parameters, featurisation and the full forward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .. import core
from ..config import TrainingConfig
from ..core import Tensor, orthogonal_init
from ..data.events import DEFAULT_PROFILE_FEATURES, ITEM_FEATURES, InteractionEvent
from .embedding import FeatureVocab, embed_item, embed_user_profile, split_widths
from .long_term import FusionParams, LongTermParams, encode_long_term, gated_fuse
from .short_term import AttentionParams, LstmLayer, causal_user_attention, lstm_forward, multi_head_self_attention


@dataclass
class Batch:
    """Sequences of one common length ``T`` plus per-row context."""

    items: np.ndarray  # (B, T, n_item_features)
    profile: np.ndarray  # (B, n_profile_features)
    long_term: dict  # feature -> (idx (B, L), mask (B, L))
    targets: Optional[np.ndarray] = None  # (B, T, P) item-id indices
    target_mask: Optional[np.ndarray] = None  # (B, T, P)

    @property
    def size(self) -> int:
        return self.items.shape[0]


@dataclass
class ForwardResult:
    behaviour: Tensor  # (B, T, d)
    short_term: Tensor
    long_term: Optional[Tensor]
    self_attention: np.ndarray  # (B, heads, T, T)
    user_attention: Optional[np.ndarray] = None


class SDMModel:
    def __init__(
        self,
        config: TrainingConfig,
        vocab: FeatureVocab,
        profile_features: Sequence[str] = DEFAULT_PROFILE_FEATURES,
        params: Optional[Mapping[str, Tensor]] = None,
    ):
        self.config = config
        self.vocab = vocab
        self.profile_features_declared = tuple(profile_features)
        if config.side_info:
            self.item_features = tuple(ITEM_FEATURES)
            self.profile_features = tuple(profile_features)
        else:
            # id-only ablation: no side information for items or users
            self.item_features = ("id",)
            self.profile_features = (profile_features[0],)
        self.long_term_features = self.item_features
        self.item_widths = dict(zip(self.item_features, split_widths(config.d, len(self.item_features))))
        self.profile_widths = dict(zip(self.profile_features, split_widths(config.d, len(self.profile_features))))
        self.params: dict[str, Tensor] = dict(params) if params is not None else self._init_params()
        for name, p in self.params.items():
            p.requires_grad = True
            p.name = name

    # -- parameters ---------------------------------------------------------

    def _init_params(self) -> dict[str, Tensor]:
        cfg = self.config
        d = cfg.d
        rng = np.random.default_rng(cfg.seed)
        P: dict[str, Tensor] = {}

        def ortho(r, c):
            return orthogonal_init(r, c, rng)

        def blocks(r, c, k):
            return Tensor(np.concatenate([ortho(r, c).data for _ in range(k)], axis=1))

        for f in self.item_features:
            P[f"emb.item.{f}"] = ortho(self.vocab.size(f), self.item_widths[f])
        for p in self.profile_features:
            P[f"emb.profile.{p}"] = ortho(self.vocab.size(p), self.profile_widths[p])
        for layer in range(cfg.lstm_layers):
            P[f"lstm.{layer}.W_in"] = blocks(d, d, 4)
            P[f"lstm.{layer}.W_rec"] = blocks(d, d, 4)
            P[f"lstm.{layer}.b"] = Tensor(np.zeros(4 * d))
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            P[f"attn.{name}"] = ortho(d, d)
        P["attn.ln_gain"] = Tensor(np.ones(d))
        P["attn.ln_bias"] = Tensor(np.zeros(d))
        mode = cfg.effective_fusion
        if mode != "short_only":
            for f in self.long_term_features:
                P[f"long.proj.{f}"] = ortho(self.item_widths[f], d)
            P["long.W_p"] = ortho(len(self.long_term_features) * d, d)
            P["long.b_p"] = Tensor(np.zeros(d))
        if mode == "gated":
            for name in ("W_user", "W_short", "W_long"):
                P[f"gate.{name}"] = ortho(d, d)
            P["gate.b"] = Tensor(np.zeros(d))
        elif mode == "concat":
            P["concat.W"] = ortho(2 * d, d)
            P["concat.b"] = Tensor(np.zeros(d))
        if not cfg.tie_embeddings:
            P["output.V"] = ortho(d, self.vocab.size("id"))
        return P

    @property
    def n_items(self) -> int:
        return self.vocab.size("id")

    def output_matrix(self) -> Tensor:
        """Item embedding matrix V, shape (d, |I|)."""
        if self.config.tie_embeddings:
            return core.transpose(self.params["emb.item.id"])
        return self.params["output.V"]

    def _tables(self, prefix: str, features) -> dict:
        return {f: self.params[f"{prefix}.{f}"] for f in features}

    def lstm_layers(self) -> list[LstmLayer]:
        P = self.params
        return [
            LstmLayer(P[f"lstm.{k}.W_in"], P[f"lstm.{k}.W_rec"], P[f"lstm.{k}.b"])
            for k in range(self.config.lstm_layers)
        ]

    def attention_params(self) -> AttentionParams:
        P = self.params
        return AttentionParams(P["attn.W_Q"], P["attn.W_K"], P["attn.W_V"], P["attn.W_O"], P["attn.ln_gain"], P["attn.ln_bias"])

    def long_term_params(self) -> LongTermParams:
        P = self.params
        return LongTermParams(
            tables=self._tables("emb.item", self.long_term_features),
            proj=self._tables("long.proj", self.long_term_features),
            W_p=P["long.W_p"],
            b_p=P["long.b_p"],
        )

    def fusion_params(self) -> FusionParams:
        P = self.params
        return FusionParams(
            W_user=P.get("gate.W_user"),
            W_short=P.get("gate.W_short"),
            W_long=P.get("gate.W_long"),
            b_gate=P.get("gate.b"),
            W_concat=P.get("concat.W"),
            b_concat=P.get("concat.b"),
        )

    # -- featurisation ------------------------------------------------------

    def featurize_events(self, events: Sequence[InteractionEvent]) -> np.ndarray:
        out = np.zeros((len(events), len(self.item_features)), dtype=np.int64)
        for k, f in enumerate(self.item_features):
            out[:, k] = self.vocab.lookup_many(f, (e.item_features.get(f) for e in events))
        return out

    def featurize_profile(self, profile: Mapping[str, str]) -> np.ndarray:
        return np.array([self.vocab.lookup(p, profile.get(p)) for p in self.profile_features], dtype=np.int64)

    def featurize_long_term_row(self, row: Mapping[str, Sequence[str]]) -> dict:
        return {f: self.vocab.lookup_many(f, row.get(f, ())) for f in self.long_term_features}

    def pad_long_term(self, rows: Sequence[Mapping[str, np.ndarray]]) -> dict:
        """Stack per-row index arrays into padded ``(idx, mask)`` pairs, width at least 1."""
        out = {}
        for f in self.long_term_features:
            lists = [r[f] for r in rows]
            L = max(1, max(len(x) for x in lists))
            idx = np.zeros((len(rows), L), dtype=np.int64)
            mask = np.zeros((len(rows), L), dtype=bool)
            for b, x in enumerate(lists):
                idx[b, : len(x)] = x
                mask[b, : len(x)] = True
            out[f] = (idx, mask)
        return out

    def featurize_long_term(self, rows: Sequence[Mapping[str, Sequence[str]]]) -> dict:
        return self.pad_long_term([self.featurize_long_term_row(r) for r in rows])

    def make_batch(self, sequences: Sequence[Sequence[InteractionEvent]], long_terms, profiles) -> Batch:
        T = len(sequences[0])
        if any(len(s) != T for s in sequences):
            raise ValueError("all sequences in a batch must share one length")
        return Batch(
            items=np.stack([self.featurize_events(s) for s in sequences]),
            profile=np.stack([self.featurize_profile(p) for p in profiles]),
            long_term=self.featurize_long_term(long_terms),
        )

    # -- forward ------------------------------------------------------------

    def forward(self, batch: Batch, training: bool = False, rng=None) -> ForwardResult:
        cfg = self.config
        e_u = embed_user_profile(batch.profile, self._tables("emb.profile", self.profile_features), self.profile_features)
        x = embed_item(batch.items, self._tables("emb.item", self.item_features), self.item_features)
        h = lstm_forward(x, self.lstm_layers(), cfg.dropout, training, rng)
        xhat, attn = multi_head_self_attention(
            h,
            self.attention_params(),
            cfg.heads,
            causal=True,
            scaled=cfg.scaled_attention,
            residual_norm=cfg.attention_residual_norm,
        )
        user_attn = None
        if cfg.user_attention:
            s, user_attn = causal_user_attention(xhat, e_u)
        else:
            s = xhat
        mode = cfg.effective_fusion
        p = None
        if mode != "short_only":
            p = encode_long_term(batch.long_term, self.long_term_params(), e_u, self.long_term_features)
        o = gated_fuse(e_u, s, p, self.fusion_params(), mode)
        return ForwardResult(o, s, p, attn, user_attn)

    def behaviour_vectors(self, batch: Batch) -> np.ndarray:
        """Inference: behaviour vector at the last position of each row, (B, d)."""
        return self.forward(batch, training=False).behaviour.data[:, -1, :]
