from .embedding import OOV, FeatureVocab, embed_item, embed_user_profile, output_item_vector, split_widths
from .long_term import FusionParams, LongTermParams, encode_long_term, gate_values, gated_fuse, pool_subset
from .sdm import Batch, ForwardResult, SDMModel
from .short_term import (
    AttentionParams,
    LstmLayer,
    causal_user_attention,
    lstm_forward,
    lstm_layer,
    multi_head_self_attention,
    user_attention,
)
