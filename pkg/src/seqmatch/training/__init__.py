from .checkpoint import (
    CHECKPOINT_VERSION,
    Checkpoint,
    CheckpointError,
    CheckpointVersionError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .loss import example_loss, sampled_softmax_loss
from .sampler import LogUniformSampler, draw_ranks, log_uniform_probs, log_uniform_sample
from .trainer import Bucket, TrainingError, batch_loss, build_buckets, epoch_batches, item_counts, train, train_step
