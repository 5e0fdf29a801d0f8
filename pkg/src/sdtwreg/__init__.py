"""Soft-DTW alignment with Contrastive-IDM temporal regularization.

Exact gradients for the soft-DTW divergence and the regularizer, a small
correspondence-training loop, and collapse/QbE diagnostics.  The DP kernels
come from a compiled Cython module when available (``kernels.BACKEND``).
"""

from .cidm import CidmConfig, CidmResult, cidm_general, cidm_normalized, cidm_sigma1
from .core import (
    EmbeddingSequence,
    SequenceFormatError,
    ZeroRowError,
    l2_normalize_rows,
    make_rng,
    read_sequence,
    self_distance_matrix,
    write_sequence,
)
from .kernels import BACKEND
from .loss import PRESETS, BatchLoss, LossBreakdown, batch_laser_loss, laser_loss
from .perturb import (
    PerturbConfig,
    SyntheticCorpusSpec,
    feature_transform,
    generate_corpus,
    make_pair,
    time_resample,
)
from .qbe import QbeReport, QbeTask, make_qbe_task, mtwv, qbe_eval, qbe_score
from .softdtw import (
    AlignmentResult,
    SoftDtwConfig,
    hard_dtw,
    sdtw_backward,
    sdtw_divergence,
    sdtw_forward,
    sdtw_oracle,
    soft_dtw,
    softmin3,
)
from .trainer import (
    EncoderParams,
    OptimState,
    TrainConfig,
    adamw_step,
    collapse_index,
    encoder_forward,
    init_encoder,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
