"""Unified light adaptation: one trainable pipeline for low-light
enhancement, exposure correction, and HDR tone mapping."""

from .imaging import (
    DatasetSpec,
    PairBatch,
    PairedSample,
    augment_hdr,
    iterate_pairs,
    list_pairs,
    load_hdr,
    load_ldr,
    resize,
    save_ldr,
)
from .losses import (
    LossReport,
    LossWeights,
    VGGFeatureExtractor,
    loss_com,
    loss_dc,
    loss_dc_gt,
    loss_dc_in,
    loss_detail,
    loss_light,
    loss_perceptual,
    total_loss,
)
from .metrics import MetricReport, psnr, ssim, write_metric_csv
from .model import (
    CHECKPOINT_MAGIC,
    DecompOutput,
    ForwardResult,
    LANet,
    ModelConfig,
    NRCurveBank,
    color_recover,
    init_model,
    load_checkpoint,
    nr_apply,
    save_checkpoint,
)
from .rgbe import decode_rgbe, encode_rgbe, read_hdr, write_hdr
from .training import (
    TrainConfig,
    TrainingAborted,
    TrainLog,
    enhance_image,
    evaluate,
    make_optimizer,
    train,
)

__version__ = "0.1.0"
