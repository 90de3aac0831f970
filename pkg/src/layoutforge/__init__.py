"""LayoutForge: conditional diffusion for structured mobile-UI layouts."""

from .dataio import Corpus, load_corpus, parse_rico, save_corpus, split, synth_corpus
from .denoiser import (
    Condition,
    DenoiserParams,
    TrainConfig,
    encode_condition,
    load_params,
    predict_eps,
    save_params,
    train,
)
from .diffusion import (
    DiffusionSchedule,
    SamplerConfig,
    build_schedule,
    forward_sample,
    refine,
    reverse_step,
    sample,
)
from .layout import Component, ComponentType, Layout, decode, encode, rasterize
from .metrics import EvalReport, evaluate, layout_fd, psnr, ssim
from .rules import RuleConfig, RuleReport, alignment_score, harmony, project, spacing_violations

__version__ = "0.1.0"
