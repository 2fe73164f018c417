"""Label-free speech-feature-to-3D-facial-animation toolkit.

Two-stage pipeline on 53-dim blendshape parameter frames (50 expression +
3 jaw) at 25 fps: a VQ-VAE motion codebook (stage 1) and a fusion-token
encoder that maps speech-derived feature streams plus a neutral face shape
into that codebook's latent space (stage 2), with a full vertex-space metric
suite and a deterministic synthetic corpus for end-to-end runs.

The numerical core is a small reverse-mode autodiff on dense row-major
tensors (float32 training, float64 gradient checking); nothing here needs a
deep-learning framework.
"""

from .errors import (
    ConfigError,
    InputError,
    IntegrityError,
    LsfError,
    NonFiniteError,
    ShapeError,
    StateError,
)
from .tensor import Tensor
from .params import ParamStore, adam_step, init_rng
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import read_checkpoint, write_checkpoint
from .flame import (
    BlendshapeModel,
    NeutralShape,
    RegionMask,
    decode_frame,
    decode_sequence,
    synth_model,
)
from .features import (
    FeatureSequence,
    align_to_fps,
    emotion_features,
    identity_encode,
    motion_features,
)
from .vqvae import (
    Codebook,
    LatentSequence,
    MotionSequence,
    Stage1Config,
    quantize,
    stage1_loss,
    train_stage1,
)
from .hifb import (
    HifbConfig,
    gate_fusion,
    hifb_forward,
    modulate,
    pair_table,
    xattn_late_fusion,
)
from .pipeline import (
    PipelineCheckpoint,
    SamplerConfig,
    Stage2Config,
    Stage2Item,
    generate,
    sie_forward,
    train_stage2,
)
from .metrics import (
    EvalItem,
    MetricReport,
    ce,
    diversity,
    evaluate_corpus,
    fdd,
    heatmap_stats,
    lve,
    mee,
    mve,
)
from .corpus import (
    AudioTrackLatent,
    Corpus,
    CorpusConfig,
    CorpusItem,
    Subject,
    read_corpus,
    split_subjects,
    synth_corpus,
    synth_item,
    write_corpus,
)
from .ablation import VariantSpec, run_ablation
from .config import RunConfig, default_config, load_config

__version__ = "0.1.0"
