"""facemotion: self-contained one-shot face re-enactment on a procedural
parametric face proxy.

A rendered proxy pair (source identity with driving geometry vs. source
as-is) drives a dense correspondence module whose motion field warps the
source image; a prior-guided generator then refines the warp into the
re-enacted output. All learned parts are small networks trained on data
the package generates itself.
"""

__version__ = "0.1.0"

from . import face_model  # noqa: F401
from .container import ContainerError, load_container, save_container  # noqa: F401
from .correspondence import (  # noqa: F401
    CorrespondenceConfig,
    CorrespondenceExtractor,
    CorrespondenceField,
    FeatureGrid,
    correlation_field,
    extract_source_features,
    extract_target_features,
    reverse_warp,
    warp,
)
from .encoders import (  # noqa: F401
    EncoderModel,
    IdentityEmbedder,
    embed_image,
    encode_image,
    train_embedder,
    train_encoder,
)
from .losses import LossReport, LossWeights, total_losses  # noqa: F401
from .pipeline import ReenactPipeline, ReenactRequest, reenact  # noqa: F401
from .synthesis import (  # noqa: F401
    AttentionFusion,
    Generator,
    GeneratorConfig,
    PatchDiscriminator,
    PriorBundle,
    SpatialTransformer,
)
from .training import TrainConfig, TrainState, run_training, train_step  # noqa: F401
