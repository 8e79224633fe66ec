"""Sparse non-negative matrix factorization for single-channel source separation.

Bases can be fit by plain sparse NMF, by maximum-discrepancy training
(fit the source, misfit adversarial data), by discriminative training on
paired mixtures, or by a combination; a semi-supervised mode fits an unseen
source from mixtures. Separation codes a mixture over the concatenated
bases and splits it with a Wiener mask.
"""

__version__ = "0.1.0"

from .core import (
    ConfigurationError,
    DimensionError,
    EncodeConfig,
    MDNMFError,
    ValidationError,
    encode,
    encode_objective,
    full_loss,
    h_update_step,
    normalize_columns,
    project,
    weak_loss,
)
from .adversarial import (
    AdversarialSpec,
    MixingSpec,
    ScaledDataset,
    assemble_adversarial,
    beta,
    default_omega,
    mix_signals,
    naive_invert,
)
from .batching import BatchPlan
from .trainer import (
    PRESETS,
    ConvergenceTrace,
    SourceBundle,
    TrainConfig,
    train,
    train_semi_supervised,
    w_update_step,
)
from .separation import SeparationConfig, SeparationResult, separate, wiener_filter
from .metrics import EXACT, MetricReport, aggregate, psnr, si_sdr
from .tuning import SearchSpace, default_space, random_search, trials_csv
from .audio import Spectrogram, StftConfig, istft, mix_at_snr, phase_transfer, stft

__all__ = [name for name in dir() if not name.startswith("_")]
