"""Drug response prediction over mutation panels, with survival pretraining
and a treatment-ranking service on top.

The pieces, bottom up: a small numpy autodiff engine (`autodiff`, `optim`,
`gradcheck`), dual gene/mutation tokenization (`tokenizer`), dataset
schemas and a seeded synthetic generator (`dataio`), the transformer
patient encoder and drug embedder (`encoder`), discrete-time survival
machinery (`mtlr`), response heads and losses (`heads`), the composed model
(`model`), two-stage training with portable checkpoints (`trainer`,
`checkpoint`), evaluation metrics (`metrics`), catalog ranking with cohort
evidence (`recommender`), an HTTP service (`service`) and the operator CLI
(`cli`).
"""

__version__ = "0.1.0"

from .autodiff import Tensor, named_rng
from .checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from .dataio import (CellLineRecord, DrugCatalog, RecistRecord, SurvivalRecord,
                     SyntheticConfig, generate_synthetic, split)
from .encoder import EncoderConfig
from .heads import FocalParams, focal_loss, mse_loss
from .metrics import auprc, auroc, concordance_index
from .model import ResponseModel
from .mtlr import IntervalGrid, discretize, encode_target, event_distribution, mtlr_loss
from .recommender import ModelBundle, assemble_evidence, rank_top_k, robust_z, score_catalog
from .tokenizer import (Batch, GeneVocab, MutationEntry, MutationProfile, MutationVocab,
                        TokenizedSample, build_vocabularies, collate, tokenize)
from .trainer import TrainConfig, pretrain_survival, train_joint

__all__ = [
    "Tensor", "named_rng",
    "Checkpoint", "checkpoint_hash", "load_checkpoint", "save_checkpoint",
    "CellLineRecord", "DrugCatalog", "RecistRecord", "SurvivalRecord",
    "SyntheticConfig", "generate_synthetic", "split",
    "EncoderConfig", "FocalParams", "focal_loss", "mse_loss",
    "auprc", "auroc", "concordance_index",
    "ResponseModel",
    "IntervalGrid", "discretize", "encode_target", "event_distribution", "mtlr_loss",
    "ModelBundle", "assemble_evidence", "rank_top_k", "robust_z", "score_catalog",
    "Batch", "GeneVocab", "MutationEntry", "MutationProfile", "MutationVocab",
    "TokenizedSample", "build_vocabularies", "collate", "tokenize",
    "TrainConfig", "pretrain_survival", "train_joint",
]
