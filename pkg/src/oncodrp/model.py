"""The full response model: shared patient encoder and drug embedder feeding
three heads (binary response probability, dose-response value, and survival
logits over time intervals)."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .encoder import DrugEmbedder, EncoderConfig, PatientEncoder
from .heads import MlpHead
from .tokenizer import Batch


class ResponseModel:
    """Owns all parameters; forward paths are pure given a training flag/rng."""

    def __init__(self, config: EncoderConfig, gene_vocab_size: int, pair_vocab_size: int,
                 n_intervals: int, seed: int = 0, dtype=np.float32):
        self.config = config
        self.gene_vocab_size = gene_vocab_size
        self.pair_vocab_size = pair_vocab_size
        self.n_intervals = n_intervals
        self.dtype = np.dtype(dtype)
        self.encoder = PatientEncoder(config, gene_vocab_size, pair_vocab_size, seed, dtype)
        self.drug = DrugEmbedder(config, seed, dtype)
        self.recist_head = MlpHead(config.dim, 1, sigmoid_output=True,
                                   seed=seed, dtype=dtype, prefix="recist_head")
        self.audrc_head = MlpHead(config.dim, 1, sigmoid_output=True,
                                  seed=seed, dtype=dtype, prefix="audrc_head")
        self.mtlr_head = MlpHead(config.dim, n_intervals, sigmoid_output=False,
                                 seed=seed, dtype=dtype, prefix="mtlr_head")

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for part in (self.encoder, self.drug, self.recist_head, self.audrc_head, self.mtlr_head):
            out.update(part.params)
        return out

    def encode_patient(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        return self.encoder.encode(batch, training, rng)

    def embed_drug(self, fingerprints: np.ndarray) -> Tensor:
        return self.drug.embed(fingerprints)

    def recist_prob(self, patient: Tensor, drug: Tensor) -> Tensor:
        return self.recist_head(patient, drug)

    def audrc_value(self, patient: Tensor, drug: Tensor) -> Tensor:
        return self.audrc_head(patient, drug)

    def mtlr_logits(self, patient: Tensor, drug: Tensor) -> Tensor:
        return self.mtlr_head(patient, drug)

    # helpers for whole-batch inference ------------------------------------

    def predict_recist(self, batch: Batch, fingerprints: np.ndarray) -> np.ndarray:
        p = self.recist_prob(self.encode_patient(batch), self.embed_drug(fingerprints))
        return p.data.reshape(-1).copy()

    def predict_audrc(self, batch: Batch, fingerprints: np.ndarray) -> np.ndarray:
        v = self.audrc_value(self.encode_patient(batch), self.embed_drug(fingerprints))
        return v.data.reshape(-1).copy()

    def predict_mtlr(self, batch: Batch, fingerprints: np.ndarray) -> np.ndarray:
        phi = self.mtlr_logits(self.encode_patient(batch), self.embed_drug(fingerprints))
        return phi.data.copy()

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameters in place; names and shapes must match exactly."""
        params = self.params()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ValueError(f"parameter names do not match: missing={missing} extra={extra}")
        for name, p in params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.astype(self.dtype)
