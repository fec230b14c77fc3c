"""Patient encoder and drug embedder.

Tokens are embedded per track: a learned gene embedding concatenated with a
mutation representation (learned pair embedding plus a linear projection of
the 23 annotation bits), fused back to model width. A stack of standard
post-norm transformer encoder layers follows; the patient representation is
the masked mean of the token outputs (a CLS-style readout of the first
token is available as an option). Drug fingerprints go through a two-layer
MLP with normalization and ReLU in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, named_rng
from .tokenizer import ANNOTATION_DIM, Batch

ATTENTION_MASK_VALUE = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    heads: int = 8
    layers: int = 2
    ffn_dim: int | None = None          # defaults to 4 * dim
    dropout: float = 0.1
    positional: bool = False            # sinusoidal position signal, off by default
    pooling: str = "mean"               # "mean" or "cls"
    drug_input_dim: int = 2048
    drug_hidden_dim: int = 256

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.pooling not in ("mean", "cls"):
            raise ValueError(f"pooling must be 'mean' or 'cls', got {self.pooling!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.dim)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("dim", "heads", "layers", "ffn_dim", "dropout", "positional",
                 "pooling", "drug_input_dim", "drug_hidden_dim")}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


def _xavier(rng, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _linear_params(rng, name: str, fan_in: int, fan_out: int, dtype) -> dict[str, Tensor]:
    return {
        f"{name}.w": ad.parameter(_xavier(rng, fan_in, fan_out, dtype), f"{name}.w"),
        f"{name}.b": ad.parameter(np.zeros(fan_out, dtype=dtype), f"{name}.b"),
    }


def _norm_params(name: str, dim: int, dtype) -> dict[str, Tensor]:
    return {
        f"{name}.gamma": ad.parameter(np.ones(dim, dtype=dtype), f"{name}.gamma"),
        f"{name}.beta": ad.parameter(np.zeros(dim, dtype=dtype), f"{name}.beta"),
    }


def _linear(params: dict, name: str, x: Tensor) -> Tensor:
    return ad.matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def _norm(params: dict, name: str, x: Tensor) -> Tensor:
    return ad.layer_norm(x, params[f"{name}.gamma"], params[f"{name}.beta"])


def sinusoidal_positions(length: int, dim: int, dtype) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10_000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


class PatientEncoder:
    """Token fusion plus transformer layers plus pooling to one vector."""

    def __init__(self, config: EncoderConfig, gene_vocab_size: int, pair_vocab_size: int,
                 seed: int = 0, dtype=np.float32, prefix: str = "encoder"):
        self.config = config
        self.gene_vocab_size = gene_vocab_size
        self.pair_vocab_size = pair_vocab_size
        self.prefix = prefix
        d = config.dim
        p: dict[str, Tensor] = {}
        rng = named_rng(seed, f"init/{prefix}")
        p[f"{prefix}.gene_emb"] = ad.parameter(
            rng.normal(0.0, 0.02, (gene_vocab_size, d)).astype(dtype), f"{prefix}.gene_emb")
        p[f"{prefix}.pair_emb"] = ad.parameter(
            rng.normal(0.0, 0.02, (pair_vocab_size, d)).astype(dtype), f"{prefix}.pair_emb")
        p.update(_linear_params(rng, f"{prefix}.ann_proj", ANNOTATION_DIM, d, dtype))
        p.update(_linear_params(rng, f"{prefix}.fuse", 2 * d, d, dtype))
        for i in range(config.layers):
            base = f"{prefix}.layer{i}"
            for mat in ("wq", "wk", "wv", "wo"):
                p.update(_linear_params(rng, f"{base}.{mat}", d, d, dtype))
            p.update(_norm_params(f"{base}.norm1", d, dtype))
            p.update(_linear_params(rng, f"{base}.ffn1", d, config.ffn_dim, dtype))
            p.update(_linear_params(rng, f"{base}.ffn2", config.ffn_dim, d, dtype))
            p.update(_norm_params(f"{base}.norm2", d, dtype))
        self.params = p

    def embed_tokens(self, batch: Batch) -> Tensor:
        """Fused per-position embeddings, (B, L, d); pads embed like any token."""
        p, pre = self.params, self.prefix
        if batch.gene_ids.max(initial=0) >= self.gene_vocab_size:
            raise IndexError("gene index outside vocabulary")
        if batch.pair_ids.max(initial=0) >= self.pair_vocab_size:
            raise IndexError("mutation pair index outside vocabulary")
        dtype = p[f"{pre}.gene_emb"].dtype
        gene = ad.embedding(p[f"{pre}.gene_emb"], batch.gene_ids)
        pair = ad.embedding(p[f"{pre}.pair_emb"], batch.pair_ids)
        ann = _linear(p, f"{pre}.ann_proj", Tensor(batch.annotations.astype(dtype)))
        mut = pair + ann
        fused = _linear(p, f"{pre}.fuse", ad.concat([gene, mut], axis=-1))
        if self.config.positional:
            fused = fused + Tensor(sinusoidal_positions(batch.length, self.config.dim, dtype))
        return fused

    def _attention(self, i: int, x: Tensor, additive_mask: np.ndarray,
                   training: bool, rng) -> Tensor:
        p = self.params
        base = f"{self.prefix}.layer{i}"
        cfg = self.config
        dh = cfg.dim // cfg.heads
        q = _linear(p, f"{base}.wq", x)
        k = _linear(p, f"{base}.wk", x)
        v = _linear(p, f"{base}.wv", x)
        heads = []
        for h in range(cfg.heads):
            cols = slice(h * dh, (h + 1) * dh)
            qh, kh, vh = q[:, :, cols], k[:, :, cols], v[:, :, cols]
            logits = ad.matmul(qh, kh, transpose_b=True) * (1.0 / math.sqrt(dh))
            weights = ad.softmax(logits, axis=-1, additive_mask=additive_mask)
            heads.append(ad.matmul(weights, vh))
        out = _linear(p, f"{base}.wo", ad.concat(heads, axis=-1))
        return ad.dropout(out, cfg.dropout, rng, training)

    def encode(self, batch: Batch, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Patient vectors, (B, d). Rejects samples with nothing to pool."""
        cfg = self.config
        x = self.embed_tokens(batch)
        valid = batch.valid_mask()
        # keys at pad positions are unreachable from every query
        additive = np.where(valid, 0.0, ATTENTION_MASK_VALUE).astype(x.dtype)[:, None, :]
        for i in range(cfg.layers):
            base = f"{self.prefix}.layer{i}"
            attn = self._attention(i, x, additive, training, rng)
            x = _norm(self.params, f"{base}.norm1", x + attn)
            ffn = _linear(self.params, f"{base}.ffn2",
                          ad.relu(_linear(self.params, f"{base}.ffn1", x)))
            ffn = ad.dropout(ffn, cfg.dropout, rng, training)
            x = _norm(self.params, f"{base}.norm2", x + ffn)
        if cfg.pooling == "cls":
            if not valid[:, 0].all():
                raise ValueError("cls pooling needs a valid first position in every sample")
            return x[:, 0, :]
        return ad.mean_over_mask(x, valid)


class DrugEmbedder:
    """Fingerprint MLP: input -> hidden -> model width, norm and ReLU between."""

    def __init__(self, config: EncoderConfig, seed: int = 0, dtype=np.float32,
                 prefix: str = "drug"):
        self.config = config
        self.prefix = prefix
        rng = named_rng(seed, f"init/{prefix}")
        p: dict[str, Tensor] = {}
        p.update(_linear_params(rng, f"{prefix}.fc1", config.drug_input_dim,
                                config.drug_hidden_dim, dtype))
        p.update(_norm_params(f"{prefix}.norm", config.drug_hidden_dim, dtype))
        p.update(_linear_params(rng, f"{prefix}.fc2", config.drug_hidden_dim,
                                config.dim, dtype))
        self.params = p

    def embed(self, fingerprints: np.ndarray) -> Tensor:
        """(B, drug_input_dim) 0/1 matrix -> (B, dim)."""
        fp = np.atleast_2d(np.asarray(fingerprints))
        if fp.shape[1] != self.config.drug_input_dim:
            raise ad.ShapeError(
                f"drug fingerprint width {fp.shape[1]} != {self.config.drug_input_dim}")
        dtype = self.params[f"{self.prefix}.fc1.w"].dtype
        h = _linear(self.params, f"{self.prefix}.fc1", Tensor(fp.astype(dtype)))
        h = ad.relu(_norm(self.params, f"{self.prefix}.norm", h))
        return _linear(self.params, f"{self.prefix}.fc2", h)
