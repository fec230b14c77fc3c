"""Two-stage training.

Stage 1 pretrains the encoder, drug embedder and survival head on censored
PFS data. Stage 2 starts from those weights and optimizes the weighted sum
of three losses per step: survival likelihood, focal loss on binary
response and squared error on cell-line dose response. Ablation switches
drop individual terms or skip the pretrained initialization.

Per-epoch loss components and validation metrics are written as
line-delimited JSON when a log path is given; the same history is kept in
the checkpoint metadata.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import named_rng
from .checkpoint import Checkpoint, CheckpointShapeError
from .dataio import CellLineRecord, DrugCatalog, RecistRecord, SurvivalRecord
from .encoder import EncoderConfig
from .heads import FocalParams, focal_loss, mse_loss
from .metrics import auroc, concordance_index
from .mtlr import IntervalGrid, discretize, encode_target, mtlr_loss, predict_risk
from .model import ResponseModel
from .optim import make_optimizer
from .tokenizer import GeneVocab, MutationVocab, collate, tokenize

LR_RANGE = (0.0001, 0.05)
EPOCH_RANGE = (100, 500)
BATCH_SIZES = (128, 256, 512)


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 128
    optimizer: str = "adam"
    dropout: float = 0.1
    seed: int = 0
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # survival, recist, cellline
    use_pretrain: bool = True
    use_survival: bool = True
    use_cellline: bool = True
    n_intervals: int = 10
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    focal: FocalParams = field(default_factory=FocalParams)
    early_stopping: bool = False
    patience: int = 25
    stop_at_val_metric: float | None = None
    freeze_encoder: bool = False
    precision: str = "float32"

    def __post_init__(self):
        if not LR_RANGE[0] <= self.lr <= LR_RANGE[1]:
            warnings.warn(f"lr {self.lr} outside the usual range {LR_RANGE}", stacklevel=2)
        if not EPOCH_RANGE[0] <= self.epochs <= EPOCH_RANGE[1]:
            warnings.warn(f"epochs {self.epochs} outside the usual range {EPOCH_RANGE}", stacklevel=2)
        if self.batch_size not in BATCH_SIZES:
            warnings.warn(f"batch size {self.batch_size} outside the usual set {BATCH_SIZES}",
                          stacklevel=2)
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be 'float32' or 'float64'")
        # training dropout overrides whatever the encoder config carries
        self.encoder = replace(self.encoder, dropout=self.dropout)

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


class _Stream:
    """One dataset prepared for batching: tokenized samples plus targets."""

    def __init__(self, name: str, records, gv: GeneVocab, mv: MutationVocab,
                 catalog: DrugCatalog, batch_size: int):
        self.name = name
        self.records = list(records)
        self.samples = [tokenize(r.profile, gv, mv) for r in self.records]
        self.fingerprints = catalog.fingerprints([r.drug_id for r in self.records])
        self.batch_size = max(1, min(batch_size, len(self.records)))

    def n_batches(self) -> int:
        return (len(self.records) + self.batch_size - 1) // self.batch_size

    def epoch_batches(self, seed: int, tag: str):
        order = np.arange(len(self.records))
        named_rng(seed, f"shuffle/{self.name}/{tag}").shuffle(order)
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            yield idx, collate([self.samples[i] for i in idx]), self.fingerprints[idx]

    def step_batches(self, seed: int, epoch: int, n_steps: int) -> list:
        """Exactly ``n_steps`` batches, cycling fresh shuffles as needed."""
        batches: list = []
        round_i = 0
        while len(batches) < n_steps:
            for item in self.epoch_batches(seed, f"{epoch}.{round_i}"):
                batches.append(item)
                if len(batches) == n_steps:
                    break
            round_i += 1
        return batches


def nsclc_subset(records: list[SurvivalRecord]) -> list[SurvivalRecord]:
    """Records whose patient ids carry the NSCLC cohort prefix.

    Synthetic survival ids are prefixed with their cohort; stage 2 keeps
    survival supervision on that subset only. Falls back to all records
    when no id carries the prefix.
    """
    sub = [r for r in records if r.patient_id.startswith("NSCLC")]
    return sub if sub else list(records)


def _survival_grid(records, n_intervals: int) -> IntervalGrid:
    observed = [r.pfs_days for r in records if r.event_observed]
    if not observed:
        raise ValueError("cannot build an interval grid: every record is censored")
    return discretize(observed, n_intervals)


def _write_log(log_path, history) -> None:
    if log_path is None:
        return
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _validation_ci(model: ResponseModel, stream: _Stream, grid: IntervalGrid) -> float:
    risks = []
    for start in range(0, len(stream.records), 256):
        sel = list(range(start, min(start + 256, len(stream.records))))
        batch = collate([stream.samples[i] for i in sel])
        phi = model.predict_mtlr(batch, stream.fingerprints[sel])
        risks.extend(predict_risk(phi, grid))
    times = [r.pfs_days for r in stream.records]
    events = [r.event_observed for r in stream.records]
    return concordance_index(times, events, risks)


def _validation_auroc(model: ResponseModel, stream: _Stream) -> float:
    scores = []
    for start in range(0, len(stream.records), 256):
        sel = list(range(start, min(start + 256, len(stream.records))))
        batch = collate([stream.samples[i] for i in sel])
        scores.extend(model.predict_recist(batch, stream.fingerprints[sel]))
    labels = [r.label for r in stream.records]
    return auroc(labels, scores)


def _trainable_params(model: ResponseModel, freeze_encoder: bool):
    params = model.params()
    if not freeze_encoder:
        return params
    return {name: p for name, p in params.items()
            if not (name.startswith("encoder.") or name.startswith("drug."))}


def _should_stop(history_metric: list[float], cfg: TrainConfig) -> bool:
    if not history_metric:
        return False
    if cfg.stop_at_val_metric is not None and history_metric[-1] >= cfg.stop_at_val_metric:
        return True
    if cfg.early_stopping and len(history_metric) > cfg.patience:
        best_idx = int(np.argmax(history_metric))
        if len(history_metric) - 1 - best_idx >= cfg.patience:
            return True
    return False


def pretrain_survival(config: TrainConfig, gv: GeneVocab, mv: MutationVocab,
                      catalog: DrugCatalog, train: list[SurvivalRecord],
                      val: list[SurvivalRecord] | None = None,
                      log_path=None) -> Checkpoint:
    """Stage 1: fit encoder, drug embedder and survival head on PFS data."""
    if not train:
        raise ValueError("pretrain_survival: empty training set")
    grid = _survival_grid(train, config.n_intervals)
    model = ResponseModel(config.encoder, len(gv), mv.size, grid.n_intervals,
                          seed=config.seed, dtype=config.dtype)
    stream = _Stream("survival", train, gv, mv, catalog, config.batch_size)
    targets = [encode_target(r.pfs_days, r.event_observed, grid) for r in stream.records]
    val_stream = _Stream("survival_val", val, gv, mv, catalog, config.batch_size) if val else None

    opt = make_optimizer(config.optimizer, _trainable_params(model, False), config.lr)
    params = model.params()
    history = []
    metric_track: list[float] = []
    for epoch in range(config.epochs):
        losses = []
        for bi, (idx, batch, fps) in enumerate(stream.epoch_batches(config.seed, f"{epoch}")):
            rng = named_rng(config.seed, f"dropout/survival/{epoch}/{bi}")
            patient = model.encode_patient(batch, training=True, rng=rng)
            phi = model.mtlr_logits(patient, model.embed_drug(fps))
            loss = mtlr_loss(phi, [targets[i] for i in idx])
            ad.zero_grads(params.values())
            loss.backward()
            opt.step()
            losses.append(loss.item())
        record = {"epoch": epoch, "loss_survival": float(np.mean(losses))}
        if val_stream is not None:
            record["val_ci"] = _validation_ci(model, val_stream, grid)
            metric_track.append(record["val_ci"])
        history.append(record)
        if _should_stop(metric_track, config):
            break

    _write_log(log_path, history)
    meta = {"stage": "pretrain", "seed": config.seed, "epochs_run": len(history),
            "final": history[-1], "history": history}
    return Checkpoint.from_model(model, gv, mv, grid, meta)


def train_joint(config: TrainConfig, gv: GeneVocab, mv: MutationVocab,
                catalog: DrugCatalog, recist_train: list[RecistRecord],
                survival_train: list[SurvivalRecord] | None = None,
                cellline_train: list[CellLineRecord] | None = None,
                recist_val: list[RecistRecord] | None = None,
                pretrained: Checkpoint | None = None,
                log_path=None) -> Checkpoint:
    """Stage 2: joint optimization of the active loss terms.

    Per step, one batch from each active dataset contributes its loss and
    the optimizer steps on the weighted sum. Shorter datasets cycle within
    the epoch so every step sees every active term.
    """
    if not recist_train:
        raise ValueError("train_joint: response training set is empty")
    if config.use_survival and not survival_train:
        raise ValueError("train_joint: survival data required unless that term is ablated")
    if config.use_cellline and not cellline_train:
        raise ValueError("train_joint: cell-line data required unless that term is ablated")
    if config.use_pretrain and pretrained is None:
        raise ValueError("train_joint: pretrained checkpoint required unless ablated")

    if pretrained is not None and config.use_pretrain:
        shape_fields = ("dim", "heads", "layers", "ffn_dim", "drug_input_dim",
                        "drug_hidden_dim")
        mismatched = [f for f in shape_fields
                      if getattr(pretrained.encoder_config, f) != getattr(config.encoder, f)]
        if mismatched:
            raise CheckpointShapeError(
                "pretrained checkpoint does not fit this model configuration; "
                f"differing fields: {mismatched}")
        grid = pretrained.grid
        n_intervals = pretrained.n_intervals
    elif config.use_survival:
        grid = _survival_grid(survival_train, config.n_intervals)
        n_intervals = grid.n_intervals
    else:
        grid = None
        n_intervals = config.n_intervals

    model = ResponseModel(config.encoder, len(gv), mv.size, n_intervals,
                          seed=config.seed, dtype=config.dtype)
    if config.use_pretrain:
        try:
            model.load_arrays(pretrained.arrays)
        except ValueError as exc:
            raise CheckpointShapeError(f"pretrained checkpoint does not fit this model: {exc}") from exc

    streams: dict[str, _Stream] = {
        "recist": _Stream("recist", recist_train, gv, mv, catalog, config.batch_size)}
    targets_s = None
    if config.use_survival:
        streams["survival"] = _Stream("survival", survival_train, gv, mv, catalog,
                                      config.batch_size)
        targets_s = [encode_target(r.pfs_days, r.event_observed, grid)
                     for r in streams["survival"].records]
    if config.use_cellline:
        streams["cellline"] = _Stream("cellline", cellline_train, gv, mv, catalog,
                                      config.batch_size)
    val_stream = (_Stream("recist_val", recist_val, gv, mv, catalog, config.batch_size)
                  if recist_val else None)

    w_s, w_r, w_c = config.loss_weights
    weights = {"survival": w_s, "recist": w_r, "cellline": w_c}
    opt = make_optimizer(config.optimizer,
                         _trainable_params(model, config.freeze_encoder), config.lr)
    params = model.params()

    history = []
    metric_track: list[float] = []
    for epoch in range(config.epochs):
        n_steps = max(s.n_batches() for s in streams.values())
        schedule = {name: s.step_batches(config.seed, epoch, n_steps)
                    for name, s in streams.items()}
        sums = {name: 0.0 for name in streams}
        counts = {name: 0 for name in streams}
        for step in range(n_steps):
            total = None
            for name, stream in streams.items():
                idx, batch, fps = schedule[name][step]
                rng = named_rng(config.seed, f"dropout/{name}/{epoch}/{step}")
                patient = model.encode_patient(batch, training=True, rng=rng)
                drug = model.embed_drug(fps)
                if name == "recist":
                    y = np.array([streams["recist"].records[i].label for i in idx], dtype=float)
                    term = focal_loss(model.recist_prob(patient, drug), y, config.focal)
                elif name == "survival":
                    term = mtlr_loss(model.mtlr_logits(patient, drug),
                                     [targets_s[i] for i in idx])
                else:
                    r = np.array([streams["cellline"].records[i].audrc for i in idx])
                    term = mse_loss(model.audrc_value(patient, drug), r)
                sums[name] += term.item()
                counts[name] += 1
                weighted = term * weights[name]
                total = weighted if total is None else total + weighted
            ad.zero_grads(params.values())
            total.backward()
            opt.step()
        record = {"epoch": epoch}
        for name in streams:
            record[f"loss_{name}"] = sums[name] / max(1, counts[name])
        if val_stream is not None:
            record["val_auroc"] = _validation_auroc(model, val_stream)
            metric_track.append(record["val_auroc"])
        history.append(record)
        if _should_stop(metric_track, config):
            break

    _write_log(log_path, history)
    meta = {"stage": "joint", "seed": config.seed, "epochs_run": len(history),
            "ablations": {"pretrain": config.use_pretrain, "survival": config.use_survival,
                          "cellline": config.use_cellline},
            "final": history[-1], "history": history}
    return Checkpoint.from_model(model, gv, mv, grid, meta)
