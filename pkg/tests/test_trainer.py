"""Training orchestration: both stages, ablations, checkpoint round-trips."""

import json

import numpy as np
import pytest

from oncodrp import checkpoint as ckpt_mod
from oncodrp.checkpoint import (CheckpointChecksumError, CheckpointShapeError,
                                CheckpointTruncatedError, CheckpointVersionError,
                                checkpoint_hash, load_checkpoint, save_checkpoint)
from oncodrp.dataio import SurvivalRecord
from oncodrp.encoder import EncoderConfig
from oncodrp.tokenizer import collate, tokenize
from oncodrp.trainer import nsclc_subset, pretrain_survival, train_joint

from conftest import desk_config


@pytest.fixture(scope="module")
def pretrained(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    cfg = desk_config(seed=5)
    return cfg, pretrain_survival(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.survival)


def test_pretrain_smoke_and_roundtrip(tmp_path, tiny_bundle, tiny_vocabs, pretrained):
    cfg, ckpt = pretrained
    assert np.isfinite(ckpt.metadata["final"]["loss_survival"])
    save_checkpoint(ckpt, tmp_path / "ck")
    back = load_checkpoint(tmp_path / "ck")
    assert checkpoint_hash(back) == checkpoint_hash(ckpt)
    assert back.grid == ckpt.grid
    assert set(back.arrays) == set(ckpt.arrays)


def test_pretrain_deterministic(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    a = pretrain_survival(desk_config(seed=7), gv, mv, tiny_bundle.catalog, tiny_bundle.survival)
    b = pretrain_survival(desk_config(seed=7), gv, mv, tiny_bundle.catalog, tiny_bundle.survival)
    assert checkpoint_hash(a) == checkpoint_hash(b)
    assert a.metadata["final"]["loss_survival"] == b.metadata["final"]["loss_survival"]


def test_pretrain_all_censored_rejected(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    censored = [SurvivalRecord(r.patient_id, r.profile, r.drug_id, r.pfs_days, False)
                for r in tiny_bundle.survival]
    with pytest.raises(ValueError, match="censored"):
        pretrain_survival(desk_config(), gv, mv, tiny_bundle.catalog, censored)


def test_pretrain_loss_decreases(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    cfg = desk_config(seed=3, epochs=8, lr=0.003)
    ckpt = pretrain_survival(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.survival)
    hist = ckpt.metadata["history"]
    assert hist[-1]["loss_survival"] < hist[0]["loss_survival"]


def test_nsclc_subset_filters_by_prefix(tiny_bundle):
    sub = nsclc_subset(tiny_bundle.survival)
    assert sub and all(r.patient_id.startswith("NSCLC") for r in sub)
    # falls back to everything when the prefix scheme is absent
    renamed = [SurvivalRecord("X" + r.patient_id, r.profile, r.drug_id, r.pfs_days,
                              r.event_observed) for r in tiny_bundle.survival]
    assert nsclc_subset(renamed) == renamed


def test_joint_training_loss_trends_down(tiny_bundle, tiny_vocabs, pretrained):
    gv, mv = tiny_vocabs
    _, pre = pretrained
    cfg = desk_config(seed=5, epochs=10, lr=0.002)
    ckpt = train_joint(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                       nsclc_subset(tiny_bundle.survival), tiny_bundle.cellline,
                       pretrained=pre)
    hist = ckpt.metadata["history"]
    first = hist[0]["loss_recist"] + hist[0]["loss_survival"] + hist[0]["loss_cellline"]
    last = hist[-1]["loss_recist"] + hist[-1]["loss_survival"] + hist[-1]["loss_cellline"]
    assert last < first


def test_ablations_control_log_components(tmp_path, tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    log = tmp_path / "log.jsonl"
    cfg = desk_config(seed=5, use_pretrain=False, use_survival=False, use_cellline=False)
    train_joint(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.recist, log_path=log)
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    keys = {k for rec in lines for k in rec if k.startswith("loss_")}
    assert keys == {"loss_recist"}


def test_joint_requires_data_for_active_terms(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    cfg = desk_config(use_pretrain=False)
    with pytest.raises(ValueError, match="survival data required"):
        train_joint(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                    None, tiny_bundle.cellline)
    with pytest.raises(ValueError, match="pretrained checkpoint required"):
        train_joint(desk_config(), gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                    tiny_bundle.survival, tiny_bundle.cellline)


def test_pretrain_toggle_changes_final_checkpoint(tiny_bundle, tiny_vocabs, pretrained):
    gv, mv = tiny_vocabs
    _, pre = pretrained
    base = dict(seed=5, epochs=2)
    with_pre = train_joint(desk_config(**base), gv, mv, tiny_bundle.catalog,
                           tiny_bundle.recist, tiny_bundle.survival, tiny_bundle.cellline,
                           pretrained=pre)
    without = train_joint(desk_config(**base, use_pretrain=False), gv, mv,
                          tiny_bundle.catalog, tiny_bundle.recist,
                          tiny_bundle.survival, tiny_bundle.cellline)
    assert checkpoint_hash(with_pre) != checkpoint_hash(without)


def test_dimension_mismatch_with_pretrained_rejected(tiny_bundle, tiny_vocabs, pretrained):
    gv, mv = tiny_vocabs
    _, pre = pretrained
    other = desk_config(seed=5, encoder=EncoderConfig(dim=8, heads=2, layers=1,
                                                      drug_hidden_dim=16, dropout=0.0))
    with pytest.raises(CheckpointShapeError):
        train_joint(other, gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                    tiny_bundle.survival, tiny_bundle.cellline, pretrained=pre)


def test_stage2_dropout_change_is_shape_compatible(tiny_bundle, tiny_vocabs, pretrained):
    gv, mv = tiny_vocabs
    cfg0, pre = pretrained
    cfg = desk_config(seed=5, epochs=1, dropout=0.2,
                      encoder=cfg0.encoder)  # same shapes, different dropout
    ckpt = train_joint(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                       tiny_bundle.survival, tiny_bundle.cellline, pretrained=pre)
    assert ckpt.metadata["epochs_run"] == 1


def test_freeze_encoder_keeps_encoder_weights(tiny_bundle, tiny_vocabs, pretrained):
    gv, mv = tiny_vocabs
    _, pre = pretrained
    cfg = desk_config(seed=5, freeze_encoder=True, epochs=2)
    ckpt = train_joint(cfg, gv, mv, tiny_bundle.catalog, tiny_bundle.recist,
                       tiny_bundle.survival, tiny_bundle.cellline, pretrained=pre)
    np.testing.assert_array_equal(ckpt.arrays["encoder.gene_emb"],
                                  pre.arrays["encoder.gene_emb"])
    assert not np.array_equal(ckpt.arrays["recist_head.fc1.w"],
                              pre.arrays["recist_head.fc1.w"])


# --- checkpoint fault injection -------------------------------------------------

def _predict(ckpt, bundle, vocabs):
    model, gv, mv = ckpt.build_model()
    recs = bundle.recist[:8]
    batch = collate([tokenize(r.profile, gv, mv) for r in recs])
    fps = bundle.catalog.fingerprints([r.drug_id for r in recs])
    return model.predict_recist(batch, fps)


def test_roundtrip_predictions_byte_identical(tmp_path, tiny_bundle, tiny_vocabs, pretrained):
    _, ckpt = pretrained
    before = _predict(ckpt, tiny_bundle, tiny_vocabs)
    save_checkpoint(ckpt, tmp_path / "ck")
    after = _predict(load_checkpoint(tmp_path / "ck"), tiny_bundle, tiny_vocabs)
    assert before.tobytes() == after.tobytes()


def test_corrupt_blob_byte_reports_checksum(tmp_path, pretrained):
    _, ckpt = pretrained
    save_checkpoint(ckpt, tmp_path / "ck")
    blob = tmp_path / "ck" / ckpt_mod.BLOB_NAME
    raw = bytearray(blob.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.raises(CheckpointChecksumError):
        load_checkpoint(tmp_path / "ck")


def test_truncated_blob_reported(tmp_path, pretrained):
    _, ckpt = pretrained
    save_checkpoint(ckpt, tmp_path / "ck")
    blob = tmp_path / "ck" / ckpt_mod.BLOB_NAME
    blob.write_bytes(blob.read_bytes()[:100])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(tmp_path / "ck")


def test_unsupported_version_reported(tmp_path, pretrained):
    _, ckpt = pretrained
    save_checkpoint(ckpt, tmp_path / "ck")
    manifest = tmp_path / "ck" / ckpt_mod.MANIFEST_NAME
    data = json.loads(manifest.read_text())
    data["format_version"] = 99
    manifest.write_text(json.dumps(data))
    with pytest.raises(CheckpointVersionError, match="99"):
        load_checkpoint(tmp_path / "ck")


def test_shape_mismatch_reported(tmp_path, pretrained):
    _, ckpt = pretrained
    save_checkpoint(ckpt, tmp_path / "ck")
    manifest = tmp_path / "ck" / ckpt_mod.MANIFEST_NAME
    data = json.loads(manifest.read_text())
    data["arrays"][0]["shape"] = [1, 1]
    manifest.write_text(json.dumps(data))
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(tmp_path / "ck")


def test_error_codes_are_distinct():
    codes = {cls.code for cls in (CheckpointVersionError, CheckpointShapeError,
                                  CheckpointTruncatedError, CheckpointChecksumError)}
    assert len(codes) == 4


def test_early_stopping_patience():
    from oncodrp.trainer import _should_stop

    cfg = desk_config(early_stopping=True, patience=3)
    assert not _should_stop([0.5, 0.6, 0.58], cfg)
    assert not _should_stop([0.5, 0.6, 0.58, 0.57], cfg)          # 2 epochs past best
    assert _should_stop([0.5, 0.6, 0.58, 0.57, 0.56], cfg)        # 3 epochs past best
    improving = desk_config(early_stopping=True, patience=3)
    assert not _should_stop([0.5, 0.55, 0.6, 0.65, 0.7], improving)
    target = desk_config(stop_at_val_metric=0.8)
    assert _should_stop([0.5, 0.81], target)
    assert not _should_stop([0.5, 0.79], target)
