"""Acceptance suite: one test per release criterion, each printed as a
PASS/FAIL line by the conftest hook.

Thresholds and tolerances are pinned here; the learning criteria run on
seeded synthetic data with the planted-rule ceiling measured first.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest
from fastapi.testclient import TestClient

from oncodrp import autodiff as ad
from oncodrp import mtlr
from oncodrp import service as svc
from oncodrp import tokenizer as tok
from oncodrp.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from oncodrp.cli import main as cli_main
from oncodrp.dataio import DrugCatalog, SyntheticConfig, generate_synthetic, split
from oncodrp.encoder import EncoderConfig
from oncodrp.gradcheck import max_relative_error
from oncodrp.heads import FocalParams, focal_loss, mse_loss
from oncodrp.metrics import auprc, auroc, concordance_index
from oncodrp.model import ResponseModel
from oncodrp.recommender import ModelBundle, rank_top_k, robust_z, score_catalog
from oncodrp.tokenizer import MutationProfile, build_vocabularies, collate, tokenize
from oncodrp.trainer import TrainConfig, nsclc_subset, pretrain_survival, train_joint

from conftest import desk_config
from test_metrics import auprc_oracle, auroc_oracle, ci_oracle
from test_mtlr import enum_distribution, enum_loss

GRAD_TOL = 1e-4


def quiet_config(**kw) -> TrainConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TrainConfig(**kw)


# -- criterion: gradient suite ---------------------------------------------------

def _op_instance(op: str, rng) -> tuple[list, callable]:
    # weights are drawn once here; build() must be deterministic across calls
    t = lambda *shape: ad.Tensor(rng.standard_normal(shape), requires_grad=True,
                                 dtype=np.float64)
    w = lambda *shape: ad.Tensor(rng.standard_normal(shape))
    if op == "matmul":
        a, b, ww = t(3, 4), t(4, 2), w(3, 2)
        return [a, b], lambda: ad.tensor_sum(ad.mul(ad.matmul(a, b), ww))
    if op == "add":
        a, b, ww = t(2, 3, 4), t(4), w(2, 3, 4)
        return [a, b], lambda: ad.tensor_sum(ad.mul(ad.add(a, b), ww))
    if op == "mul":
        a, b, ww = t(3, 4), t(3, 1), w(3, 4)
        return [a, b], lambda: ad.tensor_sum(ad.mul(ad.mul(a, b), ww))
    if op == "concat":
        a, b, ww = t(2, 3), t(2, 2), w(2, 5)
        return [a, b], lambda: ad.tensor_sum(ad.mul(ad.concat([a, b], axis=1), ww))
    if op == "slice":
        a, ww = t(3, 5), w(2, 2)
        return [a], lambda: ad.tensor_sum(ad.mul(a[1:, 2:4], ww))
    if op == "softmax":
        a, ww = t(3, 5), w(3, 5)
        mask = np.where(rng.random((3, 5)) < 0.25, -1e9, 0.0)
        mask[:, 0] = 0.0
        return [a], lambda: ad.tensor_sum(ad.mul(ad.softmax(a, -1, mask), ww))
    if op == "layer_norm":
        a, g, b, ww = t(4, 6), t(6), t(6), w(4, 6)
        return [a, g, b], lambda: ad.tensor_sum(ad.mul(ad.layer_norm(a, g, b), ww))
    if op == "relu":
        a, ww = t(4, 4), w(4, 4)
        a.data += np.sign(a.data) * 0.1
        return [a], lambda: ad.tensor_sum(ad.mul(ad.relu(a), ww))
    if op == "sigmoid":
        a, ww = t(4, 4), w(4, 4)
        return [a], lambda: ad.tensor_sum(ad.mul(ad.sigmoid(a), ww))
    if op == "exp":
        a, ww = t(3, 3), w(3, 3)
        return [a], lambda: ad.tensor_sum(ad.mul(ad.exp(a), ww))
    if op == "log":
        a = ad.Tensor(rng.random((3, 3)) + 0.5, requires_grad=True, dtype=np.float64)
        ww = w(3, 3)
        return [a], lambda: ad.tensor_sum(ad.mul(ad.log(a), ww))
    if op == "sum":
        a, ww = t(3, 4), w(3)
        return [a], lambda: ad.tensor_sum(ad.mul(ad.tensor_sum(a, axis=1), ww))
    if op == "mean_over_mask":
        a, ww = t(2, 4, 3), w(2, 3)
        valid = np.ones((2, 4), dtype=bool)
        valid[0, rng.integers(1, 4):] = False
        return [a], lambda: ad.tensor_sum(ad.mul(ad.mean_over_mask(a, valid), ww))
    if op == "dropout":
        a, ww = t(4, 4), w(4, 4)
        seed = int(rng.integers(1 << 30))
        return [a], lambda: ad.tensor_sum(
            ad.mul(ad.dropout(a, 0.35, ad.named_rng(seed, "accept")), ww))
    if op == "embedding":
        table, ww = t(6, 3), w(2, 4, 3)
        idx = rng.integers(0, 6, (2, 4))
        return [table], lambda: ad.tensor_sum(ad.mul(ad.embedding(table, idx), ww))
    raise KeyError(op)


OPS = ["matmul", "add", "mul", "concat", "slice", "softmax", "layer_norm",
       "relu", "sigmoid", "exp", "log", "sum", "mean_over_mask", "dropout", "embedding"]

TOY_PANEL = [f"G{i}" for i in range(4)]
TOY_PAIRS = [(g, "V0", tuple(int(x) for x in np.random.default_rng(i).integers(0, 2, 23)))
             for i, g in enumerate(TOY_PANEL)]
TOY_GV, TOY_MV = build_vocabularies(TOY_PANEL, TOY_PAIRS)
TOY_GRID = mtlr.IntervalGrid((1.0, 2.0, 3.0))


def _composed_instance(kind: str, trial: int):
    rng = np.random.default_rng(50_000 + trial)
    cfg = EncoderConfig(dim=8, heads=2, layers=1, drug_hidden_dim=16, dropout=0.0)
    model = ResponseModel(cfg, len(TOY_GV), TOY_MV.size, n_intervals=3,
                          seed=trial, dtype=np.float64)
    items = [[("G0", "V0"), ("G1", "V0")], [("G2", "V0"), ("G3", "NOVEL")]]
    batch = collate([tokenize(MutationProfile.build(it), TOY_GV, TOY_MV) for it in items])
    fps = (rng.random((2, 2048)) < 0.05).astype(float)
    params = model.params()
    if kind == "recist":
        y = rng.integers(0, 2, 2).astype(float)
        build = lambda: focal_loss(model.recist_prob(
            model.encode_patient(batch), model.embed_drug(fps)), y)
        head = "recist_head.fc1.w"
    elif kind == "cellline":
        r = rng.uniform(0.1, 0.9, 2)
        build = lambda: mse_loss(model.audrc_value(
            model.encode_patient(batch), model.embed_drug(fps)), r)
        head = "audrc_head.fc1.w"
    else:
        targets = [mtlr.encode_target(float(rng.uniform(0, 4.0)),
                                      bool(rng.random() < 0.5), TOY_GRID) for _ in range(2)]
        build = lambda: mtlr.mtlr_loss(model.mtlr_logits(
            model.encode_patient(batch), model.embed_drug(fps)), targets)
        head = "mtlr_head.fc1.w"
    names = ["encoder.gene_emb", "encoder.layer0.wq.w", "encoder.layer0.ffn1.w",
             "encoder.fuse.w", "drug.fc1.w", "drug.norm.gamma", head]
    return build, [params[n] for n in names], rng


def test_gradient_suite_all_ops_and_losses():
    start = time.time()
    for op in OPS:
        for trial in range(100):
            rng = np.random.default_rng(hash((op, trial)) % (1 << 32))
            tensors, build = _op_instance(op, rng)
            err = max_relative_error(build, tensors)
            assert err < GRAD_TOL, f"{op} instance {trial}: rel err {err:.2e}"
    # composed losses: same rtol; an absolute floor of 1e-7 absorbs the
    # float64 round-off of central differences on O(1) losses, which
    # otherwise swamps coordinates whose true derivative is ~1e-6
    for kind in ("survival", "recist", "cellline"):
        for trial in range(100):
            build, tensors, rng = _composed_instance(kind, trial)
            err = max_relative_error(build, tensors, sample_per_tensor=3, rng=rng,
                                     atol=1e-7)
            assert err < GRAD_TOL, f"loss {kind} instance {trial}: rel err {err:.2e}"
    elapsed = time.time() - start
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s, budget is 120s"


# -- criterion: MTLR enumeration oracle -------------------------------------------

def test_mtlr_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for k in range(1, 7):
        grid = mtlr.IntervalGrid(tuple(float(i + 1) for i in range(k)))
        for _ in range(40):
            phi = rng.standard_normal(k) * 2.5
            np.testing.assert_allclose(mtlr.event_distribution(phi),
                                       enum_distribution(list(phi)), atol=1e-9)
            p_enum = enum_distribution(list(phi))
            for b_idx, bound in enumerate((0.0,) + grid.boundaries):
                want = sum(p_enum[b_idx:])
                got = mtlr.survival_function(phi, grid, bound)
                assert got == pytest.approx(want, abs=1e-9)
            n = int(rng.integers(1, 5))
            rows = rng.standard_normal((n, k)) * 2.5
            targets = [mtlr.encode_target(float(rng.uniform(0, k + 1.5)),
                                          bool(rng.random() < 0.5), grid) for _ in range(n)]
            got = mtlr.mtlr_loss(ad.Tensor(rows, requires_grad=True), targets).item()
            assert got == pytest.approx(enum_loss(rows.tolist(), targets), abs=1e-9)
    # worked values
    np.testing.assert_allclose(mtlr.event_distribution([math.log(2.0), 0.0]),
                               [0.5, 0.25, 0.25], atol=1e-12)
    tg = mtlr.SurvivalTarget(1, False, np.array([1.0, 1.0]))
    censored = mtlr.mtlr_loss(ad.Tensor(np.zeros((1, 2)), requires_grad=True), [tg]).item()
    assert censored == pytest.approx(math.log(1.5), abs=1e-12)


# -- criterion: loss identities -----------------------------------------------------

def test_loss_identities():
    rng = np.random.default_rng(1)
    fp = FocalParams(alpha=0.5, gamma=0.0)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        y = rng.integers(0, 2, n).astype(float)
        p = rng.uniform(0.01, 0.99, n)
        got = focal_loss(ad.Tensor(p), y, fp).item()
        bce = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        assert got == pytest.approx(0.5 * bce, abs=1e-9)
    v = rng.uniform(0, 1, 64)
    assert mse_loss(ad.Tensor(v), v).item() == 0.0


# -- criterion: metric oracles ------------------------------------------------------

def test_metric_oracles_on_random_instances():
    rng = np.random.default_rng(2)
    checked_ci = 0
    for _ in range(200):
        n = int(rng.integers(4, 31))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = np.round(rng.standard_normal(n), 1)  # coarse grid forces ties
        assert auroc(labels, scores) == pytest.approx(
            auroc_oracle(list(labels), list(scores)), abs=0.0)
        assert auprc(labels, scores) == pytest.approx(
            auprc_oracle(list(labels), list(scores)), abs=1e-12)
        times = np.round(rng.uniform(1, 15, n), 0)
        events = rng.random(n) < 0.6
        risks = np.round(rng.standard_normal(n), 1)
        try:
            got = concordance_index(times, events, risks)
        except ValueError:
            continue  # no comparable pairs in this draw
        assert got == pytest.approx(ci_oracle(list(times), list(events), list(risks)),
                                    abs=0.0)
        checked_ci += 1
    assert checked_ci > 100  # censored CI cases actually exercised


# -- criterion: tokenizer suite ------------------------------------------------------

def test_tokenizer_suite():
    panel = [f"GENE{i:03d}" for i in range(324)]
    rng = np.random.default_rng(3)
    pairs = []
    for g in panel[:80]:
        for j in range(3):
            pairs.append((g, f"V{j}", tuple(int(b) for b in rng.integers(0, 2, 23))))
    gv, mv = build_vocabularies(panel, pairs)
    assert len(gv) == 331
    assert sorted(gv.index.values()) == list(range(331))
    assert mv.namut_index == len(pairs) + 1
    np.testing.assert_array_equal(mv.annotations[mv.namut_index], np.ones(23))

    samples = []
    for _ in range(1000):
        k = int(rng.integers(0, 10))
        items = [(panel[int(rng.integers(324))],
                  f"V{int(rng.integers(4))}" if rng.random() > 0.1 else "NOVELX")
                 for _ in range(k)]
        s = tokenize(MutationProfile.build(items), gv, mv)
        assert len(s.gene_ids) == len(s.pair_ids) == s.annotations.shape[0] == len(s.pad_mask)
        samples.append(s)

    batch = tok.collate(samples[:64])
    for i in range(64):
        back = batch.unpad(i)
        np.testing.assert_array_equal(back.gene_ids, samples[i].gene_ids)
        np.testing.assert_array_equal(back.pair_ids, samples[i].pair_ids)
        np.testing.assert_array_equal(back.annotations, samples[i].annotations)

    unknown = tokenize(MutationProfile.build([(panel[0], "NEVER_SEEN")]), gv, mv)
    assert unknown.pair_ids[3] == mv.namut_index
    np.testing.assert_array_equal(unknown.annotations[3], np.ones(23))


# -- criterion: end-to-end learning ---------------------------------------------------

@pytest.fixture(scope="module")
def learning_bundle():
    cfg = SyntheticConfig(n_survival=600, n_recist=2000, n_cellline=600,
                          panel_size=48, n_drugs=20, signal_strength=4.0, seed=42)
    return generate_synthetic(cfg)


def test_end_to_end_learning(learning_bundle):
    start = time.time()
    b = learning_bundle
    gv, mv = build_vocabularies(b.panel_genes, b.known_pairs)
    enc = EncoderConfig(dim=32, heads=4, layers=2, drug_hidden_dim=64, dropout=0.1)

    # planted-rule ceilings first: the targets must be attainable
    r_train, r_val, _ = split(b.recist, seed=0)
    pos = {id(r): i for i, r in enumerate(b.recist)}
    ceiling_auroc = auroc([r.label for r in r_val],
                          [b.planted["recist"][pos[id(r)]] for r in r_val])
    s_train, s_val, _ = split(b.survival, seed=0)
    spos = {id(r): i for i, r in enumerate(b.survival)}
    ceiling_ci = concordance_index([r.pfs_days for r in s_val],
                                   [r.event_observed for r in s_val],
                                   [b.planted["survival"][spos[id(r)]] for r in s_val])
    assert ceiling_ci > 0.6 and ceiling_auroc > 0.75

    # stage 1: survival pretraining must beat CI 0.6 on validation
    cfg1 = quiet_config(lr=0.003, epochs=300, batch_size=128, seed=0, n_intervals=8,
                        encoder=enc, dropout=0.1, stop_at_val_metric=0.63)
    ck1 = pretrain_survival(cfg1, gv, mv, b.catalog, s_train, s_val)
    best_ci = max(h["val_ci"] for h in ck1.metadata["history"])
    assert len(ck1.metadata["history"]) <= 300
    assert best_ci > 0.6, f"stage-1 val CI {best_ci:.3f} <= 0.6 (ceiling {ceiling_ci:.3f})"

    # stage 2: joint training must reach validation AUROC 0.75 within 300 epochs
    cfg2 = quiet_config(lr=0.002, epochs=300, batch_size=128, seed=0, n_intervals=8,
                        encoder=enc, dropout=0.1, stop_at_val_metric=0.78)
    ck2 = train_joint(cfg2, gv, mv, b.catalog, r_train, nsclc_subset(s_train),
                      b.cellline, recist_val=r_val, pretrained=ck1)
    best_auroc = max(h["val_auroc"] for h in ck2.metadata["history"])
    assert len(ck2.metadata["history"]) <= 300
    assert best_auroc >= 0.75, (f"stage-2 val AUROC {best_auroc:.3f} < 0.75 "
                                f"(ceiling {ceiling_auroc:.3f})")

    # overfit capability: 64 records, batch 32, train AUROC >= 0.95
    small = SyntheticConfig(n_recist=64, n_survival=10, n_cellline=10, panel_size=16,
                            n_drugs=10, signal_strength=1.0, seed=7)
    sb = generate_synthetic(small)
    sgv, smv = build_vocabularies(sb.panel_genes, sb.known_pairs)
    cfg3 = quiet_config(lr=0.005, epochs=500, batch_size=32, seed=1,
                        use_pretrain=False, use_survival=False, use_cellline=False,
                        encoder=EncoderConfig(dim=32, heads=4, layers=1,
                                              drug_hidden_dim=64, dropout=0.0),
                        dropout=0.0, stop_at_val_metric=0.97)
    ck3 = train_joint(cfg3, sgv, smv, sb.catalog, sb.recist, recist_val=sb.recist)
    model, g2, m2 = ck3.build_model()
    batch = collate([tokenize(r.profile, g2, m2) for r in sb.recist])
    fps = sb.catalog.fingerprints([r.drug_id for r in sb.recist])
    train_auroc = auroc([r.label for r in sb.recist], model.predict_recist(batch, fps))
    assert len(ck3.metadata["history"]) <= 500
    assert train_auroc >= 0.95, f"overfit train AUROC {train_auroc:.3f} < 0.95"

    elapsed = time.time() - start
    assert elapsed < 600.0, f"end-to-end learning took {elapsed:.0f}s, budget is 600s"


# -- criterion: ablation mechanics ------------------------------------------------------

def test_ablation_mechanics(tmp_path):
    data = tmp_path / "data"
    fast = ["--dim", "16", "--heads", "2", "--layers", "1", "--epochs", "2",
            "--batch-size", "16", "--intervals", "4", "--seed", "9", "--quiet-ranges"]
    assert cli_main(["synth", "--out", str(data), "--seed", "9", "--n-survival", "80",
                     "--n-recist", "80", "--n-cellline", "80", "--panel-size", "12",
                     "--n-drugs", "8"]) == 0
    pre = tmp_path / "pre"
    assert cli_main(["pretrain", "--data", str(data), "--out", str(pre), *fast]) == 0

    expected = {
        "full": ([], {"loss_survival", "loss_recist", "loss_cellline"}),
        "no_pretrain": (["--no-pretrain"], {"loss_survival", "loss_recist", "loss_cellline"}),
        "no_cellline": (["--no-cellline"], {"loss_survival", "loss_recist"}),
        "no_survival": (["--no-survival"], {"loss_recist", "loss_cellline"}),
    }
    hashes = {}
    for name, (flags, want_keys) in expected.items():
        out = tmp_path / name
        argv = ["train", "--data", str(data), "--out", str(out), *flags, *fast]
        if "--no-pretrain" not in flags:
            argv += ["--pretrained", str(pre)]
        assert cli_main(argv) == 0
        log = [json.loads(l) for l in (out / "train_log.jsonl").read_text().splitlines()]
        keys = {k for rec in log for k in rec if k.startswith("loss_")}
        assert keys == want_keys, f"{name}: log has {keys}, expected {want_keys}"
        hashes[name] = checkpoint_hash(load_checkpoint(out))
    for name in ("no_pretrain", "no_cellline", "no_survival"):
        assert hashes[name] != hashes["full"], f"{name} checkpoint equals the full run"


# -- criterion: recommendation contract --------------------------------------------------

def test_recommendation_contract(tiny_bundle, tiny_vocabs):
    gv, mv = tiny_vocabs
    ckpt = pretrain_survival(desk_config(seed=13), gv, mv, tiny_bundle.catalog,
                             tiny_bundle.survival)
    bundle = ModelBundle.from_checkpoint(ckpt)

    # project the small-vocab model onto a 70-drug synthetic catalog
    wide = generate_synthetic(SyntheticConfig(
        n_survival=10, n_recist=10, n_cellline=10, panel_size=12, pairs_per_gene=3,
        n_drugs=70, seed=11))
    catalog70 = wide.catalog
    assert len(catalog70) == 70
    profile = tiny_bundle.recist[0].profile

    scores = score_catalog(profile, catalog70, bundle)
    assert len(scores) == 70
    top = rank_top_k(scores, catalog70, k=10)
    assert len(top) == 10
    assert [r.rank for r in top] == list(range(1, 11))

    permuted = DrugCatalog(list(catalog70)[::-1])
    top_perm = rank_top_k(score_catalog(profile, permuted, bundle), permuted, k=10)
    assert [(r.drug_id, r.rank, r.probability) for r in top] == \
           [(r.drug_id, r.rank, r.probability) for r in top_perm]

    z, degenerate = robust_z(0.9, [0.1, 0.2, 0.3, 0.4, 0.5])
    assert not degenerate and z == pytest.approx(3.0, abs=1e-12)
    z2, degenerate2 = robust_z(0.9, [0.4] * 6)
    assert degenerate2 and z2 is None


# -- criterion: service integration --------------------------------------------------------

def test_service_integration(tmp_path, tiny_bundle, tiny_vocabs):
    from oncodrp.dataio import save_catalog, save_cohort_profiles
    from oncodrp.tokenizer import save_panel

    gv, mv = tiny_vocabs
    ckpt = pretrain_survival(desk_config(seed=31), gv, mv, tiny_bundle.catalog,
                             tiny_bundle.survival)
    save_checkpoint(ckpt, tmp_path / "ckpt")

    # checkpoint round-trip must preserve scores byte for byte
    bundle_a = ModelBundle.from_checkpoint(ckpt)
    bundle_b = ModelBundle.from_checkpoint(load_checkpoint(tmp_path / "ckpt"))
    profile = tiny_bundle.recist[0].profile
    sa = score_catalog(profile, tiny_bundle.catalog, bundle_a)
    sb = score_catalog(profile, tiny_bundle.catalog, bundle_b)
    assert np.asarray(list(sa.values())).tobytes() == np.asarray(list(sb.values())).tobytes()

    save_catalog(tmp_path / "catalog.tsv", tiny_bundle.catalog)
    save_panel(tmp_path / "panel.txt", tiny_bundle.panel_genes)
    save_cohort_profiles(tmp_path / "cohort.tsv",
                         [(r.patient_id, r.profile) for r in tiny_bundle.survival[:5]])
    config = svc.ServiceConfig(checkpoint_path=str(tmp_path / "ckpt"),
                               catalog_path=str(tmp_path / "catalog.tsv"),
                               panel_path=str(tmp_path / "panel.txt"),
                               cohort_paths={"CRC": str(tmp_path / "cohort.tsv")})
    client = TestClient(svc.create_app(svc.build_state(config)))

    golden = {"mutations": [{"gene": e.gene, "mutation": e.mutation,
                             "annotations": list(e.annotations) if e.annotations else None}
                            for e in profile.entries],
              "cancer_type": "CRC"}
    r1 = client.post("/api/v1/recommend", json=golden)
    r2 = client.post("/api/v1/recommend", json=golden)
    assert r1.status_code == 200
    assert r1.content == r2.content
    body = svc.RecommendResponse.model_validate(r1.json())  # schema-valid
    assert len(body.recommendations) == min(10, len(tiny_bundle.catalog))
    assert all(0.0 < r.probability < 1.0 for r in body.recommendations)

    bad = {"mutations": [{"gene": "GENE000", "mutation": "V0", "annotations": [0] * 22}]}
    resp = client.post("/api/v1/recommend", json=bad)
    assert 400 <= resp.status_code < 500
    loc = resp.json()["detail"][0]["loc"]
    assert "mutations" in loc and "annotations" in loc
