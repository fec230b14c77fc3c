"""Deployment-style inference: score a drug catalog for one profile, rank
the top ten, and attach cohort and dispersion evidence. Renders the
boxplot-with-patient-marker and swarm views to evidence_views.png.

Run: python3 demos/05_ranking_and_evidence.py
"""

import warnings

from oncodrp.dataio import SyntheticConfig, generate_synthetic
from oncodrp.encoder import EncoderConfig
from oncodrp.recommender import (ModelBundle, ReferenceCohort, assemble_evidence,
                                 build_cohort_cache)
from oncodrp.tokenizer import build_vocabularies
from oncodrp.trainer import TrainConfig, pretrain_survival

bundle = generate_synthetic(SyntheticConfig(
    n_survival=300, n_recist=100, n_cellline=100, panel_size=32, n_drugs=70,
    signal_strength=3.0, seed=5))
gv, mv = build_vocabularies(bundle.panel_genes, bundle.known_pairs)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    cfg = TrainConfig(lr=0.003, epochs=6, batch_size=128, seed=0, n_intervals=6,
                      encoder=EncoderConfig(dim=32, heads=4, layers=1,
                                            drug_hidden_dim=64, dropout=0.1))
ckpt = pretrain_survival(cfg, gv, mv, bundle.catalog, bundle.survival)
model = ModelBundle.from_checkpoint(ckpt)

cohort = ReferenceCohort("synthetic-crc", "CRC",
                         [(r.patient_id, r.profile) for r in bundle.survival[:40]])
cache = build_cohort_cache(cohort, bundle.catalog, model)

patient = bundle.recist[0].profile
payload = assemble_evidence(patient, model, bundle.catalog, cache)

print(f"catalog of {len(payload.all_scores)} drugs, top {len(payload.recommendations)}:")
print(f"{'rank':<5}{'drug':<10}{'score':>8}{'z':>8}  cohort median")
for r in payload.recommendations:
    z = "-" if r.robust_z is None else f"{r.robust_z:+.2f}"
    print(f"{r.rank:<5}{r.drug_id:<10}{r.probability:>8.4f}{z:>8}  {r.cohort_summary.median:.4f}")
d = payload.dispersion
print(f"\npatient-level dispersion: IQR={d.iqr:.4f} "
      f"-> {'LOW CONFIDENCE' if d.low_confidence else 'ok'} (threshold {d.threshold})")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    top = payload.recommendations
    fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4.5))
    stats = [{
        "med": r.cohort_summary.median, "q1": r.cohort_summary.q1, "q3": r.cohort_summary.q3,
        "whislo": r.cohort_summary.minimum, "whishi": r.cohort_summary.maximum,
        "label": r.drug_id, "fliers": [],
    } for r in top]
    left.bxp(stats, showfliers=False)
    left.plot(range(1, len(top) + 1), [r.probability for r in top], "r*", markersize=12,
              label="patient")
    left.set_title("cohort score distribution per recommended drug")
    left.tick_params(axis="x", rotation=60)
    left.legend()

    vals = np.array(list(payload.all_scores.values()))
    jitter = np.random.default_rng(0).uniform(-0.12, 0.12, len(vals))
    right.plot(jitter, vals, "o", alpha=0.5)
    right.set_xlim(-0.6, 0.6)
    right.set_xticks([])
    right.set_title("patient scores across the whole catalog")
    fig.tight_layout()
    fig.savefig("evidence_views.png", dpi=120)
    print("wrote evidence_views.png")
except ImportError:
    print("matplotlib not installed; skipping the plots")
