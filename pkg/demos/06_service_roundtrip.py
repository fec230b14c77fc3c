"""Spin up the HTTP service in-process and exercise its four endpoints,
including a recommendation round trip and a validation failure.

Run: python3 demos/06_service_roundtrip.py
"""

import json
import tempfile
import warnings
from pathlib import Path

from fastapi.testclient import TestClient

from oncodrp.checkpoint import save_checkpoint
from oncodrp.dataio import (SyntheticConfig, generate_synthetic, save_catalog,
                            save_cohort_profiles)
from oncodrp.encoder import EncoderConfig
from oncodrp.service import ServiceConfig, build_state, create_app
from oncodrp.tokenizer import build_vocabularies, save_panel
from oncodrp.trainer import TrainConfig, pretrain_survival

bundle = generate_synthetic(SyntheticConfig(
    n_survival=200, n_recist=50, n_cellline=50, panel_size=24, n_drugs=30, seed=3))
gv, mv = build_vocabularies(bundle.panel_genes, bundle.known_pairs)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    cfg = TrainConfig(lr=0.003, epochs=4, batch_size=64, seed=0, n_intervals=5,
                      encoder=EncoderConfig(dim=32, heads=4, layers=1,
                                            drug_hidden_dim=64, dropout=0.1))
ckpt = pretrain_survival(cfg, gv, mv, bundle.catalog, bundle.survival)

root = Path(tempfile.mkdtemp(prefix="oncodrp-demo-"))
save_checkpoint(ckpt, root / "ckpt")
save_catalog(root / "catalog.tsv", bundle.catalog)
save_panel(root / "panel.txt", bundle.panel_genes)
save_cohort_profiles(root / "cohort.tsv",
                     [(r.patient_id, r.profile) for r in bundle.survival[:15]])

state = build_state(ServiceConfig(
    checkpoint_path=str(root / "ckpt"), catalog_path=str(root / "catalog.tsv"),
    panel_path=str(root / "panel.txt"), cohort_paths={"CRC": str(root / "cohort.tsv")}))
client = TestClient(create_app(state))

print("GET /api/v1/health ->", client.get("/api/v1/health").json())
print("GET /api/v1/model  ->", {k: v for k, v in client.get("/api/v1/model").json().items()
                                if k in ("version", "n_drugs", "n_intervals")})
print("GET /api/v1/drugs  -> first three:", client.get("/api/v1/drugs").json()[:3])

profile = bundle.recist[0].profile
request = {"mutations": [{"gene": e.gene, "mutation": e.mutation} for e in profile.entries],
           "cancer_type": "CRC"}
resp = client.post("/api/v1/recommend", json=request)
body = resp.json()
print(f"\nPOST /api/v1/recommend -> {resp.status_code}; "
      f"{len(body['recommendations'])} drugs, flags={body['flags']}")
top = body["recommendations"][0]
print("top recommendation:", json.dumps(top, indent=2)[:400], "...")

bad = {"mutations": [{"gene": "TP53", "mutation": "X", "annotations": [0, 1]}]}
resp = client.post("/api/v1/recommend", json=bad)
print(f"\ninvalid annotations -> {resp.status_code}, "
      f"field path {resp.json()['detail'][0]['loc']}")
