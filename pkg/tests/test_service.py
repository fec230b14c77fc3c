"""Service endpoints over a small trained snapshot, via the ASGI test client."""

import json

import pytest
from fastapi.testclient import TestClient

from oncodrp import service as svc
from oncodrp.checkpoint import save_checkpoint
from oncodrp.dataio import save_catalog, save_cohort_profiles
from oncodrp.tokenizer import save_panel
from oncodrp.trainer import pretrain_survival

from conftest import desk_config


@pytest.fixture(scope="module")
def served_dir(tmp_path_factory, tiny_bundle, tiny_vocabs):
    """Checkpoint, catalog, panel and one cohort on disk plus a config file."""
    root = tmp_path_factory.mktemp("svc")
    gv, mv = tiny_vocabs
    ckpt = pretrain_survival(desk_config(seed=21), gv, mv, tiny_bundle.catalog,
                             tiny_bundle.survival)
    save_checkpoint(ckpt, root / "ckpt")
    save_catalog(root / "catalog.tsv", tiny_bundle.catalog)
    save_panel(root / "panel.txt", tiny_bundle.panel_genes)
    cohort = [(r.patient_id, r.profile) for r in tiny_bundle.survival[:6]]
    save_cohort_profiles(root / "cohort_crc.tsv", cohort)
    config = {
        "checkpoint_path": str(root / "ckpt"),
        "catalog_path": str(root / "catalog.tsv"),
        "panel_path": str(root / "panel.txt"),
        "cohort_paths": {"CRC": str(root / "cohort_crc.tsv")},
    }
    (root / "service.json").write_text(json.dumps(config))
    return root


@pytest.fixture(scope="module")
def client(served_dir):
    config = svc.load_config(served_dir / "service.json", env={})
    state = svc.build_state(config)
    return TestClient(svc.create_app(state), raise_server_exceptions=False)


def golden_request(tiny_bundle, cancer_type="CRC"):
    profile = tiny_bundle.recist[0].profile
    return {
        "mutations": [
            {"gene": e.gene, "mutation": e.mutation,
             "annotations": list(e.annotations) if e.annotations else None}
            for e in profile.entries
        ],
        "cancer_type": cancer_type,
    }


def test_health_and_model_endpoints(client):
    health = client.get("/api/v1/health")
    assert health.status_code == 200
    body = health.json()
    assert body["status"] == "ok" and body["cohorts"] == ["CRC"]
    model = client.get("/api/v1/model").json()
    assert model["hash"] == body["model_hash"]
    assert model["n_drugs"] == 8


def test_drugs_endpoint_lists_catalog(client):
    drugs = client.get("/api/v1/drugs").json()
    assert len(drugs) == 8
    assert {"drug_id", "name"} <= set(drugs[0])


def test_recommend_contract(client, tiny_bundle):
    resp = client.post("/api/v1/recommend", json=golden_request(tiny_bundle))
    assert resp.status_code == 200
    body = resp.json()
    recs = body["recommendations"]
    assert len(recs) == min(10, 8)
    assert [r["rank"] for r in recs] == list(range(1, len(recs) + 1))
    probs = [r["probability"] for r in recs]
    assert probs == sorted(probs, reverse=True)
    assert all(0.0 < p < 1.0 for p in probs)
    assert all(r["cohort_summary"] is not None for r in recs)
    assert len(body["swarm"]) == 8
    assert body["cohort_id"] == "CRC"


def test_recommend_deterministic_body(client, tiny_bundle):
    req = golden_request(tiny_bundle)
    a = client.post("/api/v1/recommend", json=req)
    b = client.post("/api/v1/recommend", json=req)
    assert a.content == b.content


def test_unknown_cancer_type_degrades_to_flag(client, tiny_bundle):
    resp = client.post("/api/v1/recommend", json=golden_request(tiny_bundle, "UNKNOWN"))
    assert resp.status_code == 200
    body = resp.json()
    assert "no_reference_cohort" in body["flags"]
    assert body["cohort_id"] is None
    assert all(r["robust_z"] is None for r in body["recommendations"])


def test_cohort_override_beats_cancer_type(client, tiny_bundle):
    req = golden_request(tiny_bundle, cancer_type="UNKNOWN")
    req["cohort"] = "CRC"
    body = client.post("/api/v1/recommend", json=req).json()
    assert body["cohort_id"] == "CRC"
    assert "no_reference_cohort" not in body["flags"]


def test_empty_mutation_list_is_explicit_error(client):
    resp = client.post("/api/v1/recommend", json={"mutations": [], "cancer_type": "CRC"})
    assert resp.status_code == 400
    assert "no usable mutations" in resp.json()["detail"]


def test_bad_annotation_length_reports_field_path(client):
    req = {"mutations": [{"gene": "GENE000", "mutation": "V0", "annotations": [0] * 22}],
           "cancer_type": "CRC"}
    resp = client.post("/api/v1/recommend", json=req)
    assert resp.status_code == 422
    detail = resp.json()["detail"][0]
    assert detail["loc"][:2] == ["body", "mutations"]
    assert "annotations" in detail["loc"]
    assert "length 23" in detail["msg"] or "23" in detail["msg"]


def test_missing_gene_field_rejected(client):
    resp = client.post("/api/v1/recommend",
                       json={"mutations": [{"mutation": "V0"}], "cancer_type": "CRC"})
    assert resp.status_code == 422
    assert any("gene" in str(item["loc"]) for item in resp.json()["detail"])


def test_oversized_request_rejected(served_dir, tiny_bundle):
    config = svc.load_config(served_dir / "service.json", env={"ONCODRP_MAX_MUTATIONS": "2"})
    state = svc.build_state(config)
    small = TestClient(svc.create_app(state))
    req = {"mutations": [{"gene": f"GENE{i:03d}", "mutation": "V0"} for i in range(3)]}
    assert small.post("/api/v1/recommend", json=req).status_code == 413


def test_env_overrides_port(served_dir):
    config = svc.load_config(served_dir / "service.json", env={"ONCODRP_PORT": "9100"})
    assert config.port == 9100


def test_dangling_cohort_path_aborts_startup(served_dir):
    config = svc.load_config(served_dir / "service.json", env={})
    config.cohort_paths = {"CRC": str(served_dir / "missing.tsv")}
    with pytest.raises(svc.ServiceConfigError, match="cohort path"):
        svc.build_state(config)


def test_missing_checkpoint_aborts(served_dir):
    config = svc.load_config(served_dir / "service.json",
                             env={"ONCODRP_CHECKPOINT": str(served_dir / "nope")})
    with pytest.raises(svc.ServiceConfigError, match="checkpoint"):
        svc.build_state(config)


def test_minimal_config_serves_with_degraded_evidence(served_dir, tiny_bundle):
    config = svc.load_config(served_dir / "service.json", env={})
    config.cohort_paths = {}
    state = svc.build_state(config)
    minimal = TestClient(svc.create_app(state))
    resp = minimal.post("/api/v1/recommend", json=golden_request(tiny_bundle))
    assert resp.status_code == 200
    assert "no_reference_cohort" in resp.json()["flags"]


def test_profile_from_document_golden(tiny_bundle):
    doc = golden_request(tiny_bundle)
    profile = svc.profile_from_document(doc)
    assert len(profile) == len(doc["mutations"])
    assert [e.gene for e in profile.entries] == [m["gene"] for m in doc["mutations"]]


def test_requests_never_mutate_model_parameters(served_dir, tiny_bundle):
    import numpy as np

    config = svc.load_config(served_dir / "service.json", env={})
    state = svc.build_state(config)
    client = TestClient(svc.create_app(state))
    params = state.bundle.model.params()
    before = {name: p.data.copy() for name, p in params.items()}
    for _ in range(3):
        assert client.post("/api/v1/recommend",
                           json=golden_request(tiny_bundle)).status_code == 200
    for name, p in params.items():
        np.testing.assert_array_equal(p.data, before[name])
