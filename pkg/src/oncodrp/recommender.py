"""Catalog scoring and evidence assembly for treatment ranking.

For one profile the whole catalog is scored with a single patient encoding,
the top k drugs are ranked, and two kinds of supporting evidence are
attached: a robust z-score of the patient's score against an unlabeled
reference cohort per drug (score minus cohort median, over the cohort IQR),
and a dispersion check of the patient's own scores across all drugs, which
flags near-constant score profiles as low confidence. Cohort score caches
are tied to the checkpoint hash they were computed with.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .checkpoint import Checkpoint, checkpoint_hash
from .dataio import DrugCatalog
from .model import ResponseModel
from .tokenizer import GeneVocab, MutationProfile, MutationVocab, collate, tokenize

DEFAULT_TOP_K = 10
DISPERSION_IQR_THRESHOLD = 0.02
AUX_LINK_TEMPLATE = "https://example.org/drug-evidence/{name}"  # stub lookup, no live client


class StaleCohortCacheError(RuntimeError):
    """Cohort cache was computed against a different checkpoint."""


@dataclass
class ModelBundle:
    """Loaded checkpoint ready for inference."""

    model: ResponseModel
    gene_vocab: GeneVocab
    mut_vocab: MutationVocab
    checkpoint_hash: str

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "ModelBundle":
        model, gv, mv = ckpt.build_model()
        return cls(model, gv, mv, checkpoint_hash(ckpt))


@dataclass(frozen=True)
class FiveNumberSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float

    @classmethod
    def of(cls, values: np.ndarray) -> "FiveNumberSummary":
        v = np.asarray(values, dtype=np.float64)
        q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
        return cls(float(v.min()), q1, med, q3, float(v.max()))

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def to_dict(self) -> dict:
        return {"min": self.minimum, "q1": self.q1, "median": self.median,
                "q3": self.q3, "max": self.maximum}


@dataclass
class Recommendation:
    drug_id: str
    name: str
    probability: float
    rank: int
    robust_z: float | None = None
    degenerate_iqr: bool = False
    cohort_summary: FiveNumberSummary | None = None
    aux_link: str = ""


@dataclass
class DispersionReport:
    """Spread of one patient's scores across the whole catalog."""

    iqr: float
    median: float
    low_confidence: bool
    threshold: float
    per_drug_z: dict[str, float | None] = field(default_factory=dict)


@dataclass
class ReferenceCohort:
    cohort_id: str
    cancer_type: str
    profiles: list[tuple[str, MutationProfile]]


@dataclass
class CohortCache:
    cohort_id: str
    checkpoint_hash: str
    scores: dict[str, np.ndarray]  # drug id -> score per cohort member


@dataclass
class EvidencePayload:
    recommendations: list[Recommendation]
    dispersion: DispersionReport
    all_scores: dict[str, float]   # swarm view: every catalog drug
    checkpoint_hash: str
    cohort_id: str | None


def score_catalog(profile: MutationProfile, catalog: DrugCatalog,
                  bundle: ModelBundle) -> dict[str, float]:
    """One probability per drug; the patient is encoded once and reused."""
    if len(catalog) == 0:
        raise ValueError("score_catalog: empty catalog")
    sample = tokenize(profile, bundle.gene_vocab, bundle.mut_vocab)
    batch = collate([sample])
    patient = bundle.model.encode_patient(batch)
    drug_ids = catalog.ids()
    fps = catalog.fingerprints(drug_ids)
    drugs = bundle.model.embed_drug(fps)
    tiled = Tensor(np.repeat(patient.data, len(drug_ids), axis=0))
    probs = bundle.model.recist_prob(tiled, drugs).data.reshape(-1)
    return {d: float(p) for d, p in zip(drug_ids, probs)}


def rank_top_k(scores: dict[str, float], catalog: DrugCatalog,
               k: int = DEFAULT_TOP_K) -> list[Recommendation]:
    """Descending by probability; ties break lexicographically by drug id."""
    if not scores:
        raise ValueError("rank_top_k: no scores")
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    out = []
    for rank, (drug_id, prob) in enumerate(ordered[:k], start=1):
        name = catalog.get(drug_id).name if drug_id in catalog else drug_id
        out.append(Recommendation(drug_id=drug_id, name=name, probability=prob, rank=rank,
                                  aux_link=AUX_LINK_TEMPLATE.format(name=name)))
    return out


def robust_z(patient_score: float, cohort_scores) -> tuple[float | None, bool]:
    """(z, degenerate) where z = (score - median) / IQR, quartiles by linear
    interpolation; a zero IQR yields (None, True)."""
    v = np.asarray(list(cohort_scores), dtype=np.float64)
    if v.size == 0:
        raise ValueError("robust_z: empty cohort")
    q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    if iqr == 0.0:
        return None, True
    return (patient_score - med) / iqr, False


def patient_dispersion(all_drug_scores: dict[str, float],
                       threshold: float = DISPERSION_IQR_THRESHOLD) -> DispersionReport:
    """Within-patient spread across drugs plus each drug's robust z inside it."""
    if len(all_drug_scores) < 2:
        raise ValueError("patient_dispersion: need scores for at least two drugs")
    values = np.array(list(all_drug_scores.values()), dtype=np.float64)
    q1, med, q3 = (float(np.quantile(values, q)) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    per_drug: dict[str, float | None] = {}
    for drug_id, score in all_drug_scores.items():
        per_drug[drug_id] = (score - med) / iqr if iqr > 0.0 else None
    return DispersionReport(iqr=iqr, median=med, low_confidence=iqr < threshold,
                            threshold=threshold, per_drug_z=per_drug)


def build_cohort_cache(cohort: ReferenceCohort, catalog: DrugCatalog,
                       bundle: ModelBundle) -> CohortCache:
    """Score every cohort member over the catalog; keyed to the checkpoint."""
    if not cohort.profiles:
        raise ValueError(f"cohort {cohort.cohort_id} has no profiles")
    per_drug: dict[str, list[float]] = {d: [] for d in catalog.ids()}
    for _, profile in cohort.profiles:
        scores = score_catalog(profile, catalog, bundle)
        for d, s in scores.items():
            per_drug[d].append(s)
    return CohortCache(cohort.cohort_id, bundle.checkpoint_hash,
                       {d: np.asarray(v) for d, v in per_drug.items()})


def assemble_evidence(profile: MutationProfile, bundle: ModelBundle, catalog: DrugCatalog,
                      cache: CohortCache | None = None, k: int = DEFAULT_TOP_K,
                      dispersion_threshold: float = DISPERSION_IQR_THRESHOLD) -> EvidencePayload:
    """Top-k ranking with cohort z-scores, summaries and the dispersion check."""
    if cache is not None and cache.checkpoint_hash != bundle.checkpoint_hash:
        raise StaleCohortCacheError(
            f"cohort cache {cache.cohort_id} was built for checkpoint "
            f"{cache.checkpoint_hash[:12]}, model is {bundle.checkpoint_hash[:12]}")
    scores = score_catalog(profile, catalog, bundle)
    recs = rank_top_k(scores, catalog, k)
    if cache is not None:
        for rec in recs:
            cohort_scores = cache.scores[rec.drug_id]
            z, degenerate = robust_z(rec.probability, cohort_scores)
            rec.robust_z = z
            rec.degenerate_iqr = degenerate
            rec.cohort_summary = FiveNumberSummary.of(cohort_scores)
    dispersion = patient_dispersion(scores, dispersion_threshold) if len(scores) >= 2 else \
        DispersionReport(iqr=0.0, median=float(next(iter(scores.values()))),
                         low_confidence=True, threshold=dispersion_threshold)
    return EvidencePayload(recommendations=recs, dispersion=dispersion, all_scores=scores,
                           checkpoint_hash=bundle.checkpoint_hash,
                           cohort_id=cache.cohort_id if cache else None)
