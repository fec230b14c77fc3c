"""Dataset records, TSV readers/writers, patient-grouped splitting and a
seeded synthetic generator with a planted response rule.

All files are UTF-8 TSV with a header row. Mutation profiles are encoded in
a single column as semicolon-separated ``gene:mutation:bits`` items, where
``bits`` is an optional string of 23 0/1 characters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import named_rng
from .tokenizer import ANNOTATION_DIM, MutationEntry, MutationProfile

FINGERPRINT_BITS = 2048
FINGERPRINT_HEX_CHARS = FINGERPRINT_BITS // 4


class DataFormatError(ValueError):
    """Malformed dataset file or record; message carries file and line."""


@dataclass(frozen=True)
class SurvivalRecord:
    patient_id: str
    profile: MutationProfile
    drug_id: str
    pfs_days: float
    event_observed: bool

    def __post_init__(self):
        if self.pfs_days < 0:
            raise DataFormatError(f"{self.patient_id}: pfs_days must be >= 0")


@dataclass(frozen=True)
class RecistRecord:
    patient_id: str
    profile: MutationProfile
    drug_id: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataFormatError(f"{self.patient_id}: label must be 0 or 1")


@dataclass(frozen=True)
class CellLineRecord:
    cell_line_id: str
    profile: MutationProfile
    drug_id: str
    audrc: float

    def __post_init__(self):
        if not 0.0 <= self.audrc <= 1.0:
            raise DataFormatError(f"{self.cell_line_id}: audrc must be in [0, 1]")

    @property
    def patient_id(self) -> str:
        """Grouping key; cell lines group by their own id."""
        return self.cell_line_id


@dataclass(frozen=True)
class DrugInfo:
    drug_id: str
    name: str
    fingerprint: np.ndarray  # (2048,) uint8 of 0/1

    def __post_init__(self):
        fp = np.asarray(self.fingerprint, dtype=np.uint8)
        if fp.shape != (FINGERPRINT_BITS,):
            raise DataFormatError(
                f"drug {self.drug_id}: fingerprint must have {FINGERPRINT_BITS} bits, "
                f"got shape {fp.shape}")
        object.__setattr__(self, "fingerprint", fp)


class DrugCatalog:
    """Ordered drug_id -> DrugInfo map."""

    def __init__(self, drugs: list[DrugInfo]):
        self._drugs: dict[str, DrugInfo] = {}
        for d in drugs:
            if d.drug_id in self._drugs:
                raise DataFormatError(f"duplicate drug id {d.drug_id}")
            self._drugs[d.drug_id] = d

    def __len__(self):
        return len(self._drugs)

    def __contains__(self, drug_id):
        return drug_id in self._drugs

    def __iter__(self):
        return iter(self._drugs.values())

    def get(self, drug_id: str) -> DrugInfo:
        if drug_id not in self._drugs:
            raise KeyError(f"unknown drug id {drug_id}")
        return self._drugs[drug_id]

    def ids(self) -> list[str]:
        return list(self._drugs)

    def fingerprints(self, drug_ids=None) -> np.ndarray:
        ids = self.ids() if drug_ids is None else list(drug_ids)
        return np.stack([self.get(d).fingerprint for d in ids]).astype(np.float64)


# ---------------------------------------------------------------------------
# profile cell encoding


def format_profile(profile: MutationProfile) -> str:
    items = []
    for e in profile.entries:
        for ch in (":", ";"):
            if ch in e.gene or ch in e.mutation:
                raise DataFormatError(f"'{ch}' not allowed in gene/mutation names: {e.gene}:{e.mutation}")
        if e.annotations is None:
            items.append(f"{e.gene}:{e.mutation}")
        else:
            bits = "".join(str(b) for b in e.annotations)
            items.append(f"{e.gene}:{e.mutation}:{bits}")
    return ";".join(items)


def parse_profile(cell: str, where: str = "") -> MutationProfile:
    entries = []
    cell = cell.strip()
    if cell:
        for item in cell.split(";"):
            parts = item.split(":")
            if len(parts) == 2:
                entries.append(MutationEntry(parts[0], parts[1]))
            elif len(parts) == 3:
                bits = parts[2]
                if len(bits) != ANNOTATION_DIM or any(c not in "01" for c in bits):
                    raise DataFormatError(f"{where}: bad annotation bits in {item!r}")
                entries.append(MutationEntry(parts[0], parts[1], tuple(int(c) for c in bits)))
            else:
                raise DataFormatError(f"{where}: bad mutation item {item!r}")
    return MutationProfile(tuple(entries))


# ---------------------------------------------------------------------------
# TSV loading and saving

_SCHEMAS = {
    "survival": ["patient_id", "drug_id", "pfs_days", "event_observed", "mutations"],
    "recist": ["patient_id", "drug_id", "label", "mutations"],
    "cellline": ["cell_line_id", "drug_id", "audrc", "mutations"],
}


def _read_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise DataFormatError(f"{path}: missing header row")
        cols = header.split("\t")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            vals = line.rstrip("\n").split("\t")
            if len(vals) != len(cols):
                raise DataFormatError(f"{path}:{lineno}: expected {len(cols)} columns, found {len(vals)}")
            rows.append((lineno, dict(zip(cols, vals))))
    return cols, rows


def load_dataset(path, kind: str, catalog: DrugCatalog):
    """Load one of the three record kinds, validating against the catalog."""
    if kind not in _SCHEMAS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    expected = _SCHEMAS[kind]
    cols, rows = _read_tsv(path)
    missing = [c for c in expected if c not in cols]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}")
    records = []
    for lineno, row in rows:
        where = f"{path}:{lineno}"
        try:
            profile = parse_profile(row["mutations"], where)
            drug_id = row["drug_id"]
            if drug_id not in catalog:
                raise DataFormatError(f"{where}: unknown drug id {drug_id!r}")
            if kind == "survival":
                rec = SurvivalRecord(row["patient_id"], profile, drug_id,
                                     float(row["pfs_days"]), _parse_bool(row["event_observed"], where))
            elif kind == "recist":
                rec = RecistRecord(row["patient_id"], profile, drug_id, int(row["label"]))
            else:
                rec = CellLineRecord(row["cell_line_id"], profile, drug_id, float(row["audrc"]))
        except DataFormatError:
            raise
        except (ValueError, KeyError) as exc:
            raise DataFormatError(f"{where}: {exc}") from exc
        records.append(rec)
    return records


def _parse_bool(s, where):
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise DataFormatError(f"{where}: bad boolean {s!r}")


def save_dataset(path, kind: str, records) -> None:
    cols = _SCHEMAS[kind]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in records:
            if kind == "survival":
                vals = [r.patient_id, r.drug_id, repr(float(r.pfs_days)),
                        "1" if r.event_observed else "0", format_profile(r.profile)]
            elif kind == "recist":
                vals = [r.patient_id, r.drug_id, str(r.label), format_profile(r.profile)]
            else:
                vals = [r.cell_line_id, r.drug_id, repr(float(r.audrc)), format_profile(r.profile)]
            fh.write("\t".join(vals) + "\n")


def load_catalog(path) -> DrugCatalog:
    """Catalog TSV: drug_id, name, fingerprint as 512 hex chars."""
    cols, rows = _read_tsv(path)
    for c in ("drug_id", "name", "fingerprint"):
        if c not in cols:
            raise DataFormatError(f"{path}: missing column {c}")
    drugs = []
    for lineno, row in rows:
        hexfp = row["fingerprint"].strip()
        if len(hexfp) != FINGERPRINT_HEX_CHARS:
            raise DataFormatError(
                f"{path}:{lineno}: fingerprint must be {FINGERPRINT_HEX_CHARS} hex chars, "
                f"got {len(hexfp)}")
        try:
            raw = bytes.fromhex(hexfp)
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: fingerprint is not hexadecimal") from None
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        drugs.append(DrugInfo(row["drug_id"], row["name"], bits))
    return DrugCatalog(drugs)


def save_catalog(path, catalog: DrugCatalog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\tname\tfingerprint\n")
        for d in catalog:
            hexfp = np.packbits(d.fingerprint).tobytes().hex()
            fh.write(f"{d.drug_id}\t{d.name}\t{hexfp}\n")


def load_cohort_profiles(path) -> list[tuple[str, MutationProfile]]:
    """Unlabeled cohort TSV: patient_id, mutations."""
    cols, rows = _read_tsv(path)
    for c in ("patient_id", "mutations"):
        if c not in cols:
            raise DataFormatError(f"{path}: missing column {c}")
    return [(row["patient_id"], parse_profile(row["mutations"], f"{path}:{lineno}"))
            for lineno, row in rows]


def save_cohort_profiles(path, items) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("patient_id\tmutations\n")
        for pid, profile in items:
            fh.write(f"{pid}\t{format_profile(profile)}\n")


# ---------------------------------------------------------------------------
# splitting


def split(records, ratios=(64, 16, 20), seed: int = 0, key=None):
    """Patient-grouped split into (train, val, test).

    All records sharing a grouping id land in the same part, so the parts
    are an exact disjoint cover. Deterministic for a given seed.
    """
    if sum(ratios) != 100:
        raise ValueError(f"split ratios must sum to 100, got {ratios}")
    if not records:
        raise ValueError("split: empty dataset")
    if key is None:
        key = lambda r: r.patient_id
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(key(r), []).append(r)
    order = list(groups)
    named_rng(seed, "split").shuffle(order)

    total = len(records)
    train_cut = total * ratios[0] / 100.0
    val_cut = total * (ratios[0] + ratios[1]) / 100.0
    parts = ([], [], [])
    seen = 0
    for gid in order:
        bucket = 0 if seen < train_cut else (1 if seen < val_cut else 2)
        parts[bucket].extend(groups[gid])
        seen += len(groups[gid])
    return parts


# ---------------------------------------------------------------------------
# synthetic data with a planted response rule


@dataclass
class SyntheticConfig:
    n_survival: int = 400
    n_recist: int = 400
    n_cellline: int = 400
    panel_size: int = 40
    pairs_per_gene: int = 4
    n_drugs: int = 70
    signal_strength: float = 2.0
    censor_rate: float = 0.3
    positive_rate: float = 0.55
    min_mutations: int = 2
    max_mutations: int = 8
    unknown_pair_rate: float = 0.02
    n_hidden_pairs: int = 24
    n_hidden_bits: int = 24
    n_interactions: int = 12
    base_pfs_days: float = 180.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_survival", "n_recist", "n_cellline", "panel_size", "n_drugs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SyntheticBundle:
    """Generated datasets plus the planted-rule scores needed by oracles."""

    panel_genes: list[str]
    known_pairs: list[tuple[str, str, tuple[int, ...]]]
    catalog: DrugCatalog
    survival: list[SurvivalRecord]
    recist: list[RecistRecord]
    cellline: list[CellLineRecord]
    planted: dict[str, np.ndarray] = field(repr=False)
    summary: dict = field(default_factory=dict)


def generate_synthetic(config: SyntheticConfig) -> SyntheticBundle:
    """Draw three datasets whose targets follow one hidden linear rule.

    The rule scores a (profile, drug) pair from a hidden subset of pair
    indicators, a hidden subset of fingerprint bits and a few pair-bit
    interaction terms; ``signal_strength`` scales the rule against unit
    noise, so 0 yields targets independent of the features.
    """
    cfg = config
    genes = [f"GENE{i:03d}" for i in range(cfg.panel_size)]
    rng = named_rng(cfg.seed, "synth")

    pairs = []
    for g in genes:
        for j in range(cfg.pairs_per_gene):
            ann = tuple(int(b) for b in rng.integers(0, 2, ANNOTATION_DIM))
            pairs.append((g, f"V{j}", ann))
    n_pairs = len(pairs)

    drugs = []
    for i in range(cfg.n_drugs):
        bits = (rng.random(FINGERPRINT_BITS) < 0.05).astype(np.uint8)
        drugs.append(DrugInfo(f"DRUG{i:03d}", f"compound-{i:03d}", bits))
    catalog = DrugCatalog(drugs)
    fp_matrix = catalog.fingerprints()

    n_hp = min(cfg.n_hidden_pairs, n_pairs)
    hidden_pairs = rng.choice(n_pairs, size=n_hp, replace=False)
    w_pairs = rng.standard_normal(n_hp)
    hidden_bits = rng.choice(FINGERPRINT_BITS, size=cfg.n_hidden_bits, replace=False)
    w_bits = rng.standard_normal(cfg.n_hidden_bits)
    inter_p = rng.choice(n_hp, size=cfg.n_interactions)
    inter_b = rng.choice(cfg.n_hidden_bits, size=cfg.n_interactions)
    w_inter = rng.standard_normal(cfg.n_interactions) * 2.0

    def draw_profile():
        k = int(rng.integers(cfg.min_mutations, cfg.max_mutations + 1))
        chosen = rng.choice(n_pairs, size=min(k, n_pairs), replace=False)
        entries = []
        indicator = np.zeros(n_hp)
        for idx in chosen:
            gene, mut, ann = pairs[idx]
            if rng.random() < cfg.unknown_pair_rate:
                entries.append(MutationEntry(gene, f"NOVEL{int(rng.integers(10_000))}", None))
            else:
                entries.append(MutationEntry(gene, mut, ann))
                hit = np.nonzero(hidden_pairs == idx)[0]
                if hit.size:
                    indicator[hit[0]] = 1.0
        return MutationProfile(tuple(entries)), indicator

    def rule_score(indicator, drug_idx):
        fbits = fp_matrix[drug_idx, hidden_bits]
        inter = float(np.dot(w_inter, indicator[inter_p] * fbits[inter_b]))
        return float(np.dot(w_pairs, indicator) + np.dot(w_bits, fbits) + inter)

    def make_pool(n_records, id_prefix, two_cohorts=False):
        """(id, profile, indicator, drug_idx, raw score) rows; a patient may repeat."""
        rows = []
        i = 0
        while len(rows) < n_records:
            if two_cohorts:
                cohort = "CRC" if i % 2 == 0 else "NSCLC"
                pid = f"{cohort}-{id_prefix}{i:05d}"
            else:
                pid = f"{id_prefix}{i:05d}"
            profile, indicator = draw_profile()
            n_rec = 1 + int(rng.random() < 0.25) + int(rng.random() < 0.1)
            drug_choices = rng.choice(cfg.n_drugs, size=n_rec, replace=False)
            for d in drug_choices:
                if len(rows) < n_records:
                    rows.append((pid, profile, indicator, int(d), None))
            i += 1
        scored = []
        for pid, profile, indicator, d, _ in rows:
            scored.append((pid, profile, indicator, d, rule_score(indicator, d)))
        return scored

    def standardize(scores):
        arr = np.asarray(scores)
        sd = arr.std()
        return (arr - arr.mean()) / (sd if sd > 1e-12 else 1.0)

    s = cfg.signal_strength

    surv_pool = make_pool(cfg.n_survival, "SP", two_cohorts=True)
    z_surv = standardize([r[4] for r in surv_pool])
    survival = []
    censored = 0
    for (pid, profile, _, d, _), z in zip(surv_pool, z_surv):
        noise = rng.standard_normal() * 0.4
        t = cfg.base_pfs_days * math.exp(-0.5 * s * z + noise)
        observed = True
        if rng.random() < cfg.censor_rate:
            t = rng.uniform(0.0, t)
            observed = False
            censored += 1
        survival.append(SurvivalRecord(pid, profile, f"DRUG{d:03d}", round(t, 3), observed))

    rec_pool = make_pool(cfg.n_recist, "RP", two_cohorts=False)
    z_rec = standardize([r[4] for r in rec_pool])
    bias = math.log(cfg.positive_rate / (1.0 - cfg.positive_rate))
    recist = []
    for (pid, profile, _, d, _), z in zip(rec_pool, z_rec):
        p = 1.0 / (1.0 + math.exp(-(s * z + bias)))
        label = int(rng.random() < p)
        recist.append(RecistRecord(pid, profile, f"DRUG{d:03d}", label))

    cl_pool = make_pool(cfg.n_cellline, "CL", two_cohorts=False)
    z_cl = standardize([r[4] for r in cl_pool])
    cellline = []
    for (pid, profile, _, d, _), z in zip(cl_pool, z_cl):
        # higher rule score means better response, and lower audrc is better
        v = 1.0 / (1.0 + math.exp(s * z + 0.35 * rng.standard_normal()))
        cellline.append(CellLineRecord(pid, profile, f"DRUG{d:03d}", float(np.clip(v, 0.0, 1.0))))

    summary = {
        "recist_positive_rate": float(np.mean([r.label for r in recist])),
        "censored_fraction": censored / len(survival),
        "n_pairs": n_pairs,
    }
    planted = {"survival": z_surv, "recist": z_rec, "cellline": z_cl}
    return SyntheticBundle(genes, pairs, catalog, survival, recist, cellline, planted, summary)
