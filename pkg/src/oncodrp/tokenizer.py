"""Dual tokenization of mutation profiles.

A profile is tokenized on two aligned tracks. The gene track uses a
vocabulary of one token per panel gene plus seven specials; the mutation
track maps each (gene, mutation) pair to an integer id and carries a
23-dimensional annotation vector per position. Unrecognized pairs fall
back to a dedicated id whose annotation is the all-ones vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ANNOTATION_DIM = 23

# Specials occupy the first indices, panel genes follow in input order.
SPECIAL_TOKENS = ("<s>", "</s>", "<pad>", "<unk>", "<gensep>", "<mutsep>", "<mut>")
BOS, EOS, PAD, UNK, GENSEP, MUTSEP, MUT = range(7)

# Mutation-track id for positions that carry no mutation (pairs start at 1).
NULL_PAIR = 0


class TokenizerError(ValueError):
    """Invalid vocabulary construction or profile input."""


@dataclass(frozen=True)
class MutationEntry:
    """One (gene, mutation) observation, optionally with its annotation bits."""

    gene: str
    mutation: str
    annotations: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.gene:
            raise TokenizerError("mutation entry with empty gene name")
        if not self.mutation:
            raise TokenizerError(f"gene {self.gene}: empty mutation identifier")
        if self.annotations is not None:
            ann = tuple(int(v) for v in self.annotations)
            if len(ann) != ANNOTATION_DIM:
                raise TokenizerError(
                    f"{self.gene}:{self.mutation}: annotation vector has length "
                    f"{len(ann)}, expected {ANNOTATION_DIM}")
            if any(v not in (0, 1) for v in ann):
                raise TokenizerError(f"{self.gene}:{self.mutation}: annotations must be 0/1")
            object.__setattr__(self, "annotations", ann)


@dataclass(frozen=True)
class MutationProfile:
    """A patient's list of mutation entries, in report order."""

    entries: tuple[MutationEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    @classmethod
    def build(cls, items) -> "MutationProfile":
        """From (gene, mutation) or (gene, mutation, annotations) tuples."""
        entries = []
        for item in items:
            if isinstance(item, MutationEntry):
                entries.append(item)
            else:
                gene, mutation, *rest = item
                ann = tuple(rest[0]) if rest and rest[0] is not None else None
                entries.append(MutationEntry(gene, mutation, ann))
        return cls(tuple(entries))


@dataclass(frozen=True)
class GeneVocab:
    """Token -> index bijection over specials plus the gene panel."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    def __len__(self):
        return len(self.tokens)

    @property
    def genes(self) -> tuple[str, ...]:
        return self.tokens[len(SPECIAL_TOKENS):]

    def gene_index(self, gene: str) -> int:
        return self.index.get(gene, UNK)


@dataclass(frozen=True)
class MutationVocab:
    """(gene, mutation) pair -> index in 1..M, with M+1 reserved for unknowns.

    ``annotations`` has M+2 rows: row 0 (no mutation) is zero, rows 1..M hold
    each pair's bits and row M+1 (unknown pair) is all ones.
    """

    pairs: tuple[tuple[str, str], ...]
    index: dict[tuple[str, str], int] = field(repr=False)
    annotations: np.ndarray = field(repr=False)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def namut_index(self) -> int:
        return len(self.pairs) + 1

    @property
    def size(self) -> int:
        """Number of embedding rows: null + pairs + unknown."""
        return len(self.pairs) + 2

    def pair_index(self, gene: str, mutation: str) -> int:
        return self.index.get((gene, mutation), self.namut_index)


def build_vocabularies(panel_genes, known_pairs) -> tuple[GeneVocab, MutationVocab]:
    """Construct both vocabularies from the panel and the known-pair list.

    ``known_pairs`` holds (gene, mutation, annotation-bits) triples; index
    assignment follows input order so rebuilding from the same inputs gives
    identical maps.
    """
    genes = [str(g) for g in panel_genes]
    if any(not g for g in genes):
        raise TokenizerError("panel contains an empty gene name")
    if len(set(genes)) != len(genes):
        dupes = sorted({g for g in genes if genes.count(g) > 1})
        raise TokenizerError(f"duplicate gene names in panel: {dupes}")
    tokens = SPECIAL_TOKENS + tuple(genes)
    gv = GeneVocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)})

    pairs: list[tuple[str, str]] = []
    index: dict[tuple[str, str], int] = {}
    ann_rows = [np.zeros(ANNOTATION_DIM)]
    for gene, mutation, ann in known_pairs:
        entry = MutationEntry(gene, mutation, tuple(ann))
        key = (entry.gene, entry.mutation)
        if key in index:
            raise TokenizerError(f"duplicate gene-mutation pair {key}")
        pairs.append(key)
        index[key] = len(pairs)
        ann_rows.append(np.asarray(entry.annotations, dtype=np.float64))
    ann_rows.append(np.ones(ANNOTATION_DIM))
    mv = MutationVocab(pairs=tuple(pairs), index=index, annotations=np.stack(ann_rows))
    return gv, mv


@dataclass
class TokenizedSample:
    """Aligned gene/mutation index tracks plus annotations and the pad mask."""

    gene_ids: np.ndarray
    pair_ids: np.ndarray
    annotations: np.ndarray
    pad_mask: np.ndarray  # True exactly at <pad> positions

    def __post_init__(self):
        assert len(self.gene_ids) == len(self.pair_ids) == len(self.pad_mask)
        assert self.annotations.shape == (len(self.gene_ids), ANNOTATION_DIM)

    def __len__(self):
        return len(self.gene_ids)


def tokenize(profile: MutationProfile, gv: GeneVocab, mv: MutationVocab,
             sort_genes: bool = False) -> TokenizedSample:
    """Lay out one profile on both tracks.

    Gene track: <s>, then per gene its token, <mutsep> and one <mut> per
    mutation, with <gensep> between genes, closed by </s>. The mutation
    track carries the pair id at each <mut> position and the null id
    elsewhere. Genes keep first-appearance order unless ``sort_genes``.
    """
    groups: dict[str, list[MutationEntry]] = {}
    for entry in profile.entries:
        groups.setdefault(entry.gene, []).append(entry)
    gene_order = sorted(groups) if sort_genes else list(groups)

    gene_ids = [BOS]
    pair_ids = [NULL_PAIR]
    ann = [np.zeros(ANNOTATION_DIM)]
    for gi, gene in enumerate(gene_order):
        if gi > 0:
            gene_ids.append(GENSEP)
            pair_ids.append(NULL_PAIR)
            ann.append(np.zeros(ANNOTATION_DIM))
        gene_ids.extend([gv.gene_index(gene), MUTSEP])
        pair_ids.extend([NULL_PAIR, NULL_PAIR])
        ann.extend([np.zeros(ANNOTATION_DIM), np.zeros(ANNOTATION_DIM)])
        for entry in groups[gene]:
            pid = mv.pair_index(entry.gene, entry.mutation)
            gene_ids.append(MUT)
            pair_ids.append(pid)
            if pid == mv.namut_index:
                # unknown pairs are always embedded with the all-ones vector
                ann.append(np.ones(ANNOTATION_DIM))
            elif entry.annotations is not None:
                ann.append(np.asarray(entry.annotations, dtype=np.float64))
            else:
                ann.append(mv.annotations[pid])
    gene_ids.append(EOS)
    pair_ids.append(NULL_PAIR)
    ann.append(np.zeros(ANNOTATION_DIM))

    n = len(gene_ids)
    return TokenizedSample(
        gene_ids=np.asarray(gene_ids, dtype=np.int64),
        pair_ids=np.asarray(pair_ids, dtype=np.int64),
        annotations=np.stack(ann),
        pad_mask=np.zeros(n, dtype=bool),
    )


@dataclass
class Batch:
    """Padded stack of tokenized samples."""

    gene_ids: np.ndarray      # (B, L) int
    pair_ids: np.ndarray      # (B, L) int
    annotations: np.ndarray   # (B, L, 23) float
    pad_mask: np.ndarray      # (B, L) bool, True at padding

    @property
    def size(self) -> int:
        return self.gene_ids.shape[0]

    @property
    def length(self) -> int:
        return self.gene_ids.shape[1]

    def valid_mask(self) -> np.ndarray:
        return ~self.pad_mask

    def unpad(self, i: int) -> TokenizedSample:
        """Recover sample ``i`` without its padding."""
        keep = ~self.pad_mask[i]
        return TokenizedSample(
            gene_ids=self.gene_ids[i, keep].copy(),
            pair_ids=self.pair_ids[i, keep].copy(),
            annotations=self.annotations[i, keep].copy(),
            pad_mask=np.zeros(int(keep.sum()), dtype=bool),
        )


def collate(samples: list[TokenizedSample]) -> Batch:
    """Pad all samples to the batch maximum length, preserving order."""
    if not samples:
        raise TokenizerError("collate: need at least one sample")
    n = len(samples)
    length = max(len(s) for s in samples)
    gene_ids = np.full((n, length), PAD, dtype=np.int64)
    pair_ids = np.full((n, length), NULL_PAIR, dtype=np.int64)
    annotations = np.zeros((n, length, ANNOTATION_DIM))
    pad_mask = np.ones((n, length), dtype=bool)
    for i, s in enumerate(samples):
        m = len(s)
        gene_ids[i, :m] = s.gene_ids
        pair_ids[i, :m] = s.pair_ids
        annotations[i, :m] = s.annotations
        pad_mask[i, :m] = s.pad_mask
    return Batch(gene_ids, pair_ids, annotations, pad_mask)


def expected_track_length(mutations_per_gene: list[int]) -> int:
    """Length implied by the layout rule, for cross-checking tokenize."""
    n_genes = len(mutations_per_gene)
    if n_genes == 0:
        return 2
    return 2 + sum(2 + m for m in mutations_per_gene) + (n_genes - 1)


def load_panel(path) -> list[str]:
    """Panel file: one gene name per line, UTF-8."""
    genes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name = line.strip()
            if name:
                genes.append(name)
    return genes


def load_known_pairs(path) -> list[tuple[str, str, tuple[int, ...]]]:
    """Known-pairs TSV: gene, mutation, then 23 annotation columns of 0/1."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != 2 + ANNOTATION_DIM:
            raise TokenizerError(
                f"{path}: expected {2 + ANNOTATION_DIM} columns, found {len(header)}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 2 + ANNOTATION_DIM:
                raise TokenizerError(f"{path}:{lineno}: expected {2 + ANNOTATION_DIM} columns")
            try:
                ann = tuple(int(c) for c in cols[2:])
            except ValueError:
                raise TokenizerError(f"{path}:{lineno}: non-integer annotation value") from None
            pairs.append((cols[0], cols[1], ann))
    return pairs


def save_known_pairs(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        ann_cols = "\t".join(f"a{i}" for i in range(ANNOTATION_DIM))
        fh.write(f"gene\tmutation\t{ann_cols}\n")
        for gene, mutation, ann in pairs:
            bits = "\t".join(str(int(v)) for v in ann)
            fh.write(f"{gene}\t{mutation}\t{bits}\n")


def save_panel(path, genes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in genes:
            fh.write(f"{g}\n")
