"""Triple file loading, ID dictionaries, graph augmentation, and tail indexing.

Datasets are directories with ``train.txt`` / ``valid.txt`` / ``test.txt``,
UTF-8, one ``head<TAB>relation<TAB>tail`` triple per line.  IDs are assigned
densely by first appearance while scanning train, then valid, then test
(head before tail within a line), which makes runs reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

Triple = tuple[int, int, int]

SPLIT_FILES = {"train": "train.txt", "valid": "valid.txt", "test": "test.txt"}


@dataclass
class TripleStore:
    """Entity/relation dictionaries plus train/valid/test triples in ID space."""

    entity_dict: dict[str, int]
    relation_dict: dict[str, int]
    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]

    @property
    def n_entities(self) -> int:
        return len(self.entity_dict)

    @property
    def n_relations(self) -> int:
        return len(self.relation_dict)

    @property
    def id_to_entity(self) -> list[str]:
        names = [""] * len(self.entity_dict)
        for name, idx in self.entity_dict.items():
            names[idx] = name
        return names

    @property
    def id_to_relation(self) -> list[str]:
        names = [""] * len(self.relation_dict)
        for name, idx in self.relation_dict.items():
            names[idx] = name
        return names

    def split(self, name: str) -> list[Triple]:
        if name not in SPLIT_FILES:
            raise DataError(f"unknown split {name!r}; expected one of {sorted(SPLIT_FILES)}")
        return getattr(self, name)

    def replace_train(self, train: list[Triple]) -> "TripleStore":
        """A new store sharing dictionaries and valid/test but with different train triples."""
        return TripleStore(
            entity_dict=self.entity_dict,
            relation_dict=self.relation_dict,
            train=list(train),
            valid=self.valid,
            test=self.test,
        )


@dataclass
class LoadReport:
    """Summary of a loaded dataset, including vocabulary not covered by train."""

    n_entities: int
    n_relations: int
    split_sizes: dict[str, int]
    entities_unseen_in_train: list[str]
    relations_unseen_in_train: list[str]

    @classmethod
    def from_store(cls, store: TripleStore) -> "LoadReport":
        seen_ents: set[int] = set()
        seen_rels: set[int] = set()
        for h, r, t in store.train:
            seen_ents.add(h)
            seen_ents.add(t)
            seen_rels.add(r)
        ent_names = store.id_to_entity
        rel_names = store.id_to_relation
        return cls(
            n_entities=store.n_entities,
            n_relations=store.n_relations,
            split_sizes={name: len(store.split(name)) for name in SPLIT_FILES},
            entities_unseen_in_train=[ent_names[i] for i in range(store.n_entities) if i not in seen_ents],
            relations_unseen_in_train=[rel_names[i] for i in range(store.n_relations) if i not in seen_rels],
        )

    def to_text(self) -> str:
        lines = [
            f"entities\t{self.n_entities}",
            f"relations\t{self.n_relations}",
        ]
        for name in SPLIT_FILES:
            lines.append(f"{name}\t{self.split_sizes[name]}")
        lines.append(f"entities_unseen_in_train\t{len(self.entities_unseen_in_train)}")
        lines.append(f"relations_unseen_in_train\t{len(self.relations_unseen_in_train)}")
        for name in self.entities_unseen_in_train[:20]:
            lines.append(f"flagged_entity\t{name}")
        for name in self.relations_unseen_in_train[:20]:
            lines.append(f"flagged_relation\t{name}")
        return "\n".join(lines) + "\n"


def _read_split(path: Path) -> list[tuple[str, str, str]]:
    if not path.is_file():
        raise DataError(f"missing split file: {path}")
    rows: list[tuple[str, str, str]] = []
    seen: dict[tuple[str, str, str], int] = {}
    duplicates: list[str] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            triple = (fields[0], fields[1], fields[2])
            if triple in seen:
                duplicates.append(f"line {lineno} duplicates line {seen[triple]}: {line}")
            else:
                seen[triple] = lineno
                rows.append(triple)
    if duplicates:
        shown = "; ".join(duplicates[:5])
        more = f" (+{len(duplicates) - 5} more)" if len(duplicates) > 5 else ""
        raise DataError(f"{path}: duplicate triples within split: {shown}{more}")
    return rows


def load_dataset(dir_path: str | Path) -> TripleStore:
    """Load a triple dataset directory into ID space.

    Duplicate lines within a split are rejected because they would distort
    the per-pair candidate labels used in training.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    raw = {name: _read_split(root / fname) for name, fname in SPLIT_FILES.items()}

    entity_dict: dict[str, int] = {}
    relation_dict: dict[str, int] = {}

    def entity_id(name: str) -> int:
        if name not in entity_dict:
            entity_dict[name] = len(entity_dict)
        return entity_dict[name]

    def relation_id(name: str) -> int:
        if name not in relation_dict:
            relation_dict[name] = len(relation_dict)
        return relation_dict[name]

    splits: dict[str, list[Triple]] = {}
    for name in SPLIT_FILES:
        splits[name] = [
            (entity_id(h), relation_id(r), entity_id(t)) for h, r, t in raw[name]
        ]
    return TripleStore(entity_dict, relation_dict, splits["train"], splits["valid"], splits["test"])


def write_dataset(store: TripleStore, dir_path: str | Path) -> None:
    """Write a store back to split files; reloading reproduces identical IDs."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    ent = store.id_to_entity
    rel = store.id_to_relation
    for name, fname in SPLIT_FILES.items():
        with (root / fname).open("w", encoding="utf-8") as handle:
            for h, r, t in store.split(name):
                handle.write(f"{ent[h]}\t{rel[r]}\t{ent[t]}\n")


def export_dictionaries(store: TripleStore, dir_path: str | Path) -> tuple[Path, Path]:
    """Write ``entities.dict`` / ``relations.dict`` as id<TAB>surface lines."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    ent_path = root / "entities.dict"
    rel_path = root / "relations.dict"
    with ent_path.open("w", encoding="utf-8") as handle:
        for idx, name in enumerate(store.id_to_entity):
            handle.write(f"{idx}\t{name}\n")
    with rel_path.open("w", encoding="utf-8") as handle:
        for idx, name in enumerate(store.id_to_relation):
            handle.write(f"{idx}\t{name}\n")
    return ent_path, rel_path


@dataclass
class AugmentedGraph:
    """Train triples plus inverse copies, with per-direction adjacency.

    ``triples_aug`` holds each original (h, r, t) together with its inverse
    (t, r + n_relations, h); the inverse copies feed training pairs and
    queries, not message passing.  Adjacency is built from the original
    train edges only and is sorted canonically by (head, relation, tail)
    so that aggregation order never depends on input file order.
    """

    n_entities: int
    n_relations: int
    triples_aug: list[Triple]
    loop_relation_id: int
    out_adj: list[list[tuple[int, int]]]
    in_adj: list[list[tuple[int, int]]]
    # canonical edge arrays for vectorized message passing
    heads: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    rels: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    tails: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_relation_rows(self) -> int:
        """Rows needed in a relation embedding table: forward, inverse, loop."""
        return 2 * self.n_relations + 1


def augment(store: TripleStore) -> AugmentedGraph:
    """Add inverse-relation triples and build per-direction adjacency."""
    n_rel = store.n_relations
    for h, r, t in store.train:
        if not (0 <= h < store.n_entities and 0 <= t < store.n_entities):
            raise DataError(f"entity id out of range in train triple ({h}, {r}, {t})")
        if not 0 <= r < n_rel:
            raise DataError(f"relation id out of range in train triple ({h}, {r}, {t})")

    edges = sorted(store.train)
    triples_aug: list[Triple] = []
    for h, r, t in edges:
        triples_aug.append((h, r, t))
    for h, r, t in edges:
        triples_aug.append((t, r + n_rel, h))

    out_adj: list[list[tuple[int, int]]] = [[] for _ in range(store.n_entities)]
    in_adj: list[list[tuple[int, int]]] = [[] for _ in range(store.n_entities)]
    for h, r, t in edges:
        out_adj[h].append((t, r))
        in_adj[t].append((h, r))

    heads = np.array([h for h, _, _ in edges], dtype=np.int64)
    rels = np.array([r for _, r, _ in edges], dtype=np.int64)
    tails = np.array([t for _, _, t in edges], dtype=np.int64)
    return AugmentedGraph(
        n_entities=store.n_entities,
        n_relations=n_rel,
        triples_aug=triples_aug,
        loop_relation_id=2 * n_rel,
        out_adj=out_adj,
        in_adj=in_adj,
        heads=heads,
        rels=rels,
        tails=tails,
    )


def known_tails(store: TripleStore, splits: set[str] | frozenset[str]) -> dict[tuple[int, int], set[int]]:
    """Index known tails per (entity, relation) over both query directions.

    Forward triples contribute (h, r) -> t; each also contributes the
    inverse entry (t, r + n_relations) -> h.  Used both for candidate
    labels during training and for filtered ranking.
    """
    unknown = set(splits) - set(SPLIT_FILES)
    if unknown:
        raise DataError(f"unknown splits {sorted(unknown)}; expected subset of {sorted(SPLIT_FILES)}")
    n_rel = store.n_relations
    index: dict[tuple[int, int], set[int]] = {}
    for name in sorted(splits):
        for h, r, t in store.split(name):
            index.setdefault((h, r), set()).add(t)
            index.setdefault((t, r + n_rel), set()).add(h)
    return index
