"""Document ingestion, share/gap series and co-occurrence graphs.

Corpora are JSONL files with one record per document::

    {"id": "j1", "timestamp": "2017-09", "skills": ["java", "sql"]}

Timesteps are calendar months counted from a shared origin month, so the
demand (job description) and supply (work experience) corpora live on one
time axis.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from ._io import atomic_output_dir
from .errors import ConfigError, DimensionError, ParseError, RangeError

log = logging.getLogger(__name__)

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class DocKind(str, enum.Enum):
    JOB_DESCRIPTION = "jd"
    WORK_EXPERIENCE = "we"


class View(str, enum.Enum):
    DEMAND = "demand"
    SUPPLY = "supply"


VIEW_OF_KIND = {DocKind.JOB_DESCRIPTION: View.DEMAND, DocKind.WORK_EXPERIENCE: View.SUPPLY}


@dataclass(frozen=True)
class Document:
    id: str
    kind: DocKind
    timestep: int
    skills: frozenset[int]

    def __post_init__(self):
        if self.timestep < 0:
            raise RangeError(f"document {self.id!r} has negative timestep {self.timestep}")


@dataclass
class SkillVocabulary:
    names: list[str]
    counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigError("skill names must be unique")
        if not self.counts:
            self.counts = [0] * len(self.names)
        self._index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def id_of(self, name: str) -> int:
        return self._index[name]

    def add(self, name: str) -> int:
        if name not in self._index:
            self._index[name] = len(self.names)
            self.names.append(name)
            self.counts.append(0)
        return self._index[name]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["skill_id", "name", "count"])
        for i, (name, count) in enumerate(zip(self.names, self.counts)):
            w.writerow([i, name, count])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "SkillVocabulary":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["skill_id"]))
        if [int(r["skill_id"]) for r in rows] != list(range(len(rows))):
            raise ParseError("skill ids are not contiguous", path=str(path))
        return cls([r["name"] for r in rows], [int(r["count"]) for r in rows])


@dataclass(frozen=True)
class ShareSeries:
    view: View
    values: np.ndarray  # (n_skills, n_steps)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class GapSeries:
    values: np.ndarray


@dataclass(frozen=True)
class SkillGraph:
    view: View
    adjacency: np.ndarray  # dense, zeros where no edge is stored
    epsilon: float

    def edges(self) -> list[tuple[int, int, float]]:
        src, dst = np.nonzero(self.adjacency)
        return [(int(i), int(j), float(self.adjacency[i, j])) for i, j in zip(src, dst)]

    def to_tsv(self) -> str:
        return "".join(f"{i}\t{j}\t{w!r}\n" for i, j, w in self.edges())


# ---------------------------------------------------------------------------
# ingestion

def parse_month(stamp: str) -> int:
    """Absolute month number (year * 12 + month - 1) of a ``YYYY-MM`` string."""
    m = _MONTH_RE.match(stamp) if isinstance(stamp, str) else None
    if m is None or not 1 <= int(m.group(2)) <= 12:
        raise ValueError(f"bad timestamp {stamp!r}, expected YYYY-MM")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def format_month(absolute: int) -> str:
    return f"{absolute // 12:04d}-{absolute % 12 + 1:02d}"


def read_records(path) -> list[tuple[int, str, int, list[str]]]:
    """Parse a JSONL corpus into ``(line, id, absolute_month, skills)`` tuples."""
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["id"]
                month = parse_month(rec["timestamp"])
                skills = rec["skills"]
                if not isinstance(doc_id, str) or not isinstance(skills, list):
                    raise TypeError("id must be a string and skills a list")
                if not all(isinstance(s, str) for s in skills):
                    raise TypeError("skill names must be strings")
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed record: {exc}", line=lineno, path=str(path)) from None
            out.append((lineno, doc_id, month, skills))
    return out


def earliest_month(*paths) -> int:
    months = [m for p in paths for _, _, m, _ in read_records(p)]
    if not months:
        raise ConfigError("corpora contain no records")
    return min(months)


def ingest_documents(
    path,
    kind: DocKind | str,
    vocab: SkillVocabulary | None = None,
    *,
    start_month: int | str | None = None,
    n_steps: int | None = None,
    strict: bool = False,
) -> tuple[list[Document], SkillVocabulary]:
    """Read one corpus file into documents with month indices.

    ``start_month`` anchors timestep 0 (defaults to the file's earliest month);
    ``n_steps`` declares the allowed range.  In build mode (``strict=False``)
    unseen skill names extend ``vocab``; in strict mode they raise.
    """
    kind = DocKind(kind)
    records = read_records(path)
    if isinstance(start_month, str):
        start_month = parse_month(start_month)
    if start_month is None:
        start_month = min((m for _, _, m, _ in records), default=0)
    vocab = vocab if vocab is not None else SkillVocabulary([])
    docs = []
    for lineno, doc_id, month, names in records:
        t = month - start_month
        if t < 0 or (n_steps is not None and t >= n_steps):
            raise RangeError(f"{path}:{lineno}: timestamp {format_month(month)} outside declared range")
        ids = set()
        for name in names:
            if name not in vocab:
                if strict:
                    raise ParseError(f"unknown skill {name!r}", line=lineno, path=str(path))
                vocab.add(name)
            ids.add(vocab.id_of(name))
        docs.append(Document(doc_id, kind, t, frozenset(ids)))
    return docs, vocab


def filter_sparse_skills(docs: Iterable[Document], vocab: SkillVocabulary, min_count: int) -> SkillVocabulary:
    """Keep skills occurring in at least ``min_count`` documents.

    New ids follow descending count, ties broken by name.
    """
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    counts = Counter(k for d in docs for k in d.skills)
    kept = [(vocab.names[k], c) for k, c in counts.items() if c >= min_count]
    if not kept:
        raise ConfigError(f"no skill reaches min_count={min_count}")
    kept.sort(key=lambda nc: (-nc[1], nc[0]))
    return SkillVocabulary([n for n, _ in kept], [c for _, c in kept])


def remap_documents(docs: Iterable[Document], src: SkillVocabulary, dst: SkillVocabulary) -> list[Document]:
    """Re-express skill ids in ``dst``; skills missing from ``dst`` are dropped."""
    table = {i: dst.id_of(name) for i, name in enumerate(src.names) if name in dst}
    return [Document(d.id, d.kind, d.timestep, frozenset(table[k] for k in d.skills if k in table)) for d in docs]


# ---------------------------------------------------------------------------
# series and graphs

def to_csr(docs: Sequence[Document], n_skills: int | None = None):
    indptr = np.zeros(len(docs) + 1, dtype=np.int64)
    indices = []
    for i, d in enumerate(docs):
        ids = sorted(d.skills)
        indices.extend(ids)
        indptr[i + 1] = indptr[i] + len(ids)
    indices = np.asarray(indices, dtype=np.int64)
    if n_skills is not None and indices.size and (indices.min() < 0 or indices.max() >= n_skills):
        raise IndexError("skill id out of vocabulary range")
    timesteps = np.asarray([d.timestep for d in docs], dtype=np.int64)
    return indptr, indices, timesteps


def compute_share_series(docs: Sequence[Document], vocab: SkillVocabulary, view: View | str, horizon: int) -> ShareSeries:
    """Fraction of the step's documents that mention each skill."""
    view = View(view)
    indptr, indices, timesteps = to_csr(docs, len(vocab))
    if timesteps.size and timesteps.max() >= horizon:
        raise RangeError(f"horizon {horizon} does not cover timestep {timesteps.max()}")
    counts, totals = _kernels.share_counts(indptr, indices, timesteps, len(vocab), horizon)
    empty = totals == 0
    if empty.any():
        log.warning("%s view: no documents at timesteps %s; shares set to 0", view.value, np.flatnonzero(empty).tolist())
    values = np.zeros(counts.shape, dtype=np.float64)
    np.divide(counts, totals, out=values, where=~empty)
    return ShareSeries(view, values)


def compute_skill_gap(demand: ShareSeries, supply: ShareSeries) -> GapSeries:
    if demand.values.shape != supply.values.shape:
        raise DimensionError(f"demand {demand.values.shape} and supply {supply.values.shape} differ")
    return GapSeries(demand.values - supply.values)


def build_cooccurrence_graph(
    docs: Sequence[Document], vocab: SkillVocabulary, epsilon: float, view: View | str | None = None
) -> SkillGraph:
    """Thresholded normalized co-occurrence ratio ``#(i and j) / #i``."""
    if not 0 <= epsilon < 1:
        raise ConfigError(f"epsilon must lie in [0, 1), got {epsilon}")
    kinds = {d.kind for d in docs}
    if len(kinds) > 1:
        raise ConfigError("co-occurrence graph needs documents of a single kind")
    if view is None:
        view = VIEW_OF_KIND[kinds.pop()] if kinds else View.DEMAND
    view = View(view)
    indptr, indices, _ = to_csr(docs, len(vocab))
    joint = _kernels.cooccurrence_counts(indptr, indices, len(vocab))
    occ = np.diag(joint).copy()
    ratio = np.zeros(joint.shape, dtype=np.float64)
    np.divide(joint, occ[:, None], out=ratio, where=occ[:, None] > 0)
    ratio[ratio <= epsilon] = 0.0
    return SkillGraph(view, ratio, float(epsilon))


# ---------------------------------------------------------------------------
# on-disk corpus artifacts

def shares_to_csv(values: np.ndarray, vocab: SkillVocabulary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["skill"] + [f"t{t}" for t in range(values.shape[1])])
    for name, row in zip(vocab.names, values):
        w.writerow([name] + [repr(float(v)) for v in row])
    return buf.getvalue()


def read_shares_csv(path, vocab: SkillVocabulary) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    if [r[0] for r in body] != vocab.names:
        raise ParseError("share rows do not match the vocabulary order", path=str(path))
    return np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), len(rows[0]) - 1)


def read_graph_tsv(path, n_skills: int) -> np.ndarray:
    adj = np.zeros((n_skills, n_skills), dtype=np.float64)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                i, j, w = line.split("\t")
                adj[int(i), int(j)] = float(w)
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad triplet: {exc}", line=lineno, path=str(path)) from None
    return adj


def default_train_end(n_steps: int) -> int:
    """First validation timestep under the temporal 8:1:1 split."""
    return int(round(0.8 * n_steps))


@dataclass
class CorpusArtifacts:
    """Everything the model needs, as loaded from a ``build-corpus`` directory."""

    vocab: SkillVocabulary
    demand: np.ndarray
    supply: np.ndarray
    graph_demand: np.ndarray
    graph_supply: np.ndarray
    meta: dict

    @property
    def gap(self) -> np.ndarray:
        return self.demand - self.supply

    @property
    def n_steps(self) -> int:
        return self.demand.shape[1]

    @classmethod
    def load(cls, data_dir) -> "CorpusArtifacts":
        data_dir = Path(data_dir)
        if not (data_dir / "meta.json").exists():
            raise ConfigError(f"{data_dir} is not a corpus directory (missing meta.json)")
        meta = json.loads((data_dir / "meta.json").read_text())
        vocab = SkillVocabulary.from_csv(data_dir / "vocab.csv")
        n = len(vocab)
        return cls(
            vocab=vocab,
            demand=read_shares_csv(data_dir / "demand_shares.csv", vocab),
            supply=read_shares_csv(data_dir / "supply_shares.csv", vocab),
            graph_demand=read_graph_tsv(data_dir / "graph_demand.tsv", n),
            graph_supply=read_graph_tsv(data_dir / "graph_supply.tsv", n),
            meta=meta,
        )


def build_corpus(
    jd_path,
    we_path,
    out_dir,
    *,
    epsilon: float = 0.1,
    min_count: int = 50,
    train_end: int | None = None,
) -> CorpusArtifacts:
    """Run the whole pipeline and write its artifacts atomically to ``out_dir``."""
    start = earliest_month(jd_path, we_path)
    jd, vocab = ingest_documents(jd_path, DocKind.JOB_DESCRIPTION, start_month=start)
    we, vocab = ingest_documents(we_path, DocKind.WORK_EXPERIENCE, vocab, start_month=start)
    kept = filter_sparse_skills(jd + we, vocab, min_count)
    jd = remap_documents(jd, vocab, kept)
    we = remap_documents(we, vocab, kept)
    n_steps = max(d.timestep for d in jd + we) + 1
    if train_end is None:
        train_end = default_train_end(n_steps)
    if not 0 < train_end <= n_steps:
        raise ConfigError(f"train_end must lie in (0, {n_steps}], got {train_end}")

    demand = compute_share_series(jd, kept, View.DEMAND, n_steps)
    supply = compute_share_series(we, kept, View.SUPPLY, n_steps)
    gap = compute_skill_gap(demand, supply)
    g_dem = build_cooccurrence_graph([d for d in jd if d.timestep < train_end], kept, epsilon, View.DEMAND)
    g_sup = build_cooccurrence_graph([d for d in we if d.timestep < train_end], kept, epsilon, View.SUPPLY)

    meta = {
        "format_version": 1,
        "n_skills": len(kept),
        "n_steps": n_steps,
        "start_month": format_month(start),
        "train_end": train_end,
        "epsilon": epsilon,
        "min_count": min_count,
        "n_jd": len(jd),
        "n_we": len(we),
    }
    with atomic_output_dir(out_dir) as tmp:
        (tmp / "vocab.csv").write_text(kept.to_csv())
        (tmp / "demand_shares.csv").write_text(shares_to_csv(demand.values, kept))
        (tmp / "supply_shares.csv").write_text(shares_to_csv(supply.values, kept))
        (tmp / "gap.csv").write_text(shares_to_csv(gap.values, kept))
        (tmp / "graph_demand.tsv").write_text(g_dem.to_tsv())
        (tmp / "graph_supply.tsv").write_text(g_sup.to_tsv())
        (tmp / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return CorpusArtifacts(kept, demand.values, supply.values, g_dem.adjacency, g_sup.adjacency, meta)
