"""Code-vector index, cosine search and ranking metrics."""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import SKIPPABLE, extract
from .frontend import tokenize_text
from .model import cosine_matrix

log = logging.getLogger(__name__)

INDEX_MAGIC = b"MMIX"
INDEX_VERSION = 1


class EmptyQuery(ValueError):
    pass


class EmptyIndex(ValueError):
    pass


class EmptyQuerySet(ValueError):
    pass


class MissingGroundTruth(KeyError):
    pass


class FingerprintMismatch(ValueError):
    pass


class IndexFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalIndex:
    ids: tuple
    vectors: np.ndarray  # [count, E], float64
    fingerprint: str = ""

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")
        vec = np.array(self.vectors, dtype=np.float64)
        vec = vec.reshape(len(self.ids), -1) if self.ids else vec.reshape(0, vec.shape[-1] if vec.ndim == 2 else 0)
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1] if self.vectors.ndim == 2 else 0

    def position(self, snippet_id):
        try:
            return self.ids.index(snippet_id)
        except ValueError:
            raise MissingGroundTruth(snippet_id) from None

    def to_bytes(self):
        buf = io.BytesIO()
        fp = self.fingerprint.encode("ascii")
        buf.write(INDEX_MAGIC)
        buf.write(struct.pack("<HII", INDEX_VERSION, self.dim, len(self.ids)))
        buf.write(struct.pack("<H", len(fp)))
        buf.write(fp)
        for sid, vec in zip(self.ids, self.vectors):
            raw = sid.encode("utf-8")
            buf.write(struct.pack("<I", len(raw)))
            buf.write(raw)
            buf.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        buf = io.BytesIO(data)

        def read(n):
            chunk = buf.read(n)
            if len(chunk) != n:
                raise IndexFormatError("truncated index file")
            return chunk

        if read(4) != INDEX_MAGIC:
            raise IndexFormatError("bad magic; not an index file")
        version, dim, count = struct.unpack("<HII", read(10))
        if version != INDEX_VERSION:
            raise IndexFormatError(f"unsupported index version {version}")
        (fp_len,) = struct.unpack("<H", read(2))
        fp = read(fp_len).decode("ascii")
        ids, vecs = [], []
        for _ in range(count):
            (n,) = struct.unpack("<I", read(4))
            ids.append(read(n).decode("utf-8"))
            vecs.append(np.frombuffer(read(8 * dim), dtype="<f8"))
        vectors = np.array(vecs, dtype=np.float64).reshape(count, dim)
        return cls(tuple(ids), vectors, fp)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class QueryResult:
    query: str
    hits: list  # (snippet id, score)


@dataclass
class EvalReport:
    franks: dict = field(default_factory=dict)  # snippet id -> FRank
    success: dict = field(default_factory=dict)  # k -> SuccessRate@k
    mrr: float = 0.0

    @property
    def count(self):
        return len(self.franks)

    def to_dict(self):
        return {
            "queries": self.count,
            "success_rate": {str(k): v for k, v in sorted(self.success.items())},
            "mrr": self.mrr,
            "franks": self.franks,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def table(self):
        rows = [("queries", str(self.count))]
        rows += [(f"R@{k}", f"{v:.4f}") for k, v in sorted(self.success.items())]
        rows.append(("MRR", f"{self.mrr:.4f}"))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def build_index(examples_or_records, model, fingerprint="", batch_size=64):
    """Encode every snippet once (dropout off).

    Accepts extracted examples or raw :class:`CodeRecord` objects; records that
    fail extraction are skipped and reported.  Returns ``(index, failures)``.
    """
    examples, failures = [], []
    for item in examples_or_records:
        if hasattr(item, "ast"):
            examples.append(item)
            continue
        try:
            examples.append(extract(item, require_description=False))
        except SKIPPABLE as exc:
            log.warning("skipping record %s: %s", item.id, exc)
            failures.append((item.id, f"{type(exc).__name__}: {exc}"))
    vectors = model.code_vectors(examples, batch_size)
    index = RetrievalIndex(tuple(ex.id for ex in examples), vectors, fingerprint)
    return index, failures


def rank(scores, ids):
    """Positions ordered by score descending, then id ascending."""
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


def search_vector(query_vec, index, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    scores = cosine_matrix(np.asarray(query_vec)[None, :], index.vectors)[0]
    order = rank(scores.tolist(), index.ids)[:k]
    return [(index.ids[i], float(scores[i])) for i in order]


def search(query, index, model, k=10):
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    tokens = tokenize_text(query)
    if not tokens:
        raise EmptyQuery("query has no words")
    qvec = model.description_vectors([tokens])[0]
    return QueryResult(query, search_vector(qvec, index, k))


def frank_of(scores, ids, target):
    """1-based rank of ``target`` under (score desc, id asc) ordering."""
    s = scores[target]
    tid = ids[target]
    better = sum(1 for j, x in enumerate(scores) if x > s or (x == s and ids[j] < tid))
    return better + 1


def success_rate_at_k(franks, k):
    franks = list(franks)
    if not franks:
        raise EmptyQuerySet("no queries")
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(1 for r in franks if r <= k) / len(franks)


def mrr(franks):
    franks = list(franks)
    if not franks:
        raise EmptyQuerySet("no queries")
    if any(r < 1 for r in franks):
        raise ValueError("ranks must be >= 1")
    return sum(1.0 / r for r in franks) / len(franks)


def evaluate_vectors(query_ids, query_vectors, index, ks=(1, 5, 10)):
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    positions = [index.position(q) for q in query_ids]
    scores = cosine_matrix(query_vectors, index.vectors)
    franks = {}
    for qi, (qid, pos) in enumerate(zip(query_ids, positions)):
        franks[qid] = frank_of(scores[qi].tolist(), index.ids, pos)
    values = list(franks.values())
    return EvalReport(franks, {k: success_rate_at_k(values, k) for k in ks}, mrr(values))


def evaluate(eval_examples, index, model, ks=(1, 5, 10)):
    """Each example's description is a query whose ground truth is its own snippet."""
    if not eval_examples:
        raise EmptyQuerySet("no evaluation queries")
    ids = [ex.id for ex in eval_examples]
    for qid in ids:
        index.position(qid)
    qvecs = model.description_vectors([ex.description_tokens for ex in eval_examples])
    return evaluate_vectors(ids, qvecs, index, ks)


def check_fingerprint(index, fingerprint):
    if index.fingerprint != fingerprint:
        raise FingerprintMismatch(
            f"index was built with checkpoint {index.fingerprint[:12] or '?'} "
            f"but the loaded checkpoint is {fingerprint[:12]}"
        )
