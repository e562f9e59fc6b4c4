"""Per-node features: 3-dim shallow metadata, 768-dim text embeddings, assembly.

Embeddings travel in the MMEB1 binary format (little-endian): magic `MMEB1`,
version u8=1, dim u32, record count u64; each record is id (u16 length + UTF-8),
token count u32, token entries (u16 length + UTF-8 text + dim float32), then
dim float32 pooled values. Pooled must equal the token mean within 1e-5.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .graph import TweetRecord

EMBED_DIM = 768
_MAGIC = b"MMEB1"
_VERSION = 1
_POOL_TOL = 1e-5
SIGMA_FLOOR = 1e-8


class EmbeddingFormatError(ValueError):
    pass


class BadMagic(EmbeddingFormatError):
    pass


class DimensionMismatch(EmbeddingFormatError):
    def __init__(self, expected: int, got: int):
        self.expected, self.got = expected, got
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")


class PoolingMismatch(EmbeddingFormatError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"pooled vector of {record_id!r} is not the token mean")


class EmptyTokenList(ValueError):
    pass


class MissingStats(ValueError):
    pass


class MissingEmbedding(KeyError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"no embedding for node {node_id!r} and no fallback encoder")


@dataclass
class EmbeddingRecord:
    id: str
    tokens: list[tuple[str, np.ndarray]]  # (token text, float32 vector)
    pooled: np.ndarray  # float32 (dim,)


@dataclass(frozen=True)
class ShallowStats:
    """Train-split transform parameters for the 3 count features."""

    kind: str  # "raw" | "log1p_zscore"
    mu: np.ndarray
    sigma: np.ndarray  # floored at SIGMA_FLOOR


SHALLOW_ORDER = ("reply_count", "quote_count", "retweet_count")


def _counts(record: TweetRecord) -> np.ndarray:
    return np.array(
        [record.reply_count, record.quote_count, record.retweet_count], dtype=np.float64
    )


def fit_shallow_stats(records, kind: str = "log1p_zscore") -> ShallowStats:
    """Compute per-dimension mean/std of log1p counts on the training split."""
    if kind == "raw":
        return ShallowStats("raw", np.zeros(3), np.ones(3))
    if kind != "log1p_zscore":
        raise ValueError(f"unknown transform {kind!r}")
    rows = np.stack([np.log1p(_counts(r)) for r in records]) if records else np.zeros((0, 3))
    if rows.shape[0] == 0:
        return ShallowStats(kind, np.zeros(3), np.ones(3))
    mu = rows.mean(axis=0)
    sigma = np.maximum(rows.std(axis=0), SIGMA_FLOOR)
    return ShallowStats(kind, mu, sigma)


def encode_shallow(record: TweetRecord, transform: str = "log1p_zscore", stats: ShallowStats | None = None) -> np.ndarray:
    """3 reals in fixed order (reply, quote, retweet); z-scored when requested."""
    c = _counts(record)
    if transform == "raw":
        return c
    if transform != "log1p_zscore":
        raise ValueError(f"unknown transform {transform!r}")
    if stats is None or stats.kind != "log1p_zscore":
        raise MissingStats("log1p_zscore requires train-split statistics")
    return (np.log1p(c) - stats.mu) / stats.sigma


def pool_tokens(tokens) -> np.ndarray:
    """Componentwise arithmetic mean of token vectors, computed in float64."""
    vecs = [np.asarray(v, dtype=np.float64) for v in tokens]
    if not vecs:
        raise EmptyTokenList("cannot pool zero token vectors")
    return np.mean(np.stack(vecs), axis=0)


# ---------------------------------------------------------------------------
# MMEB1 serialization


def write_embeddings(path, records, dim: int = EMBED_DIM) -> None:
    """Write records to an MMEB1 file, validating every vector length."""
    recs = list(records)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BIQ", _VERSION, dim, len(recs)))
        for rec in recs:
            rid = rec.id.encode("utf-8")
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<I", len(rec.tokens)))
            for text, vec in rec.tokens:
                v = np.asarray(vec, dtype=np.float32)
                if v.shape != (dim,):
                    raise DimensionMismatch(dim, int(v.size))
                tb = text.encode("utf-8")
                fh.write(struct.pack("<H", len(tb)))
                fh.write(tb)
                fh.write(v.tobytes())
            pooled = np.asarray(rec.pooled, dtype=np.float32)
            if pooled.shape != (dim,):
                raise DimensionMismatch(dim, int(pooled.size))
            fh.write(pooled.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise EmbeddingFormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def load_embeddings(path, expected_dim: int | None = None) -> dict[str, EmbeddingRecord]:
    """Parse an MMEB1 file; verifies the pooled-equals-token-mean invariant."""
    out: dict[str, EmbeddingRecord] = {}
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise BadMagic(f"{path} is not an MMEB1 file")
        version, dim, count = struct.unpack("<BIQ", _read_exact(fh, 13))
        if version != _VERSION:
            raise BadMagic(f"unsupported MMEB1 version {version}")
        if expected_dim is not None and dim != expected_dim:
            raise DimensionMismatch(expected_dim, dim)
        vec_bytes = 4 * dim
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2))
            rid = _read_exact(fh, id_len).decode("utf-8")
            (n_tok,) = struct.unpack("<I", _read_exact(fh, 4))
            tokens: list[tuple[str, np.ndarray]] = []
            for _ in range(n_tok):
                (t_len,) = struct.unpack("<H", _read_exact(fh, 2))
                text = _read_exact(fh, t_len).decode("utf-8")
                vec = np.frombuffer(_read_exact(fh, vec_bytes), dtype="<f4").copy()
                tokens.append((text, vec))
            pooled = np.frombuffer(_read_exact(fh, vec_bytes), dtype="<f4").copy()
            if tokens:
                mean = pool_tokens([v for _, v in tokens])
                if np.max(np.abs(mean - pooled.astype(np.float64))) > _POOL_TOL:
                    raise PoolingMismatch(rid)
            out[rid] = EmbeddingRecord(id=rid, tokens=tokens, pooled=pooled)
        if fh.read(1):
            raise EmbeddingFormatError("trailing bytes after final record")
    return out


# ---------------------------------------------------------------------------
# hashed fallback encoder


class HashedEncoder:
    """Deterministic bag-of-buckets text encoder.

    Lowercased whitespace tokens are hashed (blake2b, 8-byte digest, little
    endian) onto `dim` buckets; bucket counts are L2-normalized to give the
    pooled vector. Each token's vector is its one-hot bucket scaled so that
    the arithmetic mean of token vectors reproduces the pooled vector, which
    keeps the MMEB1 pooling invariant valid for hashed records.
    """

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def encode(self, node_id: str, text: str) -> EmbeddingRecord:
        toks = text.lower().split()
        if not toks:
            zero = np.zeros(self.dim, dtype=np.float32)
            return EmbeddingRecord(id=node_id, tokens=[], pooled=zero)
        counts = np.zeros(self.dim, dtype=np.float64)
        buckets = [self.bucket(t) for t in toks]
        for b in buckets:
            counts[b] += 1.0
        norm = float(np.linalg.norm(counts))
        pooled = counts / norm
        scale = len(toks) / norm
        tokens = []
        for t, b in zip(toks, buckets):
            vec = np.zeros(self.dim, dtype=np.float32)
            vec[b] = scale
            tokens.append((t, vec))
        return EmbeddingRecord(id=node_id, tokens=tokens, pooled=pooled.astype(np.float32))


# ---------------------------------------------------------------------------
# assembly


@dataclass
class FeatureSet:
    """Aligned per-node features for an InteractionGraph."""

    node_ids: list[str]
    shallow: np.ndarray  # float64 (n, 3)
    text_pooled: np.ndarray  # float64 (n, 768)
    text_tokens: list[list[tuple[str, np.ndarray]] | None]
    multimodal: np.ndarray | None = None  # float64 (n, 6), model-owned
    stats: ShallowStats | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


def assemble_features(
    graph,
    shallow: dict[str, np.ndarray],
    embeddings: dict[str, EmbeddingRecord],
    fallback_encoder: HashedEncoder | None = None,
    texts: dict[str, str] | None = None,
    stats: ShallowStats | None = None,
) -> FeatureSet:
    """Stack shallow and pooled-text features in InteractionGraph node order.

    Nodes absent from `embeddings` fall back to the hashed encoder over
    `texts` (empty text when the node has none); without a fallback this is a
    MissingEmbedding error.
    """
    n = graph.n_nodes
    sh = np.zeros((n, 3), dtype=np.float64)
    pooled = np.zeros((n, EMBED_DIM), dtype=np.float64)
    tokens: list[list[tuple[str, np.ndarray]] | None] = [None] * n
    for i, nid in enumerate(graph.node_ids):
        if nid not in shallow:
            raise KeyError(f"no shallow features for node {nid!r}")
        sh[i] = shallow[nid]
        rec = embeddings.get(nid)
        if rec is None:
            if fallback_encoder is None:
                raise MissingEmbedding(nid)
            rec = fallback_encoder.encode(nid, (texts or {}).get(nid, ""))
        if rec.pooled.size != EMBED_DIM:
            raise DimensionMismatch(EMBED_DIM, int(rec.pooled.size))
        pooled[i] = rec.pooled.astype(np.float64)
        tokens[i] = [(t, v.astype(np.float64)) for t, v in rec.tokens]
    return FeatureSet(
        node_ids=list(graph.node_ids), shallow=sh, text_pooled=pooled,
        text_tokens=tokens, multimodal=None, stats=stats,
    )
