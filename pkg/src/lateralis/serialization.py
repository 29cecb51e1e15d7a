"""Versioned binary containers for every fitted artifact.

Common layout: an 8-byte magic (`LATL` + a 4-byte kind tag) followed by a
little-endian uint32 format version, then kind-specific fields. Arrays are
row-major float64. The feature container is append-per-record so
extraction can checkpoint; its row count is implied by the file size.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .classifier import SoftmaxModel
from .dataset import Preprocessor
from .encoder import KMeansEncoder, SparseAutoencoder
from .errors import SerializationError
from .inhibition import InhibitoryMatrix
from .pipeline import Standardizer

MAGIC = b"LATL"
VERSION = 1

KIND_PREPROCESSOR = b"PREP"
KIND_KMEANS = b"KMNS"
KIND_AUTOENCODER = b"SAEN"
KIND_INHIBITORY = b"INHB"
KIND_FEATURES = b"FEAT"
KIND_SOFTMAX = b"SMAX"
KIND_STANDARDIZER = b"STDZ"
KIND_PATCHES = b"PTCH"

_HEADER = struct.Struct("<4s4sI")


def _pack_header(kind: bytes) -> bytes:
    return _HEADER.pack(MAGIC, kind, VERSION)


class _Reader:
    """Cursor over one container's bytes with strict bounds checking."""

    def __init__(self, data: bytes, kind: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path
        if len(data) < _HEADER.size:
            raise SerializationError(f"{path}: truncated header")
        magic, got_kind, version = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise SerializationError(f"{path}: bad magic {magic!r}")
        if got_kind != kind:
            raise SerializationError(
                f"{path}: kind {got_kind!r} where {kind!r} was expected"
            )
        if version != VERSION:
            raise SerializationError(f"{path}: unsupported format version {version}")
        self.pos = _HEADER.size

    def take(self, fmt: str):
        s = struct.Struct("<" + fmt)
        if self.pos + s.size > len(self.data):
            raise SerializationError(f"{self.path}: truncated field")
        vals = s.unpack_from(self.data, self.pos)
        self.pos += s.size
        return vals if len(vals) > 1 else vals[0]

    def take_array(self, count: int, shape) -> np.ndarray:
        nbytes = 8 * count
        if self.pos + nbytes > len(self.data):
            raise SerializationError(f"{self.path}: truncated array")
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos)
        self.pos += nbytes
        return arr.reshape(shape).astype(np.float64)

    def take_bytes(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.data):
            raise SerializationError(f"{self.path}: truncated payload")
        out = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out

    def done(self):
        if self.pos != len(self.data):
            raise SerializationError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes"
            )


def _f8(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


# ---------------------------------------------------------------------------
# Preprocessor


def save_preprocessor(pp: Preprocessor, path) -> None:
    d = pp.dim
    blob = b"".join(
        [
            _pack_header(KIND_PREPROCESSOR),
            struct.pack("<IddI", pp.patch_size, pp.norm_eps, pp.zca_eps, d),
            _f8(pp.zca_mean),
            _f8(pp.zca_whitener),
        ]
    )
    Path(path).write_bytes(blob)


def load_preprocessor(path) -> Preprocessor:
    r = _Reader(Path(path).read_bytes(), KIND_PREPROCESSOR, path)
    p, norm_eps, zca_eps, d = r.take("IddI")
    mean = r.take_array(d, (d,))
    whitener = r.take_array(d * d, (d, d))
    r.done()
    return Preprocessor(int(p), norm_eps, zca_eps, mean, whitener)


# ---------------------------------------------------------------------------
# Encoders (kind tag distinguishes the two)


def save_encoder(enc, path) -> None:
    if isinstance(enc, KMeansEncoder):
        blob = b"".join(
            [
                _pack_header(KIND_KMEANS),
                struct.pack("<II", enc.n_features, enc.dim),
                _f8(enc.centroids),
            ]
        )
    elif isinstance(enc, SparseAutoencoder):
        blob = b"".join(
            [
                _pack_header(KIND_AUTOENCODER),
                struct.pack("<II", enc.n_features, enc.dim),
                struct.pack("<ddd", enc.rho, enc.beta, enc.weight_decay),
                _f8(enc.w_enc),
                _f8(enc.b_enc),
                _f8(enc.w_dec),
                _f8(enc.b_dec),
            ]
        )
    else:
        raise SerializationError(f"unknown encoder type {type(enc).__name__}")
    Path(path).write_bytes(blob)


def load_encoder(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SerializationError(f"{path}: truncated header")
    kind = _HEADER.unpack_from(data)[1]
    if kind == KIND_KMEANS:
        r = _Reader(data, KIND_KMEANS, path)
        k, d = r.take("II")
        centroids = r.take_array(k * d, (k, d))
        r.done()
        return KMeansEncoder(centroids=centroids)
    if kind == KIND_AUTOENCODER:
        r = _Reader(data, KIND_AUTOENCODER, path)
        k, d = r.take("II")
        rho, beta, decay = r.take("ddd")
        w_enc = r.take_array(k * d, (k, d))
        b_enc = r.take_array(k, (k,))
        w_dec = r.take_array(d * k, (d, k))
        b_dec = r.take_array(d, (d,))
        r.done()
        return SparseAutoencoder(w_enc, b_enc, w_dec, b_dec, rho, beta, decay)
    raise SerializationError(f"{path}: unknown encoder kind {kind!r}")


# ---------------------------------------------------------------------------
# Inhibitory matrix (mask stored as a packed bitset)


def save_inhibitory(mat: InhibitoryMatrix, path) -> None:
    k = mat.k
    bits = np.packbits(mat.mask.astype(np.uint8).ravel())
    blob = b"".join(
        [
            _pack_header(KIND_INHIBITORY),
            struct.pack("<I", k),
            _f8(mat.weights),
            bits.tobytes(),
        ]
    )
    Path(path).write_bytes(blob)


def load_inhibitory(path) -> InhibitoryMatrix:
    r = _Reader(Path(path).read_bytes(), KIND_INHIBITORY, path)
    k = r.take("I")
    weights = r.take_array(k * k, (k, k))
    nbits = k * k
    packed = np.frombuffer(r.take_bytes((nbits + 7) // 8), dtype=np.uint8)
    mask = np.unpackbits(packed)[:nbits].reshape(k, k).astype(bool)
    r.done()
    return InhibitoryMatrix(weights, mask)


# ---------------------------------------------------------------------------
# Pooled feature records (streamable)


class FeatureWriter:
    """Appends (label, descriptor) records under a fixed-width header.

    The row count is implied by the file size, so a partially written file
    is a valid prefix and extraction can resume from it.
    """

    def __init__(self, path, dim: int):
        self.dim = dim
        self._f = open(path, "wb")
        self._f.write(_pack_header(KIND_FEATURES))
        self._f.write(struct.pack("<I", dim))

    def append(self, label: int, features: np.ndarray) -> None:
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.dim,):
            raise SerializationError(
                f"feature row has shape {features.shape}, expected ({self.dim},)"
            )
        self._f.write(struct.pack("<B", int(label)))
        self._f.write(_f8(features))

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def save_features(features: np.ndarray, labels, path) -> None:
    with FeatureWriter(path, features.shape[1]) as w:
        for row, label in zip(features, labels):
            w.append(int(label), row)


def load_features(path):
    """Returns (features, labels) with the row count implied by file size."""
    data = Path(path).read_bytes()
    r = _Reader(data, KIND_FEATURES, path)
    dim = r.take("I")
    record = 1 + 8 * dim
    body = len(data) - r.pos
    if body % record != 0:
        raise SerializationError(f"{path}: {body} payload bytes, record size {record}")
    n = body // record
    labels = np.empty(n, dtype=np.int64)
    feats = np.empty((n, dim))
    for i in range(n):
        labels[i] = r.take_bytes(1)[0]
        feats[i] = np.frombuffer(r.take_bytes(8 * dim), dtype="<f8")
    r.done()
    return feats, labels


# ---------------------------------------------------------------------------
# Classifier, standardizer, patch matrix


def save_softmax(model: SoftmaxModel, path) -> None:
    blob = b"".join(
        [
            _pack_header(KIND_SOFTMAX),
            struct.pack("<IId", model.n_classes, model.n_features, model.l2),
            _f8(model.weights),
        ]
    )
    Path(path).write_bytes(blob)


def load_softmax(path) -> SoftmaxModel:
    r = _Reader(Path(path).read_bytes(), KIND_SOFTMAX, path)
    c, f, l2 = r.take("IId")
    weights = r.take_array(c * (f + 1), (c, f + 1))
    r.done()
    return SoftmaxModel(weights=weights, l2=l2)


def save_standardizer(std: Standardizer, path) -> None:
    f = std.mean.shape[0]
    blob = b"".join(
        [
            _pack_header(KIND_STANDARDIZER),
            struct.pack("<I", f),
            _f8(std.mean),
            _f8(std.std),
        ]
    )
    Path(path).write_bytes(blob)


def load_standardizer(path) -> Standardizer:
    r = _Reader(Path(path).read_bytes(), KIND_STANDARDIZER, path)
    f = r.take("I")
    mean = r.take_array(f, (f,))
    std = r.take_array(f, (f,))
    r.done()
    return Standardizer(mean=mean, std=std)


def save_patches(patches: np.ndarray, path) -> None:
    n, d = patches.shape
    blob = b"".join(
        [_pack_header(KIND_PATCHES), struct.pack("<II", n, d), _f8(patches)]
    )
    Path(path).write_bytes(blob)


def load_patches(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), KIND_PATCHES, path)
    n, d = r.take("II")
    patches = r.take_array(n * d, (n, d))
    r.done()
    return patches


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
