"""Embedding providers, cosine matching and the on-disk embedding store."""
from __future__ import annotations

import csv
import logging
import math
import struct
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import StoreError
from .imgcore import resize_bilinear, to_grayscale

log = logging.getLogger(__name__)

CANONICAL_SIZE = 96
GRID = 12
HIST_BINS = 16
TOY_DIM = GRID * GRID + HIST_BINS
ZERO_NORM = 1e-12

STORE_MAGIC = b"EMB1"


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, img) -> np.ndarray:
        ...


def toy_features(img):
    """Unnormalised 160-d toy descriptor (float64).

    144 block means from a 12x12 grid of 8x8 cells on the 96x96 grayscale
    image, followed by a 16-bin gradient-orientation histogram weighted by
    central-difference gradient magnitude over interior pixels.
    """
    gray = resize_bilinear(to_grayscale(img), CANONICAL_SIZE, CANONICAL_SIZE)
    g = gray.data[:, :, 0].astype(np.float64)
    cell = CANONICAL_SIZE // GRID
    blocks = g.reshape(GRID, cell, GRID, cell).mean(axis=(1, 3)).ravel()

    gx = g[1:-1, 2:] - g[1:-1, :-2]
    gy = g[2:, 1:-1] - g[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    angle = np.arctan2(gy, gx)
    bins = np.floor((angle + math.pi) / (2 * math.pi) * HIST_BINS).astype(np.intp) % HIST_BINS
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=HIST_BINS)
    return np.concatenate([blocks, hist])


def l2_normalize(vec):
    vec = np.asarray(vec, dtype=np.float64)
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm < ZERO_NORM:
        log.warning("zero-norm embedding replaced by the first basis vector")
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


def toy_embed(img):
    """Deterministic 160-d float32 unit vector for ``img``."""
    return l2_normalize(toy_features(img)).astype(np.float32)


class ToyProvider:
    """Stand-in for a deep face model; pure and thread-safe."""

    dim = TOY_DIM
    name = "toy"

    def embed(self, img):
        return toy_embed(img)


def cosine_similarity(a, b, zero_policy="raise"):
    """Cosine of the angle between ``a`` and ``b``, in [-1, 1].

    ``zero_policy="basis"`` substitutes the first basis vector for a vector
    whose norm is below 1e-12 (logged); the default raises instead.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na < ZERO_NORM or nb < ZERO_NORM:
        if zero_policy != "basis":
            raise ValueError("cosine similarity of a zero-norm vector")
        if na < ZERO_NORM:
            a, na = l2_normalize(a), 1.0
        if nb < ZERO_NORM:
            b, nb = l2_normalize(b), 1.0
    sim = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, sim))


def store_key(image_id, spec=None):
    """Store key for a clean image, or for its version distorted by ``spec``."""
    if spec is None or spec.tag == "Identity":
        return image_id
    return f"{image_id}|{spec.key()}"


class EmbeddingStore:
    """Insertion-ordered mapping of keys to float32 vectors of one dimension."""

    def __init__(self, dim):
        if dim < 1:
            raise StoreError("dim must be positive")
        self.dim = int(dim)
        self._vectors = {}

    def add(self, key, vector):
        vec = np.asarray(vector, dtype=np.float32).ravel()
        if vec.shape[0] != self.dim:
            raise StoreError(f"vector for {key!r} has dim {vec.shape[0]}, store dim is {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise StoreError(f"vector for {key!r} has non-finite values")
        if key in self._vectors:
            raise StoreError(f"duplicate key {key!r}")
        if len(key.encode("utf-8")) > 0xFFFF:
            raise StoreError("key longer than 65535 bytes")
        vec.flags.writeable = False
        self._vectors[key] = vec

    def __getitem__(self, key):
        return self._vectors[key]

    def __contains__(self, key):
        return key in self._vectors

    def __len__(self):
        return len(self._vectors)

    def keys(self):
        return list(self._vectors)

    def items(self):
        return self._vectors.items()

    def missing(self, keys):
        return [k for k in keys if k not in self._vectors]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and list(self._vectors) == list(other._vectors)
            and all(np.array_equal(v, other._vectors[k]) for k, v in self._vectors.items())
        )


def store_write(store, path):
    """Write ``store``: binary EMB1 layout, or CSV when ``path`` ends in .csv."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["key"] + [f"v{i}" for i in range(store.dim)])
            for key, vec in store.items():
                writer.writerow([key] + [format(float(v), ".9g") for v in vec])
        return
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<II", store.dim, len(store)))
        for key, vec in store.items():
            raw = key.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.astype("<f4").tobytes())


def store_read(path):
    """Read a store written by ``store_write`` (either layout).

    Raises:
        StoreError: on bad magic, truncation, or duplicate keys.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    buf = path.read_bytes()
    if buf[:4] != STORE_MAGIC:
        raise StoreError(f"{path}: bad magic {buf[:4]!r}, expected {STORE_MAGIC!r}")
    if len(buf) < 12:
        raise StoreError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", buf, 4)
    store = EmbeddingStore(dim)
    pos = 12
    rec = 4 * dim
    for i in range(count):
        if pos + 2 > len(buf):
            raise StoreError(f"{path}: truncated at record {i}")
        (klen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + klen + rec > len(buf):
            raise StoreError(f"{path}: truncated at record {i}")
        key = buf[pos:pos + klen].decode("utf-8")
        pos += klen
        store.add(key, np.frombuffer(buf, dtype="<f4", count=dim, offset=pos))
        pos += rec
    if pos != len(buf):
        raise StoreError(f"{path}: {len(buf) - pos} trailing bytes")
    return store


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "key" or header[1:] != [f"v{i}" for i in range(len(header) - 1)]:
            raise StoreError(f"{path}: header must be key,v0..v{{dim-1}}")
        store = EmbeddingStore(len(header) - 1)
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise StoreError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                vec = np.array([float(v) for v in row[1:]], dtype=np.float32)
            except ValueError:
                raise StoreError(f"{path}:{lineno}: non-numeric value") from None
            store.add(row[0], vec)
    return store


class StoreProvider:
    """Looks up precomputed embeddings instead of computing them."""

    name = "store"

    def __init__(self, store):
        self.store = store
        self.dim = store.dim

    def lookup(self, key):
        return self.store[key]
