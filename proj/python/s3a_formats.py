"""Readers and writers for the s3a on-disk formats.

EMB1: 24-byte header ("EMB1", version 1, normalized flag, two zero bytes,
u64 n, u64 d, all little-endian) followed by n*d float32 values, row-major.
Vocabulary: JSON lines {"word_id", "name", "synsets": [{"definition"}]}.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
HEADER = struct.Struct("<4sBBxxQQ")
NORM_TOL = 1e-5

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class FormatError(ValueError):
    pass


def _atomic_write(path, data):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def l2_normalize(m):
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise FormatError(f"row {zero[0]} has zero norm")
    return m / norms[:, None]


def write_emb1(path, matrix, normalize=True):
    """Write an n x d matrix. With normalize, rows are scaled to unit norm
    and the header flag is set."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise FormatError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FormatError("matrix has non-finite entries")
    flag = 0
    if normalize:
        m = l2_normalize(m)
        flag = 1
    payload = np.ascontiguousarray(m, dtype="<f4")
    if flag and np.any(np.abs(np.linalg.norm(payload.astype(np.float64), axis=1) - 1) > NORM_TOL):
        raise FormatError("rows lost unit norm at float32")
    n, d = m.shape
    _atomic_write(path, HEADER.pack(MAGIC, VERSION, flag, n, d) + payload.tobytes())


def read_emb1(path):
    """Returns (matrix as float32 array, normalized flag)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: shorter than the EMB1 header")
    magic, version, flag, n, d = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if flag not in (0, 1) or raw[6:8] != b"\0\0":
        raise FormatError(f"{path}: bad flag or reserved bytes")
    if n == 0 or d == 0:
        raise FormatError(f"{path}: zero n or d")
    if len(raw) - HEADER.size != n * d * 4:
        raise FormatError(f"{path}: declared size {n * d * 4} != payload {len(raw) - HEADER.size}")
    m = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(n, d)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite payload")
    if flag == 1:
        norms = np.linalg.norm(m.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1) > NORM_TOL)
        if bad.size:
            raise FormatError(f"{path}: row {bad[0]} is flagged normalized but has norm {norms[bad[0]]}")
    return m, bool(flag)


_ASCII_LOWER = {c: c + 32 for c in range(ord("A"), ord("Z") + 1)}


def _key(name):
    return name.strip(" \t\n\v\f\r").translate(_ASCII_LOWER)


def write_vocabulary(path, words):
    """words: list of (name, [definition, ...]) in word_id order."""
    seen = {}
    lines = []
    for i, (name, defs) in enumerate(words):
        k = _key(name)
        if not k:
            raise FormatError(f"word_id {i}: empty name")
        if k in seen:
            raise FormatError(f"duplicate name '{k}' (word_id {seen[k]} and {i})")
        seen[k] = i
        rec = {"word_id": i, "name": name, "synsets": [{"definition": d} for d in defs]}
        lines.append(json.dumps(rec, ensure_ascii=False))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_vocabulary(path):
    words = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                raise FormatError(f"{path}: blank line {lineno}")
            rec = json.loads(line)
            if rec["word_id"] != len(words):
                raise FormatError(f"{path}: line {lineno}: word_id {rec['word_id']} out of order")
            k = _key(rec["name"])
            if k in seen:
                raise FormatError(f"{path}: duplicate name '{k}'")
            seen.add(k)
            words.append((rec["name"], [s["definition"] for s in rec["synsets"]]))
    if not words:
        raise FormatError(f"{path}: empty vocabulary")
    return words


def write_similarity(path, matrix, rows=None, cols=None):
    """Entries must lie in [-1, 1]. rows/cols label the matrix rows and
    columns with word ids or names; they go to the "<path>.ids.json" sidecar."""
    m = np.asarray(matrix, dtype=np.float64)
    if np.any(np.abs(m) > 1 + NORM_TOL):
        raise FormatError("similarities must lie in [-1, 1]")
    write_emb1(path, m, normalize=False)
    if rows is not None or cols is not None:
        rows = list(range(m.shape[0])) if rows is None else list(rows)
        cols = list(range(m.shape[1])) if cols is None else list(cols)
        if len(rows) != m.shape[0] or len(cols) != m.shape[1]:
            raise FormatError("sidecar ids do not match the matrix shape")
        _atomic_write(path + ".ids.json", json.dumps({"rows": rows, "cols": cols}).encode("utf-8"))


def fnv1a64_file(path):
    h = FNV_OFFSET
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            for b in chunk:
                h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"
