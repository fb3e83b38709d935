"""On-disk formats: edge lists, feature matrices, labels, banks, checkpoints.

Text formats are UTF-8 and tab-separated. Binary formats are little-endian
with a 4-byte magic so a wrong file fails fast instead of parsing garbage:

``FMX1``  feature matrix: magic, u64 n, u64 d, then n*d float32 row-major
``HBK1``  hop bank: magic, u64 n, u64 d, u64 slab count, u64 blob length,
          provenance JSON blob, then slab-major float32 payload
``MDL1``  model checkpoint: magic, u64 blob length, config JSON blob,
          u64 block count, then per block a u32-length-prefixed UTF-8 name,
          u64 ndim, u64 dims, float32 payload
"""

import json
import struct

import numpy as np

from .errors import DataError
from .banks import HopBank
from .graph import Graph, LabelVector, build_graph

__all__ = [
    "load_edge_list",
    "save_edge_list",
    "load_features",
    "save_features",
    "load_features_csv",
    "load_labels",
    "save_labels",
    "load_bank_file",
    "save_bank_file",
    "load_checkpoint",
    "save_checkpoint",
]

_SPLITS = ("train", "val", "test")


def load_edge_list(path, n=None, *, undirected=True, add_self_loops=False) -> Graph:
    """Read a ``src<TAB>dst`` edge list (0-based ids, ``#`` comments allowed).

    When ``n`` is omitted it is inferred as max endpoint + 1.
    """
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'src<TAB>dst', got {raw!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer endpoint") from exc
    arr = np.asarray(edges, dtype=np.int64) if edges else np.zeros((0, 2), np.int64)
    if n is None:
        if arr.size == 0:
            raise DataError(f"{path}: empty edge list and no node count given")
        n = int(arr.max()) + 1
    return build_graph(arr, n, undirected=undirected, add_self_loops=add_self_loops)


def save_edge_list(path, g: Graph) -> None:
    """Write each undirected edge once (i <= j); directed graphs write all entries."""
    rows = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.row_ptr))
    cols = g.col_idx
    if g.undirected:
        keep = rows <= cols
        rows, cols = rows[keep], cols[keep]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {g.n}\n")
        for i, j in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{i}\t{j}\n")


def _check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} contains non-finite values")
    return x


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) < 20 or head[:4] != b"FMX1":
            raise DataError(f"{path}: not an FMX1 feature file")
        n, d = struct.unpack("<QQ", head[4:])
        payload = np.fromfile(fh, dtype="<f4", count=n * d)
    if payload.size != n * d:
        raise DataError(f"{path}: truncated feature payload")
    return _check_finite(payload.reshape(n, d).astype(np.float32), path)


def save_features(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise DataError("feature matrix must be 2-d")
    with open(path, "wb") as fh:
        fh.write(b"FMX1")
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        fh.write(x.astype("<f4").tobytes())


def load_features_csv(path) -> np.ndarray:
    """Comma-separated features, one node per row. A header row is optional
    and detected by the first field failing float conversion."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            [float(tok) for tok in first.strip().split(",")]
            skip = 0
        except ValueError:
            skip = 1
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=skip, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: malformed CSV features: {exc}") from exc
    return _check_finite(arr.astype(np.float32), path)


def load_labels(path, n: int, num_classes=None) -> LabelVector:
    """Read ``node_id<TAB>label<TAB>split`` lines; split is train, val or test."""
    labels = np.full(n, -1, dtype=np.int64)
    masks = {s: np.zeros(n, dtype=bool) for s in _SPLITS}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] not in _SPLITS:
                raise DataError(f"{path}:{lineno}: expected 'node<TAB>label<TAB>"
                                f"{{train|val|test}}', got {raw!r}")
            try:
                node, lab = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field") from exc
            if not (0 <= node < n):
                raise DataError(f"{path}:{lineno}: node id {node} out of range")
            if lab < 0:
                raise DataError(f"{path}:{lineno}: negative class id")
            labels[node] = lab
            masks[parts[2]][node] = True
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    return LabelVector(labels=labels, train_mask=masks["train"], val_mask=masks["val"],
                       test_mask=masks["test"], num_classes=num_classes)


def save_labels(path, lv: LabelVector) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for split in _SPLITS:
            mask = getattr(lv, f"{split}_mask")
            for node in np.nonzero(mask)[0].tolist():
                fh.write(f"{node}\t{int(lv.labels[node])}\t{split}\n")


def save_bank_file(path, bank: HopBank) -> None:
    """Write a hop bank with its provenance dict."""
    slabs = np.ascontiguousarray(bank.slabs, dtype=np.float32)
    if slabs.ndim != 3:
        raise DataError("bank slabs must have shape (hops + 1, n, d)")
    blob = json.dumps(bank.provenance, sort_keys=True).encode("utf-8")
    k1, n, d = slabs.shape
    with open(path, "wb") as fh:
        fh.write(b"HBK1")
        fh.write(struct.pack("<QQQQ", n, d, k1, len(blob)))
        fh.write(blob)
        fh.write(slabs.astype("<f4").tobytes())


def load_bank_file(path) -> HopBank:
    """Read an HBK1 file back into a bank."""
    with open(path, "rb") as fh:
        head = fh.read(36)
        if len(head) < 36 or head[:4] != b"HBK1":
            raise DataError(f"{path}: not an HBK1 bank file")
        n, d, k1, blob_len = struct.unpack("<QQQQ", head[4:])
        try:
            provenance = json.loads(fh.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt provenance blob") from exc
        payload = np.fromfile(fh, dtype="<f4", count=k1 * n * d)
    if payload.size != k1 * n * d:
        raise DataError(f"{path}: truncated bank payload")
    slabs = payload.reshape(k1, n, d).astype(np.float32)
    return HopBank(hops=k1 - 1, slabs=slabs, provenance=provenance)


def save_checkpoint(path, params: dict, config: dict) -> None:
    """Write named float32 parameter blocks plus a config JSON blob."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"MDL1")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", len(params)))
        for name in sorted(params):
            data = np.ascontiguousarray(params[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<Q", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path):
    """Return (params, config) from an MDL1 file."""
    with open(path, "rb") as fh:
        if fh.read(4) != b"MDL1":
            raise DataError(f"{path}: not an MDL1 checkpoint")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        config = json.loads(fh.read(blob_len).decode("utf-8"))
        (count,) = struct.unpack("<Q", fh.read(8))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<Q", fh.read(8))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4", count=size)
            params[name] = data.reshape(shape).astype(np.float32)
    return params, config
