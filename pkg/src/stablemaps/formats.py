"""Serialisation: weights/law JSON, tree JSON and binary frames, map JSONL, CSV."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .bijection import PointedMap
from .labels import LabelledTree
from .trees import PlaneTree
from .weights import OffspringLaw, PowerTail, WeightSeq, WeightsError

__all__ = [
    "SCHEMA_VERSION",
    "FormatError",
    "weights_to_json",
    "weights_from_json",
    "law_to_json",
    "law_from_json",
    "load_law_document",
    "tree_to_json",
    "tree_from_json",
    "encode_tree",
    "decode_tree",
    "map_to_record",
    "map_from_record",
    "write_jsonl",
    "read_jsonl",
    "map_edge_list",
    "CsvAppender",
    "read_csv",
]

SCHEMA_VERSION = 1
MAGIC = b"SMTR"


class FormatError(ValueError):
    pass


# -- weights and laws --------------------------------------------------------


def weights_to_json(q: WeightSeq) -> dict:
    doc = {
        "law": "weights",
        "kind": "finite" if q.tail is None else "power_tail",
        "entries": {str(k): v for k, v in q.entries.items()},
    }
    if q.tail is not None:
        doc.update(alpha=q.tail.alpha, tail_constant=q.tail.constant,
                   tail_start=q.tail.start, radius=q.radius)
    return doc


def _tail_from(doc: dict) -> PowerTail:
    try:
        return PowerTail(float(doc["alpha"]), float(doc["tail_constant"]), int(doc["tail_start"]))
    except KeyError as exc:
        raise FormatError(f"power_tail document lacks {exc.args[0]!r}") from None


def weights_from_json(doc: dict) -> WeightSeq:
    entries = {int(k): float(v) for k, v in doc.get("entries", {}).items()}
    if doc.get("kind", "finite") == "finite":
        return WeightSeq(entries)
    if doc["kind"] != "power_tail":
        raise FormatError(f"unknown kind {doc['kind']!r}")
    return WeightSeq(entries, tail=_tail_from(doc), radius=float(doc["radius"]))


def law_to_json(mu: OffspringLaw) -> dict:
    doc = {
        "law": "offspring",
        "kind": "finite" if mu.tail is None else "power_tail",
        "entries": {str(k): float(p) for k, p in enumerate(mu.head) if p > 0},
    }
    if mu.tail is not None:
        doc.update(alpha=mu.tail.alpha, tail_constant=mu.tail.constant, tail_start=mu.tail.start)
    return doc


def law_from_json(doc: dict) -> OffspringLaw:
    entries = {int(k): float(v) for k, v in doc.get("entries", {}).items()}
    tail = _tail_from(doc) if doc.get("kind") == "power_tail" else None
    size = tail.start if tail is not None else max(entries, default=0) + 1
    head = np.zeros(size)
    for k, p in entries.items():
        if k >= size:
            raise FormatError("explicit entry inside the tail range")
        head[k] = p
    return OffspringLaw(head, tail)


def load_law_document(doc: dict) -> WeightSeq | OffspringLaw:
    kind = doc.get("law", "weights")
    if kind == "weights":
        return weights_from_json(doc)
    if kind == "offspring":
        return law_from_json(doc)
    raise FormatError(f"unknown law type {kind!r}")


# -- trees -------------------------------------------------------------------


def tree_to_json(obj: PlaneTree | LabelledTree) -> dict:
    if isinstance(obj, LabelledTree):
        return {"schema": SCHEMA_VERSION, "k": obj.tree.k.tolist(), "labels": obj.labels.tolist()}
    return {"schema": SCHEMA_VERSION, "k": obj.k.tolist()}


def tree_from_json(doc: dict | list) -> PlaneTree | LabelledTree:
    if isinstance(doc, list):
        return PlaneTree(doc)
    tree = PlaneTree(doc["k"])
    if "labels" in doc:
        return LabelledTree(tree, doc["labels"])
    return tree


def _put_varint(out: bytearray, x: int) -> None:
    while True:
        b = x & 0x7F
        x >>= 7
        if x:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def _get_varint(buf: bytes, i: int) -> tuple[int, int]:
    shift = 0
    x = 0
    while True:
        if i >= len(buf):
            raise FormatError("truncated varint")
        b = buf[i]
        i += 1
        x |= (b & 0x7F) << shift
        if not b & 0x80:
            return x, i
        shift += 7


def encode_tree(obj: PlaneTree | LabelledTree) -> bytes:
    """Binary frame: magic, version, flags, vertex count, children counts, zigzag labels."""
    labelled = isinstance(obj, LabelledTree)
    tree = obj.tree if labelled else obj
    out = bytearray(MAGIC)
    out.append(SCHEMA_VERSION)
    out.append(1 if labelled else 0)
    _put_varint(out, tree.n_vertices)
    for k in tree.k.tolist():
        _put_varint(out, k)
    if labelled:
        for v in obj.labels.tolist():
            _put_varint(out, 2 * v if v >= 0 else -2 * v - 1)
    return bytes(out)


def decode_tree(buf: bytes) -> PlaneTree | LabelledTree:
    if buf[:4] != MAGIC:
        raise FormatError("not a tree frame")
    if buf[4] != SCHEMA_VERSION:
        raise FormatError(f"unsupported frame version {buf[4]}")
    labelled = bool(buf[5] & 1)
    n, i = _get_varint(buf, 6)
    k = []
    for _ in range(n):
        x, i = _get_varint(buf, i)
        k.append(x)
    tree = PlaneTree(k)
    if not labelled:
        return tree
    labels = []
    for _ in range(n):
        z, i = _get_varint(buf, i)
        labels.append((z >> 1) ^ -(z & 1))
    return LabelledTree(tree, labels)


# -- maps --------------------------------------------------------------------


def map_to_record(m: PointedMap, **meta) -> dict:
    rec = dict(meta)
    rec.update(
        star=m.star,
        root=m.root,
        vertices=m.dist_to_star.tolist(),
        edges=m.origin.reshape(-1, 2).tolist(),
    )
    if m.sigma is not None:
        rec["rotation"] = m.rotation_cycles()
    return rec


def map_from_record(rec: dict) -> PointedMap:
    edges = np.asarray(rec["edges"], dtype=np.int64).reshape(-1, 2)
    origin = edges.reshape(-1)
    sigma = None
    if "rotation" in rec:
        sigma = np.full(origin.size, -1, dtype=np.int64)
        for v, cyc in enumerate(rec["rotation"]):
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                if origin[a] != v:
                    raise FormatError(f"half-edge {a} is not at vertex {v}")
                sigma[a] = b
        if np.any(sigma < 0):
            raise FormatError("rotation does not cover every half-edge")
    return PointedMap(origin, sigma, int(rec["star"]), int(rec["root"]),
                      np.asarray(rec["vertices"], dtype=np.int64))


def write_jsonl(fh: IO[str], records: Iterable[dict], header: dict | None = None) -> None:
    if header is not None:
        fh.write(json.dumps({"schema": SCHEMA_VERSION, **header}, sort_keys=True) + "\n")
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_jsonl(fh: IO[str]) -> tuple[dict | None, list[dict]]:
    header = None
    rows = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if header is None and "schema" in rec and "edges" not in rec:
            header = rec
            continue
        rows.append(rec)
    return header, rows


def map_edge_list(m: PointedMap) -> str:
    """Plain ``u v`` lines, one per edge, after a comment header."""
    buf = io.StringIO()
    buf.write(f"# vertices={m.n_vertices} edges={m.n_edges} star={m.star} "
              f"root={m.e_plus}->{m.e_minus}\n")
    for u, v in m.origin.reshape(-1, 2).tolist():
        buf.write(f"{u} {v}\n")
    return buf.getvalue()


# -- csv ---------------------------------------------------------------------


class CsvAppender:
    """Append-only CSV with a ``# schema`` comment line before the column header."""

    def __init__(self, path: str | Path | IO[str], columns: Sequence[str], kind: str):
        self.columns = list(columns)
        if isinstance(path, (str, Path)):
            self._fh = open(path, "w", newline="")
            self._own = True
        else:
            self._fh = path
            self._own = False
        self._fh.write(f"# schema: stablemaps.{kind}/{SCHEMA_VERSION}\n")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="ignore",
                                      lineterminator="\n")
        self._writer.writeheader()

    def write(self, row: dict) -> None:
        self._writer.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))

