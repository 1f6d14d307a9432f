"""Single-file engine snapshots.

Layout (all integers big-endian)::

    magic      8 bytes  b"MMSEARCH"
    version    u16
    count      u32      number of sections
    section*   u16 name length, name (utf-8), u64 payload length,
               32-byte sha256 of payload, payload
    trailer    32-byte sha256 of every preceding byte

Array sections are ``.npy`` payloads (no pickling); everything else is
canonical JSON. The trailer hash doubles as the snapshot digest.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import BinaryIO, Callable

import numpy as np

from .ckg import IntentGraph
from .config import EngineConfig
from .errors import CorruptSnapshot, VersionMismatch
from .keyword_index import KeywordIndex
from .pipeline import SearchEngine
from .records import DocAttributes, parse_record
from .sparse_index import SparseIndex

MAGIC = b"MMSEARCH"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">8sHI")
_SECTION = struct.Struct(">H")
_PAYLOAD = struct.Struct(">Q")


def _npy(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _sections(engine: SearchEngine) -> list[tuple[str, Callable[[], bytes]]]:
    """(name, payload thunk) pairs; payloads are produced one at a time while writing."""
    out: list[tuple[str, Callable[[], bytes]]] = [
        ("meta.json", lambda: _json({"format_version": FORMAT_VERSION, "doc_count": len(engine), "config": engine.config.to_dict()})),
        ("graph.tsv", lambda: "\n".join(engine.graph.to_lines()).encode("utf-8")),
        ("records.jsonl", lambda: b"\n".join(_json(r.to_dict(include_embeddings=False)) for r in engine.records)),
        ("doc_intents.json", lambda: _json([list(i) for i in engine.doc_intents])),
    ]
    for name in sorted(engine.dense):
        out.append((f"dense/{name}.npy", lambda name=name: _npy(engine.dense[name])))
    for prefix, arrays in (
        ("sparse", engine.sparse_index.to_arrays()),
        ("keyword", engine.keyword_index.to_arrays()),
        ("attributes", engine.attributes.to_arrays()),
    ):
        for key in sorted(arrays):
            out.append((f"{prefix}/{key}.npy", lambda arr=arrays[key]: _npy(arr)))
    return out


class _HashingWriter:
    def __init__(self, sink: BinaryIO | None) -> None:
        self.sink = sink
        self.hash = hashlib.sha256()

    def write(self, data: bytes) -> None:
        self.hash.update(data)
        if self.sink is not None:
            self.sink.write(data)


def _write(engine: SearchEngine, sink: BinaryIO | None) -> str:
    out = _HashingWriter(sink)
    sections = _sections(engine)
    out.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(sections)))
    for name, produce in sections:
        payload = produce()
        encoded = name.encode("utf-8")
        out.write(_SECTION.pack(len(encoded)) + encoded)
        out.write(_PAYLOAD.pack(len(payload)) + hashlib.sha256(payload).digest())
        out.write(payload)
    trailer = out.hash.digest()
    if sink is not None:
        sink.write(trailer)
    return trailer.hex()


def snapshot_digest(engine: SearchEngine) -> str:
    """Digest the snapshot bytes ``engine`` would be saved as, without touching disk."""
    return _write(engine, None)


def snapshot_save(engine: SearchEngine, path: str | Path) -> str:
    """Write atomically (temp file + rename) and return the digest."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            digest = _write(engine, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    engine.digest = digest
    return digest


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptSnapshot(f"truncated snapshot while reading {what}")
    return data


def read_sections(path: str | Path) -> tuple[dict[str, bytes], str]:
    with open(path, "rb") as fh:
        hasher = hashlib.sha256()
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size or not head.startswith(MAGIC):
            raise CorruptSnapshot("not a snapshot file (bad magic)")
        magic, version, count = _HEADER.unpack(head)
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"snapshot format {version}, this build reads {FORMAT_VERSION}")
        hasher.update(head)
        sections: dict[str, bytes] = {}
        for _ in range(count):
            raw_len = _read_exact(fh, _SECTION.size, "section header")
            name_raw = _read_exact(fh, _SECTION.unpack(raw_len)[0], "section name")
            meta = _read_exact(fh, _PAYLOAD.size + 32, "section header")
            (length,) = _PAYLOAD.unpack(meta[: _PAYLOAD.size])
            payload = _read_exact(fh, length, "section payload")
            for chunk in (raw_len, name_raw, meta, payload):
                hasher.update(chunk)
            try:
                name = name_raw.decode("utf-8")
            except UnicodeDecodeError:
                raise CorruptSnapshot("section name is not utf-8") from None
            if hashlib.sha256(payload).digest() != meta[_PAYLOAD.size :]:
                raise CorruptSnapshot(f"checksum mismatch in section {name!r}")
            sections[name] = payload
        trailer = _read_exact(fh, 32, "trailer")
        if trailer != hasher.digest():
            raise CorruptSnapshot("file checksum mismatch")
        if fh.read(1):
            raise CorruptSnapshot("trailing bytes after snapshot")
    return sections, trailer.hex()


def _load_npy(payload: bytes) -> np.ndarray:
    return np.load(io.BytesIO(payload), allow_pickle=False)


def snapshot_load(path: str | Path) -> SearchEngine:
    sections, digest = read_sections(path)
    try:
        meta = json.loads(sections["meta.json"])
        config = EngineConfig.from_dict(meta["config"])
        graph = IntentGraph.from_lines(sections["graph.tsv"].decode("utf-8").splitlines())
        records_blob = sections["records.jsonl"]
        records = [parse_record(json.loads(line)) for line in records_blob.split(b"\n")] if records_blob else []
        doc_intents = json.loads(sections["doc_intents.json"])
        dense = {
            name[len("dense/") : -len(".npy")]: _load_npy(payload)
            for name, payload in sections.items()
            if name.startswith("dense/")
        }

        def group(prefix: str) -> dict[str, np.ndarray]:
            return {
                name[len(prefix) : -len(".npy")]: _load_npy(payload)
                for name, payload in sections.items()
                if name.startswith(prefix)
            }

        attributes = DocAttributes(**group("attributes/"))
        ti = config.text_image
        sparse = SparseIndex.from_arrays(ti.name, ti.sparse_dim, group("sparse/"))
        keyword = KeywordIndex.from_arrays(config.bm25, len(records), group("keyword/"), attributes)
        engine = SearchEngine(config, graph, records, dense, sparse, keyword, doc_intents)
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptSnapshot(f"snapshot content is inconsistent: {exc}") from exc
    if meta.get("doc_count") != len(engine):
        raise CorruptSnapshot("document count does not match header")
    engine.digest = digest
    return engine
