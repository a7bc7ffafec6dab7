"""
On-disk formats: episode files, the episode store, and checkpoints.

Episode file: b"VGDPEP01", u32 LE header length, UTF-8 JSON header, then the
raw little-endian arrays rgb (u8), depth (f32), state (f32), action (f32)
back to back, in the order the header lists them.

Checkpoint file: b"VGDPCK01", u32 LE metadata length, UTF-8 JSON metadata
(array names, shapes, dtype, config hash, ...), then little-endian float32
blobs in declared order.

A store directory holds episode files plus index.json. It admits one writer
or any number of readers, never both; exclusion uses lock files.
"""

import hashlib
import json
import logging
import os
import struct
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, FormatVersionError, PayloadShapeError, StoreBusyError, TruncatedFileError

logger = logging.getLogger("vgdp")

EPISODE_MAGIC = b"VGDPEP01"
CHECKPOINT_MAGIC = b"VGDPCK01"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")

EPISODE_ARRAYS = (("rgb", "<u1"), ("depth", "<f4"), ("state", "<f4"), ("action", "<f4"))

INDEX_FILE = "index.json"
WRITER_LOCK = ".writer.lock"
READER_DIR = ".readers"


@dataclass(eq=False)
class EpisodeRecord:
    rgb: np.ndarray
    depth: np.ndarray
    state: np.ndarray
    action: np.ndarray
    task: str
    level: str
    split: str
    seed: int
    camera: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(self.rgb), len(self.depth), len(self.state), len(self.action)}
        if len(lengths) != 1 or 0 in lengths:
            raise PayloadShapeError(f"episode sequences must share one length T >= 1, got {sorted(lengths)}")
        if self.rgb.ndim != 4 or self.rgb.shape[-1] != 3 or self.depth.shape != self.rgb.shape[:3]:
            raise PayloadShapeError(f"episode frames disagree: rgb {self.rgb.shape}, depth {self.depth.shape}")
        if self.state.ndim != 2 or self.action.ndim != 2:
            raise PayloadShapeError(f"episode state {self.state.shape} / action {self.action.shape} must be 2-d")
        if not (self.task and self.level and self.split):
            raise DataFormatError("episode metadata fields must be non-empty")

    def __len__(self) -> int:
        return len(self.rgb)


# ---------------------------------------------------------------------------
# Framing helpers shared by both formats
# ---------------------------------------------------------------------------

def _frame(magic: bytes, header: dict, arrays: list) -> bytes:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [magic, _LENGTH.pack(len(blob)), blob]
    parts.extend(np.ascontiguousarray(a).tobytes() for a in arrays)
    return b"".join(parts)


def _unframe(data: bytes, magic: bytes, path) -> tuple:
    """Check magic and length prefix; return (header dict, payload start offset)."""
    if len(data) < len(magic):
        raise TruncatedFileError(path, 0, len(magic), len(data))
    if data[:len(magic)] != magic:
        raise FormatVersionError(f"{path}: bad magic {data[:len(magic)]!r}, expected {magic!r}")
    offset = len(magic)
    if len(data) < offset + _LENGTH.size:
        raise TruncatedFileError(path, offset, _LENGTH.size, len(data) - offset)
    (length,) = _LENGTH.unpack_from(data, offset)
    offset += _LENGTH.size
    if len(data) < offset + length:
        raise TruncatedFileError(path, offset, length, len(data) - offset)
    try:
        header = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: unreadable header: {e}") from None
    if header.get("format") != FORMAT_VERSION:
        raise FormatVersionError(f"{path}: format version {header.get('format')} != {FORMAT_VERSION}")
    return header, offset + length


def _read_arrays(data: bytes, offset: int, specs: list, path) -> list:
    """Slice declared (dtype, shape) arrays out of the payload, checking sizes."""
    declared = [np.dtype(dtype).itemsize * int(np.prod(shape, dtype=np.int64)) for dtype, shape in specs]
    available = len(data) - offset
    if sum(declared) > available:
        cursor = offset
        for nbytes in declared:
            if cursor + nbytes > len(data):
                raise TruncatedFileError(path, cursor, nbytes, len(data) - cursor)
            cursor += nbytes
    if sum(declared) != available:
        raise PayloadShapeError(
            f"{path}: header declares {sum(declared)} payload bytes but file holds {available}"
        )
    arrays = []
    for (dtype, shape), nbytes in zip(specs, declared):
        arrays.append(np.frombuffer(data, dtype=dtype, count=nbytes // np.dtype(dtype).itemsize,
                                    offset=offset).reshape(shape).copy())
        offset += nbytes
    return arrays


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

def encode_episode(record: EpisodeRecord) -> bytes:
    arrays = [np.asarray(getattr(record, name), dtype=dtype) for name, dtype in EPISODE_ARRAYS]
    header = {
        "format": FORMAT_VERSION,
        "task": record.task,
        "level": record.level,
        "split": record.split,
        "seed": int(record.seed),
        "camera": record.camera,
        "arrays": [{"name": name, "dtype": dtype, "shape": list(a.shape)}
                   for (name, dtype), a in zip(EPISODE_ARRAYS, arrays)],
    }
    return _frame(EPISODE_MAGIC, header, arrays)


def decode_episode(data: bytes, path="<bytes>") -> EpisodeRecord:
    header, offset = _unframe(data, EPISODE_MAGIC, path)
    try:
        entries = header["arrays"]
        names = [e["name"] for e in entries]
        specs = [(e["dtype"], tuple(int(s) for s in e["shape"])) for e in entries]
        metadata = {k: header[k] for k in ("task", "level", "split", "seed")}
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: malformed header: {e}") from None
    if names != [name for name, _ in EPISODE_ARRAYS] or [d for d, _ in specs] != [d for _, d in EPISODE_ARRAYS]:
        raise DataFormatError(f"{path}: unexpected array layout {names}")
    rgb, depth, state, action = _read_arrays(data, offset, specs, path)
    return EpisodeRecord(rgb=rgb, depth=depth, state=state, action=action,
                         camera=header.get("camera", {}), **metadata)


def write_episode_file(path, record: EpisodeRecord) -> str:
    """Write one episode file; returns its SHA-256."""
    data = encode_episode(record)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_episode_file(path) -> EpisodeRecord:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"episode file not found: {path}")
    return decode_episode(path.read_bytes(), path)


class EpisodeStore:
    """Directory of episode files with an index. Use as a context manager.

    mode "w" creates or appends (exclusive); mode "r" is shared.
    """

    def __init__(self, root, mode: str = "r"):
        if mode not in ("r", "w"):
            raise ValueError(f"store mode must be 'r' or 'w', got {mode!r}")
        self.root = Path(root)
        self.mode = mode
        self.index = {"format": FORMAT_VERSION, "episodes": []}
        self._lock_path = None

    # -- locking --------------------------------------------------------------

    def _active_readers(self) -> list:
        readers = self.root / READER_DIR
        return sorted(readers.iterdir()) if readers.exists() else []

    def open(self) -> "EpisodeStore":
        if self.mode == "w":
            try:
                self.root.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise OSError(f"cannot create episode store at {self.root}: {e}") from e
            lock = self.root / WRITER_LOCK
            try:
                fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise StoreBusyError(f"{self.root}: another writer holds the store") from None
            os.close(fd)
            self._lock_path = lock
            if self._active_readers():
                self.close()
                raise StoreBusyError(f"{self.root}: store is open for reading")
            if (self.root / INDEX_FILE).exists():
                self.index = self._load_index()
            else:
                self._save_index()
        else:
            if not (self.root / INDEX_FILE).exists():
                raise FileNotFoundError(f"episode store not found: {self.root}")
            if (self.root / WRITER_LOCK).exists():
                raise StoreBusyError(f"{self.root}: store is being written")
            readers = self.root / READER_DIR
            readers.mkdir(exist_ok=True)
            self._lock_path = readers / f"{os.getpid()}-{uuid.uuid4().hex}.lock"
            self._lock_path.touch()
            self.index = self._load_index()
        return self

    def close(self):
        if self._lock_path is not None:
            self._lock_path.unlink(missing_ok=True)
            self._lock_path = None

    def __enter__(self) -> "EpisodeStore":
        return self.open()

    def __exit__(self, *exc):
        self.close()

    # -- index ----------------------------------------------------------------

    def _load_index(self) -> dict:
        path = self.root / INDEX_FILE
        try:
            index = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: unreadable index: {e}") from None
        if index.get("format") != FORMAT_VERSION:
            raise FormatVersionError(f"{path}: index format {index.get('format')} != {FORMAT_VERSION}")
        return index

    def _save_index(self):
        text = json.dumps(self.index, sort_keys=True, indent=1)
        (self.root / INDEX_FILE).write_text(text + "\n", encoding="utf-8")

    def __len__(self) -> int:
        return len(self.index["episodes"])

    @property
    def entries(self) -> list:
        return list(self.index["episodes"])

    # -- episodes -------------------------------------------------------------

    def write_episode(self, record: EpisodeRecord):
        if self.mode != "w" or self._lock_path is None:
            raise StoreBusyError(f"{self.root}: store not opened for writing")
        name = f"episode_{len(self):05d}.vgdp"
        digest = write_episode_file(self.root / name, record)
        self.index["episodes"].append({
            "file": name, "task": record.task, "level": record.level, "split": record.split,
            "seed": int(record.seed), "steps": len(record), "sha256": digest,
        })
        self._save_index()
        logger.debug(f"Stored {name} ({record.task} {record.level}/{record.split} "
                     f"seed={record.seed}, {len(record)} steps)")

    def read_episode(self, i: int) -> EpisodeRecord:
        if self._lock_path is None:
            raise StoreBusyError(f"{self.root}: store is not open")
        return read_episode_file(self.root / self.index["episodes"][i]["file"])

    def __iter__(self):
        for i in range(len(self)):
            yield self.read_episode(i)

    def content_hash(self) -> str:
        """SHA-256 over every episode file's bytes, in index order."""
        digest = hashlib.sha256()
        for entry in self.index["episodes"]:
            digest.update((self.root / entry["file"]).read_bytes())
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def encode_checkpoint(arrays: "OrderedDict[str, np.ndarray]", metadata: dict) -> bytes:
    blobs = [np.asarray(a, dtype="<f4") for a in arrays.values()]
    header = dict(metadata)
    header["format"] = FORMAT_VERSION
    header["dtype"] = "float32"
    header["params"] = [{"name": name, "shape": list(b.shape)} for name, b in zip(arrays, blobs)]
    return _frame(CHECKPOINT_MAGIC, header, blobs)


def decode_checkpoint(data: bytes, path="<bytes>") -> tuple:
    header, offset = _unframe(data, CHECKPOINT_MAGIC, path)
    try:
        entries = header.pop("params")
        specs = [("<f4", tuple(int(s) for s in e["shape"])) for e in entries]
        names = [e["name"] for e in entries]
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: malformed checkpoint metadata: {e}") from None
    arrays = OrderedDict(zip(names, (a.astype(np.float32) for a in _read_arrays(data, offset, specs, path))))
    return arrays, header


def save_checkpoint(path, arrays: "OrderedDict[str, np.ndarray]", metadata: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(arrays, metadata))
    logger.info(f"Checkpoint written to {path}")


def load_checkpoint(path) -> tuple:
    """Returns (arrays in declared order, metadata)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), path)
