"""Persistence: JSONL run logs, binary state snapshots and key-value stores."""

from __future__ import annotations

import json
import os
import socket
import struct
import tempfile
import threading
import zlib
from pathlib import Path
from typing import Any, Iterator, Mapping

from infocircle.core import ScenarioConfig
from infocircle.engine import EVENT_KINDS, SCHEMA_VERSION, RunLog, SimulationState


class LogFormatError(ValueError):
    def __init__(self, path: str | Path, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class SnapshotError(ValueError):
    pass


# --- run logs -----------------------------------------------------------------


def _dumps(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def run_log_lines(log: RunLog) -> Iterator[str]:
    yield _dumps({"kind": "header", "schema_version": SCHEMA_VERSION, "config": log.config.to_dict()})
    for event in log.events:
        yield _dumps(event)
    yield _dumps({"kind": "summary", **log.final_state_summary})


def write_run_log(log: RunLog, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in run_log_lines(log):
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write run log to {path}: {exc.strerror or exc}") from exc
    return path


def read_run_log(path: str | Path) -> RunLog:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read run log {path}: {exc.strerror or exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise LogFormatError(path, 1, "missing header")

    def parse(n: int, line: str) -> dict[str, Any]:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(path, n, f"malformed JSON ({exc.msg})") from None
        if not isinstance(record, dict) or "kind" not in record:
            raise LogFormatError(path, n, "record has no 'kind' field")
        return record

    header = parse(1, lines[0])
    if header["kind"] != "header":
        raise LogFormatError(path, 1, "missing header")
    version = header.get("schema_version")
    if not isinstance(version, int) or version != SCHEMA_VERSION:
        raise LogFormatError(path, 1, f"unsupported schema_version {version!r}")
    try:
        config = ScenarioConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(path, 1, f"bad field 'config': {exc}") from None

    events: list[dict[str, Any]] = []
    summary = None
    for n, line in enumerate(lines[1:], start=2):
        record = parse(n, line)
        if summary is not None:
            raise LogFormatError(path, n, "record after summary")
        kind = record["kind"]
        if kind == "summary":
            summary = {k: v for k, v in record.items() if k != "kind"}
        elif kind in EVENT_KINDS:
            if not isinstance(record.get("round"), int):
                raise LogFormatError(path, n, "bad field 'round'")
            events.append(record)
        else:
            raise LogFormatError(path, n, f"bad field 'kind': unknown kind {kind!r}")
    if summary is None:
        raise LogFormatError(path, len(lines) + 1, "missing summary (file truncated?)")
    return RunLog(config, events, summary)


# --- snapshots --------------------------------------------------------------

_MAGIC = b"ICSNAP"
SNAPSHOT_VERSION = 1


def snapshot_state(state: SimulationState) -> bytes:
    payload = json.dumps(state.to_dict(), ensure_ascii=False, separators=(",", ":")).encode()
    return _MAGIC + struct.pack(">H", SNAPSHOT_VERSION) + zlib.compress(payload)


def restore_state(blob: bytes) -> SimulationState:
    if len(blob) < len(_MAGIC) + 2 or not blob.startswith(_MAGIC):
        raise SnapshotError("not a snapshot (bad magic)")
    (version,) = struct.unpack(">H", blob[len(_MAGIC) : len(_MAGIC) + 2])
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot version {version} is not supported (expected {SNAPSHOT_VERSION})")
    try:
        data = json.loads(zlib.decompress(blob[len(_MAGIC) + 2 :]))
        return SimulationState.from_dict(data)
    except (zlib.error, ValueError, KeyError, TypeError) as exc:
        raise SnapshotError(f"corrupted snapshot: {exc}") from exc


# --- key-value stores -------------------------------------------------------


class KeyValueStore:
    """Namespaced JSON-value store; keys never leak across namespaces."""

    def __init__(self, namespace: str) -> None:
        self.namespace = namespace

    def get(self, key: str, default: Any = None) -> Any:
        raise NotImplementedError

    def put(self, key: str, value: Any) -> None:
        raise NotImplementedError

    def delete(self, key: str) -> None:
        raise NotImplementedError

    def keys(self) -> list[str]:
        raise NotImplementedError

    def put_many(self, items: Mapping[str, Any]) -> None:
        for key, value in items.items():
            self.put(key, value)


class InMemoryStore(KeyValueStore):
    """Process-local store; each instance holds its own data."""

    def __init__(self, namespace: str = "default") -> None:
        super().__init__(namespace)
        self._data: dict[str, str] = {}

    def get(self, key: str, default: Any = None) -> Any:
        raw = self._data.get(key)
        return default if raw is None else json.loads(raw)

    def put(self, key: str, value: Any) -> None:
        # Stored serialised so callers cannot mutate what was put.
        self._data[key] = json.dumps(value)

    def delete(self, key: str) -> None:
        self._data.pop(key, None)

    def keys(self) -> list[str]:
        return sorted(self._data)


class FileStore(KeyValueStore):
    """One JSON document per namespace under ``root``; writes are atomic."""

    def __init__(self, root: str | Path, namespace: str = "default") -> None:
        super().__init__(namespace)
        self.path = Path(root) / f"{namespace}.json"
        self._lock = threading.Lock()
        self._data: dict[str, Any] = json.loads(self.path.read_text()) if self.path.exists() else {}

    def _flush(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(self._data, fh, sort_keys=True)
        os.replace(tmp, self.path)

    def get(self, key: str, default: Any = None) -> Any:
        with self._lock:
            value = self._data.get(key, default)
        return json.loads(json.dumps(value))

    def put(self, key: str, value: Any) -> None:
        self.put_many({key: value})

    def put_many(self, items: Mapping[str, Any]) -> None:
        with self._lock:
            for key, value in items.items():
                self._data[key] = json.loads(json.dumps(value))
            self._flush()

    def delete(self, key: str) -> None:
        with self._lock:
            if self._data.pop(key, None) is not None:
                self._flush()

    def keys(self) -> list[str]:
        with self._lock:
            return sorted(self._data)


class RespStore(KeyValueStore):
    """Adapter for a key-value server speaking the Redis text protocol (RESP2)."""

    def __init__(self, namespace: str, host: str = "127.0.0.1", port: int = 6379, timeout: float = 5.0) -> None:
        super().__init__(namespace)
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._reader = self._sock.makefile("rb")
        self._lock = threading.Lock()

    def _key(self, key: str) -> str:
        return f"{self.namespace}:{key}"

    def _command(self, *args: str) -> Any:
        parts = [f"*{len(args)}\r\n".encode()]
        for arg in args:
            data = arg.encode()
            parts.append(b"$%d\r\n%s\r\n" % (len(data), data))
        with self._lock:
            self._sock.sendall(b"".join(parts))
            return self._read_reply()

    def _read_reply(self) -> Any:
        line = self._reader.readline()
        if not line:
            raise ConnectionError("key-value server closed the connection")
        tag, body = line[:1], line[1:-2]
        if tag == b"+":
            return body.decode()
        if tag == b"-":
            raise RuntimeError(f"key-value server error: {body.decode()}")
        if tag == b":":
            return int(body)
        if tag == b"$":
            n = int(body)
            if n < 0:
                return None
            data = self._reader.read(n + 2)
            return data[:-2].decode()
        if tag == b"*":
            n = int(body)
            return None if n < 0 else [self._read_reply() for _ in range(n)]
        raise RuntimeError(f"unexpected reply {line!r}")

    def get(self, key: str, default: Any = None) -> Any:
        raw = self._command("GET", self._key(key))
        return default if raw is None else json.loads(raw)

    def put(self, key: str, value: Any) -> None:
        self._command("SET", self._key(key), json.dumps(value))

    def delete(self, key: str) -> None:
        self._command("DEL", self._key(key))

    def keys(self) -> list[str]:
        prefix = f"{self.namespace}:"
        return sorted(k[len(prefix) :] for k in self._command("KEYS", f"{prefix}*"))

    def close(self) -> None:
        self._reader.close()
        self._sock.close()


def open_store(backend: str = "in_memory", namespace: str = "default", **options: Any) -> KeyValueStore:
    if backend == "in_memory":
        return InMemoryStore(namespace)
    if backend == "file_backed":
        return FileStore(options.get("root", ".infocircle-store"), namespace)
    if backend == "resp":
        return RespStore(namespace, **options)
    raise ValueError(f"unknown store backend {backend!r}")
