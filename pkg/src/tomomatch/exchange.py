"""Two-agent exchange of slice features over a stream socket.

The sender slices its map locally and ships only metric keypoint positions,
orientations and descriptors. The receiver correlates them against its own
slices and answers with the match result, expressed as the transform from
the sender's frame into the receiver's frame.

Wire format, all integers little-endian::

    message  = tag:u8  length:u32  body[length]
    HELLO    = "TMHI" version:u16 agent_id:u32 grid:f64
    SLICES   = payload (see serialize_payload)
    RESULT   = UTF-8 JSON of the match result
    ERROR    = UTF-8 message

    payload  = "TMSF" version:u16 agent_id:u32 grid:f64 z_min:f64 count:u32 entry*
    entry    = height:f32 n:u32 feature[n]
    feature  = x:f32 y:f32 orientation:f32 descriptor[16]
"""

from __future__ import annotations

import logging
import math
import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

from .consensus import MatchConfig, MatchResult, match_slice_sets, prepare_slices
from .errors import (
    ConnectionFailed,
    CorruptHeader,
    ExchangeTimeout,
    GridMismatch,
    NoConsensus,
    RemoteError,
    TomoError,
    TruncatedPayload,
    VersionMismatch,
)
from .features import FeatureSet
from .geometry import PointCloud
from .tomography import SliceEntry, SliceSet

__all__ = [
    "PROTOCOL_VERSION",
    "MessageType",
    "SlicePayload",
    "serialize_payload",
    "deserialize_payload",
    "encode_message",
    "read_message",
    "ExchangeServer",
    "serve",
    "send",
]

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
PAYLOAD_MAGIC = b"TMSF"
HELLO_MAGIC = b"TMHI"
MAX_MESSAGE = 1 << 30

_PAYLOAD_HEAD = struct.Struct("<4sHIddI")
_ENTRY_HEAD = struct.Struct("<fI")
_HELLO = struct.Struct("<4sHId")
_MSG_HEAD = struct.Struct("<BI")


class MessageType(IntEnum):
    HELLO = 1
    SLICES = 2
    RESULT = 3
    ERROR = 4


@dataclass(frozen=True, eq=False)
class SlicePayload:
    version: int
    agent_id: int
    grid_size: float
    z_min: float
    heights: tuple[float, ...]
    features: tuple[FeatureSet, ...]

    def to_slice_set(self) -> SliceSet:
        """Rebuild a slice set; band indices come from the transmitted heights."""
        g, z0 = self.grid_size, self.z_min
        entries = []
        for h, f in zip(self.heights, self.features):
            k = int(round((h - z0) / g))
            entries.append(SliceEntry(k, z0 + k * g, None, f))
        return SliceSet(g, z0, tuple(entries))


def serialize_payload(sset: SliceSet, agent_id: int = 0) -> bytes:
    parts = [_PAYLOAD_HEAD.pack(PAYLOAD_MAGIC, PROTOCOL_VERSION, agent_id, sset.grid_size, sset.z_min, len(sset))]
    for e in sset.entries:
        parts.append(_ENTRY_HEAD.pack(e.height, len(e.features)))
        parts.append(e.features.to_bytes())
    return b"".join(parts)


def deserialize_payload(buf: bytes) -> SlicePayload:
    buf = memoryview(buf)
    if len(buf) < _PAYLOAD_HEAD.size:
        if len(buf) >= 4 and bytes(buf[:4]) != PAYLOAD_MAGIC:
            raise CorruptHeader("bad payload magic")
        raise TruncatedPayload("payload shorter than its header")
    magic, version, agent, g, z_min, count = _PAYLOAD_HEAD.unpack_from(buf, 0)
    if magic != PAYLOAD_MAGIC:
        raise CorruptHeader("bad payload magic")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"payload version {version}, expected {PROTOCOL_VERSION}")
    if not (math.isfinite(g) and g > 0 and math.isfinite(z_min)):
        raise CorruptHeader("invalid grid size or z_min")
    off = _PAYLOAD_HEAD.size
    rec = FeatureSet.record_size()
    heights, feats = [], []
    for _ in range(count):
        if len(buf) - off < _ENTRY_HEAD.size:
            raise TruncatedPayload("payload ends inside a slice header")
        h, n = _ENTRY_HEAD.unpack_from(buf, off)
        off += _ENTRY_HEAD.size
        if len(buf) - off < n * rec:
            raise TruncatedPayload("payload ends inside a feature block")
        if not math.isfinite(h) or (heights and h <= heights[-1]):
            raise CorruptHeader("slice heights must be finite and strictly increasing")
        feats.append(FeatureSet.from_bytes(buf[off:off + n * rec], n))
        heights.append(h)
        off += n * rec
    if off != len(buf):
        raise CorruptHeader(f"{len(buf) - off} trailing bytes after payload")
    return SlicePayload(version, agent, g, z_min, tuple(heights), tuple(feats))


def encode_message(tag: MessageType, body: bytes) -> bytes:
    return _MSG_HEAD.pack(int(tag), len(body)) + body


def _encode_hello(agent_id: int, g: float) -> bytes:
    return encode_message(MessageType.HELLO, _HELLO.pack(HELLO_MAGIC, PROTOCOL_VERSION, agent_id, g))


def _decode_hello(body: bytes) -> tuple[int, int, float]:
    if len(body) != _HELLO.size:
        raise CorruptHeader("malformed HELLO")
    magic, version, agent, g = _HELLO.unpack(body)
    if magic != HELLO_MAGIC:
        raise CorruptHeader("bad HELLO magic")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"peer speaks protocol {version}, expected {PROTOCOL_VERSION}")
    return version, agent, g


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise TruncatedPayload("peer closed the connection mid-message")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket, max_size: int = MAX_MESSAGE) -> tuple[MessageType, bytes]:
    tag, length = _MSG_HEAD.unpack(_recv_exact(sock, _MSG_HEAD.size))
    try:
        mtype = MessageType(tag)
    except ValueError:
        raise CorruptHeader(f"unknown message tag {tag}") from None
    if length > max_size:
        raise CorruptHeader(f"message of {length} bytes exceeds limit")
    return mtype, _recv_exact(sock, length)


def _grids_match(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0)


class ExchangeServer:
    """Single-session server that correlates incoming slices against a local map.

    Every connection is handled to completion before the next is accepted.
    Malformed input is answered with ERROR when possible; the server itself
    keeps running.
    """

    def __init__(self, bind: tuple[str, int], local: SliceSet, cfg: MatchConfig, agent_id: int = 0,
                 timeout: float = 300.0):
        self.local = local
        self.cfg = cfg
        self.agent_id = agent_id
        self.timeout = timeout
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(bind)
        self._sock.listen(1)
        self._address = self._sock.getsockname()[:2]
        self._sock.settimeout(0.2)
        self._stop = threading.Event()
        self.sessions = 0

    @property
    def address(self) -> tuple[str, int]:
        return self._address

    def shutdown(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self._stop.set()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def serve_forever(self) -> None:
        try:
            while not self._stop.is_set():
                try:
                    conn, peer = self._sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                with conn:
                    conn.settimeout(self.timeout)
                    try:
                        self._session(conn)
                    except (OSError, TomoError) as exc:
                        log.warning("session with %s dropped: %s", peer, exc)
                    except Exception:  # keep serving whatever a peer sends
                        log.exception("unexpected failure handling %s", peer)
                self.sessions += 1
        finally:
            self._sock.close()

    def _error(self, conn: socket.socket, message: str) -> None:
        try:
            conn.sendall(encode_message(MessageType.ERROR, message.encode("utf-8")))
        except OSError:
            pass

    def _session(self, conn: socket.socket) -> None:
        try:
            mtype, body = read_message(conn)
            if mtype != MessageType.HELLO:
                self._error(conn, f"protocol: expected HELLO, got {mtype.name}")
                return
            _, _, g = _decode_hello(body)
        except (CorruptHeader, VersionMismatch, TruncatedPayload) as exc:
            self._error(conn, f"protocol: {exc}")
            return
        if not _grids_match(g, self.local.grid_size):
            self._error(conn, f"grid-mismatch: local {self.local.grid_size}, peer {g}")
            return
        conn.sendall(_encode_hello(self.agent_id, self.local.grid_size))

        try:
            mtype, body = read_message(conn)
            if mtype != MessageType.SLICES:
                self._error(conn, f"protocol: expected SLICES, got {mtype.name}")
                return
            remote = deserialize_payload(body).to_slice_set()
        except (CorruptHeader, VersionMismatch, TruncatedPayload) as exc:
            self._error(conn, f"protocol: {exc}")
            return
        if not _grids_match(remote.grid_size, self.local.grid_size):
            self._error(conn, "grid-mismatch: payload grid differs from HELLO")
            return
        try:
            res = match_slice_sets(self.local, remote, self.cfg)
        except NoConsensus as exc:
            self._error(conn, f"no-consensus: {exc}")
            return
        except GridMismatch as exc:
            self._error(conn, f"grid-mismatch: {exc}")
            return
        except TomoError as exc:
            self._error(conn, f"{type(exc).__name__}: {exc}")
            return
        conn.sendall(encode_message(MessageType.RESULT, res.to_json().encode("utf-8")))


def _parse_address(addr) -> tuple[str, int]:
    if isinstance(addr, tuple):
        return addr[0], int(addr[1])
    host, _, port = str(addr).rpartition(":")
    return host or "127.0.0.1", int(port)


def serve(bind, local, cfg: MatchConfig | None = None, agent_id: int = 0, ready=None) -> None:
    """Serve ``local`` (a cloud or slice set) at ``bind`` until interrupted.

    ``ready`` is called with the server once it listens.
    """
    cfg = cfg or MatchConfig()
    sset = prepare_slices(local, cfg) if isinstance(local, PointCloud) else local
    with ExchangeServer(_parse_address(bind), sset, cfg, agent_id) as server:
        if ready is not None:
            ready(server)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


def send(peer, data, cfg: MatchConfig | None = None, timeout: float = 300.0, agent_id: int = 1) -> MatchResult:
    """Ship ``data`` (a cloud or slice set) to ``peer`` and wait for its match.

    The returned transform maps the sender's frame into the receiver's frame.
    """
    cfg = cfg or MatchConfig()
    sset = prepare_slices(data, cfg) if isinstance(data, PointCloud) else data
    try:
        sock = socket.create_connection(_parse_address(peer), timeout=timeout)
    except socket.timeout as exc:
        raise ExchangeTimeout(f"connecting to {peer} timed out") from exc
    except OSError as exc:
        raise ConnectionFailed(f"cannot reach {peer}: {exc}") from exc
    with sock:
        try:
            sock.sendall(_encode_hello(agent_id, sset.grid_size))
            mtype, body = read_message(sock)
            if mtype == MessageType.ERROR:
                raise RemoteError(body.decode("utf-8", errors="replace"))
            if mtype != MessageType.HELLO:
                raise CorruptHeader(f"expected HELLO, got {mtype.name}")
            _decode_hello(body)
            sock.sendall(encode_message(MessageType.SLICES, serialize_payload(sset, agent_id)))
            mtype, body = read_message(sock)
        except socket.timeout as exc:
            raise ExchangeTimeout(f"no answer from {peer} within {timeout} s") from exc
        except (ConnectionResetError, BrokenPipeError) as exc:
            raise ConnectionFailed(f"connection to {peer} lost: {exc}") from exc
    if mtype == MessageType.ERROR:
        raise RemoteError(body.decode("utf-8", errors="replace"))
    if mtype != MessageType.RESULT:
        raise CorruptHeader(f"expected RESULT, got {mtype.name}")
    return MatchResult.from_json(body.decode("utf-8"))

