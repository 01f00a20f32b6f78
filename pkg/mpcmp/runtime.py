"""
mpcmp/runtime.py - Sessions, Transports and Transcripts

A Session drives one protocol run as synchronized rounds. Party-local work
only touches that party's generator and inbox; everything that crosses
parties goes through a Transport as point-to-point Messages and lands in
the append-only Transcript.

Transports:
- InMemoryTransport: deterministic mailboxes with a synchronous barrier.
- TcpTransport: one listener per party on localhost (base port + i, or
  OS-assigned ports when the base is 0), 4-byte big-endian length prefix +
  one JSON Message per frame. The receiver answers every frame with an
  empty frame on the same connection; a round ends once the sender has
  read one ack per frame it sent. Links are NOT encrypted; the model
  assumes private channels.
"""

import json
import socket
import struct
import threading
import time
from abc import ABC, abstractmethod
from collections import Counter, defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from mpcmp.config import TCP_BASE_PORT, TCP_HOST, TCP_TIMEOUT, logger
from mpcmp.errors import ConfigurationError, ProtocolError, TranscriptError, TransportError
from mpcmp.field import FieldElement
from mpcmp.mpc import InvocationCounter
from mpcmp.sharing import ProtocolConfig, Share, reconstruct, share_secret


# ============================================================
# RECORD TYPES
# ============================================================

MESSAGE_FIELDS = ('session_id', 'round', 'step', 'from', 'to', 'payload')


@dataclass
class Message:
    session_id: str
    round: int
    step: str
    src: int
    dst: int
    payload: list

    def to_record(self) -> dict:
        return {
            'session_id': self.session_id,
            'round': self.round,
            'step': self.step,
            'from': self.src,
            'to': self.dst,
            'payload': list(self.payload),
        }

    @classmethod
    def from_record(cls, record: dict) -> 'Message':
        missing = [k for k in MESSAGE_FIELDS if k not in record]
        if missing:
            raise TranscriptError(f"Message record missing fields: {missing}")
        payload = record['payload']
        if not isinstance(payload, list) or not all(isinstance(v, str) and v.isdigit() for v in payload):
            raise TranscriptError("Message payload must be a list of decimal strings")
        return cls(
            session_id=str(record['session_id']),
            round=int(record['round']),
            step=str(record['step']),
            src=int(record['from']),
            dst=int(record['to']),
            payload=payload,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_record(), separators=(',', ':'))

    @classmethod
    def from_json(cls, text: str) -> 'Message':
        try:
            record = json.loads(text)
        except json.JSONDecodeError as e:
            raise TranscriptError(f"Malformed message record: {e}")
        if not isinstance(record, dict):
            raise TranscriptError(f"Malformed message record: expected an object, got {type(record).__name__}")
        return cls.from_record(record)

    def encode_frame(self) -> bytes:
        body = self.to_json().encode('utf-8')
        return struct.pack('>I', len(body)) + body


@dataclass
class RevealEvent:
    step: str
    label: str
    value: str
    recipients: list

    def to_record(self) -> dict:
        return {'step': self.step, 'label': self.label, 'value': self.value, 'recipients': self.recipients}


@dataclass
class ProtocolRequest:
    """Protocol id plus owner inputs; options carry rank_t, groups, server, tie_safe."""

    protocol: str
    inputs: list
    options: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {'id': self.protocol, 'inputs': list(self.inputs), 'options': dict(self.options)}

    @classmethod
    def from_record(cls, record: dict) -> 'ProtocolRequest':
        return cls(record['id'], [int(x) for x in record['inputs']], dict(record.get('options', {})))


@dataclass
class SessionHooks:
    """Test hooks; recorded in the transcript header so replays reproduce them."""

    forced_zero_masks: int = 0

    def to_record(self) -> dict:
        return {'forced_zero_masks': self.forced_zero_masks}


@dataclass
class Transcript:
    config: dict
    request: dict
    session_id: str
    seed: int
    transport: str
    hooks: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)
    reveals: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def view(self, party: int) -> list:
        """What one party saw: messages addressed to it plus its own sends."""
        return [m for m in self.messages if m.dst == party or m.src == party]

    def projection(self) -> dict:
        """Per-(from, to) ordered (step, payload) streams."""
        streams = defaultdict(list)
        for m in self.messages:
            streams[(m.src, m.dst)].append((m.step, tuple(m.payload)))
        return dict(streams)

    def reveal_labels(self) -> list:
        return [event.label for event in self.reveals]

    def header(self) -> dict:
        return {
            'record': 'config',
            **self.config,
            'seed': self.seed,
            'session_id': self.session_id,
            'transport': self.transport,
            'protocol': self.request,
            'hooks': self.hooks,
        }


# ============================================================
# TRANSPORTS
# ============================================================

class Transport(ABC):
    name = 'abstract'

    def open(self, parties: int, session_id: str):
        self.parties = parties
        self.session_id = session_id

    @abstractmethod
    def deliver(self, messages: list) -> list:
        """Deliver one round; return every message as its receiver saw it."""

    def close(self):
        pass

    def _validate(self, messages: list):
        for m in messages:
            if m.src == m.dst:
                raise ProtocolError(f"Party {m.src} cannot send a message to itself (step {m.step})")
            for party in (m.src, m.dst):
                if not 1 <= party <= self.parties:
                    raise ProtocolError(f"Party {party} is not registered on this transport")


class InMemoryTransport(Transport):
    """Deterministic mailboxes; each deliver() call is a round barrier."""

    name = 'mem'

    def open(self, parties: int, session_id: str):
        super().open(parties, session_id)
        self._mailboxes = {i: [] for i in range(1, parties + 1)}

    def deliver(self, messages: list) -> list:
        self._validate(messages)
        for m in messages:
            self._mailboxes[m.dst].append(m)
        delivered = []
        for party in range(1, self.parties + 1):
            delivered.extend(self._mailboxes[party])
            self._mailboxes[party] = []
        return delivered


# Empty frame: a receiver has appended the preceding frame to its inbox
_ACK_FRAME = struct.pack('>I', 0)


def _recv_exact(conn: socket.socket, length: int) -> Optional[bytes]:
    chunks = []
    remaining = length
    while remaining:
        chunk = conn.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b''.join(chunks)


class TcpTransport(Transport):
    """
    Localhost sockets, one listener thread per party.

    A round completes when every frame sent in it has been acknowledged
    over the wire; frames of one (from, to) pair travel on one connection,
    so their order is preserved. A frame a reader cannot parse stops that
    link and is raised from the next deliver().
    """

    name = 'tcp'

    def __init__(self, host: str = TCP_HOST, base_port: int = TCP_BASE_PORT, timeout: float = TCP_TIMEOUT):
        self.host = host
        self.base_port = base_port
        self.timeout = timeout

    def open(self, parties: int, session_id: str):
        super().open(parties, session_id)
        self._closed = threading.Event()
        self._cond = threading.Condition()
        self._inboxes = {i: [] for i in range(1, parties + 1)}
        self._listeners = {}
        self._addresses = {}
        self._connections = {}
        self._threads = []
        self._failure = None

        for party in range(1, parties + 1):
            port = self.base_port + party if self.base_port else 0
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                sock.bind((self.host, port))
            except OSError as e:
                sock.close()
                self.close()
                raise TransportError(
                    f"Party {party} cannot listen on {self.host}:{port}: {e}",
                    hint="Pick another MPCMP_TCP_BASE_PORT or use 0 for OS-assigned ports",
                )
            sock.listen(parties)
            sock.settimeout(0.2)
            self._listeners[party] = sock
            self._addresses[party] = sock.getsockname()
            thread = threading.Thread(
                target=self._accept_loop, args=(party, sock), daemon=True, name=f"mpcmp-party-{party}"
            )
            thread.start()
            self._threads.append(thread)
        logger.info(
            f"TCP transport listening for {parties} parties",
            extra={'session_id': session_id},
        )

    def _accept_loop(self, party: int, sock: socket.socket):
        while not self._closed.is_set():
            try:
                conn, _ = sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.settimeout(None)
            reader = threading.Thread(target=self._read_loop, args=(party, conn), daemon=True)
            reader.start()
            self._threads.append(reader)

    def _read_loop(self, party: int, conn: socket.socket):
        with conn:
            while True:
                try:
                    header = _recv_exact(conn, 4)
                    if header is None:
                        return
                    (length,) = struct.unpack('>I', header)
                    body = _recv_exact(conn, length)
                except OSError:
                    return
                if body is None:
                    return
                try:
                    message = Message.from_json(body.decode('utf-8'))
                except (TranscriptError, UnicodeDecodeError) as e:
                    failure = e if isinstance(e, TranscriptError) else TranscriptError(
                        f"Malformed message record: {e}"
                    )
                    logger.error(f"Party {party} stopped reading a link: {failure}")
                    with self._cond:
                        self._failure = failure
                        self._cond.notify_all()
                    return
                if message.dst != party:
                    logger.warning(f"Party {party} dropped a frame addressed to {message.dst}")
                else:
                    with self._cond:
                        self._inboxes[party].append(message)
                        self._cond.notify_all()
                try:
                    conn.sendall(_ACK_FRAME)
                except OSError:
                    return

    def _connection(self, src: int, dst: int) -> socket.socket:
        key = (src, dst)
        if key not in self._connections:
            self._connections[key] = socket.create_connection(self._addresses[dst], timeout=self.timeout)
        return self._connections[key]

    def _raise_failure(self):
        if self._failure is not None:
            raise self._failure

    def _await_acks(self, src: int, dst: int, count: int):
        conn = self._connections[(src, dst)]
        for _ in range(count):
            header = _recv_exact(conn, 4)
            if header is None:
                self._raise_failure()
                raise TransportError(f"Party {dst} closed the link from party {src} before acknowledging")
            if header != _ACK_FRAME:
                raise TransportError(f"Party {dst} answered party {src} with a non-ack frame")

    def deliver(self, messages: list) -> list:
        self._validate(messages)
        self._raise_failure()
        expected = Counter(m.dst for m in messages)
        sent = Counter()
        try:
            for m in messages:
                self._connection(m.src, m.dst).sendall(m.encode_frame())
                sent[(m.src, m.dst)] += 1
            for (src, dst), count in sorted(sent.items()):
                self._await_acks(src, dst, count)
        except OSError as e:
            self._raise_failure()
            raise TransportError(f"Link failure during round: {e}")

        delivered = []
        with self._cond:
            for party in range(1, self.parties + 1):
                need = expected.get(party, 0)
                inbox = self._inboxes[party]
                if not self._cond.wait_for(
                    lambda: len(inbox) >= need or self._failure is not None, timeout=self.timeout
                ):
                    raise TransportError(
                        f"Party {party} holds {len(inbox)} of {need} acknowledged frames before timeout"
                    )
                self._raise_failure()
                batch = inbox[:need]
                del inbox[:need]
                # stable: per-(from, to) order survives
                delivered.extend(sorted(batch, key=lambda m: m.src))
        return delivered

    def close(self):
        if not hasattr(self, '_closed'):
            return
        self._closed.set()
        for conn in self._connections.values():
            try:
                conn.close()
            except OSError:
                pass
        for sock in self._listeners.values():
            try:
                sock.close()
            except OSError:
                pass
        self._connections = {}
        self._listeners = {}


def make_transport(name: str, base_port: Optional[int] = None, host: Optional[str] = None) -> Transport:
    if name == 'mem':
        return InMemoryTransport()
    if name == 'tcp':
        return TcpTransport(
            host=host or TCP_HOST,
            base_port=TCP_BASE_PORT if base_port is None else base_port,
        )
    raise ConfigurationError(f"Unknown transport {name!r}; expected 'mem' or 'tcp'")


# ============================================================
# SESSION
# ============================================================

def resolve_seed(seed: Optional[int]) -> int:
    """Use the given seed, or draw a 64-bit one from OS entropy."""
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


class Session:
    """One protocol run: per-party generators, transport, counter, transcript."""

    def __init__(
        self,
        cfg: ProtocolConfig,
        transport: Optional[Transport] = None,
        seed: Optional[int] = None,
        hooks: Optional[SessionHooks] = None,
        request: Optional[ProtocolRequest] = None,
        session_id: Optional[str] = None,
    ):
        self.cfg = cfg.validate()
        self.field = cfg.field
        self.seed = resolve_seed(seed)
        self.hooks = hooks or SessionHooks()
        protocol = request.protocol if request else 'adhoc'
        self.session_id = session_id or f"{protocol}-{self.seed:x}"

        children = np.random.SeedSequence(self.seed).spawn(cfg.n)
        self._rngs = {i + 1: np.random.default_rng(child) for i, child in enumerate(children)}

        self.transport = transport or InMemoryTransport()
        self.transport.open(cfg.n, self.session_id)
        self.counter = InvocationCounter()
        self.round = 0
        self._scope = []
        self.transcript = Transcript(
            config=cfg.to_record(),
            request=request.to_record() if request else {},
            session_id=self.session_id,
            seed=self.seed,
            transport=self.transport.name,
            hooks=self.hooks.to_record(),
        )

    @property
    def parties(self) -> range:
        return range(1, self.cfg.n + 1)

    def rng(self, party: int) -> np.random.Generator:
        return self._rngs[party]

    def owner_of(self, position: int) -> int:
        """Input k (0-based) is held by party (k mod N) + 1."""
        return position % self.cfg.n + 1

    # ---- step labels -------------------------------------------------

    def label(self, step: str) -> str:
        return '/'.join(self._scope + [step])

    @contextmanager
    def scope(self, name: str):
        self._scope.append(name)
        try:
            yield
        finally:
            self._scope.pop()

    def count(self, step: str, n: int = 1):
        self.counter.record(self.label(step), n)

    # ---- communication -----------------------------------------------

    def exchange(self, step: str, outbox: dict) -> dict:
        """
        Run one round. outbox maps (from, to) -> list of FieldElement.

        Returns inbox[to][from] -> list of FieldElement, parsed from what
        the transport delivered.
        """
        label = self.label(step)
        self.round += 1
        messages = [
            Message(self.session_id, self.round, label, src, dst, [str(v) for v in payload])
            for (src, dst), payload in sorted(outbox.items())
        ]
        delivered = self.transport.deliver(messages)
        self.transcript.messages.extend(messages)

        inbox = {j: {} for j in self.parties}
        for m in delivered:
            inbox[m.dst][m.src] = [self.field.parse(v) for v in m.payload]
        logger.debug(
            f"Round {self.round} delivered {len(delivered)} messages",
            extra={'session_id': self.session_id, 'step': label, 'round': self.round},
        )
        return inbox

    def share_inputs(self, contributions: dict, step: str = 'share') -> dict:
        """
        Owners share their private values in one round.

        contributions maps owner -> list of FieldElement; returns
        owner -> list of sharings (one per value).
        """
        cfg = self.cfg
        outbox = defaultdict(list)
        own = {}
        for owner in sorted(contributions):
            rng = self.rng(owner)
            columns = [share_secret(v, cfg, rng) for v in contributions[owner]]
            own[owner] = [column[owner - 1].value for column in columns]
            for j in self.parties:
                if j != owner:
                    outbox[(owner, j)].extend(column[j - 1].value for column in columns)

        inbox = self.exchange(step, dict(outbox))
        result = {}
        for owner in sorted(contributions):
            count = len(contributions[owner])
            sharings = [[None] * cfg.n for _ in range(count)]
            for j in self.parties:
                payload = own[owner] if j == owner else inbox[j][owner]
                for m in range(count):
                    sharings[m][j - 1] = Share(j, payload[m], cfg.t)
            result[owner] = sharings
        return result

    def reveal(self, sharing: list, step: str = 'reveal', label: Optional[str] = None) -> FieldElement:
        """Every party broadcasts its share (N-1 point-to-point sends) and reconstructs."""
        outbox = {
            (i, j): [sharing[i - 1].value]
            for i in self.parties for j in self.parties if i != j
        }
        inbox = self.exchange(step, outbox)
        values = set()
        for j in self.parties:
            own = sharing[j - 1]
            shares = [own] + [Share(i, payload[0], own.degree) for i, payload in inbox[j].items()]
            values.add(reconstruct(shares, self.cfg, degree=own.degree))
        if len(values) != 1:
            raise ProtocolError(f"Parties reconstructed different values at {self.label(step)}")
        value = values.pop()
        self._record_reveal(step, label, value, list(self.parties))
        return value

    def reveal_to(
        self,
        sharings: list,
        target: int,
        step: str = 'reveal',
        labels: Optional[list] = None,
    ) -> list:
        """Only `target` receives the other parties' shares and reconstructs."""
        if target not in self.parties:
            raise ConfigurationError(f"Reveal target {target} outside [1, {self.cfg.n}]")
        outbox = {
            (i, target): [sharing[i - 1].value for sharing in sharings]
            for i in self.parties if i != target
        }
        inbox = self.exchange(step, outbox)
        values = []
        for m, sharing in enumerate(sharings):
            own = sharing[target - 1]
            shares = [own] + [Share(i, payload[m], own.degree) for i, payload in inbox[target].items()]
            value = reconstruct(shares, self.cfg, degree=own.degree)
            label = labels[m] if labels else None
            self._record_reveal(step, label, value, [target])
            values.append(value)
        return values

    def _record_reveal(self, step: str, label: Optional[str], value: FieldElement, recipients: list):
        event = RevealEvent(self.label(step), label or step, str(value), recipients)
        self.transcript.reveals.append(event)
        logger.info(
            f"Revealed {event.label} to {'all' if len(recipients) == self.cfg.n else recipients}",
            extra={'session_id': self.session_id, 'step': event.step, 'round': self.round},
        )

    def close(self):
        self.transcript.counters = self.counter.snapshot()
        self.transport.close()


# ============================================================
# SESSION DRIVER
# ============================================================

@dataclass
class SessionResult:
    outputs: dict
    transcript: Transcript

    @property
    def counters(self) -> dict:
        return self.transcript.counters


def run_session(
    request: ProtocolRequest,
    cfg: ProtocolConfig,
    transport: Optional[Transport] = None,
    seed: Optional[int] = None,
    hooks: Optional[SessionHooks] = None,
    session_id: Optional[str] = None,
) -> SessionResult:
    """Execute one protocol to completion; deterministic for a fixed seed in memory."""
    from mpcmp.protocols import get_protocol

    runner = get_protocol(request.protocol)
    session = Session(
        cfg,
        transport=transport,
        seed=seed if seed is not None else cfg.seed,
        hooks=hooks,
        request=request,
        session_id=session_id,
    )
    started = time.perf_counter()
    logger.info(
        f"Session started: {request.protocol} with {len(request.inputs)} inputs",
        extra={'session_id': session.session_id},
    )
    try:
        outputs = runner(session, request)
    finally:
        session.close()
    session.transcript.outputs = outputs
    logger.info(
        f"Session finished after {session.round} rounds, {len(session.transcript.messages)} messages",
        extra={
            'session_id': session.session_id,
            'duration_ms': round((time.perf_counter() - started) * 1000, 1),
        },
    )
    return SessionResult(outputs, session.transcript)


# ============================================================
# TRANSCRIPT FILES
# ============================================================

def _outputs_to_record(outputs: dict) -> dict:
    return {str(party): value for party, value in outputs.items()}


def export_transcript(t: Transcript, path) -> Path:
    """Header line with config, one line per Message, then reveals and a summary."""
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(t.header(), separators=(',', ':')) + '\n')
        for m in t.messages:
            f.write(json.dumps({'record': 'message', **m.to_record()}, separators=(',', ':')) + '\n')
        for event in t.reveals:
            f.write(json.dumps({'record': 'reveal', **event.to_record()}, separators=(',', ':')) + '\n')
        summary = {'record': 'summary', 'counters': t.counters, 'outputs': _outputs_to_record(t.outputs)}
        f.write(json.dumps(summary, separators=(',', ':')) + '\n')
    return path


def load_transcript(path) -> Transcript:
    path = Path(path)
    if not path.exists():
        raise TranscriptError(f"Transcript file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        raise TranscriptError(f"Transcript {path} is empty")

    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as e:
        raise TranscriptError(f"Transcript {path} is not line-delimited JSON: {e}")

    header = records[0]
    if header.get('record') != 'config':
        raise TranscriptError("First transcript line must be the config record")
    for key in ('n', 't', 'q', 'bits', 'alphas', 'seed', 'protocol', 'session_id'):
        if key not in header:
            raise TranscriptError(f"Config record missing '{key}'")

    config = {k: header[k] for k in ('n', 't', 'q', 'bits', 'alphas')}
    config['seed'] = header['seed']
    transcript = Transcript(
        config=config,
        request=header['protocol'],
        session_id=header['session_id'],
        seed=int(header['seed']),
        transport=header.get('transport', 'mem'),
        hooks=header.get('hooks', {}),
    )
    for line_no, record in enumerate(records[1:], start=2):
        kind = record.get('record')
        if kind == 'message':
            try:
                transcript.messages.append(Message.from_record(record))
            except TranscriptError as e:
                raise TranscriptError(f"Line {line_no}: {e}")
        elif kind == 'reveal':
            transcript.reveals.append(
                RevealEvent(record['step'], record['label'], record['value'], record['recipients'])
            )
        elif kind == 'summary':
            transcript.counters = record.get('counters', {})
            transcript.outputs = {int(p): v for p, v in record.get('outputs', {}).items()}
        else:
            raise TranscriptError(f"Line {line_no}: unknown record type {kind!r}")
    return transcript


@dataclass
class ReplayReport:
    identical: bool
    messages_checked: int
    first_divergence: Optional[int] = None
    expected: Optional[str] = None
    actual: Optional[str] = None
    outputs_match: bool = True

    def to_record(self) -> dict:
        return {
            'result': 'identical' if self.identical else 'diverged',
            'messages_checked': self.messages_checked,
            'first_divergent_line': self.first_divergence,
            'expected': self.expected,
            'actual': self.actual,
            'outputs_match': self.outputs_match,
        }


def replay(path) -> ReplayReport:
    """Re-execute a transcript in memory and diff it message by message."""
    recorded = load_transcript(path)
    cfg = ProtocolConfig.from_record(recorded.config)
    request = ProtocolRequest.from_record(recorded.request)
    hooks = SessionHooks(**recorded.hooks) if recorded.hooks else None
    rerun = run_session(
        request, cfg, seed=recorded.seed, hooks=hooks, session_id=recorded.session_id
    ).transcript

    expected = [m.to_json() for m in recorded.messages]
    actual = [m.to_json() for m in rerun.messages]
    report = ReplayReport(identical=True, messages_checked=min(len(expected), len(actual)))
    for k, (want, got) in enumerate(zip(expected, actual)):
        if want != got:
            report.identical = False
            # header occupies line 1
            report.first_divergence = k + 2
            report.expected, report.actual = want, got
            break
    if report.identical and len(expected) != len(actual):
        report.identical = False
        report.first_divergence = min(len(expected), len(actual)) + 2
        report.expected = expected[len(actual)] if len(expected) > len(actual) else None
        report.actual = actual[len(expected)] if len(actual) > len(expected) else None

    rerun_outputs = json.loads(json.dumps(_outputs_to_record(rerun.outputs)))
    report.outputs_match = rerun_outputs == _outputs_to_record(recorded.outputs)
    report.identical = report.identical and report.outputs_match
    logger.info(f"Replay of {path}: {'identical' if report.identical else 'diverged'}")
    return report
