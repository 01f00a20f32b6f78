"""Tests for sessions, transports, transcripts and replay."""

import json
import socket
import struct
import threading

import pytest

from mpcmp.errors import ConfigurationError, ProtocolError, TranscriptError, TransportError
from mpcmp.protocols import PROTOCOLS
from mpcmp.runtime import (
    InMemoryTransport,
    Message,
    ProtocolRequest,
    SessionHooks,
    TcpTransport,
    export_transcript,
    load_transcript,
    make_transport,
    replay,
    run_session,
)
from mpcmp.sharing import ProtocolConfig, share_secret


# One request per registered protocol, run over both transports
TCP_CASES = [
    ('compare', [5, 2], {}),
    ('sci', [2, 5], {}),
    ('scg', [3, 6], {}),
    ('equality', [4, 4], {}),
    ('zero', [0], {}),
    ('max', [3, 6, 1], {}),
    ('min', [3, 6, 1], {}),
    ('auction', [2, 7, 7], {}),
    ('median', [5, 1, 7], {}),
    ('median', [5, 5, 2], {'tie_safe': True}),
    ('rank', [3, 6, 1], {'rank_t': 1}),
    ('outliers', [1, 4, 6], {'server': 2}),
    ('maximin', [3, 7, 5, 6], {'groups': [2, 2]}),
]


def _messages_json(transcript):
    return [m.to_json() for m in transcript.messages]


def _assert_tcp_matches_memory(request, cfg, seed):
    memory = run_session(request, cfg, seed=seed)
    tcp = run_session(request, cfg, transport=TcpTransport(base_port=0, timeout=10), seed=seed)
    assert tcp.outputs == memory.outputs
    assert tcp.transcript.projection() == memory.transcript.projection()
    assert tcp.transcript.transport == 'tcp'


class TestMessages:

    def test_record_field_names(self):
        record = Message('s', 1, 'fold', 1, 2, ['5']).to_record()
        assert list(record) == ['session_id', 'round', 'step', 'from', 'to', 'payload']

    def test_payload_must_be_decimal_strings(self):
        record = Message('s', 1, 'fold', 1, 2, ['5']).to_record()
        record['payload'] = [5]
        with pytest.raises(TranscriptError):
            Message.from_record(record)

    def test_frame_is_length_prefixed(self):
        frame = Message('s', 1, 'fold', 1, 2, ['12345678901234567890']).encode_frame()
        assert int.from_bytes(frame[:4], 'big') == len(frame) - 4
        assert Message.from_json(frame[4:].decode('utf-8')).payload == ['12345678901234567890']


class TestSession:

    def test_self_send_rejected(self, session):
        with pytest.raises(ProtocolError, match="itself"):
            session.exchange('fold', {(1, 1): [session.field.one]})

    def test_unknown_party_rejected(self, session):
        with pytest.raises(ProtocolError, match="not registered"):
            session.exchange('fold', {(1, 9): [session.field.one]})

    def test_scoped_labels(self, session):
        with session.scope('scg/0/1'):
            assert session.label('select') == 'scg/0/1/select'
        assert session.label('select') == 'select'

    def test_owner_round_robin(self, session):
        assert [session.owner_of(k) for k in range(5)] == [1, 2, 3, 1, 2]

    def test_reveal_to_reaches_only_target(self, session):
        sharing = share_secret(session.field.element(42), session.cfg, session.rng(1))
        (value,) = session.reveal_to([sharing], 2, labels=['secret'])
        assert value == 42
        assert {m.dst for m in session.transcript.messages} == {2}
        assert session.transcript.reveals[-1].recipients == [2]

    def test_party_view(self, session):
        sharing = share_secret(session.field.element(42), session.cfg, session.rng(1))
        session.reveal(sharing)
        view = session.transcript.view(3)
        assert view and all(m.dst == 3 or m.src == 3 for m in view)

    def test_rejects_config_below_honest_majority(self, f257):
        with pytest.raises(ConfigurationError):
            ProtocolConfig(n=4, t=2, field=f257, bits=3)


class TestDeterminism:

    def test_same_seed_same_transcript(self, small_cfg):
        request = ProtocolRequest('max', [3, 6, 1])
        first = run_session(request, small_cfg, seed=99).transcript
        second = run_session(request, small_cfg, seed=99).transcript
        assert _messages_json(first) == _messages_json(second)

    def test_different_seed_different_shares(self, small_cfg):
        request = ProtocolRequest('compare', [3, 6])
        first = run_session(request, small_cfg, seed=1).transcript
        second = run_session(request, small_cfg, seed=2).transcript
        assert _messages_json(first) != _messages_json(second)

    def test_session_id_from_protocol_and_seed(self, small_cfg):
        result = run_session(ProtocolRequest('compare', [3, 6]), small_cfg, seed=255)
        assert result.transcript.session_id == 'compare-ff'


class TestTranscriptFiles:

    def test_header_then_messages(self, tmp_path, small_cfg):
        transcript = run_session(ProtocolRequest('compare', [5, 2]), small_cfg, seed=3).transcript
        path = export_transcript(transcript, tmp_path / 'compare.jsonl')
        lines = path.read_text(encoding='utf-8').splitlines()
        header = json.loads(lines[0])
        assert header['record'] == 'config'
        assert header['protocol']['id'] == 'compare'
        assert {'n', 't', 'q', 'bits', 'alphas', 'seed'} <= set(header)
        assert json.loads(lines[1])['record'] == 'message'

    def test_round_trip_replays_identical(self, tmp_path, small_cfg):
        transcript = run_session(ProtocolRequest('median', [5, 1, 7]), small_cfg, seed=8).transcript
        path = export_transcript(transcript, tmp_path / 'median.jsonl')
        loaded = load_transcript(path)
        assert _messages_json(loaded) == _messages_json(transcript)
        report = replay(path)
        assert report.identical
        assert report.to_record()['result'] == 'identical'

    def test_tampered_payload_flags_first_divergent_line(self, tmp_path, small_cfg):
        transcript = run_session(ProtocolRequest('compare', [5, 2]), small_cfg, seed=3).transcript
        path = export_transcript(transcript, tmp_path / 'compare.jsonl')
        lines = path.read_text(encoding='utf-8').splitlines()
        record = json.loads(lines[4])
        record['payload'][0] = str((int(record['payload'][0]) + 1) % small_cfg.q)
        lines[4] = json.dumps(record, separators=(',', ':'))
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')

        report = replay(path)
        assert not report.identical
        assert report.first_divergence == 5

    def test_forced_mask_hook_survives_replay(self, tmp_path, large_cfg):
        result = run_session(
            ProtocolRequest('compare', [9, 4]), large_cfg, seed=1, hooks=SessionHooks(forced_zero_masks=1)
        )
        path = export_transcript(result.transcript, tmp_path / 'forced.jsonl')
        assert replay(path).identical

    def test_schema_violations(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"record": "message"}\n', encoding='utf-8')
        with pytest.raises(TranscriptError, match="config"):
            load_transcript(path)
        with pytest.raises(TranscriptError, match="not found"):
            load_transcript(tmp_path / 'missing.jsonl')

    def test_compare_online_counters_within_bound(self, small_cfg):
        cfg = ProtocolConfig(n=3, t=1, field=small_cfg.field, bits=4)
        counters = run_session(ProtocolRequest('compare', [10, 9]), cfg, seed=0).transcript.counters
        assert counters.get('fold', 0) + counters.get('mask', 0) <= cfg.field.bit_length_q + 2


class TestTransports:

    def test_factory(self):
        assert isinstance(make_transport('mem'), InMemoryTransport)
        assert isinstance(make_transport('tcp', base_port=0), TcpTransport)
        with pytest.raises(ConfigurationError):
            make_transport('udp')

    def test_default_ports_allow_concurrent_sessions(self):
        first, second = make_transport('tcp'), make_transport('tcp')
        assert first.base_port == 0
        first.open(3, 'first')
        try:
            second.open(3, 'second')
            try:
                assert set(first._addresses.values()).isdisjoint(second._addresses.values())
            finally:
                second.close()
        finally:
            first.close()

    @pytest.mark.parametrize("protocol, inputs, options", TCP_CASES)
    @pytest.mark.parametrize("seed", [0, 1])
    def test_tcp_matches_memory(self, small_cfg, protocol, inputs, options, seed):
        _assert_tcp_matches_memory(ProtocolRequest(protocol, inputs, options), small_cfg, seed)

    def test_cases_cover_registry(self):
        assert {protocol for protocol, _, _ in TCP_CASES} == set(PROTOCOLS)

    @pytest.mark.slow
    def test_fifty_seeded_sessions(self, small_cfg):
        for seed in range(50):
            protocol, inputs, options = TCP_CASES[seed % len(TCP_CASES)]
            _assert_tcp_matches_memory(ProtocolRequest(protocol, inputs, options), small_cfg, seed)


class TestTcpLinks:

    @pytest.fixture
    def tcp(self):
        transport = TcpTransport(base_port=0, timeout=2)
        transport.open(3, 'links')
        yield transport
        transport.close()

    def test_rounds_reuse_acknowledged_links(self, tcp):
        for round_ in (1, 2):
            messages = [
                Message('links', round_, 'fold', 1, 2, ['5']),
                Message('links', round_, 'fold', 1, 2, ['6']),
                Message('links', round_, 'fold', 3, 2, ['7']),
            ]
            delivered = tcp.deliver(messages)
            assert [(m.src, m.payload) for m in delivered] == [(1, ['5']), (1, ['6']), (3, ['7'])]
        assert set(tcp._connections) == {(1, 2), (3, 2)}

    def test_receiver_reply_must_be_an_ack(self, tcp):
        peer = socket.create_server(('127.0.0.1', 0))

        def answer():
            conn, _ = peer.accept()
            with conn:
                conn.recv(4096)
                conn.sendall(struct.pack('>I', 2) + b'{}')
                conn.recv(1)

        threading.Thread(target=answer, daemon=True).start()
        tcp._addresses[2] = peer.getsockname()
        try:
            with pytest.raises(TransportError, match="non-ack"):
                tcp.deliver([Message('links', 1, 'fold', 1, 2, ['5'])])
        finally:
            peer.close()

    @pytest.mark.parametrize("body", [b'xyz', b'null', b'\xff\xfe'])
    def test_malformed_frame_raised_from_deliver(self, tcp, body):
        tcp._connection(1, 2).sendall(struct.pack('>I', len(body)) + body)
        with pytest.raises(TranscriptError, match="Malformed"):
            tcp.deliver([Message('links', 1, 'fold', 1, 2, ['5'])])
        with pytest.raises(TranscriptError):
            tcp.deliver([Message('links', 2, 'fold', 3, 1, ['5'])])
