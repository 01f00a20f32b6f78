"""
mpcmp command line
==================
Run comparison protocols, audits and transcript replays.

Usage:
    # Two-party comparison on 4-bit inputs
    python -m mpcmp compare --inputs 10,9 --bits 4

    # Sealed-bid auction over TCP loopback, transcript kept for replay
    python -m mpcmp auction --inputs 3,9,4,1 --transport tcp --transcript auction.jsonl

    # Max of group minima
    python -m mpcmp minimax --groups "3,7;5,6" --bits 3

    # Audits and replay
    python -m mpcmp audit shares --q 11 --n 3 --t 1
    python -m mpcmp replay --transcript auction.jsonl

stdout carries one JSON record; diagnostics go to stderr.
Exit codes: 0 success, 1 unexpected failure, 2 invalid parameters or
protocol error, 3 audit FAIL or replay divergence.
"""

import argparse
import json
import sys
from pathlib import Path

from mpcmp.config import (
    DEFAULT_BITS,
    DEFAULT_MODULUS,
    DEFAULT_PARTIES,
    DEFAULT_THRESHOLD,
    DEFAULT_TRANSPORT,
    TCP_BASE_PORT,
    VIEW_AUDIT_SAMPLES,
    VIEW_AUDIT_THRESHOLD,
    get_seed_env,
    logger,
)
from mpcmp.encoding import to_bits
from mpcmp.errors import ConfigurationError, MpcError, create_error_response
from mpcmp.field import FieldConfig
from mpcmp.runtime import ProtocolRequest, export_transcript, make_transport, replay, resolve_seed, run_session
from mpcmp.sharing import ProtocolConfig

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_FAILED_CHECK = 3

# CLI name -> protocol registry id
PROTOCOL_COMMANDS = {
    'compare': 'compare',
    'max': 'max',
    'min': 'min',
    'median': 'median',
    'rank': 'rank',
    'auction': 'auction',
    'minimax': 'maximin',
    'outliers': 'outliers',
    'sci': 'sci',
    'scg': 'scg',
    'equality': 'equality',
    'zero': 'zero',
}


# ============================================================
# ARGUMENT PARSING
# ============================================================

def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(',') if x.strip() != '']
    except ValueError:
        raise ConfigurationError(f"Expected comma-separated integers, got {text!r}")


def _groups(text: str) -> list:
    groups = [_int_list(part) for part in text.split(';')]
    if any(not g for g in groups):
        raise ConfigurationError(f"Every group in {text!r} must be nonempty")
    return groups


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--inputs', type=str, help='Comma-separated owner inputs, e.g. 10,9')
    common.add_argument('--bits', type=int, help=f'Input bit length L (default {DEFAULT_BITS})')
    common.add_argument('--n', type=int, help=f'Number of parties N (default {DEFAULT_PARTIES})')
    common.add_argument('--t', type=int, help=f'Threshold T (default {DEFAULT_THRESHOLD})')
    common.add_argument('--q', type=str, help='Prime field modulus (default 2^61-1)')
    common.add_argument('--transport', choices=['mem', 'tcp'], help='Message transport')
    common.add_argument('--base-port', type=int, help='TCP base port; party i listens on base+i (default 0: OS-assigned)')
    common.add_argument('--transcript', type=str, help='Write the session transcript to this path')
    common.add_argument('--seed', type=int, help='Session seed (env fallback MPCMP_SEED)')
    common.add_argument('--config', type=str, help='JSON config record (n, t, q, bits, alphas, seed, ...)')
    common.add_argument('--summary', action='store_true', help='Also print a one-line summary')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='mpcmp',
        description='Unconditionally secure multiparty comparison over Shamir shares',
    )
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common_parser()

    for name in PROTOCOL_COMMANDS:
        p = sub.add_parser(name, parents=[common], help=f'Run the {name} protocol')
        if name in ('median', 'rank', 'outliers'):
            p.add_argument('--tie-safe', action='store_true', help='Break ties by owner index')
        if name == 'rank':
            p.add_argument('--rank-t', type=int, required=True, help='Target rank (0 = max)')
        if name == 'minimax':
            p.add_argument('--groups', type=str, help='Groups as "a,b;c,d"')
        if name == 'outliers':
            p.add_argument('--server', type=int, default=1, help='Party that receives the distances')

    audit = sub.add_parser('audit', help='Privacy and complexity audits')
    audits = audit.add_subparsers(dest='audit', required=True)

    shares = audits.add_parser('shares', help='Exact Shamir coalition-view enumeration')
    shares.add_argument('--q', type=int, default=11)
    shares.add_argument('--n', type=int, default=3)
    shares.add_argument('--t', type=int, default=1)
    shares.add_argument('--csv', type=str)

    views = audits.add_parser('views', help='Monte-Carlo protocol view indistinguishability')
    views.add_argument('--protocol', choices=['compare', 'sci'], default='compare')
    views.add_argument('--coalition', type=str, default='3')
    views.add_argument('--first', type=str, default='5,2')
    views.add_argument('--second', type=str, default='6,1')
    views.add_argument('--samples', type=int, default=VIEW_AUDIT_SAMPLES)
    views.add_argument('--q', type=int, default=37)
    views.add_argument('--bits', type=int, default=3)
    views.add_argument('--threshold', type=float, default=VIEW_AUDIT_THRESHOLD)
    views.add_argument('--seed', type=int, default=0)
    views.add_argument('--csv', type=str)

    complexity = audits.add_parser('complexity', help='Invocation counts against the bounds')
    complexity.add_argument('--min-bits', type=int, default=3)
    complexity.add_argument('--max-bits', type=int, default=8)
    complexity.add_argument('--max-inputs', type=int, default=8)
    complexity.add_argument('--q', type=str, default=str(DEFAULT_MODULUS))
    complexity.add_argument('--seed', type=int, default=0)
    complexity.add_argument('--csv', type=str)

    oracle = audits.add_parser('encoding', help='Exhaustive zero-count sweep of the encodings')
    oracle.add_argument('--max-bits', type=int, default=6)
    oracle.add_argument('--seeds', type=int, default=100)
    oracle.add_argument('--csv', type=str)

    rp = sub.add_parser('replay', help='Re-execute a transcript and diff it')
    rp.add_argument('--transcript', type=str, required=True)
    return parser


# ============================================================
# CONFIGURATION
# ============================================================

def _load_config_file(path: str) -> dict:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"Config file not found: {config_path}")
    try:
        record = json.loads(config_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {config_path} is not JSON: {e}")
    if not isinstance(record, dict):
        raise ConfigurationError("Config record must be a JSON object")
    return record


def resolve_settings(args) -> dict:
    """Flags over --config over environment defaults."""
    record = _load_config_file(args.config) if args.config else {}

    def pick(flag, key, default):
        return flag if flag is not None else record.get(key, default)

    seed = args.seed
    if seed is None:
        seed = record.get('seed')
    if seed is None:
        seed = get_seed_env()
    echoed = seed is None
    seed = resolve_seed(seed)
    if echoed:
        print(f"seed={seed}", file=sys.stderr)

    return {
        'n': int(pick(args.n, 'n', DEFAULT_PARTIES)),
        't': int(pick(args.t, 't', DEFAULT_THRESHOLD)),
        'q': int(str(pick(args.q, 'q', DEFAULT_MODULUS)), 0),
        'bits': int(pick(args.bits, 'bits', DEFAULT_BITS)),
        'alphas': record.get('alphas'),
        'seed': seed,
        'transport': pick(args.transport, 'transport', DEFAULT_TRANSPORT),
        'base_port': int(pick(args.base_port, 'base_port', TCP_BASE_PORT)),
    }


def build_config(settings: dict) -> ProtocolConfig:
    return ProtocolConfig(
        n=settings['n'],
        t=settings['t'],
        field=FieldConfig(settings['q']),
        bits=settings['bits'],
        alphas=[int(a) for a in settings['alphas']] if settings['alphas'] else None,
        seed=settings['seed'],
    )


def build_request(args, cfg: ProtocolConfig) -> ProtocolRequest:
    protocol = PROTOCOL_COMMANDS[args.command]
    options = {}
    if protocol == 'maximin' and getattr(args, 'groups', None):
        groups = _groups(args.groups)
        inputs = [x for group in groups for x in group]
        options['groups'] = [len(g) for g in groups]
    else:
        if not args.inputs:
            raise ConfigurationError(f"{args.command} needs --inputs")
        inputs = _int_list(args.inputs)

    if protocol not in ('equality', 'zero'):
        for x in inputs:
            to_bits(x, cfg.bits)
    if getattr(args, 'tie_safe', False):
        options['tie_safe'] = True
    if protocol == 'rank':
        options['rank_t'] = args.rank_t
    if protocol == 'outliers':
        options['server'] = args.server
    return ProtocolRequest(protocol, inputs, options)


# ============================================================
# COMMANDS
# ============================================================

def summarize(protocol: str, result: dict) -> str:
    if protocol == 'compare':
        return f"verdict {result['verdict']}"
    if protocol == 'auction':
        return f"winner={result['winner']} bid={result['bid']}"
    if protocol == 'maximin':
        return f"value={result['value']} group={result['group']}"
    return ' '.join(f"{k}={v}" for k, v in result.items())


def run_protocol_command(args) -> int:
    settings = resolve_settings(args)
    cfg = build_config(settings)
    request = build_request(args, cfg)
    transport = make_transport(settings['transport'], base_port=settings['base_port'])

    outcome = run_session(request, cfg, transport=transport, seed=settings['seed'])
    transcript = outcome.transcript

    if request.protocol == 'outliers':
        result = outcome.outputs[request.options['server']]
    else:
        result = outcome.outputs[1]
    counts = transcript.counters
    record = {
        'protocol': request.protocol,
        'result': result,
        'invocations': sum(c for label, c in counts.items() if not label.endswith('jrand-check')),
        'invocations_by_step': counts,
        'rounds': len({m.round for m in transcript.messages}),
        'messages': len(transcript.messages),
        'seed': settings['seed'],
        'session_id': transcript.session_id,
        'transport': transcript.transport,
    }
    if args.transcript:
        record['transcript'] = str(export_transcript(transcript, args.transcript))

    print(json.dumps(record))
    if args.summary:
        print(summarize(request.protocol, result))
    return EXIT_OK


def run_audit_command(args) -> int:
    from mpcmp import audit

    if args.audit == 'shares':
        report = audit.share_secrecy_audit(args.q, args.n, args.t)
    elif args.audit == 'views':
        report = audit.view_indistinguishability_audit(
            args.protocol,
            tuple(_int_list(args.coalition)),
            _int_list(args.first),
            _int_list(args.second),
            samples=args.samples,
            q=args.q,
            bits=args.bits,
            threshold=args.threshold,
            seed=args.seed,
        )
    elif args.audit == 'complexity':
        report = audit.run_complexity_suite(
            bit_lengths=range(args.min_bits, args.max_bits + 1),
            input_counts=range(2, args.max_inputs + 1),
            q=int(args.q, 0),
            seed=args.seed,
        )
    else:
        report = audit.zero_count_audit(args.max_bits, args.seeds)

    if args.csv:
        report.to_csv(args.csv)
    print(json.dumps(report.to_record()))
    print(report.table.to_string(index=False), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED_CHECK


def run_replay_command(args) -> int:
    report = replay(args.transcript)
    print(json.dumps(report.to_record()))
    return EXIT_OK if report.identical else EXIT_FAILED_CHECK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == 'audit':
            return run_audit_command(args)
        if args.command == 'replay':
            return run_replay_command(args)
        return run_protocol_command(args)
    except MpcError as e:
        print(json.dumps(create_error_response(e)), file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}: {e}")
        return EXIT_UNEXPECTED
