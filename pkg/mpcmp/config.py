"""
mpcmp/config.py - Configuration Management

Centralizes logging, environment variables and protocol defaults.
Every session parameter can be overridden from the environment (or a .env
file); the CLI flags take precedence over both.
"""

import os
import sys
import json
import logging
from datetime import datetime, timezone

from dotenv import load_dotenv

load_dotenv()


# ============================================================
# LOGGING CONFIGURATION
# ============================================================

class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging of protocol sessions."""

    EXTRA_FIELDS = ('session_id', 'step', 'round', 'party', 'duration_ms')

    def format(self, record):
        log_obj = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }

        for key in self.EXTRA_FIELDS:
            if hasattr(record, key):
                log_obj[key] = getattr(record, key)

        if record.exc_info:
            log_obj['exception'] = self.formatException(record.exc_info)

        return json.dumps(log_obj)


def setup_logging(name: str = 'mpcmp') -> logging.Logger:
    """
    Set up logging with environment-based configuration.

    LOG_LEVEL: DEBUG, INFO, WARNING, ERROR (default: WARNING)
    LOG_FORMAT: json, text (default: text)

    Logs go to stderr; stdout belongs to the CLI result record.
    """
    logger = logging.getLogger(name)

    # Avoid duplicate handlers on re-import
    if logger.handlers:
        return logger

    log_level = os.environ.get('LOG_LEVEL', 'WARNING').upper()
    logger.setLevel(getattr(logging, log_level, logging.WARNING))

    log_format = os.environ.get('LOG_FORMAT', 'text')
    handler = logging.StreamHandler(sys.stderr)

    if log_format == 'json':
        handler.setFormatter(JSONFormatter())
    else:
        handler.setFormatter(logging.Formatter(
            '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))

    logger.addHandler(handler)
    return logger


logger = setup_logging('mpcmp')


# ============================================================
# ENVIRONMENT VARIABLES
# ============================================================

def get_optional_env(key: str, default: str = '') -> str:
    """Get optional environment variable with default."""
    return os.environ.get(key, default)


def get_int_env(key: str, default: int) -> int:
    """Get an integer environment variable, failing loudly on garbage."""
    raw = os.environ.get(key)
    if raw is None or raw == '':
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise ValueError(f"Environment variable '{key}' must be an integer, got {raw!r}")


def get_seed_env() -> int | None:
    """MPCMP_SEED, or None when randomness should come from OS entropy."""
    raw = os.environ.get('MPCMP_SEED')
    if not raw:
        return None
    return get_int_env('MPCMP_SEED', 0)


# ============================================================
# PROTOCOL DEFAULTS
# ============================================================

# Mersenne prime 2^61 - 1: room for 58-bit inputs under the 2^(L+2) < q rule
MERSENNE_61 = (1 << 61) - 1

DEFAULT_MODULUS = get_int_env('MPCMP_MODULUS', MERSENNE_61)
DEFAULT_PARTIES = get_int_env('MPCMP_PARTIES', 3)
DEFAULT_THRESHOLD = get_int_env('MPCMP_THRESHOLD', 1)
DEFAULT_BITS = get_int_env('MPCMP_BITS', 16)

# Nonzero-mask regeneration cap; failure probability is (1/q)^64
NONZERO_RETRY_LIMIT = get_int_env('MPCMP_NONZERO_RETRIES', 64)

# ============================================================
# TRANSPORT SETTINGS
# ============================================================

DEFAULT_TRANSPORT = get_optional_env('MPCMP_TRANSPORT', 'mem')
TCP_HOST = get_optional_env('MPCMP_TCP_HOST', '127.0.0.1')
# Party i listens on base + i; 0 lets the OS pick a free port per party
TCP_BASE_PORT = get_int_env('MPCMP_TCP_BASE_PORT', 0)
TCP_TIMEOUT = float(get_optional_env('MPCMP_TCP_TIMEOUT', '10'))

# ============================================================
# AUDIT LIMITS
# ============================================================

# Share-secrecy enumeration walks q^T coefficient tuples per secret
SECRECY_AUDIT_LIMITS: dict = {
    'max_q': 17,
    'max_t': 2,
    'max_n': 5,
}

# View audits need 2^(L+2) < q, so L = 3 forces q >= 37
VIEW_AUDIT_LIMITS: dict = {
    'max_q': 67,
    'max_bits': 3,
    'parties': 3,
    'threshold': 1,
}

VIEW_AUDIT_SAMPLES = get_int_env('MPCMP_VIEW_SAMPLES', 100_000)
VIEW_AUDIT_THRESHOLD = float(get_optional_env('MPCMP_VIEW_THRESHOLD', '0.05'))

# Random pooled splits averaged for each feature's TV sampling floor
VIEW_AUDIT_NULL_ROUNDS = 3
