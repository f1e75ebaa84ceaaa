"""Forward-secrecy negotiation toolkit: measurement heuristics and
best-effort client policies for pre-TLS-1.3 version/suite negotiation."""

from .client import (
    ALWAYS_ABORT,
    ALWAYS_PROCEED,
    FallbackStyle,
    PolicyConfig,
    PolicyMode,
    SessionOutcome,
    SessionStatus,
    UserDecisionSource,
    befs_connect,
    besafe_connect,
    connect,
    default_connect,
    latency_bench,
    parallel_connect,
)
from .suites import (
    DEFAULT,
    FS_AE_ONLY,
    FS_ONLY,
    OfferProfile,
    ProfileKind,
    is_ae,
    is_fs,
    profile,
)

__version__ = "0.1.0"

__all__ = [
    "ALWAYS_ABORT",
    "ALWAYS_PROCEED",
    "DEFAULT",
    "FS_AE_ONLY",
    "FS_ONLY",
    "FallbackStyle",
    "OfferProfile",
    "PolicyConfig",
    "PolicyMode",
    "ProfileKind",
    "SessionOutcome",
    "SessionStatus",
    "UserDecisionSource",
    "befs_connect",
    "besafe_connect",
    "connect",
    "default_connect",
    "is_ae",
    "is_fs",
    "latency_bench",
    "parallel_connect",
    "profile",
    "__version__",
]
