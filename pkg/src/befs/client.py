"""Enforcement-first client policies with graded fallback.

The default client sends one wide offer and takes whatever the server
picks.  The best-effort policies instead start from the strongest offer
and widen only on failure: FS-only then default, or FS+AE-only then
FS-only then default.  Fallback can happen silently, behind a user
decision, or accompanied by a wire signal that lets honest capable
servers reject a downgrade they should never have seen.  A parallel
variant sends every rung at once, waits for all answers, and keeps the
strongest.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence

from .handshake import AttemptResult, Connector, handshake_attempt
from .suites import PROFILES, ProfileKind, is_ae, is_fs


class PolicyMode(Enum):
    DEFAULT = "DEFAULT"
    BEFS = "BEFS"
    BESAFE = "BESAFE"


class FallbackStyle(Enum):
    SILENT = "SILENT"
    INTERACTIVE = "INTERACTIVE"
    SIGNALED = "SIGNALED"


class SessionStatus(Enum):
    CONNECTED = "CONNECTED"
    ABORTED_BY_USER = "ABORTED_BY_USER"
    FAILED = "FAILED"


@dataclass(frozen=True)
class PolicyConfig:
    mode: PolicyMode
    fallback: FallbackStyle = FallbackStyle.SILENT
    parallel: bool = False
    timeout_s: float = 5.0


LADDERS: dict[PolicyMode, tuple[ProfileKind, ...]] = {
    PolicyMode.DEFAULT: (ProfileKind.DEFAULT,),
    PolicyMode.BEFS: (ProfileKind.FS_ONLY, ProfileKind.DEFAULT),
    PolicyMode.BESAFE: (ProfileKind.FS_AE_ONLY, ProfileKind.FS_ONLY, ProfileKind.DEFAULT),
}


@dataclass(frozen=True)
class SessionOutcome:
    status: SessionStatus
    suite: Optional[int]
    fs: Optional[bool]
    ae: Optional[bool]
    fallback_depth: int
    handshake_attempts: int
    per_attempt_timings: tuple[float, ...]
    attempts: tuple[AttemptResult, ...] = ()
    mode: Optional[PolicyMode] = None

    def __post_init__(self) -> None:
        if self.status is SessionStatus.CONNECTED and self.suite is None:
            raise ValueError("CONNECTED requires a suite")

    @property
    def connected(self) -> bool:
        return self.status is SessionStatus.CONNECTED


class UserDecisionSource(Protocol):
    def approve_fallback(self, description: str) -> bool: ...


class _ConstantDecision:
    def __init__(self, answer: bool) -> None:
        self._answer = answer

    def approve_fallback(self, description: str) -> bool:
        return self._answer


ALWAYS_PROCEED: UserDecisionSource = _ConstantDecision(True)
ALWAYS_ABORT: UserDecisionSource = _ConstantDecision(False)


class ScriptedDecisions:
    """Answers fallback prompts from a fixed script; overruns raise."""

    def __init__(self, answers: Iterable[bool]) -> None:
        self._answers = list(answers)
        self.prompts: list[str] = []

    def approve_fallback(self, description: str) -> bool:
        self.prompts.append(description)
        if not self._answers:
            raise RuntimeError("decision script exhausted at: %s" % description)
        return self._answers.pop(0)


_FALLBACK_COSTS = {
    ProfileKind.FS_ONLY: "authenticated encryption no longer guaranteed",
    ProfileKind.DEFAULT: "forward secrecy no longer guaranteed",
}


def describe_fallback(address: str, next_profile: ProfileKind) -> str:
    return "%s: widen offer to %s (%s)?" % (
        address,
        next_profile.value,
        _FALLBACK_COSTS.get(next_profile, "weaker parameters possible"),
    )


def _outcome(
    status: SessionStatus,
    attempts: Sequence[AttemptResult],
    *,
    suite: Optional[int],
    fallback_depth: int,
    handshake_attempts: int,
    mode: PolicyMode,
) -> SessionOutcome:
    return SessionOutcome(
        status=status,
        suite=suite,
        fs=is_fs(suite) if suite is not None else None,
        ae=is_ae(suite) if suite is not None else None,
        fallback_depth=fallback_depth,
        handshake_attempts=handshake_attempts,
        per_attempt_timings=tuple(a.elapsed_s for a in attempts),
        attempts=tuple(attempts),
        mode=mode,
    )


def _attempt_rung(
    connector: Connector,
    address: str,
    profile: ProfileKind,
    cfg: PolicyConfig,
    *,
    signal: bool,
    sni: Optional[str],
    tag: str,
    seed: int,
    depth: int,
) -> AttemptResult:
    return handshake_attempt(
        connector,
        address,
        PROFILES[profile].suites,
        cfg.timeout_s,
        sni=sni,
        tag=tag,
        seed=seed,
        label="%s/%s/%d" % (cfg.mode.value, profile.value, depth),
        signal_fallback=signal,
    )


def _sequential(
    connector: Connector,
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource,
    *,
    sni: Optional[str],
    tag: str,
    seed: int,
) -> SessionOutcome:
    ladder = LADDERS[cfg.mode]
    attempts: list[AttemptResult] = []
    for depth, profile in enumerate(ladder):
        if depth > 0 and cfg.fallback is FallbackStyle.INTERACTIVE:
            if not user.approve_fallback(describe_fallback(address, profile)):
                return _outcome(
                    SessionStatus.ABORTED_BY_USER,
                    attempts,
                    suite=None,
                    fallback_depth=len(attempts) - 1,
                    handshake_attempts=len(attempts),
                    mode=cfg.mode,
                )
        signal = cfg.fallback is FallbackStyle.SIGNALED and depth > 0
        result = _attempt_rung(
            connector, address, profile, cfg,
            signal=signal, sni=sni, tag=tag, seed=seed, depth=depth,
        )
        attempts.append(result)
        if result.selected:
            return _outcome(
                SessionStatus.CONNECTED,
                attempts,
                suite=result.suite,
                fallback_depth=depth,
                handshake_attempts=len(attempts),
                mode=cfg.mode,
            )
    return _outcome(
        SessionStatus.FAILED,
        attempts,
        suite=None,
        fallback_depth=len(attempts) - 1,
        handshake_attempts=len(attempts),
        mode=cfg.mode,
    )


def parallel_connect(
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource = ALWAYS_PROCEED,
    *,
    connector: Connector,
    sni: Optional[str] = None,
    tag: str = "",
    seed: int = 0,
) -> SessionOutcome:
    """All ladder rungs at once; wait for every answer, keep the strongest.

    Fallback style does not apply: no rung is a reaction to a failure,
    so there is nothing to confirm or signal.
    """
    if not cfg.parallel:
        raise ValueError("parallel_connect requires cfg.parallel")
    ladder = LADDERS[cfg.mode]
    with ThreadPoolExecutor(max_workers=len(ladder)) as pool:
        futures = [
            pool.submit(
                _attempt_rung,
                connector, address, profile, cfg,
                signal=False, sni=sni, tag=tag, seed=seed, depth=depth,
            )
            for depth, profile in enumerate(ladder)
        ]
        results = [f.result() for f in futures]  # join-all barrier
    for depth, result in enumerate(results):  # strongest rung first
        if result.selected:
            return _outcome(
                SessionStatus.CONNECTED,
                results,
                suite=result.suite,
                fallback_depth=depth,
                handshake_attempts=len(ladder),
                mode=cfg.mode,
            )
    return _outcome(
        SessionStatus.FAILED,
        results,
        suite=None,
        fallback_depth=len(ladder) - 1,
        handshake_attempts=len(ladder),
        mode=cfg.mode,
    )


def befs_connect(
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource = ALWAYS_PROCEED,
    *,
    connector: Connector,
    sni: Optional[str] = None,
    tag: str = "",
    seed: int = 0,
) -> SessionOutcome:
    """FS-only first; widen to the default offer only on failure."""
    if cfg.mode is not PolicyMode.BEFS:
        raise ValueError("befs_connect requires mode BEFS")
    if cfg.parallel:
        return parallel_connect(address, cfg, user, connector=connector, sni=sni, tag=tag, seed=seed)
    return _sequential(connector, address, cfg, user, sni=sni, tag=tag, seed=seed)


def besafe_connect(
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource = ALWAYS_PROCEED,
    *,
    connector: Connector,
    sni: Optional[str] = None,
    tag: str = "",
    seed: int = 0,
) -> SessionOutcome:
    """FS+AE-only first, then FS-only, then the default offer."""
    if cfg.mode is not PolicyMode.BESAFE:
        raise ValueError("besafe_connect requires mode BESAFE")
    if cfg.parallel:
        return parallel_connect(address, cfg, user, connector=connector, sni=sni, tag=tag, seed=seed)
    return _sequential(connector, address, cfg, user, sni=sni, tag=tag, seed=seed)


def default_connect(
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource = ALWAYS_PROCEED,
    *,
    connector: Connector,
    sni: Optional[str] = None,
    tag: str = "",
    seed: int = 0,
) -> SessionOutcome:
    # The plain client has one rung, so fallback/parallel knobs are moot.
    if cfg.mode is not PolicyMode.DEFAULT:
        raise ValueError("default_connect requires mode DEFAULT")
    return _sequential(connector, address, cfg, user, sni=sni, tag=tag, seed=seed)


_CONNECTORS_BY_MODE = {
    PolicyMode.DEFAULT: default_connect,
    PolicyMode.BEFS: befs_connect,
    PolicyMode.BESAFE: besafe_connect,
}


def connect(
    address: str,
    cfg: PolicyConfig,
    user: UserDecisionSource = ALWAYS_PROCEED,
    **kw,
) -> SessionOutcome:
    return _CONNECTORS_BY_MODE[cfg.mode](address, cfg, user, **kw)


@dataclass(frozen=True)
class ModeStats:
    max_s: float
    min_s: float
    avg_s: float
    attempts_avg: float
    samples: int


@dataclass(frozen=True)
class BenchReport:
    per_mode: dict[PolicyMode, ModeStats]
    repetitions: int
    responders: int
    excluded: tuple[str, ...]


BENCH_MODES = (PolicyMode.DEFAULT, PolicyMode.BEFS, PolicyMode.BESAFE)


def latency_bench(
    addresses: Sequence[str],
    repetitions: int = 1,
    *,
    connector: Connector,
    timeout_s: float = 5.0,
    sni: Optional[str] = None,
    seed: int = 0,
) -> BenchReport:
    """Back-to-back default/BEFS/BESAFE timings per address.

    Wall time wraps the full attempt ladder, connection setup included.
    Addresses that fail any mode are excluded from the aggregates and
    reported separately.
    """
    walls: dict[PolicyMode, list[float]] = {m: [] for m in BENCH_MODES}
    attempts: dict[PolicyMode, list[int]] = {m: [] for m in BENCH_MODES}
    excluded: list[str] = []
    responders = 0
    for address in addresses:
        local_walls: dict[PolicyMode, list[float]] = {m: [] for m in BENCH_MODES}
        local_attempts: dict[PolicyMode, list[int]] = {m: [] for m in BENCH_MODES}
        ok = True
        for _ in range(repetitions):
            for mode in BENCH_MODES:
                cfg = PolicyConfig(mode=mode, timeout_s=timeout_s)
                start = time.perf_counter()
                outcome = connect(address, cfg, connector=connector, sni=sni, seed=seed)
                wall = time.perf_counter() - start
                if not outcome.connected:
                    ok = False
                    break
                local_walls[mode].append(wall)
                local_attempts[mode].append(outcome.handshake_attempts)
            if not ok:
                break
        if not ok:
            excluded.append(address)
            continue
        responders += 1
        for mode in BENCH_MODES:
            walls[mode].extend(local_walls[mode])
            attempts[mode].extend(local_attempts[mode])
    per_mode = {}
    for mode in BENCH_MODES:
        ws = walls[mode]
        if ws:
            per_mode[mode] = ModeStats(
                max_s=max(ws),
                min_s=min(ws),
                avg_s=sum(ws) / len(ws),
                attempts_avg=sum(attempts[mode]) / len(attempts[mode]),
                samples=len(ws),
            )
    return BenchReport(
        per_mode=per_mode,
        repetitions=repetitions,
        responders=responders,
        excluded=tuple(excluded),
    )
