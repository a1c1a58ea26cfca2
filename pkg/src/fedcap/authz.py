"""Provider-local access-right validation.

Stages run strictly in order and the first failure aborts:

    revocation -> token_time -> action_grant -> condition -> signature

Signature verification is the expensive step, so it is always last.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .capability import verify_token_signature
from .model import AccessRight, Action, CapabilityToken, RevocationList, VirtualIdentity

log = logging.getLogger(__name__)

DEFAULT_SKEW = 30


class Stage(str, Enum):
    REVOCATION = "revocation"
    TOKEN_TIME = "token_time"
    ACTION_GRANT = "action_grant"
    CONDITION = "condition"
    SIGNATURE = "signature"
    GRANTED = "granted"


PIPELINE = (Stage.REVOCATION, Stage.TOKEN_TIME, Stage.ACTION_GRANT, Stage.CONDITION, Stage.SIGNATURE)


@dataclass(frozen=True)
class RequestContext:
    method: Action
    uri_path: str
    client_address: str = "127.0.0.1"
    now: int = 0
    environment: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Action(self.method))
        if not self.uri_path.startswith("/"):
            raise ValueError("uri_path must begin with '/'")


@dataclass(frozen=True)
class Decision:
    outcome: str
    stage: Stage
    detail: str = ""

    def __post_init__(self) -> None:
        if self.outcome not in ("grant", "deny"):
            raise ValueError(f"bad outcome {self.outcome!r}")
        if (self.outcome == "grant") != (self.stage is Stage.GRANTED):
            raise ValueError("grant outcome iff granted stage")

    @property
    def granted(self) -> bool:
        return self.outcome == "grant"

    @classmethod
    def grant(cls) -> "Decision":
        return cls("grant", Stage.GRANTED)

    @classmethod
    def deny(cls, stage: Stage, detail: str = "") -> "Decision":
        return cls("deny", stage, detail)


def validate_token_times(token: CapabilityToken, now: int, skew: int = DEFAULT_SKEW) -> bool:
    return (
        token.issue_time <= now + skew
        and token.starttime - skew <= now <= token.endtime + skew
    )


def resource_matches(pattern: str, path: str) -> bool:
    """Exact match, or ``/prefix/*`` matching exactly one further non-empty segment."""
    if pattern == path:
        return True
    if pattern.endswith("/*"):
        prefix = pattern[:-1]
        if path.startswith(prefix):
            rest = path[len(prefix):]
            return bool(rest) and "/" not in rest
    return False


def check_action_grant(token: CapabilityToken, ctx: RequestContext) -> AccessRight | None:
    for right in token.access_right:
        if right.action is ctx.method and resource_matches(right.resource, ctx.uri_path):
            return right
    return None


def verify_conditions(matched: AccessRight, ctx: RequestContext) -> bool:
    if not matched.conditions:
        return True
    for cond in matched.conditions:
        try:
            if cond.is_satisfied(ctx.now, ctx.client_address, ctx.environment):
                return True
        except ValueError as exc:
            log.warning("condition %s unevaluable, treated as unsatisfied: %s", cond.kind.value, exc)
    return False


def check_revocation(subject: VirtualIdentity, rl: RevocationList, now: int) -> bool:
    return rl.is_revoked(subject, now)


IssuerCheck = Callable[[bytes], "str | None"]


class Authorizer:
    """Runs the pipeline and keeps per-stage invocation counters and timings.

    ``issuer_check`` returns a denial reason for an untrusted or nullified
    issuer key (or None); it runs inside the signature stage.  ``chain_check``
    optionally re-derives the token's hash chain in strict mode.
    """

    def __init__(
        self,
        *,
        skew: int = DEFAULT_SKEW,
        issuer_check: IssuerCheck | None = None,
        chain_check: Callable[[CapabilityToken], bool] | None = None,
        signature_verifier: Callable[[CapabilityToken], bool] = verify_token_signature,
    ):
        self.skew = skew
        self.issuer_check = issuer_check
        self.chain_check = chain_check
        self.signature_verifier = signature_verifier
        self._lock = threading.Lock()
        self.invocations: Counter[Stage] = Counter()
        self.outcomes: Counter[Stage] = Counter()
        self.elapsed_ns: Counter[Stage] = Counter()

    def reset(self) -> None:
        with self._lock:
            self.invocations.clear()
            self.outcomes.clear()
            self.elapsed_ns.clear()

    def snapshot(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {
                "invocations": {s.value: self.invocations[s] for s in PIPELINE},
                "outcomes": {s.value: self.outcomes[s] for s in Stage},
                "elapsed_ns": {s.value: self.elapsed_ns[s] for s in PIPELINE},
            }

    def _signature_stage(self, token: CapabilityToken) -> str | None:
        if self.issuer_check is not None:
            reason = self.issuer_check(token.issuer)
            if reason:
                return reason
        if not self.signature_verifier(token):
            return "bad signature"
        if self.chain_check is not None and not self.chain_check(token):
            return "capability chain mismatch"
        return None

    def evaluate(
        self, token: CapabilityToken, ctx: RequestContext, rl: RevocationList
    ) -> tuple[Decision, dict[Stage, int]]:
        """Return the decision and the nanoseconds spent in each stage that ran."""
        spent: dict[Stage, int] = {}
        matched: list[AccessRight | None] = [None]

        def run(stage: Stage) -> str | None:
            if stage is Stage.REVOCATION:
                return "subject revoked" if check_revocation(token.subject, rl, ctx.now) else None
            if stage is Stage.TOKEN_TIME:
                return None if validate_token_times(token, ctx.now, self.skew) else "token not valid now"
            if stage is Stage.ACTION_GRANT:
                matched[0] = check_action_grant(token, ctx)
                return None if matched[0] is not None else "action not granted"
            if stage is Stage.CONDITION:
                return None if verify_conditions(matched[0], ctx) else "no condition satisfied"
            return self._signature_stage(token)

        decision = Decision.grant()
        for stage in PIPELINE:
            t0 = time.perf_counter_ns()
            reason = run(stage)
            spent[stage] = time.perf_counter_ns() - t0
            if reason is not None:
                decision = Decision.deny(stage, reason)
                break
        with self._lock:
            for stage, ns in spent.items():
                self.invocations[stage] += 1
                self.elapsed_ns[stage] += ns
            self.outcomes[decision.stage] += 1
        return decision, spent

    def authorize(self, token: CapabilityToken, ctx: RequestContext, rl: RevocationList) -> Decision:
        return self.evaluate(token, ctx, rl)[0]


def authorize(
    token: CapabilityToken,
    ctx: RequestContext,
    rl: RevocationList,
    *,
    skew: int = DEFAULT_SKEW,
    issuer_check: IssuerCheck | None = None,
) -> Decision:
    """One-shot pipeline run without shared counters."""
    return Authorizer(skew=skew, issuer_check=issuer_check).authorize(token, ctx, rl)
