"""Scripted allow/deny scenarios over a live process topology.

A scenario file is JSON::

    {
      "name": "happy-path",
      "topology": {
        "coordinators": [{"name": "c1", "domain": "domain-1"}],
        "providers": [{"name": "p1", "coordinators": ["c1"], "environment": {...},
                       "resources": {"/data": {...}}}]
      },
      "steps": [{"action": "...", ..., "expect": {...}}, ...]
    }

Step actions (fields in brackets are optional):

``register``         actor, attributes           register a client subject with the PDC
``publish``          object, rights              publish an internal capability for a provider
``rule``             at, subject, object, granted, [validity, conditions]
                                                 add a policy rule at the PDC or a coordinator
``delegate``         coordinator                 root offers delegation to a coordinator
``sync``             coordinator                 coordinator pulls state (also retries broadcasts)
``issue``            issuer, subject, object, rights, [save_as]
                                                 request a capability token
``request``          provider, method, path, [token, tamper]
                                                 send a resource request
``revoke``           subject, [ttl]              PDC revokes a subject's capabilities
``revoke_delegation`` coordinator, [replacement] PDC revokes a coordinator, optionally installs a new one
``advance_clock``    seconds                     shift every service clock together
``fault``            provider, down              make a provider refuse revocation delivery

``expect`` may hold ``status``, ``stage``, ``failures`` (broadcast delivery
failures) and ``short_circuit`` (default true for requests reaching the
pipeline).  The short-circuit check diffs the provider's stage invocation
counters around the request: every stage up to the deciding one must have run
exactly once and no later stage at all.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .. import wire
from ..authz import PIPELINE
from ..capability import owner_signature
from ..crypto import SigningKey
from ..model import EntityKind, Profile
from ..provider import TOKEN_HEADER
from .topology import Topology, TopologyError

log = logging.getLogger(__name__)

ACTIONS = (
    "register", "publish", "rule", "delegate", "sync", "issue", "request",
    "revoke", "revoke_delegation", "advance_clock", "fault",
)
STAGE_NAMES = [s.value for s in PIPELINE]


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    topology: dict[str, Any]
    steps: list[dict[str, Any]]
    description: str = ""

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Scenario":
        try:
            sc = cls(str(data["name"]), dict(data.get("topology", {})), list(data["steps"]),
                     str(data.get("description", "")))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        sc.validate()
        return sc

    @classmethod
    def load(cls, name_or_path: str) -> "Scenario":
        path = Path(name_or_path)
        if path.suffix == ".json" or path.exists():
            text = path.read_text()
        else:
            res = resources.files("fedcap.harness") / "scenarios" / f"{name_or_path}.json"
            if not res.is_file():
                raise ScenarioError(f"no bundled scenario named {name_or_path!r} (have: {', '.join(bundled())})")
            text = res.read_text()
        return cls.from_json(json.loads(text))

    def validate(self) -> None:
        """Every actor a step mentions must exist by the time the step runs."""
        coords = {c["name"] for c in self.topology.get("coordinators", [])}
        providers = {p["name"] for p in self.topology.get("providers", [])}
        for p in self.topology.get("providers", []):
            for c in p.get("coordinators", []):
                if c not in coords:
                    raise ScenarioError(f"provider {p['name']} names unknown coordinator {c}")
        subjects: set[str] = set()
        tokens: set[str] = set()

        def need(kind: str, name: Any, pool: set[str], idx: int) -> None:
            if name not in pool:
                raise ScenarioError(f"step {idx}: unknown {kind} {name!r}")

        for i, step in enumerate(self.steps):
            act = step.get("action")
            if act not in ACTIONS:
                raise ScenarioError(f"step {i}: unknown action {act!r}")
            if act == "register":
                subjects.add(step["actor"])
            if "subject" in step:
                need("subject", step["subject"], subjects, i)
            if "object" in step or act == "request":
                need("provider", step.get("object", step.get("provider")), providers, i)
            if "coordinator" in step:
                need("coordinator", step["coordinator"], coords, i)
            if step.get("replacement"):
                need("coordinator", step["replacement"], coords, i)
            for key in ("at", "issuer"):
                if key in step and step[key] != "pdc":
                    need("coordinator", step[key], coords, i)
            if act == "fault":
                need("provider", step["provider"], providers, i)
            if act == "issue" and step.get("save_as"):
                tokens.add(step["save_as"])
            if act == "request" and step.get("token") is not None:
                need("token", step["token"], tokens, i)


def bundled() -> list[str]:
    folder = resources.files("fedcap.harness") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


@dataclass
class StepResult:
    index: int
    action: str
    passed: bool
    observed: dict[str, Any]
    expected: dict[str, Any]
    detail: str = ""

    def outcome(self) -> dict[str, Any]:
        """Timing-free view used to compare repeated runs."""
        return {"action": self.action, "passed": self.passed,
                **{k: v for k, v in self.observed.items() if k in ("status", "stage", "failures")}}


@dataclass
class ScenarioResult:
    name: str
    steps: list[StepResult] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(s.passed for s in self.steps)

    def outcomes(self) -> list[dict[str, Any]]:
        return [s.outcome() for s in self.steps]

    def render(self) -> str:
        lines = [f"scenario {self.name}"]
        for s in self.steps:
            mark = "PASS" if s.passed else "FAIL"
            obs = ", ".join(f"{k}={v}" for k, v in s.observed.items() if k != "invocations")
            lines.append(f"  [{mark}] {s.index:02d} {s.action:<18} {obs}" + (f"  ({s.detail})" if s.detail else ""))
        if self.error:
            lines.append(f"  aborted: {self.error}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'} "
                     f"({sum(s.passed for s in self.steps)}/{len(self.steps)} steps)")
        return "\n".join(lines)


def _rights(entries: list[dict[str, Any]]) -> list[dict[str, Any]]:
    return [wire.access_right_to_json(r) for r in wire.rights_from_json(entries)]


def tamper_token(token_json: dict[str, Any], how: str) -> str:
    t = dict(token_json)
    if how == "signature":
        sig = t["issue_sign"]
        t["issue_sign"] = ("0" if sig[0] != "0" else "1") + sig[1:]
    elif how == "rights":
        t["access_right"] = [dict(r, resource=r["resource"] + "x") for r in t["access_right"]]
    elif how == "expiry":
        t["endtime"] = t["endtime"] + 86400
    elif how == "garbage":
        return "not-a-token"
    elif how != "none":
        raise ScenarioError(f"unknown tamper mode {how!r}")
    return wire.dumps(t)


def expected_invocations(status: int, stage: str | None) -> dict[str, int] | None:
    if status == 200:
        return {s: 1 for s in STAGE_NAMES}
    if status == 403 and stage in STAGE_NAMES:
        cut = STAGE_NAMES.index(stage)
        return {s: int(i <= cut) for i, s in enumerate(STAGE_NAMES)}
    return None


class ScenarioRunner:
    def __init__(self, scenario: Scenario, *, log_level: str = "WARNING"):
        self.scenario = scenario
        self.log_level = log_level
        self.subjects: dict[str, tuple[SigningKey, str]] = {}
        self.tokens: dict[str, dict[str, Any]] = {}
        self.topo: Topology | None = None

    def run(self) -> ScenarioResult:
        result = ScenarioResult(self.scenario.name)
        with Topology(log_level=self.log_level) as topo:
            self.topo = topo
            try:
                self.launch(topo)
            except (TopologyError, OSError) as exc:
                result.error = f"topology launch failed: {exc}"
                return result
            for i, step in enumerate(self.scenario.steps):
                try:
                    result.steps.append(self.run_step(i, step))
                except Exception as exc:  # noqa: BLE001 - report and keep diagnostics
                    log.exception("step %d crashed", i)
                    result.steps.append(StepResult(i, step.get("action", "?"), False, {}, step.get("expect", {}),
                                                   f"error: {exc}"))
        self.topo = None
        return result

    def launch(self, topo: Topology) -> None:
        layout = self.scenario.topology
        topo.start_pdc(**layout.get("pdc", {}))
        for c in layout.get("coordinators", []):
            extra = {k: v for k, v in c.items() if k not in ("name", "domain")}
            topo.start_coordinator(c["name"], c.get("domain", "domain-1"), **extra)
        for p in layout.get("providers", []):
            extra = {k: v for k, v in p.items() if k not in ("name", "coordinators", "domain")}
            topo.start_provider(p["name"], p.get("coordinators", []), p.get("domain", "domain-1"), **extra)

    # -- helpers -------------------------------------------------------------

    def _vid(self, name: str) -> str:
        if name in self.subjects:
            return self.subjects[name][1]
        return self.topo.node(name).vid

    def _issuer(self, name: str):
        return self.topo.pdc if name == "pdc" else self.topo.node(name)

    def run_step(self, i: int, step: dict[str, Any]) -> StepResult:
        act = step["action"]
        expect = dict(step.get("expect", {}))
        observed = getattr(self, "_do_" + act)(step)
        ok, detail = self._compare(observed, expect)
        return StepResult(i, act, ok, observed, expect, detail)

    @staticmethod
    def _compare(observed: dict[str, Any], expect: dict[str, Any]) -> tuple[bool, str]:
        problems = []
        for key in ("status", "stage", "failures"):
            if key in expect and observed.get(key) != expect[key]:
                problems.append(f"expected {key}={expect[key]!r}, got {observed.get(key)!r}")
        if "status" not in expect and observed.get("status", 200) != 200:
            problems.append(f"unexpected status {observed.get('status')}: {observed.get('error', '')}")
        if observed.get("short_circuit") is False and expect.get("short_circuit", True):
            problems.append(f"stage counters violate short-circuit: {observed.get('invocations')}")
        return not problems, "; ".join(problems)

    @staticmethod
    def _status(status: int, body: Any) -> dict[str, Any]:
        out: dict[str, Any] = {"status": status}
        if status != 200 and isinstance(body, dict) and "error" in body:
            out["error"] = body["error"]
        return out

    # -- actions -------------------------------------------------------------

    def _do_register(self, step):
        key = SigningKey.generate()
        attrs = tuple(sorted((str(k), str(v)) for k, v in step.get("attributes", {}).items()))
        profile = Profile(EntityKind.SUBJECT, (("name", step["actor"]),) + attrs, key.public_bytes,
                          step.get("domain", "domain-1"))
        sign = owner_signature(profile, key)
        status, body = self.topo.pdc.call("POST", "/register", {
            "profile": wire.profile_to_json(profile), "owner_sign": sign.hex()})
        if status == 200:
            self.subjects[step["actor"]] = (key, body["vid"])
        return self._status(status, body)

    def _do_publish(self, step):
        status, body = self.topo.pdc.call("POST", "/admin/incap", {
            "object": self._vid(step["object"]), "access_rights": _rights(step["rights"])})
        return self._status(status, body)

    def _do_rule(self, step):
        rule = {
            "subject_match": step.get("subject_match", {}),
            "object_vid": self._vid(step["object"]),
            "granted": _rights(step.get("granted", [])),
            "validity_duration": int(step.get("validity", 3600)),
            "conditions": step.get("conditions", []),
        }
        if "subject" in step:
            rule["subject_match"] = {"name": step["subject"], **rule["subject_match"]}
        status, body = self._issuer(step.get("at", "pdc")).call("POST", "/admin/rule", rule)
        return self._status(status, body)

    def _do_delegate(self, step):
        status, body = self.topo.pdc.call("POST", "/admin/delegate", {"coordinator": self.topo.node(step["coordinator"]).url})
        return self._status(status, body)

    def _do_sync(self, step):
        status, body = self.topo.node(step["coordinator"]).call("POST", "/admin/sync")
        return self._status(status, body)

    def _do_issue(self, step):
        status, body = self._issuer(step.get("issuer", "pdc")).call("POST", "/cap/request", {
            "subject": self._vid(step["subject"]), "object": self._vid(step["object"]),
            "access_right": _rights(step["rights"])})
        if status == 200 and step.get("save_as"):
            self.tokens[step["save_as"]] = body
        return self._status(status, body)

    def _do_request(self, step):
        provider = self.topo.node(step["provider"])
        headers = {}
        if step.get("token") is not None:
            headers[TOKEN_HEADER] = tamper_token(self.tokens[step["token"]], step.get("tamper", "none"))
        _, before = provider.call("GET", "/metrics/stages")
        status, body = provider.call(step.get("method", "GET"), step.get("path", "/data"), None, headers)
        _, after = provider.call("GET", "/metrics/stages")
        delta = {s: after["invocations"][s] - before["invocations"][s] for s in STAGE_NAMES}
        observed: dict[str, Any] = {"status": status, "invocations": delta}
        if isinstance(body, dict) and body.get("decision") == "deny":
            observed["stage"] = body.get("stage")
        want = expected_invocations(status, observed.get("stage"))
        if status in (200, 403):
            observed["short_circuit"] = want == delta
        elif status == 401:
            observed["short_circuit"] = not any(delta.values())
        return observed

    def _do_revoke(self, step):
        status, body = self.topo.pdc.call("POST", "/cap/revoke", {
            "subject": self._vid(step["subject"]), "ttl": int(step.get("ttl", 3600))})
        out = self._status(status, body)
        if status == 200:
            out["failures"] = _count_failures(body.get("delivery", {}))
        return out

    def _do_revoke_delegation(self, step):
        payload: dict[str, Any] = {"old_vid": self.topo.node(step["coordinator"]).vid}
        if step.get("replacement"):
            payload["replacement"] = self.topo.node(step["replacement"]).url
        status, body = self.topo.pdc.call("POST", "/delegation/revoke", payload)
        return self._status(status, body)

    def _do_advance_clock(self, step):
        self.topo.advance_clock(int(step["seconds"]))
        return {"status": 200}

    def _do_fault(self, step):
        status, body = self.topo.node(step["provider"]).call("POST", "/_admin/fault", {"down": bool(step["down"])})
        return self._status(status, body)


def _count_failures(delivery: dict[str, Any]) -> int:
    n = 0
    for report in delivery.values():
        if isinstance(report, dict):
            n += sum(1 for r in report.values() if r != "ok")
        else:
            n += 1
    return n


def run_scenario(scenario: Scenario | str, *, log_level: str = "WARNING",
                 runner_factory: Callable[..., ScenarioRunner] = ScenarioRunner) -> ScenarioResult:
    if isinstance(scenario, str):
        scenario = Scenario.load(scenario)
    return runner_factory(scenario, log_level=log_level).run()
