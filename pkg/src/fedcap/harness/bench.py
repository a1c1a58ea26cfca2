"""Latency experiment: bare handler versus full authorization pipeline.

Each run sends ``requests_per_run`` identical GETs per mode over one
keep-alive connection and records the mean client round trip.  For the
pipeline mode the provider's ``Server-Timing`` header supplies parse time and
per-stage authorization time for the same requests.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .. import wire
from ..authz import PIPELINE
from ..provider import TOKEN_HEADER
from ..web import Client
from .scenario import Scenario, ScenarioRunner
from .topology import Topology

MODES = ("baseline", "fedcac")
STAGES = [s.value for s in PIPELINE]

# Published reference figures (Raspberry Pi testbed); printed, never asserted.
REFERENCE = {
    "baseline_ms": 31.0,
    "fedcac_ms": 42.0,
    "authorization_ms": 7.823,
    "signature_fraction": 0.75,
}

CSV_COLUMNS = ["run", "baseline_rtt_ms", "fedcac_rtt_ms", "parse_ms", "authorization_ms"] + [
    f"{s}_ms" for s in STAGES
]


class BenchError(RuntimeError):
    pass


@dataclass
class RunSample:
    run: int
    mode: str
    rtt_ms: float
    parse_ms: float = 0.0
    authorization_ms: float = 0.0
    stages_ms: dict[str, float] = field(default_factory=dict)


@dataclass
class Summary:
    mean: float
    stddev: float | None  # undefined for a single run

    @classmethod
    def of(cls, values: list[float]) -> "Summary":
        return cls(statistics.fmean(values), statistics.stdev(values) if len(values) > 1 else None)


@dataclass
class LatencyReport:
    runs: int
    requests_per_run: int
    modes: list[str]
    samples: list[RunSample]
    artificial_delay_ms: float = 0.0
    payload_identical: bool | None = None
    reference: dict[str, float] = field(default_factory=lambda: dict(REFERENCE))

    def __post_init__(self) -> None:
        for mode in self.modes:
            n = len(self.of_mode(mode))
            if n != self.runs:
                raise BenchError(f"{mode}: {n} samples for {self.runs} runs")

    def of_mode(self, mode: str) -> list[RunSample]:
        return [s for s in self.samples if s.mode == mode]

    def rtt(self, mode: str) -> Summary | None:
        rows = self.of_mode(mode)
        return Summary.of([s.rtt_ms for s in rows]) if rows else None

    def _fedcac(self, attr: str) -> Summary | None:
        rows = self.of_mode("fedcac")
        return Summary.of([getattr(s, attr) for s in rows]) if rows else None

    @property
    def parse(self) -> Summary | None:
        return self._fedcac("parse_ms")

    @property
    def authorization(self) -> Summary | None:
        return self._fedcac("authorization_ms")

    def stage_means(self) -> dict[str, float]:
        rows = self.of_mode("fedcac")
        return {s: statistics.fmean(r.stages_ms.get(s, 0.0) for r in rows) for s in STAGES} if rows else {}

    @property
    def overhead_ms(self) -> float | None:
        """mean(fedcac) - mean(baseline) round trip."""
        base, full = self.rtt("baseline"), self.rtt("fedcac")
        return full.mean - base.mean if base and full else None

    @property
    def signature_fraction(self) -> float | None:
        rows = self.of_mode("fedcac")
        total = sum(r.authorization_ms for r in rows)
        return sum(r.stages_ms.get("signature", 0.0) for r in rows) / total if total else None

    def to_json(self) -> dict[str, Any]:
        def summ(s: Summary | None):
            return asdict(s) if s else None

        return {
            "runs": self.runs,
            "requests_per_run": self.requests_per_run,
            "modes": list(self.modes),
            "artificial_delay_ms": self.artificial_delay_ms,
            "payload_identical": self.payload_identical,
            "samples": [asdict(s) for s in self.samples],
            "summary": {
                "rtt_ms": {m: summ(self.rtt(m)) for m in self.modes},
                "parse_ms": summ(self.parse),
                "authorization_ms": summ(self.authorization),
                "stage_mean_ms": self.stage_means(),
                "overhead_ms": self.overhead_ms,
                "signature_fraction": self.signature_fraction,
            },
            "reference": dict(self.reference),
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "LatencyReport":
        return cls(
            runs=d["runs"],
            requests_per_run=d["requests_per_run"],
            modes=list(d["modes"]),
            samples=[RunSample(**s) for s in d["samples"]],
            artificial_delay_ms=d.get("artificial_delay_ms", 0.0),
            payload_identical=d.get("payload_identical"),
            reference=dict(d.get("reference", REFERENCE)),
        )


def parse_server_timing(header: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in header.split(","):
        name, _, params = part.strip().partition(";")
        for p in params.split(";"):
            k, _, v = p.strip().partition("=")
            if k == "dur":
                out[name] = float(v)
    return out


BENCH_SETUP = {
    "name": "bench-setup",
    "topology": {"providers": [{"name": "p1", "expose_baseline": True,
                                "resources": {"/data": {"reading": 21.5, "unit": "C"}}}]},
    "steps": [
        {"action": "register", "actor": "client", "attributes": {"role": "reader"}},
        {"action": "publish", "object": "p1", "rights": [{"action": "GET", "resource": "/data"}]},
        {"action": "rule", "subject": "client", "object": "p1",
         "granted": [{"action": "GET", "resource": "/data"}], "validity": 86400},
        {"action": "issue", "subject": "client", "object": "p1",
         "rights": [{"action": "GET", "resource": "/data"}], "save_as": "token"},
    ],
}


def _measure(client: Client, path: str, headers: dict[str, str], count: int, mode: str, run: int
             ) -> tuple[RunSample, bytes]:
    rtts: list[float] = []
    timings: list[dict[str, float]] = []
    payload = b""
    for _ in range(count):
        t0 = time.perf_counter()
        status, body, hdrs = client.raw("GET", path, None, headers)
        rtts.append((time.perf_counter() - t0) * 1000.0)
        if status != 200:
            raise BenchError(f"{mode} request failed with {status}: {body[:200]!r}")
        payload = body
        if mode == "fedcac":
            timings.append(parse_server_timing(hdrs.get("Server-Timing", "")))
    sample = RunSample(run, mode, statistics.fmean(rtts))
    if timings:
        sample.stages_ms = {s: statistics.fmean(t.get(s, 0.0) for t in timings) for s in STAGES}
        sample.parse_ms = statistics.fmean(t.get("parse", 0.0) for t in timings)
        sample.authorization_ms = sum(sample.stages_ms.values())
    return sample, payload


def run_latency_experiment(
    runs: int = 50,
    modes: Iterable[str] = MODES,
    *,
    requests_per_run: int = 20,
    warmup: int = 20,
    artificial_delay_ms: float = 0.0,
    log_level: str = "WARNING",
) -> LatencyReport:
    if runs < 1:
        raise ValueError("runs must be at least 1")
    modes = [m for m in MODES if m in set(modes)]
    if not modes:
        raise ValueError(f"modes must be drawn from {MODES}")
    setup = json.loads(json.dumps(BENCH_SETUP))
    setup["topology"]["providers"][0]["artificial_delay_ms"] = artificial_delay_ms
    scenario = Scenario.from_json(setup)
    runner = ScenarioRunner(scenario, log_level=log_level)
    with Topology(log_level=log_level) as topo:
        runner.topo = topo
        runner.launch(topo)
        for i, step in enumerate(scenario.steps):
            res = runner.run_step(i, step)
            if not res.passed:
                raise BenchError(f"setup step {step['action']} failed: {res.detail}")
        token = runner.tokens["token"]
        headers = {TOKEN_HEADER: wire.dumps(token)}
        provider = topo.node("p1")
        paths = {"baseline": ("/_baseline/data", {}), "fedcac": ("/data", headers)}
        client = Client(provider.url)
        try:
            for mode in modes:
                _measure(client, paths[mode][0], paths[mode][1], warmup, mode, -1)
            provider.call("POST", "/metrics/reset")
            samples: list[RunSample] = []
            payloads: dict[str, bytes] = {}
            for run in range(runs):
                for mode in modes:
                    sample, payloads[mode] = _measure(client, *paths[mode], requests_per_run, mode, run)
                    samples.append(sample)
        finally:
            client.close()
    identical = payloads["baseline"] == payloads["fedcac"] if len(payloads) == 2 else None
    return LatencyReport(runs, requests_per_run, modes, samples, artificial_delay_ms, identical)


def _fmt(x: float | None, digits: int = 3) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def render_text(report: LatencyReport) -> str:
    ref = report.reference
    lines = [
        f"latency report: {report.runs} runs x {report.requests_per_run} requests per mode"
        + (f", injected delay {report.artificial_delay_ms:g} ms" if report.artificial_delay_ms else ""),
        f"{'mode':<10}{'mean_ms':>12}{'stddev_ms':>12}{'reference_ms':>14}",
    ]
    for mode in report.modes:
        s = report.rtt(mode)
        stddev = "undefined" if s.stddev is None else _fmt(s.stddev)
        lines.append(f"{mode:<10}{_fmt(s.mean):>12}{stddev:>12}{_fmt(ref[f'{mode}_ms'], 3):>14}")
    ref_overhead = ref["fedcac_ms"] - ref["baseline_ms"]
    lines.append(f"pipeline overhead: {_fmt(report.overhead_ms)} ms (reference {ref_overhead:g} ms)")
    if report.authorization:
        lines.append(f"parse time: {_fmt(report.parse.mean, 4)} ms mean")
        lines.append(
            f"authorization time: {_fmt(report.authorization.mean, 4)} ms mean "
            f"(reference {ref['authorization_ms']} ms)"
        )
        frac = report.signature_fraction
        lines.append(
            f"signature fraction: {_fmt(None if frac is None else frac * 100, 1)}% of authorization "
            f"(reference {ref['signature_fraction'] * 100:g}%)"
        )
        lines.append("stage means (ms): " + ", ".join(f"{k}={v:.4f}" for k, v in report.stage_means().items()))
    if report.payload_identical is not None:
        lines.append(f"baseline and pipeline payloads identical: {report.payload_identical}")
    return "\n".join(lines) + "\n"


def render_csv(report: LatencyReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    by_run: dict[int, dict[str, RunSample]] = {}
    for s in report.samples:
        by_run.setdefault(s.run, {})[s.mode] = s
    for run in sorted(by_run):
        row = by_run[run]
        base, full = row.get("baseline"), row.get("fedcac")
        writer.writerow(
            [run, f"{base.rtt_ms:.6f}" if base else "", f"{full.rtt_ms:.6f}" if full else ""]
            + ([f"{full.parse_ms:.6f}", f"{full.authorization_ms:.6f}"]
               + [f"{full.stages_ms.get(s, 0.0):.6f}" for s in STAGES] if full else [""] * (2 + len(STAGES)))
        )
    return buf.getvalue()


def render_json(report: LatencyReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


RENDERERS = {"text": render_text, "csv": render_csv, "json": render_json}


def emit_report(report: LatencyReport, fmt: str = "text", path: str | Path | None = None) -> str:
    """Render ``report``; also write it to ``path`` when given."""
    try:
        text = RENDERERS[fmt](report)
    except KeyError:
        raise ValueError(f"unknown report format {fmt!r}") from None
    if path is not None:
        Path(path).write_text(text)
    return text
