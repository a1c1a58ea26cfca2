"""Launch PDC, coordinators and providers as child processes on loopback."""

from __future__ import annotations

import json
import logging
import os
import queue
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..services import READY_PREFIX
from ..web import Client, post_once

log = logging.getLogger(__name__)


class TopologyError(RuntimeError):
    pass


@dataclass
class Node:
    kind: str
    name: str
    url: str
    vid: str
    public_key: str
    process: subprocess.Popen
    log_path: Path
    _client: Client | None = field(default=None, repr=False)

    @property
    def address(self) -> str:
        return self.url.split("://", 1)[1]

    @property
    def client(self) -> Client:
        if self._client is None:
            self._client = Client(self.url)
        return self._client

    def call(self, method: str, path: str, payload: Any = None, headers: dict[str, str] | None = None):
        return self.client.call(method, path, payload, headers)

    def tail_log(self, lines: int = 20) -> str:
        try:
            return "\n".join(self.log_path.read_text().splitlines()[-lines:])
        except OSError:
            return ""


def _read_ready(proc: subprocess.Popen, timeout: float) -> dict[str, Any]:
    out: queue.Queue[str | None] = queue.Queue()

    def pump() -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            out.put(line)
            if line.startswith(READY_PREFIX):
                return
        out.put(None)

    threading.Thread(target=pump, daemon=True).start()
    deadline = time.monotonic() + timeout
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TopologyError("timed out waiting for service readiness")
        try:
            line = out.get(timeout=remaining)
        except queue.Empty:
            continue
        if line is None:
            raise TopologyError(f"service exited with code {proc.wait()} before becoming ready")
        if line.startswith(READY_PREFIX):
            return json.loads(line[len(READY_PREFIX):])


class Topology:
    """A set of service processes sharing one scratch directory.

    Use as a context manager; :meth:`stop` always terminates every child.
    """

    def __init__(self, workdir: str | os.PathLike | None = None, *, log_level: str = "WARNING",
                 start_timeout: float = 20.0):
        self._tmp = tempfile.TemporaryDirectory(prefix="fedcap-") if workdir is None else None
        self.workdir = Path(workdir or self._tmp.name)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.log_level = log_level
        self.start_timeout = start_timeout
        self.nodes: dict[str, Node] = {}
        self.pdc: Node | None = None

    def __enter__(self) -> "Topology":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.stop()

    def _launch(self, kind: str, name: str, config: dict[str, Any], extra: list[str] | None = None) -> Node:
        if name in self.nodes:
            raise TopologyError(f"duplicate node name {name!r}")
        cfg_path = self.workdir / f"{name}.json"
        cfg_path.write_text(json.dumps(config))
        log_path = self.workdir / f"{name}.log"
        cmd = [sys.executable, "-m", "fedcap.services", kind, "--listen", "127.0.0.1:0",
               "--config", str(cfg_path), "--log-level", self.log_level, *(extra or [])]
        env = dict(os.environ, PYTHONUNBUFFERED="1")
        with log_path.open("w") as err:
            proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=err, text=True, env=env)
        try:
            info = _read_ready(proc, self.start_timeout)
        except TopologyError as exc:
            proc.kill()
            proc.wait()
            raise TopologyError(f"{kind} {name!r}: {exc}\n{log_path.read_text()[-2000:]}") from exc
        node = Node(kind, name, info["url"], info["vid"], info["public_key"], proc, log_path)
        self.nodes[name] = node
        log.info("started %s %s at %s", kind, name, node.url)
        return node

    def start_pdc(self, name: str = "pdc", **config: Any) -> Node:
        if self.pdc is not None:
            raise TopologyError("topology already has a PDC")
        config.setdefault("store_dir", str(self.workdir / f"{name}-store"))
        self.pdc = self._launch("pdc", name, config)
        return self.pdc

    def _require_pdc(self) -> Node:
        if self.pdc is None:
            raise TopologyError("start the PDC first")
        return self.pdc

    def start_coordinator(self, name: str, domain_id: str = "domain-1", **config: Any) -> Node:
        pdc = self._require_pdc()
        config = {"pdc_url": pdc.url, "pdc_public_key": pdc.public_key, "domain_id": domain_id,
                  "name": name, "sync_period": 0, **config}
        return self._launch("coordinator", name, config)

    def start_provider(self, name: str, coordinators: list[str] = (), domain_id: str = "domain-1",
                       **config: Any) -> Node:
        pdc = self._require_pdc()
        config = {"pdc_url": pdc.url, "root_key": pdc.public_key, "name": name, "domain_id": domain_id,
                  "coordinators": [self.nodes[c].url for c in coordinators], **config}
        return self._launch("provider", name, config)

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise TopologyError(f"unknown node {name!r}") from None

    def advance_clock(self, seconds: int) -> None:
        """Move every live service's clock forward together."""
        for node in self.nodes.values():
            if node.process.poll() is None:
                status, out = post_once(node.url, "/_admin/clock", {"advance": int(seconds)})
                if status != 200:
                    raise TopologyError(f"clock advance failed on {node.name}: {out}")

    def stop(self) -> None:
        for node in self.nodes.values():
            if node._client is not None:
                node._client.close()
            if node.process.poll() is None:
                node.process.terminate()
        for node in self.nodes.values():
            try:
                node.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                node.process.kill()
                node.process.wait()
            if node.process.stdout is not None:
                node.process.stdout.close()
        self.nodes.clear()
        self.pdc = None
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None
