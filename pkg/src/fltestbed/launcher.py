"""Spawns one application program as a set of independent node processes.

Every node gets the launch spec's fixed argument list plus its own identity flags
(--no-nodes, --node-id, --fl-srv-id, --base-port). The launcher waits for
all nodes to exit, enforcing one shared deadline; survivors past the
deadline are terminated (SIGTERM, then SIGKILL after a 2 s grace period),
so a launch always returns within per_node_timeout plus the grace window.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import time
from dataclasses import dataclass

from .errors import ConfigError, LaunchError

TERMINATION_GRACE = 2.0


@dataclass(frozen=True)
class LaunchSpec:
    program: tuple[str, ...]  # executable plus fixed arguments
    no_nodes: int
    fl_srv_id: int
    base_port: int
    per_node_timeout: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "program", tuple(self.program))
        if not self.program:
            raise ConfigError("program must name an executable")
        if self.no_nodes < 2:
            raise ConfigError(f"a federation needs at least 2 nodes, got {self.no_nodes}")
        if not (0 <= self.fl_srv_id < self.no_nodes):
            raise ConfigError(f"fl_srv_id {self.fl_srv_id} out of range [0, {self.no_nodes})")
        if self.per_node_timeout <= 0:
            raise ConfigError("per_node_timeout must be positive")


@dataclass
class NodeOutcome:
    node_id: int
    exit_code: int | None
    stdout: str
    stderr: str
    wall_time: float
    timed_out: bool = False


@dataclass
class LaunchResult:
    per_node: list[NodeOutcome]
    overall_success: bool

    def outcome(self, node_id: int) -> NodeOutcome:
        return self.per_node[node_id]


def _check_executable(program: tuple[str, ...]) -> None:
    exe = program[0]
    if os.path.sep in exe or (os.path.altsep and os.path.altsep in exe):
        ok = os.path.isfile(exe) and os.access(exe, os.X_OK)
    else:
        ok = shutil.which(exe) is not None
    if not ok:
        raise LaunchError(f"program not found or not executable: {exe}")


def node_argv(spec: LaunchSpec, node_id: int) -> list[str]:
    """Full argument vector for one node process."""
    return list(spec.program) + [
        "--no-nodes", str(spec.no_nodes),
        "--node-id", str(node_id),
        "--fl-srv-id", str(spec.fl_srv_id),
        "--base-port", str(spec.base_port),
    ]


def launch_all(spec: LaunchSpec) -> LaunchResult:
    """Run the whole federation; returns per-node exit status and output.

    Timeouts are reported in the result (overall_success False), not raised;
    failing to spawn at all raises LaunchError.
    """
    _check_executable(spec.program)

    procs: list[subprocess.Popen] = []
    started = time.monotonic()
    try:
        for node_id in range(spec.no_nodes):
            procs.append(
                subprocess.Popen(
                    node_argv(spec, node_id),
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                )
            )
    except OSError as e:
        for p in procs:
            p.kill()
        for p in procs:
            p.wait()
        raise LaunchError(f"failed to spawn node {len(procs)}: {e}") from e

    deadline = started + spec.per_node_timeout
    outcomes: list[NodeOutcome | None] = [None] * spec.no_nodes
    hung: list[int] = []

    for node_id, proc in enumerate(procs):
        remaining = deadline - time.monotonic()
        try:
            stdout, stderr = proc.communicate(timeout=max(0.0, remaining))
        except subprocess.TimeoutExpired:
            # communicate() raises on an expired deadline even when the
            # process already exited; only a still-running node is hung
            if proc.poll() is None:
                hung.append(node_id)
                continue
            stdout, stderr = proc.communicate()
        outcomes[node_id] = NodeOutcome(
            node_id=node_id,
            exit_code=proc.returncode,
            stdout=stdout,
            stderr=stderr,
            wall_time=time.monotonic() - started,
        )

    if hung:
        for node_id in hung:
            procs[node_id].terminate()
        grace = time.monotonic() + TERMINATION_GRACE
        for node_id in hung:
            try:
                procs[node_id].wait(timeout=max(0.0, grace - time.monotonic()))
            except subprocess.TimeoutExpired:
                procs[node_id].kill()
        for node_id in hung:
            stdout, stderr = procs[node_id].communicate()
            outcomes[node_id] = NodeOutcome(
                node_id=node_id,
                exit_code=procs[node_id].returncode,
                stdout=stdout,
                stderr=stderr,
                wall_time=time.monotonic() - started,
                timed_out=True,
            )

    per_node = [o for o in outcomes if o is not None]
    overall = not hung and all(o.exit_code == 0 for o in per_node)
    return LaunchResult(per_node=per_node, overall_success=overall)
