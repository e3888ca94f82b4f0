"""Verification harness: run an example, compare every node to the oracle.

A run executes one example either in-process (engine threads over the
loopback hub) or as real node processes under the launcher, then replays
the matching sequential simulator on the same inputs and reports per-node
agreement at the default tolerances. fuzz_verify hammers the engines with
randomized federations against the simulators; a fixed seed reproduces the
exact trial sequence.
"""

from __future__ import annotations

import json
import random
import re
import sys
import threading
import time
from dataclasses import dataclass, field

from .engine import CallbackPair, FlConfig, FlInstance
from .errors import ConfigError, FlError
from .examples import (
    CENTRALIZED,
    DECENTRALIZED,
    SCALAR,
    SINGLETON,
    ExampleSpec,
    dataset_for,
    ex1_client,
    ex1_server,
    ex2_client,
    ex2_server,
    get_example,
    sim_centralized,
    sim_decentralized,
)
from .launcher import LaunchSpec, launch_all
from .transport import LoopbackHub
from .values import Value, approx_eq, dumps, format_number, loads

MODE_INPROC = "inproc"
MODE_PROC = "proc"

ENGINE_CENT = "cent"
ENGINE_DECENT = "decent"

_RESULT_LINE = re.compile(r"^RESULT (\d+) (\S+)$", re.MULTILINE)


@dataclass
class NodeVerdict:
    node_id: int
    distributed: Value
    oracle: Value
    match: bool
    diagnostic: str | None = None


@dataclass
class RunReport:
    example_id: int
    mode: str
    no_nodes: int
    no_iters: int
    per_node: list[NodeVerdict]
    overall_match: bool
    wall_time: float

    def to_mapping(self) -> dict:
        return {
            "exampleId": self.example_id,
            "mode": self.mode,
            "noNodes": self.no_nodes,
            "noIters": self.no_iters,
            "perNode": [
                {
                    "nodeId": v.node_id,
                    "distributedResult": v.distributed,
                    "oracleResult": v.oracle,
                    "match": v.match,
                    "diagnostic": v.diagnostic,
                }
                for v in self.per_node
            ],
            "overallMatch": self.overall_match,
            "wallTime": self.wall_time,
        }

    def to_text(self) -> str:
        return canonical_text(self.to_mapping())


def canonical_text(obj) -> str:
    """Deterministic one-line rendering: dicts keep insertion order, numbers
    use the canonical payload notation."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, float)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_text(x) for x in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{canonical_text(v)}" for k, v in obj.items()) + "}"
    raise TypeError(f"cannot render {type(obj).__name__} canonically")


def run_federation_inproc(
    no_nodes: int,
    fl_srv_id: int,
    engine: str,
    callbacks: CallbackPair | list[CallbackPair],
    ldata_arr: list[Value],
    pdata_arr: list[Value] | None = None,
    no_iters: int = 1,
    recv_timeout: float = 30.0,
    fault: tuple[int, str] | None = None,
) -> list[Value | Exception]:
    """Drive one engine per node on threads over a loopback hub.

    Returns each node's final data, or the exception that node raised.
    `callbacks` may be a single pair shared by all nodes or one pair per node
    (used by recording/probing tests). `fault` is (node_id, fault_point).
    """
    if pdata_arr is None:
        pdata_arr = [None] * no_nodes
    pairs = callbacks if isinstance(callbacks, list) else [callbacks] * no_nodes
    if len(pairs) != no_nodes or len(ldata_arr) != no_nodes or len(pdata_arr) != no_nodes:
        raise ConfigError("callbacks/ldata/pdata lists must have one entry per node")

    hub = LoopbackHub(no_nodes, recv_timeout=recv_timeout)
    results: list[Value | Exception] = [None] * no_nodes

    def worker(node_id: int) -> None:
        fault_point = fault[1] if fault is not None and fault[0] == node_id else None
        try:
            cfg = FlConfig(
                no_nodes=no_nodes,
                node_id=node_id,
                fl_srv_id=fl_srv_id,
                no_iters=no_iters,
                recv_timeout=recv_timeout,
            )
            inst = FlInstance(cfg, transport=hub.transport(node_id), fault_after_phase=fault_point)
            if engine == CENTRALIZED:
                results[node_id] = inst.fl_centralized(
                    pairs[node_id], ldata_arr[node_id], pdata_arr[node_id]
                )
            else:
                results[node_id] = inst.fl_decentralized(
                    pairs[node_id], ldata_arr[node_id], pdata_arr[node_id]
                )
            inst.shutdown()
        except Exception as e:
            results[node_id] = e

    threads = [
        threading.Thread(target=worker, args=(i,), name=f"node-{i}", daemon=True)
        for i in range(no_nodes)
    ]
    for t in threads:
        t.start()
    deadline = time.monotonic() + recv_timeout * no_iters * 3 + 10.0
    for t in threads:
        t.join(max(0.0, deadline - time.monotonic()))
    for i, t in enumerate(threads):
        if t.is_alive():
            results[i] = FlError(f"node {i} engine thread did not finish")
    return results


def effective_fl_srv_id(spec: ExampleSpec, no_nodes: int) -> int:
    """The example's canonical server index, clamped into range for small runs."""
    return spec.default_fl_srv_id if spec.default_fl_srv_id < no_nodes else no_nodes - 1


def _oracle_results(
    spec: ExampleSpec, ldata_arr: list[Value], fl_srv_id: int, no_iters: int
) -> list[Value]:
    pdata_arr: list[Value] = [None] * len(ldata_arr)
    if spec.engine == CENTRALIZED:
        return sim_centralized(ldata_arr, pdata_arr, fl_srv_id, spec.callbacks, no_iters)
    return sim_decentralized(ldata_arr, pdata_arr, spec.callbacks, no_iters)


def _node_program(
    example_id: int,
    no_iters: int,
    seed: int | None,
    recv_timeout: float | None,
    connect_timeout: float | None,
    kill_node: int | None,
    after_phase: str | None,
) -> list[str]:
    argv = [sys.executable, "-m", "fltestbed", "node", "--example", str(example_id),
            "--iters", str(no_iters)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if recv_timeout is not None:
        argv += ["--recv-timeout", str(recv_timeout)]
    if connect_timeout is not None:
        argv += ["--connect-timeout", str(connect_timeout)]
    if kill_node is not None:
        argv += ["--fault-node", str(kill_node), "--after-phase", str(after_phase)]
    return argv


def run_and_verify(
    example_id: int,
    mode: str,
    no_nodes: int = 3,
    no_iters: int = 1,
    base_port: int = 6000,
    seed: int | None = None,
    kill_node: int | None = None,
    after_phase: str | None = None,
    recv_timeout: float | None = None,
    connect_timeout: float | None = None,
    per_node_timeout: float = 60.0,
) -> RunReport:
    """Execute one example in the requested mode and verify it against its oracle."""
    if mode not in (MODE_INPROC, MODE_PROC):
        raise ConfigError(f"mode must be '{MODE_INPROC}' or '{MODE_PROC}', got {mode!r}")
    if (kill_node is None) != (after_phase is None):
        raise ConfigError("kill_node and after_phase must be given together")
    if kill_node is not None and not (0 <= kill_node < no_nodes):
        raise ConfigError(f"kill_node {kill_node} out of range [0, {no_nodes})")
    spec = get_example(example_id)
    ldata_arr = dataset_for(spec, no_nodes, seed)
    fl_srv_id = effective_fl_srv_id(spec, no_nodes)
    oracle = _oracle_results(spec, ldata_arr, fl_srv_id, no_iters)

    started = time.monotonic()
    if mode == MODE_INPROC:
        distributed = _distributed_inproc(
            spec, fl_srv_id, ldata_arr, no_iters, recv_timeout, kill_node, after_phase
        )
    else:
        distributed = _distributed_proc(
            spec, fl_srv_id, no_nodes, no_iters, base_port, seed, recv_timeout,
            connect_timeout, kill_node, after_phase, per_node_timeout,
        )
    wall_time = time.monotonic() - started

    per_node = []
    for node_id in range(no_nodes):
        result, diagnostic = distributed[node_id]
        match = diagnostic is None and approx_eq(result, oracle[node_id])
        per_node.append(
            NodeVerdict(
                node_id=node_id,
                distributed=result,
                oracle=oracle[node_id],
                match=match,
                diagnostic=diagnostic,
            )
        )
    return RunReport(
        example_id=example_id,
        mode=mode,
        no_nodes=no_nodes,
        no_iters=no_iters,
        per_node=per_node,
        overall_match=all(v.match for v in per_node),
        wall_time=wall_time,
    )


def _distributed_inproc(
    spec: ExampleSpec,
    fl_srv_id: int,
    ldata_arr: list[Value],
    no_iters: int,
    recv_timeout: float | None,
    kill_node: int | None,
    after_phase: str | None,
) -> list[tuple[Value, str | None]]:
    raw = run_federation_inproc(
        no_nodes=len(ldata_arr),
        fl_srv_id=fl_srv_id,
        engine=spec.engine,
        callbacks=spec.callbacks,
        ldata_arr=ldata_arr,
        no_iters=no_iters,
        recv_timeout=recv_timeout if recv_timeout is not None else 30.0,
        fault=(kill_node, after_phase) if kill_node is not None else None,
    )
    out = []
    for r in raw:
        if isinstance(r, Exception):
            out.append((None, f"{type(r).__name__}: {r}"))
        else:
            out.append((r, None))
    return out


def _distributed_proc(
    spec: ExampleSpec,
    fl_srv_id: int,
    no_nodes: int,
    no_iters: int,
    base_port: int,
    seed: int | None,
    recv_timeout: float | None,
    connect_timeout: float | None,
    kill_node: int | None,
    after_phase: str | None,
    per_node_timeout: float,
) -> list[tuple[Value, str | None]]:
    program = _node_program(
        spec.example_id, no_iters, seed, recv_timeout, connect_timeout, kill_node, after_phase
    )
    launch = launch_all(
        LaunchSpec(
            program=tuple(program),
            no_nodes=no_nodes,
            fl_srv_id=fl_srv_id,
            base_port=base_port,
            per_node_timeout=per_node_timeout,
        )
    )
    out: list[tuple[Value, str | None]] = []
    for node_id in range(no_nodes):
        o = launch.outcome(node_id)
        if o.timed_out:
            out.append((None, f"node {node_id} exceeded the launch deadline and was terminated"))
            continue
        if o.exit_code != 0:
            detail = o.stderr.strip().splitlines()
            out.append(
                (None, f"node {node_id} exited {o.exit_code}: {detail[-1] if detail else 'no diagnostic'}")
            )
            continue
        found = None
        for m in _RESULT_LINE.finditer(o.stdout):
            if int(m.group(1)) == node_id:
                found = m.group(2)
        if found is None:
            out.append((None, f"node {node_id} printed no RESULT line"))
            continue
        try:
            out.append((loads(found), None))
        except FlError as e:
            out.append((None, f"node {node_id} RESULT payload unreadable: {e}"))
    return out


# --- randomized engine-vs-simulator fuzzing ---------------------------------


def _affine_client(local_data, private_data, msg):
    """Deterministic non-symmetric update on single-element lists."""
    return [(2.0 * local_data[0] + msg[0]) / 3.0]


def _weighted_server(private_data, msgs):
    """Position-weighted mean; sensitive to message ordering on purpose."""
    total = 0.0
    weight = 0.0
    for idx, lst in enumerate(msgs):
        total += (idx + 1) * lst[0]
        weight += idx + 1
    return [total / weight]


_FUZZ_SUITES: list[tuple[str, CallbackPair, str]] = [
    ("indicator-mean", CallbackPair(ex1_client, ex1_server), SCALAR),
    ("pairwise-mean", CallbackPair(ex2_client, ex2_server), SINGLETON),
    ("affine-weighted", CallbackPair(_affine_client, _weighted_server), SINGLETON),
]


@dataclass
class FuzzSummary:
    engine: str
    trials: int
    passed: int
    failed: int
    ordering_violations: int
    seed: int
    failures: list[dict] = field(default_factory=list)

    def to_mapping(self) -> dict:
        return {
            "engine": self.engine,
            "trials": self.trials,
            "passed": self.passed,
            "failed": self.failed,
            "orderingViolations": self.ordering_violations,
            "seed": self.seed,
            "failures": self.failures,
        }

    def to_text(self) -> str:
        return canonical_text(self.to_mapping())

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.ordering_violations == 0


def _ordering_probe(no_nodes: int, fl_srv_id: int, engine: str, no_iters: int) -> list[list[float]]:
    """Run a federation whose client replies carry the sender's node id.

    Returns, per aggregating node, the id sequence its server callback saw;
    the caller checks these against the ascending peer lists.
    """
    observed: list[list[float]] = [[] for _ in range(no_nodes)]

    def make_pair(node_id: int) -> CallbackPair:
        def client(local_data, private_data, msg):
            return [float(private_data)]

        def server(private_data, msgs):
            observed[node_id] = [m[0] for m in msgs]
            return [0.0]

        return CallbackPair(client, server)

    pairs = [make_pair(i) for i in range(no_nodes)]
    ldata_arr: list[Value] = [[float(i)] for i in range(no_nodes)]
    pdata_arr: list[Value] = [float(i) for i in range(no_nodes)]
    results = run_federation_inproc(
        no_nodes, fl_srv_id, engine, pairs, ldata_arr, pdata_arr, no_iters=no_iters
    )
    for r in results:
        if isinstance(r, Exception):
            raise r
    return observed


def fuzz_verify(engine: str, trials: int, seed: int) -> FuzzSummary:
    """Randomized federations through the in-process engine vs. the simulator."""
    if engine not in (ENGINE_CENT, ENGINE_DECENT):
        raise ConfigError(f"engine must be '{ENGINE_CENT}' or '{ENGINE_DECENT}', got {engine!r}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    rng = random.Random(seed)
    engine_name = CENTRALIZED if engine == ENGINE_CENT else DECENTRALIZED

    passed = failed = ordering_violations = 0
    failures: list[dict] = []
    for trial in range(trials):
        no_nodes = rng.randint(2, 8)
        no_iters = rng.randint(1, 3)
        fl_srv_id = rng.randrange(no_nodes)
        suite_name, callbacks, layout = _FUZZ_SUITES[rng.randrange(len(_FUZZ_SUITES))]
        readings = [rng.uniform(-1e6, 1e6) for _ in range(no_nodes)]
        ldata_arr: list[Value] = readings if layout == SCALAR else [[x] for x in readings]
        pdata_arr: list[Value] = [None] * no_nodes

        if engine_name == CENTRALIZED:
            expected = sim_centralized(ldata_arr, pdata_arr, fl_srv_id, callbacks, no_iters)
        else:
            expected = sim_decentralized(ldata_arr, pdata_arr, callbacks, no_iters)
        actual = run_federation_inproc(
            no_nodes, fl_srv_id, engine_name, callbacks, ldata_arr, pdata_arr, no_iters
        )

        problems = []
        for i, r in enumerate(actual):
            if isinstance(r, Exception):
                problems.append(f"node {i} raised {type(r).__name__}: {r}")
            elif not approx_eq(r, expected[i]):
                problems.append(f"node {i} got {dumps(r)}, oracle {dumps(expected[i])}")

        observed = _ordering_probe(no_nodes, fl_srv_id, engine_name, no_iters)
        if engine_name == CENTRALIZED:
            want = [float(i) for i in range(no_nodes) if i != fl_srv_id]
            if observed[fl_srv_id] != want:
                ordering_violations += 1
                problems.append(f"server saw order {observed[fl_srv_id]}, want {want}")
        else:
            for i in range(no_nodes):
                want = [float(j) for j in range(no_nodes) if j != i]
                if observed[i] != want:
                    ordering_violations += 1
                    problems.append(f"node {i} saw order {observed[i]}, want {want}")
                    break

        if problems:
            failed += 1
            failures.append(
                {
                    "trial": trial,
                    "suite": suite_name,
                    "noNodes": no_nodes,
                    "noIters": no_iters,
                    "flSrvId": fl_srv_id,
                    "ldata": ldata_arr,
                    "problems": problems,
                }
            )
        else:
            passed += 1

    return FuzzSummary(
        engine=engine,
        trials=trials,
        passed=passed,
        failed=failed,
        ordering_violations=ordering_violations,
        seed=seed,
        failures=failures,
    )
