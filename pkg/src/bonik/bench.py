"""Closed-loop throughput benchmark over the virtual-time simulator.

Each synthetic client offers send_rate_per_user_tps but never holds more
than one transaction in flight: the next submission waits for the later
of the rate gap and the previous completion (the backpressure a real
benchmark client applies). Three workloads: ``create`` registers fresh
users, ``transfer`` moves 10 units around a ring of prefunded accounts,
``query`` reads the client's own balance.

A repetition = fresh network + ledger, a setup phase (account
registration, unmeasured), then a fixed measurement window of virtual
time. TPS = transactions completed inside the window / window length.
"""
from __future__ import annotations

import csv
import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from . import crypto
from .network import LatencyProfile, BatchPolicy, Network, Topology
from .simclock import VirtualClock

WORKLOADS = ("create", "transfer", "query")
MATRIX_USER_COUNTS = (10, 20, 30, 40, 50)
MATRIX_TOPOLOGIES = ("2O2P", "2O4P", "2O6P")

CSV_HEADER = ["workload", "users", "topology", "repetition", "committed", "aborted", "elapsed_ms", "tps"]

# Reference throughput (TPS) the shipped latency profile is calibrated
# against; measured on the original hardware, so treated as soft targets.
REFERENCE_TPS = {
    ("create", 10, "2O2P"): 8.6,
    ("create", 50, "2O2P"): 37.98,
    ("create", 50, "2O6P"): 28.14,
    ("transfer", 50, "2O2P"): 36.72,
    ("query", 10, "2O2P"): 286.16,
    ("query", 50, "2O2P"): 194.9,
}

RING_TRANSFER_AMOUNT = 10
_GAP_JITTER = 0.10


class BenchError(Exception):
    pass


@dataclass(frozen=True)
class WorkloadConfig:
    workload: str
    users: int
    topology: Union[str, Topology] = "2O2P"
    send_rate_per_user_tps: float = 20.0
    duration_s: float = 60.0
    repetitions: int = 5
    seed: int = 42
    latency: Optional[LatencyProfile] = None
    batch: Optional[BatchPolicy] = None

    def __post_init__(self):
        if self.workload not in WORKLOADS:
            raise BenchError(f"unknown workload {self.workload!r}; expected one of {WORKLOADS}")
        if not 10 <= self.users <= 50:
            raise BenchError("users must be between 10 and 50")
        if self.send_rate_per_user_tps <= 0:
            raise BenchError("send rate must be positive")
        if self.duration_s <= 0:
            raise BenchError("duration must be positive")
        if self.repetitions < 1:
            raise BenchError("repetitions must be at least 1")
        Topology.resolve(self.topology)

    @property
    def topology_name(self) -> str:
        return Topology.resolve(self.topology).name


@dataclass(frozen=True)
class RepetitionResult:
    repetition: int
    committed: int
    aborted: int
    elapsed_ms: float
    setup_block_height: int

    @property
    def tps(self) -> float:
        return self.committed / (self.elapsed_ms / 1000.0)


@dataclass
class BenchReport:
    workload: str
    users: int
    topology: str
    repetitions: List[RepetitionResult] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def committed_count(self) -> int:
        return sum(r.committed for r in self.repetitions)

    @property
    def aborted_count(self) -> int:
        return sum(r.aborted for r in self.repetitions)

    @property
    def virtual_elapsed_ms(self) -> float:
        return sum(r.elapsed_ms for r in self.repetitions)

    @property
    def tps(self) -> float:
        if not self.repetitions:
            return 0.0
        return self.committed_count / (self.virtual_elapsed_ms / 1000.0)

    @property
    def mean_tps(self) -> float:
        if not self.repetitions:
            return 0.0
        return sum(r.tps for r in self.repetitions) / len(self.repetitions)


def _rep_rng(config: WorkloadConfig, repetition: int) -> Tuple[random.Random, str]:
    tag = f"{config.seed}:{config.workload}:{config.topology_name}:{config.users}:{repetition}"
    digest = hashlib.sha256(tag.encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big")), tag


def run_repetition(config: WorkloadConfig, repetition: int) -> Tuple[RepetitionResult, Network]:
    """One measured window on a fresh network; the network comes back so
    callers can audit the final ledger (conservation, chain checks)."""
    rng, tag = _rep_rng(config, repetition)
    net = Network(
        topology=config.topology,
        latency=config.latency,
        batch=config.batch,
        clock=VirtualClock(),
        endorsement_scheme="hmac",
        seed=tag,
        concurrent_clients=config.users,
    )
    clients = [net.msp.register_identity(f"client{i}", "user") for i in range(config.users)]
    password_digest = crypto.sha256_hex(b"bench-password")

    accounts: List[str] = []
    if config.workload in ("transfer", "query"):
        handles = [
            net.submit_transaction(
                clients[i],
                {"type": "registration", "data": {"userName": f"user{i}", "h": password_digest}},
            )
            for i in range(config.users)
        ]
        net.run_until_idle()
        for i, handle in enumerate(handles):
            result = handle.result
            if result is None or result.status != "TRUE":
                raise BenchError(f"setup registration failed for user{i}: {result}")
            accounts.append(result.response["detail"])
    setup_height = net.ledger.height

    window_start = net.clock.now()
    window_end = window_start + config.duration_s * 1000.0
    gap_ms = 1000.0 / config.send_rate_per_user_tps
    committed = 0
    aborted = 0
    create_counter = [0] * config.users

    def build_request(i: int) -> dict:
        if config.workload == "create":
            create_counter[i] += 1
            name = f"u{repetition}-{i}-{create_counter[i]}"
            return {"type": "registration", "data": {"userName": name, "h": password_digest}}
        if config.workload == "transfer":
            return {
                "type": "transfer",
                "data": {
                    "userName": f"user{i}",
                    "fromAcc": accounts[i],
                    "toAcc": accounts[(i + 1) % config.users],
                    "amount": RING_TRANSFER_AMOUNT,
                },
            }
        return {
            "type": "balQuery",
            "data": {"userName": f"user{i}", "accountNum": accounts[i]},
        }

    def submit(i: int) -> None:
        sent_at = net.clock.now()
        handle = net.submit_transaction(clients[i], build_request(i))
        handle.add_done_callback(lambda result: on_done(i, sent_at, result))

    def on_done(i: int, sent_at: float, result) -> None:
        nonlocal committed, aborted
        if result.completed_at_ms <= window_end:
            if result.ok:
                committed += 1
            else:
                aborted += 1
        jittered_gap = gap_ms * (1.0 + rng.uniform(-_GAP_JITTER, _GAP_JITTER))
        next_at = max(sent_at + jittered_gap, result.completed_at_ms)
        if next_at < window_end:
            net.clock.schedule_at(next_at, lambda: submit(i))

    for i in range(config.users):
        net.clock.schedule_at(window_start + rng.uniform(0.0, gap_ms), lambda i=i: submit(i))
    net.advance_virtual_time(window_end, collect=False)

    rep = RepetitionResult(
        repetition=repetition,
        committed=committed,
        aborted=aborted,
        elapsed_ms=config.duration_s * 1000.0,
        setup_block_height=setup_height,
    )
    return rep, net


def run_workload(config: WorkloadConfig) -> BenchReport:
    report = BenchReport(
        workload=config.workload, users=config.users, topology=config.topology_name
    )
    for rep in range(1, config.repetitions + 1):
        result, _ = run_repetition(config, rep)
        report.repetitions.append(result)
    return report


@dataclass
class MatrixResult:
    reports: List[BenchReport]
    verdicts: Dict[str, bool]
    calibration: List[dict]

    def cell(self, workload: str, users: int, topology: str) -> Optional[BenchReport]:
        for report in self.reports:
            if (report.workload, report.users, report.topology) == (workload, users, topology):
                return report
        return None

    @property
    def all_trends_hold(self) -> bool:
        return all(self.verdicts.values())


def run_matrix(
    workloads: Sequence[str] = WORKLOADS,
    users: Sequence[int] = MATRIX_USER_COUNTS,
    topologies: Sequence[str] = MATRIX_TOPOLOGIES,
    seed: int = 42,
    duration_s: float = 60.0,
    repetitions: int = 5,
    latency: Optional[LatencyProfile] = None,
    batch: Optional[BatchPolicy] = None,
    progress: Optional[Callable[[BenchReport], None]] = None,
) -> MatrixResult:
    """Runs the full grid; one cell failing does not stop the rest."""
    reports: List[BenchReport] = []
    for workload in workloads:
        for topology in topologies:
            for count in users:
                config = WorkloadConfig(
                    workload=workload,
                    users=count,
                    topology=topology,
                    duration_s=duration_s,
                    repetitions=repetitions,
                    seed=seed,
                    latency=latency,
                    batch=batch,
                )
                try:
                    report = run_workload(config)
                except Exception as exc:  # cell marked failed, matrix continues
                    report = BenchReport(
                        workload=workload, users=count, topology=topology, error=str(exc)
                    )
                reports.append(report)
                if progress is not None:
                    progress(report)
    result = MatrixResult(reports=reports, verdicts={}, calibration=[])
    result.verdicts = evaluate_trends(result)
    result.calibration = evaluate_calibration(result)
    return result


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(values, values[1:]))


def evaluate_trends(matrix: MatrixResult) -> Dict[str, bool]:
    """The four throughput-shape checks the simulator must reproduce."""
    verdicts: Dict[str, bool] = {}

    def mean(workload, users, topology) -> Optional[float]:
        report = matrix.cell(workload, users, topology)
        if report is None or report.error or not report.repetitions:
            return None
        return report.mean_tps

    create_2o2p = [mean("create", u, "2O2P") for u in MATRIX_USER_COUNTS]
    verdicts["create_tps_increases_with_users_2O2P"] = (
        None not in create_2o2p and _strictly_decreasing(list(reversed(create_2o2p)))
    )

    create_50 = [mean("create", 50, t) for t in MATRIX_TOPOLOGIES]
    verdicts["create_tps_decreases_with_peers_50u"] = (
        None not in create_50 and _strictly_decreasing(create_50)
    )

    ratio_ok = True
    for topology in MATRIX_TOPOLOGIES:
        for count in MATRIX_USER_COUNTS:
            q, t = mean("query", count, topology), mean("transfer", count, topology)
            if q is None or t is None or t <= 0 or q < 3.0 * t:
                ratio_ok = False
    verdicts["query_tps_at_least_3x_transfer"] = ratio_ok

    query_2o2p = [mean("query", u, "2O2P") for u in MATRIX_USER_COUNTS]
    verdicts["query_tps_decreases_with_users_2O2P"] = (
        None not in query_2o2p and _strictly_decreasing(query_2o2p)
    )
    return verdicts


def evaluate_calibration(matrix: MatrixResult, tolerance: float = 0.30) -> List[dict]:
    """Soft comparison against the reference measurements; reported, not
    gated, because absolute TPS is hardware-bound."""
    rows = []
    for (workload, users, topology), reference in sorted(REFERENCE_TPS.items()):
        report = matrix.cell(workload, users, topology)
        measured = report.mean_tps if report and not report.error and report.repetitions else None
        deviation = None if measured is None else (measured - reference) / reference
        rows.append(
            {
                "workload": workload,
                "users": users,
                "topology": topology,
                "reference_tps": reference,
                "measured_tps": measured,
                "deviation": deviation,
                "within_tolerance": deviation is not None and abs(deviation) <= tolerance,
            }
        )
    return rows


def emit_csv(reports: Sequence[BenchReport], path: str) -> None:
    """One row per repetition; identical reports serialize to identical
    bytes, which is what the determinism check compares."""
    if not reports:
        raise BenchError("no reports to emit")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for report in reports:
            for rep in report.repetitions:
                writer.writerow(
                    [
                        report.workload,
                        report.users,
                        report.topology,
                        rep.repetition,
                        rep.committed,
                        rep.aborted,
                        f"{rep.elapsed_ms:.1f}",
                        f"{rep.tps:.4f}",
                    ]
                )
