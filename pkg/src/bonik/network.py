"""Simulated Fabric network: MSP, endorsers, orderers, committing peers.

One Network instance drives transactions endorse -> order -> commit over
an injected clock. Under VirtualClock every latency below is virtual and
runs are deterministic; under ImmediateClock the same pipeline collapses
to synchronous execution for the interactive gateway.

Write path: submit -> (endorse_ms) -> orderer pending batch -> cut on
timeout-since-first or max count -> sequential batch service of
order_base + order_per_tx*n + disseminate_per_peer*P + commit -> block.
Read path (balQuery): round-robin to a peer, served one at a time with
read_ms + read_contention_ms_per_client*(clients-1) per read; no block.
"""
from __future__ import annotations

import hashlib
import hmac as hmac_mod
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional, Tuple, Union

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec

from . import crypto
from .chaincode import Request, Response, invoke_from_wire
from .crypto import KeyPair, canonical_bytes
from .ledger import Endorsement, Ledger, LedgerError, LedgerTransaction
from .simclock import ImmediateClock, VirtualClock

ROLES = ("user", "peer", "endorser", "orderer", "gateway")
STATUS_REJECTED_IDENTITY = "ERROR_IDENTITY"

_P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


class NetworkError(Exception):
    pass


class MspError(Exception):
    pass


@dataclass(frozen=True)
class Topology:
    """Entity counts. Peers split evenly across organizations; every
    organization always fields the same two endorsers the pipeline
    collects signatures from."""

    name: str
    orderer_count: int
    peers_per_org: int
    endorsers_per_org: int = 2
    org_count: int = 2

    def __post_init__(self):
        for f in ("orderer_count", "peers_per_org", "endorsers_per_org", "org_count"):
            if getattr(self, f) < 1:
                raise NetworkError(f"topology field {f} must be positive")

    @property
    def total_peers(self) -> int:
        return self.peers_per_org * self.org_count

    @property
    def total_endorsers(self) -> int:
        return self.endorsers_per_org * self.org_count

    @classmethod
    def resolve(cls, value: Union[str, "Topology", dict]) -> "Topology":
        if isinstance(value, Topology):
            return value
        if isinstance(value, str):
            try:
                return PRESET_TOPOLOGIES[value]
            except KeyError:
                raise NetworkError(
                    f"unknown topology {value!r}; presets: {sorted(PRESET_TOPOLOGIES)}"
                ) from None
        if isinstance(value, dict):
            return cls(**value)
        raise NetworkError(f"cannot interpret topology from {type(value).__name__}")


PRESET_TOPOLOGIES = {
    "2O2P": Topology("2O2P", orderer_count=2, peers_per_org=1),
    "2O4P": Topology("2O4P", orderer_count=2, peers_per_org=2),
    "2O6P": Topology("2O6P", orderer_count=2, peers_per_org=3),
}


@dataclass(frozen=True)
class LatencyProfile:
    """Stage latencies in virtual milliseconds.

    Defaults are the shipped calibration: chosen so the benchmark's 2O2P
    throughput lands near the reference measurements while every trend
    (user scaling, peer-count penalty, read/write gap) has the right sign.
    """

    endorse_ms: float = 5.0
    order_base_ms: float = 5.0
    order_per_tx_ms: float = 6.0
    disseminate_per_peer_ms: float = 30.0
    commit_ms: float = 5.0
    read_ms: float = 9.24
    read_contention_ms_per_client: float = 0.09

    def __post_init__(self):
        for f, v in self.__dict__.items():
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise NetworkError(f"latency field {f} must be finite and non-negative")

    @classmethod
    def from_dict(cls, obj: dict) -> "LatencyProfile":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise NetworkError(f"unknown latency fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})


@dataclass(frozen=True)
class BatchPolicy:
    batch_timeout_ms: float = 1000.0
    max_message_count: int = 500

    def __post_init__(self):
        if self.batch_timeout_ms <= 0 or self.max_message_count < 1:
            raise NetworkError("batch policy values must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "BatchPolicy":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise NetworkError(f"unknown batch fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class Identity:
    name: str
    role: str
    keypair: KeyPair
    certificate: bytes

    def binding(self) -> bytes:
        return _certificate_binding(self.name, self.role, self.keypair.public_key)


def _certificate_binding(name: str, role: str, public_key: bytes) -> bytes:
    return canonical_bytes(
        {"name": name, "role": role, "public_key": crypto.b64e(public_key)}
    )


class MSP:
    """Membership service provider: mints keypairs, issues certificates
    under its root key, and keeps the registry the network trusts.

    With a seed, every key (root, member, endorsement MAC) is derived
    from it, so two MSPs built from the same seed are interchangeable;
    without one, keys come from the OS RNG.
    """

    def __init__(self, seed: Optional[Union[int, str, bytes]] = None):
        self._seed = _seed_bytes(seed)
        self._root = self._derive_keypair("msp-root") if self._seed else crypto.generate_keypair()
        self._mac_root = (
            hashlib.sha256(b"mac-root|" + self._seed).digest()
            if self._seed
            else crypto.fresh_nonce().encode("ascii")
        )
        self._identities: Dict[Tuple[str, str], Identity] = {}
        self._by_name: Dict[str, Identity] = {}
        self._cert_cache: Dict[Tuple[str, str, bytes, bytes], bool] = {}

    @property
    def root_public_key(self) -> bytes:
        return self._root.public_key

    def _derive_keypair(self, label: str) -> KeyPair:
        # scalar from seed||label, reduced into [1, n-1]; same seed, same key
        digest = hashlib.sha256(self._seed + b"|" + label.encode("utf-8")).digest()
        scalar = int.from_bytes(digest, "big") % (_P256_ORDER - 1) + 1
        private = ec.derive_private_key(scalar, crypto.CURVE)
        return KeyPair(
            public_key=private.public_key().public_bytes(
                serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
            ),
            private_key=private.private_bytes(
                serialization.Encoding.DER,
                serialization.PrivateFormat.PKCS8,
                serialization.NoEncryption(),
            ),
        )

    def register_identity(self, name: str, role: str) -> Identity:
        if role not in ROLES:
            raise MspError(f"unknown role {role!r}")
        if not name:
            raise MspError("identity name must be non-empty")
        if (name, role) in self._identities:
            raise MspError(f"{name!r} already registered as {role}")
        keypair = (
            self._derive_keypair(f"{role}:{name}") if self._seed else crypto.generate_keypair()
        )
        certificate = crypto.sign(
            self._root.private_key, _certificate_binding(name, role, keypair.public_key)
        )
        identity = Identity(name=name, role=role, keypair=keypair, certificate=certificate)
        self._identities[(name, role)] = identity
        self._by_name[name] = identity
        return identity

    def verify_certificate(self, identity: Identity) -> bool:
        key = (
            identity.name,
            identity.role,
            identity.keypair.public_key,
            identity.certificate,
        )
        cached = self._cert_cache.get(key)
        if cached is None:
            cached = crypto.verify(self._root.public_key, identity.binding(), identity.certificate)
            if cached:
                self._cert_cache[key] = True
        return cached

    def get(self, name: str, role: Optional[str] = None) -> Optional[Identity]:
        if role is not None:
            return self._identities.get((name, role))
        return self._by_name.get(name)

    def endorsement_mac_key(self, endorser_name: str) -> bytes:
        return hashlib.sha256(self._mac_root + b"|" + endorser_name.encode("utf-8")).digest()


def _seed_bytes(seed: Optional[Union[int, str, bytes]]) -> Optional[bytes]:
    if seed is None:
        return None
    if isinstance(seed, bytes):
        return seed
    return str(seed).encode("utf-8")


@dataclass
class TransactionResult:
    submitter: str
    request: dict
    status: str
    response: Optional[dict]
    block_height: Optional[int]
    submitted_at_ms: float
    completed_at_ms: float
    read: bool = False

    @property
    def ok(self) -> bool:
        return not self.status.startswith("ERROR_") and self.status != "FALSE"

    @property
    def latency_ms(self) -> float:
        return self.completed_at_ms - self.submitted_at_ms


class TransactionHandle:
    """Future-like holder the submitter polls or subscribes to. Under
    ImmediateClock it is already resolved when submit returns."""

    def __init__(self):
        self.result: Optional[TransactionResult] = None
        self._callbacks: List[Callable[[TransactionResult], None]] = []

    @property
    def done(self) -> bool:
        return self.result is not None

    def add_done_callback(self, fn: Callable[[TransactionResult], None]) -> None:
        if self.result is not None:
            fn(self.result)
        else:
            self._callbacks.append(fn)

    def _resolve(self, result: TransactionResult) -> None:
        self.result = result
        for fn in self._callbacks:
            fn(result)
        self._callbacks.clear()


class _ReadOnlyState:
    """Peers answer queries from committed state; a write here is a bug."""

    def __init__(self, world):
        self._world = world

    def get_state(self, key: str) -> Optional[str]:
        return self._world.get_state(key)

    def put_state(self, key: str, value: str) -> None:
        raise LedgerError("read path attempted a state write")


class _Peer:
    __slots__ = ("busy", "queue")

    def __init__(self):
        self.busy = False
        self.queue: Deque[tuple] = deque()


class Network:
    """The in-process stand-in for a two-organization Fabric deployment."""

    def __init__(
        self,
        topology: Union[str, Topology, dict] = "2O2P",
        latency: Optional[LatencyProfile] = None,
        batch: Optional[BatchPolicy] = None,
        clock=None,
        msp: Optional[MSP] = None,
        endorsement_scheme: str = "ecdsa",
        ledger_path: Optional[str] = None,
        seed: Optional[Union[int, str, bytes]] = None,
        concurrent_clients: int = 1,
    ):
        if endorsement_scheme not in ("ecdsa", "hmac"):
            raise NetworkError(f"unknown endorsement scheme {endorsement_scheme!r}")
        self.topology = Topology.resolve(topology)
        self.latency = latency or LatencyProfile()
        self.batch = batch or BatchPolicy()
        self.clock = clock if clock is not None else ImmediateClock()
        self.msp = msp or MSP(seed)
        self.endorsement_scheme = endorsement_scheme
        self.concurrent_clients = max(1, int(concurrent_clients))
        self._lock = threading.RLock()

        self.orderers = [
            self.msp.register_identity(f"orderer{i}", "orderer")
            for i in range(1, self.topology.orderer_count + 1)
        ]
        self.endorsers = [
            self.msp.register_identity(f"org{o}-endorser{j}", "endorser")
            for o in range(1, self.topology.org_count + 1)
            for j in range(1, self.topology.endorsers_per_org + 1)
        ]
        self.peers = [
            self.msp.register_identity(f"org{o}-peer{k}", "peer")
            for o in range(1, self.topology.org_count + 1)
            for k in range(1, self.topology.peers_per_org + 1)
        ]

        self.ledger = Ledger(endorsement_verifier=self._verify_endorsement, path=ledger_path)

        # pending/service entries are (tx, handle, submitted_at_ms)
        self._pending: List[Tuple[LedgerTransaction, TransactionHandle, float]] = []
        self._batch_generation = 0
        self._service_queue: Deque[Tuple[list, float]] = deque()
        self._orderer_busy = False
        self._peer_lanes = [_Peer() for _ in range(self.topology.total_peers)]
        self._read_rr = 0
        self._collecting: Optional[List[TransactionResult]] = None

    # -- endorsement ---------------------------------------------------

    def _endorse(self, tx: LedgerTransaction) -> List[Endorsement]:
        payload = tx.signing_payload()
        out = []
        for endorser in self.endorsers:
            if self.endorsement_scheme == "ecdsa":
                sig = crypto.sign(endorser.keypair.private_key, payload)
            else:
                sig = hmac_mod.new(
                    self.msp.endorsement_mac_key(endorser.name), payload, hashlib.sha256
                ).digest()
            out.append(Endorsement(endorser=endorser.name, signature=sig))
        return out

    def _verify_endorsement(self, endorser_name: str, message: bytes, signature: bytes) -> bool:
        identity = self.msp.get(endorser_name, "endorser")
        if identity is None:
            return False
        if self.endorsement_scheme == "ecdsa":
            return crypto.verify(identity.keypair.public_key, message, signature)
        expected = hmac_mod.new(
            self.msp.endorsement_mac_key(endorser_name), message, hashlib.sha256
        ).digest()
        return hmac_mod.compare_digest(expected, signature)

    # -- submission ----------------------------------------------------

    def submit_transaction(
        self, identity: Identity, request: Union[Request, dict]
    ) -> TransactionHandle:
        wire = request.to_dict() if isinstance(request, Request) else request
        handle = TransactionHandle()
        with self._lock:
            now = self.clock.now()
            if not self.msp.verify_certificate(identity):
                self._resolve(
                    handle,
                    TransactionResult(
                        submitter=identity.name,
                        request=wire,
                        status=STATUS_REJECTED_IDENTITY,
                        response=None,
                        block_height=None,
                        submitted_at_ms=now,
                        completed_at_ms=now,
                    ),
                )
                return handle
            if wire.get("type") == "balQuery":
                self._submit_read(identity, wire, handle, now)
            else:
                self._submit_write(identity, wire, handle, now)
        return handle

    def _submit_write(self, identity, wire, handle, now) -> None:
        tx = LedgerTransaction.new(wire, identity.name, now, [])
        tx.endorsements.extend(self._endorse(tx))
        self.clock.schedule(self.latency.endorse_ms, lambda: self._arrive(tx, handle, now))

    def _arrive(self, tx, handle, submitted_at) -> None:
        with self._lock:
            self._pending.append((tx, handle, submitted_at))
            if len(self._pending) >= self.batch.max_message_count:
                self._cut_batch()
            elif len(self._pending) == 1:
                generation = self._batch_generation
                self.clock.schedule(
                    self.batch.batch_timeout_ms, lambda: self._timeout_cut(generation)
                )

    def _timeout_cut(self, generation: int) -> None:
        with self._lock:
            # stale timer: its batch was already cut by the count trigger
            if generation == self._batch_generation and self._pending:
                self._cut_batch()

    def _cut_batch(self) -> None:
        batch, self._pending = self._pending, []
        self._batch_generation += 1
        service_ms = (
            self.latency.order_base_ms
            + self.latency.order_per_tx_ms * len(batch)
            + self.latency.disseminate_per_peer_ms * self.topology.total_peers
            + self.latency.commit_ms
        )
        self._service_queue.append((batch, service_ms))
        if not self._orderer_busy:
            self._start_service()

    def _start_service(self) -> None:
        batch, service_ms = self._service_queue.popleft()
        self._orderer_busy = True
        self.clock.schedule(service_ms, lambda: self._complete_batch(batch))

    def _complete_batch(self, batch) -> None:
        with self._lock:
            block = self.ledger.append_block([tx for tx, _, _ in batch])
            now = self.clock.now()
            for committed, (_, handle, submitted_at) in zip(block.tx_list, batch):
                status = (
                    committed.response["status"] if committed.valid else "ERROR_ENDORSEMENT"
                )
                self._resolve(
                    handle,
                    TransactionResult(
                        submitter=committed.submitter,
                        request=committed.request,
                        status=status,
                        response=committed.response,
                        block_height=block.height,
                        submitted_at_ms=submitted_at,
                        completed_at_ms=now,
                    ),
                )
            self._orderer_busy = False
            if self._service_queue:
                self._start_service()

    # -- read path -----------------------------------------------------

    def _submit_read(self, identity, wire, handle, now) -> None:
        lane = self._peer_lanes[self._read_rr % len(self._peer_lanes)]
        self._read_rr += 1
        job = (identity.name, wire, handle, now)
        if lane.busy:
            lane.queue.append(job)
        else:
            self._start_read(lane, job)

    def _start_read(self, lane: _Peer, job) -> None:
        lane.busy = True
        service_ms = self.latency.read_ms + self.latency.read_contention_ms_per_client * (
            self.concurrent_clients - 1
        )
        self.clock.schedule(service_ms, lambda: self._complete_read(lane, job))

    def _complete_read(self, lane: _Peer, job) -> None:
        with self._lock:
            submitter, wire, handle, submitted_at = job
            response = invoke_from_wire(_ReadOnlyState(self.ledger.world_state), wire)
            self._resolve(
                handle,
                TransactionResult(
                    submitter=submitter,
                    request=wire,
                    status=response.status,
                    response=response.to_dict(),
                    block_height=None,
                    submitted_at_ms=submitted_at,
                    completed_at_ms=self.clock.now(),
                    read=True,
                ),
            )
            if lane.queue:
                self._start_read(lane, lane.queue.popleft())
            else:
                lane.busy = False

    # -- time ----------------------------------------------------------

    def _resolve(self, handle: TransactionHandle, result: TransactionResult) -> None:
        handle._resolve(result)
        if self._collecting is not None:
            self._collecting.append(result)

    def advance_virtual_time(
        self, until_ms: float, collect: bool = True
    ) -> List[TransactionResult]:
        """Process every simulated event up to until_ms; returns the
        transactions that completed inside the window (unless the caller
        opts out of collection to save memory on huge runs)."""
        if not isinstance(self.clock, VirtualClock):
            raise NetworkError("advance_virtual_time requires the virtual clock")
        self._collecting = [] if collect else None
        try:
            self.clock.advance_until(until_ms)
            return self._collecting if self._collecting is not None else []
        finally:
            self._collecting = None

    def run_until_idle(self) -> None:
        if not isinstance(self.clock, VirtualClock):
            raise NetworkError("run_until_idle requires the virtual clock")
        self.clock.run_until_idle()


def load_network_config(path: str) -> Tuple[Topology, LatencyProfile, BatchPolicy]:
    """Reads {"topology": ..., "latency_ms": {...}, "batch": {...}} from a
    JSON file; every section is optional and falls back to defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise NetworkError("network config must be a JSON object")
    topology = Topology.resolve(obj.get("topology", "2O2P"))
    latency = LatencyProfile.from_dict(obj.get("latency_ms", {}))
    batch = BatchPolicy.from_dict(obj.get("batch", {}))
    return topology, latency, batch
