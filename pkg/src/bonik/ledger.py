"""Append-only hash-chained block store and the key-value world state.

A Ledger owns both: blocks are the authoritative log, the world state is
the replayable projection the chaincodes read and write. Verification is
a full recomputation from genesis, so any byte of a persisted block that
is changed after commit (request fields, endorsement bytes, validity
flags, recorded responses, the hashes themselves) makes verify_chain()
come back false.

Single-writer: only append_block mutates. Persistence is one JSON object
per line with fields exactly {height, prev_hash, tx_list, block_hash}.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from .chaincode import Response, invoke_from_wire
from .crypto import b64d, b64e, canonical_bytes, sha256_hex

GENESIS_PREV_HASH = "0" * 64

# verifier(endorser_name, signed_message, signature) -> bool
EndorsementVerifier = Callable[[str, bytes, bytes], bool]
# executor(state_accessor, wire_request) -> Response
ChaincodeExecutor = Callable[[object, dict], Response]


class LedgerError(Exception):
    """Structural misuse: empty batches, bad keys, corrupt persistence."""


@dataclass(frozen=True)
class Endorsement:
    endorser: str
    signature: bytes

    def to_dict(self) -> dict:
        return {"endorser": self.endorser, "signature": b64e(self.signature)}

    @classmethod
    def from_dict(cls, obj: dict) -> "Endorsement":
        try:
            return cls(endorser=obj["endorser"], signature=b64d(obj["signature"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise LedgerError(f"malformed endorsement: {exc}") from exc


def compute_tx_id(request: dict, submitter: str, timestamp: float) -> str:
    """tx_id = sha256(canonical request bytes ‖ submitter ‖ timestamp).

    The timestamp joins the hash through repr(float), which round-trips
    exactly through JSON, so recomputation after reload cannot drift.
    """
    payload = (
        canonical_bytes(request)
        + submitter.encode("utf-8")
        + repr(float(timestamp)).encode("ascii")
    )
    return sha256_hex(payload)


@dataclass
class LedgerTransaction:
    """One endorsed request plus what committing it produced.

    ``valid`` and ``response`` are filled at commit time; transactions
    whose endorsements fail verification stay in the block but carry
    valid=False and no response, and never touch the world state.
    """

    tx_id: str
    submitter: str
    request: dict
    timestamp: float
    endorsements: List[Endorsement]
    valid: bool = True
    response: Optional[dict] = None

    @classmethod
    def new(
        cls,
        request: dict,
        submitter: str,
        timestamp: float,
        endorsements: List[Endorsement],
    ) -> "LedgerTransaction":
        return cls(
            tx_id=compute_tx_id(request, submitter, timestamp),
            submitter=submitter,
            request=request,
            timestamp=float(timestamp),
            endorsements=list(endorsements),
        )

    def signing_payload(self) -> bytes:
        """What each endorser signs. tx_id already binds request,
        submitter and timestamp, so signing it covers all three."""
        return self.tx_id.encode("ascii")

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "submitter": self.submitter,
            "request": self.request,
            "timestamp": self.timestamp,
            "endorsements": [e.to_dict() for e in self.endorsements],
            "valid": self.valid,
            "response": self.response,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LedgerTransaction":
        try:
            return cls(
                tx_id=obj["tx_id"],
                submitter=obj["submitter"],
                request=obj["request"],
                timestamp=float(obj["timestamp"]),
                endorsements=[Endorsement.from_dict(e) for e in obj["endorsements"]],
                valid=bool(obj["valid"]),
                response=obj["response"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LedgerError(f"malformed transaction record: {exc}") from exc


def compute_block_hash(height: int, prev_hash: str, tx_ids: List[str]) -> str:
    """block_hash = sha256(height ‖ prev_hash ‖ concatenated tx_ids)."""
    payload = str(height).encode("ascii") + prev_hash.encode("ascii")
    payload += "".join(tx_ids).encode("ascii")
    return sha256_hex(payload)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    tx_list: Tuple[LedgerTransaction, ...]
    block_hash: str

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "tx_list": [tx.to_dict() for tx in self.tx_list],
            "block_hash": self.block_hash,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Block":
        try:
            return cls(
                height=int(obj["height"]),
                prev_hash=obj["prev_hash"],
                tx_list=tuple(LedgerTransaction.from_dict(t) for t in obj["tx_list"]),
                block_hash=obj["block_hash"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LedgerError(f"malformed block record: {exc}") from exc


class WorldState:
    """Key-value projection of the chain, with per-key write history."""

    def __init__(self):
        self.entries: Dict[str, Tuple[str, int]] = {}
        self._history: Dict[str, List[Tuple[int, str]]] = {}

    def get_state(self, key: str) -> Optional[str]:
        entry = self.entries.get(key)
        return entry[0] if entry is not None else None

    def put_state(self, key: str, value: str, height: int) -> None:
        if not key:
            raise LedgerError("world-state keys must be non-empty")
        self.entries[key] = (value, height)
        self._history.setdefault(key, []).append((height, value))

    def history(self, key: str) -> List[Tuple[int, str]]:
        return list(self._history.get(key, ()))


class _BoundState:
    """State accessor handed to chaincode: attributes every write to the
    block height being committed."""

    def __init__(self, world: WorldState, height: int):
        self._world = world
        self._height = height

    def get_state(self, key: str) -> Optional[str]:
        return self._world.get_state(key)

    def put_state(self, key: str, value: str) -> None:
        self._world.put_state(key, value, self._height)


class Ledger:
    """Hash-chained block log with commit-time endorsement validation.

    The chaincode executor and the endorsement verifier are injected so
    the same store works under the simulated network (HMAC endorsements,
    virtual time) and the live gateway (ECDSA, wall clock).
    """

    def __init__(
        self,
        endorsement_verifier: EndorsementVerifier,
        executor: ChaincodeExecutor = invoke_from_wire,
        path: Optional[str] = None,
    ):
        self._verify_endorsement = endorsement_verifier
        self._execute = executor
        self._path = path
        self.blocks: List[Block] = []
        self.world_state = WorldState()
        if path and os.path.exists(path):
            self._load(path)

    # -- commit path ---------------------------------------------------

    def append_block(self, tx_list: List[LedgerTransaction]) -> Block:
        if not tx_list:
            raise LedgerError("cannot append an empty block")
        height = len(self.blocks)
        prev_hash = self.blocks[-1].block_hash if self.blocks else GENESIS_PREV_HASH
        committed = [self._commit_tx(tx, height) for tx in tx_list]
        block = Block(
            height=height,
            prev_hash=prev_hash,
            tx_list=tuple(committed),
            block_hash=compute_block_hash(height, prev_hash, [t.tx_id for t in committed]),
        )
        self.blocks.append(block)
        if self._path:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(block.to_dict(), sort_keys=True) + "\n")
        return block

    def _commit_tx(self, tx: LedgerTransaction, height: int) -> LedgerTransaction:
        valid = self._endorsements_hold(tx)
        if not valid:
            return replace(tx, valid=False, response=None)
        response = self._execute(_BoundState(self.world_state, height), tx.request)
        return replace(tx, valid=True, response=response.to_dict())

    def _endorsements_hold(self, tx: LedgerTransaction) -> bool:
        if not tx.endorsements:
            return False
        if tx.tx_id != compute_tx_id(tx.request, tx.submitter, tx.timestamp):
            return False
        payload = tx.signing_payload()
        return all(
            self._verify_endorsement(e.endorser, payload, e.signature)
            for e in tx.endorsements
        )

    # -- read path -----------------------------------------------------

    @property
    def height(self) -> int:
        """Height of the tip, -1 when no block has been committed."""
        return len(self.blocks) - 1

    def get_state(self, key: str) -> Optional[str]:
        return self.world_state.get_state(key)

    def read_history(self, key: str) -> List[Tuple[int, str]]:
        return self.world_state.history(key)

    def verify_chain(self) -> bool:
        """Recompute everything from genesis.

        Checks, per block: consecutive heights, prev_hash linkage, the
        block-hash formula, every tx_id, endorsement signatures against
        the recorded valid flags, and byte-identical re-execution of the
        recorded responses. Finishes by comparing the replayed world
        state with the live one.
        """
        replayed = WorldState()
        prev_hash = GENESIS_PREV_HASH
        for expected_height, block in enumerate(self.blocks):
            if block.height != expected_height or block.prev_hash != prev_hash:
                return False
            if not block.tx_list:
                return False
            for tx in block.tx_list:
                if tx.tx_id != compute_tx_id(tx.request, tx.submitter, tx.timestamp):
                    return False
                if self._endorsements_hold(tx) != tx.valid:
                    return False
                if tx.valid:
                    response = self._execute(_BoundState(replayed, block.height), tx.request)
                    if response.to_dict() != tx.response:
                        return False
                elif tx.response is not None:
                    return False
            recomputed = compute_block_hash(
                block.height, block.prev_hash, [t.tx_id for t in block.tx_list]
            )
            if recomputed != block.block_hash:
                return False
            prev_hash = block.block_hash
        return replayed.entries == self.world_state.entries

    # -- persistence ---------------------------------------------------

    def _load(self, path: str) -> None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise LedgerError(f"{path}:{line_no}: not valid JSON") from exc
                    if not isinstance(record, dict) or set(record) != {
                        "height",
                        "prev_hash",
                        "tx_list",
                        "block_hash",
                    }:
                        raise LedgerError(f"{path}:{line_no}: unexpected block fields")
                    block = Block.from_dict(record)
                    self._replay_block(block)
                    self.blocks.append(block)
        except UnicodeDecodeError as exc:
            raise LedgerError(f"{path}: not valid UTF-8") from exc

    def _replay_block(self, block: Block) -> None:
        """Rebuild world state using the persisted valid flags; integrity
        judgments stay in verify_chain."""
        for tx in block.tx_list:
            if tx.valid:
                self._execute(_BoundState(self.world_state, block.height), tx.request)
