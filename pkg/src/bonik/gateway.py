"""HTTP/JSON gateway: the dApp between chat clients and the ledger.

Registration follows the four-message exchange: the client sends
[N1, {req}_Kd] sealed to the gateway key, the gateway relays the request
to the system chaincode under its own nonce N2, and answers
[N1, resp', H(resp')] where resp' carries the freshly minted user
keypair. Login reuses the sealed shape plus a proof-of-key signature.
Chat messages are signed per turn with the user's key and carry a
single-use nonce; transfers additionally require an explicit yes/confirm
turn before anything is submitted.

The HTTP channel itself is plain; every guarantee rides on the
message-level crypto, which is what the adversarial tests attack.
"""
from __future__ import annotations

import json
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Dict, Optional

from . import crypto
from .chaincode import BalData, Request, RequestError, TransferData
from .crypto import SealedEnvelope, SealError, canonical_bytes, fresh_nonce, sha256_hex
from .network import (
    BatchPolicy,
    Identity,
    LatencyProfile,
    MspError,
    Network,
    TransactionResult,
)
from .nlu import (
    DEFAULT_BOT_DATASET,
    DEFAULT_USER_DATASET,
    AuthorizationError,
    Conversation,
    EntitySet,
    NluCredential,
    NluError,
    NluService,
    Utterance,
    render_template,
)
from .simclock import ImmediateClock, VirtualClock

NONCE_RE = re.compile(r"^[0-9a-f]{32}$")
SESSION_TTL_MS = 30 * 60 * 1000
NONCE_TTL_MS = 10 * 60 * 1000
NLU_SECRET_ENV = "BONIK_NLU_SECRET"


class GatewayError(Exception):
    pass


class ParsingError(GatewayError):
    pass


@dataclass
class GatewayConfig:
    mode: str = "interactive"
    topology: str = "2O2P"
    latency: Optional[LatencyProfile] = None
    batch: Optional[BatchPolicy] = None
    endorsement_scheme: str = "ecdsa"
    ledger_path: Optional[str] = None
    listen: str = "127.0.0.1:8080"
    nlu_secret: Optional[str] = None
    user_dataset: Optional[str] = None
    bot_dataset: Optional[str] = None
    session_ttl_ms: int = SESSION_TTL_MS
    nonce_ttl_ms: int = NONCE_TTL_MS
    static_dir: Optional[str] = None
    seed: Optional[str] = None
    # expose the language service on POST /internal/nlu so it can run as
    # its own local endpoint instead of only in-process
    nlu_http: bool = False

    def __post_init__(self):
        if self.mode not in ("interactive", "bench"):
            raise GatewayError(f"unknown mode {self.mode!r}")
        env_secret = os.environ.get(NLU_SECRET_ENV)
        if env_secret:
            self.nlu_secret = env_secret


@dataclass
class Session:
    session_id: str
    user_name: str
    account: str
    public_key: bytes
    created_at_ms: float
    expires_at_ms: float


class NonceLedger:
    """Accepts each nonce value at most once within the TTL window."""

    def __init__(self, ttl_ms: float = NONCE_TTL_MS):
        self.ttl_ms = ttl_ms
        self._seen: Dict[str, float] = {}
        self._last_sweep = 0.0

    def accept(self, nonce: str, now_ms: float) -> bool:
        self._maybe_sweep(now_ms)
        seen_at = self._seen.get(nonce)
        if seen_at is not None and now_ms - seen_at < self.ttl_ms:
            return False
        self._seen[nonce] = now_ms
        return True

    def _maybe_sweep(self, now_ms: float) -> None:
        if len(self._seen) < 4096 and now_ms - self._last_sweep < self.ttl_ms:
            return
        self._seen = {n: t for n, t in self._seen.items() if now_ms - t < self.ttl_ms}
        self._last_sweep = now_ms


def parsing(entity_set: EntitySet, user_name: str, account: str) -> Request:
    """Entities -> chaincode request, anchored to the session's account.

    The sender side of a transfer and the account of a balance query are
    never taken from the utterance: they are the logged-in user's own.
    """
    if not entity_set.complete:
        raise ParsingError("entity set is incomplete")
    if entity_set.intent == "transfer":
        to_acc = entity_set.first("accountNumber")
        amount = entity_set.first("amount")
        try:
            return Request(
                type="transfer",
                data=TransferData(
                    userName=user_name,
                    fromAcc=account,
                    toAcc=to_acc.value,
                    amount=int(amount.value),
                ),
            )
        except RequestError as exc:
            raise ParsingError(str(exc)) from exc
    if entity_set.intent == "balQuery":
        return Request(type="balQuery", data=BalData(userName=user_name, accountNum=account))
    raise ParsingError(f"intent {entity_set.intent!r} does not map to a request")


class ApiError(GatewayError):
    def __init__(self, status_code: int, message: str, **extra):
        super().__init__(message)
        self.status_code = status_code
        self.body = {"error": message, **extra}


class Gateway:
    """Framework-free core; the FastAPI layer in create_app only routes."""

    def __init__(self, config: Optional[GatewayConfig] = None):
        self.config = config or GatewayConfig()
        clock = VirtualClock() if self.config.mode == "bench" else ImmediateClock()
        self.network = Network(
            topology=self.config.topology,
            latency=self.config.latency,
            batch=self.config.batch,
            clock=clock,
            endorsement_scheme=self.config.endorsement_scheme,
            ledger_path=self.config.ledger_path,
            seed=self.config.seed,
        )
        self.identity = self.network.msp.register_identity("gateway", "gateway")
        self.nlu = NluService(
            user_dataset_path=self.config.user_dataset or DEFAULT_USER_DATASET,
            bot_dataset_path=self.config.bot_dataset or DEFAULT_BOT_DATASET,
            secret_key=self.config.nlu_secret,
        )
        self.nlu_credential = NluCredential(self.nlu.credential.secret_key)
        self.nonces = NonceLedger(self.config.nonce_ttl_ms)
        self.sessions: Dict[str, Session] = {}
        self.conversations: Dict[str, Conversation] = {}
        self.pending_transfers: Dict[str, EntitySet] = {}
        # threads of the standalone language endpoint, separate from chat
        # sessions: its callers bring their own ids and credential
        self._nlu_threads: Dict[str, Conversation] = {}
        self._lock = threading.RLock()

    # -- helpers ---------------------------------------------------------

    @staticmethod
    def _now_ms() -> float:
        return time.time() * 1000.0

    def _require_fresh_nonce(self, nonce) -> str:
        if not isinstance(nonce, str) or not NONCE_RE.match(nonce):
            raise ApiError(400, "nonce must be 32 hex characters")
        if not self.nonces.accept(nonce, self._now_ms()):
            raise ApiError(409, "nonce replayed or stale")
        return nonce

    def _open_envelope(self, wire) -> bytes:
        if not isinstance(wire, dict):
            raise ApiError(400, "sealed payload must be an object")
        try:
            envelope = SealedEnvelope.from_wire(wire)
            return crypto.open_envelope(self.identity.keypair.private_key, envelope)
        except SealError as exc:
            raise ApiError(400, f"cannot open envelope: {exc}") from exc

    def _submit_and_wait(self, identity: Identity, request) -> TransactionResult:
        handle = self.network.submit_transaction(identity, request)
        if isinstance(self.network.clock, VirtualClock):
            self.network.run_until_idle()
        result = handle.result
        if result is None:
            raise ApiError(500, "transaction did not complete")
        return result

    def _scc_roundtrip(self, request) -> TransactionResult:
        """Gateway<->chaincode leg: wraps the request with its own nonce
        N2 and checks the echo, mirroring the M2/M3 exchange even though
        both ends live in one process."""
        n2 = fresh_nonce()
        m2 = {"nonce": n2, "request": request.to_dict() if isinstance(request, Request) else request}
        result = self._submit_and_wait(self.identity, m2["request"])
        m3 = {"nonce": n2, "response": result.response}
        if m3["nonce"] != n2:
            raise ApiError(500, "chaincode response nonce mismatch")
        return result

    def _require_session(self, session_id) -> Session:
        if not isinstance(session_id, str) or not session_id:
            raise ApiError(401, "session required, please log in")
        session = self.sessions.get(session_id)
        now = self._now_ms()
        if session is None or now >= session.expires_at_ms:
            self.sessions.pop(session_id, None)
            raise ApiError(401, "session expired or unknown, please log in")
        session.expires_at_ms = now + self.config.session_ttl_ms
        return session

    # -- endpoints --------------------------------------------------------

    def health(self) -> dict:
        with self._lock:
            return {
                "status": "ok",
                "mode": self.config.mode,
                "topology": self.network.topology.name,
                "block_height": self.network.ledger.height,
            }

    def gateway_key(self) -> dict:
        return {"public_key": self.identity.keypair.public_b64}

    def register(self, body: dict) -> dict:
        with self._lock:
            self._require_fresh_nonce(body.get("nonce"))
            plaintext = self._open_envelope(body.get("sealed_request"))
            try:
                request = Request.from_dict(json.loads(plaintext))
            except (RequestError, ValueError) as exc:
                raise ApiError(400, f"malformed registration request: {exc}") from exc
            if request.type != "registration":
                raise ApiError(400, "register endpoint accepts only registration requests")

            result = self._scc_roundtrip(request)
            if result.status == "ERROR_DUPLICATE_USER":
                raise ApiError(409, "user name already registered", status=result.status)
            if result.status != "TRUE":
                raise ApiError(400, "registration rejected", status=result.status)

            user_name = request.data.userName
            try:
                user_identity = self.network.msp.register_identity(user_name, "user")
            except MspError as exc:
                raise ApiError(409, f"identity conflict: {exc}") from exc
            resp_prime = {
                "resp": result.response,
                "public_key": user_identity.keypair.public_b64,
                "private_key": user_identity.keypair.private_b64,
            }
            return {
                "nonce": body["nonce"],
                "resp_prime": resp_prime,
                "digest": sha256_hex(canonical_bytes(resp_prime)),
                "block_height": result.block_height,
            }

    def login(self, body: dict) -> dict:
        with self._lock:
            nonce = self._require_fresh_nonce(body.get("nonce"))
            plaintext = self._open_envelope(body.get("sealed_credentials"))
            try:
                payload = json.loads(plaintext)
                user_name = payload["userName"]
                digest = payload["h"]
                signature = crypto.b64d(payload["signature"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(400, f"malformed login payload: {exc}") from exc

            identity = self.network.msp.get(user_name, "user")
            if identity is None:
                raise ApiError(401, "authentication failed")
            signed = canonical_bytes({"userName": user_name, "h": digest, "nonce": nonce})
            if not crypto.verify(identity.keypair.public_key, signed, signature):
                raise ApiError(401, "authentication failed")

            try:
                request = Request.from_dict(
                    {"type": "login", "data": {"userName": user_name, "h": digest}}
                )
            except RequestError as exc:
                raise ApiError(400, f"malformed credentials: {exc}") from exc
            result = self._scc_roundtrip(request)
            if result.status != "TRUE":
                raise ApiError(401, "authentication failed", status=result.status)

            account = self.network.ledger.get_state("acct:" + user_name)
            if account is None:
                raise ApiError(500, "registered user has no account record")
            now = self._now_ms()
            session = Session(
                session_id=secrets.token_hex(32),
                user_name=user_name,
                account=account,
                public_key=identity.keypair.public_key,
                created_at_ms=now,
                expires_at_ms=now + self.config.session_ttl_ms,
            )
            self.sessions[session.session_id] = session
            self.conversations[session.session_id] = Conversation(session_id=session.session_id)
            return {
                "session_id": session.session_id,
                "userName": user_name,
                "account": account,
                "expires_in_ms": self.config.session_ttl_ms,
            }

    def chat(self, body: dict) -> dict:
        with self._lock:
            session = self._require_session(body.get("session_id"))
            nonce = self._require_fresh_nonce(body.get("nonce"))
            utterance_text = body.get("utterance")
            if not isinstance(utterance_text, str) or not utterance_text.strip():
                raise ApiError(400, "utterance must be a non-empty string")
            try:
                signature = crypto.b64d(body.get("signature") or "")
            except (TypeError, ValueError) as exc:
                raise ApiError(400, f"malformed signature: {exc}") from exc
            signed = canonical_bytes(
                {"nonce": nonce, "session_id": session.session_id, "utterance": utterance_text}
            )
            if not crypto.verify(session.public_key, signed, signature):
                raise ApiError(403, "utterance signature check failed")

            conversation = self.conversations.setdefault(
                session.session_id, Conversation(session_id=session.session_id)
            )
            utterance = Utterance(text=utterance_text, turn_index=conversation.next_turn_index)
            try:
                analysis = self.nlu.d_flow_model(conversation, utterance, self.nlu_credential)
            except AuthorizationError as exc:
                raise ApiError(503, f"language service unavailable: {exc}") from exc

            pending = self.pending_transfers.get(session.session_id)
            if pending is not None:
                marker = analysis.marker()
                if marker == "affirm":
                    del self.pending_transfers[session.session_id]
                    return self._execute_transfer(session, conversation, pending, analysis)
                if marker == "deny":
                    del self.pending_transfers[session.session_id]
                    return self._bot_reply(
                        conversation, analysis, "transfer_cancelled", {}, confirmed=False
                    )
                # any other utterance abandons the proposal: a later bare
                # "yes" must never trigger a half-forgotten transfer
                del self.pending_transfers[session.session_id]

            if analysis.intent == "transfer" and analysis.complete:
                self.pending_transfers[session.session_id] = analysis
                bot = self.nlu.next_bot_response(analysis, conversation)
                return self._chat_body(analysis, bot.text, awaiting_confirmation=True)
            if analysis.intent == "balQuery":
                return self._execute_balance_query(session, conversation, analysis)
            if analysis.intent == "smalltalk" and analysis.marker() == "affirm":
                return self._bot_reply(conversation, analysis, "affirm_nothing_pending", {})
            if analysis.intent == "smalltalk" and analysis.marker() == "deny":
                return self._bot_reply(conversation, analysis, "deny_ack", {})
            bot = self.nlu.next_bot_response(analysis, conversation)
            return self._chat_body(analysis, bot.text)

    def _execute_transfer(
        self, session: Session, conversation: Conversation, pending: EntitySet, analysis: EntitySet
    ) -> dict:
        try:
            request = parsing(pending, session.user_name, session.account)
        except ParsingError as exc:
            return self._bot_reply(
                conversation, analysis, "transfer_aborted", {"status": str(exc)}
            )
        result = self._submit_and_wait(self._user_identity(session), request)
        values = {
            "amount": str(request.data.amount),
            "accountNumber": request.data.toAcc,
            "status": result.status,
        }
        template = "transfer_success" if result.status == "TRANSACTION SUCCESSFUL" else "transfer_aborted"
        body = self._bot_reply(conversation, analysis, template, values)
        body["status"] = result.status
        body["block_height"] = result.block_height
        return body

    def _execute_balance_query(
        self, session: Session, conversation: Conversation, analysis: EntitySet
    ) -> dict:
        request = parsing(analysis, session.user_name, session.account)
        result = self._submit_and_wait(self._user_identity(session), request)
        balance = None
        m = re.fullmatch(r"BALANCE\((\d+)\)", result.status)
        if m:
            balance = m.group(1)
        values = {
            "accountNumber": session.account,
            "balance": balance if balance is not None else result.status,
        }
        body = self._bot_reply(conversation, analysis, "balance_result", values)
        body["status"] = result.status
        return body

    def _user_identity(self, session: Session) -> Identity:
        identity = self.network.msp.get(session.user_name, "user")
        if identity is None:
            raise ApiError(500, "session user has no network identity")
        return identity

    def _bot_reply(
        self,
        conversation: Conversation,
        analysis: EntitySet,
        template_id: str,
        values: Dict[str, str],
        **extra,
    ) -> dict:
        text = render_template(self.nlu.template(template_id), values)
        conversation.add_turn(
            "bot", Utterance(text=text, turn_index=conversation.next_turn_index)
        )
        body = self._chat_body(analysis, text)
        body.update(extra)
        return body

    @staticmethod
    def _chat_body(analysis: EntitySet, bot_text: str, awaiting_confirmation: bool = False) -> dict:
        return {
            "bot_text": bot_text,
            "intent": analysis.intent,
            "entities": [e.to_dict() for e in analysis.entities],
            "complete": analysis.complete,
            "awaiting_confirmation": awaiting_confirmation,
        }

    def explorer_history(self, session_id, account) -> dict:
        with self._lock:
            session = self._require_session(session_id)
            if not isinstance(account, str) or not account:
                raise ApiError(400, "account query parameter required")
            if account != session.account:
                raise ApiError(403, "access to other accounts is forbidden")
            history = self.network.ledger.read_history("bal:" + account)
            return {
                "userName": session.user_name,
                "account": account,
                "history": [{"height": h, "value": v} for h, v in history],
            }

    def explorer_block(self, session_id, height) -> dict:
        with self._lock:
            session = self._require_session(session_id)
            blocks = self.network.ledger.blocks
            if not isinstance(height, int) or not 0 <= height < len(blocks):
                raise ApiError(404, f"no block at height {height}")
            block = blocks[height]
            txs = []
            for tx in block.tx_list:
                data = tx.request.get("data", {})
                own = isinstance(data, dict) and data.get("userName") == session.user_name
                view = {
                    "tx_id": tx.tx_id,
                    "submitter": tx.submitter,
                    "type": tx.request.get("type"),
                    "timestamp": tx.timestamp,
                    "valid": tx.valid,
                }
                if own:
                    view["request"] = tx.request
                    view["response"] = tx.response
                txs.append(view)
            return {
                "height": block.height,
                "prev_hash": block.prev_hash,
                "block_hash": block.block_hash,
                "tx_count": len(block.tx_list),
                "tx_list": txs,
            }

    def nlu_handle(self, body: dict) -> dict:
        """Standalone language-service call: the caller authenticates with
        the shared secret per request, no gateway session involved."""
        with self._lock:
            if not isinstance(body, dict):
                raise ApiError(400, "body must be a JSON object")
            thread_id = body.get("session_id")
            if not isinstance(thread_id, str) or not thread_id:
                raise ApiError(400, "session_id is required")
            conversation = self._nlu_threads.setdefault(
                thread_id, Conversation(session_id=thread_id)
            )
            try:
                return self.nlu.handle(body, conversation)
            except AuthorizationError as exc:
                raise ApiError(401, str(exc)) from exc
            except NluError as exc:
                raise ApiError(400, str(exc)) from exc


def create_app(config: Optional[GatewayConfig] = None):
    """FastAPI wrapper; ApiError maps 1:1 onto HTTP status codes."""
    from fastapi import FastAPI, Request as HttpRequest
    from fastapi.responses import JSONResponse

    core = Gateway(config)
    app = FastAPI(title="bonik-gateway", docs_url=None, redoc_url=None)
    app.state.core = core

    @app.exception_handler(ApiError)
    async def _api_error(_request: HttpRequest, exc: ApiError):
        return JSONResponse(status_code=exc.status_code, content=exc.body)

    @app.get("/api/health")
    def health():
        return core.health()

    @app.get("/api/gateway-key")
    def gateway_key():
        return core.gateway_key()

    @app.post("/api/register")
    def register(body: dict):
        return core.register(body)

    @app.post("/api/login")
    def login(body: dict):
        return core.login(body)

    @app.post("/api/chat")
    def chat(body: dict):
        return core.chat(body)

    @app.get("/api/explorer/history")
    def explorer_history(session_id: str = "", account: str = ""):
        return core.explorer_history(session_id, account)

    @app.get("/api/explorer/block/{height}")
    def explorer_block(height: int, session_id: str = ""):
        return core.explorer_block(session_id, height)

    if core.config.nlu_http:

        @app.post("/internal/nlu")
        def nlu_endpoint(body: dict):
            return core.nlu_handle(body)

    static_dir = core.config.static_dir
    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
