"""HTTP surface: enrollment protocol, chat flow, explorer, NLU endpoint."""
import pytest
from fastapi.testclient import TestClient

from bonik import crypto
from bonik.chaincode import INITIAL_BALANCE
from bonik.crypto import canonical_bytes, fresh_nonce, sha256_hex
from bonik.gateway import (
    GatewayConfig,
    GatewayError,
    NonceLedger,
    ParsingError,
    create_app,
    parsing,
)
from bonik.nlu import Entity, EntitySet

from conftest import TEST_NLU_SECRET, WireClient


# -- enrollment: registration and login ---------------------------------------


def test_health_and_gateway_key(http):
    health = http.get("/api/health").json()
    assert health["status"] == "ok"
    assert health["mode"] == "interactive"
    assert health["topology"] == "2O2P"
    key = crypto.b64d(http.get("/api/gateway-key").json()["public_key"])
    assert len(key) == 65 and key[0] == 4


def test_registration_issues_keys_and_digest(client_factory):
    client = client_factory("alice")
    reply = client.register()
    assert reply.status_code == 200
    body = reply.json()
    resp_prime = body["resp_prime"]
    # response digest must cover exactly the returned triple
    assert body["digest"] == sha256_hex(canonical_bytes(resp_prime))
    assert resp_prime["resp"]["status"] == "TRUE"
    account = resp_prime["resp"]["detail"]
    assert len(account) == 10
    public = crypto.b64d(resp_prime["public_key"])
    private = crypto.b64d(resp_prime["private_key"])
    assert crypto.verify(public, b"m", crypto.sign(private, b"m"))


def test_duplicate_registration_conflicts(client_factory):
    client_factory("alice").register()
    reply = client_factory("alice").register()
    assert reply.status_code == 409
    assert reply.json()["status"] == "ERROR_DUPLICATE_USER"


def test_replayed_registration_nonce_rejected(client_factory):
    client = client_factory("alice")
    nonce = fresh_nonce()
    assert client.register(nonce=nonce).status_code == 200
    replay = client_factory("bob").register(nonce=nonce)
    assert replay.status_code == 409


def test_tampered_envelope_rejected(client_factory):
    client = client_factory("alice")
    sealed = client.seal({"type": "registration", "data": {"userName": "alice", "h": client.h}})
    raw = bytearray(crypto.b64d(sealed["ciphertext"]))
    raw[-1] ^= 0x01
    sealed["ciphertext"] = crypto.b64e(bytes(raw))
    reply = client.register(sealed=sealed)
    assert reply.status_code == 400


def test_envelope_to_wrong_key_rejected(client_factory):
    client = client_factory("alice")
    stranger = crypto.generate_keypair()
    sealed = crypto.seal(
        stranger.public_key,
        canonical_bytes({"type": "registration", "data": {"userName": "alice", "h": client.h}}),
    ).to_wire()
    assert client.register(sealed=sealed).status_code == 400


def test_register_wants_registration_requests_only(client_factory):
    client = client_factory("alice")
    sealed = client.seal({"type": "login", "data": {"userName": "alice", "h": client.h}})
    reply = client.register(sealed=sealed)
    assert reply.status_code == 400


def test_malformed_nonce_rejected(client_factory):
    client = client_factory("alice")
    assert client.register(nonce="xyz").status_code == 400
    assert client.register(nonce="A" * 32).status_code == 400  # hex must be lowercase


def test_login_happy_path(client_factory):
    client = client_factory("alice")
    client.register()
    reply = client.login()
    assert reply.status_code == 200
    body = reply.json()
    assert body["userName"] == "alice"
    assert len(body["account"]) == 10
    assert len(body["session_id"]) == 64


def test_login_wrong_password_rejected(client_factory):
    client = client_factory("alice", password="right")
    client.register()
    wrong = sha256_hex(b"wrong")
    assert client.login(h=wrong).status_code == 401


def test_login_wrong_key_rejected(client_factory):
    client = client_factory("alice")
    client.register()
    rogue = crypto.generate_keypair()
    assert client.login(private_key=rogue.private_key).status_code == 401


def test_login_unknown_user_rejected(client_factory):
    client = client_factory("ghost")
    client.private_key = crypto.generate_keypair().private_key
    assert client.login().status_code == 401


def test_replayed_login_nonce_rejected(client_factory):
    client = client_factory("alice")
    client.register()
    nonce = fresh_nonce()
    assert client.login(nonce=nonce).status_code == 200
    assert client.login(nonce=nonce).status_code == 409


def test_login_lands_on_the_chain(client_factory, core):
    client = client_factory("alice")
    client.register()
    before = core.network.ledger.height
    client.login()
    assert core.network.ledger.height == before + 1
    tx = core.network.ledger.blocks[-1].tx_list[-1]
    assert tx.request["type"] == "login"
    assert tx.response["status"] == "TRUE"


# -- chat ----------------------------------------------------------------------


def test_balance_query_round_trip(client_factory):
    client = client_factory("alice").enroll()
    body = client.bot("what is my balance")
    assert body["intent"] == "balQuery"
    assert f"holds {INITIAL_BALANCE} units" in body["bot_text"]
    assert body["status"] == f"BALANCE({INITIAL_BALANCE})"


def test_transfer_with_confirmation(client_factory, core):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")

    body = alice.bot(f"send account no {bob_account} 1000 unit")
    assert body["awaiting_confirmation"] is True
    assert "Reply yes to confirm" in body["bot_text"]
    # nothing committed yet
    assert core.network.ledger.get_state("bal:" + bob_account) == str(INITIAL_BALANCE)

    done = alice.bot("yes")
    assert done["status"] == "TRANSACTION SUCCESSFUL"
    assert core.network.ledger.get_state("bal:" + bob_account) == str(INITIAL_BALANCE + 1000)
    alice_account = core.network.ledger.get_state("acct:alice")
    assert core.network.ledger.get_state("bal:" + alice_account) == str(INITIAL_BALANCE - 1000)
    assert core.network.ledger.verify_chain()


def test_deny_cancels_pending_transfer(client_factory, core):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    alice.bot(f"send account no {bob_account} 1000 unit")
    body = alice.bot("no")
    assert "cancelled" in body["bot_text"]
    assert core.network.ledger.get_state("bal:" + bob_account) == str(INITIAL_BALANCE)
    # nothing left pending
    assert alice.bot("yes")["bot_text"].startswith("There is nothing waiting")


def test_unrelated_utterance_abandons_pending_transfer(client_factory, core):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    alice.bot(f"send account no {bob_account} 1000 unit")
    alice.bot("what is my balance")
    # a stale yes must not resurrect the proposal
    assert alice.bot("yes")["bot_text"].startswith("There is nothing waiting")
    assert core.network.ledger.get_state("bal:" + bob_account) == str(INITIAL_BALANCE)


def test_whole_balance_transfer_aborts(client_factory, core):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    alice.bot(f"send account no {bob_account} {INITIAL_BALANCE} units")
    body = alice.bot("yes")
    assert body["status"] == "TRANSACTION ABORTED"
    assert "could not be completed" in body["bot_text"]
    assert core.network.ledger.get_state("bal:" + bob_account) == str(INITIAL_BALANCE)


def test_transfer_to_unknown_account_fails_cleanly(client_factory):
    alice = client_factory("alice").enroll()
    alice.bot("send account no 9999999999 10 units")
    body = alice.bot("yes")
    assert body["status"] == "ERROR_ACCOUNT_NOT_FOUND"


def test_slot_filling_over_http(client_factory, core):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    assert "Which account" in alice.bot("i want to transfer money")["bot_text"]
    assert "How much" in alice.bot(bob_account)["bot_text"]
    assert alice.bot("250")["awaiting_confirmation"] is True
    assert alice.bot("yes")["status"] == "TRANSACTION SUCCESSFUL"


def test_chat_signature_from_wrong_key_rejected(client_factory):
    alice = client_factory("alice").enroll()
    rogue = crypto.generate_keypair()
    reply = alice.say("what is my balance", private_key=rogue.private_key)
    assert reply.status_code == 403


def test_replayed_chat_nonce_rejected(client_factory):
    alice = client_factory("alice").enroll()
    nonce = fresh_nonce()
    assert alice.say("hello", nonce=nonce).status_code == 200
    assert alice.say("hello", nonce=nonce).status_code == 409


def test_chat_requires_session(client_factory):
    alice = client_factory("alice").enroll()
    assert alice.say("hello", session_id="00" * 32).status_code == 401
    assert alice.say("hello", session_id="").status_code == 401


def test_expired_session_rejected(client_factory, core):
    alice = client_factory("alice").enroll()
    core.sessions[alice.session_id].expires_at_ms = 0.0
    assert alice.say("hello").status_code == 401


def test_empty_utterance_rejected(client_factory):
    alice = client_factory("alice").enroll()
    assert alice.say("   ").status_code == 400


def test_malformed_chat_signature_rejected(client_factory, http):
    alice = client_factory("alice").enroll()
    reply = http.post(
        "/api/chat",
        json={
            "session_id": alice.session_id,
            "nonce": fresh_nonce(),
            "utterance": "hello",
            "signature": "%%%not-base64%%%",
        },
    )
    assert reply.status_code == 400


def test_nlu_credential_failure_maps_to_503(client_factory, core):
    alice = client_factory("alice").enroll()
    core.nlu_credential = type(core.nlu_credential)("9" * 64)
    assert alice.say("hello").status_code == 503


# -- explorer --------------------------------------------------------------------


def test_history_shows_own_balance_trail(client_factory, core, http):
    alice = client_factory("alice").enroll()
    bob = client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    alice.bot(f"send account no {bob_account} 1000 unit")
    alice.bot("yes")
    account = core.network.ledger.get_state("acct:alice")
    reply = http.get(
        "/api/explorer/history", params={"session_id": alice.session_id, "account": account}
    )
    assert reply.status_code == 200
    trail = reply.json()["history"]
    assert [entry["value"] for entry in trail] == ["10000", "9000"]
    assert trail[0]["height"] < trail[1]["height"]


def test_cross_user_history_forbidden(client_factory, core, http):
    alice = client_factory("alice").enroll()
    client_factory("bob").enroll()
    bob_account = core.network.ledger.get_state("acct:bob")
    reply = http.get(
        "/api/explorer/history", params={"session_id": alice.session_id, "account": bob_account}
    )
    assert reply.status_code == 403


def test_history_requires_login_and_account(client_factory, http):
    alice = client_factory("alice").enroll()
    assert http.get("/api/explorer/history", params={"account": "1"}).status_code == 401
    assert (
        http.get("/api/explorer/history", params={"session_id": alice.session_id}).status_code
        == 400
    )


def test_block_view_redacts_other_users(client_factory, core, http):
    alice = client_factory("alice").enroll()
    client_factory("bob").enroll()
    # find bob's registration block
    target = None
    for block in core.network.ledger.blocks:
        for tx in block.tx_list:
            if tx.request.get("data", {}).get("userName") == "bob":
                target = block.height
    reply = http.get(
        f"/api/explorer/block/{target}", params={"session_id": alice.session_id}
    ).json()
    assert reply["height"] == target
    for tx in reply["tx_list"]:
        assert "request" not in tx and "response" not in tx
        assert set(tx) == {"tx_id", "submitter", "type", "timestamp", "valid"}

    own = None
    for block in core.network.ledger.blocks:
        for tx in block.tx_list:
            if tx.request.get("data", {}).get("userName") == "alice":
                own = block.height
    mine = http.get(f"/api/explorer/block/{own}", params={"session_id": alice.session_id}).json()
    disclosed = [tx for tx in mine["tx_list"] if "request" in tx]
    assert disclosed and all(
        tx["request"]["data"]["userName"] == "alice" for tx in disclosed
    )


def test_unknown_block_404(client_factory, http):
    alice = client_factory("alice").enroll()
    reply = http.get("/api/explorer/block/999", params={"session_id": alice.session_id})
    assert reply.status_code == 404


# -- modes, persistence, configuration --------------------------------------------


def test_bench_mode_serves_synchronously():
    app = create_app(
        GatewayConfig(mode="bench", nlu_secret=TEST_NLU_SECRET, seed="bench-mode-test")
    )
    with TestClient(app) as http:
        client = WireClient(http, "alice").enroll()
        body = client.bot("what is my balance")
        assert body["status"] == "BALANCE(10000)"
        assert app.state.core.network.ledger.height >= 1


def test_ledger_survives_restart(tmp_path):
    path = str(tmp_path / "chain.jsonl")
    config = GatewayConfig(nlu_secret=TEST_NLU_SECRET, ledger_path=path, seed="persist-test")
    app = create_app(config)
    with TestClient(app) as http:
        WireClient(http, "alice").enroll()
        height = app.state.core.network.ledger.height

    again = create_app(
        GatewayConfig(nlu_secret=TEST_NLU_SECRET, ledger_path=path, seed="persist-test")
    )
    ledger = again.state.core.network.ledger
    assert ledger.height == height
    assert ledger.get_state("user:alice") is not None
    assert ledger.verify_chain()


def test_env_var_overrides_nlu_secret(monkeypatch):
    monkeypatch.setenv("BONIK_NLU_SECRET", "7c" * 32)
    config = GatewayConfig(nlu_secret="11" * 32)
    assert config.nlu_secret == "7c" * 32


def test_unknown_mode_rejected():
    with pytest.raises(GatewayError):
        GatewayConfig(mode="turbo")


# -- standalone language endpoint ---------------------------------------------------


def nlu_app(enabled=True):
    return create_app(
        GatewayConfig(nlu_http=enabled, nlu_secret=TEST_NLU_SECRET, seed="nlu-endpoint")
    )


def test_nlu_endpoint_behind_flag():
    with TestClient(nlu_app(enabled=False)) as http:
        reply = http.post(
            "/internal/nlu",
            json={"session_id": "t", "utterance": "hi", "secret_key": TEST_NLU_SECRET},
        )
        assert reply.status_code == 404


def test_nlu_endpoint_analyzes_and_authenticates():
    with TestClient(nlu_app()) as http:
        good = http.post(
            "/internal/nlu",
            json={
                "session_id": "t",
                "utterance": "send account no 1123158964 1000 unit",
                "secret_key": TEST_NLU_SECRET,
            },
        )
        assert good.status_code == 200
        body = good.json()
        assert body["intent"] == "transfer" and body["complete"] is True
        got = {e["kind"]: e["value"] for e in body["entities"]}
        assert got == {"accountNumber": "1123158964", "amount": "1000"}

        bad = http.post(
            "/internal/nlu",
            json={"session_id": "t", "utterance": "hi", "secret_key": "00" * 32},
        )
        assert bad.status_code == 401
        assert (
            http.post(
                "/internal/nlu", json={"utterance": "hi", "secret_key": TEST_NLU_SECRET}
            ).status_code
            == 400
        )


def test_nlu_endpoint_threads_are_isolated():
    with TestClient(nlu_app()) as http:
        def say(thread, text):
            return http.post(
                "/internal/nlu",
                json={"session_id": thread, "utterance": text, "secret_key": TEST_NLU_SECRET},
            ).json()

        say("a", "transfer money")
        say("b", "hello")
        # thread b has no pending transfer to fill
        out = say("b", "500")
        assert out["intent"] == "unknown"
        # thread a still does
        out = say("a", "1123158964")
        assert out["intent"] == "transfer"


# -- unit pieces -----------------------------------------------------------------


def test_nonce_ledger_accepts_once_then_sweeps():
    ledger = NonceLedger(ttl_ms=1000.0)
    assert ledger.accept("n1", now_ms=0.0)
    assert not ledger.accept("n1", now_ms=10.0)
    # after the ttl the same value is acceptable again (replay window passed)
    assert ledger.accept("n1", now_ms=5000.0)


def test_parsing_builds_requests():
    transfer = EntitySet(
        intent="transfer",
        entities=(
            Entity("accountNumber", "1000000002", (0, 10)),
            Entity("amount", "25", (11, 13)),
        ),
        complete=True,
    )
    request = parsing(transfer, "alice", "1000000001")
    assert request.data.fromAcc == "1000000001"
    assert request.data.toAcc == "1000000002"
    assert request.data.amount == 25

    with pytest.raises(ParsingError):
        parsing(EntitySet(intent="transfer", entities=(), complete=False), "a", "1000000001")
    with pytest.raises(ParsingError):
        # self-transfer surfaces as a parse failure, not a chain submission
        parsing(
            EntitySet(
                intent="transfer",
                entities=(
                    Entity("accountNumber", "1000000001", (0, 10)),
                    Entity("amount", "5", (0, 1)),
                ),
                complete=True,
            ),
            "alice",
            "1000000001",
        )
    with pytest.raises(ParsingError):
        parsing(EntitySet(intent="smalltalk", entities=(), complete=True), "a", "1000000001")
