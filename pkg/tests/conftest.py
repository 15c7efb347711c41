"""Shared fixtures: an in-process gateway with a scripted wire client
standing in for the browser, and the expensive full benchmark grid
(session-scoped so the acceptance tests share one run)."""
import time

import pytest
from fastapi.testclient import TestClient

from bonik import crypto
from bonik.crypto import canonical_bytes, fresh_nonce, sha256_hex
from bonik.gateway import GatewayConfig, create_app

TEST_NLU_SECRET = "5f" * 32


class WireClient:
    """Plays the client side of the wire protocol: seals the registration
    request to the gateway key, signs the login challenge and every chat
    utterance with the key material issued at registration."""

    def __init__(self, http, user_name: str, password: str = "hunter2"):
        self.http = http
        self.user_name = user_name
        self.h = sha256_hex(password.encode("utf-8"))
        raw = http.get("/api/gateway-key").json()["public_key"]
        self.gateway_key = crypto.b64d(raw)
        self.private_key = None
        self.session_id = None

    def seal(self, obj: dict) -> dict:
        return crypto.seal(self.gateway_key, canonical_bytes(obj)).to_wire()

    def register(self, nonce=None, sealed=None):
        nonce = nonce or fresh_nonce()
        if sealed is None:
            sealed = self.seal(
                {"type": "registration", "data": {"userName": self.user_name, "h": self.h}}
            )
        reply = self.http.post("/api/register", json={"nonce": nonce, "sealed_request": sealed})
        if reply.status_code == 200:
            self.private_key = crypto.b64d(reply.json()["resp_prime"]["private_key"])
        return reply

    def login(self, nonce=None, h=None, private_key=None):
        nonce = nonce or fresh_nonce()
        h = h if h is not None else self.h
        key = private_key if private_key is not None else self.private_key
        challenge = canonical_bytes({"userName": self.user_name, "h": h, "nonce": nonce})
        credentials = {
            "userName": self.user_name,
            "h": h,
            "signature": crypto.b64e(crypto.sign(key, challenge)),
        }
        reply = self.http.post(
            "/api/login", json={"nonce": nonce, "sealed_credentials": self.seal(credentials)}
        )
        if reply.status_code == 200:
            self.session_id = reply.json()["session_id"]
        return reply

    def enroll(self) -> "WireClient":
        assert self.register().status_code == 200
        assert self.login().status_code == 200
        return self

    def say(self, utterance: str, nonce=None, private_key=None, session_id=None):
        nonce = nonce or fresh_nonce()
        sid = session_id if session_id is not None else self.session_id
        key = private_key if private_key is not None else self.private_key
        signed = canonical_bytes({"nonce": nonce, "session_id": sid, "utterance": utterance})
        return self.http.post(
            "/api/chat",
            json={
                "session_id": sid,
                "nonce": nonce,
                "utterance": utterance,
                "signature": crypto.b64e(crypto.sign(key, signed)),
            },
        )

    def bot(self, utterance: str) -> dict:
        reply = self.say(utterance)
        assert reply.status_code == 200, reply.text
        return reply.json()


@pytest.fixture
def app():
    return create_app(GatewayConfig(nlu_secret=TEST_NLU_SECRET, seed="gateway-tests"))


@pytest.fixture
def http(app):
    with TestClient(app) as client:
        yield client


@pytest.fixture
def core(app):
    return app.state.core


@pytest.fixture
def client_factory(http):
    def make(user_name: str, password: str = "hunter2") -> WireClient:
        return WireClient(http, user_name, password)

    return make


@pytest.fixture(scope="session")
def seed42_matrix():
    """One full 45-cell grid at seed 42; (matrix, wall seconds)."""
    from bonik.bench import run_matrix

    started = time.monotonic()
    matrix = run_matrix(seed=42)
    return matrix, time.monotonic() - started
