#!/usr/bin/env python3
"""Scripted end-to-end conversation against an in-process gateway.

Plays the whole client role over the HTTP API: seals the registration
request to the gateway key, logs in with a signed challenge, then walks
a balance query and a confirmed transfer, printing the transcript.
Useful as a living example of the wire formats.
"""
import json
import sys

from fastapi.testclient import TestClient

from bonik import crypto
from bonik.crypto import canonical_bytes, fresh_nonce, sha256_hex
from bonik.gateway import GatewayConfig, create_app


class ChatClient:
    def __init__(self, http, user_name: str, password: str):
        self.http = http
        self.user_name = user_name
        self.h = sha256_hex(password.encode("utf-8"))
        raw = http.get("/api/gateway-key").json()["public_key"]
        self.gateway_key = crypto.b64d(raw)
        self.private_key = None
        self.session_id = None

    def _seal(self, obj: dict) -> dict:
        return crypto.seal(self.gateway_key, canonical_bytes(obj)).to_wire()

    def register(self) -> dict:
        nonce = fresh_nonce()
        request = {"type": "registration", "data": {"userName": self.user_name, "h": self.h}}
        reply = self.http.post(
            "/api/register", json={"nonce": nonce, "sealed_request": self._seal(request)}
        )
        reply.raise_for_status()
        body = reply.json()
        assert body["nonce"] == nonce, "response echoes a different nonce"
        assert body["digest"] == sha256_hex(canonical_bytes(body["resp_prime"]))
        self.private_key = crypto.b64d(body["resp_prime"]["private_key"])
        return body

    def login(self) -> dict:
        nonce = fresh_nonce()
        challenge = canonical_bytes({"userName": self.user_name, "h": self.h, "nonce": nonce})
        credentials = {
            "userName": self.user_name,
            "h": self.h,
            "signature": crypto.b64e(crypto.sign(self.private_key, challenge)),
        }
        reply = self.http.post(
            "/api/login", json={"nonce": nonce, "sealed_credentials": self._seal(credentials)}
        )
        reply.raise_for_status()
        body = reply.json()
        self.session_id = body["session_id"]
        return body

    def say(self, utterance: str) -> dict:
        nonce = fresh_nonce()
        signed = canonical_bytes(
            {"nonce": nonce, "session_id": self.session_id, "utterance": utterance}
        )
        reply = self.http.post(
            "/api/chat",
            json={
                "session_id": self.session_id,
                "nonce": nonce,
                "utterance": utterance,
                "signature": crypto.b64e(crypto.sign(self.private_key, signed)),
            },
        )
        reply.raise_for_status()
        return reply.json()


def main() -> int:
    app = create_app(GatewayConfig(seed="chat-demo"))
    http = TestClient(app)

    alice = ChatClient(http, "alice", "correct horse")
    bob = ChatClient(http, "bob", "battery staple")
    for client in (alice, bob):
        registered = client.register()
        client.login()
        account = registered["resp_prime"]["resp"]["status"]
        print(f"registered {client.user_name}: {account}")

    bob_account = http.app.state.core.network.ledger.get_state("acct:bob")
    script = [
        "hello",
        "what is my balance",
        f"send account no {bob_account} 2500 unit",
        "yes",
        "balance",
    ]
    for utterance in script:
        body = alice.say(utterance)
        print(f"alice> {utterance}")
        print(f"  bot> {body['bot_text']}")

    alice_account = http.app.state.core.network.ledger.get_state("acct:alice")
    history = http.get(
        "/api/explorer/history",
        params={"session_id": alice.session_id, "account": alice_account},
    ).json()
    print(f"\nbalance history of {alice_account}:")
    for entry in history["history"]:
        print(f"  block {entry['height']}: {entry['value']}")

    height = http.app.state.core.network.ledger.height
    block = http.get(
        f"/api/explorer/block/{height}", params={"session_id": alice.session_id}
    ).json()
    print(f"\nnewest block ({height}):")
    print(json.dumps(block, indent=2)[:600])
    return 0


if __name__ == "__main__":
    sys.exit(main())
