"""Regenerate frontend/test/fixtures/py_to_ts.json.

The fixture carries signatures, digests, canonical-JSON vectors, and a
sealed envelope produced by this package; the browser client's test
suite must verify/open every one of them. The recipient keypair for the
envelope is generated here and shipped inside the fixture, so the other
side needs nothing but this file.

Run from the repository root: python3 scripts/gen_interop_fixtures.py
"""
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bonik import crypto

MESSAGES = [
    "send account no 1123158964 1000 unit",
    "what is my balance",
    "",
    "ünïcode · 送金 · 🙂",
    "x" * 1000,
]

CANONICAL_OBJECTS = [
    {"b": 1, "a": 2},
    {"nested": {"z": None, "a": [1, 2, 3]}, "flag": True},
    {"userName": "alice", "h": "ab" * 32, "nonce": "00" * 16},
    {"nonce": "11" * 16, "session_id": "22" * 32, "utterance": "send 500 to account 1234567890"},
    {"text": "quotes \" and \\ backslashes \n and tabs \t", "n": 0},
    {"unicode": "héllo wörld 送金", "empty": {}, "list": []},
]


def main() -> None:
    signer = crypto.generate_keypair()
    recipient = crypto.generate_keypair()
    plaintext = "sealed greetings from the gateway side: 送金 🙂"

    fixture = {
        "canonical_vectors": [
            {"object": obj, "canonical": crypto.canonical_bytes(obj).decode("utf-8")}
            for obj in CANONICAL_OBJECTS
        ],
        "sha256_vectors": [
            {"text": m, "hex": crypto.sha256_hex(m.encode("utf-8"))} for m in MESSAGES
        ],
        "signer_public_key": signer.public_b64,
        "signatures": [
            {
                "message": m,
                "signature": crypto.b64e(crypto.sign(signer.private_key, m.encode("utf-8"))),
            }
            for m in MESSAGES
        ]
        + [
            {
                "message": crypto.canonical_bytes(obj).decode("utf-8"),
                "signature": crypto.b64e(
                    crypto.sign(signer.private_key, crypto.canonical_bytes(obj))
                ),
            }
            for obj in CANONICAL_OBJECTS[:2]
        ],
        "envelope_recipient_private_key": recipient.private_b64,
        "envelope_plaintext": plaintext,
        "envelope": crypto.seal(recipient.public_key, plaintext.encode("utf-8")).to_wire(),
    }

    out = pathlib.Path(__file__).resolve().parents[1] / "frontend/test/fixtures/py_to_ts.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
