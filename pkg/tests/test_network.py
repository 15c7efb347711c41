"""Simulated network: MSP, endorsement schemes, write/read pipelines."""
import json

import pytest

from bonik.network import (
    MSP,
    BatchPolicy,
    Identity,
    LatencyProfile,
    MspError,
    Network,
    NetworkError,
    Topology,
    load_network_config,
)
from bonik.simclock import VirtualClock

H = "ab" * 32


def registration(name):
    return {"type": "registration", "data": {"userName": name, "h": H}}


def bal_query(name, account):
    return {"type": "balQuery", "data": {"userName": name, "accountNum": account}}


def make_network(**kwargs):
    kwargs.setdefault("clock", VirtualClock())
    kwargs.setdefault("endorsement_scheme", "hmac")
    kwargs.setdefault("seed", "net-tests")
    return Network(**kwargs)


def submit_and_run(network, identity, request):
    handle = network.submit_transaction(identity, request)
    network.clock.run_until_idle()
    assert handle.done
    return handle.result


def test_topology_presets():
    for name, peers in (("2O2P", 2), ("2O4P", 4), ("2O6P", 6)):
        topo = Topology.resolve(name)
        assert topo.orderer_count == 2
        assert topo.total_peers == peers
        assert topo.total_endorsers == 4
    with pytest.raises(NetworkError):
        Topology.resolve("3O9P")
    custom = Topology.resolve({"name": "t", "orderer_count": 1, "peers_per_org": 4})
    assert custom.total_peers == 8
    assert Topology.resolve(custom) is custom


def test_latency_profile_validation():
    with pytest.raises(NetworkError):
        LatencyProfile(read_ms=-1)
    with pytest.raises(NetworkError):
        LatencyProfile.from_dict({"warp_ms": 1})
    profile = LatencyProfile.from_dict({"read_ms": 3})
    assert profile.read_ms == 3.0


def test_batch_policy_validation():
    with pytest.raises(NetworkError):
        BatchPolicy(batch_timeout_ms=0)
    with pytest.raises(NetworkError):
        BatchPolicy(max_message_count=0)
    with pytest.raises(NetworkError):
        BatchPolicy.from_dict({"max_batch": 3})


def test_msp_issues_verifiable_certificates():
    msp = MSP(seed="msp-test")
    identity = msp.register_identity("alice", "user")
    assert msp.verify_certificate(identity)
    with pytest.raises(MspError):
        msp.register_identity("alice", "user")
    with pytest.raises(MspError):
        msp.register_identity("bob", "wizard")
    assert msp.get("alice", "user") is identity
    assert msp.get("nobody") is None


def test_msp_rejects_forged_certificate():
    msp = MSP(seed="msp-test")
    real = msp.register_identity("alice", "user")
    rogue = MSP(seed="other-root").register_identity("mallory", "user")
    assert not msp.verify_certificate(rogue)
    # same keys, claimed different name: binding no longer matches
    renamed = Identity(
        name="admin", role="user", keypair=real.keypair, certificate=real.certificate
    )
    assert not msp.verify_certificate(renamed)


def test_seeded_msp_is_reproducible():
    a = MSP(seed="fixed").register_identity("alice", "user")
    b = MSP(seed="fixed").register_identity("alice", "user")
    assert a.keypair.public_key == b.keypair.public_key
    assert a.keypair.private_key == b.keypair.private_key


def test_unregistered_identity_rejected_immediately():
    network = make_network()
    stranger = MSP(seed="elsewhere").register_identity("eve", "user")
    handle = network.submit_transaction(stranger, registration("eve"))
    assert handle.done  # rejected synchronously, no simulated latency
    assert handle.result.status == "ERROR_IDENTITY"
    assert network.ledger.height == -1


def test_single_write_latency_matches_stage_sum():
    # endorse 5 + batch timeout 1000 + order 5+6*1 + disseminate 30*2 + commit 5
    network = make_network(topology="2O2P")
    client = network.msp.register_identity("alice", "user")
    result = submit_and_run(network, client, registration("alice"))
    assert result.status == "TRUE"
    assert result.latency_ms == pytest.approx(1081.0)
    assert result.block_height == 0


def test_dissemination_cost_scales_with_peers():
    latencies = {}
    for name in ("2O2P", "2O4P", "2O6P"):
        network = make_network(topology=name)
        client = network.msp.register_identity("alice", "user")
        latencies[name] = submit_and_run(network, client, registration("alice")).latency_ms
    assert latencies["2O4P"] - latencies["2O2P"] == pytest.approx(60.0)
    assert latencies["2O6P"] - latencies["2O4P"] == pytest.approx(60.0)


def test_writes_inside_window_share_a_block():
    network = make_network()
    a = network.msp.register_identity("alice", "user")
    b = network.msp.register_identity("bob", "user")
    ha = network.submit_transaction(a, registration("alice"))
    network.clock.advance_until(200.0)
    hb = network.submit_transaction(b, registration("bob"))
    network.clock.run_until_idle()
    assert ha.result.block_height == hb.result.block_height == 0
    assert len(network.ledger.blocks[0].tx_list) == 2
    # the batch window opened at the first arrival, not the second
    assert ha.result.completed_at_ms == hb.result.completed_at_ms


def test_max_message_count_cuts_early():
    network = make_network(batch=BatchPolicy(batch_timeout_ms=1000.0, max_message_count=2))
    clients = [network.msp.register_identity(f"u{i}", "user") for i in range(3)]
    handles = [
        network.submit_transaction(c, registration(f"u{i}")) for i, c in enumerate(clients)
    ]
    network.clock.run_until_idle()
    assert handles[0].result.block_height == handles[1].result.block_height == 0
    assert handles[2].result.block_height == 1
    assert len(network.ledger.blocks[0].tx_list) == 2
    # full batch never waits out the timeout
    assert handles[0].result.latency_ms < 1000.0


def test_reads_do_not_touch_the_chain():
    network = make_network()
    client = network.msp.register_identity("alice", "user")
    account = submit_and_run(network, client, registration("alice")).response["detail"]
    height = network.ledger.height
    result = submit_and_run(network, client, bal_query("alice", account))
    assert result.status == "BALANCE(10000)"
    assert result.read
    assert result.block_height is None
    assert network.ledger.height == height
    assert result.latency_ms == pytest.approx(9.24)


def test_read_contention_term():
    network = make_network(concurrent_clients=11)
    client = network.msp.register_identity("alice", "user")
    account = submit_and_run(network, client, registration("alice")).response["detail"]
    result = submit_and_run(network, client, bal_query("alice", account))
    assert result.latency_ms == pytest.approx(9.24 + 0.09 * 10)


def test_reads_round_robin_and_queue_per_peer():
    # 2O2P has two peer lanes: three simultaneous reads put two in service
    # and queue the third behind lane 0
    network = make_network()
    client = network.msp.register_identity("alice", "user")
    account = submit_and_run(network, client, registration("alice")).response["detail"]
    handles = [network.submit_transaction(client, bal_query("alice", account)) for _ in range(3)]
    network.clock.run_until_idle()
    assert handles[0].result.latency_ms == pytest.approx(9.24)
    assert handles[1].result.latency_ms == pytest.approx(9.24)
    assert handles[2].result.latency_ms == pytest.approx(2 * 9.24)


def test_ecdsa_scheme_verifies_on_chain():
    network = make_network(endorsement_scheme="ecdsa")
    client = network.msp.register_identity("alice", "user")
    result = submit_and_run(network, client, registration("alice"))
    assert result.status == "TRUE"
    assert network.ledger.verify_chain()
    endorsement = network.ledger.blocks[0].tx_list[0].endorsements[0]
    assert len(endorsement.signature) == 64


def test_hmac_scheme_verifies_on_chain():
    network = make_network(endorsement_scheme="hmac")
    client = network.msp.register_identity("alice", "user")
    submit_and_run(network, client, registration("alice"))
    assert network.ledger.verify_chain()
    endorsement = network.ledger.blocks[0].tx_list[0].endorsements[0]
    assert len(endorsement.signature) == 32  # sha256 tag, not an ECDSA pair


def test_unknown_scheme_rejected():
    with pytest.raises(NetworkError):
        make_network(endorsement_scheme="morse")


def test_advance_requires_virtual_clock():
    from bonik.simclock import ImmediateClock

    network = Network(clock=ImmediateClock(), seed="x")
    with pytest.raises(NetworkError):
        network.advance_virtual_time(1000.0)


def test_advance_collects_completed_results():
    network = make_network()
    client = network.msp.register_identity("alice", "user")
    network.submit_transaction(client, registration("alice"))
    collected = network.advance_virtual_time(2000.0)
    assert [r.status for r in collected] == ["TRUE"]
    assert network.advance_virtual_time(3000.0) == []


def test_load_network_config(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(
        json.dumps(
            {
                "topology": "2O4P",
                "latency_ms": {"read_ms": 4.0},
                "batch": {"batch_timeout_ms": 500.0, "max_message_count": 10},
            }
        )
    )
    topology, latency, batch = load_network_config(str(path))
    assert topology.name == "2O4P"
    assert latency.read_ms == 4.0
    assert batch.max_message_count == 10
