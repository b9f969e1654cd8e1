import pytest

from chopchop.batch import MAX_SEQUENCE, build_proposal
from chopchop.certificates import DeliveryCertificate, DeliveryStatement, full_bitmap
from chopchop.client import Backpressure, Client, Refuse, RepeatedMessage
from chopchop.broker import Reject
from chopchop.messages import DeliveryNotice, MultiSigResponse, ReductionRequest, SubmissionMsg, SubmissionReject


def _client(world, env, x=0, brokers=(0, 1), **kw):
    return Client(x, world.scheme, world.keys[x], world.multi[x], list(brokers), world.server_keys, world.f,
                  env, **kw)


def _proposal(world, client, others=(3, 5), k=None):
    sub = client.flight.submission
    subs = [sub] + [world.submission(o, 0, bytes([o]) * 8) for o in others]
    p = build_proposal(subs)
    k = p.k if k is None else k
    return p, k


def _request(world, client, p, k=None, cert=None, message=None):
    i = p.positions[client.x]
    from chopchop.batch import entry_bytes
    from chopchop.merkle import MerkleTree
    k = p.k if k is None else k
    tree = MerkleTree([entry_bytes(e.x, k, e.message) for e in p.entries])
    return ReductionRequest(0, tree.root, k, message or p.entries[i].message, tree.prove(i), cert), tree


def _notice(world, tree, k, signers=(0, 1), n=2, delivered=None):
    s = world.scheme
    count = tree.leaf_count
    stmt = DeliveryStatement(b"d" * 32, tree.root, k, count,
                             full_bitmap(count) if delivered is None else delivered, bytes((count + 7) // 8))
    cert = DeliveryCertificate(stmt, tuple((j, s.sign(world.server_pairs[j].secret, stmt.signed_bytes()))
                                           for j in signers))
    return lambda i: DeliveryNotice(0, cert, tree.prove(i), world.legit(n))


def test_idle_client_submits_at_once(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    (_, dst, msg), = env.take(SubmissionMsg)
    assert dst == ("b", 0) and msg.submission.k == 0 and msg.submission.message == b"m" * 8


def test_burst_is_buffered_and_flushed_in_order(world, env):
    c = _client(world, env)
    for m in (b"a" * 8, b"b" * 8, b"c" * 8):
        c.broadcast(m)
    assert len(env.take(SubmissionMsg)) == 1 and list(c.buffer) == [b"b" * 8, b"c" * 8]
    sent = [b"a" * 8]
    for _ in range(2):
        p, _ = _proposal(world, c, others=())
        req, tree = _request(world, c, p, cert=c.legitimacy)
        assert not isinstance(c.on_reduction_request(0, req), Refuse)
        assert c.on_delivery_notice(_notice(world, tree, req.k, n=c.k_next + 2)(0))
        (_, _, msg), = env.take(SubmissionMsg)
        sent.append(msg.submission.message)
    assert sent == [b"a" * 8, b"b" * 8, b"c" * 8]
    assert [d.k_next for d in c.completed] == [1, 2]


def test_backpressure_at_cap(world, env):
    c = _client(world, env)
    c.broadcast(b"first---")
    for i in range(1000):
        c.broadcast(i.to_bytes(8, "little"))
    with pytest.raises(Backpressure):
        c.broadcast(b"overflow")


def test_identical_consecutive_message_refused(world, env):
    c = _client(world, env)
    c.broadcast(b"same----")
    with pytest.raises(RepeatedMessage):
        c.broadcast(b"same----")


def test_honest_round_trip_signs_root(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, tree = _request(world, c, p)
    sig = c.on_reduction_request(0, req)
    assert world.scheme.verify_aggregate(world.multi[0].public, tree.root, sig)


def test_foreign_message_refused(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, _ = _request(world, c, p, message=b"M" * 8)
    assert c.on_reduction_request(0, req) is Refuse.FOREIGN_MESSAGE


def test_bad_proof_refused(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, _ = _request(world, c, p)
    bad = ReductionRequest(0, b"\x00" * 32, req.k, req.message, req.proof, None)
    assert c.on_reduction_request(0, bad) is Refuse.BAD_PROOF


def test_max_sequence_without_certificate_refused(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, _ = _request(world, c, p, k=MAX_SEQUENCE)
    assert c.on_reduction_request(0, req) is Refuse.ILLEGITIMATE_SEQUENCE
    # a certificate signed by too few servers does not help
    weak, _ = _request(world, c, p, k=MAX_SEQUENCE, cert=world.legit(MAX_SEQUENCE, signers=[0]))
    assert c.on_reduction_request(0, weak) is Refuse.ILLEGITIMATE_SEQUENCE
    ok, _ = _request(world, c, p, k=6, cert=world.legit(7))
    assert not isinstance(c.on_reduction_request(0, ok), Refuse)


def test_no_flight(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, _ = _request(world, c, p)
    assert c.on_reduction_request(1, req) is Refuse.NO_FLIGHT


def test_certificate_with_f_signatures_rejected(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, tree = _request(world, c, p)
    c.on_reduction_request(0, req)
    i = p.positions[0]
    assert not c.on_delivery_notice(_notice(world, tree, 0, signers=(0,))(i))
    assert not c.on_delivery_notice(_notice(world, tree, 0, signers=(2, 2))(i))
    assert c.flight is not None
    assert c.on_delivery_notice(_notice(world, tree, 0, signers=(1, 3))(i))


def test_certificate_omitting_message_is_not_delivery(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, tree = _request(world, c, p)
    c.on_reduction_request(0, req)
    i = p.positions[0]
    assert not c.on_delivery_notice(_notice(world, tree, 0, delivered=bytes([0x7F & ~(0x80 >> i)]))(i))
    assert c.k_next == 0


def test_straggler_completion(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    # never signed: the entry straggled under its own k = 0 while the batch carries k = 4
    sub = c.flight.submission
    p = build_proposal([sub, world.submission(3, 4, b"x" * 8, world.legit(5))])
    from chopchop.batch import entry_bytes
    from chopchop.merkle import MerkleTree
    tree = MerkleTree([entry_bytes(e.x, 4, e.message) for e in p.entries])
    assert c.on_delivery_notice(_notice(world, tree, 4, n=6)(0))
    assert c.k_next == 1
    assert c.legitimacy.n == 6
    c.broadcast(b"n" * 8)
    (_, _, msg), *_ = reversed(env.take(SubmissionMsg))
    assert msg.submission.k == 1 and msg.submission.legitimacy.n == 6


def test_failover_round_robin_and_backoff(world, env):
    c = _client(world, env, brokers=(0, 1), timeout=1.0)
    c.broadcast(b"m" * 8)
    first = env.take(SubmissionMsg)
    env.run_timers(until=1.0)
    (_, dst, msg), = env.take(SubmissionMsg)
    assert dst == ("b", 1) and msg.submission == first[0][2].submission
    env.run_timers(until=2.0)
    (_, dst, _), = env.take(SubmissionMsg)
    assert dst == ("b", 0) and c.timeout == 2.0
    for _ in range(10):
        c.failover()
    assert c.timeout == Client.MAX_BACKOFF * 1.0


def test_reject_triggers_failover(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    env.take()
    c.handle(("b", 0), SubmissionReject(0, int(Reject.MISSING_LEGITIMACY)))
    (_, dst, _), = env.take(SubmissionMsg)
    assert dst == ("b", 1)
    c.handle(("b", 1), SubmissionReject(0, int(Reject.WINDOW_FULL)))
    env.run_timers(until=0.1)
    (_, dst, _), = env.take(SubmissionMsg)
    assert dst == ("b", 1)


def test_handle_replies_with_multisig(world, env):
    c = _client(world, env)
    c.broadcast(b"m" * 8)
    p, _ = _proposal(world, c)
    req, _ = _request(world, c, p)
    c.handle(("b", 0), req)
    (_, dst, resp), = env.take(MultiSigResponse)
    assert dst == ("b", 0) and resp.x == 0


def test_sequence_ranges_disjoint(world, env):
    c = _client(world, env)
    c.broadcast(b"a" * 8)
    p, _ = _proposal(world, c)
    req, tree = _request(world, c, p, k=3, cert=world.legit(4))
    c.on_reduction_request(0, req)
    c.on_delivery_notice(_notice(world, tree, 3, n=5)(p.positions[0]))
    assert c.k_next == 4
    c.broadcast(b"b" * 8)
    ks = [r for _, r in c.ranges]
    assert ks[0] == {0, 3} and ks[1] == {4}
