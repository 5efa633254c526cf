import math
import socket
import threading

import numpy as np
import pytest

from aqua_qkd.bb84.cascade import (
    ProtocolError,
    RemoteOracle,
    cascade_reconcile,
    reconcile_with_oracle,
    serve_parity_queries,
)
from aqua_qkd.bb84.classical_channel import FramedStreamChannel, InProcessChannelPair


def binary_entropy(p: float) -> float:
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def bsc_pair(rng, n: int, p: float):
    alice = rng.integers(0, 2, n, dtype=np.uint8)
    bob = alice ^ (rng.random(n) < p).astype(np.uint8)
    return alice, bob


class TestCascadeReconcile:
    def test_identical_keys_stay_identical(self):
        rng = np.random.default_rng(0)
        alice = rng.integers(0, 2, 1024, dtype=np.uint8)
        reconciled, leaked = cascade_reconcile(alice, alice.copy(), 0.03, None, rng)
        assert np.array_equal(reconciled, alice)
        assert leaked > 0  # parities are disclosed even when nothing is wrong

    def test_single_error_is_corrected(self):
        rng = np.random.default_rng(1)
        alice = rng.integers(0, 2, 1024, dtype=np.uint8)
        bob = alice.copy()
        bob[517] ^= 1
        reconciled, _ = cascade_reconcile(alice, bob, 0.01, None, rng)
        assert np.array_equal(reconciled, alice)

    def test_bsc_trials_converge(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            alice, bob = bsc_pair(rng, 4096, 0.03)
            reconciled, _ = cascade_reconcile(alice, bob, 0.03, None, rng)
            assert np.array_equal(reconciled, alice)

    def test_leak_is_near_shannon_limit(self):
        rng = np.random.default_rng(3)
        n = 10_000
        fractions = []
        for _ in range(5):
            alice, bob = bsc_pair(rng, n, 0.03)
            reconciled, leaked = cascade_reconcile(alice, bob, 0.03, None, rng)
            assert np.array_equal(reconciled, alice)
            fractions.append(leaked / n)
        h2 = binary_entropy(0.03)
        assert h2 <= np.mean(fractions) <= 1.6 * h2

    def test_alice_key_is_never_modified(self):
        rng = np.random.default_rng(4)
        alice, bob = bsc_pair(rng, 2048, 0.05)
        snapshot = alice.copy()
        cascade_reconcile(alice, bob, 0.05, None, rng)
        assert np.array_equal(alice, snapshot)

    def test_leak_matches_channel_accounting(self):
        rng = np.random.default_rng(5)
        alice, bob = bsc_pair(rng, 2048, 0.03)
        chan = InProcessChannelPair()
        _, leaked = cascade_reconcile(alice, bob, 0.03, chan, rng)
        assert leaked == chan.bits_disclosed

    def test_length_mismatch(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ProtocolError):
            cascade_reconcile(np.zeros(100, dtype=np.uint8), np.zeros(99, dtype=np.uint8), 0.03, None, rng)

    def test_key_too_short(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ProtocolError):
            cascade_reconcile(np.zeros(8, dtype=np.uint8), np.zeros(8, dtype=np.uint8), 0.03, None, rng)

    @pytest.mark.parametrize("qber", [0.0, 0.5, 1.0])
    def test_invalid_qber_estimate(self, qber):
        rng = np.random.default_rng(8)
        key = np.zeros(1024, dtype=np.uint8)
        with pytest.raises(ProtocolError):
            cascade_reconcile(key, key.copy(), qber, None, rng)


class TestRemoteOracle:
    def test_reconcile_over_byte_stream(self):
        rng = np.random.default_rng(9)
        alice, bob = bsc_pair(rng, 2048, 0.03)

        alice_sock, bob_sock = socket.socketpair()
        alice_chan = FramedStreamChannel(alice_sock)
        bob_chan = FramedStreamChannel(bob_sock)
        server = threading.Thread(target=serve_parity_queries, args=(alice, alice_chan))
        server.start()
        try:
            oracle = RemoteOracle(bob_chan)
            reconciled = reconcile_with_oracle(bob, 0.03, oracle, np.random.default_rng(10))
            oracle.close()
        finally:
            server.join(timeout=30)
            alice_sock.close()
            bob_sock.close()
        assert not server.is_alive()
        assert np.array_equal(reconciled, alice)
        assert oracle.bits_disclosed > 0

    def test_remote_leak_matches_in_process(self):
        # The same dialogue must be charged identically on both transports.
        make_keys = lambda: bsc_pair(np.random.default_rng(11), 1024, 0.03)

        alice, bob = make_keys()
        chan = InProcessChannelPair()
        _, leaked_local = cascade_reconcile(alice, bob, 0.03, chan, np.random.default_rng(12))

        alice, bob = make_keys()
        alice_sock, bob_sock = socket.socketpair()
        alice_chan = FramedStreamChannel(alice_sock)
        bob_chan = FramedStreamChannel(bob_sock)
        server = threading.Thread(target=serve_parity_queries, args=(alice, alice_chan))
        server.start()
        try:
            oracle = RemoteOracle(bob_chan)
            reconcile_with_oracle(bob, 0.03, oracle, np.random.default_rng(12))
            oracle.close()
        finally:
            server.join(timeout=30)
            alice_sock.close()
            bob_sock.close()
        assert oracle.bits_disclosed == leaked_local
