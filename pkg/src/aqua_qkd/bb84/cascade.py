"""CASCADE interactive error reconciliation.

Bob drives the dialogue: he asks Alice for block parities over the classical
channel, binary-searches mismatched blocks to locate single errors, and
propagates each correction back through every earlier pass whose block
parities are already on record.  A final verification stage compares random
subset parities until a configurable run of consecutive matches.

Every parity bit Alice reveals increments the channel's leak accountant;
permutation announcements carry no key information and are not counted.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .classical_channel import (
    MSG_PARITY_REQUEST,
    MSG_PARITY_RESPONSE,
    MSG_PERMUTATION_SEED,
    MSG_VERIFICATION,
    InProcessChannelPair,
)

FIRST_PASS_COEFF = 0.73
DEFAULT_PASSES = 4
DEFAULT_VERIFY_PARITIES = 64


class ProtocolError(RuntimeError):
    pass


def _pack_indices(indices: np.ndarray) -> bytes:
    return np.asarray(indices, dtype=np.uint32).tobytes()


def _unpack_indices(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=np.uint32).astype(np.int64)


def serve_parity_queries(alice_key, channel) -> None:
    """Answer parity queries over ``channel`` until an empty VERIFICATION frame.

    Used when Alice's endpoint lives behind a byte-stream transport; the
    in-process path services queries inline instead.
    """
    key = np.asarray(alice_key, dtype=np.uint8)
    while True:
        msg_type, payload = channel.recv()
        if msg_type == MSG_PERMUTATION_SEED:
            continue  # informational
        if msg_type in (MSG_PARITY_REQUEST, MSG_VERIFICATION):
            if msg_type == MSG_VERIFICATION and not payload:
                return
            idx = _unpack_indices(payload)
            parity = int(key[idx].sum() & 1)
            channel.send(MSG_PARITY_RESPONSE, bytes([parity]), disclosed_bits=1)
        else:
            raise ProtocolError(f"unexpected message type {msg_type:#x}")


class _PairedOracle:
    """Parity oracle over an in-process channel pair, serving Alice inline."""

    def __init__(self, alice_key: np.ndarray, pair: InProcessChannelPair):
        self._key = alice_key
        self._pair = pair

    def _roundtrip(self, msg_type: int, idx: np.ndarray) -> int:
        self._pair.bob.send(msg_type, _pack_indices(idx))
        req_type, payload = self._pair.alice.recv()
        indices = _unpack_indices(payload)
        parity = int(self._key[indices].sum() & 1)
        self._pair.alice.send(MSG_PARITY_RESPONSE, bytes([parity]), disclosed_bits=1)
        _, resp = self._pair.bob.recv()
        return resp[0]

    def parity(self, idx: np.ndarray) -> int:
        return self._roundtrip(MSG_PARITY_REQUEST, idx)

    def verify_parity(self, idx: np.ndarray) -> int:
        return self._roundtrip(MSG_VERIFICATION, idx)

    def announce_permutation(self, seed: int):
        self._pair.bob.send(MSG_PERMUTATION_SEED, struct.pack(">Q", seed))
        self._pair.alice.recv()

    def close(self):
        pass

    @property
    def bits_disclosed(self) -> int:
        return self._pair.bits_disclosed


class RemoteOracle:
    """Parity oracle over a single framed endpoint; Alice answers remotely."""

    def __init__(self, channel):
        self._chan = channel

    def _roundtrip(self, msg_type: int, idx: np.ndarray) -> int:
        self._chan.send(msg_type, _pack_indices(idx))
        resp_type, payload = self._chan.recv()
        if resp_type != MSG_PARITY_RESPONSE:
            raise ProtocolError(f"expected parity response, got {resp_type:#x}")
        # Bob's endpoint mirrors the leak accounting of Alice's disclosure.
        self._chan._accountant.add(1)
        return payload[0]

    def parity(self, idx: np.ndarray) -> int:
        return self._roundtrip(MSG_PARITY_REQUEST, idx)

    def verify_parity(self, idx: np.ndarray) -> int:
        return self._roundtrip(MSG_VERIFICATION, idx)

    def announce_permutation(self, seed: int):
        self._chan.send(MSG_PERMUTATION_SEED, struct.pack(">Q", seed))

    def close(self):
        self._chan.send(MSG_VERIFICATION, b"")

    @property
    def bits_disclosed(self) -> int:
        return self._chan.bits_disclosed


def _binary_search_flip(bob: np.ndarray, idx: np.ndarray, oracle) -> int:
    """Locate and flip one error inside a block with mismatched parity."""
    while len(idx) > 1:
        half = len(idx) // 2
        left = idx[:half]
        a_par = oracle.parity(left)
        b_par = int(bob[left].sum() & 1)
        idx = left if a_par != b_par else idx[half:]
    pos = int(idx[0])
    bob[pos] ^= 1
    return pos


def reconcile_with_oracle(
    bob_key,
    qber_estimate: float,
    oracle,
    rng,
    passes: int = DEFAULT_PASSES,
    verify_parities: int = DEFAULT_VERIFY_PARITIES,
) -> np.ndarray:
    """Run the multi-pass reconciliation dialogue; returns Bob's corrected key."""
    bob = np.array(bob_key, dtype=np.uint8).copy()
    n = len(bob)
    if n < 16:
        raise ProtocolError(f"key too short to reconcile ({n} bits)")
    if not 0.0 < qber_estimate < 0.5:
        raise ProtocolError(f"qber_estimate must lie in (0, 0.5), got {qber_estimate}")

    k1 = math.ceil(FIRST_PASS_COEFF / qber_estimate)
    pass_blocks: list[list[np.ndarray]] = []
    block_of: list[np.ndarray] = []
    alice_parity: list[list[int | None]] = []

    def enqueue_affected(flipped: int, upto: int, queue: list):
        for q in range(upto + 1):
            b = int(block_of[q][flipped])
            a_par = alice_parity[q][b]
            if a_par is None:
                continue
            blk = pass_blocks[q][b]
            if int(bob[blk].sum() & 1) != a_par:
                queue.append((q, b))

    for p in range(passes):
        size = min(n, k1 * (2**p))
        if p == 0:
            perm = np.arange(n)
        else:
            seed = int(rng.integers(0, 2**63))
            oracle.announce_permutation(seed)
            perm = np.random.default_rng(seed).permutation(n)
        blocks = [perm[i : i + size] for i in range(0, n, size)]
        mapping = np.empty(n, dtype=np.int64)
        for b, blk in enumerate(blocks):
            mapping[blk] = b
        pass_blocks.append(blocks)
        block_of.append(mapping)
        alice_parity.append([None] * len(blocks))

        queue: list[tuple[int, int]] = []
        for b, blk in enumerate(blocks):
            a_par = oracle.parity(blk)
            alice_parity[p][b] = a_par
            if int(bob[blk].sum() & 1) != a_par:
                queue.append((p, b))
        while queue:
            q, b = queue.pop()
            blk = pass_blocks[q][b]
            if int(bob[blk].sum() & 1) == alice_parity[q][b]:
                continue  # already fixed by an earlier cascade
            flipped = _binary_search_flip(bob, blk, oracle)
            enqueue_affected(flipped, p, queue)

    # Verification stage: random subset parities until a clean run.
    consecutive = 0
    checks = 0
    while consecutive < verify_parities and checks < 8 * verify_parities:
        subset = np.nonzero(rng.random(n) < 0.5)[0]
        if subset.size == 0:
            continue
        checks += 1
        a_par = oracle.verify_parity(subset)
        if int(bob[subset].sum() & 1) != a_par:
            flipped = _binary_search_flip(bob, subset, oracle)
            queue: list[tuple[int, int]] = []
            enqueue_affected(flipped, passes - 1, queue)
            while queue:
                q, b = queue.pop()
                blk = pass_blocks[q][b]
                if int(bob[blk].sum() & 1) == alice_parity[q][b]:
                    continue
                flipped = _binary_search_flip(bob, blk, oracle)
                enqueue_affected(flipped, passes - 1, queue)
            consecutive = 0
        else:
            consecutive += 1
    return bob


def cascade_reconcile(
    alice_key,
    bob_key,
    qber_estimate: float,
    chan: InProcessChannelPair | None,
    rng,
    passes: int = DEFAULT_PASSES,
    verify_parities: int = DEFAULT_VERIFY_PARITIES,
) -> tuple[np.ndarray, int]:
    """Reconcile Bob's key against Alice's; returns (corrected_bob, leaked_bits).

    Alice's key is never modified; all disclosures flow through ``chan``'s
    leak accountant.
    """
    alice = np.asarray(alice_key, dtype=np.uint8)
    bob = np.asarray(bob_key, dtype=np.uint8)
    if len(alice) != len(bob):
        raise ProtocolError(f"key length mismatch: {len(alice)} vs {len(bob)}")
    if chan is None:
        chan = InProcessChannelPair()
    oracle = _PairedOracle(alice, chan)
    reconciled = reconcile_with_oracle(
        bob, qber_estimate, oracle, rng, passes=passes, verify_parities=verify_parities
    )
    return reconciled, chan.bits_disclosed
