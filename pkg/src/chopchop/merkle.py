"""Binary Merkle tree with domain-separated hashing and inclusion proofs.

Leaves hash as ``H(0x00 || leaf)`` and internal nodes as ``H(0x01 || L || R)``.
When a level has an odd number of nodes the last one is promoted to the next
level unpaired, so a tree over ``l`` leaves has height ``ceil(log2 l)``.

Proofs carry the leaf count: with promotion, which levels contribute a sibling
depends on ``l``, and a verifier that guessed it could be fed a proof for a
different position.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


def hash_leaf(leaf: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + leaf).digest()


def hash_node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


def height(count: int) -> int:
    return (count - 1).bit_length()


@dataclass(frozen=True)
class InclusionProof:
    index: int
    leaf_count: int
    path: tuple[bytes, ...]

    def encode(self) -> bytes:
        return struct.pack("<IIB", self.index, self.leaf_count, len(self.path)) + b"".join(self.path)

    @classmethod
    def decode(cls, data: bytes) -> "InclusionProof":
        proof, rest = cls.decode_from(data)
        if rest:
            raise ValueError("trailing bytes after inclusion proof")
        return proof

    @classmethod
    def decode_from(cls, data: bytes) -> tuple["InclusionProof", bytes]:
        """Parse a proof from the front of ``data``; return it with the remainder."""
        if len(data) < 9:
            raise ValueError("truncated inclusion proof header")
        index, count, length = struct.unpack_from("<IIB", data)
        end = 9 + 32 * length
        if len(data) < end:
            raise ValueError("truncated inclusion proof path")
        path = tuple(data[9 + 32 * i: 9 + 32 * (i + 1)] for i in range(length))
        return cls(index, count, path), data[end:]

    @property
    def size(self) -> int:
        return 9 + 32 * len(self.path)


class MerkleTree:
    """Immutable tree over an ordered, non-empty list of leaves."""

    def __init__(self, leaves):
        if not leaves:
            raise ValueError("Merkle tree needs at least one leaf")
        level = [hash_leaf(leaf) for leaf in leaves]
        self.levels = [level]
        while len(level) > 1:
            nxt = [hash_node(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            self.levels.append(nxt)
            level = nxt

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0])

    def prove(self, index: int) -> InclusionProof:
        if not 0 <= index < self.leaf_count:
            raise IndexError(f"leaf index {index} out of range for {self.leaf_count} leaves")
        path = []
        pos = index
        for level in self.levels[:-1]:
            sibling = pos ^ 1
            if sibling < len(level):
                path.append(level[sibling])
            pos //= 2
        return InclusionProof(index, self.leaf_count, tuple(path))


def build(leaves) -> MerkleTree:
    return MerkleTree(leaves)


def prove(tree: MerkleTree, index: int) -> InclusionProof:
    return tree.prove(index)


def root_of(leaves) -> bytes:
    """Root without keeping intermediate levels (the server-side fast path)."""
    if not leaves:
        raise ValueError("Merkle tree needs at least one leaf")
    sha = hashlib.sha256
    level = [sha(LEAF_PREFIX + leaf).digest() for leaf in leaves]
    while len(level) > 1:
        odd = level[-1] if len(level) % 2 else None
        level = [sha(NODE_PREFIX + a + b).digest() for a, b in zip(level[0::2], level[1::2])]
        if odd is not None:
            level.append(odd)
    return level[0]


def verify_proof(root: bytes, index: int, leaf: bytes, proof: InclusionProof) -> bool:
    count = proof.leaf_count
    if index != proof.index or not 0 <= index < count:
        return False
    node = hash_leaf(leaf)
    path = iter(proof.path)
    used = 0
    pos, width = index, count
    while width > 1:
        if pos ^ 1 < width:
            try:
                sibling = next(path)
            except StopIteration:
                return False
            used += 1
            node = hash_node(sibling, node) if pos & 1 else hash_node(node, sibling)
        pos //= 2
        width = (width + 1) // 2
    return used == len(proof.path) and node == root
