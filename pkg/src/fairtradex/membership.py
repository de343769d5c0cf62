"""Simulated set-membership layer: commitments, Merkle proofs, nullifiers.

This stands in for a real zero-knowledge membership scheme behind the same
interface (prove/verify against a root, with a revealed serial number and a
binding to a committed message).  Proofs here are plain Merkle paths, which
are *not* hiding: the path discloses the leaf position.  Completeness,
soundness against non-members, nullifier semantics and message binding are
the behaviours the protocol layer relies on, and a hiding backend could be
swapped in without touching callers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

DIGEST_SIZE = 32
_H_KEY = b"wsfba-hash-v1"

# Side tags for serialized path nodes.
_NODE_LEAF = 2
_SIB_RIGHT = 0  # sibling sits to the right of the running node
_SIB_LEFT = 1


def h(*parts: bytes) -> bytes:
    """The single keyed 256-bit hash used for commitments, trees and tie-breaks."""
    ctx = hashlib.blake2b(key=_H_KEY, digest_size=DIGEST_SIZE)
    for p in parts:
        ctx.update(p)
    return ctx.digest()


class EmptySet(Exception):
    pass


class NotAMember(Exception):
    pass


class MalformedProof(Exception):
    pass


@dataclass(frozen=True)
class Secret:
    """Per-registration secret: serial number S and randomness r."""

    s: bytes
    r: bytes

    def __post_init__(self):
        if len(self.s) != DIGEST_SIZE or len(self.r) != DIGEST_SIZE:
            raise ValueError("secret components must be 32 bytes")


def gen_secret(seed: int) -> Secret:
    """Deterministic 32-byte (S, r) pair from a 64-bit seed."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    base = seed.to_bytes(8, "big")
    return Secret(s=h(base, b"serial"), r=h(base, b"rand"))


def reg_id(secret: Secret) -> bytes:
    """Registration identifier h(S || r)."""
    return h(secret.s, secret.r)


def _padded_leaves(reg_ids: Sequence[bytes]) -> list[bytes]:
    if not reg_ids:
        raise EmptySet("cannot accumulate an empty registration set")
    leaves = list(reg_ids)
    n = 2
    while n < len(leaves):
        n *= 2
    # duplicate-last padding up to the next power of two (minimum 2 leaves)
    leaves.extend([leaves[-1]] * (n - len(leaves)))
    return leaves


def accumulate(reg_ids: Sequence[bytes]) -> bytes:
    """Canonical binary Merkle root over the ordered registration set."""
    level = _padded_leaves(reg_ids)
    while len(level) > 1:
        level = [h(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class MembershipProof:
    root: bytes
    leaf: bytes
    serial: bytes
    siblings: tuple[tuple[int, bytes], ...]  # (side, digest) bottom-up
    binding: bytes


def _path_bytes(leaf: bytes, siblings: Sequence[tuple[int, bytes]]) -> bytes:
    out = [bytes([_NODE_LEAF]), leaf]
    for side, sib in siblings:
        out.append(bytes([side]))
        out.append(sib)
    return b"".join(out)


def prove_membership(secret: Secret, reg_ids: Sequence[bytes], message: bytes) -> MembershipProof:
    """Produce a proof that h(S||r) is in the set, bound to ``message``.

    Proves for the first occurrence of the registration id.  Raises
    NotAMember when the secret was never registered.
    """
    target = reg_id(secret)
    leaves = _padded_leaves(reg_ids)
    try:
        index = list(reg_ids).index(target)
    except ValueError:
        raise NotAMember("secret does not match any registration") from None

    siblings: list[tuple[int, bytes]] = []
    level = leaves
    pos = index
    while len(level) > 1:
        if pos % 2 == 0:
            siblings.append((_SIB_RIGHT, level[pos + 1]))
        else:
            siblings.append((_SIB_LEFT, level[pos - 1]))
        level = [h(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    root = level[0]
    sib_tuple = tuple(siblings)
    binding = h(_path_bytes(target, sib_tuple), secret.s, message)
    return MembershipProof(root=root, leaf=target, serial=secret.s,
                           siblings=sib_tuple, binding=binding)


def verify_membership(proof: MembershipProof, root: bytes, message: bytes,
                      nullifiers: set[bytes], *, record: bool = True) -> bool:
    """Check a proof against the current root, message and nullifier set.

    True iff the path authenticates the leaf under ``root``, the binding
    matches ``message``, and the serial is fresh.  On success the serial is
    added to ``nullifiers`` (unless ``record`` is False, used for relayer
    dry-runs that must not consume the serial).
    """
    if proof.root != root:
        return False
    node = proof.leaf
    for side, sib in proof.siblings:
        if side == _SIB_RIGHT:
            node = h(node, sib)
        elif side == _SIB_LEFT:
            node = h(sib, node)
        else:
            return False
    if node != root:
        return False
    if proof.binding != h(_path_bytes(proof.leaf, proof.siblings), proof.serial, message):
        return False
    if proof.serial in nullifiers:
        return False
    if record:
        nullifiers.add(proof.serial)
    return True


def serialize_proof(proof: MembershipProof) -> bytes:
    """Length-prefixed binary layout: root, serial, node count, nodes, binding.

    Nodes are 33 bytes each (side tag + digest); the first node is the leaf.
    """
    nodes = _path_bytes(proof.leaf, proof.siblings)
    count = 1 + len(proof.siblings)
    return b"".join([
        proof.root,
        proof.serial,
        count.to_bytes(4, "big"),
        nodes,
        proof.binding,
    ])


def deserialize_proof(blob: bytes) -> MembershipProof:
    if len(blob) < 2 * DIGEST_SIZE + 4 + 33 + DIGEST_SIZE:
        raise MalformedProof("proof blob too short")
    root = blob[:32]
    serial = blob[32:64]
    count = int.from_bytes(blob[64:68], "big")
    nodes_len = 33 * count
    if len(blob) != 68 + nodes_len + DIGEST_SIZE:
        raise MalformedProof("proof blob length mismatch")
    nodes = blob[68:68 + nodes_len]
    binding = blob[68 + nodes_len:]
    if count < 1 or nodes[0] != _NODE_LEAF:
        raise MalformedProof("first path node must be the leaf")
    leaf = nodes[1:33]
    siblings = []
    for i in range(1, count):
        off = 33 * i
        side = nodes[off]
        if side not in (_SIB_RIGHT, _SIB_LEFT):
            raise MalformedProof(f"bad side tag {side}")
        siblings.append((side, nodes[off + 1:off + 33]))
    return MembershipProof(root=root, leaf=leaf, serial=serial,
                           siblings=tuple(siblings), binding=binding)
