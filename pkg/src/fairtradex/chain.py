"""Discrete-block chain substrate with bounded inclusion delay.

The chain is a linear log (instant finality, no reorgs).  The entire
adversary surface is the within-block ordering policy plus delay: a policy
may reorder or withhold pending transactions, but anything reaching its
deadline ``submit_height + t_eff`` is force-included that block.  Relayed
transactions carry no sender; the including relayer is picked round-robin
from the registered relayer set and recorded on the executed entry so the
protocol layer can pay the relay fee.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Callable, Optional

RELAYED = "RELAYED"

# Transaction kinds understood by the protocol layer.
CLIENT_REGISTER = "CLIENT-REGISTER"
COMMIT_CLIENT = "COMMIT-CLIENT"
COMMIT_MM = "COMMIT-MM"
CLIENT_REVEAL = "CLIENT-REVEAL"
MM_REVEAL = "MM-REVEAL"
CP = "CP"
NOOP = "NOOP"


class MalformedTx(Exception):
    pass


class InvalidProof(Exception):
    """Relayers refuse to carry a transaction whose membership proof fails."""


@dataclass(frozen=True)
class Tx:
    kind: str
    payload: Any
    sender: str  # player id, or RELAYED


@dataclass
class PendingTx:
    tx: Tx
    seq: int
    submit_height: int
    deadline: int
    relayer: Optional[str] = None


@dataclass(frozen=True)
class ExecutedTx:
    tx: Tx
    seq: int
    height: int
    submit_height: int
    relayer: Optional[str] = None


def identity_policy(pending: list[PendingTx], height: int, rng: random.Random) -> list[PendingTx]:
    """Include everything, in submission order."""
    return list(pending)


def reverse_policy(pending: list[PendingTx], height: int, rng: random.Random) -> list[PendingTx]:
    """Include everything, newest first."""
    return list(reversed(pending))


def random_policy(pending: list[PendingTx], height: int, rng: random.Random) -> list[PendingTx]:
    """Include everything, shuffled by the chain's seeded rng."""
    out = list(pending)
    rng.shuffle(out)
    return out


def withhold_max_policy(pending: list[PendingTx], height: int, rng: random.Random) -> list[PendingTx]:
    """Delay every transaction to its forced-inclusion deadline."""
    return [p for p in pending if p.deadline <= height]


ORDERING_POLICIES: dict[str, Callable] = {
    "identity": identity_policy,
    "reverse": reverse_policy,
    "random": random_policy,
    "withhold_max": withhold_max_policy,
}


class Chain:
    def __init__(self, t_eff: int, policy: Callable = identity_policy, seed: int = 0):
        if t_eff < 1:
            raise ValueError("t_eff must be >= 1")
        self.t_eff = t_eff
        self.policy = policy
        self.height = 0
        self.pending: list[PendingTx] = []
        self._rng = random.Random(seed)
        self._seq = 0
        self._relayers: list[str] = []
        self._relay_cursor = 0

    def register_relayer(self, player: str) -> None:
        self._relayers.append(player)

    def submit(self, tx: Tx) -> PendingTx:
        """Queue a signed transaction; executes within t_eff blocks."""
        if not isinstance(tx, Tx) or not tx.kind:
            raise MalformedTx(f"not a transaction: {tx!r}")
        p = PendingTx(tx=tx, seq=self._seq, submit_height=self.height,
                      deadline=self.height + self.t_eff)
        self._seq += 1
        self.pending.append(p)
        return p

    def relay(self, tx: Tx, validate: Callable[[Tx], bool]) -> PendingTx:
        """Queue an anonymous transaction via the relayer mempool.

        ``validate`` is the relayer's dry-run proof check; a failing payload
        is dropped (no rational relayer would carry it).  Exactly one relayer
        is assigned at inclusion time and credited by the protocol handler.
        """
        if tx.sender != RELAYED:
            raise MalformedTx("relayed transactions must not carry a sender")
        if not self._relayers:
            raise InvalidProof("no relayer available")
        if not validate(tx):
            raise InvalidProof("relayers dropped the transaction")
        p = self.submit(tx)
        p.relayer = self._relayers[self._relay_cursor % len(self._relayers)]
        self._relay_cursor += 1
        return p

    def advance_block(self) -> list[ExecutedTx]:
        """Produce the next block and return its transactions in execution order.

        The ordering policy selects and orders from the pending set; any
        transaction at its deadline that the policy withheld is appended in
        submission order (forced inclusion).
        """
        self.height += 1
        chosen = self.policy(self.pending, self.height, self._rng)
        chosen_set = {p.seq for p in chosen}
        forced = [p for p in self.pending
                  if p.deadline <= self.height and p.seq not in chosen_set]
        block = list(chosen) + sorted(forced, key=lambda p: p.seq)
        included = {p.seq for p in block}
        self.pending = [p for p in self.pending if p.seq not in included]
        return [ExecutedTx(tx=p.tx, seq=p.seq, height=self.height,
                           submit_height=p.submit_height, relayer=p.relayer)
                for p in block]
