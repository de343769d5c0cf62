"""Commit-reveal auction protocol: phases, escrows, blacklisting, resolution.

One instance runs a single token pair and proceeds in rounds of Commit,
Reveal and Resolution phases.  Handlers are driven by executed chain
transactions; they are total: every guard failure is a recorded no-op, never
an exception.  Phase deadlines are evaluated at block end via
``on_block_end``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import membership
from .auction import (AuctionBook, filter_by_width, select_tight_market,
                      settle, verify_clearing_price)
from .chain import (CLIENT_REGISTER, CLIENT_REVEAL, COMMIT_CLIENT, COMMIT_MM,
                    CP, MM_REVEAL, ExecutedTx, Tx)
from .ledger import PROTOCOL_ACCOUNT, Ledger
from .membership import MembershipProof, h
from .serialize import price_to_json, width_to_json
from .units import (ANY, MKT, TOKEN_A, TOKEN_B, TOKEN_REF, WITHDRAW, Market,
                    Order, Price, ProtocolParams, Width, encode_market,
                    encode_order_fields, market_width)


class Phase(enum.Enum):
    COMMIT = "commit"
    REVEAL = "reveal"
    RESOLUTION = "resolution"


@dataclass(frozen=True)
class RegisterPayload:
    reg_id: bytes


@dataclass(frozen=True)
class ClientCommitPayload:
    com: bytes
    serial: bytes
    proof: MembershipProof


@dataclass(frozen=True)
class MMCommitPayload:
    com: bytes


@dataclass(frozen=True)
class ClientRevealPayload:
    tkn: str
    size: int
    price: Price
    width: Width
    serial: bytes
    randomness: bytes
    reg_id: bytes
    reg_token_new: Optional[bytes] = None


@dataclass(frozen=True)
class MMRevealPayload:
    market: Market


@dataclass(frozen=True)
class CpPayload:
    cp: int
    volume_a: int
    imbalance_a: int


def client_commitment(tkn: str, size: int, price: Price, width: Width) -> bytes:
    return h(encode_order_fields(tkn, size, price, width))


def mm_commitment(market: Market) -> bytes:
    return h(encode_market(market))


def _is_digest(v) -> bool:
    return isinstance(v, bytes) and len(v) == 32


def _is_price(v) -> bool:
    if v is MKT or v is WITHDRAW:
        return True
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _is_width(v) -> bool:
    return v is ANY or (isinstance(v, Fraction) and v >= 1)


def _well_formed_reveal(p: "ClientRevealPayload") -> bool:
    """Handlers must be total: reject adversarially typed fields up front."""
    return (p.tkn in (TOKEN_A, TOKEN_B)
            and isinstance(p.size, int) and not isinstance(p.size, bool) and p.size >= 0
            and _is_price(p.price) and _is_width(p.width)
            and _is_digest(p.serial) and _is_digest(p.randomness)
            and _is_digest(p.reg_id)
            and (p.reg_token_new is None or _is_digest(p.reg_token_new)))


class Protocol:
    def __init__(self, params: ProtocolParams, ledger: Ledger,
                 request_deadline: int | None = None,
                 reveal_deadline: int | None = None):
        self.params = params
        self.ledger = ledger
        # deadlines default to the maximal inclusion delay
        self.request_deadline = request_deadline or params.t_eff
        self.reveal_deadline = reveal_deadline or params.t_eff

        self.phase: Optional[Phase] = None
        self.round = 0
        self.last_phase_change = 0
        self.clients: list[bytes] = []
        self.client_commits: dict[bytes, bytes] = {}   # serial -> commitment
        self.mm_commits: dict[str, bytes] = {}         # player  -> commitment
        self.revealed_buys: list[Order] = []
        self.revealed_sells: list[Order] = []
        self.revealed_mkts: list[tuple[str, Market]] = []
        self.blacklisted: set[bytes] = set()
        self.nullifiers: set[bytes] = set()
        self.curr_auc_notional = 0
        self.w_tight: Width = ANY
        self.tight_market: Optional[tuple[str, Market]] = None
        self.settlements: list[dict] = []
        self._oid = 0
        self._round_burned: list[dict] = []
        self._round_blacklisted: list[str] = []

    # -- lifecycle ---------------------------------------------------------

    def initialise(self, height: int) -> None:
        self.phase = Phase.COMMIT
        self.last_phase_change = height

    def registry_root(self) -> Optional[bytes]:
        if not self.clients:
            return None
        return membership.accumulate(self.clients)

    def _next_oid(self) -> int:
        oid = self._oid
        self._oid += 1
        return oid

    # -- relayer-side dry run ----------------------------------------------

    def commit_looks_valid(self, tx: Tx) -> bool:
        """Relayer mempool check: would this client commit pay out?

        Verifies the proof against the current registry without consuming
        the serial.  Execution re-checks everything.
        """
        p = tx.payload
        if not isinstance(p, ClientCommitPayload):
            return False
        root = self.registry_root()
        if root is None or p.serial in self.blacklisted:
            return False
        return membership.verify_membership(p.proof, root, p.com,
                                            self.nullifiers, record=False)

    # -- message handlers ----------------------------------------------------

    def handle(self, etx: ExecutedTx) -> dict:
        tx = etx.tx
        handler = {
            CLIENT_REGISTER: self._handle_register,
            COMMIT_CLIENT: self._handle_commit_client,
            COMMIT_MM: self._handle_commit_mm,
            CLIENT_REVEAL: self._handle_reveal_client,
            MM_REVEAL: self._handle_reveal_mm,
            CP: self._handle_cp,
        }.get(tx.kind)
        if handler is None:
            return {"applied": False, "reason": "unknown-kind"}
        return handler(etx)

    def _handle_register(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        sender = etx.tx.sender
        need = self.params.e_client + self.params.f_r
        if not isinstance(p, RegisterPayload) or not _is_digest(p.reg_id):
            return {"applied": False, "reason": "malformed"}
        if not self.ledger.balance(sender, TOKEN_REF) > need:
            return {"applied": False, "reason": "insufficient-balance"}
        self.ledger.transfer(sender, PROTOCOL_ACCOUNT, TOKEN_REF, need)
        duplicate = p.reg_id in self.clients
        self.clients.append(p.reg_id)
        return {"applied": True, "registrations": len(self.clients),
                "duplicate_reg_id": duplicate}

    def _handle_commit_client(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        if (not isinstance(p, ClientCommitPayload) or not _is_digest(p.com)
                or not _is_digest(p.serial)
                or not isinstance(p.proof, MembershipProof)):
            return {"applied": False, "reason": "malformed"}
        if etx.relayer is None:
            return {"applied": False, "reason": "not-relayed"}
        if self.phase is not Phase.COMMIT:
            return {"applied": False, "reason": "phase"}
        if not self.curr_auc_notional < self.params.q_not:
            return {"applied": False, "reason": "notional-cap"}
        if p.serial in self.blacklisted:
            return {"applied": False, "reason": "blacklisted-serial"}
        root = self.registry_root()
        if root is None:
            return {"applied": False, "reason": "no-registrations"}
        # consumes the serial as a nullifier on success
        if not membership.verify_membership(p.proof, root, p.com, self.nullifiers):
            return {"applied": False, "reason": "bad-proof"}
        self.curr_auc_notional += self.params.e_client
        self.client_commits[p.serial] = p.com
        self.ledger.transfer(PROTOCOL_ACCOUNT, etx.relayer, TOKEN_REF, self.params.f_r)
        return {"applied": True, "relayer": etx.relayer,
                "client_commits": len(self.client_commits)}

    def _handle_commit_mm(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        sender = etx.tx.sender
        if not isinstance(p, MMCommitPayload) or not _is_digest(p.com):
            return {"applied": False, "reason": "malformed"}
        if self.phase is not Phase.COMMIT:
            return {"applied": False, "reason": "phase"}
        if sender in self.mm_commits:
            return {"applied": False, "reason": "one-market-per-player"}
        if not self.ledger.balance(sender, TOKEN_REF) > self.params.e_mm:
            return {"applied": False, "reason": "insufficient-balance"}
        self.ledger.transfer(sender, PROTOCOL_ACCOUNT, TOKEN_REF, self.params.e_mm)
        self.mm_commits[sender] = p.com
        return {"applied": True, "mm_commits": len(self.mm_commits)}

    def _client_size_cap(self, tkn: str, price: Price) -> Optional[int]:
        """Escrow-implied order size cap in sold-token atoms.

        Sales of A cap at e_client / p_a.  Sales of B cap at
        e_client / (p_a * limit price); a B market order carries no price so
        no escrow cap can be evaluated for it (balance still bounds it).
        """
        if tkn == TOKEN_A:
            return int(self.params.e_client / self.params.p_a)
        if isinstance(price, int):
            return int(self.params.e_client / (self.params.p_a * price))
        return None

    def _handle_reveal_client(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        sender = etx.tx.sender
        if not isinstance(p, ClientRevealPayload) or not _well_formed_reveal(p):
            return {"applied": False, "reason": "malformed"}
        if self.phase is not Phase.REVEAL:
            return {"applied": False, "reason": "phase"}
        if p.serial not in self.client_commits:
            return {"applied": False, "reason": "unknown-serial"}
        if h(p.serial, p.randomness) != p.reg_id:
            return {"applied": False, "reason": "reg-id-mismatch"}
        if client_commitment(p.tkn, p.size, p.price, p.width) != self.client_commits[p.serial]:
            return {"applied": False, "reason": "commitment-mismatch"}

        if p.price is WITHDRAW:
            self.ledger.transfer(PROTOCOL_ACCOUNT, sender, TOKEN_REF, self.params.e_client)
            self._consume_registration(p.serial, p.reg_id)
            return {"applied": True, "withdrawn": True}

        if self.ledger.balance(sender, p.tkn) < p.size:
            return {"applied": False, "reason": "insufficient-balance"}
        cap = self._client_size_cap(p.tkn, p.price)
        size = p.size if cap is None else min(p.size, cap)
        if size == 0:
            return {"applied": False, "reason": "size-capped-to-zero"}

        self.ledger.transfer(sender, PROTOCOL_ACCOUNT, p.tkn, size)
        order = Order(oid=self._next_oid(), owner=sender, tkn=p.tkn,
                      size=size, price=p.price, width_req=p.width)
        (self.revealed_buys if p.tkn == TOKEN_A else self.revealed_sells).append(order)

        re_registered = False
        escrow_back = False
        if p.reg_token_new is None:
            self.ledger.transfer(PROTOCOL_ACCOUNT, sender, TOKEN_REF, self.params.e_client)
            escrow_back = True
        elif self.ledger.balance(sender, TOKEN_REF) > self.params.f_r:
            # escrow stays behind the new registration; fee pot is refilled
            self.ledger.transfer(sender, PROTOCOL_ACCOUNT, TOKEN_REF, self.params.f_r)
            self.clients.append(p.reg_token_new)
            re_registered = True
        self._consume_registration(p.serial, p.reg_id)
        return {"applied": True, "oid": order.oid, "size": size,
                "escrow_returned": escrow_back, "re_registered": re_registered}

    def _consume_registration(self, serial: bytes, reg_id: bytes) -> None:
        del self.client_commits[serial]
        if reg_id in self.clients:
            self.clients.remove(reg_id)

    def _mm_liquidity_ok(self, player: str, market: Market) -> bool:
        """Both quote legs must cover the minimum notional and be backed."""
        pa, qn = self.params.p_a, self.params.q_not
        if not qn / pa <= market.size_bid <= self.ledger.balance(player, TOKEN_A):
            return False
        return qn / (pa * market.offer) <= market.size_offer <= self.ledger.balance(player, TOKEN_B)

    def _handle_reveal_mm(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        sender = etx.tx.sender
        if not isinstance(p, MMRevealPayload) or not isinstance(p.market, Market):
            return {"applied": False, "reason": "malformed"}
        if self.phase is not Phase.REVEAL:
            return {"applied": False, "reason": "phase"}
        if sender not in self.mm_commits:
            return {"applied": False, "reason": "no-commitment"}
        if mm_commitment(p.market) != self.mm_commits[sender]:
            return {"applied": False, "reason": "commitment-mismatch"}
        if not self._mm_liquidity_ok(sender, p.market):
            return {"applied": False, "reason": "below-minimum-liquidity"}
        self.revealed_mkts.append((sender, p.market))
        del self.mm_commits[sender]
        return {"applied": True, "revealed_markets": len(self.revealed_mkts)}

    # -- phase transitions ---------------------------------------------------

    def on_block_end(self, height: int) -> list[str]:
        """Evaluate deadline and early-exit conditions after a block executes."""
        events: list[str] = []
        if self.phase is Phase.COMMIT and height >= self.last_phase_change + self.request_deadline:
            self.phase = Phase.REVEAL
            self.last_phase_change = height
            events.append("phase:reveal")
        if self.phase is Phase.REVEAL:
            deadline = height >= self.last_phase_change + self.reveal_deadline
            all_revealed = not self.client_commits and not self.mm_commits
            if deadline or all_revealed:
                self._end_reveal_phase(height)
                events.append("phase:resolution")
        return events

    def _end_reveal_phase(self, height: int) -> None:
        """Close the reveal window: settle escrows, pick the tight market.

        Revealed markets are re-validated against current balances; the ones
        that still qualify get their escrow back and enter the tie-break.
        The tight market contributes two implicit width-ANY limit orders
        (sizes capped by the MM escrow).  Unrevealed client serials are
        blacklisted and their escrows burned; unrevealed MM escrows burn too.
        """
        eligible = [(player, m) for player, m in self.revealed_mkts
                    if self._mm_liquidity_ok(player, m)]
        for player, m in self.revealed_mkts:
            if (player, m) in eligible:
                self.ledger.transfer(PROTOCOL_ACCOUNT, player, TOKEN_REF, self.params.e_mm)
            else:
                self.ledger.burn(PROTOCOL_ACCOUNT, TOKEN_REF, self.params.e_mm)
                self._round_burned.append({"player": player, "token": TOKEN_REF,
                                           "amount": self.params.e_mm,
                                           "reason": "mm-liquidity-lapsed"})

        tight = select_tight_market(self.revealed_mkts, eligible)
        if tight is not None:
            player, m = tight
            self.tight_market = tight
            self.w_tight = market_width(m)
            bid_size = min(m.size_bid, int(self.params.e_mm / self.params.p_a))
            offer_size = min(m.size_offer, int(self.params.e_mm / (self.params.p_a * m.offer)))
            self.ledger.transfer(player, PROTOCOL_ACCOUNT, TOKEN_A, bid_size)
            self.ledger.transfer(player, PROTOCOL_ACCOUNT, TOKEN_B, offer_size)
            self.revealed_buys.append(Order(oid=self._next_oid(), owner=player,
                                            tkn=TOKEN_A, size=bid_size,
                                            price=m.bid, width_req=ANY))
            self.revealed_sells.append(Order(oid=self._next_oid(), owner=player,
                                             tkn=TOKEN_B, size=offer_size,
                                             price=m.offer, width_req=ANY))
        self.revealed_mkts = []

        for serial in list(self.client_commits):
            self.blacklisted.add(serial)
            self._round_blacklisted.append(serial.hex())
            self.ledger.burn(PROTOCOL_ACCOUNT, TOKEN_REF, self.params.e_client)
            self._round_burned.append({"player": None, "token": TOKEN_REF,
                                       "amount": self.params.e_client,
                                       "reason": "client-no-reveal"})
            del self.client_commits[serial]
        for player in list(self.mm_commits):
            self.ledger.burn(PROTOCOL_ACCOUNT, TOKEN_REF, self.params.e_mm)
            self._round_burned.append({"player": player, "token": TOKEN_REF,
                                       "amount": self.params.e_mm,
                                       "reason": "mm-no-reveal"})
            del self.mm_commits[player]

        self.phase = Phase.RESOLUTION
        self.last_phase_change = height

    # -- resolution ----------------------------------------------------------

    def current_book(self) -> AuctionBook:
        return AuctionBook(buy_orders=tuple(self.revealed_buys),
                           sell_orders=tuple(self.revealed_sells),
                           w_tight=self.w_tight, tight_market=self.tight_market)

    def _handle_cp(self, etx: ExecutedTx) -> dict:
        p = etx.tx.payload
        sender = etx.tx.sender
        if (not isinstance(p, CpPayload)
                or not all(isinstance(v, int) and not isinstance(v, bool)
                           for v in (p.cp, p.volume_a, p.imbalance_a))):
            return {"applied": False, "reason": "malformed"}
        if self.phase is not Phase.RESOLUTION:
            return {"applied": False, "reason": "phase"}
        if not self.ledger.balance(sender, TOKEN_REF) > self.params.res_bounty:
            return {"applied": False, "reason": "insufficient-balance"}
        self.ledger.transfer(sender, PROTOCOL_ACCOUNT, TOKEN_REF, self.params.res_bounty)

        book, removed = filter_by_width(self.current_book())
        if not verify_clearing_price(book, p.cp, p.volume_a, p.imbalance_a):
            # deposit forfeited; the auction stays open for another attempt
            return {"applied": False, "reason": "invalid-cp", "deposit_lost": True}
        if self.ledger.balance(PROTOCOL_ACCOUNT, TOKEN_REF) < 2 * self.params.res_bounty:
            # bounty budget exhausted: hand the deposit back rather than
            # punishing an honest proposer for a scenario funding gap
            self.ledger.transfer(PROTOCOL_ACCOUNT, sender, TOKEN_REF, self.params.res_bounty)
            return {"applied": False, "reason": "bounty-unfunded"}

        result = settle(book, p.cp)
        owners = {o.oid: o for o in (*book.buy_orders, *book.sell_orders)}
        fills_report = []
        for f in result.fills:
            o = owners[f.oid]
            if o.side == "buy":
                self.ledger.transfer(PROTOCOL_ACCOUNT, o.owner, TOKEN_B, f.received)
                self.ledger.transfer(PROTOCOL_ACCOUNT, o.owner, TOKEN_A, f.refunded)
            else:
                self.ledger.transfer(PROTOCOL_ACCOUNT, o.owner, TOKEN_A, f.received)
                self.ledger.transfer(PROTOCOL_ACCOUNT, o.owner, TOKEN_B, f.refunded)
            fills_report.append({"oid": f.oid, "owner": o.owner, "side": o.side,
                                 "price": price_to_json(o.price), "size": o.size,
                                 "executed": f.executed, "received": f.received,
                                 "refunded": f.refunded, "width_removed": False})
        for o in removed:
            self.ledger.transfer(PROTOCOL_ACCOUNT, o.owner, o.tkn, o.size)
            fills_report.append({"oid": o.oid, "owner": o.owner, "side": o.side,
                                 "price": price_to_json(o.price), "size": o.size,
                                 "executed": 0, "received": 0, "refunded": o.size,
                                 "width_removed": True})
        fills_report.sort(key=lambda d: d["oid"])

        self.ledger.transfer(PROTOCOL_ACCOUNT, sender, TOKEN_REF, 2 * self.params.res_bounty)
        report = {
            "round": self.round,
            "cp": result.cp,
            "volume_b": result.volume_settled_b,
            "imbalance_a": result.imbalance_a,
            "w_tight": width_to_json(self.w_tight),
            "fills": fills_report,
            "burned": self._round_burned,
            "blacklisted": sorted(self._round_blacklisted),
            "bounty_winner": sender,
        }
        self.settlements.append(report)

        self.revealed_buys = []
        self.revealed_sells = []
        self.tight_market = None
        self.w_tight = ANY
        self.curr_auc_notional = 0
        self._round_burned = []
        self._round_blacklisted = []
        self.round += 1
        self.phase = Phase.COMMIT
        self.last_phase_change = etx.height
        return {"applied": True, "cp": result.cp,
                "volume_b": result.volume_settled_b, "round_closed": self.round - 1}
