"""Domain vocabulary shared by the auction, ledger and protocol layers.

All settlement arithmetic is exact: token amounts are non-negative integers
(atoms), prices are integer tick counts, widths are `Fraction`s (or the ANY
sentinel).  Floating point shows up only in the analysis layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

# Token identifiers.  REF is the reference token in which escrows, fees and
# notional values are denominated.
TOKEN_A = "A"
TOKEN_B = "B"
TOKEN_REF = "REF"


class QuantityError(ValueError):
    """A token amount went out of domain (negative or non-integer)."""


def check_quantity(atoms: int) -> int:
    """Validate an atom count: integer and >= 0."""
    if not isinstance(atoms, int) or isinstance(atoms, bool):
        raise QuantityError(f"quantity must be an int, got {atoms!r}")
    if atoms < 0:
        raise QuantityError(f"quantity must be >= 0, got {atoms}")
    return atoms


def sub_quantity(a: int, b: int) -> int:
    """a - b, raising instead of going negative."""
    check_quantity(a)
    check_quantity(b)
    if b > a:
        raise QuantityError(f"quantity underflow: {a} - {b}")
    return a - b


def check_price(ticks: int) -> int:
    """Validate a price in ticks: integer and >= 1."""
    if not isinstance(ticks, int) or isinstance(ticks, bool):
        raise QuantityError(f"price must be an int tick count, got {ticks!r}")
    if ticks < 1:
        raise QuantityError(f"price must be >= 1 tick, got {ticks}")
    return ticks


class _AnyWidth:
    """Width sentinel that compares greater than every numeric width."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ANY"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("ANY_WIDTH")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True


ANY = _AnyWidth()

Width = Union[Fraction, _AnyWidth]


def check_width(w: Width) -> Width:
    if w is ANY:
        return w
    if not isinstance(w, Fraction):
        raise QuantityError(f"width must be a Fraction or ANY, got {w!r}")
    if w < 1:
        raise QuantityError(f"numeric width must be >= 1, got {w}")
    return w


def width_geq(a: Width, b: Width) -> bool:
    """a >= b under the ordering where ANY tops every numeric width."""
    if a is ANY:
        return True
    if b is ANY:
        return False
    return a >= b


class _SpecialPrice:
    def __init__(self, name: str):
        self._name = name

    def __repr__(self):
        return self._name


#: Market order: no limit price, maximally aggressive.
MKT = _SpecialPrice("MKT")
#: Withdrawal pseudo-order: reveal consumes the commitment and returns escrow.
WITHDRAW = _SpecialPrice("WITHDRAW")

Price = Union[int, _SpecialPrice]


@dataclass(frozen=True)
class Market:
    """A two-sided quote: bid and offer in ticks plus the backing sizes.

    ``size_bid`` is in A atoms (tokens backing the bid, i.e. what the quoter
    pays when buying B), ``size_offer`` is in B atoms.
    """

    bid: int
    size_bid: int
    offer: int
    size_offer: int

    def __post_init__(self):
        check_price(self.bid)
        check_price(self.offer)
        check_quantity(self.size_bid)
        check_quantity(self.size_offer)
        if not self.bid <= self.offer:
            raise QuantityError(f"market must satisfy bid <= offer, got {self.bid} @ {self.offer}")


def market_width(m: Market) -> Fraction:
    """offer / bid as an exact rational (>= 1 by construction)."""
    return Fraction(m.offer, m.bid)


def reference_price(m: Market) -> float:
    """Geometric mean of bid and offer; analysis only, never settlement."""
    if m.bid == m.offer:
        return float(m.bid)
    return math.sqrt(m.bid * m.offer)


@dataclass(frozen=True)
class Order:
    """A revealed order.  ``tkn`` is the token being sold: selling A buys the
    swap, selling B sells the swap."""

    oid: int
    owner: str
    tkn: str  # TOKEN_A or TOKEN_B
    size: int
    price: Price
    width_req: Width

    def __post_init__(self):
        if self.tkn not in (TOKEN_A, TOKEN_B):
            raise QuantityError(f"order token must be A or B, got {self.tkn!r}")
        check_quantity(self.size)
        if isinstance(self.price, int):
            check_price(self.price)
        elif self.price is not MKT and self.price is not WITHDRAW:
            raise QuantityError(f"bad price {self.price!r}")
        check_width(self.width_req)
        if self.price is not WITHDRAW and self.size == 0:
            raise QuantityError("order size must be > 0 unless withdrawing")

    @property
    def side(self) -> str:
        return "buy" if self.tkn == TOKEN_A else "sell"


def notional(q: int, tkn: str, p_a: Fraction, price_hint: int | None = None) -> int:
    """Value of ``q`` atoms of ``tkn`` in reference units, floored.

    A tokens are valued at ``p_a`` each; B tokens need a price hint (A per B)
    and are valued at ``p_a * price_hint``.
    """
    check_quantity(q)
    if p_a <= 0:
        raise QuantityError(f"p_a must be positive, got {p_a}")
    if tkn == TOKEN_A:
        return int(q * p_a)  # Fraction*int floors via int()
    if tkn == TOKEN_B:
        if price_hint is None:
            raise QuantityError("valuing B tokens requires a price hint")
        check_price(price_hint)
        return int(q * p_a * price_hint)
    raise QuantityError(f"unknown token {tkn!r}")


def encode_price(p: Price) -> bytes:
    if p is MKT:
        return b"mkt"
    if p is WITHDRAW:
        return b"wd"
    return str(p).encode()


def encode_width(w: Width) -> bytes:
    if w is ANY:
        return b"any"
    return f"{w.numerator}/{w.denominator}".encode()


def encode_order_fields(tkn: str, size: int, price: Price, width: Width) -> bytes:
    """Canonical byte encoding of an order body, used for commitments."""
    return b"|".join([b"ord", tkn.encode(), str(size).encode(),
                      encode_price(price), encode_width(width)])


def encode_market(m: Market) -> bytes:
    """Canonical byte encoding of a market, used for commitments and tie-breaks."""
    return b"|".join([b"mm", str(m.bid).encode(), str(m.size_bid).encode(),
                      str(m.offer).encode(), str(m.size_offer).encode()])


@dataclass(frozen=True)
class ProtocolParams:
    """Static parameters of one protocol instance.

    ``e_mm`` must exceed ``q_not`` (it plays the role of c * q_not for
    some c > 1).  ``t_blocks`` is the base inclusion bound; the effective
    bound inflates it by 1/(1 - alpha) when block producers may be
    participants.
    """

    e_client: int
    e_mm: int
    q_not: int
    f_r: int
    res_bounty: int
    p_a: Fraction
    t_blocks: int
    alpha: Fraction = Fraction(0)
    f_mcf: Fraction = Fraction(121, 100)
    delta: Fraction = Fraction(1)
    min_tick: int = 1

    def __post_init__(self):
        for name in ("e_client", "e_mm", "q_not", "f_r", "res_bounty"):
            check_quantity(getattr(self, name))
        if self.e_mm <= self.q_not:
            raise QuantityError(f"e_mm must exceed q_not, got {self.e_mm} <= {self.q_not}")
        if self.p_a <= 0:
            raise QuantityError("p_a must be positive")
        if self.t_blocks < 1:
            raise QuantityError("t_blocks must be >= 1")
        if not 0 <= self.alpha < 1:
            raise QuantityError("alpha must lie in [0, 1)")
        if self.f_mcf <= 1:
            raise QuantityError("f_mcf must exceed 1")
        if self.delta < 1:
            raise QuantityError("delta must be >= 1")
        if self.min_tick != 1:
            raise QuantityError("only min_tick = 1 is supported; scale the tick grid instead")

    @property
    def t_eff(self) -> int:
        """ceil(t_blocks / (1 - alpha)): worst-case inclusion delay."""
        return math.ceil(Fraction(self.t_blocks) / (1 - self.alpha))
