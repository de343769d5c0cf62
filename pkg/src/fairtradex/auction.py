"""Width-sensitive batch auction: filtering, tie-break, clearing and settlement.

Conventions used throughout (all arithmetic exact):

* Prices are integer ticks denominating A atoms per B atom; the candidate
  clearing-price grid is the tick grid.
* Buy orders sell A atoms, sell orders sell B atoms.
* Volume and imbalance comparisons are done in A units by cross
  multiplication: the tradable volume at price ``cp`` is
  ``min(buy_vol_a, sell_vol_b * cp)`` and the imbalance is
  ``buy_vol_a - sell_vol_b * cp``.  No division appears anywhere in the
  clearing-price logic.
* Settlement moves whole B atoms ("lots" of ``cp`` A atoms each), so a buy
  order can execute at most ``size // cp`` lots; sub-lot dust is refunded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .membership import h
from .units import (ANY, MKT, Market, Order, Width, encode_market,
                    market_width, width_geq)


class InvalidClearingPrice(Exception):
    pass


@dataclass(frozen=True)
class AuctionBook:
    buy_orders: tuple[Order, ...]
    sell_orders: tuple[Order, ...]
    w_tight: Width = ANY
    tight_market: Optional[tuple[str, Market]] = None


@dataclass(frozen=True)
class ClearingCandidate:
    """Oracle output: clearing price, volume and imbalance in A units."""

    cp: int
    volume_a: int
    imbalance_a: int


@dataclass(frozen=True)
class Fill:
    oid: int
    executed: int   # tokens consumed from the order (A for buys, B for sells)
    received: int   # tokens received (B for buys, A for sells)
    refunded: int   # unexecuted remainder of the order's escrowed size


@dataclass(frozen=True)
class ClearingResult:
    cp: int
    volume_settled_b: int
    imbalance_a: int
    fills: tuple[Fill, ...]


def filter_by_width(book: AuctionBook) -> tuple[AuctionBook, list[Order]]:
    """Drop orders whose requested width is below the tightest market width.

    Keeps orders with ``width_req >= w_tight`` or width ANY.  When no market
    was revealed (``w_tight`` is ANY) the constraint is vacuous and every
    order is kept.  Returns the filtered book and the removed orders, which
    settle as full refunds.
    """
    if book.w_tight is ANY:
        return book, []
    kept_b, kept_s, removed = [], [], []
    for o in book.buy_orders:
        (kept_b if width_geq(o.width_req, book.w_tight) else removed).append(o)
    for o in book.sell_orders:
        (kept_s if width_geq(o.width_req, book.w_tight) else removed).append(o)
    filtered = replace(book, buy_orders=tuple(kept_b), sell_orders=tuple(kept_s))
    return filtered, removed


def tie_break_seed(revealed: Sequence[tuple[str, Market]]) -> bytes:
    """Order-sensitive seed over the full revealed list, before any removal."""
    return h(*(p.encode() + b"|" + encode_market(m) for p, m in revealed))


def tie_break_digest(seed: bytes, player: str, market: Market) -> int:
    return int.from_bytes(h(seed, player.encode(), encode_market(market)), "big")


def select_tight_market(
    revealed: Sequence[tuple[str, Market]],
    eligible: Optional[Sequence[tuple[str, Market]]] = None,
) -> Optional[tuple[str, Market]]:
    """Pick the tightest market; break width ties by the largest hash digest.

    The tie-break seed is computed over ``revealed`` exactly as listed (the
    full reveal-ordered list).  ``eligible`` restricts the candidates to the
    entries that passed re-validation; it defaults to the full list.
    """
    if eligible is None:
        eligible = revealed
    if not eligible:
        return None
    seed = tie_break_seed(revealed)
    best = None
    best_key: tuple[Fraction, int] | None = None
    for player, market in eligible:
        w = market_width(market)
        digest = tie_break_digest(seed, player, market)
        if best_key is None or w < best_key[0] or (w == best_key[0] and digest > best_key[1]):
            best = (player, market)
            best_key = (w, digest)
    return best


def _buy_eligible(o: Order, cp: int) -> bool:
    return o.price is MKT or (isinstance(o.price, int) and o.price >= cp)


def _sell_eligible(o: Order, cp: int) -> bool:
    return o.price is MKT or (isinstance(o.price, int) and o.price <= cp)


def volumes_at(book: AuctionBook, cp: int) -> tuple[int, int]:
    """(buy volume in A atoms, sell volume in B atoms) eligible at ``cp``.

    ``cp`` may be 0 for the verifier's adjacent-tick check below price 1.
    """
    buy_vol = sum(o.size for o in book.buy_orders if _buy_eligible(o, cp))
    sell_vol = sum(o.size for o in book.sell_orders if _sell_eligible(o, cp))
    return buy_vol, sell_vol


def candidate_prices(book: AuctionBook) -> list[int]:
    """Support set of ticks that contains every clearing-price optimum.

    Order eligibility only changes at limit prices, so between consecutive
    limits the tradable volume min(B, S * cp) is piecewise linear in cp and
    |imbalance| is V-shaped around the balance point B / S.  The optimum of
    (max volume, min |imbalance|, lowest price) therefore lies on a limit
    price, one tick beside it, or at a segment's balance point; scanning
    those ticks is exhaustive without walking the whole grid.  (An
    all-market-order book is a single segment anchored only by its balance
    point.)
    """
    limits = sorted({o.price for o in (*book.buy_orders, *book.sell_orders)
                     if isinstance(o.price, int)})
    cands: set[int] = set()
    for l in limits:
        cands.update((l - 1, l, l + 1))
    # constant-eligibility segments: below all limits, between neighbours,
    # and above all limits; eligibility is sampled at each segment's first tick
    boundaries = [1] + [l + 1 for l in limits]
    ends = [l - 1 for l in limits] + [None]
    for a, b in zip(boundaries, ends):
        if b is not None and a > b:
            continue
        buy_vol, sell_vol = volumes_at(book, a)
        if sell_vol == 0 or buy_vol == 0:
            continue
        balance = buy_vol // sell_vol
        for cp in (balance, balance + 1):
            cp = max(cp, a)
            if b is not None:
                cp = min(cp, b)
            cands.add(cp)
        cands.add(a)
        if b is not None:
            cands.add(b)
    return sorted(c for c in cands if c >= 1)


def find_clearing_price(book: AuctionBook) -> Optional[ClearingCandidate]:
    """Exhaustive clearing-price oracle.

    Maximises traded volume, then minimises |imbalance|, then picks the
    lowest price.  Returns None when no price trades positive volume.
    """
    if not book.buy_orders or not book.sell_orders:
        return None
    best: Optional[ClearingCandidate] = None
    for cp in candidate_prices(book):
        buy_vol, sell_vol = volumes_at(book, cp)
        vol = min(buy_vol, sell_vol * cp)
        imb = buy_vol - sell_vol * cp
        if vol == 0:
            continue
        if (best is None or vol > best.volume_a
                or (vol == best.volume_a and (abs(imb), cp) < (abs(best.imbalance_a), best.cp))):
            best = ClearingCandidate(cp=cp, volume_a=vol, imbalance_a=imb)
    return best


def verify_clearing_price(book: AuctionBook, cp: int, volume_a: int, imbalance_a: int) -> bool:
    """Local clearing-price check: recompute, then test one adjacent tick.

    The claimed volume and imbalance (A units) must match the recomputation
    exactly and some volume must trade.  A zero imbalance is immediately
    valid; otherwise the adjacent tick on the surplus side must clear less
    volume than the claim, or the same volume with a no-smaller absolute
    imbalance.  Every oracle-optimal price passes: the probe's volume and
    imbalance are valued at the probe's own price, so this is exactly the
    oracle's ranking restricted to one neighbour.
    """
    if not isinstance(cp, int) or cp < 1:
        return False
    buy_vol, sell_vol = volumes_at(book, cp)
    vol = min(buy_vol, sell_vol * cp)
    imb = buy_vol - sell_vol * cp
    if volume_a != vol or imbalance_a != imb:
        return False
    if vol == 0:
        return False
    if imb == 0:
        return True
    probe = cp + 1 if imb > 0 else cp - 1
    buy_vol2, sell_vol2 = volumes_at(book, probe)
    vol2 = min(buy_vol2, sell_vol2 * probe)
    imb2 = buy_vol2 - sell_vol2 * probe
    return vol2 < vol or (vol2 == vol and abs(imb2) >= abs(imb))


def _allocate_group(entries: list[tuple[int, int, int]], amount: int) -> dict[int, int]:
    """Pro-rate ``amount`` units over (oid, weight, cap) entries.

    Floor pro-rata by weight with largest-remainder distribution; remainder
    ties break by ascending oid; entries already at cap are skipped when
    handing out remainders.  Requires amount <= sum of caps.
    """
    total_weight = sum(w for _, w, _ in entries)
    fills: dict[int, int] = {}
    remainders: list[tuple[Fraction, int]] = []
    assigned = 0
    for oid, weight, cap in entries:
        share = Fraction(amount * weight, total_weight)
        base = min(int(share), cap)
        fills[oid] = base
        assigned += base
        remainders.append((share - base, oid))
    leftover = amount - assigned
    # sort: biggest fractional remainder first, then ascending oid
    remainders.sort(key=lambda t: (-t[0], t[1]))
    caps = {oid: cap for oid, _, cap in entries}
    i = 0
    while leftover > 0:
        _, oid = remainders[i % len(remainders)]
        if fills[oid] < caps[oid]:
            fills[oid] += 1
            leftover -= 1
        i += 1
    return fills


def _allocate_side(groups: list[tuple[object, list[tuple[int, int, int]]]], total: int) -> dict[int, int]:
    """Waterfall ``total`` units through priority-ordered groups.

    Groups whose capacity fits entirely fill to cap; the group where the
    residual lands is pro-rated; later groups get nothing.
    """
    fills: dict[int, int] = {}
    remaining = total
    for _, entries in groups:
        cap_sum = sum(cap for _, _, cap in entries)
        if remaining >= cap_sum:
            for oid, _, cap in entries:
                fills[oid] = cap
            remaining -= cap_sum
        else:
            if remaining > 0:
                fills.update(_allocate_group(entries, remaining))
            for oid, _, _ in entries:
                fills.setdefault(oid, 0)
            remaining = 0
    return fills


def _priority_groups(orders: Iterable[Order], cp: int, side: str) -> list:
    """Group eligible orders by price level, most aggressive level first.

    Market orders form the most aggressive level on both sides, so a limit
    level at the margin is pro-rated before any market order.
    """
    by_level: dict[tuple[int, int], list[Order]] = {}
    for o in orders:
        if o.price is MKT:
            key = (0, 0)
        elif side == "buy":
            key = (1, -o.price)
        else:
            key = (1, o.price)
        by_level.setdefault(key, []).append(o)
    groups = []
    for key in sorted(by_level):
        entries = []
        for o in sorted(by_level[key], key=lambda o: o.oid):
            cap = o.size // cp if side == "buy" else o.size
            entries.append((o.oid, o.size, cap))
        groups.append((key, entries))
    return groups


def settle(book: AuctionBook, cp: int) -> ClearingResult:
    """Exact pro-rata settlement at ``cp``.

    Fills are denominated in whole B atoms; each buy lot costs exactly
    ``cp`` A atoms, so conservation holds bit-for-bit: total A spent equals
    total A received equals ``volume * cp``, and likewise for B.  Callers
    that need the local-optimality guarantee (the protocol's resolution
    path) run ``verify_clearing_price`` first; here only a price that
    trades nothing is rejected.
    """
    if not isinstance(cp, int) or cp < 1:
        raise InvalidClearingPrice(f"not a price: {cp!r}")
    buy_vol, sell_vol = volumes_at(book, cp)
    if min(buy_vol, sell_vol * cp) == 0:
        raise InvalidClearingPrice(f"no volume trades at cp={cp}")

    eligible_buys = [o for o in book.buy_orders if _buy_eligible(o, cp)]
    eligible_sells = [o for o in book.sell_orders if _sell_eligible(o, cp)]
    buy_capacity = sum(o.size // cp for o in eligible_buys)
    volume = min(buy_capacity, sell_vol)

    buy_fills = _allocate_side(_priority_groups(eligible_buys, cp, "buy"), volume)
    sell_fills = _allocate_side(_priority_groups(eligible_sells, cp, "sell"), volume)

    fills = []
    for o in sorted((*book.buy_orders, *book.sell_orders), key=lambda o: o.oid):
        if o.side == "buy":
            lots = buy_fills.get(o.oid, 0)
            fills.append(Fill(oid=o.oid, executed=lots * cp, received=lots,
                              refunded=o.size - lots * cp))
        else:
            delivered = sell_fills.get(o.oid, 0)
            fills.append(Fill(oid=o.oid, executed=delivered, received=delivered * cp,
                              refunded=o.size - delivered))
    return ClearingResult(cp=cp, volume_settled_b=volume,
                          imbalance_a=buy_vol - sell_vol * cp, fills=tuple(fills))


def validate_clearing_result(book: AuctionBook, res: ClearingResult) -> None:
    """Assert the exact-conservation invariants of a settlement."""
    orders = {o.oid: o for o in (*book.buy_orders, *book.sell_orders)}
    a_spent = a_received = b_received = b_delivered = 0
    for f in res.fills:
        o = orders[f.oid]
        if o.side == "buy":
            if f.executed != f.received * res.cp:
                raise AssertionError(f"buy fill {f.oid}: A spent != lots * cp")
            if f.executed + f.refunded != o.size:
                raise AssertionError(f"buy fill {f.oid}: executed + refunded != size")
            a_spent += f.executed
            b_received += f.received
        else:
            if f.received != f.executed * res.cp:
                raise AssertionError(f"sell fill {f.oid}: A received != delivered * cp")
            if f.executed + f.refunded != o.size:
                raise AssertionError(f"sell fill {f.oid}: executed + refunded != size")
            b_delivered += f.executed
            a_received += f.received
    v = res.volume_settled_b
    if not (a_spent == a_received == v * res.cp):
        raise AssertionError("A legs do not balance")
    if not (b_received == b_delivered == v):
        raise AssertionError("B legs do not balance")
