"""Shared test fixtures: independent clearing enumerator, book generators,
and a thin harness for driving protocol handlers without a chain."""

from __future__ import annotations

import random
from fractions import Fraction

from fairtradex.auction import AuctionBook
from fairtradex.chain import ExecutedTx, Tx
from fairtradex.ledger import Ledger
from fairtradex.units import ANY, MKT, TOKEN_A, TOKEN_B, TOKEN_REF, Market, Order, ProtocolParams


def naive_clear(book):
    """Independent brute-force enumerator used as the clearing oracle's oracle.

    Scans every tick from 1 up to an analytic bound (past the highest limit
    and past the point where all remaining market-order buys are absorbed,
    nothing can rank better) and applies the (max volume, min |imbalance|,
    lowest price) selection directly.  Vectorised with numpy but otherwise
    definitionally naive.  Returns (cp, volume_a, imbalance_a) or None.
    """
    import numpy as np

    if not book.buy_orders or not book.sell_orders:
        return None
    total_buy = sum(o.size for o in book.buy_orders)
    total_sell = sum(o.size for o in book.sell_orders)
    limits = [o.price for o in (*book.buy_orders, *book.sell_orders)
              if isinstance(o.price, int)]
    hi = max(limits, default=1) + 1
    hi = max(hi, -(-total_buy // total_sell) + 1)
    cps = np.arange(1, hi + 1, dtype=np.int64)

    buy_vol = np.zeros_like(cps)
    for o in book.buy_orders:
        if o.price is MKT:
            buy_vol += o.size
        else:
            buy_vol += np.where(o.price >= cps, o.size, 0)
    sell_vol = np.zeros_like(cps)
    for o in book.sell_orders:
        if o.price is MKT:
            sell_vol += o.size
        else:
            sell_vol += np.where(o.price <= cps, o.size, 0)

    vol = np.minimum(buy_vol, sell_vol * cps)
    imb = buy_vol - sell_vol * cps
    if not (vol > 0).any():
        return None
    best_vol = vol.max()
    tied = vol == best_vol
    best_imb = np.abs(imb[tied]).min()
    tied &= np.abs(imb) == best_imb
    cp = int(cps[tied][0])
    return cp, int(best_vol), int(imb[tied][0])


def random_book(rng: random.Random, max_orders: int = 12, band: int = 32,
                base_price: int = 50, max_size: int = 200,
                with_spanning_market: bool = False, q_not: int = 0) -> AuctionBook:
    """Random small book: limit prices inside a tick band, some market orders."""
    n = rng.randint(2, max_orders)
    buys, sells = [], []
    oid = 0
    for i in range(n):
        side = rng.choice(("buy", "sell"))
        size = rng.randint(1, max_size)
        # a spanning-market book always gets one market order so it crosses
        force_mkt = with_spanning_market and i == 0
        price = (MKT if force_mkt or rng.random() < 0.25
                 else rng.randint(base_price, base_price + band - 1))
        order = Order(oid=oid, owner=f"p{oid}", tkn=TOKEN_A if side == "buy" else TOKEN_B,
                      size=size, price=price, width_req=ANY)
        (buys if side == "buy" else sells).append(order)
        oid += 1
    w_tight = ANY
    tight = None
    if with_spanning_market:
        mid = base_price + band // 2
        half = rng.randint(0, band // 4)
        bid, offer = mid - half, mid + half
        size_bid = max(q_not, sum(o.size for o in sells) * offer + 1)
        size_offer = max(q_not, sum(o.size for o in buys) // bid + q_not + 1)
        m = Market(bid=bid, size_bid=size_bid, offer=offer, size_offer=size_offer)
        buys.append(Order(oid=oid, owner="mm", tkn=TOKEN_A, size=size_bid,
                          price=bid, width_req=ANY))
        sells.append(Order(oid=oid + 1, owner="mm", tkn=TOKEN_B, size=size_offer,
                           price=offer, width_req=ANY))
        w_tight = Fraction(offer, bid)
        tight = ("mm", m)
    return AuctionBook(buy_orders=tuple(buys), sell_orders=tuple(sells),
                       w_tight=w_tight, tight_market=tight)


def make_params(**overrides) -> ProtocolParams:
    base = dict(e_client=1_000, e_mm=25_000, q_not=10_000, f_r=10,
                res_bounty=50, p_a=Fraction(1), t_blocks=2)
    base.update(overrides)
    return ProtocolParams(**base)


def fund(ledger: Ledger, player: str, ref=0, a=0, b=0) -> None:
    if ref:
        ledger.mint(player, TOKEN_REF, ref)
    if a:
        ledger.mint(player, TOKEN_A, a)
    if b:
        ledger.mint(player, TOKEN_B, b)


_SEQ = iter(range(10**9))


def etx(tx: Tx, height: int = 1, relayer=None) -> ExecutedTx:
    """Fabricate an executed-transaction record for direct handler tests."""
    return ExecutedTx(tx=tx, seq=next(_SEQ), height=height,
                      submit_height=height - 1, relayer=relayer)
