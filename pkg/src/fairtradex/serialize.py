"""JSON codecs for books, clearing results and rationals.

All emitters produce sorted-key, separator-normalised JSON so identical
inputs yield byte-identical files.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .auction import AuctionBook, ClearingResult
from .units import ANY, MKT, WITHDRAW, Market, Order, Price, Width


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fraction_to_json(f: Fraction) -> Any:
    if f.denominator == 1:
        return f.numerator
    return f"{f.numerator}/{f.denominator}"


def fraction_from_json(v: Any) -> Fraction:
    if isinstance(v, bool):
        raise ValueError(f"not a rational: {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)  # accepts "p/q" and decimal strings
    raise ValueError(f"not a rational: {v!r}")


def width_to_json(w: Width) -> Any:
    return "any" if w is ANY else fraction_to_json(w)


def width_from_json(v: Any) -> Width:
    if v == "any":
        return ANY
    return fraction_from_json(v)


def price_to_json(p: Price) -> Any:
    if p is MKT:
        return "mkt"
    if p is WITHDRAW:
        return "withdraw"
    return p


def price_from_json(v: Any) -> Price:
    if v == "mkt":
        return MKT
    if v == "withdraw":
        return WITHDRAW
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    raise ValueError(f"not a price: {v!r}")


def order_to_json(o: Order) -> dict:
    return {"oid": o.oid, "owner": o.owner, "side": o.side, "size": o.size,
            "price": price_to_json(o.price), "width": width_to_json(o.width_req)}


def order_from_json(d: dict) -> Order:
    side = d["side"]
    if side not in ("buy", "sell"):
        raise ValueError(f"side must be buy or sell, got {side!r}")
    return Order(oid=int(d["oid"]), owner=d.get("owner", "anon"),
                 tkn="A" if side == "buy" else "B", size=int(d["size"]),
                 price=price_from_json(d["price"]),
                 width_req=width_from_json(d.get("width", "any")))


def book_to_json(book: AuctionBook) -> dict:
    doc = {
        "w_tight": width_to_json(book.w_tight),
        "orders": [order_to_json(o) for o in (*book.buy_orders, *book.sell_orders)],
    }
    if book.tight_market is not None:
        player, m = book.tight_market
        doc["tight_market"] = {"player": player, "bid": m.bid, "size_bid": m.size_bid,
                               "offer": m.offer, "size_offer": m.size_offer}
    return doc


def book_from_json(doc: dict) -> AuctionBook:
    buys, sells = [], []
    for od in doc["orders"]:
        o = order_from_json(od)
        (buys if o.side == "buy" else sells).append(o)
    tight = None
    if "tight_market" in doc:
        t = doc["tight_market"]
        tight = (t["player"], Market(bid=int(t["bid"]), size_bid=int(t["size_bid"]),
                                     offer=int(t["offer"]), size_offer=int(t["size_offer"])))
    return AuctionBook(buy_orders=tuple(buys), sell_orders=tuple(sells),
                       w_tight=width_from_json(doc.get("w_tight", "any")),
                       tight_market=tight)


def result_to_json(res: ClearingResult) -> dict:
    return {
        "cp": res.cp,
        "volume_b": res.volume_settled_b,
        "imbalance_a": res.imbalance_a,
        "fills": [{"oid": f.oid, "executed": f.executed, "received": f.received,
                   "refunded": f.refunded} for f in res.fills],
    }
