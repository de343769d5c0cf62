"""Rational-agent analysis: impact process, closed-form utilities,
best-response equilibrium checks, and the execution-cost comparison model.

Everything here works in floating point; nothing feeds back into
settlement.  Quoter profit follows the two-leg expectation

    profit(X, y, p, w, d) = X * ( (1/2)(1/sqrt(d) - (sqrt(d)/sqrt(w)) * y/p)
                               +  (1/2)(1/sqrt(d) - (sqrt(d)/sqrt(w)) * p/y) )

whose argmax over the reference price p sits at the fair price y for any
fixed width, and which vanishes at (p=y, w=1, d=1).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .auction import AuctionBook, filter_by_width, find_clearing_price, select_tight_market, settle
from .units import ANY, MKT, TOKEN_A, TOKEN_B, Market, Order, market_width

# ---------------------------------------------------------------------------
# Fair-price process with multiplicative impact
# ---------------------------------------------------------------------------


@dataclass
class MifpProcess:
    """Market-implied fair price with multiplicative impact delta >= 1.

    A buy moves the price to delta*y, a sell to y/delta.  The path is
    tracked through the net-buy exponent so a buy followed by a sell lands
    back on the starting price exactly.
    """

    y0: float
    delta: float
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        if self.y0 <= 0:
            raise ValueError("y0 must be positive")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        self._rng = random.Random(self.seed)

    def random_trades(self, n: int, notional: float = 1.0) -> list[float]:
        """Fair-coin order flow: n signed notionals, deterministic per seed."""
        return [notional * self._rng.choice((1, -1)) for _ in range(n)]


def run_mifp(proc: MifpProcess, trades: Sequence[float]) -> list[float]:
    """Price path under the impact rule; element 0 is the starting price."""
    path = [proc.y0]
    k = 0
    for t in trades:
        if t > 0:
            k += 1
        elif t < 0:
            k -= 1
        path.append(proc.y0 * proc.delta ** k)
    return path


# ---------------------------------------------------------------------------
# Closed-form utilities
# ---------------------------------------------------------------------------


def _check_positive(**kwargs: float) -> None:
    for name, v in kwargs.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def mm_buyer_leg(x, y, p_ref, w, delta):
    """Quoter's expected profit against a client buyer of notional x."""
    return x * (1.0 / delta ** 0.5 - (delta ** 0.5 / w ** 0.5) * (y / p_ref))


def mm_seller_leg(x, y, p_ref, w, delta):
    """Quoter's expected profit against a client seller of notional x."""
    return x * (1.0 / delta ** 0.5 - (delta ** 0.5 / w ** 0.5) * (p_ref / y))


def mm_expected_profit(x, y, p_ref, w, delta):
    """Fair-coin average of the buyer and seller legs.

    Accepts floats or numpy arrays for grid scans.
    """
    if np.any(np.asarray(x) <= 0) or np.any(np.asarray(y) <= 0) or np.any(np.asarray(p_ref) <= 0):
        raise ValueError("x, y and p_ref must be positive")
    if np.any(np.asarray(w) < 1) or np.any(np.asarray(delta) < 1):
        raise ValueError("w and delta must be >= 1")
    return 0.5 * mm_buyer_leg(x, y, p_ref, w, delta) + 0.5 * mm_seller_leg(x, y, p_ref, w, delta)


def p_ref_argmax(x: float, y: float, w: float, delta: float,
                 step_divisor: int = 1000) -> float:
    """Grid argmax of the quoter profit over p_ref in [y/2, 2y]."""
    grid = np.arange(y / 2, 2 * y + y / (2 * step_divisor), y / step_divisor)
    profits = mm_expected_profit(x, y, grid, w, delta)
    return float(grid[int(np.argmax(profits))])


def client_utility(trade_price: float, y: float, side: str, f_mcf: float) -> float:
    """Signed log-distance from the break-even bound.

    Buyers break even at sqrt(f_mcf)*y, sellers at y/sqrt(f_mcf); the sign
    is what the equilibrium arguments use, the log magnitude is this
    implementation's convention.
    """
    _check_positive(trade_price=trade_price, y=y)
    if not f_mcf > 1:
        raise ValueError("f_mcf must exceed 1")
    root = math.sqrt(f_mcf)
    if side == "buy":
        return math.log(root * y / trade_price)
    if side == "sell":
        return math.log(trade_price * root / y)
    raise ValueError(f"side must be 'buy' or 'sell', got {side!r}")


# ---------------------------------------------------------------------------
# Strategy profiles and deviation grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClientProfile:
    order_type: str = "mkt"              # "mkt" or "limit"
    width_req: Fraction = Fraction(121, 100)
    limit_price: Optional[int] = None    # ticks; only for order_type "limit"


@dataclass(frozen=True)
class MMProfile:
    width: Fraction = Fraction(1)
    ref_price: Optional[int] = None      # ticks; None quotes at the fair price


@dataclass(frozen=True)
class StrategyProfile:
    client: ClientProfile
    mm: MMProfile


@dataclass(frozen=True)
class DeviationGrid:
    """Unilateral deviations tried against a profile."""

    mm_ref_prices: tuple[int, ...]
    mm_widths: tuple[Fraction, ...]
    client_limit_prices: tuple[int, ...]
    client_widths: tuple[Fraction, ...]


def default_grid(y: int, f_mcf: Fraction) -> DeviationGrid:
    """Coarse cover of p_ref in [y/2, 2y] and widths in [1, 2*f_mcf]."""
    refs = sorted({y // 2, (3 * y) // 4, y - 2, y - 1, y, y + 1, y + 2, (3 * y) // 2, 2 * y})
    top = 2 * f_mcf
    widths = sorted({Fraction(1), 1 + (top - 1) / 8, 1 + (top - 1) / 4, Fraction(11, 10),
                     f_mcf, 1 + (top - 1) / 2, 1 + 3 * (top - 1) / 4, top})
    return DeviationGrid(
        mm_ref_prices=tuple(refs),
        mm_widths=tuple(widths),
        client_limit_prices=tuple(refs),
        client_widths=tuple(widths),
    )


@dataclass(frozen=True)
class DeviationResult:
    player: str
    label: str
    utility_profile: float
    utility_deviation: float
    gain: float
    tolerance: float

    @property
    def improves(self) -> bool:
        return self.gain > self.tolerance


@dataclass
class BestResponseReport:
    mode: str
    n_mms: int
    profile: str
    epsilon_rule: str
    paths: int
    entries: list[DeviationResult]
    max_gain: float
    confirmed: bool

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_mms": self.n_mms,
            "profile": self.profile,
            "epsilon_rule": self.epsilon_rule,
            "paths": self.paths,
            "max_gain": self.max_gain,
            "confirmed": self.confirmed,
            "deviations": [
                {"player": e.player, "label": e.label,
                 "utility_profile": e.utility_profile,
                 "utility_deviation": e.utility_deviation,
                 "gain": e.gain, "tolerance": e.tolerance,
                 "improves": e.improves}
                for e in self.entries
            ],
        }

    def to_csv(self) -> str:
        lines = ["player,deviation,utility_profile,utility_deviation,gain,tolerance,improves"]
        for e in self.entries:
            label = e.label.replace(",", ";")
            lines.append(f"{e.player},{label},{e.utility_profile:.12g},"
                         f"{e.utility_deviation:.12g},{e.gain:.12g},"
                         f"{e.tolerance:.12g},{e.improves}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Closed-form best response: single quoter
# ---------------------------------------------------------------------------


def _closed_form_mm_utility(x: float, y: float, p_ref: float, w: float,
                            delta: float, client_width: float) -> float:
    # orders requesting a tighter market than quoted never trade
    if w > client_width:
        return 0.0
    return float(mm_expected_profit(x, y, p_ref, w, delta))


def _closed_form_client_utility(order_type: str, width_req: float,
                                limit_price: Optional[float], side: str,
                                y: float, f_mcf: float,
                                mm_width: float, mm_ref: float) -> float:
    """Client utility in the one-quoter game, given the quoter's market."""
    if width_req < mm_width:
        return 0.0  # filtered out, no trade
    offer = mm_ref * math.sqrt(mm_width)
    bid = mm_ref / math.sqrt(mm_width)
    trade_price = offer if side == "buy" else bid
    if order_type == "limit":
        if side == "buy" and (limit_price is None or limit_price < offer):
            return 0.0
        if side == "sell" and (limit_price is None or limit_price > bid):
            return 0.0
    return client_utility(trade_price, y, side, f_mcf)


def _best_response_closed_form(profile: StrategyProfile, grid: DeviationGrid,
                               y: int, f_mcf: Fraction, delta: float,
                               notional: float, epsilon: float) -> BestResponseReport:
    fm = float(f_mcf)
    mm_w = float(profile.mm.width)
    mm_ref = float(profile.mm.ref_price if profile.mm.ref_price is not None else y)
    cw = float(profile.client.width_req)

    base_mm = _closed_form_mm_utility(notional, y, mm_ref, mm_w, delta, cw)
    entries: list[DeviationResult] = []

    # quoter deviations over the (reference price, width) grid, plus a fine
    # scan of reference prices at the profile width
    ref_points = set(grid.mm_ref_prices)
    fine = np.arange(y / 2, 2 * y + y / 2000, y / 1000)
    for w_dev in grid.mm_widths:
        for p_dev in sorted(ref_points):
            u = _closed_form_mm_utility(notional, y, float(p_dev), float(w_dev), delta, cw)
            entries.append(DeviationResult(
                player="mm", label=f"quote p_ref={p_dev} w={w_dev}",
                utility_profile=base_mm, utility_deviation=u,
                gain=u - base_mm, tolerance=epsilon))
    u_fine = [_closed_form_mm_utility(notional, y, float(p), mm_w, delta, cw) for p in fine]
    best_fine = max(u_fine)
    entries.append(DeviationResult(
        player="mm", label=f"fine p_ref scan at w={profile.mm.width} ({len(fine)} points)",
        utility_profile=base_mm, utility_deviation=best_fine,
        gain=best_fine - base_mm, tolerance=epsilon))

    # client deviations, checked for both directions
    for side in ("buy", "sell"):
        base_c = _closed_form_client_utility(profile.client.order_type, cw,
                                             profile.client.limit_price, side,
                                             y, fm, mm_w, mm_ref)
        for w_dev in grid.client_widths:
            u = _closed_form_client_utility("mkt", float(w_dev), None, side, y, fm, mm_w, mm_ref)
            entries.append(DeviationResult(
                player=f"client-{side}", label=f"mkt width_req={w_dev}",
                utility_profile=base_c, utility_deviation=u,
                gain=u - base_c, tolerance=epsilon))
        for lp in grid.client_limit_prices:
            u = _closed_form_client_utility("limit", cw, float(lp), side, y, fm, mm_w, mm_ref)
            entries.append(DeviationResult(
                player=f"client-{side}", label=f"limit {lp} width_req={profile.client.width_req}",
                utility_profile=base_c, utility_deviation=u,
                gain=u - base_c, tolerance=epsilon))

    max_gain = max(e.gain for e in entries)
    return BestResponseReport(
        mode="closed-form", n_mms=1,
        profile=f"client mkt width {profile.client.width_req}; quoter w={profile.mm.width} at fair price",
        epsilon_rule=f"epsilon = {epsilon!r} (1e-9 * notional)",
        paths=0, entries=entries, max_gain=max_gain,
        confirmed=not any(e.improves for e in entries))


# ---------------------------------------------------------------------------
# Engine-backed best response: two or more quoters, Monte Carlo
# ---------------------------------------------------------------------------


def _quote(ref: int, w: Fraction) -> tuple[int, int]:
    root = math.sqrt(float(w))
    bid = max(1, round(ref / root))
    offer = max(bid, round(ref * root))
    return bid, offer


@dataclass(frozen=True)
class _EngineGame:
    """Width-sensitive batch auction round, evaluated at a fixed flow pattern.

    Client i sells A (buys the swap) when its direction is +1, with a fixed
    per-client notional.  Quoter sizes dwarf total client flow, so the
    selected market always spans the imbalance.  Utilities: quoters mark
    token deltas at the fair price y; clients use the signed log-distance
    convention scaled by their filled fraction.
    """

    y: int
    f_mcf: Fraction
    n_clients: int
    client_size_a: int     # A atoms sold by a buyer of the swap

    def evaluate(self, mm_strats: Sequence[tuple[int, Fraction]],
                 client_strats: Sequence[ClientProfile],
                 directions: Sequence[int]) -> dict[str, float]:
        size_b = self.client_size_a // self.y
        depth = 10 * self.n_clients * self.client_size_a
        revealed = []
        for i, (ref, w) in enumerate(mm_strats):
            bid, offer = _quote(ref, w)
            revealed.append((f"m{i}", Market(bid=bid, size_bid=depth,
                                             offer=offer, size_offer=depth)))
        tight = select_tight_market(revealed)
        assert tight is not None
        player, m = tight
        w_tight = market_width(m)

        oid = 0
        buys, sells = [], []
        for i, (cs, d) in enumerate(zip(client_strats, directions)):
            price = MKT if cs.order_type == "mkt" else cs.limit_price
            if d > 0:
                buys.append(Order(oid=oid, owner=f"c{i}", tkn=TOKEN_A,
                                  size=self.client_size_a, price=price,
                                  width_req=cs.width_req))
            else:
                sells.append(Order(oid=oid, owner=f"c{i}", tkn=TOKEN_B,
                                   size=size_b, price=price,
                                   width_req=cs.width_req))
            oid += 1
        buys.append(Order(oid=oid, owner=player, tkn=TOKEN_A, size=m.size_bid,
                          price=m.bid, width_req=ANY))
        sells.append(Order(oid=oid + 1, owner=player, tkn=TOKEN_B,
                           size=m.size_offer, price=m.offer, width_req=ANY))

        book = AuctionBook(buy_orders=tuple(buys), sell_orders=tuple(sells),
                           w_tight=w_tight, tight_market=tight)
        filtered, _removed = filter_by_width(book)
        cand = find_clearing_price(filtered)
        utilities = {f"m{i}": 0.0 for i in range(len(mm_strats))}
        utilities.update({f"c{i}": 0.0 for i in range(self.n_clients)})
        if cand is None:
            return utilities
        result = settle(filtered, cand.cp)

        orders = {o.oid: o for o in (*filtered.buy_orders, *filtered.sell_orders)}
        for f in result.fills:
            o = orders[f.oid]
            if o.side == "buy":
                delta_ref = f.received * self.y - f.executed
                fraction = f.executed / o.size
                side = "buy"
            else:
                delta_ref = f.received - f.executed * self.y
                fraction = f.executed / o.size
                side = "sell"
            if o.owner.startswith("m"):
                utilities[o.owner] += float(delta_ref)
            elif fraction > 0:
                utilities[o.owner] += fraction * client_utility(
                    float(cand.cp), float(self.y), side, float(self.f_mcf))
        return utilities


def _pattern_utilities(game: _EngineGame, mm_strats, client_strats) -> dict[tuple, dict]:
    """Engine outcome for every distinct direction pattern (cached: the
    Monte Carlo flow for fixed sizes only has 2^k distinct patterns)."""
    out = {}
    for bits in range(2 ** game.n_clients):
        pattern = tuple(1 if bits & (1 << i) else -1 for i in range(game.n_clients))
        out[pattern] = game.evaluate(mm_strats, client_strats, pattern)
    return out


def _best_response_monte_carlo(profile: StrategyProfile, grid: DeviationGrid,
                               y: int, f_mcf: Fraction, notional: float,
                               paths: int, n_clients: int, seed: int) -> BestResponseReport:
    client_size_a = 10 * y  # divisible by y so seller sizes are exact
    game = _EngineGame(y=y, f_mcf=f_mcf, n_clients=n_clients,
                       client_size_a=client_size_a)
    base_ref = profile.mm.ref_price if profile.mm.ref_price is not None else y
    base_mm = [(base_ref, profile.mm.width), (base_ref, profile.mm.width)]
    base_clients = [profile.client] * n_clients

    rng = np.random.default_rng(seed)
    flows = rng.integers(0, 2, size=(paths, n_clients)) * 2 - 1  # common random numbers

    def utilities_per_path(mm_strats, client_strats, player: str) -> np.ndarray:
        table = _pattern_utilities(game, mm_strats, client_strats)
        keys = {pattern: u[player] for pattern, u in table.items()}
        return np.array([keys[tuple(row)] for row in flows])

    entries: list[DeviationResult] = []

    def paired_check(player: str, label: str, base: np.ndarray, dev: np.ndarray) -> None:
        diff = dev - base
        gain = float(diff.mean())
        se = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else 0.0
        entries.append(DeviationResult(
            player=player, label=label,
            utility_profile=float(base.mean()), utility_deviation=float(dev.mean()),
            gain=gain, tolerance=2 * se + 1e-9))

    base_u_mm = utilities_per_path(base_mm, base_clients, "m0")
    for w_dev in grid.mm_widths:
        for ref_dev in grid.mm_ref_prices:
            if (ref_dev, w_dev) == (base_ref, profile.mm.width):
                continue
            dev_mm = [(ref_dev, w_dev), base_mm[1]]
            dev_u = utilities_per_path(dev_mm, base_clients, "m0")
            paired_check("mm0", f"quote p_ref={ref_dev} w={w_dev}", base_u_mm, dev_u)

    base_u_c = utilities_per_path(base_mm, base_clients, "c0")
    for w_dev in grid.client_widths:
        strat = ClientProfile(order_type="mkt", width_req=w_dev)
        dev_u = utilities_per_path(base_mm, [strat] + base_clients[1:], "c0")
        paired_check("client0", f"mkt width_req={w_dev}", base_u_c, dev_u)
    for lp in grid.client_limit_prices:
        strat = ClientProfile(order_type="limit", width_req=profile.client.width_req,
                              limit_price=int(lp))
        dev_u = utilities_per_path(base_mm, [strat] + base_clients[1:], "c0")
        paired_check("client0", f"limit {lp}", base_u_c, dev_u)

    max_gain = max(e.gain for e in entries)
    return BestResponseReport(
        mode="monte-carlo", n_mms=2,
        profile=f"clients mkt width {profile.client.width_req}; quoters w={profile.mm.width} at fair price",
        epsilon_rule="epsilon = 2 * SE of paired differences (common random numbers) + 1e-9",
        paths=paths, entries=entries, max_gain=max_gain,
        confirmed=not any(e.improves for e in entries))


def best_response_check(profile: StrategyProfile, n_mms: int,
                        grid: Optional[DeviationGrid] = None, *,
                        y: int = 110, f_mcf: Fraction = Fraction(121, 100),
                        delta: float = 1.0, notional: float = 1.0,
                        paths: int = 10000, n_clients: int = 4,
                        seed: int = 7) -> BestResponseReport:
    """Check a strategy profile for improving unilateral deviations.

    Single-quoter games use the closed-form expected profit (deterministic,
    epsilon = 1e-9 * notional); games with two or more quoters run the
    auction engine path by path under common random client flow and test
    each deviation's mean gain against two standard errors.
    """
    if grid is None:
        grid = default_grid(y, f_mcf)
    if n_mms == 1:
        return _best_response_closed_form(profile, grid, y, f_mcf, delta,
                                          notional, epsilon=1e-9 * notional)
    return _best_response_monte_carlo(profile, grid, y, f_mcf, notional,
                                      paths, n_clients, seed)


# ---------------------------------------------------------------------------
# Execution-cost comparison
# ---------------------------------------------------------------------------

FAIRTRADEX = "FairTraDEX"
AMM = "AMM"
DIRECTION_REVEALING = "DirectionRevealing"
IDENTITY_REVEALING = "IdentityRevealing"

PROTOCOLS = (FAIRTRADEX, AMM, DIRECTION_REVEALING, IDENTITY_REVEALING)

#: Reference impact fractions by order notional (USDC-denominated study).
DEFAULT_IMPACT_TABLE: dict[float, float] = {10_000: 0.0, 500_000: 0.0015, 10_000_000: 0.01}
DEFAULT_SLIPPAGE = 0.005


@dataclass(frozen=True)
class PlayerProfile:
    direction_known: bool
    identity_known: bool = True


#: Balanced pseudo-random trader vs. a one-directional player.
P1 = PlayerProfile(direction_known=False)
P2 = PlayerProfile(direction_known=True)


@dataclass(frozen=True)
class CostModel:
    protocol: str
    impact_table: Mapping[float, float]
    slippage: float = 0.0

    def impact(self, notional: float, interpolate: bool = False) -> float:
        table = self.impact_table
        if notional in table:
            return table[notional]
        if not interpolate:
            raise KeyError(f"no impact entry for notional {notional}")
        xs = sorted(table)
        if notional <= xs[0]:
            return table[xs[0]]
        if notional >= xs[-1]:
            return table[xs[-1]]
        for lo, hi in zip(xs, xs[1:]):
            if lo <= notional <= hi:
                t = (notional - lo) / (hi - lo)
                return table[lo] + t * (table[hi] - table[lo])
        raise KeyError(notional)


def _decimal_product(notional: float, *fractions: float) -> float:
    # decimal-specified fractions multiply exactly through rationals, so
    # table cells like 500000 * (0.0015 + 0.005) come out as clean integers
    total = Fraction(str(notional)) * sum(Fraction(str(f)) for f in fractions)
    return float(total)


def execution_cost(model: CostModel, player: PlayerProfile, notional: float,
                   interpolate: bool = False) -> float:
    """Expected execution cost over explicit fees, per the comparison model."""
    if model.protocol == FAIRTRADEX:
        return 0.0
    impact = model.impact(notional, interpolate)
    if model.protocol == AMM:
        return _decimal_product(notional, impact, model.slippage)
    if model.protocol == DIRECTION_REVEALING:
        return _decimal_product(notional, impact)
    if model.protocol == IDENTITY_REVEALING:
        exploitable = model_inferable(player)
        return _decimal_product(notional, impact) if exploitable else 0.0
    raise ValueError(f"unknown protocol {model.protocol!r}")


def model_inferable(player: PlayerProfile) -> bool:
    """Direction inferable from identity: needs both to be exposed."""
    return player.identity_known and player.direction_known


def cost_table(impact_table: Optional[Mapping[float, float]] = None,
               slippage: float = DEFAULT_SLIPPAGE,
               notionals: Iterable[float] = (10_000, 500_000, 10_000_000)) -> tuple[list[str], list[list]]:
    """The 6-row, 4-protocol execution-cost matrix (header, rows)."""
    table = DEFAULT_IMPACT_TABLE if impact_table is None else impact_table
    models = {
        FAIRTRADEX: CostModel(FAIRTRADEX, table),
        AMM: CostModel(AMM, table, slippage=slippage),
        DIRECTION_REVEALING: CostModel(DIRECTION_REVEALING, table),
        IDENTITY_REVEALING: CostModel(IDENTITY_REVEALING, table),
    }
    header = ["order", FAIRTRADEX, "Uniswap", DIRECTION_REVEALING, IDENTITY_REVEALING]
    rows = []
    for notional in notionals:
        for name, player in (("P1", P1), ("P2", P2)):
            rows.append([f"{name}-{int(notional)}"] +
                        [execution_cost(models[p], player, notional) for p in PROTOCOLS])
    return header, rows
