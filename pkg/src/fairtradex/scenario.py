"""Scenario runner: wire chain + protocol + agents from a JSON config.

A scenario is deterministic in (config, seed): every random draw flows from
the scenario seed through a documented per-component derivation
(``derive_seed``), agents act in config order at the top of every block,
and the chain's ordering policy is the only adversarial degree of freedom.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from typing import Any, Optional

import jsonschema

from .auction import filter_by_width, find_clearing_price
from .chain import (CLIENT_REGISTER, CLIENT_REVEAL, COMMIT_CLIENT, COMMIT_MM,
                    CP, MM_REVEAL, ORDERING_POLICIES, RELAYED, Chain,
                    ExecutedTx, InvalidProof, Tx)
from .ledger import PROTOCOL_ACCOUNT, Ledger
from .membership import gen_secret, h, prove_membership, reg_id, serialize_proof
from .protocol import (ClientCommitPayload, ClientRevealPayload, CpPayload,
                       MMCommitPayload, MMRevealPayload, Phase, Protocol,
                       RegisterPayload, client_commitment, mm_commitment)
from .serialize import (dumps_canonical, fraction_from_json, price_to_json,
                        width_to_json)
from .units import (MKT, TOKEN_A, TOKEN_B, TOKEN_REF, WITHDRAW, Market,
                    ProtocolParams)


class ScenarioError(Exception):
    """Bad configuration (CLI exit code 2)."""


class InvariantViolation(Exception):
    """A runtime invariant broke mid-scenario (CLI exit code 3)."""


def derive_seed(seed: int, component: str) -> int:
    """Per-component 64-bit seed: first 8 bytes of h(seed || component)."""
    return int.from_bytes(h(seed.to_bytes(8, "big"), component.encode())[:8], "big")


_RATIONAL = {"type": ["integer", "string"]}
_FUNDING = {
    "type": "object",
    "additionalProperties": False,
    "properties": {t: {"type": "integer", "minimum": 0} for t in (TOKEN_REF, TOKEN_A, TOKEN_B)},
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "rounds", "params", "mifp", "agents"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "rounds": {"type": "integer", "minimum": 0},
        "ordering_policy": {"enum": sorted(ORDERING_POLICIES)},
        "protocol_funding": {"type": "integer", "minimum": 0},
        # assumed anonymity-set floor; recorded, never computed
        "n_psi": {"type": "integer", "minimum": 0},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["e_client", "e_mm", "q_not", "f_r", "res_bounty", "p_a", "t_blocks"],
            "properties": {
                "e_client": {"type": "integer", "minimum": 0},
                "e_mm": {"type": "integer", "minimum": 0},
                "q_not": {"type": "integer", "minimum": 0},
                "f_r": {"type": "integer", "minimum": 0},
                "res_bounty": {"type": "integer", "minimum": 0},
                "p_a": _RATIONAL,
                "t_blocks": {"type": "integer", "minimum": 1},
                "alpha": _RATIONAL,
                "f_mcf": _RATIONAL,
                "delta": _RATIONAL,
                "min_tick": {"type": "integer"},
            },
        },
        "mifp": {
            "type": "object",
            "additionalProperties": False,
            "required": ["y0"],
            "properties": {
                "y0": {"type": "integer", "minimum": 1},
                "delta": _RATIONAL,
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "role"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "role": {"enum": ["client", "mm", "relayer", "bounty_hunter"]},
                    "funding": _FUNDING,
                    "strategy": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "order": {"enum": ["mkt", "limit", "withdraw", "silent"]},
                            "side": {"enum": ["buy", "sell", "random"]},
                            "notional": {"type": "integer", "minimum": 1},
                            "width_req": _RATIONAL,
                            "limit_price": {"type": "integer", "minimum": 1},
                            "commit": {"type": "boolean"},
                            "reveal": {"type": "boolean"},
                            "re_register": {"type": "boolean"},
                            "width": _RATIONAL,
                            "ref": {"type": ["integer", "string"]},
                            "size_mult": {"type": "integer", "minimum": 1},
                            "invalid_first": {"type": "boolean"},
                        },
                    },
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace": {"type": "string"},
                "settlements": {"type": "string"},
                "summary": {"type": "string"},
            },
        },
    },
}


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"config error at {path}: {e.message}") from None


def _params_from_config(d: dict) -> ProtocolParams:
    try:
        return ProtocolParams(
            e_client=d["e_client"], e_mm=d["e_mm"], q_not=d["q_not"],
            f_r=d["f_r"], res_bounty=d["res_bounty"],
            p_a=fraction_from_json(d["p_a"]), t_blocks=d["t_blocks"],
            alpha=fraction_from_json(d.get("alpha", 0)),
            f_mcf=fraction_from_json(d.get("f_mcf", "121/100")),
            delta=fraction_from_json(d.get("delta", 1)),
            min_tick=d.get("min_tick", 1),
        )
    except (ValueError, KeyError) as e:
        raise ScenarioError(f"config error in params: {e}") from None


def _sqrt_fraction(w: Fraction) -> float:
    return math.sqrt(w.numerator) / math.sqrt(w.denominator)


def payload_to_json(payload: Any) -> Any:
    """Deterministic JSON form of a tx payload (bytes fields hex-encoded)."""
    if isinstance(payload, RegisterPayload):
        return {"reg_id": payload.reg_id.hex()}
    if isinstance(payload, ClientCommitPayload):
        return {"com": payload.com.hex(), "serial": payload.serial.hex(),
                "proof": serialize_proof(payload.proof).hex()}
    if isinstance(payload, MMCommitPayload):
        return {"com": payload.com.hex()}
    if isinstance(payload, ClientRevealPayload):
        return {"tkn": payload.tkn, "size": payload.size,
                "price": price_to_json(payload.price),
                "width": width_to_json(payload.width),
                "serial": payload.serial.hex(), "randomness": payload.randomness.hex(),
                "reg_id": payload.reg_id.hex(),
                "reg_token_new": payload.reg_token_new.hex() if payload.reg_token_new else None}
    if isinstance(payload, MMRevealPayload):
        m = payload.market
        return {"bid": m.bid, "size_bid": m.size_bid, "offer": m.offer,
                "size_offer": m.size_offer}
    if isinstance(payload, CpPayload):
        return {"cp": payload.cp, "volume_a": payload.volume_a,
                "imbalance_a": payload.imbalance_a}
    return {"repr": repr(payload)}


class _View:
    """Read-only state handed to agents at the top of each block."""

    def __init__(self, runner: "Runner"):
        self.runner = runner

    @property
    def phase(self):
        return self.runner.protocol.phase

    @property
    def round(self):
        return self.runner.protocol.round

    @property
    def height(self):
        return self.runner.chain.height

    @property
    def registry(self):
        return list(self.runner.protocol.clients)

    @property
    def y(self) -> int:
        return self.runner.current_y()


@dataclass
class _ClientState:
    secret: Any = None
    registered: bool = False
    committed_round: int = -1
    revealed_round: int = -1
    order: Optional[tuple] = None  # (tkn, size, price, width)
    next_secret: Any = None


class ClientAgent:
    def __init__(self, pid: str, strategy: dict, rounds: int, seed: int):
        self.pid = pid
        self.rounds = rounds
        self.order_kind = strategy.get("order", "mkt")
        self.side = strategy.get("side", "random")
        self.notional = strategy.get("notional", 0)
        self.width_req = fraction_from_json(strategy.get("width_req", "121/100"))
        self.limit_price = strategy.get("limit_price")
        self.commit = strategy.get("commit", True)
        self.reveal = strategy.get("reveal", True)
        self.re_register = strategy.get("re_register", rounds > 1)
        self.rng = random.Random(seed)
        self.state = _ClientState()
        self._secret_counter = 0

    def _fresh_secret(self, scenario_seed: int):
        self._secret_counter += 1
        return gen_secret(derive_seed(scenario_seed, f"client:{self.pid}:{self._secret_counter}"))

    def plan_registration(self, scenario_seed: int) -> Tx:
        self.state.secret = self._fresh_secret(scenario_seed)
        return Tx(kind=CLIENT_REGISTER, payload=RegisterPayload(reg_id(self.state.secret)),
                  sender=self.pid)

    def _sized_order(self, view: _View, params: ProtocolParams):
        side = self.side
        if side == "random":
            side = "buy" if view.runner.next_direction() > 0 else "sell"
        price = MKT if self.order_kind == "mkt" else self.limit_price
        if self.order_kind == "withdraw":
            price = WITHDRAW
            return (TOKEN_A, 1, price, self.width_req)
        if side == "buy":
            size = int(Fraction(self.notional) / params.p_a)
            return (TOKEN_A, size, price, self.width_req)
        hint = view.y if price is MKT else price
        size = int(Fraction(self.notional) / (params.p_a * hint))
        return (TOKEN_B, size, price, self.width_req)

    def on_block(self, view: _View, scenario_seed: int) -> list[tuple[str, Tx]]:
        st = self.state
        proto = view.runner.protocol
        params = proto.params
        out: list[tuple[str, Tx]] = []
        if view.phase is Phase.COMMIT and self.commit and st.committed_round < view.round:
            if reg_id(st.secret) not in proto.clients:
                return out  # registration not confirmed yet
            st.order = self._sized_order(view, params)
            tkn, size, price, width = st.order
            com = client_commitment(tkn, size, price, width)
            proof = prove_membership(st.secret, view.registry, com)
            tx = Tx(kind=COMMIT_CLIENT, sender=RELAYED,
                    payload=ClientCommitPayload(com=com, serial=st.secret.s, proof=proof))
            st.committed_round = view.round
            out.append(("relay", tx))
        elif (view.phase is Phase.REVEAL and self.reveal
                and st.committed_round == view.round and st.revealed_round < view.round):
            tkn, size, price, width = st.order
            stay = self.re_register and view.round + 1 < self.rounds
            new_token = None
            if stay:
                st.next_secret = self._fresh_secret(scenario_seed)
                new_token = reg_id(st.next_secret)
            tx = Tx(kind=CLIENT_REVEAL, sender=self.pid,
                    payload=ClientRevealPayload(
                        tkn=tkn, size=size, price=price, width=width,
                        serial=st.secret.s, randomness=st.secret.r,
                        reg_id=reg_id(st.secret), reg_token_new=new_token))
            st.revealed_round = view.round
            if stay:
                st.secret = st.next_secret
            out.append(("submit", tx))
        return out


class MMAgent:
    def __init__(self, pid: str, strategy: dict, seed: int):
        self.pid = pid
        self.width = fraction_from_json(strategy.get("width", 1))
        self.ref = strategy.get("ref", "mifp")
        self.size_mult = strategy.get("size_mult", 2)
        self.commit = strategy.get("commit", True)
        self.reveal = strategy.get("reveal", True)
        self.committed_round = -1
        self.revealed_round = -1
        self.market: Optional[Market] = None

    def _make_market(self, view: _View, params: ProtocolParams) -> Market:
        ref = view.y if self.ref == "mifp" else int(self.ref)
        root = _sqrt_fraction(self.width)
        bid = max(1, round(ref / root))
        offer = max(bid, round(ref * root))
        min_bid = ceil(Fraction(params.q_not) / params.p_a)
        min_offer = ceil(Fraction(params.q_not) / (params.p_a * offer))
        return Market(bid=bid, size_bid=self.size_mult * min_bid,
                      offer=offer, size_offer=self.size_mult * min_offer)

    def on_block(self, view: _View, scenario_seed: int) -> list[tuple[str, Tx]]:
        out: list[tuple[str, Tx]] = []
        if view.phase is Phase.COMMIT and self.commit and self.committed_round < view.round:
            self.market = self._make_market(view, view.runner.protocol.params)
            tx = Tx(kind=COMMIT_MM, sender=self.pid,
                    payload=MMCommitPayload(mm_commitment(self.market)))
            self.committed_round = view.round
            out.append(("submit", tx))
        elif (view.phase is Phase.REVEAL and self.reveal
                and self.committed_round == view.round and self.revealed_round < view.round):
            tx = Tx(kind=MM_REVEAL, sender=self.pid,
                    payload=MMRevealPayload(self.market))
            self.revealed_round = view.round
            out.append(("submit", tx))
        return out


class BountyHunterAgent:
    def __init__(self, pid: str, strategy: dict):
        self.pid = pid
        self.invalid_first = strategy.get("invalid_first", False)
        self.attempted_round = -1

    def on_block(self, view: _View, scenario_seed: int) -> list[tuple[str, Tx]]:
        if view.phase is not Phase.RESOLUTION or self.attempted_round >= view.round:
            return []
        proto = view.runner.protocol
        book, _removed = filter_by_width(proto.current_book())
        cand = find_clearing_price(book)
        if cand is None:
            return []
        self.attempted_round = view.round
        out = []
        if self.invalid_first:
            # a doomed proposal first, in the same block, to forfeit a deposit
            bogus = CpPayload(cp=cand.cp, volume_a=cand.volume_a + 1,
                              imbalance_a=cand.imbalance_a)
            out.append(("submit", Tx(kind=CP, sender=self.pid, payload=bogus)))
        payload = CpPayload(cp=cand.cp, volume_a=cand.volume_a,
                            imbalance_a=cand.imbalance_a)
        out.append(("submit", Tx(kind=CP, sender=self.pid, payload=payload)))
        return out


@dataclass
class RunResult:
    trace: list[dict]
    settlements: list[dict]
    summary_rows: list[list]
    rounds_completed: int
    stalled: bool
    init_height: int = 0
    warnings: tuple[str, ...] = ()


SUMMARY_HEADER = ["round", "cp", "volume_b", "imbalance_a", "w_tight",
                  "fills", "burn_events", "blacklisted", "bounty_winner"]


class Runner:
    def __init__(self, config: dict):
        validate_config(config)
        self.config = config
        self.seed = config["seed"]
        self.rounds = config["rounds"]
        self.params = _params_from_config(config["params"])

        self.ledger = Ledger()
        policy = ORDERING_POLICIES[config.get("ordering_policy", "identity")]
        self.chain = Chain(t_eff=self.params.t_eff, policy=policy,
                           seed=derive_seed(self.seed, "ordering"))
        self.protocol = Protocol(self.params, self.ledger)

        mifp = config["mifp"]
        self._y0 = mifp["y0"]
        self._mifp_delta = fraction_from_json(mifp.get("delta", 1))
        self._net_buys = 0
        self._direction_rng = random.Random(
            derive_seed(mifp.get("seed", derive_seed(self.seed, "mifp")), "directions"))

        self.clients: list[ClientAgent] = []
        self.mms: list[MMAgent] = []
        self.hunters: list[BountyHunterAgent] = []
        self.agents: list = []
        seen = set()
        for spec in config["agents"]:
            pid = spec["id"]
            if pid in seen:
                raise ScenarioError(f"config error in agents: duplicate id {pid!r}")
            seen.add(pid)
            for tkn, amt in spec.get("funding", {}).items():
                self.ledger.mint(pid, tkn, amt)
            strategy = spec.get("strategy", {})
            if spec["role"] == "client":
                agent = ClientAgent(pid, strategy, self.rounds,
                                    derive_seed(self.seed, f"agent:{pid}"))
                self.clients.append(agent)
                self.agents.append(agent)
            elif spec["role"] == "mm":
                agent = MMAgent(pid, strategy, derive_seed(self.seed, f"agent:{pid}"))
                self.mms.append(agent)
                self.agents.append(agent)
            elif spec["role"] == "bounty_hunter":
                agent = BountyHunterAgent(pid, strategy)
                self.hunters.append(agent)
                self.agents.append(agent)
            else:
                self.chain.register_relayer(pid)
        self.ledger.mint(PROTOCOL_ACCOUNT, TOKEN_REF, config.get("protocol_funding", 0))

        self.trace: list[dict] = []
        self._initial_supplies = None

    # -- mifp ---------------------------------------------------------------

    def current_y(self) -> int:
        y = self._y0 * self._mifp_delta ** self._net_buys
        return max(1, round(y))

    def next_direction(self) -> int:
        # impact applies as order flow arrives: each drawn direction moves
        # the fair price by delta (or 1/delta) for everyone who quotes later
        d = self._direction_rng.choice((1, -1))
        self._net_buys += 1 if d > 0 else -1
        return d

    # -- block loop -----------------------------------------------------------

    def _record(self, etx: ExecutedTx, effects: dict) -> None:
        digest = h(dumps_canonical(payload_to_json(etx.tx.payload)).encode()).hex()[:16]
        self.trace.append({
            "height": etx.height, "seq": etx.seq, "kind": etx.tx.kind,
            "sender": etx.tx.sender, "relayer": etx.relayer,
            "digest": digest, "effects": effects,
        })

    def _step_block(self, collect_agent_txs: bool = True) -> None:
        if collect_agent_txs:
            view = _View(self)
            for agent in self.agents:
                for channel, tx in agent.on_block(view, self.seed):
                    if channel == "relay":
                        try:
                            self.chain.relay(tx, self.protocol.commit_looks_valid)
                        except InvalidProof:
                            pass  # relayers silently drop it
                    else:
                        self.chain.submit(tx)
        for etx in self.chain.advance_block():
            effects = self.protocol.handle(etx)
            self._record(etx, effects)
        if self.protocol.phase is not None:
            events = self.protocol.on_block_end(self.chain.height)
            for ev in events:
                self.trace.append({"height": self.chain.height, "seq": None,
                                   "kind": ev, "sender": None, "relayer": None,
                                   "digest": "", "effects": {}})
        self._check_conservation()

    def _check_conservation(self) -> None:
        supplies = self.ledger.supplies()
        if self._initial_supplies is None:
            self._initial_supplies = supplies
        elif supplies != self._initial_supplies:
            raise InvariantViolation(
                f"token conservation broken: {supplies} != {self._initial_supplies}")

    def run(self) -> RunResult:
        # registration window: queue all registrations, then let them land
        for agent in self.clients:
            self.chain.submit(agent.plan_registration(self.seed))
        while self.chain.pending:
            self._step_block(collect_agent_txs=False)
        self.protocol.initialise(self.chain.height)
        init_height = self.chain.height

        warnings = []
        n_psi = self.config.get("n_psi", 0)
        if len(self.protocol.clients) < n_psi:
            warnings.append(f"registrations ({len(self.protocol.clients)}) below "
                            f"the assumed anonymity floor n_psi={n_psi}")

        if self.rounds > 0:
            budget = self.rounds * (3 * self.params.t_eff + 4) + 4 * self.params.t_eff
            for _ in range(budget):
                self._step_block()
                if self.protocol.round >= self.rounds:
                    break
        stalled = self.protocol.round < self.rounds

        summary_rows = []
        for rep in self.protocol.settlements:
            summary_rows.append([
                rep["round"], rep["cp"], rep["volume_b"], rep["imbalance_a"],
                rep["w_tight"], len(rep["fills"]), len(rep["burned"]),
                len(rep["blacklisted"]), rep["bounty_winner"],
            ])
        return RunResult(trace=self.trace, settlements=self.protocol.settlements,
                         summary_rows=summary_rows,
                         rounds_completed=self.protocol.round, stalled=stalled,
                         init_height=init_height, warnings=tuple(warnings))
