from fractions import Fraction

from fairtradex.chain import (CLIENT_REGISTER, CLIENT_REVEAL, COMMIT_CLIENT,
                              COMMIT_MM, CP, MM_REVEAL, RELAYED, Tx)
from fairtradex.ledger import BURN_SINK, PROTOCOL_ACCOUNT, Ledger
from fairtradex.membership import gen_secret, prove_membership, reg_id
from fairtradex.protocol import (ClientCommitPayload, ClientRevealPayload,
                                 CpPayload, MMCommitPayload, MMRevealPayload,
                                 Phase, Protocol, RegisterPayload,
                                 client_commitment, mm_commitment)
from fairtradex.auction import filter_by_width, find_clearing_price
from fairtradex.units import (ANY, MKT, TOKEN_A, TOKEN_B, TOKEN_REF, WITHDRAW,
                              Market)

from helpers import etx, fund, make_params


class World:
    """Protocol + ledger with funded players; drives handlers directly."""

    def __init__(self, **param_overrides):
        self.params = make_params(**param_overrides)
        self.ledger = Ledger()
        self.proto = Protocol(self.params, self.ledger)
        self.ledger.mint(PROTOCOL_ACCOUNT, TOKEN_REF, 100 * self.params.res_bounty)
        self.height = 0
        self.secrets = {}

    def add_client(self, pid, seed, ref=None, a=0, b=0):
        fund(self.ledger, pid, ref=ref if ref is not None else
             2 * (self.params.e_client + self.params.f_r), a=a, b=b)
        self.secrets[pid] = gen_secret(seed)

    def add_mm(self, pid, ref=None, a=10**6, b=10**6):
        fund(self.ledger, pid, ref=ref if ref is not None else 2 * self.params.e_mm,
             a=a, b=b)

    def register(self, pid):
        return self.proto.handle(etx(Tx(kind=CLIENT_REGISTER, sender=pid,
                                        payload=RegisterPayload(reg_id(self.secrets[pid]))),
                                     height=self.height))

    def start(self):
        self.proto.initialise(self.height)

    def commit_client(self, pid, order, relayer="relay1"):
        tkn, size, price, width = order
        com = client_commitment(tkn, size, price, width)
        proof = prove_membership(self.secrets[pid], self.proto.clients, com)
        tx = Tx(kind=COMMIT_CLIENT, sender=RELAYED,
                payload=ClientCommitPayload(com=com, serial=self.secrets[pid].s, proof=proof))
        return self.proto.handle(etx(tx, height=self.height, relayer=relayer))

    def commit_mm(self, pid, market):
        tx = Tx(kind=COMMIT_MM, sender=pid, payload=MMCommitPayload(mm_commitment(market)))
        return self.proto.handle(etx(tx, height=self.height))

    def reveal_client(self, pid, order, reg_token_new=None, **overrides):
        tkn, size, price, width = order
        payload = ClientRevealPayload(
            tkn=overrides.get("tkn", tkn), size=overrides.get("size", size),
            price=overrides.get("price", price), width=overrides.get("width", width),
            serial=self.secrets[pid].s, randomness=self.secrets[pid].r,
            reg_id=reg_id(self.secrets[pid]), reg_token_new=reg_token_new)
        return self.proto.handle(etx(Tx(kind=CLIENT_REVEAL, sender=pid, payload=payload),
                                     height=self.height))

    def reveal_mm(self, pid, market):
        return self.proto.handle(etx(Tx(kind=MM_REVEAL, sender=pid,
                                        payload=MMRevealPayload(market)),
                                     height=self.height))

    def submit_cp(self, pid="hunter"):
        if self.ledger.balance(pid, TOKEN_REF) == 0:
            fund(self.ledger, pid, ref=10 * self.params.res_bounty)
        book, _ = filter_by_width(self.proto.current_book())
        cand = find_clearing_price(book)
        assert cand is not None, "no crossable liquidity in test book"
        payload = CpPayload(cp=cand.cp, volume_a=cand.volume_a,
                            imbalance_a=cand.imbalance_a)
        return self.proto.handle(etx(Tx(kind=CP, sender=pid, payload=payload),
                                     height=self.height))

    def next_phase(self):
        self.height = self.proto.last_phase_change + self.params.t_eff
        self.proto.on_block_end(self.height)

    def supplies(self):
        return self.ledger.supplies()


def spanning_market(world, mult=2):
    p = world.params
    min_bid = -(-p.q_not // int(p.p_a))
    offer = 102
    min_offer = -(-p.q_not // (int(p.p_a) * offer))
    return Market(bid=98, size_bid=mult * min_bid, offer=offer,
                  size_offer=mult * min_offer)


MKT_BUY = (TOKEN_A, 500, MKT, Fraction(121, 100))
MKT_SELL = (TOKEN_B, 5, MKT, Fraction(121, 100))


class TestRegister:
    def test_funded_player_registers(self):
        w = World()
        w.add_client("c1", 1)
        before = w.ledger.balance("c1", TOKEN_REF)
        assert w.register("c1")["applied"]
        assert len(w.proto.clients) == 1
        assert before - w.ledger.balance("c1", TOKEN_REF) == w.params.e_client + w.params.f_r

    def test_underfunded_rejected(self):
        w = World()
        w.add_client("c1", 1, ref=w.params.e_client + w.params.f_r)  # needs strictly more
        snap = w.ledger.snapshot()
        assert not w.register("c1")["applied"]
        assert w.ledger.snapshot() == snap and not w.proto.clients

    def test_duplicate_reg_id_appended_and_flagged(self):
        w = World()
        w.add_client("c1", 1)
        w.secrets["c2"] = w.secrets["c1"]
        fund(w.ledger, "c2", ref=2 * (w.params.e_client + w.params.f_r))
        assert w.register("c1")["duplicate_reg_id"] is False
        assert w.register("c2")["duplicate_reg_id"] is True
        assert len(w.proto.clients) == 2


class TestCommitClient:
    def setup_world(self):
        w = World()
        w.add_client("c1", 1, a=10**4, b=10**4)
        w.add_client("c2", 2, a=10**4, b=10**4)
        w.register("c1")
        w.register("c2")
        w.start()
        return w

    def test_valid_commit_pays_relayer(self):
        w = self.setup_world()
        eff = w.commit_client("c1", MKT_BUY)
        assert eff["applied"] and eff["relayer"] == "relay1"
        assert w.ledger.balance("relay1", TOKEN_REF) == w.params.f_r
        assert len(w.proto.client_commits) == 1

    def test_serial_reuse_rejected(self):
        w = self.setup_world()
        assert w.commit_client("c1", MKT_BUY)["applied"]
        eff = w.commit_client("c1", MKT_SELL)
        assert not eff["applied"] and eff["reason"] == "bad-proof"

    def test_notional_cap_boundary(self):
        w = World(q_not=2 * 1_000)  # fits exactly two client escrows
        for i, pid in enumerate(["c1", "c2", "c3"], start=1):
            w.add_client(pid, i, a=10**4)
            w.register(pid)
        w.start()
        assert w.commit_client("c1", MKT_BUY)["applied"]
        assert w.commit_client("c2", MKT_BUY)["applied"]
        assert w.proto.curr_auc_notional == w.params.q_not
        eff = w.commit_client("c3", MKT_BUY)
        assert not eff["applied"] and eff["reason"] == "notional-cap"

    def test_phase_guard(self):
        w = self.setup_world()
        w.next_phase()  # now Reveal
        eff = w.commit_client("c1", MKT_BUY)
        assert not eff["applied"] and eff["reason"] == "phase"

    def test_unrelayed_commit_rejected(self):
        w = self.setup_world()
        eff = w.commit_client("c1", MKT_BUY, relayer=None)
        assert not eff["applied"] and eff["reason"] == "not-relayed"


class TestCommitMM:
    def test_escrow_taken(self):
        w = World()
        w.add_mm("m1")
        w.start()
        assert w.commit_mm("m1", spanning_market(w))["applied"]
        assert w.ledger.balance("m1", TOKEN_REF) == w.params.e_mm

    def test_one_market_per_player(self):
        w = World()
        w.add_mm("m1", ref=10 * w.params.e_mm)
        w.start()
        assert w.commit_mm("m1", spanning_market(w))["applied"]
        eff = w.commit_mm("m1", spanning_market(w, mult=3))
        assert not eff["applied"] and eff["reason"] == "one-market-per-player"

    def test_phase_guard(self):
        w = World()
        w.add_mm("m1")
        w.start()
        w.next_phase()
        assert w.commit_mm("m1", spanning_market(w))["reason"] == "phase"


class TestRevealClient:
    def setup_committed(self, order=MKT_BUY, **world_kw):
        w = World(**world_kw)
        w.add_client("c1", 1, a=10**4, b=10**4)
        w.register("c1")
        w.start()
        w.commit_client("c1", order)
        w.next_phase()
        return w

    def test_matching_reveal_returns_escrow_and_books_order(self):
        w = self.setup_committed()
        ref_before = w.ledger.balance("c1", TOKEN_REF)
        eff = w.reveal_client("c1", MKT_BUY)
        assert eff["applied"] and eff["escrow_returned"]
        assert w.ledger.balance("c1", TOKEN_REF) == ref_before + w.params.e_client
        assert len(w.proto.revealed_buys) == 1
        # sold tokens escrowed with the protocol
        assert w.ledger.balance(PROTOCOL_ACCOUNT, TOKEN_A) == 500

    def test_mutated_size_rejected(self):
        w = self.setup_committed()
        eff = w.reveal_client("c1", MKT_BUY, size=400)
        assert not eff["applied"] and eff["reason"] == "commitment-mismatch"

    def test_withdraw_returns_escrow_without_order(self):
        order = (TOKEN_A, 1, WITHDRAW, Fraction(121, 100))
        w = self.setup_committed(order)
        eff = w.reveal_client("c1", order)
        assert eff["applied"] and eff.get("withdrawn")
        assert not w.proto.revealed_buys and not w.proto.revealed_sells

    def test_b_sale_size_capped_by_escrow(self):
        # e_client 1000, p_a 1, limit price 100 -> cap 10 B
        order = (TOKEN_B, 50, 100, Fraction(121, 100))
        w = self.setup_committed(order)
        eff = w.reveal_client("c1", order)
        assert eff["applied"] and eff["size"] == 10
        assert w.proto.revealed_sells[0].size == 10

    def test_a_sale_size_capped_by_escrow(self):
        order = (TOKEN_A, 5_000, MKT, Fraction(121, 100))
        w = self.setup_committed(order)
        eff = w.reveal_client("c1", order)
        assert eff["applied"] and eff["size"] == 1_000

    def test_re_registration_keeps_escrow_and_charges_fee(self):
        w = self.setup_committed()
        new_secret = gen_secret(42)
        ref_before = w.ledger.balance("c1", TOKEN_REF)
        eff = w.reveal_client("c1", MKT_BUY, reg_token_new=reg_id(new_secret))
        assert eff["applied"] and eff["re_registered"] and not eff["escrow_returned"]
        assert w.ledger.balance("c1", TOKEN_REF) == ref_before - w.params.f_r
        assert reg_id(new_secret) in w.proto.clients

    def test_double_reveal_rejected(self):
        w = self.setup_committed()
        assert w.reveal_client("c1", MKT_BUY)["applied"]
        eff = w.reveal_client("c1", MKT_BUY)
        assert not eff["applied"] and eff["reason"] == "unknown-serial"


class TestWrongPhaseReveals:
    def test_reveal_client_rejected_in_commit_phase(self):
        w = World()
        w.add_client("c1", 1, a=10**4)
        w.register("c1")
        w.start()
        w.commit_client("c1", MKT_BUY)
        eff = w.reveal_client("c1", MKT_BUY)  # still Commit
        assert not eff["applied"] and eff["reason"] == "phase"

    def test_reveal_mm_rejected_in_commit_phase(self):
        w = World()
        w.add_mm("m1")
        w.start()
        m = spanning_market(w)
        w.commit_mm("m1", m)
        eff = w.reveal_mm("m1", m)
        assert not eff["applied"] and eff["reason"] == "phase"


class TestRevealMM:
    def setup_committed(self, market=None, **mm_kw):
        w = World()
        w.add_mm("m1", **mm_kw)
        w.start()
        self.market = market or spanning_market(w)
        w.commit_mm("m1", self.market)
        w.next_phase()
        return w

    def test_valid_market_recorded(self):
        w = self.setup_committed()
        assert w.reveal_mm("m1", self.market)["applied"]
        assert len(w.proto.revealed_mkts) == 1
        # escrow return waits for the phase end
        assert w.ledger.balance("m1", TOKEN_REF) == w.params.e_mm

    def test_below_minimum_liquidity_ignored(self):
        w = World()
        w.add_mm("m1")
        w.start()
        thin = Market(bid=98, size_bid=10, offer=102, size_offer=1)
        w.commit_mm("m1", thin)
        w.next_phase()
        eff = w.reveal_mm("m1", thin)
        assert not eff["applied"] and eff["reason"] == "below-minimum-liquidity"
        assert "m1" in w.proto.mm_commits  # still committed, escrow at risk

    def test_mismatched_market_ignored(self):
        w = self.setup_committed()
        eff = w.reveal_mm("m1", spanning_market(w, mult=3))
        assert not eff["applied"] and eff["reason"] == "commitment-mismatch"


class TestEndRevealPhase:
    def test_one_revealed_one_silent(self):
        w = World()
        w.add_mm("m1")
        w.add_mm("m2")
        w.start()
        m = spanning_market(w)
        w.commit_mm("m1", m)
        w.commit_mm("m2", spanning_market(w, mult=3))
        w.next_phase()
        w.reveal_mm("m1", m)
        w.next_phase()  # reveal deadline
        assert w.proto.phase is Phase.RESOLUTION
        assert w.ledger.balance("m1", TOKEN_REF) == 2 * w.params.e_mm - \
            0  # escrow back
        assert w.ledger.balance(BURN_SINK, TOKEN_REF) == w.params.e_mm
        assert w.proto.tight_market[0] == "m1"

    def test_zero_markets_keeps_any_width(self):
        w = World()
        w.add_client("c1", 1, a=10**4)
        w.register("c1")
        w.start()
        w.commit_client("c1", MKT_BUY)
        w.next_phase()
        w.reveal_client("c1", MKT_BUY)
        w.next_phase()
        assert w.proto.phase is Phase.RESOLUTION
        assert w.proto.w_tight is ANY and w.proto.tight_market is None
        assert len(w.proto.revealed_buys) == 1  # client-only book survives

    def test_unrevealed_client_blacklisted_and_burned(self):
        w = World()
        w.add_client("c1", 1, a=10**4)
        w.add_client("c2", 2, a=10**4)
        w.register("c1")
        w.register("c2")
        w.start()
        w.commit_client("c1", MKT_BUY)
        w.commit_client("c2", MKT_BUY)
        w.next_phase()
        w.reveal_client("c1", MKT_BUY)
        w.next_phase()
        assert w.secrets["c2"].s in w.proto.blacklisted
        assert w.ledger.balance(BURN_SINK, TOKEN_REF) == w.params.e_client

    def test_tight_market_implicit_orders(self):
        w = World()
        w.add_mm("m1")
        w.start()
        m = spanning_market(w)
        w.commit_mm("m1", m)
        w.next_phase()
        w.reveal_mm("m1", m)
        w.next_phase()
        buys, sells = w.proto.revealed_buys, w.proto.revealed_sells
        assert len(buys) == 1 and len(sells) == 1
        assert buys[0].width_req is ANY and sells[0].width_req is ANY
        assert buys[0].price == m.bid and sells[0].price == m.offer
        # escrow-capped sizes: e_mm 25000, p_a 1 -> bid cap 25000 A;
        # offer cap 25000 // 102 = 245 B
        assert buys[0].size == min(m.size_bid, 25_000)
        assert sells[0].size == min(m.size_offer, 245)
        assert w.ledger.balance(PROTOCOL_ACCOUNT, TOKEN_A) == buys[0].size


class TestResolution:
    def full_round(self):
        w = World()
        w.add_client("cb", 1, a=10**4)
        w.add_client("cs", 2, b=10**4)
        w.add_mm("m1")
        for pid in ("cb", "cs"):
            w.register(pid)
        w.start()
        m = spanning_market(w)
        w.commit_mm("m1", m)
        w.commit_client("cb", MKT_BUY)
        w.commit_client("cs", MKT_SELL)
        w.next_phase()
        w.reveal_client("cb", MKT_BUY)
        w.reveal_client("cs", MKT_SELL)
        w.reveal_mm("m1", m)
        w.next_phase()
        fund(w.ledger, "hunter", ref=10 * w.params.res_bounty)
        return w

    def test_valid_cp_settles_and_rewards(self):
        w = self.full_round()
        fund(w.ledger, "hunter", ref=10 * w.params.res_bounty)
        before = w.ledger.balance("hunter", TOKEN_REF)
        eff = w.submit_cp("hunter")
        assert eff["applied"]
        assert w.ledger.balance("hunter", TOKEN_REF) == before + w.params.res_bounty
        assert w.proto.phase is Phase.COMMIT and w.proto.round == 1
        assert len(w.proto.settlements) == 1
        rep = w.proto.settlements[0]
        assert rep["bounty_winner"] == "hunter" and rep["volume_b"] > 0

    def test_invalid_cp_forfeits_deposit_and_leaves_auction_open(self):
        w = self.full_round()
        fund(w.ledger, "liar", ref=10 * w.params.res_bounty)
        book, _ = filter_by_width(w.proto.current_book())
        cand = find_clearing_price(book)
        bogus = CpPayload(cp=cand.cp, volume_a=cand.volume_a + 1,
                          imbalance_a=cand.imbalance_a)
        before = w.ledger.balance("liar", TOKEN_REF)
        eff = w.proto.handle(etx(Tx(kind=CP, sender="liar", payload=bogus),
                                 height=w.height))
        assert not eff["applied"] and eff["deposit_lost"]
        assert w.ledger.balance("liar", TOKEN_REF) == before - w.params.res_bounty
        assert w.proto.phase is Phase.RESOLUTION
        # a second, honest proposal still settles
        assert w.submit_cp("hunter")["applied"]

    def test_cp_rejected_outside_resolution(self):
        w = World()
        w.add_client("c1", 1, a=10**4)
        w.register("c1")
        w.start()
        fund(w.ledger, "hunter", ref=10 * w.params.res_bounty)
        payload = CpPayload(cp=100, volume_a=1, imbalance_a=0)
        eff = w.proto.handle(etx(Tx(kind=CP, sender="hunter", payload=payload),
                                 height=w.height))
        assert not eff["applied"] and eff["reason"] == "phase"

    def test_round_isolation(self):
        w = self.full_round()
        w.submit_cp("hunter")
        # round 1: a fresh commitment holds the reveal window open
        w.add_client("c3", 3, a=10**4)
        w.register("c3")
        w.commit_client("c3", MKT_BUY)
        w.next_phase()
        assert w.proto.phase is Phase.REVEAL
        # the round-0 serial is spent: its reveal must not apply
        eff = w.reveal_client("cb", MKT_BUY)
        assert not eff["applied"] and eff["reason"] == "unknown-serial"

    def test_conservation_across_full_round(self):
        w = self.full_round()
        start = w.supplies()
        w.submit_cp("hunter")
        assert w.supplies() == start

    def test_settlement_conserves_client_tokens(self):
        w = self.full_round()
        w.submit_cp("hunter")
        rep = w.proto.settlements[0]
        spent = sum(f["executed"] for f in rep["fills"] if f["side"] == "buy")
        recv = sum(f["received"] for f in rep["fills"] if f["side"] == "sell")
        assert spent == recv == rep["volume_b"] * rep["cp"]


class TestPhaseGuardTotality:
    def world_in_phase(self, phase):
        w = World()
        w.add_client("c1", 1, a=10**4)
        w.register("c1")
        if phase is None:
            return w
        w.start()
        if phase is Phase.REVEAL:
            # an empty reveal registry exits early, so park a commitment
            w.commit_client("c1", MKT_BUY)
            w.next_phase()
        elif phase is Phase.RESOLUTION:
            w.next_phase()  # empty round: straight through reveal
        assert w.proto.phase is phase
        return w

    def test_every_kind_in_every_phase_is_total(self):
        kinds = [CLIENT_REGISTER, COMMIT_CLIENT, COMMIT_MM, CLIENT_REVEAL,
                 MM_REVEAL, CP, "garbage"]
        for phase in (None, Phase.COMMIT, Phase.REVEAL, Phase.RESOLUTION):
            for kind in kinds:
                w = self.world_in_phase(phase)
                tx = Tx(kind=kind, sender="c1", payload={"junk": True})
                eff = w.proto.handle(etx(tx, height=w.height))
                assert eff["applied"] is False

    def test_adversarially_typed_fields_are_noops(self):
        from fairtradex.protocol import (ClientCommitPayload, ClientRevealPayload,
                                         CpPayload, MMCommitPayload,
                                         MMRevealPayload, RegisterPayload)
        bad_payloads = [
            (CLIENT_REGISTER, RegisterPayload(reg_id="x" * 32)),       # str, not bytes
            (CLIENT_REGISTER, RegisterPayload(reg_id=b"short")),
            (COMMIT_CLIENT, ClientCommitPayload(com=b"\0" * 32, serial=b"\0" * 32,
                                                proof="not-a-proof")),
            (COMMIT_MM, MMCommitPayload(com="nope")),
            (CLIENT_REVEAL, ClientRevealPayload(tkn="C", size=1, price=MKT,
                                                width=ANY, serial=b"\0" * 32,
                                                randomness=b"\0" * 32,
                                                reg_id=b"\0" * 32)),
            (CLIENT_REVEAL, ClientRevealPayload(tkn="A", size=1, price=1.5,
                                                width=ANY, serial=b"\0" * 32,
                                                randomness=b"\0" * 32,
                                                reg_id=b"\0" * 32)),
            (CLIENT_REVEAL, ClientRevealPayload(tkn="A", size=1, price=MKT,
                                                width=1.5, serial=b"\0" * 32,
                                                randomness=b"\0" * 32,
                                                reg_id=b"\0" * 32)),
            (MM_REVEAL, MMRevealPayload(market="junk")),
            (CP, CpPayload(cp=1.5, volume_a=1, imbalance_a=0)),
            (CP, CpPayload(cp=True, volume_a=1, imbalance_a=0)),
        ]
        for phase in (Phase.COMMIT, Phase.REVEAL, Phase.RESOLUTION):
            for kind, payload in bad_payloads:
                w = self.world_in_phase(phase)
                eff = w.proto.handle(etx(Tx(kind=kind, sender="c1", payload=payload),
                                         height=w.height))
                assert eff["applied"] is False, (phase, kind, payload)
