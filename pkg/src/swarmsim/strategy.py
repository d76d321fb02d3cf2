"""Trading and seeding strategies.

Trading: rate-based tit-for-tat (unchoke the fastest recent uploaders) and
the BitTyrant variant (unchoke many peers at individually minimized rates,
with self-identification switching mutual tyrants to block-based TFT).

Seeding: plain round-robin, and the reward lottery that reserves a slice
of a seed's upload for peers that seeded to this identity in the past.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

MIB = 2**20


def half_up(x: float) -> int:
    """round() uses banker's rounding; slot math wants plain half-up."""
    return math.floor(x + 0.5)


# --------------------------------------------------------------------------
# Tit-for-tat trading


def tft_select(rates: dict, slots: int) -> list:
    """Top `slots` interested neighbors by trailing download rate.

    rates maps interested neighbor -> 20 s rolling rate. Rate ties go to
    the lower node id.
    """
    if slots <= 0:
        return []
    ranked = sorted(rates.items(), key=lambda kv: (-kv[1], kv[0]))
    return [peer for peer, _ in ranked[:slots]]


# --------------------------------------------------------------------------
# BitTyrant trading


@dataclass
class TyrantConfig:
    gamma: float = 0.9  # send-rate decay once reciprocation looks stable
    delta: float = 1.2  # send-rate raise while unreciprocated
    streak_rounds: int = 1  # consecutive reciprocated rounds per decay step
    self_identify: bool = True
    rate_floor: float = 1e-6  # bits/s; keeps d/u ratios finite


@dataclass
class TyrantPeerState:
    u_p: float  # offered upload rate, bits/s
    d_p: float  # expected download rate, bits/s
    streak: int = 0
    block_mode: bool = False  # mutual-tyrant block-based TFT


def tyrant_handshake(peer_advertised_tag: str, local_self_identify: bool) -> bool:
    """True when the peer advertises the tyrant client tag and this side
    has self-identification enabled; both sides then run block-based TFT."""
    return peer_advertised_tag == "tyrant" and local_self_identify


def tyrant_update(
    state: TyrantPeerState,
    reciprocated: bool,
    observed_down: float,
    announce_rate: float,
    up_capacity: float,
    cfg: TyrantConfig,
    block_cap: float | None = None,
) -> TyrantPeerState:
    """Per-round rate adaptation for one tracked peer.

    Standard-judged peers: after `streak_rounds` consecutive reciprocated
    rounds the offer decays by gamma (probing for the minimum rate that
    still buys reciprocation); an unreciprocated round raises it by delta,
    capped at upload capacity. Block-mode peers ramp up while blocks keep
    arriving, capped at an equal split across mutual-tyrant edges.
    """
    if state.block_mode:
        cap = up_capacity if block_cap is None else block_cap
        if reciprocated:
            state.u_p = min(state.u_p * cfg.delta, cap)
        else:
            state.u_p = max(state.u_p * cfg.gamma, cfg.rate_floor)
    elif reciprocated:
        state.streak += 1
        if state.streak >= cfg.streak_rounds:
            state.u_p = max(state.u_p * cfg.gamma, cfg.rate_floor)
            state.streak = 0
    else:
        state.streak = 0
        state.u_p = min(state.u_p * cfg.delta, up_capacity)
    if observed_down > 0.0:
        state.d_p = observed_down
    elif announce_rate > 0.0:
        state.d_p = announce_rate
    return state


def tyrant_select(peers: dict, budget: float) -> list:
    """Greedy unchoke set under the upload budget.

    peers maps id -> (d_p, u_p). Peers are ranked by d_p/u_p descending
    (ties to the lower id) and admitted while the running sum of offered
    rates stays within budget. Returns [(peer, u_p cap), ...].
    """
    ranked = sorted(
        peers.items(),
        key=lambda kv: (-(kv[1][0] / max(kv[1][1], 1e-12)), kv[0]),
    )
    out = []
    total = 0.0
    for peer, (_, u_p) in ranked:
        if total + u_p <= budget + 1e-9:
            out.append((peer, u_p))
            total += u_p
    return out


# --------------------------------------------------------------------------
# Seeding


def seed_round_robin(interested: list, pointer, slots: int) -> tuple[list, object]:
    """Next `slots` interested neighbors in cyclic node-id order.

    pointer is the last id served (or None); returns (selected, new pointer).
    Departed neighbors simply drop out of `interested` without stalling
    the rotation.
    """
    peers = sorted(interested)
    if not peers:
        return [], pointer
    if len(peers) <= slots:
        return peers, peers[-1]
    start = 0
    if pointer is not None:
        for i, p in enumerate(peers):
            if p > pointer:
                start = i
                break
        else:
            start = 0
    selected = [peers[(start + i) % len(peers)] for i in range(slots)]
    return selected, selected[-1]


def reward_tickets(ledger) -> dict:
    """Lottery tickets per long-term identity.

    Every identity holds at least one ticket; identities with ledgered
    seeded bytes b get 1 + floor(log2(1 + b / 1 MiB)) tickets, so extra
    tickets grow with the log of bytes received from them while seeding.
    """
    table = {}
    for ident, b in ledger.items():
        if b <= 0:
            table[ident] = 1
        else:
            table[ident] = 1 + int(math.floor(math.log2(1.0 + b / MIB)))
    return table


def lottery_draw(tickets: dict, k: int, rng) -> list:
    """Draw up to k distinct winners with probability proportional to
    ticket counts (without replacement)."""
    pool = sorted(tickets)
    winners = []
    k = min(k, len(pool))
    for _ in range(k):
        total = sum(tickets[p] for p in pool)
        pick = rng.random() * total
        acc = 0.0
        chosen = pool[-1]
        for p in pool:
            acc += tickets[p]
            if pick < acc:
                chosen = p
                break
        winners.append(chosen)
        pool.remove(chosen)
    return winners


@dataclass
class SlotAssignment:
    reserved: list  # lottery winners occupying reserved slots
    open: list  # round-robin picks for the open slots (may repeat a winner)
    pointer: object  # advanced round-robin pointer
    reserved_slots: int
    idle_reserved: int = 0

    def slot_counts(self) -> dict:
        counts: dict = {}
        for p in self.reserved:
            counts[p] = counts.get(p, 0) + 1
        for p in self.open:
            counts[p] = counts.get(p, 0) + 1
        return counts


def reward_slot_assignment(
    ledger: dict,
    interested: list,
    slots: int,
    reservation: float,
    rng,
    pointer=None,
    exclude=frozenset(),
) -> SlotAssignment:
    """Assign S seeding slots: round(reservation * S) reserved, rest open.

    Reserved slots run a ticket lottery over interested neighbors with
    ledgered seeded bytes > 0; reserved slots without eligible demand stay
    empty and their bandwidth idles. Open slots rotate round-robin over
    all interested neighbors. `ledger` maps neighbor -> seeded bytes and
    `exclude` removes peers (self-identified tyrants) from both pools.
    """
    reserved_slots = half_up(reservation * slots)
    pool = [p for p in sorted(interested) if p not in exclude]
    eligible = {p: ledger.get(p, 0) for p in pool if ledger.get(p, 0) > 0}
    tickets = reward_tickets(eligible)
    winners = lottery_draw(tickets, reserved_slots, rng)
    open_slots = slots - reserved_slots
    opened, pointer = seed_round_robin(pool, pointer, open_slots) if open_slots else ([], pointer)
    return SlotAssignment(
        reserved=winners,
        open=opened,
        pointer=pointer,
        reserved_slots=reserved_slots,
        idle_reserved=reserved_slots - len(winners),
    )


def ignore_tyrants_filter(neighbors, tyrant_ids) -> list:
    """Seeding eligibility filter: self-identified tyrants are dropped.

    Applies only while seeding; downloading-phase trading with tyrants is
    unaffected.
    """
    return [n for n in neighbors if n not in tyrant_ids]
