"""Swarm assembly: nodes, connections, choking rounds, and run orchestration.

One Swarm owns one engine instance and is strictly single-threaded; runs
with the same ScenarioConfig (including the RNG seed) produce identical
event sequences and metric outputs. Rounds are aligned to global grids
(choke every 10 s, optimistic and seed rotation every 30 s) so that all
allocation changes at one instant coalesce into a single flow recompute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from . import engine as eng
from . import identity, metrics, protocol, scenario, strategy
from .engine import Engine, FlowManager, InvariantViolation, derive_rng
from .protocol import PieceMap, RateWindow, Tracker, TorrentSpec, select_piece
from .scenario import ScenarioConfig

DOWNLOADING = "downloading"
SEEDING = "seeding"
DEPARTED = "departed"

EARLY_REANNOUNCE_GAP = 60.0  # min seconds between shortage-driven announces


class Request:
    __slots__ = ("piece", "block", "issued", "chunk")

    def __init__(self, piece, block, issued, chunk):
        self.piece = piece
        self.block = block
        self.issued = issued
        self.chunk = chunk


class PeerLink:
    """One node's local view of a neighbor connection."""

    __slots__ = (
        "peer_id",
        "lt_id",
        "tag",
        "is_tyrant_peer",
        "rate_in",
        "sent_bytes",
        "received_bytes",
        "outstanding",
        "interesting",
        "blocks_in_round",
        "connected_at",
        "pieces_at_connect",
        "last_progress",
        "watchdog",
    )

    def __init__(self, peer_id, lt_id, tag, recognized_tyrant, now, pieces_at_connect):
        self.peer_id = peer_id
        self.lt_id = lt_id
        self.tag = tag
        self.is_tyrant_peer = recognized_tyrant
        self.rate_in = RateWindow(20.0, now)
        self.sent_bytes = 0.0
        self.received_bytes = 0.0
        self.outstanding = []
        self.interesting = 0  # pieces the peer has that this node still needs
        self.blocks_in_round = 0
        self.connected_at = now
        self.pieces_at_connect = pieces_at_connect
        self.last_progress = now
        self.watchdog = None


class Node:
    __slots__ = (
        "id",
        "lt_id",
        "role",
        "trading",
        "seeding",
        "client_tag",
        "down_bps",
        "up_bps",
        "piece_map",
        "links",
        "avail",
        "mode",
        "t0",
        "td",
        "seed_until",
        "seed_duration",
        "bytes_up",
        "bytes_down",
        "duplicate_bytes",
        "seeded_given",
        "unchoked",
        "optimistic",
        "rr_pointer",
        "endgame",
        "ledger",
        "rewarding",
        "tyrant_peers",
        "rng_piece",
        "rng_opt",
        "rng_lottery",
        "last_announce",
        "reannounce_ev",
        "expiry_ev",
    )

    def __init__(self, node_id, role, trading, seeding, down_bps, up_bps, spec, seed, complete=False):
        self.id = node_id
        self.lt_id = node_id
        self.role = role
        self.trading = trading
        self.seeding = seeding
        self.client_tag = "standard"
        self.down_bps = down_bps
        self.up_bps = up_bps
        self.piece_map = PieceMap(spec, complete=complete)
        self.links: dict[int, PeerLink] = {}
        self.avail = [0] * spec.num_pieces
        self.mode = SEEDING if complete else DOWNLOADING
        self.t0 = 0.0
        self.td = None
        self.seed_until = None
        self.seed_duration = 0.0
        self.bytes_up = 0.0
        self.bytes_down = 0.0
        self.duplicate_bytes = 0.0
        self.seeded_given = 0.0
        self.unchoked: set[int] = set()
        self.optimistic = None
        self.rr_pointer = None
        self.endgame = False
        self.ledger = identity.SeedingLedger()
        self.rewarding = False
        self.tyrant_peers: dict[int, strategy.TyrantPeerState] = {}
        self.rng_piece = derive_rng(seed, "node", node_id, "piece")
        self.rng_opt = derive_rng(seed, "node", node_id, "optimistic")
        self.rng_lottery = derive_rng(seed, "node", node_id, "lottery")
        self.last_announce = -math.inf
        self.reannounce_ev = None
        self.expiry_ev = None


@dataclass
class RunResult:
    config: ScenarioConfig
    records: list
    sim_end: float
    wall_time: float
    events: dict
    messages: dict
    recomputes: int
    bytes_up_total: float
    bytes_down_total: float

    @property
    def n_bits(self) -> int:
        return self.config.file_bytes * 8

    def summary(self, role: str) -> metrics.PopulationSummary:
        return metrics.population_summary(self.records, role, self.n_bits)

    def median_efficiency(self, role: str):
        return self.summary(role).median_efficiency


class Swarm:
    """A single deterministic simulation run."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.spec = TorrentSpec(cfg.file_bytes, cfg.piece_bytes, cfg.block_bytes)
        self.engine = Engine()
        self.flow = FlowManager(self.engine, on_credit=self._on_credit)
        self.tracker = Tracker(derive_rng(cfg.seed, "tracker"), cfg.tracker_request)
        self.tyrant_cfg = strategy.TyrantConfig(
            gamma=cfg.tyrant_gamma,
            delta=cfg.tyrant_delta,
            streak_rounds=cfg.tyrant_streak_rounds,
            self_identify=cfg.tyrant_self_identify,
        )
        self.nodes: dict[int, Node] = {}
        self.population_ids: list[int] = []
        self.seed_ids: list[int] = []
        self.messages = {
            k: 0 for k in ("bitfield", "have", "request", "block", "cancel", "choke", "unchoke")
        }
        self.up_total = 0.0
        self.down_total = 0.0
        self.live_population = 0
        self.joins_remaining = 0
        self._choke_ev = None
        self._opt_ev = None
        self._seed_ev = None
        self._build()

    # ------------------------------------------------------------------
    # Construction

    def _build(self):
        cfg = self.cfg
        for sid in range(cfg.initial_seeds):
            node = Node(sid, "seed", "standard-tft", "round-robin",
                        cfg.initial_seed_up_bps * 2.0, cfg.initial_seed_up_bps,
                        self.spec, cfg.seed, complete=True)
            self.nodes[node.id] = node
            self.seed_ids.append(node.id)
        plans = scenario.build_plan(cfg)
        altruists = [p.node_id for p in plans if p.role == "altruistic"]
        if cfg.use_synthetic_history and altruists:
            ledgers, assignment = identity.synth_history(
                altruists, cfg.overlap, derive_rng(cfg.seed, "scenario", "history")
            )
        else:
            ledgers, assignment = {}, identity.OverlapAssignment((), cfg.overlap)
        for plan in plans:
            node = Node(plan.node_id, plan.role, plan.trading, plan.seeding,
                        plan.down_bps, plan.up_bps, self.spec, cfg.seed)
            node.seed_duration = plan.seed_duration
            node.t0 = plan.join_time
            if node.trading == "tyrant" and cfg.tyrant_self_identify:
                node.client_tag = "tyrant"
            if plan.node_id in ledgers:
                node.ledger = ledgers[plan.node_id]
            node.rewarding = assignment.is_rewarding(plan.node_id)
            self.nodes[node.id] = node
            self.population_ids.append(node.id)
        self.joins_remaining = len(self.population_ids)
        for sid in self.seed_ids:
            self.engine.schedule_at(0.0, eng.NODE_JOIN, lambda n=sid: self._on_join(n))
        for plan in plans:
            self.engine.schedule_at(
                plan.join_time, eng.NODE_JOIN, lambda n=plan.node_id: self._on_join(n)
            )

    # ------------------------------------------------------------------
    # Lifecycle

    def _on_join(self, node_id):
        node = self.nodes[node_id]
        now = self.engine.now
        node.t0 = now
        self.flow.add_node(node.id, node.up_bps, node.down_bps)
        peers = self.tracker.announce(node.id, "join")
        node.last_announce = now
        for pid in peers:
            self._connect(node, self.nodes[pid])
        nxt = now + self.cfg.reannounce_interval
        if nxt <= self.cfg.horizon:
            node.reannounce_ev = self.engine.schedule_at(
                nxt, eng.TRACKER_REANNOUNCE, lambda n=node_id: self._on_reannounce(n)
            )
        if node.role != "seed":
            self.live_population += 1
            self.joins_remaining -= 1
        self._ensure_grids()

    def _on_reannounce(self, node_id):
        node = self.nodes[node_id]
        node.reannounce_ev = None
        if node.mode == DEPARTED:
            return
        now = self.engine.now
        peers = self.tracker.announce(node.id, "periodic")
        node.last_announce = now
        for pid in peers:
            if pid not in node.links:
                self._connect(node, self.nodes[pid])
        nxt = now + self.cfg.reannounce_interval
        if nxt <= self.cfg.horizon:
            node.reannounce_ev = self.engine.schedule_at(
                nxt, eng.TRACKER_REANNOUNCE, lambda n=node_id: self._on_reannounce(n)
            )

    def _maybe_early_reannounce(self, node):
        if node.mode == DEPARTED:
            return
        if len(node.links) >= self.cfg.min_neighbors:
            return
        now = self.engine.now
        if now - node.last_announce < EARLY_REANNOUNCE_GAP:
            return
        if node.id not in self.tracker.active:
            return
        peers = self.tracker.announce(node.id, "periodic")
        node.last_announce = now
        for pid in peers:
            if pid not in node.links:
                self._connect(node, self.nodes[pid])

    def _connect(self, a: Node, b: Node):
        if a.id == b.id or b.id in a.links or a.mode == DEPARTED or b.mode == DEPARTED:
            return
        now = self.engine.now
        self.messages["bitfield"] += 2
        a.links[b.id] = PeerLink(
            b.id, b.lt_id, b.client_tag,
            strategy.tyrant_handshake(b.client_tag, self.cfg.tyrant_self_identify),
            now, len(b.piece_map.have),
        )
        b.links[a.id] = PeerLink(
            a.id, a.lt_id, a.client_tag,
            strategy.tyrant_handshake(a.client_tag, self.cfg.tyrant_self_identify),
            now, len(a.piece_map.have),
        )
        a_have = a.piece_map.have
        b_have = b.piece_map.have
        for p in b_have:
            a.avail[p] += 1
            if p not in a_have:
                a.links[b.id].interesting += 1
        for p in a_have:
            b.avail[p] += 1
            if p not in b_have:
                b.links[a.id].interesting += 1

    def _disconnect(self, a: Node, b: Node):
        self.flow.close_edge(a.id, b.id)
        self.flow.close_edge(b.id, a.id)
        a.unchoked.discard(b.id)
        b.unchoked.discard(a.id)
        if a.optimistic == b.id:
            a.optimistic = None
        if b.optimistic == a.id:
            b.optimistic = None
        for p in b.piece_map.have:
            a.avail[p] -= 1
        for p in a.piece_map.have:
            b.avail[p] -= 1
        link_ab = a.links.pop(b.id, None)
        link_ba = b.links.pop(a.id, None)
        for link in (link_ab, link_ba):
            if link is not None and link.watchdog is not None:
                self.engine.cancel(link.watchdog)
                link.watchdog = None
        a.tyrant_peers.pop(b.id, None)
        b.tyrant_peers.pop(a.id, None)
        self._maybe_early_reannounce(a)
        self._maybe_early_reannounce(b)

    def _depart(self, node: Node):
        node.mode = DEPARTED
        self.tracker.announce(node.id, "depart")
        for pid in list(node.links):
            self._disconnect(node, self.nodes[pid])
        if node.reannounce_ev is not None:
            self.engine.cancel(node.reannounce_ev)
            node.reannounce_ev = None
        if node.expiry_ev is not None:
            self.engine.cancel(node.expiry_ev)
            node.expiry_ev = None
        self.flow.remove_node(node.id)
        if node.role != "seed":
            self.live_population -= 1

    # ------------------------------------------------------------------
    # Grids

    def _grid_needed(self) -> bool:
        return self.live_population > 0 or self.joins_remaining > 0

    def _next_multiple(self, step: float) -> float:
        now = self.engine.now
        k = math.ceil(now / step - 1e-9)
        return max(k * step, now)

    def _ensure_grids(self):
        if self._opt_ev is None:
            self._opt_ev = self.engine.schedule_at(
                self._next_multiple(self.cfg.optimistic_interval),
                eng.OPTIMISTIC_ROUND, self._optimistic_tick,
            )
        if self._seed_ev is None:
            self._seed_ev = self.engine.schedule_at(
                self._next_multiple(self.cfg.seed_rotation),
                eng.CHOKE_ROUND, self._seed_tick,
            )
        if self._choke_ev is None:
            self._choke_ev = self.engine.schedule_at(
                self._next_multiple(self.cfg.choke_interval),
                eng.CHOKE_ROUND, self._choke_tick,
            )

    def _choke_tick(self):
        self._choke_ev = None
        self.flow.credit_now()  # decisions read rates current to this instant
        for nid in self.population_ids:
            node = self.nodes[nid]
            if node.mode != DOWNLOADING:
                continue
            if node.trading == "tyrant":
                self._tyrant_round(node)
            else:
                self._standard_choke_round(node)
        nxt = self.engine.now + self.cfg.choke_interval
        if self._grid_needed() and nxt <= self.cfg.horizon:
            self._choke_ev = self.engine.schedule_at(nxt, eng.CHOKE_ROUND, self._choke_tick)

    def _optimistic_tick(self):
        self._opt_ev = None
        for nid in self.population_ids:
            node = self.nodes[nid]
            if node.mode != DOWNLOADING or node.trading == "tyrant":
                continue
            candidates = sorted(
                pid for pid in node.links
                if pid not in node.unchoked and self._peer_interested_in(node, pid)
            )
            node.optimistic = (
                candidates[node.rng_opt.randrange(len(candidates))] if candidates else None
            )
        nxt = self.engine.now + self.cfg.optimistic_interval
        if self._grid_needed() and nxt <= self.cfg.horizon:
            self._opt_ev = self.engine.schedule_at(nxt, eng.OPTIMISTIC_ROUND, self._optimistic_tick)

    def _seed_tick(self):
        self._seed_ev = None
        for nid in self.seed_ids + self.population_ids:
            node = self.nodes[nid]
            if node.mode == SEEDING:
                self._seed_rotation(node)
        nxt = self.engine.now + self.cfg.seed_rotation
        if self._grid_needed() and nxt <= self.cfg.horizon:
            self._seed_ev = self.engine.schedule_at(nxt, eng.CHOKE_ROUND, self._seed_tick)

    # ------------------------------------------------------------------
    # Choking

    def _peer_interested_in(self, node: Node, pid: int) -> bool:
        peer = self.nodes[pid]
        back = peer.links.get(node.id)
        return back is not None and back.interesting > 0 and peer.mode == DOWNLOADING

    def _interested_neighbors(self, node: Node) -> list:
        return [pid for pid in node.links if self._peer_interested_in(node, pid)]

    def _standard_choke_round(self, node: Node):
        now = self.engine.now
        interested = self._interested_neighbors(node)
        opt = node.optimistic
        if opt is not None and opt not in interested:
            opt = None
        regular_slots = self.cfg.active_set - self.cfg.optimistic_slots
        rates = {
            pid: node.links[pid].rate_in.rate(now) for pid in interested if pid != opt
        }
        targets = set(strategy.tft_select(rates, regular_slots))
        if opt is not None:
            targets.add(opt)
        self._apply_unchokes(node, targets, None)

    def _tyrant_round(self, node: Node):
        now = self.engine.now
        cfg = self.cfg
        interested = sorted(self._interested_neighbors(node))
        piece_bits = self.spec.piece_bytes * 8
        states = node.tyrant_peers
        block_peers = [
            pid for pid in interested if node.links[pid].is_tyrant_peer
        ]
        block_cap = node.up_bps / max(len(block_peers), 1)
        candidates = {}
        for pid in interested:
            link = node.links[pid]
            st = states.get(pid)
            if st is None:
                st = strategy.TyrantPeerState(
                    u_p=node.up_bps / cfg.active_set,
                    d_p=node.down_bps / cfg.active_set,
                    block_mode=link.is_tyrant_peer,
                )
                states[pid] = st
            peer = self.nodes[pid]
            if st.block_mode:
                reciprocated = link.blocks_in_round > 0
            else:
                reciprocated = node.id in peer.unchoked
            gained = len(peer.piece_map.have) - link.pieces_at_connect
            age = max(now - link.connected_at, cfg.choke_interval)
            announce_rate = gained * piece_bits / age
            strategy.tyrant_update(
                st, reciprocated, link.rate_in.rate(now), announce_rate,
                node.up_bps, self.tyrant_cfg, block_cap=block_cap,
            )
            link.blocks_in_round = 0
            candidates[pid] = (st.d_p, st.u_p)
        admitted = strategy.tyrant_select(candidates, node.up_bps)
        caps = dict(admitted)
        self._apply_unchokes(node, set(caps), caps)

    def _seed_rotation(self, node: Node):
        cfg = self.cfg
        interested = self._interested_neighbors(node)
        if node.seeding == "reward-lottery":
            if cfg.ignore_tyrants:
                exclude = frozenset(
                    pid for pid in interested if node.links[pid].is_tyrant_peer
                )
            else:
                exclude = frozenset()
            ledger_by_pid = {
                pid: node.ledger.seeded_bytes(node.links[pid].lt_id) for pid in interested
            }
            assignment = strategy.reward_slot_assignment(
                ledger_by_pid, interested, cfg.seed_slots, cfg.reservation,
                node.rng_lottery, node.rr_pointer, exclude,
            )
            node.rr_pointer = assignment.pointer
            slot_bw = node.up_bps / cfg.seed_slots
            counts = assignment.slot_counts()
            caps = {pid: slot_bw * c for pid, c in counts.items()}
            self._apply_unchokes(node, set(counts), caps)
        else:
            selected, node.rr_pointer = strategy.seed_round_robin(
                interested, node.rr_pointer, cfg.seed_slots
            )
            self._apply_unchokes(node, set(selected), None)

    def _apply_unchokes(self, node: Node, targets: set, caps):
        old = node.unchoked
        for pid in sorted(old - targets):
            old.discard(pid)
            self.messages["choke"] += 1
            self.flow.close_edge(node.id, pid)
        for pid in sorted(targets):
            cap = caps.get(pid) if caps else None
            if pid in old:
                self.flow.set_cap(node.id, pid, cap)
                continue
            old.add(pid)
            self.messages["unchoke"] += 1
            self.flow.set_cap(node.id, pid, cap)
            self._refill(self.nodes[pid], node)

    # ------------------------------------------------------------------
    # Requests and transfers

    def _refill(self, d: Node, u: Node):
        """Keep d's request pipeline to u full while u unchokes d."""
        if d.mode != DOWNLOADING or d.id not in u.unchoked:
            return
        link = d.links.get(u.id)
        if link is None:
            return
        pm = d.piece_map
        if d.endgame:
            self._endgame_requests(d, u, link)
            return
        uh = u.piece_map.have
        while len(link.outstanding) < self.cfg.pipeline_depth:
            nxt = None
            for p in pm.blocks:  # bias toward completing in-progress pieces
                if p in uh:
                    b = pm.next_unrequested_block(p)
                    if b is not None:
                        nxt = (p, b)
                        break
            if nxt is None:
                candidates = sorted(
                    p for p in uh if p not in pm.have and p not in pm.blocks
                )
                piece = select_piece(len(pm.have), candidates, d.avail, d.rng_piece)
                if piece is None:
                    break
                nxt = (piece, 0)
            self._request(d, u, *nxt)
        if pm.unrequested_blocks == 0 and not pm.is_complete and not d.endgame:
            self._enter_endgame(d)

    def _enter_endgame(self, d: Node):
        """Every needed block is in flight: issue redundant requests to all
        unchoking holders; the first receipt cancels the duplicates."""
        d.endgame = True
        for pid in sorted(d.links):
            u = self.nodes[pid]
            if d.id in u.unchoked:
                link = d.links[pid]
                self._endgame_requests(d, u, link)

    def _endgame_requests(self, d: Node, u: Node, link: PeerLink):
        pm = d.piece_map
        uh = u.piece_map.have
        for piece, block in pm.missing_blocks():
            if piece not in uh:
                continue
            holders = pm.requested_from.get((piece, block), ())
            if u.id in holders:
                continue
            self._request(d, u, piece, block)

    def _request(self, d: Node, u: Node, piece: int, block: int):
        now = self.engine.now
        link = d.links[u.id]
        d.piece_map.mark_requested(piece, block, u.id)
        self.messages["request"] += 1
        chunk = self.flow.enqueue(
            u.id, d.id, self.spec.block_size(piece, block) * 8,  # flow layer is bits
            (u.id, d.id, piece, block), self._block_done, self._block_abort,
        )
        link.outstanding.append(Request(piece, block, now, chunk))
        if link.watchdog is None:
            link.watchdog = self.engine.schedule_at(
                now + self.cfg.request_timeout, eng.REQUEST_TIMEOUT,
                lambda dd=d.id, uu=u.id: self._timeout_check(dd, uu),
            )

    def _timeout_check(self, d_id, u_id):
        d = self.nodes[d_id]
        link = d.links.get(u_id)
        if link is None:
            return
        link.watchdog = None
        if not link.outstanding:
            return
        now = self.engine.now
        timeout = self.cfg.request_timeout
        # A request is stale once it has been outstanding for the timeout
        # AND the link has delivered nothing for that long (snub rule);
        # a slow-but-serving peer keeps its pipeline.
        if now - link.last_progress >= timeout - 1e-9:
            stale = [r for r in link.outstanding if now - r.issued >= timeout - 1e-9]
        else:
            stale = []
        for req in stale:
            self.flow.cancel_chunk(u_id, d_id, req.chunk)
        if link.outstanding:
            oldest = min(r.issued for r in link.outstanding)
            nxt = max(oldest, link.last_progress) + timeout
            link.watchdog = self.engine.schedule_at(
                max(nxt, now), eng.REQUEST_TIMEOUT,
                lambda dd=d_id, uu=u_id: self._timeout_check(dd, uu),
            )
        if stale and d.mode == DOWNLOADING:
            for pid in sorted(d.links):
                peer = self.nodes[pid]
                if d.id in peer.unchoked:
                    self._refill(d, peer)

    def _on_credit(self, u_id, d_id, nbits):
        self.up_total += nbits
        self.down_total += nbits
        nbytes = nbits / 8.0
        u = self.nodes[u_id]
        d = self.nodes[d_id]
        u.bytes_up += nbytes
        d.bytes_down += nbytes
        if u.mode == SEEDING:
            u.seeded_given += nbytes
        now = self.engine.now
        dlink = d.links[u_id]
        dlink.rate_in.add(now, nbits)  # estimator reads in bits/s
        dlink.received_bytes += nbytes
        dlink.last_progress = now
        u.links[d_id].sent_bytes += nbytes
        if self.cfg.observe_in_run and dlink.sent_bytes == 0 and dlink.lt_id is not None:
            d.ledger.credit(dlink.lt_id, nbytes)

    def _block_done(self, tag):
        u_id, d_id, piece, block = tag
        d = self.nodes[d_id]
        u = self.nodes[u_id]
        self.messages["block"] += 1
        link = d.links[u_id]
        for i, req in enumerate(link.outstanding):
            if req.piece == piece and req.block == block:
                del link.outstanding[i]
                break
        link.blocks_in_round += 1
        pm = d.piece_map
        holders = list(pm.requested_from.get((piece, block), ()))
        newly, piece_done = pm.mark_received(piece, block)
        if not newly:
            d.duplicate_bytes += self.spec.block_size(piece, block)
        elif d.endgame:
            for h in holders:
                if h == u_id:
                    continue
                hlink = d.links.get(h)
                if hlink is None:
                    continue
                for req in hlink.outstanding:
                    if req.piece == piece and req.block == block:
                        self.messages["cancel"] += 1
                        self.flow.cancel_chunk(h, d_id, req.chunk)
                        break
        if piece_done:
            self._piece_complete(d, piece)
        if pm.is_complete and d.mode == DOWNLOADING:
            self._node_complete(d)
        else:
            self._refill(d, u)

    def _block_abort(self, tag, done_bits):
        u_id, d_id, piece, block = tag
        d = self.nodes[d_id]
        d.duplicate_bytes += done_bits / 8.0
        d.piece_map.mark_unrequested(piece, block, u_id)
        link = d.links.get(u_id)
        if link is not None:
            for i, req in enumerate(link.outstanding):
                if req.piece == piece and req.block == block:
                    del link.outstanding[i]
                    break

    def _piece_complete(self, d: Node, piece: int):
        for pid, link in d.links.items():
            peer = self.nodes[pid]
            self.messages["have"] += 1
            peer.avail[piece] += 1
            if piece not in peer.piece_map.have:
                peer.links[d.id].interesting += 1
            if piece in peer.piece_map.have:
                link.interesting -= 1
        # peers we unchoke may now have something new to request
        for pid in sorted(d.unchoked):
            peer = self.nodes[pid]
            if peer.mode == DOWNLOADING:
                self._refill(peer, d)

    def _node_complete(self, d: Node):
        now = self.engine.now
        d.td = now
        d.endgame = False
        expected = float(self.cfg.file_bytes - d.piece_map.granted_bytes)
        got = d.bytes_down - d.duplicate_bytes
        if abs(got - expected) > 1.0:
            raise InvariantViolation(
                f"node {d.id} completed with {got} non-duplicate bytes, expected {expected}"
            )
        for pid in sorted(d.links):
            link = d.links[pid]
            for req in list(link.outstanding):
                self.flow.cancel_chunk(pid, d.id, req.chunk)
        if d.role == "leech" or d.seed_duration <= 0.0:
            self._depart(d)
            return
        d.mode = SEEDING
        d.seed_until = now + d.seed_duration
        if d.seed_until <= self.cfg.horizon:
            d.expiry_ev = self.engine.schedule_at(
                d.seed_until, eng.SEED_EXPIRY, lambda n=d.id: self._on_seed_expiry(n)
            )
        self._seed_rotation(d)  # apply the seeding strategy immediately

    def _on_seed_expiry(self, node_id):
        node = self.nodes[node_id]
        node.expiry_ev = None
        if node.mode != DEPARTED:
            self._depart(node)

    # ------------------------------------------------------------------
    # Run

    def run(self) -> RunResult:
        start = time.perf_counter()
        self.engine.run_until(self.cfg.horizon)
        wall = time.perf_counter() - start
        if self.up_total != self.down_total:
            raise InvariantViolation(
                f"byte conservation broken: up={self.up_total} down={self.down_total}"
            )
        records = []
        for nid in self.seed_ids + self.population_ids:
            node = self.nodes[nid]
            records.append(
                metrics.NodeRecord(
                    node_id=node.id,
                    role=node.role,
                    down_bps=node.down_bps,
                    t0=node.t0,
                    td=node.td,
                    bytes_up=node.bytes_up,
                    bytes_down=node.bytes_down,
                    duplicate_bytes=node.duplicate_bytes,
                    seeded_bytes_given=node.seeded_given,
                    seed_duration=node.seed_duration,
                )
            )
        messages = dict(self.messages)
        messages["announce"] = self.tracker.announces
        return RunResult(
            config=self.cfg,
            records=records,
            sim_end=self.engine.now,
            wall_time=wall,
            events=dict(self.engine.dispatched_by_kind),
            messages=messages,
            recomputes=self.flow.recomputes,
            bytes_up_total=self.up_total,
            bytes_down_total=self.down_total,
        )


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Build and run one simulation; pure function of the config."""
    return Swarm(cfg).run()


def tyrant_pair_fixture(
    self_identify: bool,
    rounds: int = 30,
    file_bytes: int = 32 * 2**20,
    down_bps: float = 2e6,
) -> list:
    """Isolated two-tyrant fixture.

    Each node starts holding half the pieces and must trade for the other
    half; there is no seed. Returns per-round samples of the mutual edge
    rates as (round, rate_a_to_b, rate_b_to_a) in bits/s. Without
    self-identification both sides read the standing unchoke as stable
    reciprocation and keep lowering their offers; with it they switch to
    block-based TFT and ramp toward capacity.
    """
    cfg = ScenarioConfig(
        node_count=2,
        file_bytes=file_bytes,
        seed=7,
        horizon=rounds * 10.0 + 120.0,
        time_compression=1.0,
        initial_seeds=0,
        trace_kind="simultaneous",
        bandwidth_classes=(down_bps,),
        upload_ratio=0.5,
        tyrant_self_identify=self_identify,
    )
    cfg.altruistic.fraction = 0.0
    cfg.standard.fraction = 0.0
    cfg.leech.fraction = 1.0
    cfg.leech.trading = "tyrant"
    swarm = Swarm(cfg)
    a, b = swarm.population_ids
    for p in range(swarm.spec.num_pieces):
        target = swarm.nodes[a] if p % 2 == 0 else swarm.nodes[b]
        target.piece_map.grant(p)
    samples = []
    for rnd in range(rounds + 1):
        swarm.engine.run_until(rnd * cfg.choke_interval + 1e-3)
        edge_ab = swarm.flow.edges.get((a, b))
        edge_ba = swarm.flow.edges.get((b, a))
        rate_ab = edge_ab.rate if edge_ab is not None and edge_ab.queue else 0.0
        rate_ba = edge_ba.rate if edge_ba is not None and edge_ba.queue else 0.0
        samples.append((rnd, rate_ab, rate_ba))
    return samples
