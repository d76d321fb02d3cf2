"""Deterministic discrete-event core with a flow-level bandwidth model.

Simulated time is real-valued seconds quantized to one microsecond, so
equal-time comparisons are exact. Events that fire at the same instant
dispatch in scheduling order, which makes a whole run a pure function of
its inputs.

Bandwidth is modeled at the flow level: every active transfer edge gets a
rate from a max-min fair (progressive filling) allocation over per-node
upload/download capacities and optional per-edge caps. The FlowManager
turns those rates into byte progress and completion events, crediting
partial bytes exactly whenever the allocation changes.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass

import numpy as np

TIME_QUANTUM = 1e-6

# Event kinds.
NODE_JOIN = "node-join"
NODE_DEPART = "node-depart"
CHOKE_ROUND = "choke-round"
OPTIMISTIC_ROUND = "optimistic-round"
TRANSFER_PROGRESS = "transfer-progress"
TRACKER_REANNOUNCE = "tracker-reannounce"
SEED_EXPIRY = "seed-expiry"
FLOW_RECOMPUTE = "flow-recompute"
REQUEST_TIMEOUT = "request-timeout"


class InvariantViolation(Exception):
    """A runtime consistency check failed (conservation, capacity, ...)."""


def quantize(t: float) -> float:
    """Snap a time to the 1 microsecond simulation quantum."""
    return round(t * 1e6) / 1e6


def derive_rng(root_seed: int, *key) -> random.Random:
    """Independent RNG stream keyed by (root seed, *key).

    Streams are derived by hashing, so adding a node or subsystem never
    perturbs the draws of any other stream.
    """
    material = repr((root_seed,) + tuple(key)).encode()
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class Event:
    """A scheduled callback. The object itself is the cancellation handle."""

    __slots__ = ("fire_at", "seq", "kind", "action", "cancelled")

    def __init__(self, fire_at: float, kind: str, action):
        self.fire_at = quantize(fire_at)
        self.seq = -1
        self.kind = kind
        self.action = action
        self.cancelled = False

    def __repr__(self):
        return f"Event({self.kind}@{self.fire_at}, seq={self.seq})"


class Engine:
    """Event queue with a monotone clock and (fire_at, sequence) ordering."""

    def __init__(self):
        self.now = 0.0
        self._heap = []
        self._next_seq = 0
        self.dispatched = 0
        self.dispatched_by_kind: dict[str, int] = {}

    def schedule(self, event: Event) -> Event:
        """Enqueue an event; returns the handle used for cancellation."""
        if event.fire_at < self.now:
            raise ValueError(
                f"cannot schedule {event.kind} at {event.fire_at} before clock {self.now}"
            )
        event.seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def schedule_at(self, fire_at: float, kind: str, action) -> Event:
        return self.schedule(Event(fire_at, kind, action))

    def cancel(self, event: Event) -> None:
        """Cancelled events are skipped at dispatch (lazy deletion)."""
        event.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run_until(self, t_end: float) -> int:
        """Dispatch every event with fire_at <= t_end; returns the count.

        The clock ends at the last dispatched event time (at most t_end);
        with an empty queue it does not advance.
        """
        t_end = quantize(t_end)
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} is before clock {self.now}")
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(heap)
            if event.cancelled:
                continue
            self.now = fire_at
            self.dispatched += 1
            kind = event.kind
            self.dispatched_by_kind[kind] = self.dispatched_by_kind.get(kind, 0) + 1
            event.action()
            count += 1
        return count


@dataclass
class FlowAllocation:
    """Max-min fair rates per edge plus leftover per-node capacity."""

    rates: dict
    residual_up: dict
    residual_down: dict


def allocate_flows(edges, up_caps, down_caps) -> FlowAllocation:
    """Progressive-filling max-min fair allocation.

    edges: iterable of (uploader, downloader, cap_bits_per_s | None).
    up_caps / down_caps: node -> capacity in bits/s. All referenced nodes
    must be present. Raises every unfrozen edge uniformly and freezes
    edges as their cap, uploader, or downloader constraint binds.
    """
    edges = list(edges)
    if not edges:
        return FlowAllocation({}, dict(up_caps), dict(down_caps))

    ups = sorted({u for u, _, _ in edges})
    downs = sorted({d for _, d, _ in edges})
    u_index = {n: i for i, n in enumerate(ups)}
    d_index = {n: i for i, n in enumerate(downs)}

    n_edges = len(edges)
    u_idx = np.fromiter((u_index[u] for u, _, _ in edges), dtype=np.intp, count=n_edges)
    d_idx = np.fromiter((d_index[d] for _, d, _ in edges), dtype=np.intp, count=n_edges)
    cap = np.fromiter(
        (math.inf if c is None else float(c) for _, _, c in edges),
        dtype=np.float64,
        count=n_edges,
    )
    res_up = np.fromiter((float(up_caps[n]) for n in ups), dtype=np.float64)
    res_down = np.fromiter((float(down_caps[n]) for n in downs), dtype=np.float64)

    scale = max(res_up.max(initial=0.0), res_down.max(initial=0.0), 1.0)
    tol = 1e-9 * scale

    rate = np.zeros(n_edges)
    active = cap > tol  # zero-cap edges are frozen at rate 0 immediately

    while active.any():
        au = u_idx[active]
        ad = d_idx[active]
        deg_u = np.bincount(au, minlength=len(ups))
        deg_d = np.bincount(ad, minlength=len(downs))
        head_u = res_up / np.maximum(deg_u, 1)
        head_d = res_down / np.maximum(deg_d, 1)
        room = np.minimum(head_u[au], head_d[ad])
        room = np.minimum(room, (cap - rate)[active])
        delta = float(room.min())
        if delta > 0.0:
            rate[active] += delta
            res_up -= delta * deg_u
            res_down -= delta * deg_d

        sat_u = res_up <= tol
        sat_d = res_down <= tol
        frozen = active & (sat_u[u_idx] | sat_d[d_idx] | (cap - rate <= tol))
        if not frozen.any():
            # Numerical stall: freeze the tightest edges to guarantee progress.
            idx = np.flatnonzero(active)
            frozen_local = room <= room.min() + tol
            frozen = np.zeros(n_edges, dtype=bool)
            frozen[idx[frozen_local]] = True
        active &= ~frozen

    np.maximum(res_up, 0.0, out=res_up)
    np.maximum(res_down, 0.0, out=res_down)

    rates = {(u, d): float(rate[i]) for i, (u, d, _) in enumerate(edges)}
    residual_up = dict(up_caps)
    residual_down = dict(down_caps)
    for n, i in u_index.items():
        residual_up[n] = float(res_up[i])
    for n, i in d_index.items():
        residual_down[n] = float(res_down[i])
    return FlowAllocation(rates, residual_up, residual_down)


class Chunk:
    """One queued transfer unit (a block) on an edge."""

    __slots__ = ("nbytes", "left", "tag", "on_done", "on_abort")

    def __init__(self, nbytes, tag, on_done, on_abort):
        self.nbytes = float(nbytes)
        self.left = float(nbytes)
        self.tag = tag
        self.on_done = on_done
        self.on_abort = on_abort

    @property
    def done_bytes(self) -> float:
        return self.nbytes - self.left


class FlowEdge:
    __slots__ = ("uploader", "downloader", "cap", "rate", "queue", "last_credit", "head_event")

    def __init__(self, uploader, downloader, cap, now):
        self.uploader = uploader
        self.downloader = downloader
        self.cap = cap
        self.rate = 0.0
        self.queue = []
        self.last_credit = now
        self.head_event = None


class FlowManager:
    """Tracks transfer edges and re-amortizes progress when rates change.

    All allocation-affecting changes at one instant coalesce into a single
    flow-recompute event that runs after the same-time events dispatch.
    Bytes transferred under the old allocation are credited exactly before
    new rates apply, so byte conservation holds across recomputes.
    """

    def __init__(self, engine: Engine, on_credit=None):
        self.engine = engine
        self.on_credit = on_credit  # fn(uploader, downloader, nbytes)
        self.up_caps: dict = {}
        self.down_caps: dict = {}
        self.edges: dict = {}  # (u, d) -> FlowEdge
        self._recompute_event = None
        self.recomputes = 0

    # -- node and edge bookkeeping -------------------------------------

    def add_node(self, node, up_bps: float, down_bps: float) -> None:
        self.up_caps[node] = float(up_bps)
        self.down_caps[node] = float(down_bps)

    def remove_node(self, node) -> None:
        for key in [k for k in self.edges if k[0] == node or k[1] == node]:
            self.close_edge(*key)
        self.up_caps.pop(node, None)
        self.down_caps.pop(node, None)

    def set_cap(self, u, d, cap) -> None:
        edge = self.edges.get((u, d))
        if edge is None:
            self.edges[(u, d)] = FlowEdge(u, d, cap, self.engine.now)
            return
        if edge.cap != cap:
            edge.cap = cap
            if edge.queue:
                self.mark_dirty()

    def close_edge(self, u, d) -> None:
        edge = self.edges.pop((u, d), None)
        if edge is None:
            return
        self._credit(edge)
        if edge.head_event is not None:
            self.engine.cancel(edge.head_event)
            edge.head_event = None
        had_work = bool(edge.queue)
        queue, edge.queue = edge.queue, []
        for chunk in queue:
            chunk.on_abort(chunk.tag, chunk.done_bytes)
        if had_work:
            self.mark_dirty()

    def enqueue(self, u, d, nbytes, tag, on_done, on_abort) -> Chunk:
        edge = self.edges.get((u, d))
        if edge is None:
            edge = FlowEdge(u, d, None, self.engine.now)
            self.edges[(u, d)] = edge
        chunk = Chunk(nbytes, tag, on_done, on_abort)
        was_idle = not edge.queue
        edge.queue.append(chunk)
        if was_idle:
            edge.last_credit = self.engine.now
            self.mark_dirty()  # edge starts competing for bandwidth
        return chunk

    def cancel_chunk(self, u, d, chunk: Chunk) -> None:
        edge = self.edges.get((u, d))
        if edge is None or chunk not in edge.queue:
            return
        self._credit(edge)
        was_head = edge.queue[0] is chunk
        edge.queue.remove(chunk)
        chunk.on_abort(chunk.tag, chunk.done_bytes)
        if was_head and edge.head_event is not None:
            self.engine.cancel(edge.head_event)
            edge.head_event = None
        if not edge.queue:
            self.mark_dirty()
        elif was_head:
            self._schedule_head(edge)

    # -- crediting and recomputation -----------------------------------

    def mark_dirty(self) -> None:
        """Schedule one coalesced recompute at the current instant."""
        if self._recompute_event is None:
            self._recompute_event = self.engine.schedule_at(
                self.engine.now, FLOW_RECOMPUTE, self._recompute
            )

    def credit_now(self) -> None:
        """Checkpoint byte progress on every busy edge at the current time."""
        now = self.engine.now
        for edge in self.edges.values():
            if edge.queue:
                self._credit(edge, now)

    def _credit(self, edge: FlowEdge, now=None) -> None:
        if now is None:
            now = self.engine.now
        dt = now - edge.last_credit
        edge.last_credit = now
        if dt <= 0.0 or edge.rate <= 0.0 or not edge.queue:
            return
        head = edge.queue[0]
        nbytes = edge.rate * dt
        if nbytes > head.left:
            nbytes = head.left  # float dust; the completion event owns the rest
        if nbytes > 0.0:
            head.left -= nbytes
            if self.on_credit is not None:
                self.on_credit(edge.uploader, edge.downloader, nbytes)

    def _schedule_head(self, edge: FlowEdge) -> None:
        if edge.head_event is not None:
            self.engine.cancel(edge.head_event)
            edge.head_event = None
        if not edge.queue or edge.rate <= 0.0:
            return
        head = edge.queue[0]
        eta = self.engine.now + max(head.left, 0.0) / edge.rate
        edge.head_event = self.engine.schedule_at(
            eta, TRANSFER_PROGRESS, lambda e=edge: self._head_done(e)
        )

    def _head_done(self, edge: FlowEdge) -> None:
        edge.head_event = None
        if not edge.queue:
            return
        head = edge.queue.pop(0)
        nbytes = head.left
        head.left = 0.0
        edge.last_credit = self.engine.now
        if nbytes > 0.0 and self.on_credit is not None:
            self.on_credit(edge.uploader, edge.downloader, nbytes)
        head.on_done(head.tag)
        # on_done may have refilled the queue or closed the edge
        current = self.edges.get((edge.uploader, edge.downloader))
        if current is not edge:
            return
        if edge.queue:
            if edge.head_event is None:
                self._schedule_head(edge)
        else:
            self.mark_dirty()  # freed bandwidth redistributes

    def _recompute(self) -> None:
        self._recompute_event = None
        self.recomputes += 1
        now = self.engine.now
        busy = [(key, edge) for key, edge in self.edges.items() if edge.queue]
        for _, edge in busy:
            self._credit(edge, now)
            if edge.head_event is not None:
                self.engine.cancel(edge.head_event)
                edge.head_event = None
        alloc = allocate_flows(
            [(u, d, edge.cap) for (u, d), edge in busy],
            self.up_caps,
            self.down_caps,
        )
        for key, edge in busy:
            edge.rate = alloc.rates[key]
            self._schedule_head(edge)
