"""BitTorrent mechanics: torrent layout, piece/block state, neighborhoods.

Pieces (default 256 KiB) subdivide into blocks (default 16 KiB). A block
is requested from at most one peer outside endgame mode; the piece map
tracks request state so a node never downloads a block it already holds.
Download-rate estimation uses a trailing 20 second window that is exact
for the piecewise-constant rates the flow model produces.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

UNREQUESTED = 0
REQUESTED = 1
RECEIVED = 2


@dataclass(frozen=True)
class TorrentSpec:
    """Static layout of the distributed object."""

    total_bytes: int
    piece_bytes: int = 262144
    block_bytes: int = 16384

    def __post_init__(self):
        if self.total_bytes <= 0:
            raise ValueError("total_bytes must be positive")
        if self.piece_bytes % self.block_bytes != 0:
            raise ValueError("piece_bytes must be divisible by block_bytes")

    @property
    def num_pieces(self) -> int:
        return -(-self.total_bytes // self.piece_bytes)

    @property
    def total_bits(self) -> int:
        return self.total_bytes * 8

    def piece_size(self, piece: int) -> int:
        if piece == self.num_pieces - 1:
            rem = self.total_bytes - piece * self.piece_bytes
            return rem
        return self.piece_bytes

    def num_blocks(self, piece: int) -> int:
        return -(-self.piece_size(piece) // self.block_bytes)

    def block_size(self, piece: int, block: int) -> int:
        size = self.piece_size(piece)
        if block == self.num_blocks(piece) - 1:
            return size - block * self.block_bytes
        return self.block_bytes


class PieceMap:
    """Per-piece completion and per-block request state for one node."""

    __slots__ = (
        "spec",
        "have",
        "blocks",
        "received_count",
        "requested_from",
        "unrequested_blocks",
        "granted_bytes",
        "scan_pos",
    )

    def __init__(self, spec: TorrentSpec, complete: bool = False):
        self.spec = spec
        n = spec.num_pieces
        if complete:
            self.have = set(range(n))
            self.unrequested_blocks = 0
            self.granted_bytes = spec.total_bytes
        else:
            self.have = set()
            self.unrequested_blocks = sum(spec.num_blocks(p) for p in range(n))
            self.granted_bytes = 0
        self.blocks: dict[int, list[int]] = {}  # in-progress piece -> block states
        self.received_count: dict[int, int] = {}
        self.requested_from: dict[tuple[int, int], list] = {}
        self.scan_pos: dict[int, int] = {}

    @property
    def is_complete(self) -> bool:
        return len(self.have) == self.spec.num_pieces

    def needs(self, piece: int) -> bool:
        return piece not in self.have

    def in_progress(self):
        return self.blocks.keys()

    def is_fresh(self, piece: int) -> bool:
        """True when no block of this piece has been requested or received."""
        return piece not in self.have and piece not in self.blocks

    def block_state(self, piece: int, block: int) -> int:
        if piece in self.have:
            return RECEIVED
        states = self.blocks.get(piece)
        return states[block] if states is not None else UNREQUESTED

    def _states(self, piece: int) -> list[int]:
        states = self.blocks.get(piece)
        if states is None:
            states = [UNREQUESTED] * self.spec.num_blocks(piece)
            self.blocks[piece] = states
            self.received_count[piece] = 0
            self.scan_pos[piece] = 0
        return states

    def grant(self, piece: int) -> None:
        """Mark a whole piece as held (fixtures and pre-seeded nodes)."""
        if piece in self.have:
            return
        if piece in self.blocks:
            raise ValueError(f"piece {piece} has in-flight blocks")
        self.have.add(piece)
        self.unrequested_blocks -= self.spec.num_blocks(piece)
        self.granted_bytes += self.spec.piece_size(piece)

    def mark_requested(self, piece: int, block: int, peer) -> None:
        states = self._states(piece)
        if states[block] == RECEIVED:
            raise ValueError(f"block {piece}/{block} already received")
        if states[block] == UNREQUESTED:
            states[block] = REQUESTED
            self.unrequested_blocks -= 1
        holders = self.requested_from.setdefault((piece, block), [])
        if peer in holders:
            raise ValueError(f"block {piece}/{block} already requested from {peer}")
        holders.append(peer)

    def mark_unrequested(self, piece: int, block: int, peer) -> None:
        """A request failed (choke, timeout, depart); block may be re-requested."""
        holders = self.requested_from.get((piece, block))
        if holders is None or peer not in holders:
            return
        holders.remove(peer)
        if holders:
            return
        del self.requested_from[(piece, block)]
        states = self.blocks.get(piece)
        if states is not None and states[block] == REQUESTED:
            states[block] = UNREQUESTED
            self.unrequested_blocks += 1
            if self.scan_pos.get(piece, 0) > block:
                self.scan_pos[piece] = block

    def mark_received(self, piece: int, block: int) -> tuple[bool, bool]:
        """Returns (newly_received, piece_now_complete)."""
        states = self.blocks.get(piece)
        if piece in self.have or (states is not None and states[block] == RECEIVED):
            return False, False
        states = self._states(piece)
        if states[block] == UNREQUESTED:
            self.unrequested_blocks -= 1
        states[block] = RECEIVED
        self.requested_from.pop((piece, block), None)
        self.received_count[piece] += 1
        if self.received_count[piece] == self.spec.num_blocks(piece):
            self.have.add(piece)
            del self.blocks[piece]
            del self.received_count[piece]
            del self.scan_pos[piece]
            return True, True
        return True, False

    def next_unrequested_block(self, piece: int):
        states = self.blocks.get(piece)
        if states is None:
            if piece in self.have:
                return None
            return 0
        pos = self.scan_pos.get(piece, 0)
        n = len(states)
        while pos < n and states[pos] != UNREQUESTED:
            pos += 1
        self.scan_pos[piece] = pos
        return pos if pos < n else None

    def missing_blocks(self):
        """(piece, block) pairs not yet received, over in-progress pieces first."""
        out = []
        for piece, states in self.blocks.items():
            for block, st in enumerate(states):
                if st != RECEIVED:
                    out.append((piece, block))
        for piece in range(self.spec.num_pieces):
            if piece not in self.have and piece not in self.blocks:
                out.extend((piece, b) for b in range(self.spec.num_blocks(piece)))
        return out


class RateWindow:
    """Trailing-window byte-rate estimator.

    Checkpoints are cumulative byte counts at credit times; since the flow
    rate is constant between checkpoints the linear interpolation at the
    window edge is exact, so a constant-rate edge measures exactly its
    rate once the window has filled.
    """

    __slots__ = ("window", "points")

    def __init__(self, window: float = 20.0, start: float = 0.0):
        self.window = window
        self.points = deque()
        self.points.append((start, 0.0))

    def add(self, t: float, nbytes: float) -> None:
        last_t, last_cum = self.points[-1]
        if t == last_t:
            self.points[-1] = (t, last_cum + nbytes)
        else:
            self.points.append((t, last_cum + nbytes))

    def rate(self, t: float) -> float:
        points = self.points
        cutoff = t - self.window
        while len(points) >= 2 and points[1][0] <= cutoff:
            points.popleft()
        last_t, last_cum = points[-1]
        if last_t <= cutoff:
            return 0.0
        if points[0][0] >= cutoff:
            base = points[0][1]
        else:
            t0, c0 = points[0]
            t1, c1 = points[1]
            base = c0 + (c1 - c0) * (cutoff - t0) / (t1 - t0)
        return max(last_cum - base, 0.0) / self.window


class TrackerError(Exception):
    pass


class Tracker:
    """Rendezvous registry handing out random subsets of active peers."""

    def __init__(self, rng, request_size: int = 50):
        self.rng = rng
        self.request_size = request_size
        self.active: dict = {}
        self.announces = 0

    def announce(self, node_id, when: str):
        """when is one of join | periodic | depart."""
        self.announces += 1
        if when == "join":
            self.active[node_id] = True
        elif when == "depart":
            if node_id not in self.active:
                raise TrackerError(f"depart announce from unknown node {node_id}")
            del self.active[node_id]
            return []
        elif when == "periodic":
            if node_id not in self.active:
                raise TrackerError(f"announce from departed node {node_id}")
        else:
            raise ValueError(f"unknown announce kind {when!r}")
        pool = sorted(p for p in self.active if p != node_id)
        k = min(self.request_size, len(pool))
        if k == 0:
            return []
        return self.rng.sample(pool, k)


def select_piece(complete_pieces: int, candidates, availability, rng):
    """Pick the next piece to start downloading.

    candidates: needed pieces obtainable right now (none in progress).
    availability: per-piece neighborhood holder counts (indexable).
    A node with zero complete pieces picks uniformly at random; otherwise
    rarest-first with uniform random tie-breaking.
    """
    candidates = list(candidates)
    if not candidates:
        return None
    if complete_pieces == 0:
        return candidates[rng.randrange(len(candidates))]
    best = None
    best_avail = None
    ties = []
    for piece in candidates:
        a = availability[piece]
        if best_avail is None or a < best_avail:
            best_avail = a
            ties = [piece]
            best = piece
        elif a == best_avail:
            ties.append(piece)
    if len(ties) > 1:
        return ties[rng.randrange(len(ties))]
    return best
