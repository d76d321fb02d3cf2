"""Long-term identities and first-hand seeding observation.

A node's ledger records, per long-term identity, the bytes received from
that identity while giving it nothing back over the connection. Only
first-hand observations accrue; peers without a long-term id have no
history. Synthetic past histories let experiments start with a chosen
overlap between altruistic nodes.
"""

from __future__ import annotations

import math


class SeedingLedger:
    """Per-identity seeded-byte totals. Totals never decrease."""

    __slots__ = ("_bytes",)

    def __init__(self):
        self._bytes: dict = {}

    def credit(self, lt_id, nbytes) -> None:
        if nbytes < 0:
            raise ValueError("ledger credits must be non-negative")
        self._bytes[lt_id] = self._bytes.get(lt_id, 0) + nbytes

    def seeded_bytes(self, lt_id):
        return self._bytes.get(lt_id, 0)

    def items(self):
        return self._bytes.items()

    def as_dict(self) -> dict:
        return dict(self._bytes)

    def total(self):
        return sum(self._bytes.values())

    def __len__(self):
        return len(self._bytes)

    def save(self, path) -> None:
        """Line-oriented text table: `identity bytes` per line."""
        with open(path, "w") as fh:
            for ident in sorted(self._bytes):
                fh.write(f"{ident} {int(self._bytes[ident])}\n")

    @classmethod
    def load(cls, path) -> "SeedingLedger":
        ledger = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected `identity bytes`")
                ledger.credit(int(parts[0]), int(parts[1]))
        return ledger


def observe_transfer(ledger: SeedingLedger, peer_lt_id, received, sent_in_window) -> SeedingLedger:
    """Accrue received bytes as seeded bytes when nothing was given back.

    Any bytes sent to the peer within the accounting window (the
    connection lifetime) void the seeding classification from then on.
    Unidentified peers are a no-op.
    """
    if peer_lt_id is None:
        return ledger
    if sent_in_window == 0 and received > 0:
        ledger.credit(peer_lt_id, received)
    return ledger


def known_seeder(ledger: SeedingLedger, peer_lt_id) -> bool:
    """A peer qualifies for reserved seeding slots once any seeded bytes
    are ledgered against its identity."""
    if peer_lt_id is None:
        return False
    return ledger.seeded_bytes(peer_lt_id) > 0


class OverlapAssignment:
    """Which altruistic nodes carry first-hand history (the rewarding
    subgroup) at a given overlap fraction."""

    __slots__ = ("rewarding", "overlap")

    def __init__(self, rewarding, overlap):
        self.rewarding = frozenset(rewarding)
        self.overlap = overlap

    def is_rewarding(self, node_id) -> bool:
        return node_id in self.rewarding


def synth_history(
    altruists,
    overlap: float,
    rng,
    low_bytes: int = 2**20,
    high_bytes: int = 10 * 2**30,
) -> tuple[dict, OverlapAssignment]:
    """Invent past seeding histories for the altruistic population.

    round(overlap * count) nodes become rewarding: each gets a ledger
    entry for every other altruistic node with seeded bytes drawn
    log-uniform in [low, high]. Non-rewarding altruists keep empty
    ledgers (they still reserve bandwidth but never use it).
    """
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    ids = sorted(altruists)
    k = math.floor(overlap * len(ids) + 0.5)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    rewarding = sorted(shuffled[:k])
    ledgers = {ident: SeedingLedger() for ident in ids}
    log_low, log_high = math.log(low_bytes), math.log(high_bytes)
    for ident in rewarding:
        ledger = ledgers[ident]
        for other in ids:
            if other == ident:
                continue
            b = int(math.exp(rng.uniform(log_low, log_high)))
            ledger.credit(other, b)
    return ledgers, OverlapAssignment(rewarding, overlap)
