"""Rating data: loaders, synthetic generation, bipartite graphs, vertical
item partitions, and train/validation/test splits.

All operations are pure functions over immutable inputs; randomized ones
take an explicit seed and are deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import dataclasses
from typing import NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset operations."""


class RatingRecord(NamedTuple):
    user_id: str
    item_id: str
    rating: float


@dataclasses.dataclass(frozen=True)
class RatingDataset:
    """Densely re-indexed user/item ratings.

    ``user_ids`` and ``item_ids`` map the dense index back to the original
    identifier; edges reference dense indices.
    """

    user_ids: tuple
    item_ids: tuple
    edge_user: np.ndarray
    edge_item: np.ndarray
    ratings: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return int(self.edge_user.size)

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_user, minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_item, minlength=self.n_items)

    def pairs(self) -> np.ndarray:
        """Interactions as an (n_ratings, 2) array of dense (user, item)."""
        return np.stack([self.edge_user, self.edge_item], axis=1)

    def records(self) -> list[RatingRecord]:
        return [
            RatingRecord(self.user_ids[u], self.item_ids[v], float(r))
            for u, v, r in zip(self.edge_user, self.edge_item, self.ratings)
        ]


def from_records(records: Sequence[RatingRecord]) -> RatingDataset:
    """Build a dataset with dense ids assigned in first-seen order.

    Duplicate (user, item) pairs are rejected.
    """
    if not records:
        raise DataError("no records")
    user_index: dict = {}
    item_index: dict = {}
    seen: set = set()
    eu, ev, rs = [], [], []
    for rec in records:
        key = (rec.user_id, rec.item_id)
        if key in seen:
            raise DataError(f"duplicate rating for pair {key!r}")
        seen.add(key)
        u = user_index.setdefault(rec.user_id, len(user_index))
        v = item_index.setdefault(rec.item_id, len(item_index))
        eu.append(u)
        ev.append(v)
        rs.append(float(rec.rating))
    return RatingDataset(
        user_ids=tuple(user_index),
        item_ids=tuple(item_index),
        edge_user=np.asarray(eu, dtype=np.int64),
        edge_item=np.asarray(ev, dtype=np.int64),
        ratings=np.asarray(rs, dtype=np.float64),
    )


def _parse_movielens_dat(path: str) -> list[RatingRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected user::item::rating::timestamp")
            try:
                rating = float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad rating {parts[2]!r}") from exc
            records.append(RatingRecord(parts[0], parts[1], rating))
    return records


def _parse_csv(path: str) -> list[RatingRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        expected = ["user_id", "item_id", "rating"]
        if [h.strip() for h in header] != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                rating = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad rating {row[2]!r}") from exc
            records.append(RatingRecord(row[0], row[1], rating))
    return records


def load_ratings(
    path: str,
    format: str = "csv",
    rating_bounds: tuple[float, float] | None = None,
) -> RatingDataset:
    """Load ratings from ``movielens-dat`` ("::"-separated) or ``csv`` files.

    ``rating_bounds`` optionally enforces the dataset's native rating scale,
    e.g. (1, 5) or (1, 10).
    """
    if format == "movielens-dat":
        records = _parse_movielens_dat(path)
    elif format == "csv":
        records = _parse_csv(path)
    else:
        raise DataError(f"unknown format {format!r}")
    if not records:
        raise DataError("no records")
    if rating_bounds is not None:
        lo, hi = rating_bounds
        for rec in records:
            if not lo <= rec.rating <= hi:
                raise DataError(
                    f"rating {rec.rating} for pair {(rec.user_id, rec.item_id)!r} "
                    f"outside scale [{lo}, {hi}]"
                )
    return from_records(records)


def export_csv(dataset: RatingDataset, path: str) -> None:
    """Write the canonical CSV form (user_id,item_id,rating), original ids."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "item_id", "rating"])
        for rec in dataset.records():
            writer.writerow([rec.user_id, rec.item_id, f"{rec.rating:.10g}"])


def generate_synthetic(
    n_users: int,
    n_items: int,
    density: float,
    rating_levels: Sequence[float] = (1, 2, 3, 4, 5),
    seed: int = 0,
) -> RatingDataset:
    """Sample a Bernoulli(density) interaction grid with uniform rating levels."""
    if n_users < 1 or n_items < 1:
        raise DataError("n_users and n_items must be positive")
    if not 0 < density <= 1:
        raise DataError("density must lie in (0, 1]")
    if density * n_users * n_items < 1:
        raise DataError("expected edge count below 1; raise density or sizes")
    rng = np.random.default_rng(seed)
    mask = rng.random((n_users, n_items)) < density
    eu, ev = np.nonzero(mask)
    if eu.size == 0:
        raise DataError("no records")
    levels = np.asarray(list(rating_levels), dtype=np.float64)
    ratings = levels[rng.integers(0, len(levels), size=eu.size)]
    return RatingDataset(
        user_ids=tuple(range(n_users)),
        item_ids=tuple(range(n_items)),
        edge_user=eu.astype(np.int64),
        edge_item=ev.astype(np.int64),
        ratings=ratings,
    )


def _reindex(dataset: RatingDataset, keep_edges: np.ndarray) -> RatingDataset:
    """Restrict to the given edge mask and drop users/items left without edges."""
    eu = dataset.edge_user[keep_edges]
    ev = dataset.edge_item[keep_edges]
    rs = dataset.ratings[keep_edges]
    if eu.size == 0:
        raise DataError("empty after filtering")
    users = np.unique(eu)
    items = np.unique(ev)
    umap = -np.ones(dataset.n_users, dtype=np.int64)
    umap[users] = np.arange(users.size)
    vmap = -np.ones(dataset.n_items, dtype=np.int64)
    vmap[items] = np.arange(items.size)
    return RatingDataset(
        user_ids=tuple(dataset.user_ids[int(u)] for u in users),
        item_ids=tuple(dataset.item_ids[int(v)] for v in items),
        edge_user=umap[eu],
        edge_item=vmap[ev],
        ratings=rs,
    )


def filter_by_threshold(dataset: RatingDataset, thd: int) -> RatingDataset:
    """Iteratively drop users with fewer than ``thd`` interactions.

    Repeats until every remaining user has degree >= thd; items left with no
    interactions are dropped afterwards.
    """
    if thd < 1:
        raise DataError("thd must be >= 1")
    keep = np.ones(dataset.n_ratings, dtype=bool)
    while True:
        deg = np.bincount(dataset.edge_user[keep], minlength=dataset.n_users)
        active = keep.any() and bool((deg[dataset.edge_user] > 0)[keep].any())
        bad_users = (deg > 0) & (deg < thd)
        if not active or not bad_users.any():
            break
        keep &= ~bad_users[dataset.edge_user]
    if not keep.any():
        raise DataError("empty after threshold")
    return _reindex(dataset, keep)


def subsample(
    dataset: RatingDataset,
    n_users: int | None = None,
    n_items: int | None = None,
    seed: int = 0,
) -> RatingDataset:
    """Keep a seeded uniform sample of users/items and their induced edges."""
    rng = np.random.default_rng(seed)
    keep = np.ones(dataset.n_ratings, dtype=bool)
    if n_users is not None:
        if not 1 <= n_users <= dataset.n_users:
            raise DataError("n_users out of range")
        chosen = np.zeros(dataset.n_users, dtype=bool)
        chosen[rng.choice(dataset.n_users, size=n_users, replace=False)] = True
        keep &= chosen[dataset.edge_user]
    if n_items is not None:
        if not 1 <= n_items <= dataset.n_items:
            raise DataError("n_items out of range")
        chosen = np.zeros(dataset.n_items, dtype=bool)
        chosen[rng.choice(dataset.n_items, size=n_items, replace=False)] = True
        keep &= chosen[dataset.edge_item]
    return _reindex(dataset, keep)


@dataclasses.dataclass(frozen=True)
class PartyPartition:
    """Disjoint, exhaustive assignment of items to parties."""

    item_to_party: np.ndarray
    n_parties: int

    def __post_init__(self):
        counts = self.item_counts()
        if counts.sum() != self.item_to_party.size:
            raise DataError("partition must cover every item exactly once")

    def item_counts(self) -> np.ndarray:
        """Per-party item counts M_p (public knowledge in the protocol)."""
        return np.bincount(self.item_to_party, minlength=self.n_parties)

    def items_of(self, party: int) -> np.ndarray:
        """Global item ids owned by ``party``, ascending."""
        return np.flatnonzero(self.item_to_party == party)


def partition_items(dataset: RatingDataset, n_parties: int, seed: int = 0) -> PartyPartition:
    """Shuffle items by seed and split into near-equal disjoint groups."""
    if n_parties < 1:
        raise DataError("n_parties must be >= 1")
    if n_parties > dataset.n_items:
        raise DataError("more parties than items")
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n_items)
    assignment = np.empty(dataset.n_items, dtype=np.int64)
    sizes = np.full(n_parties, dataset.n_items // n_parties, dtype=np.int64)
    sizes[: dataset.n_items % n_parties] += 1
    start = 0
    for party, size in enumerate(sizes):
        assignment[order[start : start + size]] = party
        start += size
    return PartyPartition(item_to_party=assignment, n_parties=n_parties)


@dataclasses.dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test edge index sets over a dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    ratios: tuple[float, float, float]

    def sizes(self) -> tuple[int, int, int]:
        return (self.train.size, self.validation.size, self.test.size)


def split_train_val_test(
    dataset: RatingDataset,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> DatasetSplit:
    """Random per-edge split; set sizes within one edge of the exact ratios."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError("all three split ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError("split ratios must sum to 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n_ratings)
    n_train = int(round(ratios[0] * dataset.n_ratings))
    n_val = int(round(ratios[1] * dataset.n_ratings))
    n_val = min(n_val, dataset.n_ratings - n_train)
    return DatasetSplit(
        train=np.sort(order[:n_train]),
        validation=np.sort(order[n_train : n_train + n_val]),
        test=np.sort(order[n_train + n_val :]),
        ratios=ratios,
    )


@dataclasses.dataclass
class BipartiteGraph:
    """User-item interaction graph with local (contiguous) item indexing.

    For party subgraphs, ``global_item_ids`` maps local item index to the
    dataset's dense item id and ``edge_positions`` points back at the
    originating dataset edge. The shared user axis is always global.
    """

    n_users: int
    n_items: int
    edge_user: np.ndarray
    edge_item: np.ndarray
    ratings: np.ndarray
    global_item_ids: np.ndarray | None = None
    edge_positions: np.ndarray | None = None
    _indptr_u: np.ndarray | None = dataclasses.field(default=None, repr=False)
    _order_u: np.ndarray | None = dataclasses.field(default=None, repr=False)
    _indptr_v: np.ndarray | None = dataclasses.field(default=None, repr=False)
    _order_v: np.ndarray | None = dataclasses.field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.edge_user.size)

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_user, minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_item, minlength=self.n_items)

    def _adjacency(self, by_user: bool):
        if by_user and self._indptr_u is None:
            order = np.argsort(self.edge_user, kind="stable")
            counts = self.user_degrees()
            self._order_u = order
            self._indptr_u = np.concatenate([[0], np.cumsum(counts)])
        if not by_user and self._indptr_v is None:
            order = np.argsort(self.edge_item, kind="stable")
            counts = self.item_degrees()
            self._order_v = order
            self._indptr_v = np.concatenate([[0], np.cumsum(counts)])
        if by_user:
            return self._indptr_u, self._order_u
        return self._indptr_v, self._order_v

    def items_of(self, user: int) -> np.ndarray:
        indptr, order = self._adjacency(by_user=True)
        return self.edge_item[order[indptr[user] : indptr[user + 1]]]

    def users_of(self, item: int) -> np.ndarray:
        indptr, order = self._adjacency(by_user=False)
        return self.edge_user[order[indptr[item] : indptr[item + 1]]]


def build_graph(dataset: RatingDataset, edge_indices: np.ndarray | None = None) -> BipartiteGraph:
    """Graph over the full item set, optionally restricted to given edges."""
    if edge_indices is None:
        edge_indices = np.arange(dataset.n_ratings)
    return BipartiteGraph(
        n_users=dataset.n_users,
        n_items=dataset.n_items,
        edge_user=dataset.edge_user[edge_indices],
        edge_item=dataset.edge_item[edge_indices],
        ratings=dataset.ratings[edge_indices],
        global_item_ids=np.arange(dataset.n_items),
        edge_positions=np.asarray(edge_indices, dtype=np.int64),
    )


def build_party_graph(
    dataset: RatingDataset,
    partition: PartyPartition,
    party: int,
    edge_indices: np.ndarray | None = None,
) -> BipartiteGraph:
    """The local subgraph of one party: all shared users, its own items only.

    ``edge_indices`` restricts to a subset of dataset edges (e.g. the train
    split) before selecting the party's items.
    """
    if not 0 <= party < partition.n_parties:
        raise DataError("party index out of range")
    if edge_indices is None:
        edge_indices = np.arange(dataset.n_ratings)
    edge_indices = np.asarray(edge_indices, dtype=np.int64)
    items = partition.items_of(party)
    local_of = -np.ones(dataset.n_items, dtype=np.int64)
    local_of[items] = np.arange(items.size)
    sel = partition.item_to_party[dataset.edge_item[edge_indices]] == party
    positions = edge_indices[sel]
    return BipartiteGraph(
        n_users=dataset.n_users,
        n_items=items.size,
        edge_user=dataset.edge_user[positions],
        edge_item=local_of[dataset.edge_item[positions]],
        ratings=dataset.ratings[positions],
        global_item_ids=items,
        edge_positions=positions,
    )
