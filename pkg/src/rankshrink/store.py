"""Coordinate storage for partially observed matrices and tensors.

Observations are kept in lexicographic order of their full index tuple; that
order is the canonical row alignment for every design matrix built downstream.
Stores are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateEntry,
    EmptyObservations,
    IndexOutOfRange,
    InvalidParameter,
    NoEligibleRows,
)
from .rand import KIND_HOLDOUT, RngStream, make_stream_id


@dataclass
class ObservedTensor:
    """Sparse store of the observed entries of an order-D array."""

    order: int
    dims: tuple[int, ...]
    indices: np.ndarray  # (n_obs, order) int64, lexicographically sorted
    values: np.ndarray  # (n_obs,) float64
    # lazily attached caches (slice indexes, engine workspace); not part of
    # the value of the store
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    def entry_tuples(self) -> list[tuple[tuple[int, ...], float]]:
        return [
            (tuple(int(i) for i in idx), float(v))
            for idx, v in zip(self.indices, self.values)
        ]


@dataclass
class SliceIndex:
    """Per-level observation positions along one dimension.

    ``levels[l]`` lists positions into the store whose index along ``dim``
    equals ``l``, in lexicographic order of the full index tuple.
    """

    dim: int
    levels: list[np.ndarray]


def _lex_order(indices: np.ndarray) -> np.ndarray:
    # np.lexsort sorts by the last key first, so feed dimensions reversed
    return np.lexsort(tuple(indices[:, d] for d in reversed(range(indices.shape[1]))))


def build(order: int, dims, entries) -> ObservedTensor:
    """Validate and store a list of ((i1, ..., iD), value) observations."""
    dims = tuple(int(m) for m in dims)
    if order != len(dims) or order < 2 or any(m < 1 for m in dims):
        raise InvalidParameter(f"bad order/dims: order={order}, dims={dims}")
    entries = list(entries)
    if not entries:
        raise EmptyObservations("at least one observation is required")
    indices = np.array([e[0] for e in entries], dtype=np.int64)
    if indices.ndim != 2 or indices.shape[1] != order:
        raise InvalidParameter("every index tuple must have length equal to order")
    values = np.array([e[1] for e in entries], dtype=np.float64)
    bad = (indices < 0) | (indices >= np.array(dims, dtype=np.int64))
    if bad.any():
        pos = int(np.nonzero(bad.any(axis=1))[0][0])
        raise IndexOutOfRange(f"index {tuple(indices[pos])} outside dims {dims}")
    perm = _lex_order(indices)
    indices = np.ascontiguousarray(indices[perm])
    values = np.ascontiguousarray(values[perm])
    if indices.shape[0] > 1:
        dup = np.all(indices[1:] == indices[:-1], axis=1)
        if dup.any():
            pos = int(np.nonzero(dup)[0][0])
            raise DuplicateEntry(f"duplicate observation at {tuple(indices[pos])}")
    return ObservedTensor(order=order, dims=dims, indices=indices, values=values)


def _from_positions(obs: ObservedTensor, positions: np.ndarray) -> ObservedTensor:
    # a sorted subset of a lexicographically sorted store stays sorted
    positions = np.sort(np.asarray(positions, dtype=np.int64))
    return ObservedTensor(
        order=obs.order,
        dims=obs.dims,
        indices=obs.indices[positions].copy(),
        values=obs.values[positions].copy(),
    )


def slice_index(obs: ObservedTensor, d1: int) -> SliceIndex:
    """Group observation positions by their index along dimension d1."""
    if not 0 <= d1 < obs.order:
        raise InvalidParameter(f"dimension {d1} out of range for order {obs.order}")
    key = f"slice_index_{d1}"
    cached = obs._cache.get(key)
    if cached is not None:
        return cached
    col = obs.indices[:, d1]
    order = np.argsort(col, kind="stable")  # store order is already lexicographic
    counts = np.bincount(col, minlength=obs.dims[d1])
    levels = np.split(order, np.cumsum(counts)[:-1])
    out = SliceIndex(dim=d1, levels=[np.ascontiguousarray(l) for l in levels])
    obs._cache[key] = out
    return out


def coverage_check(obs: ObservedTensor) -> list[tuple[int, int]]:
    """List (dimension, level) pairs that have zero observations."""
    missing = []
    for d in range(obs.order):
        counts = np.bincount(obs.indices[:, d], minlength=obs.dims[d])
        for l in np.nonzero(counts == 0)[0]:
            missing.append((d, int(l)))
    return missing


def holdout_split(
    obs: ObservedTensor, user_fraction: float, rng_seed: int
) -> tuple[ObservedTensor, ObservedTensor]:
    """Move one entry from a random fraction of rows into a test store.

    Selects floor(user_fraction * n_rows) distinct rows among rows holding at
    least two observations, and moves exactly one uniformly chosen entry per
    selected row to the test set. Deterministic for a fixed seed.
    """
    if obs.order != 2:
        raise InvalidParameter("holdout_split requires a matrix (order 2) store")
    if not 0.0 <= user_fraction <= 1.0:
        raise InvalidParameter(f"user_fraction must be in [0, 1], got {user_fraction}")
    m = obs.dims[0]
    n_sel = int(np.floor(user_fraction * m))
    if n_sel == 0:
        empty = ObservedTensor(
            order=2,
            dims=obs.dims,
            indices=np.empty((0, 2), dtype=np.int64),
            values=np.empty(0, dtype=np.float64),
        )
        return _from_positions(obs, np.arange(obs.n_obs)), empty
    rows = slice_index(obs, 0)
    eligible = np.array(
        [l for l in range(m) if rows.levels[l].shape[0] >= 2], dtype=np.int64
    )
    if eligible.shape[0] < n_sel:
        raise NoEligibleRows(
            f"need {n_sel} rows with >=2 observations, only {eligible.shape[0]} eligible"
        )
    gen = RngStream(rng_seed, make_stream_id(KIND_HOLDOUT)).gen
    chosen = np.sort(gen.choice(eligible, size=n_sel, replace=False))
    test_pos = []
    for l in chosen:
        pos = rows.levels[l]
        test_pos.append(int(pos[gen.integers(pos.shape[0])]))
    test_pos = np.array(sorted(test_pos), dtype=np.int64)
    keep = np.setdiff1d(np.arange(obs.n_obs), test_pos, assume_unique=True)
    return _from_positions(obs, keep), _from_positions(obs, test_pos)


def csv_header(order: int) -> list[str]:
    return [f"i{d + 1}" for d in range(order)] + ["value"]


def read_observations_csv(path, dims, one_based: bool = False) -> ObservedTensor:
    """Read `i1,...,iD,value` rows into a validated store."""
    dims = tuple(int(m) for m in dims)
    order = len(dims)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != order + 1:
            raise InvalidParameter(
                f"expected header with {order + 1} columns in {path}"
            )
        shift = 1 if one_based else 0
        for row in reader:
            if not row:
                continue
            idx = tuple(int(v) - shift for v in row[:order])
            entries.append((idx, float(row[order])))
    return build(order, dims, entries)


def write_observations_csv(path, obs: ObservedTensor, one_based: bool = False) -> None:
    shift = 1 if one_based else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(obs.order))
        for idx, v in zip(obs.indices, obs.values):
            writer.writerow([int(i) + shift for i in idx] + [format(v, ".17g")])
