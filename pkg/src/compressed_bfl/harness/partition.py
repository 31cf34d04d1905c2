"""
Splitting datasets between devices and into train/validation/test sets.
"""

from typing import Sequence

import numpy as np

from ..core import ArgumentError, RngStream
from ..logging import logger
from ..models import Dataset


def _even_chunks(indices: np.ndarray, parts: int) -> list[np.ndarray]:
    return np.array_split(indices, parts)


def partition_data(
    dataset: Dataset,
    K: int,
    mode: str,
    rng: RngStream,
    classes_per_device: int = 1,
) -> list[Dataset]:
    """
    Split ``dataset`` into ``K`` disjoint device shards whose union is the
    whole dataset.

    Parameters
    ----------
    dataset : Dataset
        Training examples to distribute.
    K : int
        Number of devices.
    mode : str
        ``iid`` shuffles and splits evenly. ``label-skew`` gives device ``k``
        the ``classes_per_device`` classes ``k*s, ..., k*s + s - 1`` (mod R)
        and splits each class evenly among the devices holding it.
    rng : RngStream
        Partition stream.
    classes_per_device : int
        ``s`` for ``label-skew``.

    Returns
    -------
    list of Dataset
        Shard ``k`` has ``owner == k``.
    """
    if K < 1:
        raise ArgumentError(f"Need at least one device, got {K}")
    n = len(dataset)
    if n < K:
        raise ArgumentError(f"Cannot split {n} examples between {K} devices")

    if mode == "iid":
        chunks = _even_chunks(rng.permutation(n), K)
    elif mode == "label-skew":
        chunks = _label_skew_chunks(dataset, K, classes_per_device, rng)
    else:
        raise ArgumentError(f"Unknown partition mode {mode!r}")

    shards = [dataset.subset(np.sort(chunk), owner=k) for k, chunk in enumerate(chunks)]
    logger.debug(f"Partitioned {n} examples ({mode}): shard sizes {[len(s) for s in shards]}")
    return shards


def _label_skew_chunks(
    dataset: Dataset, K: int, s: int, rng: RngStream
) -> list[np.ndarray]:
    R = dataset.n_classes
    if not 1 <= s <= R:
        raise ArgumentError(f"classes_per_device must lie in [1, {R}], got {s}")
    if K * s < R:
        raise ArgumentError(
            f"{K} devices with {s} class(es) each cannot cover all {R} classes"
        )
    holders: dict[int, list[int]] = {r: [] for r in range(R)}
    for k in range(K):
        for i in range(s):
            holders[(k * s + i) % R].append(k)

    chunks: list[list[np.ndarray]] = [[] for _ in range(K)]
    for r in range(R):
        members = np.flatnonzero(dataset.labels == r)
        if members.size == 0:
            continue
        devices = holders[r]
        if members.size < len(devices):
            raise ArgumentError(
                f"Class {r} has {members.size} example(s) for {len(devices)} devices"
            )
        members = members[rng.permutation(members.size)]
        for device, part in zip(devices, _even_chunks(members, len(devices))):
            chunks[device].append(part)
    return [np.concatenate(parts) if parts else np.empty(0, dtype=np.int64) for parts in chunks]


def split_dataset(
    dataset: Dataset, fractions: Sequence[float], rng: RngStream
) -> list[Dataset]:
    """
    Shuffle and cut ``dataset`` into consecutive pieces.

    ``fractions`` gives the size of every piece but the first, which takes the
    remainder.
    """
    if any(f < 0 for f in fractions) or sum(fractions) >= 1:
        raise ArgumentError(f"Fractions {list(fractions)} must be non-negative and sum below 1")
    n = len(dataset)
    order = rng.permutation(n)
    sizes = [int(round(f * n)) for f in fractions]
    head = n - sum(sizes)
    if head < 1 or any(size < 1 for size in sizes):
        raise ArgumentError(f"Splitting {n} examples by {list(fractions)} leaves an empty piece")
    bounds = np.cumsum([head] + sizes)[:-1]
    return [dataset.subset(np.sort(part)) for part in np.split(order, bounds)]
