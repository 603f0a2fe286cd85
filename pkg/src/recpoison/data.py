"""Interaction data: loading, splitting, popularity stats, targets, attack budgets.

Datasets are implicit-feedback: a (user, item) pair either exists or not.
Ratings and timestamps in input files are ignored.
"""

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPLIT_NAMES = ("train", "valid", "test")


def _as_pair_array(pairs):
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    return arr.reshape(-1, 2)


def _sort_pairs(pairs):
    # lexicographic (user, item) order keeps files and hashes reproducible
    if len(pairs) == 0:
        return pairs
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


@dataclass(eq=False)
class InteractionDataset:
    """Dense-indexed users/items with train/valid/test interaction splits.

    An unsplit dataset carries everything in `train` with empty valid/test.
    Treated as immutable after construction.
    """

    user_ids: list
    item_ids: list
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    tag: str = "dataset"

    def __post_init__(self):
        self.train = _sort_pairs(_as_pair_array(self.train))
        self.valid = _sort_pairs(_as_pair_array(self.valid))
        self.test = _sort_pairs(_as_pair_array(self.test))
        self._validate()

    def _validate(self):
        n_u, n_i = self.n_users, self.n_items
        seen = set()
        for name in SPLIT_NAMES:
            part = getattr(self, name)
            if part.size == 0:
                continue
            if part[:, 0].min() < 0 or part[:, 0].max() >= n_u:
                raise ValueError(f"{name} split has user index out of range")
            if part[:, 1].min() < 0 or part[:, 1].max() >= n_i:
                raise ValueError(f"{name} split has item index out of range")
            part_set = {(int(u), int(i)) for u, i in part}
            if seen & part_set:
                raise ValueError("splits are not disjoint")
            seen |= part_set

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    @property
    def n_interactions(self):
        return len(self.train) + len(self.valid) + len(self.test)

    @cached_property
    def item_popularity(self):
        """Per-item count of train interactions."""
        if len(self.train) == 0:
            return np.zeros(self.n_items, dtype=np.int64)
        return np.bincount(self.train[:, 1], minlength=self.n_items)

    @cached_property
    def train_mask(self):
        """Dense boolean (n_users, n_items) over train interactions."""
        mask = np.zeros((self.n_users, self.n_items), dtype=bool)
        if len(self.train):
            mask[self.train[:, 0], self.train[:, 1]] = True
        return mask

    def all_pairs(self):
        return np.vstack([self.train, self.valid, self.test])

    @cached_property
    def fingerprint(self):
        """Content hash used for experiment cache keys."""
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps([self.user_ids, self.item_ids]).encode())
        for name in SPLIT_NAMES:
            h.update(getattr(self, name).tobytes())
        return h.hexdigest()[:16]


@dataclass
class AttackBudget:
    n_malicious: int
    per_user_budget: int
    target_items: np.ndarray

    def __post_init__(self):
        self.target_items = np.sort(np.asarray(self.target_items, dtype=np.int64))
        if self.n_malicious < 1:
            raise ValueError("n_malicious must be >= 1")
        if self.per_user_budget < len(self.target_items):
            raise ValueError("per_user_budget below target count")


def _detect_delimiter(line):
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None


def load_interactions(path, delimiter="auto", tag=None):
    """Read one interaction per line into an unsplit InteractionDataset.

    Fields beyond (user_id, item_id) are ignored. Dense indices are assigned
    in first-appearance order; duplicate pairs collapse to one interaction.
    """
    if not os.path.exists(path):
        raise ValueError(f"interaction file not found: {path}")
    user_index = {}
    item_index = {}
    pairs = []
    seen = set()
    sep = None if delimiter == "auto" else {"tab": "\t", "comma": ","}.get(delimiter, delimiter)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if sep is None:
                sep = _detect_delimiter(line)
                if sep is None and len(line.split()) < 2:
                    raise ValueError(f"line {lineno}: expected at least 2 delimited fields")
            fields = line.split(sep) if sep else line.split()
            fields = [f.strip() for f in fields if f.strip() != ""]
            if len(fields) < 2:
                raise ValueError(f"line {lineno}: expected at least 2 delimited fields")
            uid, iid = fields[0], fields[1]
            u = user_index.setdefault(uid, len(user_index))
            i = item_index.setdefault(iid, len(item_index))
            if (u, i) not in seen:
                seen.add((u, i))
                pairs.append((u, i))
    if not pairs:
        raise ValueError(f"no interactions found in {path}")
    return InteractionDataset(
        user_ids=list(user_index),
        item_ids=list(item_index),
        train=pairs,
        valid=[],
        test=[],
        tag=tag or os.path.splitext(os.path.basename(path))[0],
    )


def split_dataset(ds, ratios=(0.7, 0.1, 0.2), seed=0):
    """Per-user random split honoring the ratios globally within rounding.

    Users with fewer than 3 interactions keep everything in train. A running
    carry of fractional allocations keeps global split sizes within +-1 of
    the ideal counts when all users are splittable.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.min() < 0:
        raise ValueError("split ratios must be non-negative")
    if abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    pairs = ds.all_pairs()
    if len(pairs) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    by_user = [[] for _ in range(ds.n_users)]
    for u, i in pairs:
        by_user[u].append(i)
    out = {name: [] for name in SPLIT_NAMES}
    carry = np.zeros(3)
    for u in range(ds.n_users):
        items = np.sort(np.asarray(by_user[u], dtype=np.int64))
        c = len(items)
        if c == 0:
            continue
        ideal = c * ratios + carry
        if c < 3:
            alloc = np.array([c, 0, 0])
        else:
            alloc = np.maximum(np.floor(ideal).astype(np.int64), 0)
            short = c - alloc.sum()
            if short < 0:
                # floors overshoot only when negative carry got clamped at 0
                for k in sorted(range(3), key=lambda k: (ideal[k] - alloc[k], k)):
                    if short == 0:
                        break
                    if alloc[k] > 0:
                        alloc[k] -= 1
                        short += 1
            frac = ideal - alloc
            for k in sorted(range(3), key=lambda k: (-frac[k], k))[: max(short, 0)]:
                alloc[k] += 1
        carry = ideal - alloc
        perm = rng.permutation(c)
        shuffled = items[perm]
        start = 0
        for k, name in enumerate(SPLIT_NAMES):
            take = shuffled[start : start + alloc[k]]
            out[name].extend((u, int(i)) for i in take)
            start += alloc[k]
    return InteractionDataset(
        user_ids=list(ds.user_ids),
        item_ids=list(ds.item_ids),
        train=out["train"],
        valid=out["valid"],
        test=out["test"],
        tag=ds.tag,
    )


def popularity_ranking(ds):
    """Item indices ranked by (train count desc, item index asc)."""
    pop = ds.item_popularity
    return np.lexsort((np.arange(ds.n_items), -pop))


def select_target_items(ds, n=10, seed=0):
    """Sample n distinct items uniformly from outside the top-20% popularity group."""
    ranked = popularity_ranking(ds)
    cut = int(0.2 * ds.n_items)
    bottom = ranked[cut:]
    if len(bottom) == 0:
        raise ValueError("bottom-80% popularity group is empty")
    if n > len(bottom):
        raise ValueError(f"cannot pick {n} targets from a pool of {len(bottom)}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(bottom, size=n, replace=False)
    return np.sort(chosen.astype(np.int64))


def attack_budget(ds, user_fraction, target_items):
    """Malicious user count and per-user interaction cap for a given attack size."""
    if user_fraction <= 0:
        raise ValueError("user_fraction must be positive")
    if len(ds.train) < 1:
        raise ValueError("dataset has no train interactions")
    n_malicious = int(math.ceil(user_fraction * ds.n_users))
    per_user = int(math.floor(len(ds.train) / ds.n_users))
    per_user = max(per_user, len(target_items))
    return AttackBudget(n_malicious=n_malicious, per_user_budget=per_user, target_items=target_items)


def save_dataset(ds, out_dir):
    """Persist as mapping.json plus one CSV per split."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "mapping.json"), "w", encoding="utf-8") as fh:
        json.dump({"tag": ds.tag, "users": list(ds.user_ids), "items": list(ds.item_ids)}, fh)
    for name in SPLIT_NAMES:
        part = getattr(ds, name)
        with open(os.path.join(out_dir, f"{name}.csv"), "w", encoding="utf-8") as fh:
            fh.write("user,item\n")
            for u, i in part:
                fh.write(f"{u},{i}\n")


def load_dataset(in_dir):
    path = os.path.join(in_dir, "mapping.json")
    if not os.path.exists(path):
        raise ValueError(f"not a dataset directory (missing mapping.json): {in_dir}")
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    splits = {}
    for name in SPLIT_NAMES:
        pairs = []
        with open(os.path.join(in_dir, f"{name}.csv"), encoding="utf-8") as fh:
            header = fh.readline()
            if header.strip() != "user,item":
                raise ValueError(f"unexpected header in {name}.csv")
            for line in fh:
                line = line.strip()
                if line:
                    u, i = line.split(",")
                    pairs.append((int(u), int(i)))
        splits[name] = pairs
    return InteractionDataset(
        user_ids=mapping["users"],
        item_ids=mapping["items"],
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        tag=mapping.get("tag", "dataset"),
    )
