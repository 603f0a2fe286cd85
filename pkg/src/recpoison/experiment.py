"""Repeated-seed attack experiments: grid running, caching, report emission."""

import hashlib
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

from .attack import (
    AttackConfig,
    bandwagon_attack,
    clear_attack,
    random_attack,
)
from .data import attack_budget, select_target_items
from .metrics import hit_ratio_at_k, ndcg_at_k, recall_at_k
from .model import recommend_topk, train

ATTACK_KINDS = ("none", "random", "bandwagon", "clear")
CSV_COLUMNS = ("dataset", "model", "attack", "seed", "attack_size", "alpha",
               "hr_at_k", "ndcg_at_k", "recall_at_k")


@dataclass
class AttackSpec:
    """One attack column of the experiment grid."""

    kind: str = "none"
    size: float = 0.01
    alpha: float = 1.0
    use_dispersion: bool = True
    popular_fraction: float = 0.1
    rounds: int = 5
    inner_epochs: int = 20
    outer_steps: int = 50
    step_size: float = 0.01
    user_sample: int = None
    stacked: bool = False

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind != "none" and self.size <= 0:
            raise ValueError("attack size must be positive")

    @property
    def tag(self):
        if self.kind == "none":
            return "NoneAttack"
        if self.kind == "random":
            return "RandomAttack"
        if self.kind == "bandwagon":
            return "BandwagonAttack"
        return self.to_attack_config(seed=0, k=1).tag

    def to_attack_config(self, seed, k):
        return AttackConfig(
            alpha=self.alpha,
            rounds=self.rounds,
            inner_epochs=self.inner_epochs,
            outer_steps=self.outer_steps,
            step_size=self.step_size,
            user_sample=self.user_sample,
            k=k,
            seed=seed,
            stacked=self.stacked,
            use_dispersion=self.use_dispersion,
        )


def build_profile(ds, victim_config, spec, seed, targets, k=50):
    """Materialize the malicious profile an AttackSpec asks for, or None."""
    if spec.kind == "none":
        return None
    budget = attack_budget(ds, spec.size, targets)
    if spec.kind == "random":
        return random_attack(budget, ds, seed=seed)
    if spec.kind == "bandwagon":
        return bandwagon_attack(budget, ds, spec.popular_fraction, seed=seed)
    profile, _ = clear_attack(
        ds, victim_config, spec.to_attack_config(seed=seed, k=k), budget)
    return profile


def evaluate_state(result, ds, targets, k):
    """Promotion and accuracy metrics of a trained result over genuine users."""
    lists = recommend_topk(result.state, result.graph, ds, k)
    return {
        "hr_at_k": hit_ratio_at_k(lists, targets, ds.train_mask),
        "ndcg_at_k": ndcg_at_k(lists, targets, ds.train_mask, k),
        "recall_at_k": recall_at_k(lists, ds),
    }


def run_cell(ds, victim_config, spec, seed, targets, k=50):
    """Mount one attack, retrain the victim on the poisoned data, evaluate."""
    victim = replace(victim_config, seed=seed)
    profile = build_profile(ds, victim, spec, seed, targets, k)
    result = train(ds, victim, malicious=profile)
    row = {
        "dataset": ds.tag,
        "model": victim_config.tag,
        "attack": spec.tag,
        "seed": seed,
        "attack_size": spec.size if spec.kind != "none" else 0.0,
        "alpha": spec.alpha if spec.kind == "clear" else 0.0,
    }
    row.update(evaluate_state(result, ds, targets, k))
    return row


@dataclass
class AttackReport:
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            for m in ("hr_at_k", "ndcg_at_k", "recall_at_k"):
                if not 0.0 <= row[m] <= 1.0:
                    raise ValueError(f"metric {m} outside [0, 1]: {row[m]}")

    def aggregates(self):
        """Mean-over-seeds rows, grouped in first-appearance order."""
        groups = {}
        order = []
        for row in self.rows:
            key = (row["dataset"], row["model"], row["attack"],
                   row["attack_size"], row["alpha"])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row)
        out = []
        for key in order:
            members = groups[key]
            agg = dict(zip(("dataset", "model", "attack", "attack_size", "alpha"), key))
            agg["seed"] = "mean"
            for m in ("hr_at_k", "ndcg_at_k", "recall_at_k"):
                agg[m] = sum(r[m] for r in members) / len(members)
            out.append(agg)
        return out

    def mean(self, **filters):
        """Mean HR/NDCG/Recall over rows matching the given column values."""
        rows = [r for r in self.rows if all(r[k] == v for k, v in filters.items())]
        if not rows:
            raise ValueError(f"no rows match {filters}")
        return {m: sum(r[m] for r in rows) / len(rows)
                for m in ("hr_at_k", "ndcg_at_k", "recall_at_k")}


def _cell_key(ds, victim_config, spec, seed, k, targets):
    payload = {
        "dataset": ds.fingerprint,
        "victim": asdict(victim_config),
        "spec": asdict(spec),
        "seed": seed,
        "k": k,
        "targets": [int(t) for t in targets],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _cache_read(cache_dir, key):
    path = os.path.join(cache_dir, key + ".json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    return None


def _cache_write(cache_dir, key, row):
    os.makedirs(cache_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(row, fh)
    os.replace(tmp, os.path.join(cache_dir, key + ".json"))


def run_experiment(ds, victim_configs, attack_specs, n_seeds=10, base_seed=0,
                   k=50, n_targets=10, cache_dir=None, workers=None):
    """Grid of victims x attacks x seeds; per-seed rows plus cached resumption.

    Target items are drawn once per seed and shared by every victim and attack
    in that seed so uplifts are comparable. Failed cells are recorded under
    errors and the grid continues.
    """
    if not victim_configs or not attack_specs or n_seeds < 1:
        raise ValueError("experiment grid is empty")
    seeds = [base_seed + s for s in range(n_seeds)]
    targets_by_seed = {s: select_target_items(ds, n=n_targets, seed=s) for s in seeds}

    cells = []
    for victim in victim_configs:
        for spec in attack_specs:
            for seed in seeds:
                cells.append((victim, spec, seed))

    rows = [None] * len(cells)
    errors = []
    pending = []
    for idx, (victim, spec, seed) in enumerate(cells):
        key = None
        if cache_dir is not None:
            key = _cell_key(ds, victim, spec, seed, k, targets_by_seed[seed])
            cached = _cache_read(cache_dir, key)
            if cached is not None:
                rows[idx] = cached
                continue
        pending.append((idx, key, victim, spec, seed))

    def record(idx, key, outcome, err):
        if err is not None:
            victim, spec, seed = cells[idx]
            errors.append({"dataset": ds.tag, "model": victim.tag, "attack": spec.tag,
                           "seed": seed, "error": str(err)})
            return
        rows[idx] = outcome
        if cache_dir is not None:
            _cache_write(cache_dir, key, outcome)

    if workers and workers > 1 and pending:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_cell, ds, victim, spec, seed, targets_by_seed[seed], k)
                for _, _, victim, spec, seed in pending
            ]
            for (idx, key, *_), future in zip(pending, futures):
                try:
                    record(idx, key, future.result(), None)
                except (ValueError, ArithmeticError, RuntimeError) as err:
                    record(idx, key, None, err)
    else:
        for idx, key, victim, spec, seed in pending:
            try:
                outcome = run_cell(ds, victim, spec, seed, targets_by_seed[seed], k)
            except (ValueError, ArithmeticError, RuntimeError) as err:
                record(idx, key, None, err)
                continue
            record(idx, key, outcome, None)

    return AttackReport(rows=[r for r in rows if r is not None], errors=errors)


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, rows, columns):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(row[c]) for c in columns) + "\n")


def emit_report(report, prefix):
    """Write <prefix>.csv, <prefix>.json, and <prefix>_long.csv.

    The flat CSV carries per-seed rows followed by mean rows; the JSON nests
    rows by dataset/model/attack; the long CSV has one metric per line for
    plotting sweeps.
    """
    out_dir = os.path.dirname(os.path.abspath(prefix))
    os.makedirs(out_dir, exist_ok=True)
    aggregates = report.aggregates()
    _write_csv(prefix + ".csv", report.rows + aggregates, CSV_COLUMNS)

    nested = {}
    for row in report.rows:
        leaf = (nested.setdefault(row["dataset"], {})
                .setdefault(row["model"], {})
                .setdefault(row["attack"], {"rows": [], "aggregates": []}))
        leaf["rows"].append(row)
    for agg in aggregates:
        nested[agg["dataset"]][agg["model"]][agg["attack"]]["aggregates"].append(agg)
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump({"report": nested, "errors": report.errors}, fh, indent=2)

    long_columns = ("dataset", "model", "attack", "seed", "attack_size", "alpha",
                    "metric", "value")
    long_rows = []
    for row in report.rows:
        for m in ("hr_at_k", "ndcg_at_k", "recall_at_k"):
            flat = {c: row[c] for c in CSV_COLUMNS[:6]}
            flat["metric"] = m
            flat["value"] = row[m]
            long_rows.append(flat)
    _write_csv(prefix + "_long.csv", long_rows, long_columns)
    return [prefix + ".csv", prefix + ".json", prefix + "_long.csv"]


def load_report(path):
    """Rebuild an AttackReport from an emitted JSON file."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    rows = []
    for models in data["report"].values():
        for attacks in models.values():
            for leaf in attacks.values():
                rows.extend(leaf["rows"])
    return AttackReport(rows=rows, errors=data.get("errors", []))
