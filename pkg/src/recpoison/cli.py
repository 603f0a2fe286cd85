"""Command-line front end: ingest, train, attack, eval, sweep, spectra, report.

Every command resolves a JSON config against the documented schema, writes the
fully-resolved copy (effective_config.json) next to its outputs, and keeps
timestamps out of every artifact except the run.log sidecar. Outputs land
under the config's output.dir, rebased onto $RECPOISON_OUTPUT when that is
set.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .attack import AttackConfig, blackbox_transfer, clear_attack
from .config import apply_overrides, load_config, resolve_config, save_config
from .data import (
    attack_budget,
    load_dataset,
    load_interactions,
    save_dataset,
    select_target_items,
    split_dataset,
)
from .errors import NumericError
from .experiment import (
    AttackSpec,
    build_profile,
    emit_report,
    load_report,
    run_experiment,
)
from .model import ModelConfig, load_checkpoint, save_checkpoint, train
from .spectral import singular_values, smoothness_compare
from .synthetic import make_synthetic

SPEC_KEYS = ("kind", "size", "alpha", "use_dispersion", "popular_fraction",
             "rounds", "inner_epochs", "outer_steps", "step_size",
             "user_sample", "stacked")


def _run_config(args):
    raw = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    raw = apply_overrides(raw, getattr(args, "set", None))
    return resolve_config(raw)


def _output_dir(cfg, subdir):
    out = cfg["output"]["dir"]
    root = os.environ.get("RECPOISON_OUTPUT")
    if root:
        out = os.path.join(root, out)
    out = os.path.join(out, subdir)
    os.makedirs(out, exist_ok=True)
    return out


def _start(cfg, subdir):
    out = _output_dir(cfg, subdir)
    save_config(cfg, os.path.join(out, "effective_config.json"))
    return out


def _log(out, message):
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(os.path.join(out, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"[{stamp}] {message}\n")


def _load_ds(cfg):
    section = cfg["dataset"]
    if section["dir"]:
        return load_dataset(section["dir"])
    if section["path"]:
        ds = load_interactions(section["path"])
    else:
        syn = section["synthetic"]
        ds = make_synthetic(n_users=syn["n_users"], n_items=syn["n_items"],
                            seed=syn["seed"])
    return split_dataset(ds, ratios=tuple(section["ratios"]),
                         seed=section["split_seed"])


def _model_config(section):
    return ModelConfig(**section)


def _attack_spec(section):
    return AttackSpec(**{k: section[k] for k in SPEC_KEYS})


def _stats_table(ds):
    density = ds.n_interactions / (ds.n_users * ds.n_items)
    lines = [
        f"{'dataset':<28}{'users':>8}{'items':>8}{'interactions':>14}{'density':>10}",
        f"{ds.tag:<28}{ds.n_users:>8}{ds.n_items:>8}{ds.n_interactions:>14}"
        f"{density:>10.4f}",
        f"splits: train={len(ds.train)} valid={len(ds.valid)} test={len(ds.test)}",
    ]
    return "\n".join(lines)


def cmd_ingest(args):
    ds = load_interactions(args.raw, delimiter=args.delimiter)
    ds = split_dataset(ds, seed=args.split_seed)
    save_dataset(ds, args.out)
    print(_stats_table(ds))
    print(f"dataset written to {args.out}")
    return 0


def cmd_train(args):
    cfg = _run_config(args)
    out = _start(cfg, "train")
    ds = _load_ds(cfg)
    mc = _model_config(cfg["model"])
    payload = None
    if args.resume is not None:
        path = args.resume or os.path.join(out, "checkpoint.npz")
        payload = load_checkpoint(path)
        mc = replace(payload["config"], epochs=cfg["model"]["epochs"])
        _log(out, f"resuming from {path} at epoch {payload['epoch']}")
    result = train(ds, mc, checkpoint=payload)
    ckpt = os.path.join(out, "checkpoint.npz")
    save_checkpoint(result, ds.tag, ckpt)
    with open(os.path.join(out, "loss_curve.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,bpr,cl\n")
        for row in result.history:
            fh.write(f"{row['epoch']},{row['bpr']!r},{row['cl']!r}\n")
    _log(out, f"trained {mc.tag} for {mc.epochs} epochs on {ds.tag}")
    print(f"checkpoint written to {ckpt} (model tag: {mc.tag})")
    return 0


def cmd_attack(args):
    cfg = _run_config(args)
    out = _start(cfg, "attack")
    ds = _load_ds(cfg)
    section = cfg["attack"]
    if section["kind"] == "none":
        raise ValueError("attack.kind 'none' produces no profile; use eval")
    spec = _attack_spec(section)
    seed = cfg["eval"]["base_seed"]
    targets = select_target_items(ds, n=section["n_targets"], seed=seed)
    k = cfg["eval"]["k"]
    trace = []
    if section["kind"] == "clear" and section["mode"] == "blackbox":
        if section["surrogate"] is None:
            raise ValueError("blackbox mode needs attack.surrogate")
        surrogate = _model_config(section["surrogate"])
        victim = _model_config(cfg["model"])
        budget = attack_budget(ds, spec.size, targets)
        entry = blackbox_transfer(
            ds, replace(surrogate, seed=seed), replace(victim, seed=seed),
            spec.to_attack_config(seed=seed, k=k), budget)
        profile, trace = entry.pop("profile"), entry.pop("trace")
        with open(os.path.join(out, "transfer.json"), "w", encoding="utf-8") as fh:
            json.dump(entry, fh, indent=2)
    elif section["kind"] == "clear":
        victim = _model_config(cfg["model"])
        budget = attack_budget(ds, spec.size, targets)
        profile, trace = clear_attack(
            ds, replace(victim, seed=seed), spec.to_attack_config(seed=seed, k=k),
            budget)
    else:
        profile = build_profile(ds, _model_config(cfg["model"]), spec, seed,
                                targets, k)
    with open(os.path.join(out, "profile.json"), "w", encoding="utf-8") as fh:
        json.dump(profile.to_json(), fh, indent=2)
    if trace:
        with open(os.path.join(out, "trace.csv"), "w", encoding="utf-8") as fh:
            fh.write("round,dispersion,rank,hit_ratio,error\n")
            for row in trace:
                fh.write(f"{row['round']},{row.get('dispersion', '')!s},"
                         f"{row.get('rank', '')!s},{row.get('hit_ratio', '')!s},"
                         f"{row.get('error', '')}\n")
    _log(out, f"attack {spec.tag} profile with {profile.n_users} users")
    print(f"profile written to {os.path.join(out, 'profile.json')} "
          f"(attack tag: {spec.tag})")
    return 0


def _aggregate_table(report):
    rows = report.aggregates()
    header = (f"{'dataset':<26}{'model':<20}{'attack':<18}{'size':>6}{'alpha':>7}"
              f"{'HR@K':>9}{'NDCG@K':>9}{'Recall':>9}")
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['dataset']:<26}{r['model']:<20}{r['attack']:<18}"
            f"{r['attack_size']:>6.2f}{r['alpha']:>7.2f}"
            f"{r['hr_at_k']:>9.4f}{r['ndcg_at_k']:>9.4f}{r['recall_at_k']:>9.4f}")
    return "\n".join(lines)


def _run_grid(args, specs, subdir):
    cfg = _run_config(args)
    out = _start(cfg, subdir)
    ds = _load_ds(cfg)
    victims = [_model_config(cfg["model"])]
    report = run_experiment(
        ds,
        victims,
        specs(cfg) if callable(specs) else specs,
        n_seeds=cfg["eval"]["seeds"],
        base_seed=cfg["eval"]["base_seed"],
        k=cfg["eval"]["k"],
        n_targets=cfg["attack"]["n_targets"],
        cache_dir=os.path.join(out, "cache"),
        workers=args.workers,
    )
    files = emit_report(report, os.path.join(out, "report"))
    _log(out, f"grid finished: {len(report.rows)} rows, {len(report.errors)} errors")
    print(_aggregate_table(report))
    for err in report.errors:
        print(f"failed cell: {err}", file=sys.stderr)
    print(f"report written to {files[0]}")
    return 0


def cmd_eval(args):
    return _run_grid(args, lambda cfg: [_attack_spec(cfg["attack"])], "eval")


def cmd_sweep(args):
    def specs(cfg):
        base = _attack_spec(cfg["attack"])
        axis = cfg["sweep"]["axis"]
        values = cfg["sweep"]["values"]
        if axis == "attack_size":
            return [replace(base, size=v) for v in values]
        if axis == "alpha":
            return [replace(base, alpha=v) for v in values]
        raise ValueError(f"unknown sweep axis {axis!r}")

    return _run_grid(args, specs, "sweep")


def cmd_spectra(args):
    cfg = _run_config(args)
    out = _start(cfg, "spectra")
    reports = []
    for idx, path in enumerate(args.checkpoints):
        payload = load_checkpoint(path)
        z = np.vstack([payload["final_user_emb"], payload["final_item_emb"]])
        tag = payload["config"].tag
        report = singular_values(z, tag=tag)
        stem = os.path.splitext(os.path.basename(path))[0]
        if len(args.checkpoints) > 1:
            # checkpoints from different runs usually share a basename
            stem = f"{idx + 1:02d}_{stem}"
        base = os.path.join(out, stem)
        with open(base + "_spectrum.csv", "w", encoding="utf-8") as fh:
            fh.write("rank,singular_value\n")
            for rank, value in report.rows():
                fh.write(f"{rank},{value!r}\n")
        ratio_mean, ratio_min = report.smoothness
        with open(base + "_summary.json", "w", encoding="utf-8") as fh:
            json.dump({"tag": tag, "sigma_max": float(report.values[0]),
                       "sigma_max_over_mean": ratio_mean,
                       "sigma_max_over_min_nonzero": ratio_min}, fh, indent=2)
        reports.append((tag, z))
        print(f"{tag}: sigma_max/mean = {ratio_mean:.4f}")
    if len(reports) == 2:
        cmp = smoothness_compare(reports[0][1], reports[1][1],
                                 tag_a=reports[0][0], tag_b=reports[1][0])
        with open(os.path.join(out, "comparison.json"), "w", encoding="utf-8") as fh:
            json.dump({"a": cmp.tag_a, "b": cmp.tag_b, "stat_a": cmp.stat_a,
                       "stat_b": cmp.stat_b, "sharper": cmp.sharper}, fh, indent=2)
        print(f"sharper spectrum: {cmp.sharper}")
    return 0


def cmd_report(args):
    report = load_report(args.report)
    print(_aggregate_table(report))
    if args.emit:
        files = emit_report(report, args.emit)
        print(f"report re-emitted to {files[0]}")
    return 0


def _add_config_args(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key (dotted path, JSON value)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="recpoison",
        description="Train recommenders, mount poisoning attacks, measure promotion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load raw interactions, split, persist")
    p.add_argument("raw", help="interaction file (one 'user item' per line)")
    p.add_argument("out", help="output dataset directory")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--delimiter", default="auto")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a recommender, write a checkpoint")
    _add_config_args(p)
    p.add_argument("--resume", nargs="?", const="", default=None,
                   help="continue from a checkpoint (default: the output one)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="construct a malicious profile")
    _add_config_args(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="victims x attack x seeds grid")
    _add_config_args(p)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sweep attack_size or alpha")
    _add_config_args(p)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectra", help="singular-value reports for checkpoints")
    _add_config_args(p)
    p.add_argument("checkpoints", nargs="+", help="checkpoint .npz paths")
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("report", help="print/re-emit a saved report")
    p.add_argument("report", help="report JSON path")
    p.add_argument("--emit", help="prefix to re-emit CSV/JSON files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
