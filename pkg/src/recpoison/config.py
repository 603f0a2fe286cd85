"""Run configuration: JSON schema with defaults, strict key checking, overrides."""

import copy
import json

MODEL_DEFAULTS = {
    "encoder": "lightgcn",
    "cl": "none",
    "dim": 64,
    "layers": 2,
    "temperature": 0.2,
    "cl_weight": 0.1,
    "edge_drop": 0.1,
    "noise_scale": 0.1,
    "cross_layer": 1,
    "lr": 0.001,
    "batch_size": 1024,
    "epochs": 50,
    "init_scale": 0.1,
    "seed": 0,
}

DEFAULTS = {
    "dataset": {
        "dir": None,          # persisted dataset directory; wins when set
        "path": None,         # raw interaction file to ingest on the fly
        "split_seed": 0,
        "ratios": [0.7, 0.1, 0.2],
        "synthetic": {        # fallback when neither dir nor path is given
            "n_users": 300,
            "n_items": 500,
            "seed": 2024,
        },
    },
    "model": MODEL_DEFAULTS,
    "attack": {
        "kind": "random",     # none | random | bandwagon | clear
        "size": 0.01,
        "alpha": 1.0,
        "use_dispersion": True,
        "popular_fraction": 0.1,
        "rounds": 5,
        "inner_epochs": 20,
        "outer_steps": 50,
        "step_size": 0.01,
        "user_sample": None,
        "stacked": False,
        "n_targets": 10,
        "mode": "whitebox",   # whitebox | blackbox
        "surrogate": None,    # model section for the blackbox surrogate
    },
    "eval": {
        "k": 50,
        "seeds": 10,
        "base_seed": 0,
    },
    "sweep": {
        "axis": "attack_size",   # attack_size | alpha
        "values": [0.01, 0.02, 0.03, 0.04, 0.05],
    },
    "output": {
        "dir": "runs",
    },
}


def _merge(defaults, user, path):
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ValueError(f"unknown config key {'.'.join(path + [key])!r}")
        base = defaults[key]
        if isinstance(base, dict) and isinstance(value, dict):
            out[key] = _merge(base, value, path + [key])
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(user=None):
    """Defaults overlaid with user keys; any key outside the schema errors.

    attack.surrogate holds a nested model section and is checked against the
    model schema when present.
    """
    user = user or {}
    if not isinstance(user, dict):
        raise ValueError("config must be a JSON object")
    surrogate = None
    if isinstance(user.get("attack"), dict) and user["attack"].get("surrogate") is not None:
        attack = dict(user["attack"])
        surrogate = attack.pop("surrogate")
        if not isinstance(surrogate, dict):
            raise ValueError("attack.surrogate must be a model section")
        surrogate = _merge(MODEL_DEFAULTS, surrogate, ["attack", "surrogate"])
        user = dict(user)
        user["attack"] = attack
    resolved = _merge(DEFAULTS, user, [])
    if surrogate is not None:
        resolved["attack"]["surrogate"] = surrogate
    return resolved


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return resolve_config(json.load(fh))


def apply_overrides(user, assignments):
    """Overlay dotted key=value strings onto the raw (pre-resolve) config dict.

    Values parse as JSON, falling back to raw strings; unknown keys are caught
    by resolve_config afterwards.
    """
    user = copy.deepcopy(user or {})
    for raw in assignments or []:
        if "=" not in raw:
            raise ValueError(f"override {raw!r} is not of the form key=value")
        dotted, text = raw.split("=", 1)
        keys = dotted.split(".")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = user
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"config key {dotted!r} descends into a scalar")
        node[keys[-1]] = value
    return user


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
