"""Instance JSON, LP solution export, and CSV emission."""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .appendix_g import AppendixGConfig, generate_appendix_g
from .core import ConstraintTable, GangSpec, InstanceError, WcgInstance

FORMAT = "wcg-v1"
BUILTINS = {"appendix-g": generate_appendix_g}

SWEEP_COLUMNS = [
    "h", "policy", "reps", "mean_reward", "ci", "subopt", "p_hat", "median_dev",
    "mean_dev", "q90_dev", "median_balance", "max_adapted",
]


def builtin_instance(name: str, overrides: dict | None = None) -> WcgInstance:
    if name not in BUILTINS:
        raise InstanceError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    cfg = AppendixGConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in (overrides or {}).items()})
    return BUILTINS[name](cfg)


def instance_to_dict(instance: WcgInstance) -> dict:
    return {
        "format": FORMAT,
        "name": instance.name,
        "gangs": [
            {
                "states": g.num_states,
                "actions": g.num_actions,
                "transitions": g.transitions.tolist(),
                "rewards": g.rewards.tolist(),
            }
            for g in instance.gangs
        ],
        "constraints": instance.constraints.to_nested(),
        "horizon": instance.horizon,
        "base_pops": instance.base_pops.tolist(),
        "init_dist": [y.tolist() for y in instance.init_dist],
    }


def instance_from_dict(data: dict) -> WcgInstance:
    if data.get("format") != FORMAT:
        raise InstanceError(f"unsupported instance format {data.get('format')!r}, expected {FORMAT!r}")
    if "builtin" in data:
        return builtin_instance(data["builtin"], data.get("config"))
    try:
        gangs = []
        for k, g in enumerate(data["gangs"]):
            P = np.array(g["transitions"], dtype=float)
            r = np.array(g["rewards"], dtype=float)
            if P.ndim != 3 or P.shape[0] != g["actions"] or P.shape[1:] != (g["states"], g["states"]):
                raise InstanceError(f"gang {k}: transitions must be [actions][states][states]")
            if r.shape != (g["states"], g["actions"]):
                raise InstanceError(f"gang {k}: rewards must be [states][actions]")
            gangs.append(GangSpec(P, r))
        cons = data.get("constraints", [])
        table = ConstraintTable.from_nested(cons, gangs) if cons else ConstraintTable.empty(gangs)
        return WcgInstance(
            tuple(gangs),
            table,
            int(data["horizon"]),
            np.array(data.get("base_pops", [1] * len(gangs))),
            tuple(np.array(y, dtype=float) for y in data["init_dist"]),
            name=data.get("name", ""),
        )
    except KeyError as exc:
        raise InstanceError(f"instance is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from None


def load_instance(path) -> WcgInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: invalid JSON ({exc})") from None
    return instance_from_dict(data)


def save_instance(instance: WcgInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance)))


def solution_to_dict(solution) -> dict:
    return {
        "objective": solution.objective,
        "status": solution.status,
        "x": solution.slices().tolist(),
        "residuals": dict(solution.residuals, dual_gap=solution.dual_gap),
    }


def alpha_rows(alpha, instance):
    idx = instance.index
    for t, row in enumerate(alpha.alpha):
        for j, v in enumerate(row):
            i, s, a = idx.unflat(j)
            yield (t, i, s, a, repr(float(v)))


def write_csv(path_or_file, header, rows) -> None:
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        write_csv(fh, header, rows)


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_rows(rows) -> list:
    return [[_fmt(getattr(r, c)) for c in SWEEP_COLUMNS] for r in rows]


def sweep_to_csv(rows) -> str:
    buf = _io.StringIO()
    write_csv(buf, SWEEP_COLUMNS, sweep_rows(rows))
    return buf.getvalue()


def read_sweep_csv(text: str) -> list:
    """Parse sweep CSV text into dicts with typed values (NA -> None)."""
    out = []
    for rec in csv.DictReader(_io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k == "policy":
                row[k] = v
            elif v == "NA":
                row[k] = None
            elif k in ("h", "reps", "max_adapted"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        out.append(row)
    return out


def trajectory_rows(episodes):
    """(rep, t, gsa_flat, count) for the nonzero decision counts of each episode."""
    for rep, ep in enumerate(episodes):
        for t, row in enumerate(ep.counts):
            for j in np.flatnonzero(row):
                yield (rep, t, int(j), int(row[j]))
