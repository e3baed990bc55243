"""TrialLog files: one CSV per trial plus a key = value metadata sidecar.

The CSV header names every column as ``name [unit]``. One row per control
tick; the observation columns (raw and noisy marker positions) are filled on
observation ticks and left empty otherwise. Values are written with
``%.12g``, so files are byte-identical for identical logs. Wall-clock solve
times are left out unless asked for, since they differ between runs.
"""
import csv
import io
import os

import numpy as np

from .errors import InvalidInputError
from .sim import TrialLog

_AX2, _AX3 = ("x", "y"), ("x", "y", "z")


def state_names():
    """Names of the 48 state entries."""
    names = []
    for base in ("p", "sup", "hcom"):
        names += [f"{base}.{a}" for a in _AX2] + [f"d{base}.{a}" for a in _AX2]
    for j in (1, 2):
        pts = ("shoulder", "elbow", "wrist")
        names += [f"arm{j}.{p}.{a}" for p in pts for a in _AX3]
        names += [f"arm{j}.d{p}.{a}" for p in pts for a in _AX3]
    return names


def _state_units():
    return ["m/s" if n.split(".")[-2].startswith("d") else "m" for n in state_names()]


def observation_names():
    names = [f"p.{a}" for a in _AX2] + [f"sup.{a}" for a in _AX2] + [f"hcom.{a}" for a in _AX2]
    for j in (1, 2):
        names += [f"arm{j}.{p}.{a}" for p in ("shoulder", "elbow", "wrist") for a in _AX3]
    return names


def task_names():
    names = []
    for j in (1, 2):
        for p in ("elbow", "wrist"):
            names += [f"arm{j}.{p}.{a}" for a in _AX3] + [f"arm{j}.d{p}.{a}" for a in _AX3]
    return names


def _columns(timing):
    """(field, column index or None, header) for every CSV column."""
    cols = [("times", None, "time [s]")]
    for prefix, f in (("true", "true_state"), ("est", "est_state")):
        cols += [(f, i, f"{prefix}.{n} [{u}]")
                 for i, (n, u) in enumerate(zip(state_names(), _state_units()))]
    cols += [("p_star_dot", i, f"pstar_dot.{a} [m/s]") for i, a in enumerate(_AX2)]
    ref_units = ["m/s" if ".d" in n else "m" for n in task_names()]
    cols += [("reference", i, f"ref.{n} [{u}]")
             for i, (n, u) in enumerate(zip(task_names(), ref_units))]
    cols += [("u", i, f"u.{j + 1}.q{k + 1} [rad/s^2]")
             for i, (j, k) in enumerate((j, k) for j in range(2) for k in range(4))]
    joint = [f"arm{j + 1}.{kind}{k + 1}" for j in range(2) for kind in ("q", "dq")
             for k in range(4)]
    cols += [("joints", i, f"joint.{n} [{'rad/s' if '.dq' in n else 'rad'}]")
             for i, n in enumerate(joint)]
    if timing:
        cols.append(("solve_time", None, "solve_time [s]"))
    cols += [
        ("solve_iters", None, "solve_iters [-]"),
        ("status", None, "status [code]"),
        ("k_f", None, "k_f [-]"),
        ("q_scale", None, "q_scale [-]"),
        ("r_scale", None, "r_scale [-]"),
        ("trace_p", None, "trace_p [mixed]"),
        ("com_z", None, "com_z [m]"),
        ("cost_v", None, "cost_v [-]"),
        ("clipped", None, "clipped [count]"),
    ]
    cols += [("obs_raw", i, f"obs.raw.{n} [m]") for i, n in enumerate(observation_names())]
    cols += [("obs_noisy", i, f"obs.noisy.{n} [m]") for i, n in enumerate(observation_names())]
    return cols


def column_headers(timing=False):
    return [c[2] for c in _columns(timing)]


_INT_FIELDS = ("solve_iters", "status", "clipped")


def _fmt(v):
    return "%.12g" % v


def write_trial_csv(log, path, timing=False):
    """Write the log to ``path`` (CSV) and ``path + '.meta'``."""
    cols = _columns(timing)
    n = log.n_ticks
    obs_row = {}
    for k, t in enumerate(log.obs_times):
        i = int(round(t * log.control_rate))
        if 0 <= i < n:
            obs_row[i] = k
    buf = io.StringIO()
    buf.write(",".join(column_headers(timing)) + "\n")
    tick_cols = [c for c in cols if not c[0].startswith("obs_")]
    table = np.column_stack([
        getattr(log, f) if idx is None else getattr(log, f)[:, idx] for f, idx, _ in tick_cols
    ]).astype(float)
    n_obs = len(observation_names())
    empty = "," * (2 * n_obs)
    for i in range(n):
        line = ",".join(_fmt(v) for v in table[i])
        k = obs_row.get(i)
        if k is None:
            line += empty
        else:
            line += "," + ",".join(_fmt(v) for v in np.concatenate(
                [log.obs_raw[k], log.obs_noisy[k]]))
        buf.write(line + "\n")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    write_meta(log.metadata, str(path) + ".meta")


def write_meta(meta, path):
    with open(path, "w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"{k} = {meta[k]}\n")


def read_meta(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = _coerce(v.strip())
    return meta


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_trial_csv(path):
    """Inverse of write_trial_csv (values rounded to 12 significant digits)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = rows[0]
    timing = "solve_time [s]" in header
    cols = _columns(timing)
    if header != [c[2] for c in cols]:
        raise InvalidInputError(f"{path}: unexpected column layout")
    body = rows[1:]
    n = len(body)
    fields = {}
    obs_rows = [i for i, r in enumerate(body) if r[-1] != ""]
    for j, (f, idx, _) in enumerate(cols):
        if f.startswith("obs_"):
            vals = np.array([float(body[i][j]) for i in obs_rows])
        else:
            vals = np.array([float(r[j]) for r in body])
        if idx is None:
            fields[f] = vals
        else:
            fields.setdefault(f, []).append(vals)
    out = {}
    for f, v in fields.items():
        out[f] = np.column_stack(v) if isinstance(v, list) else v
    for f in _INT_FIELDS:
        out[f] = out[f].astype(int)
    if not timing:
        out["solve_time"] = np.zeros(n)
    out["obs_times"] = out["times"][obs_rows]
    meta_path = str(path) + ".meta"
    meta = read_meta(meta_path) if os.path.exists(meta_path) else {}
    return TrialLog(**out, metadata=meta)
