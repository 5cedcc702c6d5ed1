"""Command-line front end: ``sfdm <subcommand> [--config PATH] [--set key=value ...]``.

A config is a JSON object with an optional ``params`` block (model
parameters) and one optional block named after the subcommand. ``--set``
and ``SFDM_<KEY>`` environment variables override single keys; a bare key
goes to ``params`` if it names a model parameter and to the subcommand block
otherwise, and ``block.key`` addresses a block explicitly. Every run writes
its CSV outputs and the resolved config into ``--out`` and prints a one-line
JSON summary.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 validity failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields as dc_fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import equilibria as eq
from . import first_passage as fp
from . import fokker_planck as fpk
from . import monte_carlo as mc
from . import reduction as red
from .errors import PreconditionError, SFDMError
from .model import ModelParams

logger = logging.getLogger("sfdm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVALID = 0, 2, 3, 4
ENV_PREFIX = "SFDM_"
PARAM_KEYS = {f.name for f in dc_fields(ModelParams)}

DEFAULTS = {
    "equilibria": {"grid_resolution": 40},
    "bifurcation": {"w_range": [0.5, 3.5], "steps": 61, "delta_lambdas": [0.0, 1e-4, 1e-3],
                    "grid_resolution": 40},
    "manifold": {"w_plus_values": None, "n_points": 2001, "y_m": None},
    "potential": {"w_plus_values": None, "delta_lambda_values": None, "n_points": 2001, "y_m": None},
    "stationary": {"n_points": 2001, "y_m": None},
    "evolve1d": {"n_points": 2001, "dt": 0.01, "t_end": 200.0, "sigma": 0.3, "snapshots": None},
    "evolve2d": {"n": 256, "dt": 0.1, "t_end": 200.0, "sigma": 0.3, "n_points": 2001, "dt_1d": 0.01,
                 "subsample": 16, "delta_lambda_values": None, "dump": False},
    "behavior": {"w_plus_values": None, "delta_lambda_values": None, "n_points": 2001},
    "simulate": {"model": "2d", "dt": 0.01, "t_max": 5000.0, "n_trials": 1000, "threshold": None,
                 "initial_state": None, "master_seed": 0, "n_points": 2001, "per_trial": False},
}


class ConfigError(Exception):
    pass


class ValidityFailure(Exception):
    pass


# ---------------------------------------------------------------- config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_document(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("sfdm") / "configs" / (path if path.endswith(".json") else path + ".json")
        if bundled.is_file():
            text = bundled.read_text()
        else:
            raise ConfigError(f"config file not found: {path}")
    else:
        text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _apply(doc: dict, command: str, key: str, value):
    if "." in key:
        block, key = key.split(".", 1)
    else:
        block = "params" if key in PARAM_KEYS else command
    doc.setdefault(block, {})[key] = value


def resolve_config(command: str, config_path=None, overrides=(), environ=None, seed=None) -> dict:
    """Merge defaults, config file, environment and ``--set`` overrides; validate."""
    doc = _load_document(config_path) if config_path else {}
    unknown = set(doc) - {"params", command}
    if unknown:
        raise ConfigError(f"unknown config blocks for '{command}': {', '.join(sorted(unknown))}")
    doc = {"params": dict(doc.get("params", {})), command: dict(doc.get(command, {}))}
    environ = os.environ if environ is None else environ
    for name, value in sorted(environ.items()):
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX):
            _apply(doc, command, name[len(ENV_PREFIX):].lower().replace("__", "."), _parse_value(value))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _apply(doc, command, k.strip(), _parse_value(v.strip()))
    if seed is not None:
        doc[command]["master_seed"] = int(seed)
    extra = set(doc) - {"params", command}
    if extra:
        raise ConfigError(f"unknown config blocks for '{command}': {', '.join(sorted(extra))}")
    block = dict(DEFAULTS[command])
    bad = set(doc[command]) - set(block)
    if bad:
        raise ConfigError(f"unknown keys in '{command}': {', '.join(sorted(bad))}")
    block.update(doc[command])
    try:
        params = ModelParams.from_dict(doc["params"])
    except (PreconditionError, TypeError) as e:
        raise ConfigError(str(e)) from e
    return {"params": params.to_dict(), command: block}


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: Path, data) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def binary_dump(array: np.ndarray, meta: dict) -> bytes:
    """One JSON header line followed by the raw little-endian float64 data."""
    a = np.ascontiguousarray(array, dtype="<f8")
    header = dict(meta, dtype="<f8", shape=list(a.shape), order="C")
    return (json.dumps(header, sort_keys=True) + "\n").encode() + a.tobytes()


def read_binary_dump(data: bytes):
    head, _, body = data.partition(b"\n")
    meta = json.loads(head)
    return np.frombuffer(body, dtype=meta["dtype"]).reshape(meta["shape"]), meta


# ---------------------------------------------------------------- commands


def _values(block, key, default):
    v = block.get(key)
    if v is None:
        return [default]
    return [float(x) for x in (v if isinstance(v, list) else [v])]


def _reduce(params, block, require_valid=True):
    r = red.reduce(params, n_points=int(block.get("n_points", red.DEFAULT_POINTS)), y_m=block.get("y_m"))
    if require_valid and not r.curve.valid:
        raise ValidityFailure(_validity_message(params, r.curve))
    return r


def _validity_message(params, curve):
    v = curve.violation
    where = f" at y={v[0]:.6g} (nu1={v[1]:.6g}, nu2={v[2]:.6g})" if v else ""
    return f"slow manifold leaves [0, {params.nu_max:g}]^2 between the decision states{where} (w_plus={params.w_plus:g})"


def cmd_equilibria(params, block):
    eqs = eq.find_equilibria(params, int(block["grid_resolution"]))
    rows = [(e.location.nu1, e.location.nu2, e.eigenvalues[0].real, e.eigenvalues[0].imag,
             e.eigenvalues[1].real, e.eigenvalues[1].imag, e.stability, e.role) for e in eqs]
    out = {"equilibria.csv": csv_text(
        ["nu1", "nu2", "mu1_re", "mu1_im", "mu2_re", "mu2_im", "stability", "role"], rows)}
    return out, {"count": len(eqs)}


def cmd_bifurcation(params, block):
    rows, fold_rows = [], []
    for dl in block["delta_lambdas"]:
        d = eq.bifurcation_scan(params.replace(delta_lambda=float(dl)), tuple(block["w_range"]),
                                int(block["steps"]), int(block["grid_resolution"]))
        rows += [(float(dl),) + r for r in d.rows()]
        fold_rows += [(float(dl), w, a, b) for w, (a, b) in zip(d.folds, d.fold_counts)]
    out = {
        "branches.csv": csv_text(["delta_lambda", "w_plus", "branch", "nu1", "nu2", "re_mu1", "re_mu2",
                                  "stability"], rows),
        "folds.csv": csv_text(["delta_lambda", "w_fold", "count_before", "count_after"], fold_rows),
    }
    return out, {"folds": [[r[0], r[1]] for r in fold_rows]}


def cmd_manifold(params, block):
    rows, valid = [], {}
    for w in _values(block, "w_plus_values", params.w_plus):
        p = params.replace(w_plus=w)
        r = _reduce(p, block, require_valid=False)
        c = r.curve
        valid[format(w, ".17g")] = bool(c.valid)
        rows += [(w, y, x, n1, n2, res) for y, x, (n1, n2), res in zip(c.y, c.x_star, c.nu, c.residual)]
    out = {"manifold.csv": csv_text(["w_plus", "y", "x_star", "nu1", "nu2", "residual"], rows)}
    status = EXIT_OK if all(valid.values()) else EXIT_INVALID
    return out, {"valid": valid}, status


def cmd_potential(params, block):
    rows, regimes = [], {}
    for w in _values(block, "w_plus_values", params.w_plus):
        for dl in _values(block, "delta_lambda_values", params.delta_lambda):
            p = params.replace(w_plus=w, delta_lambda=dl)
            r = _reduce(p, block)
            pot = r.potential
            c = r.curve.center_index
            curv = pot.G[c - 1] - 2 * pot.G[c] + pot.G[c + 1]
            regimes[f"{w:.17g},{dl:.17g}"] = "minimum" if curv > 0 else "maximum"
            rows += [(w, dl, y, G, g) for y, G, g in zip(pot.y, pot.G, pot.g)]
    out = {"potential.csv": csv_text(["w_plus", "delta_lambda", "y", "G", "g"], rows)}
    return out, {"origin": regimes}


def cmd_stationary(params, block):
    r = _reduce(params, block)
    q = fpk.stationary_density_1d(r.potential)
    out = {"stationary.csv": csv_text(["y", "q"], zip(q.y, q.q))}
    return out, {"mass": q.mass, "beta_y": r.frame.beta_y}


def cmd_evolve1d(params, block):
    r = _reduce(params, block)
    pot = r.potential
    q0 = fpk.gaussian_1d(pot.y, 0.0, float(block["sigma"]) * float(np.hypot(*r.frame.P_inv[1])))
    dt, t_end = float(block["dt"]), float(block["t_end"])
    snaps = sorted(set(float(t) for t in (block["snapshots"] or [t_end])))
    rows, t_prev, q = [], 0.0, q0
    for t in snaps:
        q = fpk.evolve_1d(q, pot, dt, t - t_prev)
        q = fpk.Density1D(q.y, q.q, t=t)
        t_prev = t
        rows += [(t, y, v) for y, v in zip(q.y, q.q)]
    out = {"density1d.csv": csv_text(["t", "y", "q"], rows)}
    return out, {"mass": q.mass, "t_end": t_prev}


def cmd_evolve2d(params, block):
    rows, l1 = [], {}
    dump = None
    for dl in _values(block, "delta_lambda_values", params.delta_lambda):
        p = params.replace(delta_lambda=dl)
        r = _reduce(p, block)
        cmp = fpk.compare_marginals(p, float(block["t_end"]), float(block["sigma"]), int(block["n"]),
                                    float(block["dt"]), dt_1d=float(block["dt_1d"]),
                                    subsample=int(block["subsample"]), reduction=r)
        l1[format(dl, ".17g")] = {"l1": cmp.l1, "outside_mass": cmp.outside_mass}
        rows += [(dl, y, a, b) for y, a, b in zip(cmp.q_1d.y, cmp.q_2d.q, cmp.q_1d.q)]
    out = {"marginals.csv": csv_text(["delta_lambda", "y", "q_2d", "q_1d"], rows)}
    if block["dump"]:
        # final 2D density of the last sweep value
        p2 = fpk.evolve_2d(fpk.gaussian_2d(p, r.frame.s0, float(block["sigma"]), int(block["n"])), p,
                           float(block["dt"]), float(block["t_end"]))
        out["density2d.bin"] = binary_dump(p2.p, {"nu_max": p.nu_max, "t": p2.t, "delta_lambda": dl})
    return out, {"l1": l1}


def cmd_behavior(params, block):
    rows = []
    for w in _values(block, "w_plus_values", params.w_plus):
        for dl in _values(block, "delta_lambda_values", params.delta_lambda):
            p = params.replace(w_plus=w, delta_lambda=dl)
            r = _reduce(p, block)
            b = fp.behavior(r.potential, r.curve, r.frame, r.correct_role)
            rows.append((w, dl, p.beta, b.performance, b.reaction_time, b.regime,
                         b.barriers.a_minus, b.barriers.a_plus, b.performance_mass, b.performance_split))
    out = {"behavior.csv": csv_text(["w_plus", "delta_lambda", "beta", "P_a", "RT_ms", "regime", "a_minus",
                                     "a_plus", "P_a_mass", "P_a_split"], rows)}
    return out, {"rows": len(rows)}


def cmd_simulate(params, block):
    model = block["model"]
    cfg_kw = dict(dt=float(block["dt"]), t_max=float(block["t_max"]), n_trials=int(block["n_trials"]),
                  master_seed=int(block["master_seed"]))
    if model == "2d":
        cfg = mc.TrialConfig(decision_threshold=block["threshold"], initial_state=block["initial_state"], **cfg_kw)
        correct = "pool-1" if params.lambda1 >= params.lambda2 else "pool-2"
        summary, outcomes = mc.ensemble(lambda c, idx: mc.run_2d(params, c, idx), cfg, correct=correct)
    elif model == "1d":
        r = _reduce(params, block)
        thr = block["threshold"]
        if thr is None:
            bars = fp.find_barriers(r.potential)
            thr = list(bars.well_minima if bars.regime != "double-barrier" else (bars.a_minus, bars.a_plus))
        y0 = 0.0 if block["initial_state"] is None else block["initial_state"]
        cfg = mc.TrialConfig(decision_threshold=tuple(thr), initial_state=y0, **cfg_kw)
        sign = 1 if r.curve.decision_y.get(r.correct_role, 1.0) > 0 else -1
        correct = "upper" if sign > 0 else "lower"
        summary, outcomes = mc.ensemble(
            lambda c, idx: mc.run_1d(r.potential, r.frame.beta_y, c, idx), cfg, correct=correct)
    else:
        raise ConfigError(f"simulate.model must be '2d' or '1d', got {model!r}")
    info = summary.to_dict()
    out = {"summary.json": json.dumps(info, sort_keys=True, indent=1) + "\n"}
    if block["per_trial"]:
        out["trials.csv"] = csv_text(["trial", "decision", "decision_time"],
                                     [(o.trial, o.decision, o.decision_time) for o in outcomes])
    return out, {k: info[k] for k in ("p_correct", "p_correct_se", "rt_mean", "rt_se", "undecided_fraction")}


COMMANDS = {
    "equilibria": (cmd_equilibria, "equilibria with eigenvalues, stability and roles"),
    "bifurcation": (cmd_bifurcation, "equilibrium branches and folds over a w_plus sweep"),
    "manifold": (cmd_manifold, "sampled slow manifold x*(y) and its image in the rate plane"),
    "potential": (cmd_potential, "effective potential G(y) and reduced drift"),
    "stationary": (cmd_stationary, "closed-form stationary density of the reduced model"),
    "evolve1d": (cmd_evolve1d, "reduced Fokker-Planck evolution from a Gaussian start"),
    "evolve2d": (cmd_evolve2d, "full Fokker-Planck evolution and its y-marginal against 1D"),
    "behavior": (cmd_behavior, "performance and reaction time over w_plus / delta_lambda sweeps"),
    "simulate": (cmd_simulate, "Monte Carlo trial ensembles of the 2D or reduced SDE"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfdm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="JSON config file or bundled config name")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        s.add_argument("--out", default=None, help="output directory (default: sfdm_out/<command>)")
        s.add_argument("--seed", type=int, default=None, help="master seed for simulate")
        s.add_argument("--quiet", action="store_true", help="only log errors")
    return parser


def _summary(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, default=_fmt))


def run(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    command = args.command
    try:
        if args.seed is not None and command != "simulate":
            raise ConfigError("--seed only applies to simulate")
        config = resolve_config(command, args.config, args.overrides, environ, args.seed)
    except ConfigError as e:
        _summary({"command": command, "status": "config-error", "error": str(e)})
        return EXIT_CONFIG
    out_dir = Path(args.out or Path("sfdm_out") / command)
    params = ModelParams.from_dict(config["params"])
    func = COMMANDS[command][0]
    try:
        result = func(params, config[command])
    except ConfigError as e:
        _summary({"command": command, "status": "config-error", "error": str(e)})
        return EXIT_CONFIG
    except ValidityFailure as e:
        _summary({"command": command, "status": "invalid", "error": str(e)})
        return EXIT_INVALID
    except PreconditionError as e:
        _summary({"command": command, "status": "config-error", "error": f"{type(e).__name__}: {e}"})
        return EXIT_CONFIG
    except SFDMError as e:
        _summary({"command": command, "status": "numerical-failure", "error": f"{type(e).__name__}: {e}"})
        return EXIT_NUMERIC
    outputs, info = result[0], result[1]
    status = result[2] if len(result) > 2 else EXIT_OK
    for name, data in outputs.items():
        write_atomic(out_dir / name, data)
    write_atomic(out_dir / "config.json", json.dumps(config, sort_keys=True, indent=1) + "\n")
    _summary({"command": command, "status": "ok" if status == EXIT_OK else "invalid", "out": str(out_dir),
              "files": sorted(outputs) + ["config.json"], **info})
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
