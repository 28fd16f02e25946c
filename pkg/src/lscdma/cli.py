"""Batch front end: experiment configs in, CSV/JSON results out.

Configs are JSON documents with exactly one command:

  efficiency  solve the fixed point for one system       -> branch table
  spectral    separate/joint spectral efficiencies        -> per-atom table
  sweep       efficiency/capacity versus snr_db or beta   -> branch rows
  simulate    finite-size Monte Carlo decoupling report   -> stats (+histogram)
  validate    run the acceptance criteria                 -> pass/fail lines

SNR is in dB externally and linear internally; capacities are reported in
bits per dimension, free energies in nats.  Outputs are byte-identical for
identical configs and seeds.

Exit codes: 0 ok, 1 validation criteria failed, 2 config/schema violation,
3 solver failure, 4 quadrature failure.  Errors print one JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import acceptance
from . import mc_sim as mc
from . import replica_solver as rsolve
from . import spectral as sp
from .constellation import (Constellation, DetectorSpec, SnrProfile,
                            db_to_linear, equal_power_profile, linear_to_db,
                            make_standard, two_group_profile)
from .replica_solver import SolverError, SystemSpec
from .scalar_channel import QuadratureError

_COMMANDS = ("efficiency", "spectral", "sweep", "simulate", "validate")
_STANDARD_NAMES = ("bpsk", "qpsk", "8psk", "16qam", "gaussian-real",
                   "gaussian-complex")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _parse_prior(node):
    if isinstance(node, str):
        if node not in _STANDARD_NAMES:
            raise ConfigError(f"unknown constellation name {node!r}")
        return make_standard(node)
    if isinstance(node, dict):
        return Constellation.from_json_dict(node)
    raise ConfigError("prior must be a name or a constellation object")


def _parse_profile(node):
    if not isinstance(node, dict):
        raise ConfigError("snr_profile must be an object")
    if "atoms" in node:
        return SnrProfile.from_json_dict(node)
    if "two_group" in node:
        tg = node["two_group"]
        return two_group_profile(float(tg["mean_snr_db"]), float(tg["gap_db"]))
    if "equal_snr_db" in node:
        return equal_power_profile(float(node["equal_snr_db"]))
    raise ConfigError("snr_profile needs atoms, two_group or equal_snr_db")


def _parse_detector(node, channel_kind):
    if not isinstance(node, dict) or "preset" not in node:
        raise ConfigError("detector needs a preset")
    preset = node["preset"]
    if preset == "matched-filter":
        return DetectorSpec.matched_filter()
    if preset == "lmmse":
        return DetectorSpec.lmmse(channel_kind)
    if preset == "decorrelator":
        return DetectorSpec.decorrelator(channel_kind)
    if preset == "individually-optimal":
        return DetectorSpec.individually_optimal()
    if preset == "jointly-optimal":
        return DetectorSpec.jointly_optimal()
    if preset == "custom":
        prior = _parse_prior(node["postulated_prior"])
        return DetectorSpec.custom(prior, float(node["sigma"]))
    raise ConfigError(f"unknown detector preset {preset!r}")


def _parse_system(node):
    if not isinstance(node, dict):
        raise ConfigError("spec must be an object")
    kind = node.get("channel_kind", "real")
    try:
        return SystemSpec(
            beta=float(node["beta"]),
            snr_profile=_parse_profile(node["snr_profile"]),
            actual_prior=_parse_prior(node["actual_prior"]),
            detector=_parse_detector(node["detector"], kind),
            channel_kind=kind,
        ), node
    except KeyError as exc:
        raise ConfigError(f"spec is missing {exc}") from exc


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    command = doc.get("command")
    if command not in _COMMANDS:
        raise ConfigError(f"command must be one of {_COMMANDS}")
    if ("sweep" in doc) != (command == "sweep"):
        raise ConfigError("sweep section must be present exactly for the sweep command")
    if ("mc" in doc) != (command == "simulate"):
        raise ConfigError("mc section must be present exactly for the simulate command")
    return command


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    data = buf.getvalue()
    if path:
        with open(path, "w") as f:
            f.write(data)
    else:
        sys.stdout.write(data)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path, payload):
    data = json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path:
        with open(path, "w") as f:
            f.write(data)
    else:
        sys.stdout.write(data)


def _solution_payload(sol):
    return {
        "eta": sol.eta,
        "xi": sol.xi,
        "free_energy_nats": sol.free_energy,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "dominant_index": sol.dominant_index,
        "notes": list(sol.notes),
        "branches": [
            {"eta": b.eta, "xi": b.xi, "free_energy_nats": b.free_energy,
             "dominant": int(i == sol.dominant_index)}
            for i, b in enumerate(sol.branches)
        ],
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_efficiency(doc, out, fmt):
    spec, _ = _parse_system(doc["spec"])
    sol = rsolve.solve(spec)
    if fmt == "json":
        _write_json(out, _solution_payload(sol))
        return
    rows = [
        (i, b.eta, b.xi, b.free_energy, int(i == sol.dominant_index),
         sol.residual, sol.iterations)
        for i, b in enumerate(sol.branches)
    ]
    _write_csv(out, ["branch_id", "eta", "xi", "free_energy_nats", "dominant",
                     "residual", "iterations"], rows)


def _cmd_spectral(doc, out, fmt):
    spec, _ = _parse_system(doc["spec"])
    res = sp.c_joint(spec)
    if fmt == "json":
        _write_json(out, {
            "c_sep_bits": res.c_sep, "c_joint_bits": res.c_joint,
            "joint_gain_bits": res.joint_gain,
            "per_atom_info_bits": [
                {"snr_db": linear_to_db(s), "info_bits": v}
                for s, v in res.per_atom_info
            ],
        })
        return
    rows = [
        (linear_to_db(s), v, res.c_sep, res.c_joint, res.joint_gain)
        for s, v in res.per_atom_info
    ]
    _write_csv(out, ["snr_db", "info_bits", "c_sep_bits", "c_joint_bits",
                     "joint_gain_bits"], rows)


def _scaled_profile(profile, mean_db):
    """Shift a profile so its linear mean matches mean_db, keeping shape."""
    target = db_to_linear(mean_db)
    scale = target / profile.mean_snr()
    return SnrProfile(tuple((s * scale, w) for s, w in profile.atoms))


def _point_solution(spec):
    det = spec.detector
    if det.preset == "individually-optimal":
        return rsolve.solve_io(spec)
    return rsolve.solve(spec)


def _branch_rows(spec, sol, axis_value, id_registry):
    """Rows for one sweep point; branch ids follow the nearest previous eta."""
    new_registry = []
    rows = []
    order = sorted(range(len(sol.branches)), key=lambda i: -sol.branches[i].eta)
    used = set()
    io_like = spec.detector.preset == "individually-optimal"
    if not io_like:
        cj_dom = sp.c_joint(spec).c_joint
    for i in order:
        b = sol.branches[i]
        best = None
        for bid, eta_prev in id_registry:
            if bid in used:
                continue
            if best is None or abs(b.eta - eta_prev) < abs(b.eta - best[1]):
                best = (bid, eta_prev)
        if best is not None and abs(b.eta - best[1]) <= 0.15:
            bid = best[0]
            used.add(bid)
        else:
            bid = (max([r[0] for r in id_registry] + [r[0] for r in new_registry],
                       default=-1) + 1)
        new_registry.append((bid, b.eta))
        csep = sp.c_sep(spec, b.eta)
        if io_like:
            cj = rsolve.io_joint_capacity_nats(b.eta, spec) / math.log(2.0)
        else:
            cj = cj_dom
        rows.append((axis_value, bid, b.eta, b.xi, b.free_energy,
                     int(i == sol.dominant_index), csep, cj))
    new_registry.sort()
    return rows, new_registry


def _cmd_sweep(doc, out, fmt):
    spec, _ = _parse_system(doc["spec"])
    sw = doc["sweep"]
    axis = sw.get("axis")
    if axis not in ("snr_db", "beta"):
        raise ConfigError("sweep axis must be snr_db or beta")
    points = int(sw["points"])
    if points < 2:
        raise ConfigError("sweep needs at least 2 points")
    values = np.linspace(float(sw["from"]), float(sw["to"]), points)
    registry = []
    all_rows = []
    for v in values:
        if axis == "snr_db":
            pt = replace(spec, snr_profile=_scaled_profile(spec.snr_profile, float(v)))
        else:
            if v <= 0:
                raise ConfigError("beta sweep values must be positive")
            pt = spec.with_beta(float(v))
        sol = _point_solution(pt)
        rows, registry = _branch_rows(pt, sol, float(v), registry)
        all_rows.extend(rows)
    header = [axis, "branch_id", "eta", "xi", "free_energy_nats", "dominant",
              "c_sep_bits", "c_joint_bits"]
    if fmt == "json":
        _write_json(out, {"header": header, "rows": [list(r) for r in all_rows]})
        return
    _write_csv(out, header, all_rows)


def _cmd_simulate(doc, out, fmt, seed_override, threads):
    spec, _ = _parse_system(doc["spec"])
    node = doc["mc"]
    seed = int(seed_override if seed_override is not None else node.get("seed", 0))
    cfg = mc.make_config(
        users=int(node["users"]),
        spreading=int(node["spreading"]),
        profile=spec.snr_profile,
        prior=spec.actual_prior,
        detector=spec.detector,
        chip_law=node.get("chip_law", "binary-pm1"),
        trials=int(node.get("trials", 1)),
        seed=seed,
        enumeration_cap=node.get("enumeration_cap"),
    )
    beta = cfg.users / cfg.spreading
    sol = rsolve.solve(spec.with_beta(beta))
    rep = mc.decoupling_report(cfg, sol, threads=threads)
    stats_rows = []
    for s in rep.per_symbol:
        sym = complex(s.symbol)
        stats_rows.append((
            linear_to_db(s.snr), sym.real, sym.imag, s.count, s.mean, s.var,
            s.predicted_var, s.ks, rep.ber[s.snr],
            rep.predicted_ber.get(s.snr, math.nan), rep.saturated,
            rep.eta, rep.xi,
        ))
    header = ["snr_db", "symbol_re", "symbol_im", "count", "mean", "var",
              "predicted_var", "ks_distance", "ber", "predicted_ber",
              "saturated", "eta", "xi"]
    hist_rows = []
    for s in rep.per_symbol:
        sym = complex(s.symbol)
        for k in range(len(s.hist_density)):
            hist_rows.append((linear_to_db(s.snr), sym.real, sym.imag,
                              s.hist_edges[k], s.hist_edges[k + 1],
                              s.hist_density[k]))
    hist_header = ["snr_db", "symbol_re", "symbol_im", "bin_left", "bin_right",
                   "density"]
    if fmt == "json":
        _write_json(out, {
            "eta": rep.eta, "xi": rep.xi, "saturated": rep.saturated,
            "stats": {"header": header, "rows": [list(r) for r in stats_rows]},
            "histogram": {"header": hist_header,
                          "rows": [list(map(float, r)) for r in hist_rows]},
        })
        return
    _write_csv(out, header, stats_rows)
    hist_path = None
    if out:
        hist_path = (out[:-4] + "_hist.csv") if out.endswith(".csv") else out + "_hist.csv"
    _write_csv(hist_path, hist_header, hist_rows)


def _cmd_validate(doc, out, fmt, threads):
    numbers = doc.get("criteria")
    results = acceptance.run_criteria(numbers, progress=print, threads=threads)
    payload = [
        {"criterion": r.number, "name": r.name, "passed": r.passed,
         "detail": r.detail, "elapsed_s": r.elapsed}
        for r in results
    ]
    if out:
        _write_json(out, payload)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lscdma",
        description="Large-system CDMA efficiency, capacity and simulation",
    )
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--output", default=None, help="output file (default stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--seed", type=int, default=None, help="override mc seed")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as f:
            doc = json.load(f)
        command = parse_config(doc)
        out = args.output if args.output is not None else doc.get("output")
        fmt = args.format if args.format is not None else doc.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if command == "efficiency":
            _cmd_efficiency(doc, out, fmt)
        elif command == "spectral":
            _cmd_spectral(doc, out, fmt)
        elif command == "sweep":
            _cmd_sweep(doc, out, fmt)
        elif command == "simulate":
            _cmd_simulate(doc, out, fmt, args.seed, args.threads)
        else:
            return _cmd_validate(doc, out, fmt, args.threads)
        return 0
    except (ConfigError, KeyError, json.JSONDecodeError, OSError, TypeError,
            ValueError) as exc:
        _fail(2, "config", exc)
        return 2
    except SolverError as exc:
        _fail(3, "solver", exc)
        return 3
    except QuadratureError as exc:
        _fail(4, "quadrature", exc)
        return 4


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps(
        {"error": {"code": code, "kind": kind, "message": str(exc)}}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
