"""Command-line front end.

Usage::

    hetcap [COMMAND] [key=value ...] [--config FILE] [--out DIR] [--seed N] [--threads N]

The configuration is a key=value document (whitespace or newline separated,
``#`` starts a comment).  Tokens given on the command line override the file.
Every run writes ``<command>.csv`` and ``<command>.json`` into the output
directory.  Exit status: 0 success, 1 numerical failure or failed verdict
(``verify``), 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import integrand as integrands
from .errors import InputError, NumericalError

SCHEMA_VERSION = 1
COMMANDS = ("capacity", "phi", "fhom", "chom", "claw", "mu", "perforate", "verify")


class ConfigError(Exception):
    """Carries a list of (line, key, reason) triples."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {l}: {k}: {r}" for l, k, r in self.errors))


_E_POWER = re.compile(r"^e\^?(-?\d+(?:\.\d*)?)$")


def _number(text: str) -> float:
    m = _E_POWER.match(text)
    if m:
        return math.exp(float(m.group(1)))
    if text == "e":
        return math.e
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(text):
    v = int(text)
    return v


def _floats(text):
    return [_number(t) for t in text.split(",") if t]


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _positive(v):
    if not v > 0:
        raise ValueError("must be positive")


def _at_least(n):
    def check(v):
        if v < n:
            raise ValueError(f"must be >= {n}")

    return check


def _unit_interval(v):
    if not 0 <= v <= 1:
        raise ValueError("must lie in [0, 1]")


def _eps_list(vs):
    if not vs or any(not 0 < v < 1 for v in vs):
        raise ValueError("values must lie in (0, 1)")
    if any(b >= a for a, b in zip(vs, vs[1:])):
        raise ValueError("values must be strictly decreasing")


def _radius_list(vs):
    if len(vs) < 2 or any(v <= 1 for v in vs) or any(b <= a for a, b in zip(vs, vs[1:])):
        raise ValueError("need at least two strictly increasing values > 1")


KEYS = {
    "command": (_choice(COMMANDS), None),
    "d": (_int, _at_least(2)),
    "integrand": (_choice(tuple(integrands.PRESETS)), None),
    "c": (_number, _positive),
    "low": (_number, _positive),
    "high": (_number, _positive),
    "r": (_number, _positive),
    "R": (_number, _positive),
    "z": (_floats, None),
    "schedule": (_floats, _radius_list),
    "per_log": (_number, _positive),
    "n_angular": (_int, _at_least(8)),
    "n": (_int, _at_least(8)),
    "n_directions": (_int, _at_least(8)),
    "lambda": (_number, _unit_interval),
    "eps": (_floats, _eps_list),
    "method": (_choice(("box", "polar")), None),
    "h": (_number, _positive),
    "clearance": (_number, _positive),
    "target": (_choice(("const", "linear")), None),
    "alpha": (_number, _positive),
    "M": (_int, _at_least(2)),
    "tolerance": (_number, _positive),
    "samples": (_int, _at_least(1)),
    "seed": (_int, _at_least(0)),
}

COMMON = {"command", "d", "integrand", "c", "low", "high", "seed"}
COMMAND_KEYS = {
    "capacity": ({"r", "R"}, {"z", "per_log", "n_angular"}),
    "phi": (set(), {"z", "schedule", "per_log", "n_angular"}),
    "fhom": (set(), {"n", "n_directions"}),
    "chom": (set(), {"n", "n_directions", "schedule", "per_log", "n_angular"}),
    "claw": ({"lambda", "eps"}, {"z", "method", "n_angular", "h", "clearance", "n"}),
    "mu": ({"lambda", "eps"}, {"z", "method", "n_angular", "h", "clearance", "n"}),
    "perforate": ({"lambda", "eps"}, {"target", "alpha", "M", "tolerance"}),
    "verify": (set(), {"samples"}),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    seed: int = 0
    out: str = "."
    threads: int = 1
    lines: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)


def _tokens(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for tok in line.split():
            yield lineno, tok


def parse_config(text: str, overrides=()) -> RunConfig:
    """Validate a key=value document; raises ConfigError listing every problem."""
    errors, raw, lines = [], {}, {}
    items = list(_tokens(text)) + [(0, t) for t in overrides]
    for lineno, tok in items:
        if "=" not in tok:
            errors.append((lineno, tok, "expected key=value"))
            continue
        key, value = tok.split("=", 1)
        if key not in KEYS:
            errors.append((lineno, key, "unknown key"))
            continue
        raw[key] = value
        lines[key] = lineno
    values = {}
    for key, text_value in raw.items():
        parse, check = KEYS[key]
        try:
            v = parse(text_value)
            if check is not None:
                check(v)
            values[key] = v
        except (ValueError, TypeError) as exc:
            errors.append((lines[key], key, str(exc) or "invalid value"))
    command = values.get("command")
    if command is None and "command" not in raw:
        errors.append((0, "command", "missing required key"))
    if command is not None:
        required, optional = COMMAND_KEYS[command]
        for key in sorted(required | {"d"}):
            if key not in raw:
                errors.append((0, key, "missing required key"))
        allowed = COMMON | required | optional
        for key in sorted(raw):
            if key not in allowed:
                errors.append((lines[key], key, f"not accepted by '{command}'"))
        if "r" in values and "R" in values and not values["r"] < values["R"]:
            errors.append((lines["R"], "R", "must exceed r"))
        d = values.get("d")
        if d is not None:
            if "z" in values and len(values["z"]) != d:
                errors.append((lines["z"], "z", f"needs {d} coordinates"))
            if command in ("capacity", "phi", "fhom", "chom") and d != 2:
                errors.append((lines.get("d", 0), "d", f"'{command}' is implemented for d = 2"))
            if command in ("claw", "mu") and values.get("method") == "polar" and d != 2:
                errors.append((lines.get("method", 0), "method", "the polar method needs d = 2"))
        if "z" in values and any(not 0 <= t < 1 for t in values["z"]) and command not in ("capacity",):
            errors.append((lines["z"], "z", "anchor must lie in [0, 1)^d"))
        if command == "mu" and "eps" in values and len(values["eps"]) != 1:
            errors.append((lines["eps"], "eps", "'mu' takes a single value"))
        integrand = values.get("integrand", "constant")
        if integrand != "constant" and "c" in raw:
            errors.append((lines["c"], "c", "only used by the constant integrand"))
        if integrand not in ("laminate", "checkerboard") and ("low" in raw or "high" in raw):
            key = "low" if "low" in raw else "high"
            errors.append((lines[key], key, "only used by two-phase integrands"))
    if errors:
        raise ConfigError(errors)
    return RunConfig(command, values, values.get("seed", 0), lines=lines)


def build_integrand(cfg: RunConfig):
    name = cfg.get("integrand", "constant")
    d = cfg.get("d", 2)
    if name == "constant":
        return integrands.constant(cfg.get("c", 1.0), d)
    if name == "sinusoidal":
        return integrands.sinusoidal(d)
    return integrands.PRESETS[name](cfg.get("low", 1.0), cfg.get("high", 4.0), d)


# --------------------------------------------------------------------------
# emission


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path: str, cfg: RunConfig, results: dict, verdicts: dict) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "inputs": _plain(dict(sorted(cfg.values.items()))),
        "seed": cfg.seed,
        "results": _plain(results),
        "verdicts": _plain(verdicts),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands


def _polar(cfg):
    from .capacity import PolarResolution

    return PolarResolution(cfg.get("per_log", 32.0), cfg.get("n_angular", 64))


def _map(cfg, fn, items):
    if cfg.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _cmd_capacity(cfg):
    from .capacity import analytic_capacity, frozen_annulus_minimum

    I = build_integrand(cfg)
    z = cfg.get("z", [0.0] * cfg.get("d"))
    r, R = cfg.get("r"), cfg.get("R")
    m = frozen_annulus_minimum(I.frozen(z), R, _polar(cfg), r=r)
    exact = analytic_capacity(cfg.get("d"), r, R)
    header = ["r", "R", "minimum", "analytic_unit", "ratio"]
    rows = [[r, R, m, exact, m / exact]]
    return header, rows, {"minimum": m, "analytic_unit": exact}, {}


def _extrapolation_rows(F, schedule, cfg):
    from .capacity import fit_log_extrapolation, frozen_annulus_minimum

    res = _polar(cfg)
    ms = _map(cfg, lambda R: frozen_annulus_minimum(F, R, res), list(schedule))
    samples = [(R, math.log(R) * m) for R, m in zip(schedule, ms)]
    fit = fit_log_extrapolation(samples)
    header = ["R", "m_R", "rescaled", "estimate", "residual"]
    rows = [[R, m, v, fit.estimate, fit.residual] for (R, v), m in zip(samples, ms)]
    return header, rows, fit


def _cmd_phi(cfg):
    from .capacity import DEFAULT_SCHEDULE

    I = build_integrand(cfg)
    z = cfg.get("z", [0.0, 0.0])
    header, rows, fit = _extrapolation_rows(I.frozen(z), cfg.get("schedule", list(DEFAULT_SCHEDULE)), cfg)
    within = I.alpha * 2 * math.pi <= fit.estimate <= I.beta * 2 * math.pi
    return header, rows, {"estimate": fit.estimate, "residual": fit.residual,
                          "low_confidence": fit.low_confidence}, {"growth_bounds": within}


def _cmd_fhom(cfg):
    from .cell import tabulate_fhom

    table = tabulate_fhom(build_integrand(cfg), cfg.get("n_directions", 64), cfg.get("n", 64))
    rows = [[a, v] for a, v in zip(table.angles, table.values)]
    ok = bool(np.all((table.values >= table.alpha - 1e-9) & (table.values <= table.beta + 1e-9)))
    return ["angle", "value"], rows, {"n_directions": len(rows)}, {"growth_bounds": ok}


def _cmd_chom(cfg):
    from .capacity import DEFAULT_SCHEDULE
    from .cell import tabulate_fhom

    I = build_integrand(cfg)
    table = tabulate_fhom(I, cfg.get("n_directions", 64), cfg.get("n", 64))
    header, rows, fit = _extrapolation_rows(table, cfg.get("schedule", list(DEFAULT_SCHEDULE)), cfg)
    within = I.alpha * 2 * math.pi <= fit.estimate <= I.beta * 2 * math.pi
    return header, rows, {"estimate": fit.estimate, "residual": fit.residual,
                          "low_confidence": fit.low_confidence}, {"growth_bounds": within}


def _mu_setup(cfg):
    from .asymptotic import CenterFamily, MuResolution
    from .grid import Box

    d = cfg.get("d")
    I = build_integrand(cfg)
    z = cfg.get("z", [0.25] + [0.5] * (d - 1))
    family = CenterFamily(tuple(z), cfg.get("clearance", 0.1))
    res = MuResolution(cfg.get("method", "box"), cfg.get("h"), cfg.get("n_angular", 256))
    return I, Box.unit(d), family, res


def _cmd_mu(cfg):
    from .asymptotic import AsymptoticParams, mu_eps_delta, sandwich_bounds

    I, omega, family, res = _mu_setup(cfg)
    eps, lam = cfg.get("eps")[0], cfg.get("lambda")
    p = AsymptoticParams(cfg.get("d"), eps, lam)
    mu = mu_eps_delta(I, omega, family, p, res)
    rescaled = p.log_eps ** (p.d - 1) * mu
    lo, hi = sandwich_bounds(I, omega, family.realize(omega, p.delta), eps)
    rows = [[eps, p.delta, lam, mu, rescaled, lo, hi]]
    return (["eps", "delta", "lambda", "mu", "rescaled", "lower", "upper"], rows,
            {"mu": mu, "rescaled": rescaled}, {"sandwiched": lo <= rescaled <= hi})


def _cmd_claw(cfg):
    from .asymptotic import law_sweep

    I, omega, family, res = _mu_setup(cfg)
    rep = law_sweep(I, omega, family, cfg.get("lambda"), cfg.get("eps"), res)
    rows = [[r.eps, r.delta, r.lam, r.mu, r.rescaled, rep.prediction] for r in rep.rows]
    results = {"phi": rep.phi, "chom": rep.chom, "prediction": rep.prediction,
               "bounds": [[r.lower, r.upper] for r in rep.rows]}
    verdicts = {"sandwiched": rep.sandwiched, "approaching": rep.approaching, "verdict": rep.verdict}
    return ["eps", "delta", "lambda", "mu", "rescaled", "prediction"], rows, results, verdicts


def _cmd_perforate(cfg):
    from .grid import Box
    from .perforated import constant_field, linear_field, strange_term_experiment

    d = cfg.get("d")
    I = build_integrand(cfg)
    target = constant_field(1.0) if cfg.get("target", "const") == "const" else linear_field(np.eye(d)[0])
    M = cfg.get("M", 2)
    rep = strange_term_experiment(target, I, cfg.get("lambda"), cfg.get("eps"), Box.unit(d),
                                  alpha_param=cfg.get("alpha"), M=M, tolerance=cfg.get("tolerance", 0.2))
    header = ["eps", "d_k", "delta_requested", "delta", "n_interior", "n_boundary", "recovery_energy",
              "gamma_energy", "gap"]
    rows = [[r.eps, r.period, r.delta_requested, r.delta, r.n_interior, r.n_boundary, r.recovery_energy,
             r.gamma_energy, r.gap] for r in rep.rows]
    verdicts = {"gap_decreasing": rep.gap_decreasing, "final_within": rep.final_within,
                "vanishes_on_perforations": rep.vanishes_on_perforations, "verdict": rep.verdict}
    return header, rows, {"c_lambda": rep.c_lambda, "boundary_share": [r.boundary_share for r in rep.rows]}, verdicts


def _cmd_verify(cfg):
    from .verify import run_checks

    checks = run_checks(build_integrand(cfg), cfg.seed, cfg.get("samples", 200))
    rows = [[name, "pass" if ok else "fail", value] for name, ok, value in checks]
    n_pass = sum(1 for _, ok, _ in checks if ok)
    n_fail = len(checks) - n_pass
    print(f"verify: {n_pass} passed, {n_fail} failed")
    return ["check", "status", "value"], rows, {"passed": n_pass, "failed": n_fail}, {"all_passed": n_fail == 0}


HANDLERS = {
    "capacity": _cmd_capacity,
    "phi": _cmd_phi,
    "fhom": _cmd_fhom,
    "chom": _cmd_chom,
    "claw": _cmd_claw,
    "mu": _cmd_mu,
    "perforate": _cmd_perforate,
    "verify": _cmd_verify,
}


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration and write its artifacts."""
    os.makedirs(cfg.out, exist_ok=True)
    np.random.seed(cfg.seed)
    try:
        header, rows, results, verdicts = HANDLERS[cfg.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    write_csv(os.path.join(cfg.out, f"{cfg.command}.csv"), header, rows)
    write_json(os.path.join(cfg.out, f"{cfg.command}.json"), cfg, results, verdicts)
    if cfg.command == "verify" and not verdicts.get("all_passed", False):
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hetcap", description="Heterogeneous capacity experiments.")
    parser.add_argument("tokens", nargs="*", help="optional command followed by key=value settings")
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
    args = parser.parse_args(argv)

    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
            return 2
    tokens = list(args.tokens)
    if tokens and "=" not in tokens[0]:
        tokens[0] = f"command={tokens[0]}"
    if args.seed is not None:
        tokens.append(f"seed={args.seed}")
    try:
        cfg = parse_config(text, tokens)
    except ConfigError as exc:
        for line, key, reason in exc.errors:
            where = f"line {line}" if line else "arguments"
            print(f"config error ({where}): {key}: {reason}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("config error (arguments): threads: must be >= 1", file=sys.stderr)
        return 2
    cfg.out = args.out
    cfg.threads = args.threads
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
