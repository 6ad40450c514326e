"""Batch front-end: ``mlab check|markov|witness|remez|fit``.

Each command reads a TOML run config, writes ``<command>.csv`` and
``<command>.json`` into the output directory and prints the JSON summary.
Exit codes: 0 success, 2 config or I/O, 3 domain hypothesis failure,
4 numerical or conditioning failure, 5 insufficient data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import domain as dom
from . import markov, quad, specfun
from .errors import ConfigError, DomainHypothesisError, InsufficientDataError, MlabError

FAMILIES = {f.value.lower(): f for f in dom.Family if f is not dom.Family.CUSTOM}


@dataclass
class RunConfig:
    domain: dom.CuspidalDomain
    p: float = 2.0
    n_min: int = 1
    n_max: int = 10
    axis: str = "Y"
    method: str = "exact-eigen"
    seed: int = 0
    budget: int = 10_000
    x_lo: Optional[float] = None
    quad: quad.QuadSpec = field(default_factory=quad.QuadSpec)
    omega: Optional[float] = None
    sigma: float = 0.0
    directory: str = "."
    formats: tuple = ("csv", "json")


def _get(block, name, path, kind, default=None, required=False):
    if name not in block:
        if required:
            raise ConfigError(f"{path}.{name}: required field missing")
        return default
    value = block[name]
    where = f"{path}.{name}"
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _block(raw, name):
    block = raw.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: expected a table")
    return block


def parse_config(raw: dict) -> RunConfig:
    """Validate a decoded TOML document; errors name the offending field."""
    d = _block(raw, "domain")
    fam_name = _get(d, "family", "domain", str, "Power")
    family = FAMILIES.get(fam_name.lower())
    if family is None:
        raise ConfigError(
            f"domain.family: unknown family {fam_name!r} "
            f"(expected one of {', '.join(f.value for f in FAMILIES.values())})"
        )
    a = _get(d, "a", "domain", float, required=True)
    k = _get(d, "k", "domain", int, required=True)
    r = _get(d, "r", "domain", float, 2.0)
    b = _get(d, "b", "domain", float, 1.0)
    c = _get(d, "c", "domain", float, 1.0)
    try:
        f = dom.CuspFunction(family, r=r, b=b, c=c)
        domain = dom.CuspidalDomain(a, k, f)
    except MlabError as err:
        raise ConfigError(f"domain: {err}") from None

    comp = _block(raw, "compute")
    cfg = RunConfig(domain)
    cfg.p = _get(comp, "p", "compute", float, 2.0)
    if cfg.p < 1:
        raise ConfigError("compute.p: must be >= 1")
    cfg.n_min = _get(comp, "n_min", "compute", int, 1)
    cfg.n_max = _get(comp, "n_max", "compute", int, 10)
    if cfg.n_min < 0:
        raise ConfigError("compute.n_min: must be >= 0")
    if cfg.n_max < cfg.n_min:
        raise ConfigError("compute.n_max: must be >= compute.n_min")
    axis = _get(comp, "axis", "compute", str, "Y").upper()
    if axis not in ("X", "Y"):
        raise ConfigError(f"compute.axis: expected X or Y, got {axis!r}")
    cfg.axis = axis
    method = _get(comp, "method", "compute", str, "exact-eigen")
    if method not in {m.value for m in markov.Method}:
        raise ConfigError(f"compute.method: unknown method {method!r}")
    cfg.method = method
    cfg.seed = _get(comp, "seed", "compute", int, 0)
    cfg.budget = _get(comp, "budget", "compute", int, 10_000)
    if cfg.budget < 1:
        raise ConfigError("compute.budget: must be >= 1")
    cfg.x_lo = _get(comp, "x_lo", "compute", float, None)
    if cfg.x_lo is not None and not 0.0 <= cfg.x_lo < 1.0:
        raise ConfigError("compute.x_lo: must lie in [0, 1)")

    qb = _block(raw, "quad")
    try:
        cfg.quad = quad.QuadSpec(
            grading_ratio=_get(qb, "grading", "quad", float, 0.5),
            num_graded_panels=_get(qb, "panels", "quad", int, 40),
            rel_tol=_get(qb, "rel_tol", "quad", float, 1e-10),
        )
    except ValueError as err:
        raise ConfigError(f"quad: {err}") from None

    wb = _block(raw, "witness")
    omega = wb.get("omega", "auto")
    if omega != "auto":
        omega = _get(wb, "omega", "witness", float)
        if omega <= 0:
            raise ConfigError("witness.omega: must be positive or \"auto\"")
        cfg.omega = omega
    cfg.sigma = _get(wb, "sigma", "witness", float, 0.0)

    ob = _block(raw, "output")
    cfg.directory = _get(ob, "directory", "output", str, ".")
    formats = ob.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= {"csv", "json"}:
        raise ConfigError("output.formats: expected a list drawn from [\"csv\", \"json\"]")
    cfg.formats = tuple(formats)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: invalid TOML: {err}") from None
    return parse_config(raw)


def _num(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


class Output:
    def __init__(self, directory, formats, command):
        self.dir = Path(directory)
        self.formats = formats
        self.command = command

    def _prepare(self):
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise ConfigError(f"cannot create output directory {self.dir}: {err.strerror}") from None

    def write_csv(self, header, rows):
        if "csv" not in self.formats:
            return
        self._prepare()
        path = self.dir / f"{self.command}.csv"
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
        except OSError as err:
            raise ConfigError(f"cannot write {path}: {err.strerror}") from None

    def write_json(self, summary):
        text = json.dumps(summary, indent=2, sort_keys=True)
        print(text)
        if "json" not in self.formats:
            return
        self._prepare()
        path = self.dir / f"{self.command}.json"
        try:
            path.write_text(text + "\n")
        except OSError as err:
            raise ConfigError(f"cannot write {path}: {err.strerror}") from None


def _fit_dict(fit: markov.ExponentFit):
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "window": list(fit.window),
        "residual_rms": fit.residual_rms,
    }


def _require_valid(cfg: RunConfig, summary):
    report = dom.validate(cfg.domain)
    if not report.valid:
        summary["failed_checks"] = report.failed
        raise DomainHypothesisError("domain hypotheses fail: " + ", ".join(report.failed))


def cmd_check(cfg: RunConfig, args, out: Output):
    report = dom.validate(cfg.domain)
    summary = {"domain": markov.describe(cfg.domain), **report.as_dict()}
    try:
        est = dom.predicted_exponent(cfg.domain)
        summary["predicted_exponent"] = est.extrapolated
        summary["model"] = est.model.value
        summary["model_residual"] = est.residual
    except DomainHypothesisError as err:
        summary["predicted_exponent"] = None
        summary["predicted_exponent_error"] = str(err)
    rows = [[c.name, str(c.passed).lower(), _num(c.worst_x), _num(c.worst_value)] for c in report.checks]
    out.write_csv(["check", "passed", "worst_x", "worst_value"], rows)
    out.write_json(summary)
    if not report.valid:
        print("failing checks: " + ", ".join(report.failed), file=sys.stderr)
        return DomainHypothesisError.exit_code
    return 0


def _series_rows(command, s: markov.FactorSeries, extra=None):
    rows = []
    for idx, (n, v) in enumerate(s.entries):
        if command == "markov":
            ln_n = math.log(n) if n > 0 else None
            ln_v = math.log(v) if v > 0 else None
            rows.append([n, _num(v), _num(ln_n), _num(ln_v), s.method.value])
        else:
            rows.append([n, _num(s.x_lo[idx]), _num(v)])
    return rows


def _run_series(cfg, args, out, kind, header, summary, fit_window):
    command = out.command
    ns = range(cfg.n_min, cfg.n_max + 1)
    method = cfg.method if kind is not markov.SeriesKind.REMEZ else "exact-eigen"
    try:
        s = markov.factor_series(
            cfg.domain, kind, cfg.p, ns, method, cfg.quad,
            seed=args.seed if args.seed is not None else cfg.seed,
            budget=cfg.budget, threads=args.threads,
            x_lo=cfg.x_lo if kind is markov.SeriesKind.REMEZ else None,
            omega=cfg.omega, sigma=cfg.sigma,
        )
    except MlabError as err:
        partial = getattr(err, "partial", None)
        if partial is not None:
            out.write_csv(header, _series_rows(command, partial))
            summary["rows"] = len(partial.entries)
        summary["error"] = str(err)
        out.write_json(summary)
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code, None
    except ValueError as err:
        raise ConfigError(str(err)) from None
    out.write_csv(header, _series_rows(command, s))
    summary["rows"] = len(s.entries)
    summary["lower_bound"] = s.is_lower_bound
    if fit_window is not False:
        try:
            summary["fit"] = _fit_dict(markov.fit_exponent(s, fit_window))
        except InsufficientDataError as err:
            summary["error"] = str(err)
            out.write_json(summary)
            return err.exit_code, s
    return 0, s


def cmd_markov(cfg: RunConfig, args, out: Output):
    kind = markov.SeriesKind.MARKOV_X if cfg.axis == "X" else markov.SeriesKind.MARKOV_Y
    summary = {
        "domain": markov.describe(cfg.domain), "kind": kind.value,
        "p": cfg.p, "method": cfg.method,
    }
    _require_valid(cfg, summary)
    if cfg.method == "witness" and cfg.omega is None:
        summary["omega"] = specfun.default_omega(cfg.p, cfg.domain.k)
    code, s = _run_series(
        cfg, args, out, kind, ["n", "factor", "ln_n", "ln_factor", "method"], summary, args.window
    )
    if code == 0:
        out.write_json(summary)
    return code


def cmd_remez(cfg: RunConfig, args, out: Output):
    summary = {"domain": markov.describe(cfg.domain), "kind": "Remez", "p": 2.0,
               "mode": "inverse-square" if cfg.x_lo is None else "fixed"}
    _require_valid(cfg, summary)
    code, s = _run_series(
        cfg, args, out, markov.SeriesKind.REMEZ, ["n", "x_lo", "ratio"], summary, False
    )
    if code == 0:
        vals = dict(s.entries)
        summary["all_at_least_one"] = bool(all(v >= 1.0 for v in vals.values()))
        if 7 in vals and 14 in vals:
            summary["ratio_14_over_7"] = vals[14] / vals[7]
        out.write_json(summary)
    return code


def cmd_witness(cfg: RunConfig, args, out: Output):
    d = cfg.domain
    omega = cfg.omega if cfg.omega is not None else specfun.default_omega(cfg.p, d.k)
    summary = {"domain": markov.describe(d), "omega": omega, "sigma": cfg.sigma,
               "p": cfg.p, "warnings": []}
    _require_valid(cfg, summary)
    if not specfun.admissible(omega, cfg.p, d.k):
        msg = f"omega={omega} is not admissible for p={cfg.p}, k={d.k}"
        summary["warnings"].append(msg)
        print(f"warning: {msg}", file=sys.stderr)
    rows = []
    header = ["n", "rho", "eta_prime", "normalized"]
    try:
        for n in range(max(cfg.n_min, 1), cfg.n_max + 1):
            spec = specfun.WitnessSpec(omega, cfg.sigma, n, cfg.p)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rho, normalized = specfun.witness_ratio(spec, d, cfg.quad)
            eta = float(dom.f_prime(d, 1.0 / n**2))
            rows.append([n, _num(rho), _num(eta), _num(normalized)])
    except MlabError as err:
        out.write_csv(header, rows)
        summary["rows"] = len(rows)
        summary["error"] = str(err)
        out.write_json(summary)
        return err.exit_code
    out.write_csv(header, rows)
    summary["rows"] = len(rows)
    if rows:
        norm = [float(r[3]) for r in rows]
        summary["min_normalized_over_first"] = min(norm) / norm[0]
    out.write_json(summary)
    return 0


def read_series_csv(path):
    """(n, value) pairs from a CSV written by markov, remez or witness."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            value_col = next((c for c in ("factor", "ratio", "normalized") if c in cols), None)
            if "n" not in cols or value_col is None:
                raise ConfigError(f"{path}: expected columns n and factor/ratio/normalized")
            pairs = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    pairs.append((int(row["n"]), float(row[value_col])))
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}:{lineno}: malformed row") from None
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return pairs


def cmd_fit(args, out: Output):
    pairs = read_series_csv(args.csv)
    fit = markov.fit_exponent(pairs, args.window)
    out.write_json({"source": str(args.csv), **_fit_dict(fit)})
    return 0


def _window(text):
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B with integers, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError("window end precedes start")
    return lo, hi


def _threads_default():
    env = os.environ.get("MLAB_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(prog="mlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $MLAB_THREADS or 1)")
    common.add_argument("--window", type=_window, default=None, metavar="A:B")
    for name in ("check", "markov", "witness", "remez"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", required=True)
    p = sub.add_parser("fit", parents=[common])
    p.add_argument("csv")
    return parser


COMMANDS = {"check": cmd_check, "markov": cmd_markov, "witness": cmd_witness, "remez": cmd_remez}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.threads is None:
        args.threads = _threads_default()
    try:
        if args.command == "fit":
            return cmd_fit(args, Output(args.out or ".", ("json",) if args.out else (), "fit"))
        cfg = load_config(args.config)
        out = Output(args.out or cfg.directory, cfg.formats, args.command)
        return COMMANDS[args.command](cfg, args, out)
    except MlabError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
