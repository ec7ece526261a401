"""Command-line experiment runner.

    bergeo {spectrum,geodesic,mass,converge,stats,suite} [--config PATH] [--out DIR]
           [--k-list 8,16,32] [--seed N] [--tol-scale S]

Every subcommand writes one CSV table and ``summary.json`` into the output
directory.  Exit codes: 0 success, 1 invalid configuration, 2 numerical
failure, 3 acceptance failure.  ``BERGEO_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _thread_count():
    raw = os.environ.get("BERGEO_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        return -1
    for var in _THREAD_VARS:
        os.environ[var] = str(n)
    return n


_THREADS = _thread_count()

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import platform  # noqa: E402
import time  # noqa: E402
from datetime import datetime, timezone  # noqa: E402
from importlib import metadata  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .errors import ConfigError, NumericalError  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="bergeo", description="Bergman-geodesic experiments on O(k) -> P^1.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("spectrum", "change-of-basis exponents per level"),
        ("geodesic", "sampled Bergman geodesics and the exact geodesic"),
        ("mass", "Monge-Ampere masses and their decay in k"),
        ("converge", "sup-norm errors of levels and envelopes"),
        ("stats", "variance, spacing, Harnack and Sobolev checks"),
        ("suite", "full acceptance suite"),
    ]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", type=Path, help="INI experiment file")
        s.add_argument("--out", type=Path, help="output directory (created if missing)")
        s.add_argument("--k-list", help="comma separated, strictly increasing levels")
        s.add_argument("--seed", type=lambda v: int(v, 0))
        s.add_argument("--tol-scale", type=float)
    return p


class Run:
    """Collects tables and provenance for one invocation."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = {}
        self.results = {}
        self.passed = True
        self.started = datetime.now(timezone.utc).isoformat()

    def timed(self, key, fn, *args, **kw):
        start = time.perf_counter()
        val = fn(*args, **kw)
        self.timings[key] = round(time.perf_counter() - start, 4)
        return val

    def write_csv(self, name, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def finish(self):
        summary = {
            "command": self.command,
            "passed": bool(self.passed),
            "results": self.results,
            "provenance": {
                "config_hash": self.cfg.config_hash(),
                "config": self.cfg.semantic_dict(),
                "version": package_version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "threads": _THREADS,
                "started": self.started,
                "timings": self.timings,
            },
        }
        with open(self.out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _grid(cfg):
    from .hmae import default_grid

    return default_grid(cfg.t_nodes, cfg.x_nodes, cfg.x_max)


def _quad(cfg, k):
    from .geometry import build_quadrature, default_quadrature

    return build_quadrature(cfg.quad_nodes) if cfg.quad_nodes else default_quadrature(k)


def _geodesic(cfg, phi0, phi1, k):
    from .bergman import BergmanGeodesic, gram_matrix, spectral_pair

    q = _quad(cfg, k)
    return BergmanGeodesic(spectral_pair(gram_matrix(phi0, k, q), gram_matrix(phi1, k, q), k), phi0, phi1)


def cmd_spectrum(run):
    """Columns: operation, pair, k, lambda_min, lambda_max, spacing, max_abs_over_k,
    upper_in_interval, lower_in_interval, upper_finite, lower_finite."""
    from .analysis import spacing_check
    from .bergman import lambda_bounds_report

    rows = []
    for name, (phi0, phi1) in run.cfg.potentials().items():
        for k in run.cfg.k_list:
            bg = run.timed(f"{name}/k={k}", _geodesic, run.cfg, phi0, phi1, k)
            rep = lambda_bounds_report(bg.spectral, phi0, phi1)
            rows.append(["spectrum", name, k, rep["lambda_min"], rep["lambda_max"],
                         spacing_check(bg.spectral), rep["max_abs_over_k"],
                         rep["upper_in_interval"], rep["lower_in_interval"],
                         rep["upper_finite"], rep["lower_finite"]])
    run.write_csv("spectrum.csv", ["operation", "pair", "k", "lambda_min", "lambda_max", "spacing",
                                   "max_abs_over_k", "upper_in_interval", "lower_in_interval",
                                   "upper_finite", "lower_finite"],
                  [[_fmt(v) for v in r] for r in rows])
    run.results["rows"] = len(rows)


def cmd_geodesic(run):
    """Columns: operation, pair, k, t, x, value (k = 0 marks the exact geodesic), phi relative to h0."""
    from .oracle import exact_geodesic

    t, x = _grid(run.cfg)
    T, X = np.meshgrid(t, x, indexing="ij")
    header = ["operation", "pair", "k", "t", "x", "value"]
    n = 0
    with open(run.out / "geodesic.csv", "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for name, (phi0, phi1) in run.cfg.potentials().items():
            surfaces = []
            for k in run.cfg.k_list:
                bg = _geodesic(run.cfg, phi0, phi1, k)
                surfaces.append((k, run.timed(f"{name}/k={k}", lambda: np.array([bg.value(ti, x) for ti in t]))))
            g = run.timed(f"{name}/oracle", exact_geodesic, phi0, phi1, t, x)
            surfaces.append((0, g.grid.relative))
            for k, vals in surfaces:
                for ti, xi, v in zip(T.ravel(), X.ravel(), vals.ravel()):
                    fh.write(f"geodesic,{name},{k},{float(ti)!r},{float(xi)!r},{float(v)!r}\n")
                n += vals.size
    run.results["rows"] = n


def cmd_mass(run):
    """Columns: operation, pair, k, boundary, bulk, relative_gap, k_times_mass, t_nodes, x_nodes."""
    from .hmae import ma_mass_boundary, ma_mass_bulk, sample_path

    t, x = _grid(run.cfg)
    rows, fits = [], {}
    for name, (phi0, phi1) in run.cfg.potentials().items():
        ks, masses = [], []
        for k in run.cfg.k_list:
            bg = _geodesic(run.cfg, phi0, phi1, k)
            b = run.timed(f"{name}/k={k}/boundary", ma_mass_boundary, bg, _quad(run.cfg, k))
            v = run.timed(f"{name}/k={k}/bulk", lambda: ma_mass_bulk(sample_path(bg, t, x)))
            scale = max(abs(b), abs(v))
            gap = abs(b - v) / scale if scale > 1e-14 else 0.0
            rows.append(["ma_mass", name, k, b, v, gap, k * b, t.size, x.size])
            ks.append(k)
            masses.append(b)
        m = np.array(masses)
        slope = float(np.polyfit(np.log(ks), np.log(m), 1)[0]) if len(ks) > 1 and np.all(m > 0) else None
        fits[name] = {"slope": slope, "C": float(np.max(np.array(ks) * m))}
    run.write_csv("mass.csv", ["operation", "pair", "k", "boundary", "bulk", "relative_gap",
                               "k_times_mass", "t_nodes", "x_nodes"], [[_fmt(v) for v in r] for r in rows])
    run.results["fits"] = fits


def cmd_converge(run):
    """Columns: operation, pair, kind (level|envelope), k, error, t_nodes, x_nodes."""
    from .oracle import convergence_study

    t, x = _grid(run.cfg)
    rows, flags = [], {}
    ks = run.cfg.k_list
    for name, pair in run.cfg.potentials().items():
        rep = run.timed(name, convergence_study, pair, ks, ks, t, x)
        rows += [["convergence", name, "level", k, e, t.size, x.size] for k, e in zip(rep.k, rep.level_errors)]
        rows += [["convergence", name, "envelope", l, e, t.size, x.size] for l, e in zip(rep.l, rep.envelope_errors)]
        flags[name] = {"envelope_nonincreasing": rep.envelope_nonincreasing,
                       "level_slope": rep.level_slope if np.isfinite(rep.level_slope) else None}
    run.write_csv("converge.csv", ["operation", "pair", "kind", "k", "error", "t_nodes", "x_nodes"],
                  [[_fmt(v) for v in r] for r in rows])
    run.results["flags"] = flags
    run.passed = all(f["envelope_nonincreasing"] for f in flags.values())


def cmd_stats(run):
    """Columns: operation, pair, k, quantity, value, passed."""
    from .acceptance import random_bumps
    from .analysis import (harnack_differential_check, harnack_global_check, sobolev_bound_check,
                           spacing_check, variance_check)

    cfg = run.cfg
    t, x = _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    ts, xs = rng.uniform(0, 1, 200), rng.uniform(-10, 10, 200)
    tol = cfg.tol_scale
    rows, notes = [], []
    for name, (phi0, phi1) in cfg.potentials().items():
        for k in cfg.k_list:
            bg = _geodesic(cfg, phi0, phi1, k)
            v = run.timed(f"{name}/k={k}/variance", variance_check, bg, ts, xs)
            rows.append(["variance_check", name, k, "variance_rel_error", v["variance_rel_error"],
                         v["variance_rel_error"] <= 1e-10 * tol])
            rows.append(["variance_check", name, k, "fd_rel_error", v["fd_rel_error"], v["fd_rel_error"] <= 1e-6 * tol])
            rows.append(["variance_check", name, k, "accel_sup", v["accel_sup"], True])
            rows.append(["spacing_check", name, k, "max_spacing", spacing_check(bg.spectral), True])
            h = run.timed(f"{name}/k={k}/harnack", harnack_differential_check, bg, t, x)
            rows.append(["harnack_differential_check", name, k, "defect_min", h.defect_min,
                         h.defect_min >= -1e-8 * tol])
            rows.append(["harnack_differential_check", name, k, "l_residual_min", h.l_residual_min, True])
            if cfg.harnack_samples > 0:
                g = run.timed(f"{name}/k={k}/harnack_global", harnack_global_check, bg,
                              n_samples=cfg.harnack_samples, seed=cfg.seed, window=cfg.dp_window,
                              t=t, x=x, abs_tol=1e-8 * tol)
                rows.append(["harnack_global_check", name, k, "violations", g.violations, g.violations == 0])
                rows.append(["harnack_global_check", name, k, "violations_quarter", g.violations_quarter, True])
                rows.append(["harnack_global_check", name, k, "violations_half_speed",
                             g.violations_half_speed, True])
        for side, phi in (("phi0", phi0), ("phi1", phi1)):
            s = sobolev_bound_check(phi)
            rows.append(["sobolev_bound_check", name, 0, f"{side}_slack", s["slack"], s["holds"]])
    if cfg.harnack_samples == 0:
        notes.append("harnack global check skipped: zero samples configured")
    for i, b in enumerate(random_bumps(cfg.seed)):
        s = sobolev_bound_check(b)
        rows.append(["sobolev_bound_check", f"random{i}", 0, "slack", s["slack"], s["holds"]])
    run.write_csv("stats.csv", ["operation", "pair", "k", "quantity", "value", "passed"],
                  [[_fmt(v) for v in r] for r in rows])
    run.passed = all(bool(r[-1]) for r in rows)
    run.results["notes"] = notes
    run.results["failed"] = [f"{r[0]}:{r[1]}:{r[2]}:{r[3]}" for r in rows if not r[-1]]


def cmd_suite(run):
    """Columns: id, name, passed, measured (JSON), note.  Timings live in summary.json."""
    from .acceptance import run_acceptance

    results = run.timed("acceptance", run_acceptance, run.cfg)
    rows = []
    for r in results:
        # wall-clock numbers go to the provenance block so tables stay reproducible
        measured = {k: v for k, v in r.measured.items() if k != "runtime_s"}
        run.timings[f"criterion_{r.id}"] = round(r.seconds, 4)
        rows.append([r.id, r.name, _fmt(r.passed),
                     json.dumps(measured, sort_keys=True, default=_jsonable), r.note])
    run.write_csv("acceptance.csv", ["id", "name", "passed", "measured", "note"], rows)
    for r in results:
        print(r.line())
    run.results["criteria"] = {str(r.id): r.passed for r in results}
    run.passed = all(r.passed for r in results)
    run.acceptance = True


COMMANDS = {
    "spectrum": cmd_spectrum,
    "geodesic": cmd_geodesic,
    "mass": cmd_mass,
    "converge": cmd_converge,
    "stats": cmd_stats,
    "suite": cmd_suite,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .config import load_config

    try:
        if _THREADS == -1:
            raise ConfigError("BERGEO_THREADS", "must be a positive integer")
        cfg = load_config(args.config, k_list=args.k_list, seed=args.seed, tol_scale=args.tol_scale,
                          out_dir=str(args.out) if args.out is not None else None)
        run = Run(args.command, cfg)
    except ConfigError as exc:
        print(f"bergeo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bergeo: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](run)
    except NumericalError as exc:
        print(f"bergeo: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    run.finish()
    if args.command == "suite" and not run.passed:
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
