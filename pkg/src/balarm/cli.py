"""Command-line front end: ``balarm <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or settings, 3 numerical failure,
4 file-system error.  Every output is staged and only published when the
whole subcommand succeeds.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from . import io as bio
from . import rng as _rng
from .alarm import SIMULATION_CLUSTERS, alarm1_grid, cyclo_curves, simulate_balarm, simulation_model
from .bootstrap import RHO_THRESHOLD, parametric_bootstrap
from .diagnostics import (DEFAULT_BINS, DEFAULT_MAX_PAIRS, crosscorr_histograms, crosscorr_null,
                          crosscorr_observed, geometric_qq, geometric_run_test,
                          independence_probe, run_lengths)
from .em import EMSettings, e_step, fit_em, hard_labels
from .exceptions import BalarmError, InsufficientDataError, NumericalError, ValidationError
from .ingest import aggregate, parse_clock, read_contacts
from .model import ModelSpec
from .selection import bic, n_observations, n_parameters, sweep

logger = logging.getLogger("balarm")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


# --------------------------------------------------------------------------
# option handling
# --------------------------------------------------------------------------

def _int_list(text: str) -> List[int]:
    """``"2-9"`` or ``"2,3,5"`` (or a mix) to a sorted list of integers."""
    out = set()
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.update(range(int(lo), int(hi) + 1))
            else:
                out.add(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like 2-9 or 2,3,4, got {text!r}") from None
    return sorted(out)


def _float_range(text: str) -> np.ndarray:
    """``start:stop:num`` to an evenly spaced grid (endpoints included)."""
    try:
        start, stop, num = text.split(":")
        return np.linspace(float(start), float(stop), int(num))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:num, got {text!r}") from None


def _settings(args) -> dict:
    """Merge the config file with command-line overrides."""
    cfg = bio.load_config(args.config) if getattr(args, "config", None) else {}
    for key in bio.CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg.setdefault("seed", 0)
    return cfg


def _em_settings(cfg: dict) -> EMSettings:
    ridge = cfg.get("ridge", 1e-6)
    return EMSettings(init=cfg.get("init", "kmeans"), n_restarts=cfg.get("restarts"),
                      tol=cfg.get("tol", 1e-6), max_iter=cfg.get("max_iter", 500),
                      ridge=ridge, ridge_max=max(1e-2, ridge))


def _spec(cfg: dict, G: Optional[int] = None) -> ModelSpec:
    return ModelSpec(n_clusters=G if G is not None else cfg.get("G", 1), ar_order=cfg.get("K", 1),
                     harmonic_order=cfg.get("H", 0), period=cfg.get("P", 288))


def _preamble(cfg: dict, **extra) -> dict:
    out = {k: v for k, v in cfg.items() if k != "seed"}
    out.update(extra)
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_ingest(args) -> None:
    events, registry = read_contacts(args.input)
    clock = parse_clock(args.clock_start) if args.clock_start else None
    if args.phase_origin == "midnight" and clock is None:
        raise ValidationError("--phase-origin midnight needs --clock-start HH:MM[:SS]")
    if args.phase_origin == "t_start":
        clock = None
    panel = aggregate(events, registry, args.window, args.t_start, args.t_end, clock_start=clock)
    with bio.OutputSet() as out:
        out.write(args.out, bio.panel_to_text(panel))
    density = float(panel.values.mean())
    print(f"N={registry.n_nodes} J={panel.n_edges} n={panel.n_steps} density={density:.6g} "
          f"dropped={panel.meta['dropped_events']}")
    counts = registry.status_counts()
    if any(counts):
        print("statuses: " + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))


def cmd_simulate(args) -> None:
    if args.model:
        model = bio.load_model(args.model)
        source = {"model": args.model}
    else:
        model = simulation_model(args.preset, period=args.period)
        source = {"preset": args.preset}
    panel, labels = simulate_balarm(model, args.edges, args.steps, args.seed,
                                    burn_in=args.burn_in, phase_offset=args.phase_offset)
    with bio.OutputSet() as out:
        out.write(args.out, bio.panel_to_text(panel))
        if args.labels_out:
            settings = {**source, "edges": args.edges, "steps": args.steps,
                        "burn_in": args.burn_in, "phase_offset": args.phase_offset}
            out.write(args.labels_out, bio.table_to_text(
                "labels", ["edge", "cluster"],
                ((i + 1, g + 1) for i, g in enumerate(labels)), args.seed, settings))
    print(f"simulated J={panel.n_edges} n={panel.n_steps} G={model.spec.n_clusters}")


def cmd_fit(args) -> None:
    cfg = _settings(args)
    panel = bio.load_panel(args.panel)
    spec = _spec(cfg)
    init_model = bio.load_model(args.init_model) if args.init_model else None
    settings = _em_settings(cfg)
    fit = fit_em(panel, spec, settings, seed=cfg["seed"], init_model=init_model)
    score = bic(fit, panel)
    meta = {"seed": cfg["seed"], "settings": settings.as_dict(), "loglik": fit.loglik,
            "bic": score, "converged": fit.converged, "n_iter": fit.n_iters,
            "n_obs": n_observations(panel, spec), "q": n_parameters(spec),
            "ridge": fit.meta.get("ridge"), "empty_clusters": fit.meta.get("empty_clusters"),
            "restart_logliks": fit.meta["restart_logliks"]}
    G = spec.n_clusters
    em = panel.edge_map
    resp_rows = []
    for i in range(panel.n_edges):
        k, j = (em[i] + 1) if em is not None else (None, None)
        resp_rows.append([i + 1, k, j, int(fit.hard_labels[i]) + 1, *fit.tau[i]])
    pre = _preamble(cfg, G=G, K=spec.ar_order, H=spec.harmonic_order, P=spec.period)
    with bio.OutputSet() as out:
        out.write(args.out + ".model.json", bio.model_to_text(fit.model, meta))
        out.write(args.out + ".responsibilities.tsv", bio.table_to_text(
            "responsibilities", ["edge", "node_k", "node_j", "label"] + [f"tau_{g + 1}" for g in range(G)],
            resp_rows, cfg["seed"], pre))
        out.write(args.out + ".trace.tsv", bio.table_to_text(
            "trace", ["iteration", "loglik"], enumerate(fit.loglik_trace), cfg["seed"], pre))
    sizes = np.bincount(fit.hard_labels, minlength=G)
    print(f"loglik={fit.loglik:.10g} bic={score:.10g} converged={fit.converged} "
          f"iterations={fit.n_iters} sizes={','.join(map(str, sizes))}")


def cmd_sweep(args) -> None:
    cfg = _settings(args)
    panel = bio.load_panel(args.panel)
    settings = _em_settings(cfg)
    rows = sweep(panel, args.G_values, args.H_values, K=cfg.get("K", 1), period=cfg.get("P", 288),
                 settings=settings, seed=cfg["seed"], n_jobs=args.threads)
    cols = ["G", "H", "loglik", "q", "n_obs", "bic", "converged", "n_restarts_used", "best", "error"]
    table = [[r.G, r.H, r.loglik, r.q, r.n_obs, r.bic, r.converged, r.n_restarts_used, r.best,
              r.error.replace("\t", " ").replace("\n", " ")] for r in rows]
    pre = _preamble(cfg, G_values=args.G_values, H_values=args.H_values)
    with bio.OutputSet() as out:
        out.write(args.out, bio.table_to_text("sweep", cols, table, cfg["seed"], pre))
    best = [r for r in rows if r.best]
    if best:
        print(f"best G={best[0].G} H={best[0].H} bic={best[0].bic:.10g}")


def cmd_bootstrap(args) -> None:
    cfg = _settings(args)
    model = bio.load_model(args.model)
    t_first, phase_offset = 1, args.phase_offset
    J, n = args.edges, args.steps
    if args.panel:
        panel = bio.load_panel(args.panel)
        J, n = panel.n_edges, panel.n_steps
        t_first, phase_offset = int(panel.timestamps[0]), panel.phase_offset
    if J is None or n is None:
        raise ValidationError("give --panel or both --edges and --steps")
    B = cfg.get("B", 100)
    bands = parametric_bootstrap(model, J, n, B, seed=cfg["seed"], settings=_em_settings(cfg),
                                 rho_threshold=args.rho_threshold, n_jobs=args.threads,
                                 t_first=t_first, phase_offset=phase_offset)
    rows = []
    for g in range(model.spec.n_clusters):
        for s in range(model.spec.period):
            rows.append([g + 1, s, bands.p_lo[g, s], bands.p_med[g, s], bands.p_hi[g, s],
                         bands.p_fit[g, s], bands.rho_lo[g, s], bands.rho_med[g, s],
                         bands.rho_hi[g, s], bands.rho_fit[g, s] if bands.rho_reported[g] else None])
    cols = ["cluster", "time_of_day", "p_lo", "p_med", "p_hi", "p_fit",
            "rho_lo", "rho_med", "rho_hi", "rho_fit"]
    pre = _preamble(cfg, B=B, edges=J, steps=n, t_first=t_first, phase_offset=phase_offset,
                    rho_threshold=args.rho_threshold)
    with bio.OutputSet() as out:
        out.write(args.out, bio.table_to_text("bootstrap", cols, rows, cfg["seed"], pre))
    print(f"replicates={bands.n_replicates} failed={bands.n_failed}")


def _edge_tests(values, rows, labels, n_mc, seed):
    out = []
    for i in rows:
        x = values[i]
        try:
            p_mean, p_runs, disc = independence_probe(x)
            stat, pval = geometric_run_test(x, n_mc=n_mc, seed=_rng.seed_sequence(seed, _rng.EDGE_TESTS, i))
        except (InsufficientDataError, ValidationError):
            continue
        out.append([i, int(labels[i]), run_lengths(x).runs(0).size, p_mean, p_runs, disc, stat, pval])
    return out


def cmd_diagnose(args) -> None:
    cfg = _settings(args)
    seed = cfg["seed"]
    panel = bio.load_panel(args.panel)
    model = bio.load_model(args.model)
    labels = hard_labels(e_step(panel, model))
    G = model.spec.n_clusters

    qq_rows = []
    for g in range(G):
        members = panel.values[labels == g]
        if members.size == 0:
            continue
        p = float(members.mean())
        if not 0.0 < p < 1.0:
            continue
        rls = [run_lengths(x) for x in members]
        for state, p_state in ((0, p), (1, 1.0 - p)):
            runs = np.concatenate([r.runs(state) for r in rls])
            if runs.size:
                for theo, samp in geometric_qq(runs, p_state):
                    qq_rows.append([g + 1, state, theo, samp])

    candidates = [i for i in range(panel.n_edges) if 0 < panel.values[i].sum() < panel.n_steps]
    chunks = [candidates[c::max(args.threads, 1)] for c in range(max(args.threads, 1))]
    parts = Parallel(n_jobs=args.threads)(
        delayed(_edge_tests)(panel.values, ch, labels, args.n_mc, seed) for ch in chunks)
    tests = sorted((r for part in parts for r in part), key=lambda r: r[0])
    em = panel.edge_map
    ks_rows = []
    for i, g, n_runs, p_mean, p_runs, disc, stat, pval in tests:
        if n_runs < args.min_runs:
            continue
        k, j = (em[i] + 1) if em is not None else (None, None)
        ks_rows.append([i + 1, k, j, g + 1, n_runs, p_mean, p_runs, disc, stat, pval])

    null = crosscorr_null(model, args.null_series, panel.n_steps, lag=args.lag, seed=seed,
                          max_pairs=args.max_pairs, t_first=int(panel.timestamps[0]),
                          phase_offset=panel.phase_offset)
    observed = crosscorr_observed(panel, labels, lag=args.lag, seed=seed, max_pairs=args.max_pairs)
    hist_rows = []
    for (g, h), (edges, nc, oc) in crosscorr_histograms(null, observed, DEFAULT_BINS).items():
        for b in range(nc.size):
            hist_rows.append([f"{g + 1}-{h + 1}", edges[b], edges[b + 1], nc[b], oc[b]])

    pre = _preamble(cfg, lag=args.lag, null_series=args.null_series, n_mc=args.n_mc,
                    max_pairs=args.max_pairs, min_runs=args.min_runs)
    with bio.OutputSet() as out:
        out.write(args.out + ".qq.tsv", bio.table_to_text(
            "qq", ["cluster", "state", "theoretical", "sample"], qq_rows, seed, pre))
        out.write(args.out + ".ks.tsv", bio.table_to_text(
            "ks", ["edge", "node_k", "node_j", "cluster", "n_runs", "p_hat_mean", "p_hat_runs",
                   "discrepancy", "ks_statistic", "p_value"], ks_rows, seed, pre))
        out.write(args.out + ".crosscorr.tsv", bio.table_to_text(
            "crosscorr", ["pair_group", "bin_lo", "bin_hi", "null_count", "observed_count"],
            hist_rows, seed, pre))
    rejected = sum(1 for r in ks_rows if r[-1] <= 0.05)
    print(f"edges tested={len(ks_rows)} rejected at 0.05={rejected} "
          f"cluster pairs={len(hist_rows) // max(DEFAULT_BINS.size - 1, 1)}")


def cmd_curves(args) -> None:
    model = bio.load_model(args.model)
    rows = []
    for g, cl in enumerate(model.clusters):
        cc = cyclo_curves(cl, model.spec)
        rows.extend([g + 1, s, cc.p_curve[s], cc.rho_curve[s]] for s in range(model.spec.period))
    with bio.OutputSet() as out:
        out.write(args.out, bio.table_to_text("curves", ["cluster", "time_of_day", "p", "rho"], rows,
                                              None, {"model": args.model}))


def cmd_stationary(args) -> None:
    grid = alarm1_grid(args.b, args.c)
    settings = {"b": [float(args.b[0]), float(args.b[-1]), int(args.b.size)],
                "c": [float(args.c[0]), float(args.c[-1]), int(args.c.size)]}
    with bio.OutputSet() as out:
        out.write(args.out, bio.table_to_text("stationary", ["b", "c", "p", "rho"], grid.tolist(),
                                              None, settings))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_model_options(p, with_G: bool = True) -> None:
    p.add_argument("--config", help="YAML file with keys G, K, H, P, seed, tol, restarts, B, ridge")
    if with_G:
        p.add_argument("-G", dest="G", type=int, help="number of clusters")
        p.add_argument("-H", dest="H", type=int, help="harmonic order")
    p.add_argument("-K", dest="K", type=int, help="autoregressive order")
    p.add_argument("-P", dest="P", type=int, help="period in time steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="EM stopping tolerance on the log-likelihood")
    p.add_argument("--restarts", type=int)
    p.add_argument("--init", choices=("kmeans", "random", "model"))
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--threads", type=int, default=1, help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balarm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"balarm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate a contact log into an edge panel")
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, default=300, help="snapshot length in seconds")
    p.add_argument("--out", required=True)
    p.add_argument("--t-start", dest="t_start", type=int)
    p.add_argument("--t-end", dest="t_end", type=int)
    p.add_argument("--clock-start", dest="clock_start", help="wall-clock time HH:MM[:SS] at t_start")
    p.add_argument("--phase-origin", dest="phase_origin", choices=("auto", "t_start", "midnight"),
                   default="auto", help="auto: midnight when --clock-start is given")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="simulate a BALARM panel")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--preset", type=str.upper,
                     choices=[a + b for a in SIMULATION_CLUSTERS for b in SIMULATION_CLUSTERS if a < b])
    p.add_argument("--edges", type=int, default=600)
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--period", type=int, default=288)
    p.add_argument("--phase-offset", dest="phase_offset", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", dest="labels_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a BALARM mixture by EM")
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--init-model", dest="init_model")
    _add_model_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="BIC over a (G, H) grid")
    p.add_argument("--panel", required=True)
    p.add_argument("--G-values", dest="G_values", type=_int_list, required=True)
    p.add_argument("--H-values", dest="H_values", type=_int_list, required=True)
    p.add_argument("--out", required=True)
    _add_model_options(p, with_G=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bootstrap", help="parametric bootstrap bands of the curves")
    p.add_argument("--model", required=True)
    p.add_argument("--panel", help="take J, n and the time axis from this panel")
    p.add_argument("--edges", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--phase-offset", dest="phase_offset", type=float, default=0.0)
    p.add_argument("-B", dest="B", type=int)
    p.add_argument("--rho-threshold", dest="rho_threshold", type=float, default=RHO_THRESHOLD)
    p.add_argument("--out", required=True)
    _add_model_options(p, with_G=False)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("diagnose", help="run-length tests and cross-correlation histograms")
    p.add_argument("--panel", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--lag", type=int, default=0)
    p.add_argument("--null-series", dest="null_series", type=int, default=500)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=199)
    p.add_argument("--min-runs", dest="min_runs", type=int, default=5)
    p.add_argument("--max-pairs", dest="max_pairs", type=int, default=DEFAULT_MAX_PAIRS)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("curves", help="time-of-day probability and autocorrelation curves")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("stationary", help="stationary law of ALARM(1) over a (b, c) grid")
    p.add_argument("--b", type=_float_range, default=_float_range("0:8:81"), help="start:stop:num")
    p.add_argument("--c", type=_float_range, default=_float_range("-8:0:81"), help="start:stop:num")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stationary)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except (ValidationError, InsufficientDataError) as exc:
        print(f"balarm {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"balarm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"balarm {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except BalarmError as exc:
        print(f"balarm {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
