"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import formats
from .baselines import PoissonModel, RecencyModel, WeibullModel
from .core import EventLog, ModelParams, ParameterDomainError
from .estimate import FitConfig, cross_validate, fit_all
from .evaluate import DEFAULT_DROP_THRESHOLD, HawkesModel, detect_intervention, evaluation_rows
from .formats import DataError
from .network import KroneckerSeed, build_mention_network, kronecker_generate
from .simulate import SimConfig, draw_synthetic_params, simulate

log = logging.getLogger("prodhawkes")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_synth_net(args):
    theta = _floats(args.theta)
    if len(theta) != 4:
        raise ConfigError("--theta needs four comma-separated entries")
    try:
        seed = KroneckerSeed(((theta[0], theta[1]), (theta[2], theta[3])), args.k)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc)) from None
    net = kronecker_generate(seed, args.seed)
    formats.write_network(args.out, net)
    print(f"nodes={net.num_users} edges={net.num_edges}")


def cmd_gen_params(args):
    net, _ = _load_network(args.network)
    try:
        params = draw_synthetic_params(net.num_users, args.products, args.seed,
                                       args.mu_fraction, args.omega)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc)) from None
    formats.write_params(args.out, params)
    print(f"users={params.num_users} products={params.num_products}")


def cmd_simulate(args):
    net, _ = _load_network(args.network)
    params = _load_params(args.params)
    if params.num_users != net.num_users:
        raise DataError(f"params cover {params.num_users} users, network has {net.num_users}")
    cfg = SimConfig(args.t0, args.T, args.max_events, args.seed)
    events = simulate(net, params, cfg)
    formats.write_events(args.out, events)
    print(f"events={len(events)} truncated={int(events.truncated)} "
          f"retries={events.diagnostics['under_bound_retries']}")


def _load_network(path):
    try:
        return formats.read_network(path)
    except FileNotFoundError:
        raise ConfigError(f"network file not found: {path}") from None


def _load_params(path) -> ModelParams:
    try:
        return formats.read_params(path)
    except FileNotFoundError:
        raise ConfigError(f"params file not found: {path}") from None


def _load_events(path, net, num_products=None) -> EventLog:
    try:
        return formats.read_events(path, num_users=net.num_users, num_products=num_products)
    except FileNotFoundError:
        raise ConfigError(f"events file not found: {path}") from None


def _split(events: EventLog, train_end, test_end):
    t0 = events.t0
    T = events.T if test_end is None else test_end
    train_end = T if train_end is None else train_end
    if not t0 < train_end <= T:
        raise ConfigError(f"need t0 < train-end <= test-end, got {t0}, {train_end}, {T}")
    return (t0, train_end), (train_end, T)


def _active_users(events: EventLog, window, min_events: int, active_window=None):
    """Users with ``min_events`` training events and, if given, an event in ``active_window``."""
    if min_events <= 0 and active_window is None:
        return None
    keep = events.window(*window).counts().sum(axis=1) >= min_events
    if active_window is not None:
        if len(active_window) != 2 or not active_window[0] < active_window[1]:
            raise ConfigError("--active-window needs START,END with START < END")
        keep &= events.window(*active_window).counts().sum(axis=1) > 0
    return [int(u) for u in np.flatnonzero(keep)]


def cmd_fit(args):
    net, first = _load_network(args.network)
    events = _load_events(args.events, net, args.products)
    (t0, train_end), _ = _split(events, args.train_end, args.test_end)
    train = events.window(t0, train_end)
    gate = first if args.gate_first_mention else None
    if args.gate_first_mention and first is None:
        raise ConfigError("--gate-first-mention needs a network file with first_time")
    try:
        cfg = FitConfig(beta=args.beta_grid[0], omega_grid=tuple(args.omega_grid),
                        beta_grid=tuple(args.beta_grid), max_iterations=args.max_iterations,
                        tolerance=args.tolerance)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc)) from None
    if len(cfg.omega_grid) == 1 and len(cfg.beta_grid) == 1:
        params = fit_all(train, net, cfg, cfg.omega_grid[0], jobs=args.jobs, first_edge_time=gate)
        chosen = (cfg.beta_grid[0], cfg.omega_grid[0])
    else:
        cv = cross_validate(train, net, cfg, jobs=args.jobs, first_edge_time=gate)
        params = cv.params
        chosen = (cv.beta, cv.omega)
    formats.write_params(args.out, params)
    print(f"beta={chosen[0]!r} omega={chosen[1]!r} "
          f"unconverged={len(params.fit_info['unconverged'])}")


def _build_models(names, params, net, gate, events, train):
    models = {}
    for name in names:
        if name == "hawkes":
            if params is None:
                raise ConfigError("the hawkes model needs --params")
            models[name] = HawkesModel(params, net, gate)
        elif name == "poisson":
            models[name] = PoissonModel.fit(events, *train)
        elif name == "weibull":
            models[name] = WeibullModel.fit(events, *train)
        elif name == "recency":
            models[name] = RecencyModel.fit(events, *train)
        else:
            raise ConfigError(f"unknown model {name!r}")
    return models


def cmd_evaluate(args):
    net, first = _load_network(args.network)
    params = _load_params(args.params) if args.params else None
    P = params.num_products if params is not None else args.products
    events = _load_events(args.events, net, P)
    train, test = _split(events, args.train_end, args.test_end)
    gate = first if args.gate_first_mention else None
    models = _build_models(args.models.split(","), params, net, gate, events, train)
    users = _active_users(events, train, args.min_events, args.active_window)
    rows = evaluation_rows(models, events, train, test, users)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["user", "model", "metric", "value"])
        for u, m, metric, v in rows:
            w.writerow([u, m, metric, repr(float(v))])
    finally:
        if args.out:
            out.close()


def cmd_detect(args):
    net, first = _load_network(args.network)
    params = _load_params(args.params)
    events = _load_events(args.events, net, params.num_products)
    gate = first if args.gate_first_mention else None
    model = HawkesModel(params, net, gate)
    start = events.t0 if args.start is None else args.start
    if not args.window > 0:
        raise ConfigError("--window must be positive")
    changes = detect_intervention(model, events, start, args.window, args.threshold, args.end)
    for t in changes:
        print(repr(t))


def cmd_ingest(args):
    if args.events and not args.out_events:
        raise ConfigError("--events needs --out-events")
    rows = formats.read_mentions(args.mentions)
    ids: dict[str, int] = {}

    def uid(name):
        if name not in ids:
            ids[name] = len(ids)
        return ids[name]

    inter = []
    last = -np.inf
    for lineno, t, j, i in rows:
        if t < last:
            raise DataError("mention times must be non-decreasing", args.mentions, lineno)
        last = t
        inter.append((uid(j), uid(i), t))
    products: dict[str, int] = {}
    raw = formats.read_raw_events(args.events) if args.events else []
    for _, _, u, p in raw:
        uid(u)
        products.setdefault(p, len(products))
    net, first, skipped = build_mention_network(inter, num_users=len(ids))
    formats.write_network(args.out_network, net, first if args.gate_first_mention else None)
    if args.events:
        times = [t for _, t, _, _ in raw]
        log_ = EventLog(times, [ids[u] for _, _, u, _ in raw], [products[p] for _, _, _, p in raw],
                        len(ids), len(products), min(times, default=0.0), None)
        formats.write_events(args.out_events, log_)
    if args.out_ids:
        with open(args.out_ids, "w", encoding="utf-8") as fh:
            json.dump({"users": ids, "products": products}, fh, sort_keys=True, indent=1)
            fh.write("\n")
    print(f"users={len(ids)} edges={net.num_edges} self_mentions={skipped}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prodhawkes", description=__doc__)
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-net", help="sample a Kronecker network")
    p.add_argument("--theta", required=True, help="seed matrix, row-major a,b,c,d")
    p.add_argument("--k", type=int, required=True, help="Kronecker power (2^k nodes)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_net)

    p = sub.add_parser("gen-params", help="draw synthetic per-user parameters")
    p.add_argument("--network", required=True)
    p.add_argument("--products", type=int, default=2)
    p.add_argument("--mu-fraction", type=float, default=0.1)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_params)

    p = sub.add_parser("simulate", help="sample events by thinning")
    p.add_argument("--network", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--max-events", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="regularised maximum likelihood fit")
    p.add_argument("--network", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--products", type=int, default=None)
    p.add_argument("--train-end", type=float, default=None)
    p.add_argument("--test-end", type=float, default=None)
    p.add_argument("--beta", dest="beta_grid", type=_floats, default=list(FitConfig.beta_grid),
                   help="one value or a comma-separated grid")
    p.add_argument("--omega", dest="omega_grid", type=_floats, default=list(FitConfig.omega_grid),
                   help="one value or a comma-separated grid")
    p.add_argument("--max-iterations", type=int, default=FitConfig.max_iterations)
    p.add_argument("--tolerance", type=float, default=FitConfig.tolerance)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gate-first-mention", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="compare models on a held-out window")
    p.add_argument("--network", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--products", type=int, default=None)
    p.add_argument("--models", default="hawkes,poisson,weibull,recency")
    p.add_argument("--train-end", type=float, required=True)
    p.add_argument("--test-end", type=float, default=None)
    p.add_argument("--min-events", type=int, default=0,
                   help="only report users with at least this many training events")
    p.add_argument("--active-window", type=_floats, default=None, metavar="START,END",
                   help="only report users with an event inside this window")
    p.add_argument("--gate-first-mention", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect", help="flag collapses of the per-event log-likelihood")
    p.add_argument("--network", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--end", type=float, default=None)
    p.add_argument("--window", type=float, required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_DROP_THRESHOLD,
                   help="drop below the running median, in nats per event")
    p.add_argument("--gate-first-mention", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("ingest", help="build a mention network and index raw events")
    p.add_argument("--mentions", required=True, help="CSV time,mentioner,mentioned")
    p.add_argument("--events", default=None, help="CSV time,user,product with string ids")
    p.add_argument("--out-network", required=True)
    p.add_argument("--out-events", default=None)
    p.add_argument("--out-ids", default=None)
    p.add_argument("--gate-first-mention", action="store_true",
                   help="store first-mention times so exposure can be gated")
    p.set_defaults(func=cmd_ingest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        args.func(args)
    except (ConfigError, ParameterDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
