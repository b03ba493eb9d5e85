"""Command-line entry point: ``affinity-lb <command> [options]``.

Every command accepts ``--config FILE`` (YAML or JSON).  File keys use
the long option names (dashes or underscores); values given on the
command line win over the file.  Exit status: 0 success, 1 invariant
or integration failure, 2 configuration error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import coupling, fixedpoint, fluid, graphs, simulate, stability
from .errors import ConfigError, DomainError, IntegrationError, InvariantError
from .model import SelectionFamily
from .rng import CounterRNG

log = logging.getLogger("affinity_lb")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _range(text):
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if ":" in str(text):
        a, b, s = (float(x) for x in str(text).split(":"))
        n = int(round((b - a) / s)) + 1
        return [round(a + i * s, 12) for i in range(n)]
    return _floats(text)


# -- family construction ------------------------------------------------------


def _family_from_args(a):
    model = a.model
    if model == "combinatorial":
        return SelectionFamily.combinatorial(a.n, a.d1, a.lam)
    if model == "graph":
        if not a.graph:
            raise ConfigError("--graph is required for the graph model")
        return SelectionFamily.graph(graphs.parse_graph_spec(a.graph), a.lam)
    if model == "general":
        return _parse_family(a.family, a.rates, a.lam)
    raise ConfigError(f"unknown model {model!r}")


def _parse_family(spec, rates=None, lam=None):
    """``path:n`` (edges as selections), ``sets:0,1;1,2`` or ``graph:<graph spec>``."""
    if not spec:
        raise ConfigError("a family spec is required")
    kind, _, rest = str(spec).partition(":")
    if kind == "graph":
        adj = graphs.parse_graph_spec(rest)
        if rates:
            r = _floats(rates)
            if len(r) != 1:
                raise ConfigError("graph families take a single rate")
            return SelectionFamily.graph(adj, r[0])
        return SelectionFamily.graph(adj, 1.0 if lam is None else lam)
    if kind == "path":
        n = int(rest)
        sels = [(v, v + 1) for v in range(n - 1)]
    elif kind == "sets":
        sels = [_ints(part) for part in rest.split(";") if part.strip()]
        n = max(max(S) for S in sels) + 1
    else:
        raise ConfigError(f"unknown family spec {spec!r}")
    r = _floats(rates) if rates else [1.0] * len(sels)
    if len(r) == 1 and len(sels) > 1:
        r = r * len(sels)
    return SelectionFamily.general(n, sels, r)


# -- commands ------------------------------------------------------------------------


def cmd_simulate(a):
    fam = _family_from_args(a)
    cfg = simulate.SimConfig(fam, mu1=a.mu1, mu2=a.mu2, horizon=a.horizon, seed=a.seed,
                             sample_dt=a.sample_dt, initial=a.initial, imax=a.imax)
    cfg.validate()
    out = Path(a.out)
    if a.replications > 1:
        seeds = [a.seed + i for i in range(a.replications)]
        trajs = simulate.run_replications(cfg, seeds, jobs=a.jobs)
        for s, tr in zip(seeds, trajs):
            tr.to_csv(out.with_name(f"{out.stem}_seed{s}{out.suffix}"))
        log.info("wrote %d trajectories next to %s", len(trajs), out)
        return EXIT_OK
    tr = simulate.run(cfg)
    tr.to_csv(out)
    if a.summary:
        simulate.write_summary(tr, a.summary)
    print(f"wrote {out} ({len(tr.times)} samples, {tr.meta['n_events']} events)")
    return EXIT_OK


def _fluid_initial(a):
    kw = dict(d1=a.d1, lam=a.lam, mu1=a.mu1, mu2=a.mu2)
    init = a.initial
    if init == "empty":
        return fluid.FluidState.empty(imax=a.imax, eps0=a.eps0, **kw)
    if init == "queueing":
        q = fixedpoint.queueing_fixed_point_qbar(a.d1, a.lam, a.mu1, a.mu2, a.imax)
        return fluid.FluidState(q, eps0=a.eps0, **kw)
    if init == "no-queueing":
        pts = [p for p in fixedpoint.no_queueing_fixed_points(a.d1, a.lam, a.mu1, a.mu2) if p.stable]
        if not pts:
            raise ConfigError("no stable idle-server fixed point at these parameters")
        return fluid.FluidState(pts[0].qbar(a.imax), eps0=a.eps0, **kw)
    if init == "random":
        rng = CounterRNG(a.seed, "fluid-initial").numpy()
        return fluid.random_initial_state(rng, imax=a.imax, eps0=a.eps0, **kw)
    raise ConfigError(f"unknown fluid initial state {init!r}")


def cmd_fluid(a):
    tr = fluid.integrate(_fluid_initial(a), a.horizon, dt=a.dt, sample_dt=a.sample_dt)
    tr.to_csv(a.out)
    msg = f"wrote {a.out} ({len(tr.times)} samples, {tr.meta['flips']} indicator flips)"
    if tr.meta["chattering"]:
        msg += " [chattering]"
    print(msg)
    return EXIT_OK


def cmd_fixpoint(a):
    rep = fixedpoint.report(a.d1, a.lam, a.mu1, a.mu2, a.imax)
    text = json.dumps(rep.to_json(), indent=2)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    if a.sweep:
        fixedpoint.write_sweep_csv(a.sweep_out, a.d1, _range(a.sweep), a.mu1, a.mu2)
        log.info("wrote %s", a.sweep_out)
    return EXIT_OK


def cmd_tables(a):
    which = a.which
    if which in ("table1", "both"):
        ks = _ints(a.ks) if a.ks else stability.TABLE1_KS
        fname = a.out if which == "table1" and a.out else "table1.csv"
        stability.write_regular_degree_csv(fname, a.n, ks)
        print(Path(fname).read_text(encoding="utf-8"), end="")
    if which in ("d1star", "both"):
        mu2s = _floats(a.mu2) if a.mu2 else fixedpoint.TABLE2_MU2S
        lams = _floats(a.lambdas) if a.lambdas else fixedpoint.TABLE2_LAMBDAS
        fname = a.out if which == "d1star" and a.out else "table2.csv"
        fixedpoint.write_d1_star_csv(fname, mu2s, lams, a.mu1)
        print(Path(fname).read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_lambda0(a):
    fam = _parse_family(a.family, a.rates, a.lam)
    sol = stability.lambda0(fam)
    text = json.dumps(sol.to_json(), indent=2)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def _couple_plan(a, seed):
    ref = a.ref
    if ref == "ra":
        if a.family:
            fam = _parse_family(a.family, a.rates, a.lam)
        else:
            rng = CounterRNG(seed, "random-family").numpy()
            fam = coupling.random_family(a.n or 20, 30, 4, a.lam, rng)
        return coupling.ra_plan(fam, a.mu1, a.mu2)
    if ref == "mjsq":
        n = a.n or 20
        k = 3 if a.k is None else a.k
        spec = a.graph or f"regular:{n}:{_dense_degree(n, n - k - 1)}"
        fam = SelectionFamily.graph(graphs.parse_graph_spec(spec), a.lam)
        return coupling.mjsq_plan(fam, k, a.mu1, a.mu2)
    if ref == "jsq":
        n = a.n or 50
        k = 2 if a.k is None else a.k
        d = a.d if a.d is not None else stability.min_regular_degree(n, k)
        return coupling.jsq_plan(n, d, k, a.lam, a.mu1, a.mu2)
    raise ConfigError(f"unknown reference policy {ref!r}")


def _dense_degree(n, d):
    # circulant graphs of odd degree need an even node count
    return d + 1 if d % 2 == 1 and n % 2 == 1 else d


def cmd_couple(a):
    bad = pbad = total = 0
    for s in range(a.seed, a.seed + a.seeds):
        plan = _couple_plan(a, s)
        want_log = bool(a.log) and s == a.seed
        res = coupling.run_coupling(plan, a.events, seed=s, log=want_log)
        if want_log:
            res.write_log(a.log)
        bad += res.violations
        pbad += res.positional_violations
        total += res.n_events
    ok = bad == 0 and pbad == 0
    print(f"coupling {a.ref}: {total} events over {a.seeds} seeds, "
          f"{bad} majorization violations, {pbad} positional violations")
    print(f"majorization held: {'yes' if ok else 'no'}")
    return EXIT_OK if ok else EXIT_INVARIANT


# -- parser ----------------------------------------------------------------------------


def _rates(p):
    p.add_argument("--mu1", type=float, default=1.0)
    p.add_argument("--mu2", type=float, default=0.5)


def build_parser():
    top = _Parser(prog="affinity-lb", description=__doc__.splitlines()[0])
    top.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML or JSON file with option values")
        p.set_defaults(func=func)
        return p

    p = command("simulate", cmd_simulate, "simulate the stochastic system")
    p.add_argument("--model", choices=["combinatorial", "graph", "general"],
                   default="combinatorial")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d1", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    _rates(p)
    p.add_argument("--graph", help="cycle:n, path:n, complete:n, regular:n:d or an edge-list file")
    p.add_argument("--family", help="general model: sets:0,1;1,2 or path:n")
    p.add_argument("--rates", help="comma-separated selection rates")
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-dt", type=float, default=1.0)
    p.add_argument("--initial", default="empty", help="empty or all-one-type-II")
    p.add_argument("--imax", type=int, default=simulate.DEFAULT_IMAX)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="trajectory.csv")
    p.add_argument("--summary", help="also write a JSON summary here")

    p = command("fluid", cmd_fluid, "integrate the fluid limit")
    p.add_argument("--d1", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    _rates(p)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--dt", type=float, default=fluid.DEFAULT_DT)
    p.add_argument("--sample-dt", type=float, default=0.1)
    p.add_argument("--imax", type=int, default=simulate.DEFAULT_IMAX)
    p.add_argument("--eps0", type=float, default=fluid.DEFAULT_EPS0)
    p.add_argument("--initial", default="empty",
                   choices=["empty", "queueing", "no-queueing", "random"])
    p.add_argument("--seed", type=int, default=0, help="seed for --initial random")
    p.add_argument("--out", default="fluid.csv")

    p = command("fixpoint", cmd_fixpoint, "fixed points, stability and metrics")
    p.add_argument("--d1", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    _rates(p)
    p.add_argument("--imax", type=int, default=12)
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--sweep", help="lambda values, start:stop:step or a comma list")
    p.add_argument("--sweep-out", default="sweep.csv")

    p = command("tables", cmd_tables, "regular-degree and d1* tables")
    p.add_argument("--which", choices=["table1", "d1star", "both"], default="both")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--ks", help="comma-separated k values")
    p.add_argument("--mu1", type=float, default=1.0)
    p.add_argument("--mu2", help="comma-separated mu2 values")
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--out")

    p = command("lambda0", cmd_lambda0, "min-max split rate of a selection family")
    p.add_argument("--family", help="path:n, sets:0,1;1,2 or graph:<graph spec>")
    p.add_argument("--rates")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out")

    p = command("couple", cmd_couple, "run coupled sample paths and check majorization")
    p.add_argument("--ref", choices=["ra", "mjsq", "jsq"], default="ra")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--events", type=int, default=20_000, help="events per seed")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    _rates(p)
    p.add_argument("--graph")
    p.add_argument("--family")
    p.add_argument("--rates")
    p.add_argument("--log", help="write the first seed's event log CSV here")
    return top


def _load_config(fname):
    try:
        text = Path(fname).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {fname}: {exc}") from exc
    try:
        data = json.loads(text) if str(fname).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {fname}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        data = _load_config(args.config)
        data = data.get(args.command, data)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {act.dest: act for act in sub._actions}
        aliases = {"lambda": "lam"}
        defaults = {}
        for key, value in data.items():
            dest = aliases.get(str(key), str(key).replace("-", "_"))
            if dest not in dests or dest in ("config", "help"):
                raise ConfigError(f"unknown option {key!r} in {args.config}")
            act = dests[dest]
            if act.type is not None and value is not None and not isinstance(value, (list, dict)):
                value = act.type(value)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantError, IntegrationError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
