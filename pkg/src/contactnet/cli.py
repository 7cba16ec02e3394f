"""Command-line entry point: ``contactnet <subcommand> ...``.

Every subcommand writes only below ``--out`` and leaves a ``manifest.json``
there recording the command line, the resolved configuration, the seed, the
package version and a SHA-256 digest of each output file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import DEFAULT_MINUTE_MAP, load_diary, load_roster, write_diary, write_roster
from .dyads import COVARIATE_SETS, build_design, resolve_covariates
from .epidemic import (
    PSI_GRID,
    EpiParams,
    epidemiological_importance,
    final_sizes,
    kendall_tau,
    resolve_threads,
    summarize_final_sizes,
)
from .errors import ContactNetError, ConvergenceWarning
from .estimator import FittedModel, fit, format_table
from .likelihood import MODELS, assemble
from .netsim import (
    SimNetwork,
    original_network,
    random_mixing_network,
    read_edgelist,
    shuffle_edges,
    simulate_ensemble,
    write_edgelist,
)
from .spacesyntax import (
    DISTANCE_KINDS,
    build_segment_graph,
    distance_matrix,
    linemap_to_json,
    parse_linemap,
    read_distance_csv,
    write_distance_csv,
)
from .synthetic import DEFAULT_THETA, generate_synthetic, synthetic_linemap, synthetic_roster

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2
_ARGV = []

MODEL_ALIASES = {
    "binary": "binary_latent",
    "ordinal": "ordinal_latent",
    "multinomial": "multinomial_latent",
    "standard-ordinal": "ordinal_standard",
    "standard-binary": "binary_standard",
}
MODEL_CHOICES = tuple(MODEL_ALIASES) + tuple(MODELS)
TAU_PSI = (0.009, 0.045, 0.090, 0.135)


def stage_seed(root, *path):
    """Independent 63-bit seed for a named stage of a run."""
    words = [int(root)] + [int.from_bytes(hashlib.sha256(str(p).encode()).digest()[:4], "little") for p in path]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)


def model_kind(name):
    return MODEL_ALIASES.get(name, name)


def parse_minute_map(text):
    if not text:
        return dict(DEFAULT_MINUTE_MAP)
    if isinstance(text, dict):
        return {int(k): float(v) for k, v in text.items()}
    out = {}
    for item in text.split(","):
        k, v = item.split(":")
        out[int(k)] = float(v)
    if sorted(out) != [1, 2, 3, 4]:
        raise ValueError("minute map needs entries for categories 1, 2, 3 and 4")
    return out


def parse_psi(text):
    if text in (None, "", "grid"):
        return PSI_GRID
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, out, command, config, seed):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.root = self.out.resolve()
        self.command = command
        self.config = config
        self.seed = seed
        self.outputs = []

    def path(self, name):
        p = (self.out / name)
        if self.root not in p.resolve().parents and p.resolve() != self.root:
            raise ValueError(f"refusing to write outside {self.out}: {name}")
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return p

    def write_json(self, name, doc):
        self.path(name).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")

    def write_text(self, name, text):
        self.path(name).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")

    def finish(self):
        digests = {}
        for name in sorted(set(self.outputs)):
            digests[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        manifest = {"command": self.command, "argv": _ARGV, "version": __version__, "seed": self.seed,
                    "config": self.config, "outputs": digests}
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _csv_line(values):
    return ",".join(_fmt(v) for v in values)


def _fmt(v):
    if isinstance(v, float):
        if v != v:
            return "NA"
        return repr(round(v, 10))
    return str(v)


# -- inputs -----------------------------------------------------------------

def _distances(args_or_cfg, roster, run=None):
    """Distance matrix in full-roster order from a CSV or a line map."""
    get = args_or_cfg.get
    if get("distances"):
        ids, matrix = read_distance_csv(get("distances"))
        return ids, matrix
    if get("linemap"):
        graph = build_segment_graph(parse_linemap(get("linemap")))
        matrix = distance_matrix(graph, roster, get("distance") or "metric")
        if run is not None:
            write_distance_csv(matrix, roster.ids, run.path("distances.csv"))
        return roster.ids, matrix
    n = roster.n
    warnings.warn("no distances or line map given; the distance covariate is zero", UserWarning, stacklevel=2)
    return roster.ids, np.zeros((n, n))


def _present_design(roster, ids, distances):
    dist_ids, matrix = distances
    pos = {pid: k for k, pid in enumerate(dist_ids)}
    missing = [pid for pid in ids if pid not in pos]
    if missing:
        raise ContactNetError(f"no distances for {', '.join(missing)}")
    take = [pos[pid] for pid in ids]
    return build_design(roster.subset(ids), matrix[np.ix_(take, take)])


def _fit_one(run, name, kind, covariates, data_args, roster, reported, distances):
    data = assemble(roster, reported, distances, resolve_covariates(covariates))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fitted = fit(kind, data, covariates=covariates, distance=data_args.get("distance") or "",
                     day=reported.day)
    flagged = any(issubclass(w.category, ConvergenceWarning) for w in caught) or not fitted.converged
    run.write_json(f"fit_{name}.json", fitted.to_json())
    run.write_text(f"fit_{name}.txt", format_table(fitted))
    return fitted, flagged


# -- subcommands --------------------------------------------------------------

def cmd_synth(args):
    cfg = {"n": args.n, "day": args.day, "distance": args.distance}
    run = Run(args.out, "synth", cfg, args.seed)
    roster = synthetic_roster(args.n, seed=stage_seed(args.seed, "roster"))
    linemap = synthetic_linemap(roster)
    graph = build_segment_graph(linemap)
    matrix = distance_matrix(graph, roster, args.distance)
    truth, reported = generate_synthetic(roster, DEFAULT_THETA, "ordinal_latent",
                                         seed=stage_seed(args.seed, "reports"), distances=matrix,
                                         day=args.day)
    write_roster(roster, run.path("roster.csv"), run.path("projects.csv"))
    run.write_json("linemap.json", linemap_to_json(linemap))
    write_diary(reported, run.path(f"diary_{args.day}.csv"))
    write_edgelist(SimNetwork(roster.ids, truth.D_true.astype(float), "original"), run.path("true_categories.csv"))
    run.finish()
    return EXIT_OK


def cmd_distances(args):
    kinds = DISTANCE_KINDS if args.kind == "all" else (args.kind,)
    run = Run(args.out, "distances", {"roster": args.roster, "linemap": args.linemap, "kinds": list(kinds)},
              args.seed)
    roster = load_roster(args.roster)
    graph = build_segment_graph(parse_linemap(args.linemap))
    for kind in kinds:
        write_distance_csv(distance_matrix(graph, roster, kind), roster.ids, run.path(f"distances_{kind}.csv"))
    run.finish()
    return EXIT_OK


def cmd_fit(args):
    kind = model_kind(args.model)
    cfg = {"roster": args.roster, "diary": args.diary, "day": args.day, "model": kind,
           "covariates": args.covariates, "distance": args.distance, "distances": args.distances,
           "linemap": args.linemap}
    run = Run(args.out, "fit", cfg, args.seed)
    roster = load_roster(args.roster)
    reported = load_diary(args.diary, roster, args.day)
    distances = _distances(cfg, roster, run)
    fitted, flagged = _fit_one(run, kind, kind, args.covariates, cfg, roster, reported, distances)
    print(format_table(fitted))
    run.finish()
    return EXIT_FLAGGED if flagged else EXIT_OK


def _ensemble_dir(run, kind, nets):
    for k, net in enumerate(nets):
        write_edgelist(net, run.path(f"networks/{kind}/{k:04d}.csv"))


def _write_ids(run, ids):
    run.write_text("networks/ids.csv", "id\n" + "\n".join(ids))


def cmd_simulate_net(args):
    cfg = {"fit": args.fit, "roster": args.roster, "diary": args.diary, "day": args.day,
           "distances": args.distances, "linemap": args.linemap, "distance": args.distance,
           "realizations": args.realizations, "minute_map": args.minute_map, "swaps": args.swaps,
           "kinds": args.kinds}
    run = Run(args.out, "simulate-net", cfg, args.seed)
    fitted = FittedModel.from_json(Path(args.fit).read_text(encoding="utf-8"))
    roster = load_roster(args.roster)
    if args.diary:
        roster = roster.subset(load_diary(args.diary, roster, args.day).ids)
    cfg["distance"] = cfg["distance"] or fitted.distance or None
    distances = _distances(cfg, roster)
    design = _present_design(roster, roster.ids, distances)
    minute_map = parse_minute_map(args.minute_map)
    kinds = [k.strip() for k in args.kinds.split(",")]
    fitted_nets = simulate_ensemble(fitted, design, args.realizations, stage_seed(args.seed, "fitted"),
                                    minute_map)
    _write_ids(run, design.ids)
    if "fitted" in kinds:
        _ensemble_dir(run, "fitted", fitted_nets)
    if "shuffled" in kinds:
        _ensemble_dir(run, "shuffled", [shuffle_edges(net, args.swaps, stage_seed(args.seed, "shuffle", k))
                                        for k, net in enumerate(fitted_nets)])
    if "random_mixing" in kinds:
        _ensemble_dir(run, "random_mixing",
                      [random_mixing_network(fitted, stage_seed(args.seed, "mixing", k), design, minute_map)
                       for k in range(args.realizations)])
    run.finish()
    return EXIT_OK


def cmd_shuffle(args):
    cfg = {"network": args.network, "ids": args.ids, "swaps": args.swaps}
    run = Run(args.out, "shuffle", cfg, args.seed)
    ids = _read_ids(args.ids) if args.ids else None
    net = read_edgelist(args.network, ids)
    write_edgelist(shuffle_edges(net, args.swaps, stage_seed(args.seed, "shuffle", 0)), run.path("shuffled.csv"))
    run.finish()
    return EXIT_OK


def _read_ids(path):
    lines = Path(path).read_text(encoding="utf-8").split()
    return tuple(lines[1:]) if lines and lines[0] == "id" else tuple(lines)


def _load_ensembles(directory):
    directory = Path(directory)
    ids_file = directory / "ids.csv"
    ids = _read_ids(ids_file) if ids_file.exists() else None
    ensembles = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.csv"))
        if files:
            ensembles[sub.name] = [read_edgelist(f, ids) for f in files]
    if not ensembles:
        raise ContactNetError(f"{directory}: no network subdirectories with edge lists")
    return ensembles


def epidemic_tables(run, ensembles, psis, runs, seed, threads, tau_psi=TAU_PSI, references=None):
    """Final-size CSV (psi x network kind) and the Kendall tau table."""
    lines = ["psi,network,mean,ci_low,ci_high,se,runs"]
    for psi in psis:
        params = EpiParams(psi)
        for kind, nets in ensembles.items():
            # a single network gets as many runs as a whole ensemble
            per_net = runs if len(nets) > 1 else runs * max(len(v) for v in ensembles.values())
            sizes = final_sizes(nets, params, per_net, stage_seed(seed, "epidemic", kind, psi), threads)
            s = summarize_final_sizes(sizes, stage_seed(seed, "bootstrap", kind, psi))
            lines.append(_csv_line([psi, kind, s.mean, s.ci_low, s.ci_high, s.se, s.runs]))
    run.write_text("final_size.csv", "\n".join(lines))

    kinds = list(ensembles)
    references = [r for r in (references or kinds[:2]) if r in ensembles]
    head = ["reference", "psi"] + kinds
    tau_lines = [",".join(head)]
    for ref in references:
        for psi in tau_psi:
            imp = {k: np.mean([epidemiological_importance(n, psi) for n in nets], axis=0)
                   for k, nets in ensembles.items()}
            row = [ref, psi]
            for k in kinds:
                if k == ref:
                    row.append("n/a")
                    continue
                try:
                    row.append(round(kendall_tau(imp[ref], imp[k]).tau, 10))
                except ContactNetError:
                    row.append("NA")
            tau_lines.append(_csv_line(row))
    run.write_text("tau.csv", "\n".join(tau_lines))


def cmd_epidemic(args):
    psis = parse_psi(args.psi)
    cfg = {"networks": args.networks, "psi": list(psis), "runs": args.runs}
    run = Run(args.out, "epidemic", cfg, args.seed)
    ensembles = _load_ensembles(args.networks)
    epidemic_tables(run, ensembles, psis, args.runs, args.seed, args.threads)
    run.finish()
    return EXIT_OK


PIPELINE_DEFAULTS = {
    "roster": "roster.csv",
    "projects": None,
    "diary": "diary_Mon.csv",
    "day": "Mon",
    "linemap": "linemap.json",
    "distances": None,
    "distance": "angular",
    "models": {"full": {"model": "ordinal_latent", "covariates": "full"}},
    "realizations": 100,
    "runs": 1000,
    "psi": "grid",
    "tau_psi": list(TAU_PSI),
    "swaps": 100000,
    "minute_map": None,
}


def load_pipeline_config(path):
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    cfg = {**PIPELINE_DEFAULTS, **doc}
    for key in ("roster", "projects", "diary", "linemap", "distances"):
        if cfg.get(key):
            cfg[key] = str((path.parent / cfg[key]).resolve()) if not Path(cfg[key]).is_absolute() else cfg[key]
    return cfg


def cmd_pipeline(args):
    cfg = load_pipeline_config(args.config)
    for key in ("realizations", "runs", "swaps"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cfg["seed"] = seed
    run = Run(args.out, "pipeline", cfg, seed)

    roster = load_roster(cfg["roster"], cfg.get("projects"))
    reported = load_diary(cfg["diary"], roster, cfg["day"])
    distances = _distances(cfg, roster, run)
    design = _present_design(roster, reported.ids, distances)
    minute_map = parse_minute_map(cfg.get("minute_map"))

    flagged = False
    ensembles = {"original": [original_network(reported)]}
    first = None
    for name, spec in cfg["models"].items():
        fitted, bad = _fit_one(run, name, model_kind(spec["model"]), spec.get("covariates", "full"), cfg,
                               roster, reported, distances)
        flagged |= bad
        nets = simulate_ensemble(fitted, design, cfg["realizations"], stage_seed(seed, "simulate", name),
                                 minute_map)
        ensembles[name] = nets
        if first is None:
            first = (name, fitted, nets)
    name, fitted, nets = first
    ensembles["shuffled"] = [shuffle_edges(net, cfg["swaps"], stage_seed(seed, "shuffle", k))
                             for k, net in enumerate(nets)]
    ensembles["random_mixing"] = [random_mixing_network(fitted, stage_seed(seed, "mixing", k), design, minute_map)
                                  for k in range(cfg["realizations"])]
    _write_ids(run, design.ids)
    for kind, nets in ensembles.items():
        _ensemble_dir(run, kind, nets)
    epidemic_tables(run, ensembles, parse_psi(cfg["psi"]), cfg["runs"], seed, args.threads,
                    tuple(cfg["tau_psi"]), references=["original", name])
    run.finish()
    return EXIT_FLAGGED if flagged else EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    def global_flags(suppress):
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--seed", type=int, default=None, help="root random seed (default 0)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $CONTACTNET_THREADS or 1)")
        if suppress:
            # also accepted after the subcommand, without clobbering earlier values
            for action in p._actions:
                action.default = argparse.SUPPRESS
        return p

    common = global_flags(True)
    parser = argparse.ArgumentParser(prog="contactnet", parents=[global_flags(False)],
                                     description="Contact-diary network models and workplace epidemics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs(p, diary=True):
        p.add_argument("--roster", required=True)
        if diary:
            p.add_argument("--diary", required=True)
            p.add_argument("--day", default="Mon")
        dist = p.add_mutually_exclusive_group()
        dist.add_argument("--distances", help="distance matrix CSV (id header row)")
        dist.add_argument("--linemap", help="line map JSON; distances computed on the fly")
        p.add_argument("--distance", choices=DISTANCE_KINDS, default=None,
                       help="distance measure used with --linemap")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic roster, line map and diary")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--day", default="Mon")
    p.add_argument("--distance", choices=DISTANCE_KINDS, default="angular")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("distances", parents=[common], help="desk-to-desk distance matrices")
    p.add_argument("--roster", required=True)
    p.add_argument("--linemap", required=True)
    p.add_argument("--kind", choices=DISTANCE_KINDS + ("all",), default="all")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("fit", parents=[common], help="fit a dyad model to one day's diary")
    inputs(p)
    p.add_argument("--model", choices=MODEL_CHOICES, default="ordinal")
    p.add_argument("--covariates", default="full",
                   help=f"{', '.join(COVARIATE_SETS)} or a comma-separated covariate list")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate-net", parents=[common], help="draw networks from a fitted model")
    p.add_argument("--fit", required=True, help="fit JSON written by 'fit'")
    inputs(p, diary=False)
    p.add_argument("--diary", help="restrict to persons present in this diary")
    p.add_argument("--day", default="Mon")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--minute-map", default=None, help="e.g. 1:3,2:10,3:38,4:120")
    p.add_argument("--swaps", type=int, default=100000)
    p.add_argument("--kinds", default="fitted,shuffled,random_mixing")
    p.set_defaults(func=cmd_simulate_net)

    p = sub.add_parser("shuffle", parents=[common], help="shuffle dyad durations of one network")
    p.add_argument("--network", required=True, help="edge list CSV (i,j,minutes)")
    p.add_argument("--ids", help="node id file; isolated nodes are otherwise lost")
    p.add_argument("--swaps", type=int, default=100000)
    p.set_defaults(func=cmd_shuffle)

    p = sub.add_parser("epidemic", parents=[common], help="final sizes and importance ranks")
    p.add_argument("--networks", required=True, help="directory with one subdirectory per network kind")
    p.add_argument("--psi", default="grid", help="'grid' or comma-separated per-minute probabilities")
    p.add_argument("--runs", type=int, default=1000, help="runs per network")
    p.set_defaults(func=cmd_epidemic)

    p = sub.add_parser("pipeline", parents=[common], help="fit, simulate and run epidemics from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--swaps", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    global _ARGV
    parser = build_parser()
    _ARGV = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_ARGV)
    if args.command != "pipeline" and args.seed is None:
        args.seed = 0
    try:
        args.threads = resolve_threads(args.threads)
        return args.func(args)
    except (ContactNetError, OSError, ValueError, KeyError) as exc:
        print(f"contactnet: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
