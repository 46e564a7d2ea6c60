"""Command-line front end."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_catalog, load_config, map_from_entry, parse_number, to_jsonable
from .continuation import BranchAmbiguity
from .counting import CompletenessError, certified_t, pot_report, svg_plot
from .nli import cohomology_probe, random_branch_sequence, sni_probe, temporal_delta
from .orbits import OrbitStore, RefinementError, eventual_positivity, trace_count
from .sphere import RootFindingError, SphereError, is_inf
from .thermo import NumericFailure, PressureCurve, build_thermo, l2_decay_probe, spectral_decay_probe
from .tiles import (
    BudgetExceeded,
    CatalogError,
    CurveError,
    PreconditionViolated,
    build_catalog,
    check_joins_opposite_sides,
    curve_from_spec,
    estimate_expansion,
    realize_tiles,
    word_array,
)
from .zeta import IncompleteStore, log_zeta_partial

EXIT_PRECONDITION = 2
EXIT_NUMERIC = 3

PRECONDITION_ERRORS = (
    ConfigError,
    PreconditionViolated,
    CatalogError,
    CurveError,
    SphereError,
    BudgetExceeded,
    CompletenessError,
    IncompleteStore,
    FileNotFoundError,
)
NUMERIC_ERRORS = (NumericFailure, RootFindingError, BranchAmbiguity, RefinementError, FloatingPointError)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def point_cells(z):
    z = complex(z)
    if is_inf(z):
        return ["inf", "inf"]
    return [fmt(z.real), fmt(z.imag)]


class Run:
    """Per-invocation context: config, lazily built catalog and shared artifacts."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        cfg.apply_tolerances()
        self.out = Path(cfg.out)
        self._cat = None
        self._store = None
        self._thermo = None
        self.f = cfg.rational_map()

    @property
    def cat(self):
        if self._cat is None:
            self._cat = build_catalog(self.f, curve_from_spec(self.cfg.curve_spec()), n_iterate=self.cfg.n_iterate)
        return self._cat

    @property
    def phi(self):
        return self.cfg.catalog_potential(self.f)

    def store(self):
        if self._store is None:
            self._store = OrbitStore(self.cat, self.cfg.N_max, self.phi)
        return self._store

    def thermo(self):
        if self._thermo is None:
            self._thermo = build_thermo(self.cat, self.phi, self.cfg.m_grid, self.cfg.m_pressure)
        return self._thermo

    def write_csv(self, name: str, header, rows) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        buf.write(f"# {self.cfg.header()}\r\n")
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
        path = self.out / name
        path.write_text(buf.getvalue(), encoding="utf-8", newline="")
        return path

    def write_json(self, name: str, data: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        rec = {"tool": "primeorbit", "version": __version__, "config_hash": self.cfg.hash, **to_jsonable(data)}
        path = self.out / name
        path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_svg(self, name: str, svg: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        svg = svg.replace(">", f"><!-- {self.cfg.header()} -->", 1)
        path = self.out / name
        path.write_text(svg, encoding="utf-8")
        return path


def parse_grid(spec: str):
    """``a:b:step`` inclusive of b (within half a step)."""
    try:
        a, b, h = (float(x) for x in spec.split(":"))
    except ValueError as e:
        raise ConfigError(f"grid must look like a:b:step, got {spec!r}") from e
    if h <= 0 or b < a:
        raise ConfigError(f"bad grid {spec!r}")
    n = int(math.floor((b - a) / h + 0.5)) + 1
    return a + h * np.arange(n)


def parse_s_list(spec: str):
    return [parse_number(t) for t in spec.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_catalog(args, cfg):
    entries = load_catalog(cfg.catalog_path)
    rows = []
    for name, e in entries.items():
        f = map_from_entry(e)
        rows.append({"name": name, "degree": f.degree, "postcritical": [str(p) for p in e.get("postcritical", [])], "curve": e.get("curve"), "description": e.get("description", "")})
    print(json.dumps(rows, indent=2))
    return 0


def cmd_tiles(args, cfg):
    run = Run(cfg)
    cat = run.cat
    n = args.level or 1
    words = word_array(cat, n)
    pts, diam = realize_tiles(cat, words)
    rows = (["-".join(str(int(t)) for t in w), int(cat.sides[w[0]]), *point_cells(p), d] for w, p, d in zip(words, pts, diam))
    path = run.write_csv(f"tiles_L{n}.csv", ["word", "side0", "re", "im", "diam_estimate"], rows)
    joins, _ = check_joins_opposite_sides(cat)
    summary = {
        "map": run.f.name,
        "level": n,
        "tiles": int(len(words)),
        "expected": 2 * cat.degree**n,
        "black": int(np.sum(cat.colors[words[:, -1]] == 0)),
        "white": int(np.sum(cat.colors[words[:, -1]] == 1)),
        "joins_opposite_sides": bool(joins),
        "expansion_estimate": estimate_expansion(cat),
        "n_iterate": cat.n_iterate,
    }
    if joins:
        summary["advice"] = "a one-tile joins opposite sides; try a larger --iterate"
    if cat.curve.kind != "extended_real_line" or cat.post is None:
        summary["metric_warning"] = "chordal metric used as a surrogate; metric-sensitive claims are heuristic"
    run.write_json(f"tiles_L{n}.json", summary)
    print(f"{path}: {len(words)} tiles")
    return 0


def cmd_orbits(args, cfg):
    run = Run(cfg)
    store = run.store()
    rows = []
    for o in sorted(store.orbits, key=lambda o: (o.period, o.birkhoff)):
        word = "-".join(str(t) for t in o.word.letters) if o.word is not None else ""
        rows.append([o.period, *point_cells(o.representative), o.birkhoff, o.degree_weight, word, o.primitive])
    path = run.write_csv("orbits.csv", ["period", "re", "im", "weighted_length", "degree_weight", "word", "primitive"], rows)
    census = {
        str(n): {"points": lv.count, "trace": trace_count(run.cat, n), "word_multiplicity": int(lv.multiplicity.sum()), "primitive_orbits": len(store.primitive(n)), "failures": len(lv.failures)}
        for n, lv in store.levels.items()
    }
    run.write_json("orbits.json", {"N_max": cfg.N_max, "census": census})
    print(f"{path}: {len(rows)} orbits")
    return 0


def cmd_pressure(args, cfg):
    run = Run(cfg)
    grid = parse_grid(args.agrid)
    curve = PressureCurve(run.cat, run.phi, cfg.m_pressure)
    rows = [(a, cfg.m_pressure, curve(a)) for a in grid]
    path = run.write_csv("pressure.csv", ["a", "m", "p_value"], rows)
    print(f"{path}: {len(rows)} samples")
    return 0


def cmd_s0(args, cfg):
    run = Run(cfg)
    sol = run.thermo()
    rec = {"s0": sol.s0, "residual": sol.s0_residual, **{k: v for k, v in sol.diagnostics.items() if not k.startswith("_")}}
    run.write_json("s0.json", rec)
    print(f"s0 = {sol.s0:.12f}  residual = {sol.s0_residual:.3e}")
    return 0


def cmd_zeta(args, cfg):
    run = Run(cfg)
    store = run.store()
    s0 = run.thermo().s0
    rows, recs = [], []
    for s in parse_s_list(args.s):
        ev = log_zeta_partial(store, s, cfg.N_max, s0)
        for n, z in enumerate(ev.per_n, start=1):
            rows.append([fmt(s), n, z.real, z.imag])
        rec = {"s": s, "N": ev.N, "log_sum": ev.log_sum, "euler_log": ev.euler_log, "tail_estimate": ev.tail_estimate}
        if ev.divergence_region:
            rec["note"] = "divergence region, diagnostic only"
        recs.append(rec)
    run.write_csv("zeta.csv", ["s", "n", "re_Z", "im_Z"], rows)
    run.write_json("zeta.json", {"s0": s0, "evaluations": recs})
    for r in recs:
        print(f"s = {r['s']}: log zeta_N = {r['log_sum']}")
    return 0


def cmd_count(args, cfg):
    grid = parse_grid(args.tgrid) if args.tgrid else None
    run = Run(cfg)
    store = run.store()
    sol = run.thermo()
    cert = eventual_positivity(run.cat, run.phi)
    if grid is None:
        t_hi = certified_t(cfg.N_max, cert) * (1 - 1e-9)
        grid = np.linspace(max(1.0, 1.01 * math.log(2) / sol.s0), t_hi, 25)
    rep = pot_report(store, sol.s0, grid, cert)
    path = run.write_csv("count.csv", ["T", "pi", "li", "ratio", "secondary"], rep.rows())
    run.write_svg("count.svg", svg_plot(rep.T, rep.ratio, title=f"pi(T) / Li(exp(s0 T)), s0 = {sol.s0:.6f}"))
    run.write_json("count.json", {"s0": sol.s0, "slope": rep.slope, "oscillating": rep.oscillating, "lattice": rep.lattice, "swing": rep.swing, "converging": rep.converging, "notes": rep.notes})
    for note in rep.notes:
        print(note)
    print(f"{path}: last ratio {rep.ratio[-1]:.4f}")
    return 0


def cmd_sni(args, cfg):
    run = Run(cfg)
    rep = sni_probe(run.cat, run.phi, M=cfg.M_sni, N=cfg.N_sni, seed=cfg.seed)
    rows = ([ "-".join(map(str, r["word"])), r["d12"], r["diam"], r["max_ratio"]] for r in rep.samples)
    run.write_csv("sni.csv", ["tile", "d12", "diam", "max_ratio"], rows)
    rng = np.random.default_rng(cfg.seed)
    xi = random_branch_sequence(run.cat, 0, cfg.K_delta + 4, rng)
    x, y = run.cat.frame.from_disc(np.array([0.3, -0.3j]), np.array([0, 0]))
    delta, tb = temporal_delta(run.cat, run.phi, xi, x, y, cfg.K_delta)
    rec = {rep.label: rep.epsilon_estimate, "M": rep.M, "N": rep.N, "samples": len(rep.samples), "temporal_delta_sample": delta, "tail_bound": tb}
    if rep.inconclusive:
        rec["note"] = "probe inconclusive: sampled tiles and branches show no separation"
    run.write_json("sni.json", rec)
    print(f"{rep.label} = {rep.epsilon_estimate:.6g}")
    return 0


def cmd_cohom(args, cfg):
    run = Run(cfg)
    rep = cohomology_probe(run.store())
    run.write_json("cohom.json", {"spread": rep.spread, "orbits": len(rep.averages), "min_average": float(rep.averages.min()), "max_average": float(rep.averages.max())})
    print(f"spread = {rep.spread:.6g}")
    return 0


def cmd_probe_decay(args, cfg):
    run = Run(cfg)
    sol = run.thermo()
    rng = np.random.default_rng(cfg.seed)
    spec = spectral_decay_probe(sol, rng.normal(size=sol.ruelle.n))
    recs = {"s0": sol.s0, "spectral": {"norms": spec.norms, "ratio": spec.ratio, "envelope_ok": spec.envelope_ok}, "l2": []}
    for s in parse_s_list(args.s):
        rep = l2_decay_probe(sol, s)
        recs["l2"].append({"s": s, "norms": rep.norms, "ratio": rep.ratio})
    run.write_json("decay.json", recs)
    print(f"spectral ratio = {spec.ratio:.4f}")
    return 0


COMMANDS = {
    "catalog": cmd_catalog,
    "tiles": cmd_tiles,
    "orbits": cmd_orbits,
    "pressure": cmd_pressure,
    "s0": cmd_s0,
    "zeta": cmd_zeta,
    "count": cmd_count,
    "sni": cmd_sni,
    "cohom": cmd_cohom,
    "probe-decay": cmd_probe_decay,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON experiment file")
    common.add_argument("--map", help="catalog map name")
    common.add_argument("--iterate", type=int, dest="n_iterate", help="work with F = f^n")
    common.add_argument("--potential", help="constant:c | sample:a | coboundary:c,b")
    common.add_argument("--level", type=int, help="tile level (tiles) or grid level (thermo)")
    common.add_argument("--depth", type=int, help="pressure depth m, or branch depth N for sni")
    common.add_argument("--nmax", type=int, dest="N_max", help="largest orbit period")
    common.add_argument("--tgrid", help="T grid a:b:step")
    common.add_argument("--agrid", default="0:3:0.1", help="pressure grid a:b:step")
    common.add_argument("--s", default="2", help="comma-separated complex s values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--verify", action="store_true", default=None, help="serial reductions for bitwise reproducibility")
    p = argparse.ArgumentParser(prog="primeorbit", description="Prime orbit experiments for expanding Thurston maps.")
    p.add_argument("--version", action="version", version=f"primeorbit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(args) -> ExperimentConfig:
    over = {"map": args.map, "n_iterate": args.n_iterate, "potential": args.potential, "N_max": args.N_max, "seed": args.seed, "out": args.out, "verify": args.verify}
    if args.command == "sni":
        over["N_sni"] = args.depth
    else:
        over["m_pressure"] = args.depth
    if args.command != "tiles":
        over["m_grid"] = args.level
    return load_config(args.config, over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.verify:
            os.environ["ORBIT_THREADS"] = "1"
        return COMMANDS[args.command](args, cfg)
    except PRECONDITION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NUMERIC_ERRORS as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
