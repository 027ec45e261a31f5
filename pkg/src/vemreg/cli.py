"""Experiment driver: convergence and conditioning studies from the shell.

Subcommands:
    run      solve one (problem, space, family, stabilization) sweep over a
             refinement sequence and emit a CSV report plus plot data files
    sweep    condition numbers for every admissible (U, alpha) pair in one
             wide table
    meshgen  write a mesh file in the plain-text polygon format

Options may come from a key=value config file (--config) with command-line
flags taking precedence.
"""

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import analysis, assembly, mesh as meshmod, solve
from .analysis import ErrorReport, ExactSolution, LevelResult
from .assembly import ALPHA_BY_P1, ElementFactory, StabConfig
from .space import GlobalDofMap, SpaceParams, dofs_tuple

PROBLEMS = ("poisson", "biharmonic")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "poisson"
    p2: int = 1
    r: int = 2
    family: str = "QUAD"
    levels: tuple = (8, 16, 32)
    stab_u: str = "I"
    stab_alpha: str = None     # default depends on the problem
    tol: float = 1e-12
    maxit: int = 30000
    seed: int = 0
    out: str = "report.csv"
    dump_matrices: bool = False

    @property
    def p1(self):
        return 1 if self.problem == "poisson" else 2

    def space_params(self):
        return SpaceParams(p1=self.p1, p2=self.p2, r=self.r)

    def stab(self):
        alpha = self.stab_alpha
        if alpha is None:
            alpha = ALPHA_BY_P1[self.p1][0]
        return StabConfig(u=self.stab_u, alpha=alpha)

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if not self.levels:
            raise ValueError("refinement level list must not be empty")
        if any(n < 2 for n in self.levels):
            raise ValueError("levels must be >= 2")
        self.space_params()
        self.stab().validate(self.p1)
        return self


def solve_level(cfg, n, factory=None, f=None, g_derivs=None):
    """Assemble and solve one refinement level.

    The error fields use a sparse direct solve (the CG iterate at its
    attainable residual floor would pollute the fine-level error norms);
    CG supplies the Lanczos condition estimate and the iteration count.
    """
    exact = ExactSolution()
    if f is None:
        f = exact.load(cfg.p1)
    m = meshmod.generate(cfg.family, n, seed=cfg.seed)
    mets = meshmod.metrics(m)
    tup = dofs_tuple(cfg.space_params())
    factory = factory or ElementFactory(m, mets, tup, cfg.stab(), cfg.p1)
    system = assembly.assemble(m, tup, cfg.stab(), f, g_derivs=g_derivs,
                               mets=mets, factory=factory)
    A_ff, b_f = system.reduced()
    x_free = spla.spsolve(A_ff.tocsc(), b_f)
    x = system.expand(x_free)
    _, rep = solve.cg(A_ff, b_f, tol=cfg.tol, maxit=cfg.maxit)
    gmap = system.gmap
    return m, factory, gmap, system, x, rep


def run(cfg):
    """Run the configured experiment; returns (ErrorReport, eoc summary)."""
    cfg.validate()
    exact = ExactSolution()
    report = ErrorReport(problem=cfg.problem)
    for n in cfg.levels:
        m, factory, gmap, system, x, rep = solve_level(cfg, n)
        energy = analysis.energy_error(m, factory, gmap, x, exact, cfg.p1)
        if cfg.problem == "poisson":
            second = analysis.l2_error(m, factory, gmap, x, exact)
        else:
            second = analysis.linf_error(m, factory, gmap, x, exact)
        report.levels.append(LevelResult(
            family=cfg.family, one_over_h=n, n_elems=m.n_elements,
            n_dofs=gmap.n_dofs, stab_u=cfg.stab_u,
            stab_alpha=cfg.stab().alpha, energy_err=energy,
            second_err=second,
            cond_est=rep.cond if rep.cond_available else np.nan,
            cg_iters=rep.iterations))
        if cfg.dump_matrices:
            _dump_matrices(cfg, n, m, factory, system)
    if cfg.out:
        write_report_csv(report, cfg.out)
        write_plot_data(report, cfg.out)
    return report


def sweep(cfg):
    """Condition numbers for all admissible (U, alpha) pairs, one wide table
    per refinement sequence (the layout of the paper-style tables)."""
    cfg.validate()
    combos = [(u, a) for u in ("I", "Dperp") for a in ALPHA_BY_P1[cfg.p1]]
    rows = []
    for n in cfg.levels:
        row = {"family": cfg.family, "one_over_h": n}
        for u, a in combos:
            sub = replace(cfg, stab_u=u, stab_alpha=a, out="")
            m, factory, gmap, system, x, rep = solve_level(sub, n)
            row["n_dofs"] = gmap.n_dofs
            row[f"cond_{u}_{a}"] = rep.cond if rep.cond_available else np.nan
            row[f"iters_{u}_{a}"] = rep.iterations
        rows.append(row)
    if cfg.out:
        cols = ["family", "one_over_h", "n_dofs"] + \
            [f"cond_{u}_{a}" for u, a in combos] + \
            [f"iters_{u}_{a}" for u, a in combos]
        with open(cfg.out, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row.get(c)) for c in cols) + "\n")
    return rows


def meshgen(family, n, seed, path):
    m = meshmod.generate(family, n, seed=seed)
    meshmod.write_mesh(m, path)
    return m


# ---------------------------------------------------------------------------
# CSV / plot emission
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "na" if not np.isfinite(v) else f"{v:.12e}"
    return str(v)


def write_report_csv(report, path):
    cols = ["family", "one_over_h", "n_elems", "n_dofs", "stab_u",
            "stab_alpha", "energy_err", report.second_err_name,
            "cond_est", "cg_iters"]
    with open(path, "w") as fh:
        fh.write(f"# problem={report.problem}\n")
        fh.write(",".join(cols) + "\n")
        for lv in report.levels:
            fh.write(",".join(_fmt(v) for v in (
                lv.family, lv.one_over_h, lv.n_elems, lv.n_dofs, lv.stab_u,
                lv.stab_alpha, lv.energy_err, lv.second_err, lv.cond_est,
                lv.cg_iters)) + "\n")
        if len(report.levels) >= 2:
            fh.write(f"# energy_eoc_slope={report.energy_eoc().slope:.6f}\n")
            fh.write(f"# {report.second_err_name}_eoc_slope="
                     f"{report.second_eoc().slope:.6f}\n")
            cs = report.cond_slope()
            fh.write(f"# cond_growth_slope="
                     f"{'na' if not np.isfinite(cs) else f'{cs:.6f}'}\n")


def read_report_csv(path):
    """Parse a report CSV back into an ErrorReport (round-trip of run())."""
    problem = "poisson"
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "problem=" in line:
                    problem = line.split("problem=", 1)[1].strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    rep = ErrorReport(problem=problem)
    for row in rows:
        second_key = "l2_err" if "l2_err" in row else "linf_err"
        cond = row["cond_est"]
        rep.levels.append(LevelResult(
            family=row["family"], one_over_h=int(row["one_over_h"]),
            n_elems=int(row["n_elems"]), n_dofs=int(row["n_dofs"]),
            stab_u=row["stab_u"], stab_alpha=row["stab_alpha"],
            energy_err=float(row["energy_err"]),
            second_err=float(row[second_key]),
            cond_est=np.nan if cond == "na" else float(cond),
            cg_iters=int(row["cg_iters"])))
    return rep


def write_plot_data(report, out_path):
    """Two-column (h, value) series next to the CSV, one file per curve."""
    stem = os.path.splitext(out_path)[0]
    series = {
        "energy": [lv.energy_err for lv in report.levels],
        report.second_err_name.replace("_err", ""):
            [lv.second_err for lv in report.levels],
        "cond": [lv.cond_est for lv in report.levels],
    }
    hs = report.hs()
    for name, vals in series.items():
        with open(f"{stem}.{name}.dat", "w") as fh:
            for h, v in zip(hs, vals):
                if np.isfinite(v):
                    fh.write(f"{h:.17g} {v:.17g}\n")


def _dump_matrices(cfg, n, m, factory, system):
    outdir = f"{os.path.splitext(cfg.out or 'dump')[0]}.matrices.n{n}"
    os.makedirs(outdir, exist_ok=True)
    assembly.export_matrix(system, os.path.join(outdir, "global.txt"))
    for elem in m.elements:
        ls, pack, _ = factory.build(elem)
        for name, mat in (("D", pack.D), ("G", pack.G), ("B", pack.B),
                          ("Pi", pack.pi_star)):
            path = os.path.join(outdir, f"elem{elem.id}_{name}.txt")
            with open(path, "w") as fh:
                for row in np.atleast_2d(mat):
                    fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _read_config_file(path):
    opts = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (need key=value): {line}")
            key, val = line.split("=", 1)
            opts[key.strip().replace("-", "_")] = val.strip()
    return opts


def _build_config(args):
    opts = {}
    if args.config:
        opts.update(_read_config_file(args.config))
    for key in ("problem", "p2", "r", "family", "levels", "stab_u",
                "stab_alpha", "tol", "maxit", "seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if getattr(args, "dump_matrices", False):
        opts["dump_matrices"] = True
    if "levels" in opts and isinstance(opts["levels"], str):
        opts["levels"] = tuple(int(t) for t in opts["levels"].split(","))
    for key, cast in (("p2", int), ("r", int), ("tol", float),
                      ("maxit", int), ("seed", int)):
        if key in opts:
            opts[key] = cast(opts[key])
    return ExperimentConfig(**opts).validate()


def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--p2", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--family", choices=meshmod.FAMILIES)
    p.add_argument("--levels", help="comma-separated 1/h values, e.g. 8,16,32")
    p.add_argument("--stab-u", dest="stab_u", choices=assembly.U_CHOICES)
    p.add_argument("--stab-alpha", dest="stab_alpha",
                   choices=assembly.ALPHA_CHOICES)
    p.add_argument("--tol", type=float)
    p.add_argument("--maxit", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--dump-matrices", dest="dump_matrices",
                   action="store_true", default=False)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vemreg",
        description="conforming virtual element experiments on the unit "
                    "square (Poisson / biharmonic)")
    subs = parser.add_subparsers(dest="command", required=True)
    p_run = subs.add_parser("run", help="convergence/conditioning run")
    _add_common(p_run)
    p_sweep = subs.add_parser("sweep", help="all (U, alpha) combinations")
    _add_common(p_sweep)
    p_mesh = subs.add_parser("meshgen", help="write a mesh file")
    p_mesh.add_argument("family", choices=meshmod.FAMILIES)
    p_mesh.add_argument("n", type=int)
    p_mesh.add_argument("path")
    p_mesh.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        if args.command == "meshgen":
            m = meshgen(args.family, args.n, args.seed, args.path)
            print(f"wrote {args.path}: {m.n_elements} elements, "
                  f"{m.n_vertices} vertices")
            return 0
        cfg = _build_config(args)
        if args.command == "run":
            report = run(cfg)
            e = report.energy_eoc().slope if len(report.levels) > 1 else None
            s = report.second_eoc().slope if len(report.levels) > 1 else None
            print(f"wrote {cfg.out} ({len(report.levels)} levels)")
            if e is not None:
                print(f"energy EOC slope {e:.3f}, "
                      f"{report.second_err_name} EOC slope {s:.3f}, "
                      f"cond growth slope {report.cond_slope():.3f}")
        else:
            sweep(cfg)
            print(f"wrote {cfg.out}")
        return 0
    except (ValueError, meshmod.MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
