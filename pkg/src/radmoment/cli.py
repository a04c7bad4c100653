"""Command-line driver, snapshot CSV output, and error norms.

Commands:
    solve <config-file>                run a configured simulation
    scan --model mp2|mp3 ...           hyperbolicity-region scan to CSV
    speeds --order N --alpha-grid n    characteristic-speed table to CSV
    compare <run.csv> <ref.csv>        discrete error norms of E0

Exit codes: 0 success, 2 blow-up detected (diagnostic on stderr),
1 any other error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, basis
from .config import SolverConfig, parse_config
from .errors import BlowUpDetected, MeshMismatch, RadmomentError
from .problems import make_problem
from .solver import FieldState, run


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


def write_snapshot(state: FieldState, cfg: SolverConfig, path):
    """CSV with run metadata, one row per cell, 17 significant digits."""
    z = state.grid.centers()
    N = state.N
    cols = ["z"] + [f"E{k}" for k in range(N + 1)] + ["e", "T"]
    with open(path, "w") as fh:
        fh.write(
            f"# model={cfg.model} order={cfg.order} t={state.t!r} "
            f"n_cells={state.grid.n_cells} cfl={cfg.cfl!r} "
            f"path_k={cfg.path_exponent}\n"
        )
        fh.write(",".join(cols) + "\n")
        for i in range(state.grid.n_cells):
            row = [z[i]] + [state.E[k, i] for k in range(N + 1)] + [state.e[i], state.T[i]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_snapshot(path):
    """(metadata dict, z array, column dict) from a snapshot CSV."""
    meta = {}
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line.lstrip("# ").split():
                    if "=" in part:
                        k, _, v = part.partition("=")
                        meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(x) for x in line.split(",")])
    data = np.asarray(rows, dtype=float)
    table = {name: data[:, i] for i, name in enumerate(header)}
    return meta, table["z"], table


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------


def error_norms(run_output, reference_output, column="E0"):
    """Discrete L1/L2/Linf and relative L2 of one column between two outputs.

    Outputs are snapshot file paths or (z, values) pairs on the same
    mesh; cell width weights the integral norms and summation order is
    fixed (left to right) for determinism.
    """
    z1, v1 = _column(run_output, column)
    z2, v2 = _column(reference_output, column)
    if z1.shape != z2.shape or not np.allclose(z1, z2, rtol=0.0, atol=1e-12):
        raise MeshMismatch("outputs are not on the same mesh")
    dz = float(z1[1] - z1[0]) if len(z1) > 1 else 1.0
    diff = [float(a - b) for a, b in zip(v1, v2)]
    l1 = math.fsum(abs(d) for d in diff) * dz
    l2 = math.sqrt(math.fsum(d * d for d in diff) * dz)
    linf = max((abs(d) for d in diff), default=0.0)
    ref2 = math.sqrt(math.fsum(float(b) * float(b) for b in v2) * dz)
    rel = l2 / ref2 if ref2 > 0.0 else (0.0 if l2 == 0.0 else float("inf"))
    return {"L1": l1, "L2": l2, "Linf": linf, "relative_L2": rel}


def _column(source, column):
    if isinstance(source, (str, Path)):
        _, z, table = read_snapshot(source)
        return z, table[column]
    z, v = source
    return np.asarray(z, dtype=float), np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_solve(args):
    cfg = parse_config(Path(args.config).read_text())
    problem = make_problem(
        cfg.problem,
        a=cfg.radiation_constant,
        c=cfg.light_speed,
        t_end=cfg.t_end,
        z_left=cfg.z_left,
        z_right=cfg.z_right,
    )
    result = run(problem, cfg)
    out = cfg.output or args.output
    if out:
        outp = Path(out)
        for snap in result.snapshots[:-1]:
            suffixed = outp.with_name(f"{outp.stem}_t{snap.t:g}{outp.suffix}")
            write_snapshot(snap, cfg, suffixed)
        write_snapshot(result.snapshots[-1], cfg, outp)
    print(f"completed {result.n_steps} steps to t={result.final.t:.6g}"
          + (" (steady state)" if result.steady else ""))
    return 0


def _cmd_scan(args):
    N = {"mp2": 2, "mp3": 3}[args.model]
    scan = analysis.scan_real_region(N, e3_over_e0=args.e3, resolution=args.grid)
    scan.to_csv(args.output)
    print(
        f"scan N={N}: real={scan.count('real')} nonreal={scan.count('nonreal')} "
        f"unrealizable={scan.count('unrealizable')} -> {args.output}"
    )
    return 0


def _cmd_speeds(args):
    alphas = np.linspace(-args.alpha_max, args.alpha_max, args.alpha_grid)
    with open(args.output, "w") as fh:
        fh.write("alpha," + ",".join(f"lambda_{k}" for k in range(args.order + 1)) + "\n")
        for al in alphas:
            lam = basis.characteristic_speeds(float(al), args.order)
            fh.write(f"{al:.17g}," + ",".join(f"{v:.17g}" for v in lam) + "\n")
    print(f"wrote {args.alpha_grid} speed rows -> {args.output}")
    return 0


def _cmd_compare(args):
    norms = error_norms(args.run, args.reference)
    for key in ("L1", "L2", "Linf", "relative_L2"):
        print(f"{key} = {norms[key]:.12e}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="radmoment",
                                description="slab radiative-transfer moment models")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run a configured simulation")
    sp.add_argument("config")
    sp.add_argument("--output", default=None, help="override config output path")
    sp.set_defaults(fn=_cmd_solve)

    sc = sub.add_parser("scan", help="hyperbolicity-region scan of the plain closure")
    sc.add_argument("--model", choices=("mp2", "mp3"), required=True)
    sc.add_argument("--e3", type=float, default=0.0, help="fixed E3/E0 (mp3 only)")
    sc.add_argument("--grid", type=int, default=100, help="points per axis")
    sc.add_argument("--output", default="scan.csv")
    sc.set_defaults(fn=_cmd_scan)

    ss = sub.add_parser("speeds", help="characteristic speeds over an alpha grid")
    ss.add_argument("--order", type=int, required=True)
    ss.add_argument("--alpha-grid", type=int, default=101)
    ss.add_argument("--alpha-max", type=float, default=0.99)
    ss.add_argument("--output", default="speeds.csv")
    ss.set_defaults(fn=_cmd_speeds)

    cp = sub.add_parser("compare", help="error norms of E0 between two snapshots")
    cp.add_argument("run")
    cp.add_argument("reference")
    cp.set_defaults(fn=_cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BlowUpDetected as err:
        print(f"blow-up detected: {err}", file=sys.stderr)
        return 2
    except (RadmomentError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
