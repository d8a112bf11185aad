"""Command-line entry point.

Verbs:

* ``run`` — execute a benchmark sweep from a YAML config file.
* ``verify`` — run the built-in acceptance checks and print a table.
* ``list`` — enumerate formulation/preconditioner cells with feasibility
  and operator budgets.
* ``export-mesh`` — write a sphere mesh as Gmsh ASCII 2.2.

The ``HELMBEM_THREADS`` environment variable caps the BLAS/OpenMP thread
count before numerical modules load.
"""

from __future__ import annotations

import argparse
import os
import sys

THREAD_ENV = "HELMBEM_THREADS"


def _apply_thread_limit():
    threads = os.environ.get(THREAD_ENV)
    if not threads:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(var, threads)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helmbem",
        description="Boundary-element benchmarks for acoustic transmission "
        "through penetrable objects.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a benchmark sweep from a config file")
    run.add_argument("config", help="YAML benchmark configuration")
    run.add_argument("--output-dir", help="override the config's output directory")
    run.add_argument(
        "--fields", action="store_true", help="also write per-cell field CSVs"
    )

    verify = sub.add_parser("verify", help="run the acceptance checks")
    verify.add_argument(
        "--only",
        help="comma-separated criterion numbers (default: all ten)",
    )

    lst = sub.add_parser(
        "list", help="enumerate formulation/preconditioner cells with budgets"
    )
    lst.add_argument(
        "--objects", type=int, default=1, help="number of objects (default 1)"
    )
    lst.add_argument(
        "--all",
        action="store_true",
        help="include infeasible cells (skipped by default)",
    )

    export = sub.add_parser("export-mesh", help="write a sphere mesh as Gmsh 2.2")
    export.add_argument("out", help="output .msh path")
    export.add_argument("--radius", type=float, default=0.005)
    export.add_argument("--center", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    group = export.add_mutually_exclusive_group()
    group.add_argument(
        "--subdivisions", type=int, help="icosphere midpoint-subdivision level"
    )
    group.add_argument(
        "--frequency",
        type=float,
        help="resolve this frequency in Hz instead of a fixed level",
    )
    export.add_argument(
        "--material",
        default="water",
        help="medium whose wavelength sets the edge budget (with --frequency)",
    )
    export.add_argument(
        "--points-per-wavelength", type=float, default=4.0, help="with --frequency"
    )
    return parser


def _cmd_run(args) -> int:
    from .bench import BenchmarkConfig, run_benchmark

    config = BenchmarkConfig.from_file(args.config)
    overrides = {}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.fields:
        overrides["write_fields"] = True
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    report = run_benchmark(config)
    for record in report.records:
        bits = [
            f"{record.scene}",
            f"{record.formulation}{':' + record.variant if record.variant else ''}",
            f"+{record.preconditioner}",
            record.status,
        ]
        if record.iterations is not None:
            bits.append(f"{record.iterations} its")
        if record.psnr_db is not None:
            bits.append(f"{record.psnr_db:.1f} dB")
        if record.reason:
            bits.append(record.reason)
        print("  ".join(bits))
    cells = report.summary["cells"]
    print(
        f"{cells['ok']} ok, {cells['skipped']} skipped, {cells['error']} error; "
        f"records: {report.csv_path}, summary: {report.summary_path}"
    )
    return 0 if cells["error"] == 0 else 1


def _cmd_verify(args) -> int:
    from .acceptance import format_report, run_acceptance

    numbers = None
    if args.only:
        numbers = [int(part) for part in args.only.split(",") if part.strip()]
    results = run_acceptance(numbers)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_list(args) -> int:
    from .bench import list_cells

    rows = list_cells(args.objects)
    if not args.all:
        rows = [row for row in rows if row["feasible"]]
    width = max(len(row["formulation"]) for row in rows)
    pwidth = max(len(row["preconditioner"]) for row in rows)
    print(
        f"{'formulation':<{width}}  {'preconditioner':<{pwidth}}  feasible  "
        f"blocks  operators  matvecs/apply"
    )
    for row in rows:
        print(
            f"{row['formulation']:<{width}}  {row['preconditioner']:<{pwidth}}  "
            f"{'yes' if row['feasible'] else 'no':<8}  "
            f"{row['unknown_blocks']:>6}  {row['operators']:>9}  "
            f"{row['matvecs_per_apply']:>13}"
        )
    return 0


def _cmd_export_mesh(args) -> int:
    from .materials import material
    from .mesh import icosphere, refine_for_frequency, write_msh

    if args.frequency is not None:
        mesh = refine_for_frequency(
            args.radius,
            tuple(args.center),
            args.frequency,
            [material(args.material)],
            points_per_wavelength=args.points_per_wavelength,
        )
    else:
        level = args.subdivisions if args.subdivisions is not None else 3
        mesh = icosphere(args.radius, center=tuple(args.center), subdivisions=level)
    write_msh(mesh, args.out)
    print(f"wrote {mesh.num_vertices} nodes / {mesh.num_triangles} triangles to {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "verify": _cmd_verify,
    "list": _cmd_list,
    "export-mesh": _cmd_export_mesh,
}


def main(argv=None) -> int:
    _apply_thread_limit()
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.verb](args)


if __name__ == "__main__":
    sys.exit(main())
