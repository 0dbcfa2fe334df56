"""The ``wgfem`` command line driver.

Subcommands:

- ``study <config>``: sweep combinations per a flat key=value config file,
  writing one CSV (and optionally Markdown) table per combination, an
  order-grid summary, and a convergence figure.
- ``reproduce-table <table-id>``: rerun the scheme behind a bundled
  reference table and compare against it.
- ``export-surface <config>``: march one combination and sample the
  solution on a grid, writing three-column text plus a rendered surface.
- ``verify``: run the property suite (no golden data needed).

Exit codes: 0 completed / all pass, 1 golden comparison or property
failure, 2 configuration error.  WG_THREADS caps the worker pool.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    StudySpec,
    emit_order_grid,
    emit_table,
    export_solution_surface,
    find_reference_table,
    golden_compare,
    list_reference_tables,
    load_reference_table,
    parse_config_text,
    run_combination,
    run_study,
    spec_from_config,
    write_surface,
)
from .mesh import build_uniform_square_mesh
from .solvers import backward_euler_march, get_problem
from .space import WGConfig


def _load_config(path: str, overrides) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def _cmd_study(args) -> int:
    cfg = _load_config(args.config, args.set)
    spec, extras = spec_from_config(cfg)
    out_dir = Path(args.out or extras.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = (args.format or extras.get("format", "csv")).lower()
    if fmt not in ("csv", "markdown", "both"):
        raise ConfigError(f"unknown format {fmt!r}")

    results = run_study(spec)
    for res in results:
        base = out_dir / f"table_{res.label()}"
        if fmt in ("csv", "both"):
            (base.with_suffix(".csv")).write_text(emit_table(res.records, "csv"))
        if fmt in ("markdown", "both"):
            (base.with_suffix(".md")).write_text(emit_table(res.records, "markdown"))
        print(f"{res.label()}: status={res.status} "
              f"finest orders={tuple(round(o, 3) if o else o for o in res.finest_orders())}")
    (out_dir / "order_grid.md").write_text(emit_order_grid(results))
    if not args.no_figures:
        from .figures import save_convergence_figure

        save_convergence_figure(results, out_dir / "convergence.png",
                                title=f"{spec.problem}, T={spec.T:g}")
    print(f"wrote {len(results)} table(s) to {out_dir}")
    return 0


def _cmd_reproduce(args) -> int:
    try:
        ref = load_reference_table(args.table_id)
    except KeyError:
        raise ConfigError(
            f"unknown table id {args.table_id}; available: {list_reference_tables()}"
        ) from None
    levels = tuple(int(x) for x in args.levels.split(",")) if args.levels else (4, 8, 16, 32)
    if ref.tau <= 1e-5 and max(levels) > 8:
        print(
            f"warning: table {ref.table_id} uses tau = {ref.tau:g}; "
            f"running the ladder up to n = {max(levels)} takes {round(1 / ref.tau):,} "
            "time steps per level (consider --levels 4,8)",
            file=sys.stderr,
        )
    spec = StudySpec(
        ks=(ref.k,), js=(ref.j,), ls=(ref.l,), stabilizer=ref.stabilizer,
        levels=levels, tau=ref.tau,
    )
    res = run_study(spec)[0]

    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = out_dir / f"table{ref.table_id:02d}_produced.csv"
    produced.write_text(emit_table(res.records, "csv"))

    report = golden_compare(res.records, ref, order_tol=args.order_tol, mag_tol=args.mag_tol)
    print(report.summary())
    if not args.no_figures:
        from .figures import save_convergence_figure

        save_convergence_figure(
            [res], out_dir / f"table{ref.table_id:02d}_convergence.png",
            title=f"table {ref.table_id}: ({ref.k},{ref.j},{ref.l}) {ref.stabilizer}",
        )
    print(f"wrote {produced}")
    return 0 if report.rates_pass and (report.passed or ref.rate_only) else 1


def _cmd_export_surface(args) -> int:
    cfg = _load_config(args.config, args.set)
    spec, extras = spec_from_config(cfg)
    n = max(spec.levels)
    config = WGConfig(spec.ks[0], spec.js[0], spec.ls[0], spec.stabilizer)
    problem = get_problem(spec.problem)
    mesh = build_uniform_square_mesh(n)
    samples_n = int(args.samples or extras.get("samples", 33))

    checkpoints = None
    raw = args.checkpoints or extras.get("checkpoints")
    if raw:
        checkpoints = [float(x) for x in str(raw).split(",")]
    result = backward_euler_march(
        mesh, config, problem, spec.grid_for(n), initial=spec.initial,
        checkpoints=checkpoints,
    )

    out_dir = Path(args.out or extras.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t, fieldv in result.checkpoints:
        samples = export_solution_surface(fieldv, mesh, samples_n)
        stem = f"surface_{config.k}{config.j}{config.l}_{spec.stabilizer}_t{t:g}"
        write_surface(samples, out_dir / f"{stem}.dat")
        written.append(out_dir / f"{stem}.dat")
        if not args.no_figures:
            from .figures import save_surface_figure

            save_surface_figure(samples, out_dir / f"{stem}.png",
                                title=f"u0 at t = {t:g}")
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_property_suite

    results = run_property_suite(verbose=True)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgfem", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run a convergence study from a config file")
    st.add_argument("config")
    st.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    st.add_argument("--out", help="output directory")
    st.add_argument("--format", choices=["csv", "markdown", "both"])
    st.add_argument("--no-figures", action="store_true")
    st.set_defaults(func=_cmd_study)

    rt = sub.add_parser("reproduce-table", help="rerun and compare a bundled reference table")
    rt.add_argument("table_id", type=int)
    rt.add_argument("--levels", help="comma list of n to run (default 4,8,16,32)")
    rt.add_argument("--order-tol", type=float, default=0.1)
    rt.add_argument("--mag-tol", type=float, default=1.10)
    rt.add_argument("--out", help="output directory")
    rt.add_argument("--no-figures", action="store_true")
    rt.set_defaults(func=_cmd_reproduce)

    es = sub.add_parser("export-surface", help="sample a solved field on a grid")
    es.add_argument("config")
    es.add_argument("--set", action="append", metavar="KEY=VALUE")
    es.add_argument("--samples", type=int, help="grid resolution (default 33)")
    es.add_argument("--checkpoints", help="comma list of times to export (plus T)")
    es.add_argument("--out", help="output directory")
    es.add_argument("--no-figures", action="store_true")
    es.set_defaults(func=_cmd_export_surface)

    vf = sub.add_parser("verify", help="run the property suite")
    vf.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
