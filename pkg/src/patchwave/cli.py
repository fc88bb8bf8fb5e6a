"""Command-line driver: analysis sweeps, simulations and benchmarks.

Verbs
-----
grid-info     geometry, counts and stencil manifest for one configuration
spectrum      eigenvalue spectrum + classification for one configuration
consistency   eigenvalue-error sweep and power-law fits
roundoff      working-vs-extended precision eigenvalue discrepancies
stability     max Re(lambda) over a parameter sweep
simulate      time integration, snapshot CSVs and a run manifest
bench         compute-time measurements and the cost-model fit

Every command writes a ``manifest.json`` sufficient to re-run it
exactly.  Exit codes: 0 success, 1 numerical failure, 2 validation
failure.  A JSON config file may supply any long-option value
(``--config``); explicit flags win.  Sweep commands take comma lists,
enumerate the Cartesian product up front, skip invalid combinations
with a reason, and keep going when one tuple fails (nonzero exit at the
end).
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    environment_info,
    fit_cost_model,
    measure_full_domain,
    measure_patch,
    write_bench_csv,
    write_bench_manifest,
)
from .coupling import SCHEME_NAMES, build_coupling
from .errors import ParameterError, PatchwaveError
from .grid import build_micro_grid, build_patch_grid
from .microscale import PhysicalParams
from .patchscheme import PatchState, write_state_csv
from .spectra import (
    EXTENDED,
    WORKING,
    classified_spectrum,
    consistency_fit,
    eigenvalue_error,
    make_scheme,
    roundoff_errors,
    spectrum_rows,
)
from .timesim import AUTO, SimConfig, auto_dt, simulate, write_run_manifest

EXIT_OK, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2

CONSISTENCY_WAVENUMBERS = ((1, 0), (1, 1), (2, 1))


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _write_manifest(outdir: Path, command: str, args: argparse.Namespace, extra=None):
    payload = {
        "command": command,
        "package_version": __version__,
        "arguments": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func",)
        },
        "environment": environment_info(),
    }
    if extra:
        payload.update(extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=str)


def _outdir(args, command: str) -> Path:
    out = Path(args.out or f"patchwave-out/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(args) -> PhysicalParams:
    return PhysicalParams(args.cD, args.cV)


# -- sweep plumbing ----------------------------------------------------------


def _sweep_tuples(args) -> tuple[list[dict], list[dict]]:
    """Cartesian product of the sweep lists, validated tuple by tuple."""
    valid, skipped = [], []
    for scheme in args.schemes:
        for N in args.N_list:
            for n in args.n_list:
                for r in args.r_list:
                    for cD in args.cD_list:
                        for cV in args.cV_list:
                            cfg = {
                                "scheme": scheme,
                                "N": N,
                                "n": n,
                                "r": r,
                                "c_D": cD,
                                "c_V": cV,
                            }
                            try:
                                spec = build_patch_grid(N, n, r)
                                build_coupling(spec, scheme)
                            except ParameterError as exc:
                                skipped.append(cfg | {"reason": str(exc)})
                                continue
                            valid.append(cfg)
    return valid, skipped


def _run_sweep(worker, tuples: list[dict], jobs: int) -> tuple[list[dict], list[dict]]:
    """Run worker over tuples, serially or in a process pool."""
    results, failures = [], []
    if jobs > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            outputs = pool.map(worker, tuples)
    else:
        outputs = map(worker, tuples)
    for cfg, out in zip(tuples, outputs):
        if isinstance(out, dict) and out.get("_error"):
            failures.append(cfg | {"error": out["_error"]})
        else:
            results.append(out)
    return results, failures


def _consistency_worker(cfg: dict) -> dict:
    try:
        scheme = make_scheme(
            cfg["N"], cfg["n"], cfg["r"], cfg["scheme"],
            PhysicalParams(cfg["c_D"], cfg["c_V"]),
        )
        cs = classified_spectrum(scheme, route="block")
        row = dict(cfg)
        row["Delta"] = scheme.spec.Delta
        resolved = set(scheme.spec.resolved_wavenumbers())
        for kx, ky in CONSISTENCY_WAVENUMBERS:
            key = f"eps_{kx}{ky}"
            if (kx, ky) not in resolved:
                row[key] = ""
                continue
            err = eigenvalue_error(cs, kx, ky)
            row[key] = "" if err is None else err
        return row
    except PatchwaveError as exc:
        return {"_error": f"{type(exc).__name__}: {exc}"}


def _roundoff_worker(cfg: dict) -> dict:
    try:
        params = PhysicalParams(cfg["c_D"], cfg["c_V"])
        ref = classified_spectrum(
            make_scheme(cfg["N"], cfg["n"], cfg["r"], cfg["scheme"], params, EXTENDED),
            route="block",
        )
        wrk = classified_spectrum(
            make_scheme(cfg["N"], cfg["n"], cfg["r"], cfg["scheme"], params, WORKING),
            route="block",
        )
        eps_mu, eps_M = roundoff_errors(ref, wrk)
        return dict(cfg) | {"eps_micro": eps_mu, "eps_macro": eps_M}
    except PatchwaveError as exc:
        return {"_error": f"{type(exc).__name__}: {exc}"}


def _stability_worker(cfg: dict) -> dict:
    try:
        scheme = make_scheme(
            cfg["N"], cfg["n"], cfg["r"], cfg["scheme"],
            PhysicalParams(cfg["c_D"], cfg["c_V"]),
        )
        cs = classified_spectrum(scheme, route="block")
        return dict(cfg) | {
            "max_re": cs.max_real(),
            "max_re_macro": float(cs.macro.real.max()),
            "max_re_micro": float(cs.micro.real.max()) if cs.micro.size else "",
        }
    except PatchwaveError as exc:
        return {"_error": f"{type(exc).__name__}: {exc}"}


def _report_sweep(outdir, args, command, tuples, skipped, failures, extra=None):
    print(
        f"{command}: {len(tuples)} configurations "
        f"({len(skipped)} skipped, {len(failures)} failed)"
    )
    for s in skipped:
        print(f"  skipped {s['scheme']} N={s['N']} n={s['n']} r={s['r']}: {s['reason']}")
    for f in failures:
        print(f"  FAILED {f}", file=sys.stderr)
    _write_manifest(
        outdir,
        command,
        args,
        {"skipped": skipped, "failures": failures} | (extra or {}),
    )


# -- commands ----------------------------------------------------------------


def cmd_grid_info(args) -> int:
    outdir = _outdir(args, "grid-info")
    spec = build_patch_grid(args.N, args.n, args.r)
    print(spec.to_json())
    (outdir / "grid.json").write_text(spec.to_json())
    op = build_coupling(spec, args.scheme)
    (outdir / "stencils.json").write_text(json.dumps(op.stencil_manifest(), indent=2))
    micro = build_micro_grid(args.n)
    (outdir / "micro_grid.json").write_text(micro.to_json())
    _write_manifest(outdir, "grid-info", args)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    outdir = _outdir(args, "spectrum")
    scheme = make_scheme(
        args.N, args.n, args.r, args.scheme, _params(args), args.precision
    )
    cs = classified_spectrum(scheme, route=args.route)
    rows = spectrum_rows(cs)
    fields = list(rows[0].keys())
    _write_csv(outdir / "spectrum.csv", rows, fields)
    summary = {
        "dim": scheme.dim,
        "macro_count": cs.macro_count,
        "micro_count": int(cs.micro.size),
        "max_re_macro": float(cs.macro.real.max()),
        "max_re_micro": float(cs.micro.real.max()) if cs.micro.size else None,
        "max_abs_re": float(
            np.max(np.abs(np.concatenate([cs.macro.real, cs.micro.real])))
        ),
        "max_matching_residual": float(cs.matching_residuals.max()),
        "flags": cs.flags,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    _write_manifest(outdir, "spectrum", args)
    return EXIT_OK


def cmd_consistency(args) -> int:
    outdir = _outdir(args, "consistency")
    tuples, skipped = _sweep_tuples(args)
    rows, failures = _run_sweep(_consistency_worker, tuples, args.jobs)
    fields = ["scheme", "N", "n", "r", "c_D", "c_V", "Delta"] + [
        f"eps_{kx}{ky}" for kx, ky in CONSISTENCY_WAVENUMBERS
    ]
    _write_csv(outdir / "errors.csv", rows, fields)

    fits = []
    keys = {
        (row["scheme"], row["n"], row["r"], row["c_D"], row["c_V"]) for row in rows
    }
    for scheme, n, r, cD, cV in sorted(keys):
        sub = [
            row
            for row in rows
            if (row["scheme"], row["n"], row["r"], row["c_D"], row["c_V"])
            == (scheme, n, r, cD, cV)
        ]
        for kx, ky in CONSISTENCY_WAVENUMBERS:
            pts = [
                (row["Delta"], row[f"eps_{kx}{ky}"])
                for row in sub
                if row[f"eps_{kx}{ky}"] != ""
            ]
            if len(pts) < 3:
                continue
            try:
                fit = consistency_fit(pts, floor=args.floor)
            except PatchwaveError:
                continue
            fits.append(
                {
                    "scheme": scheme,
                    "n": n,
                    "r": r,
                    "c_D": cD,
                    "c_V": cV,
                    "k_x": kx,
                    "k_y": ky,
                    "exponent": fit.exponent,
                    "prefactor": fit.prefactor,
                    "r_squared": fit.r_squared,
                    "points_used": len(fit.points_used),
                    "points_filtered": len(fit.points_filtered),
                }
            )
    if fits:
        _write_csv(outdir / "fits.csv", fits, list(fits[0].keys()))
    _report_sweep(outdir, args, "consistency", tuples, skipped, failures)
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_roundoff(args) -> int:
    outdir = _outdir(args, "roundoff")
    tuples, skipped = _sweep_tuples(args)
    rows, failures = _run_sweep(_roundoff_worker, tuples, args.jobs)
    fields = ["scheme", "N", "n", "r", "c_D", "c_V", "eps_micro", "eps_macro"]
    _write_csv(outdir / "errors.csv", rows, fields)

    peaks = []
    keys = {(row["scheme"], row["N"], row["n"], row["r"]) for row in rows}
    for scheme, N, n, r in sorted(keys):
        sub = [
            row
            for row in rows
            if (row["scheme"], row["N"], row["n"], row["r"]) == (scheme, N, n, r)
        ]
        peaks.append(
            {
                "scheme": scheme,
                "N": N,
                "n": n,
                "r": r,
                "peak_eps_micro": max(row["eps_micro"] for row in sub),
                "peak_eps_macro": max(row["eps_macro"] for row in sub),
            }
        )
    if peaks:
        _write_csv(outdir / "peaks.csv", peaks, list(peaks[0].keys()))
    _report_sweep(outdir, args, "roundoff", tuples, skipped, failures)
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_stability(args) -> int:
    outdir = _outdir(args, "stability")
    tuples, skipped = _sweep_tuples(args)
    rows, failures = _run_sweep(_stability_worker, tuples, args.jobs)
    fields = [
        "scheme", "N", "n", "r", "c_D", "c_V",
        "max_re", "max_re_macro", "max_re_micro",
    ]
    _write_csv(outdir / "max_re.csv", rows, fields)
    worst = max((row["max_re"] for row in rows), default=float("nan"))
    print(f"stability: overall max Re(lambda) = {worst:.3e}")
    _report_sweep(
        outdir, args, "stability", tuples, skipped, failures,
        {"overall_max_re": worst},
    )
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_simulate(args) -> int:
    outdir = _outdir(args, "simulate")
    config = SimConfig(
        scheme=args.scheme,
        N=args.N,
        n=args.n,
        r=args.r,
        params=_params(args),
        t_end=args.t_end,
        dt=AUTO if args.dt in (None, "auto") else float(args.dt),
        snapshot_every=args.snap_every,
        ic=args.ic,
    )
    snaps = simulate(config)
    if config.scheme != "full-domain":
        spec = build_patch_grid(config.N, config.n, config.r)
        for k, snap in enumerate(snaps):
            write_state_csv(
                PatchState(snap.values, spec), outdir / f"snapshot_{k:04d}.csv"
            )
    else:
        for k, snap in enumerate(snaps):
            np.savetxt(outdir / f"snapshot_{k:04d}.csv", snap.values, delimiter=",")
    dt = auto_dt(
        build_patch_grid(config.N, config.n, config.r)
        if config.scheme != "full-domain"
        else build_micro_grid(config.n),
        config.params,
    ) if config.dt == AUTO else config.dt
    write_run_manifest(outdir / "run.json", config, dt, snaps)
    _write_manifest(outdir, "simulate", args, {"snapshots": len(snaps)})
    print(
        f"simulate: {len(snaps)} snapshots to t={snaps[-1].time:.4g}; "
        f"final max|h| = {snaps[-1].diagnostics['max_abs_h']:.4g}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    outdir = _outdir(args, "bench")
    reports, t_m = [], None
    # per-variable reference first, from the largest directly measurable grid
    ref = measure_full_domain(build_micro_grid(args.ref_full_n), _params(args))
    t_m = ref.derived["t_per_variable_ns"]
    reports.append(ref)
    for scheme_name in args.schemes:
        for n in args.n_list:
            for r in args.r_list:
                try:
                    scheme = make_scheme(args.N, n, r, scheme_name, _params(args))
                except ParameterError as exc:
                    print(f"  skipped {scheme_name} n={n} r={r}: {exc}")
                    continue
                rep = measure_patch(
                    scheme, repeats=args.repeats, t_m_per_var_ns=t_m
                )
                reports.append(rep)
                print(
                    f"  {scheme_name} N={args.N} n={n} r={r}: "
                    f"ratio {rep.derived['ratio']:.3e} ({rep.derived['t_mu_source']})"
                )
    patch_reports = [rep for rep in reports if "ratio" in rep.derived]
    fit = None
    if len(patch_reports) >= 4 and len({r.config["r"] for r in patch_reports}) >= 2:
        fit = fit_cost_model(patch_reports)
        print(
            f"bench: T_M = {fit.t_m_ns:.1f} ns, T_C = {fit.t_c_ns:.1f} ns, "
            f"R^2 = {fit.r_squared:.3f}"
        )
    write_bench_csv(outdir / "ratios.csv", reports, fit)
    write_bench_manifest(outdir / "bench.json", reports, fit)
    _write_manifest(outdir, "bench", args)
    return EXIT_OK


# -- argument wiring ---------------------------------------------------------


def _add_single_config(p: argparse.ArgumentParser):
    p.add_argument("--scheme", default="spectral", choices=SCHEME_NAMES)
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--r", type=float, default=0.1)
    _add_phys(p)


def _add_phys(p):
    p.add_argument("--cD", type=float, default=0.0, help="drag coefficient")
    p.add_argument("--cV", type=float, default=0.0, help="viscosity coefficient")


def _add_sweep(p: argparse.ArgumentParser):
    p.add_argument("--schemes", type=_names, default=list(SCHEME_NAMES))
    p.add_argument("--N-list", dest="N_list", type=_ints, default=[6, 10, 14])
    p.add_argument("--n-list", dest="n_list", type=_ints, default=[6, 10])
    p.add_argument("--r-list", dest="r_list", type=_floats, default=[0.01, 0.1])
    p.add_argument("--cD-list", dest="cD_list", type=_floats, default=[0.0, 1e-6, 1e-3])
    p.add_argument("--cV-list", dest="cV_list", type=_floats, default=[0.0, 1e-4, 1e-2])
    p.add_argument("--jobs", type=int, default=1)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="JSON file with option defaults")
    p.add_argument(
        "--precision", default=WORKING, choices=[WORKING, EXTENDED],
        help="float precision for assembly",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchwave",
        description="Staggered-patch multiscale schemes for weakly damped 2D waves",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid-info", help="grid geometry and stencil manifest")
    _add_single_config(p), _add_common(p)
    p.set_defaults(func=cmd_grid_info)

    p = sub.add_parser("spectrum", help="spectrum of one configuration")
    _add_single_config(p), _add_common(p)
    p.add_argument("--route", default="full", choices=["full", "block"])
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("consistency", help="eigenvalue-error sweep + power laws")
    _add_sweep(p), _add_common(p)
    p.add_argument("--floor", type=float, default=1e-8,
                   help="errors at/below this are excluded from fits")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("roundoff", help="working-vs-extended eigenvalue errors")
    _add_sweep(p), _add_common(p)
    p.set_defaults(func=cmd_roundoff)

    p = sub.add_parser("stability", help="max Re(lambda) sweep")
    _add_sweep(p), _add_common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("simulate", help="time simulation")
    p.add_argument("--scheme", default="square-p4",
                   choices=SCHEME_NAMES + ("full-domain",))
    p.add_argument("--N", type=int, default=18)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--r", type=float, default=0.1)
    _add_phys(p), _add_common(p)
    p.add_argument("--t-end", dest="t_end", type=float, default=2.0)
    p.add_argument("--dt", default="auto")
    p.add_argument("--snap-every", dest="snap_every", type=int, default=10)
    p.add_argument("--ic", default="gaussian-hump")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="compute-time measurements + cost model")
    p.add_argument("--schemes", type=_names, default=["square-p4"])
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--n-list", dest="n_list", type=_ints, default=[6, 10])
    p.add_argument("--r-list", dest="r_list", type=_floats,
                   default=[0.1, 0.01, 0.001])
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--ref-full-n", dest="ref_full_n", type=int, default=1500,
                   help="intervals of the direct full-domain reference grid")
    _add_phys(p), _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def _apply_config_file(args, argv):
    if not args.config:
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    defaults = {
        k.replace("-", "_"): v
        for k, v in overrides.items()
        if hasattr(args, k.replace("-", "_"))
    }
    # config supplies defaults; explicit flags win
    explicit = {a for a in argv if a.startswith("--")}
    for key, val in defaults.items():
        flag = "--" + key.replace("_", "-")
        if flag not in explicit and f"--{key}" not in explicit:
            setattr(args, key, val)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, argv)
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PatchwaveError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
