"""Command-line interface.

Subcommands mirror the experiment families plus the fitting tools that
consume their CSV outputs.  Flags mirror config-file keys; environment
variables control only the worker count (HYPERISING_WORKERS) and the
output root (HYPERISING_OUTPUT_ROOT).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .dense import OTOCSeries
from .fits import (
    LightconeData,
    LyapunovSeries,
    fit_entropy_exponential,
    fit_lightcone,
    fit_lyapunov,
    mss_ratio,
    segment_complexity_regimes,
)
from .model import ModelParams
from .runner import (
    DEFAULTS,
    RECIPES,
    ExperimentConfig,
    dump_couplings,
    format_number,
    load_config,
    read_csv,
    reproduce,
    run,
)


def _add_model_args(sub):
    sub.add_argument("--n", type=int, default=DEFAULTS["model.n"])
    sub.add_argument("--j", type=float, default=DEFAULTS["model.j"])
    sub.add_argument("--h", dest="h_field", type=float, default=DEFAULTS["model.h"])
    sub.add_argument("--m", type=float, default=DEFAULTS["model.m"])
    sub.add_argument("--lmax", type=float, default=DEFAULTS["model.l_max"])
    sub.add_argument("--ell", type=float, default=DEFAULTS["model.ell"])


def _add_numerics_args(sub):
    sub.add_argument("--backend", choices=["dense", "mps"], default="dense")
    sub.add_argument("--beta", type=float, default=DEFAULTS["experiment.beta"])
    sub.add_argument("--t-max", type=float, default=DEFAULTS["grid.t_max"])
    sub.add_argument("--dt-grid", type=float, default=DEFAULTS["grid.dt"])
    sub.add_argument("--chi-max", type=int, default=DEFAULTS["mps.chi_max"])
    sub.add_argument("--cutoff", type=float, default=DEFAULTS["mps.cutoff"])
    sub.add_argument("--dt", type=float, default=DEFAULTS["mps.dt"])
    sub.add_argument("--order", type=int, choices=[1, 2], default=DEFAULTS["mps.order"])
    sub.add_argument("--precision", default=DEFAULTS["dense.precision"])
    sub.add_argument("--out-dir", default="runs")


def _model_params(args) -> ModelParams:
    return ModelParams(
        n=args.n, j=args.j, h=args.h_field, m=args.m, l_max=args.lmax, ell=args.ell
    )


def _config_from_args(args, experiment) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=experiment,
        model=_model_params(args),
        backend=args.backend,
        beta=args.beta,
        variant=getattr(args, "variant", "regularized"),
        threshold=getattr(args, "threshold", DEFAULTS["experiment.threshold"]),
        w_site=getattr(args, "w_site", None),
        v_site=getattr(args, "v_site", 0),
        sites=tuple(getattr(args, "sites", ()) or ()),
        t_max=args.t_max,
        dt_grid=args.dt_grid,
        chi_max=args.chi_max,
        cutoff=args.cutoff,
        trotter_dt=args.dt,
        trotter_order=args.order,
        horizon=getattr(args, "horizon", DEFAULTS["krylov.horizon"]),
        rk4_dt=getattr(args, "rk4_dt", DEFAULTS["krylov.rk4_dt"]),
        store_dt=getattr(args, "store_dt", DEFAULTS["krylov.store_dt"]),
        precision=args.precision,
        output_dir=args.out_dir,
    )


def _series_from_csv(path) -> OTOCSeries:
    header, data = read_csv(path)
    cols = {name: data[:, k] for k, name in enumerate(header)}
    f = cols["ReF"] + 1j * cols.get("ImF", np.zeros_like(cols["ReF"]))
    return OTOCSeries(times=cols["t"], f=f, o=cols["O"], c=cols["C"])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hyperising",
        description="Scrambling and chaos diagnostics for the hyperbolic Ising chain.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_model = subs.add_parser("model", help="inspect the coupling profile")
    _add_model_args(p_model)
    p_model.add_argument("--dump-couplings", action="store_true")
    p_model.add_argument("--out", default="-")

    p_otoc = subs.add_parser("otoc", help="OTOC time series")
    _add_model_args(p_otoc)
    _add_numerics_args(p_otoc)
    p_otoc.add_argument("--w-site", type=int, default=None)
    p_otoc.add_argument("--v-site", type=int, default=0)
    p_otoc.add_argument(
        "--variant", choices=["regularized", "unregularized"], default="regularized"
    )

    p_cone = subs.add_parser("lightcone", help="OTOC scan over probe sites")
    _add_model_args(p_cone)
    _add_numerics_args(p_cone)
    p_cone.add_argument("--w-site", type=int, default=None)
    p_cone.add_argument("--sites", type=int, nargs="*", default=None)
    p_cone.add_argument(
        "--threshold", type=float, default=DEFAULTS["experiment.threshold"]
    )

    for name in ("krylov-state", "krylov-operator"):
        p_k = subs.add_parser(name, help=f"{name.split('-')[1]} complexity pipeline")
        _add_model_args(p_k)
        p_k.add_argument("--horizon", type=float, default=DEFAULTS["krylov.horizon"])
        p_k.add_argument("--dt", dest="rk4_dt", type=float, default=DEFAULTS["krylov.rk4_dt"])
        p_k.add_argument("--store-dt", type=float, default=DEFAULTS["krylov.store_dt"])
        p_k.add_argument("--store-basis", action="store_true")
        p_k.add_argument("--out-dir", default="runs")

    p_fly = subs.add_parser("fit-lyapunov", help="growth-rate fit of an OTOC CSV")
    p_fly.add_argument("--input", required=True)
    p_fly.add_argument("--window", type=float, nargs=2, default=None)
    p_fly.add_argument("--beta", type=float, default=None)
    p_fly.add_argument("--out", default="-")

    p_flc = subs.add_parser("fit-lightcone", help="log vs linear lightcone fit")
    p_flc.add_argument("--input", required=True)
    p_flc.add_argument("--center", type=int, required=True)
    p_flc.add_argument("--threshold", type=float, default=DEFAULTS["experiment.threshold"])
    p_flc.add_argument("--out", default="-")

    p_fe = subs.add_parser("fit-entropy", help="early-time entropy growth fit")
    p_fe.add_argument("--input", required=True)
    p_fe.add_argument("--window", type=float, nargs=2, default=None)
    p_fe.add_argument("--out", default="-")

    p_sc = subs.add_parser("segment-ck", help="complexity regime segmentation")
    p_sc.add_argument("--input", required=True)
    p_sc.add_argument("--out", default="-")

    p_rep = subs.add_parser("reproduce", help="run a named desk-scale recipe")
    p_rep.add_argument("figure", choices=sorted(RECIPES))
    p_rep.add_argument("--out-dir", default=None)
    p_rep.add_argument("--n", type=int, default=None)
    p_rep.add_argument("--t-max", type=float, default=None)
    p_rep.add_argument("--horizon", type=float, default=None)

    p_run = subs.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=None)

    args = parser.parse_args(argv)

    def emit(text: str, out: str):
        if out == "-":
            sys.stdout.write(text)
        else:
            Path(out).write_text(text)

    if args.command == "model":
        params = _model_params(args)
        if args.dump_couplings:
            emit(dump_couplings(params), args.out)
        else:
            print(f"n={params.n} l_max={params.l_max} couplings ready")
        return 0

    if args.command in ("otoc", "lightcone"):
        config = _config_from_args(args, args.command)
        artifacts = run(config)
        print(artifacts["root"])
        return 0

    if args.command in ("krylov-state", "krylov-operator"):
        config = ExperimentConfig(
            experiment=args.command,
            model=_model_params(args),
            horizon=args.horizon,
            rk4_dt=args.rk4_dt,
            store_dt=args.store_dt,
            output_dir=args.out_dir,
        )
        artifacts = run(config)
        print(artifacts["root"])
        return 0

    if args.command == "fit-lyapunov":
        series = _series_from_csv(args.input)
        window = tuple(args.window) if args.window else None
        result = fit_lyapunov(series, window=window)
        lines = [
            "[lyapunov_fit]",
            f"lambda = {format_number(result.params[0])}",
            f"intercept = {format_number(result.params[1])}",
            f"r_squared = {format_number(result.r_squared)}",
            f"window = {format_number(result.window[0])},{format_number(result.window[1])}",
            f"ci_half_width = {format_number(result.stderr[0])}",
            f"flags = {';'.join(result.flags) or 'none'}",
        ]
        if args.beta is not None and args.beta > 0:
            lines.append(
                f"mss_ratio = {format_number(mss_ratio(result.params[0], args.beta))}"
            )
        emit("\n".join(lines) + "\n", args.out)
        return 0

    if args.command == "fit-lightcone":
        header, data = read_csv(args.input)
        cone = LightconeData(
            sites=data[:, 0].astype(int), t_s=data[:, 1], threshold=args.threshold
        )
        fit_log, fit_lin, preferred = fit_lightcone(cone, args.center)
        emit(
            "\n".join(
                [
                    "[lightcone_fit]",
                    f"preferred = {preferred}",
                    f"log_slope = {format_number(fit_log.params[0])}",
                    f"log_r_squared = {format_number(fit_log.r_squared)}",
                    f"linear_slope = {format_number(fit_lin.params[0])}",
                    f"linear_r_squared = {format_number(fit_lin.r_squared)}",
                ]
            )
            + "\n",
            args.out,
        )
        return 0

    if args.command == "fit-entropy":
        header, data = read_csv(args.input)
        cols = {name: data[:, k] for k, name in enumerate(header)}
        window = tuple(args.window) if args.window else None
        result = fit_entropy_exponential(cols["t"], cols["S_K"], window=window)
        emit(
            "\n".join(
                [
                    "[entropy_fit]",
                    f"a = {format_number(result.params[0])}",
                    f"c = {format_number(result.params[1])}",
                    f"d = {format_number(result.params[2])}",
                    f"r_squared = {format_number(result.r_squared)}",
                    f"window = {format_number(result.window[0])},{format_number(result.window[1])}",
                    f"flags = {';'.join(result.flags) or 'none'}",
                ]
            )
            + "\n",
            args.out,
        )
        return 0

    if args.command == "segment-ck":
        header, data = read_csv(args.input)
        cols = {name: data[:, k] for k, name in enumerate(header)}
        seg = segment_complexity_regimes(cols["t"], cols["C_K"])
        lines = ["[regime_segmentation]"]
        for key in (
            "exp_window",
            "linear_window",
            "saturation_level",
            "exp_rate",
            "exp_r_squared",
            "linear_rate",
        ):
            value = seg[key]
            if isinstance(value, tuple):
                value = ",".join(format_number(v) for v in value)
            else:
                value = format_number(value)
            lines.append(f"{key} = {value}")
        lines.append(f"flags = {';'.join(seg['flags']) or 'none'}")
        emit("\n".join(lines) + "\n", args.out)
        return 0

    if args.command == "reproduce":
        overrides = {}
        if args.n is not None:
            overrides["n"] = args.n
        if args.t_max is not None:
            overrides["t_max"] = args.t_max
        if args.horizon is not None:
            overrides["horizon"] = args.horizon
        artifacts = reproduce(args.figure, output_dir=args.out_dir, **overrides)
        print(artifacts["root"])
        return 0

    if args.command == "run":
        config = load_config(args.config)
        artifacts = run(config, output_dir=args.out_dir)
        print(artifacts["root"])
        return 0

    parser.error(f"unhandled command {args.command}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
