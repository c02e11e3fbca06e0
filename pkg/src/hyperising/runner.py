"""Experiment harness: configs, sweeps, manifests, CSV artifacts, and the
named desk-scale recipes.

Every default lives in DEFAULTS; configs are plain INI files whose keys
mirror the CLI flags.  Each run writes its manifest before any results and
appends diagnostics afterwards, and identical configs regenerate
byte-identical CSV payloads.
"""

from __future__ import annotations

import configparser
import datetime
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dense import OTOCSpec, diagonalize, otoc_series, otoc_site_matrix
from .fits import LightconeData, fit_lightcone, scrambling_time
from .krylov import krylov_operator_pipeline, krylov_state_pipeline
from .model import ModelParams, build_hamiltonian, build_terms, coupling_profile
from .mps import (
    TrotterScheme,
    TruncationPolicy,
    lightcone_scan,
    otoc_mps_series,
)

WORKERS_ENV = "HYPERISING_WORKERS"
OUTPUT_ROOT_ENV = "HYPERISING_OUTPUT_ROOT"

# The single defaults table; config files and CLI flags override these.
DEFAULTS = {
    "model.n": 9,
    "model.j": 1.0,
    "model.h": 1.0,
    "model.m": 0.05,
    "model.l_max": 4.0,
    "model.ell": 1.0,
    "experiment.backend": "dense",
    "experiment.beta": 0.0,
    "experiment.threshold": 0.5,
    "experiment.variant": "regularized",
    "grid.t_max": 20.0,
    "grid.dt": 0.05,
    "mps.chi_max": 256,
    "mps.cutoff": 1e-10,
    "mps.dt": 0.01,
    "mps.order": 2,
    "krylov.horizon": 40.0,
    "krylov.rk4_dt": 1e-3,
    "krylov.store_dt": 0.05,
    "dense.precision": "auto",
}


@dataclass
class ExperimentConfig:
    """Validated description of one experiment family plus optional sweeps."""

    experiment: str  # otoc | lightcone | krylov-state | krylov-operator
    model: ModelParams
    backend: str = "dense"
    beta: float = DEFAULTS["experiment.beta"]
    variant: str = DEFAULTS["experiment.variant"]
    threshold: float = DEFAULTS["experiment.threshold"]
    w_site: int | None = None
    v_site: int = 0
    sites: tuple = ()
    t_max: float = DEFAULTS["grid.t_max"]
    dt_grid: float = DEFAULTS["grid.dt"]
    chi_max: int = DEFAULTS["mps.chi_max"]
    cutoff: float = DEFAULTS["mps.cutoff"]
    trotter_dt: float = DEFAULTS["mps.dt"]
    trotter_order: int = DEFAULTS["mps.order"]
    horizon: float = DEFAULTS["krylov.horizon"]
    rk4_dt: float = DEFAULTS["krylov.rk4_dt"]
    store_dt: float = DEFAULTS["krylov.store_dt"]
    precision: str = DEFAULTS["dense.precision"]
    sweep: dict = field(default_factory=dict)  # name -> list of values
    output_dir: str = "runs"

    def __post_init__(self):
        if self.experiment not in ("otoc", "lightcone", "krylov-state", "krylov-operator"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.backend not in ("dense", "mps"):
            raise ValueError(f"unknown backend {self.backend!r}")
        for key in self.sweep:
            if key not in ("l_max", "beta", "n"):
                raise ValueError(f"unsupported sweep key {key!r}")
        if self.t_max < 0 or self.dt_grid <= 0:
            raise ValueError("time grid must have t_max >= 0 and dt > 0")


def format_number(x) -> str:
    """18-significant-digit decimal rendering used by every CSV."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.18g}"


def write_csv(path: Path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return header, data


class RunManifest:
    """Append-only structured-text record of one run."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def write_initial(self, config: ExperimentConfig) -> None:
        lines = [
            "[run]",
            f"created = {datetime.datetime.now().isoformat()}",
            f"code_version = {__version__}",
            f"experiment = {config.experiment}",
            f"backend = {config.backend}",
            "",
            "[model]",
            f"n = {config.model.n}",
            f"j = {format_number(config.model.j)}",
            f"h = {format_number(config.model.h)}",
            f"m = {format_number(config.model.m)}",
            f"l_max = {format_number(config.model.l_max)}",
            f"ell = {format_number(config.model.ell)}",
            "",
            "[experiment]",
            f"beta = {format_number(config.beta)}",
            f"variant = {config.variant}",
            f"threshold = {format_number(config.threshold)}",
            f"w_site = {config.w_site}",
            f"v_site = {config.v_site}",
            f"sites = {','.join(str(s) for s in config.sites)}",
            "",
            "[numerics]",
            f"t_max = {format_number(config.t_max)}",
            f"dt_grid = {format_number(config.dt_grid)}",
            f"chi_max = {config.chi_max}",
            f"cutoff = {format_number(config.cutoff)}",
            f"trotter_dt = {format_number(config.trotter_dt)}",
            f"trotter_order = {config.trotter_order}",
            f"horizon = {format_number(config.horizon)}",
            f"rk4_dt = {format_number(config.rk4_dt)}",
            f"store_dt = {format_number(config.store_dt)}",
            f"precision = {config.precision}",
            "",
        ]
        if config.sweep:
            lines.append("[sweep]")
            for key, values in sorted(config.sweep.items()):
                lines.append(f"{key} = {','.join(format_number(v) for v in values)}")
            lines.append("")
        self.path.write_text("\n".join(lines))

    def append(self, section: str, entries: dict) -> None:
        lines = [f"[{section}]"]
        for key, value in entries.items():
            lines.append(f"{key} = {value}")
        lines.append("")
        with self.path.open("a") as fh:
            fh.write("\n".join(lines) + "\n")


def _time_grid(config: ExperimentConfig) -> np.ndarray:
    n_pts = int(round(config.t_max / config.dt_grid))
    return np.arange(n_pts + 1) * config.dt_grid


def _scheme(config: ExperimentConfig) -> TrotterScheme:
    return TrotterScheme(dt=config.trotter_dt, order=config.trotter_order)


def _policy(config: ExperimentConfig) -> TruncationPolicy:
    return TruncationPolicy(chi_max=config.chi_max, cutoff=config.cutoff)


def _default_sites(n: int, w_site: int) -> list:
    return [s for s in range(n) if s != w_site]


def _run_point(config: ExperimentConfig, out_dir: Path) -> dict:
    """Execute a single (non-swept) experiment into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params = config.model
    diag: dict = {}

    if config.experiment in ("otoc", "lightcone"):
        w_site = config.w_site
        if w_site is None:
            w_site = OTOCSpec.centered(params.n).w_site
        terms = build_terms(params)
        if config.experiment == "otoc":
            grid = _time_grid(config)
            if config.backend == "dense":
                spec = diagonalize(build_hamiltonian(params))
                series = otoc_series(
                    spec,
                    config.beta,
                    OTOCSpec(w_site=w_site, v_site=config.v_site),
                    grid,
                    variant=config.variant,
                    precision=config.precision,
                )
                header = ["t", "ReF", "ImF", "O", "C"]
                rows = zip(grid, series.f.real, series.f.imag, series.o, series.c)
            else:
                series = otoc_mps_series(
                    params.n,
                    config.beta,
                    OTOCSpec(w_site=w_site, v_site=config.v_site),
                    grid,
                    _scheme(config),
                    _policy(config),
                    terms,
                )
                header = ["t", "ReF", "ImF", "O", "C", "discarded_weight"]
                rows = zip(
                    grid,
                    series.f.real,
                    series.f.imag,
                    series.o,
                    series.c,
                    series.meta["discarded_weight"],
                )
                diag["flags"] = ";".join(series.meta["flags"]) or "none"
            write_csv(out_dir / "otoc.csv", header, rows)
            diag["points"] = grid.size
            return diag

        sites = list(config.sites) or _default_sites(params.n, w_site)
        grid = _time_grid(config)
        if config.backend == "dense":
            spec = diagonalize(build_hamiltonian(params))
            o_mat, _ = otoc_site_matrix(
                spec, config.beta, w_site, sites, grid, precision=config.precision
            )
            t_s = np.empty(len(sites))
            flags = []
            for k, site in enumerate(sites):
                from .dense import OTOCSeries

                s = OTOCSeries(
                    times=grid, f=np.zeros(0), o=o_mat[k], c=2 * o_mat[k]
                )
                t_s[k], fl = scrambling_time(s, config.threshold)
                flags.extend(f"site{site}:{f}" for f in fl)
            cone = LightconeData(
                sites=np.array(sites), t_s=t_s, threshold=config.threshold, flags=flags
            )
        else:
            o_mat, _, cone = lightcone_scan(
                params.n,
                config.beta,
                w_site,
                sites,
                grid,
                _scheme(config),
                _policy(config),
                terms,
                threshold=config.threshold,
            )
        write_csv(
            out_dir / "lightcone.csv",
            ["site", "t_s"],
            zip(cone.sites, cone.t_s),
        )
        write_csv(
            out_dir / "omatrix.csv",
            ["site"] + [format_number(t) for t in grid],
            (np.concatenate(([site], row)) for site, row in zip(cone.sites, o_mat)),
        )
        try:
            fit_log, fit_lin, preferred = fit_lightcone(cone, w_site)
            (out_dir / "lightcone_fit.txt").write_text(
                "\n".join(
                    [
                        "[lightcone_fit]",
                        f"preferred = {preferred}",
                        f"log_slope = {format_number(fit_log.params[0])}",
                        f"log_intercept = {format_number(fit_log.params[1])}",
                        f"log_r_squared = {format_number(fit_log.r_squared)}",
                        f"linear_slope = {format_number(fit_lin.params[0])}",
                        f"linear_intercept = {format_number(fit_lin.params[1])}",
                        f"linear_r_squared = {format_number(fit_lin.r_squared)}",
                        f"threshold = {format_number(config.threshold)}",
                        "",
                    ]
                )
            )
            diag["preferred_model"] = preferred
        except ValueError as exc:
            diag["lightcone_fit_error"] = str(exc)
        diag["flags"] = ";".join(cone.flags) or "none"
        return diag

    # Krylov pipelines
    if config.experiment == "krylov-state":
        result = krylov_state_pipeline(
            params, config.horizon, dt=config.rk4_dt, store_dt=config.store_dt
        )
    else:
        result = krylov_operator_pipeline(
            params, config.horizon, dt=config.rk4_dt, store_dt=config.store_dt
        )
    data, obs = result.lanczos, result.observables
    b_padded = np.concatenate(([np.nan], data.b))
    write_csv(
        out_dir / "lanczos.csv",
        ["n", "a_n", "b_n"],
        zip(range(data.krylov_dim), data.a, b_padded),
    )
    write_csv(
        out_dir / "krylov_observables.csv",
        ["t", "C_K", "S_K"],
        zip(obs.times, obs.c_k, obs.s_k),
    )
    norms = result.wavefunction.norms()
    diag["krylov_dim"] = data.krylov_dim
    diag["max_norm_drift"] = format_number(np.abs(norms - 1.0).max())
    return diag


def _point_label(index: int, overrides: dict) -> str:
    parts = [f"point_{index:03d}"]
    parts += [f"{k}{format_number(v)}" for k, v in sorted(overrides.items())]
    return "_".join(parts)


def _sweep_points(config: ExperimentConfig):
    keys = sorted(config.sweep)
    if not keys:
        return
    grids = [config.sweep[k] for k in keys]
    mesh = [[]]
    for values in grids:
        mesh = [prev + [v] for prev in mesh for v in values]
    for idx, combo in enumerate(mesh):
        yield idx, dict(zip(keys, combo))


def _apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    model = config.model
    model_kwargs = {}
    if "l_max" in overrides:
        model_kwargs["l_max"] = float(overrides["l_max"])
    if "n" in overrides:
        model_kwargs["n"] = int(overrides["n"])
    if model_kwargs:
        model = replace(model, **model_kwargs)
    beta = float(overrides.get("beta", config.beta))
    return replace(config, model=model, beta=beta, sweep={})


def _run_point_task(args):
    config, out_dir = args
    return _run_point(config, Path(out_dir))


def run(config: ExperimentConfig, output_dir: str | None = None) -> dict:
    """Execute an experiment (with any sweeps) under its own directory.

    The manifest is written before any computation; sweep points execute
    independently (optionally in a process pool) and results aggregate in
    sorted point order, so the artifact set is order-independent.
    """
    root = Path(output_dir or os.environ.get(OUTPUT_ROOT_ENV, config.output_dir))
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(root / "manifest.txt")
    manifest.write_initial(config)

    points = list(_sweep_points(config))
    artifacts = {"root": str(root), "manifest": str(manifest.path)}
    failures = []
    if not points:
        if config.sweep:
            manifest.append("completed", {"status": "empty-sweep"})
            return artifacts
        diag = _run_point(config, root)
        manifest.append("diagnostics", diag)
        manifest.append("completed", {"status": "ok", "finished": datetime.datetime.now().isoformat()})
        return artifacts

    jobs = []
    for idx, overrides in points:
        sub = root / _point_label(idx, overrides)
        jobs.append((idx, overrides, _apply_overrides(config, overrides), sub))

    workers = int(os.environ.get(WORKERS_ENV, "1"))
    results: dict[int, dict] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (idx, overrides, _, sub), diag in zip(
                jobs, pool.map(_run_point_task, [(c, str(s)) for _, _, c, s in jobs])
            ):
                results[idx] = diag
    else:
        for idx, overrides, cfg, sub in jobs:
            try:
                results[idx] = _run_point(cfg, sub)
            except Exception as exc:  # point failures are recorded, not fatal
                failures.append((idx, str(exc)))
                results[idx] = {"error": str(exc)}

    diag_entries = {}
    for idx, overrides, _, sub in jobs:
        label = _point_label(idx, overrides)
        for key, value in sorted(results[idx].items()):
            diag_entries[f"{label}.{key}"] = value
    manifest.append("diagnostics", diag_entries)
    status = "ok" if len(failures) < len(points) else "all-points-failed"
    manifest.append(
        "completed", {"status": status, "finished": datetime.datetime.now().isoformat()}
    )
    if status == "all-points-failed":
        raise RuntimeError(f"every sweep point failed: {failures}")
    artifacts["points"] = [str(sub) for _, _, _, sub in jobs]
    return artifacts


def dump_couplings(params: ModelParams, path: Path | None = None) -> str:
    """CSV of the coupling profile: (i, rho, eta, bond_coeff), 15 digits."""
    profile = coupling_profile(params)
    terms = build_terms(params)
    zz = terms.zz_coefficients()
    lines = ["i,rho,eta,bond_coeff"]
    for i in range(params.n):
        bond = f"{zz[i]:.15g}" if i < params.n - 1 else ""
        lines.append(f"{i},{profile.rho[i]:.15g},{profile.eta[i]:.15g},{bond}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# Desk-scale recipes keyed by figure id.  Each returns an ExperimentConfig;
# overrides let callers shrink n / grids for quick runs.
def _recipe_fig2_desk() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="lightcone",
        model=ModelParams(n=13, j=1.0, h=1.0, m=0.05, l_max=1.0),
        backend="dense",
        beta=0.0,
        t_max=14.0,
        dt_grid=0.2,
        sweep={"l_max": [1.0, 2.0, 3.0, 4.0, 5.0]},
    )


def _recipe_fig3() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="otoc",
        model=ModelParams(n=13, j=1.0, h=1.0, m=0.05, l_max=4.0),
        backend="dense",
        t_max=10.0,
        dt_grid=0.15,
        sweep={"beta": [0.5, 1.0, 2.0, 3.0, 4.5, 6.0], "l_max": [1.0, 2.0, 4.0]},
    )


def _recipe_fig4() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="krylov-state",
        model=ModelParams(n=11, j=1.0, h=1.0, m=0.05, l_max=1.0),
        horizon=40.0,
        sweep={"l_max": [1.0, 2.0, 4.0]},
    )


def _recipe_fig5() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="krylov-operator",
        model=ModelParams(n=6, j=1.0, h=1.0, m=0.05, l_max=4.0),
        horizon=60.0,
    )


def _recipe_fig6() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="lightcone",
        model=ModelParams(n=13, j=1.0, h=1.0, m=0.05, l_max=0.05),
        backend="dense",
        beta=0.25,
        t_max=14.0,
        dt_grid=0.2,
    )


def _recipe_fig7() -> ExperimentConfig:
    cfg = _recipe_fig6()
    return replace(cfg, model=replace(cfg.model, l_max=3.0))


RECIPES = {
    "fig2-desk": _recipe_fig2_desk,
    "fig3": _recipe_fig3,
    "fig4": _recipe_fig4,
    "fig5": _recipe_fig5,
    "fig6": _recipe_fig6,
    "fig7": _recipe_fig7,
}


def reproduce(figure_id: str, output_dir: str | None = None, **overrides) -> dict:
    """Run a named desk-scale recipe; keyword overrides patch the config."""
    if figure_id not in RECIPES:
        raise ValueError(f"unknown recipe {figure_id!r}; known: {sorted(RECIPES)}")
    config = RECIPES[figure_id]()
    model_keys = {k: v for k, v in overrides.items() if k in ("n", "j", "h", "m", "l_max", "ell")}
    other = {k: v for k, v in overrides.items() if k not in model_keys}
    if model_keys:
        config = replace(config, model=replace(config.model, **model_keys))
    if other:
        config = replace(config, **other)
    return run(config, output_dir=output_dir or figure_id.replace("-", "_"))


def load_config(path: str) -> ExperimentConfig:
    """Parse a sectioned key-value config file into an ExperimentConfig."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            return cast(parser.get(section, key))
        return default

    model = ModelParams(
        n=get("model", "n", int, DEFAULTS["model.n"]),
        j=get("model", "j", float, DEFAULTS["model.j"]),
        h=get("model", "h", float, DEFAULTS["model.h"]),
        m=get("model", "m", float, DEFAULTS["model.m"]),
        l_max=get("model", "l_max", float, DEFAULTS["model.l_max"]),
        ell=get("model", "ell", float, DEFAULTS["model.ell"]),
    )
    sweep = {}
    if parser.has_section("sweep"):
        for key in parser["sweep"]:
            sweep[key] = [float(x) for x in parser.get("sweep", key).split(",")]
    sites = ()
    if parser.has_option("experiment", "sites"):
        sites = tuple(
            int(x) for x in parser.get("experiment", "sites").split(",") if x.strip()
        )
    w_site_raw = get("experiment", "w_site", str, "")
    return ExperimentConfig(
        experiment=parser.get("experiment", "kind"),
        model=model,
        backend=get("experiment", "backend", str, DEFAULTS["experiment.backend"]),
        beta=get("experiment", "beta", float, DEFAULTS["experiment.beta"]),
        variant=get("experiment", "variant", str, DEFAULTS["experiment.variant"]),
        threshold=get("experiment", "threshold", float, DEFAULTS["experiment.threshold"]),
        w_site=int(w_site_raw) if w_site_raw not in ("", "None") else None,
        v_site=get("experiment", "v_site", int, 0),
        sites=sites,
        t_max=get("grid", "t_max", float, DEFAULTS["grid.t_max"]),
        dt_grid=get("grid", "dt", float, DEFAULTS["grid.dt"]),
        chi_max=get("mps", "chi_max", int, DEFAULTS["mps.chi_max"]),
        cutoff=get("mps", "cutoff", float, DEFAULTS["mps.cutoff"]),
        trotter_dt=get("mps", "dt", float, DEFAULTS["mps.dt"]),
        trotter_order=get("mps", "order", int, DEFAULTS["mps.order"]),
        horizon=get("krylov", "horizon", float, DEFAULTS["krylov.horizon"]),
        rk4_dt=get("krylov", "rk4_dt", float, DEFAULTS["krylov.rk4_dt"]),
        store_dt=get("krylov", "store_dt", float, DEFAULTS["krylov.store_dt"]),
        precision=get("dense", "precision", str, DEFAULTS["dense.precision"]),
        sweep=sweep,
        output_dir=get("output", "dir", str, "runs"),
    )
