"""Command-line experiment driver.

Subcommands
-----------
phantom      render or load the ground-truth object and save it with stats
sinogram     simulate clean and noisy sinograms for a noise case
reconstruct  run one reconstruction (gp | l2 | tv) and score it
sweep        repeat reconstructions along one axis (n-theta | snr | n-k | lambda)
report       merge metrics CSV files from previous runs

Configuration is layered: built-in defaults, then an INI-style config file
(``--config``), then repeated ``--set section.key=value`` overrides, then
dedicated flags. Passing a ``manifest.json`` from a previous run to
``--config`` replays that run's fully resolved configuration. Every
command writes a manifest recording the resolved configuration, library
versions, derived quantities, and SHA-256 hashes of its outputs; data
files are written atomically, and re-running the same configuration
reproduces sinogram and metrics files byte for byte (wall-clock timings
live only in the manifest).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure. The only environment variable honored is GPTOMO_WORKERS,
the default sweep worker count.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .baselines import (DEFAULT_LAMBDA_GRID, TvConfig, reconstruct_l2, reconstruct_tv,
                        tv_grid_search)
from .fileio import (atomic_save_npy, atomic_write_text, load_sinogram, load_grayscale,
                     save_image, save_sinogram)
from .geometry import build_grid, build_system_matrix, default_scan, forward_project
from .gp import posterior
from .kernels import FAMILIES, KernelSpec
from .metrics import MetricRecord, parse_metrics_csv, e_norm, summarize
from .noise import CASE_I_NUGGET, CASES, NoiseCase, assumed_noise_model, corrupt
from .optim import OptimizerConfig, fit_sequential
from .phantoms import VARIANTS, shepp_logan

DESK_SCALE_N = 64
SWEEP_AXES = ("n-theta", "snr", "n-k", "lambda")

DEFAULTS = {
    "object": {
        "source": "shepp-logan",
        "variant": "standard",
        "n": "64",
        # "auto" means 0.08/n for the phantom (side length 0.08) and 1.0
        # for loaded images.
        "p": "auto",
    },
    "scan": {"n_theta": "40"},
    "noise": {"case": "I", "seed": "0", "per_measurement_scale": "false"},
    "method": {
        "name": "gp",
        "family": "mk32",
        "n_k_max": "1",
        "lam": "1e-4",
        "l2_iterations": "200",
        "tv_outer_iterations": "400",
        "tv_prox_iterations": "30",
    },
    "optimizer": {
        "max_iter": "60",
        "gtol_rel": "1e-6",
        "gtol_abs": "0.0",
        "cg_max": "",
    },
    "sweep": {
        "axis": "n-theta",
        "n_theta_list": "20,40,60,90",
        "cases": "I,II,III,IV",
        "n_k_max": "3",
        "lambdas": "",
        "workers": "",
    },
    "input": {"sinogram_dir": ""},
    "output": {"directory": "out", "image_format": "png", "timings": "false"},
}


class ConfigError(Exception):
    """Invalid or inconsistent run configuration (exit code 2)."""


class RunConfig:
    """Typed access to the layered section/key/value configuration."""

    def __init__(self, sections: dict[str, dict[str, str]]):
        self.sections = sections

    def get(self, section: str, key: str) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"missing configuration value {section}.{key}") from None

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer, got {raw!r}") from None

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number, got {raw!r}") from None

    def get_bool(self, section: str, key: str) -> bool:
        raw = self.get(section, key).strip().lower()
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{section}.{key} must be a boolean, got {raw!r}")

    def get_list(self, section: str, key: str, convert) -> list:
        raw = self.get(section, key)
        items = [tok.strip() for tok in raw.split(",") if tok.strip()]
        try:
            return [convert(tok) for tok in items]
        except ValueError:
            raise ConfigError(f"{section}.{key} has a malformed list entry in {raw!r}") from None

    def set(self, section: str, key: str, value: str) -> None:
        self.sections.setdefault(section, {})[key] = value

    # -- derived values ----------------------------------------------------

    @property
    def n(self) -> int:
        n = self.get_int("object", "n")
        if n < 2:
            raise ConfigError(f"object.n must be >= 2, got {n}")
        return n

    @property
    def p(self) -> float:
        raw = self.get("object", "p").strip().lower()
        if raw == "auto":
            return 0.08 / self.n if self.source == "shepp-logan" else 1.0
        try:
            p = float(raw)
        except ValueError:
            raise ConfigError(f"object.p must be a number or 'auto', got {raw!r}") from None
        if not (p > 0):
            raise ConfigError(f"object.p must be positive, got {p}")
        return p

    @property
    def source(self) -> str:
        return self.get("object", "source")

    @property
    def out_dir(self) -> str:
        return self.get("output", "directory")


def validate(cfg: RunConfig, command: str) -> None:
    """Check enumerations and referenced paths before any compute."""
    _ = cfg.n, cfg.p
    variant = cfg.get("object", "variant")
    if cfg.source == "shepp-logan" and variant not in VARIANTS:
        raise ConfigError(f"object.variant must be one of {VARIANTS}, got {variant!r}")
    if cfg.source != "shepp-logan" and not os.path.exists(cfg.source):
        raise ConfigError(f"object.source image {cfg.source!r} does not exist")
    if cfg.get_int("scan", "n_theta") < 1:
        raise ConfigError("scan.n_theta must be >= 1")
    case = cfg.get("noise", "case")
    if case not in CASES:
        raise ConfigError(f"noise.case must be one of {CASES}, got {case!r}")
    if cfg.get_int("noise", "seed") < 0:
        raise ConfigError("noise.seed must be a nonnegative integer")
    method = cfg.get("method", "name")
    if method not in ("gp", "l2", "tv"):
        raise ConfigError(f"method.name must be gp, l2, or tv, got {method!r}")
    family = cfg.get("method", "family")
    if family not in FAMILIES:
        raise ConfigError(f"method.family must be one of {FAMILIES}, got {family!r}")
    if cfg.get_int("method", "n_k_max") < 1:
        raise ConfigError("method.n_k_max must be >= 1")
    if command == "sweep" and cfg.get("sweep", "axis") not in SWEEP_AXES:
        raise ConfigError(
            f"sweep.axis must be one of {SWEEP_AXES}, got {cfg.get('sweep', 'axis')!r}")
    sino_dir = cfg.get("input", "sinogram_dir")
    if command == "reconstruct" and sino_dir and not os.path.isdir(sino_dir):
        raise ConfigError(f"input.sinogram_dir {sino_dir!r} does not exist")


# -- configuration layering --------------------------------------------------------


def _merge_ini(sections: dict, path: str) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    for section in parser.sections():
        for key, value in parser.items(section):
            sections.setdefault(section, {})[key] = value


def _merge_manifest(sections: dict, path: str) -> None:
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse manifest {path}: {exc}") from None
    stored = manifest.get("config")
    if not isinstance(stored, dict):
        raise ConfigError(f"manifest {path} has no config block to replay")
    for section, pairs in stored.items():
        for key, value in pairs.items():
            sections.setdefault(section, {})[key] = str(value)


def build_config(args: argparse.Namespace) -> RunConfig:
    sections = {name: dict(pairs) for name, pairs in DEFAULTS.items()}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config!r} does not exist")
        if args.config.endswith(".json"):
            _merge_manifest(sections, args.config)
        else:
            _merge_ini(sections, args.config)
    for item in getattr(args, "set", None) or []:
        try:
            dotted, value = item.split("=", 1)
            section, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(
                f"--set expects section.key=value, got {item!r}") from None
        sections.setdefault(section.strip(), {})[key.strip()] = value.strip()
    cfg = RunConfig(sections)

    flag_map = [
        ("n", "object", "n"), ("p", "object", "p"),
        ("source", "object", "source"), ("variant", "object", "variant"),
        ("n_theta", "scan", "n_theta"), ("case", "noise", "case"),
        ("seed", "noise", "seed"), ("method", "method", "name"),
        ("family", "method", "family"), ("n_k_max", "method", "n_k_max"),
        ("lam", "method", "lam"), ("axis", "sweep", "axis"),
        ("workers", "sweep", "workers"), ("out", "output", "directory"),
        ("sinogram_dir", "input", "sinogram_dir"),
    ]
    for attr, section, key in flag_map:
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(section, key, str(value))
    if getattr(args, "timings", False):
        cfg.set("output", "timings", "true")
    return cfg


def _guard_scale(cfg: RunConfig, args: argparse.Namespace) -> None:
    """Desk scale by default; larger grids need --full-scale plus a printed
    memory estimate so nobody swaps 5 GB by accident."""
    n = cfg.n
    if n <= DESK_SCALE_N:
        return
    m = cfg.get_int("scan", "n_theta") * math.ceil(n * math.sqrt(2.0))
    gib = 8.0 * (3.0 * m * m + 64.0 * n * n) / 2.0**30
    if not getattr(args, "full_scale", False):
        raise ConfigError(
            f"n={n} exceeds the desk scale ({DESK_SCALE_N}); pass --full-scale "
            f"to confirm (estimated peak memory {gib:.2f} GiB)")
    print(f"full scale n={n}: estimated peak memory {gib:.2f} GiB "
          f"(m={m} measurements)")


# -- shared pipeline pieces ---------------------------------------------------------


def _object_field(cfg: RunConfig):
    if cfg.source == "shepp-logan":
        return shepp_logan(build_grid(cfg.n, cfg.p), cfg.get("object", "variant"))
    return load_grayscale(cfg.source, n=cfg.n, p=cfg.p)


def _noise_case(cfg: RunConfig, case: str | None = None, seed: int | None = None) -> NoiseCase:
    return NoiseCase(
        case if case is not None else cfg.get("noise", "case"),
        seed=seed if seed is not None else cfg.get_int("noise", "seed"),
        per_measurement_scale=cfg.get_bool("noise", "per_measurement_scale"),
    )


def _optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    cg_raw = cfg.get("optimizer", "cg_max").strip()
    return OptimizerConfig(
        max_iter=cfg.get_int("optimizer", "max_iter"),
        gtol_rel=cfg.get_float("optimizer", "gtol_rel"),
        gtol_abs=cfg.get_float("optimizer", "gtol_abs"),
        cg_max=int(cg_raw) if cg_raw else None,
    )


def _tv_config(cfg: RunConfig) -> TvConfig:
    return TvConfig(outer_iterations=cfg.get_int("method", "tv_outer_iterations"),
                    prox_iterations=cfg.get_int("method", "tv_prox_iterations"))


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(cfg: RunConfig, command: str, derived: dict,
                    outputs: list[str], seconds: float) -> str:
    out_dir = cfg.out_dir
    manifest = {
        "command": command,
        "config": cfg.sections,
        "derived": derived,
        "versions": {
            "gptomo": _package_version(),
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
        "formats": {
            "sinogram": "csv header theta_index,tau_index,value; %.17g",
            "image": "npy float64 exact; png/pgm quantized",
            "metrics": "csv " + "method,case,n,n_theta,n_k,family,seed,e_norm,seconds",
        },
        "outputs": {name: _sha256(os.path.join(out_dir, name)) for name in sorted(outputs)},
        "timings": {"seconds": round(seconds, 3)},
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _package_version() -> str:
    from . import __version__

    return __version__


def _save_view(path: str, values: np.ndarray, fixed_unit: bool) -> None:
    scaling = (0.0, 1.0) if fixed_unit else "minmax"
    save_image(path, values, scaling=scaling)


def _maybe_seconds(cfg: RunConfig, seconds: float):
    return seconds if cfg.get_bool("output", "timings") else None


# -- reconstruction engines ---------------------------------------------------------


def _simulate(cfg: RunConfig, n_theta: int | None = None, case: NoiseCase | None = None):
    """Ground truth, system matrix, and sinogram triple for one run."""
    field = _object_field(cfg)
    scan = default_scan(field.grid, n_theta or cfg.get_int("scan", "n_theta"))
    A = build_system_matrix(field.grid, scan)
    y_clean = forward_project(A, field)
    case = case or _noise_case(cfg)
    y_noisy, sigma_true = corrupt(y_clean, case)
    return field, scan, A, y_clean, y_noisy, sigma_true, case


def _reconstruct_one(cfg: RunConfig, method: str, A, grid, y_clean, y_noisy,
                     sigma_true, case: NoiseCase, out_dir: str | None = None,
                     n_k_max: int | None = None):
    """Dispatch one reconstruction; returns (flat image, extras dict)."""
    extras: dict = {}
    if method == "l2":
        f = reconstruct_l2(A, y_noisy, iterations=cfg.get_int("method", "l2_iterations"))
        return f, extras
    if method == "tv":
        lam = cfg.get_float("method", "lam")
        f = reconstruct_tv(A, y_noisy, lam, _tv_config(cfg))
        extras["lam"] = lam
        return f, extras

    noise = assumed_noise_model(case, y_clean, sigma_true)
    trace_path = None
    if out_dir is not None:
        trace_path = os.path.join(out_dir, "fit_trace.csv")
        if os.path.exists(trace_path):
            os.remove(trace_path)
    spec, fit = fit_sequential(
        A, grid, y_noisy, noise,
        family=cfg.get("method", "family"),
        n_k_max=n_k_max if n_k_max is not None else cfg.get_int("method", "n_k_max"),
        config=_optimizer_config(cfg),
        trace_path=trace_path,
    )
    post = posterior(A, spec, noise, y_noisy, c=spec.c,
                     coords_px=grid.pixel_coords_px())
    extras.update(spec=spec, fit=fit, posterior=post, noise=noise)
    return post.mean, extras


def _fit_report_json(fit) -> dict:
    return {
        "family": fit.family,
        "stopped_early": fit.stopped_early,
        "message": fit.message,
        "stages": [
            {"n_k": s.n_k, "nll": s.nll, "grad_inf": s.grad_inf,
             "iterations": s.iterations, "status": s.status,
             "seconds": round(s.seconds, 3), "beta": list(map(float, s.beta))}
            for s in fit.stages
        ],
    }


# -- subcommands --------------------------------------------------------------------


def cmd_phantom(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    os.makedirs(cfg.out_dir, exist_ok=True)
    field = _object_field(cfg)
    fmt = cfg.get("output", "image_format")
    outputs = ["object.npy", f"object.{fmt}"]
    atomic_save_npy(os.path.join(cfg.out_dir, "object.npy"), field.values)
    _save_view(os.path.join(cfg.out_dir, f"object.{fmt}"), field.values,
               fixed_unit=cfg.source == "shepp-logan")
    derived = {"mean": field.mean, "std": field.std, "n": field.grid.n,
               "p": field.grid.p}
    _write_manifest(cfg, "phantom", derived, outputs, time.perf_counter() - t0)
    print(f"object: n={field.grid.n} mean={field.mean:.4f} std={field.std:.4f} "
          f"-> {cfg.out_dir}")
    return 0


def cmd_sinogram(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    _guard_scale(cfg, args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    field, scan, A, y_clean, y_noisy, sigma_true, case = _simulate(cfg)
    n_tau = scan.n_tau
    save_sinogram(os.path.join(cfg.out_dir, "sinogram_clean.csv"), y_clean, n_tau)
    save_sinogram(os.path.join(cfg.out_dir, "sinogram_noisy.csv"), y_noisy, n_tau)
    atomic_save_npy(os.path.join(cfg.out_dir, "sigma_true.npy"), sigma_true)
    outputs = ["sinogram_clean.csv", "sinogram_noisy.csv", "sigma_true.npy"]
    derived = {
        "m": int(A.shape[0]),
        "n_theta": len(scan.angles),
        "n_tau": int(n_tau),
        "case": case.case,
        "seed": case.seed,
        "nnz": int(A.nnz),
    }
    if case.case == "I":
        derived["nugget"] = CASE_I_NUGGET
    _write_manifest(cfg, "sinogram", derived, outputs, time.perf_counter() - t0)
    print(f"sinogram: case {case.case} seed {case.seed} m={A.shape[0]} -> {cfg.out_dir}")
    return 0


def _load_sinogram_dir(cfg: RunConfig):
    """Read the products of a previous ``sinogram`` run."""
    d = cfg.get("input", "sinogram_dir")
    clean = load_sinogram(os.path.join(d, "sinogram_clean.csv"))
    noisy = load_sinogram(os.path.join(d, "sinogram_noisy.csv"))
    sigma_true = np.load(os.path.join(d, "sigma_true.npy"))
    if noisy.y.shape != clean.y.shape or sigma_true.shape != clean.y.shape:
        raise ConfigError(f"sinogram products in {d!r} have inconsistent lengths")
    return clean, noisy, sigma_true


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    _guard_scale(cfg, args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    method = cfg.get("method", "name")

    if cfg.get("input", "sinogram_dir"):
        field = _object_field(cfg)
        scan = default_scan(field.grid, cfg.get_int("scan", "n_theta"))
        A = build_system_matrix(field.grid, scan)
        clean, noisy, sigma_true = _load_sinogram_dir(cfg)
        if clean.y.shape != (A.shape[0],):
            raise ConfigError(
                f"sinogram length {clean.y.size} does not match the configured "
                f"scan ({A.shape[0]} measurements)")
        y_clean, y_noisy = clean.y, noisy.y
        case = _noise_case(cfg)
    else:
        field, scan, A, y_clean, y_noisy, sigma_true, case = _simulate(cfg)

    f_flat, extras = _reconstruct_one(cfg, method, A, field.grid, y_clean, y_noisy,
                                      sigma_true, case, out_dir=cfg.out_dir)
    err = e_norm(f_flat, field)
    n = field.grid.n
    fmt = cfg.get("output", "image_format")

    outputs = ["recon.npy", f"recon.{fmt}", "metrics.csv"]
    atomic_save_npy(os.path.join(cfg.out_dir, "recon.npy"), f_flat.reshape(n, n))
    _save_view(os.path.join(cfg.out_dir, f"recon.{fmt}"), f_flat.reshape(n, n), False)
    derived: dict = {"e_norm": err, "method": method, "case": case.case, "seed": case.seed}

    n_k, family = 0, "-"
    if method == "gp":
        spec, fit, post = extras["spec"], extras["fit"], extras["posterior"]
        n_k, family = spec.n_k, spec.family
        atomic_save_npy(os.path.join(cfg.out_dir, "rsd.npy"), post.rsd.reshape(n, n))
        _save_view(os.path.join(cfg.out_dir, f"rsd.{fmt}"), post.rsd.reshape(n, n), False)
        atomic_write_text(os.path.join(cfg.out_dir, "fit_report.json"),
                          json.dumps(_fit_report_json(fit), indent=2) + "\n")
        outputs += ["rsd.npy", f"rsd.{fmt}", "fit_report.json", "fit_trace.csv"]
        derived.update(
            nll=float(fit.stages[-1].nll),
            hyperparameters={"sigma_f": list(map(float, spec.sigma_f)),
                             "ell": list(map(float, spec.ell)), "c": float(spec.c)},
            noise_model=extras["noise"].kind,
        )
    elif method == "tv":
        derived["lam"] = extras["lam"]

    seconds = time.perf_counter() - t0
    record = MetricRecord(method=method, case=case.case, n=n,
                          n_theta=len(scan.angles), n_k=n_k, family=family,
                          seed=case.seed, e_norm=err,
                          seconds=_maybe_seconds(cfg, seconds))
    atomic_write_text(os.path.join(cfg.out_dir, "metrics.csv"), summarize([record]))
    _write_manifest(cfg, "reconstruct", derived, outputs, seconds)
    print(f"reconstruct: {method} case {case.case} e_norm={err:.4f} -> {cfg.out_dir}")
    return 0


def _sweep_workers(cfg: RunConfig) -> int:
    raw = cfg.get("sweep", "workers").strip()
    if not raw:
        raw = os.environ.get("GPTOMO_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"sweep.workers must be an integer, got {raw!r}") from None
    return max(1, workers)


def _curve_csv(path: str, header: str, rows) -> None:
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_sweep(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    _guard_scale(cfg, args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    axis = cfg.get("sweep", "axis")
    method = cfg.get("method", "name")
    workers = _sweep_workers(cfg)
    records: list[MetricRecord] = []
    derived: dict = {"axis": axis, "workers": workers}
    outputs = ["metrics.csv"]

    def run_point(n_theta: int, case: NoiseCase):
        field, scan, A, y_clean, y_noisy, sigma_true, case = _simulate(
            cfg, n_theta=n_theta, case=case)
        f_flat, extras = _reconstruct_one(cfg, method, A, field.grid, y_clean,
                                          y_noisy, sigma_true, case)
        err = e_norm(f_flat, field)
        spec = extras.get("spec")
        return MetricRecord(
            method=method, case=case.case, n=field.grid.n, n_theta=len(scan.angles),
            n_k=spec.n_k if spec is not None else 0,
            family=spec.family if spec is not None else "-",
            seed=case.seed, e_norm=err)

    def run_pool(tasks):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda t: run_point(*t), tasks))
        return [run_point(*t) for t in tasks]

    if axis == "n-theta":
        points = cfg.get_list("sweep", "n_theta_list", int)
        if not points:
            raise ConfigError("sweep.n_theta_list is empty")
        records = run_pool([(nt, _noise_case(cfg)) for nt in points])
        _curve_csv(os.path.join(cfg.out_dir, "curve_n_theta.csv"), "n_theta,e_norm",
                   [(r.n_theta, f"{r.e_norm:.12g}") for r in records])
        outputs.append("curve_n_theta.csv")
        derived["n_theta_list"] = points

    elif axis == "snr":
        cases = cfg.get_list("sweep", "cases", str)
        for c in cases:
            if c not in CASES:
                raise ConfigError(f"sweep.cases contains unknown case {c!r}")
        n_theta = cfg.get_int("scan", "n_theta")
        records = run_pool([(n_theta, _noise_case(cfg, case=c)) for c in cases])
        _curve_csv(os.path.join(cfg.out_dir, "curve_snr.csv"), "case,e_norm",
                   [(r.case, f"{r.e_norm:.12g}") for r in records])
        outputs.append("curve_snr.csv")
        derived["cases"] = cases

    elif axis == "n-k":
        field, scan, A, y_clean, y_noisy, sigma_true, case = _simulate(cfg)
        noise = assumed_noise_model(case, y_clean, sigma_true)
        family = cfg.get("method", "family")
        spec, fit = fit_sequential(A, field.grid, y_noisy, noise, family=family,
                                   n_k_max=cfg.get_int("sweep", "n_k_max"),
                                   config=_optimizer_config(cfg))
        rows = []
        for stage in fit.stages:
            stage_spec = KernelSpec.from_beta(family, stage.beta)
            post = posterior(A, stage_spec, noise, y_noisy, c=stage_spec.c,
                             coords_px=field.grid.pixel_coords_px())
            err = e_norm(post.mean, field)
            records.append(MetricRecord(
                method="gp", case=case.case, n=field.grid.n,
                n_theta=len(scan.angles), n_k=stage.n_k, family=family,
                seed=case.seed, e_norm=err))
            rows.append((stage.n_k, f"{stage.nll:.12g}", f"{err:.12g}"))
        _curve_csv(os.path.join(cfg.out_dir, "curve_n_k.csv"), "n_k,nll,e_norm", rows)
        outputs.append("curve_n_k.csv")
        derived["stage_nlls"] = [float(s.nll) for s in fit.stages]
        derived["stopped_early"] = fit.stopped_early

    else:  # lambda
        field, scan, A, y_clean, y_noisy, sigma_true, case = _simulate(cfg)
        raw = cfg.get("sweep", "lambdas").strip()
        lambdas = (np.asarray(cfg.get_list("sweep", "lambdas", float))
                   if raw else DEFAULT_LAMBDA_GRID)
        search = tv_grid_search(A, y_noisy, field, lambdas=lambdas,
                                config=_tv_config(cfg), workers=workers)
        for lam, err in search.curve_rows():
            records.append(MetricRecord(
                method="tv", case=case.case, n=field.grid.n,
                n_theta=len(scan.angles), n_k=0, family="-",
                seed=case.seed, e_norm=err))
        _curve_csv(os.path.join(cfg.out_dir, "curve_lambda.csv"), "lambda,e_norm",
                   [(f"{lam:.12g}", f"{err:.12g}") for lam, err in search.curve_rows()])
        outputs.append("curve_lambda.csv")
        derived.update(lambda_star=search.lambda_star, best_e_norm=search.best_e_norm)

    atomic_write_text(os.path.join(cfg.out_dir, "metrics.csv"), summarize(records))
    _write_manifest(cfg, "sweep", derived, outputs, time.perf_counter() - t0)
    print(f"sweep: axis {axis}, {len(records)} points -> {cfg.out_dir}")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    records = []
    for item in args.inputs:
        path = os.path.join(item, "metrics.csv") if os.path.isdir(item) else item
        with open(path) as fh:
            try:
                records.extend(parse_metrics_csv(fh.read()))
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    if not records:
        raise ConfigError("no metric records found in the given inputs")
    text = summarize(records)
    if args.output:
        atomic_write_text(args.output, text)
        print(f"report: {len(records)} records -> {args.output}")
    else:
        sys.stdout.write(text)

    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.method, r.case), []).append(r.e_norm)
    print("method case  runs  mean_e_norm")
    for (m, c), errs in sorted(groups.items()):
        print(f"{m:<6} {c:<5} {len(errs):>4}  {np.mean(errs):.4f}")
    return 0


# -- argument parsing ---------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gptomo",
        description="Gaussian-process tomography experiment driver.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="INI config file, or a manifest.json to replay")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory (default out)")
    common.add_argument("--n", type=int, help="grid side in pixels (default 64)")
    common.add_argument("--p", help="pixel side length, or 'auto'")
    common.add_argument("--source", help="'shepp-logan' or a grayscale image path")
    common.add_argument("--variant", help="phantom intensity set: standard | modified")
    common.add_argument("--seed", type=int, help="noise seed (default 0)")
    common.add_argument("--full-scale", action="store_true",
                        help="allow n beyond 64 (prints a memory estimate)")

    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--n-theta", dest="n_theta", type=int,
                      help="number of projection angles (default 40)")
    scan.add_argument("--case", help="noise case: I | II | III | IV")

    method = argparse.ArgumentParser(add_help=False)
    method.add_argument("--method", help="reconstruction method: gp | l2 | tv")
    method.add_argument("--family", help="kernel family: se | mk32 | mk52")
    method.add_argument("--n-k-max", dest="n_k_max", type=int,
                        help="max kernel components for the gp method")
    method.add_argument("--lam", type=float, help="TV regularization weight")
    method.add_argument("--timings", action="store_true",
                        help="include wall-clock seconds in metrics rows "
                             "(breaks byte-reproducibility)")

    sub.add_parser("phantom", parents=[common],
                   help="render or load the ground-truth object")
    sub.add_parser("sinogram", parents=[common, scan],
                   help="simulate clean and noisy sinograms")
    rec = sub.add_parser("reconstruct", parents=[common, scan, method],
                         help="run one reconstruction and score it")
    rec.add_argument("--sinogram-dir", dest="sinogram_dir", metavar="DIR",
                     help="read sinograms from a previous sinogram run")
    sweep = sub.add_parser("sweep", parents=[common, scan, method],
                           help="sweep one axis and collect metrics")
    sweep.add_argument("--axis", choices=SWEEP_AXES, help="sweep axis")
    sweep.add_argument("--workers", type=int,
                       help="worker threads (default $GPTOMO_WORKERS or 1)")
    rep = sub.add_parser("report", help="merge metrics CSVs from previous runs")
    rep.add_argument("inputs", nargs="+",
                     help="run directories or metrics.csv files")
    rep.add_argument("-o", "--output", help="write the merged CSV here")
    return parser


_COMMANDS = {
    "phantom": cmd_phantom,
    "sinogram": cmd_sinogram,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(RunConfig({}), args)
        cfg = build_config(args)
        validate(cfg, args.command)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, MemoryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
