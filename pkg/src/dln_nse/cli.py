"""Command-line front end.

Usage::

    python -m dln_nse COMMAND [--config FILE] [--set KEY=VALUE ...] [flags]

Commands are ``coeffs``, ``certify``, ``sweep``, ``simulate``,
``convergence`` and ``gronwall-check``. Settings are resolved from, in
increasing priority: built-in defaults, a named ``--preset``, the flat
``key = value`` file given by ``--config``, and command-line flags (``--set``
and the dedicated flags). Output goes under ``$DLN_NSE_OUTPUT_ROOT`` when
that variable is set, otherwise under the current directory.

Exit status: 0 all checks passed, 1 an inequality or flag failed,
2 configuration error, 3 solver or numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import GronwallInput, gronwall_bound, uniform_gronwall_bound, window_max_sum
from .certificate import (
    CertificateInput,
    bound_flags,
    build_certificate,
    debug_report,
    max_timestep,
)
from .dln_core import make_coefficients
from .errors import (
    BlowUp,
    DLNError,
    DomainError,
    InadmissibleTimestep,
    NegativeDiscriminant,
    NonConvergence,
)
from .spectral2d import (
    ForcingSpec,
    TorusGrid,
    stokes_lambda1,
    write_snapshot,
    write_spectrum_csv,
)
from .stepper import (
    LEDGER_COLUMNS,
    SimulationConfig,
    SolverPolicy,
    convergence_study,
    run_simulation,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "DLN_NSE_OUTPUT_ROOT"
COMMANDS = ("coeffs", "certify", "sweep", "simulate", "convergence", "gronwall-check")
ORDER_RANGE = (1.8, 2.2)


class ConfigError(DomainError):
    """Invalid or inconsistent configuration."""


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation."""

    command: str = "certify"
    theta: float = 0.5
    nu: float = 1.0
    lambda1: float = 1.0
    dt: Optional[float] = None
    dt_frac: Optional[float] = None
    n: int = 64
    length: float = 2.0 * math.pi
    steps: int = 100
    t_final: Optional[float] = None
    forcing: str = ""
    forcing_modulation: str = "constant"
    forcing_omega: float = 1.0
    f_inf: Optional[float] = None
    ic: str = "random"
    ic_norm: Optional[float] = 1.0
    ic_ratio: float = 100.0
    seed: int = 0
    output: str = "dln_out"
    bootstrap: str = "midpoint"
    solver: str = "auto"
    tol: float = 1e-11
    max_iter: int = 100
    r: Optional[float] = None
    C_Omega: float = 1.0
    snapshot_every: int = 0
    allow_inadmissible: bool = False
    preset: Optional[str] = None
    theta_grid: str = "0.05:0.95:0.05"
    dt_fracs: str = "0.99"
    thetas: str = "0.2,0.5,0.8"
    dt0: float = 0.02
    halvings: int = 4
    instances: int = 1000
    horizon: int = 50
    workers: int = 1


# Named simulation setups; any key can still be overridden.
PRESETS = {
    "unforced-decay": dict(nu=0.1, dt_frac=0.5, steps=2000, forcing="", ic="random",
                           ic_norm=1.0, n=32),
    "forced": dict(nu=0.1, dt_frac=0.5, steps=5000, n=64, ic="random", ic_norm=1.0,
                   forcing="1,2,0.05,0.3;3,1,0.025,1.0"),
    "two-ic": dict(nu=0.1, dt_frac=0.5, steps=3000, n=32, ic="random", ic_norm=0.05,
                   ic_ratio=100.0, forcing="1,2,0.05,0.3;3,1,0.025,1.0"),
    "taylor-green": dict(ic="taylor-green", ic_norm=None, forcing="", bootstrap="exact",
                         nu=0.5, dt=0.02, n=32, steps=50),
}


def _convert(name: str, raw):
    """Convert a raw string to the type of ``RunConfig.<name>``."""
    fmap = {f.name: f for f in fields(RunConfig)}
    if name not in fmap:
        raise ConfigError(f"unknown configuration key {name!r}")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = fmap[name].type
    if "Optional" in kind and text.lower() in ("none", ""):
        return None
    try:
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name}={raw!r} as {kind}") from exc
    return text


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _convert(key, val)
    return out


def format_value(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_kv(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        for k, v in data.items():
            fh.write(f"{k} = {format_value(v)}\n")


def resolve_config(command: str, config_file: Optional[str], overrides: dict) -> RunConfig:
    """Combine defaults, preset, file and overrides into a :class:`RunConfig`."""
    values = {}
    file_vals = parse_config_text(Path(config_file).read_text()) if config_file else {}
    preset = overrides.get("preset", file_vals.get("preset"))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update(file_vals)
    values.update(overrides)
    values["command"] = command
    cfg = RunConfig(**{k: _convert(k, v) for k, v in values.items()})
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    return cfg


def parse_forcing(text: str) -> tuple:
    """``"kx,ky,amp,phase;..."`` into a tuple of mode tuples."""
    modes = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) not in (3, 4):
            raise ConfigError(f"forcing mode {chunk!r} must be kx,ky,amp[,phase]")
        try:
            kx, ky, amp = int(parts[0]), int(parts[1]), float(parts[2])
            ph = float(parts[3]) if len(parts) == 4 else 0.0
        except ValueError as exc:
            raise ConfigError(f"cannot parse forcing mode {chunk!r}") from exc
        modes.append((kx, ky, amp, ph))
    return tuple(modes)


def parse_grid(text: str) -> list:
    """``"a:b:h"`` (inclusive) or a comma list into floats."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, h = (float(p) for p in text.split(":"))
            count = int(math.floor((b - a) / h + 1e-9)) + 1
            return [round(a + i * h, 12) for i in range(count)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}") from exc


def output_dir(cfg: RunConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    path = root / cfg.output
    path.mkdir(parents=True, exist_ok=True)
    return path


def _csv_row(values) -> str:
    return ",".join(format_value(v) for v in values) + "\n"


# --- commands ---------------------------------------------------------------

def cmd_coeffs(cfg: RunConfig, out) -> int:
    c = make_coefficients(cfg.theta)
    rows = {
        "theta": c.theta,
        "alpha0": c.alpha[0], "alpha1": c.alpha[1], "alpha2": c.alpha[2],
        "beta0": c.beta[0], "beta1": c.beta[1], "beta2": c.beta[2],
        "a0": c.dissip[0], "a1": c.dissip[1], "a2": c.dissip[2],
        "two_beta2_minus_1": c.stiff_margin,
        "g11": c.g_weights[0], "g22": c.g_weights[1],
        "C_dt_factor": max_timestep(c.theta, 1.0, 1.0),
    }
    for k, v in rows.items():
        out.write(f"{k} = {format_value(v)}\n")
    d = output_dir(cfg)
    with open(d / "coeffs.csv", "w") as fh:
        fh.write(",".join(rows) + "\n")
        fh.write(_csv_row(rows.values()))
    return EXIT_OK


def _cert_dt(cfg: RunConfig, theta: float) -> float:
    if cfg.dt is not None:
        return cfg.dt
    if cfg.dt_frac is not None:
        return cfg.dt_frac * max_timestep(theta, cfg.nu, cfg.lambda1)
    raise ConfigError("certify needs dt or dt_frac")


def cmd_certify(cfg: RunConfig, out) -> int:
    inp = CertificateInput(cfg.theta, cfg.nu, cfg.lambda1, _cert_dt(cfg, cfg.theta))
    cert = build_certificate(inp)
    report = debug_report(cert, inp)
    for k, v in report.items():
        out.write(f"{k} = {format_value(v)}\n")
    d = output_dir(cfg)
    write_kv(d / "certificate.txt", report)
    with open(d / "certificate.csv", "w") as fh:
        fh.write(",".join(report) + "\n")
        fh.write(_csv_row(report.values()))
    ok = bound_flags(cert, inp).all_pass and report["residual_max_relative"] <= 1e-10
    out.write(f"result = {'PASS' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_VIOLATION


def _sweep_point(args):
    theta, frac, nu, lambda1 = args
    dt = frac * max_timestep(theta, nu, lambda1)
    inp = CertificateInput(theta, nu, lambda1, dt)
    try:
        cert = build_certificate(inp)
    except NegativeDiscriminant as exc:
        return {"theta": theta, "dt_frac": frac, "dt": dt, "error": str(exc), "all_pass": False}
    rep = debug_report(cert, inp)
    rep["dt_frac"] = frac
    flags = bound_flags(cert, inp)
    rep["all_pass"] = flags.all_pass and rep["residual_max_relative"] <= 1e-10
    return rep


def cmd_sweep(cfg: RunConfig, out) -> int:
    thetas = parse_grid(cfg.theta_grid)
    fracs = [cfg.dt_frac] if cfg.dt_frac is not None else parse_grid(cfg.dt_fracs)
    for f in fracs:
        if not 0.0 < f < 1.0:
            raise ConfigError(f"dt fractions must lie in (0, 1), got {f}")
    jobs = [(th, f, cfg.nu, cfg.lambda1) for th in thetas for f in fracs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            reps = list(ex.map(_sweep_point, jobs))
    else:
        reps = [_sweep_point(j) for j in jobs]
    cols = []
    for r in reps:
        cols.extend(k for k in r if k not in cols)
    d = output_dir(cfg)
    with open(d / "sweep.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in reps:
            fh.write(_csv_row(r.get(k, "") for k in cols))
    failures = sum(not r["all_pass"] for r in reps)
    out.write(f"points = {len(reps)}\nfailures = {failures}\n")
    out.write(f"result = {'PASS' if failures == 0 else 'FAIL'}\n")
    return EXIT_OK if failures == 0 else EXIT_VIOLATION


def simulation_config(cfg: RunConfig, ic_norm: Optional[float] = None) -> SimulationConfig:
    """Translate a :class:`RunConfig` into a :class:`SimulationConfig`."""
    grid = TorusGrid(cfg.n, cfg.length)
    lam = stokes_lambda1(grid)
    if cfg.dt is not None:
        dt = cfg.dt
    elif cfg.dt_frac is not None:
        dt = cfg.dt_frac * max_timestep(cfg.theta, cfg.nu, lam)
    else:
        raise ConfigError("simulate needs dt or dt_frac")
    steps = cfg.steps
    if cfg.t_final is not None:
        steps = int(round(cfg.t_final / dt))
    modes = parse_forcing(cfg.forcing)
    if cfg.f_inf is not None and modes:
        modes = ForcingSpec(grid, modes).scaled_to(cfg.f_inf).modes
    return SimulationConfig(
        theta=cfg.theta, nu=cfg.nu, dt=dt, steps=steps, n=cfg.n, length=cfg.length,
        forcing_modes=modes, forcing_modulation=cfg.forcing_modulation,
        forcing_omega=cfg.forcing_omega, ic=cfg.ic,
        ic_norm=cfg.ic_norm if ic_norm is None else ic_norm, ic_seed=cfg.seed,
        bootstrap=cfg.bootstrap,
        solver=SolverPolicy(cfg.solver, cfg.tol, cfg.max_iter), r=cfg.r, C_Omega=cfg.C_Omega,
        snapshot_every=cfg.snapshot_every, allow_inadmissible=cfg.allow_inadmissible,
    )


def write_ledger(path: Path, result, cfg_echo: dict) -> None:
    """Ledger CSV: ``# key = value`` header block, then one row per step."""
    with open(path, "w") as fh:
        fh.write(f"# version = {__version__}\n")
        for k, v in cfg_echo.items():
            fh.write(f"# config.{k} = {format_value(v)}\n")
        for k, v in result.manifest.items():
            fh.write(f"# {k} = {format_value(v)}\n")
        fh.write(",".join(LEDGER_COLUMNS) + "\n")
        for row in result.rows:
            fh.write(_csv_row(getattr(row, c) for c in LEDGER_COLUMNS))


def read_ledger(path) -> tuple:
    """Parse a ledger CSV into ``(header_dict, rows_as_float_array, columns)``."""
    header, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                header[k.strip()] = v.strip()
            else:
                lines.append(line.rstrip("\n"))
    cols = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    return header, data.reshape(-1, len(cols)), cols


def _run_one(cfg: RunConfig, d: Path, ic_norm: Optional[float] = None):
    scfg = simulation_config(cfg, ic_norm)
    d.mkdir(parents=True, exist_ok=True)
    cb = None
    if scfg.snapshot_every:
        snap = d / "snapshots"
        snap.mkdir(exist_ok=True)
        cb = lambda i, t, u: write_snapshot(snap / f"u_{i:07d}.bin", u, t)  # noqa: E731
    result = run_simulation(scfg, snapshot_cb=cb, raise_errors=False)
    echo = dataclasses.asdict(cfg)
    write_ledger(d / "ledger.csv", result, echo)
    man = {"version": __version__}
    man.update({f"config.{k}": v for k, v in echo.items()})
    man.update(result.manifest)
    write_kv(d / "manifest.txt", man)
    if result.final is not None:
        write_spectrum_csv(d / "spectrum.csv", result.final.u_curr)
    return result


def cmd_simulate(cfg: RunConfig, out) -> int:
    d = output_dir(cfg)
    if cfg.preset == "two-ic":
        base = cfg.ic_norm if cfg.ic_norm is not None else 1.0
        results = {"ic_a": _run_one(cfg, d / "ic_a", base),
                   "ic_b": _run_one(cfg, d / "ic_b", base * cfg.ic_ratio)}
        report = {}
        for name, res in results.items():
            m = res.manifest
            report[f"{name}.norm_u0"] = m["norm_u0"]
            report[f"{name}.T_star"] = m.get("T_star", math.nan)
            report[f"{name}.worst_rho0_bound_rel"] = m.get("worst_rho0_bound_rel", math.nan)
            report[f"{name}.worst_K2_bound_rel"] = m.get("worst_K2_bound_rel", math.nan)
            report[f"{name}.all_pass"] = m["all_pass"]
        report["all_pass"] = all(r.manifest["all_pass"] for r in results.values())
        write_kv(d / "report.txt", report)
        for k, v in report.items():
            out.write(f"{k} = {format_value(v)}\n")
        res_list = list(results.values())
    else:
        res = _run_one(cfg, d)
        for k, v in res.manifest.items():
            if k.startswith("worst_") or k in ("all_pass", "failure", "C_dt", "dt", "T_star",
                                               "K2", "rho0", "rho2"):
                out.write(f"{k} = {format_value(v)}\n")
        res_list = [res]
    if any(r.error is not None for r in res_list):
        return EXIT_SOLVER
    return EXIT_OK if all(r.manifest["all_pass"] for r in res_list) else EXIT_VIOLATION


def cmd_convergence(cfg: RunConfig, out) -> int:
    thetas = parse_grid(cfg.thetas)
    nu = cfg.nu
    t_final = cfg.t_final if cfg.t_final is not None else 1.0
    policy = SolverPolicy(cfg.solver, cfg.tol, cfg.max_iter)
    d = output_dir(cfg)
    ok = True
    with open(d / "convergence.csv", "w") as fh:
        fh.write("theta,dt,error,order\n")
        for th in thetas:
            table = convergence_study(th, nu, t_final, cfg.dt0, cfg.halvings, cfg.n, policy)
            for dt, err, order in table:
                fh.write(_csv_row((th, dt, err, "" if math.isnan(order) else order)))
            final = table[-1][2]
            out.write(f"theta = {format_value(th)} final_order = {format_value(final)}\n")
            if len(table) > 1:
                ok &= all(ORDER_RANGE[0] <= o <= ORDER_RANGE[1] for _, _, o in table[1:])
    out.write(f"result = {'PASS' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_VIOLATION


def gronwall_selfcheck(instances: int, seed: int, horizon: int = 50) -> list:
    """Randomized comparison of both Gronwall bounds with exact recursions.

    Returns one record per instance with the worst ratio of the recursion
    to each bound (a ratio above 1 is a violation).
    """
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(instances):
        k = rng.uniform(0.01, 1.0)
        eta = rng.exponential(rng.uniform(0.1, 2.0), horizon + 1)
        zeta = rng.exponential(rng.uniform(0.1, 2.0), horizon + 1)
        xi = np.empty(horizon + 1)
        xi[0] = rng.exponential()
        for n in range(1, horizon + 1):
            xi[n] = xi[n - 1] * (1.0 + k * eta[n - 1]) + k * zeta[n]
        inp = GronwallInput(k, xi[0], eta, zeta)
        r1 = max(xi[n] / gronwall_bound(inp, n) for n in range(2, horizon + 1))
        n1 = int(rng.integers(0, horizon // 4))
        n2 = int(rng.integers(1, horizon // 4))
        ns = int(rng.integers(n1 + n2 + 1, horizon + 1))
        a1 = window_max_sum(eta, k, n1, n2, ns)
        a2 = window_max_sum(zeta, k, n1, n2, ns)
        a3 = window_max_sum(xi, k, n1, n2, ns)
        ub = uniform_gronwall_bound(inp, n1, n2, ns, a1, a2, a3)
        r2 = max(xi[n] / ub for n in range(n1 + n2 + 1, ns + 1))
        recs.append((i, k, n1, n2, ns, r1, r2))
    return recs


def cmd_gronwall_check(cfg: RunConfig, out) -> int:
    recs = gronwall_selfcheck(cfg.instances, cfg.seed, cfg.horizon)
    d = output_dir(cfg)
    with open(d / "gronwall.csv", "w") as fh:
        fh.write("instance,k,n1,n2,n_star,ratio_finite,ratio_uniform\n")
        for r in recs:
            fh.write(_csv_row(r))
    v1 = sum(r[5] > 1.0 for r in recs)
    v2 = sum(r[6] > 1.0 for r in recs)
    out.write(f"instances = {len(recs)}\nviolations_finite = {v1}\nviolations_uniform = {v2}\n")
    ok = v1 == 0 and v2 == 0
    out.write(f"result = {'PASS' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_VIOLATION


HANDLERS = {
    "coeffs": cmd_coeffs,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "gronwall-check": cmd_gronwall_check,
}

# flag name -> RunConfig key
FLAGS = {
    "theta": "theta", "nu": "nu", "lambda1": "lambda1", "dt": "dt", "dt-frac": "dt_frac",
    "n": "n", "length": "length", "steps": "steps", "t-final": "t_final",
    "forcing": "forcing", "forcing-modulation": "forcing_modulation",
    "forcing-omega": "forcing_omega", "f-inf": "f_inf", "ic": "ic", "ic-norm": "ic_norm",
    "ic-ratio": "ic_ratio", "seed": "seed", "output": "output", "bootstrap": "bootstrap",
    "solver": "solver", "tol": "tol", "max-iter": "max_iter", "r": "r", "C-Omega": "C_Omega",
    "snapshot-every": "snapshot_every", "preset": "preset", "theta-grid": "theta_grid",
    "dt-fracs": "dt_fracs", "thetas": "thetas", "dt0": "dt0", "halvings": "halvings",
    "instances": "instances", "horizon": "horizon", "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dln-nse", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
        for flag, key in FLAGS.items():
            sp.add_argument(f"--{flag}", dest=f"opt_{key}", default=None)
        sp.add_argument("--allow-inadmissible", dest="opt_allow_inadmissible",
                        action="store_const", const="true", default=None)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip().replace("-", "_")] = v
        for k, v in vars(args).items():
            if k.startswith("opt_") and v is not None:
                overrides[k[4:]] = v
        cfg = resolve_config(args.command, args.config, overrides)
        return HANDLERS[cfg.command](cfg, out)
    except InadmissibleTimestep as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, BlowUp, NegativeDiscriminant) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DomainError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DLNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
