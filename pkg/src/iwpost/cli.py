"""Command-line front end.

One positional argument selects the subcommand; every option can also
come from a ``key=value`` config file (``--config``), with explicit
flags taking precedence. All outputs are plain text, CSV or ASCII PGM,
written atomically, and every subcommand is deterministic for a given
``--seed`` (default from ``IWPOST_SEED``, falling back to a fixed
constant) regardless of ``--threads``.

Exit codes: 0 success, 1 verification or estimation failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import verify
from .bounds import iwae_elbo_mc, vae_elbo_mc, vae_elbo_qew_quadrature
from .errors import DiagnosticError, DivergenceError, NumericError
from .fields import Grid, default_grid, write_field_csv, write_field_pgm
from .implicit import plot_qew_grid, sir_sample
from .ioutil import atomic_write_text
from .model import (
    GaussianProposal,
    TargetModel,
    format_kv,
    parse_kv,
    proposal_sample,
    proposal_to_kv,
    target_from_kv,
    target_param_names,
    target_to_kv,
)
from .optim import fit_proposal
from .oracle import (
    field_mass,
    log_marginal,
    sample_mass,
    true_posterior_field,
    tv_distance,
)
from .parallel import set_max_threads
from .rng import make_rng

DEFAULT_SEED = 0
SEED_ENV_VAR = "IWPOST_SEED"
TV_HIST_POINTS = 41  # histogram resolution for sample-quality reports


@dataclass
class RunConfig:
    """Merged options for one subcommand invocation."""

    command: str
    target: str = "mix2"
    mean: Optional[list[float]] = None
    log_std: Optional[list[float]] = None
    k_list: list[int] = None
    k: int = None
    S: int = 500
    n: int = 20000
    batches: int = 20000
    steps: int = 2000
    lr: float = 0.01
    grid_lo: float = -6.0
    grid_hi: float = 6.0
    grid_points: int = 161
    seed: int = DEFAULT_SEED
    threads: Optional[int] = None
    out: str = "."
    quick: bool = False
    single_batch: bool = False
    target_params: dict = None


def _parse_float_list(text: str) -> list[float]:
    return [float(part) for part in str(text).split(",")]


def _parse_int_list(text: str) -> list[int]:
    return [int(part) for part in str(text).split(",")]


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# option name -> (parser, default); None defaults are resolved later
_OPTION_TYPES = {
    "target": (str, "mix2"),
    "mean": (_parse_float_list, None),
    "log_std": (_parse_float_list, None),
    "k_list": (_parse_int_list, None),
    "k": (int, None),
    "S": (int, 500),
    "n": (int, 20000),
    "batches": (int, 20000),
    "steps": (int, 2000),
    "lr": (float, 0.01),
    "grid_lo": (float, -6.0),
    "grid_hi": (float, 6.0),
    "grid_points": (int, 161),
    "seed": (int, None),
    "threads": (int, None),
    "out": (str, "."),
    "quick": (_parse_bool, False),
    "single_batch": (_parse_bool, False),
}

_DEFAULT_K_LIST = {"bounds": [1, 2, 5, 10, 50], "plot": [1, 10, 100]}
_DEFAULT_K = {"sample": 50, "fit": 1}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iwpost",
        description=(
            "Importance-weighted variational bounds, the implicit "
            "distributions behind them, and a verification suite on "
            "tractable 1-D/2-D targets."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags override it")
    common.add_argument("--target", help="builtin target name (default mix2)")
    common.add_argument("--mean", help="proposal mean, comma-separated")
    common.add_argument("--log-std", dest="log_std", help="proposal log std, comma-separated")
    common.add_argument("--grid-lo", dest="grid_lo", type=float, help="grid lower bound")
    common.add_argument("--grid-hi", dest="grid_hi", type=float, help="grid upper bound")
    common.add_argument("--grid-points", dest="grid_points", type=int, help="points per dimension")
    common.add_argument("--seed", type=int, help=f"random seed (default ${SEED_ENV_VAR} or {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, help="worker cap (default: all cores); never changes results")
    common.add_argument("--out", help="output directory (default .)")

    p = sub.add_parser("bounds", parents=[common], help="tabulate the lower bounds and the true log normalizer")
    p.add_argument("--k", dest="k_list", help="comma-separated k values")
    p.add_argument("--samples", dest="n", type=int, help="draws for the single-sample bound")
    p.add_argument("--batches", type=int, help="batches for the k-sample bounds")
    p.add_argument("--S", type=int, help="outer iterations for the expected-weight field")

    p = sub.add_parser("plot", parents=[common], help="render density fields to CSV and PGM")
    p.add_argument("--k", dest="k_list", help="comma-separated k values")
    p.add_argument("--S", type=int, help="outer iterations per field")
    p.add_argument("--single-batch", dest="single_batch", action="store_true",
                   help="render one-batch reweighted fields (S=1) instead")

    p = sub.add_parser("sample", parents=[common], help="draw resampled and plain proposal points")
    p.add_argument("--k", type=int, help="importance samples per resampled draw")
    p.add_argument("--n", type=int, help="number of draws of each kind")

    p = sub.add_parser("fit", parents=[common], help="fit the proposal by stochastic gradient ascent")
    p.add_argument("--k", type=int, help="importance samples per gradient batch")
    p.add_argument("--steps", type=int, help="gradient steps")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--batches", type=int, help="gradient batches per step")

    p = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p.add_argument("--quick", action="store_true", help="reduced suite, runs in seconds")

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_kv = {}
    if getattr(args, "config", None):
        with open(args.config) as handle:
            file_kv = parse_kv(handle.read())

    merged = {}
    target_params = {}
    for key, value in file_kv.items():
        norm = key.replace("-", "_")
        if norm in _OPTION_TYPES:
            parse, _ = _OPTION_TYPES[norm]
            merged[norm] = parse(value)
        elif norm in ("k",) or norm in ("target", "dim"):
            continue  # handled below / informational
        else:
            target_params[norm] = value
    if "target" in file_kv:
        merged["target"] = file_kv["target"]
    if "k" in file_kv:
        # a bare k means the list for list-typed commands, the scalar otherwise
        merged["k_list"] = _parse_int_list(file_kv["k"])
        merged["k"] = merged["k_list"][0]

    for key in _OPTION_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None and flag_value is not False:
            if key == "k_list" and isinstance(flag_value, str):
                flag_value = _parse_int_list(flag_value)
            if key in ("mean", "log_std") and isinstance(flag_value, str):
                flag_value = _parse_float_list(flag_value)
            merged[key] = flag_value

    cfg = RunConfig(command=args.command)
    for key, (_, default) in _OPTION_TYPES.items():
        setattr(cfg, key, merged.get(key, default))
    if cfg.seed is None:
        cfg.seed = int(os.environ.get(SEED_ENV_VAR, DEFAULT_SEED))
    if cfg.k_list is None:
        cfg.k_list = _DEFAULT_K_LIST.get(args.command, [1])
    if cfg.k is None:
        cfg.k = _DEFAULT_K.get(args.command, cfg.k_list[0])
    cfg.target_params = target_params
    return cfg


def _make_target(cfg: RunConfig) -> TargetModel:
    allowed = target_param_names(cfg.target)
    unknown = sorted(set(cfg.target_params) - set(allowed))
    if unknown:
        raise ValueError(
            f"config keys {unknown} are neither run options nor parameters of "
            f"target '{cfg.target}'"
        )
    kv = {"target": cfg.target}
    kv.update(cfg.target_params)
    return target_from_kv(kv)


def _make_proposal(cfg: RunConfig, dim: int) -> GaussianProposal:
    def expand(values, fallback):
        if values is None:
            return np.full(dim, fallback)
        if len(values) == 1:
            return np.full(dim, values[0])
        if len(values) != dim:
            raise ValueError(
                f"proposal parameter needs 1 or {dim} values, got {len(values)}"
            )
        return np.asarray(values)

    return GaussianProposal(
        mean=expand(cfg.mean, 0.0), log_std=expand(cfg.log_std, 0.0)
    )


def _make_grid(cfg: RunConfig, dim: int) -> Grid:
    return Grid(
        lo=(cfg.grid_lo,) * dim,
        hi=(cfg.grid_hi,) * dim,
        points_per_dim=(cfg.grid_points,) * dim,
    )


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


# ---------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------


def cmd_bounds(cfg: RunConfig) -> int:
    t = _make_target(cfg)
    q = _make_proposal(cfg, t.dim)
    grid = _make_grid(cfg, t.dim)
    rng = make_rng(cfg.seed)

    log_z = log_marginal(t, grid)
    vae = vae_elbo_mc(t, q, cfg.n, rng)
    rows = [
        ("vae", "-", vae.value, vae.std_error, vae.n_samples),
        ("log_marginal", "-", log_z, 0.0, grid.n_cells),
    ]
    for k in cfg.k_list:
        est = iwae_elbo_mc(t, q, k, cfg.batches, rng)
        rows.append(("iwae", str(k), est.value, est.std_error, est.n_samples))
    for k in cfg.k_list:
        value = vae_elbo_qew_quadrature(t, q, k, cfg.S, grid, rng)
        rows.append(("vae_qew", str(k), value, 0.0, cfg.S))

    width = max(len(r[0]) for r in rows)
    lines = [f"target={t.name} seed={cfg.seed}"]
    for kind, k, value, se, n in rows:
        lines.append(f"{kind:<{width}}  k={k:<4} value={value:+.6f}  se={se:.6f}  n={n}")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)

    csv_lines = ["kind,k,value,std_error,n"]
    for kind, k, value, se, n in rows:
        csv_lines.append(f"{kind},{k},{value!r},{se!r},{n}")
    atomic_write_text(_out_path(cfg, "bounds.csv"), "\n".join(csv_lines) + "\n")
    return 0


def _write_field(cfg: RunConfig, name: str, field) -> None:
    write_field_csv(field, _out_path(cfg, f"{name}.csv"))
    if field.grid.dim <= 2:
        write_field_pgm(field, _out_path(cfg, f"{name}.pgm"))


def cmd_plot(cfg: RunConfig) -> int:
    t = _make_target(cfg)
    q = _make_proposal(cfg, t.dim)
    grid = _make_grid(cfg, t.dim)
    rng = make_rng(cfg.seed)
    if t.dim > 2:
        raise ValueError("plot requires a 1-D or 2-D target for PGM output")

    _write_field(cfg, "posterior", true_posterior_field(t, grid))
    _write_field(cfg, "proposal", plot_qew_grid(t, q, 1, 1, grid, rng))
    S = 1 if cfg.single_batch else cfg.S
    prefix = "qiw" if cfg.single_batch else "qew"
    for k in cfg.k_list:
        field = plot_qew_grid(t, q, k, S, grid, rng)
        _write_field(cfg, f"{prefix}_k{k}", field)
    kinds = ", ".join(f"{prefix}_k{k}" for k in cfg.k_list)
    sys.stdout.write(
        f"wrote posterior, proposal, {kinds} (S={S}) to {cfg.out}\n"
    )
    return 0


def cmd_sample(cfg: RunConfig) -> int:
    t = _make_target(cfg)
    q = _make_proposal(cfg, t.dim)
    rng = make_rng(cfg.seed)

    sir_draws = np.stack([sir_sample(t, q, cfg.k, rng) for _ in range(cfg.n)])
    plain_draws = proposal_sample(q, rng, cfg.n)

    header = ",".join(["x", "y", "z"][: t.dim])
    for name, draws in (("sir_samples", sir_draws), ("proposal_samples", plain_draws)):
        lines = [header]
        lines.extend(",".join(repr(float(v)) for v in row) for row in draws)
        atomic_write_text(_out_path(cfg, f"{name}.csv"), "\n".join(lines) + "\n")

    hist_grid = Grid(
        lo=(cfg.grid_lo,) * t.dim,
        hi=(cfg.grid_hi,) * t.dim,
        points_per_dim=(TV_HIST_POINTS,) * t.dim,
    )
    post_mass = field_mass(true_posterior_field(t, hist_grid))
    tv_sir = tv_distance(sample_mass(hist_grid, sir_draws), post_mass)
    tv_plain = tv_distance(sample_mass(hist_grid, plain_draws), post_mass)
    sys.stdout.write(
        f"target={t.name} k={cfg.k} n={cfg.n} seed={cfg.seed}\n"
        f"TV(resampled, posterior) = {tv_sir:.4f}\n"
        f"TV(proposal,  posterior) = {tv_plain:.4f}\n"
    )
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    t = _make_target(cfg)
    q0 = _make_proposal(cfg, t.dim)
    rng = make_rng(cfg.seed)
    try:
        q, trace = fit_proposal(t, q0, cfg.k, cfg.steps, cfg.lr, cfg.batches, rng)
    except DivergenceError as exc:
        if exc.trace is not None:
            atomic_write_text(_out_path(cfg, "trace.csv"), exc.trace.csv_text())
        sys.stderr.write(f"fit diverged: {exc} (partial trace written)\n")
        return 1
    atomic_write_text(_out_path(cfg, "trace.csv"), trace.csv_text())
    kv = target_to_kv(t)
    kv.update(proposal_to_kv(q))
    atomic_write_text(_out_path(cfg, "fitted_proposal.cfg"), format_kv(kv))

    eval_rng = make_rng([cfg.seed, 1])
    vae = vae_elbo_mc(t, q, max(cfg.n, 1000), eval_rng)
    iwae = iwae_elbo_mc(t, q, cfg.k, max(cfg.batches, 1000), eval_rng)
    sys.stdout.write(
        f"fit k={cfg.k} steps={cfg.steps} lr={cfg.lr} seed={cfg.seed}\n"
        f"final mean    = {np.array2string(q.mean, precision=4)}\n"
        f"final std     = {np.array2string(q.std, precision=4)}\n"
        f"single-sample bound = {vae.value:+.4f} (se {vae.std_error:.4f})\n"
        f"k-sample bound      = {iwae.value:+.4f} (se {iwae.std_error:.4f})\n"
    )
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    results = verify.run_suite(cfg.seed, quick=cfg.quick)
    report = verify.format_report(results, cfg.seed, cfg.quick)
    sys.stdout.write(report)
    if cfg.out != ".":
        atomic_write_text(_out_path(cfg, "verify_report.txt"), report)
    return 0 if verify.suite_passed(results) else 1


_COMMANDS = {
    "bounds": cmd_bounds,
    "plot": cmd_plot,
    "sample": cmd_sample,
    "fit": cmd_fit,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        set_max_threads(cfg.threads if cfg.threads else (os.cpu_count() or 1))
        return _COMMANDS[args.command](cfg)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (NumericError, DiagnosticError, DivergenceError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
