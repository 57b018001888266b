"""Command-line entry point: ``sparsesense <subcommand> [options]``."""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from sparsesense.adaptive import RzaNlmfConfig
from sparsesense.baselines import BpdnConfig
from sparsesense.harness import ExperimentSpec, emit_csv, run_experiment, run_trial, write_csv
from sparsesense.errors import SingularParametersError
from sparsesense.metrics import CrlbInputs, crlb_ass, crlb_nss
from sparsesense.model import MasterSeed, generate_sensing_matrix, read_matrix, rip_constant_bruteforce

_LIST_KEYS = {"sparsity_levels": int, "snr_grid_db": float, "epsilon_grid": float, "solvers": str}
_SCALAR_KEYS = {"n_dim": int, "m_dim": int, "trials": int, "master_seed": int,
                "snr_convention": str, "rho_convention": str, "no_noise": None}
_RZA_KEYS = {"mu_iss": float, "lambda_ass": float, "zeta": float, "n_max": int,
             "stop_check": str}
_BPDN_KEYS = {"lam": float, "max_iterations": int, "tolerance": float}

SUBCOMMAND_DEFAULTS = {
    "single-run": dict(sparsity_levels=(2,), snr_grid_db=(10.0,), epsilon_grid=(2000.0,),
                       solvers=("ass_rza_nlmf",), trials=1),
    "sweep-epsilon": dict(sparsity_levels=(2,), snr_grid_db=(5.0, 10.0),
                          epsilon_grid=(2.0, 20.0, 200.0, 2000.0, 20000.0),
                          solvers=("ass_rza_nlmf",)),
    "compare": dict(sparsity_levels=(2, 6, 10), snr_grid_db=(0.0, 3.0, 6.0, 9.0, 12.0),
                    epsilon_grid=(2000.0,), solvers=("ass_rza_nlmf", "nss_omp", "nss_bpdn")),
    "crlb-table": dict(sparsity_levels=(2, 6, 10), snr_grid_db=(0.0, 3.0, 6.0, 9.0, 12.0),
                       epsilon_grid=(2000.0,)),
}


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.replace(",", " ").split() if t.strip()]


def parse_config(path) -> dict:
    """Read a flat ``key = value`` file (``#`` starts a comment).

    Keys are ExperimentSpec field names; the nested algorithm settings may be
    written bare (``mu_iss``) or qualified (``rza_config.mu_iss``,
    ``bpdn_config.lam``). Lists are comma or space separated.
    """
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        section, _, bare = key.rpartition(".")
        try:
            if key in _LIST_KEYS:
                out[key] = tuple(_LIST_KEYS[key](v) for v in _split(value))
            elif key in _SCALAR_KEYS:
                conv = _SCALAR_KEYS[key]
                out[key] = _bool(value) if conv is None else conv(value)
            elif bare in _RZA_KEYS and section in ("", "rza_config"):
                out.setdefault("rza_config", {})[bare] = _RZA_KEYS[bare](value)
            elif bare in _BPDN_KEYS and section in ("", "bpdn_config"):
                out.setdefault("bpdn_config", {})[bare] = _BPDN_KEYS[bare](value)
            elif bare == "epsilon" and section in ("", "rza_config"):
                out["epsilon_grid"] = (float(value),)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    common.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--snr-convention", choices=("power10", "amplitude20"))
    common.add_argument("--rho-convention", choices=("gradient", "inverse"))
    common.add_argument("--no-noise", action="store_true", default=None)
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--n", dest="n_dim", type=int, help="signal length N")
    common.add_argument("--m", dest="m_dim", type=int, help="measurement count M")
    common.add_argument("--k", dest="sparsity_levels", type=int, nargs="+")
    common.add_argument("--snr", dest="snr_grid_db", type=float, nargs="+")
    common.add_argument("--epsilon", dest="epsilon_grid", type=float, nargs="+")
    common.add_argument("--solvers", nargs="+")
    common.add_argument("--n-max", type=int, help="adaptive iteration cap")

    parser = argparse.ArgumentParser(prog="sparsesense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    single = sub.add_parser("single-run", parents=[common],
                            help="one instance, one solver; prints the trajectory")
    single.add_argument("--solver", default="ass")
    single.add_argument("--trial-index", type=int, default=0)
    sub.add_parser("sweep-epsilon", parents=[common], help="reweighted-factor sweep")
    sub.add_parser("compare", parents=[common], help="solvers x K x SNR grid")
    sub.add_parser("crlb-table", parents=[common], help="tabulate both CRLB curves")
    rip = sub.add_parser("rip-check", parents=[common],
                         help="exact RIP constant of a small matrix by enumeration")
    rip.add_argument("--matrix", type=Path, help="plain-text matrix file ('M N' header)")
    rip.add_argument("--scale", type=float, help="multiply the matrix first (default 1/sqrt(M))")
    return parser


def build_spec(command: str, args: argparse.Namespace) -> ExperimentSpec:
    """Subcommand defaults, then the config file, then explicit flags."""
    values: dict = dict(SUBCOMMAND_DEFAULTS.get(command, {}))
    rza: dict = {}
    bpdn: dict = {}
    if args.config is not None:
        cfg = parse_config(args.config)
        rza.update(cfg.pop("rza_config", {}))
        bpdn.update(cfg.pop("bpdn_config", {}))
        values.update(cfg)

    flag_map = {"seed": "master_seed", "trials": "trials", "snr_convention": "snr_convention",
                "rho_convention": "rho_convention", "no_noise": "no_noise", "n_dim": "n_dim",
                "m_dim": "m_dim", "sparsity_levels": "sparsity_levels",
                "snr_grid_db": "snr_grid_db", "epsilon_grid": "epsilon_grid", "solvers": "solvers"}
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = tuple(value) if isinstance(value, list) else value
    if getattr(args, "n_max", None) is not None:
        rza["n_max"] = args.n_max
    if command == "single-run":
        values["solvers"] = (args.solver,)
        values["trials"] = 1

    rza_cfg = RzaNlmfConfig(**rza)
    values["rza_config"] = rza_cfg
    values["bpdn_config"] = BpdnConfig(**bpdn)
    known = {f.name for f in fields(ExperimentSpec)}
    return ExperimentSpec(**{k: v for k, v in values.items() if k in known})


def _write_table(table, out: Path | None) -> None:
    if out is None:
        write_csv(table, sys.stdout)
    else:
        emit_csv(table, out)


def _summary(spec: ExperimentSpec, table, elapsed: float, stream) -> None:
    grid = len(spec.grid())
    diverged = sum(table.divergences.values())
    print(f"grid points: {grid} (K={list(spec.sparsity_levels)}, "
          f"SNR={list(spec.snr_grid_db)} dB, eps={list(spec.epsilon_grid)})", file=stream)
    print(f"solvers: {', '.join(spec.solvers)}", file=stream)
    print(f"trials per point: {spec.trials}, seed: {spec.master_seed}", file=stream)
    print(f"divergent runs: {diverged}", file=stream)
    print(f"wall time: {elapsed:.2f} s", file=stream)


def _cmd_experiment(command: str, args) -> int:
    spec = build_spec(command, args)
    start = time.perf_counter()
    table = run_experiment(spec, workers=args.workers)
    elapsed = time.perf_counter() - start
    _write_table(table, args.out)
    # keep stdout clean for CSV when no output file was given
    stream = sys.stdout if args.out is not None else sys.stderr
    _summary(spec, table, elapsed, stream)
    return 0


def _cmd_single_run(args) -> int:
    spec = build_spec("single-run", args)
    spec = replace(spec, sparsity_levels=spec.sparsity_levels[:1],
                   snr_grid_db=spec.snr_grid_db[:1], epsilon_grid=spec.epsilon_grid[:1])
    point = spec.grid()[0]
    start = time.perf_counter()
    outcome = run_trial(spec, point, args.trial_index)
    elapsed = time.perf_counter() - start
    res = outcome.results[spec.solvers[0]]
    print(f"# solver={res.solver_id} k={point.k} snr_db={point.snr_db:g} "
          f"epsilon={point.epsilon:g} seed={spec.master_seed} trial={args.trial_index}")
    if res.diverged:
        print("# diverged")
        return 1
    print("iteration,squared_error")
    first = 1 if res.solver_id == "ass_rza_nlmf" else 0
    for i, v in enumerate(res.squared_errors, first):
        print(f"{i},{v:.17g}")
    if args.out is not None:
        table = run_experiment(replace(spec, trials=1))
        emit_csv(table, args.out)
    print(f"# wall time: {elapsed:.3f} s")
    return 0


def _cmd_crlb_table(args) -> int:
    spec = build_spec("crlb-table", args)
    lines = ["k,snr_db,epsilon,noise_variance,crlb_nss,crlb_ass"]
    for point in spec.grid():
        sn2 = spec.noise_variance(point.snr_db)
        cfg = spec.ass_config(point.epsilon)
        try:
            ass = crlb_ass(CrlbInputs(point.k, spec.n_dim, sn2, cfg.mu_iss, 1.0 / point.k, cfg.rho))
        except (SingularParametersError, ValueError):
            ass = math.nan
        lines.append(f"{point.k},{point.snr_db:.17g},{point.epsilon:.17g},{sn2:.17g},"
                     f"{crlb_nss(point.k, spec.n_dim, sn2):.17g},{ass:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_rip_check(args) -> int:
    if args.matrix is not None:
        X = read_matrix(args.matrix)
    else:
        m = args.m_dim or 4
        n = args.n_dim or 8
        X = generate_sensing_matrix(m, n, MasterSeed(args.seed or 0).rng())
    scale = args.scale if args.scale is not None else 1.0 / math.sqrt(X.shape[0])
    ks = args.sparsity_levels or [2]
    print(f"matrix {X.shape[0]}x{X.shape[1]}, scale {scale:.6g}")
    print("k,delta_k")
    for k in ks:
        print(f"{k},{rip_constant_bruteforce(X, k, scale=scale):.17g}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "single-run":
            return _cmd_single_run(args)
        if args.command == "crlb-table":
            return _cmd_crlb_table(args)
        if args.command == "rip-check":
            return _cmd_rip_check(args)
        return _cmd_experiment(args.command, args)
    except (ValueError, OSError) as exc:
        print(f"sparsesense: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
