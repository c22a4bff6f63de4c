"""Coarse-grain Markov chains, reconstruct fluxes and compare functional constants.

Exit codes: 0 success, 1 domain/validation failure, 2 usage or I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import run_all
from .coarse import CoarseGrainPair, load_partition, reduce_report
from .errors import MarkovCGError
from .flux import flux_report
from .functionals import (
    CROSSOVER,
    PROFILES,
    SQUARE,
    counterexample_table,
    crossover,
    log_sobolev_constant,
    poincare_constant,
    profile_by_name,
)
from .markov import SPECTRAL_TOL, STRUCT_TOL, load_chain

log = logging.getLogger("markov_cg")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    chain: Path | None = None
    partition: Path | None = None
    out: Path | None = None
    tol: float = STRUCT_TOL
    spectral_tol: float = SPECTRAL_TOL
    seed: int = 42
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tol <= 0 or self.spectral_tol <= 0:
            raise UsageError("tolerances must be positive")
        if self.options.get("dt", 1.0) <= 0:
            raise UsageError("--dt must be positive")

    def tolerances(self) -> dict:
        return {"structural": self.tol, "spectral": self.spectral_tol}


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _located(exc: MarkovCGError, path) -> MarkovCGError:
    # keep the exception type and its fields, prefix the offending file
    exc.args = (f"{path}: {exc}",)
    return exc


def _read_inputs(cfg: RunConfig):
    if cfg.chain is None or cfg.partition is None:
        raise UsageError(f"{cfg.command} needs --chain and --partition")
    try:
        K, pi = load_chain(cfg.chain, cfg.tol)
    except MarkovCGError as exc:
        raise _located(exc, cfg.chain)
    try:
        phi = load_partition(cfg.partition)
    except MarkovCGError as exc:
        raise _located(exc, cfg.partition)
    if phi.n != K.shape[0]:
        raise MarkovCGError(
            f"{cfg.partition}: partition has {phi.n} states, chain has {K.shape[0]}")
    meta = {
        "tolerances": cfg.tolerances(),
        "seed": cfg.seed,
        "inputs": {"chain": _digest(cfg.chain), "partition": _digest(cfg.partition)},
    }
    return K, CoarseGrainPair(phi, pi), meta


def _emit(cfg: RunConfig, report: dict, summary: list[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if cfg.out is not None:
        Path(cfg.out).write_text(text + "\n")
        for line in summary:
            print(line)
    else:
        print(text)


def cmd_reduce(cfg: RunConfig) -> int:
    K, pair, meta = _read_inputs(cfg)
    report = {"command": "reduce", **meta, **reduce_report(K, pair, cfg.spectral_tol)}
    worst = max(report["residuals"].values())
    _emit(cfg, report, [
        f"reduced {pair.n} states to {pair.n_hat} clusters",
        f"lumpability defect {report['lumpability_defect']:.3e}",
        f"max identity residual {worst:.3e}",
    ])
    return EXIT_OK


def cmd_flux(cfg: RunConfig) -> int:
    K, pair, meta = _read_inputs(cfg)
    init = cfg.options.get("init", "lifted")
    if init == "stationary":
        c_hat0 = pair.pi_hat.copy()
    elif init == "lifted":
        c_hat0 = np.random.default_rng(cfg.seed).dirichlet(np.ones(pair.n_hat))
    else:
        c_hat0 = np.asarray(json.loads(Path(init).read_text()), dtype=float)
        if c_hat0.shape != (pair.n_hat,):
            raise MarkovCGError(f"{init}: expected {pair.n_hat} coarse concentrations")
    body = flux_report(K, pair, c_hat0, cfg.options.get("t_end", 1.0), cfg.options.get("dt", 0.1))
    report = {"command": "flux", **meta, "init": init, **body}
    worst = body["max_residuals"]
    _emit(cfg, report, [
        f"{len(body['trajectory'])} coarse steps reconstructed",
        *(f"max {k} residual {v:.3e}" for k, v in worst.items()),
    ])
    return EXIT_OK


def cmd_spectral(cfg: RunConfig) -> int:
    K, pair, meta = _read_inputs(cfg)
    profile = profile_by_name(cfg.options.get("profile", "quadratic"))
    starts = cfg.options.get("starts", 20)
    poincare = poincare_constant(K, pair.pi, profile, pair=pair, starts=starts, seed=cfg.seed)
    ls = log_sobolev_constant(K, pair.pi, SQUARE, pair=pair, starts=starts, seed=cfg.seed)
    report = {"command": "spectral", **meta,
              "poincare": poincare.to_json(), "log_sobolev": ls.to_json()}
    _emit(cfg, report, [
        f"poincare ({profile.name}): lambda={poincare.lam:.6g} lambda_hat={poincare.lam_hat:.6g}"
        f" monotone: {str(poincare.monotone).lower()}",
        f"log-sobolev (g=r^2): lambda={ls.lam:.6g} lambda_hat={ls.lam_hat:.6g}"
        f" monotone: {str(ls.monotone).lower()}",
    ])
    return EXIT_OK if poincare.monotone and ls.monotone else EXIT_DOMAIN


def cmd_counterexample(cfg: RunConfig) -> int:
    a_min = cfg.options.get("a_min", 0.0)
    a_max = cfg.options.get("a_max", 5.0)
    steps = cfg.options.get("steps", 11)
    if not 0 <= a_min < a_max or steps < 2:
        raise UsageError("need 0 <= a_min < a_max and steps >= 2")
    rows = counterexample_table(a_min, a_max, steps)
    a_star = crossover()
    lines = [f"{'a':>8} {'D_K(x)':>14} {'D_Khat(Nx)':>14} {'sign':>5}"]
    lines += [f"{r.a:8.4f} {r.dk:14.10f} {r.dk_hat:14.10f} {r.sign:5d}" for r in rows]
    lines.append(f"crossover a* = {a_star:.10f} (1 + sqrt(3) = {CROSSOVER:.10f})")
    report = {
        "command": "counterexample",
        "rows": [{"a": r.a, "DK": r.dk, "DK_hat": r.dk_hat, "sign": r.sign} for r in rows],
        "a_star": a_star,
    }
    if cfg.out is not None:
        Path(cfg.out).write_text(json.dumps(report, indent=2) + "\n")
    print("\n".join(lines))
    if cfg.options.get("selftest"):
        ok = abs(a_star - CROSSOVER) <= 1e-6
        print(f"selftest: {'PASS' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_DOMAIN
    return EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    results = run_all(cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_DOMAIN


COMMANDS = {
    "reduce": cmd_reduce,
    "flux": cmd_flux,
    "spectral": cmd_spectral,
    "counterexample": cmd_counterexample,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chain", type=Path, help="chain JSON {n, K, pi?}")
    common.add_argument("--partition", type=Path, help="partition JSON {n, assignment}")
    common.add_argument("--tol", type=float, default=STRUCT_TOL, help="structural tolerance")
    common.add_argument("--spectral-tol", type=float, default=SPECTRAL_TOL)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", type=Path, help="write the JSON report here")

    parser = argparse.ArgumentParser(prog="markov-cg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("reduce", parents=[common], help="coarse-grain a chain")
    p = sub.add_parser("flux", parents=[common], help="coarse evolution and flux reconstruction")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--init", default="lifted",
                   help="'stationary', 'lifted' (random coarse state) or a JSON vector file")
    p = sub.add_parser("spectral", parents=[common], help="Poincare and log-Sobolev constants")
    p.add_argument("--profile", default="quadratic", choices=sorted(PROFILES))
    p.add_argument("--starts", type=int, default=20)
    p = sub.add_parser("counterexample", parents=[common], help="three-state family where coarse-graining raises the Dirichlet form")
    p.add_argument("--a-min", type=float, default=0.0)
    p.add_argument("--a-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--selftest", action="store_true", help="check the crossover location")
    sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    return parser


def _config(args) -> RunConfig:
    skip = {"command", "chain", "partition", "out", "tol", "spectral_tol", "seed"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    return RunConfig(args.command, args.chain, args.partition, args.out, args.tol,
                     args.spectral_tol, args.seed, options)


def _setup_logging():
    level = os.environ.get("MARKOV_CG_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_USAGE
    except (OSError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MarkovCGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
