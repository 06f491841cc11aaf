"""Command-line interface: run / compare / validate.

Exit codes: 0 success, 1 validation check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional, Tuple

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .core import STREAM_VALIDATION, rng_stream
from .policy import igw_kernel
from .runner import compare, implicit_regret_sweep, run_experiment
from .validation import (excess_risk_identity_gap, misspec_bound_check,
                         random_instance, random_kernel, random_model_class,
                         shifted_class)

Check = Tuple[str, bool, str]


def identity_check(seed: int = 0, instances: int = 50,
                   tol: float = 1e-10) -> Check:
    """Excess R-loss risk must match the gap identity and ignore the
    nuisance table, to float precision, on random finite instances."""
    rng = rng_stream(seed, STREAM_VALIDATION)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(rng)
        g = rng.uniform(-2.5, 2.5, inst.f_star.shape)
        mu_a = rng.uniform(-2.0, 2.0, inst.num_contexts)
        mu_b = rng.uniform(-2.0, 2.0, inst.num_contexts)
        worst = max(worst, excess_risk_identity_gap(inst, g, mu_a, mu_b))
    return ("excess-risk identity", worst <= tol,
            f"max deviation {worst:.3e} over {instances} instances")


def bound_check(seed: int = 1, instances: int = 100, kernels: int = 20,
                strict_margin: float = 0.1) -> Check:
    """Best-in-class excess R-loss risk never exceeds best-in-class squared
    error, and the shifted-class construction keeps a strict gap."""
    rng = rng_stream(seed, STREAM_VALIDATION)
    ok = True
    checked = 0
    for _ in range(instances):
        inst = random_instance(rng, noise=False)
        cls = random_model_class(rng, inst)
        kerns = [random_kernel(rng, inst.num_contexts, inst.num_actions)
                 for _ in range(kernels)]
        rep = misspec_bound_check(inst, cls, kerns)
        ok = ok and rep.holds
        checked += kernels
    strict = random_instance(rng, noise=False)
    srep = misspec_bound_check(strict, shifted_class(strict, 0.5),
                               [strict.kernel])
    strict_ok = (srep.holds and srep.best_excess <= 1e-12
                 and srep.best_squared >= strict_margin)
    return ("misspecification bound", ok and strict_ok,
            f"{checked} kernel cases, strict gap {srep.best_squared:.3f}")


def kernel_check(seed: int = 2, draws: int = 100_000) -> Check:
    """Inverse-gap kernel validity: simplex membership, leader mass,
    and the per-action floor 1/(K + gamma * max_gap)."""
    rng = rng_stream(seed, STREAM_VALIDATION)
    ok = True
    for _ in range(draws):
        K = int(rng.integers(2, 7))
        scores = 3.0 * rng.standard_normal(K)
        gamma = float(np.exp(rng.uniform(0.0, 9.0)))
        dist = igw_kernel(scores, gamma)
        p = dist.probs
        ahat = int(np.argmax(scores))
        floor = 1.0 / (K + gamma * (scores.max() - scores.min()))
        ok = ok and abs(p.sum() - 1.0) <= 1e-12
        ok = ok and p[ahat] >= 1.0 / K - 1e-15
        ok = ok and p[ahat] == p.max()
        ok = ok and p.min() >= floor - 1e-15
        if not ok:
            break
    return ("kernel validity sweep", ok, f"{draws} random (scores, gamma) draws")


def implicit_regret_check(seed: int = 3, tol: float = 1e-12) -> Check:
    """Per-round implicit regret of the deployed kernel stays below K/gamma
    over a full realizable run."""
    cfg = RunConfig(scenario="lin_lin", d=10, horizon=2000, algorithm="hte_igw",
                    schedule_kind="doubling", schedule_base=16,
                    rate_const=0.01, seeds=(seed,))
    worst = implicit_regret_sweep(cfg, seed)
    return ("implicit regret bound", worst <= tol,
            f"max slack {worst:.3e} over 2000 rounds")


def validation_checks(seed: int = 0) -> List[Check]:
    return [identity_check(seed), bound_check(seed + 1),
            kernel_check(seed + 2), implicit_regret_check(seed + 3)]


# -- entry point --------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hte-bandit",
                                description="Contextual bandit simulation harness")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one algorithm over the seed list")
    run_p.add_argument("--config", help="key=value config file")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config entry")

    cmp_p = sub.add_parser("compare", help="paired runs of several algorithms")
    cmp_p.add_argument("--config", help="key=value config file")
    cmp_p.add_argument("--algos", required=True,
                       help="comma-separated algorithm list")
    cmp_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")

    val_p = sub.add_parser("validate", help="run the structural check suite")
    val_p.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.overrides)
            res = run_experiment(cfg)
            final = res.curve.final_mean()
            print(f"{cfg.algorithm} on {cfg.scenario}: "
                  f"final mean cumulative regret {final:.3f} "
                  f"({len(cfg.seeds)} seeds, T={cfg.horizon})")
            print(f"artifacts written to {cfg.output_dir}/")
            return 0
        if args.command == "compare":
            cfg = load_config(args.config, args.overrides)
            algos = [a.strip() for a in args.algos.split(",") if a.strip()]
            if not algos:
                raise ConfigError("empty algorithm list")
            results = compare(cfg, algos)
            base = results[algos[0]].curve.final_mean()
            for a in algos:
                final = results[a].curve.final_mean()
                ratio = final / base if base else float("nan")
                print(f"{a:>12}: final regret {final:9.3f}  ratio {ratio:.3f}")
            print(f"artifacts written to {cfg.output_dir}/")
            return 0
        # validate
        checks = validation_checks(args.seed)
        failed = 0
        for name, ok, stat in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {stat}")
            failed += 0 if ok else 1
        print(f"{len(checks) - failed}/{len(checks)} checks passed")
        return 0 if failed == 0 else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
