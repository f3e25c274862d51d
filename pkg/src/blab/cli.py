"""Command-line entry point.

Exit status: 0 when every reported metric passes, 1 when any fails, 2 on
invalid arguments. The default seed is 0, or the value of ``BLAB_SEED``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from . import stats
from .attacks import destabilization_rate, perturbation_trials, trials_csv, universal_rate
from .certify import certified_radius, verify_robust_on_sample
from .distributions import DistributionSpec, default_spec, sample_dataset
from .errors import InfeasibleSpec, InvalidArgument, NotApplicable, SamplerExhausted
from .experiments import ExperimentConfig, ExperimentReport, Metric, run
from .networks import ActivationSpec, ThresholdNet, build_regularized, build_twin_pair, depth_extend, forward

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
STATEMENTS = ("i", "ii", "iiia", "iiib", "hoeffding")
VARIANT_FOR = {"i": "base", "ii": "base", "iiia": "scaled_cube", "iiib": "shifted_vertices", "hoeffding": "base"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_seed() -> int:
    raw = os.environ.get("BLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidArgument(f"BLAB_SEED must be an integer, got {raw!r}")


def _common(p: argparse.ArgumentParser, need_out: bool = True) -> None:
    g = p.add_argument_group("problem")
    g.add_argument("--n", type=int, default=4, help="input dimension (>= 2)")
    g.add_argument("--eps", type=float, default=None, help="default min(0.5, (sqrt(n)-1)/2)")
    g.add_argument("--delta", type=float, default=None, help="default: the variant's separation margin")
    g.add_argument("--alpha", type=float, default=None, help="perturbation scale in (0, eps/2); default eps/4")
    g.add_argument("--q", type=float, default=0.1)
    g.add_argument("--M", type=int, default=None, help="sample size")
    g.add_argument("--r", type=int, default=None, help="training size (default 70%% of M)")
    g.add_argument("--s", type=int, default=None, help="validation size")
    g.add_argument("--k", type=int, default=None, help="number of shifted vertices (iiib)")
    g.add_argument("--m", type=int, default=4, help="points hit by one universal perturbation")
    g.add_argument("--kappa", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--lam", type=float, default=1e-6)
    g.add_argument("--Lam", type=float, default=1e6)
    g.add_argument("--trials", type=int, default=10_000)
    g.add_argument("--draws", type=int, default=None, help="perturbation draws per point (default: --trials)")
    g.add_argument("--seed", type=int, default=None, help="root seed (default $BLAB_SEED or 0)")
    g.add_argument("--activation", choices=("relu", "leaky", "sigmoid"), default="relu")
    g.add_argument("--theta", type=float, default=0.0, help="activation threshold")
    if need_out:
        o = p.add_argument_group("output")
        o.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
        o.add_argument("--format", choices=("json", "csv"), default="json")
        o.add_argument("--timing", action="store_true", help="record runtime_ms (output no longer byte-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="blab",
        description="Counterexample distributions, box-classifier networks and instability experiments.",
        epilog="Environment: BLAB_SEED overrides the default root seed (0).",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("sample", help="draw a labelled dataset")
    _common(sp)
    sp.add_argument("--variant", choices=("base", "scaled_cube", "shifted_vertices"), default="base")

    bp = sub.add_parser("build", help="emit a network as JSON")
    _common(bp)
    bp.add_argument("--kind", choices=("unstable", "robust", "regularized"), required=True)
    bp.add_argument("--depth", type=int, default=2, help="number of layers L")
    bp.add_argument("--width", type=int, default=None, help="first hidden width N_1 (default 2n)")
    bp.add_argument("--hidden", type=int, default=1, help="width of layers 2..L-1")

    ep = sub.add_parser("eval", help="evaluate a network JSON at a point")
    ep.add_argument("net", type=Path)
    ep.add_argument("--x", required=True, help="comma-separated coordinates")

    ap = sub.add_parser("attack", help="per-point and universal flip rates at cube vertices")
    _common(ap)
    ap.add_argument("--kind", choices=("unstable", "robust"), default="unstable")
    ap.add_argument("--vertex", type=int, default=0, help="vertex index for the per-point rate")
    ap.add_argument("--log", type=Path, default=None, help="per-trial CSV log for the per-point rate")

    cp = sub.add_parser("certify", help="certified radii and sample verification")
    _common(cp)
    cp.add_argument("--kind", choices=("unstable", "robust"), default="robust")
    cp.add_argument("--variant", choices=("base", "scaled_cube", "shifted_vertices"), default="base")

    xp = sub.add_parser("exp", help="run a full experiment")
    xp.add_argument("statement", choices=STATEMENTS)
    _common(xp)
    return p


def _activation(a) -> ActivationSpec:
    if a.activation == "relu":
        return ActivationSpec("relu", theta=a.theta)
    if a.activation == "leaky":
        return ActivationSpec("leaky_relu_difference", theta=a.theta)
    return ActivationSpec("piecewise_linear_sigmoid", theta=a.theta, theta1=a.theta + 1.0)


def _spec(a, variant: str) -> DistributionSpec:
    k = a.k if a.k is not None else (2 if variant == "shifted_vertices" else 0)
    base = default_spec(a.n, a.eps, variant, k)
    delta = base.delta if a.delta is None else a.delta
    return DistributionSpec(a.n, base.eps, delta, variant, k)


def _seed(a) -> int:
    return _env_seed() if a.seed is None else a.seed


def _config(a, variant: str, default_M: int) -> ExperimentConfig:
    return ExperimentConfig(
        spec=_spec(a, variant),
        M=default_M if a.M is None else a.M,
        r=a.r,
        s=a.s,
        alpha=a.alpha,
        q=a.q,
        kappa=a.kappa,
        beta=a.beta,
        lam=a.lam,
        Lam=a.Lam,
        m=a.m,
        trials=a.trials,
        draws=a.trials if a.draws is None else a.draws,
        seed=_seed(a),
        act=_activation(a),
    )


def _emit(text: str, out: Optional[Path], meta: Optional[dict] = None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out.write_text(text if text.endswith("\n") else text + "\n")
    if meta is not None:
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n")


def _emit_report(report: ExperimentReport, a) -> int:
    if a.format == "csv":
        _emit(report.to_csv(), a.out, {"config": report.config, "seed": report.seed})
    else:
        _emit(report.to_json(include_runtime=a.timing), a.out)
    for m in report.metrics:
        print(f"[{'PASS' if m.passed else 'FAIL'}] {report.statement}:{m.name} empirical={m.empirical!r} "
              f"{m.comparison} {m.theory!r}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_sample(a) -> int:
    spec = _spec(a, a.variant)
    if a.M is None:
        raise InvalidArgument("--M is required for sample")
    seed = _seed(a)
    data = sample_dataset(spec, a.M, stats.child_rng(seed, "sample"))
    data.seed = seed
    if a.format == "csv":
        _emit(data.to_csv(), a.out, {"spec": spec.to_dict(), "seed": seed, "M": a.M})
    else:
        _emit(data.to_json(), a.out)
    return EXIT_OK


def cmd_build(a) -> int:
    n = a.n
    act = _activation(a)
    eps = default_spec(n, a.eps).eps
    if a.kind == "regularized":
        net = build_regularized(n, a.beta, act)
    else:
        f, ft = build_twin_pair(n, eps, a.kappa, act)
        net = f if a.kind == "unstable" else ft
    if a.depth != 2 or (a.width is not None and a.width != 2 * n):
        if a.kind == "regularized":
            raise InvalidArgument("depth extension applies to sign networks, not the regularized core")
        if a.depth < 2:
            raise InvalidArgument("--depth must be at least 2")
        width = 2 * n if a.width is None else a.width
        arch = [1] + [a.hidden] * (a.depth - 2) + [width, n]
        net = depth_extend(net, arch)
    doc = net.to_dict()
    doc["config"] = {"kind": a.kind, "n": n, "eps": eps, "kappa": a.kappa, "beta": a.beta, "depth": a.depth,
                     "activation": act.to_dict(), "seed": _seed(a)}
    _emit(json.dumps(doc, indent=1), a.out)
    return EXIT_OK


def cmd_eval(a) -> int:
    net = ThresholdNet.from_json(a.net.read_text())
    x = np.array([float(v) for v in a.x.split(",")])
    print(forward(net, x))
    return EXIT_OK


def cmd_attack(a) -> int:
    cfg = _config(a, "base", 1000)
    n, eps = cfg.n, cfg.eps
    f, ft = build_twin_pair(n, eps, cfg.kappa, cfg.act)
    net = f if a.kind == "unstable" else ft
    x = geo.cube_vertex(n, a.vertex)
    if a.m > 2**n:
        raise InvalidArgument(f"--m must not exceed 2**n = {2**n}")
    rate = destabilization_rate(net, x, cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, "attack/rate"))
    pts = np.array([geo.cube_vertex(n, (a.vertex + j) % 2**n) for j in range(cfg.m)])
    uni = universal_rate(net, pts, cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, "attack/universal"))
    if a.kind == "unstable":
        metrics = [
            Metric("per_point_flip_rate", rate.rate, 1 - 2.0**-n, "eq", trials=cfg.draws, ci95=rate.ci95),
            Metric(f"universal_flip_rate_m{cfg.m}", uni.rate, 1 - cfg.m / 2.0**n, "ge", trials=cfg.draws, ci95=uni.ci95),
        ]
    else:
        metrics = [
            Metric("per_point_flip_rate", rate.rate, 0.0, "eq", trials=cfg.draws, ci95=rate.ci95),
            Metric(f"universal_flip_rate_m{cfg.m}", uni.rate, 0.0, "eq", trials=cfg.draws, ci95=uni.ci95),
        ]
    if a.log is not None:
        zetas, flipped = perturbation_trials(net, x, cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, "attack/rate"))
        a.log.write_text(trials_csv(zetas, flipped))
    report = ExperimentReport(f"attack-{a.kind}", cfg.to_dict(), cfg.seed, metrics)
    return _emit_report(report, a)


def cmd_certify(a) -> int:
    cfg = _config(a, a.variant, 1000)
    n, eps = cfg.n, cfg.eps
    f, ft = build_twin_pair(n, eps, cfg.kappa, cfg.act)
    net = f if a.kind == "unstable" else ft
    data = sample_dataset(cfg.spec, cfg.M, stats.child_rng(cfg.seed, "certify/sample"))
    check = verify_robust_on_sample(net.boundary, data, cfg.alpha)
    # robust twin: certified on base samples, not on samples holding a boundary vertex
    on_boundary = bool(np.any(np.asarray(certified_radius(net.boundary, data.x)) == 0))
    expected = not on_boundary
    metrics = [
        Metric("certified_robust", float(check.robust), float(expected), "eq"),
        Metric("min_certified_radius", float(check.margins.min()), 0.0, "ge"),
    ]
    report = ExperimentReport(f"certify-{a.kind}", cfg.to_dict(), cfg.seed, metrics,
                              notes=[f"radius threshold alpha/sqrt(n) = {cfg.alpha / math.sqrt(n)!r}"])
    return _emit_report(report, a)


def cmd_exp(a) -> int:
    default_M = {"i": 200, "ii": 1000, "iiia": 200, "iiib": 10, "hoeffding": 100}[a.statement]
    cfg = _config(a, VARIANT_FOR[a.statement], default_M)
    return _emit_report(run(a.statement, cfg), a)


COMMANDS = {"sample": cmd_sample, "build": cmd_build, "eval": cmd_eval, "attack": cmd_attack,
            "certify": cmd_certify, "exp": cmd_exp}


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (InvalidArgument, InfeasibleSpec, NotApplicable) as e:
        print(f"blab {args.command}: invalid arguments: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SamplerExhausted as e:
        print(f"blab {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
