"""Command-line experiment runner.

Subcommands: ``run`` (one variant, trace + solution files), ``compare``
(several variants on the same problem, merged long-format CSV) and
``validate-steps`` (per-block step-bound report). Configuration is a
JSON file; command-line flags override config fields, and the
environment variable PDCD_SEED overrides the configured seed (an
explicit ``--seed`` flag wins over both).

Exit codes: 0 success, 2 configuration error (message names the
offending field), 3 divergence.
"""

import argparse
import json
import os
import sys

import numpy as np
import scipy.sparse  # noqa: F401  (problems returns CSR; keep the import path warm)

from . import problems, solver
from .stepsize import StepSizes, coordinate_spectral_term, make_stepsizes, max_tau

__all__ = ["main", "ConfigError", "build_problem_from_config", "steps_for_variant"]


class ConfigError(ValueError):
    pass


def _section(cfg, name, allowed, required=()):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"unknown field {name}.{key!r}")
    for key in required:
        if key not in sec:
            raise ConfigError(f"missing required field {name}.{key!r}")
    return sec


def _load_dense_csv(path, what):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError:
        raise ConfigError(f"{what}: cannot read {path!r}") from None
    except ValueError as exc:
        raise ConfigError(f"{what}: {path!r} is not a numeric CSV ({exc})") from None


_PROBLEM_KEYS = {
    "kind",
    "alpha",
    "r",
    "volume_dims",
    "lam",
    "C",
    "class_weighted",
    "c_max",
    "synth",
    "design_csv",
    "targets_csv",
    "libsvm",
}


def _regression_data(sec, n_columns=None):
    """(A, b) from CSV paths or synthetic parameters."""
    if "design_csv" in sec or "targets_csv" in sec:
        if "design_csv" not in sec or "targets_csv" not in sec:
            raise ConfigError("problem: design_csv and targets_csv go together")
        A = _load_dense_csv(sec["design_csv"], "problem.design_csv")
        b = _load_dense_csv(sec["targets_csv"], "problem.targets_csv").reshape(-1)
        if A.shape[0] != b.size:
            raise ConfigError(
                f"problem: design has {A.shape[0]} rows, targets {b.size} entries"
            )
        return A, b
    synth = sec.get("synth", {})
    if not isinstance(synth, dict):
        raise ConfigError("problem.synth must be an object")
    n = n_columns if n_columns is not None else int(synth.get("n", 100))
    A, b, _ = problems.synth_regression(
        int(synth.get("seed", 0)),
        int(synth.get("m", 50)),
        n,
        sparsity=float(synth.get("sparsity", 0.1)),
        noise=float(synth.get("noise", 0.0)),
    )
    return A, b


def build_problem_from_config(sec):
    """ProblemSpec from the config's problem section."""
    kind = sec.get("kind")
    if kind is None:
        raise ConfigError("missing required field problem.kind")
    for key in sec:
        if key not in _PROBLEM_KEYS:
            raise ConfigError(f"unknown field problem.{key!r}")

    if kind == "toy_counterexample":
        return problems.build_toy_counterexample()

    if kind == "lasso":
        A, b = _regression_data(sec)
        return problems.build_lasso(A, b, float(sec.get("alpha", 1.0)))

    if kind == "tv_l1":
        if "volume_dims" not in sec:
            raise ConfigError("missing required field problem.volume_dims")
        dims = tuple(int(s) for s in sec["volume_dims"])
        if len(dims) != 3:
            raise ConfigError("problem.volume_dims must have three entries")
        A, b = _regression_data(sec, n_columns=int(np.prod(dims)))
        return problems.build_tv_l1(
            A, b, float(sec.get("alpha", 0.1)), float(sec.get("r", 0.5)), dims
        )

    if kind == "svm_dual":
        if "libsvm" in sec:
            try:
                X, b = problems.read_libsvm(sec["libsvm"])
            except (OSError, ValueError) as exc:
                raise ConfigError(f"problem.libsvm: {exc}") from None
            A = X.T.tocsc()  # one column per sample
        else:
            synth = sec.get("synth", {})
            A, b = problems.synth_classification(
                int(synth.get("seed", 0)),
                int(synth.get("n_samples", 200)),
                int(synth.get("n_features", 50)),
                separation=float(synth.get("separation", 2.0)),
            )
        if sec.get("class_weighted"):
            C = problems.svm_class_weights(b, c_max=float(sec.get("c_max", 1.0)))
        else:
            C = float(sec.get("C", 1.0))
        return problems.build_svm_dual(A, b, C, float(sec.get("lam", 1.0)))

    raise ConfigError(
        f"problem.kind must be one of tv_l1, svm_dual, lasso, "
        f"toy_counterexample; got {kind!r}"
    )


def steps_for_variant(problem, variant, safety=0.95, sigma=None, tau=None):
    """Validated steps for a variant.

    The randomized variants use the coordinate-wise curvature bounds;
    the deterministic full update must use the global Lipschitz constant
    on every block. Explicit tau and sigma are validated against the
    same bound.
    """
    M = problem.M
    if variant == "full_vu_condat":
        beta = np.full(M.n, problem.f.lipschitz)
    else:
        beta = problem.f.beta
    groups = [g for g in problem.dual_groups if len(g) > 1] if M.p else []
    if tau is not None:
        made = make_stepsizes(
            M, beta, sigma=sigma, safety=safety, sigma_uniform_groups=groups or None
        )
        tau = np.broadcast_to(np.asarray(tau, dtype=float), (M.n,)).copy()
        steps = StepSizes(tau=tau, sigma=made.sigma, safety=float(safety))
        steps.validate(M, beta)
        return steps
    return make_stepsizes(
        M, beta, sigma=sigma, safety=safety, sigma_uniform_groups=groups or None
    )


def _resolve_seed(solver_sec, flag_seed):
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("PDCD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PDCD_SEED must be an integer, got {env!r}") from None
    return int(solver_sec.get("seed", 0))


_SOLVER_KEYS = {
    "variant",
    "variants",
    "seed",
    "max_epochs",
    "checkpoint_every",
    "stop_tolerance",
    "safety",
    "sigma",
    "tau",
}
_OUTPUT_KEYS = {"trace", "solution", "format"}


def _solver_config(problem, solver_sec, args, variant):
    n = problem.M.n
    if variant in solver.VARIANTS:
        try:
            solver._check_variant_preconditions(problem, variant)
        except ValueError as exc:
            raise ConfigError(f"variant {variant!r}: {exc}") from None

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return solver_sec.get(key, default)

    safety = float(pick(args.safety, "safety", 0.95))
    sigma = solver_sec.get("sigma")
    if sigma is not None:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (problem.M.p,)).copy()
    tau = solver_sec.get("tau")
    try:
        steps = steps_for_variant(problem, variant, safety=safety, sigma=sigma, tau=tau)
    except ValueError as exc:
        raise ConfigError(f"solver steps: {exc}") from None

    max_epochs = float(pick(args.max_epochs, "max_epochs", 100))
    if max_epochs <= 0:
        raise ConfigError("solver.max_epochs must be positive")
    every_epochs = float(pick(args.checkpoint_every, "checkpoint_every", 1))
    if every_epochs <= 0:
        raise ConfigError("solver.checkpoint_every must be positive")
    try:
        return solver.SolverConfig(
            steps=steps,
            max_iterations=max(1, int(round(max_epochs * n))),
            variant=variant,
            seed=_resolve_seed(solver_sec, args.seed),
            checkpoint_every=max(1, int(round(every_epochs * n))),
            stop_tolerance=float(pick(args.stop_tolerance, "stop_tolerance", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError:
        raise ConfigError(f"cannot read config file {path!r}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for key in cfg:
        if key not in {"problem", "solver", "output"}:
            raise ConfigError(f"unknown top-level section {key!r}")
    return cfg


def _write_solution(path, fmt, x):
    flat = x.to_flat()
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write("x\n")
            for v in flat:
                fh.write(repr(float(v)) + "\n")
    else:
        with open(path, "w") as fh:
            json.dump({"x": [float(v) for v in flat]}, fh, indent=2)
            fh.write("\n")


def _summary_line(tag, trace):
    cp = trace.final
    return (
        f"{tag}: objective={cp.objective:.12g} residual={cp.saddle_residual:.6g} "
        f"epochs={cp.epoch} iterations={trace.total_iterations} "
        f"converged={trace.converged} wall_time={cp.wall_time:.3f}s"
    )


def cmd_run(args):
    cfg = _load_config_file(args.config)
    problem = build_problem_from_config(
        _section(cfg, "problem", _PROBLEM_KEYS, required=("kind",))
    )
    solver_sec = _section(cfg, "solver", _SOLVER_KEYS)
    variant = args.variant or solver_sec.get("variant", "cd_primal_dual")
    config = _solver_config(problem, solver_sec, args, variant)

    try:
        result = solver.run(problem, config)
    except solver.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3

    out = _section(cfg, "output", _OUTPUT_KEYS)
    fmt = (args.format or out.get("format", "csv")).lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format must be csv or json, got {fmt!r}")
    trace_path = args.trace if args.trace is not None else out.get("trace")
    if trace_path:
        if fmt == "csv":
            result.trace.to_csv(trace_path, include_walltime=args.include_walltime)
        else:
            result.trace.to_json(trace_path, include_walltime=args.include_walltime)
    sol_path = args.solution if args.solution is not None else out.get("solution")
    if sol_path:
        _write_solution(sol_path, fmt, result.solution)

    print(_summary_line(variant, result.trace))
    return 0


def cmd_compare(args):
    cfg = _load_config_file(args.config)
    problem = build_problem_from_config(
        _section(cfg, "problem", _PROBLEM_KEYS, required=("kind",))
    )
    solver_sec = _section(cfg, "solver", _SOLVER_KEYS)
    if args.variants is not None:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    else:
        variants = list(solver_sec.get("variants", []))
    if len(variants) < 2:
        raise ConfigError("compare needs at least two variants")

    configs = [(v, _solver_config(problem, solver_sec, args, v)) for v in variants]
    rows = []
    for variant, config in configs:
        try:
            result = solver.run(problem, config)
        except solver.DivergenceError as exc:
            print(f"divergence in {variant}: {exc}", file=sys.stderr)
            return 3
        for cp in result.trace:
            rows.append(
                (variant, cp.epoch, cp.objective, cp.saddle_residual, cp.wall_time)
            )
        print(_summary_line(variant, result.trace))

    def _emit(fh):
        fh.write("variant,epoch,objective,residual,wall_time\n")
        for variant, epoch, obj, res, wt in rows:
            fh.write(f"{variant},{epoch},{obj!r},{res!r},{wt!r}\n")

    if args.out:
        with open(args.out, "w") as fh:
            _emit(fh)
    else:
        _emit(sys.stdout)
    return 0


def cmd_validate_steps(args):
    cfg = _load_config_file(args.config)
    problem = build_problem_from_config(
        _section(cfg, "problem", _PROBLEM_KEYS, required=("kind",))
    )
    solver_sec = _section(cfg, "solver", _SOLVER_KEYS)
    variant = args.variant or solver_sec.get("variant", "cd_primal_dual")
    config = _solver_config(problem, solver_sec, args, variant)
    steps = config.steps

    M = problem.M
    beta = (
        np.full(M.n, problem.f.lipschitz)
        if variant == "full_vu_condat"
        else problem.f.beta
    )
    rho = np.array(
        [coordinate_spectral_term(M, steps.sigma, M.multiplicities, i) for i in range(M.n)]
    )
    bound = max_tau(M, steps.sigma, beta)
    margins = steps.margins(M, beta)
    print(f"{'i':>6} {'beta_i':>14} {'rho_i':>14} {'tau_max_i':>14} {'tau_i':>14} {'margin':>10}")
    for i in range(M.n):
        print(
            f"{i:>6} {beta[i]:>14.6g} {rho[i]:>14.6g} {bound[i]:>14.6g} "
            f"{steps.tau[i]:>14.6g} {margins[i]:>10.6f}"
        )
    worst = float(np.max(margins)) if M.n else 0.0
    print(f"max margin {worst:.9f} (safety {steps.safety})")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pdcd",
        description="Randomized primal-dual coordinate-descent experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--variant", help="solver variant")
        p.add_argument("--seed", type=int, help="RNG seed (overrides PDCD_SEED and config)")
        p.add_argument("--max-epochs", type=float, dest="max_epochs")
        p.add_argument("--checkpoint-every", type=float, dest="checkpoint_every",
                       help="checkpoint interval in epochs")
        p.add_argument("--stop-tolerance", type=float, dest="stop_tolerance")
        p.add_argument("--safety", type=float, help="step-bound safety factor")

    p_run = sub.add_parser("run", help="run one solver variant")
    common(p_run)
    p_run.add_argument("--trace", help="trace output path")
    p_run.add_argument("--solution", help="solution output path")
    p_run.add_argument("--format", choices=("csv", "json"))
    p_run.add_argument("--include-walltime", action="store_true",
                       help="add the wall_time column to trace files")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several variants on one problem")
    common(p_cmp)
    p_cmp.add_argument("--variants", help="comma-separated variant names")
    p_cmp.add_argument("--out", help="merged CSV path (default: stdout)")
    p_cmp.set_defaults(fn=cmd_compare)

    p_val = sub.add_parser("validate-steps", help="print the per-block step-bound report")
    common(p_val)
    p_val.set_defaults(fn=cmd_validate_steps)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
