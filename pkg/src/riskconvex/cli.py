"""Command-line harness.

Subcommands: demo-1d, classify train|eval|corrupt, nnet train|eval,
control train|rollout, synth solve|eval.  Global flags --seed, --samples,
--out, --config apply to every subcommand; per-subcommand knobs live in
the key = value config file and unknown keys are errors.

Exit codes: 0 success, 2 certificate refusal, 3 input or parse error,
4 numerical failure.  All numeric CSV output is written with full
round-trip precision, so identical seed and config reproduce identical
bytes.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .benchmarks import ScalarBenchmark
from .classify import (
    ClassifierConfig,
    accuracy,
    read_model_csv,
    train_classifier,
    write_model_csv,
)
from .configfile import load_config
from .control import rollout, train_policy, write_rollout_csv
from .csvio import write_csv
from .datasets import corrupt_labels, load_dataset, save_dataset
from .demo1d import demo_curves, uniform_grid
from .errors import EXIT_INPUT, ConfigError, DivergenceError, RiskConvexError
from .noisynet import NoisyNetConfig, load_weights, mse, save_weights, train_noisy_net
from .sampling import GaussianSampler
from .solver import FeasibleSet, SolverConfig
from .synthesis import (
    SynthesisConfig,
    detmax_objective,
    read_gains_csv,
    synthesize,
    write_gains_csv,
)


@click.group()
@click.version_option(version=__version__, prog_name="riskconvex")
@click.option("--seed", type=int, default=0, show_default=True,
              help="64-bit seed for every random draw.")
@click.option("--samples", type=int, default=None,
              help="Override the sample count of sampling subcommands.")
@click.option("--out", type=click.Path(), default=None,
              help="Output file (single-CSV commands) or directory.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="key = value settings file; keys documented per subcommand.")
@click.pass_context
def cli(ctx, seed, samples, out, config_path):
    """Risk-averse convexification toolkit."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, samples=samples, out=out, config=config_path)


def _require_out(ctx) -> Path:
    out = ctx.obj.get("out")
    if out is None:
        raise ConfigError("this subcommand writes files; pass --out")
    return Path(out)


def _echo_kv(**kwargs) -> None:
    for key, value in kwargs.items():
        click.echo(f"{key}={value}")


# ---------------------------------------------------------------- demo-1d

DEMO_SCHEMA = {
    "alpha": "float", "sigma": "float", "kappa": "float", "field": "str",
    "grid_points": "int", "grid_min": "float", "grid_max": "float",
    "samples": "int",
}
DEMO_DEFAULTS = {
    "alpha": 4.0, "sigma": 0.5, "kappa": 1.0, "field": "two-basin",
    "grid_points": 121, "grid_min": -3.0, "grid_max": 3.0, "samples": 20000,
}


@cli.command("demo-1d")
@click.pass_context
def demo_1d(ctx):
    """Tabulate original, smoothed, and convexified 1-D curves as CSV."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], DEMO_SCHEMA, DEMO_DEFAULTS)
    n = ctx.obj["samples"] or cfg["samples"]
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    grid = uniform_grid(cfg["grid_min"], cfg["grid_max"], cfg["grid_points"])
    curves = demo_curves(cfg["alpha"], cfg["sigma"], cfg["kappa"], grid, n,
                         sampler, field_id=cfg["field"])
    curves.write_csv(out)
    argmin = float(curves.theta[int(np.argmin(curves.convexified))])
    _echo_kv(rows=grid.size, samples=n, convexified_argmin=argmin, out=out)


# ---------------------------------------------------------------- classify

CLASSIFY_TRAIN_SCHEMA = {"sigma": "float", "max_iters": "int", "grad_tol": "float",
                         "test_split": "float"}
CLASSIFY_TRAIN_DEFAULTS = {"sigma": 1.0, "max_iters": 500, "grad_tol": 1e-8,
                           "test_split": 0.0}


@cli.group()
def classify():
    """Convexified binary classification."""


@classify.command("train")
@click.argument("dataset", type=click.Path())
@click.pass_context
def classify_train(ctx, dataset):
    """Train weights on DATASET and write them as CSV."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], CLASSIFY_TRAIN_SCHEMA, CLASSIFY_TRAIN_DEFAULTS)
    ds = load_dataset(dataset, task="classification")
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    test = None
    if cfg["test_split"] > 0.0:
        ds, test = ds.split(cfg["test_split"], sampler)
    report = train_classifier(
        ds,
        ClassifierConfig(sigma=cfg["sigma"], max_iters=cfg["max_iters"],
                         grad_tol=cfg["grad_tol"]),
        test=test,
    )
    write_model_csv(out, report.theta)
    _echo_kv(iterations=report.iterations, converged=report.converged,
             objective=report.objective, train_accuracy=report.train_accuracy,
             test_accuracy=report.test_accuracy, out=out)


@classify.command("eval")
@click.argument("dataset", type=click.Path())
@click.argument("model", type=click.Path())
@click.pass_context
def classify_eval(ctx, dataset, model):
    """Report accuracy of MODEL on DATASET."""
    load_config(ctx.obj["config"], {}, {})
    ds = load_dataset(dataset, task="classification")
    theta = read_model_csv(model)
    if theta.size != ds.n_features:
        raise ConfigError(f"model has {theta.size} weights, dataset has {ds.n_features} features")
    acc = accuracy(theta, ds)
    _echo_kv(accuracy=acc)
    if ctx.obj.get("out"):
        write_csv(ctx.obj["out"], [[acc]], header=["accuracy"])


CLASSIFY_CORRUPT_SCHEMA = {"sigma_noise": "float"}


@classify.command("corrupt")
@click.argument("dataset", type=click.Path())
@click.pass_context
def classify_corrupt(ctx, dataset):
    """Write a label-corrupted copy of DATASET: y -> sign(y + noise)."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], CLASSIFY_CORRUPT_SCHEMA, {"sigma_noise": 1.0})
    ds = load_dataset(dataset, task="classification")
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    corrupted = corrupt_labels(ds, cfg["sigma_noise"], sampler)
    save_dataset(out, corrupted)
    flips = int(np.sum(corrupted.y != ds.y))
    _echo_kv(rows=ds.size, flipped=flips, out=out)


# ---------------------------------------------------------------- nnet

NNET_SCHEMA = {
    "widths": "list[int]", "alpha": "float", "sigma": "list[float]",
    "penalty": "list[float]", "loss_bound": "float", "iterations": "int",
    "batch": "int", "radius": "float", "eval_every": "int",
    "test_split": "float", "force": "bool", "method": "str",
}
NNET_DEFAULTS = {
    "widths": [1, 6, 1], "alpha": 16.0, "sigma": [0.45], "penalty": [],
    "loss_bound": 0.25, "iterations": 300, "batch": 64, "radius": 6.0,
    "eval_every": 50, "test_split": 0.0, "force": False,
    "method": "derivative_free",
}


def _nnet_config(cfg) -> NoisyNetConfig:
    widths = cfg["widths"]
    n_layers = len(widths) - 1
    sigma = cfg["sigma"]
    if len(sigma) == 1:
        sigma = sigma * n_layers
    penalty = cfg["penalty"] or None
    if penalty is not None and len(penalty) == 1:
        penalty = penalty * n_layers
    return NoisyNetConfig(widths=widths, alpha=cfg["alpha"], noise_scales=sigma,
                          penalty_weights=penalty, loss_bound=cfg["loss_bound"])


@cli.group()
def nnet():
    """Noisy-layer network training as risk-sensitive control."""


@nnet.command("train")
@click.argument("dataset", type=click.Path())
@click.pass_context
def nnet_train(ctx, dataset):
    """Train on DATASET; write weight CSVs and curve.csv into --out."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], NNET_SCHEMA, NNET_DEFAULTS)
    net = _nnet_config(cfg)
    ds = load_dataset(dataset, task="regression")
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    test = None
    if cfg["test_split"] > 0.0:
        ds, test = ds.split(cfg["test_split"], sampler)
    report = train_noisy_net(ds, net, sampler, iterations=cfg["iterations"],
                             batch=cfg["batch"], radius=cfg["radius"],
                             eval_every=cfg["eval_every"], test=test,
                             force=cfg["force"], method=cfg["method"])
    save_weights(out, report.weights)
    report.write_curve_csv(Path(out) / "curve.csv")
    _echo_kv(certified=report.certified,
             worst_margin=float(report.certificate_margins.min()),
             train_mse=report.final_train_mse, test_mse=report.final_test_mse,
             out=out)


NNET_EVAL_SCHEMA = {"widths": "list[int]"}


@nnet.command("eval")
@click.argument("dataset", type=click.Path())
@click.argument("weights", type=click.Path())
@click.pass_context
def nnet_eval(ctx, dataset, weights):
    """Mean-network MSE of WEIGHTS on DATASET."""
    cfg = load_config(ctx.obj["config"], NNET_EVAL_SCHEMA, {"widths": [1, 6, 1]})
    widths = cfg["widths"]
    net = NoisyNetConfig(widths=widths, alpha=1.0,
                         noise_scales=[1.0] * (len(widths) - 1))
    ds = load_dataset(dataset, task="regression")
    ws = load_weights(weights)
    value = mse(net, ws, ds)
    _echo_kv(mse=value, target_variance=float(np.var(ds.y)))
    if ctx.obj.get("out"):
        write_csv(ctx.obj["out"], [[value]], header=["mse"])


# ---------------------------------------------------------------- control

CONTROL_SCHEMA = {
    "a": "float", "b": "float", "q": "float", "r": "float", "sigma_u": "float",
    "alpha": "float", "horizon": "int", "iterations": "int", "batch": "int",
    "radius": "float", "method": "str", "zeta": "float",
}
CONTROL_DEFAULTS = {
    "a": 1.0, "b": 1.0, "q": 0.15, "r": 1.0, "sigma_u": 1.0, "alpha": 1.0,
    "horizon": 3, "iterations": 2000, "batch": 128, "radius": 0.6,
    "method": "derivative_free", "zeta": 0.0,
}


def _benchmark(cfg) -> ScalarBenchmark:
    return ScalarBenchmark(a=cfg["a"], b=cfg["b"], q=cfg["q"], r=cfg["r"],
                           sigma_u=cfg["sigma_u"], alpha=cfg["alpha"],
                           horizon=cfg["horizon"])


@cli.group()
def control():
    """Risk-sensitive policy optimization on the scalar linear benchmark."""


@control.command("train")
@click.pass_context
def control_train(ctx):
    """Train gains; write K_*.csv and trace.csv into --out."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], CONTROL_SCHEMA, CONTROL_DEFAULTS)
    bench = _benchmark(cfg)
    dyn, cost, policy0, model = bench.problem()
    constraint = FeasibleSet.ball(np.zeros(bench.horizon - 1), cfg["radius"])
    solver_cfg = SolverConfig(iterations=cfg["iterations"],
                              zeta=cfg["zeta"] if cfg["zeta"] > 0 else None,
                              batch=cfg["batch"])
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    trained, report = train_policy(dyn, cost, policy0, model, cfg["method"],
                                   solver_cfg, constraint, sampler)
    write_gains_csv(out, trained.gains)
    report.write_trace_csv(Path(out) / "trace.csv")
    gains = [float(k[0, 0]) for k in trained.gains]
    _echo_kv(certified=report.certified, gains=",".join(repr(g) for g in gains),
             certificate=report.certificate, out=out)


CONTROL_ROLLOUT_SCHEMA = dict(CONTROL_SCHEMA, gains="str", mode="str")
CONTROL_ROLLOUT_DEFAULTS = dict(CONTROL_DEFAULTS, gains="", mode="noisy")


@control.command("rollout")
@click.pass_context
def control_rollout(ctx):
    """Simulate one trajectory and write it as CSV to --out."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], CONTROL_ROLLOUT_SCHEMA, CONTROL_ROLLOUT_DEFAULTS)
    bench = _benchmark(cfg)
    gains = read_gains_csv(cfg["gains"]) if cfg["gains"] else None
    dyn, cost, policy, model = bench.problem(gains=gains)
    sampler = GaussianSampler(ctx.obj["seed"], dim=1)
    r = rollout(dyn, cost, policy, model, sampler, mode=cfg["mode"])
    write_rollout_csv(out, r)
    _echo_kv(cost=r.cost, exp_cost=r.exp_cost, out=out)


# ---------------------------------------------------------------- synth

SYNTH_SCHEMA = {
    "a": "float", "b": "float", "q": "float", "r": "float", "sigma_u": "float",
    "alpha": "float", "horizon": "int", "max_iters": "int",
}
SYNTH_DEFAULTS = {
    "a": 1.0, "b": 1.0, "q": 0.15, "r": 1.0, "sigma_u": 1.0, "alpha": 1.0,
    "horizon": 3, "max_iters": 300,
}


@cli.group()
def synth():
    """Structured linear controller design (determinant maximization)."""


@synth.command("solve")
@click.pass_context
def synth_solve(ctx):
    """Optimize gains for the configured linear system; write K_*.csv."""
    out = _require_out(ctx)
    cfg = load_config(ctx.obj["config"], SYNTH_SCHEMA, SYNTH_DEFAULTS)
    bench = _benchmark(cfg)
    report = synthesize(bench.system(), bench.alpha,
                        config=SynthesisConfig(max_iters=cfg["max_iters"]))
    if not report.success:
        raise DivergenceError(f"synthesis failed: {report.message}")
    write_gains_csv(out, report.gains)
    gains = [float(k[0, 0]) for k in report.gains]
    _echo_kv(objective=report.objective, converged=report.converged,
             convexity_advisory=report.convexity_advisory,
             gains=",".join(repr(g) for g in gains), out=out)


@synth.command("eval")
@click.argument("gains", type=click.Path())
@click.pass_context
def synth_eval(ctx, gains):
    """Objective and feasibility of GAINS (a K_*.csv directory)."""
    cfg = load_config(ctx.obj["config"], SYNTH_SCHEMA, SYNTH_DEFAULTS)
    bench = _benchmark(cfg)
    ks = read_gains_csv(gains)
    res = detmax_objective(bench.system(), bench.alpha, ks)
    _echo_kv(objective=res.value, feasible=res.feasible, min_eig=res.min_eig,
             convexity_advisory=res.convexity_advisory)
    if ctx.obj.get("out"):
        write_csv(ctx.obj["out"], [[res.value, res.min_eig, int(res.feasible)]],
                  header=["objective", "min_eig", "feasible"])


def main(argv=None) -> None:
    """Entry point mapping package errors onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:  # includes UsageError
        exc.show()
        sys.exit(EXIT_INPUT)
    except click.exceptions.Abort:
        sys.exit(1)
    except RiskConvexError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
