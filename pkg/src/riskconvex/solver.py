"""Projected stochastic gradient method for the exponentiated objective.

The solver runs

    theta <- Proj_C(theta - eta_i * ghat(theta, w)),   eta_i = (R(C)/zeta) sqrt(1/(2i)),

from theta = 0 (projected into C when infeasible), where ghat is the
single-draw unbiased gradient of G and zeta bounds sqrt(E ||ghat||^2).
With uniform iterate averaging the expected objective gap after T
iterations is at most R(C) * zeta * sqrt(1/(2T)); that certificate is
returned with every report.  The iteration loop is sequential;
per-iteration mini-batches average independent draws from the run
stream in a fixed order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .csvio import write_csv
from .errors import ContractError, DivergenceError
from .fields import ScalarField
from .objective import (
    RiskModel,
    check_convexity_certificate,
    unbiased_grad_estimate,
    unbiased_grad_mean,
    _exponents,
)
from .sampling import GaussianSampler


@dataclass
class FeasibleSet:
    """A convex feasible set with closed-form Euclidean projection.

    Kinds: "ball" (center, radius), "box" (lower, upper), "all".
    ``radius_bound`` is the radius of a ball containing the set, used by
    the step-size schedule; for "all" it must be supplied explicitly.
    """

    kind: str
    dim: int
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    explicit_radius_bound: Optional[float] = None

    @classmethod
    def ball(cls, center, radius: float) -> "FeasibleSet":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        radius = float(radius)
        if not radius > 0.0:
            raise ContractError("ball radius must be positive")
        return cls(kind="ball", dim=center.size, center=center, radius=radius)

    @classmethod
    def box(cls, lower, upper) -> "FeasibleSet":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise ContractError("box bounds must have matching shapes")
        if np.any(lower > upper):
            raise ContractError("box lower bound exceeds upper bound")
        return cls(kind="box", dim=lower.size, lower=lower, upper=upper)

    @classmethod
    def unconstrained(cls, dim: int, radius_bound: Optional[float] = None) -> "FeasibleSet":
        return cls(kind="all", dim=int(dim), explicit_radius_bound=radius_bound)

    @property
    def radius_bound(self) -> float:
        if self.kind == "ball":
            return float(self.radius)
        if self.kind == "box":
            return float(np.linalg.norm(0.5 * (self.upper - self.lower)))
        if self.explicit_radius_bound is not None:
            return float(self.explicit_radius_bound)
        raise ContractError(
            "an unconstrained set needs an explicit radius_bound for the step schedule"
        )

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "all":
            return x.copy()
        if self.kind == "ball":
            d = x - self.center
            norm = float(np.linalg.norm(d))
            if norm <= self.radius:
                return x.copy()
            return self.center + (self.radius / norm) * d
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        raise ContractError(f"unknown feasible set kind {self.kind!r}")

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol * (1.0 + np.linalg.norm(x)))


def project(feasible: FeasibleSet, x) -> np.ndarray:
    """Euclidean projection of x onto the feasible set."""
    return feasible.project(x)


@dataclass
class SolverConfig:
    """Iteration budget and schedule inputs.

    ``zeta`` bounds the root second moment of the gradient estimator the
    iteration uses.  Supply it directly (for isotropic problems the
    closed form from :func:`variance_bound` is one source), or leave it
    None to estimate it from a pilot of ``pilot_samples`` draws at the
    start point.  ``batch`` > 1 averages that many draws per iteration
    (the pilot then calibrates to the batch mean).  ``theta0`` overrides
    the default start of 0 (still projected).
    """

    iterations: int
    zeta: Optional[float] = None
    batch: int = 1
    averaging: bool = True
    theta0: Optional[np.ndarray] = None
    pilot_samples: int = 200

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.batch < 1:
            raise ContractError("batch must be >= 1")
        if self.zeta is not None and not self.zeta > 0.0:
            raise ContractError("zeta must be positive")
        if self.pilot_samples < 2:
            raise ContractError("pilot_samples must be >= 2")


def step_size(radius_bound: float, zeta: float, i: int) -> float:
    """Schedule eta_i = (R(C)/zeta) * sqrt(1/(2i))."""
    return (radius_bound / zeta) * math.sqrt(1.0 / (2.0 * i))


def convergence_certificate(radius_bound: float, zeta: float, iterations: int) -> float:
    """Expected-gap certificate R(C) * zeta * sqrt(1/(2T))."""
    return radius_bound * zeta * math.sqrt(1.0 / (2.0 * iterations))


@dataclass
class SolverReport:
    """Trace and certificate of one projected stochastic gradient run."""

    theta_hat: np.ndarray
    final_theta: np.ndarray
    certificate: float
    zeta: float
    thetas: np.ndarray          # (T, k) pre-update iterates, averaged into theta_hat
    grad_norms: np.ndarray      # (T,) norms of the sampled gradients
    etas: np.ndarray            # (T,) step sizes
    certified: bool
    certificate_margin: float
    objective_trace: Optional[np.ndarray] = None
    objective_log_gap: Optional[float] = None

    @property
    def iterations(self) -> int:
        return self.thetas.shape[0]

    def recompute_average(self) -> np.ndarray:
        return self.thetas.mean(axis=0)

    def empirical_zeta(self) -> float:
        """Root mean squared norm of the sampled gradients along the run."""
        return float(np.sqrt(np.mean(self.grad_norms**2)))

    def write_trace_csv(self, path) -> None:
        """Columns: iter, theta_0..theta_{k-1}, grad_norm, eta."""
        k = self.thetas.shape[1]
        header = ["iter"] + [f"theta_{j}" for j in range(k)] + ["grad_norm", "eta"]
        rows = (
            [i + 1, *self.thetas[i], self.grad_norms[i], self.etas[i]]
            for i in range(self.iterations)
        )
        write_csv(path, rows, header=header)


def batch_second_moment(samples: np.ndarray, batch: int) -> float:
    """sqrt(E ||mean of `batch` samples||^2) estimated from pilot samples.

    For batch 1 this is the root mean squared sample norm; for larger
    batches the variance term shrinks by the batch size, matching the
    estimator the iteration actually uses.
    """
    flat = samples.reshape(samples.shape[0], -1)
    if batch <= 1:
        return float(np.sqrt(np.mean(np.sum(flat**2, axis=1))))
    mu = flat.mean(axis=0)
    var = flat.var(axis=0, ddof=1)
    return float(np.sqrt(mu @ mu + var.sum() / batch))


def _pilot_zeta(f: ScalarField, model: RiskModel, theta: np.ndarray, n: int,
                sampler: GaussianSampler, batch: int) -> float:
    """Gradient second-moment pilot at theta for the batched estimator."""
    draws = sampler.draw(n)
    expo = _exponents(f, model, theta, draws)
    grads = f.grad_batch(theta + draws)
    samples = model.alpha * np.exp(expo)[:, None] * (grads + model.reg @ theta)
    zeta = batch_second_moment(samples, batch)
    if not zeta > 0.0:
        # All-zero pilot gradients (start at a stationary point): any
        # positive zeta yields valid steps; use 1 so the schedule is defined.
        return 1.0
    return zeta


def solve(f: ScalarField, model: RiskModel, feasible: FeasibleSet,
          config: SolverConfig, sampler: GaussianSampler) -> SolverReport:
    """Run the projected stochastic gradient method on G.

    The run starts at theta = 0 projected into C (or config.theta0).  A
    failed convexity certificate is a warning, not an error: the descent
    is still valid on a possibly nonconvex G, but the optimality
    certificate in the report is void and flagged.

    Raises:
        ContractError: if f has no gradient.
        DivergenceError: on a non-finite gradient estimate, carrying the
            iteration index.
    """
    if f.gradient is None:
        raise ContractError("solve requires a field with a gradient")
    if feasible.dim != model.dim:
        raise ContractError("feasible set dimension does not match the model")
    cert = check_convexity_certificate(model)
    if not cert.holds:
        warnings.warn(
            f"convexity certificate fails (margin {cert.margin:.3e}); "
            "the optimality certificate in the report is void",
            stacklevel=2,
        )

    pilot_stream, run_stream = sampler.split(2)
    theta = np.zeros(model.dim) if config.theta0 is None else np.asarray(config.theta0, float)
    theta = feasible.project(theta)
    radius = feasible.radius_bound
    zeta = config.zeta
    if zeta is None:
        zeta = _pilot_zeta(f, model, theta, config.pilot_samples, pilot_stream,
                           config.batch)

    T = config.iterations
    thetas = np.empty((T, model.dim))
    grad_norms = np.empty(T)
    etas = np.empty(T)
    for i in range(1, T + 1):
        thetas[i - 1] = theta
        if config.batch == 1:
            g = unbiased_grad_estimate(f, model, theta, run_stream)
        else:
            g, _ = unbiased_grad_mean(f, model, theta, config.batch, run_stream)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient estimate at iteration {i}", step=i)
        eta = step_size(radius, zeta, i)
        grad_norms[i - 1] = float(np.linalg.norm(g))
        etas[i - 1] = eta
        theta = feasible.project(theta - eta * g)

    theta_hat = thetas.mean(axis=0) if config.averaging else theta.copy()
    return SolverReport(
        theta_hat=theta_hat,
        final_theta=theta,
        certificate=convergence_certificate(radius, zeta, T),
        zeta=zeta,
        thetas=thetas,
        grad_norms=grad_norms,
        etas=etas,
        certified=cert.holds,
        certificate_margin=cert.margin,
    )


@dataclass
class VarianceBoundInputs:
    """Closed-form inputs for the gradient second-moment bound.

    The bound applies to the isotropic setting R = kappa I,
    Sigma = sigma^2 I, with alpha * kappa >= 1/sigma^2, a gradient
    exponential-moment level gamma^2, a bound mbar on the smoothed
    objective over C, and C inside a ball of radius ``radius``.
    """

    alpha: float
    kappa: float
    sigma: float
    beta: float
    gamma_sq: float
    mbar: float
    radius: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ContractError("alpha must be positive")
        if not self.sigma > 0.0:
            raise ContractError("sigma must be positive")
        if self.beta < 0.0:
            raise ContractError("beta must be nonnegative")
        if self.gamma_sq < 0.0 or self.radius < 0.0:
            raise ContractError("gamma_sq and radius must be nonnegative")
        lhs = self.alpha * self.kappa
        rhs = 1.0 / self.sigma**2
        if lhs < rhs * (1.0 - 1e-12):
            raise ContractError(
                f"certificate precondition alpha*kappa >= 1/sigma^2 fails ({lhs} < {rhs})"
            )


def variance_bound(inputs: VarianceBoundInputs) -> float:
    """The closed-form bound on the gradient second moment.

    delta = sqrt(beta gamma^2 / (sigma^2 (1 - alpha beta))) + kappa R(C)
    bound = alpha^2 delta^2 exp(2 alpha (mbar + gamma^2)
                                + alpha beta / (1 - alpha beta) - sigma^2 kappa)

    Raises ContractError when alpha * beta >= 1.
    """
    a, b = inputs.alpha, inputs.beta
    if a * b >= 1.0:
        raise ContractError(f"alpha*beta must be < 1, got {a * b}")
    delta = math.sqrt(b * inputs.gamma_sq / (inputs.sigma**2 * (1.0 - a * b)))
    delta += inputs.kappa * inputs.radius
    expo = 2.0 * a * (inputs.mbar + inputs.gamma_sq) + a * b / (1.0 - a * b)
    expo -= inputs.sigma**2 * inputs.kappa
    return a**2 * delta**2 * math.exp(expo)


def log_gap_from_exp_gap(exp_gap: float, g_star: float) -> float:
    """Convert a gap on G into a gap on log G: log(1 + exp_gap / G*)."""
    exp_gap = float(exp_gap)
    g_star = float(g_star)
    if not g_star > 0.0:
        raise ContractError("g_star must be positive")
    if exp_gap < 0.0:
        raise ContractError("exp_gap must be nonnegative")
    return math.log1p(exp_gap / g_star)
