"""One-dimensional convexification demo.

The built-in test field has a wide, robust basin and a narrow, deeper
basin.  Smoothing removes shallow wiggles but keeps the narrow minimum;
the risk-averse transform at a certified (alpha, sigma, kappa) destroys
it, leaving the robust basin as the unique minimum.  The demo tabulates
the original objective, its Gaussian smoothing, and the convexified
objective on a uniform grid, with common random numbers across grid
points so that curve differences are well resolved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csvio import write_csv
from .errors import CertificateError, ContractError
from .fields import RawField
from .objective import check_convexity_certificate, isotropic_model, log_mean_exp
from .sampling import GaussianSampler

FIELD_IDS = ("two-basin", "constant")


def builtin_field(field_id: str = "two-basin") -> RawField:
    """The demo fields, vectorized over theta.

    "two-basin": a wide bowl of depth 1.2 and width 0.8 at theta = -1
    plus a narrow well of depth 2 and width 0.05 at theta = +1.5, offset
    so the field is bounded above by 1.  Its raw global minimum sits in
    the narrow well; the robust minimum is the wide bowl.
    "constant": identically zero, for certificate and quadratic checks.
    """
    if field_id == "constant":

        def zero_value(theta):
            theta = np.asarray(theta, dtype=float)
            if theta.ndim == 2:
                return np.zeros(theta.shape[0])
            return np.zeros_like(theta)

        return RawField(value=zero_value,
                        gradient=lambda th: np.zeros_like(np.asarray(th, dtype=float)),
                        dim=1, vectorized=True)
    if field_id != "two-basin":
        raise ContractError(f"unknown demo field {field_id!r}; choose from {FIELD_IDS}")

    wide_c, wide_d, wide_w = -1.0, 1.2, 0.8
    narrow_c, narrow_d, narrow_w = 1.5, 2.0, 0.05

    # Accepts a plain array of scalar points, or the (n, 1) stacked form
    # used by ScalarField batch evaluation.
    def scalar_value(theta):
        return (1.0
                - wide_d * np.exp(-0.5 * ((theta - wide_c) / wide_w) ** 2)
                - narrow_d * np.exp(-0.5 * ((theta - narrow_c) / narrow_w) ** 2))

    def value(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 2:
            return scalar_value(theta[:, 0])
        return scalar_value(theta)

    def scalar_gradient(theta):
        g = wide_d * (theta - wide_c) / wide_w**2 \
            * np.exp(-0.5 * ((theta - wide_c) / wide_w) ** 2)
        g += narrow_d * (theta - narrow_c) / narrow_w**2 \
            * np.exp(-0.5 * ((theta - narrow_c) / narrow_w) ** 2)
        return g

    def gradient(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 2:
            return scalar_gradient(theta[:, 0])[:, None]
        return scalar_gradient(theta)

    return RawField(value=value, gradient=gradient, dim=1, vectorized=True)


@dataclass
class DemoCurves:
    """Tabulated demo output; one row per grid point."""

    theta: np.ndarray
    objective: np.ndarray       # f(theta) + 0.5 kappa theta^2
    smoothed: np.ndarray        # E[f(theta+w)] + 0.5 kappa (theta^2 + sigma^2)
    convexified: np.ndarray     # (1/alpha) log E[exp(alpha f(theta+w))] + 0.5 kappa theta^2
    convexified_std_err: np.ndarray

    def write_csv(self, path) -> None:
        header = ["theta", "objective", "smoothed", "convexified", "convexified_std_err"]
        rows = zip(self.theta, self.objective, self.smoothed,
                   self.convexified, self.convexified_std_err)
        write_csv(path, rows, header=header)


def demo_curves(alpha: float, sigma_noise: float, kappa: float, grid,
                n_samples: int, sampler: GaussianSampler,
                field_id: str = "two-basin") -> DemoCurves:
    """Compute the three demo curves on a grid.

    Refuses (CertificateError) unless alpha * kappa >= 1 / sigma_noise^2,
    reporting the margin.  All grid points share one perturbation draw
    (common random numbers); the smoothed quadratic part is added in
    closed form.
    """
    if not (sigma_noise > 0.0 and kappa > 0.0):
        raise ContractError("sigma and kappa must be positive")
    if n_samples < 2:
        raise ContractError("need at least 2 samples")
    model = isotropic_model(alpha, sigma_noise**2, kappa, dim=1)
    cert = check_convexity_certificate(model)
    if not cert.holds:
        raise CertificateError(
            "refusing: alpha*kappa >= 1/sigma^2 fails "
            f"(margin {cert.margin:.6g}, tolerance {cert.tol:.3g}); "
            "raise alpha or kappa, or widen sigma",
            report=cert,
        )
    raw = builtin_field(field_id)
    grid = np.asarray(grid, dtype=float)
    draws = sigma_noise * sampler.normal(n_samples)

    objective = np.empty(grid.size)
    smoothed = np.empty(grid.size)
    convexified = np.empty(grid.size)
    std_err = np.empty(grid.size)
    for i, th in enumerate(grid):
        quad = 0.5 * kappa * th**2
        vals = raw.value(th + draws)
        objective[i] = float(raw.value(np.array([th]))[0]) + quad
        smoothed[i] = float(vals.mean()) + quad + 0.5 * kappa * sigma_noise**2
        lme, se = log_mean_exp(alpha * vals)
        convexified[i] = lme / alpha + quad
        std_err[i] = se / alpha
    return DemoCurves(theta=grid, objective=objective, smoothed=smoothed,
                      convexified=convexified, convexified_std_err=std_err)


def uniform_grid(lo: float = -3.0, hi: float = 3.0, points: int = 121) -> np.ndarray:
    if points < 3:
        raise ContractError("grid needs at least 3 points")
    if not hi > lo:
        raise ContractError("grid upper end must exceed lower end")
    return np.linspace(lo, hi, int(points))
