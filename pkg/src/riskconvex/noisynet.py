"""Noisy-layer neural network training posed as a control problem.

Each layer is a time step: activations are the state, weight matrices
are the per-step gains, and the layer inputs carry Gaussian exploration
noise, s_{t+1} = tanh(K_t s_t + w_t), w_t ~ N(0, sigma_t^2 I).  Training
examples enter through the initial-state distribution (input activations
plus the regression target carried in trailing state slots the dynamics
pass through), and the training objective is

    E[exp(alpha * (loss(target, s_N) + sum_t 0.5 c_t ||K_t s_t||^2))],

the standard trajectory cost with quadratic control weight R_t = c_t I.
The boundary choice c_t = 1 / (alpha sigma_t^2) makes the per-step
certificate alpha R_t >= inv(Sigma_t) hold with margin zero; smaller
penalties void it and training refuses unless forced.

All layers share one internal width (the max declared width); narrower
declared layers simply leave trailing slots unused.  Unused first-layer
input columns see identically zero features and keep zero gradient, and
unused output rows are driven to zero by the control penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import (
    ControlCost,
    ControlRiskModel,
    Dynamics,
    Policy,
    check_control_certificate,
    train_policy,
)
from .csvio import write_csv
from .datasets import Dataset
from .errors import CertificateError, ContractError
from .sampling import GaussianSampler
from .solver import FeasibleSet, SolverConfig
from .synthesis import read_gains_csv, write_gains_csv


@dataclass
class NoisyNetConfig:
    """Architecture, per-layer noise, and the risk/penalty coupling.

    ``widths`` lists input, hidden..., output sizes; ``noise_scales``
    gives sigma_t per layer.  ``penalty_weights`` (c_t, the quadratic
    weight on layer pre-activations) defaults to the certificate
    boundary 1 / (alpha sigma_t^2).  ``loss_bound`` clamps the terminal
    squared error with the smooth soft-min so the exponent stays bounded.
    """

    widths: list
    alpha: float
    noise_scales: list
    penalty_weights: Optional[list] = None
    loss_bound: float = 0.25

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ContractError("widths must list at least input and output sizes, all >= 1")
        if not self.alpha > 0.0:
            raise ContractError("alpha must be positive")
        self.noise_scales = [float(s) for s in self.noise_scales]
        if len(self.noise_scales) != self.n_layers:
            raise ContractError(f"need {self.n_layers} noise scales")
        if any(s <= 0.0 for s in self.noise_scales):
            raise ContractError("noise scales must be positive")
        if self.penalty_weights is None:
            self.penalty_weights = [1.0 / (self.alpha * s**2) for s in self.noise_scales]
        self.penalty_weights = [float(c) for c in self.penalty_weights]
        if len(self.penalty_weights) != self.n_layers:
            raise ContractError(f"need {self.n_layers} penalty weights")
        if any(c < 0.0 for c in self.penalty_weights):
            raise ContractError("penalty weights must be nonnegative")
        if not self.loss_bound > 0.0:
            raise ContractError("loss_bound must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def internal_width(self) -> int:
        return max(self.widths)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def certificate_margins(self) -> np.ndarray:
        """Per-layer margins alpha c_t - 1 / sigma_t^2 (isotropic)."""
        return np.array([self.alpha * c - 1.0 / s**2
                         for c, s in zip(self.penalty_weights, self.noise_scales)])


def _embed(cfg: NoisyNetConfig, X: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Initial states: activations = padded input, trailing slots = target."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float).reshape(X.shape[0], -1))
    w = cfg.internal_width
    s = np.zeros((X.shape[0], w + cfg.output_dim))
    s[:, :cfg.input_dim] = X
    s[:, w:] = targets
    return s


def build_control_problem(cfg: NoisyNetConfig, dataset: Dataset):
    """(dynamics, cost, initial policy, risk model) for a dataset.

    The dataset rows are the disturbance distribution: the initial-state
    sampler draws a uniformly random example per rollout.
    """
    w = cfg.internal_width
    n = w + cfg.output_dim
    L = cfg.n_layers
    mbar = cfg.loss_bound
    init_states = _embed(cfg, dataset.X, dataset.y)

    def step(s, y, xi, t):
        act = np.tanh(y)
        tail = s[..., w:]
        return np.concatenate([act, tail], axis=-1)

    def jac_state(s, y, xi, t):
        base = np.zeros(s.shape[:-1] + (n, n))
        for j in range(cfg.output_dim):
            base[..., w + j, w + j] = 1.0
        return base

    def jac_control(s, y, xi, t):
        base = np.zeros(s.shape[:-1] + (n, w))
        d = 1.0 - np.tanh(y) ** 2
        idx = np.arange(w)
        base[..., idx, idx] = d
        return base

    def features(s, t):
        return s[..., :w]

    def features_jacobian(s, t):
        base = np.zeros(s.shape[:-1] + (w, n))
        idx = np.arange(w)
        base[..., idx, idx] = 1.0
        return base

    def state_cost(s, t):
        if t <= L:
            return np.zeros(s.shape[:-1]) if np.ndim(s) > 1 else 0.0
        err = s[..., :cfg.output_dim] - s[..., w:]
        se = np.sum(err**2, axis=-1)
        return mbar * np.tanh(se / mbar)

    def state_cost_grad(s, t):
        g = np.zeros_like(s)
        if t <= L:
            return g
        err = s[..., :cfg.output_dim] - s[..., w:]
        se = np.sum(err**2, axis=-1)
        scale = 1.0 / np.cosh(se / mbar) ** 2
        g[..., :cfg.output_dim] = (2.0 * scale)[..., None] * err
        g[..., w:] = -(2.0 * scale)[..., None] * err
        return g

    def init_state_batch(rng, b):
        idx = rng.integers(0, init_states.shape[0], size=b)
        return init_states[idx]

    def init_state(rng):
        return init_states[int(rng.integers(0, init_states.shape[0]))]

    dyn = Dynamics(step=step, state_dim=n, control_dim=w, disturbance_dim=0,
                   horizon=L + 1, jacobian_state=jac_state,
                   jacobian_control=jac_control, init_state=init_state,
                   init_state_batch=init_state_batch, vectorized=True)
    cost = ControlCost(state_cost=state_cost,
                       control_weights=[c * np.eye(w) for c in cfg.penalty_weights],
                       bound=mbar, state_cost_grad=state_cost_grad, vectorized=True)
    policy = Policy(gains=[np.zeros((w, w)) for _ in range(L)], features=features,
                    features_jacobian=features_jacobian, vectorized=True)
    model = ControlRiskModel(alpha=cfg.alpha,
                             control_noise=[s**2 * np.eye(w) for s in cfg.noise_scales])
    return dyn, cost, policy, model


def predict(cfg: NoisyNetConfig, weights, X: np.ndarray) -> np.ndarray:
    """Noise-free forward pass (the mean network) on stacked inputs."""
    w = cfg.internal_width
    act = np.zeros((np.atleast_2d(np.asarray(X, dtype=float)).shape[0], w))
    act[:, :cfg.input_dim] = np.atleast_2d(np.asarray(X, dtype=float))
    for K in weights:
        act = np.tanh(act @ np.asarray(K, dtype=float).T)
    out = act[:, :cfg.output_dim]
    return out[:, 0] if cfg.output_dim == 1 else out


def mse(cfg: NoisyNetConfig, weights, ds: Dataset) -> float:
    preds = predict(cfg, weights, ds.X)
    return float(np.mean((preds - ds.y) ** 2))


@dataclass
class NoisyNetReport:
    weights: list
    curve: list                      # rows (evaluations, train_loss, test_loss)
    certificate_margins: np.ndarray
    certified: bool
    final_train_mse: float
    final_test_mse: float

    def write_curve_csv(self, path) -> None:
        write_csv(path, self.curve, header=["evaluations", "train_loss", "test_loss"])


def train_noisy_net(train: Dataset, cfg: NoisyNetConfig, sampler: GaussianSampler,
                    iterations: int = 1500, batch: int = 128, radius: float = 6.0,
                    eval_every: int = 100, test: Optional[Dataset] = None,
                    force: bool = False, method: str = "derivative_free",
                    averaging: bool = False, init_scale: float = 0.05) -> NoisyNetReport:
    """Train the noisy net with a policy-gradient estimator.

    Refuses with :class:`CertificateError` when any per-layer margin
    alpha c_t - 1/sigma_t^2 is negative, unless ``force`` is set (the
    report then records the void certificate).  The learning curve logs
    the mean-network train/test MSE every ``eval_every`` iterations,
    indexed by the cumulative number of network rollouts.

    The all-zero weight vector is always a stationary point of the
    exponentiated objective (zero-mean layer noise through an odd
    transfer makes every gradient component vanish there), so training
    starts from a small random init of scale ``init_scale`` drawn from a
    derived stream.
    """
    if train.n_features != cfg.input_dim:
        raise ContractError(
            f"dataset has {train.n_features} features, config expects {cfg.input_dim}")
    margins = cfg.certificate_margins()
    tol = 1e-10 * (1.0 + float(np.max(np.abs(margins))))
    certified = bool(np.all(margins >= -tol))
    if not certified and not force:
        raise CertificateError(
            "refusing: per-layer certificate alpha*penalty >= 1/sigma^2 fails "
            f"(worst margin {margins.min():.6g}); pass force to train anyway "
            "with a void certificate",
            report=margins,
        )
    dyn, cost, policy0, model = build_control_problem(cfg, train)
    stacked_dim = cfg.n_layers * cfg.internal_width**2
    constraint = FeasibleSet.ball(np.zeros(stacked_dim), radius)
    init_stream, train_stream = sampler.split(2)
    if init_scale > 0.0:
        w = cfg.internal_width
        policy0 = policy0.with_gains(
            [init_scale * init_stream.normal((w, w)) for _ in range(cfg.n_layers)])
    test_ds = test if test is not None and test.size > 0 else train

    curve = []

    def record(i, theta, theta_avg):
        if i % eval_every == 0 or i == iterations:
            vec = theta_avg if averaging else theta
            ws = _unstack(cfg, vec)
            curve.append((i * batch, mse(cfg, ws, train), mse(cfg, ws, test_ds)))

    config = SolverConfig(iterations=iterations, batch=batch, averaging=averaging)
    trained, report = train_policy(dyn, cost, policy0, model, method, config,
                                   constraint, train_stream, callback=record)
    weights = [k.copy() for k in trained.gains]
    final_train = mse(cfg, weights, train)
    final_test = mse(cfg, weights, test_ds)
    if not curve or curve[-1][0] != iterations * batch:
        curve.append((iterations * batch, final_train, final_test))
    return NoisyNetReport(weights=weights, curve=curve,
                          certificate_margins=margins, certified=certified,
                          final_train_mse=final_train, final_test_mse=final_test)


def _unstack(cfg: NoisyNetConfig, vec: np.ndarray) -> list:
    w = cfg.internal_width
    return [vec[i * w * w:(i + 1) * w * w].reshape(w, w) for i in range(cfg.n_layers)]


def save_weights(directory, weights) -> None:
    write_gains_csv(directory, weights)


def load_weights(directory) -> list:
    return read_gains_csv(directory)
