"""Structured linear controller design via determinant maximization.

For a noiseless linear system s_{t+1} = A_t s_t + B_t y_t with s_1 = 0,
quadratic state costs 0.5 s' Q_t s and state feedback u_t = K_t s_t, the
risk-sensitive expectation E[exp(alpha J(K))] has a closed form: with the
block trajectory map M (x = M y), S = blockdiag(inv(Sigma_t)),
R = blockdiag(R_t), Q = blockdiag(Q_t) and K placed block-diagonally,

    W(K) = S - S K M - M' K' S - M' (K' (alpha R - S) K + alpha Q) M,

the expectation is det(W)^(-1/2) / sqrt(prod det Sigma_t) when W > 0 and
+inf otherwise.  Minimizing the expectation is therefore the program

    maximize log det W(K)  subject to  W(K) >= 0,

which is concave in K whenever alpha R >= S.  synthesize() runs projected
gradient ascent with step backtracking; the log det's own blow-up near a
singular W acts as the barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .csvio import read_float_table, write_csv
from .errors import ContractError
from .objective import psd_tolerance
from .sampling import as_covariance
from .solver import FeasibleSet


@dataclass
class LinearSystem:
    """Time-varying linear system with quadratic costs and control noise.

    ``A[t-1]`` (n x n) and ``B[t-1]`` (n x m) define
    s_{t+1} = A_t s_t + B_t y_t for t = 1..N-1; ``Q[t-1]`` (n x n, PSD)
    weights the state cost at t = 1..N; ``R[t-1]`` (m x m) and
    ``sigma[t-1]`` (m x m, PD) are the control cost and noise at
    t = 1..N-1.
    """

    A: list
    B: list
    Q: list
    R: list
    sigma: list
    horizon: int

    def __post_init__(self):
        N = self.horizon
        if N < 2:
            raise ContractError("horizon must be >= 2")
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A]
        self.B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B]
        self.Q = [as_covariance(q) for q in self.Q]
        self.R = [as_covariance(r) for r in self.R]
        self.sigma = [as_covariance(s) for s in self.sigma]
        if len(self.A) != N - 1 or len(self.B) != N - 1:
            raise ContractError(f"need {N - 1} A and B matrices")
        if len(self.Q) != N:
            raise ContractError(f"need {N} state cost matrices")
        if len(self.R) != N - 1 or len(self.sigma) != N - 1:
            raise ContractError(f"need {N - 1} control cost and noise matrices")
        n, m = self.B[0].shape
        for t in range(N - 1):
            if self.A[t].shape != (n, n):
                raise ContractError(f"A at t={t + 1} must be {n}x{n}")
            if self.B[t].shape != (n, m):
                raise ContractError(f"B at t={t + 1} must be {n}x{m}")
            if self.R[t].shape != (m, m) or self.sigma[t].shape != (m, m):
                raise ContractError(f"R and sigma at t={t + 1} must be {m}x{m}")
        for t in range(N):
            if self.Q[t].shape != (n, n):
                raise ContractError(f"Q at t={t} must be {n}x{n}")
            w = np.linalg.eigvalsh(self.Q[t])
            if w[0] < -1e-10 * (1.0 + abs(w[-1])):
                raise ContractError(f"Q at t={t + 1} is not PSD")

    @property
    def state_dim(self) -> int:
        return self.B[0].shape[0]

    @property
    def control_dim(self) -> int:
        return self.B[0].shape[1]


@dataclass
class BlockOperators:
    """Stacked trajectory-space operators of a linear system."""

    traj_map: np.ndarray      # M, (N n) x ((N-1) m); x = M y, first block row 0
    noise_weight: np.ndarray  # S = blockdiag(inv(Sigma_t))
    control_cost: np.ndarray  # R = blockdiag(R_t)
    state_cost: np.ndarray    # Q = blockdiag(Q_t)
    state_dim: int
    control_dim: int
    horizon: int

    def place_gains(self, gains) -> np.ndarray:
        """Block placement of K_t into the m(N-1) x nN gain operator."""
        n, m, N = self.state_dim, self.control_dim, self.horizon
        gains = [np.atleast_2d(np.asarray(k, dtype=float)) for k in gains]
        if len(gains) != N - 1:
            raise ContractError(f"need {N - 1} gain matrices")
        K = np.zeros((m * (N - 1), n * N))
        for t in range(N - 1):
            if gains[t].shape != (m, n):
                raise ContractError(f"gain at t={t + 1} must be {m}x{n}")
            K[t * m:(t + 1) * m, t * n:(t + 1) * n] = gains[t]
        return K


def build_block_operators(sys: LinearSystem) -> BlockOperators:
    """Assemble the block trajectory map and the block-diagonal weights.

    Block (i, j) of the trajectory map is (A_{i-1} ... A_{j+1}) B_j for
    i > j and zero otherwise; the first block row is zero because
    s_1 = 0.
    """
    N, n, m = sys.horizon, sys.state_dim, sys.control_dim
    M = np.zeros((N * n, (N - 1) * m))
    for j in range(1, N):           # control index
        block = sys.B[j - 1]
        M[j * n:(j + 1) * n, (j - 1) * m:j * m] = block
        for i in range(j + 2, N + 1):  # state index i > j+1
            block = sys.A[i - 2] @ block
            M[(i - 1) * n:i * n, (j - 1) * m:j * m] = block

    def blockdiag(mats):
        size = sum(b.shape[0] for b in mats)
        out = np.zeros((size, size))
        pos = 0
        for b in mats:
            out[pos:pos + b.shape[0], pos:pos + b.shape[0]] = b
            pos += b.shape[0]
        return out

    noise_weight = blockdiag([np.linalg.inv(s) for s in sys.sigma])
    noise_weight = 0.5 * (noise_weight + noise_weight.T)
    return BlockOperators(
        traj_map=M,
        noise_weight=noise_weight,
        control_cost=blockdiag(sys.R),
        state_cost=blockdiag(sys.Q),
        state_dim=n,
        control_dim=m,
        horizon=N,
    )


@dataclass
class DetMaxResult:
    """Objective value, feasibility, and the W matrix at one gain setting."""

    value: float            # log det W, -inf when W has a nonpositive eigenvalue
    W: np.ndarray
    feasible: bool          # min eigenvalue >= -tol (expectation finite up to tol)
    min_eig: float
    convexity_advisory: bool  # whether alpha R >= S held (concavity of log det W)


def _w_matrix(blocks: BlockOperators, alpha: float, gains) -> np.ndarray:
    K = blocks.place_gains(gains)
    M, S = blocks.traj_map, blocks.noise_weight
    SKM = S @ K @ M
    inner = K.T @ (alpha * blocks.control_cost - S) @ K + alpha * blocks.state_cost
    W = S - SKM - SKM.T - M.T @ inner @ M
    return 0.5 * (W + W.T)


def detmax_objective(sys: LinearSystem, alpha: float, gains,
                     blocks: Optional[BlockOperators] = None) -> DetMaxResult:
    """log det W(K) with the feasibility flag W(K) >= 0.

    The value is -inf when any eigenvalue is nonpositive; the feasible
    flag tolerates eigenvalues down to -tol (scale-relative), matching
    the case split where an indefinite W makes the expectation +inf.
    """
    if blocks is None:
        blocks = build_block_operators(sys)
    alpha = float(alpha)
    if not alpha > 0.0:
        raise ContractError("alpha must be positive")
    W = _w_matrix(blocks, alpha, gains)
    w = np.linalg.eigvalsh(W)
    tol = psd_tolerance(float(np.linalg.eigvalsh(alpha * blocks.control_cost)[-1]),
                        float(np.linalg.eigvalsh(blocks.noise_weight)[-1]))
    value = float(np.sum(np.log(w))) if w[0] > 0.0 else -math.inf
    adv = float(np.linalg.eigvalsh(alpha * blocks.control_cost - blocks.noise_weight)[0])
    return DetMaxResult(value=value, W=W, feasible=bool(w[0] >= -tol),
                        min_eig=float(w[0]), convexity_advisory=adv >= -tol)


def detmax_gradient(sys: LinearSystem, alpha: float, gains,
                    blocks: Optional[BlockOperators] = None) -> list:
    """Gradient of log det W with respect to each K_t (exact, via W^-1).

    d log det W = -2 [ S W^-1 M' + (alpha R - S) K M W^-1 M' ], with the
    (t, t) block extracted for each gain.
    """
    if blocks is None:
        blocks = build_block_operators(sys)
    W = _w_matrix(blocks, alpha, gains)
    M, S = blocks.traj_map, blocks.noise_weight
    K = blocks.place_gains(gains)
    W_inv = np.linalg.inv(W)
    W_inv = 0.5 * (W_inv + W_inv.T)
    full = -2.0 * (S @ W_inv @ M.T
                   + (alpha * blocks.control_cost - S) @ K @ M @ W_inv @ M.T)
    n, m, N = blocks.state_dim, blocks.control_dim, blocks.horizon
    return [full[t * m:(t + 1) * m, t * n:(t + 1) * n].copy() for t in range(N - 1)]


def closed_form_expectation(sys: LinearSystem, alpha: float, gains,
                            blocks: Optional[BlockOperators] = None) -> float:
    """E[exp(alpha J(K))] in closed form: exp(-(log det W + sum log det Sigma_t)/2).

    The Gaussian normalizer c = sqrt((2 pi)^{m(N-1)} prod det Sigma_t)
    cancels the (2 pi) powers of the integral, leaving the determinant
    ratio; everything is computed in log form.  Returns +inf when W is
    not positive definite.
    """
    res = detmax_objective(sys, alpha, gains, blocks=blocks)
    if res.value == -math.inf:
        return math.inf
    log_det_sigmas = 0.0
    for s in sys.sigma:
        sign, logdet = np.linalg.slogdet(s)
        if sign <= 0:
            raise ContractError("control noise covariance must be positive definite")
        log_det_sigmas += logdet
    return math.exp(-0.5 * (res.value + log_det_sigmas))


@dataclass
class SynthesisConfig:
    max_iters: int = 300
    step0: float = 1.0
    grad_tol: float = 1e-9
    step_tol: float = 1e-14
    backtrack: float = 0.5


@dataclass
class SynthesisReport:
    gains: list
    objective: float
    success: bool
    converged: bool
    iterations: int
    grad_norm: float
    convexity_advisory: bool
    message: str = ""


def synthesize(sys: LinearSystem, alpha: float, structure: Optional[list] = None,
               feasible: Optional[FeasibleSet] = None,
               config: Optional[SynthesisConfig] = None) -> SynthesisReport:
    """Maximize log det W over structured gains by projected gradient ascent.

    ``structure`` is an optional list of (m x n) boolean masks, True
    where the entry is free; masked (False) entries are held at zero.
    ``feasible`` optionally projects the stacked free gains.  Steps are
    halved until W stays positive definite and the objective improves.
    Starts at K = 0; if that is infeasible the report flags failure.
    """
    blocks = build_block_operators(sys)
    cfg = config or SynthesisConfig()
    N, n, m = sys.horizon, sys.state_dim, sys.control_dim
    if structure is None:
        masks = [np.ones((m, n), dtype=bool) for _ in range(N - 1)]
    else:
        masks = [np.asarray(mk, dtype=bool) for mk in structure]
        if len(masks) != N - 1 or any(mk.shape != (m, n) for mk in masks):
            raise ContractError(f"structure needs {N - 1} boolean masks of shape {(m, n)}")

    def apply_constraints(gains):
        gains = [k * mk for k, mk in zip(gains, masks)]
        if feasible is not None:
            from .control import stack_gains, unstack_gains  # local to avoid cycle

            vec = feasible.project(stack_gains(gains))
            gains = unstack_gains(vec, N - 1, m, n)
            gains = [k * mk for k, mk in zip(gains, masks)]
        return gains

    gains = apply_constraints([np.zeros((m, n)) for _ in range(N - 1)])
    res = detmax_objective(sys, alpha, gains, blocks=blocks)
    if res.min_eig <= 0.0:
        return SynthesisReport(gains=gains, objective=res.value, success=False,
                               converged=False, iterations=0, grad_norm=math.nan,
                               convexity_advisory=res.convexity_advisory,
                               message="no feasible start: W(0) is not positive definite")

    value = res.value
    advisory = res.convexity_advisory
    step = cfg.step0
    converged = False
    grad_norm = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = detmax_gradient(sys, alpha, gains, blocks=blocks)
        grad = [g * mk for g, mk in zip(grad, masks)]
        grad_norm = math.sqrt(sum(float(np.sum(g**2)) for g in grad))
        if grad_norm <= cfg.grad_tol * (1.0 + abs(value)):
            converged = True
            break
        step = min(cfg.step0, step / cfg.backtrack)  # allow the step to regrow
        accepted = False
        while step > cfg.step_tol:
            cand = apply_constraints([k + step * g for k, g in zip(gains, grad)])
            cand_res = detmax_objective(sys, alpha, cand, blocks=blocks)
            if cand_res.min_eig > 0.0 and cand_res.value > value:
                gains, value = cand, cand_res.value
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            converged = grad_norm <= math.sqrt(cfg.grad_tol) * (1.0 + abs(value))
            break
    return SynthesisReport(gains=gains, objective=value, success=True,
                           converged=converged, iterations=it, grad_norm=grad_norm,
                           convexity_advisory=advisory)


def write_gains_csv(directory, gains) -> None:
    """One file per step, K_01.csv, K_02.csv, ...; rows are matrix rows.

    The header row names the columns col_0..col_{q-1}; the step index
    lives in the filename.
    """
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, k in enumerate(gains, start=1):
        k = np.atleast_2d(np.asarray(k, dtype=float))
        header = [f"col_{j}" for j in range(k.shape[1])]
        write_csv(directory / f"K_{t:02d}.csv", k, header=header)


def read_gains_csv(directory) -> list:
    """Read gains written by :func:`write_gains_csv`, ordered by step."""
    from pathlib import Path

    directory = Path(directory)
    paths = sorted(directory.glob("K_*.csv"))
    if not paths:
        raise ContractError(f"no gain files K_*.csv found in {directory}")
    gains = []
    for path in paths:
        _, rows = read_float_table(path, header=True)
        gains.append(np.array(rows))
    return gains
