"""Strongly convex local surrogates and their solvers.

Each agent replaces its non-convex local cost with a strongly convex
model built at the current iterate, adds the linear term carrying the
tracked gradient of everybody else's costs, adds the shared penalty, and
minimizes. Two model families are supported:

* full linearization (FL): keep only the local gradient plus a proximal
  term; closed forms exist for every supported penalty.
* partial linearization (PL): keep the convex loss, linearize the network
  inside it. With the squared loss this is a positive semidefinite
  quadratic built from per-sample Jacobians (a Gauss-Newton model); with
  the cross-entropy loss the sigmoid is kept outside the linearized
  pre-activation so the subproblem stays convex, and a small adaptive
  gradient loop solves it.

All solvers are pure functions of their inputs and safe to run
concurrently across agents.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .datasets import Dataset
from .mlp import NetArch, forward, jacobian_matrix, local_cost, local_gradient
from .objectives import GroupPenalty, L1Penalty, L2Penalty, Loss

__all__ = [
    "Linearization",
    "InnerSettings",
    "SurrogateSpec",
    "QuadraticModel",
    "SolveResult",
    "soft_threshold",
    "fl_direction",
    "pl_quadratic_model",
    "pl_solve_ridge",
    "pl_solve_l1",
    "pl_solve_crossentropy",
    "solve_surrogate",
    "surrogate_value",
    "surrogate_smooth_value",
]


class Linearization(Enum):
    """How much of the local cost the surrogate keeps."""

    FULL = "fl"
    PARTIAL = "pl"


@dataclass(frozen=True)
class InnerSettings:
    """Iteration budget for the inexact inner solvers."""

    max_iter: int
    grad_tol: float
    step0: float = 0.1


# Defaults: the quadratic-program solver runs to a tight certificate, the
# cross-entropy inner loop is capped the way the experiments cap it.
L1_INNER = InnerSettings(max_iter=5000, grad_tol=1e-8)
CE_INNER = InnerSettings(max_iter=50, grad_tol=1e-6, step0=0.1)


@dataclass(frozen=True)
class SurrogateSpec:
    """One agent's surrogate family: strategy, loss, penalty, proximal weight.

    ``tau`` defaults to 0 where the penalty already makes the surrogate
    strongly convex (the l2 cases) and to 1.0 where a proximal term is
    required (FL with l1 or group penalties, PL with cross-entropy or l1).
    """

    strategy: Linearization
    loss: Loss
    reg: object
    tau: float | None = None
    inner: InnerSettings | None = None

    def __post_init__(self):
        if self.tau is None:
            # The l2 penalty already supplies strong convexity for the FL
            # closed form and the squared-loss PL quadratic.
            ridge_like = isinstance(self.reg, L2Penalty) and (
                self.strategy is Linearization.FULL or self.loss is Loss.SQUARED)
            object.__setattr__(self, "tau", 0.0 if ridge_like else 1.0)
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.inner is None:
            inner = CE_INNER if self.loss is Loss.CROSS_ENTROPY else L1_INNER
            object.__setattr__(self, "inner", inner)

        if self.strategy is Linearization.FULL:
            if isinstance(self.reg, (L1Penalty, GroupPenalty)) and self.tau <= 0:
                raise ValueError("FL with a nonsmooth penalty needs tau > 0 for strong convexity")
        elif self.strategy is Linearization.PARTIAL:
            if isinstance(self.reg, GroupPenalty):
                raise ValueError("PL with a group penalty is not implemented")
            if self.loss is Loss.CROSS_ENTROPY:
                if not isinstance(self.reg, L2Penalty):
                    raise ValueError("PL cross-entropy supports only the l2 penalty")
                if self.tau <= 0:
                    raise ValueError("PL cross-entropy needs tau > 0 for strong convexity")


@dataclass(frozen=True)
class QuadraticModel:
    """Gauss-Newton model of one agent's local cost: ``w'Aw - 2b'w`` plus constants."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise ValueError("A must be (Q, Q) and b (Q,)")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class SolveResult:
    """Solution of an inexact inner solve plus a cap-hit flag."""

    w: np.ndarray
    converged: bool
    iterations: int


def soft_threshold(z: np.ndarray, gamma: float) -> np.ndarray:
    """Componentwise shrinkage ``sign(z) * max(0, |z| - gamma)``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def fl_direction(grad_g: np.ndarray, pi: np.ndarray, w_now: np.ndarray, reg, tau: float = 1.0) -> np.ndarray:
    """Closed-form minimizer of the fully linearized surrogate.

    Parameters
    ----------
    grad_g : ndarray
        Gradient of the local cost at ``w_now``.
    pi : ndarray
        Tracked estimate of the other agents' summed gradients.
    w_now : ndarray
        Current iterate (enters through the proximal term).
    reg : L2Penalty, L1Penalty or GroupPenalty
        Shared penalty; selects the closed form.
    tau : float
        Proximal weight; ignored for the l2 penalty (whose curvature
        already makes the problem strongly convex), required positive
        otherwise.
    """
    if isinstance(reg, L2Penalty):
        return -(grad_g + pi) / reg.lam
    if tau <= 0:
        raise ValueError("tau must be positive for nonsmooth penalties")
    if isinstance(reg, L1Penalty):
        return soft_threshold(w_now - (grad_g + pi) / tau, reg.lam / tau)
    if isinstance(reg, GroupPenalty):
        reg.check_partition(len(w_now))
        a = grad_g + pi - tau * w_now
        out = np.zeros_like(a)
        for start, stop in reg.groups:
            block = a[start:stop]
            norm = float(np.linalg.norm(block))
            bound = reg.lam * np.sqrt(stop - start)
            if norm > bound:
                out[start:stop] = -block * (norm - bound) / (tau * norm)
        return out
    raise TypeError(f"unsupported penalty {type(reg).__name__}")


def pl_quadratic_model(arch: NetArch, w_now: np.ndarray, data: Dataset, pi: np.ndarray) -> QuadraticModel:
    """Build the squared-loss partial-linearization model at ``w_now``.

    With ``J_m`` the per-sample weight Jacobian and residuals
    ``r_m = d_m - f(w_now; x_m) + J_m' w_now`` the model is
    ``A = sum_m J_m J_m'`` (an outer-product Hessian approximation) and
    ``b = sum_m J_m r_m - pi / 2``. An empty dataset yields ``A = 0``.
    """
    q = arch.num_params
    if len(data) == 0:
        return QuadraticModel(np.zeros((q, q)), -0.5 * np.asarray(pi, dtype=float))
    jac = jacobian_matrix(arch, w_now, data.inputs)
    f = forward(arch, w_now, data.inputs).output
    residuals = data.targets - f + jac @ w_now
    a = jac.T @ jac
    a = 0.5 * (a + a.T)  # exact symmetry regardless of BLAS blocking
    b = jac.T @ residuals - 0.5 * np.asarray(pi, dtype=float)
    return QuadraticModel(a, b)


def pl_solve_ridge(model: QuadraticModel, lam: float) -> np.ndarray:
    """Solve ``(A + (lam/2) I) w = b`` by Cholesky factorization."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    m = model.A + (0.5 * lam) * np.eye(model.dim)
    if not np.all(np.isfinite(m)) or not np.all(np.isfinite(model.b)):
        raise ValueError("quadratic model has non-finite entries")
    return cho_solve(cho_factor(m, lower=True), model.b)


def _max_eigenvalue(m: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = m.shape[0]
    # Deterministic start with a small ramp so no eigenvector is missed
    # by symmetry.
    v = np.ones(n) + np.linspace(0.0, 1e-3, n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iters):
        u = m @ v
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            return 0.0
        v = u / norm
        if abs(norm - estimate) <= tol * max(1.0, norm):
            return norm
        estimate = norm
    return estimate


def pl_solve_l1(model: QuadraticModel, tau: float, lam: float, w_now: np.ndarray,
                settings: InnerSettings = L1_INNER) -> SolveResult:
    """Accelerated proximal gradient for the l1-penalized quadratic model.

    Minimizes ``w'(A + (tau/2) I) w - 2 (b + tau w_now / 2)' w + lam ||w||_1``
    with step ``1 / (2 L)``, ``L`` being the largest eigenvalue of
    ``2 (A + (tau/2) I)`` estimated by power iteration, and standard
    momentum. Stops when the prox-gradient-mapping norm falls below
    ``settings.grad_tol``; hitting the iteration cap returns the best
    iterate found, flagged as unconverged.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    m = model.A + (0.5 * tau) * np.eye(model.dim)
    c = model.b + 0.5 * tau * np.asarray(w_now, dtype=float)
    lip = 2.0 * _max_eigenvalue(m)
    if lip == 0.0:
        raise ValueError("quadratic model has no curvature; tau > 0 is required when A is zero")
    step = 1.0 / (2.0 * lip)

    def objective(w, mw):
        return float(w @ mw - 2.0 * (c @ w) + lam * np.abs(w).sum())

    x = np.asarray(w_now, dtype=float).copy()
    y = x.copy()
    t = 1.0
    mx = m @ x
    best_x, best_val = x.copy(), objective(x, mx)
    converged = False
    iterations = 0
    for k in range(settings.max_iter):
        iterations = k + 1
        grad_y = 2.0 * (m @ y - c)
        x_new = soft_threshold(y - step * grad_y, step * lam)
        mx_new = m @ x_new
        val = objective(x_new, mx_new)
        if val < best_val:
            best_x, best_val = x_new, val
        # Prox-gradient mapping at the accepted iterate.
        grad_x = 2.0 * (mx_new - c)
        mapped = (x_new - soft_threshold(x_new - step * grad_x, step * lam)) / step
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if float(np.linalg.norm(mapped)) < settings.grad_tol:
            converged = True
            best_x, best_val = x, val  # the certified point wins
            break
    return SolveResult(best_x, converged, iterations)


def _ce_linearized_parts(arch: NetArch, w_now: np.ndarray, data: Dataset):
    """Pre-activation values and Jacobians frozen at ``w_now``."""
    if arch.output_activation != "sigmoid":
        raise ValueError("the cross-entropy surrogate requires a sigmoid output neuron")
    if not np.all((data.targets == 0.0) | (data.targets == 1.0)):
        raise ValueError("cross-entropy targets must be 0 or 1")
    jac_l = jacobian_matrix(arch, w_now, data.inputs, preactivation=True)
    f_l0 = forward(arch, w_now, data.inputs).pre_activation
    return jac_l, np.asarray(f_l0, dtype=float)


def pl_solve_crossentropy(arch: NetArch, w_now: np.ndarray, data: Dataset, pi: np.ndarray,
                          reg: L2Penalty, tau: float, settings: InnerSettings = CE_INNER) -> SolveResult:
    """Adaptive-gradient inner solve of the cross-entropy surrogate.

    The sigmoid stays outside the linearized pre-activation, so the
    subproblem is convex (the composition of the cross-entropy loss with
    a sigmoid of an affine function). A diagonally adaptive gradient
    loop, warm-started at ``w_now`` with a backtracking safeguard, runs
    until the gradient norm drops below ``settings.grad_tol`` or the
    iteration cap; the best iterate found is returned either way, so the
    surrogate value never exceeds its warm-start value.
    """
    if not isinstance(reg, L2Penalty):
        raise ValueError("PL cross-entropy supports only the l2 penalty")
    if tau <= 0:
        raise ValueError("tau must be positive")
    w_now = np.asarray(w_now, dtype=float)
    pi = np.asarray(pi, dtype=float)
    q = arch.num_params

    if len(data) == 0:
        jac_l = np.zeros((0, q))
        f_l0 = np.zeros(0)
        d = np.zeros(0)
    else:
        jac_l, f_l0 = _ce_linearized_parts(arch, w_now, data)
        d = data.targets

    def value(w):
        u = f_l0 + jac_l @ (w - w_now)
        # softplus(u) - d*u equals the cross-entropy of sigmoid(u), stably.
        loss = float(np.sum(np.logaddexp(0.0, u) - d * u))
        prox = 0.5 * tau * float(np.dot(w - w_now, w - w_now))
        return loss + float(pi @ (w - w_now)) + reg.value(w) + prox

    def gradient(w):
        u = f_l0 + jac_l @ (w - w_now)
        sig = 1.0 / (1.0 + np.exp(-u))
        return jac_l.T @ (sig - d) + pi + reg.gradient(w) + tau * (w - w_now)

    x = w_now.copy()
    fx = value(x)
    best_x, best_val = x.copy(), fx
    acc = np.zeros(q)
    step = settings.step0
    converged = False
    iterations = 0
    for k in range(settings.max_iter):
        g = gradient(x)
        if float(np.linalg.norm(g)) < settings.grad_tol:
            converged = True
            break
        iterations = k + 1
        acc += g * g
        scale = np.sqrt(acc + 1e-8)
        cand = x - step * (g / scale)
        f_cand = value(cand)
        backtracks = 0
        while f_cand > fx and backtracks < 30:
            step *= 0.5
            cand = x - step * (g / scale)
            f_cand = value(cand)
            backtracks += 1
        if f_cand > fx:
            break  # no descent at the smallest safeguarded step
        x, fx = cand, f_cand
        if fx < best_val:
            best_x, best_val = x.copy(), fx
    return SolveResult(best_x, converged, iterations)


def solve_surrogate(spec: SurrogateSpec, arch: NetArch, data: Dataset, w_now: np.ndarray,
                    pi: np.ndarray, grad_now: np.ndarray | None = None) -> SolveResult:
    """Dispatch to the right solver for ``spec``.

    ``grad_now`` (the local gradient at ``w_now``) may be passed to spare
    the FL path a recomputation; it is ignored by the PL paths, which
    rebuild their models from per-sample Jacobians.
    """
    if spec.strategy is Linearization.FULL:
        if grad_now is None:
            grad_now = local_gradient(arch, w_now, data, spec.loss)
        w = fl_direction(grad_now, pi, w_now, spec.reg, spec.tau)
        return SolveResult(w, True, 0)

    if spec.loss is Loss.SQUARED:
        model = pl_quadratic_model(arch, w_now, data, pi)
        if isinstance(spec.reg, L2Penalty):
            if spec.tau > 0:
                # A positive proximal weight shifts the ridge system.
                shifted = QuadraticModel(model.A + (0.5 * spec.tau) * np.eye(model.dim),
                                         model.b + 0.5 * spec.tau * w_now)
                return SolveResult(pl_solve_ridge(shifted, spec.reg.lam), True, 0)
            return SolveResult(pl_solve_ridge(model, spec.reg.lam), True, 0)
        if isinstance(spec.reg, L1Penalty):
            return pl_solve_l1(model, spec.tau, spec.reg.lam, w_now, spec.inner)
        raise TypeError(f"unsupported penalty {type(spec.reg).__name__} for the PL strategy")

    if spec.loss is Loss.CROSS_ENTROPY:
        return pl_solve_crossentropy(arch, w_now, data, pi, spec.reg, spec.tau, spec.inner)
    raise ValueError(f"unsupported surrogate {spec!r}")


def surrogate_smooth_value(spec: SurrogateSpec, arch: NetArch, data: Dataset,
                           w: np.ndarray, w_now: np.ndarray) -> float:
    """Value of the smooth local model (penalty and linear term excluded).

    This is the strongly convex approximation of the local cost alone; at
    ``w = w_now`` its gradient must match the true local gradient, which
    the test suite checks by finite differences.
    """
    w = np.asarray(w, dtype=float)
    w_now = np.asarray(w_now, dtype=float)
    delta = w - w_now
    prox = 0.5 * spec.tau * float(np.dot(delta, delta))
    if spec.strategy is Linearization.FULL:
        g0 = local_cost(arch, w_now, data, spec.loss)
        grad0 = local_gradient(arch, w_now, data, spec.loss)
        return g0 + float(grad0 @ delta) + prox
    if spec.loss is Loss.SQUARED:
        if len(data) == 0:
            return prox
        jac = jacobian_matrix(arch, w_now, data.inputs)
        f0 = forward(arch, w_now, data.inputs).output
        f_lin = f0 + jac @ delta
        return float(np.sum((data.targets - f_lin) ** 2)) + prox
    if spec.loss is Loss.CROSS_ENTROPY:
        if len(data) == 0:
            return prox
        jac_l, f_l0 = _ce_linearized_parts(arch, w_now, data)
        u = f_l0 + jac_l @ delta
        return float(np.sum(np.logaddexp(0.0, u) - data.targets * u)) + prox
    raise ValueError(f"unsupported surrogate {spec!r}")


def surrogate_value(spec: SurrogateSpec, arch: NetArch, data: Dataset,
                    w: np.ndarray, w_now: np.ndarray, pi: np.ndarray) -> float:
    """Full surrogate objective: smooth model + tracked linear term + penalty."""
    w = np.asarray(w, dtype=float)
    w_now = np.asarray(w_now, dtype=float)
    smooth = surrogate_smooth_value(spec, arch, data, w, w_now)
    return smooth + float(np.asarray(pi, dtype=float) @ (w - w_now)) + spec.reg.value(w)
