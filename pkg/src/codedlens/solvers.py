"""Iterative reconstruction baselines: GD, Nesterov, FISTA, ADMM-TV, APGD.

The forward operator is circular convolution with the (centered) PSF, so
its exact Lipschitz constant max|P(u,v)|^2 is available from the spectrum
and the ADMM x-update diagonalizes in the frequency domain. All solvers
start from zero and are fully deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

from codedlens.errors import ConfigError, DivergenceError, SizingError
from codedlens.optics import adjoint_operator, forward_operator


@dataclass
class InverseProblem:
    measurement: np.ndarray
    psf: object
    nonneg: bool = False
    tv_weight: float = 0.0
    l1_weight: float = 0.0

    def __post_init__(self):
        self.measurement = np.asarray(self.measurement, dtype=np.float64)
        if self.tv_weight < 0 or self.l1_weight < 0:
            raise ConfigError("regularization weights must be >= 0")


@dataclass
class SolverConfig:
    max_iters: int = 100
    step_size: float | str = "auto"
    rho: float = 1.0
    tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.step_size != "auto" and self.step_size <= 0:
            raise ConfigError("step_size must be > 0")


@dataclass
class SolverResult:
    estimate: np.ndarray
    objective_trace: list
    iterations_run: int
    converged: bool
    extras: dict = field(default_factory=dict)


def _grad_h(x):
    return np.roll(x, -1, axis=1) - x


def _grad_v(x):
    return np.roll(x, -1, axis=0) - x


def total_variation(x):
    """Anisotropic TV with circular wrap."""
    return float(np.sum(np.abs(_grad_h(x))) + np.sum(np.abs(_grad_v(x))))


def lipschitz_constant(problem):
    """Exact Lipschitz constant of the smooth data term: max |P(u,v)|^2."""
    p = problem.psf.transfer(problem.measurement.shape)
    return float(np.max(np.abs(p) ** 2))


def _step_size(problem, cfg):
    if cfg.step_size == "auto":
        return 1.0 / lipschitz_constant(problem)
    return float(cfg.step_size)


def data_objective(x, problem):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != problem.measurement.shape:
        raise SizingError(f"extent mismatch: {x.shape} vs {problem.measurement.shape}")
    resid = forward_operator(x, problem.psf) - problem.measurement
    obj = 0.5 * float(np.sum(resid ** 2))
    if problem.tv_weight > 0:
        obj += problem.tv_weight * total_variation(x)
    if problem.l1_weight > 0:
        obj += problem.l1_weight * float(np.sum(np.abs(x)))
    return obj


def data_gradient(x, problem):
    """Gradient of the smooth part only: A^T(Ax - b)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != problem.measurement.shape:
        raise SizingError(f"extent mismatch: {x.shape} vs {problem.measurement.shape}")
    return adjoint_operator(forward_operator(x, problem.psf) - problem.measurement,
                            problem.psf)


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _check_divergence(trace, initial, eta):
    if trace and trace[-1] > 10.0 * max(initial, 1e-300):
        raise DivergenceError(f"objective grew 10x over its initial value "
                              f"(step size {eta:.3e} too large?)")


def solve_gd(problem, cfg):
    """Vanilla gradient descent on the smooth data term."""
    if problem.tv_weight != 0 or problem.l1_weight != 0:
        raise ConfigError("solve_gd handles the smooth-only problem; "
                          "use fista/admm for regularized objectives")
    eta = _step_size(problem, cfg)
    x = np.zeros_like(problem.measurement)
    f0 = data_objective(x, problem)
    trace = []
    converged = False
    for _ in range(cfg.max_iters):
        x = x - eta * data_gradient(x, problem)
        if problem.nonneg:
            x = np.maximum(x, 0.0)
        trace.append(data_objective(x, problem))
        _check_divergence(trace, f0, eta)
        if cfg.tol > 0 and len(trace) >= 2:
            prev = trace[-2]
            if abs(trace[-1] - prev) <= cfg.tol * max(abs(prev), 1e-300):
                converged = True
                break
    return SolverResult(x, trace, len(trace), converged)


def _accelerated(problem, cfg, prox):
    """Shared Nesterov/FISTA/APGD loop; prox applies the nonsmooth step."""
    eta = _step_size(problem, cfg)
    x = np.zeros_like(problem.measurement)
    x_prev = x.copy()
    t = 1.0
    f0 = data_objective(np.zeros_like(x), problem)
    trace = []
    converged = False
    for _ in range(cfg.max_iters):
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = x + ((t - 1.0) / t_next) * (x - x_prev)
        x_prev = x
        x = prox(y - eta * data_gradient(y, problem), eta)
        t = t_next
        trace.append(data_objective(x, problem))
        _check_divergence(trace, f0, eta)
        if cfg.tol > 0 and len(trace) >= 2:
            prev = trace[-2]
            if abs(trace[-1] - prev) <= cfg.tol * max(abs(prev), 1e-300):
                converged = True
                break
    return SolverResult(x, trace, len(trace), converged)


def solve_nesterov(problem, cfg):
    """Nesterov-accelerated gradient descent (smooth-only)."""
    if problem.tv_weight != 0 or problem.l1_weight != 0:
        raise ConfigError("solve_nesterov handles the smooth-only problem")

    def prox(v, eta):
        return np.maximum(v, 0.0) if problem.nonneg else v

    return _accelerated(problem, cfg, prox)


def solve_fista(problem, cfg):
    """FISTA: soft-threshold by eta*mu, then nonnegative clip if requested."""
    if problem.tv_weight != 0:
        raise ConfigError("solve_fista handles the l1 problem; use admm for TV")
    mu = problem.l1_weight

    def prox(v, eta):
        if mu > 0:
            v = _soft(v, eta * mu)
        if problem.nonneg:
            v = np.maximum(v, 0.0)
        return v

    return _accelerated(problem, cfg, prox)


def solve_apgd(problem, cfg):
    """Accelerated proximal GD with nonnegativity projection as the prox."""
    if not problem.nonneg:
        raise ConfigError("solve_apgd requires nonneg=True")
    if problem.tv_weight != 0 or problem.l1_weight != 0:
        raise ConfigError("solve_apgd handles the projection-only problem")

    def prox(v, eta):
        return np.maximum(v, 0.0)

    return _accelerated(problem, cfg, prox)


def solve_admm_tv(problem, cfg):
    """ADMM with anisotropic TV; the x-update is exact in the frequency domain.

    Splittings: z = Dx (soft-threshold update) and w = x (nonnegativity
    projection, identity when the constraint is off), with scaled duals.
    """
    if problem.tv_weight <= 0:
        raise ConfigError("solve_admm_tv requires tv_weight > 0")
    if cfg.rho <= 0:
        raise ConfigError(f"rho must be > 0, got {cfg.rho}")
    lam, rho = problem.tv_weight, cfg.rho
    b = problem.measurement
    h, w = b.shape
    p = problem.psf.transfer((h, w))
    atb = np.conj(p) * np.fft.fft2(b)
    ku = np.fft.fftfreq(w)
    kv = np.fft.fftfreq(h)
    dh = np.exp(2j * np.pi * ku)[None, :] - 1.0
    dv = np.exp(2j * np.pi * kv)[:, None] - 1.0
    denom = np.abs(p) ** 2 + rho * (np.abs(dh) ** 2 + np.abs(dv) ** 2) + rho
    x = np.zeros_like(b)
    zh = np.zeros_like(b)
    zv = np.zeros_like(b)
    uh = np.zeros_like(b)
    uv = np.zeros_like(b)
    wv = np.zeros_like(b)
    uw = np.zeros_like(b)
    trace = []
    primal = []
    dual = []
    converged = False
    for _ in range(cfg.max_iters):
        rhs = (atb
               + rho * np.conj(dh) * np.fft.fft2(zh - uh)
               + rho * np.conj(dv) * np.fft.fft2(zv - uv)
               + rho * np.fft.fft2(wv - uw))
        x = np.real(np.fft.ifft2(rhs / denom))
        gh, gv = _grad_h(x), _grad_v(x)
        zh_old, zv_old, w_old = zh, zv, wv
        zh = _soft(gh + uh, lam / rho)
        zv = _soft(gv + uv, lam / rho)
        wv = np.maximum(x + uw, 0.0) if problem.nonneg else x + uw
        uh = uh + gh - zh
        uv = uv + gv - zv
        uw = uw + x - wv
        primal.append(float(np.sqrt(np.sum((gh - zh) ** 2) + np.sum((gv - zv) ** 2)
                                    + np.sum((x - wv) ** 2))))
        dual.append(rho * float(np.sqrt(
            np.sum((_adj_h(zh - zh_old) + _adj_v(zv - zv_old) + (wv - w_old)) ** 2))))
        trace.append(data_objective(x, problem))
        if cfg.tol > 0 and primal[-1] <= cfg.tol and dual[-1] <= cfg.tol:
            converged = True
            break
    est = np.maximum(x, 0.0) if problem.nonneg else x
    return SolverResult(est, trace, len(trace), converged,
                        extras={"primal_residuals": primal, "dual_residuals": dual})


def _adj_h(x):
    return np.roll(x, 1, axis=1) - x


def _adj_v(x):
    return np.roll(x, 1, axis=0) - x


METHODS = {
    "gd": solve_gd,
    "nesterov": solve_nesterov,
    "fista": solve_fista,
    "admm": solve_admm_tv,
    "apgd": solve_apgd,
}
