"""One-stage AMFR-W time stepping with directional tridiagonal solves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .pde_grid import SplitOperators, _combine, rhs_and_time_derivatives

# kappa_N for N >= 4 (nu = kappa_N * N * theta). The published stability table
# is not reproduced here; 0.5 passed the large-step checks described in the README.
DEFAULT_KAPPA = 0.5


class SingularSystemError(ArithmeticError):
    pass


class ScheduleError(ValueError):
    pass


@njit(cache=True)
def _thomas_shared(lo, di, up, rhs):
    """Solve in place for every column of ``rhs`` (n, m) with shared bands.

    Returns 0 on success or ``1 + row`` of the first zero pivot.
    """
    n, m = rhs.shape
    cp = np.empty(n)
    denom = di[0]
    if denom == 0.0:
        return 1
    cp[0] = up[0] / denom
    inv = 1.0 / denom
    for q in range(m):
        rhs[0, q] *= inv
    for i in range(1, n):
        denom = di[i] - lo[i] * cp[i - 1]
        if denom == 0.0:
            return i + 1
        cp[i] = up[i] / denom
        inv = 1.0 / denom
        li = lo[i]
        for q in range(m):
            rhs[i, q] = (rhs[i, q] - li * rhs[i - 1, q]) * inv
    for i in range(n - 2, -1, -1):
        c = cp[i]
        for q in range(m):
            rhs[i, q] -= c * rhs[i + 1, q]
    return 0


@njit(cache=True)
def _thomas_columns(lo, di, up, rhs):
    """In-place solve where every column of ``rhs`` (n, m) has its own bands."""
    n, m = rhs.shape
    cp_all = np.empty((n, m))
    for q in range(m):
        if di[0, q] == 0.0:
            return 1
        cp_all[0, q] = up[0, q] / di[0, q]
        rhs[0, q] /= di[0, q]
    for i in range(1, n):
        for q in range(m):
            denom = di[i, q] - lo[i, q] * cp_all[i - 1, q]
            if denom == 0.0:
                return i + 1
            cp_all[i, q] = up[i, q] / denom
            rhs[i, q] = (rhs[i, q] - lo[i, q] * rhs[i - 1, q]) / denom
    for i in range(n - 2, -1, -1):
        for q in range(m):
            rhs[i, q] -= cp_all[i, q] * rhs[i + 1, q]
    return 0


@njit(cache=True)
def _directional_kernel(a1, a2, dvals, c2, c1, rhs3):
    """Solve ``(I - c2 A1 - c1 d_p A2) y = r`` for each leading slice ``p``.

    ``rhs3`` has shape (pre, n, post); ``dvals`` one coupling value per ``p``.
    Returns 0 or ``1 + p`` of the first singular slice.
    """
    pre, n, post = rhs3.shape
    lo = np.empty(n)
    di = np.empty(n)
    up = np.empty(n)
    for p in range(pre):
        cd = c1 * dvals[p]
        for i in range(n):
            lo[i] = -(c2 * a1[i, 0] + cd * a2[i, 0])
            di[i] = 1.0 - (c2 * a1[i, 1] + cd * a2[i, 1])
            up[i] = -(c2 * a1[i, 2] + cd * a2[i, 2])
        if _thomas_shared(lo, di, up, rhs3[p]) != 0:
            return p + 1
    return 0


def tridiag_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Thomas elimination for one or many tridiagonal systems.

    Bands have length ``n`` (``lower[0]`` and ``upper[-1]`` are ignored) and
    may carry a trailing batch dimension matching ``rhs`` of shape (n,) or
    (n, m).
    """
    rhs = np.asarray(rhs, dtype=float)
    vector = rhs.ndim == 1
    work = np.array(rhs.reshape(rhs.shape[0], -1), dtype=float, order="C")
    bands = [np.asarray(b, dtype=float) for b in (lower, diag, upper)]
    if work.shape[0] == 0:
        raise ValueError("empty system")
    if all(b.ndim == 1 for b in bands):
        status = _thomas_shared(*[np.ascontiguousarray(b) for b in bands], work)
    else:
        full = [np.ascontiguousarray(np.broadcast_to(b.reshape(b.shape[0], -1), work.shape)) for b in bands]
        status = _thomas_columns(*full, work)
    if status:
        raise SingularSystemError(f"zero pivot at row {status - 1}")
    return work[:, 0] if vector else work.reshape(rhs.shape)


def solve_directional(
    ops: SplitOperators, k: int, s: float, shift: float, rhs: np.ndarray, lam=None
) -> np.ndarray:
    """Solve ``(I - shift * A_k(s)) K = rhs`` slice by slice along axis ``k`` (0-based)."""
    if lam is None:
        lam, _ = ops.lambdas(s)
    lk = lam[k]
    if shift == 0.0 or lk == 0.0:
        return np.array(rhs, dtype=float, copy=True)
    shape = ops.grid.shape
    pre = int(np.prod(shape[:k]))
    post = int(np.prod(shape[k + 1 :]))
    work = np.array(rhs, dtype=float, order="C", copy=True).reshape(pre, shape[k], post)
    d = ops.coupling(k, lam)
    dvals = np.ascontiguousarray(np.broadcast_to(d, shape[:k] + (1,) * (len(shape) - k)).reshape(pre), dtype=float)
    status = _directional_kernel(
        ops.adv_diff[k], ops.first_deriv[k], dvals, shift * lk * lk, shift * lk, work
    )
    if status:
        where = np.unravel_index(status - 1, shape[:k]) if k else ()
        raise SingularSystemError(f"singular system along axis {k + 1} at slice {where}")
    return work.reshape(shape)


def time_derivatives(ops: SplitOperators, s: float, Y: np.ndarray):
    """``(alpha_1..alpha_N, G)``: time derivatives of the split parts and of ``F``."""
    _, alphas, G = rhs_and_time_derivatives(ops, s, Y)
    return alphas, G


def default_nu(n: int, theta: float = 0.5, kappa: float = DEFAULT_KAPPA) -> float:
    return theta if n <= 3 else kappa * n * theta


@dataclass
class IntegratorConfig:
    """Constant-step AMFR-W1 settings in reversed time.

    ``jumps`` maps reversed times to transformations ``Y -> Y'`` applied when
    the integration reaches that time (e.g. early exercise).
    """

    dt: float
    horizon: float
    theta: float = 0.5
    nu: float | None = None
    kappa: float = DEFAULT_KAPPA
    jumps: Sequence[tuple[float, Callable[[np.ndarray], np.ndarray]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.dt > 0.0 or not self.horizon > 0.0:
            raise ScheduleError("dt and horizon must be positive")
        if self.theta <= 0.0 or (self.nu is not None and self.nu <= 0.0):
            raise ScheduleError("theta and nu must be positive")
        self.n_steps = _aligned_steps(self.horizon, self.dt, "horizon")
        for t, _ in self.jumps:
            if not 0.0 < t < self.horizon:
                raise ScheduleError(f"jump time {t} outside (0, {self.horizon})")
            _aligned_steps(t, self.dt, f"jump time {t}")

    def nu_for(self, n: int) -> float:
        return self.nu if self.nu is not None else default_nu(n, self.theta, self.kappa)


def _aligned_steps(t: float, dt: float, what: str) -> int:
    steps = round(t / dt)
    if steps < 1 or abs(steps * dt - t) > 1e-9 * max(t, 1.0):
        raise ScheduleError(f"{what} is not a multiple of dt={dt}")
    return steps


def amfr_w1_step(
    ops: SplitOperators, Y: np.ndarray, s: float, dt: float, theta: float, nu: float
) -> np.ndarray:
    """Advance ``Y`` from reversed time ``s`` to ``s + dt``."""
    lam, dlam = ops.lambdas(s)
    F, alphas, G = rhs_and_time_derivatives(ops, s, Y)
    n = ops.ndim
    shift = nu * dt
    corr = nu * dt * dt
    k0 = dt * F
    stage = k0
    for k in range(n):
        stage = solve_directional(ops, k, s, shift, stage + corr * alphas[k], lam)
    pieces, _ = _combine(ops, stage, lam, None)
    a_stage = pieces[0]
    for p in pieces[1:]:
        a_stage = a_stage + p
    stage = 2.0 * k0 + theta * dt * dt * G - (stage - theta * dt * a_stage)
    for k in range(n):
        stage = solve_directional(ops, k, s, shift, stage + corr * alphas[k], lam)
    return Y + stage


def integrate(
    ops: SplitOperators,
    Y0: np.ndarray,
    cfg: IntegratorConfig,
    progress: Callable[[int, int], None] | None = None,
) -> np.ndarray:
    """Step from reversed time 0 to ``cfg.horizon`` applying the jump schedule."""
    jumps = {}
    for t, fn in cfg.jumps:
        jumps.setdefault(_aligned_steps(t, cfg.dt, "jump"), []).append(fn)
    nu = cfg.nu_for(ops.ndim)
    Y = np.ascontiguousarray(Y0, dtype=float)
    for step in range(cfg.n_steps):
        Y = amfr_w1_step(ops, Y, step * cfg.dt, cfg.dt, cfg.theta, nu)
        for fn in jumps.get(step + 1, ()):
            Y = np.ascontiguousarray(fn(Y))
        if progress is not None:
            progress(step + 1, cfg.n_steps)
    return Y
