"""Spatial discretisation of the FMM pricing PDE in reversed time.

The unknown ``u(s, x_1, .., x_N)`` is the relative price at physical time
``T_a - s``. Nodal values are kept as an N-d array whose axis ``k - 1``
runs over the nodes of rate ``k``; :meth:`Grid.flatten` maps it to the
vector ordering with ``j_1`` running fastest.

Along each axis the operators are tridiagonal band matrices stored as an
``(n, 3)`` array of (lower, diagonal, upper) coefficients per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .market_model import DomainError, MarketData, gamma_all, gamma_slope
from .payoffs import SwaptionSpec, deflated_swap_value


@dataclass(frozen=True)
class Axis:
    nodes: np.ndarray
    kind: str = "uniform"
    center: float | None = None
    stretch: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise DomainError("an axis needs at least three nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("axis nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacings(self) -> np.ndarray:
        """``h_j = x_j - x_{j-1}`` for j = 1..M."""
        return np.diff(self.nodes)


def build_uniform_axis(r_max: float, M: int) -> Axis:
    if M < 2 or r_max <= 0.0:
        raise DomainError("uniform axis needs M >= 2 and r_max > 0")
    return Axis(np.linspace(0.0, r_max, M + 1), "uniform")


def build_sinh_axis(strike: float, r_max: float, M: int, stretch: float | None = None) -> Axis:
    """Nodes ``K + L sinh(xi_j)`` on a uniform ``xi`` grid, clustered at ``K``."""
    if not 0.0 < strike < r_max:
        raise DomainError(f"need 0 < K < r_max, got K={strike}, r_max={r_max}")
    if M < 2:
        raise DomainError("sinh axis needs M >= 2")
    L = strike / 10.0 if stretch is None else float(stretch)
    xi = np.linspace(np.arcsinh(-strike / L), np.arcsinh((r_max - strike) / L), M + 1)
    nodes = strike + L * np.sinh(xi)
    nodes[0], nodes[-1] = 0.0, r_max
    return Axis(nodes, "sinh", strike, L)


@dataclass(frozen=True)
class StencilCoeffs:
    """First (``beta``) and second (``eta``) derivative weights, shape (M+1, 3).

    Interior rows hold the three-point non-uniform weights. Row 0 is zero:
    every coefficient multiplying a derivative vanishes on ``x = 0``. Row M
    is the stencil left after eliminating the virtual node with the linear
    extrapolation implied by ``u_xx = 0``, i.e. a backward first difference
    and a null second difference.
    """

    beta: np.ndarray
    eta: np.ndarray


def stencil_coefficients(axis: Axis) -> StencilCoeffs:
    h = axis.spacings
    n = axis.M + 1
    beta = np.zeros((n, 3))
    eta = np.zeros((n, 3))
    hm, hp = h[:-1], h[1:]
    s = hm + hp
    beta[1:-1, 0] = -hp / (hm * s)
    beta[1:-1, 1] = (hp - hm) / (hm * hp)
    beta[1:-1, 2] = hm / (hp * s)
    eta[1:-1, 0] = 2.0 / (hm * s)
    eta[1:-1, 1] = -2.0 / (hm * hp)
    eta[1:-1, 2] = 2.0 / (hp * s)
    beta[-1, 0] = -1.0 / h[-1]
    beta[-1, 1] = 1.0 / h[-1]
    return StencilCoeffs(beta, eta)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.M + 1 for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> tuple[int, ...]:
        """``E_1 = 1, E_k = prod_{l<k} (M_l + 1)``."""
        return tuple(int(np.prod(self.shape[:k])) for k in range(self.ndim))

    def flat_index(self, multi_index) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi_index).T), self.shape, order="F")

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.shape, order="F"), axis=-1)

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).ravel(order="F")

    def unflatten(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector)
        if vector.size != self.size:
            raise DomainError(f"expected {self.size} values, got {vector.size}")
        return np.ascontiguousarray(vector.reshape(self.shape, order="F"))

    def coordinate(self, k: int) -> np.ndarray:
        """Nodes of axis ``k`` (0-based) shaped to broadcast against the grid."""
        shape = [1] * self.ndim
        shape[k] = -1
        return self.axes[k].nodes.reshape(shape)

    def coordinates(self) -> list[np.ndarray]:
        return [self.coordinate(k) for k in range(self.ndim)]

    @property
    def points(self) -> tuple[np.ndarray, ...]:
        return tuple(ax.nodes for ax in self.axes)


@dataclass(frozen=True)
class GridConfig:
    """How to lay out the mesh for a product.

    ``resolution`` is one M for every axis or a sequence of per-axis values.
    ``r_max`` defaults to ``max(0.5, 30 K_ATM)``; ``stretch`` is ``L_k / K``.
    """

    resolution: int | Sequence[int] = 64
    r_max: float | Sequence[float] | None = None
    mesh: str = "sinh"
    stretch: float = 0.1

    def per_axis(self, n: int) -> tuple[list[int], list[float | None]]:
        res = self.resolution
        ms = [int(res)] * n if np.ndim(res) == 0 else [int(m) for m in res]
        rm = self.r_max
        rms = [rm] * n if rm is None or np.ndim(rm) == 0 else list(rm)
        if len(ms) != n or len(rms) != n:
            raise DomainError(f"grid configuration must cover {n} axes")
        return ms, rms


def default_r_max(atm: float) -> float:
    return max(0.5, 30.0 * atm)


def build_grid(spec: SwaptionSpec, md: MarketData, cfg: GridConfig, atm: float) -> Grid:
    """Axis 1 uniform, axes 2..N sinh-stretched about the strike (or all uniform)."""
    if cfg.mesh not in ("sinh", "uniform"):
        raise DomainError(f"unknown mesh kind {cfg.mesh!r}")
    ms, rms = cfg.per_axis(spec.b)
    axes = []
    for k in range(spec.b):
        r_max = default_r_max(atm) if rms[k] is None else float(rms[k])
        if k == 0 or cfg.mesh == "uniform":
            axes.append(build_uniform_axis(r_max, ms[k]))
        else:
            axes.append(build_sinh_axis(spec.strike, r_max, ms[k], cfg.stretch * spec.strike))
    return Grid(tuple(axes))


def _q_minus_log1p(q: np.ndarray) -> np.ndarray:
    """``q - log(1 + q)`` without cancellation for small ``q``."""
    q = np.asarray(q, dtype=float)
    small = np.abs(q) < 0.1
    qs = np.where(small, q, 0.0)
    series = np.zeros_like(qs)
    for n in range(18, 1, -1):
        series = qs * (series + (-1) ** n / n)
    series = qs * series
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = q - np.log1p(q)
    return np.where(small, series, direct)


def smooth_payoff(grid: Grid, spec: SwaptionSpec, md: MarketData) -> np.ndarray:
    """Relative payoff on the grid, cell-averaged next to its kink.

    The kink lies where the swap value changes sign. Along the axis of the
    first swap rate ``a + 1`` it sits at ``K - H / tau_{a+1}`` where ``H`` is
    the discounted value of the remaining periods, so for every slice of the
    later axes the node nearest to that point gets the exact mean of the
    payoff over its surrounding cell. Slices whose kink falls outside the
    interior of the axis keep the raw payoff.
    """
    a, b, K = spec.a, spec.b, spec.strike
    tau = md.tau
    coords = grid.coordinates()
    u = np.broadcast_to(
        np.maximum(deflated_swap_value(coords, a, b, K, tau), 0.0), grid.shape
    ).copy()

    ax = a  # 0-based axis of rate a + 1
    nodes = grid.axes[ax].nodes
    t1 = tau[ax]
    # H over the trailing axes a+2..b, shaped (1, .., 1, 1, n_{a+2}, .., n_b)
    H = np.zeros((1,) * (ax + 1) + grid.shape[ax + 1 :])
    disc = 1.0
    for k in range(ax + 1, b):
        disc = disc / (1.0 + tau[k] * coords[k])
        H = H + disc * tau[k] * (coords[k] - K)
    x_kink = K - H / t1

    right = np.clip(np.searchsorted(nodes, x_kink), 1, nodes.size - 1)
    left = right - 1
    j_ind = np.where(np.abs(nodes[left] - x_kink) <= np.abs(nodes[right] - x_kink), left, right)
    valid = (j_ind > 0) & (j_ind < nodes.size - 1)
    jj = np.clip(j_ind, 1, nodes.size - 2)
    x_lo = 0.5 * (nodes[jj - 1] + nodes[jj])
    x_hi = 0.5 * (nodes[jj] + nodes[jj + 1])
    valid &= (x_kink >= x_lo) & (x_kink <= x_hi)

    lead = 1.0
    for k in range(ax):
        lead = lead / (1.0 + tau[k] * coords[k])
    # 1 + t1 K - H equals 1 + t1 x_kink, which turns the integral into
    # (1 + t1 x_kink) / t1 * (q - log(1 + q)) and avoids the cancellation
    with np.errstate(invalid="ignore", divide="ignore"):
        base = 1.0 + t1 * x_kink
        q = t1 * (x_hi - x_kink) / base
        integral = base / t1 * _q_minus_log1p(q)
        average = lead * integral / (x_hi - x_lo)
    target = grid.shape[:ax] + (1,) + grid.shape[ax + 1 :]
    idx = np.broadcast_to(jj, target)
    current = np.take_along_axis(u, idx, axis=ax)
    new = np.where(np.broadcast_to(valid, target), np.broadcast_to(average, target), current)
    np.put_along_axis(u, idx, new, axis=ax)
    return u


def exercise_values(grid: Grid, a: int, b: int, strike: float, md: MarketData) -> np.ndarray:
    """Deflated value of entering the swap ``T_a x (T_b - T_a)`` at every node."""
    return np.broadcast_to(
        deflated_swap_value(grid.coordinates(), a, b, strike, md.tau), grid.shape
    ).copy()


@njit(cache=True)
def _band_matvec(bands, v, out):
    pre, n, post = v.shape
    for p in range(pre):
        for q in range(post):
            out[p, 0, q] = bands[0, 1] * v[p, 0, q] + bands[0, 2] * v[p, 1, q]
        for i in range(1, n - 1):
            lo, di, up = bands[i, 0], bands[i, 1], bands[i, 2]
            for q in range(post):
                out[p, i, q] = lo * v[p, i - 1, q] + di * v[p, i, q] + up * v[p, i + 1, q]
        for q in range(post):
            out[p, n - 1, q] = bands[n - 1, 0] * v[p, n - 2, q] + bands[n - 1, 1] * v[p, n - 1, q]


@njit(cache=True)
def _directional_parts(b1, b2, v, c1, c2, e1, e2, part, dpart, grad):
    """``part = c1 B1 v + c2[p] B2 v`` and ``dpart = e1 B1 v + e2[p] B2 v``.

    ``grad`` receives ``B2 v``. Coefficients ``c2``, ``e2`` vary with the
    leading index ``p`` only; ``dpart`` is skipped when it has zero size.
    """
    pre, n, post = v.shape
    want_d = dpart.size > 0
    for p in range(pre):
        cc2 = c2[p]
        ee2 = e2[p]
        for i in range(n):
            lo1, di1, up1 = b1[i, 0], b1[i, 1], b1[i, 2]
            lo2, di2, up2 = b2[i, 0], b2[i, 1], b2[i, 2]
            for q in range(post):
                c = v[p, i, q]
                s1 = di1 * c
                s2 = di2 * c
                if i > 0:
                    c = v[p, i - 1, q]
                    s1 += lo1 * c
                    s2 += lo2 * c
                if i < n - 1:
                    c = v[p, i + 1, q]
                    s1 += up1 * c
                    s2 += up2 * c
                part[p, i, q] = c1 * s1 + cc2 * s2
                if want_d:
                    dpart[p, i, q] = e1 * s1 + ee2 * s2
                grad[p, i, q] = s2


def _as_3d(values: np.ndarray, axis: int) -> np.ndarray:
    shape = values.shape
    pre = int(np.prod(shape[:axis]))
    post = int(np.prod(shape[axis + 1 :]))
    return np.ascontiguousarray(values, dtype=float).reshape(pre, shape[axis], post)


def apply_bands(bands: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    """Multiply by the tridiagonal matrix ``bands`` along ``axis``."""
    v = _as_3d(values, axis)
    out = np.empty_like(v)
    _band_matvec(np.ascontiguousarray(bands, dtype=float), v, out)
    return out.reshape(values.shape)


def time_coefficient_lambda(k: int, s: float, md: MarketData, expiry: float) -> float:
    """``lambda_k(s) = sigma_k gamma_k(T - s)`` at reversed time ``s``."""
    return float(md.vols[k - 1] * gamma_all(expiry - s, md.tenor)[k - 1])


@dataclass
class SplitOperators:
    """Directional factors of the semi-discrete operator.

    ``adv_diff[k]`` holds the bands of ``A_k^(1)`` (advection from the rate's
    own drift term plus diffusion), ``first_deriv[k]`` those of ``A_k^(2)``
    (``x_k`` times the first difference). The coupling ``D_k(s)`` is built on
    demand by :meth:`coupling` and depends on axes ``< k`` only.
    """

    grid: Grid
    md: MarketData
    expiry: float
    adv_diff: list[np.ndarray]
    first_deriv: list[np.ndarray]
    rate_weight: list[np.ndarray] = field(repr=False)

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    def lambdas(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """``lambda_k(s)`` and ``d lambda_k / ds`` for all k.

        The derivative is the one-sided value from inside the step that
        starts at ``s``.
        """
        tenor = self.md.tenor
        t = self.expiry - s
        lam = self.md.vols * gamma_all(t, tenor)
        dlam = -self.md.vols * gamma_slope(t, tenor)
        return lam[: self.ndim], dlam[: self.ndim]

    def coupling(self, k: int, lam: np.ndarray) -> np.ndarray | float:
        """Diagonal of ``D_k``: ``sum_{l<k} lambda_l rho_kl tau_l x_l / (1 + tau_l x_l)``.

        ``k`` is 0-based; the result broadcasts against the grid and has
        length-1 dimensions for axes ``>= k``.
        """
        rho = self.md.correlation
        out = 0.0
        for l in range(k):
            if lam[l] != 0.0 and rho[k, l] != 0.0:
                out = out + lam[l] * rho[k, l] * self.rate_weight[l]
        return out

    def matvec(self, k: int, values: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """``A_k(s) Y`` for one direction."""
        lk = lam[k]
        out = lk * lk * apply_bands(self.adv_diff[k], values, k)
        d = self.coupling(k, lam)
        if np.ndim(d) or d != 0.0:
            out += lk * d * apply_bands(self.first_deriv[k], values, k)
        return out


def assemble_operators(grid: Grid, md: MarketData, expiry: float) -> SplitOperators:
    n = grid.ndim
    if md.n_rates < n:
        raise DomainError(f"grid has {n} axes but only {md.n_rates} rates are defined")
    tau = md.tau
    adv_diff, first_deriv, weights = [], [], []
    for k, axis in enumerate(grid.axes):
        x = axis.nodes
        st = stencil_coefficients(axis)
        w = tau[k] * x / (1.0 + tau[k] * x)
        adv_diff.append((w * x)[:, None] * st.beta + 0.5 * (x * x)[:, None] * st.eta)
        first_deriv.append(x[:, None] * st.beta)
        weights.append(w.reshape(grid.coordinate(k).shape))
    return SplitOperators(grid, md, expiry, adv_diff, first_deriv, weights)


def _per_slice(d, lead: tuple, pre: int) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(d, lead).reshape(pre), dtype=float)


def _combine(ops: SplitOperators, Y: np.ndarray, lam: np.ndarray, dlam: np.ndarray | None):
    """Directional parts, mixed part and (optionally) their time derivatives."""
    n = ops.ndim
    rho = ops.md.correlation
    parts = [None] * (n + 1)
    dparts = [None] * (n + 1) if dlam is not None else None
    grads = []
    for k in range(n):
        lk = lam[k]
        active = lk != 0.0 or (dlam is not None and dlam[k] != 0.0)
        if not active:
            grads.append(None)  # only ever multiplied by lambda_k or its slope
            parts[k + 1] = np.zeros_like(Y)
            if dparts is not None:
                dparts[k + 1] = np.zeros_like(Y)
            continue
        v = _as_3d(Y, k)
        pre = v.shape[0]
        lead = Y.shape[:k] + (1,) * (n - k)
        d = _per_slice(ops.coupling(k, lam), lead, pre)
        part, grad = np.empty_like(v), np.empty_like(v)
        if dparts is not None:
            dk = dlam[k]
            dd = _per_slice(ops.coupling(k, dlam), lead, pre)
            dpart = np.empty_like(v)
            e1, e2 = 2.0 * lk * dk, dk * d + lk * dd
        else:
            dpart = np.empty((0, 0, 0))
            e1, e2 = 0.0, d
        _directional_parts(ops.adv_diff[k], ops.first_deriv[k], v, lk * lk, lk * d, e1, e2, part, dpart, grad)
        parts[k + 1] = part.reshape(Y.shape)
        grads.append(grad.reshape(Y.shape))
        if dparts is not None:
            dparts[k + 1] = dpart.reshape(Y.shape)
    mixed = np.zeros_like(Y)
    dmixed = np.zeros_like(Y) if dparts is not None else None
    for l in range(1, n):
        acc = None
        dacc = None
        for k in range(l):
            c = rho[k, l] * lam[k] * lam[l]
            if c != 0.0:
                acc = c * grads[k] if acc is None else acc + c * grads[k]
            if dparts is not None:
                dc = rho[k, l] * (dlam[k] * lam[l] + lam[k] * dlam[l])
                if dc != 0.0:
                    dacc = dc * grads[k] if dacc is None else dacc + dc * grads[k]
        if acc is not None:
            mixed += apply_bands(ops.first_deriv[l], acc, l)
        if dacc is not None:
            dmixed += apply_bands(ops.first_deriv[l], dacc, l)
    parts[0] = mixed
    if dparts is not None:
        dparts[0] = dmixed
    return parts, dparts


def _as_grid_array(ops: SplitOperators, Y) -> tuple[np.ndarray, bool]:
    Y = np.asarray(Y, dtype=float)
    if Y.shape == ops.grid.shape:
        return Y, False
    if Y.ndim == 1 and Y.size == ops.grid.size:
        return ops.grid.unflatten(Y), True
    raise DomainError(f"state of shape {Y.shape} does not match grid {ops.grid.shape}")


def apply_rhs(ops: SplitOperators, s: float, Y, parts: bool = False):
    """Semi-discrete right-hand side ``F(s, Y) = sum_k F_k(s, Y)``.

    ``Y`` may be the N-d nodal array or its flattened vector; the result has
    the same layout. With ``parts=True`` returns ``(F, [F_0, F_1, .., F_N])``
    where ``F_0`` is the mixed-derivative part.
    """
    arr, flat = _as_grid_array(ops, Y)
    lam, _ = ops.lambdas(s)
    pieces, _ = _combine(ops, arr, lam, None)
    total = pieces[0].copy()
    for p in pieces[1:]:
        total += p
    if flat:
        total = ops.grid.flatten(total)
        pieces = [ops.grid.flatten(p) for p in pieces]
    return (total, pieces) if parts else total


def rhs_and_time_derivatives(ops: SplitOperators, s: float, Y: np.ndarray):
    """``F(s, Y)``, ``alpha_k = dF_k/ds`` (k = 1..N) and ``G = dF/ds`` on grid arrays."""
    lam, dlam = ops.lambdas(s)
    pieces, dpieces = _combine(ops, Y, lam, dlam)
    total = pieces[0].copy()
    for p in pieces[1:]:
        total += p
    G = dpieces[0].copy()
    for p in dpieces[1:]:
        G += p
    return total, dpieces[1:], G
