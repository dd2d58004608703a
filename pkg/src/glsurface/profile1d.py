"""The one-dimensional transition profile and the 2D building block made from it.

Unknowns live on nodes t_k = -T + k dt, k = 0..n.  On each interval we use
d = rho', q = a', m = mean of rho^2 at the two ends, and the density

    d^2 + (q - (1 - m)/sqrt2)^2 - lam * sqrt2 * q * m.

The node term kappa^-2 rho^2 a^2 uses trapezoid weights.  With lam = 1
(the default, ``form="reduced"``) the cross term is the x2-independent
restriction of the 2D energy: summing by parts with a(-T) = 0, rho(T) = 0
turns -sqrt2 q m into sqrt2 abar (rho^2)', so the 1D energy of a profile is
exactly the 2D energy of its lift.  ``form="literal"`` drops the cross term.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, cholesky_banded, cho_solve_banded

from .energy import total_energy
from .fieldcore import (SQRT2, Configuration, LinkField, NumericalError, ValidationError,
                        discrete_curl, exact_sum, make_params, rectangle)

SIGMA0_CLOSED_FORM = 2.0 * SQRT2 / 3.0
TAIL_TOL = 1e-8
FORMS = {"reduced": 1.0, "literal": 0.0}


# ------------------------------------------------------------------ sigma_0


def _tanh_profile(t):
    v = np.tanh(t / SQRT2)
    dv = (1.0 - v * v) / SQRT2
    return v, dv


def sigma0_integrand(t):
    v, dv = _tanh_profile(np.asarray(t, dtype=float))
    return dv * dv + 0.5 * (1.0 - v * v) ** 2


def sigma0_reference(step: float = 1e-3, left: float = -30.0) -> float:
    """Composite Simpson quadrature of the tanh transition on [left, 0]."""
    intervals = int(round(-left / step))
    intervals += intervals % 2
    t = np.linspace(left, 0.0, intervals + 1)
    f = sigma0_integrand(t)
    h = -left / intervals
    return float(h / 3.0 * (f[0] + f[-1] + 4.0 * exact_sum(f[1:-1:2]) + 2.0 * exact_sum(f[2:-1:2])))


# ----------------------------------------------------------------- Profile1D


@dataclass(frozen=True)
class Profile1D:
    t_grid: np.ndarray
    rho: np.ndarray
    a: np.ndarray
    kappa: float
    energy_1d: float
    form: str = "reduced"
    iterations: int = 0
    grad_norm: float = 0.0

    @property
    def T(self) -> float:
        return float(-self.t_grid[0])

    @property
    def n(self) -> int:
        return len(self.t_grid) - 1

    @property
    def dt(self) -> float:
        return 2.0 * self.T / self.n

    def splines(self) -> tuple[CubicSpline, CubicSpline]:
        return CubicSpline(self.t_grid, self.rho), CubicSpline(self.t_grid, self.a)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# kappa = {self.kappa!r}\n# T = {self.T!r}\n# n = {self.n}\n")
        out.write(f"# form = {self.form}\n# energy_1d = {self.energy_1d!r}\n")
        out.write("t,rho,a\n")
        for row in zip(self.t_grid, self.rho, self.a):
            out.write(",".join(repr(float(v)) for v in row) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Profile1D":
        header, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, value = line[1:].split("=", 1)
                header[key.strip()] = value.strip()
            elif line and not line.startswith("t,"):
                rows.append([float(v) for v in line.split(",")])
        data = np.array(rows)
        return cls(data[:, 0], data[:, 1], data[:, 2], float(header["kappa"]),
                   float(header["energy_1d"]), header.get("form", "reduced"))


def _lam(form: str) -> float:
    try:
        return FORMS[form]
    except KeyError:
        raise ValidationError(f"unknown 1D functional form {form!r}; use one of {sorted(FORMS)}") from None


def _node_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def discrete_energy(rho, a, kappa: float, dt: float, form: str = "reduced") -> float:
    lam = _lam(form)
    rho, a = np.asarray(rho, float), np.asarray(a, float)
    d = np.diff(rho) / dt
    q = np.diff(a) / dt
    m = 0.5 * (rho[:-1] ** 2 + rho[1:] ** 2)
    interval = dt * (d * d + (q - (1.0 - m) / SQRT2) ** 2 - lam * SQRT2 * q * m)
    node = _node_weights(len(rho) - 1, dt) * (rho * a) ** 2 / kappa ** 2
    return exact_sum(interval) + exact_sum(node)


def profile_energy(p: Profile1D) -> float:
    return discrete_energy(p.rho, p.a, p.kappa, p.dt, p.form)


def _gradient_and_band(rho, a, kappa, dt, lam, want_hessian=True):
    """Gradient in interleaved order (rho_0, a_0, rho_1, a_1, ...) and the
    upper banded Hessian (bandwidth 3)."""
    n = len(rho) - 1
    d = np.diff(rho) / dt
    q = np.diff(a) / dt
    m = 0.5 * (rho[:-1] ** 2 + rho[1:] ** 2)
    res = q - (1.0 - m) / SQRT2
    phi_d = 2.0 * d
    phi_q = 2.0 * res - lam * SQRT2 * m
    phi_m = SQRT2 * res - lam * SQRT2 * q
    w = _node_weights(n, dt) / kappa ** 2

    g_rho = np.zeros(n + 1)
    g_a = np.zeros(n + 1)
    g_rho[:-1] += -phi_d + dt * phi_m * rho[:-1]
    g_rho[1:] += phi_d + dt * phi_m * rho[1:]
    g_a[:-1] += -phi_q
    g_a[1:] += phi_q
    g_rho += 2.0 * w * rho * a * a
    g_a += 2.0 * w * rho * rho * a
    grad = np.empty(2 * (n + 1))
    grad[0::2], grad[1::2] = g_rho, g_a
    if not want_hessian:
        return grad, None

    # local 4x4 interval Hessian dt (J^T H_phi J + phi_m diag(1,0,1,0)), variables (r0, a0, r1, a1)
    inv = 1.0 / dt
    phi_qm = SQRT2 * (1.0 - lam)
    r0, r1 = rho[:-1], rho[1:]
    jd = (-inv, 0.0, inv, 0.0)
    jq = (0.0, -inv, 0.0, inv)
    jm = (r0, 0.0, r1, 0.0)

    def entry(i, j):
        val = 2.0 * jd[i] * jd[j] + 2.0 * jq[i] * jq[j]
        val = val + jm[i] * jm[j] + phi_qm * (jq[i] * jm[j] + jm[i] * jq[j])
        if i == j and i in (0, 2):
            val = val + phi_m
        return dt * np.broadcast_to(val, r0.shape)

    band = np.zeros((4, 2 * (n + 1)))
    for i in range(4):
        for j in range(i, 4):
            # column index 2k + j, row 2k + i  ->  band row 3 + i - j
            band[3 + i - j, j:2 * n + j:2] += entry(i, j)
    band[3, 0::2] += 2.0 * w * a * a
    band[3, 1::2] += 2.0 * w * rho * rho
    band[2, 1::2] += 4.0 * w * rho * a
    return grad, band


def _initial_profile(t):
    rho = 0.5 * (1.0 - np.tanh(t / SQRT2))
    a = np.maximum(t, 0.0) / SQRT2
    rho[0], a[0], rho[-1] = 1.0, 0.0, 0.0
    return rho, a


def minimize_profile1d(kappa: float, T: float = 20.0, n: int = 4000, *, form: str = "reduced",
                       tol: float = 1e-10, max_iter: int = 500) -> Profile1D:
    """Damped Newton (Levenberg-Marquardt on the banded Hessian) with Armijo backtracking."""
    make_params(1.0, kappa, 0.0)
    if T < 20.0 or n < 2000:
        raise ValidationError(f"T ≥ 20 and n ≥ 2000 required (got T={T!r}, n={n})")
    lam = _lam(form)
    t = np.linspace(-T, T, n + 1)
    dt = 2.0 * T / n
    rho, a = _initial_profile(t)
    fixed = np.zeros(2 * (n + 1), dtype=bool)
    fixed[[0, 1, 2 * n]] = True

    energy = discrete_energy(rho, a, kappa, dt, form)
    damping = 1e-3
    grad_norm = math.inf
    for it in range(max_iter):
        grad, band = _gradient_and_band(rho, a, kappa, dt, lam)
        grad[fixed] = 0.0
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            return Profile1D(t, rho, a, kappa, energy, form, it, grad_norm)
        band[:, fixed] = 0.0
        for off in range(1, 4):
            # zero the coupling rows of fixed variables (row = column - off)
            rows = np.nonzero(fixed)[0]
            cols = rows + off
            ok = cols < band.shape[1]
            band[3 - off, cols[ok]] = 0.0
        band[3, fixed] = 1.0
        scale = np.maximum(band[3], 1e-12)
        while True:
            trial = band.copy()
            trial[3] += damping * scale
            try:
                factor = cholesky_banded(trial, lower=False)
                break
            except LinAlgError:
                damping *= 10.0
                if damping > 1e12:
                    raise NumericalError(f"1D Hessian not factorizable; last gradient norm {grad_norm:.3e}")
        step = -cho_solve_banded((factor, False), grad)
        step[fixed] = 0.0
        slope = float(grad @ step)
        alpha = 1.0
        while True:
            new_rho = rho + alpha * step[0::2]
            new_a = a + alpha * step[1::2]
            new_energy = discrete_energy(new_rho, new_a, kappa, dt, form)
            if new_energy <= energy + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                break
        if alpha < 1e-12:
            damping *= 100.0
            if damping > 1e12:
                raise NumericalError(f"1D line search stalled; last gradient norm {grad_norm:.3e}")
            continue
        rho, a, energy = new_rho, new_a, new_energy
        damping = max(damping * (0.1 if alpha == 1.0 else 2.0), 1e-12)
    raise NumericalError(f"1D solver did not converge in {max_iter} iterations; "
                         f"last gradient norm {grad_norm:.3e}")


def check_profile(p: Profile1D, tol: float = 1e-9) -> None:
    if p.rho[0] != 1.0 or p.a[0] != 0.0 or p.rho[-1] != 0.0:
        raise ValidationError("profile boundary values violated")
    if p.rho.min() < -tol or p.rho.max() > 1.0 + tol:
        raise ValidationError(f"rho outside [0, 1]: [{p.rho.min()!r}, {p.rho.max()!r}]")


def continuum_density(rho_s: CubicSpline, a_s: CubicSpline, kappa: float, t, form: str = "reduced"):
    """Pointwise 1D energy density of the spline profile; the reduced form carries
    the pointwise lift cross term sqrt2 A (rho^2)'."""
    lam = _lam(form)
    r, dr = rho_s(t), rho_s(t, 1)
    a, da = a_s(t), a_s(t, 1)
    return dr * dr + (r * a / kappa) ** 2 + (da - (1.0 - r * r) / SQRT2) ** 2 + lam * SQRT2 * a * 2.0 * r * dr


def interval_energy(p: Profile1D, lo: float, hi: float) -> float:
    """Integral of the continuum density of the cubic-spline profile over [lo, hi]."""
    rho_s, a_s = p.splines()
    knots = p.t_grid[(p.t_grid > lo) & (p.t_grid < hi)]
    edges = np.concatenate([[lo], knots, [hi]])
    nodes, weights = np.polynomial.legendre.leggauss(10)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    return exact_sum(wts * continuum_density(rho_s, a_s, p.kappa, pts, p.form))


# ----------------------------------------------------------- building block


@dataclass(frozen=True)
class BlockProfile:
    """Truncated, rescaled profile in block coordinates y1 in (-1/2, 1/2).

    Extended to the whole line: rho = 1, A = 0 below -delta0 and rho = 0,
    A linear with slope 1/sqrt2 above delta0.
    """

    profile: Profile1D
    eps0: float
    delta0: float
    center: float = 0.0
    tail_tol: float = TAIL_TOL

    def __post_init__(self):
        rho_s, a_s = self.profile.splines()
        object.__setattr__(self, "_rho_s", rho_s)
        object.__setattr__(self, "_a_s", a_s)
        object.__setattr__(self, "_a_delta", float(self._raw_a(np.array([self.delta0]))[0]))

    def _raw_rho(self, y):
        t = (y - self.center) / self.eps0
        T = self.profile.T
        r = np.where(t <= -T, 1.0, np.where(t >= T, 0.0, self._rho_s(np.clip(t, -T, T))))
        return np.where((r < self.tail_tol) & (t > 0.0), 0.0, r)

    def _raw_a(self, y):
        t = (y - self.center) / self.eps0
        T = self.profile.T
        a_end = self.profile.a[-1]
        inside = self._a_s(np.clip(t, -T, T))
        return self.eps0 * np.where(t <= -T, 0.0, np.where(t >= T, a_end + (t - T) / SQRT2, inside))

    @property
    def decay_length(self) -> float:
        return self.eps0

    def density(self, y):
        y = np.asarray(y, dtype=float)
        ell, d0 = self.decay_length, self.delta0
        r = self._raw_rho(y)
        lo = np.clip((y + d0) / ell, 0.0, 1.0)
        hi = np.clip((d0 - y) / ell, 0.0, 1.0)
        r = 1.0 - lo * (1.0 - r)
        r = r * hi
        r = np.where(y <= -d0, 1.0, np.where(y >= d0, 0.0, r))
        return r

    def potential(self, y):
        y = np.asarray(y, dtype=float)
        ell, d0 = self.decay_length, self.delta0
        raw = self._raw_a(y)
        linear = self._a_delta + (y - d0) / SQRT2
        lo = np.clip((y + d0) / ell, 0.0, 1.0)
        hi = np.clip((y - (d0 - ell)) / ell, 0.0, 1.0)
        a = lo * raw
        a = (1.0 - hi) * a + hi * linear
        return np.where(y <= -d0, 0.0, np.where(y >= d0, linear, a))


@dataclass(frozen=True)
class BuildingBlock:
    cfg: Configuration
    shape_fn: BlockProfile
    eps0: float
    delta0: float
    sigma_cell: float
    flux0: float

    @property
    def u0(self):
        return self.cfg.u

    @property
    def a0(self):
        return self.cfg.a

    @property
    def cell_n(self) -> int:
        return self.cfg.grid.n


FLUX0_BOUNDS = (1.0 / (4.0 * SQRT2), 3.0 / (4.0 * SQRT2))


def strip_violations(cfg: Configuration, delta: float) -> dict[str, float]:
    """Largest violation of each strip condition of the cell admissible set."""
    x1, _ = cfg.grid.axes()
    left = x1 < -delta
    right = x1 > delta
    curl = discrete_curl(cfg.a, cfg.grid)
    right_plaq = x1[:-1] >= delta
    return {
        "u_is_one_left": float(np.max(np.abs(cfg.u[left] - 1.0), initial=0.0)),
        "a_zero_left": float(np.max(np.abs(cfg.a.a2[left]), initial=0.0)),
        "u_is_zero_right": float(np.max(np.abs(cfg.u[right]), initial=0.0)),
        "b_normal_right": float(np.max(np.abs(curl[right_plaq] - 1.0 / SQRT2), initial=0.0)),
        "a1_zero": float(np.max(np.abs(cfg.a.a1))),
    }


def lift_configuration(shape_fn, kappa: float, eps: float, cell_n: int, height: float = 1.0,
                       b_ext: float = 0.0) -> Configuration:
    grid = rectangle(cell_n, 1.0, height)
    x1, _ = grid.axes()
    ny = grid.shape[1]
    rho = np.repeat(shape_fn.density(x1)[:, None], ny, axis=1)
    a2 = np.repeat(shape_fn.potential(x1)[:, None], ny, axis=1)
    return Configuration(rho.astype(complex), LinkField(np.zeros_like(a2), a2), grid,
                         make_params(eps, kappa, b_ext))


def build_block(p: Profile1D, eps0: float = 1.0 / 16.0, delta0: float = 0.25, cell_n: int = 512,
                *, center: float = 0.0, tail_tol: float = TAIL_TOL) -> BuildingBlock:
    if not 0.0 < eps0 < delta0 < 0.5:
        raise ValidationError(f"0 < eps0 < delta0 < 1/2 violated (eps0={eps0!r}, delta0={delta0!r})")
    if delta0 / eps0 > p.T:
        raise ValidationError(f"delta0/eps0 ≤ T violated ({delta0 / eps0!r} > {p.T!r})")
    shape_fn = BlockProfile(p, eps0, delta0, center, tail_tol)
    cfg = lift_configuration(shape_fn, p.kappa, eps0, cell_n)
    violations = strip_violations(cfg, delta0)
    bad = {k: v for k, v in violations.items() if v > 1e-12}
    if bad:
        raise NumericalError(f"block violates strip conditions: {bad}")
    flux0 = exact_sum(discrete_curl(cfg.a, cfg.grid)) * cfg.grid.plaquette_area
    lo, hi = FLUX0_BOUNDS
    if not lo < flux0 <= hi:
        raise ValidationError(f"block flux out of range: flux0 = {flux0!r} not in ({lo!r}, {hi!r}]")
    return BuildingBlock(cfg, shape_fn, eps0, delta0, total_energy(cfg).total, flux0)


@dataclass(frozen=True)
class _Untruncated:
    rho_s: CubicSpline
    a_s: CubicSpline

    def density(self, y):
        return self.rho_s(y)

    def potential(self, y):
        return self.a_s(y)


def lift_consistency(p: Profile1D, cell_n: int = 512) -> float:
    """Relative gap between the 2D lattice energy of the lift at eps = 1 on the unit
    cell and the 1D energy on (-1/2, 1/2)."""
    rho_s, a_s = p.splines()
    cfg = lift_configuration(_Untruncated(rho_s, a_s), p.kappa, 1.0, cell_n)
    two_d = total_energy(cfg).total
    one_d = interval_energy(p, -0.5, 0.5)
    if one_d == 0.0:
        return abs(two_d)
    return abs(two_d - one_d) / abs(one_d)
