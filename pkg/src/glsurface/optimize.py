"""Constrained descent on the lattice energy.

Three boundary modes: the flux torus (twist fixed, everything else free),
and the two unit-cell problems with normal/superconducting strips, the
periodic one additionally pinning the top and bottom rows of u to the
block trace.  The optimizer is Barzilai-Borwein gradient descent with an
Armijo backtracking guard, so accepted steps never raise the energy.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyBreakdown, energy_and_gradient, total_energy
from .fieldcore import (SQRT2, Configuration, LinkField, NumericalError, ValidationError, admissible_epsilons,
                        density, discrete_curl, exact_sum, make_params, torus)
from .profile1d import BlockProfile, build_block, lift_configuration, minimize_profile1d


class BoundaryKind(enum.Enum):
    TORUS_FLUX = "torus_flux"
    DIRICHLET_CELL = "dirichlet_cell"
    PERIODIC_CELL = "periodic_cell"


@dataclass(frozen=True)
class BoundarySpec:
    kind: BoundaryKind
    delta: float | None = None

    def __post_init__(self):
        if self.kind is not BoundaryKind.TORUS_FLUX:
            if self.delta is None or not 0.0 < self.delta < 0.5:
                raise ValidationError(f"cell boundary needs 0 < delta < 1/2 (got {self.delta!r})")


@dataclass(frozen=True)
class MinimizeOptions:
    tol: float | None = None          # default 1e-8 * number of sites
    max_iter: int = 50_000
    armijo: float = 1e-4
    initial_step: float | None = None
    record_history: bool = False
    scaled: bool = True               # diagonal curvature scaling of u versus link variables


@dataclass(frozen=True)
class MinimizeResult:
    cfg: Configuration
    energy: EnergyBreakdown
    iterations: int
    final_grad_norm: float
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


class _Packing:
    """Free degrees of freedom of a configuration under a boundary condition."""

    def __init__(self, cfg0: Configuration, bc: BoundarySpec):
        grid = cfg0.grid
        shape = grid.shape
        self.cfg0 = cfg0
        self.bc = bc
        self.u_free = np.ones(shape, dtype=bool)
        self.a1_free = np.ones(shape, dtype=bool)
        self.a2_free = np.ones(shape, dtype=bool)
        self.anchor = None
        if bc.kind is BoundaryKind.TORUS_FLUX:
            if not grid.is_torus:
                raise ValidationError("torus_flux boundary needs a torus grid")
            return
        if grid.is_torus:
            raise ValidationError("cell boundaries need a rectangle grid")
        x1, _ = grid.axes()
        nx, ny = shape
        slack = 1e-9 * grid.h
        left = x1 < -bc.delta - slack
        right = x1 > bc.delta + slack
        self.u_free[left, :] = False
        self.u_free[right, :] = False
        self.a2_free[left, :] = False
        self.a1_free[:, :] = False
        # x1 components of the rectangle's last column and x2 components of its
        # last row belong to no plaquette
        self.a2_free[:, ny - 1] = False
        start = int(np.argmax(x1 >= bc.delta - slack))
        self.anchor = start
        self.a2_free[start + 1:, :] = False
        self.tied_offset = (x1[start + 1:] - x1[start]) / SQRT2
        if bc.kind is BoundaryKind.PERIODIC_CELL:
            self.u_free[:, 0] = False
            self.u_free[:, ny - 1] = False
        self._check_frozen(cfg0)

    def _check_frozen(self, cfg0: Configuration):
        x1, _ = cfg0.grid.axes()
        bad = []
        left = x1 < -self.bc.delta
        right = x1 > self.bc.delta
        if np.any(np.abs(cfg0.u[left] - 1.0) > 1e-12) or np.any(np.abs(cfg0.a.a2[left]) > 1e-12):
            bad.append("u = 1, A = 0 left of -delta")
        if np.any(np.abs(cfg0.u[right]) > 1e-12):
            bad.append("u = 0 right of delta")
        if np.any(cfg0.a.a1 != 0.0):
            bad.append("a1 = 0")
        if bad:
            raise ValidationError(f"initial configuration violates the strip conditions: {', '.join(bad)}")

    def pack(self, cfg: Configuration) -> np.ndarray:
        u = cfg.u[self.u_free]
        return np.concatenate([u.real, u.imag, cfg.a.a1[self.a1_free], cfg.a.a2[self.a2_free]])

    def unpack(self, x: np.ndarray) -> Configuration:
        k = int(np.count_nonzero(self.u_free))
        k1 = int(np.count_nonzero(self.a1_free))
        u = self.cfg0.u.copy()
        u[self.u_free] = x[:k] + 1j * x[k:2 * k]
        a1 = self.cfg0.a.a1.copy()
        a1[self.a1_free] = x[2 * k:2 * k + k1]
        a2 = self.cfg0.a.a2.copy()
        a2[self.a2_free] = x[2 * k + k1:]
        if self.anchor is not None:
            a2[self.anchor + 1:, :-1] = a2[self.anchor, :-1][None, :] + self.tied_offset[:, None]
        return Configuration(u, LinkField(a1, a2, self.cfg0.a.twist_c), self.cfg0.grid, self.cfg0.params)

    def gradient(self, grad_u: np.ndarray, grad_a: LinkField) -> np.ndarray:
        g2 = grad_a.a2
        if self.anchor is not None:
            g2 = g2.copy()
            g2[self.anchor, :] += g2[self.anchor + 1:, :].sum(axis=0)
        gu = grad_u[self.u_free]
        return np.concatenate([gu.real, gu.imag, grad_a.a1[self.a1_free], g2[self.a2_free]])

    def scaling(self) -> np.ndarray:
        """Inverse diagonal curvature estimate: 8 eps for u, 4/eps + 2 eps (alpha h)^2 for links."""
        p, h = self.cfg0.params, self.cfg0.grid.h
        k = int(np.count_nonzero(self.u_free))
        n_links = int(np.count_nonzero(self.a1_free) + np.count_nonzero(self.a2_free))
        curv_u = 8.0 * p.epsilon
        curv_a = 4.0 / p.epsilon + 2.0 * p.epsilon * (p.alpha * h) ** 2
        return np.concatenate([np.full(2 * k, 1.0 / curv_u), np.full(n_links, 1.0 / curv_a)])

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        energy, grad_u, grad_a = energy_and_gradient(self.unpack(x))
        return energy, self.gradient(grad_u, grad_a)


def minimize(cfg0: Configuration, bc: BoundarySpec, opts: MinimizeOptions = MinimizeOptions()) -> MinimizeResult:
    pack = _Packing(cfg0, bc)
    sites = cfg0.grid.shape[0] * cfg0.grid.shape[1]
    tol = opts.tol if opts.tol is not None else 1e-8 * sites
    x = pack.pack(cfg0)
    scale = pack.scaling() if opts.scaled else np.ones_like(x)
    energy, grad = pack.evaluate(x)
    gnorm = float(np.linalg.norm(grad))
    step = opts.initial_step or 1.0 / max(float(np.linalg.norm(scale * grad)), 1.0)
    history = [energy]
    iterations = 0
    converged = gnorm <= tol
    while not converged and iterations < opts.max_iter:
        direction = scale * grad
        slope = float(grad @ direction)
        t = step
        while True:
            trial = x - t * direction
            e_trial, g_trial = pack.evaluate(trial)
            if e_trial <= energy - opts.armijo * t * slope:
                break
            t *= 0.5
            if t < 1e-30:
                # no descent possible at floating precision
                return _result(pack, x, iterations, gnorm, False, history)
        # Barzilai-Borwein step in the scaled metric
        s, y = trial - x, g_trial - grad
        sy = float(s @ y)
        step = float(s @ (s / scale)) / sy if sy > 0.0 else 2.0 * t
        assert e_trial <= energy
        x, energy, grad = trial, e_trial, g_trial
        gnorm = float(np.linalg.norm(grad))
        iterations += 1
        if opts.record_history:
            history.append(energy)
        converged = gnorm <= tol
    return _result(pack, x, iterations, gnorm, converged, history)


def _result(pack, x, iterations, gnorm, converged, history) -> MinimizeResult:
    cfg = pack.unpack(x)
    return MinimizeResult(cfg, total_energy(cfg), iterations, gnorm, converged, tuple(history))


# ------------------------------------------------------------ cell problems


def cell_block(kappa: float, eps0: float, delta: float, n: int, height: float = 1.0, profile=None):
    profile = profile or minimize_profile1d(kappa)
    block = build_block(profile, eps0, delta, n)
    cfg = block.cfg if height == 1.0 else lift_configuration(block.shape_fn, kappa, eps0, n, height)
    return block, cfg


def cell_minimize(kappa: float, eps0: float, delta: float, variant: str = "dirichlet", n: int = 512, *,
                  height: float = 1.0, init: Configuration | None = None, profile=None,
                  opts: MinimizeOptions = MinimizeOptions()) -> MinimizeResult:
    if not 0.0 < eps0 < delta < 0.5:
        raise ValidationError(f"eps0 < delta < 1/2 violated (eps0={eps0!r}, delta={delta!r})")
    kinds = {"dirichlet": BoundaryKind.DIRICHLET_CELL, "periodic": BoundaryKind.PERIODIC_CELL}
    if variant not in kinds:
        raise ValidationError(f"variant must be one of {sorted(kinds)} (got {variant!r})")
    if init is None:
        _, init = cell_block(kappa, eps0, delta, n, height, profile)
    return minimize(init, BoundarySpec(kinds[variant], delta), opts)


def cell_sigma(kappa: float, eps0: float, delta: float, variant: str = "dirichlet", n: int = 512,
               **kwargs) -> float:
    return cell_minimize(kappa, eps0, delta, variant, n, **kwargs).energy.total


@dataclass(frozen=True)
class OrderingChain:
    sigma_1d: float
    sigma_block: float
    periodic: MinimizeResult
    dirichlet: MinimizeResult


def ordering_chain(kappa: float = 0.25, eps0: float = 1.0 / 16.0, delta: float = 0.25, n: int = 512,
                   opts: MinimizeOptions = MinimizeOptions()) -> OrderingChain:
    """Periodic cell first, then the Dirichlet cell warm-started from it (a feasible point)."""
    profile = minimize_profile1d(kappa)
    block, cfg = cell_block(kappa, eps0, delta, n, profile=profile)
    periodic = minimize(cfg, BoundarySpec(BoundaryKind.PERIODIC_CELL, delta), opts)
    dirichlet = minimize(periodic.cfg, BoundarySpec(BoundaryKind.DIRICHLET_CELL, delta), opts)
    return OrderingChain(profile.energy_1d, block.sigma_cell, periodic, dirichlet)


# -------------------------------------------------------------- sweeps


def flat_interface_torus(kappa: float, epsilon: float, n: int, eps0: float = 1.0 / 16.0, profile=None,
                         width: float = 0.5) -> Configuration:
    """Normal strip {|x1 - 1/2| < width/2} on the flux torus, two vertical interfaces.

    Each interface is the rescaled 1D block; the interfaces are shifted by a
    common offset so the two potentials meet continuously at x1 = 1/2, and
    the phase winds alpha*c*x2 right of the strip center (quantized twist).
    """
    profile = profile or minimize_profile1d(kappa)
    shape = BlockProfile(profile, eps0, 0.25)
    s = epsilon / eps0
    c = width / SQRT2
    params = make_params(epsilon, kappa, kappa * c)
    grid = torus(n)
    x1, x2 = grid.axes()
    # linear tail of the block potential: a_delta + (y - delta0)/sqrt2 beyond delta0
    a_delta = float(shape.potential(shape.delta0))
    zeta = s * shape.delta0 - SQRT2 * s * a_delta
    left_edge, right_edge = 0.5 - 0.5 * width - zeta, 0.5 + 0.5 * width + zeta
    half = x1 <= 0.5
    a2eff = np.where(half, s * shape.potential((x1 - left_edge) / s),
                     c - s * shape.potential((right_edge - x1) / s))
    rho = np.where(half, shape.density((x1 - left_edge) / s), shape.density((right_edge - x1) / s))
    wind = np.where(half, 0.0, c)
    theta = params.alpha * wind[:, None] * x2[None, :]
    u = rho[:, None] * np.exp(1j * theta)
    a2 = np.repeat((a2eff - c * x1)[:, None], n, axis=1)
    return Configuration(u, LinkField(np.zeros((n, n)), a2, c), grid, params)


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    n: int
    energy: float
    energy_per_length: float
    well_l2: float
    rho_l1_gap: float
    iterations: int
    converged: bool


def _well_l2(cfg: Configuration) -> float:
    rho2 = np.abs(cfg.u) ** 2
    B = discrete_curl(cfg.a, cfg.grid)
    if not cfg.grid.is_torus:
        rho2 = rho2[:-1, :-1]
    return exact_sum((B - (1.0 - rho2) / SQRT2) ** 2) * cfg.grid.plaquette_area


def epsilon_sweep(scenario: str, kappa: float, eps_list, *, n_list=None, E=None, eps0: float = 1.0 / 16.0,
                  opts: MinimizeOptions = MinimizeOptions(max_iter=2000), block_for=None) -> list[SweepRow]:
    """For each eps: build the scenario, minimize on the flux torus, record the table row."""
    if scenario not in ("flat_interface_torus", "recovery"):
        raise ValidationError(f"unknown scenario {scenario!r}")
    profile = minimize_profile1d(kappa)
    n_list = list(n_list) if n_list is not None else [512] * len(eps_list)
    rows = []
    for eps, n in zip(eps_list, n_list):
        if scenario == "flat_interface_torus":
            cfg0 = flat_interface_torus(kappa, eps, n, eps0, profile)
            perimeter = 2.0
            x1, _ = cfg0.grid.axes()
            outside = np.repeat((np.abs(x1 - 0.5) > 0.25)[:, None], n, axis=1).astype(float)
        else:
            from .recovery import build_recovery
            if E is None:
                raise ValidationError("recovery scenario needs a polyhedral set E")
            params = make_params(eps, kappa, kappa * E.area / SQRT2)
            block = build_block(profile, eps0, 0.25, max(8, round(eps / eps0 * n)))
            report = build_recovery(E, params, block, n)
            cfg0 = report.cfg
            perimeter = E.perimeter
            X1, X2 = cfg0.grid.coordinates()
            pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
            outside = (E.signed_distance(pts) < 0.0).reshape(cfg0.grid.shape).astype(float)
        result = minimize(cfg0, BoundarySpec(BoundaryKind.TORUS_FLUX), opts)
        cfg = result.cfg
        gap = exact_sum(np.abs(density(cfg.u) - outside)) * cfg.grid.plaquette_area
        rows.append(SweepRow(eps, n, result.energy.total, result.energy.total / perimeter, _well_l2(cfg), gap,
                             result.iterations, result.converged))
    return rows


def snap_sweep_epsilons(kappa: float, flux_over_kappa: float, hints) -> list[float]:
    return [admissible_epsilons(kappa, kappa * flux_over_kappa, h)[0] for h in hints]


# -------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScalingRow:
    height: float
    energy: float
    per_height: float
    converged: bool


def scaling_check(kappa: float, eps0: float, heights, *, delta: float = 0.25, n: int = 256,
                  opts: MinimizeOptions = MinimizeOptions()) -> list[ScalingRow]:
    profile = minimize_profile1d(kappa)
    rows = []
    for b in heights:
        res = cell_minimize(kappa, eps0, delta, "dirichlet", n, height=float(b), profile=profile, opts=opts)
        rows.append(ScalingRow(float(b), res.energy.total, res.energy.total / b, res.converged))
    return rows


# ------------------------------------------------------------------ CSV


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def table_csv(rows, metadata: dict) -> str:
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key} = {value}\n")
    if rows:
        names = list(rows[0].__dataclass_fields__)
        buf.write(",".join(names) + "\n")
        for row in rows:
            buf.write(",".join(fmt(getattr(row, k)) for k in names) + "\n")
    return buf.getvalue()


def check_admissible_density(cfg: Configuration, slack: float = 1e-6) -> float:
    """max rho - 1; positive beyond slack means the minimizer left the physical range."""
    excess = float(np.max(density(cfg.u))) - 1.0
    if excess > slack:
        raise NumericalError(f"max rho = {1.0 + excess!r} exceeds 1 + {slack!r}")
    return excess

