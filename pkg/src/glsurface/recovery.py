"""Recovery configurations around a polyhedral set on the flux torus.

Pipeline: offsets zeta -> (rho_n, B_n) -> global potential A_n -> auxiliary
block potential A0_n -> phase by spanning-tree integration of
alpha h (A_n - A0_n) over the graph of sites in E^c u T -> u_n = rho_n e^{i theta_n}.

Each edge i owns a fixed "column": sites whose projection lands on its
squares and whose distance to the edge line is below s + h (s = eps_n/eps0).
Inside a column everything is the rescaled, extended building block, so
the fields there do not depend on where the tube boundary falls.  Outside
the columns B_n is 0 on E^c u T and ramps to 1/sqrt2 across one grid cell
at the deep-interior boundary.  Both rules are continuous in zeta, so the
total flux can be tuned by bisection to round-off.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .energy import EnergyBreakdown, energy_densities, total_energy
from .fieldcore import (SQRT2, Configuration, LinkField, NumericalError, Params, TorusGrid, ValidationError,
                        discrete_curl, exact_sum, quantization_number, torus)
from .polygeom import (CORNER, DEEP, OUTSIDE, SQUARE, EdgeDecomposition, Labels, PolyhedralSet, classify,
                       edge_frame, edge_squares)
from .profile1d import BuildingBlock

DEFECT_TOL = 1e-6
FLUX_TOL = 1e-10


class QuantizationError(NumericalError):
    """Phase assembly failed to close; ``report`` carries the loop audit."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


def check_quantization(params: Params, tol: float = 1e-9) -> float:
    """Distance of alpha b_ext/(2 pi kappa) to the nearest integer; raises if above tol."""
    q = quantization_number(params)
    dist = abs(q - round(q))
    if dist > tol:
        raise QuantizationError(f"quantization violated: alpha*b_ext/(2*pi*kappa) = {q!r} "
                             f"is {dist:.3e} away from an integer")
    return dist


# ------------------------------------------------------------- geometry


@dataclass(frozen=True)
class EdgeWindow:
    edge: int
    component: int
    axis: int                 # 0 if the edge runs along x1, 1 if along x2
    sign: float               # component of -tangent along that axis
    idx: np.ndarray           # flat indices of sites whose parallel link carries block potential
    offset: np.ndarray        # distance of those sites from the edge line (inward positive)
    column: np.ndarray        # flat indices of plaquettes owned by this edge


@dataclass(frozen=True)
class RecoveryGeometry:
    grid: TorusGrid
    E: PolyhedralSet
    dec: EdgeDecomposition
    sd: np.ndarray                    # signed distance per site
    site_component: np.ndarray        # nearest component per site
    windows: tuple[EdgeWindow, ...]
    column_owner: np.ndarray          # edge index per plaquette, -1 if none
    approximate: bool

    @property
    def side(self) -> float:
        return self.dec.side


def prepare_geometry(E: PolyhedralSet, grid: TorusGrid, eps_n: float, eps0: float) -> RecoveryGeometry:
    if not grid.is_torus:
        raise ValidationError("recovery runs on the flux torus")
    dec = edge_squares(E, eps_n, None, eps0)
    s, h = dec.side, grid.h
    X1, X2 = grid.coordinates()
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    sd = E.signed_distance(pts).reshape(grid.shape)
    owner = E.component_of_edge()
    if owner.max() > 0:
        dist = np.stack([E.distance(pts, np.nonzero(owner == c)[0]) for c in range(owner.max() + 1)])
        site_component = np.argmin(dist, axis=0).reshape(grid.shape)
    else:
        site_component = np.zeros(grid.shape, dtype=int)

    column_owner = np.full(grid.n * grid.n, -1, dtype=np.int32)
    windows = []
    for i, e in enumerate(E.edges):
        fr = edge_frame(E, i, pts)
        lo, _ = dec.trims[i]
        slot = np.floor((fr.along - lo) / s)
        in_range = (slot >= 0) & (slot < dec.counts[i])
        window = in_range & (np.abs(fr.offset) < s + 3.0 * h)
        column = in_range & (np.abs(fr.offset) < s + h)
        axis = int(np.argmax(np.abs(e.tangent)))
        free = column & (column_owner < 0)
        column_owner[free] = i
        windows.append(EdgeWindow(i, int(owner[i]), axis, float(-e.tangent[axis]),
                                  np.nonzero(window)[0], fr.offset[window], np.nonzero(free)[0]))
    return RecoveryGeometry(grid, E, dec, sd, site_component, tuple(windows),
                            column_owner.reshape(grid.shape), not E.rectilinear)


# --------------------------------------------------------- scalar fields


def _site_zeta(geo: RecoveryGeometry, zetas) -> np.ndarray:
    return np.asarray(zetas, dtype=float)[geo.site_component]


def edge_potential(geo: RecoveryGeometry, block: BuildingBlock, zetas, i: int) -> LinkField:
    """Extended rescaled block potential of edge i on its window links (0 elsewhere)."""
    win = geo.windows[i]
    s = geo.side
    y1 = (win.offset - zetas[win.component]) / s
    values = s * block.shape_fn.potential(y1) * win.sign
    comps = [np.zeros(geo.grid.n * geo.grid.n), np.zeros(geo.grid.n * geo.grid.n)]
    comps[win.axis][win.idx] = values
    shape = geo.grid.shape
    return LinkField(comps[0].reshape(shape), comps[1].reshape(shape), 0.0)


def _ramp(geo: RecoveryGeometry, zetas) -> np.ndarray:
    """Per-plaquette deep-interior fraction, averaged over the four corners."""
    s, h = geo.side, geo.grid.h
    frac = np.clip((geo.sd - _site_zeta(geo, zetas) - 0.5 * s) / h, 0.0, 1.0)
    up1 = np.roll(frac, -1, axis=0)
    return 0.25 * (frac + up1 + np.roll(frac, -1, axis=1) + np.roll(up1, -1, axis=1))


def build_scalar_fields(geo: RecoveryGeometry, block: BuildingBlock, zetas,
                        components=None) -> tuple[np.ndarray, np.ndarray]:
    """(rho_n per site, B_n per plaquette); ``components`` restricts B_n to plaquettes
    owned by the listed components (for per-component flux)."""
    zetas = np.asarray(zetas, dtype=float)
    rho = block.shape_fn.density((geo.sd - _site_zeta(geo, zetas)) / geo.side)
    return rho, _field(geo, block, zetas, components)


def _field(geo: RecoveryGeometry, block: BuildingBlock, zetas, components=None) -> np.ndarray:
    B = _ramp(geo, zetas) / SQRT2
    flat = B.reshape(-1)
    for win in geo.windows:
        if win.column.size == 0:
            continue
        curl = discrete_curl(edge_potential(geo, block, zetas, win.edge), geo.grid).reshape(-1)
        flat[win.column] = curl[win.column]
    if components is not None:
        keep = np.isin(geo.site_component, list(components))
        B = np.where(keep, B, 0.0)
    return B


def flux_of(geo: RecoveryGeometry, block: BuildingBlock, zetas, components=None) -> float:
    B = _field(geo, block, np.asarray(zetas, dtype=float), components)
    return exact_sum(B) * geo.grid.plaquette_area


def _bisect(fn, target: float, lo: float, hi: float, tol: float) -> float:
    f_lo, f_hi = fn(lo) - target, fn(hi) - target
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise NumericalError("flux offset not bracketed: h(-s/2) and h(s/2) lie on the same side of the "
                             "target; use a smaller eps_n")
    best, best_err = lo, abs(f_lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = fn(mid) - target
        if abs(f_mid) < best_err:
            best, best_err = mid, abs(f_mid)
        if best_err <= tol:
            break
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return best


def component_targets(E: PolyhedralSet, params: Params) -> list[float]:
    """Per-component flux targets: quantized areas/sqrt2, the last component taking the rest."""
    n_comp = len(E.components())
    alpha, total = params.alpha, params.flux_target
    targets = []
    for c in range(n_comp - 1):
        quanta = math.floor(alpha * E.component_area(c) / (2.0 * math.pi * SQRT2))
        targets.append(2.0 * math.pi * quanta / alpha)
    targets.append(total - sum(targets))
    return targets


def solve_flux_offsets(geo: RecoveryGeometry, params: Params, block: BuildingBlock,
                       tol: float | None = None) -> tuple[float, ...]:
    if tol is None:
        # the seam transition turns a flux error dc into a loop defect alpha*dc
        tol = min(FLUX_TOL, 1e-10 * 2.0 * math.pi / params.alpha)
    half = 0.5 * geo.side * (1.0 - 1e-12)
    targets = component_targets(geo.E, params)
    zetas = [0.0] * len(targets)
    for c, target in enumerate(targets):
        def flux_c(z, c=c):
            trial = list(zetas)
            trial[c] = z
            return flux_of(geo, block, trial, components=[c])
        zetas[c] = _bisect(flux_c, target, -half, half, tol)
    return tuple(zetas)


# ------------------------------------------------------------- potentials


def _compensated_cumsum(values: np.ndarray) -> np.ndarray:
    """Kahan prefix sums along axis 0 (vectorized over the other axis)."""
    out = np.empty_like(values)
    total = np.zeros(values.shape[1:])
    carry = np.zeros(values.shape[1:])
    for i in range(values.shape[0]):
        y = values[i] - carry
        t = total + y
        carry = (t - total) - y
        total = t
        out[i] = total
    return out


def global_potential(B: np.ndarray, grid: TorusGrid) -> LinkField:
    """Discrete primitive of B on the flux torus with twist_c = mean(B).

    Rows whose line integral of B differs from the mean are balanced by a
    row-constant a1 = phi_j (phi_{j+1} - phi_j = h (c - row integral)), and
    a2 integrates B plus the matching correction along x1, so every row
    closes over the seam.  discrete_curl(result) equals B to round-off.
    """
    h = grid.h
    twist = exact_sum(B) * h * h / (grid.side * grid.side)
    running = _compensated_cumsum(B * h)
    row_integral = running[-1]
    dphi = h * (twist * grid.side - row_integral)
    dphi -= exact_sum(dphi) / dphi.size      # the increments must close around x2
    phi = np.concatenate([[0.0], _compensated_cumsum(dphi)[:-1]])
    a2eff = np.zeros_like(B)
    a2eff[1:, :] = running[:-1, :]
    a2eff += np.arange(B.shape[0])[:, None] * dphi[None, :]
    x1, _ = grid.axes()
    a2 = a2eff - twist * x1[:, None]
    a1 = np.broadcast_to(phi[None, :], B.shape).copy()
    return LinkField(a1, a2, twist)


def aux_fields(geo: RecoveryGeometry, block: BuildingBlock, zetas) -> tuple[LinkField, np.ndarray]:
    """Block potential on links starting in E^c u T, and the (zero) block phase."""
    zetas = np.asarray(zetas, dtype=float)
    in_graph = geo.sd < _site_zeta(geo, zetas) + 0.5 * geo.side
    a1 = np.zeros(geo.grid.shape)
    a2 = np.zeros(geo.grid.shape)
    for win in geo.windows:
        f = edge_potential(geo, block, zetas, win.edge)
        a1 += f.a1
        a2 += f.a2
    return LinkField(np.where(in_graph, a1, 0.0), np.where(in_graph, a2, 0.0), 0.0), np.zeros(geo.grid.shape)


# ------------------------------------------------------------------ phase


@dataclass(frozen=True)
class LoopReport:
    max_defect: float                 # max distance of (closing phase)/2pi to an integer
    worst_edge: tuple[int, int, int]  # (direction, i, j) of the worst closing edge
    windings: tuple[int, ...]         # distinct integer windings seen on closing edges
    components: int
    roots: tuple[tuple[int, int], ...]
    edges_checked: int


def link_weights(A: LinkField, A0: LinkField, params: Params, grid: TorusGrid,
                 theta0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Phase increments along the forward links, seam transition included."""
    alpha, h = params.alpha, grid.h
    x1, x2 = grid.axes()
    w1 = alpha * h * (A.a1 - A0.a1)
    w1[-1, :] -= alpha * A.twist_c * grid.side * x2
    w2 = alpha * h * (A.a2 + A.twist_c * x1[:, None] - A0.a2)
    if theta0 is not None:
        w1 = w1 + np.roll(theta0, -1, axis=0) - theta0
        w2 = w2 + np.roll(theta0, -1, axis=1) - theta0
    return w1, w2


def integrate_phase(A: LinkField, A0: LinkField, theta0: np.ndarray, in_graph: np.ndarray, params: Params,
                    grid: TorusGrid, defect_tol: float | None = DEFECT_TOL) -> tuple[np.ndarray, LoopReport]:
    n = grid.n
    w1, w2 = link_weights(A, A0, params, grid, theta0)
    idx = np.arange(n * n).reshape(n, n)
    nxt1, nxt2 = np.roll(idx, -1, axis=0), np.roll(idx, -1, axis=1)
    ok1 = in_graph & np.roll(in_graph, -1, axis=0)
    ok2 = in_graph & np.roll(in_graph, -1, axis=1)
    src = np.concatenate([idx[ok1], idx[ok2]])
    dst = np.concatenate([nxt1[ok1], nxt2[ok2]])
    size = n * n
    graph = coo_matrix((np.ones(src.size), (src, dst)), shape=(size, size)).tocsr()
    graph = graph + graph.T
    n_comp, comp_label = connected_components(graph, directed=False)
    nodes = np.nonzero(in_graph.ravel())[0]
    comp_of_nodes = comp_label[nodes]
    roots = []
    for c in np.unique(comp_of_nodes):
        roots.append(int(nodes[comp_of_nodes == c].min()))

    pred = np.full(size, -1, dtype=np.int64)
    for r in roots:
        _, p = breadth_first_order(graph, r, directed=False, return_predecessors=True)
        members = p >= 0
        pred[members] = p[members]
        pred[r] = r
    # increment along the tree edge pred -> node
    val = np.zeros(size)
    node = np.nonzero(pred >= 0)[0]
    node = node[pred[node] != node]
    pi, pj = np.divmod(pred[node], n)
    ni, nj = np.divmod(node, n)
    fwd1 = (ni == (pi + 1) % n) & (nj == pj)
    bwd1 = (pi == (ni + 1) % n) & (nj == pj)
    fwd2 = (nj == (pj + 1) % n) & (ni == pi)
    bwd2 = (pj == (nj + 1) % n) & (ni == pi)
    step = np.zeros(node.size)
    step[fwd1] = w1[pi[fwd1], pj[fwd1]]
    step[bwd1] = -w1[ni[bwd1], nj[bwd1]]
    step[fwd2] = w2[pi[fwd2], pj[fwd2]]
    step[bwd2] = -w2[ni[bwd2], nj[bwd2]]
    val[node] = step
    ptr = np.where(pred >= 0, pred, np.arange(size))
    # pointer jumping: val[x] is the increment from ptr[x] to x; roots point at themselves with 0
    while True:
        nxt = ptr[ptr]
        if np.array_equal(nxt, ptr):
            break
        val = val + val[ptr]
        ptr = nxt
    theta = (val + theta0.ravel()[ptr]).reshape(n, n)
    theta = np.where(in_graph, theta, 0.0)

    # closing defects on every graph edge
    d1 = theta + w1 - np.roll(theta, -1, axis=0)
    d2 = theta + w2 - np.roll(theta, -1, axis=1)
    turns1 = d1[ok1] / (2.0 * math.pi)
    turns2 = d2[ok2] / (2.0 * math.pi)
    frac1 = np.abs(turns1 - np.round(turns1))
    frac2 = np.abs(turns2 - np.round(turns2))
    worst = (0, -1, -1)
    max_defect = 0.0
    if frac1.size and frac1.max() >= max_defect:
        k = int(np.argmax(frac1))
        max_defect = float(frac1[k])
        worst = (1, *map(int, np.argwhere(ok1)[k]))
    if frac2.size and frac2.max() > max_defect:
        k = int(np.argmax(frac2))
        max_defect = float(frac2[k])
        worst = (2, *map(int, np.argwhere(ok2)[k]))
    windings = tuple(sorted(set(np.round(np.concatenate([turns1, turns2])).astype(np.int64).tolist())))
    report = LoopReport(max_defect, worst, windings, len(roots),
                        tuple(divmod(r, n) for r in roots), int(turns1.size + turns2.size))
    if defect_tol is not None and max_defect > defect_tol:
        raise QuantizationError(f"quantization violated: worst closing defect {max_defect:.3e} turns at "
                                f"edge (dir, i, j) = {worst}; graph components = {len(roots)}", report)
    return theta, report


def curl_defect(A: LinkField, A0: LinkField, in_graph: np.ndarray, grid: TorusGrid) -> float:
    """Max |curl(A - A0)| over plaquettes with all four corners in the phase graph."""
    diff = LinkField(A.a1 - A0.a1, A.a2 - A0.a2, A.twist_c)
    curl = discrete_curl(diff, grid)
    up1 = np.roll(in_graph, -1, axis=0)
    full = in_graph & up1 & np.roll(in_graph, -1, axis=1) & np.roll(up1, -1, axis=1)
    return float(np.max(np.abs(curl[full]), initial=0.0))


def loop_holonomy(w1: np.ndarray, w2: np.ndarray, i0: int, j0: int, i1: int, j1: int) -> float:
    """Phase accumulated counterclockwise around the grid rectangle [i0, i1] x [j0, j1]."""
    total = exact_sum(w1[i0:i1, j0]) + exact_sum(w2[i1, j0:j1])
    total -= exact_sum(w1[i0:i1, j1]) + exact_sum(w2[i0, j0:j1])
    return total


# ----------------------------------------------------------------- report


@dataclass(frozen=True)
class RecoveryReport:
    cfg: Configuration
    energy: EnergyBreakdown
    target: float
    flux_error: float
    max_loop_defect: float
    zeta: tuple[float, ...]
    rho_l1_gap: float
    side: float
    corner_energy: float
    square_energy_mean: float
    square_count: int
    region_energy: dict = field(default_factory=dict)
    component_fluxes: tuple[float, ...] = ()
    component_targets: tuple[float, ...] = ()
    corner_area: float = 0.0
    sigma_cell: float = 0.0
    approximate: bool = False
    loops: LoopReport | None = None
    phase_mismatch_outside_squares: float = 0.0

    def summary(self) -> dict:
        p = self.cfg.params
        return {
            "epsilon": p.epsilon, "kappa": p.kappa, "b_ext": p.b_ext, "alpha": p.alpha,
            "n": self.cfg.grid.n, "square_side": self.side, "sigma_cell": self.sigma_cell,
            "energy": self.energy.total, "grad_sym": self.energy.grad_sym, "grad_bogo": self.energy.grad_bogo,
            "well": self.energy.well, "target": self.target, "ratio": self.energy.total / self.target,
            "flux_error": self.flux_error, "max_loop_defect": self.max_loop_defect,
            "zeta": list(self.zeta), "rho_l1_gap": self.rho_l1_gap, "corner_energy": self.corner_energy,
            "corner_area": self.corner_area, "square_energy_mean": self.square_energy_mean,
            "square_count": self.square_count, "region_energy": self.region_energy,
            "component_fluxes": list(self.component_fluxes), "component_targets": list(self.component_targets),
            "approximate": self.approximate,
            "loop_windings": list(self.loops.windings) if self.loops else [],
            "graph_components": self.loops.components if self.loops else 0,
            "phase_mismatch_outside_squares": self.phase_mismatch_outside_squares,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True, default=_json_float)


def _json_float(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(type(value))


def _labels(geo: RecoveryGeometry, zetas) -> Labels:
    dec = geo.dec.with_zetas(zetas)
    X1, X2 = geo.grid.coordinates()
    pts = np.stack([X1, X2], axis=-1)
    return classify(pts, geo.E, dec, sd=geo.sd)


def build_recovery(E: PolyhedralSet, params: Params, block: BuildingBlock, n: int = 512, *,
                   check: bool = True, defect_tol: float | None = DEFECT_TOL,
                   geometry: RecoveryGeometry | None = None) -> RecoveryReport:
    if check:
        check_quantization(params)
        if abs(params.flux_target - E.area / SQRT2) > 1e-12:
            raise ValidationError(f"b_ext/kappa must equal |E|/sqrt2 = {E.area / SQRT2!r} "
                                  f"(got {params.flux_target!r})")
    grid = torus(n)
    eps_n = params.epsilon
    geo = geometry or prepare_geometry(E, grid, eps_n, block.eps0)
    zetas = solve_flux_offsets(geo, params, block)
    rho, B = build_scalar_fields(geo, block, zetas)
    A = global_potential(B, grid)
    A0, theta0 = aux_fields(geo, block, zetas)
    in_graph = geo.sd < _site_zeta(geo, zetas) + 0.5 * geo.side
    theta, loops = integrate_phase(A, A0, theta0, in_graph, params, grid, defect_tol)
    cfg = Configuration(rho * np.exp(1j * theta), A, grid, params)

    energy = total_energy(cfg)
    labels = _labels(geo, zetas)
    region_energy = {name: total_energy(cfg, labels.kind == code).total
                     for code, name in ((OUTSIDE, "outside"), (DEEP, "deep_interior"),
                                        (SQUARE, "square"), (CORNER, "corner"))}
    square_mask = labels.kind == SQUARE
    dens = sum(energy_densities(cfg))
    key = labels.edge[square_mask].astype(np.int64) * 1_000_000 + labels.square[square_mask]
    _, inverse = np.unique(key, return_inverse=True)
    per_square = np.bincount(inverse, weights=dens[square_mask])
    h2 = grid.plaquette_area
    fluxes = tuple(exact_sum(np.where(geo.site_component == c, B, 0.0)) * h2
                   for c in range(len(zetas)))
    outside_E = (geo.sd < 0.0).astype(float)
    w1, w2 = link_weights(A, A0, params, grid, theta0)
    mismatch = _phase_mismatch(theta, w1, w2, in_graph & ~square_mask & (rho > 0.0))
    return RecoveryReport(
        cfg=cfg, energy=energy, target=block.sigma_cell * E.perimeter,
        flux_error=abs(exact_sum(B) * h2 - params.flux_target), max_loop_defect=loops.max_defect,
        zeta=tuple(zetas), rho_l1_gap=exact_sum(np.abs(rho - outside_E)) * h2, side=geo.side,
        corner_energy=region_energy["corner"], square_energy_mean=float(np.mean(per_square)),
        square_count=int(per_square.size), region_energy=region_energy, component_fluxes=fluxes,
        component_targets=tuple(component_targets(E, params)),
        corner_area=float(np.count_nonzero(labels.kind == CORNER)) * h2, sigma_cell=block.sigma_cell,
        approximate=geo.approximate, loops=loops, phase_mismatch_outside_squares=mismatch)


def _phase_mismatch(theta, w1, w2, mask) -> float:
    """Largest |exp(i(theta(y) - theta(x) - w)) - 1| over links leaving masked sites
    towards masked sites."""
    worst = 0.0
    for axis, w in ((0, w1), (1, w2)):
        both = mask & np.roll(mask, -1, axis=axis)
        if np.any(both):
            jump = np.roll(theta, -1, axis=axis) - theta - w
            worst = max(worst, float(np.max(np.abs(np.exp(1j * jump[both]) - 1.0))))
    return worst
