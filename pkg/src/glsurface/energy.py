"""Discrete energy, its gradient, and the diagnostic functionals.

Per plaquette (weight h^2, collocated at the lower-left site):

    eps (1 - kappa sqrt2) (|D1 u|^2 + |D2 u|^2)
  + eps kappa sqrt2 |D2 u - i D1 u|^2
  + (1/eps) (B - (1 - |u|^2)/sqrt2)^2
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .fieldcore import (SQRT2, Configuration, LinkField, TorusGrid, covariant_diff, exact_sum,
                        stencil, supercurrent)


@dataclass(frozen=True)
class EnergyBreakdown:
    grad_sym: float
    grad_bogo: float
    well: float
    total: float
    region_area: float

    def to_json(self) -> str:
        return json.dumps({k: float(v) for k, v in asdict(self).items()})


def _weights(cfg: Configuration) -> tuple[float, float, float]:
    eps, kappa = cfg.params.epsilon, cfg.params.kappa
    return eps * (1.0 - kappa * SQRT2), eps * kappa * SQRT2, 1.0 / eps


def plaquette_mask(grid: TorusGrid, region) -> np.ndarray | None:
    """Accept a site mask or a plaquette mask; return a plaquette mask."""
    if region is None:
        return None
    region = np.asarray(region, dtype=bool)
    if region.shape == grid.plaquette_shape:
        return region
    if region.shape == grid.shape:
        return region[:-1, :-1]
    raise ValueError(f"region shape {region.shape} matches neither sites nor plaquettes")


def energy_densities(cfg: Configuration) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-plaquette (sym, bogo, well) energies, already multiplied by h^2."""
    st = stencil(cfg)
    d1, d2 = st.d1, st.d2
    w_sym, w_bogo, w_well = _weights(cfg)
    area = st.h * st.h
    rho2 = np.abs(st.u0) ** 2
    sym = w_sym * area * (np.abs(d1) ** 2 + np.abs(d2) ** 2)
    bogo = w_bogo * area * np.abs(d2 - 1j * d1) ** 2
    well = w_well * area * (st.curl - (1.0 - rho2) / SQRT2) ** 2
    return sym, bogo, well


def total_energy(cfg: Configuration, region=None) -> EnergyBreakdown:
    sym, bogo, well = energy_densities(cfg)
    mask = plaquette_mask(cfg.grid, region)
    if mask is not None:
        sym, bogo, well = sym[mask], bogo[mask], well[mask]
        area = float(np.count_nonzero(mask)) * cfg.grid.plaquette_area
    else:
        area = float(sym.size) * cfg.grid.plaquette_area
    parts = [exact_sum(x) for x in (sym, bogo, well)]
    return EnergyBreakdown(parts[0], parts[1], parts[2], parts[0] + parts[1] + parts[2], area)


def energy_value(cfg: Configuration) -> float:
    return total_energy(cfg).total


def energy_and_gradient(cfg: Configuration) -> tuple[float, np.ndarray, LinkField]:
    """Energy, d/d(Re u) + i d/d(Im u) per site, and d/da per link (twist fixed)."""
    st = stencil(cfg)
    grid, h = cfg.grid, st.h
    alpha, eps = cfg.params.alpha, cfg.params.epsilon
    w_sym, w_bogo, w_well = _weights(cfg)
    area = h * h

    pu1, pu2 = st.p1 * st.u1, st.p2 * st.u2
    d1, d2 = (pu1 - st.u0) / h, (pu2 - st.u0) / h
    z = d2 - 1j * d1
    rho2 = np.abs(st.u0) ** 2
    resid = st.curl - (1.0 - rho2) / SQRT2

    energy = (exact_sum(w_sym * area * (np.abs(d1) ** 2 + np.abs(d2) ** 2))
              + exact_sum(w_bogo * area * np.abs(z) ** 2)
              + exact_sum(w_well * area * resid ** 2))

    v1 = w_sym * d1 + 1j * w_bogo * z
    v2 = w_sym * d2 + w_bogo * z
    push1 = (2.0 * area / h) * v1
    push2 = (2.0 * area / h) * v2
    g_here = -push1 - push2 + (2.0 * SQRT2 * area / eps) * resid * st.u0
    g_next1 = np.conj(st.p1) * push1
    g_next2 = np.conj(st.p2) * push2

    link1 = 2.0 * area * alpha * np.imag(np.conj(v1) * pu1)
    link2 = 2.0 * area * alpha * np.imag(np.conj(v2) * pu2)
    flux_push = (2.0 * area * w_well / h) * resid

    if grid.is_torus:
        g_next1[-1, :] *= np.conj(st.seam)
        grad_u = g_here + np.roll(g_next1, 1, axis=0) + np.roll(g_next2, 1, axis=1)
        grad_a1 = link1 + flux_push - np.roll(flux_push, 1, axis=1)
        grad_a2 = link2 - flux_push + np.roll(flux_push, 1, axis=0)
    else:
        grad_u = np.zeros(grid.shape, dtype=complex)
        grad_u[:-1, :-1] += g_here
        grad_u[1:, :-1] += g_next1
        grad_u[:-1, 1:] += g_next2
        grad_a1 = np.zeros(grid.shape)
        grad_a2 = np.zeros(grid.shape)
        grad_a1[:-1, :-1] += link1 + flux_push
        grad_a1[:-1, 1:] -= flux_push
        grad_a2[:-1, :-1] += link2 - flux_push
        grad_a2[1:, :-1] += flux_push
    return energy, grad_u, LinkField(grad_a1, grad_a2, cfg.a.twist_c)


def energy_gradient(cfg: Configuration) -> tuple[np.ndarray, LinkField]:
    _, grad_u, grad_a = energy_and_gradient(cfg)
    return grad_u, grad_a


# ------------------------------------------------------------ diagnostics


def bogomolny_identity_field(cfg: Configuration) -> np.ndarray:
    """|D u|^2 - |D2 u - i D1 u|^2 - alpha rho^2 B - curl j, per plaquette."""
    grid, h = cfg.grid, cfg.grid.h
    full1, full2 = covariant_diff(cfg, 1), covariant_diff(cfg, 2)
    j1, j2 = supercurrent(cfg)
    st = stencil(cfg)
    if grid.is_torus:
        d1, d2 = full1, full2
        curl_j = (np.roll(j2, -1, axis=0) - j2 - np.roll(j1, -1, axis=1) + j1) / h
    else:
        d1, d2 = full1[:, :-1], full2[:-1, :]
        curl_j = (j2[1:, :] - j2[:-1, :] - j1[:, 1:] + j1[:, :-1]) / h
    rho2 = np.abs(st.u0) ** 2
    return (np.abs(d1) ** 2 + np.abs(d2) ** 2 - np.abs(d2 - 1j * d1) ** 2
            - cfg.params.alpha * rho2 * st.curl - curl_j)


def bogomolny_identity_residual(cfg: Configuration) -> float:
    """L1 norm of the pointwise identity residual."""
    return exact_sum(np.abs(bogomolny_identity_field(cfg))) * cfg.grid.plaquette_area


def integrated_bogomolny_gap(cfg: Configuration) -> float:
    """Integral of |Du|^2 - |D2 u - i D1 u|^2 - alpha rho^2 B (the curl term drops on the torus)."""
    return exact_sum(bogomolny_identity_field(cfg)) * cfg.grid.plaquette_area


def double_well(rho) -> np.ndarray:
    rho2 = np.asarray(rho, dtype=float) ** 2
    return 0.5 * np.minimum(2.0 * rho2, 1.0) * (1.0 - rho2) ** 2


def psi(rho) -> np.ndarray:
    rho2 = np.asarray(rho, dtype=float) ** 2
    # min(2, 1/rho^2) is 2 for rho^2 <= 1/2, which also keeps tiny rho from overflowing
    cap = np.where(rho2 > 0.5, 1.0 / np.where(rho2 > 0.5, rho2, 1.0), 2.0)
    return cap * (1.0 - rho2)


def modica_mortola(rho: np.ndarray, epsilon: float, grid: TorusGrid, region=None) -> float:
    h = grid.h
    if grid.is_torus:
        g1 = (np.roll(rho, -1, axis=0) - rho) / h
        g2 = (np.roll(rho, -1, axis=1) - rho) / h
        base = rho
    else:
        g1 = (rho[1:, :-1] - rho[:-1, :-1]) / h
        g2 = (rho[:-1, 1:] - rho[:-1, :-1]) / h
        base = rho[:-1, :-1]
    dens = epsilon * (g1 ** 2 + g2 ** 2) + double_well(base) / epsilon
    mask = plaquette_mask(grid, region)
    if mask is not None:
        dens = dens[mask]
    return exact_sum(dens) * h * h


def well_inequality_margin(rho, B):
    """RHS - LHS of W(rho) <= (B - (1-rho^2)/sqrt2)^2 + sqrt2 min(2rho^2,1) B (1-rho^2)."""
    rho = np.asarray(rho, dtype=float)
    B = np.asarray(B, dtype=float)
    rho2 = rho * rho
    cap = np.minimum(2.0 * rho2, 1.0)
    rhs = (B - (1.0 - rho2) / SQRT2) ** 2 + SQRT2 * cap * B * (1.0 - rho2)
    margin = rhs - double_well(rho)
    return float(margin) if margin.ndim == 0 else margin


@dataclass(frozen=True)
class MeissnerIndicator:
    lhs: float
    energy_sup: float
    gradient_part: float
    boundary_part: float


def meissner_indicator(cfg: Configuration, phi: np.ndarray) -> MeissnerIndicator:
    grid, h, eps = cfg.grid, cfg.grid.h, cfg.params.epsilon
    st = stencil(cfg)
    rho2 = np.abs(st.u0) ** 2
    phi_p = phi if grid.is_torus else phi[:-1, :-1]
    lhs = abs(exact_sum(rho2 * st.curl * phi_p)) * h * h
    energy = total_energy(cfg).total
    if grid.is_torus:
        g1 = (np.roll(phi, -1, axis=0) - phi) / h
        g2 = (np.roll(phi, -1, axis=1) - phi) / h
        boundary = 0.0
    else:
        g1 = (phi[1:, :-1] - phi[:-1, :-1]) / h
        g2 = (phi[:-1, 1:] - phi[:-1, :-1]) / h
        j1, j2 = supercurrent(cfg)
        # counterclockwise circulation of phi j along the rectangle boundary
        loop = (exact_sum(phi[:-1, 0] * j1[:, 0]) + exact_sum(phi[-1, :-1] * j2[-1, :])
                - exact_sum(phi[:-1, -1] * j1[:, -1]) - exact_sum(phi[0, :-1] * j2[0, :]))
        boundary = eps * abs(loop * h)
    grad_l2 = math.sqrt(exact_sum(g1 ** 2 + g2 ** 2) * h * h)
    return MeissnerIndicator(lhs, energy * float(np.max(np.abs(phi))),
                             math.sqrt(eps) * math.sqrt(energy) * grad_l2, boundary)
