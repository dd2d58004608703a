"""Grids, fields and gauge-covariant lattice calculus.

Sites carry the order parameter ``u``; the link from ``x`` to ``x + h e_mu``
carries the real potential component ``a_mu(x)``.  Arrays are indexed
``[i, j]`` with ``i`` along ``x1`` and ``j`` along ``x2``.

Torus mode
    ``n x n`` sites at ``x = (i h, j h)`` on ``[0, side)^2``.  The potential is
    ``a_per + (0, twist_c * x1)``, so the effective direction-2 link value is
    ``a2 + twist_c * x1``.  Crossing the ``x1`` seam, the order parameter obeys
    ``u(x1 + side, x2) = exp(i alpha twist_c side x2) u(x1, x2)``, which is
    single valued in ``x2`` exactly when ``alpha * twist_c * side^2`` is a
    multiple of ``2 pi``.

Rectangle mode
    ``(nx, ny)`` sites including both boundary rows, covering
    ``[-width/2, width/2] x [-height/2, height/2]``; plaquettes are
    ``(nx - 1, ny - 1)``.

Every plaquette quantity (covariant differences, ``rho^2`` and ``B``) is
collocated at the plaquette's lower-left site.
"""
from __future__ import annotations

import enum
import io
import math
import struct
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)
TOL_ADMISSIBLE = 1e-6


class ValidationError(ValueError):
    """Input outside the model's admissible range."""


class NumericalError(RuntimeError):
    """A computation failed to reach its postcondition."""


def exact_sum(values) -> float:
    """Deterministic reduction: numpy pairwise summation over a C-ordered copy."""
    return float(np.sum(np.ascontiguousarray(values, dtype=np.float64).ravel()))


@dataclass(frozen=True)
class Params:
    epsilon: float
    kappa: float
    b_ext: float
    alpha: float

    @property
    def flux_target(self) -> float:
        return self.b_ext / self.kappa


def make_params(epsilon: float, kappa: float, b_ext: float = 0.0) -> Params:
    epsilon, kappa, b_ext = float(epsilon), float(kappa), float(b_ext)
    if not epsilon > 0.0:
        raise ValidationError(f"epsilon > 0 violated (epsilon = {epsilon!r})")
    if not kappa > 0.0:
        raise ValidationError(f"kappa > 0 violated (kappa = {kappa!r})")
    if not kappa < 1.0 / SQRT2:
        raise ValidationError(f"kappa ≥ 1/√2 (kappa = {kappa!r})")
    if not b_ext >= 0.0:
        raise ValidationError(f"b_ext ≥ 0 violated (b_ext = {b_ext!r})")
    if not b_ext < kappa / SQRT2:
        raise ValidationError(f"b_ext ≥ kappa/√2 (b_ext = {b_ext!r}, kappa/√2 = {kappa / SQRT2!r})")
    return Params(epsilon, kappa, b_ext, 1.0 / (kappa * epsilon * epsilon))


class DomainKind(str, enum.Enum):
    TORUS = "torus_with_flux"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid; ``n`` counts cells along x1 and ``h = side / n``.

    For rectangles ``width`` and ``height`` must be integer multiples of ``h``.
    """

    n: int
    side: float = 1.0
    domain_kind: DomainKind = DomainKind.TORUS
    width: float | None = None
    height: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"n ≥ 2 violated (n = {self.n})")
        if self.domain_kind is DomainKind.RECTANGLE:
            for name in ("width", "height"):
                value = getattr(self, name)
                if value is None:
                    object.__setattr__(self, name, float(self.side))
                    continue
                cells = value / self.h
                if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
                    raise ValidationError(f"{name} must be a positive multiple of h (got {value!r})")

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def is_torus(self) -> bool:
        return self.domain_kind is DomainKind.TORUS

    @property
    def shape(self) -> tuple[int, int]:
        if self.is_torus:
            return (self.n, self.n)
        return (round(self.width / self.h) + 1, round(self.height / self.h) + 1)

    @property
    def plaquette_shape(self) -> tuple[int, int]:
        nx, ny = self.shape
        return (nx, ny) if self.is_torus else (nx - 1, ny - 1)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        if self.is_torus:
            return np.arange(nx) * self.h, np.arange(ny) * self.h
        return (-0.5 * self.width + np.arange(nx) * self.h,
                -0.5 * self.height + np.arange(ny) * self.h)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    @property
    def plaquette_area(self) -> float:
        return self.h * self.h


def torus(n: int, side: float = 1.0) -> TorusGrid:
    return TorusGrid(n, side, DomainKind.TORUS)


def rectangle(n: int, width: float = 1.0, height: float = 1.0) -> TorusGrid:
    """Rectangle ``Q_{width,height}`` with ``n`` cells per unit length."""
    return TorusGrid(n, 1.0, DomainKind.RECTANGLE, float(width), float(height))


@dataclass(frozen=True)
class LinkField:
    a1: np.ndarray
    a2: np.ndarray
    twist_c: float = 0.0

    @classmethod
    def zeros(cls, grid: TorusGrid, twist_c: float = 0.0) -> "LinkField":
        return cls(np.zeros(grid.shape), np.zeros(grid.shape), float(twist_c))


@dataclass(frozen=True)
class Configuration:
    u: np.ndarray
    a: LinkField
    grid: TorusGrid
    params: Params

    def __post_init__(self):
        shape = self.grid.shape
        for name, arr in (("u", self.u), ("a1", self.a.a1), ("a2", self.a.a2)):
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, grid expects {shape}")
        if not self.grid.is_torus and self.a.twist_c != 0.0:
            raise ValidationError("twist_c must be 0 in rectangle mode")

    def replace(self, **changes) -> "Configuration":
        fields_ = dict(u=self.u, a=self.a, grid=self.grid, params=self.params)
        fields_.update(changes)
        return Configuration(**fields_)


def density(u: np.ndarray) -> np.ndarray:
    return np.abs(u)


def phase(u: np.ndarray) -> np.ndarray:
    """arg(u) where |u| > 0, zero elsewhere."""
    return np.where(np.abs(u) > 0.0, np.angle(u), 0.0)


# ---------------------------------------------------------------- stencils


@dataclass(frozen=True)
class PlaquetteStencil:
    """Everything the energy needs, collocated at lower-left plaquette sites.

    ``u1`` / ``u2`` are the forward neighbours (seam transition already applied),
    ``p1`` / ``p2`` the link phases ``exp(-i alpha h a_eff)``.
    """

    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    seam: np.ndarray | None
    curl: np.ndarray
    h: float

    @property
    def d1(self) -> np.ndarray:
        return (self.p1 * self.u1 - self.u0) / self.h

    @property
    def d2(self) -> np.ndarray:
        return (self.p2 * self.u2 - self.u0) / self.h


def seam_transition(cfg: Configuration) -> np.ndarray:
    """exp(i alpha c side x2) per x2 row, applied to u when wrapping in x1."""
    _, x2 = cfg.grid.axes()
    return np.exp(1j * cfg.params.alpha * cfg.a.twist_c * cfg.grid.side * x2)


def effective_a2(cfg: Configuration) -> np.ndarray:
    if not cfg.grid.is_torus:
        return cfg.a.a2
    x1, _ = cfg.grid.axes()
    return cfg.a.a2 + cfg.a.twist_c * x1[:, None]


def stencil(cfg: Configuration) -> PlaquetteStencil:
    grid, h, alpha = cfg.grid, cfg.grid.h, cfg.params.alpha
    u, a1, a2eff = cfg.u, cfg.a.a1, effective_a2(cfg)
    if grid.is_torus:
        seam = seam_transition(cfg)
        u1 = np.roll(u, -1, axis=0)
        u1[-1, :] *= seam
        u2 = np.roll(u, -1, axis=1)
        return PlaquetteStencil(u, u1, u2, np.exp(-1j * alpha * h * a1), np.exp(-1j * alpha * h * a2eff),
                                seam, discrete_curl(cfg.a, grid), h)
    return PlaquetteStencil(u[:-1, :-1], u[1:, :-1], u[:-1, 1:],
                            np.exp(-1j * alpha * h * a1[:-1, :-1]),
                            np.exp(-1j * alpha * h * a2eff[:-1, :-1]),
                            None, discrete_curl(cfg.a, grid), h)


def covariant_diff(cfg: Configuration, direction: int) -> np.ndarray:
    """Forward covariant difference along axis ``direction`` (1 or 2).

    Torus: shape (n, n).  Rectangle: direction 1 has shape (nx-1, ny),
    direction 2 has shape (nx, ny-1).
    """
    grid, h, alpha, u = cfg.grid, cfg.grid.h, cfg.params.alpha, cfg.u
    if direction not in (1, 2):
        raise ValidationError("direction must be 1 or 2")
    if grid.is_torus:
        if direction == 1:
            nxt = np.roll(u, -1, axis=0)
            nxt[-1, :] *= seam_transition(cfg)
            return (np.exp(-1j * alpha * h * cfg.a.a1) * nxt - u) / h
        return (np.exp(-1j * alpha * h * effective_a2(cfg)) * np.roll(u, -1, axis=1) - u) / h
    if direction == 1:
        return (np.exp(-1j * alpha * h * cfg.a.a1[:-1, :]) * u[1:, :] - u[:-1, :]) / h
    return (np.exp(-1j * alpha * h * cfg.a.a2[:, :-1]) * u[:, 1:] - u[:, :-1]) / h


def bogomolny(d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    if d1.shape != d2.shape:
        raise ValidationError(f"mismatched component shapes {d1.shape} vs {d2.shape}")
    return d2 - 1j * d1


def discrete_curl(a: LinkField, grid: TorusGrid) -> np.ndarray:
    h = grid.h
    if grid.is_torus:
        # the seam shift (twist * side) plus the in-cell growth twist * h per column
        # add up to twist * h on every plaquette
        return (np.roll(a.a2, -1, axis=0) - a.a2 - np.roll(a.a1, -1, axis=1) + a.a1) / h + a.twist_c
    return (a.a2[1:, :-1] - a.a2[:-1, :-1] - a.a1[:-1, 1:] + a.a1[:-1, :-1]) / h


def supercurrent(cfg: Configuration) -> tuple[np.ndarray, np.ndarray]:
    """(j1, j2) with j_mu = Im(conj(u) D_mu u); rectangle components trimmed like covariant_diff."""
    d1, d2 = covariant_diff(cfg, 1), covariant_diff(cfg, 2)
    if cfg.grid.is_torus:
        return np.imag(np.conj(cfg.u) * d1), np.imag(np.conj(cfg.u) * d2)
    return np.imag(np.conj(cfg.u[:-1, :]) * d1), np.imag(np.conj(cfg.u[:, :-1]) * d2)


def gauge_transform(cfg: Configuration, phi: np.ndarray) -> Configuration:
    """u -> u e^{i phi}, a_mu -> a_mu + (forward difference of phi)/(alpha h)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != cfg.grid.shape:
        raise ValidationError(f"phi has shape {phi.shape}, grid expects {cfg.grid.shape}")
    scale = cfg.params.alpha * cfg.grid.h
    if cfg.grid.is_torus:
        d1 = np.roll(phi, -1, axis=0) - phi
        d2 = np.roll(phi, -1, axis=1) - phi
    else:
        d1 = np.zeros_like(phi)
        d2 = np.zeros_like(phi)
        d1[:-1, :] = phi[1:, :] - phi[:-1, :]
        d2[:, :-1] = phi[:, 1:] - phi[:, :-1]
    a = LinkField(cfg.a.a1 + d1 / scale, cfg.a.a2 + d2 / scale, cfg.a.twist_c)
    return cfg.replace(u=cfg.u * np.exp(1j * phi), a=a)


# ------------------------------------------------------- quantization, units


def quantization_number(params: Params, side: float = 1.0) -> float:
    """alpha * b_ext/kappa * side^2 / (2 pi); an integer for admissible epsilon."""
    return params.alpha * params.flux_target * side * side / (2.0 * math.pi)


def admissible_epsilons(kappa: float, b_ext: float, epsilon_hint: float) -> tuple[float, int]:
    if b_ext == 0.0:
        raise ValidationError("no quantization constraint (b_ext = 0): any epsilon is admissible")
    make_params(1.0, kappa, b_ext)
    if not epsilon_hint > 0.0:
        raise ValidationError(f"epsilon_hint > 0 violated (got {epsilon_hint!r})")
    m_real = b_ext / (2.0 * math.pi * kappa * kappa * epsilon_hint * epsilon_hint)
    candidates = {max(1, math.floor(m_real)), max(1, math.ceil(m_real))}

    def eps_of(m: int) -> float:
        return math.sqrt(b_ext / (2.0 * math.pi * m * kappa * kappa))

    m = min(sorted(candidates), key=lambda k: abs(eps_of(k) - epsilon_hint))
    return eps_of(m), m


def nondimensionalize(kappa: float, sample_side_L: float, b_ext: float) -> Params:
    if not sample_side_L > 0.0:
        raise ValidationError(f"L > 0 violated (L = {sample_side_L!r})")
    return make_params(1.0 / (kappa * sample_side_L), kappa, b_ext)


# ------------------------------------------------------------ snapshots
#
# Binary layout (all little endian):
#   b"GL2D\0"  version:uint8  kind:uint8  nx:int64  ny:int64  n:int64
#   side h width height twist_c epsilon kappa b_ext alpha : float64
#   then Re u, Im u, a1, a2 as row-major float64 arrays of shape (nx, ny).
# Text layout: '#'-prefixed "key = value" header lines, a column line, then
#   one "i,j,re_u,im_u,a1,a2" row per site in row-major order (17 digits).

MAGIC = b"GL2D\0"
VERSION = 1
_KINDS = {DomainKind.TORUS: 0, DomainKind.RECTANGLE: 1}
_HEADER = struct.Struct("<BBqqq9d")


def _header_values(cfg: Configuration):
    g, p = cfg.grid, cfg.params
    nx, ny = g.shape
    width = g.width if g.width is not None else g.side
    height = g.height if g.height is not None else g.side
    return (VERSION, _KINDS[g.domain_kind], nx, ny, g.n,
            g.side, g.h, width, height, cfg.a.twist_c, p.epsilon, p.kappa, p.b_ext, p.alpha)


def _rebuild(kind_code, n, side, width, height, twist_c, epsilon, kappa, b_ext, alpha, arrays):
    kind = {v: k for k, v in _KINDS.items()}[kind_code]
    grid = TorusGrid(n, side, kind, None if kind is DomainKind.TORUS else width,
                     None if kind is DomainKind.TORUS else height)
    params = Params(epsilon, kappa, b_ext, alpha)
    re, im, a1, a2 = arrays
    return Configuration(re + 1j * im, LinkField(a1, a2, twist_c), grid, params)


def snapshot_bytes(cfg: Configuration) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_HEADER.pack(*_header_values(cfg)))
    for arr in (cfg.u.real, cfg.u.imag, cfg.a.a1, cfg.a.a2):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def snapshot_from_bytes(data: bytes) -> Configuration:
    if data[: len(MAGIC)] != MAGIC:
        raise ValidationError("not a GL2D snapshot (bad magic)")
    offset = len(MAGIC)
    version, kind, nx, ny, n, side, _h, width, height, twist_c, eps, kappa, b_ext, alpha = \
        _HEADER.unpack_from(data, offset)
    if version != VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    offset += _HEADER.size
    size = nx * ny
    flat = np.frombuffer(data, dtype="<f8", count=4 * size, offset=offset).astype(np.float64)
    arrays = [flat[k * size:(k + 1) * size].reshape(nx, ny).copy() for k in range(4)]
    return _rebuild(kind, n, side, width, height, twist_c, eps, kappa, b_ext, alpha, arrays)


def write_snapshot(cfg: Configuration, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(cfg))


def read_snapshot(path) -> Configuration:
    with open(path, "rb") as fh:
        return snapshot_from_bytes(fh.read())


_TEXT_KEYS = ("version", "kind", "nx", "ny", "n", "side", "h", "width", "height",
              "twist_c", "epsilon", "kappa", "b_ext", "alpha")


def snapshot_text(cfg: Configuration) -> str:
    out = io.StringIO()
    out.write("# GL2D text snapshot\n")
    for key, value in zip(_TEXT_KEYS, _header_values(cfg)):
        out.write(f"# {key} = {value!r}\n" if isinstance(value, float) else f"# {key} = {value}\n")
    out.write("i,j,re_u,im_u,a1,a2\n")
    nx, ny = cfg.grid.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    table = np.column_stack([cfg.u.real.ravel(), cfg.u.imag.ravel(), cfg.a.a1.ravel(), cfg.a.a2.ravel()])
    for i, j, row in zip(ii.ravel(), jj.ravel(), table):
        out.write(f"{i},{j}," + ",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def snapshot_from_text(text: str) -> Configuration:
    header: dict[str, str] = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            if "=" in line:
                key, value = line[1:].split("=", 1)
                header[key.strip()] = value.strip()
            continue
        if not line or line.startswith("i,"):
            continue
        rows.append(line)
    nx, ny = int(header["nx"]), int(header["ny"])
    data = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2)
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    arrays = [data[:, k].reshape(nx, ny).copy() for k in range(2, 6)]
    f = {k: float(header[k]) for k in ("side", "width", "height", "twist_c", "epsilon", "kappa", "b_ext", "alpha")}
    return _rebuild(int(header["kind"]), int(header["n"]), f["side"], f["width"], f["height"], f["twist_c"],
                    f["epsilon"], f["kappa"], f["b_ext"], f["alpha"], arrays)


def uniform_configuration(grid: TorusGrid, params: Params, value: complex = 1.0,
                          twist_c: float = 0.0) -> Configuration:
    return Configuration(np.full(grid.shape, complex(value)), LinkField.zeros(grid, twist_c), grid, params)

