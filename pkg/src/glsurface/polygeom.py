"""Polyhedral subsets of the unit torus.

A set is given by closed boundary loops with the material on the left:
outer boundaries run counterclockwise, holes clockwise.  All vertices lie
in [0, 1)^2 and the set does not wrap around the torus, so a point is inside
iff its representative in [0, 1)^2 has winding number 1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .fieldcore import ValidationError

SHIFTS = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)], dtype=float)


@dataclass(frozen=True)
class Edge:
    loop: int
    index: int
    start: np.ndarray      # c^-
    end: np.ndarray        # c^+
    length: float
    tangent: np.ndarray
    normal: np.ndarray     # inward: tangent rotated by +90 degrees

    @property
    def axis_aligned(self) -> bool:
        return bool(np.min(np.abs(self.tangent)) < 1e-12)


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


@dataclass(frozen=True)
class PolyhedralSet:
    loops: tuple[np.ndarray, ...]
    edges: tuple[Edge, ...] = field(init=False)

    def __post_init__(self):
        loops = tuple(np.asarray(lp, dtype=float).reshape(-1, 2) for lp in self.loops)
        if not loops:
            raise ValidationError("a polyhedral set needs at least one loop")
        for lp in loops:
            if len(lp) < 3:
                raise ValidationError("each loop needs at least three vertices")
            if np.any(lp < 0.0) or np.any(lp >= 1.0):
                raise ValidationError("vertices must lie in [0, 1)^2")
        object.__setattr__(self, "loops", loops)
        edges = []
        for li, lp in enumerate(loops):
            for k in range(len(lp)):
                a, b = lp[k], lp[(k + 1) % len(lp)]
                vec = b - a
                length = float(math.hypot(*vec))
                if length == 0.0:
                    raise ValidationError(f"degenerate edge in loop {li}")
                tangent = vec / length
                edges.append(Edge(li, len(edges), a, b, length, tangent, np.array([-tangent[1], tangent[0]])))
        object.__setattr__(self, "edges", tuple(edges))
        self._check_simple()
        area = self.area
        if not 0.0 < area < 1.0:
            raise ValidationError(f"area must lie in (0, 1), got {area!r} (check loop orientation)")

    def _check_simple(self):
        for e, f in itertools.combinations(self.edges, 2):
            if _segments_intersect(e.start, e.end, f.start, f.end):
                raise ValidationError(f"edges {e.index} and {f.index} cross")

    # -------------------------------------------------------- measures

    @property
    def perimeter(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def area(self) -> float:
        return float(sum(_signed_area(lp) for lp in self.loops))

    @property
    def rectilinear(self) -> bool:
        return all(e.axis_aligned for e in self.edges)

    def components(self) -> list[tuple[int, list[int]]]:
        """(outer loop, hole loops) per connected component."""
        outers = [i for i, lp in enumerate(self.loops) if _signed_area(lp) > 0]
        holes = [i for i, lp in enumerate(self.loops) if _signed_area(lp) < 0]
        result = {i: [] for i in outers}
        for hole in holes:
            probe = self.loops[hole][0][None, :]
            owners = [i for i in outers if _winding(probe, self.loops[i])[0] != 0]
            if not owners:
                raise ValidationError(f"hole loop {hole} lies in no outer loop")
            # innermost owner: smallest area
            owner = min(owners, key=lambda i: _signed_area(self.loops[i]))
            result[owner].append(hole)
        return sorted(result.items())

    def component_of_edge(self) -> np.ndarray:
        owner = {}
        for ci, (outer, holes) in enumerate(self.components()):
            for lp in [outer, *holes]:
                owner[lp] = ci
        return np.array([owner[e.loop] for e in self.edges])

    def component_area(self, ci: int) -> float:
        outer, holes = self.components()[ci]
        return _signed_area(self.loops[outer]) + sum(_signed_area(self.loops[h]) for h in holes)

    # ------------------------------------------------------- distance

    def inside(self, points) -> np.ndarray:
        pts = np.mod(np.asarray(points, dtype=float).reshape(-1, 2), 1.0)
        wind = np.zeros(len(pts), dtype=int)
        for lp in self.loops:
            wind += _winding(pts, lp)
        return wind > 0

    def distance(self, points, edge_ids=None) -> np.ndarray:
        """Unsigned torus distance to the boundary (or to the listed edges)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        edges = self.edges if edge_ids is None else [self.edges[i] for i in edge_ids]
        best = np.full(len(pts), np.inf)
        for chunk in range(0, len(pts), 1 << 17):
            p = pts[chunk:chunk + (1 << 17)]
            local = np.full(len(p), np.inf)
            for e in edges:
                for shift in SHIFTS:
                    local = np.minimum(local, _segment_distance(p, e.start + shift, e.end + shift))
            best[chunk:chunk + len(p)] = local
        return best

    def signed_distance(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        d = self.distance(flat)
        sd = np.where(self.inside(flat), d, -d)
        return sd.reshape(pts.shape[:-1]) if pts.ndim > 1 else float(sd[0])


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / float(ab @ ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(p[:, 0] - closest[:, 0], p[:, 1] - closest[:, 1])


def _winding(pts: np.ndarray, loop: np.ndarray) -> np.ndarray:
    wind = np.zeros(len(pts), dtype=int)
    x, y = pts[:, 0], pts[:, 1]
    for k in range(len(loop)):
        (x0, y0), (x1, y1) = loop[k], loop[(k + 1) % len(loop)]
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        up = (y0 <= y) & (y1 > y) & (cross > 0)
        down = (y0 > y) & (y1 <= y) & (cross < 0)
        wind += up.astype(int) - down.astype(int)
    return wind


def signed_distance(E: PolyhedralSet, x) -> float | np.ndarray:
    return E.signed_distance(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Measures:
    perimeter: float
    area: float
    components: int
    simply_connected: tuple[bool, ...]


def measures(E: PolyhedralSet) -> Measures:
    comps = E.components()
    return Measures(E.perimeter, E.area, len(comps), tuple(not holes for _, holes in comps))


def tube(E: PolyhedralSet, eps_n: float, zeta: float, eps0: float):
    """Predicate for {zeta - s/2 < sd < zeta + s/2}, s = eps_n/eps0."""
    half = 0.5 * eps_n / eps0
    if not abs(zeta) < half:
        raise ValidationError(f"|zeta| < eps_n/(2 eps0) violated (zeta={zeta!r}, bound={half!r})")

    def contains(points) -> np.ndarray:
        sd = np.asarray(E.signed_distance(np.asarray(points, dtype=float)))
        return (sd > zeta - half) & (sd < zeta + half)

    return contains


def read_polygons(text: str) -> PolyhedralSet:
    """Blank-line separated blocks of "x y" vertex lines; '#' starts a comment."""
    loops, current = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                loops.append(current)
                current = []
            continue
        x, y = (float(v) for v in line.split())
        current.append((x, y))
    if current:
        loops.append(current)
    return PolyhedralSet(tuple(np.array(lp) for lp in loops))


def write_polygons(E: PolyhedralSet) -> str:
    blocks = ["\n".join(f"{float(x)!r} {float(y)!r}" for x, y in lp) for lp in E.loops]
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------- decomposition


@dataclass(frozen=True)
class EdgeDecomposition:
    E: PolyhedralSet
    side: float                       # s = eps_n / eps0
    trims: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    zetas: tuple[float, ...]          # one per component
    edge_component: tuple[int, ...]

    def zeta_of_edge(self, i: int) -> float:
        return self.zetas[self.edge_component[i]]

    def centers(self, i: int) -> np.ndarray:
        e = self.E.edges[i]
        lo, _ = self.trims[i]
        along = lo + (np.arange(self.counts[i]) + 0.5) * self.side
        return e.start + along[:, None] * e.tangent + self.zeta_of_edge(i) * e.normal

    def with_zetas(self, zetas) -> "EdgeDecomposition":
        zetas = tuple(float(z) for z in zetas)
        half = 0.5 * self.side
        for z in zetas:
            if not abs(z) < half:
                raise ValidationError(f"|zeta| < s/2 violated (zeta={z!r}, s/2={half!r})")
        return EdgeDecomposition(self.E, self.side, self.trims, self.counts, zetas, self.edge_component)

    @property
    def covered_length(self) -> float:
        return float(sum(self.counts) * self.side)


def _vertex_trim(e_in: Edge, e_out: Edge) -> float:
    """Minimal trim, in units of s, for strips of half-width s around two edges meeting
    at a vertex with the given directions."""
    cos_angle = float(np.clip(-(e_in.tangent @ e_out.tangent), -1.0, 1.0))
    angle = math.acos(cos_angle)                 # angle between the two rays leaving the vertex
    narrow = min(angle, 2.0 * math.pi - angle)
    if narrow < 1e-12:
        raise ValidationError(f"edges {e_in.index} and {e_out.index} fold back onto each other")
    return max(1.0, 1.0 / math.tan(0.5 * narrow)) if narrow < math.pi - 1e-12 else 1.0


def edge_squares(E: PolyhedralSet, eps_n: float, zeta_per_component=None, eps0: float = 1.0 / 16.0,
                 *, check_disjoint: bool = True) -> EdgeDecomposition:
    s = eps_n / eps0
    comps = E.components()
    owner = E.component_of_edge()
    if zeta_per_component is None:
        zeta_per_component = [0.0] * len(comps)
    shortest = min(e.length for e in E.edges)
    if not s < 0.5 * shortest:
        raise ValidationError(f"square side {s!r} not below half the shortest edge ({shortest!r})")

    # previous / next edge in each loop
    by_loop: dict[int, list[Edge]] = {}
    for e in E.edges:
        by_loop.setdefault(e.loop, []).append(e)
    trims, counts = [], []
    for e in E.edges:
        ring = by_loop[e.loop]
        k = ring.index(e)
        prev_e, next_e = ring[k - 1], ring[(k + 1) % len(ring)]
        lo_units = math.ceil(_vertex_trim(prev_e, e) - 1e-12)
        hi_units = math.ceil(_vertex_trim(e, next_e) - 1e-12)
        lo, hi = lo_units * s, hi_units * s
        count = math.floor((e.length - lo - hi) / s + 1e-9)
        if count < 1:
            raise ValidationError(f"edge {e.index} too short for square side {s!r}")
        lo = e.length - hi - count * s          # leftover goes to the c^- end
        trims.append((lo, hi))
        counts.append(count)

    dec = EdgeDecomposition(E, s, tuple(trims), tuple(counts), tuple(float(z) for z in zeta_per_component),
                            tuple(int(c) for c in owner))
    dec = dec.with_zetas(dec.zetas)
    if check_disjoint:
        _check_separation(dec)
    return dec


def strip_rectangle(dec: EdgeDecomposition, i: int, half_width: float) -> np.ndarray:
    """Corners of the region swept by edge i's squares, widened to ``half_width``."""
    e = dec.E.edges[i]
    lo, hi = dec.trims[i]
    a = e.start + lo * e.tangent
    b = e.end - hi * e.tangent
    off = half_width * e.normal
    return np.array([a - off, b - off, b + off, a + off])


def _convex_overlap(p: np.ndarray, q: np.ndarray, tol: float = 1e-12) -> bool:
    """Separating-axis test for open convex polygons (touching is not overlap)."""
    for poly in (p, q):
        for k in range(len(poly)):
            edge = poly[(k + 1) % len(poly)] - poly[k]
            axis = np.array([-edge[1], edge[0]])
            pp, qq = p @ axis, q @ axis
            if pp.max() <= qq.min() + tol * np.linalg.norm(axis) or qq.max() <= pp.min() + tol * np.linalg.norm(axis):
                return False
    return True


def _check_separation(dec: EdgeDecomposition) -> None:
    """Strips of half-width s (twice the squares' reach) must be pairwise disjoint."""
    s = dec.side
    rects = [strip_rectangle(dec, i, s) for i in range(len(dec.E.edges))]
    for i, j in itertools.combinations(range(len(rects)), 2):
        for shift in SHIFTS:
            if _convex_overlap(rects[i], rects[j] + shift):
                raise ValidationError(f"square side {s!r} too large for the feature size: doubled strips "
                                      f"of edges {i} and {j} overlap")


# ----------------------------------------------------------- labelling

OUTSIDE, DEEP, SQUARE, CORNER = 0, 1, 2, 3
LABEL_NAMES = {OUTSIDE: "outside", DEEP: "deep_interior", SQUARE: "square", CORNER: "corner"}


@dataclass(frozen=True)
class EdgeFrame:
    """Coordinates of points relative to one edge: along the tangent from c^-
    and along the inward normal from the edge line (minimal torus image
    relative to the edge midpoint)."""

    along: np.ndarray
    offset: np.ndarray


def edge_frame(E: PolyhedralSet, i: int, points: np.ndarray) -> EdgeFrame:
    e = E.edges[i]
    mid = 0.5 * (e.start + e.end)
    rel = points - mid
    rel = rel - np.round(rel)
    return EdgeFrame(rel @ e.tangent + 0.5 * e.length, rel @ e.normal)


@dataclass(frozen=True)
class Labels:
    kind: np.ndarray        # OUTSIDE / DEEP / SQUARE / CORNER
    edge: np.ndarray        # edge index for SQUARE, else -1
    square: np.ndarray      # square index along the edge, else -1
    y1: np.ndarray          # local block coordinates for SQUARE, nan elsewhere
    y2: np.ndarray
    sd: np.ndarray


def classify(points, E: PolyhedralSet, dec: EdgeDecomposition, sd=None) -> Labels:
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 2)
    sd = E.signed_distance(flat).reshape(-1) if sd is None else np.asarray(sd, dtype=float).reshape(-1)
    s = dec.side
    comp = _nearest_component(E, flat) if len(dec.zetas) > 1 else np.zeros(len(flat), dtype=int)
    zeta = np.asarray(dec.zetas)[comp]
    kind = np.full(len(flat), CORNER, dtype=np.int8)
    kind[sd <= zeta - 0.5 * s] = OUTSIDE
    kind[sd >= zeta + 0.5 * s] = DEEP
    edge = np.full(len(flat), -1, dtype=np.int32)
    square = np.full(len(flat), -1, dtype=np.int32)
    y1 = np.full(len(flat), np.nan)
    y2 = np.full(len(flat), np.nan)
    in_tube = kind == CORNER
    for i, e in enumerate(E.edges):
        fr = edge_frame(E, i, flat)
        lo, _ = dec.trims[i]
        z = dec.zeta_of_edge(i)
        j = np.floor((fr.along - lo) / s)
        hit = in_tube & (np.abs(fr.offset - z) < 0.5 * s) & (j >= 0) & (j < dec.counts[i]) & (edge < 0)
        edge[hit] = i
        square[hit] = j[hit].astype(np.int32)
        y1[hit] = (fr.offset[hit] - z) / s
        # local e2 corresponds to the direction -tangent
        y2[hit] = -((fr.along[hit] - lo) / s - (j[hit] + 0.5))
        kind[hit] = SQUARE
    return Labels(kind.reshape(shape), edge.reshape(shape), square.reshape(shape),
                  y1.reshape(shape), y2.reshape(shape), sd.reshape(shape))


def _nearest_component(E: PolyhedralSet, pts: np.ndarray) -> np.ndarray:
    owner = E.component_of_edge()
    n_comp = int(owner.max()) + 1
    dist = np.stack([E.distance(pts, np.nonzero(owner == c)[0]) for c in range(n_comp)])
    return np.argmin(dist, axis=0)


def corner_area(labels: Labels, cell_area: float) -> float:
    return float(np.count_nonzero(labels.kind == CORNER)) * cell_area
