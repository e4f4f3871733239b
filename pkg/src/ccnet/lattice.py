"""Integer-lattice geometry of the network model.

Sites are points mu = (m, n) of Z^2.  The deterministic dynamics acts on
4-site plaquettes ("blocks") of two chiralities: the counterclockwise block
(j, k) spans

    (2j, 2k), (2j+1, 2k), (2j+1, 2k+1), (2j, 2k+1)

in cyclic order, and the clockwise block (j, k) spans

    (2j, 2k), (2j, 2k-1), (2j-1, 2k-1), (2j-1, 2k).

Finite restrictions live on the box

    [-2*L1, 2*L1 - 1] x [-2*L2 + 2, 2*L2 + 1]

(16*L1*L2 sites, an exact disjoint union of vol = 4*L1*L2 counterclockwise
blocks), optionally shifted by an even offset, periodically wrapped in both
directions (torus) or only in x with a finite even x-extent (strip).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple


CCW = "ccw"
CW = "cw"

BOX = "box"
STRIP = "strip"
TORUS = "torus"


class GeometryError(ValueError):
    """Raised for geometry misuse: misaligned boxes, bad offsets, margins."""


class Site(NamedTuple):
    m: int
    n: int


class BlockCoord(NamedTuple):
    j: int
    k: int
    chirality: str


# Successor steps within a block keyed by parity (m % 2, n % 2).  The
# counterclockwise orbit is right/up/left/down, the clockwise orbit
# down/left/up/right; both visit the four parities cyclically.
_CCW_STEP = {(0, 0): (1, 0), (1, 0): (0, 1), (1, 1): (-1, 0), (0, 1): (0, -1)}
_CW_STEP = {(0, 0): (0, -1), (0, 1): (-1, 0), (1, 1): (0, 1), (1, 0): (1, 0)}


def ccw_successor(site) -> Site:
    """Next site on the counterclockwise orbit of site's ccw block."""
    m, n = site
    dm, dn = _CCW_STEP[(m % 2, n % 2)]
    return Site(m + dm, n + dn)


def cw_successor(site) -> Site:
    """Next site on the clockwise orbit of site's cw block."""
    m, n = site
    dm, dn = _CW_STEP[(m % 2, n % 2)]
    return Site(m + dm, n + dn)


def block_of(site, chirality=CCW) -> BlockCoord:
    """Block coordinate of the unique block of given chirality containing site."""
    m, n = site
    if chirality == CCW:
        return BlockCoord(m // 2, n // 2, CCW)
    if chirality == CW:
        # clockwise block (j, k) has m in {2j-1, 2j}, n in {2k-1, 2k}
        return BlockCoord(-((-m) // 2), -((-n) // 2), CW)
    raise ValueError(f"unknown chirality: {chirality!r}")


def block_sites(block: BlockCoord) -> tuple[Site, Site, Site, Site]:
    """The four sites of a block in cyclic (rotation) order."""
    j, k = block.j, block.k
    if block.chirality == CCW:
        return (Site(2 * j, 2 * k), Site(2 * j + 1, 2 * k),
                Site(2 * j + 1, 2 * k + 1), Site(2 * j, 2 * k + 1))
    return (Site(2 * j, 2 * k), Site(2 * j, 2 * k - 1),
            Site(2 * j - 1, 2 * k - 1), Site(2 * j - 1, 2 * k))


def block_anchor(site) -> Site:
    """The even-even site of site's counterclockwise block."""
    m, n = site
    return Site(2 * (m // 2), 2 * (n // 2))


def same_block(a, b) -> bool:
    """True iff a and b lie in the same counterclockwise block."""
    return block_anchor(a) == block_anchor(b)


def neighborhood(sites: Iterable, wrap=None) -> set:
    """All beta = alpha + v with alpha in sites and |v|_inf = 1.

    The step v = 0 is excluded, so the result may overlap the input set.
    An optional wrap function reduces neighbors into a periodic window.
    """
    out = set()
    for m, n in sites:
        for dm in (-1, 0, 1):
            for dn in (-1, 0, 1):
                if dm == 0 and dn == 0:
                    continue
                beta = Site(m + dm, n + dn)
                out.add(wrap(beta) if wrap is not None else beta)
    return out


def interior_of(sites: Iterable, wrap=None) -> set:
    """Subset whose full 8-neighborhood stays inside the given set."""
    pool = {Site(m, n) for m, n in sites}
    out = set()
    for site in pool:
        ok = True
        for dm in (-1, 0, 1):
            for dn in (-1, 0, 1):
                if dm == 0 and dn == 0:
                    continue
                beta = Site(site.m + dm, site.n + dn)
                if wrap is not None:
                    beta = wrap(beta)
                if beta not in pool:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.add(site)
    return out


def boundary_of(sites: Iterable, wrap=None) -> set:
    """Subset with at least one 8-neighbor outside the given set."""
    pool = {Site(m, n) for m, n in sites}
    return pool - interior_of(pool, wrap)


@dataclass(frozen=True)
class BoxSpec:
    """Finite region of Z^2, always an exact union of counterclockwise blocks.

    mode "box":   [-2*L1, 2*L1-1] x [-2*L2+2, 2*L2+1] shifted by offset.
    mode "torus": same window, periodic wrap in both directions.
    mode "strip": x-extent `length` (even) starting at an even coordinate,
                  periodic in x; y as for a box of half-width M = L2.
    """

    L1: int
    L2: int
    offset: tuple = (0, 0)
    mode: str = BOX
    length: int = 0

    def __post_init__(self):
        if self.mode not in (BOX, STRIP, TORUS):
            raise GeometryError(f"unknown mode: {self.mode!r}")
        if self.mode == STRIP:
            if self.length < 2 or self.length % 2:
                raise GeometryError("strip length must be even and >= 2")
        elif self.L1 < 1:
            raise GeometryError("L1 must be a positive integer")
        if self.L2 < 1:
            raise GeometryError("L2 must be a positive integer")
        ox, oy = self.offset
        if ox % 2 or oy % 2:
            raise GeometryError(f"offset must be even in both components: {self.offset}")
        object.__setattr__(self, "offset", (int(ox), int(oy)))

    # -- window ------------------------------------------------------------

    @property
    def x_range(self) -> tuple[int, int]:
        ox = self.offset[0]
        if self.mode == STRIP:
            xmin = -2 * (self.length // 4)  # even start keeps blocks aligned
            return (xmin + ox, xmin + self.length - 1 + ox)
        return (-2 * self.L1 + ox, 2 * self.L1 - 1 + ox)

    @property
    def y_range(self) -> tuple[int, int]:
        oy = self.offset[1]
        return (-2 * self.L2 + 2 + oy, 2 * self.L2 + 1 + oy)

    @property
    def nx(self) -> int:
        lo, hi = self.x_range
        return hi - lo + 1

    @property
    def ny(self) -> int:
        lo, hi = self.y_range
        return hi - lo + 1

    @property
    def nsites(self) -> int:
        return self.nx * self.ny

    @property
    def vol(self) -> int:
        """Number of counterclockwise blocks (4*L1*L2 for a box)."""
        return self.nsites // 4

    @property
    def periodic_x(self) -> bool:
        return self.mode in (STRIP, TORUS)

    @property
    def periodic_y(self) -> bool:
        return self.mode == TORUS

    # -- membership and wrapping --------------------------------------------

    def contains(self, site) -> bool:
        m, n = site
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        return x0 <= m <= x1 and y0 <= n <= y1

    def wrap(self, site) -> Site:
        """Reduce a site into the window along the periodic directions.

        The window widths are even, so wrapping preserves parity and block
        structure.
        """
        m, n = site
        if self.periodic_x:
            x0 = self.x_range[0]
            m = (m - x0) % self.nx + x0
        if self.periodic_y:
            y0 = self.y_range[0]
            n = (n - y0) % self.ny + y0
        return Site(m, n)

    def displacement(self, a, b) -> tuple[int, int]:
        """Shortest displacement b - a, minimized over periodic images."""
        dm = b[0] - a[0]
        dn = b[1] - a[1]
        if self.periodic_x:
            dm = (dm + self.nx // 2) % self.nx - self.nx // 2
        if self.periodic_y:
            dn = (dn + self.ny // 2) % self.ny - self.ny // 2
        return (dm, dn)

    # -- enumeration ---------------------------------------------------------

    def sites(self) -> Iterator[Site]:
        """Row-major iteration: n (y) outer, m (x) inner."""
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        for n in range(y0, y1 + 1):
            for m in range(x0, x1 + 1):
                yield Site(m, n)

    def blocks(self) -> Iterator[BlockCoord]:
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        for k in range(y0 // 2, (y1 + 1) // 2):
            for j in range(x0 // 2, (x1 + 1) // 2):
                yield BlockCoord(j, k, CCW)

    def index_of(self, site) -> int:
        if not self.contains(site):
            raise KeyError(f"site {tuple(site)} outside {self}")
        (x0, _), (y0, _) = self.x_range, self.y_range
        return (site[1] - y0) * self.nx + (site[0] - x0)

    def site_of(self, index: int) -> Site:
        if not 0 <= index < self.nsites:
            raise KeyError(f"index {index} out of range")
        (x0, _), (y0, _) = self.x_range, self.y_range
        n, m = divmod(index, self.nx)
        return Site(m + x0, n + y0)

    def index_map(self) -> "IndexMap":
        return _box_index_map(self)

    def boundary(self) -> set:
        """Sites with an 8-neighbor outside the window (box mode only)."""
        if self.mode != BOX:
            raise GeometryError("boundary is defined for box mode")
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        return {s for s in self.sites()
                if s.m in (x0, x1) or s.n in (y0, y1)}

    def interior(self) -> set:
        if self.mode != BOX:
            raise GeometryError("interior is defined for box mode")
        return set(self.sites()) - self.boundary()


class IndexMap:
    """Bijection between a fixed site list and dense indices 0..len-1."""

    def __init__(self, sites: Iterable):
        self._sites = [Site(m, n) for m, n in sites]
        self._index = {s: i for i, s in enumerate(self._sites)}
        if len(self._index) != len(self._sites):
            raise GeometryError("duplicate sites in index map")

    def index(self, site) -> int:
        return self._index[Site(*site)]

    def site(self, index: int) -> Site:
        return self._sites[index]

    @property
    def sites(self) -> list:
        return self._sites

    def __contains__(self, site) -> bool:
        return Site(*site) in self._index

    def __len__(self) -> int:
        return len(self._sites)

    def __iter__(self) -> Iterator[Site]:
        return iter(self._sites)


@lru_cache(maxsize=128)
def _box_index_map(box: BoxSpec) -> IndexMap:
    return IndexMap(box.sites())


def complement_index_map(inner: BoxSpec, ambient: BoxSpec) -> IndexMap:
    """Index map over ambient sites outside the inner box, row-major."""
    if inner.mode != BOX:
        raise GeometryError("inner region must be a box")
    if not (ambient.contains(Site(*_corner(inner, 0))) and
            ambient.contains(Site(*_corner(inner, 1)))):
        raise GeometryError("inner box does not fit inside the ambient window")
    return IndexMap(s for s in ambient.sites() if not inner.contains(s))


def _corner(box: BoxSpec, which: int) -> Site:
    (x0, x1), (y0, y1) = box.x_range, box.y_range
    return Site(x0, y0) if which == 0 else Site(x1, y1)


def check_margin(inner: BoxSpec, ambient: BoxSpec, margin: int = 2) -> None:
    """Require at least `margin` sites between inner box and ambient window."""
    (ix0, ix1), (iy0, iy1) = inner.x_range, inner.y_range
    (ax0, ax1), (ay0, ay1) = ambient.x_range, ambient.y_range
    if (ix0 - ax0 < margin or ax1 - ix1 < margin or
            iy0 - ay0 < margin or ay1 - iy1 < margin):
        raise GeometryError(
            f"inner box needs a margin of {margin} sites inside the ambient window")
