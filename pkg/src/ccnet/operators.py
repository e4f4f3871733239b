"""Sparse unitaries of the network model.

The one-step operator is U = D * S(phi), with D diagonal carrying one
i.i.d. uniform phase per site and

    S(phi) = cos(phi) * S_ccw + i sin(phi) * S_cw,

the superposition of the two plaquette rotations (S_ccw, S_cw permutation
matrices moving each site to its successor within its counterclockwise or
clockwise block).  Every region we restrict to is an exact union of
counterclockwise blocks, so S_ccw never leaves the region; a finite
restriction stays unitary by redirecting the clockwise amplitude of any
column whose clockwise successor exits: that column's counterclockwise
coefficient is raised from cos(phi) to 1, i.e. the clockwise component is
fully transmitted along the wall.

Boundary modes
    full_torus        periodic wrap in both directions, wall-free
    walls             finite box with elastic walls on all four sides
    complement_walls  ambient torus minus an inner box, walls along the cut
    decoupled         U^walls(inner) (+) U^complement embedded in the ambient
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .lattice import (BOX, TORUS, BoxSpec, GeometryError, IndexMap,
                      Site, ccw_successor, check_margin, complement_index_map,
                      cw_successor)

FULL_TORUS = "full_torus"
WALLS = "walls"
COMPLEMENT_WALLS = "complement_walls"
DECOUPLED = "decoupled"


@dataclass(frozen=True)
class PhaseAngle:
    """Mixing angle phi with transmission t = cos(phi), reflection r = sin(phi)."""

    phi: float

    @property
    def t(self) -> float:
        return math.cos(self.phi)

    @property
    def r(self) -> float:
        return math.sin(self.phi)

    def __float__(self) -> float:
        return float(self.phi)


CRITICAL_PHI = math.pi / 4  # |t| = |r|


def phi_from_energy(epsilon: float) -> PhaseAngle:
    """Angle with |t| = 1/sqrt(1 + e^epsilon), epsilon the distance to the band center.

    epsilon = 0 gives the critical angle pi/4; epsilon -> +inf gives pi/2.
    """
    # log(1 + e^eps) evaluated stably for large |eps|
    t = math.exp(-0.5 * np.logaddexp(0.0, float(epsilon)))
    return PhaseAngle(math.acos(t))


@dataclass(frozen=True)
class DisorderField:
    """One uniform phase per site of a box, reproducible from its seed.

    Phases are exp(2*pi*i*u) with u uniform, drawn from a counter-based
    (Philox) stream keyed by the seed, in the box's row-major site order.
    """

    seed: object
    box: BoxSpec
    phases: np.ndarray = field(repr=False)

    def phase(self, site) -> complex:
        return self.phases[self.box.index_of(site)]

    def covers(self, sites) -> bool:
        return all(self.box.contains(s) for s in sites)

    def translate(self, nu) -> "DisorderField":
        """Field omega'(mu) = omega(mu + 2*nu), wrapped on the box if periodic."""
        shifted = np.empty_like(self.phases)
        for i, s in enumerate(self.box.index_map()):
            src = self.box.wrap(Site(s.m + 2 * nu[0], s.n + 2 * nu[1]))
            shifted[i] = self.phases[self.box.index_of(src)]
        return DisorderField(seed=None, box=self.box, phases=shifted)


def sample_disorder(seed, box: BoxSpec) -> DisorderField:
    """Draw the i.i.d. uniform phase field on a box.

    seed may be an int or a tuple of ints; identical seeds reproduce the
    field exactly and distinct seeds give independent streams.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    angles = rng.uniform(0.0, 2.0 * np.pi, box.nsites)
    return DisorderField(seed=seed, box=box, phases=np.exp(1j * angles))


@dataclass
class NetworkOperator:
    """A sparse unitary over an indexed site set, tagged with phi and boundary."""

    geometry: BoxSpec
    phi: float
    boundary: str
    matrix: sparse.csc_matrix
    sites: IndexMap
    disorder: DisorderField | None = None
    inner: BoxSpec | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec

    def apply_adjoint(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix.getH() @ vec


@dataclass
class CouplingOperator:
    """V = U - (U^walls (+) U^complement): the wall coupling of the decoupling."""

    matrix: sparse.csc_matrix
    inner: BoxSpec
    ambient: BoxSpec
    sites: IndexMap

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def max_entry(self) -> float:
        return 0.0 if self.matrix.nnz == 0 else float(np.abs(self.matrix.data).max())


def _assemble_s(phi: float, imap: IndexMap, member, wrap) -> sparse.csc_matrix:
    """COO assembly of S(phi) over an index set with redirected walls.

    member decides whether a (wrapped) clockwise successor stays inside;
    the counterclockwise successor always does for block-aligned regions.
    """
    c = math.cos(phi)
    s = math.sin(phi)
    n = len(imap)
    rows = np.empty(2 * n, dtype=np.int64)
    cols = np.empty(2 * n, dtype=np.int64)
    vals = np.empty(2 * n, dtype=np.complex128)
    k = 0
    for col, site in enumerate(imap):
        a = wrap(ccw_successor(site))
        if not member(a):
            raise GeometryError(f"region not block aligned at {tuple(site)}")
        b = wrap(cw_successor(site))
        if member(b):
            rows[k], cols[k], vals[k] = imap.index(a), col, c
            k += 1
            rows[k], cols[k], vals[k] = imap.index(b), col, 1j * s
            k += 1
        else:
            # wall column: clockwise amplitude transmitted along the wall
            rows[k], cols[k], vals[k] = imap.index(a), col, 1.0
            k += 1
    mat = sparse.coo_matrix((vals[:k], (rows[:k], cols[:k])), shape=(n, n))
    mat = mat.tocsc()
    mat.eliminate_zeros()
    return mat


def build_s(phi, box: BoxSpec) -> NetworkOperator:
    """Deterministic part S(phi) on a box, strip or torus.

    Torus: both successors wrap, no walls.  Box: elastic walls on all four
    sides (equals chi*S*chi + wall_term).  Strip: periodic in x, elastic
    walls on the top and bottom rows only.
    """
    phi = float(phi)
    imap = box.index_map()
    if box.mode == TORUS:
        mat = _assemble_s(phi, imap, lambda s: True, box.wrap)
        boundary = FULL_TORUS
    else:
        mat = _assemble_s(phi, imap, box.contains, box.wrap)
        boundary = WALLS
    return NetworkOperator(geometry=box, phi=phi, boundary=boundary,
                           matrix=mat, sites=imap)


def wall_term(phi, box: BoxSpec) -> sparse.csc_matrix:
    """The elastic-wall correction T(phi) of a finite box.

    T = (1 - cos phi) * [ sum over top/bottom rows of |m, y><m+1, y| resp.
    |m+1, y><m, y| (m even) + sum over right/left columns of |x, n+1><x, n|
    resp. |x, n><x, n+1| (n even) ]; 2*(2*L1) + 2*(2*L2) entries in total,
    norm at most 2*|1 - cos phi|.
    """
    if box.mode != BOX:
        raise GeometryError("wall_term is defined for box mode")
    phi = float(phi)
    w = 1.0 - math.cos(phi)
    imap = box.index_map()
    (x0, x1), (y0, y1) = box.x_range, box.y_range
    rows, cols = [], []
    for m in range(x0, x1, 2):  # m even; pairs (m, m+1)
        rows.append(imap.index(Site(m, y1)))
        cols.append(imap.index(Site(m + 1, y1)))
        rows.append(imap.index(Site(m + 1, y0)))
        cols.append(imap.index(Site(m, y0)))
    for n in range(y0, y1, 2):  # n even; pairs (n, n+1)
        rows.append(imap.index(Site(x1, n + 1)))
        cols.append(imap.index(Site(x1, n)))
        rows.append(imap.index(Site(x0, n)))
        cols.append(imap.index(Site(x0, n + 1)))
    vals = np.full(len(rows), w, dtype=np.complex128)
    mat = sparse.coo_matrix((vals, (rows, cols)),
                            shape=(box.nsites, box.nsites)).tocsc()
    mat.eliminate_zeros()
    return mat


def build_complement_s(phi, inner: BoxSpec, ambient: BoxSpec) -> NetworkOperator:
    """S(phi) on ambient-minus-inner with walls along the cut.

    Mirrors the box construction: clockwise components of the complement are
    fully transmitted along the inside faces of the cut.  The operator acts
    on the compressed index set of the complement sites.
    """
    if ambient.mode != TORUS:
        raise GeometryError("complement construction needs an ambient torus")
    phi = float(phi)
    imap = complement_index_map(inner, ambient)
    mat = _assemble_s(phi, imap, lambda s: s in imap, ambient.wrap)
    return NetworkOperator(geometry=ambient, phi=phi, boundary=COMPLEMENT_WALLS,
                           matrix=mat, sites=imap, inner=inner)


def build_u(disorder: DisorderField, s_op: NetworkOperator) -> NetworkOperator:
    """U = D * S: row mu of S scaled by the phase at site mu."""
    try:
        omega = np.array([disorder.phase(s) for s in s_op.sites])
    except KeyError as exc:
        raise GeometryError(f"disorder field does not cover the geometry: {exc}")
    mat = sparse.diags(omega).dot(s_op.matrix).tocsc()
    mat.eliminate_zeros()
    return NetworkOperator(geometry=s_op.geometry, phi=s_op.phi,
                           boundary=s_op.boundary, matrix=mat,
                           sites=s_op.sites, disorder=disorder,
                           inner=s_op.inner)


def build_operator(phi, box: BoxSpec, seed) -> NetworkOperator:
    """Sample a disorder field on the box and build U = D * S(phi)."""
    return build_u(sample_disorder(seed, box), build_s(phi, box))


def _embed(op: NetworkOperator, ambient_imap: IndexMap) -> sparse.coo_matrix:
    coo = op.matrix.tocoo()
    rows = np.fromiter((ambient_imap.index(op.sites.site(r)) for r in coo.row),
                       dtype=np.int64, count=coo.nnz)
    cols = np.fromiter((ambient_imap.index(op.sites.site(c)) for c in coo.col),
                       dtype=np.int64, count=coo.nnz)
    n = len(ambient_imap)
    return sparse.coo_matrix((coo.data, (rows, cols)), shape=(n, n))


def build_decoupled(disorder: DisorderField, phi, inner: BoxSpec,
                    ambient: BoxSpec) -> tuple[NetworkOperator, CouplingOperator]:
    """Split U on the ambient torus as U = (U^inner (+) U^complement) + V.

    Both summands of the direct sum carry elastic walls along the cut, so
    the decoupled operator is unitary; V is supported within distance one of
    the wall, has O(L1 + L2) entries, each O(|phi|), and vanishes at phi = 0.
    """
    if ambient.mode != TORUS:
        raise GeometryError("decoupling needs an ambient torus")
    check_margin(inner, ambient, margin=2)
    phi = float(phi)
    full = build_u(disorder, build_s(phi, ambient))
    u_in = build_u(disorder, build_s(phi, inner))
    u_out = build_u(disorder, build_complement_s(phi, inner, ambient))
    imap = ambient.index_map()
    dec = (_embed(u_in, imap) + _embed(u_out, imap)).tocsc()
    dec.eliminate_zeros()
    coupling = (full.matrix - dec).tocsc()
    coupling.eliminate_zeros()
    dec_op = NetworkOperator(geometry=ambient, phi=phi, boundary=DECOUPLED,
                             matrix=dec, sites=imap, disorder=disorder,
                             inner=inner)
    v_op = CouplingOperator(matrix=coupling, inner=inner, ambient=ambient,
                            sites=imap)
    return dec_op, v_op


# -- sparse-triplet text serialization ----------------------------------------

def _box_meta(box: BoxSpec | None):
    if box is None:
        return None
    return {"L1": box.L1, "L2": box.L2, "offset": list(box.offset),
            "mode": box.mode, "length": box.length}


def _box_from_meta(meta) -> BoxSpec | None:
    if meta is None:
        return None
    return BoxSpec(L1=meta["L1"], L2=meta["L2"], offset=tuple(meta["offset"]),
                   mode=meta["mode"], length=meta["length"])


def save_operator(op: NetworkOperator, path) -> None:
    """Write the operator as `# header-json` then `row col re im` lines.

    Entries appear in column-compressed order; numbers are written with
    full round-trip precision.
    """
    seed = op.disorder.seed if op.disorder is not None else None
    header = {
        "dimension": op.dim,
        "phi": op.phi,
        "boundary": op.boundary,
        "seed": seed,
        "geometry": _box_meta(op.geometry),
        "inner": _box_meta(op.inner),
        "format": "row col re im",
    }
    coo = op.matrix.tocsc().tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} "
                     f"{float(coo.data[i].real)!r} {float(coo.data[i].imag)!r}\n")


def load_operator(path) -> tuple[sparse.csc_matrix, dict]:
    """Read a sparse-triplet file back as (matrix, header dict)."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("missing header line")
        header = json.loads(first[1:])
        rows, cols, vals = [], [], []
        for line in fh:
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
    n = header["dimension"]
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    header["geometry"] = _box_from_meta(header.get("geometry"))
    header["inner"] = _box_from_meta(header.get("inner"))
    return mat, header


def unitarity_defect(mat: sparse.spmatrix) -> float:
    """max |(U* U - I)_{ij}|, the working definition of 'is unitary'."""
    gram = (mat.getH() @ mat).toarray()
    np.fill_diagonal(gram, gram.diagonal() - 1.0)
    return float(np.abs(gram).max())
