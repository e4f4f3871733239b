"""Eigen-analysis of finite restrictions and the phi = 0 gap law.

At phi = 0 the dynamics is blockwise counterclockwise rotation: the fourth
power of U restricted to a block is det(D_block) times the identity, so the
block spectrum is an exact uniform rotation of the fourth roots of unity.
The distance-to-spectrum ("gap") probability then has a closed form: a
test point z misses the whole box spectrum by more than eta with
probability (1 - 4*l)^vol, l the normalized circle measure of the eta-ball
around z, valid for l < 1/4.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .lattice import BoxSpec, IndexMap, block_sites
from .operators import DisorderField, NetworkOperator, sample_disorder
from .parallel import run_trials

DENSE_LIMIT = 2048


class NumericalError(RuntimeError):
    """A solve or eigendecomposition failed its accuracy contract."""


@dataclass
class Spectrum:
    """Unit-circle eigenvalues (and optionally an orthonormal eigenbasis)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    geometry: BoxSpec
    phi: float
    seed: object = None
    sites: IndexMap | None = None  # compressed index sets (complement) differ
                                   # from the geometry's own map

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def site_index(self, site) -> int:
        imap = self.sites if self.sites is not None else self.geometry.index_map()
        return imap.index(site)

    def distance(self, z: complex) -> float:
        return float(np.abs(self.eigenvalues - z).min())


@dataclass(frozen=True)
class GapEvent:
    z: complex
    eta: float
    distance: float

    @property
    def hit(self) -> bool:
        return self.distance <= self.eta


def diagonalize(op: NetworkOperator, dense_limit: int = DENSE_LIMIT,
                tol: float = 1e-8) -> Spectrum:
    """Full eigendecomposition via the complex Schur form.

    For a unitary (hence normal) matrix the Schur factor is diagonal and the
    Schur basis is an exactly unitary eigenbasis, which keeps the correlator
    well defined; general-purpose eigensolvers do not guarantee that.
    """
    if op.dim > dense_limit:
        raise NumericalError(
            f"dimension {op.dim} exceeds the dense eigensolve limit {dense_limit}")
    dense = op.to_dense()
    try:
        t_mat, z_mat = scipy.linalg.schur(dense, output="complex")
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failure: {exc}; "
                             f"1-norm {np.abs(dense).sum(axis=0).max():.3e}")
    eigs = np.diag(t_mat).copy()
    off = t_mat - np.diag(eigs)
    if np.abs(off).max() > tol:
        raise NumericalError(
            f"Schur form not diagonal (matrix not normal?): "
            f"max off-diagonal {np.abs(off).max():.3e}")
    if np.abs(np.abs(eigs) - 1.0).max() > tol:
        raise NumericalError(
            f"eigenvalue modulus defect {np.abs(np.abs(eigs) - 1.0).max():.3e}")
    seed = op.disorder.seed if op.disorder is not None else None
    return Spectrum(eigenvalues=eigs, eigenvectors=z_mat,
                    geometry=op.geometry, phi=op.phi, seed=seed,
                    sites=op.sites)


@functools.lru_cache(maxsize=128)
def _block_index_table(box: BoxSpec) -> np.ndarray:
    """vol x 4 table of dense indices, one row per ccw block."""
    imap = box.index_map()
    table = np.empty((box.vol, 4), dtype=np.int64)
    for b, blk in enumerate(box.blocks()):
        for i, s in enumerate(block_sites(blk)):
            table[b, i] = imap.index(s)
    return table


def block_determinants(disorder: DisorderField, box: BoxSpec) -> np.ndarray:
    """Product of the four phases of each ccw block (uniform, i.i.d.)."""
    return disorder.phases[_block_index_table(box)].prod(axis=1)


_QUARTER_TURNS = np.array([1, 1j, -1, -1j])


def phi0_spectrum(disorder: DisorderField, box: BoxSpec) -> Spectrum:
    """Exact spectrum of the phi = 0 restriction, no matrix diagonalization.

    Each block contributes d^(1/4) times the four fourth roots of unity,
    d the product of its phases.
    """
    dets = block_determinants(disorder, box)
    roots = dets[:, None] ** 0.25 * _QUARTER_TURNS[None, :]
    return Spectrum(eigenvalues=roots.ravel(), eigenvectors=None,
                    geometry=box, phi=0.0, seed=disorder.seed)


def spectra_match(a: np.ndarray, b: np.ndarray) -> float:
    """Largest matched eigenvalue distance under an optimal pairing."""
    if len(a) != len(b):
        raise ValueError("spectra have different sizes")
    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# -- gap probability -----------------------------------------------------------

def arc_measure(z: complex, eta: float) -> float:
    """Normalized circle measure of B_eta(z) intersected with the unit circle.

    For z on the circle this is (2/pi)*arcsin(eta/2); off the circle the
    ball must still reach it (| |z|-1 | <= eta), otherwise the measure-zero
    regime is rejected rather than extrapolated.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    rho = abs(z)
    if abs(rho - 1.0) > eta:
        raise ValueError(
            f"ball of radius {eta} around z (|z| = {rho:.6g}) misses the circle")
    arg = (rho * rho + 1.0 - eta * eta) / (2.0 * rho)
    return math.acos(min(1.0, max(-1.0, arg))) / math.pi


def exact_miss_probability(z: complex, eta: float, box: BoxSpec) -> float:
    """P(dist(z, spectrum at phi=0) > eta) = (1 - 4*l)^vol, exact for l < 1/4."""
    ell = arc_measure(z, eta)
    if ell >= 0.25:
        raise ValueError(f"arc measure {ell:.4f} >= 1/4: product law does not apply")
    return (1.0 - 4.0 * ell) ** box.vol


def miss_lower_bound(eta: float, box: BoxSpec) -> float:
    """(1 - 2*eta)^vol, from the arc-measure bound eta/2 per ball."""
    return max(0.0, 1.0 - 2.0 * eta) ** box.vol


def gap_event(spectrum: Spectrum, z: complex, eta: float) -> GapEvent:
    return GapEvent(z=z, eta=eta, distance=spectrum.distance(z))


@dataclass
class GapProbability:
    z: complex
    eta: float
    box: BoxSpec
    trials: int
    hits: int
    exact_miss: float
    bound_miss: float

    @property
    def hit_rate(self) -> float:
        return self.hits / self.trials

    @property
    def miss_rate(self) -> float:
        return 1.0 - self.hit_rate

    @property
    def stderr(self) -> float:
        p = self.hit_rate
        return math.sqrt(p * (1.0 - p) / self.trials)


@dataclass(frozen=True)
class _GapTrialParams:
    seed: object
    box: BoxSpec
    z: complex
    eta: float


def _gap_trial(params: _GapTrialParams, t: int) -> bool:
    field = sample_disorder((params.seed, t), params.box)
    spec = phi0_spectrum(field, params.box)
    return spec.distance(params.z) <= params.eta


def gap_probability_mc(z: complex, eta: float, box: BoxSpec, trials: int,
                       seed, workers: int = 1) -> GapProbability:
    """Monte Carlo frequency of dist(z, phi=0 spectrum) <= eta.

    Returns the estimate together with the exact miss probability
    (1 - 4*l)^vol and the lower bound (1 - 2*eta)^vol for comparison.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    exact = exact_miss_probability(z, eta, box)  # validates the regime
    params = _GapTrialParams(seed=seed, box=box, z=complex(z), eta=float(eta))
    hits = run_trials(trials, functools.partial(_gap_trial, params), workers)
    return GapProbability(z=complex(z), eta=float(eta), box=box, trials=trials,
                          hits=int(sum(hits)), exact_miss=exact,
                          bound_miss=miss_lower_bound(eta, box))
