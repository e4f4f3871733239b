"""Resolvents, fractional moments, eigenfunction correlators, decay fits.

The localization diagnostics all reduce to matrix elements of
R(z) = (U - z)^{-1} for z off the unit circle, and to the correlator

    Q(mu, nu) = sum_k |<e_mu, psi_k>| |<psi_k, e_nu>|

over an orthonormal eigenbasis, which bounds |<e_mu, f(U) e_nu>| for every
function of sup-norm at most one on the circle.  Exponential decay of
either quantity in |mu - nu| is the finite-volume localization witness.
"""

from __future__ import annotations

import cmath
import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
import scipy.stats

from .lattice import (BoxSpec, GeometryError, Site, boundary_of, interior_of,
                      neighborhood)
from .operators import NetworkOperator, build_operator
from .parallel import run_trials
from .spectral import NumericalError, Spectrum, diagonalize

RESIDUAL_TOL = 1e-10
_SPARSE_SOLVE_DIM = 2048


@dataclass(frozen=True)
class SpectralParameter:
    """Point z = rho * e^{i theta} off the unit circle."""

    rho: float
    theta: float

    def __post_init__(self):
        if abs(self.rho - 1.0) == 0.0:
            raise ValueError("|z| must differ from 1")

    @property
    def z(self) -> complex:
        return self.rho * cmath.exp(1j * self.theta)

    @property
    def circle_distance(self) -> float:
        return abs(self.rho - 1.0)

    @classmethod
    def from_complex(cls, z: complex) -> "SpectralParameter":
        return cls(rho=abs(z), theta=cmath.phase(z))


def _as_complex(z) -> complex:
    return z.z if isinstance(z, SpectralParameter) else complex(z)


class ResolventSolver:
    """Factorized (U - z) with certified column solves.

    One factorization serves all columns; each solve is checked against its
    residual and refined once before being rejected.
    """

    def __init__(self, op: NetworkOperator, z, residual_tol: float = RESIDUAL_TOL):
        self.op = op
        self.z = _as_complex(z)
        self.residual_tol = residual_tol
        shifted = op.matrix - self.z * scipy.sparse.identity(
            op.dim, dtype=np.complex128, format="csc")
        self._shifted = shifted
        if op.dim <= _SPARSE_SOLVE_DIM:
            try:
                self._lu = scipy.sparse.linalg.splu(shifted)
            except RuntimeError as exc:
                raise NumericalError(f"factorization of (U - z) failed: {exc}")
        else:
            raise NumericalError(f"dimension {op.dim} above solver limit")

    def column(self, nu) -> np.ndarray:
        """x with (U - z) x = e_nu, i.e. x[mu] = <e_mu, R(z) e_nu>."""
        idx = nu if isinstance(nu, (int, np.integer)) else self.op.sites.index(nu)
        rhs = np.zeros(self.op.dim, dtype=np.complex128)
        rhs[idx] = 1.0
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self._shifted @ x - rhs)
        if res > self.residual_tol:
            x = x + self._lu.solve(rhs - self._shifted @ x)
            res = np.linalg.norm(self._shifted @ x - rhs)
            if res > self.residual_tol:
                raise NumericalError(
                    f"resolvent solve residual {res:.3e} at z = {self.z:.6g} "
                    f"(near-singular shift)")
        return x

    def element(self, mu, nu) -> complex:
        col = self.column(nu)
        idx = mu if isinstance(mu, (int, np.integer)) else self.op.sites.index(mu)
        return complex(col[idx])


def resolvent_element(op: NetworkOperator, z, mu, nu) -> complex:
    """<e_mu, (U - z)^{-1} e_nu> by a certified linear solve."""
    return ResolventSolver(op, z).element(mu, nu)


# -- fractional moments ---------------------------------------------------------

@dataclass
class MomentRecord:
    mu: Site
    nu: Site
    s: float
    z: SpectralParameter
    phi: float
    estimate: float
    stderr: float
    trials: int
    dropped: int = 0

    @property
    def distance(self) -> float:
        return math.hypot(self.mu[0] - self.nu[0], self.mu[1] - self.nu[1])


def _batch_stderr(values: np.ndarray, batches: int = 10) -> float:
    """Standard error via batch means (robust to mild within-trial correlation)."""
    n = len(values)
    if n < 2:
        return float("nan")
    batches = min(batches, n)
    means = [chunk.mean() for chunk in np.array_split(values, batches)]
    return float(np.std(means, ddof=1) / math.sqrt(batches))


@dataclass(frozen=True)
class _MomentTrialParams:
    phi: float
    z: complex
    box: BoxSpec
    pairs: tuple
    seed: object


def _moment_trial(params: _MomentTrialParams, t: int):
    op = build_operator(params.phi, params.box, (params.seed, t))
    try:
        solver = ResolventSolver(op, params.z)
        out = []
        for nu in sorted({nu for _, nu in params.pairs}):
            col = solver.column(nu)
            out.append((nu, np.array([col[op.sites.index(mu)]
                                      for mu, n2 in params.pairs if n2 == nu])))
        return out
    except NumericalError:
        return None


def fractional_moment_mc(phi, z, s: float, pairs, box: BoxSpec, trials: int,
                         seed, workers: int = 1) -> list[MomentRecord]:
    """Monte Carlo means of |<e_mu, R(z) e_nu>|^s for a list of site pairs.

    The plain empirical mean is the right estimator here: the s-th moment
    with s < 1 is uniformly bounded, so no heavy-tail correction is needed.
    Failed solves are dropped and counted, never returned as zeros.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie strictly inside (0, 1)")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    zc = _as_complex(z)
    pairs = tuple((Site(*mu), Site(*nu)) for mu, nu in pairs)
    params = _MomentTrialParams(phi=float(phi), z=zc, box=box, pairs=pairs,
                                seed=seed)
    results = run_trials(trials, functools.partial(_moment_trial, params), workers)
    kept = [r for r in results if r is not None]
    dropped = trials - len(kept)
    if not kept:
        raise NumericalError("every trial failed its resolvent solve")
    by_pair = {pair: [] for pair in pairs}
    for trial in kept:
        for nu, values in trial:
            sub = [pair for pair in pairs if pair[1] == nu]
            for pair, val in zip(sub, values):
                by_pair[pair].append(abs(val) ** s)
    zp = SpectralParameter.from_complex(zc)
    records = []
    for (mu, nu), vals in by_pair.items():
        arr = np.array(vals)
        records.append(MomentRecord(mu=mu, nu=nu, s=s, z=zp, phi=float(phi),
                                    estimate=float(arr.mean()),
                                    stderr=_batch_stderr(arr),
                                    trials=len(arr), dropped=dropped))
    return records


# -- eigenfunction correlator ---------------------------------------------------

def _checked_basis(spectrum: Spectrum, tol: float = 1e-8) -> np.ndarray:
    v = spectrum.eigenvectors
    if v is None:
        raise ValueError("spectrum carries no eigenvectors")
    gram = v.conj().T @ v
    defect = np.abs(gram - np.eye(len(gram))).max()
    if defect > tol:
        raise NumericalError(f"eigenbasis not orthonormal: defect {defect:.3e}")
    return v


def correlator(source: NetworkOperator | Spectrum) -> np.ndarray:
    """Q(mu, nu) = sum_k |v_k(mu)| |v_k(nu)|: symmetric, entries in [0, 1]."""
    spec = source if isinstance(source, Spectrum) else diagonalize(source)
    a = np.abs(_checked_basis(spec))
    return a @ a.T


def correlator_row(source: NetworkOperator | Spectrum, site) -> np.ndarray:
    """One row Q(site, .) without materializing the full matrix."""
    spec = source if isinstance(source, Spectrum) else diagonalize(source)
    a = np.abs(_checked_basis(spec))
    return a @ a[spec.site_index(site)]


# -- decay fitting ----------------------------------------------------------------

@dataclass
class DecayFit:
    g: float
    c: float
    r_squared: float
    ci_low: float
    ci_high: float
    distances: list
    bin_means: list

    def to_dict(self) -> dict:
        return {"g": self.g, "c": self.c, "r2": self.r_squared,
                "ci_low": self.ci_low, "ci_high": self.ci_high}


def fit_decay(samples, min_bins: int = 4, min_count: int = 30) -> DecayFit:
    """Least-squares fit of log(bin mean) against distance.

    samples: iterable of (distance, value) or (distance, value, count);
    distances are binned to the nearest integer.  Bins with non-positive
    means are excluded with a warning (they carry no log information).
    """
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for row in samples:
        d, v = row[0], row[1]
        w = row[2] if len(row) > 2 else 1
        b = int(round(d))
        sums[b] = sums.get(b, 0.0) + float(v) * w
        counts[b] = counts.get(b, 0) + w
    bins, means = [], []
    for b in sorted(sums):
        if counts[b] < min_count:
            raise ValueError(f"distance bin {b} has {counts[b]} < {min_count} samples")
        mean = sums[b] / counts[b]
        if mean <= 0.0:
            warnings.warn(f"distance bin {b} has non-positive mean; excluded")
            continue
        bins.append(b)
        means.append(mean)
    if len(bins) < min_bins:
        raise ValueError(f"need at least {min_bins} usable distance bins, got {len(bins)}")
    res = scipy.stats.linregress(bins, np.log(means))
    g = -res.slope
    half = 1.96 * res.stderr
    return DecayFit(g=float(g), c=float(math.exp(res.intercept)),
                    r_squared=float(res.rvalue ** 2),
                    ci_low=float(g - half), ci_high=float(g + half),
                    distances=bins, bin_means=means)


# -- contraction of the box-decoupled iteration -----------------------------------

@dataclass
class ContractionReport:
    lhs: float
    rhs: float
    q_hat: float
    phi: float
    s: float
    z: SpectralParameter
    box: BoxSpec
    ambient: BoxSpec
    nu: Site
    trials: int
    dropped: int
    rhs_sites: list


@dataclass(frozen=True)
class _ContractionTrialParams:
    phi: float
    z: complex
    ambient: BoxSpec
    nu: Site
    origin_idx: int
    target_idx: tuple
    s: float
    seed: object


def _contraction_trial(params: _ContractionTrialParams, t: int):
    op = build_operator(params.phi, params.ambient, (params.seed, t))
    try:
        col = ResolventSolver(op, params.z).column(params.nu)
    except NumericalError:
        return None
    lhs = abs(col[params.origin_idx]) ** params.s
    rhs = np.abs(col[list(params.target_idx)]) ** params.s
    return lhs, rhs


def contraction_check(phi, box: BoxSpec, nu, s: float, z, trials: int, seed,
                      ambient: BoxSpec | None = None,
                      workers: int = 1) -> ContractionReport:
    """Compare E|<e_0, R e_nu>|^s with the maximum over the wall neighborhood.

    The comparison set is the 8-neighborhood of the inner boundary of the
    box complement, taken inside an ambient torus standing in for the full
    lattice.  The ratio q_hat = lhs / max-rhs is the empirical contraction
    factor of one decoupling step; q_hat < 1 is the localization signature.
    """
    if box.mode != "box":
        raise GeometryError("contraction box must have box mode")
    if ambient is None:
        ambient = BoxSpec(L1=2 * box.L1 + 2, L2=2 * box.L2 + 2, mode="torus")
    if ambient.mode != "torus":
        raise GeometryError("ambient must be a torus")
    nu = Site(*nu)
    box_sites = set(box.sites())
    comp = {site for site in ambient.sites() if site not in box_sites}
    if nu not in interior_of(comp, ambient.wrap):
        raise GeometryError(f"nu = {tuple(nu)} is not interior to the box complement")
    ring = boundary_of(comp, ambient.wrap)
    targets = sorted(neighborhood(ring, wrap=ambient.wrap))
    imap = ambient.index_map()
    params = _ContractionTrialParams(
        phi=float(phi), z=_as_complex(z), ambient=ambient, nu=nu,
        origin_idx=imap.index(Site(0, 0)),
        target_idx=tuple(imap.index(b) for b in targets),
        s=float(s), seed=seed)
    results = run_trials(trials, functools.partial(_contraction_trial, params),
                         workers)
    kept = [r for r in results if r is not None]
    if not kept:
        raise NumericalError("every contraction trial failed its solve")
    lhs = float(np.mean([r[0] for r in kept]))
    rhs_means = np.mean([r[1] for r in kept], axis=0)
    rhs = float(rhs_means.max())
    q_hat = 0.0 if lhs == 0.0 else lhs / rhs
    return ContractionReport(lhs=lhs, rhs=rhs, q_hat=q_hat, phi=float(phi),
                             s=float(s), z=SpectralParameter.from_complex(_as_complex(z)),
                             box=box, ambient=ambient, nu=nu,
                             trials=trials, dropped=trials - len(kept),
                             rhs_sites=targets)
