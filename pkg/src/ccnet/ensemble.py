"""Reproducible experiment drivers and delimited output.

Every experiment is a pure function of its configuration: trial i draws its
disorder from the stream keyed by (master seed, i), so reruns are
byte-identical for any worker count.  Output files carry a one-line JSON
metadata header (configuration echo, its hash, package version) followed by
a CSV data section; the report path also renders a matplotlib figure next
to the CSV unless figures are disabled.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .dynamics import spread_experiment
from .lattice import BOX, STRIP, TORUS, BoxSpec, GeometryError, Site
from .operators import (COMPLEMENT_WALLS, DECOUPLED, FULL_TORUS, WALLS,
                        build_complement_s, build_decoupled, build_operator,
                        build_u, sample_disorder, unitarity_defect)
from .parallel import run_trials
from .resolvent import (DecayFit, contraction_check, correlator_row,
                        fit_decay, fractional_moment_mc)
from .spectral import diagonalize, gap_probability_mc, phi0_spectrum, spectra_match

EXPERIMENTS = ("unitarity", "spectrum", "gaps", "moments", "correlator",
               "contraction", "spread", "strip")
OBSERVABLES = ("correlator_decay", "spread")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    phis: tuple = (0.05,)
    L1: int = 2
    L2: int = 2
    mode: str = BOX
    length: int = 0
    s: float = 0.5
    rhos: tuple = (1.05, 1.1)
    theta: float = 0.0
    theta_count: int = 16
    eta: float = 0.1
    p: float = 2.0
    horizon: int = 200
    trials: int = 200
    seeds: int = 8
    seed: int = 0
    workers: int = 1
    out: str | None = None
    fig: bool = True
    observable: str = "correlator_decay"
    nu: tuple | None = None
    d_min: int = 2
    d_max: int = 8
    cases: int = 50
    psi0: str | None = None

    @property
    def phi(self) -> float:
        return self.phis[0]

    _PINNED_MODE = {"unitarity": BOX, "gaps": BOX, "correlator": TORUS,
                    "contraction": BOX, "spread": TORUS, "strip": STRIP}

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose one of {EXPERIMENTS}")
        pinned = self._PINNED_MODE.get(self.experiment)
        if pinned is not None:
            self.mode = pinned  # fixed-geometry experiments ignore the flag
        if not self.phis:
            raise ConfigError("at least one phi (or epsilon) is required")
        if len(self.phis) > 1 and self.experiment != "contraction":
            raise ConfigError("multiple phi values only make sense for contraction")
        if self.L1 < 1 or self.L2 < 1:
            raise ConfigError("L1 and L2 must be positive integers")
        if self.mode not in (BOX, STRIP, TORUS):
            raise ConfigError(f"unknown geometry mode {self.mode!r}")
        if self.experiment == "strip" or self.mode == STRIP:
            if self.length < 2 or self.length % 2:
                raise ConfigError("strip length must be even and >= 2")
        if self.experiment == "gaps" and self.phi != 0.0:
            raise ConfigError("the gap law is exact at phi = 0 only; "
                              "run gaps with --phi 0")
        if not 0.0 < self.s < 1.0:
            raise ConfigError("s must lie strictly in (0, 1)")
        if any(r <= 0 for r in self.rhos):
            raise ConfigError("every rho must be positive")
        if self.experiment in ("moments", "contraction") and \
                any(r == 1.0 for r in self.rhos):
            raise ConfigError("resolvent experiments need |z| different from 1")
        if self.theta_count < 1:
            raise ConfigError("theta_count must be >= 1")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.p < 0:
            raise ConfigError("p must be nonnegative")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.experiment in ("gaps", "moments") and self.trials < 100:
            raise ConfigError(f"{self.experiment} needs at least 100 trials")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}")
        if not 1 <= self.d_min < self.d_max:
            raise ConfigError("need 1 <= d_min < d_max")
        if self.cases < 1:
            raise ConfigError("cases must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phis"] = list(self.phis)
        d["rhos"] = list(self.rhos)
        d["nu"] = list(self.nu) if self.nu is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        kw["phis"] = tuple(kw.get("phis", (0.05,)))
        kw["rhos"] = tuple(kw.get("rhos", (1.05, 1.1)))
        if kw.get("nu") is not None:
            kw["nu"] = tuple(kw["nu"])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        """Hash of the physics-relevant configuration.

        Execution details (workers, output path, figure toggle) do not
        change any result and are excluded, so identical experiments hash
        identically at any worker count.
        """
        d = self.to_dict()
        for key in ("workers", "out", "fig"):
            d.pop(key, None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def geometry(self) -> BoxSpec:
        return BoxSpec(L1=self.L1, L2=self.L2, mode=self.mode, length=self.length)


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    fit: DecayFit | None = None
    figure: tuple | None = None  # (kind, payload) for plots.render
    notes: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, meta: dict, columns, rows) -> None:
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def data_section(path) -> str:
    """CSV payload below the metadata header: the reproducibility contract.

    Identical configuration and master seed give byte-identical data
    sections at any worker count; only the metadata echo may differ (it
    records the worker count and output path actually used).
    """
    with open(path) as fh:
        return "".join(line for line in fh if not line.startswith("#"))


# -- shared helpers --------------------------------------------------------------

def ray_pairs(box: BoxSpec, origin, d_min: int, d_max: int):
    """Pairs (origin, nu, distance) along the axes and diagonals.

    Distances are Euclidean lengths of the shortest periodic-aware
    displacement, so wrap-around never mislabels a pair; duplicate targets
    reached by different rays are kept once.
    """
    origin = Site(*origin)
    pairs = {}
    for dm, dn in ((1, 0), (-1, 0), (0, 1), (0, -1),
                   (1, 1), (-1, 1), (1, -1), (-1, -1)):
        step = 1
        while True:
            raw = Site(origin.m + step * dm, origin.n + step * dn)
            nu = box.wrap(raw)
            if not box.contains(nu):
                break
            dx, dy = box.displacement(origin, nu)
            dist = math.hypot(dx, dy)
            if round(dist) > d_max or dist < step:  # wrapped past the far side
                break
            if round(dist) >= d_min and nu != origin:
                pairs.setdefault(nu, (origin, nu, dist))
            step += 1
    return list(pairs.values())


def _x_axis_pairs(box: BoxSpec, origin, d_min: int, d_max: int):
    origin = Site(*origin)
    pairs = {}
    for dm in (1, -1):
        for step in range(d_min, d_max + 1):
            nu = box.wrap(Site(origin.m + step * dm, origin.n))
            dx, dy = box.displacement(origin, nu)
            dist = math.hypot(dx, dy)
            if dist >= step and nu != origin:
                pairs.setdefault(nu, (origin, nu, dist))
    return list(pairs.values())


@dataclass(frozen=True)
class _CorrelatorTrialParams:
    phi: float
    box: BoxSpec
    origin: Site
    targets: tuple
    seed: object


def _correlator_trial(params: _CorrelatorTrialParams, t: int) -> np.ndarray:
    op = build_operator(params.phi, params.box, (params.seed, t))
    row = correlator_row(diagonalize(op), params.origin)
    imap = params.box.index_map()
    return np.array([row[imap.index(nu)] for nu in params.targets])


def correlator_decay_experiment(phi, box: BoxSpec, trials: int, seed,
                                origin=(0, 0), d_min: int = 2, d_max: int = 8,
                                workers: int = 1, pairs=None):
    """Ensemble-averaged correlator from a fixed origin with a decay fit.

    Returns (samples, fit) where samples are (distance, value, count)
    aggregates per target site, count = number of disorder realizations.
    """
    if pairs is None:
        pairs = ray_pairs(box, origin, d_min, d_max)
    if not pairs:
        raise GeometryError("no target pairs inside the geometry")
    params = _CorrelatorTrialParams(phi=float(phi), box=box,
                                    origin=Site(*origin),
                                    targets=tuple(nu for _, nu, _ in pairs),
                                    seed=seed)
    rows = run_trials(trials, functools.partial(_correlator_trial, params), workers)
    means = np.mean(rows, axis=0)
    samples = [(dist, float(means[i]), trials)
               for i, (_, _, dist) in enumerate(pairs)]
    fit = fit_decay(samples, min_bins=4, min_count=min(30, trials))
    return samples, fit


# -- experiment drivers ------------------------------------------------------------

_UNITARITY_MODES = (FULL_TORUS, WALLS, COMPLEMENT_WALLS, DECOUPLED)


def unitarity_case(case_seed, L1: int, L2: int, phi: float, boundary: str) -> float:
    """Build one operator of the requested boundary mode; return its defect."""
    if boundary == FULL_TORUS:
        op = build_operator(phi, BoxSpec(L1, L2, mode=TORUS), case_seed)
        return unitarity_defect(op.matrix)
    if boundary == WALLS:
        op = build_operator(phi, BoxSpec(L1, L2, mode=BOX), case_seed)
        return unitarity_defect(op.matrix)
    inner = BoxSpec(L1, L2, mode=BOX)
    ambient = BoxSpec(L1 + 1, L2 + 1, mode=TORUS)
    dis = sample_disorder(case_seed, ambient)
    if boundary == COMPLEMENT_WALLS:
        op = build_u(dis, build_complement_s(phi, inner, ambient))
        return unitarity_defect(op.matrix)
    dec, _ = build_decoupled(dis, phi, inner, ambient)
    return unitarity_defect(dec.matrix)


def run_unitarity(config: ExperimentConfig) -> ExperimentResult:
    rows = []
    worst = 0.0
    for t in range(config.cases):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, t)))
        L1 = int(rng.integers(1, 5))
        L2 = int(rng.integers(1, 5))
        phi = float(rng.uniform(0.0, math.pi / 2))
        for boundary in _UNITARITY_MODES:
            defect = unitarity_case((config.seed, t), L1, L2, phi, boundary)
            worst = max(worst, defect)
            rows.append((t, L1, L2, phi, boundary, defect))
    return ExperimentResult(
        columns=["case", "L1", "L2", "phi", "boundary", "defect"],
        rows=rows, notes={"max_defect": worst},
        figure=("unitarity", rows))


def run_spectrum(config: ExperimentConfig) -> ExperimentResult:
    box = config.geometry()
    op = build_operator(config.phi, box, config.seed)
    spec = diagonalize(op)
    order = np.argsort(np.angle(spec.eigenvalues))
    eigs = spec.eigenvalues[order]
    rows = [(i, v.real, v.imag, float(np.angle(v)), float(abs(v)))
            for i, v in enumerate(eigs)]
    notes = {}
    if config.phi == 0.0:
        exact = phi0_spectrum(op.disorder, box)
        notes["exact_match_distance"] = spectra_match(spec.eigenvalues,
                                                      exact.eigenvalues)
    return ExperimentResult(
        columns=["index", "re", "im", "angle", "modulus"],
        rows=rows, notes=notes, figure=("spectrum", eigs))


def run_gaps(config: ExperimentConfig) -> ExperimentResult:
    box = BoxSpec(config.L1, config.L2, mode=BOX)
    rho = config.rhos[0]
    z = rho * complex(math.cos(config.theta), math.sin(config.theta))
    result = gap_probability_mc(z, config.eta, box, config.trials, config.seed,
                                workers=config.workers)
    rows = [(config.L1, config.L2, config.eta, z.real, z.imag, config.trials,
             result.hit_rate, result.miss_rate, result.stderr,
             result.exact_miss, result.bound_miss)]
    return ExperimentResult(
        columns=["L1", "L2", "eta", "z_re", "z_im", "trials", "hit_rate",
                 "miss_rate", "stderr", "exact_miss", "bound_miss"],
        rows=rows, figure=("gaps", result))


def run_moments(config: ExperimentConfig) -> ExperimentResult:
    box = config.geometry()
    pairs = [(p[0], p[1]) for p in ray_pairs(box, (0, 0), config.d_min,
                                             config.d_max)]
    thetas = [2 * math.pi * k / config.theta_count
              for k in range(config.theta_count)]
    rows = []
    records_all = []
    for rho in config.rhos:
        for theta in thetas:
            z = rho * complex(math.cos(theta), math.sin(theta))
            records = fractional_moment_mc(config.phi, z, config.s, pairs, box,
                                           config.trials, config.seed,
                                           workers=config.workers)
            records_all.extend(records)
            for rec in records:
                rows.append((config.phi, config.L1, config.L2, config.s, rho,
                             theta, rec.mu.m, rec.mu.n, rec.nu.m, rec.nu.n,
                             rec.distance, rec.estimate, rec.stderr,
                             rec.trials, rec.dropped))
    return ExperimentResult(
        columns=["phi", "L1", "L2", "s", "rho", "theta", "mu_m", "mu_n",
                 "nu_m", "nu_n", "dist", "estimate", "stderr", "trials",
                 "dropped"],
        rows=rows, figure=("moments", records_all))


def run_correlator(config: ExperimentConfig) -> ExperimentResult:
    box = BoxSpec(config.L1, config.L2, mode=TORUS)
    samples, fit = correlator_decay_experiment(
        config.phi, box, config.trials, config.seed,
        d_min=config.d_min, d_max=config.d_max, workers=config.workers)
    rows = [(config.phi, config.L1, config.L2, d, v, n) for d, v, n in samples]
    return ExperimentResult(
        columns=["phi", "L1", "L2", "dist", "mean", "count"],
        rows=rows, fit=fit, figure=("decay", (samples, fit)))


def default_contraction_nu(ambient: BoxSpec) -> Site:
    (_, x1), (_, y1) = ambient.x_range, ambient.y_range
    return Site(x1 - 3, y1 - 3)


def run_contraction(config: ExperimentConfig) -> ExperimentResult:
    box = BoxSpec(config.L1, config.L2, mode=BOX)
    ambient = BoxSpec(2 * config.L1 + 2, 2 * config.L2 + 2, mode=TORUS)
    nu = Site(*config.nu) if config.nu is not None else default_contraction_nu(ambient)
    rho = config.rhos[0]
    z = rho * complex(math.cos(config.theta), math.sin(config.theta))
    reports = []
    rows = []
    for phi in config.phis:
        rep = contraction_check(phi, box, nu, config.s, z, config.trials,
                                config.seed, ambient=ambient,
                                workers=config.workers)
        reports.append(rep)
        rows.append((phi, config.L1, config.L2, config.s, rho, config.theta,
                     nu.m, nu.n, rep.lhs, rep.rhs, rep.q_hat, rep.trials,
                     rep.dropped))
    return ExperimentResult(
        columns=["phi", "L1", "L2", "s", "rho", "theta", "nu_m", "nu_n",
                 "lhs", "rhs", "q_hat", "trials", "dropped"],
        rows=rows, figure=("contraction", reports))


def _series_rows(series) -> list:
    rows = []
    for i, ser in enumerate(series):
        for n in range(len(ser.times)):
            rows.append((i, int(ser.times[n]), float(ser.moments[n]),
                         float(ser.leakage[n])))
    return rows


def run_spread(config: ExperimentConfig) -> ExperimentResult:
    torus = BoxSpec(config.L1, config.L2, mode=TORUS)
    initial = None
    if config.psi0 is not None:
        from .dynamics import StateVector
        initial = StateVector.from_file(config.psi0, torus)
    series = spread_experiment(config.phi, torus, config.p, config.horizon,
                               config.seeds, config.seed, initial=initial,
                               workers=config.workers)
    flagged = sum(ser.flagged for ser in series)
    return ExperimentResult(
        columns=["seed", "n", "moment_p", "leakage"],
        rows=_series_rows(series), notes={"flagged_runs": int(flagged)},
        figure=("spread", series))


def strip_experiment(phi, M: int, length: int, observable: str, trials: int,
                     seed, p: float = 2.0, horizon: int = 200,
                     d_min: int = 2, d_max: int = 8, workers: int = 1):
    """Run an observable on the strip: periodic in x, walls top and bottom.

    correlator_decay returns (samples, fit) along the x axis; spread returns
    the list of per-seed series.
    """
    if length < 8 * M or length % 2:
        raise GeometryError("strip length must be even and at least 8*M")
    strip = BoxSpec(L1=1, L2=M, mode=STRIP, length=length)
    if observable == "correlator_decay":
        pairs = _x_axis_pairs(strip, (0, 0), d_min, d_max)
        return correlator_decay_experiment(phi, strip, trials, seed,
                                           workers=workers, pairs=pairs)
    if observable == "spread":
        return spread_experiment(phi, strip, p, horizon, trials, seed,
                                 workers=workers)
    raise ConfigError(f"unknown observable {observable!r}")


def run_strip(config: ExperimentConfig) -> ExperimentResult:
    if config.observable == "correlator_decay":
        samples, fit = strip_experiment(
            config.phi, config.L2, config.length, "correlator_decay",
            config.trials, config.seed, d_min=config.d_min, d_max=config.d_max,
            workers=config.workers)
        rows = [(config.phi, config.L2, config.length, d, v, n)
                for d, v, n in samples]
        return ExperimentResult(
            columns=["phi", "M", "length", "dist", "mean", "count"],
            rows=rows, fit=fit, figure=("decay", (samples, fit)))
    series = strip_experiment(config.phi, config.L2, config.length, "spread",
                              config.seeds, config.seed, p=config.p,
                              horizon=config.horizon, workers=config.workers)
    return ExperimentResult(
        columns=["seed", "n", "moment_p", "leakage"],
        rows=_series_rows(series), figure=("spread", series))


_DRIVERS = {
    "unitarity": run_unitarity,
    "spectrum": run_spectrum,
    "gaps": run_gaps,
    "moments": run_moments,
    "correlator": run_correlator,
    "contraction": run_contraction,
    "spread": run_spread,
    "strip": run_strip,
}


def output_paths(config: ExperimentConfig) -> dict:
    base = config.out or f"{config.experiment}.csv"
    stem = base[:-4] if base.endswith(".csv") else base
    return {"csv": base, "fit": stem + ".fit.json", "figure": stem + ".png"}


def run(config: ExperimentConfig) -> list:
    """Execute one configured experiment; returns the paths written."""
    config.validate()
    result = _DRIVERS[config.experiment](config)
    paths = output_paths(config)
    meta = {"experiment": config.experiment, "config": config.to_dict(),
            "config_hash": config.config_hash(), "version": __version__,
            "columns": result.columns}
    if result.notes:
        meta["notes"] = result.notes
    written = []
    write_csv(paths["csv"], meta, result.columns, result.rows)
    written.append(paths["csv"])
    if result.fit is not None:
        with open(paths["fit"], "w") as fh:
            json.dump(result.fit.to_dict(), fh, sort_keys=True, indent=1)
        written.append(paths["fit"])
    if config.fig and result.figure is not None:
        from . import plots
        plots.render(result.figure[0], result.figure[1], paths["figure"])
        written.append(paths["figure"])
    return written
