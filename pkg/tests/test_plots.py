import math

import numpy as np
import pytest

from ccnet import plots
from ccnet.dynamics import SpreadSeries
from ccnet.lattice import BoxSpec, Site
from ccnet.resolvent import DecayFit, MomentRecord, SpectralParameter
from ccnet.spectral import GapProbability


def series(seed):
    t = np.arange(9)
    return SpreadSeries(seed=seed, phi=0.05, p=2.0, times=t,
                        moments=np.abs(np.sin(t + seed)) + 0.1,
                        leakage=np.zeros_like(t, dtype=float))


def sample_fit():
    return DecayFit(g=0.7, c=1.0, r_squared=0.99, ci_low=0.6, ci_high=0.8,
                    distances=[2, 3, 4, 5],
                    bin_means=[math.exp(-0.7 * d) for d in (2, 3, 4, 5)])


@pytest.mark.parametrize("kind,payload", [
    ("unitarity", [(0, 1, 1, 0.3, "walls", 1e-15), (1, 2, 2, 0.5, "full_torus", 2e-16)]),
    ("spectrum", np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))),
    ("gaps", GapProbability(z=1 + 0j, eta=0.1, box=BoxSpec(1, 1), trials=100,
                            hits=40, exact_miss=0.58, bound_miss=0.41)),
    ("moments", [MomentRecord(mu=Site(0, 0), nu=Site(2, 2), s=0.5,
                              z=SpectralParameter(1.1, th), phi=0.3,
                              estimate=0.1 * (1 + th), stderr=0.01, trials=100)
                 for th in (0.0, 1.0, 2.0)]),
    ("decay", ([(d, math.exp(-0.7 * d), 50) for d in (2, 3, 4, 5)], sample_fit())),
    ("spread", [series(0), series(1), series(2)]),
])
def test_render_kinds(tmp_path, kind, payload):
    path = tmp_path / f"{kind}.png"
    plots.render(kind, payload, path)
    assert path.exists() and path.stat().st_size > 1000


def test_render_contraction(tmp_path):
    from ccnet.resolvent import ContractionReport
    reports = [ContractionReport(lhs=1e-6 * phi, rhs=1e-3, q_hat=1e-3 * phi,
                                 phi=phi, s=0.5, z=SpectralParameter(1.05, 0.6),
                                 box=BoxSpec(1, 1), ambient=BoxSpec(4, 4, mode="torus"),
                                 nu=Site(6, 8), trials=50, dropped=0, rhs_sites=[])
               for phi in (0.1, 0.05, 0.01)]
    path = tmp_path / "contraction.png"
    plots.render("contraction", reports, path)
    assert path.exists() and path.stat().st_size > 1000
