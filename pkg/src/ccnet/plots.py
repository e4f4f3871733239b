"""Figure rendering for the experiment reports.

Figures are written next to the CSV output (same stem, .png); the CSV
remains the data contract, the figures are the quick-look companion.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _new_axes(xlabel, ylabel, title=""):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_unitarity(rows, path):
    defects = [max(r[-1], 1e-18) for r in rows]
    fig, ax = _new_axes("case", "max |U*U - I|", "unitarity defects")
    ax.semilogy(defects, ".", ms=4)
    ax.axhline(1e-10, color="r", lw=0.8, ls="--", label="1e-10 budget")
    ax.legend(frameon=False)
    _save(fig, path)


def render_spectrum(eigenvalues, path):
    fig, ax = _new_axes("Re", "Im", "spectrum on the unit circle")
    t = np.linspace(0, 2 * np.pi, 256)
    ax.plot(np.cos(t), np.sin(t), "-", color="0.8", lw=0.8)
    ax.plot(np.real(eigenvalues), np.imag(eigenvalues), ".", ms=3)
    ax.set_aspect("equal")
    _save(fig, path)


def render_gaps(result, path):
    fig, ax = _new_axes("", "probability", "gap probability vs closed form")
    labels = ["MC miss", "exact", "lower bound"]
    values = [result.miss_rate, result.exact_miss, result.bound_miss]
    ax.bar(labels, values, color=["C0", "C1", "C2"])
    ax.errorbar([0], [result.miss_rate], yerr=[3 * result.stderr],
                fmt="none", ecolor="k", capsize=4, label="3 stderr")
    ax.legend(frameon=False)
    _save(fig, path)


def render_moments(records, path):
    fig, ax = _new_axes("theta", "E |<mu| R |nu>|^s", "fractional moments")
    by_rho = {}
    for rec in records:
        by_rho.setdefault(rec.z.rho, []).append(rec)
    for rho, recs in sorted(by_rho.items()):
        thetas = [r.z.theta for r in recs]
        vals = [max(r.estimate, 1e-300) for r in recs]
        ax.semilogy(thetas, vals, ".", ms=4, label=f"rho={rho:g}")
    ax.legend(frameon=False)
    _save(fig, path)


def render_decay(payload, path):
    samples, fit = payload
    fig, ax = _new_axes("distance", "ensemble mean", "correlator decay")
    d = np.array([s[0] for s in samples])
    v = np.array([max(s[1], 1e-300) for s in samples])
    ax.semilogy(d, v, "o", ms=4, label="data")
    xs = np.linspace(d.min(), d.max(), 64)
    ax.semilogy(xs, fit.c * np.exp(-fit.g * xs), "-", lw=1.2,
                label=f"g={fit.g:.3f}, R2={fit.r_squared:.3f}")
    ax.legend(frameon=False)
    _save(fig, path)


def render_contraction(reports, path):
    fig, ax = _new_axes("phi", "q_hat", "one-step contraction factor")
    phis = [r.phi for r in reports]
    qs = [max(r.q_hat, 1e-300) for r in reports]
    ax.loglog(phis, qs, "o-", ms=5)
    ax.axhline(1.0, color="r", lw=0.8, ls="--", label="q = 1")
    ax.legend(frameon=False)
    _save(fig, path)


def render_spread(series, path):
    fig, ax = _new_axes("n", "|| |X|^p psi_n ||", "spreading")
    stack = np.array([ser.moments for ser in series])
    for ser in series:
        ax.plot(ser.times, np.maximum(ser.moments, 1e-300), color="0.8", lw=0.5)
    ax.plot(series[0].times, np.median(stack, axis=0), color="C0", lw=1.5,
            label="ensemble median")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    _save(fig, path)


_RENDERERS = {
    "unitarity": render_unitarity,
    "spectrum": render_spectrum,
    "gaps": render_gaps,
    "moments": render_moments,
    "decay": render_decay,
    "contraction": render_contraction,
    "spread": render_spread,
}


def render(kind: str, payload, path) -> None:
    _RENDERERS[kind](payload, path)
