"""Deterministic SVG figures (fixed hash salt, no date metadata)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from .core import ADVISORIES  # noqa: E402
from .metrics import ENCOUNTER_BINS  # noqa: E402

ADVISORY_COLORS = ["#ffffff", "#7f7f7f", "#9ecae1", "#fdae6b", "#08519c", "#d94801"]
_RC = {"svg.hashsalt": "densecas", "svg.fonttype": "none", "font.size": 9}


def _svg_bytes(fig):
    buf = io.BytesIO()
    with plt.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def slice_svg(raster, xs, ys, fixed=(), title=None):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 4.6))
        dx = xs[1] - xs[0] if len(xs) > 1 else 1.0
        dy = ys[1] - ys[0] if len(ys) > 1 else 1.0
        ax.imshow(raster, origin="lower", cmap=ListedColormap(ADVISORY_COLORS), vmin=-0.5, vmax=5.5,
                  extent=(xs[0] - dx / 2, xs[-1] + dx / 2, ys[0] - dy / 2, ys[-1] + dy / 2),
                  interpolation="nearest")
        ax.plot([0], [0], marker="^", color="k", ms=8)
        for i, f in enumerate(fixed):
            ax.plot([f[0]], [f[1]], marker="o", color="k", ms=6)
            ax.annotate(f"{i + 1}", (f[0], f[1]), xytext=(4, 4), textcoords="offset points")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        if title:
            ax.set_title(title)
        handles = [Patch(facecolor=c, edgecolor="k", label=a.name) for a, c in zip(ADVISORIES, ADVISORY_COLORS)]
        ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0), frameon=False)
        fig.tight_layout()
    return _svg_bytes(fig)


def alert_frequency_svg(curves):
    """``curves`` maps a CAS name to (ks, probabilities, standard errors)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, (ks, p, se) in sorted(curves.items()):
            ax.errorbar(ks, p, yerr=se, marker="o", capsize=2, label=name)
        ax.set_xlabel("number of intruders")
        ax.set_ylabel("P(non-COC advisory)")
        ax.set_ylim(0, 1)
        ax.legend(frameon=False)
        fig.tight_layout()
    return _svg_bytes(fig)


def pareto_svg(points):
    """``points``: iterable of (cas, rate, route_length, nmac_rate)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.8))
        by_rate = {}
        for cas, rate, rl, nmac in points:
            by_rate.setdefault(rate, []).append((cas, rl, nmac))
        markers = "osD^v<>p*h"
        for i, (rate, pts) in enumerate(sorted(by_rate.items())):
            for cas, rl, nmac in pts:
                ax.scatter([rl], [nmac], marker=markers[i % len(markers)], label=f"{cas} @ {rate:g}")
        ax.set_xlabel("normalized route length")
        ax.set_ylabel("NMACs / flight hour")
        ax.legend(frameon=False, fontsize=7, loc="upper left", bbox_to_anchor=(1.02, 1.0))
        fig.tight_layout()
    return _svg_bytes(fig)


def encounter_bars_svg(dists):
    """Stacked bars; ``dists`` maps a label to a probability vector over the encounter bins."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(dists) + 2), 3.8))
        labels = list(dists)
        bottom = np.zeros(len(labels))
        for j, b in enumerate(ENCOUNTER_BINS):
            vals = np.array([dists[k][j] for k in labels])
            ax.bar(range(len(labels)), vals, bottom=bottom, label=b)
            bottom += vals
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.set_ylabel("probability")
        ax.legend(title="intruders", frameon=False, loc="upper left", bbox_to_anchor=(1.02, 1.0))
        fig.tight_layout()
    return _svg_bytes(fig)


def stress_svg(curves):
    """``curves`` maps a CAS name to (n_aircraft list, P(NMAC), standard errors)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, (ns, p, se) in sorted(curves.items()):
            ax.errorbar(ns, p, yerr=se, marker="o", capsize=2, label=name)
        ax.set_xlabel("number of aircraft")
        ax.set_ylabel("P(NMAC)")
        ax.set_ylim(0, 1)
        ax.legend(frameon=False)
        fig.tight_layout()
    return _svg_bytes(fig)
