"""Static figures written next to the CSV outputs (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
    # reproducible files: no timestamp in the PNG metadata
    "savefig.format": "png",
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_trajectory(rec, path, title: str | None = None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(rec.times * 1e3, rec.enhancement, lw=1.2)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel(r"enhancement $\epsilon_S/\epsilon_C$")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_pulse(seq, sys, path):
    """Bang profile: one row per channel, bars where the channel is on, phase in degrees above."""
    k = len(seq.channels)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(k, 1, sharex=True, figsize=(7.0, 1.6 * k + 0.6), squeeze=False)
        t = np.arange(seq.n_segments) * seq.dt * 1e3
        w = seq.dt * 1e3
        for i, (ax, ch) in enumerate(zip(axes[:, 0], seq.channels)):
            on = seq.active[:, i]
            ax.bar(t[on], np.ones(on.sum()), width=w, align="edge", color=f"C{i}")
            if on.sum() <= 60:
                for tt, ph in zip(t[on], np.rad2deg(seq.phases[on, i])):
                    ax.text(tt + w / 2, 1.05, f"{ph:.0f}", rotation=90, ha="center", va="bottom", fontsize=6)
            ax.set_ylim(0, 1.8)
            ax.set_yticks([])
            ax.set_ylabel(rf"$\Omega$ {ch}")
        axes[-1, 0].set_xlabel("time (ms)")
        _save(fig, path)


def plot_history(history, path, ceiling_q: float | None = None):
    gen = [r.generation for r in history]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(gen, [r.best_Q for r in history], label="best")
        ax.plot(gen, [r.mean_Q for r in history], label="mean", alpha=0.7)
        if ceiling_q is not None:
            ax.axhline(ceiling_q, color="k", ls="--", lw=0.8, label="ceiling")
        ax.set_xlabel("generation")
        ax.set_ylabel("Q")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_hbac(states, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot([s.iteration for s in states], [s.eps_singlet for s in states], "o-")
        ax.set_xlabel("iteration m")
        ax.set_ylabel(r"singlet order $\epsilon_S$")
        _save(fig, path)


def plot_fit(t, y, fit, path):
    tt = np.linspace(min(t), max(t), 200)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(t, y, "o", ms=4, label="data")
        ax.plot(tt, fit.curve(tt), label=f"T = {fit.time_constant:.3g} s")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("signal")
        ax.legend(frameon=False)
        _save(fig, path)
