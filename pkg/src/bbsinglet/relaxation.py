"""Phenomenological relaxation around the unitary core.

Spin-lock purification, singlet decay, T1 recovery of the ancillas, the
HBAC iteration, mono-exponential fits and sensitivity bookkeeping. All
order parameters are scalars in enhancement units (singlet order relative
to ideal carbon-only conversion, Zeeman polarizations relative to eps_C).

During a spin-lock the short-lived part of the pair state and any Zeeman
order of the pair species are taken to be fully destroyed; only the singlet
order survives, decaying with T_S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import curve_fit

from .engine import BBSequence, ControlProblem


class FitError(RuntimeError):
    """A mono-exponential fit failed or is degenerate."""


@dataclass(frozen=True)
class RelaxationParams:
    t1: Mapping[str, float]  # species (or site label) -> seconds
    t_singlet: float
    tau_ac: float
    tau_hb: float

    def __post_init__(self):
        for k, v in self.t1.items():
            if v <= 0:
                raise ValueError(f"T1 for {k!r} must be > 0")
        for name in ("t_singlet", "tau_ac", "tau_hb"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class HBACState:
    iteration: int
    eps_singlet: float
    eps_ancilla: dict[str, float] = field(default_factory=dict)


def spinlock_decay(eps0: float, tau: float, t_singlet: float) -> float:
    """Singlet order after a spin-lock of length tau: eps0 exp(-tau/T_S)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if math.isinf(tau):
        return 0.0
    return eps0 * math.exp(-tau / t_singlet)


def t1_recovery(eps_current: float, eps_thermal: float, tau: float, t1: float) -> float:
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return eps_thermal - (eps_thermal - eps_current) * math.exp(-tau / t1)


TransferGain = Callable[[Mapping[str, float], float], float]


def affine_gain(alpha: Mapping[str, float], beta: float) -> TransferGain:
    """eps_S' = sum_k alpha_k eps_k + beta eps_S."""

    def gain(eps_zeeman, eps_singlet):
        return sum(a * eps_zeeman.get(k, 0.0) for k, a in alpha.items()) + beta * eps_singlet

    gain.alpha = dict(alpha)
    gain.beta = beta
    return gain


class EngineGain:
    """Transfer gain from running a BB chromosome on scaled initial polarizations.

    The BB step is linear in the initial deviation, so the gain is affine;
    ``alpha``/``beta`` expose its coefficients.
    """

    def __init__(self, problem: ControlProblem, chromosome: BBSequence):
        self.problem = problem
        self.chromosome = chromosome
        self.species = [c.label for c in problem.system.channels]

    def __call__(self, eps_zeeman: Mapping[str, float], eps_singlet: float) -> float:
        pol = {k: float(eps_zeeman.get(k, 0.0)) for k in self.species}
        p = self.problem.with_state(pol, singlet_order=eps_singlet)
        return float(p.enhancement_from_raw(p.evaluate([self.chromosome])[0]))

    @property
    def alpha(self) -> dict[str, float]:
        zero = {k: 0.0 for k in self.species}
        return {k: self({**zero, k: 1.0}, 0.0) for k in self.species}

    @property
    def beta(self) -> float:
        return self({}, 1.0)


def _t1_for(params: RelaxationParams, species: str) -> float:
    try:
        return params.t1[species]
    except KeyError:
        raise KeyError(f"no T1 given for species {species!r}") from None


def hbac_simulate(params: RelaxationParams, transfer_gain: TransferGain, m_max: int,
                  eps_thermal: Mapping[str, float], pair_species: str,
                  ancilla_residual: float = 0.0) -> list[HBACState]:
    """AC followed by ``m_max`` HBAC rounds.

    Round 0 (AC) transfers from the thermal state and spin-locks for tau_ac.
    Every later round transfers from the recovered ancillas plus the stored
    singlet order, then spin-locks for tau_hb while the ancillas relax back
    toward thermal. Each transfer leaves ``ancilla_residual`` of the ancilla
    polarization behind.
    """
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    ancillas = [k for k in eps_thermal if k != pair_species]
    states = []
    zeeman = dict(eps_thermal)
    eps_s = 0.0
    for m in range(m_max + 1):
        tau = params.tau_ac if m == 0 else params.tau_hb
        eps_s = transfer_gain(zeeman, eps_s)
        eps_s = spinlock_decay(eps_s, tau, params.t_singlet)
        anc = {
            k: t1_recovery(ancilla_residual * zeeman[k], eps_thermal[k], tau, _t1_for(params, k))
            for k in ancillas
        }
        zeeman = {**anc, pair_species: 0.0}
        states.append(HBACState(m, eps_s, anc))
    return states


def affine_fixed_point(params: RelaxationParams, alpha: Mapping[str, float], beta: float,
                       eps_thermal: Mapping[str, float], pair_species: str) -> float:
    """Closed-form limit of :func:`hbac_simulate` with an affine gain and full depletion."""
    d = math.exp(-params.tau_hb / params.t_singlet)
    drive = sum(
        a * eps_thermal[k] * (1 - math.exp(-params.tau_hb / _t1_for(params, k)))
        for k, a in alpha.items()
        if k != pair_species
    )
    if abs(d * beta) >= 1:
        raise ValueError("iteration does not contract (|D beta| >= 1)")
    return d * drive / (1 - d * beta)


def marginal_gains(states) -> np.ndarray:
    """eps_S(m) - eps_S(m-1) for m = 1..M."""
    e = np.array([s.eps_singlet for s in states])
    return np.diff(e)


# --- fitting -------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    time_constant: float
    residual: float  # RMS
    model: str

    def curve(self, t):
        return model_curve(self.model, np.asarray(t, dtype=float), self.amplitude, self.time_constant)


def model_curve(model: str, t, amplitude: float, time_constant: float):
    if model == "decay":
        return amplitude * np.exp(-t / time_constant)
    if model == "inversion":
        return amplitude * (1 - 2 * np.exp(-t / time_constant))
    raise ValueError(f"unknown model {model!r} (use 'decay' or 'inversion')")


def _initial_guess(model, t, y):
    span = t.max() - t.min()
    if model == "decay":
        ok = y > 0
        if ok.sum() >= 2:
            slope, icpt = np.polyfit(t[ok], np.log(y[ok]), 1)
            if slope < 0:
                return math.exp(icpt), -1.0 / slope
        return y[np.argmin(t)], span
    a = y[np.argmax(t)]
    # zero crossing of A(1 - 2 exp(-t/T)) sits at T ln 2
    s = np.sign(y)
    cross = np.nonzero(np.diff(s[np.argsort(t)]) != 0)[0]
    if cross.size:
        ts = np.sort(t)
        return a, max(ts[cross[0]], span / 100) / math.log(2)
    return a, span / 3


def fit_monoexponential(times, values, model: str = "decay") -> FitResult:
    """Least-squares fit of A exp(-t/T) or A (1 - 2 exp(-t/T))."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    model_curve(model, t[:1], 1.0, 1.0)
    if t.size != y.size:
        raise ValueError("times and values differ in length")
    if t.size < 3:
        raise FitError(f"need at least 3 points, got {t.size}")
    if np.unique(t).size != t.size:
        raise FitError("times must be distinct")
    if np.ptp(y) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        raise FitError("data are constant: the time constant is unbounded")
    a0, tc0 = _initial_guess(model, t, y)
    try:
        popt, _ = curve_fit(lambda x, a, tc: model_curve(model, x, a, tc), t, y, p0=[a0, tc0],
                            maxfev=10000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"fit did not converge from A0={a0:.4g}, T0={tc0:.4g}: {exc}") from exc
    a, tc = map(float, popt)
    span = t.max() - t.min()
    if not (np.isfinite(tc) and 0 < tc < 1e4 * max(span, 1e-300)):
        raise FitError(f"fitted time constant {tc:.4g} is outside a meaningful range for span {span:.4g}")
    resid = float(np.sqrt(np.mean((model_curve(model, t, a, tc) - y) ** 2)))
    return FitResult(a, tc, resid, model)


def sensitivity_gain(enhancement: float, recycle_ratio: float) -> tuple[float, float]:
    """(per-scan sensitivity gain, experiment-time reduction) for a given recycle-delay ratio.

    Halving the recycle delay doubles the scans per unit time, worth sqrt(2)
    in signal-to-noise; equal sensitivity then needs gain**2 less time.
    """
    if enhancement <= 0 or recycle_ratio <= 0:
        raise ValueError("enhancement and recycle_ratio must be > 0")
    return enhancement * math.sqrt(recycle_ratio), enhancement**2 * recycle_ratio
