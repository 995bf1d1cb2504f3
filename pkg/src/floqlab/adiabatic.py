"""Two-level avoided crossings and (g, nu) phase scans.

A linear diabatic sweep crossed with a constant off-diagonal coupling is
integrated through the crossing and compared with the closed-form
transition probability exp(-2 pi gp^2 / v).  The threshold formulas turn
the crossing-density picture into annotation curves for phase scans of
localization diagnostics.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AccuracyError, ConfigurationError
from .probability import EnsembleSpec, msa_frequency_threshold


@dataclass(frozen=True)
class TwoLevelSweep:
    """Diabatic levels +- v12 t / 2 coupled by a constant gp."""

    gp: float
    v12: float
    t_w: float = 0.0  # window half-width; 0 picks the invariant minimum
    initial: int = 0
    window_factor: float = 60.0

    def __post_init__(self):
        if self.v12 <= 0:
            raise ConfigurationError("sweep rate v12 must be positive")
        if self.t_w > 0 and self.v12 * self.t_w < 20 * max(
                self.gp, math.sqrt(self.v12)):
            raise ConfigurationError("window too narrow: need |v12 t_w| >= "
                                     "20 max(gp, sqrt(v12))")

    def window(self):
        if self.t_w > 0:
            return self.t_w
        return self.window_factor * max(self.gp, math.sqrt(self.v12)) / self.v12

    def adiabaticity(self):
        return self.gp ** 2 / self.v12


def lz_transition_probability(sweep, rtol=1e-9, atol=1e-12):
    """Probability of staying in the initial diabatic branch through the
    crossing, by direct integration of the two-level dynamics.

    The state is prepared in the incoming adiabatic eigenstate continuously
    connected to the initial diabatic state, and read out on the outgoing
    adiabatic eigenstate connected to it; at a finite window this is the
    scattering setup whose survival probability converges to the closed
    form (pure diabatic preparation carries O(gp / (v t_w)) contamination
    that would swamp the deep-adiabatic tail).
    """
    gp, v = sweep.gp, sweep.v12
    if gp == 0.0:
        return 1.0
    tw = sweep.window()

    def hamiltonian(t):
        return np.array([[0.5 * v * t, gp], [gp, -0.5 * v * t]])

    def rhs(t, y):
        a, b = y[0] + 1j * y[1], y[2] + 1j * y[3]
        da = -1j * (0.5 * v * t * a + gp * b)
        db = -1j * (gp * a - 0.5 * v * t * b)
        return [da.real, da.imag, db.real, db.imag]

    # initial diabatic state `initial` sits on the lower adiabatic branch
    # at -t_w when its diabatic energy there is negative
    sign = -1.0 if sweep.initial == 0 else 1.0
    _, V0 = np.linalg.eigh(hamiltonian(-tw))
    branch_in = 0 if sign < 0 else 1
    psi0 = V0[:, branch_in]
    if psi0[sweep.initial].real < 0:
        psi0 = -psi0
    y0 = [psi0[0].real, 0.0, psi0[1].real, 0.0]
    sol = solve_ivp(rhs, (-tw, tw), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise AccuracyError(f"two-level integration failed: {sol.message}")
    yf = sol.y[:, -1]
    psi = np.array([yf[0] + 1j * yf[1], yf[2] + 1j * yf[3]])
    _, V1 = np.linalg.eigh(hamiltonian(tw))
    # after the crossing the surviving diabatic branch is the opposite
    # adiabatic branch
    out = V1[:, 1 - branch_in]
    return float(abs(np.vdot(out, psi)) ** 2)


def lz_closed_form(sweep):
    """exp(-2 pi gp^2 / v12)."""
    return math.exp(-2 * math.pi * sweep.adiabaticity())


@dataclass(frozen=True)
class ThresholdParams:
    """Inputs of the surviving-localization frequency threshold."""

    g: float
    W: float  # disorder strength, identified with the support width 2M
    xi: float  # localization length in sites
    d: int

    def __post_init__(self):
        if min(self.g, self.W, self.xi) <= 0 or self.d < 1:
            raise ConfigurationError("threshold parameters must be positive")


def crossing_density_length(g, W, d):
    """Scale (W/g)^(1/d) at which an avoided crossing is typically found."""
    if W / g < 1:
        raise ConfigurationError("crossing scale defined for W/g >= 1")
    return (W / g) ** (1.0 / d)


def lz_threshold_frequency(params):
    """nu* = g exp(-(2/xi) (W/g)^(1/d)): localization survives well above."""
    Lstar = crossing_density_length(params.g, params.W, params.d)
    return params.g * math.exp(-2.0 * Lstar / params.xi)


# ---------------------------------------------------------------------------
# phase scans


@dataclass
class PhasePoint:
    """Disorder-averaged localization diagnostics at one (g, nu)."""

    g: float
    nu: float
    ipr_mean: float
    ipr_sd: float
    decay_rate: float
    moment_slope: float
    n: int
    msa_threshold: float | None = None
    lz_threshold: float | None = None
    failures: int = 0

    def to_record(self):
        return {"g": self.g, "nu": self.nu, "ipr_mean": self.ipr_mean,
                "ipr_sd": self.ipr_sd, "decay_rate": self.decay_rate,
                "moment_slope": self.moment_slope, "n": self.n,
                "msa_threshold": self.msa_threshold,
                "lz_threshold": self.lz_threshold, "failures": self.failures}


def floquet_vector_stats(params, propagator=None):
    """Mean inverse participation ratio and fitted spatial decay rate of
    the Floquet vectors of one realization."""
    from .propagate import Propagator, floquet_spectrum, monodromy

    sol = floquet_spectrum(monodromy(params, propagator), params.nu)
    V = sol.vectors
    prob = np.abs(V) ** 2
    ipr = np.sum(prob ** 2, axis=0)
    sites = params.lattice.sites()
    rates = []
    for i in range(V.shape[1]):
        c = sites[np.argmax(prob[:, i])]
        dist = np.max(np.abs(sites - c), axis=1)
        amp = np.abs(V[:, i])
        sel = amp > 1e-13
        if np.unique(dist[sel]).size < 2:
            continue
        rates.append(-np.polyfit(dist[sel], np.log(amp[sel]), 1)[0])
    return float(ipr.mean()), (float(np.mean(rates)) if rates else math.nan)


def phase_scan(g_values, nu_values, lattice, density, driving_factory,
               n_realizations, base_seed, moment_periods=200,
               msa_p=3.0, xi=1.0, propagator=None, jobs=1):
    """Disorder-averaged diagnostics over a (g, nu) grid, sorted by (g, nu).

    `driving_factory(nu)` builds the driving at each frequency.  Per-point
    failures are recorded and the scan continues.  Rows carry the frequency
    thresholds for annotation; the closed-form curves are guidance, never a
    pass/fail criterion.
    """
    from ._parallel import parallel_map

    from ._seeds import derive_seed

    points = [(g, nu) for g in sorted(g_values) for nu in sorted(nu_values)]
    tasks = [(g, nu, lattice, density, driving_factory(nu), n_realizations,
              derive_seed(base_seed, idx), moment_periods, propagator)
             for idx, (g, nu) in enumerate(points)]
    rows = parallel_map(_phase_point_worker, tasks, jobs=jobs)
    for row in rows:
        try:
            row.msa_threshold = msa_frequency_threshold(row.g, msa_p,
                                                        lattice.d)
        except Exception:
            row.msa_threshold = None
        try:
            row.lz_threshold = lz_threshold_frequency(ThresholdParams(
                g=row.g, W=2 * density.M, xi=xi, d=lattice.d))
        except Exception:
            row.lz_threshold = None
    return rows


def _phase_point_worker(args):
    (g, nu, lattice, density, driving, n_real, point_seed, moment_periods,
     propagator) = args
    from .model import ModelParams, sample_potential
    from .propagate import dynamical_moment_trace
    from ._seeds import derive_seed

    iprs, rates, slopes = [], [], []
    failures = 0
    for r in range(n_real):
        try:
            dis = sample_potential(density, lattice, derive_seed(point_seed, r))
            params = ModelParams(g=g, lattice=lattice, disorder=dis,
                                 driving=driving)
            ipr, rate = floquet_vector_stats(params, propagator)
            psi0 = np.zeros(lattice.n_sites, dtype=complex)
            psi0[lattice.index((0,) * lattice.d)] = 1.0
            tr = dynamical_moment_trace(params, psi0, q=2,
                                        n_periods=moment_periods,
                                        propagator=propagator,
                                        sample_every=max(1, moment_periods // 50))
            iprs.append(ipr)
            rates.append(rate)
            slopes.append(tr.slope)
        except Exception:
            failures += 1
    if not iprs:
        return PhasePoint(g=g, nu=nu, ipr_mean=math.nan, ipr_sd=math.nan,
                          decay_rate=math.nan, moment_slope=math.nan,
                          n=0, failures=failures)
    return PhasePoint(g=g, nu=nu, ipr_mean=float(np.mean(iprs)),
                      ipr_sd=float(np.std(iprs)),
                      decay_rate=float(np.nanmean(rates)),
                      moment_slope=float(np.mean(slopes)),
                      n=len(iprs), failures=failures)
