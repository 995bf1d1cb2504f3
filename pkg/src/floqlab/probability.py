"""Monte Carlo comparisons of measured event frequencies against the
probabilistic bounds: spectral-window (Wegner) estimates on finite and
frequency-truncated blocks, security-box intersections, strong resonances,
and good-region frequency targets.

Every estimator derives realization seeds as hash(base_seed, index), so
counts are independent of evaluation order and worker count.  Verdicts are
one-sided: an upper bound is "violated" only when the Wilson 95% lower
confidence limit exceeds it, a lower bound only when the upper limit falls
below it.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import derive_seed
from .errors import ConfigurationError, DomainError, ResourceError
from .floquet import build_quasienergy_operator
from .model import ModelParams, sample_potential
from .resolvent import (alpha_of, box_region, build_security_boxes,
                        find_resonances, is_good_box, strong_resonance_test,
                        column_region)

Z95 = 1.959963984540054


@dataclass(frozen=True)
class EnsembleSpec:
    """Seeded family of disorder realizations of one model."""

    n: int
    base_seed: int
    g: float
    lattice: object
    density: object
    driving: object

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("ensemble needs n >= 1")

    def seed(self, index):
        return derive_seed(self.base_seed, index)

    def params(self, index):
        dis = sample_potential(self.density, self.lattice, self.seed(index))
        return ModelParams(g=self.g, lattice=self.lattice, disorder=dis,
                           driving=self.driving)


def wilson_interval(hits, n, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ConfigurationError("need n >= 1")
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return p, max(center - half, 0.0), min(center + half, 1.0)


@dataclass
class BoundComparison:
    """Empirical frequency with its CI against a theoretical bound."""

    label: str
    n: int
    hits: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    bound: float
    bound_kind: str = "upper"  # bound is an upper/lower bound on the prob.
    params: dict = field(default_factory=dict)

    @property
    def verdict(self):
        if self.bound_kind == "upper":
            return "violated" if self.ci_lo > self.bound else "consistent"
        return "violated" if self.ci_hi < self.bound else "consistent"

    def to_record(self):
        rec = {"label": self.label, "n": self.n, "hits": self.hits,
               "p_hat": self.p_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
               "bound": self.bound, "bound_kind": self.bound_kind,
               "verdict": self.verdict}
        rec.update(self.params)
        return rec


def _comparison(label, hits, n, bound, bound_kind="upper", **params):
    p, lo, hi = wilson_interval(hits, n)
    return BoundComparison(label=label, n=n, hits=hits, p_hat=p, ci_lo=lo,
                           ci_hi=hi, bound=float(bound),
                           bound_kind=bound_kind, params=params)


# ---------------------------------------------------------------------------
# bound formulas


def wegner_bound_finite(eps, K, n_sites, rho_sup):
    """Spectral-window probability bound 2 pi eps (2K+1) |sites| ||rho||."""
    if min(eps, n_sites, rho_sup) < 0 or K < 0:
        raise DomainError("bound arguments must be non-negative")
    return 2 * math.pi * eps * (2 * K + 1) * n_sites * rho_sup


def wegner_bound_infinite(eps, n_sites, M, nu, rho_sup):
    """Full-column window bound 2 pi sqrt(eps) |sites| ||rho|| max(1, M/nu)."""
    if min(eps, n_sites, rho_sup, M, nu) < 0:
        raise DomainError("bound arguments must be non-negative")
    return 2 * math.pi * math.sqrt(eps) * n_sites * rho_sup * max(1.0, M / nu)


def intersection_bound(L, d, N, g, nu, rho_sup):
    """Probability bound for some two security boxes intersecting."""
    pairs2 = 2 * (2 * L) ** d * ((2 * L) ** d - 1)
    if nu <= math.sqrt(g):
        return pairs2 * (N * nu + math.sqrt(g)) * rho_sup
    return pairs2 * (N + 1) * math.sqrt(g) * rho_sup


def strong_resonance_bound_smooth(M, N, g, nu, d):
    """Security-box strong-resonance bound 4M N^d (2 sqrt(g)/nu + 2N) nu alpha."""
    return 4 * M * (N ** d * (2 * math.sqrt(g) / nu + 2 * N)) * nu * alpha_of(g, nu)


def strong_resonance_bound_l2(M, L, g, nu, d, rho_sup):
    """Resonant-site / strong-column bound ||rho|| (2M/nu) (2L+1)^d sqrt(2g)."""
    return rho_sup * (2 * M / nu) * (2 * L + 1) ** d * math.sqrt(2 * g)


def msa_frequency_threshold(g, p, d):
    """Smooth-regime frequency threshold exp(-g^(-1/(4p+8d)))."""
    if not 0 < g < 1:
        raise DomainError("threshold defined for g in (0, 1)")
    if p <= 2 * d:
        raise DomainError("threshold needs p > 2d")
    return math.exp(-g ** (-1.0 / (4 * p + 8 * d)))


# ---------------------------------------------------------------------------
# window (Wegner) probabilities


def infinite_column_K(E, eps, M, g, nu):
    """Harmonic half-width placing the window (M+g) inside the truncation
    edges of a column block."""
    return int(math.ceil((abs(E) + eps + 2 * M + 3 * g) / nu)) + 1


def _block_spectrum(ens, index, K, k0, site_count):
    params = ens.params(index)
    op = build_quasienergy_operator(params, k0=k0, K=K)
    if site_count is None or site_count == ens.lattice.n_sites:
        sub = op.dense()
    else:
        if site_count > ens.lattice.n_sites:
            raise ConfigurationError("site_count exceeds the lattice patch")
        rows = np.concatenate([np.arange(i * op.n_k, (i + 1) * op.n_k)
                               for i in range(site_count)])
        sub = op.dense()[np.ix_(rows, rows)]
    return np.linalg.eigvalsh(sub)


def estimate_window_probability(ens, E, eps_values, K=4, k0=0,
                                site_count=None, column=False, jobs=1):
    """Frequency of an eigenvalue falling in [E-eps, E+eps], for a nested
    family of eps, against the matching spectral-window bound.

    With `column` the block is a frequency-truncated column proxy: K is
    derived from the margin rule and the square-root bound applies.
    Evaluating all eps on the same realizations makes the frequency
    monotone in eps by construction.
    """
    eps_values = sorted(float(e) for e in eps_values)
    M = ens.density.M
    rho = ens.density.rho_sup
    if column:
        K = infinite_column_K(E, max(eps_values), M, ens.g, ens.driving.nu)
    n_sites = site_count or ens.lattice.n_sites
    dim = n_sites * (2 * K + 1)
    if dim > 20000:
        raise ResourceError(f"column block dimension {dim} too large for "
                            "dense diagonalization")
    from ._parallel import parallel_map
    dists = parallel_map(_window_worker,
                         [(ens, i, K, k0, site_count, E) for i in range(ens.n)],
                         jobs=jobs)
    dists = np.asarray(dists)
    out = {}
    for eps in eps_values:
        hits = int(np.sum(dists <= eps))
        if column:
            bound = wegner_bound_infinite(eps, n_sites, M, ens.driving.nu, rho)
            label = "window_probability_column"
        else:
            bound = wegner_bound_finite(eps, K, n_sites, rho)
            label = "window_probability_finite"
        out[eps] = _comparison(label, hits, ens.n, bound, eps=eps, E=E, K=K,
                               n_sites=n_sites, rho_sup=rho)
    return out


def _window_worker(args):
    ens, i, K, k0, site_count, E = args
    evals = _block_spectrum(ens, i, K, k0, site_count)
    return float(np.min(np.abs(evals - E)))


# ---------------------------------------------------------------------------
# security-box intersections


def estimate_intersection_probability(ens, N, lam, jobs=1):
    """Frequency of 'some two security boxes intersect' on the patch."""
    g, nu = ens.g, ens.driving.nu
    M = ens.density.M
    kmax = int(math.ceil((M + math.sqrt(g) + abs(lam)) / nu)) + N + 1
    from ._parallel import parallel_map
    flags = parallel_map(_intersection_worker,
                         [(ens, i, lam, N, kmax) for i in range(ens.n)],
                         jobs=jobs)
    hits = int(sum(flags))
    bound = intersection_bound(ens.lattice.L, ens.lattice.d, N, g, nu,
                               ens.density.rho_sup)
    branch = "nu<=sqrt(g)" if nu <= math.sqrt(g) else "nu>sqrt(g)"
    return _comparison("security_box_intersection", hits, ens.n, bound,
                       N=N, lam=lam, branch=branch)


def _intersection_worker(args):
    ens, i, lam, N, kmax = args
    dis = sample_potential(ens.density, ens.lattice, ens.seed(i))
    rmap = find_resonances(dis, lam, ens.g, ens.driving.nu, (-kmax, kmax))
    boxes = build_security_boxes(rmap, N, ens.lattice)
    return boxes.any_intersecting()


# ---------------------------------------------------------------------------
# strong resonances


def estimate_strong_resonance_probability(ens, regime, lam, N=3, L_col=None,
                                          K=None, jobs=1):
    """Frequency of the regime's strong-resonance event vs the paper bound.

    Smooth regime: the security box around the center site's resonant
    segment (when present) has spectrum within nu^2 alpha(g) of lambda.
    Square-integrable regime: returns two comparisons, for 'some resonant
    site in the column' and 'column strongly resonant', both against the
    same displayed bound.
    """
    g, nu = ens.g, ens.driving.nu
    M = ens.density.M
    d = ens.lattice.d
    from ._parallel import parallel_map
    if regime == "C1":
        K_op = K or (int(math.ceil((M + math.sqrt(g)) / nu)) + N + 1)
        flags = parallel_map(_strong_c1_worker,
                             [(ens, i, lam, N, K_op) for i in range(ens.n)],
                             jobs=jobs)
        bound = strong_resonance_bound_smooth(M, N, g, nu, d)
        return _comparison("security_box_strong_resonance", int(sum(flags)),
                           ens.n, bound, regime="C1", N=N, lam=lam)
    if regime != "C2":
        raise ConfigurationError(f"unknown regime {regime!r}")
    L_col = L_col or ens.lattice.L
    K_op = K or infinite_column_K(lam, 0.0, M, g, nu)
    pairs = parallel_map(_strong_c2_worker,
                         [(ens, i, lam, L_col, K_op) for i in range(ens.n)],
                         jobs=jobs)
    res_hits = int(sum(p[0] for p in pairs))
    strong_hits = int(sum(p[1] for p in pairs))
    bound = strong_resonance_bound_l2(M, L_col, g, nu, d, ens.density.rho_sup)
    return (_comparison("column_resonant_site", res_hits, ens.n, bound,
                        regime="C2", L=L_col, lam=lam),
            _comparison("column_strong_resonance", strong_hits, ens.n, bound,
                        regime="C2", L=L_col, lam=lam))


def _strong_c1_worker(args):
    ens, i, lam, N, K_op = args
    params = ens.params(i)
    g, nu = params.g, params.nu
    rmap = find_resonances(params.disorder, lam, g, nu, (-K_op + N, K_op - N))
    center = params.lattice.index((0,) * params.lattice.d)
    seg = rmap.segments.get(center)
    if seg is None:
        return False
    op = build_quasienergy_operator(params, k0=0, K=K_op)
    from .resolvent import SecurityBox
    box = SecurityBox(site_index=center, k_lo=seg[0], k_hi=seg[1], N=N)
    pts = box.points(params.lattice, k_window=(-K_op, K_op))
    rows = np.array(sorted(op.row(s, k) for s, k in pts))
    sub = op.dense()[np.ix_(rows, rows)]
    dist = float(np.min(np.abs(np.linalg.eigvalsh(sub) - lam)))
    return dist <= nu ** 2 * alpha_of(g, nu)


def _strong_c2_worker(args):
    ens, i, lam, L_col, K_op = args
    params = ens.params(i)
    op = build_quasienergy_operator(params, k0=0, K=K_op)
    region = column_region(op, (0,) * params.lattice.d, L_col)
    kw = (-K_op, K_op)
    rmap = find_resonances(params.disorder, lam, params.g, params.nu, kw)
    c = np.asarray((0,) * params.lattice.d)
    sites = params.lattice.sites()
    has_resonance = any(np.max(np.abs(sites[s] - c)) <= L_col
                        for s in rmap.segments)
    flagged, _, _ = strong_resonance_test(op, region, lam, "C2", L=L_col)
    return has_resonance, flagged


# ---------------------------------------------------------------------------
# good-region frequency


def estimate_good_region_probability(ens, mu, p, L_box, lam, K_box=None,
                                     jobs=1):
    """Frequency of the good-box verdict against the 1 - 1/L^{2p} target."""
    M = ens.density.M
    K_box = K_box if K_box is not None else int(math.ceil(M / ens.driving.nu))
    from ._parallel import parallel_map
    flags = parallel_map(_goodbox_worker,
                         [(ens, i, lam, mu, L_box, K_box)
                          for i in range(ens.n)], jobs=jobs)
    hits = int(sum(flags))
    target = 1.0 - 1.0 / L_box ** (2 * p) if p > 0 else 0.0
    return _comparison("good_box_frequency", hits, ens.n, target,
                       bound_kind="lower", mu=mu, p=p, L=L_box, K=K_box,
                       lam=lam)


def _goodbox_worker(args):
    ens, i, lam, mu, L_box, K_box = args
    params = ens.params(i)
    if L_box > params.lattice.L:
        raise ConfigurationError("box larger than the lattice patch")
    op = build_quasienergy_operator(params, k0=0, K=K_box)
    rep = is_good_box(op, (0,) * params.lattice.d, L_box, lam, mu)
    return rep.good
