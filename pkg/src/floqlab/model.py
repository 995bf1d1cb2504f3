"""Lattices, disorder, periodic drivings and the instantaneous Hamiltonian.

The model is a tight-binding Hamiltonian H(t) = -g*D(t) + V on a finite
patch [-L, L]^d of the integer lattice with open boundary.  The diagonal V
holds i.i.d. random site energies, the off-diagonal part acts on nearest
neighbors (graph distance 1) and carries a time-periodic hopping amplitude
per bond.  Per-bond driving signals are real, stored once per unordered
bond, so every assembled operator is exactly Hermitian.

Normalization convention: the per-bond driving norm is the time-averaged
L2 norm over one period, sqrt((1/T) int_0^T |h(t)|^2 dt), and the model
expects it to be <= 1 per bond.  With this convention the squared Fourier
coefficients of a bond sum to the squared norm (Parseval).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from ._seeds import counter_uniforms

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class LatticeSpec:
    """Finite patch [-L, L]^d with open boundary.

    Sites are ordered lexicographically; nearest neighbors are the 2d sites
    at graph (l1) distance 1.  Boxes and shells use the sup norm |x|.
    """

    d: int
    L: int
    max_sites: int = 500_000

    def __post_init__(self):
        if self.d < 1 or self.L < 1:
            raise ConfigurationError("need d >= 1 and L >= 1")
        if self.n_sites > self.max_sites:
            raise ConfigurationError(
                f"lattice patch has {self.n_sites} sites, over the budget "
                f"of {self.max_sites}")

    @property
    def n_sites(self):
        return (2 * self.L + 1) ** self.d

    @property
    def side(self):
        return 2 * self.L + 1

    def sites(self):
        """All site coordinates, shape (n_sites, d), lexicographic order."""
        axes = [np.arange(-self.L, self.L + 1)] * self.d
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def index(self, site):
        """Linear index of a site given as a length-d iterable."""
        idx = 0
        for c in site:
            if abs(int(c)) > self.L:
                raise ConfigurationError(f"site {tuple(site)} outside patch")
            idx = idx * self.side + (int(c) + self.L)
        return idx

    def site(self, index):
        """Inverse of :meth:`index`."""
        coords = []
        for _ in range(self.d):
            coords.append(index % self.side - self.L)
            index //= self.side
        return tuple(reversed(coords))

    def bonds(self):
        """Unordered nearest-neighbor pairs (i, j) with i < j."""
        sites = self.sites()
        pairs = []
        strides = [self.side ** (self.d - 1 - mu) for mu in range(self.d)]
        for i, x in enumerate(sites):
            for mu in range(self.d):
                if x[mu] < self.L:
                    pairs.append((i, i + strides[mu]))
        return pairs

    def sup_distance(self, i, j):
        xi, xj = self.site(i), self.site(j)
        return max(abs(a - b) for a, b in zip(xi, xj))

    def l1_distance(self, i, j):
        xi, xj = self.site(i), self.site(j)
        return sum(abs(a - b) for a, b in zip(xi, xj))


# ---------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DensitySpec:
    """Bounded density on [-M, M], either uniform or a piecewise-linear table.

    `table` is a sequence of (x, rho(x)) breakpoints for the piecewise-linear
    kind; it must integrate to one.  `rho_sup` and `rho_prime_sup` are the
    sup norms of the density and of its derivative, used by the probability
    bounds.
    """

    kind: str
    M: float
    table: tuple = ()
    rho_sup: float = 0.0
    rho_prime_sup: float = 0.0

    @staticmethod
    def uniform(M=1.0):
        if M <= 0:
            raise ConfigurationError("support half-width M must be positive")
        return DensitySpec(kind="uniform", M=float(M), rho_sup=1.0 / (2 * M),
                           rho_prime_sup=0.0)

    @staticmethod
    def unit_sup_uniform():
        """Uniform density in units where the sup norm of rho equals one."""
        return DensitySpec.uniform(M=0.5)

    @staticmethod
    def from_table(points):
        pts = sorted((float(x), float(r)) for x, r in points)
        xs = np.array([p[0] for p in pts])
        rs = np.array([p[1] for p in pts])
        if len(xs) < 2 or np.any(np.diff(xs) <= 0) or np.any(rs < 0):
            raise ConfigurationError("density table needs increasing x and rho >= 0")
        total = np.trapezoid(rs, xs)
        if not math.isclose(total, 1.0, rel_tol=1e-8, abs_tol=1e-8):
            raise ConfigurationError(f"density table integrates to {total}, not 1")
        slopes = np.diff(rs) / np.diff(xs)
        return DensitySpec(kind="table", M=float(max(abs(xs[0]), abs(xs[-1]))),
                           table=tuple((float(x), float(r)) for x, r in pts),
                           rho_sup=float(rs.max()),
                           rho_prime_sup=float(np.max(np.abs(slopes))))

    def inverse_cdf(self, u):
        """Map uniform [0,1) variates through the inverse CDF."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return -self.M + 2 * self.M * u
        xs = np.array([p[0] for p in self.table])
        rs = np.array([p[1] for p in self.table])
        seg_mass = 0.5 * (rs[1:] + rs[:-1]) * np.diff(xs)
        F = np.concatenate([[0.0], np.cumsum(seg_mass)])
        F[-1] = 1.0
        seg = np.clip(np.searchsorted(F, u, side="right") - 1, 0, len(xs) - 2)
        x0, r0 = xs[seg], rs[seg]
        s = (rs[seg + 1] - rs[seg]) / (xs[seg + 1] - xs[seg])
        du = u - F[seg]
        lin = np.divide(du, r0, out=np.zeros_like(du), where=r0 > 0)
        disc = np.maximum(r0 ** 2 + 2 * s * du, 0.0)
        quad = np.divide(np.sqrt(disc) - r0, s, out=lin, where=s != 0)
        return x0 + np.clip(quad, 0.0, xs[seg + 1] - x0)


@dataclass(frozen=True)
class DisorderRealization:
    """Site energies v_x sampled i.i.d. from a density, reproducible by seed."""

    lattice: LatticeSpec
    density: DensitySpec
    seed: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (self.lattice.n_sites,):
            raise ConfigurationError("one potential value per lattice site expected")


def sample_potential(density, lattice, seed):
    """Draw one i.i.d. potential value per site via inverse-CDF sampling.

    The uniform variate of site x depends only on (seed, linear index of x),
    so regeneration is bit-identical and independent of iteration order.
    """
    u = counter_uniforms(seed, np.arange(lattice.n_sites))
    values = density.inverse_cdf(u)
    values.setflags(write=False)
    return DisorderRealization(lattice=lattice, density=density, seed=int(seed),
                               values=values)


# ---------------------------------------------------------------------------
# driving signals

def _bond_triple(default, per_bond, bond):
    if per_bond and bond in per_bond:
        return per_bond[bond]
    return default


class SmoothDriving:
    """Monochromatic per-bond hopping a + b cos(nu t) + b' sin(nu t)."""

    variant = "smooth"
    max_harmonic = 1

    def __init__(self, nu, a=0.0, b=0.0, bp=0.0, per_bond=None):
        if nu <= 0:
            raise ConfigurationError("driving frequency nu must be positive")
        self.nu = float(nu)
        self.a, self.b, self.bp = float(a), float(b), float(bp)
        self.per_bond = dict(per_bond) if per_bond else None

    @property
    def period(self):
        return TWO_PI / self.nu

    def coefficients(self, bond=None):
        return _bond_triple((self.a, self.b, self.bp), self.per_bond, bond)

    def hop(self, t, bond=None):
        a, b, bp = self.coefficients(bond)
        w = self.nu * np.asarray(t, dtype=float)
        return a + b * np.cos(w) + bp * np.sin(w)

    def harmonic(self, k, bond=None):
        """Fourier coefficient (1/T) int_0^T hop(t) exp(-i nu k t) dt."""
        a, b, bp = self.coefficients(bond)
        if k == 0:
            return complex(a)
        if k == 1:
            return (b - 1j * bp) / 2
        if k == -1:
            return (b + 1j * bp) / 2
        return 0j

    def mean_square(self, bond=None):
        a, b, bp = self.coefficients(bond)
        return a * a + (b * b + bp * bp) / 2


class SquareWaveDriving:
    """Hopping that switches between two amplitudes once per period."""

    variant = "squarewave"

    def __init__(self, nu, amp_a, amp_b, duty=0.5, per_bond=None, max_harmonic=40):
        if nu <= 0:
            raise ConfigurationError("driving frequency nu must be positive")
        if not 0.0 < duty < 1.0:
            raise ConfigurationError("duty fraction must lie in (0, 1)")
        self.nu = float(nu)
        self.amp_a, self.amp_b = float(amp_a), float(amp_b)
        self.duty = float(duty)
        self.per_bond = dict(per_bond) if per_bond else None
        self.max_harmonic = int(max_harmonic)

    @property
    def period(self):
        return TWO_PI / self.nu

    def amplitudes(self, bond=None):
        if self.per_bond and bond in self.per_bond:
            return self.per_bond[bond]
        return (self.amp_a, self.amp_b)

    def hop(self, t, bond=None):
        a, b = self.amplitudes(bond)
        frac = np.mod(np.asarray(t, dtype=float) / self.period, 1.0)
        return np.where(frac < self.duty, a, b)

    def harmonic(self, k, bond=None):
        a, b = self.amplitudes(bond)
        if k == 0:
            return complex(self.duty * a + (1 - self.duty) * b)
        z = np.exp(-2j * math.pi * k * self.duty)
        return (a - b) * (1 - z) / (2j * math.pi * k)

    def mean_square(self, bond=None):
        a, b = self.amplitudes(bond)
        return self.duty * a * a + (1 - self.duty) * b * b

    def switch_times(self):
        """Discontinuity times within one period."""
        return (self.duty * self.period, self.period)


class SampledDriving:
    """Hopping given by samples on a uniform grid over one period.

    Samples are interpreted as a periodic signal; values between grid points
    are linearly interpolated and Fourier coefficients are the rectangle-rule
    quadrature of the defining integral (the DFT of the samples).
    """

    variant = "sampled"

    def __init__(self, nu, samples, per_bond=None, max_harmonic=None):
        if nu <= 0:
            raise ConfigurationError("driving frequency nu must be positive")
        self.nu = float(nu)
        self.samples = np.asarray(samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ConfigurationError("sampled driving needs at least 2 grid points")
        self.per_bond = {k: np.asarray(v, float) for k, v in per_bond.items()} \
            if per_bond else None
        n = self.samples.size
        self.max_harmonic = int(max_harmonic) if max_harmonic else max(1, n // 4)

    @property
    def period(self):
        return TWO_PI / self.nu

    def _samples_for(self, bond):
        if self.per_bond and bond in self.per_bond:
            return self.per_bond[bond]
        return self.samples

    def hop(self, t, bond=None):
        f = self._samples_for(bond)
        n = f.size
        pos = np.mod(np.asarray(t, dtype=float) / self.period, 1.0) * n
        i0 = np.floor(pos).astype(int) % n
        w = pos - np.floor(pos)
        return (1 - w) * f[i0] + w * f[(i0 + 1) % n]

    def harmonic(self, k, bond=None):
        f = self._samples_for(bond)
        n = f.size
        phase = np.exp(-2j * math.pi * k * np.arange(n) / n)
        return complex(np.mean(f * phase))

    def mean_square(self, bond=None):
        f = self._samples_for(bond)
        return float(np.mean(f ** 2))


def driving_l2_norms(driving, bonds=None):
    """Per-bond time-averaged L2 norms over one period, with violation flags.

    Returns (norms, violations): `norms[bond]` is sqrt((1/T) int |h|^2 dt)
    and `violations` lists the bonds whose norm exceeds 1 beyond roundoff.
    """
    if bonds is None:
        bonds = [None]
    norms = {}
    for bond in bonds:
        norms[bond] = math.sqrt(max(driving.mean_square(bond), 0.0))
    violations = [b for b, v in norms.items() if v > 1.0 + 1e-12]
    return norms, violations


# ---------------------------------------------------------------------------
# full model


@dataclass(frozen=True)
class ModelParams:
    """Hopping strength, lattice, disorder realization and driving."""

    g: float
    lattice: LatticeSpec
    disorder: DisorderRealization
    driving: object

    def __post_init__(self):
        if self.g < 0:
            raise ConfigurationError("hopping strength g must be non-negative")
        if self.disorder.lattice != self.lattice:
            raise ConfigurationError("disorder was sampled on a different lattice")

    @property
    def period(self):
        return self.driving.period

    @property
    def nu(self):
        return self.driving.nu


def assemble_hamiltonian(params, t, dense=False):
    """Instantaneous Hamiltonian: diagonal v_x, off-diagonal g * hop(t).

    Exactly Hermitian by construction (one real amplitude per unordered
    bond).  Returns a CSR matrix, or an ndarray when `dense` is set.
    """
    from scipy.sparse import csr_matrix

    lat = params.lattice
    n = lat.n_sites
    bonds = lat.bonds()
    rows, cols, vals = [], [], []
    for (i, j) in bonds:
        h = params.g * float(params.driving.hop(t, (i, j)))
        if h != 0.0:
            rows += [i, j]
            cols += [j, i]
            vals += [h, h]
    rows += list(range(n))
    cols += list(range(n))
    vals += list(params.disorder.values)
    H = csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n))
    return H.toarray() if dense else H
