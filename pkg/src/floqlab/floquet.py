"""Quasi-energy operator on a truncated block of lattice x Fourier harmonics.

The driven problem i d/dt phi = H(t) phi is equivalent to a time-independent
Hamiltonian acting on functions of (site, harmonic index k): the diagonal
carries v_x + k*nu and the hopping couples (x, k) to (y, k - m) with the
m-th Fourier coefficient of the bond signal.  For a monochromatic bond
signal only |m| <= 1 couples, so the operator is banded along the frequency
axis; square-wave signals couple all harmonic offsets with 1/m amplitudes
and are truncated at a cutoff chosen from their square-summable tail.

Everything here works on a finite window k in [k0-K, k0+K]; the exact norm
of the couplings a vector would send outside the window (its "truncation
residual") is exposed so that block eigenpairs can be compared against the
untruncated ladder at a measured tolerance.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .errors import AccuracyError, ConfigurationError, ResourceError

DEFAULT_DIM_BUDGET = 40_000


def fourier_coefficient(driving, k, bond=None):
    """Fourier coefficient of the bond hopping signal at harmonic k.

    Defined as (1/T) int_0^T h(t) exp(-i nu k t) dt for the per-bond signal
    h(t); for the monochromatic signal a + b cos + b' sin this is a at k=0,
    (b - i b')/2 at k=+1 and (b + i b')/2 at k=-1.
    """
    return driving.harmonic(k, bond)


def harmonic_cutoff(driving, K, tail_target=1e-8, bonds=None):
    """Smallest harmonic cutoff whose discarded per-bond l2 tail is below
    target, capped at 2K.  Returns (cutoff, worst achieved tail)."""
    if getattr(driving, "variant", None) == "smooth":
        return 1, 0.0
    cap = min(getattr(driving, "max_harmonic", 2 * K), 2 * K)
    bonds = bonds or [None]
    worst = 0.0
    best_kh = cap
    for kh in range(1, cap + 1):
        worst = 0.0
        for bond in bonds:
            kept = sum(abs(driving.harmonic(m, bond)) ** 2
                       for m in range(-kh, kh + 1))
            worst = max(worst, driving.mean_square(bond) - kept)
        if worst < tail_target:
            best_kh = kh
            break
    else:
        best_kh = cap
    return best_kh, max(worst, 0.0)


@dataclass
class QuasiEnergyOperator:
    """Sparse Hermitian block of the quasi-energy operator.

    Rows are ordered site-major: row(site i, harmonic k) = i*(2K+1) + (k -
    k0 + K).  `kh` is the harmonic cutoff actually used and `discarded_tail`
    the worst per-bond l2 mass dropped by it.
    """

    params: object
    k0: int
    K: int
    kh: int
    matrix: csr_matrix = field(repr=False)
    discarded_tail: float = 0.0
    _dense: np.ndarray = field(default=None, repr=False)

    @property
    def nu(self):
        return self.params.nu

    @property
    def g(self):
        return self.params.g

    @property
    def n_k(self):
        return 2 * self.K + 1

    @property
    def dim(self):
        return self.params.lattice.n_sites * self.n_k

    @property
    def k_values(self):
        return np.arange(self.k0 - self.K, self.k0 + self.K + 1)

    def row(self, site_index, k):
        if abs(k - self.k0) > self.K:
            raise ConfigurationError(f"harmonic {k} outside window")
        return site_index * self.n_k + (k - self.k0 + self.K)

    def site_of(self, row):
        return row // self.n_k

    def k_of(self, row):
        return self.k0 - self.K + (row % self.n_k)

    def dense(self):
        if self._dense is None:
            self._dense = self.matrix.toarray()
        return self._dense

    def eigh(self):
        return np.linalg.eigh(self.dense())

    def hop_l1max(self):
        """Max over block points of the summed coupling magnitude."""
        m = np.abs(self.matrix - self._diag_sparse())
        return float(m.sum(axis=1).max())

    def _diag_sparse(self):
        from scipy.sparse import diags
        return diags(self.matrix.diagonal())

    def harmonic_coefficients(self, bond=None):
        """Nonzero g-weighted coupling coefficients by harmonic offset."""
        drv = self.params.driving
        return {m: self.g * drv.harmonic(m, bond)
                for m in range(-self.kh, self.kh + 1)
                if abs(drv.harmonic(m, bond)) > 0}

    def outside_coupling_matrix(self):
        """Couplings from window rows to the kh harmonic layers just outside.

        Returns a sparse matrix B with one row per outside point; for an
        eigenpair (lam, v) of the block, ||B v|| is the exact residual of the
        zero-extended vector against the infinite-frequency operator.
        """
        lat = self.params.lattice
        drv = self.params.driving
        rows, cols, vals = [], [], []
        out_index = {}

        def out_row(site, k):
            key = (site, k)
            if key not in out_index:
                out_index[key] = len(out_index)
            return out_index[key]

        lo, hi = self.k0 - self.K, self.k0 + self.K
        for (i, j) in lat.bonds():
            for m in range(-self.kh, self.kh + 1):
                c = self.g * drv.harmonic(m, (i, j))
                if c == 0:
                    continue
                # coupling (x, k) -> (y, k - m); collect pairs with exactly
                # one endpoint outside the window
                for k in range(lo, hi + 1):
                    kp = k - m
                    if lo <= kp <= hi:
                        continue
                    # row (j,kp) outside, column (i,k) inside, and transposed
                    rows.append(out_row(j, kp))
                    cols.append(self.row(i, k))
                    vals.append(np.conj(c))
                    rows.append(out_row(i, kp))
                    cols.append(self.row(j, k))
                    vals.append(c)
        n_out = max(len(out_index), 1)
        return csr_matrix((vals, (rows, cols)), shape=(n_out, self.dim))

    def truncation_residual(self, vec):
        """Norm of the couplings `vec` sends outside the frequency window."""
        if not hasattr(self, "_B"):
            self._B = self.outside_coupling_matrix()
        return float(np.linalg.norm(self._B @ vec))

    def export_triplets(self, path):
        """Write the block in coordinate text form: row col re im."""
        coo = self.matrix.tocoo()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("row col re im\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def build_quasienergy_operator(params, k0=0, K=8, kh=None, tail_target=1e-8,
                               dim_budget=DEFAULT_DIM_BUDGET):
    """Assemble the quasi-energy block over the lattice patch and the
    harmonic window [k0-K, k0+K]."""
    if K < 1:
        raise ConfigurationError("need K >= 1")
    lat = params.lattice
    drv = params.driving
    n_k = 2 * K + 1
    dim = lat.n_sites * n_k
    if dim > dim_budget:
        raise ResourceError(f"block dimension {dim} over budget {dim_budget}")
    if kh is None:
        kh, tail = harmonic_cutoff(drv, K, tail_target)
    else:
        kh = min(int(kh), 2 * K)
        tail = _tail_at(drv, kh)

    rows, cols, vals = [], [], []
    ks = np.arange(k0 - K, k0 + K + 1)
    for (i, j) in lat.bonds():
        for m in range(-kh, kh + 1):
            c = params.g * drv.harmonic(m, (i, j))
            if c == 0:
                continue
            # (x,k) -> (y,k-m) inside the window
            sel = (ks - m >= k0 - K) & (ks - m <= k0 + K)
            kk = ks[sel]
            r = i * n_k + (kk - (k0 - K))
            ccol = j * n_k + (kk - m - (k0 - K))
            rows.extend(r)
            cols.extend(ccol)
            vals.extend([c] * len(kk))
            rows.extend(ccol)
            cols.extend(r)
            vals.extend([np.conj(c)] * len(kk))
    diag_rows = np.arange(dim)
    diag_vals = (np.repeat(params.disorder.values, n_k)
                 + np.tile(ks, lat.n_sites) * params.nu).astype(complex)
    rows.extend(diag_rows)
    cols.extend(diag_rows)
    vals.extend(diag_vals)
    mat = csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)),
                     shape=(dim, dim))
    mat.sum_duplicates()
    return QuasiEnergyOperator(params=params, k0=k0, K=K, kh=kh, matrix=mat,
                               discarded_tail=float(tail or 0.0))


def _tail_at(driving, kh):
    if getattr(driving, "variant", None) == "smooth":
        return 0.0
    kept = sum(abs(driving.harmonic(m)) ** 2 for m in range(-kh, kh + 1))
    return max(driving.mean_square() - kept, 0.0)


# ---------------------------------------------------------------------------
# ladder symmetry


def ladder_shift_spectrum(eigenvalues, n, nu):
    """Eigenvalue ladder shift lam -> lam + n*nu."""
    return np.asarray(eigenvalues, dtype=float) + n * nu


def ladder_shift_vector(op, vec, n):
    """Shift psi(x, k) -> psi(x, k - n) within the block window.

    Returns (shifted vector, lost l2 mass); the lost mass is the truncation
    flag raised when support is pushed outside the window.
    """
    v = np.asarray(vec).reshape(op.params.lattice.n_sites, op.n_k)
    out = np.zeros_like(v)
    if n >= 0:
        out[:, n:] = v[:, :op.n_k - n] if n else v
        lost = np.linalg.norm(v[:, op.n_k - n:]) if n else 0.0
    else:
        out[:, :n] = v[:, -n:]
        lost = np.linalg.norm(v[:, :-n])
    return out.reshape(-1), float(lost)


def ladder_shift_residual(op, lam, vec, n):
    """Residual of the shifted eigenpair against the same block."""
    shifted, lost = ladder_shift_vector(op, vec, n)
    r = op.matrix @ shifted - (lam + n * op.nu) * shifted
    return float(np.linalg.norm(r)), lost


def ladder_tail_estimate(op, lam, vec, n):
    """A-priori bound on the shifted-pair residual from truncation alone.

    Combines the exact outside-window coupling norm of the eigenvector with
    the mass the shift clips off the window, scaled by the largest matrix
    entry that can act on it.
    """
    _, lost = ladder_shift_vector(op, vec, n)
    scale = (op.params.disorder.density.M + (op.K + abs(n)) * op.nu
             + abs(lam) + 2 * op.g + op.hop_l1max())
    return op.truncation_residual(vec) + scale * lost


def interior_eigenpairs(op, edge_layers=4, edge_mass_tol=1e-9):
    """Diagonalize the block and keep eigenpairs away from the window edges.

    An eigenpair is interior when the l2 mass of its vector on the outermost
    `edge_layers` harmonic layers (each side) stays below `edge_mass_tol`.
    Returns (eigenvalues, eigenvectors, interior mask, truncation residuals).
    """
    evals, evecs = op.eigh()
    n_sites = op.params.lattice.n_sites
    V = evecs.reshape(n_sites, op.n_k, -1)
    edge = min(edge_layers, op.K)
    edge_mass = (np.sum(np.abs(V[:, :edge, :]) ** 2, axis=(0, 1))
                 + np.sum(np.abs(V[:, op.n_k - edge:, :]) ** 2, axis=(0, 1)))
    interior = edge_mass < edge_mass_tol
    residuals = np.array([op.truncation_residual(evecs[:, i])
                          for i in range(evecs.shape[1])])
    return evals, evecs, interior, residuals


# ---------------------------------------------------------------------------
# eigenvector frequency decay (used by the localization diagnostics)


def frequency_decay_checks(op, lam, vec):
    """Frequency moment and envelope of a block eigenpair.

    Returns dict with `moment` = sum (k*nu - lam)^2 |psi|^2, whose bound is
    (g * sup_t ||hopping(t)|| + M)^2, and `envelope_max` = max over (x, k)
    of |psi| (1 + |k nu - lam|), bounded by 1 + M + g for unit-norm hopping.
    """
    n_sites = op.params.lattice.n_sites
    v = np.asarray(vec).reshape(n_sites, op.n_k)
    knu = op.k_values * op.nu
    w = knu[None, :] - lam
    moment = float(np.sum((w * np.abs(v)) ** 2))
    envelope = float(np.max(np.abs(v) * (1.0 + np.abs(w))))
    return {"moment": moment, "envelope_max": envelope}


# ---------------------------------------------------------------------------
# windowed transform and generator consistency


def windowed_transform(trajectory, tgrid, nu, k_range, nyquist_margin=4.0):
    """Finite-time Fourier series of a trajectory over one period window.

    `trajectory` has shape (nt, nx) sampled at the uniform, inclusive grid
    `tgrid` spanning exactly one period.  Returns (coeffs, ks) with coeffs of
    shape (nx, nk): coeffs[x, j] = (1/T) int phi(x, u) exp(-i nu ks[j] u) du
    by composite Simpson quadrature.
    """
    traj = np.asarray(trajectory)
    tgrid = np.asarray(tgrid, dtype=float)
    nt = tgrid.size
    if traj.shape[0] != nt:
        raise ConfigurationError("trajectory and time grid disagree")
    T = tgrid[-1] - tgrid[0]
    if abs(T - 2 * math.pi / nu) > 1e-9 * T:
        raise ConfigurationError("window must span exactly one period")
    ks = np.asarray(k_range, dtype=int)
    kmax = max(1, int(np.max(np.abs(ks))))
    if (nt - 1) < nyquist_margin * 2 * kmax:
        raise AccuracyError(
            f"{nt} samples under the {nyquist_margin}x Nyquist margin for "
            f"|k| <= {kmax}")
    if nt % 2 == 0:
        raise ConfigurationError("composite Simpson needs an odd sample count")
    h = T / (nt - 1)
    w = np.ones(nt)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    phases = np.exp(-1j * nu * np.outer(ks, tgrid))  # (nk, nt)
    coeffs = (phases * w) @ traj / T  # (nk, nx)
    return coeffs.T, ks


def parseval_defect(trajectory, tgrid, coeffs):
    """Difference between sum_k |coeff|^2 and the window average of |phi|^2."""
    nt = tgrid.size
    T = tgrid[-1] - tgrid[0]
    h = T / (nt - 1)
    w = np.ones(nt)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    avg = (w @ (np.abs(trajectory) ** 2)) / T
    return float(np.max(np.abs(np.sum(np.abs(coeffs) ** 2, axis=1) - avg)))


def generator_consistency_residual(params, psi0, t, dt, K, n_grid=512,
                                   kh=None):
    """Residual of i d/dt phi_check = H_hat phi_check with a central
    difference in the window start time.

    `psi0` is the state at time `t`; the trajectory is propagated over
    [t - dt, t + T + dt] and three windowed transforms are compared against
    the quasi-energy block on harmonics |k| <= K.  Vanishes as O(dt^2) plus
    the frequency-truncation tail.
    """
    from .propagate import Propagator, evolve_trajectory

    T = params.period
    h = T / n_grid
    m = max(1, int(round(dt / h)))
    dt_eff = m * h
    t_start = t - dt_eff
    nt_total = n_grid + 2 * m + 1
    tgrid = t_start + h * np.arange(nt_total)
    prop = Propagator(steps_per_period=max(n_grid, 256))
    psi_start = evolve_trajectory(params, psi0, t, np.array([t_start]), prop)[0]
    traj = evolve_trajectory(params, psi_start, t_start, tgrid, prop)

    op = build_quasienergy_operator(params, k0=0, K=K, kh=kh)
    ks = op.k_values

    def window(i0):
        return windowed_transform(traj[i0:i0 + n_grid + 1],
                                  tgrid[i0:i0 + n_grid + 1], params.nu, ks)[0]

    c_minus = window(0)
    c_mid = window(m)
    c_plus = window(2 * m)
    dcdt = (c_plus - c_minus) / (2 * dt_eff)
    resid = 1j * dcdt.reshape(-1) - op.matrix @ c_mid.reshape(-1)
    return float(np.linalg.norm(resid)), dt_eff
