"""Restricted resolvents, resonances, security boxes, good boxes and columns.

The localization machinery works on sub-regions of a quasi-energy block:
dense inverses of (H_hat|region - lambda), resonant-site maps with their
security boxes, the two-branch harmonic weight P, path-sum decay functions
for kernels with small l1 row sums, and the verdict predicates that call a
region "good" when its resolvent decays from the center to the boundary.

Columns here are finite-frequency proxies of the infinite columns: every
verdict derived on a truncated column carries the harmonic window used, and
spatial boundaries are taken within the finite lattice patch (restriction
semantics).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigurationError, DomainError, SingularityError

# ---------------------------------------------------------------------------
# regions of a quasi-energy block


@dataclass
class Region:
    """Subset of a quasi-energy block with its geometry.

    `rows` index the block matrix; `center_row` is the distinguished point
    decay is measured from.  Boundary rows are those with a nonzero coupling
    to a point outside the region (spatial neighbors within the lattice
    patch, or harmonic offsets leaving the region window, which exist at
    every cutoff harmonic regardless of the ambient truncation).
    """

    op: object
    rows: np.ndarray
    kind: str
    center_site: tuple
    k_center: int
    L: int
    K: int | None = None

    @property
    def size(self):
        return self.rows.size

    def submatrix(self):
        D = self.op.dense()
        return D[np.ix_(self.rows, self.rows)]

    def center_rows(self):
        """Rows of the center spatial site, all harmonics in the region."""
        lat = self.op.params.lattice
        c = lat.index(self.center_site)
        return np.array([i for i, r in enumerate(self.rows)
                         if self.op.site_of(r) == c])

    def center_row(self):
        """Row of (center site, k_center) within the region."""
        target = self.op.row(self.op.params.lattice.index(self.center_site),
                             self.k_center)
        hits = np.where(self.rows == target)[0]
        if hits.size != 1:
            raise ConfigurationError("region does not contain its center")
        return int(hits[0])

    def distances_from_center(self):
        """l1 distance on lattice x harmonics from (center, k_center)."""
        lat = self.op.params.lattice
        c = np.asarray(self.center_site)
        sites = lat.sites()
        out = np.empty(self.size, dtype=int)
        for i, r in enumerate(self.rows):
            s = sites[self.op.site_of(r)]
            out[i] = np.abs(s - c).sum() + abs(self.op.k_of(r) - self.k_center)
        return out

    def inner_boundary(self):
        """Indices (into `rows`) of the inner boundary of the region.

        Membership is geometric in lattice-patch x infinite-harmonics terms:
        a column's complement is purely spatial, while a box also ends at
        its harmonic window even when that window touches the ambient block.
        """
        op = self.op
        lat = op.params.lattice
        neigh = _neighbor_map(lat)
        sites = lat.sites()
        c = np.asarray(self.center_site)

        def inside(j, kp):
            if np.max(np.abs(sites[j] - c)) > self.L:
                return False
            if self.kind == "column":
                return True
            return abs(kp - self.k_center) <= self.K

        drv = op.params.driving
        out = []
        for i, r in enumerate(self.rows):
            site = op.site_of(int(r))
            k = op.k_of(int(r))
            boundary = False
            for j in neigh[site]:
                bond = (site, j) if site < j else (j, site)
                for m in range(-op.kh, op.kh + 1):
                    if drv.harmonic(m, bond) == 0:
                        continue
                    if not inside(j, k - m):
                        boundary = True
                        break
                if boundary:
                    break
            if boundary:
                out.append(i)
        return np.array(out, dtype=int)


def _neighbor_map(lattice):
    neigh = {i: [] for i in range(lattice.n_sites)}
    for (i, j) in lattice.bonds():
        neigh[i].append(j)
        neigh[j].append(i)
    return neigh


def box_region(op, center_site, L_box, k_center=None, K_box=None):
    """Region (center + [-L_box, L_box]^d) x [k_center - K_box, ...]."""
    lat = op.params.lattice
    k_center = op.k0 if k_center is None else int(k_center)
    K_box = op.K if K_box is None else int(K_box)
    if abs(k_center - op.k0) + K_box > op.K:
        raise ConfigurationError("box harmonic window outside the block")
    c = np.asarray(center_site)
    sites = lat.sites()
    rows = []
    for i in range(lat.n_sites):
        if np.max(np.abs(sites[i] - c)) <= L_box:
            for k in range(k_center - K_box, k_center + K_box + 1):
                rows.append(op.row(i, k))
    return Region(op=op, rows=np.array(sorted(rows)), kind="box",
                  center_site=tuple(int(x) for x in center_site),
                  k_center=k_center, L=int(L_box), K=K_box)


def column_region(op, center_site, L_col):
    """Region (center + [-L_col, L_col]^d) x full block window."""
    lat = op.params.lattice
    c = np.asarray(center_site)
    sites = lat.sites()
    rows = []
    for i in range(lat.n_sites):
        if np.max(np.abs(sites[i] - c)) <= L_col:
            for k in op.k_values:
                rows.append(op.row(i, int(k)))
    return Region(op=op, rows=np.array(sorted(rows)), kind="column",
                  center_site=tuple(int(x) for x in center_site),
                  k_center=op.k0, L=int(L_col), K=None)


# ---------------------------------------------------------------------------
# restricted resolvent


def restricted_resolvent(op, region, lam, residual_tol=1e-10):
    """Dense inverse of (H_hat|region - lam) with a residual check."""
    A = region.submatrix() - lam * np.eye(region.size)
    try:
        lu = lu_factor(A)
        X = lu_solve(lu, np.eye(region.size, dtype=complex))
    except np.linalg.LinAlgError:
        X = None
    if X is not None:
        resid = np.max(np.abs(A @ X - np.eye(region.size)))
        if resid <= residual_tol:
            return X
    evals = np.linalg.eigvalsh(region.submatrix())
    nearest = float(evals[np.argmin(np.abs(evals - lam))])
    raise SingularityError(
        f"lambda={lam} within {abs(nearest - lam):.3e} of the region "
        "spectrum; resolvent residual budget exceeded",
        nearest_eigenvalue=nearest)


# ---------------------------------------------------------------------------
# resonant sites and security boxes


@dataclass
class ResonanceMap:
    """Per-site integer segments of resonant harmonics |v + k nu - lam| < sqrt(g)."""

    lam: float
    g: float
    nu: float
    k_window: tuple
    segments: dict

    def sites(self):
        return sorted(self.segments)

    def is_resonant(self, site_index, k):
        seg = self.segments.get(site_index)
        return seg is not None and seg[0] <= k <= seg[1]


def find_resonances(disorder, lam, g, nu, k_window):
    """Exact threshold scan for resonant segments inside a harmonic window.

    The inequality is strict: |v + k nu - lam| = sqrt(g) is excluded.
    """
    kmin, kmax = int(k_window[0]), int(k_window[1])
    sg = math.sqrt(g)
    segments = {}
    for i, v in enumerate(disorder.values):
        lo = (lam - v - sg) / nu
        hi = (lam - v + sg) / nu
        k_lo = math.floor(lo) + 1  # strict: k > lo
        k_hi = math.ceil(hi) - 1   # strict: k < hi
        k_lo = max(k_lo, kmin)
        k_hi = min(k_hi, kmax)
        if k_lo <= k_hi:
            segments[i] = (k_lo, k_hi)
    return ResonanceMap(lam=float(lam), g=float(g), nu=float(nu),
                        k_window=(kmin, kmax), segments=dict(sorted(segments.items())))


@dataclass
class SecurityBox:
    """Graph-distance-N fattening of a resonant segment."""

    site_index: int
    k_lo: int
    k_hi: int
    N: int

    def contains(self, lattice, site_index, k):
        d_sp = lattice.l1_distance(self.site_index, site_index)
        d_k = max(0, self.k_lo - k, k - self.k_hi)
        return d_sp + d_k < self.N

    def segment_distance(self, lattice, other):
        d_sp = lattice.l1_distance(self.site_index, other.site_index)
        d_k = max(0, other.k_lo - self.k_hi, self.k_lo - other.k_hi)
        return d_sp + d_k

    def points(self, lattice, k_window=None):
        """Enumerate the box points (for tests and small regions)."""
        pts = []
        sites = lattice.sites()
        x0 = sites[self.site_index]
        for i in range(lattice.n_sites):
            d_sp = int(np.abs(sites[i] - x0).sum())
            if d_sp >= self.N:
                continue
            budget = self.N - 1 - d_sp
            lo, hi = self.k_lo - budget, self.k_hi + budget
            if k_window is not None:
                lo, hi = max(lo, k_window[0]), min(hi, k_window[1])
            pts.extend((i, k) for k in range(lo, hi + 1))
        return pts


@dataclass
class SecurityBoxSet:
    boxes: list
    N: int
    intersections: np.ndarray = field(repr=False)

    def any_intersecting(self):
        return bool(self.intersections.any())


def build_security_boxes(rmap, N, lattice):
    """One security box per resonant segment, with the pairwise-intersection
    matrix (two boxes of radius N intersect iff their segments are closer
    than 2N - 1 in graph distance)."""
    if N < 1:
        raise ConfigurationError("security radius N must be >= 1")
    boxes = [SecurityBox(site_index=s, k_lo=seg[0], k_hi=seg[1], N=int(N))
             for s, seg in rmap.segments.items()]
    n = len(boxes)
    inter = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(a + 1, n):
            hit = boxes[a].segment_distance(lattice, boxes[b]) <= 2 * (N - 1)
            inter[a, b] = inter[b, a] = hit
    return SecurityBoxSet(boxes=boxes, N=int(N), intersections=inter)


# ---------------------------------------------------------------------------
# harmonic weight


def weight_p(k, g, nu, M, extended=False):
    """Two-branch harmonic weight: 1/sqrt(g) on the resonant window
    (closed), 1/(nu(|k|-1) - M) outside.

    The paper's outside branch has no valid value on shoulder harmonics
    where nu(|k|-1) <= M; with `extended` those harmonics fall back to the
    first branch (which still dominates 1/|v + k nu - lam| whenever the
    site column is resonance-free), otherwise they raise DomainError.
    """
    if g <= 0:
        raise DomainError("weight needs g > 0")
    sg = math.sqrt(g)
    if abs(k * nu) <= M + sg:
        return 1.0 / sg
    denom = nu * (abs(k) - 1) - M
    if denom > 0 and not extended:
        return 1.0 / denom
    if extended:
        if denom <= sg:
            return 1.0 / sg
        return 1.0 / denom
    raise DomainError(
        f"nu(|k|-1) - M = {denom:.3e} <= 0 at k={k}: outside branch undefined")


# ---------------------------------------------------------------------------
# strong resonance


def alpha_of(g, nu):
    """Regime factor: 1 when nu < sqrt(g), else g."""
    return 1.0 if nu < math.sqrt(g) else g


def strong_resonance_test(op, region, lam, regime, L=None):
    """Distance of the restricted spectrum to lambda against the regime
    threshold: nu^2 alpha(g) for smooth driving, exp(-sqrt(L)) for the
    square-integrable regime."""
    evals = np.linalg.eigvalsh(region.submatrix())
    dist = float(np.min(np.abs(evals - lam)))
    g, nu = op.params.g, op.params.nu
    if regime == "C1":
        threshold = nu ** 2 * alpha_of(g, nu)
    elif regime == "C2":
        Lv = region.L if L is None else L
        threshold = math.exp(-math.sqrt(Lv))
    else:
        raise ConfigurationError(f"unknown regime {regime!r}")
    return dist <= threshold, dist, threshold


# ---------------------------------------------------------------------------
# decay functions


@dataclass
class DecayFunction:
    """Path-sum decay function of a non-negative kernel with small row sums.

    d(x, y) = -log sum over all paths x -> y of the product of kernel
    entries, computed as -log of ((I - G)^{-1} - I)(x, y); zero on the
    diagonal by convention.
    """

    kernel: np.ndarray = field(repr=False)
    path_sum: np.ndarray = field(repr=False)
    l1max: float
    positions: np.ndarray | None = None

    @property
    def n(self):
        return self.kernel.shape[0]

    def d(self, i, j):
        if i == j:
            return 0.0
        s = self.path_sum[i, j]
        return math.inf if s <= 0 else -math.log(s)

    def matrix(self):
        with np.errstate(divide="ignore"):
            out = -np.log(np.maximum(self.path_sum, 0.0))
        np.fill_diagonal(out, 0.0)
        return out


def decay_function(kernel, positions=None):
    """Build the decay function of |kernel|; requires max row sum < 1/2."""
    G = np.abs(np.asarray(kernel, dtype=float))
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ConfigurationError("kernel must be square")
    l1max = float(G.sum(axis=1).max())
    if l1max >= 0.5:
        raise DomainError(f"kernel row-sum norm {l1max:.4f} >= 1/2")
    n = G.shape[0]
    N = np.linalg.solve(np.eye(n) - G, np.eye(n)) - np.eye(n)
    N = np.maximum(N, 0.0)
    return DecayFunction(kernel=G, path_sum=N, l1max=l1max,
                         positions=None if positions is None
                         else np.asarray(positions))


def truncated_path_sum(kernel, max_len):
    """Sum over paths of length <= max_len by repeated multiplication (the
    brute-force oracle for the linear-solve path sum)."""
    G = np.abs(np.asarray(kernel, dtype=float))
    acc = np.zeros_like(G)
    P = np.eye(G.shape[0])
    for _ in range(max_len):
        P = P @ G
        acc += P
    return acc


def enumerated_path_sum(kernel, source, target, max_len):
    """Literal enumeration over vertex sequences (tiny instances only)."""
    G = np.abs(np.asarray(kernel, dtype=float))
    n = G.shape[0]
    total = 0.0
    stack = [(source, 1.0, 0)]
    while stack:
        v, w, steps = stack.pop()
        if steps >= max_len:
            continue
        for u in range(n):
            if G[v, u] == 0.0:
                continue
            wu = w * G[v, u]
            if u == target:
                total += wu
            stack.append((u, wu, steps + 1))
    return total


def boundary_decay_sum(decay, source, L):
    """Sum of exp(-d) over vertices at spatial sup-distance exactly L.

    Asserts the path-count bound l1max^L / (1 - l1max), valid because the
    kernel only couples vertices at spatial distance <= 1 so no path
    shorter than L reaches the shell.
    """
    if decay.positions is None:
        raise ConfigurationError("decay function has no vertex positions")
    pos = decay.positions
    dist = np.max(np.abs(pos - pos[source]), axis=1) if pos.ndim > 1 \
        else np.abs(pos - pos[source])
    shell = np.where(dist == L)[0]
    total = float(sum(decay.path_sum[source, j] for j in shell))
    bound = decay.l1max ** L / (1.0 - decay.l1max)
    return total, bound


# ---------------------------------------------------------------------------
# verdict reports


@dataclass
class BoxReport:
    """Verdict record for a box or column at one spectral parameter."""

    kind: str
    center_site: tuple
    L: int
    K: int | None
    k_center: int
    lam: float
    good: bool
    strongly_resonant: bool
    intersecting_security_boxes: bool
    mu_required: float
    mu_measured: float
    thresholds: dict
    details: dict = field(default_factory=dict)

    def to_record(self):
        rec = {
            "kind": self.kind, "center_site": list(self.center_site),
            "L": self.L, "K": self.K, "k_center": self.k_center,
            "lam": self.lam, "good": self.good,
            "strongly_resonant": self.strongly_resonant,
            "intersecting_security_boxes": self.intersecting_security_boxes,
            "mu_required": self.mu_required, "mu_measured": self.mu_measured,
        }
        rec.update({f"threshold_{k}": v for k, v in self.thresholds.items()})
        return rec


def is_good_box(op, center_site, L_box, lam, mu, k_center=None, K_box=None):
    """Center-to-boundary decay verdict on a space x harmonic box.

    Good when |(center, k_center) -> (y, k)| resolvent entries stay below
    exp(-mu * l1 distance) on the inner boundary.  The measured rate is the
    worst log-slope over boundary points.
    """
    region = box_region(op, center_site, L_box, k_center, K_box)
    thresholds = {"mu": mu}
    try:
        R = restricted_resolvent(op, region, lam)
    except SingularityError as err:
        return BoxReport(kind="box", center_site=tuple(center_site),
                         L=L_box, K=region.K, k_center=region.k_center,
                         lam=lam, good=False, strongly_resonant=True,
                         intersecting_security_boxes=False, mu_required=mu,
                         mu_measured=-math.inf, thresholds=thresholds,
                         details={"nearest_eigenvalue": err.nearest_eigenvalue})
    c = region.center_row()
    boundary = region.inner_boundary()
    dists = region.distances_from_center()
    mu_measured = math.inf
    good = True
    for b in boundary:
        if b == c:
            continue
        mag = abs(R[c, b])
        dist = max(int(dists[b]), 1)
        rate = math.inf if mag == 0 else -math.log(mag) / dist
        mu_measured = min(mu_measured, rate)
        if mag > math.exp(-mu * dist):
            good = False
    return BoxReport(kind="box", center_site=tuple(center_site), L=L_box,
                     K=region.K, k_center=region.k_center, lam=lam,
                     good=good, strongly_resonant=False,
                     intersecting_security_boxes=False, mu_required=mu,
                     mu_measured=float(mu_measured), thresholds=thresholds,
                     details={"n_boundary": int(len(boundary))})


def high_offset_threshold(op, M):
    """Smallest |k0| from which boxes are deterministically good."""
    return (M + math.sqrt(op.params.g)) / op.params.nu + op.K


def column_kernel(op, region):
    """Kernel g |hopping| P(target harmonic) on a column region."""
    D = op.dense()
    sub = np.abs(D[np.ix_(region.rows, region.rows)]).astype(float)
    np.fill_diagonal(sub, 0.0)
    g, nu = op.params.g, op.params.nu
    M = op.params.disorder.density.M
    P = np.array([weight_p(op.k_of(int(r)), g, nu, M, extended=True)
                  for r in region.rows])
    return sub * P[None, :], P


def is_good_column(op, center_site, L_col, lam, mu, c_nu=0.0):
    """Column verdict: strong-resonance gate, then the kernel decay bound.

    Builds G = g |hopping| P, absorbs the proposition prefactor
    (2L+1)^{d/2} (2+M) (1/dist + c_nu) into the decay function as an
    additive offset, checks the pointwise bound from every center-column
    row, and requires the offset boundary sum below exp(-mu L).
    """
    region = column_region(op, center_site, L_col)
    g, nu = op.params.g, op.params.nu
    M = op.params.disorder.density.M
    flagged, dist, thr = strong_resonance_test(op, region, lam, "C2", L=L_col)
    thresholds = {"mu": mu, "strong_resonance": thr}
    base = dict(kind="column", center_site=tuple(center_site), L=L_col,
                K=op.K, k_center=op.k0, lam=lam, mu_required=mu,
                intersecting_security_boxes=False, thresholds=thresholds)
    if flagged:
        return BoxReport(good=False, strongly_resonant=True,
                         mu_measured=-math.inf,
                         details={"spectral_distance": dist}, **base)
    G, P = column_kernel(op, region)
    l1max = float(G.sum(axis=1).max())
    if l1max >= 0.5:
        return BoxReport(good=False, strongly_resonant=False,
                         mu_measured=-math.inf,
                         details={"kernel_l1max": l1max,
                                  "reason": "kernel row sums >= 1/2"}, **base)
    decay = decay_function(G)
    R = restricted_resolvent(op, region, lam)
    prefac = ((2 * L_col + 1) ** (op.params.lattice.d / 2) * (2 + M)
              * (1.0 / dist + c_nu))
    offset = math.log(prefac)
    boundary = region.inner_boundary()
    centers = region.center_rows()
    good = True
    mu_measured = math.inf
    worst_sum = 0.0
    for ci in centers:
        for b in boundary:
            if b == ci:
                continue
            bound = P[ci] * prefac * decay.path_sum[ci, b]
            if abs(R[ci, b]) > bound + 1e-15:
                good = False
        s = prefac * float(decay.path_sum[ci, boundary].sum())
        worst_sum = max(worst_sum, s)
    if worst_sum > 0:
        mu_measured = -math.log(worst_sum) / L_col
        if worst_sum >= math.exp(-mu * L_col):
            good = False
    details = {"spectral_distance": dist, "kernel_l1max": l1max,
               "prefactor": prefac, "decay_offset": offset,
               "boundary_sum": worst_sum}
    return BoxReport(good=good, strongly_resonant=False,
                     mu_measured=float(mu_measured), details=details, **base)


# ---------------------------------------------------------------------------
# column resolvent bound (Cauchy-Schwarz route)


def column_resolvent_bound_check(op, center_site, L_col, lam, c_const):
    """Entrywise check of |R(z, y)| <= (2L+1)^{d/2} (2+M) P(z) / (1+|k_z-k_y|)
    * (sup_i 1/|lam - lam_i| + C) over a column; reports the minimum slack."""
    region = column_region(op, center_site, L_col)
    sub = region.submatrix()
    evals = np.linalg.eigvalsh(sub)
    dist = float(np.min(np.abs(evals - lam)))
    if dist == 0:
        raise SingularityError("lambda in the column spectrum",
                               nearest_eigenvalue=lam)
    R = restricted_resolvent(op, region, lam)
    g, nu = op.params.g, op.params.nu
    M = op.params.disorder.density.M
    d = op.params.lattice.d
    P = np.array([weight_p(op.k_of(int(r)), g, nu, M, extended=True)
                  for r in region.rows])
    ks = np.array([op.k_of(int(r)) for r in region.rows])
    dk = np.abs(ks[:, None] - ks[None, :])
    lead = (2 * L_col + 1) ** (d / 2) * (2 + M) * (1.0 / dist + c_const)
    bound = lead * P[:, None] / (1.0 + dk)
    slack = bound - np.abs(R)
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    return {"min_slack": float(slack.min()),
            "worst_pair": (int(region.rows[i]), int(region.rows[j])),
            "spectral_distance": dist,
            "satisfied": bool(slack.min() >= 0.0)}


def calibrate_resolvent_constant(params_factory, n_realizations, L_col, lam,
                                 base_seed=20240901, k0=0, K=8,
                                 percentile=99.0):
    """Empirical constant for the column resolvent bound.

    Runs an ensemble, computes the per-entry constant that would make the
    bound tight, and returns the given percentile.  Frozen per (nu, M) by
    the caller.
    """
    from .floquet import build_quasienergy_operator
    from ._seeds import derive_seed

    reqs = []
    for r in range(n_realizations):
        params = params_factory(derive_seed(base_seed, r))
        op = build_quasienergy_operator(params, k0=k0, K=K)
        region = column_region(op, (0,) * params.lattice.d, L_col)
        sub = region.submatrix()
        evals = np.linalg.eigvalsh(sub)
        dist = float(np.min(np.abs(evals - lam)))
        if dist < 1e-9:
            continue
        R = np.linalg.inv(sub - lam * np.eye(region.size))
        g, nu = params.g, params.nu
        M = params.disorder.density.M
        d = params.lattice.d
        P = np.array([weight_p(op.k_of(int(rr)), g, nu, M, extended=True)
                      for rr in region.rows])
        ks = np.array([op.k_of(int(rr)) for rr in region.rows])
        dk = np.abs(ks[:, None] - ks[None, :])
        lead = (2 * L_col + 1) ** (d / 2) * (2 + M)
        c_req = (np.abs(R) * (1.0 + dk) / (lead * P[:, None])) - 1.0 / dist
        reqs.append(c_req.ravel())
    if not reqs:
        raise ConfigurationError("no usable realizations for calibration")
    allreq = np.concatenate(reqs)
    return float(max(np.percentile(allreq, percentile), 0.0))


# ---------------------------------------------------------------------------
# chain bound on boxes (smooth regime)


def smallest_chain_radius(g, nu, d, n_max=400):
    """Direct scan for the smallest security radius N with
    N^{d-1} (2N + sqrt(g)/nu) (2d+2)^{N+1} sqrt(g)^{(N-1)/2} < nu^2 alpha."""
    a = alpha_of(g, nu)
    sg = math.sqrt(g)
    for N in range(1, n_max + 1):
        lhs = (N ** (d - 1) * (2 * N + sg / nu)
               * (2 * d + 2) ** (N + 1) * sg ** ((N - 1) / 2.0))
        if lhs < nu ** 2 * a:
            return N
    raise ConfigurationError(f"no chain radius below {n_max} at g={g}, nu={nu}")


def chain_bound_evaluate(op, center_site, L_box, lam, N, k_center=None,
                         K_box=None):
    """Both sides of the chain decay bound on a box, plus its hypotheses.

    The right-hand side is 2 (sqrt(g)^{N/2})^{n0} / (nu^2 alpha)^2 with
    n0 = floor(dist / 2N).  Hypotheses (disjoint security boxes, no strongly
    resonant security box, box not strongly resonant) are reported; the
    caller asserts the inequality only when they hold.
    """
    g, nu = op.params.g, op.params.nu
    a = alpha_of(g, nu)
    region = box_region(op, center_site, L_box, k_center, K_box)
    kw = (region.k_center - region.K, region.k_center + region.K)
    rmap = find_resonances(op.params.disorder, lam, g, nu,
                           (kw[0] - N, kw[1] + N))
    sec = build_security_boxes(rmap, N, op.params.lattice)
    hyp = {"no_intersections": not sec.any_intersecting()}
    thr = nu ** 2 * a
    sec_ok = True
    for b in sec.boxes:
        pts = b.points(op.params.lattice, k_window=(op.k0 - op.K, op.k0 + op.K))
        rows = np.array(sorted(op.row(i, k) for i, k in pts))
        if rows.size == 0:
            continue
        sub = op.dense()[np.ix_(rows, rows)]
        dist = float(np.min(np.abs(np.linalg.eigvalsh(sub) - lam)))
        if dist <= thr:
            sec_ok = False
            break
    hyp["no_strongly_resonant_security_box"] = sec_ok
    flagged, dist_box, _ = strong_resonance_test(op, region, lam, "C1")
    hyp["box_not_strongly_resonant"] = not flagged
    records = []
    if all(hyp.values()):
        R = restricted_resolvent(op, region, lam)
        c = region.center_row()
        dists = region.distances_from_center()
        for b in region.inner_boundary():
            if b == c:
                continue
            n0 = int(dists[b]) // (2 * N)
            rhs = 2.0 * (math.sqrt(g) ** (N / 2.0)) ** n0 / thr ** 2
            records.append({"distance": int(dists[b]),
                            "lhs": float(abs(R[c, b])), "rhs": float(rhs),
                            "satisfied": bool(abs(R[c, b]) <= rhs)})
    return {"hypotheses": hyp, "records": records,
            "n_security_boxes": len(sec.boxes)}


# ---------------------------------------------------------------------------
# two-scale column step (square-integrable regime)


def uniform_kernel_l1_bound(op, region=None):
    """Measured sup over points of sum_{k_y, z} |hopping(y, z)| P(z)
    / (1 + |k_x - k_y|) on the block (finite-window value of the uniform
    l1 bound used by the multi-scale step)."""
    region = region or column_region(op, (0,) * op.params.lattice.d,
                                     op.params.lattice.L)
    G, P = column_kernel(op, region)
    ks = np.array([op.k_of(int(r)) for r in region.rows])
    sites = np.array([op.site_of(int(r)) for r in region.rows])
    row_sums = G.sum(axis=1)  # sum over z of |hop| P per point y
    best = 0.0
    for kx in np.unique(ks):
        w = 1.0 / (1.0 + np.abs(ks - kx))
        for y in np.unique(sites):
            sel = sites == y
            best = max(best, float(np.sum(w[sel] * row_sums[sel])))
    return best


def two_scale_column_check(op, center_site, L_small, L_large, lam, mu,
                           c_nu=0.0):
    """One step of the column induction: classify small columns, check the
    strong-resonance hypotheses, and measure the large column's rate.

    When the hypotheses hold (at most one bad small column, no strongly
    resonant doubled column, large column not strongly resonant) the large
    column must be good at the reduced rate mu (L_large - 3 L_small) /
    L_large + log(1 - ||G'||) / L_large, where ||G'|| is the measured
    two-scale kernel norm.  Returns diagnostics either way.
    """
    if L_large < 2 * L_small:
        raise ConfigurationError("need L_large >= 2 L_small")
    lat = op.params.lattice
    c = np.asarray(center_site)
    span = L_large - L_small
    centers = [tuple(c + off) for off in _offsets(lat.d, span)]
    sub_reports = {}
    bad = []
    good_sums = []
    for y in centers:
        rep = is_good_column(op, y, L_small, lam, mu, c_nu=c_nu)
        sub_reports[y] = rep
        if rep.good:
            good_sums.append(rep.details["boundary_sum"])
        else:
            bad.append(y)
    # one localized defect makes every overlapping translate bad, so the
    # single-bad-column hypothesis means: no two DISJOINT bad columns
    h1 = all(max(abs(a - b) for a, b in zip(y1, y2)) <= 2 * L_small
             for i, y1 in enumerate(bad) for y2 in bad[i + 1:])
    span2 = L_large - 2 * L_small
    h2 = True
    for off in _offsets(lat.d, max(span2, 0)):
        y = tuple(c + off)
        reg2 = column_region(op, y, 2 * L_small)
        flagged, _, _ = strong_resonance_test(op, reg2, lam, "C2",
                                              L=2 * L_small)
        if flagged:
            h2 = False
            break
    reg_large = column_region(op, center_site, L_large)
    flagged, dist_large, _ = strong_resonance_test(op, reg_large, lam, "C2",
                                                   L=L_large)
    h3 = not flagged
    hyp = {"at_most_one_bad_small_column": h1,
           "no_strongly_resonant_doubled_column": h2,
           "large_column_not_strongly_resonant": h3}
    result = {"hypotheses": hyp, "bad_centers": bad,
              "sub_reports": sub_reports}
    if not all(hyp.values()):
        return result
    gp_good = max(good_sums) if good_sums else 0.0
    gp_bad = 0.0
    if bad:
        gp_bad = _bad_row_bound(op, bad[0], L_small, lam, c_nu)
    gp_norm = max(gp_good, gp_bad)
    result["gprime_l1max"] = gp_norm
    if gp_norm >= 1.0:
        result["mu_prime_target"] = None
        return result
    mu_target = (mu * (L_large - 3 * L_small) / L_large
                 + math.log(1.0 - gp_norm) / L_large)
    rep = is_good_column(op, center_site, L_large, lam, mu_target, c_nu=c_nu)
    result["mu_prime_target"] = mu_target
    result["large_report"] = rep
    result["verdict_good"] = rep.good
    return result


def _offsets(d, span):
    if span == 0:
        return [np.zeros(d, dtype=int)]
    axes = [np.arange(-span, span + 1)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    return [np.array(v) for v in zip(*[g.ravel() for g in grid])]


def _bad_row_bound(op, bad_center, L_small, lam, c_nu):
    """Row-sum bound of the two-scale kernel on the bad branch: resolvent
    hop across the doubled column, decay inside, and one more kernel row."""
    reg2 = column_region(op, bad_center, 2 * L_small)
    sub = reg2.submatrix()
    evals = np.linalg.eigvalsh(sub)
    dist = float(np.min(np.abs(evals - lam)))
    if dist == 0:
        return math.inf
    G, P = column_kernel(op, reg2)
    l1 = float(G.sum(axis=1).max())
    if l1 >= 0.5:
        return math.inf
    decay = decay_function(G)
    d = op.params.lattice.d
    M = op.params.disorder.density.M
    prefac = ((4 * L_small + 1) ** (d / 2) * (2 + M) * (1.0 / dist + c_nu))
    bnd = reg2.inner_boundary()
    # resolvent leg to the doubled boundary, then one kernel row out
    leg = prefac * np.array([decay.path_sum[i, bnd].sum()
                             for i in reg2.center_rows()]).max()
    return float(leg * l1 / (1.0 - l1))
