"""Reconstruction pipeline: compressed pair correlations to 2D spectrum.

Stages, in data-flow order:

1. pair_correlations: average vec(z_i z_j^H) over blocks for every
   ordered antenna pair.
2. recover_lags: least-squares inversion of the selection-sum system
   relating compressed correlations to the 2N_t-1 uncompressed lags.
3. assemble_spatial: regroup recovered lags into vec(R_y[k]) per lag.
4. recover_angular: least-squares inversion of the spatial Khatri-Rao
   system, giving per-grid-angle lag vectors and the noise power.
5. spectrum: row-wise DFT to the joint angle-frequency power matrix.
6. find_peaks: detections (angle, frequency support, power).

Lag vectors use one canonical order throughout: [0, 1, .., N_t-1,
1-N_t, .., -1], i.e. lag k lives at index k mod (2N_t-1).  That is the
DFT's natural index wrap, so stage 5 is a plain FFT along rows.

No sparsity assumption appears anywhere: every solve is ordinary least
squares, feasible because the compression geometries keep the systems
full column rank (certified, not hoped).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .model import AngularGrid, ManifoldMatrices, rank_report
from .simulate import CosetPattern, SnapshotBlocks


class RankDeficiencyError(RuntimeError):
    """A reconstruction solve refused to run: its system matrix is not
    full column rank.  Carries the offending rank report or certificate."""

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report or {}


@dataclass(frozen=True)
class RepetitionMatrix:
    """0/1 matrix T mapping a canonical lag vector to the column-major
    vectorization of the corresponding N_t x N_t Toeplitz matrix.

    Row i (1-based) selects row ((i-1 + (N_t-2)*floor((i-1)/N_t)) mod
    (2N_t-1)) + 1 of the identity; equivalently, the entry of vec(R) at
    (a, b) is the lag a-b, wrapped.
    """

    n_t: int
    row_targets: tuple  # 1-based targets, per row of T

    @property
    def n_lags(self) -> int:
        return 2 * self.n_t - 1

    def as_dense(self) -> np.ndarray:
        T = np.zeros((self.n_t ** 2, self.n_lags))
        T[np.arange(self.n_t ** 2), np.asarray(self.row_targets) - 1] = 1.0
        return T

    def apply(self, lag_vector: np.ndarray) -> np.ndarray:
        """vec(Toeplitz(r)) without materializing T."""
        r = np.asarray(lag_vector)
        if r.shape[-1] != self.n_lags:
            raise ValueError(f"lag vector must have length {self.n_lags}")
        return r[..., np.asarray(self.row_targets) - 1]


def repetition_matrix(n_t: int) -> RepetitionMatrix:
    if n_t < 1:
        raise ValueError("N_t must be >= 1")
    i = np.arange(n_t ** 2)
    targets = (i + (n_t - 2) * (i // n_t)) % (2 * n_t - 1) + 1
    return RepetitionMatrix(n_t=n_t, row_targets=tuple(int(t) for t in targets))


@dataclass(frozen=True)
class RctMatrix:
    """Selection-sum system (C_t kron C_t) T relating compressed pair
    correlations to uncompressed lags.  Every row has exactly one 1, at
    the column of the lag realized by that coset row pair; stored as that
    column index per row."""

    n_t: int
    m_t: int
    col_index: np.ndarray  # (m_t**2,) 0-based lag-column per row
    full_column_rank: bool

    def __post_init__(self):
        idx = np.asarray(self.col_index)
        idx.flags.writeable = False
        object.__setattr__(self, "col_index", idx)

    @property
    def n_lags(self) -> int:
        return 2 * self.n_t - 1

    def as_dense(self) -> np.ndarray:
        R = np.zeros((self.m_t ** 2, self.n_lags))
        R[np.arange(self.m_t ** 2), self.col_index] = 1.0
        return R


def build_rct(pattern: CosetPattern) -> RctMatrix:
    """Rows of the compressed-correlation system, one per ordered coset
    row pair (p fast, q slow), each selecting lag (rows[p] - rows[q]) mod
    (2N_t-1).  Full column rank iff every lag column is hit, which the
    ruler construction guarantees."""
    rows = np.asarray(pattern.rows)
    n_lags = 2 * pattern.n_t - 1
    # pair (p, q) sits at vec index p + q*m_t
    lag = (rows[:, None] - rows[None, :]) % n_lags  # lag[p, q]
    col_index = lag.flatten(order="F")
    covered = np.zeros(n_lags, dtype=bool)
    covered[col_index] = True
    return RctMatrix(
        n_t=pattern.n_t,
        m_t=pattern.m_t,
        col_index=col_index,
        full_column_rank=bool(covered.all()),
    )


def pair_correlations(snapshots: SnapshotBlocks) -> np.ndarray:
    """Averaged vectorized pair correlations, shape (M_s, M_s, M_t**2).

    Entry [i, j, a + b*M_t] = (1/N_n) sum_n z_i[n][a] * conj(z_j[n][b]),
    i.e. vec(R_hat_{z_i,z_j}) column-major.  Computed as one Gram matrix
    over flattened blocks, which is a single deterministic matrix product.
    """
    z = snapshots.blocks
    n_n, m_s, m_t = z.shape
    w = z.reshape(n_n, m_s * m_t)
    gram = w.T @ w.conj()  # [(i,a), (j,b)] = sum_n z_i[a] conj(z_j[b])
    quad = gram.reshape(m_s, m_t, m_s, m_t)
    return quad.transpose(0, 2, 3, 1).reshape(m_s, m_s, m_t * m_t) / n_n


@dataclass(frozen=True)
class CorrelationSet:
    """Recovered uncompressed lag vectors per ordered antenna pair.

    values[i, j, l] estimates E[y_i[t+k] conj(y_j[t])] for the lag k at
    canonical index l = k mod (2N_t-1).
    """

    n_t: int
    values: np.ndarray  # (m_s, m_s, 2*n_t - 1)

    def __post_init__(self):
        arr = np.asarray(self.values)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def m_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_lags(self) -> int:
        return 2 * self.n_t - 1

    def lag_index(self, k: int) -> int:
        if not (-self.n_t < k < self.n_t):
            raise ValueError(f"lag {k} outside |k| <= {self.n_t - 1}")
        return k % self.n_lags


def recover_lags(
    rct: RctMatrix,
    pair_vecs: np.ndarray,
    symmetrize: bool = False,
) -> CorrelationSet:
    """Least-squares lag recovery for every antenna pair at once.

    The orthogonal factorization of the selection-sum matrix is computed
    once and reused across all M_s**2 right-hand sides.  Refuses to run
    when the system is rank deficient (a coset design failure, not a data
    problem).

    Hermitian pairing r[i,j,-k] = conj(r[j,i,k]) holds only statistically;
    ``symmetrize`` averages the two estimates, default off so results
    match the plain least-squares description.
    """
    if not rct.full_column_rank:
        missing = sorted(set(range(rct.n_lags)) - set(rct.col_index.tolist()))
        raise RankDeficiencyError(
            f"selection-sum matrix misses lag columns {missing}; "
            "choose coset rows covering all lags (ruler construction)",
            report={"missing_lag_columns": missing},
        )
    pair_vecs = np.asarray(pair_vecs)
    m_s = pair_vecs.shape[0]
    if pair_vecs.shape != (m_s, m_s, rct.m_t ** 2):
        raise ValueError("pair_vecs must have shape (M_s, M_s, M_t**2)")
    q_f, r_f = qr(rct.as_dense(), mode="economic")
    rhs = pair_vecs.reshape(m_s * m_s, -1).T  # (m_t**2, pairs)
    sol = solve_triangular(r_f, q_f.T @ rhs)  # (n_lags, pairs)
    values = sol.T.reshape(m_s, m_s, rct.n_lags)
    if symmetrize:
        rev = (-np.arange(rct.n_lags)) % rct.n_lags
        mirror = values.conj().transpose(1, 0, 2)[:, :, rev]
        values = 0.5 * (values + mirror)
    return CorrelationSet(n_t=rct.n_t, values=values)


def assemble_spatial(corr: CorrelationSet, k: int) -> np.ndarray:
    """vec(R_y[k]), column-major: entry i + j*M_s is r_{y_i,y_j}[k].
    This is exactly the row order the Khatri-Rao matrix assumes."""
    return corr.values[:, :, corr.lag_index(k)].flatten(order="F")


def assemble_all(corr: CorrelationSet) -> np.ndarray:
    """All lags at once: column l of the result is vec(R_y) at canonical
    lag index l; shape (M_s**2, 2N_t-1)."""
    m = corr.m_s
    return corr.values.transpose(1, 0, 2).reshape(m * m, corr.n_lags)


@dataclass(frozen=True)
class AngularRecovery:
    """Per-grid-angle lag vectors (rows) plus the noise power estimate."""

    source_lags: np.ndarray  # (Q, 2*n_t - 1), canonical lag order
    sigma_n_hat: float
    residual_norms: np.ndarray  # per-lag LS residuals
    rank_info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("source_lags", "residual_norms"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _white_floor_power(raw_lags: np.ndarray) -> float:
    """Per-angle share of the spatially white power in a raw solve.

    When the noise column vec(I) lies in the span of the Khatri-Rao
    columns (exact for half-wavelength spacing, a complete co-array, and
    the uniform-sine grid), a spatially white field is indistinguishable
    from power spread evenly over all grid angles, so the lag-0 solve
    returns source powers plus a common floor of sigma_n^2/Q.  The floor
    is read off the joint spectral field of the unsubtracted solution:
    a source-free grid cell's row transforms to a flat line at exactly
    the floor level, and a source cell's bins sit at floor plus its
    (nonnegative) power spectrum, so the field's median equals the floor
    whenever at least half the angle-frequency plane is source-free.
    The median also shrugs off the leakage sidelobes of off-grid sources,
    which corrupt any single-cell reading in both directions.  With no
    source-free cell the noise power is overestimated; that is the
    unavoidable identifiability limit of this geometry.
    """
    field = np.real(np.fft.fft(raw_lags, axis=1))
    return float(np.median(field))


def recover_angular(
    manifold: ManifoldMatrices,
    vec_ry: np.ndarray,
    noise_mode: str = "estimate",
    noise_variance: Optional[float] = None,
) -> AngularRecovery:
    """Invert the spatial Khatri-Rao system for every lag.

    ``vec_ry`` has one column per canonical lag index.  Lag 0 carries the
    additive-noise term sigma_n^2 vec(I); all other lags are solved by a
    plain least-squares fit of the Khatri-Rao columns, factorized once.

    noise_mode="known" subtracts noise_variance * vec(I) from the lag-0
    column before solving.  noise_mode="estimate" estimates the noise
    power jointly: through the augmented system [KR | vec(I)] when that
    matrix has full column rank, otherwise (the noise column lying in the
    Khatri-Rao span, which half-wavelength spacing with a complete
    co-array and the uniform-sine grid produces exactly) by attributing
    the common spatially-white floor of the lag-0 solution to noise; see
    _white_floor_power for the convention and its identifiability caveat.
    """
    KR = manifold.KR
    noise_col = manifold.noise_column
    m2, q_count = KR.shape
    vec_ry = np.asarray(vec_ry)
    if vec_ry.ndim == 1:
        vec_ry = vec_ry[:, None]
    if vec_ry.shape[0] != m2:
        raise ValueError(f"vec_ry must have {m2} rows")
    info = rank_report(KR, noise_col)
    if info["rank"] < q_count:
        raise RankDeficiencyError(
            f"Khatri-Rao matrix rank {info['rank']} < Q={q_count}; "
            "certify the geometry before estimating",
            report=info,
        )

    rhs = vec_ry.astype(complex).copy()
    sigma_hat: float
    if noise_mode == "known":
        if noise_variance is None:
            raise ValueError("noise_mode='known' requires noise_variance")
        sigma_hat = float(noise_variance)
        rhs[:, 0] -= sigma_hat * noise_col
        x, resid = _qr_solve_all(KR, rhs)
    elif noise_mode == "estimate":
        if info["augmented_rank"] == q_count + 1:
            aug = np.column_stack([KR, noise_col])
            x_aug, resid0 = _qr_solve_all(aug, rhs[:, :1])
            x, resid = _qr_solve_all(KR, rhs)
            x[:, 0] = x_aug[:q_count, 0]
            resid[0] = resid0[0]
            sigma_hat = float(np.real(x_aug[q_count, 0]))
        else:
            x, resid = _qr_solve_all(KR, rhs)
            floor = _white_floor_power(x)
            sigma_hat = q_count * floor
            x[:, 0] -= floor
    else:
        raise ValueError("noise_mode must be 'known' or 'estimate'")
    return AngularRecovery(
        source_lags=x,
        sigma_n_hat=sigma_hat,
        residual_norms=resid,
        rank_info=info,
    )


def _qr_solve_all(A: np.ndarray, rhs: np.ndarray):
    """Least squares for every column of rhs from one factorization."""
    q_f, r_f = qr(A, mode="economic")
    x = solve_triangular(r_f, q_f.conj().T @ rhs)
    resid = np.linalg.norm(rhs - A @ x, axis=0)
    return x, resid


@dataclass(frozen=True)
class SpectrumMatrix:
    """Joint angle-frequency power estimate.

    values[q, k] is the power of grid angle q in DFT bin k (natural bin
    order); freq_grid maps bin k to its angular frequency 2*pi*k/(2N_t-1)
    re-centered to (-pi, pi].  In expectation entries are real and
    nonnegative; finite-sample estimates carry imaginary and negative
    residue, which only display paths clamp.
    """

    values: np.ndarray  # (Q, 2*n_t - 1) complex
    angle_grid: AngularGrid
    freq_grid: np.ndarray  # (2*n_t - 1,)
    sigma_n_hat: float

    def __post_init__(self):
        for name in ("values", "freq_grid"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_bins(self) -> int:
        return self.freq_grid.size

    def clamped_real(self) -> np.ndarray:
        """Display form: real part, negatives clamped to zero."""
        return np.maximum(np.real(self.values), 0.0)


def spectrum(
    source_lags: np.ndarray,
    angle_grid: AngularGrid,
    sigma_n_hat: float = float("nan"),
) -> SpectrumMatrix:
    """Row-wise forward DFT of the recovered lag vectors.

    The canonical lag order coincides with the DFT's natural index wrap,
    so no reordering is needed: bin k of row q is
    sum_m r_q[m] exp(-2j pi m k / (2N_t-1)).
    """
    lags = np.asarray(source_lags)
    if lags.ndim != 2 or lags.shape[0] != angle_grid.q_count:
        raise ValueError("source_lags must be (Q, 2N_t-1)")
    n_bins = lags.shape[1]
    values = np.fft.fft(lags, axis=1)
    freqs = 2 * np.pi * np.arange(n_bins) / n_bins
    freqs = np.where(freqs > np.pi, freqs - 2 * np.pi, freqs)
    return SpectrumMatrix(
        values=values,
        angle_grid=angle_grid,
        freq_grid=freqs,
        sigma_n_hat=float(sigma_n_hat),
    )


@dataclass(frozen=True)
class Detection:
    """One detected source region."""

    grid_index: int
    angle: float  # radians
    rows: tuple  # grid indices contributing frequency support
    bands: tuple  # ((f_lo, f_hi), ...) in rad/sample, bin-center edges
    total_power: float


def find_peaks(
    spec: SpectrumMatrix,
    power_fraction_threshold: float = 0.35,
) -> list:
    """Detections: local maxima of the clamped angular marginal.

    The marginal sums the clamped spectrum over frequency.  A grid index
    is a peak when its marginal strictly exceeds the left neighbor and is
    at least the right one (plateaus report their lowest index) and
    reaches the threshold fraction of the marginal's maximum.  Each
    detection's frequency support combines the peak row with adjacent
    above-threshold rows (an off-grid source splits power between the two
    nearest grid points) and keeps bins at the same fraction of the
    combined row's maximum, grouped into contiguous bands.
    """
    if not (0 < power_fraction_threshold <= 1):
        raise ValueError("power_fraction_threshold must be in (0, 1]")
    clamped = spec.clamped_real()
    marginal = clamped.sum(axis=1)
    peak_floor = power_fraction_threshold * marginal.max() if marginal.size else 0.0
    if peak_floor <= 0:
        return []
    q_count = marginal.size
    order = np.argsort(spec.freq_grid, kind="stable")
    detections = []
    for q in range(q_count):
        left = marginal[q - 1] if q > 0 else -np.inf
        right = marginal[q + 1] if q + 1 < q_count else -np.inf
        if not (marginal[q] > left and marginal[q] >= right):
            continue
        if marginal[q] < peak_floor:
            continue
        rows = [q]
        for nb in (q - 1, q + 1):
            if 0 <= nb < q_count and marginal[nb] >= peak_floor:
                rows.append(nb)
        rows = tuple(sorted(rows))
        combined = clamped[list(rows)].sum(axis=0)
        bin_floor = power_fraction_threshold * combined.max()
        keep = combined >= bin_floor if bin_floor > 0 else np.zeros_like(combined, bool)
        bands = _contiguous_bands(keep[order], spec.freq_grid[order])
        detections.append(
            Detection(
                grid_index=q,
                angle=float(spec.angle_grid.angles[q]),
                rows=rows,
                bands=bands,
                total_power=float(marginal[list(rows)].sum()),
            )
        )
    return detections


def _contiguous_bands(keep: np.ndarray, freqs: np.ndarray) -> tuple:
    """Runs of kept bins as (first, last) bin-center frequencies."""
    bands = []
    start = None
    for idx, flag in enumerate(keep):
        if flag and start is None:
            start = idx
        elif not flag and start is not None:
            bands.append((float(freqs[start]), float(freqs[idx - 1])))
            start = None
    if start is not None:
        bands.append((float(freqs[start]), float(freqs[-1])))
    return tuple(bands)
