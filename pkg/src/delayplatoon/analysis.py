"""Frequency-domain and quasi-polynomial stability machinery.

Covers the closed-loop velocity transfer magnitudes under perfect tracking,
the string-stability frequency sweep, rightmost-root search for the two
internal-dynamics quasi-polynomial families (with an argument-principle
winding certificate), the properness region boundary, and the time-domain
L2 string-stability check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _kernels
from ._search import golden_section_max
from .dynamics import VehicleParams
from .errors import NoRootError, RefinementError
from .spacing import PolicyKind, SpacingPolicy, StabilityVerdict

__all__ = [
    "QuasiPolynomial",
    "SearchRegion",
    "transfer_magnitude",
    "string_stability_sweep",
    "rightmost_root",
    "properness_root_check",
    "stability_region_boundary",
    "l2_string_stability_check",
    "L2PairVerdict",
]

SWEEP_TOL = 1e-9  # sup |T| <= 1 + SWEEP_TOL counts as string stable
ROOT_STABLE_TOL = 1e-9  # Re(rightmost) < -ROOT_STABLE_TOL counts as stable


@dataclass(frozen=True)
class QuasiPolynomial:
    """p(lambda) = sum_k c_k(lambda) e^{-lambda theta_k}, delays theta_k >= 0.

    terms holds (coefficients ascending, delay) pairs.  The two instances
    arising here are lambda + h_v^{-1} e^{-phi lambda} and the extended
    internal dynamics h_a lambda^2 + (h_v lambda + 1) e^{-phi lambda} (the
    latter already normalized by e^{-phi lambda} so all delays are >= 0).
    """

    terms: tuple[tuple[tuple[float, ...], float], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("quasi-polynomial needs at least one term")
        for coeffs, delay in self.terms:
            if not (math.isfinite(delay) and delay >= 0.0):
                raise ValueError(f"delays must be finite and >= 0, got {delay}")
            if not any(c != 0.0 for c in coeffs):
                raise ValueError("term has all-zero coefficients")

    @classmethod
    def dch_internal(cls, h_v: float, phi: float) -> "QuasiPolynomial":
        """lambda + (1/h_v) e^{-phi lambda}: internal factor of the DCH loop."""
        return cls((((0.0, 1.0), 0.0), ((1.0 / float(h_v),), float(phi))))

    @classmethod
    def extended_internal(cls, h_v: float, h_a: float, phi: float) -> "QuasiPolynomial":
        """h_a lambda^2 + (h_v lambda + 1) e^{-phi lambda}."""
        return cls((((0.0, 0.0, float(h_a)), 0.0), ((1.0, float(h_v)), float(phi))))

    @property
    def max_delay(self) -> float:
        return max(delay for _, delay in self.terms)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        total = np.zeros_like(lam)
        for coeffs, delay in self.terms:
            c = np.zeros_like(lam)
            for coef in reversed(coeffs):
                c = c * lam + coef
            total += c * np.exp(-lam * delay)
        return total

    def eval_scalar(self, lam: complex) -> complex:
        total = 0.0j
        for coeffs, delay in self.terms:
            c = 0.0j
            for coef in reversed(coeffs):
                c = c * lam + coef
            total += c * cmath.exp(-lam * delay)
        return total

    def derivative_scalar(self, lam: complex) -> complex:
        total = 0.0j
        for coeffs, delay in self.terms:
            c = 0.0j
            dc = 0.0j
            for coef in reversed(coeffs):
                dc = dc * lam + c
                c = c * lam + coef
            total += (dc - delay * c) * cmath.exp(-lam * delay)
        return total

    def derivative(self, lam):
        lam = np.asarray(lam, dtype=complex)
        total = np.zeros_like(lam)
        for coeffs, delay in self.terms:
            c = np.zeros_like(lam)
            dc = np.zeros_like(lam)
            for coef in reversed(coeffs):
                dc = dc * lam + c
                c = c * lam + coef
            total += (dc - delay * c) * np.exp(-lam * delay)
        return total

    def coefficient_scale(self, lam) -> float:
        """Sum of term magnitudes at lam; reference scale for |p| residuals."""
        lam = complex(lam)
        total = 0.0
        for coeffs, delay in self.terms:
            c = 0.0j
            for coef in reversed(coeffs):
                c = c * lam + coef
            total += abs(c) * math.exp(-lam.real * delay)
        return max(total, 1e-300)

    def magnitude_sq_grid(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """|p|^2 on the rectangle xs x i*ys (hot path of the root scan)."""
        coeffs, deg, delays = self._flat()
        return _kernels.qp_grid_mag2(
            np.ascontiguousarray(xs, dtype=float),
            np.ascontiguousarray(ys, dtype=float),
            coeffs,
            deg,
            delays,
        )

    def _flat(self):
        n = len(self.terms)
        max_deg = max(len(c) for c, _ in self.terms) - 1
        coeffs = np.zeros((n, max_deg + 1))
        deg = np.zeros(n, dtype=np.int64)
        delays = np.zeros(n)
        for m, (c, delay) in enumerate(self.terms):
            coeffs[m, : len(c)] = c
            deg[m] = len(c) - 1
            delays[m] = delay
        return coeffs, deg, delays


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle Re in [re_lo, re_hi], Im in [0, im_hi] (symmetry gives Im < 0)."""

    re_lo: float
    re_hi: float
    im_hi: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.re_lo, self.re_hi, self.im_hi))):
            raise ValueError("search rectangle bounds must be finite")
        if self.re_hi <= self.re_lo or self.im_hi <= 0.0:
            raise ValueError("search rectangle is empty")

    @classmethod
    def default_for(cls, time_scale: float) -> "SearchRegion":
        return cls(-10.0 / time_scale, 5.0 / time_scale, 4.0 * math.pi / time_scale)


def transfer_magnitude(policy: SpacingPolicy, params: VehicleParams, omega):
    """|T(i omega)| of the velocity transfer under perfect tracking.

    Evaluated from the expanded real forms: for the constant headway policy
    |T|^-2 = (omega h_v)^2 - 2 omega h_v sin(omega phi) + 1; the extended
    denominator splits into (1 - h_a w^2 cos(w phi)) + i (h_v w - h_a w^2
    sin(w phi)).  The constant policy has |T| = 1 at every frequency.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("omega must be >= 0")
    phi = params.phi
    if policy.kind is PolicyKind.DELAYED_CONSTANT:
        out = np.ones_like(w)
    elif policy.kind is PolicyKind.DELAYED_CONSTANT_HEADWAY:
        hv = policy.h_v
        inv_sq = (w * hv) ** 2 - 2.0 * w * hv * np.sin(w * phi) + 1.0
        out = 1.0 / np.sqrt(inv_sq)
    else:
        hv, ha = policy.h_v, policy.h_a
        re = 1.0 - ha * w * w * np.cos(w * phi)
        im = hv * w - ha * w * w * np.sin(w * phi)
        out = 1.0 / np.hypot(re, im)
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return float(out)
    return out


def default_sweep_grid(policy: SpacingPolicy, params: VehicleParams, n_grid: int = 4096):
    """Log grid on [1e-3, omega_max], omega_max = max(10/h_v, 20 pi/phi)."""
    n_grid = max(int(n_grid), 4096)
    bounds = []
    if policy.h_v > 0.0:
        bounds.append(10.0 / policy.h_v)
    if params.phi > 0.0:
        bounds.append(20.0 * math.pi / params.phi)
    omega_max = max(bounds) if bounds else 1e3
    return np.logspace(-3.0, math.log10(omega_max), n_grid)


def refined_peak(policy: SpacingPolicy, params: VehicleParams, grid: np.ndarray):
    """(peak_omega, peak_magnitude, grid magnitudes): every local maximum of
    |T| on the grid golden-refined to relative width 1e-10."""
    mags = transfer_magnitude(policy, params, grid)

    def mag(w: float) -> float:
        return transfer_magnitude(policy, params, w)

    n = len(grid)
    best_w = float(grid[int(np.argmax(mags))])
    best_m = float(np.max(mags))
    candidates = set(
        (np.flatnonzero((mags[1:-1] >= mags[:-2]) & (mags[1:-1] >= mags[2:])) + 1).tolist()
    )
    if mags[0] >= mags[1]:
        candidates.add(0)
    if mags[-1] >= mags[-2]:
        candidates.add(n - 1)
    for idx in candidates:
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, n - 1)]
        w_ref, m_ref = golden_section_max(mag, lo, hi, rel_tol=1e-10)
        if m_ref > best_m:
            best_w, best_m = w_ref, m_ref
    return best_w, best_m, mags


def string_stability_sweep(
    policy: SpacingPolicy,
    params: VehicleParams,
    n_grid: int = 4096,
) -> StabilityVerdict:
    """sup_omega |T(i omega)| over a refined log grid.

    Grid of n_grid (>= 4096) log-spaced points on [1e-3, omega_max] with
    omega_max = max(10 / h_v, 20 pi / phi); every local maximum is refined by
    golden section to relative width 1e-10.  Stable iff sup <= 1 + 1e-9.
    """
    if policy.kind is PolicyKind.DELAYED_CONSTANT:
        return StabilityVerdict(
            True, "sweep", peak_omega=0.0, peak_magnitude=1.0,
            detail="|T| = 1 identically",
        )
    grid = default_sweep_grid(policy, params, n_grid)
    best_w, best_m, _ = refined_peak(policy, params, grid)
    return StabilityVerdict(
        bool(best_m <= 1.0 + SWEEP_TOL),
        "sweep",
        peak_omega=float(best_w),
        peak_magnitude=float(best_m),
    )


def _winding_number(qp: QuasiPolynomial, region: SearchRegion) -> int:
    """Winding of p around 0 along the conjugate-symmetric rectangle boundary.

    The contour covers Im in [-im_hi, im_hi] so that real roots sit strictly
    inside it.  Segment count starts at 4096 and doubles until the winding
    number stabilizes on the same integer twice.
    """
    corners = [
        complex(region.re_lo, -region.im_hi),
        complex(region.re_hi, -region.im_hi),
        complex(region.re_hi, region.im_hi),
        complex(region.re_lo, region.im_hi),
    ]
    n = 4096
    previous = None
    while n <= 2**21:
        pts = []
        for c0, c1 in zip(corners, corners[1:] + corners[:1]):
            frac = np.arange(n // 4) / (n // 4)
            pts.append(c0 + (c1 - c0) * frac)
        z = np.concatenate(pts)
        f = qp(z)
        if np.any(f == 0.0):
            raise RefinementError("root on the winding contour")
        ratios = np.roll(f, -1) / f
        winding = float(np.sum(np.angle(ratios)) / (2.0 * math.pi))
        rounded = round(winding)
        if abs(winding - rounded) < 1e-3 and previous == rounded:
            return rounded
        previous = rounded
        n *= 2
    raise RefinementError("winding number did not stabilize")


def _newton_polish(qp: QuasiPolynomial, lam0: complex, max_iter: int = 80) -> complex | None:
    lam = complex(lam0)
    try:
        fval = qp.eval_scalar(lam)
    except OverflowError:
        return None
    for _ in range(max_iter):
        if abs(fval) <= 1e-13 * qp.coefficient_scale(lam):
            return lam
        try:
            dval = qp.derivative_scalar(lam)
        except OverflowError:
            return None
        if dval == 0.0:
            return None
        delta = fval / dval
        # damped step: back off until |p| decreases
        scale = 1.0
        for _ in range(25):
            cand = lam - scale * delta
            try:
                fcand = qp.eval_scalar(cand)
            except OverflowError:
                scale *= 0.5
                continue
            if abs(fcand) < abs(fval):
                lam, fval = cand, fcand
                break
            scale *= 0.5
        else:
            break
    if abs(fval) <= 1e-11 * qp.coefficient_scale(lam):
        return lam
    return None


def _scan_and_polish(qp: QuasiPolynomial, region: SearchRegion, step: float) -> list[complex]:
    """Distinct roots inside the rectangle found by grid scan plus Newton.

    Seeds come from the local minima of |p|^2 and their neighbourhoods (a
    cell can hide two nearly coincident roots, so approaching from both
    sides matters).  Roots are folded into the upper half plane via the
    conjugate symmetry and deduplicated.
    """
    nx = max(int(math.ceil((region.re_hi - region.re_lo) / step)) + 1, 2)
    ny = max(int(math.ceil(region.im_hi / step)) + 1, 2)
    xs = np.linspace(region.re_lo, region.re_hi, nx)
    ys = np.linspace(0.0, region.im_hi, ny)
    mag2 = qp.magnitude_sq_grid(xs, ys)

    # local minima of |p|^2, grid edges included via an infinite border
    padded = np.pad(mag2, 1, constant_values=np.inf)
    is_min = (
        (mag2 <= padded[:-2, 1:-1])
        & (mag2 <= padded[2:, 1:-1])
        & (mag2 <= padded[1:-1, :-2])
        & (mag2 <= padded[1:-1, 2:])
    )
    iy, ix = np.nonzero(is_min)
    order = np.argsort(mag2[iy, ix])
    seeds: list[complex] = []
    for y, x in zip(iy[order][:100], ix[order][:100]):
        seeds.append(complex(xs[x], ys[y]))
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                yy, xx = y + dy, x + dx
                if (dy or dx) and 0 <= yy < ny and 0 <= xx < nx:
                    seeds.append(complex(xs[xx], ys[yy]))

    axis_tol = 1e-9
    roots: list[complex] = []
    for seed in seeds:
        lam = _newton_polish(qp, seed)
        if lam is None:
            continue
        if lam.imag < 0.0:  # conjugate symmetry: fold into the upper half plane
            lam = lam.conjugate()
        if abs(lam.imag) <= axis_tol * (1.0 + abs(lam)):
            lam = complex(lam.real, 0.0)
        if not (region.re_lo <= lam.real <= region.re_hi and lam.imag <= region.im_hi):
            continue
        if any(abs(lam - r) <= 1e-6 * (1.0 + abs(r)) for r in roots):
            continue
        roots.append(lam)
    return roots


def _local_multiplicity(qp: QuasiPolynomial, root: complex, others: list[complex]) -> int:
    """Multiplicity of a root from the winding of p on a small circle."""
    radius = 1e-5 * (1.0 + abs(root))
    for other in others:
        for image in (other, other.conjugate()):
            dist = abs(root - image)
            if dist > 0.0:
                radius = min(radius, dist / 3.0)
    if root.imag > 0.0:
        radius = min(radius, 2.0 * root.imag / 3.0)  # keep the conjugate outside
    n = 256
    while n <= 4096:
        z = root + radius * np.exp(2j * math.pi * np.arange(n) / n)
        f = qp(z)
        if np.any(f == 0.0):
            break
        winding = float(np.sum(np.angle(np.roll(f, -1) / f)) / (2.0 * math.pi))
        rounded = round(winding)
        if abs(winding - rounded) < 1e-3 and rounded >= 1:
            return rounded
        n *= 2
    raise RefinementError(f"could not certify the multiplicity of root {root}")


def rightmost_root(
    qp: QuasiPolynomial,
    region: SearchRegion,
    grid_step: float | None = None,
) -> complex:
    """Root with the largest real part inside the search rectangle.

    Grid-scans |p| at step <= 0.02/theta (theta the dominant delay), seeds
    damped Newton iterations at the local minima, deduplicates, and certifies
    the root count (with multiplicity) against an argument-principle winding
    integral over the conjugate-symmetric rectangle.  On a certificate
    mismatch the scan is retried at half the step.  Raises NoRootError when
    the rectangle is certified empty and RefinementError when the
    certificate cannot be met.
    """
    if grid_step is None:
        theta = qp.max_delay
        if theta > 0.0:
            grid_step = 0.02 / theta
        else:
            grid_step = (region.re_hi - region.re_lo) / 750.0
    winding = _winding_number(qp, region)
    step = grid_step
    expected = -1
    for _ in range(3):
        roots = _scan_and_polish(qp, region, step)
        # winding counts every root inside the mirrored rectangle with its
        # multiplicity, so complex roots found in the upper half count twice
        expected = 0
        for r in roots:
            others = [o for o in roots if o is not r]
            expected += _local_multiplicity(qp, r, others) * (1 if r.imag == 0.0 else 2)
        if expected == winding:
            if not roots:
                raise NoRootError("no quasi-polynomial root inside the search rectangle")
            return max(roots, key=lambda r: r.real)
        step *= 0.5
    raise RefinementError(
        f"winding count {winding} != {expected} roots found (conjugates included)"
    )


def properness_root_check(
    policy: SpacingPolicy,
    params: VehicleParams,
    region: SearchRegion | None = None,
) -> StabilityVerdict:
    """Properness via the rightmost root of the internal dynamics.

    Builds the policy's quasi-polynomial, searches the default rectangle
    (Re in [-10/phi, 5/phi], Im up to 4 pi / phi), and reports stable iff
    the rightmost real part is below -1e-9.
    """
    phi = params.phi
    if policy.kind is PolicyKind.DELAYED_CONSTANT_HEADWAY:
        qp = QuasiPolynomial.dch_internal(policy.h_v, phi)
        fallback_scale = policy.h_v
    elif policy.kind is PolicyKind.DELAYED_EXTENDED_HEADWAY:
        qp = QuasiPolynomial.extended_internal(policy.h_v, policy.h_a, phi)
        fallback_scale = math.sqrt(policy.h_a)
    else:
        raise ValueError("root check applies to the headway policies only")
    if region is None:
        region = SearchRegion.default_for(phi if phi > 0.0 else fallback_scale)
    root = rightmost_root(qp, region)
    return StabilityVerdict(
        bool(root.real < -ROOT_STABLE_TOL),
        "root-search",
        rightmost_root=root,
    )


def stability_region_boundary(phi: float, n_points: int) -> np.ndarray:
    """Boundary of the extended-policy properness region in the
    (h_v/h_a, 1/h_a) plane: (w sin(w phi), w^2 cos(w phi)) for w in
    [0, pi/(2 phi)], sampled uniformly including the endpoint limits."""
    if phi <= 0.0:
        raise ValueError("phi must be > 0")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    w = np.linspace(0.0, 0.5 * math.pi / phi, n_points)
    return np.column_stack((w * np.sin(w * phi), w * w * np.cos(w * phi)))


@dataclass(frozen=True)
class L2PairVerdict:
    """Cumulative-energy comparison of follower i against predecessor i-1."""

    follower: int
    ok: bool
    max_violation: float


def l2_string_stability_check(velocity_logs, Ts: float) -> list[L2PairVerdict]:
    """Time-domain L2 string stability on logged velocities.

    velocity_logs is (n_samples, n_vehicles), column 0 the leader.  For each
    consecutive pair the cumulative trapezoidal integral of v^2 must satisfy
    E_i(T) <= E_{i-1}(T) at every sample time; a violation only counts if it
    exceeds 1e-9 of the pair's final cumulative energy.
    """
    v = np.asarray(velocity_logs, dtype=float)
    if v.ndim != 2 or v.shape[1] < 2:
        raise ValueError("need a (n_samples, n_vehicles >= 2) velocity array")
    if Ts <= 0.0:
        raise ValueError("Ts must be > 0")
    energy = cumulative_trapezoid(v * v, dx=Ts, axis=0, initial=0.0)
    verdicts = []
    for i in range(1, v.shape[1]):
        excess = energy[:, i] - energy[:, i - 1]
        max_violation = float(np.max(excess))
        tol = 1e-9 * max(energy[-1, i], energy[-1, i - 1], 1e-300)
        verdicts.append(L2PairVerdict(i, bool(max_violation <= tol), max_violation))
    return verdicts
