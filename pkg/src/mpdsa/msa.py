"""Scale ladder, scaling predicates, and deterministic implication audits.

Structural thresholds (scale recursion, diameter classification, distance
cutoffs) are computed in exact integer arithmetic from rational exponents,
so that e.g. the successor of 8 under exponent 4/3 is exactly 16.  The
analytic quantities (decay rates, non-singularity thresholds) are plain
floats.

Predicate conventions: every comparison is non-strict in favour of the
good event (non-resonant, non-singular, localized), matching the
inequality conventions of the definitions they implement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .configspace import (
    Ball,
    classify_ball,
    canonical_decomposition,
    config_distance,
    diam,
    enumerate_ball,
    interior_boundary,
    maximal_separation_split,
)
from .disorder import FieldSample
from .operators import (
    HamiltonianSpec,
    assemble_hamiltonian,
    epsilon_bound,
    interaction_defect,
)
from .spectral import (
    EigenSystem,
    diagonalize,
    eigensystem_from_factors,
    eigenvector_noise_floors,
)

# -- exact integer powers ----------------------------------------------------


def _floor_root(n: int, k: int) -> int:
    if n < 0 or k < 1:
        raise ValueError("need n >= 0 and k >= 1")
    if n in (0, 1) or k == 1:
        return n
    hi = 1 << (n.bit_length() // k + 2)
    lo = 0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid**k <= n:
            lo = mid
        else:
            hi = mid - 1
    return lo


def ceil_root(n: int, k: int) -> int:
    """Smallest integer r with r**k >= n."""
    f = _floor_root(n, k)
    return f if f**k == n else f + 1


def ceil_rational_power(base: int, exponent: Fraction) -> int:
    """Smallest integer >= base**exponent, exactly (base >= 0)."""
    exponent = Fraction(exponent)
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    return ceil_root(base**exponent.numerator, exponent.denominator)


def int_power_exceeds(value: int, base: int, exponent: Fraction) -> bool:
    """Exact test value > base**exponent for integers and rational exponent."""
    exponent = Fraction(exponent)
    return value**exponent.denominator > base**exponent.numerator


def scales(initial_scale: int, alpha: Fraction, count: int) -> list:
    """Scale ladder [L_0 .. L_count], L_{k+1} = ceil(L_k**alpha)."""
    if initial_scale <= 2:
        raise ValueError("initial scale must exceed 2")
    alpha = Fraction(alpha)
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    seq = [int(initial_scale)]
    for _ in range(count):
        nxt = ceil_rational_power(seq[-1], alpha)
        if nxt <= seq[-1]:
            raise RuntimeError("scale ladder failed to increase")
        seq.append(nxt)
    return seq


# -- parameters --------------------------------------------------------------


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (tuple, list)) and len(x) == 2:
        return Fraction(int(x[0]), int(x[1]))
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class ScalingParams:
    """Exponents and thresholds steering the multi-scale predicates.

    The finite-range regime uses the standard exponent set (scale growth
    4/3, contraction margin 1/6, rate softening 1/8, resonance width 1/2).
    The long-range regime derives its exponents from the interaction decay
    parameter ``delta``: margin 2*delta, growth 1 + 4*delta, softening
    delta/2, and switches every diameter/distance threshold to its
    stretched form atomically.
    """

    n_particles: int
    d: int = 1
    regime: str = "finite"  # "finite" | "infinite"
    alpha: Fraction = Fraction(4, 3)
    varrho: Fraction = Fraction(1, 6)
    tau: Fraction = Fraction(1, 8)
    beta: Fraction = Fraction(1, 2)
    beta_prime: Fraction = Fraction(1, 4)
    delta: Fraction | None = None
    theta: float = 0.0
    mass: float = 1.0
    initial_scale: int = 8
    cn_variant: str = "11N"  # "11N" | "2A+3"
    numerical_floor: float = 1e-12

    def __post_init__(self):
        for name in ("alpha", "varrho", "tau", "beta", "beta_prime"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        if self.delta is not None:
            object.__setattr__(self, "delta", _frac(self.delta))
        if self.regime not in ("finite", "infinite"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "infinite" and self.delta is None:
            raise ValueError("long-range regime needs delta")
        if self.cn_variant not in ("11N", "2A+3"):
            raise ValueError(f"unknown distant-pair constant {self.cn_variant!r}")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")

    @classmethod
    def finite_range(cls, n_particles: int, d: int = 1, **kw) -> "ScalingParams":
        return cls(n_particles=n_particles, d=d, regime="finite", **kw)

    @classmethod
    def infinite_range(
        cls, n_particles: int, delta=Fraction(1, 20), d: int = 1, **kw
    ) -> "ScalingParams":
        delta = _frac(delta)
        kw.setdefault("theta", float(delta / (1 + delta)) / 2.0)
        return cls(
            n_particles=n_particles,
            d=d,
            regime="infinite",
            delta=delta,
            varrho=2 * delta,
            alpha=1 + 4 * delta,
            tau=delta / 2,
            **kw,
        )

    # -- derived constants

    @property
    def a_n(self) -> int:
        """Diameter coefficient separating the two interaction classes."""
        return 4 * self.n_particles

    @property
    def c_n(self) -> int:
        """Distant-pair coefficient (two published values, selectable)."""
        if self.cn_variant == "11N":
            return 11 * self.n_particles
        return 2 * self.a_n + 3

    # -- analytic quantities

    def decay_rate(self, L: int, n: int | None = None, m: float | None = None) -> float:
        """Rate m (1 + L^-tau)^(N - n + 1); the plain rate when n = N."""
        if m is None:
            m = self.mass
        expo = 1
        if self.regime == "infinite":
            n_eff = self.n_particles if n is None else n
            expo = self.n_particles - n_eff + 1
        elif n is not None:
            expo = self.n_particles - n + 1
        return m * (1.0 + float(L) ** (-float(self.tau))) ** expo

    def resonance_scale(self, L: int) -> float:
        """Width e^{-L^beta} below which an energy counts as resonant."""
        return math.exp(-(float(L) ** float(self.beta)))

    def ns_threshold(self, L: int, n: int | None = None, m: float | None = None) -> float:
        """Boundary decay threshold e^{-rate*L + 2 L^beta}."""
        rate = self.decay_rate(L, n=n, m=m)
        return math.exp(-rate * L + 2.0 * float(L) ** float(self.beta))

    def ns_noise_floor(self, L: int) -> float:
        """Smallest boundary Green value double precision can certify.

        Resolvent entries at a non-resonant energy carry absolute noise of
        order eps * resolvent norm; thresholds below this are clamped so
        that predicates state only what the arithmetic can distinguish.
        """
        return self.numerical_floor * (1.0 + 1.0 / self.resonance_scale(L))

    def ns_exponent_margin(self, L: int, m: float | None = None) -> float:
        """Slack of rate*L - 2 L^beta over the halved-softening rate."""
        if m is None:
            m = self.mass
        tau = float(self.tau)
        beta = float(self.beta)
        full = m * (1.0 + L ** (-tau)) * L - 2.0 * L**beta
        half = m * (1.0 + 0.5 * L ** (-tau)) * L
        return full - half

    # -- exact structural thresholds

    def is_pi_diameter(self, diameter: int, L: int, n: int | None = None) -> bool:
        if self.regime == "finite":
            return diameter > self.a_n * L
        return int_power_exceeds(diameter, L, 1 + self.delta)

    def decomposition_separation_ok(self, separation: int, L: int) -> bool:
        if self.regime == "finite":
            return separation > 2 * L
        p, q = (1 + self.delta).numerator, (1 + self.delta).denominator
        return separation**q > 2**q * L**p

    def pair_is_distant(self, distance: int, radius: int) -> bool:
        if self.regime == "finite":
            return distance >= self.c_n * radius
        cn = 4 * self.n_particles
        p, q = (1 + self.delta).numerator, (1 + self.delta).denominator
        return distance**q > cn**q * radius**p

    def loc_min_distance(self, L: int) -> int:
        """Smallest pair distance at which eigenfunction decay is demanded."""
        return ceil_rational_power(L, (1 + self.varrho) / self.alpha)

    def cnr_min_radius(self, L: int) -> int:
        return ceil_rational_power(L, 1 / self.alpha)

    def truncation_radius_for(self, L: int) -> int:
        """Interaction truncation radius 4N L^{1+delta} (long-range regime)."""
        if self.regime == "finite":
            raise ValueError("truncation radius is a long-range notion")
        p, q = (1 + self.delta).numerator, (1 + self.delta).denominator
        return ceil_root((4 * self.n_particles) ** q * L**p, q)

    def scale_ladder(self, count: int) -> list:
        return scales(self.initial_scale, self.alpha, count)

    def to_jsonable(self) -> dict:
        out = {
            "n_particles": self.n_particles,
            "d": self.d,
            "regime": self.regime,
            "alpha": str(self.alpha),
            "varrho": str(self.varrho),
            "tau": str(self.tau),
            "beta": str(self.beta),
            "beta_prime": str(self.beta_prime),
            "theta": self.theta,
            "mass": self.mass,
            "initial_scale": self.initial_scale,
            "cn_variant": self.cn_variant,
        }
        if self.delta is not None:
            out["delta"] = str(self.delta)
        return out


def smallest_scale_with_ns_margin(params: ScalingParams, m: float | None = None, limit: int = 10**7) -> int:
    """Smallest L at which the non-singularity exponent margin turns >= 0."""
    L = 1
    while L <= limit and params.ns_exponent_margin(L, m=m) < 0:
        L += 1 if L < 256 else max(1, L // 256)
    if L > limit:
        raise RuntimeError("no scale with nonnegative margin below the limit")
    while L > 1 and params.ns_exponent_margin(L - 1, m=m) >= 0:
        L -= 1
    return L


@dataclass(frozen=True)
class BoundSchedule:
    """Probability-exponent schedule 2^(N-n) p (1+b)^k.

    The growth factor is accumulated by repeated multiplication so the
    recursions P(n,k) = 2 P(n+1,k) and P(n,k+1) = (1+b) P(n,k) hold
    exactly in floating point.
    """

    p: float
    b: float
    n_particles: int

    def exponent(self, n: int, k: int) -> float:
        value = 2.0 ** (self.n_particles - n) * self.p
        for _ in range(k):
            value *= 1.0 + self.b
        return value

    def bound(self, L: int, n: int, k: int) -> float:
        return float(L) ** (-self.exponent(n, k))

    def to_jsonable(self) -> dict:
        return {"p": self.p, "b": self.b, "n_particles": self.n_particles}


@dataclass(frozen=True)
class ConstraintResult:
    name: str
    satisfied: bool
    margin: float


def check_param_constraints(
    params: ScalingParams, schedule: BoundSchedule | None = None
) -> list:
    """Evaluate every declared inequality between the parameters."""
    a = float(params.alpha)
    vr = float(params.varrho)
    tau = float(params.tau)
    beta = float(params.beta)
    bp = float(params.beta_prime)
    out = [
        ConstraintResult("tau_positive", tau > 0, tau),
        ConstraintResult("tau_below_varrho", tau < vr, vr - tau),
        ConstraintResult("one_plus_varrho_below_alpha", 1 + vr < a, a - 1 - vr),
        ConstraintResult("beta_below_one_minus_tau", beta < 1 - tau, 1 - tau - beta),
        ConstraintResult("beta_prime_positive", bp > 0, bp),
        ConstraintResult("beta_prime_below_beta", bp < beta, beta - bp),
        ConstraintResult("alpha_squared_below_two", a * a < 2, 2 - a * a),
    ]
    if params.regime == "infinite":
        dl = params.delta
        out += [
            ConstraintResult(
                "delta_below_one_fourteenth",
                dl < Fraction(1, 14),
                float(Fraction(1, 14) - dl),
            ),
            ConstraintResult(
                "varrho_equals_two_delta",
                params.varrho == 2 * dl,
                float(params.varrho - 2 * dl),
            ),
            ConstraintResult(
                "alpha_equals_one_plus_four_delta",
                params.alpha == 1 + 4 * dl,
                float(params.alpha - 1 - 4 * dl),
            ),
            ConstraintResult(
                "tau_equals_half_delta",
                params.tau == dl / 2,
                float(params.tau - dl / 2),
            ),
            ConstraintResult(
                "theta_below_delta_fraction",
                0.0 <= params.theta < float(dl / (1 + dl)),
                float(dl / (1 + dl)) - params.theta,
            ),
        ]
    if schedule is not None:
        nd = params.n_particles * params.d
        p_min = 2.0 * a * a / (2.0 - a * a) * nd
        b_cap = min((2.0 - a * a) / (a * a) - 2.0 * nd / schedule.p, math.sqrt(2.0) - 1.0)
        out += [
            ConstraintResult("p_above_mixing_threshold", schedule.p > p_min, schedule.p - p_min),
            ConstraintResult("b_positive", schedule.b > 0, schedule.b),
            ConstraintResult(
                "three_b_within_margin", 0 < 3 * schedule.b <= b_cap, b_cap - 3 * schedule.b
            ),
        ]
    return out


# -- evaluation context ------------------------------------------------------


class AuditContext:
    """Caches balls and eigensystems for one (spec, sample) pair.

    When a ball's centre splits into groups farther apart than twice the
    radius and the cross interaction over the gap is below ``split_tol``
    (so the assembled matrix is identical in double precision to the
    tensor sum), the eigensystem is assembled from the factor systems
    instead of a dense solve.
    """

    def __init__(
        self,
        spec: HamiltonianSpec,
        sample: FieldSample,
        params: ScalingParams,
        split_tol: float = 1e-30,
    ):
        self.spec = spec
        self.sample = sample
        self.params = params
        self.split_tol = split_tol
        self._balls: dict = {}
        self._systems: dict = {}

    def ball(self, center, radius: int) -> Ball:
        key = (tuple(center), radius)
        if key not in self._balls:
            self._balls[key] = enumerate_ball(center, radius, self.spec.geometry)
        return self._balls[key]

    def eigensystem(self, center, radius: int) -> EigenSystem:
        key = (tuple(center), radius)
        if key in self._systems:
            return self._systems[key]
        ball = self.ball(center, radius)
        es = self._build(ball)
        self._systems[key] = es
        return es

    def _build(self, ball: Ball) -> EigenSystem:
        if ball.n_particles >= 2:
            split = maximal_separation_split(ball.center, self.spec.geometry)
            gap = split.separation - 2 * ball.radius
            if gap > 0:
                model = self.spec.interaction
                worst_pairs = (ball.n_particles // 2) * ((ball.n_particles + 1) // 2)
                factor = 2.0 if model.pair_counting == "ordered" else 1.0
                cross = factor * worst_pairs * model.tail_sup(gap - 1)
                if cross <= self.split_tol:
                    es1 = self.eigensystem(split.part1, ball.radius)
                    es2 = self.eigensystem(split.part2, ball.radius)
                    return eigensystem_from_factors(es1, es2)
        spec = self.spec
        if spec.n_particles != ball.n_particles:
            spec = replace(spec, n_particles=ball.n_particles)
        op = assemble_hamiltonian(spec, ball, self.sample)
        return diagonalize(op)


# -- sub-ball selection ------------------------------------------------------


def stride_centers(ball: Ball, stride: int, max_center_distance: int) -> list:
    """Members on the stride grid within the given distance of the centre.

    On lattices the grid keeps members all of whose coordinate offsets
    from the centre are multiples of the stride; explicit graphs fall
    back to every stride-th member in canonical order.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    dists = ball.distances_from_center
    keep = dists <= max_center_distance
    g = ball.geometry
    if g.kind == "lattice":
        arr = ball.member_array
        center = np.asarray(ball.center, dtype=np.int64)
        offs = arr - center
        flat = offs.reshape(len(ball), -1)
        keep &= np.all(flat % stride == 0, axis=1)
        return [ball.members[i] for i in np.nonzero(keep)[0]]
    idx = [i for i in np.nonzero(keep)[0]]
    return [ball.members[i] for i in idx[::stride]]


def cnr_radii(params: ScalingParams, L: int) -> list:
    """Sub-ball radii inspected by complete non-resonance: ladder values
    at least L**(1/alpha) and below L."""
    rmin = params.cnr_min_radius(L)
    out = []
    val = params.initial_scale
    seen = set()
    while val < L:
        if val >= rmin and val not in seen:
            out.append(val)
            seen.add(val)
        nxt = ceil_rational_power(val, params.alpha)
        if nxt <= val:
            break
        val = nxt
    if not out and rmin < L:
        out = [rmin]
    return out


def cnr_subballs(params: ScalingParams, ball: Ball) -> list:
    """(center, radius) list for the complete-non-resonance inspection."""
    out = []
    for r in cnr_radii(params, ball.radius):
        stride = max(1, r // 2)
        for c in stride_centers(ball, stride, ball.radius - r):
            out.append((c, r))
    return out


# -- predicates --------------------------------------------------------------


def is_E_NR(es: EigenSystem, energy: float, params: ScalingParams) -> bool:
    """Resolvent norm at most e^{+L^beta} (ties are non-resonant)."""
    return es.spectral_distance(energy) >= params.resonance_scale(es.ball.radius)


def _dist_to_sorted(sorted_vals: np.ndarray, queries: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(sorted_vals, queries)
    left = np.abs(queries - sorted_vals[np.clip(pos - 1, 0, len(sorted_vals) - 1)])
    right = np.abs(sorted_vals[np.clip(pos, 0, len(sorted_vals) - 1)] - queries)
    return np.minimum(left, right)


def is_E_CNR(ctx: AuditContext, ball: Ball, energy: float, params: ScalingParams | None = None):
    """No resonant sub-ball (the ball itself included); returns witness.

    Sub-balls are inspected on the documented conservative policy: ladder
    radii at least L**(1/alpha), centres on a half-radius stride grid.
    """
    params = params or ctx.params
    big = ctx.eigensystem(ball.center, ball.radius)
    if not is_E_NR(big, energy, params):
        return False, (ball.center, ball.radius)
    for center, r in cnr_subballs(params, ball):
        sub = ctx.eigensystem(center, r)
        if sub.spectral_distance(energy) < params.resonance_scale(r):
            return False, (center, r)
    return True, None


def ns_decision(worst_value: float, threshold: float) -> bool:
    """Non-singular iff the worst boundary value is at most the threshold
    (ties favour the good event)."""
    return worst_value <= threshold


@dataclass(frozen=True)
class NsReport:
    non_singular: bool
    worst_boundary_value: float
    threshold: float
    resonant: bool = False


def ns_flags(
    es: EigenSystem, energies: np.ndarray, params: ScalingParams, m: float | None = None
):
    """Vectorized boundary-decay test at many energies.

    The analytic threshold is clamped from below at the double-precision
    noise floor for resolvent entries.  Energies inside the resonance
    cutoff get flag False and worst value +inf (singular by convention).
    Returns (flags, worst_values).
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    ball = es.ball
    L = ball.radius
    thr = max(
        params.ns_threshold(L, n=ball.n_particles, m=m), params.ns_noise_floor(L)
    )
    boundary = interior_boundary(ball)
    if not boundary:
        return np.ones(len(energies), dtype=bool), np.zeros(len(energies))
    rows = [ball.index[c] for c in boundary]
    dist = _dist_to_sorted(es.eigenvalues, energies)
    safe = dist > es.resonance_cutoff()
    worst = np.full(len(energies), np.inf)
    if np.any(safe):
        cols = es.green_column(ball.center_index(), energies[safe])
        worst[safe] = np.max(np.abs(cols[rows, :]), axis=0)
    return (worst <= thr), worst


def is_EmNS(
    es: EigenSystem, energy: float, params: ScalingParams, m: float | None = None
) -> NsReport:
    """Boundary Green decay from the centre at one energy."""
    flags, worst = ns_flags(es, np.array([energy]), params, m=m)
    resonant = not math.isfinite(worst[0])
    thr = max(
        params.ns_threshold(es.ball.radius, n=es.ball.n_particles, m=m),
        params.ns_noise_floor(es.ball.radius),
    )
    return NsReport(bool(flags[0]), float(worst[0]), thr, resonant)


@dataclass(frozen=True)
class LocReport:
    localized: bool
    worst_ratio: float
    witness: tuple | None
    min_distance: int
    qualifying_pairs: int


def is_m_loc(
    es: EigenSystem, params: ScalingParams, m: float | None = None
) -> LocReport:
    """Eigenfunction product decay over all sufficiently separated pairs.

    Checks |psi(x) psi(y)| <= e^{-rate * dist(x,y)} for every eigenfunction
    and every member pair at distance >= L^((1+varrho)/alpha), with the
    per-pair threshold clamped below at the numerical floor (products
    under the floor are indistinguishable from zero in the eigensolve).
    The worst ratio of product to threshold and its witness are reported.
    """
    ball = es.ball
    L = ball.radius
    rmin = params.loc_min_distance(L)
    dmat = ball.pairwise_distances
    mask = dmat >= rmin
    qualifying = int(np.count_nonzero(mask) // 2)
    if qualifying == 0:
        return LocReport(True, 0.0, None, rmin, 0)
    rate = params.decay_rate(L, n=ball.n_particles, m=m)
    # eigenvector entries below eps*|H|/gap are dominated by rounding in
    # the eigensolve; the certifiable floor adapts per eigenfunction
    floors = np.maximum(params.numerical_floor, eigenvector_noise_floors(es))
    worst = 0.0
    witness = None
    vecs = np.abs(es.eigenvectors)
    with np.errstate(divide="ignore"):
        log_vecs = np.log(np.maximum(vecs, 1e-320))
    for j in range(es.n):
        v = vecs[:, j]
        vmax = v.max()
        floor = floors[j]
        if vmax <= 0.0 or floor >= 1.0:
            continue
        log_floor = math.log(floor)
        # a violating pair needs v(x) v(y) > floor
        cand = np.nonzero(v > floor / vmax)[0]
        if len(cand) < 2:
            continue
        lv = log_vecs[cand, j]
        order = np.argsort(-lv)
        lv_s = lv[order]
        # unordered pairs (b < a in sorted order) with lv_a + lv_b > floor
        counts = np.minimum(
            np.arange(len(cand)),
            np.searchsorted(-lv_s, -(log_floor - lv_s), side="left"),
        )
        total = int(counts.sum())
        if total == 0:
            continue
        pa = np.repeat(np.arange(len(cand)), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        pb = np.arange(total) - np.repeat(starts, counts)
        ia = cand[order[pa]]
        ib = cand[order[pb]]
        rho = dmat[ia, ib]
        keep = rho >= rmin
        if not keep.any():
            continue
        log_thr = np.maximum(-rate * rho[keep], log_floor)
        excess = lv_s[pa[keep]] + lv_s[pb[keep]] - log_thr
        k = int(np.argmax(excess))
        ratio = math.exp(min(float(excess[k]), 700.0))
        if ratio > worst:
            worst = ratio
            sel = np.nonzero(keep)[0][k]
            wa, wb = int(ia[sel]), int(ib[sel])
            witness = (
                ball.members[wa],
                ball.members[wb],
                j,
                int(dmat[wa, wb]),
            )
    return LocReport(worst <= 1.0, worst, witness, rmin, qualifying)


@dataclass(frozen=True)
class TunnelingReport:
    tunneling: bool
    distant_pairs: int
    witness: tuple | None


def is_m_tunneling(
    ctx: AuditContext,
    ball: Ball,
    sub_scale: int,
    params: ScalingParams | None = None,
    m: float | None = None,
) -> TunnelingReport:
    """Does the ball contain two distant non-localized sub-balls?

    Sub-ball centres run over the half-sub-scale stride grid; distance
    thresholds follow the active regime.  Energy plays no role here.
    """
    params = params or ctx.params
    if sub_scale >= ball.radius:
        raise ValueError("sub-scale must be below the ball radius")
    centers = stride_centers(ball, max(1, sub_scale // 2), ball.radius - sub_scale)
    g = ball.geometry
    loc_cache: dict = {}

    def localized(center) -> bool:
        if center not in loc_cache:
            sub = ctx.eigensystem(center, sub_scale)
            loc_cache[center] = is_m_loc(sub, params, m=m).localized
        return loc_cache[center]

    distant = 0
    for i, c1 in enumerate(centers):
        for c2 in centers[i + 1 :]:
            if not params.pair_is_distant(config_distance(c1, c2, g), sub_scale):
                continue
            distant += 1
            if not localized(c1) and not localized(c2):
                return TunnelingReport(True, distant, (c1, c2))
    return TunnelingReport(False, distant, None)


@dataclass(frozen=True)
class PredicateReport:
    """All predicate flags of one ball at one energy, with witnesses."""

    center: tuple
    radius: int
    energy: float
    mass: float
    e_nr: bool
    e_cnr: bool
    e_ns: bool
    m_localized: bool
    m_tunneling: bool
    worst_boundary_green: float
    ns_threshold: float
    resonant_subball: tuple | None
    loc_witness: tuple | None
    tunneling_witness: tuple | None

    def to_jsonable(self) -> dict:
        def _cfg(c):
            return None if c is None else [list(map(int, np.atleast_1d(s))) for s in c[:2]]

        return {
            "center": list(self.center),
            "radius": self.radius,
            "energy": self.energy,
            "mass": self.mass,
            "e_nr": self.e_nr,
            "e_cnr": self.e_cnr,
            "e_ns": self.e_ns,
            "m_localized": self.m_localized,
            "m_tunneling": self.m_tunneling,
            "worst_boundary_green": self.worst_boundary_green,
            "ns_threshold": self.ns_threshold,
            "resonant_subball": None
            if self.resonant_subball is None
            else {
                "center": list(self.resonant_subball[0]),
                "radius": self.resonant_subball[1],
            },
            "loc_witness": _cfg(self.loc_witness),
            "tunneling_witness": _cfg(self.tunneling_witness),
        }


def predicate_report(
    ctx: AuditContext,
    center,
    radius: int,
    energy: float,
    sub_scale: int,
    m: float | None = None,
) -> PredicateReport:
    params = ctx.params
    ball = ctx.ball(center, radius)
    es = ctx.eigensystem(center, radius)
    nr = is_E_NR(es, energy, params)
    cnr, res_witness = is_E_CNR(ctx, ball, energy, params)
    ns = is_EmNS(es, energy, params, m=m)
    loc = is_m_loc(es, params, m=m)
    tun = is_m_tunneling(ctx, ball, sub_scale, params, m=m)
    return PredicateReport(
        center=tuple(center),
        radius=radius,
        energy=float(energy),
        mass=ctx.params.mass if m is None else m,
        e_nr=nr,
        e_cnr=cnr,
        e_ns=ns.non_singular,
        m_localized=loc.localized,
        m_tunneling=tun.tunneling,
        worst_boundary_green=ns.worst_boundary_value,
        ns_threshold=ns.threshold,
        resonant_subball=res_witness,
        loc_witness=loc.witness,
        tunneling_witness=tun.witness,
    )


# -- implication audits ------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    lemma: str
    center: tuple
    radius: int
    energy: float | None
    magnitude: float
    detail: str

    def to_jsonable(self) -> dict:
        return {
            "lemma": self.lemma,
            "center": list(self.center),
            "radius": self.radius,
            "energy": self.energy,
            "magnitude": self.magnitude,
            "detail": self.detail,
        }


@dataclass
class AuditResult:
    violations: list
    counters: dict


def energy_grid(spectra, pad: float = 0.0) -> np.ndarray:
    """Sorted union of the given spectra plus midpoints of adjacent gaps."""
    vals = np.unique(np.concatenate([np.asarray(s, dtype=float) for s in spectra]))
    if len(vals) < 2:
        return vals
    mids = 0.5 * (vals[:-1] + vals[1:])
    return np.unique(np.concatenate([vals, mids]))


def _grid_subballs(ball: Ball, sub_scale: int, stride: int) -> list:
    return stride_centers(ball, stride, ball.radius - sub_scale)


def verify_implications(
    ctx: AuditContext,
    center,
    radius: int,
    sub_scale: int,
    m: float | None = None,
    grid_stride: int | None = None,
) -> AuditResult:
    """Audit the deterministic implications on one ball and one sample.

    The for-all-energies quantifier is instantiated on the union of the
    sub-ball spectra plus midpoints (grid sub-balls sit on a stride grid,
    default stride = sub-scale).  Checked implications:

      * localized and non-resonant  ->  non-singular;
      * completely non-resonant and no distant singular sub-ball pair ->
        non-singular;
      * no distant singular sub-ball pair at any grid energy  ->
        localized;
      * on decomposable balls under a long-range interaction: factor
        localization plus complete non-resonance  ->  non-singular, with
        the truncation-error control checked on the split.
    """
    params = ctx.params
    ball = ctx.ball(center, radius)
    es = ctx.eigensystem(center, radius)
    L = ball.radius
    violations: list = []
    counters = {
        "energies": 0,
        "loc_nr_instances": 0,
        "cnr_instances": 0,
        "distant_pairs": 0,
        "pair_energy_exclusions": 0,
        # applicability diagnostics: the implications are proved for large
        # initial scales; these report how far the present scale is from
        # the quantitative side conditions used by the proofs
        "volume_condition_ok": int(
            math.log(len(ball)) <= float(L) ** float(params.beta)
        ),
        "ns_exponent_margin": params.ns_exponent_margin(L, m=m),
        "pair_geometry_possible": 0,  # set below
    }

    stride = grid_stride if grid_stride is not None else max(1, sub_scale)
    grid_centers = _grid_subballs(ball, sub_scale, stride)
    sub_systems = {c: ctx.eigensystem(c, sub_scale) for c in grid_centers}
    grid = energy_grid([s.eigenvalues for s in sub_systems.values()] or [es.eigenvalues])
    counters["energies"] = len(grid)

    # ball-level flags over the grid
    nr = _dist_to_sorted(es.eigenvalues, grid) >= params.resonance_scale(L)
    cnr = nr.copy()
    for c, r in cnr_subballs(params, ball):
        sub = ctx.eigensystem(c, r)
        cnr &= _dist_to_sorted(sub.eigenvalues, grid) >= params.resonance_scale(r)

    loc = is_m_loc(es, params, m=m)

    # distant sub-ball pairs (geometry first; empty at desk scales)
    g = ball.geometry
    distant_pairs = []
    for i, c1 in enumerate(grid_centers):
        for c2 in grid_centers[i + 1 :]:
            if params.pair_is_distant(config_distance(c1, c2, g), sub_scale):
                distant_pairs.append((c1, c2))
    counters["distant_pairs"] = len(distant_pairs)

    if len(grid_centers) >= 2:
        max_sep = max(
            config_distance(c1, c2, g)
            for i, c1 in enumerate(grid_centers)
            for c2 in grid_centers[i + 1 :]
        )
        counters["pair_geometry_possible"] = int(
            params.pair_is_distant(max_sep, sub_scale)
        )

    pair_free = np.ones(len(grid), dtype=bool)
    if distant_pairs:
        for c1, c2 in distant_pairs:
            f1, _ = ns_flags(sub_systems[c1], grid, params, m=m)
            f2, _ = ns_flags(sub_systems[c2], grid, params, m=m)
            both_singular = (~f1) & (~f2)
            pair_free &= ~both_singular
        counters["pair_energy_exclusions"] = int(np.count_nonzero(~pair_free))

    need_ns = (loc.localized & nr) | (cnr & pair_free)
    ns_ok = np.zeros(len(grid), dtype=bool)
    worst = np.zeros(len(grid))
    if np.any(need_ns):
        flags, w = ns_flags(es, grid[need_ns], params, m=m)
        ns_ok[need_ns] = flags
        worst[need_ns] = w

    thr = params.ns_threshold(L, n=ball.n_particles, m=m)
    for idx in np.nonzero(loc.localized & nr & ~ns_ok)[0]:
        violations.append(
            Violation(
                "loc_nr_implies_ns",
                tuple(center),
                radius,
                float(grid[idx]),
                float(worst[idx] / thr),
                f"boundary green {worst[idx]:.3e} above threshold {thr:.3e}",
            )
        )
    counters["loc_nr_instances"] = int(np.count_nonzero(loc.localized & nr))

    for idx in np.nonzero(cnr & pair_free & ~ns_ok)[0]:
        violations.append(
            Violation(
                "cnr_no_pair_implies_ns",
                tuple(center),
                radius,
                float(grid[idx]),
                float(worst[idx] / thr),
                f"boundary green {worst[idx]:.3e} above threshold {thr:.3e}",
            )
        )
    counters["cnr_instances"] = int(np.count_nonzero(cnr & pair_free))

    if bool(np.all(pair_free)) and not loc.localized:
        violations.append(
            Violation(
                "no_distant_pair_implies_loc",
                tuple(center),
                radius,
                None,
                loc.worst_ratio,
                f"worst product ratio {loc.worst_ratio:.3e} at {loc.witness}",
            )
        )

    return AuditResult(violations, counters)


def verify_longrange_split(
    ctx: AuditContext,
    center,
    radius: int,
    sub_scale: int,
    m: float | None = None,
    grid_stride: int | None = None,
) -> AuditResult:
    """Audit the decomposable-ball implication for long-range interactions.

    Hypotheses per energy: the split separation exceeds the truncation
    radius, both factor balls are localized, the ball is completely
    non-resonant.  Conclusion: the ball is non-singular at that energy.
    The truncation-error control (analytic bound below e^{-2mL} and the
    measured defect below the analytic bound) is checked on the split.
    """
    params = ctx.params
    if params.regime != "infinite":
        return AuditResult([], {"skipped": 1})
    ball = ctx.ball(center, radius)
    violations: list = []
    counters = {"energies": 0, "hypothesis_instances": 0}
    if classify_ball(ball, params) != "PI":
        return AuditResult([], {"skipped": 1})
    split = canonical_decomposition(ball, params)
    L = ball.radius
    r_trunc = params.truncation_radius_for(L)
    if split.separation <= r_trunc:
        return AuditResult([], {"skipped": 1})

    m_eff = ctx.params.mass if m is None else m
    model = ctx.spec.interaction
    bound = epsilon_bound(model, ball.n_particles, r_trunc)
    if bound >= math.exp(-2.0 * m_eff * L):
        violations.append(
            Violation(
                "truncation_control",
                tuple(center),
                radius,
                None,
                bound,
                f"analytic defect bound {bound:.3e} not below e^-2mL",
            )
        )
    defect = interaction_defect(split.part1, split.part2, model, ctx.spec.geometry)
    if defect > bound * (1.0 + 1e-9):
        violations.append(
            Violation(
                "truncation_defect",
                tuple(center),
                radius,
                None,
                defect,
                f"measured defect {defect:.3e} above bound {bound:.3e}",
            )
        )

    es1 = ctx.eigensystem(split.part1, L)
    es2 = ctx.eigensystem(split.part2, L)
    loc1 = is_m_loc(es1, params, m=m)
    loc2 = is_m_loc(es2, params, m=m)
    if not (loc1.localized and loc2.localized):
        return AuditResult(violations, counters)

    es = ctx.eigensystem(center, radius)
    stride = grid_stride if grid_stride is not None else max(1, sub_scale)
    grid_centers = _grid_subballs(ball, sub_scale, stride)
    spectra = [ctx.eigensystem(c, sub_scale).eigenvalues for c in grid_centers]
    grid = energy_grid(spectra or [es.eigenvalues])
    counters["energies"] = len(grid)

    cnr = _dist_to_sorted(es.eigenvalues, grid) >= params.resonance_scale(L)
    for c, r in cnr_subballs(params, ball):
        sub = ctx.eigensystem(c, r)
        cnr &= _dist_to_sorted(sub.eigenvalues, grid) >= params.resonance_scale(r)
    counters["hypothesis_instances"] = int(np.count_nonzero(cnr))

    if np.any(cnr):
        flags, worst = ns_flags(es, grid[cnr], params, m=m)
        thr = params.ns_threshold(L, n=ball.n_particles, m=m)
        bad = np.nonzero(~flags)[0]
        grid_cnr = grid[cnr]
        for idx in bad:
            violations.append(
                Violation(
                    "split_loc_cnr_implies_ns",
                    tuple(center),
                    radius,
                    float(grid_cnr[idx]),
                    float(worst[idx] / thr),
                    f"boundary green {worst[idx]:.3e} above threshold {thr:.3e}",
                )
            )
    return AuditResult(violations, counters)
