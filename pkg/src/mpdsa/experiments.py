"""Monte Carlo experiments over disorder realizations.

Trials are independent: trial t draws its field from the sub-seed
hash(seed, t), so results are reproducible and order-independent, and
aggregate through commutative counters only.  Probabilities carry 95%
Wilson intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .configspace import (
    Ball,
    LatticeGeometry,
    edge_boundary,
    enumerate_ball,
    find_separability_witness,
)
from .disorder import FieldModel, derive_seed, sample_field
from .msa import (
    AuditContext,
    BoundSchedule,
    ScalingParams,
    energy_grid,
    is_EmNS,
    is_m_loc,
    is_m_tunneling,
    ns_flags,
    verify_implications,
    verify_longrange_split,
)
from .operators import HamiltonianSpec, InteractionModel, assemble_hamiltonian
from .spectral import EigenSystem

Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple:
    """(point estimate, lower, upper) of a binomial proportion."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    lo = min(max(0.0, center - half), phat)
    hi = max(min(1.0, center + half), phat)
    return phat, lo, hi


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial outcome record of one seeded Monte Carlo run."""

    event: str
    trials: int
    master_seed: int
    outcomes: tuple

    def successes(self) -> int:
        return sum(self.outcomes)

    def __len__(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class ProbabilityEstimate:
    successes: int
    trials: int
    p_hat: float
    ci_lo: float
    ci_hi: float

    @classmethod
    def from_counts(cls, successes: int, trials: int) -> "ProbabilityEstimate":
        p, lo, hi = wilson_interval(successes, trials)
        return cls(successes, trials, p, lo, hi)

    def overlaps(self, other: "ProbabilityEstimate") -> bool:
        return not (self.ci_hi < other.ci_lo or other.ci_hi < self.ci_lo)

    def to_jsonable(self) -> dict:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "p_hat": self.p_hat,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
        }


# -- trial setup -------------------------------------------------------------


@dataclass(frozen=True)
class TrialSetup:
    """Everything a disorder trial needs except the seed."""

    geometry: LatticeGeometry
    params: ScalingParams
    field_model: FieldModel
    interaction: InteractionModel
    center: tuple
    radius: int
    coupling: float
    convention: str = "fixed"
    sub_scale: int | None = None
    second_center: tuple | None = None

    def ham_spec(self) -> HamiltonianSpec:
        return HamiltonianSpec(
            geometry=self.geometry,
            n_particles=self.params.n_particles,
            coupling=self.coupling,
            interaction=self.interaction,
            convention=self.convention,
        )

    def balls(self) -> list:
        out = [enumerate_ball(self.center, self.radius, self.geometry)]
        if self.second_center is not None:
            out.append(
                enumerate_ball(self.second_center, self.radius, self.geometry)
            )
        return out

    def region(self) -> tuple:
        sites: set = set()
        for b in self.balls():
            sites.update(b.projection)
        return tuple(sorted(sites))

    def context(self, trial_seed: int) -> AuditContext:
        sample = sample_field(self.field_model, self.region(), trial_seed)
        return AuditContext(self.ham_spec(), sample, self.params)


EVENTS = (
    "singular",
    "non_localized",
    "tunneling",
    "distant_pair_singular",
    "always_true",
    "always_false",
)


def _evaluate_event(setup: TrialSetup, event: str, energy, trial_seed: int) -> bool:
    if event == "always_true":
        return True
    if event == "always_false":
        return False
    ctx = setup.context(trial_seed)
    params = setup.params
    if event == "singular":
        es = ctx.eigensystem(setup.center, setup.radius)
        return not is_EmNS(es, float(energy), params).non_singular
    if event == "non_localized":
        es = ctx.eigensystem(setup.center, setup.radius)
        return not is_m_loc(es, params).localized
    if event == "tunneling":
        if setup.sub_scale is None:
            raise ValueError("tunneling event needs a sub-scale")
        ball = ctx.ball(setup.center, setup.radius)
        return is_m_tunneling(ctx, ball, setup.sub_scale, params).tunneling
    if event == "distant_pair_singular":
        if setup.second_center is None:
            raise ValueError("pair event needs a second center")
        es1 = ctx.eigensystem(setup.center, setup.radius)
        es2 = ctx.eigensystem(setup.second_center, setup.radius)
        grid = energy_grid([es1.eigenvalues, es2.eigenvalues])
        f1, _ = ns_flags(es1, grid, params)
        f2, _ = ns_flags(es2, grid, params)
        return bool(np.any((~f1) & (~f2)))
    raise ValueError(f"unknown event {event!r}")


def estimate_event_probability(
    setup: TrialSetup,
    event: str,
    trials: int,
    seed: int,
    energy: float | None = None,
) -> tuple:
    """(ProbabilityEstimate, TrialBatch) for the event over seeded trials."""
    if trials < 30 and event not in ("always_true", "always_false"):
        raise ValueError("need at least 30 trials")
    outcomes = []
    for t in range(trials):
        ts = derive_seed(seed, "trial", t)
        outcomes.append(_evaluate_event(setup, event, energy, ts))
    est = ProbabilityEstimate.from_counts(sum(outcomes), trials)
    return est, TrialBatch(event, trials, seed, tuple(outcomes))


# -- scaling audit -----------------------------------------------------------


@dataclass(frozen=True)
class ScaleRow:
    k: int
    scale: int
    trials: int
    non_localized: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    schedule_bound: float
    violation_count: int
    skipped: bool = False
    note: str = ""


@dataclass
class ScalingAuditResult:
    rows: list
    violations: list
    counters: dict


def run_scaling_audit(
    setup: TrialSetup,
    schedule: BoundSchedule,
    k_max: int,
    trials: int,
    seed: int,
    matrix_cap: int = 2500,
    grid_stride: int | None = None,
) -> ScalingAuditResult:
    """Non-localization frequencies along the scale ladder, plus implication
    audits at every scale above the first; scales whose balls exceed the
    matrix cap are skipped with a notice."""
    params = setup.params
    ladder = params.scale_ladder(k_max)
    rows = []
    all_violations = []
    counters: dict = {"trials": trials}
    for k, L in enumerate(ladder):
        ball = enumerate_ball(setup.center, L, setup.geometry)
        if len(ball) > matrix_cap:
            rows.append(
                ScaleRow(
                    k, L, 0, 0, math.nan, math.nan, math.nan,
                    schedule.bound(L, params.n_particles, k), 0,
                    skipped=True,
                    note=f"ball size {len(ball)} exceeds cap {matrix_cap}",
                )
            )
            continue
        scale_setup = TrialSetup(
            geometry=setup.geometry,
            params=params,
            field_model=setup.field_model,
            interaction=setup.interaction,
            center=setup.center,
            radius=L,
            coupling=setup.coupling,
            convention=setup.convention,
            sub_scale=ladder[k - 1] if k > 0 else None,
        )
        # per-scale master seed, so the k = 0 row reproduces a plain
        # non-localization probability estimate bit for bit
        seed_k = derive_seed(seed, "scale", k)
        nonloc = 0
        vio_count = 0
        for t in range(trials):
            ts = derive_seed(seed_k, "trial", t)
            ctx = scale_setup.context(ts)
            es = ctx.eigensystem(setup.center, L)
            if not is_m_loc(es, params).localized:
                nonloc += 1
            if k > 0:
                res = verify_implications(
                    ctx, setup.center, L, ladder[k - 1], grid_stride=grid_stride
                )
                vio_count += len(res.violations)
                all_violations.extend((t,) + (v,) for v in res.violations)
        p, lo, hi = wilson_interval(nonloc, trials)
        rows.append(
            ScaleRow(
                k, L, trials, nonloc, p, lo, hi,
                schedule.bound(L, params.n_particles, k), vio_count,
            )
        )
    return ScalingAuditResult(rows, all_violations, counters)


# -- eigenvalue-spacing experiments -------------------------------------------


def evc_bound(s: float, L: int, sizes: tuple, constants: dict) -> float:
    """Concentration bound C2 L^A2 (2s)^b2 + |B'||B''| C1 L^A1 (2s)^b1.

    The primed constants (C1, A1, b1) weight the pair term, the
    double-primed ones the mean term; all six are configuration inputs.
    """
    n1, n2 = sizes
    s2 = 2.0 * s
    return constants.get("C2", 1.0) * L ** constants.get("A2", 0.0) * s2 ** constants.get(
        "b2", 1.0
    ) + n1 * n2 * constants.get("C1", 1.0) * L ** constants.get("A1", 0.0) * s2 ** constants.get(
        "b1", 1.0
    )


@dataclass
class EvcReport:
    s_grid: np.ndarray
    empirical_cdf: np.ndarray
    stderr: np.ndarray
    bound_curve: np.ndarray
    closed_form: np.ndarray | None
    distances: np.ndarray
    weakly_separable: bool
    trials: int

    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.empirical_cdf) >= -1e-15))


def evc_experiment(
    ball_x: Ball,
    ball_y: Ball,
    model: FieldModel,
    coupling: float,
    trials: int,
    s_grid,
    seed: int,
    interaction: InteractionModel = InteractionModel(),
    convention: str = "fixed",
    constants: dict | None = None,
) -> EvcReport:
    """Empirical CDF of the spectral distance between two balls.

    Both operators are assembled from the same field sample per trial.
    The bound curve is (2L+1)^(2 N d) * evc_bound(2s) with the supplied
    constants; for two one-member single-particle balls with a uniform
    marginal the exact law 2t - t^2, t = s/|g|, is attached.
    """
    constants = constants or {}
    g = ball_x.geometry
    n = ball_x.n_particles
    spec = HamiltonianSpec(
        geometry=g,
        n_particles=n,
        coupling=coupling,
        interaction=interaction,
        convention=convention,
    )
    region = tuple(sorted(set(ball_x.projection) | set(ball_y.projection)))
    dists = np.empty(trials)
    for t in range(trials):
        sample = sample_field(model, region, derive_seed(seed, "evc", t))
        e1 = np.linalg.eigvalsh(assemble_hamiltonian(spec, ball_x, sample).matrix)
        e2 = np.linalg.eigvalsh(assemble_hamiltonian(spec, ball_y, sample).matrix)
        dists[t] = float(np.min(np.abs(e1[:, None] - e2[None, :])))
    s_grid = np.asarray(list(s_grid), dtype=float)
    cdf = np.array([np.mean(dists <= s) for s in s_grid])
    stderr = np.sqrt(np.maximum(cdf * (1 - cdf), 1e-12) / trials)
    L = ball_x.radius
    theorem_factor = float(2 * L + 1) ** (2 * n * g.d)
    bound = theorem_factor * np.array(
        [evc_bound(2.0 * s, L, (len(ball_x), len(ball_y)), constants) for s in s_grid]
    )
    closed = None
    if (
        len(ball_x) == 1
        and len(ball_y) == 1
        and n == 1
        and model.kind == "iid"
        and model.marginal == "uniform"
    ):
        t_vals = np.clip(s_grid / abs(coupling), 0.0, 1.0)
        closed = 2.0 * t_vals - t_vals**2
    witness = None
    if g.kind == "lattice":
        witness = find_separability_witness(ball_x, ball_y)
    return EvcReport(
        s_grid=s_grid,
        empirical_cdf=cdf,
        stderr=stderr,
        bound_curve=bound,
        closed_form=closed,
        distances=dists,
        weakly_separable=witness is not None,
        trials=trials,
    )


# -- eigenfunction correlators and dynamics -----------------------------------


def ef_correlator(es: EigenSystem, x, y, window: tuple | None = None) -> float:
    """Unsigned correlator sum over eigenvalues in the window (all if None)."""
    ball = es.ball
    ix, iy = ball.index[tuple(x)], ball.index[tuple(y)]
    prod = np.abs(es.eigenvectors[ix] * es.eigenvectors[iy])
    if window is not None:
        lo, hi = window
        keep = (es.eigenvalues >= lo) & (es.eigenvalues <= hi)
        prod = prod[keep]
    return float(np.sum(prod))


def correlator_completeness(es: EigenSystem, x, y) -> float:
    """Signed full-window sum minus the Kronecker delta (zero in theory)."""
    ball = es.ball
    ix, iy = ball.index[tuple(x)], ball.index[tuple(y)]
    signed = float(np.sum(es.eigenvectors[ix] * es.eigenvectors[iy]))
    return signed - (1.0 if ix == iy else 0.0)


def default_time_grid(points: int = 10_000) -> np.ndarray:
    """Zero plus a log grid on [1e-2, 1e3]; a lower bound probe of sup_t."""
    return np.concatenate([[0.0], np.logspace(-2.0, 3.0, points)])


def propagator_sup(es: EigenSystem, x, y, t_grid=None) -> float:
    """max over the grid of |sum_j e^{-i t lambda_j} psi_j(x) psi_j(y)|.

    A lower bound on the true supremum over all times; always at most the
    unsigned correlator.
    """
    if t_grid is None:
        t_grid = default_time_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    ball = es.ball
    ix, iy = ball.index[tuple(x)], ball.index[tuple(y)]
    weights = es.eigenvectors[ix] * es.eigenvectors[iy]
    phases = np.exp(-1j * np.outer(t_grid, es.eigenvalues))
    return float(np.max(np.abs(phases @ weights)))


def finite_volume_dl_bound(
    L: int,
    d: int,
    m: float,
    f_L: float,
    boundary_pairs: int | None = None,
) -> float:
    """Correlator bound f(L) + 2 |S| e^{-m L} with the boundary count
    enumerated exactly (two disjoint radius-L balls by default)."""
    if boundary_pairs is None:
        geom = LatticeGeometry(kind="lattice", d=d)
        origin = (0,) if d == 1 else (tuple([0] * d),)
        ball = enumerate_ball(origin, L, geom)
        boundary_pairs = 2 * len(edge_boundary(ball))
    return f_L + 2.0 * boundary_pairs * math.exp(-m * L)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay exponents of positive pair data.

    ``m_eff`` is the slope of -log(v) against distance; ``log_power`` the
    (a, c) pair of the -log(v) = a * log(rho)^(1+c) family with c picked
    from a fixed grid by residual.
    """

    m_eff: float
    intercept: float
    residual_linear: float
    a: float
    c: float
    residual_log: float
    used_points: int
    excluded_points: int


def decay_fit(pairs) -> DecayFit:
    """Fit exponential and stretched-log decay laws to (distance, value)."""
    rho = []
    vals = []
    excluded = 0
    for r, v in pairs:
        if v > 0.0 and r >= 1:
            rho.append(float(r))
            vals.append(float(v))
        else:
            excluded += 1
    if len(rho) < 3:
        raise ValueError("need at least three positive pairs")
    rho = np.asarray(rho)
    neg_log = -np.log(np.asarray(vals))
    # linear law
    design = np.column_stack([rho, np.ones_like(rho)])
    coef, res, _, _ = np.linalg.lstsq(design, neg_log, rcond=None)
    m_eff, intercept = float(coef[0]), float(coef[1])
    res_lin = float(res[0]) if len(res) else 0.0
    # stretched-log law over the c grid
    best = None
    for c in np.arange(0.1, 2.0 + 1e-9, 0.1):
        feat = np.log(rho) ** (1.0 + c)
        design = np.column_stack([feat, np.ones_like(feat)])
        coef, res, _, _ = np.linalg.lstsq(design, neg_log, rcond=None)
        r = float(res[0]) if len(res) else 0.0
        if best is None or r < best[0]:
            best = (r, float(coef[0]), float(c))
    return DecayFit(
        m_eff=m_eff,
        intercept=intercept,
        residual_linear=res_lin,
        a=best[1],
        c=best[2],
        residual_log=best[0],
        used_points=len(rho),
        excluded_points=excluded,
    )


# -- combined per-trial audit (used by the acceptance battery) ----------------


@dataclass
class TrialAudit:
    violations: list
    correlator_defect: float
    completeness_defect: float
    propagator_excess: float
    non_localized: bool
    singular_at_energy: bool | None


def audit_trial(
    setup: TrialSetup,
    trial_seed: int,
    energy: float | None = None,
    check_correlators: bool = True,
    propagator_points: int = 2000,
    grid_stride: int | None = None,
    longrange_center: tuple | None = None,
) -> TrialAudit:
    """One disorder trial: implication audit plus correlator invariants.

    Correlator checks run on the centre paired with the farthest member
    and with itself; the propagator uses a reduced default grid to keep
    single-core audits affordable.
    """
    ctx = setup.context(trial_seed)
    es = ctx.eigensystem(setup.center, setup.radius)
    violations = []
    if setup.sub_scale is not None:
        res = verify_implications(
            ctx, setup.center, setup.radius, setup.sub_scale, grid_stride=grid_stride
        )
        violations.extend(res.violations)
    if longrange_center is not None and setup.params.regime == "infinite":
        res2 = verify_longrange_split(
            ctx,
            longrange_center,
            setup.radius,
            setup.sub_scale or max(1, setup.radius // 2),
            grid_stride=grid_stride,
        )
        violations.extend(res2.violations)
    loc = is_m_loc(es, setup.params)
    singular = None
    if energy is not None:
        singular = not is_EmNS(es, energy, setup.params).non_singular
    q_defect = comp_defect = prop_excess = 0.0
    if check_correlators:
        ball = es.ball
        far_idx = int(np.argmax(ball.distances_from_center))
        pairs = [(ball.center, ball.members[far_idx]), (ball.center, ball.center)]
        grid = default_time_grid(propagator_points)
        for x, y in pairs:
            q = ef_correlator(es, x, y)
            q_defect = max(q_defect, q - 1.0)
            comp_defect = max(comp_defect, abs(correlator_completeness(es, x, y)))
            prop_excess = max(prop_excess, propagator_sup(es, x, y, grid) - q)
    return TrialAudit(
        violations=violations,
        correlator_defect=q_defect,
        completeness_defect=comp_defect,
        propagator_excess=prop_excess,
        non_localized=not loc.localized,
        singular_at_energy=singular,
    )
