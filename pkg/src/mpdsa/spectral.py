"""Exact diagonalization, Green functions, and descent inequalities.

Everything here is deterministic given an assembled operator.  The Green
function of a symmetric matrix at a non-eigenvalue energy is evaluated in
the eigenbasis; a resonance guard refuses energies closer to the spectrum
than 1e-12 times the spectral norm, since no inequality of the scaling
analysis is ever evaluated at an eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .configspace import (
    Ball,
    config_distance,
    merge_configs,
    edge_boundary,
    enumerate_ball,
    exterior_boundary,
    interior_boundary,
)
from .operators import OperatorMatrix, kronecker_sum


class ResonanceError(ValueError):
    """Energy too close to the spectrum for a stable resolvent."""

    def __init__(self, energy: float, distance: float):
        super().__init__(
            f"energy {energy} is within {distance} of the spectrum"
        )
        self.energy = energy
        self.distance = distance


ASYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class EigenSystem:
    """Full spectral data of an operator on a ball.

    ``eigenvalues`` ascend; ``eigenvectors`` has the matching orthonormal
    columns.  Defect methods quantify how well the spectral-theorem
    invariants hold for this numerical decomposition.
    """

    operator: OperatorMatrix
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def ball(self) -> Ball:
        return self.operator.ball

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def residual_norm(self) -> float:
        h = self.operator.matrix
        r = h @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return float(np.linalg.norm(r, 2))

    def orthonormality_defect(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.T @ v - np.eye(self.n))))

    def completeness_defect(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v @ v.T - np.eye(self.n))))

    def spectral_distance(self, energy: float) -> float:
        return float(np.min(np.abs(self.eigenvalues - energy)))

    def resolvent_norm(self, energy: float) -> float:
        d = self.spectral_distance(energy)
        if d == 0.0:
            return math.inf
        return 1.0 / d

    def resonance_cutoff(self) -> float:
        return 1e-12 * max(self.spectral_norm, 1e-300)

    def check_energy(self, energy: float) -> None:
        d = self.spectral_distance(energy)
        if d <= self.resonance_cutoff():
            raise ResonanceError(energy, d)

    def green_column(self, source_idx: int, energies: np.ndarray) -> np.ndarray:
        """G(x, source; E) for all x, vectorized over energies.

        Shape (n, len(energies)).  No resonance guard: callers screening
        many energies must apply their own.
        """
        energies = np.atleast_1d(np.asarray(energies, dtype=float))
        weights = self.eigenvectors[source_idx]  # psi_j(source)
        denom = self.eigenvalues[:, None] - energies[None, :]
        return self.eigenvectors @ (weights[:, None] / denom)


def diagonalize(op: OperatorMatrix) -> EigenSystem:
    """Eigendecomposition of a symmetric operator matrix."""
    scale = max(op.norm_bound(), 1.0)
    if op.asymmetry() > ASYMMETRY_TOL * scale:
        raise ValueError(
            f"matrix asymmetry {op.asymmetry():g} exceeds tolerance"
        )
    sym = 0.5 * (op.matrix + op.matrix.T)
    vals, vecs = np.linalg.eigh(sym)
    return EigenSystem(op, vals, vecs)


def export_eigensystem_csv(es: EigenSystem, path, vectors_path=None) -> None:
    """Write (index, eigenvalue) rows; optionally the eigenvector matrix.

    The vector dump has one row per configuration (aligned with the
    ball's member order) and one column per eigenfunction.
    """
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(es.eigenvalues):
            writer.writerow([i, repr(float(lam))])
    if vectors_path is not None:
        with open(vectors_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in es.eigenvectors:
                writer.writerow([repr(float(v)) for v in row])


def eigenvector_noise_floors(es: EigenSystem, safety: float = 32.0) -> np.ndarray:
    """Per-eigenfunction amplitude below which entries are rounding noise.

    Computed eigenvector entries carry an absolute error of order
    eps * |H| / gap, where gap is the distance to the nearest other
    eigenvalue; amplitudes under that cannot be certified either way.
    """
    lam = es.eigenvalues
    gaps = np.full(es.n, np.inf)
    if es.n > 1:
        diffs = np.diff(lam)
        gaps[:-1] = diffs
        gaps[1:] = np.minimum(gaps[1:], diffs)
    noise = safety * np.finfo(float).eps * max(es.spectral_norm, 1.0)
    return noise / np.maximum(gaps, 1e-300)


def eigensystem_from_factors(
    es_a: EigenSystem, es_b: EigenSystem
) -> EigenSystem:
    """Spectral data of the Kronecker sum, assembled from factor data.

    Valid when the joint ball factors exactly and the cross interaction
    is numerically negligible; eigenvalues are pairwise sums and
    eigenvectors are products of the factor eigenvectors.
    """
    op = kronecker_sum(es_a.operator, es_b.operator)
    joint = op.ball
    na, nb = es_a.n, es_b.n
    sums = (es_a.eigenvalues[:, None] + es_b.eigenvalues[None, :]).ravel()
    order = np.argsort(sums, kind="stable")
    vecs_prod = np.kron(es_a.eigenvectors, es_b.eigenvectors)
    # product row i*nb+j corresponds to merge(a_i, b_j); reindex to the ball
    g = joint.geometry
    prod_of_joint = np.empty(len(joint), dtype=np.int64)
    for i, a in enumerate(es_a.ball.members):
        base = i * nb
        for j, b in enumerate(es_b.ball.members):
            prod_of_joint[joint.index[merge_configs(a, b, g)]] = base + j
    vecs = vecs_prod[prod_of_joint][:, order]
    return EigenSystem(op, sums[order], vecs)


@dataclass(frozen=True)
class GreenEvaluation:
    """Resolvent kernel at one energy."""

    energy: float
    kernel: np.ndarray
    spectral_distance: float
    resolvent_norm: float

    def entry(self, i: int, j: int) -> float:
        return float(self.kernel[i, j])


def green_function(es: EigenSystem, energy: float) -> GreenEvaluation:
    """Full resolvent kernel in the delta basis at a non-resonant energy."""
    es.check_energy(energy)
    inv = 1.0 / (es.eigenvalues - energy)
    kernel = (es.eigenvectors * inv) @ es.eigenvectors.T
    dist = es.spectral_distance(energy)
    return GreenEvaluation(float(energy), kernel, dist, 1.0 / dist)


# -- resolvent patching inequality ------------------------------------------


@dataclass(frozen=True)
class PatchReport:
    """Both sides of one patching inequality evaluation."""

    lhs: float
    rhs: float
    constant: int
    satisfied: bool
    detail: str = ""


def verify_gri(
    es_small: EigenSystem,
    es_large: EigenSystem,
    energy: float,
    x,
    y,
    rel_slack: float = 1e-9,
) -> PatchReport:
    """Check |G_large(x,y)| <= C * max_in |G_small(x,.)| * max_out |G_large(.,y)|.

    ``x`` must be the center of the small ball, ``y`` a member of the
    large ball outside the small one; C is the exact number of hopping
    pairs crossing the small ball's border inside the large ball.  Exact
    for operators assembled with the "fixed" diagonal convention.
    """
    small, large = es_small.ball, es_large.ball
    x = tuple(x)
    y = tuple(y)
    if x != small.center:
        raise ValueError("x must be the center of the small ball")
    if small.contains(y):
        raise ValueError("y must lie outside the small ball")
    pairs = edge_boundary(small, large)
    constant = len(pairs)
    g_small = green_function(es_small, energy)
    g_large = green_function(es_large, energy)
    xi_small = small.center_index()
    inner = max(
        abs(g_small.entry(xi_small, small.index[v]))
        for v in interior_boundary(small, large)
    )
    yi = large.index[y]
    outer = max(
        abs(g_large.entry(large.index[w], yi))
        for w in exterior_boundary(small, large)
    )
    lhs = abs(g_large.entry(large.index[x], yi))
    rhs = constant * inner * outer
    return PatchReport(lhs, rhs, constant, lhs <= rhs * (1.0 + rel_slack))


def verify_gri_eigenfunction(
    es_small: EigenSystem,
    es_large: EigenSystem,
    which: int,
    rel_slack: float = 1e-9,
) -> PatchReport:
    """Eigenfunction form: |psi(x)| <= C ||G_small(E)|| max_{rho<=l+1} |psi|.

    ``which`` selects an eigenfunction of the large ball; its eigenvalue
    must be non-resonant for the small ball.
    """
    small, large = es_small.ball, es_large.ball
    energy = float(es_large.eigenvalues[which])
    es_small.check_energy(energy)
    pairs = edge_boundary(small, large)
    constant = len(pairs)
    psi = es_large.eigenvectors[:, which]
    x = small.center
    lhs = abs(float(psi[large.index[x]]))
    norm = es_small.resolvent_norm(energy)
    ell = small.radius
    g = large.geometry
    neighborhood = max(
        abs(float(psi[large.index[cfg]]))
        for cfg in large.members
        if config_distance(x, cfg, g) <= ell + 1
    )
    rhs = constant * norm * neighborhood
    return PatchReport(lhs, rhs, constant, lhs <= rhs * (1.0 + rel_slack))


# -- subharmonic descent -----------------------------------------------------


@dataclass(frozen=True)
class SubharmonicReport:
    holds: bool
    worst_ratio: float
    witness: tuple | None
    admissible_centers: int


def subharmonic_check(
    f, domain: Ball, ell: int, q: float, floor: float = 0.0
) -> SubharmonicReport:
    """Verify f(x) <= q * max over the radius-ell ball around x, everywhere.

    ``f`` maps the domain's members to nonnegative reals (dict, or array
    aligned with the member order).  Admissible centers are members whose
    radius-ell sector ball lies entirely inside the domain; distances are
    configuration distances.  The maximum includes the center itself, so
    ratios never exceed one.  Values at or below ``floor`` count as zero:
    for data from an eigensolve, set it to the amplitude noise level, below
    which the inequality cannot be certified either way.
    """
    if not 0 <= ell:
        raise ValueError("ell must be >= 0")
    values = _as_value_map(f, domain)
    if floor > 0.0:
        values = {cfg: (0.0 if v <= floor else v) for cfg, v in values.items()}
    worst = 0.0
    witness = None
    admissible = 0
    g = domain.geometry
    for x in domain.members:
        sub = enumerate_ball(x, ell, g)
        if not all(domain.contains(cfg) for cfg in sub.members):
            continue
        admissible += 1
        m = max(values[cfg] for cfg in sub.members)
        fx = values[x]
        if m <= 0.0:
            continue  # fx <= m <= 0 forces fx == 0 for nonnegative f
        ratio = fx / m
        if ratio > worst:
            worst = ratio
            witness = x
    return SubharmonicReport(worst <= q, worst, witness, admissible)


def _as_value_map(f, domain: Ball) -> dict:
    if isinstance(f, dict):
        missing = [cfg for cfg in domain.members if cfg not in f]
        if missing:
            raise ValueError(f"function misses members, e.g. {missing[0]}")
        vals = {cfg: float(f[cfg]) for cfg in domain.members}
    else:
        arr = np.asarray(f, dtype=float)
        if arr.shape != (len(domain),):
            raise ValueError("array length does not match the domain")
        vals = {cfg: float(v) for cfg, v in zip(domain.members, arr)}
    if any(v < 0 for v in vals.values()):
        raise ValueError("subharmonic check needs nonnegative values")
    return vals


def radial_descent_bound(L: int, ell: int, q: float, maximum: float) -> float:
    """Value bound at the center after floor((L+1)/(ell+1)) descent steps."""
    if not L >= ell >= 0:
        raise ValueError("need L >= ell >= 0")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    return q ** ((L + 1) // (ell + 1)) * maximum


def radial_descent_bound_two(
    r1: int, r2: int, ell: int, q: float, maximum: float
) -> float:
    """Two-argument descent: exponents of both radial descents add."""
    if min(r1, r2) < ell or ell < 0:
        raise ValueError("need r1, r2 >= ell >= 0")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    steps = (r1 + 1) // (ell + 1) + (r2 + 1) // (ell + 1)
    return q**steps * maximum
