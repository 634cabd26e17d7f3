"""Command-line entry point.

Exit codes: 0 success, 1 a deterministic-implication violation was
recorded (the run itself succeeded), 2 invalid configuration or usage
(nothing written), 3 numerical failure.

All CSV output is RFC-4180 style with a header row and full-precision
decimal floats; reruns with the same configuration and seed produce
byte-identical CSV files.  The manifest lists every output file with its
SHA-256 checksum.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .configspace import config_distance, enumerate_ball
from .disorder import derive_seed, sample_field
from .experiments import (
    TrialSetup,
    decay_fit,
    ef_correlator,
    correlator_completeness,
    default_time_grid,
    estimate_event_probability,
    evc_experiment,
    propagator_sup,
    run_scaling_audit,
)
from .msa import check_param_constraints, predicate_report, verify_implications
from .operators import assemble_hamiltonian
from .runconfig import (
    ConfigError,
    build_field_model,
    build_geometry,
    build_interaction,
    build_params,
    build_schedule,
    config_center,
    config_hash,
    load_config,
)
from .spectral import ResonanceError, diagonalize

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


class RunWriter:
    """Collects output files, then writes a manifest with checksums."""

    def __init__(self, out_dir: str, raw_config: dict):
        self.out_dir = out_dir
        self.raw_config = raw_config
        self.files: list = []
        self.started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_csv(self, name: str, header: list, rows: list) -> None:
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def write_json(self, name: str, payload) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def finalize(self) -> None:
        outputs = []
        for name in self.files:
            p = self.path(name)
            digest = hashlib.sha256(open(p, "rb").read()).hexdigest()
            outputs.append(
                {"path": name, "sha256": digest, "bytes": os.path.getsize(p)}
            )
        manifest = {
            "tool_version": __version__,
            "config_sha256": config_hash(self.raw_config),
            "started_utc": self.started,
            "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "outputs": outputs,
        }
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _experiments_of(raw: dict, kind: str) -> list:
    return [e for e in raw["experiments"] if e["kind"] == kind]


def _setup_for(raw: dict, exp: dict, seed_override=None) -> TrialSetup:
    geometry = build_geometry(raw)
    params = build_params(raw)
    center = config_center(exp, geometry)
    second = None
    if exp.get("second_center") is not None:
        second = config_center({**exp, "center": exp["second_center"]}, geometry)
    return TrialSetup(
        geometry=geometry,
        params=params,
        field_model=build_field_model(raw),
        interaction=build_interaction(raw),
        center=center,
        radius=exp.get("radius", params.initial_scale),
        coupling=raw.get("coupling", 1.0),
        convention=raw.get("convention", "fixed"),
        sub_scale=exp.get("sub_scale"),
        second_center=second,
    )


def _seed(raw: dict, args) -> int:
    return args.seed if args.seed is not None else raw["seed"]


def _trials(exp: dict, args) -> int:
    return args.trials if args.trials is not None else exp.get("trials", 1)


# -- commands ----------------------------------------------------------------


def cmd_spectrum(raw: dict, writer: RunWriter, args) -> int:
    experiments = _experiments_of(raw, "spectrum")
    if not experiments:
        raise ConfigError("config contains no spectrum experiment")
    seed = _seed(raw, args)
    rows = []
    summary = []
    for idx, exp in enumerate(experiments):
        setup = _setup_for(raw, exp)
        ball = enumerate_ball(setup.center, setup.radius, setup.geometry)
        spec = setup.ham_spec()
        trials = _trials(exp, args)
        for t in range(trials):
            sample = sample_field(
                setup.field_model, ball.projection, derive_seed(seed, "trial", t)
            )
            es = diagonalize(assemble_hamiltonian(spec, ball, sample))
            for i, lam in enumerate(es.eigenvalues):
                rows.append([idx, t, i, float(lam)])
        summary.append(
            {"experiment": idx, "ball_size": len(ball), "trials": trials}
        )
    writer.write_csv(
        "spectrum.csv", ["experiment", "trial", "index", "eigenvalue"], rows
    )
    writer.write_json("summary.json", {"spectrum": summary})
    return EXIT_OK


def cmd_predicates(raw: dict, writer: RunWriter, args) -> int:
    experiments = _experiments_of(raw, "predicates")
    if not experiments:
        raise ConfigError("config contains no predicates experiment")
    seed = _seed(raw, args)
    rows = []
    records = []
    violation_rows = []
    total_violations = 0
    for idx, exp in enumerate(experiments):
        setup = _setup_for(raw, exp)
        sub_scale = exp.get("sub_scale") or max(1, setup.radius // 2)
        trials = _trials(exp, args)
        energies = exp.get("energies", [0.0])
        for t in range(trials):
            ctx = setup.context(derive_seed(seed, "trial", t))
            for energy in energies:
                rep = predicate_report(
                    ctx, setup.center, setup.radius, energy, sub_scale
                )
                rows.append(
                    [
                        idx,
                        t,
                        setup.radius,
                        json.dumps(list(setup.center)),
                        energy,
                        int(rep.e_nr),
                        int(rep.e_cnr),
                        int(rep.e_ns),
                        int(rep.m_localized),
                        int(rep.m_tunneling),
                        rep.worst_boundary_green,
                        rep.ns_threshold,
                    ]
                )
                records.append(
                    {"experiment": idx, "trial": t, **rep.to_jsonable()}
                )
            res = verify_implications(ctx, setup.center, setup.radius, sub_scale)
            total_violations += len(res.violations)
            for v in res.violations:
                violation_rows.append(
                    [idx, t, v.lemma, v.radius, v.energy, v.magnitude, v.detail]
                )
    writer.write_csv(
        "predicates.csv",
        [
            "experiment",
            "trial",
            "scale",
            "center",
            "energy",
            "e_nr",
            "e_cnr",
            "e_ns",
            "m_localized",
            "m_tunneling",
            "worst_boundary_green",
            "ns_threshold",
        ],
        rows,
    )
    writer.write_csv(
        "violations.csv",
        ["experiment", "trial", "lemma", "scale", "energy", "magnitude", "detail"],
        violation_rows,
    )
    writer.write_json(
        "summary.json",
        {"predicates": records, "violation_count": total_violations},
    )
    return EXIT_VIOLATIONS if total_violations else EXIT_OK


def cmd_audit(raw: dict, writer: RunWriter, args) -> int:
    experiments = _experiments_of(raw, "audit")
    if not experiments:
        raise ConfigError("config contains no audit experiment")
    seed = _seed(raw, args)
    schedule = build_schedule(raw)
    if schedule is None:
        raise ConfigError("audit needs a schedule block")
    rows = []
    violation_rows = []
    total_violations = 0
    summary = {}
    for idx, exp in enumerate(experiments):
        exp_violations = 0
        setup = _setup_for(raw, exp)
        result = run_scaling_audit(
            setup,
            schedule,
            exp.get("k_max", 0),
            _trials(exp, args),
            derive_seed(seed, "audit", idx),
            matrix_cap=exp.get("matrix_cap", 2500),
            grid_stride=exp.get("grid_stride"),
        )
        for r in result.rows:
            rows.append(
                [
                    idx,
                    r.k,
                    r.scale,
                    r.trials,
                    r.non_localized,
                    r.p_hat,
                    r.ci_lo,
                    r.ci_hi,
                    r.schedule_bound,
                    r.violation_count,
                    int(r.skipped),
                    r.note,
                ]
            )
            exp_violations += r.violation_count
        for t, v in result.violations:
            violation_rows.append(
                [idx, t, v.lemma, v.radius, v.energy, v.magnitude, v.detail]
            )
        constraints = check_param_constraints(setup.params, schedule)
        summary[f"experiment_{idx}"] = {
            "constraints": [
                {"name": c.name, "satisfied": c.satisfied, "margin": c.margin}
                for c in constraints
            ],
            "violation_count": exp_violations,
        }
        total_violations += exp_violations
    writer.write_csv(
        "audit_scales.csv",
        [
            "experiment",
            "k",
            "scale",
            "trials",
            "non_localized",
            "p_hat",
            "ci_lo",
            "ci_hi",
            "schedule_bound",
            "violations",
            "skipped",
            "note",
        ],
        rows,
    )
    writer.write_csv(
        "violations.csv",
        ["experiment", "trial", "lemma", "scale", "energy", "magnitude", "detail"],
        violation_rows,
    )
    writer.write_json("summary.json", summary)
    return EXIT_VIOLATIONS if total_violations else EXIT_OK


def cmd_evc(raw: dict, writer: RunWriter, args) -> int:
    experiments = _experiments_of(raw, "evc")
    if not experiments:
        raise ConfigError("config contains no evc experiment")
    seed = _seed(raw, args)
    rows = []
    summary = {}
    for idx, exp in enumerate(experiments):
        setup = _setup_for(raw, exp)
        if setup.second_center is None:
            raise ConfigError("evc needs a second center")
        ball_x = enumerate_ball(setup.center, setup.radius, setup.geometry)
        ball_y = enumerate_ball(setup.second_center, setup.radius, setup.geometry)
        report = evc_experiment(
            ball_x,
            ball_y,
            setup.field_model,
            setup.coupling,
            _trials(exp, args),
            exp.get("s_grid", [0.01, 0.05, 0.1]),
            derive_seed(seed, "evc", idx),
            interaction=setup.interaction,
            convention=setup.convention,
            constants=exp.get("constants"),
        )
        closed_ok = None
        if report.closed_form is not None:
            closed_ok = bool(
                np.all(
                    np.abs(report.empirical_cdf - report.closed_form)
                    <= 3.0 * report.stderr + 1e-12
                )
            )
        for i, s in enumerate(report.s_grid):
            rows.append(
                [
                    idx,
                    float(s),
                    float(report.empirical_cdf[i]),
                    float(report.stderr[i]),
                    float(report.bound_curve[i]),
                    float(report.closed_form[i])
                    if report.closed_form is not None
                    else "",
                ]
            )
        summary[f"experiment_{idx}"] = {
            "trials": report.trials,
            "weakly_separable": report.weakly_separable,
            "monotone": report.monotone(),
            "closed_form_within_3_stderr": closed_ok,
        }
    writer.write_csv(
        "evc.csv",
        ["experiment", "s", "empirical_cdf", "stderr", "bound_curve", "closed_form"],
        rows,
    )
    writer.write_json("summary.json", summary)
    return EXIT_OK


def cmd_dynamics(raw: dict, writer: RunWriter, args) -> int:
    experiments = _experiments_of(raw, "dynamics")
    if not experiments:
        raise ConfigError("config contains no dynamics experiment")
    seed = _seed(raw, args)
    rows = []
    summary = {}
    for idx, exp in enumerate(experiments):
        setup = _setup_for(raw, exp)
        ball = enumerate_ball(setup.center, setup.radius, setup.geometry)
        spec = setup.ham_spec()
        window = tuple(exp["window"]) if exp.get("window") else None
        t_grid = default_time_grid(exp.get("time_points", 10_000))
        if exp.get("pairs"):
            pairs = [
                (tuple(p[0]), tuple(p[1]))
                if isinstance(p[0], list)
                else (tuple(p[0:1]), tuple(p[1:2]))
                for p in exp["pairs"]
            ]
        else:
            # centre against the first member at each distinct distance
            dists = ball.distances_from_center
            pairs = [(ball.center, ball.center)]
            seen = {0}
            for i, r in enumerate(dists):
                if int(r) not in seen:
                    seen.add(int(r))
                    pairs.append((ball.center, ball.members[i]))
        trials = _trials(exp, args)
        fit_points = {}
        worst_q = 0.0
        worst_comp = 0.0
        worst_prop = 0.0
        for t in range(trials):
            sample = sample_field(
                setup.field_model, ball.projection, derive_seed(seed, "trial", t)
            )
            es = diagonalize(assemble_hamiltonian(spec, ball, sample))
            for x, y in pairs:
                q = ef_correlator(es, x, y, window)
                comp = correlator_completeness(es, x, y)
                prop = propagator_sup(es, x, y, t_grid)
                rho = config_distance(x, y, setup.geometry)
                rows.append(
                    [
                        idx,
                        t,
                        json.dumps(list(x)),
                        json.dumps(list(y)),
                        rho,
                        q,
                        prop,
                        comp,
                    ]
                )
                worst_q = max(worst_q, q - 1.0)
                worst_comp = max(worst_comp, abs(comp))
                worst_prop = max(worst_prop, prop - q)
                if rho >= 1:
                    fit_points.setdefault(rho, []).append(q)
        fit = None
        mean_pairs = [
            (rho, float(np.mean(vals))) for rho, vals in sorted(fit_points.items())
        ]
        positive = [(r, v) for r, v in mean_pairs if v > 0]
        if len(positive) >= 3:
            f = decay_fit(positive)
            fit = {
                "m_eff": f.m_eff,
                "a": f.a,
                "c": f.c,
                "residual_linear": f.residual_linear,
                "residual_log": f.residual_log,
            }
        summary[f"experiment_{idx}"] = {
            "trials": trials,
            "max_correlator_excess": worst_q,
            "max_completeness_defect": worst_comp,
            "max_propagator_excess": worst_prop,
            "decay_fit": fit,
        }
    writer.write_csv(
        "dynamics.csv",
        [
            "experiment",
            "trial",
            "x",
            "y",
            "rho",
            "correlator_q",
            "propagator_sup",
            "completeness_defect",
        ],
        rows,
    )
    writer.write_json("summary.json", summary)
    return EXIT_OK


def cmd_sweep(raw: dict, writer: RunWriter, args) -> int:
    if not args.axis or args.values is None:
        raise ConfigError("sweep needs --axis and --values")
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values: {exc}")
    if not values:
        raise ConfigError("empty sweep value list")
    experiments = _experiments_of(raw, "event")
    if not experiments:
        raise ConfigError("sweep needs an event experiment")
    exp = experiments[0]
    seed = _seed(raw, args)
    rows = []
    for value in values:
        sub = json.loads(json.dumps(raw))
        if args.axis == "g":
            sub["coupling"] = value
        elif args.axis == "L0":
            sub.setdefault("scaling", {})["initial_scale"] = int(value)
        elif args.axis == "m":
            sub.setdefault("scaling", {})["mass"] = value
        else:
            raise ConfigError(f"unknown sweep axis {args.axis!r}")
        setup = _setup_for(sub, exp)
        if args.axis == "L0":
            setup = dataclasses.replace(setup, radius=int(value))
        est, _ = estimate_event_probability(
            setup,
            exp["event"],
            _trials(exp, args),
            derive_seed(seed, "sweep", repr(value)),
            energy=exp.get("energy"),
        )
        rows.append(
            [args.axis, value, est.successes, est.trials, est.p_hat, est.ci_lo, est.ci_hi]
        )
    writer.write_csv(
        "trend.csv",
        ["axis", "value", "successes", "trials", "p_hat", "ci_lo", "ci_hi"],
        rows,
    )
    writer.write_json("summary.json", {"sweep": {"axis": args.axis, "points": len(rows)}})
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "predicates": cmd_predicates,
    "audit": cmd_audit,
    "evc": cmd_evc,
    "dynamics": cmd_dynamics,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpdsa",
        description="Spectral experiments on interacting lattice particles in random potentials",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--trials", type=int, default=None, help="trial override")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        if name == "sweep":
            p.add_argument("--axis", choices=["g", "L0", "m"], default=None)
            p.add_argument("--values", default=None, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or os.environ.get("MPDSA_OUT") or raw.get("output_dir", "out")
    try:
        # validate sweep flags before creating any output
        if args.command == "sweep" and (args.axis is None or args.values is None):
            raise ConfigError("sweep needs --axis and --values")
        writer = RunWriter(out_dir, raw)
        code = COMMANDS[args.command](raw, writer, args)
        writer.finalize()
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ResonanceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
