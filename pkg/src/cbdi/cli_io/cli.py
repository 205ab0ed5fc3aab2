"""Command-line entry points: classify, params, phase, simulate, duality.

Exit codes: classify, params and phase return 0 when every verdict is
determinate and 2 otherwise; simulate and duality return 0 when the oracle
comparison passes and 1 when it fails.  Configuration and usage errors
return 64.
"""

import argparse
from dataclasses import dataclass, field
import math
import sys

import numpy as np

from cbdi.boundary_params import GridConfig, estimate_rho, estimate_theta
from cbdi.classifier import BoundaryVerdict, classify_pair, lower_above_one, upper_below_one
from cbdi.cli_io.config import load_config, to_dict
from cbdi.cli_io.output import csv_text, gnuplot_blocks, record_text, table_text, write_outputs
from cbdi.errors import CbdiError, ParseError, ValidationError
from cbdi.mechanisms.mechanism import as_decomposition, power_mechanism

EXIT_OK = 0
EXIT_ORACLE_FAILED = 1
EXIT_INDETERMINATE = 2
EXIT_USAGE = 64

CLASSIFY_COLUMNS = ("process", "boundary", "verdict", "accessible", "absorbing", "regular_for_itself",
                    "non_sticky", "missing")
PARAMS_COLUMNS = ("parameter", "liminf", "limsup", "method", "trend", "converged", "relation_to_one", "note")
PHASE_COLUMNS = ("alpha", "ratio", "theta_lower", "theta_upper", "rho_lower", "rho_upper", "verdict_infinity_X",
                 "verdict_zero_Y")
STATES_COLUMNS = ("path", "t", "state", "flag")
LAPLACE_COLUMNS = ("t", "y", "estimate", "std_error", "oracle", "tolerance", "passed")
DUALITY_COLUMNS = ("x", "y", "t", "lhs", "lhs_error", "rhs", "rhs_error", "difference", "combined_error",
                   "passed", "mismatch")


@dataclass
class CommandResult:
    exit_code: int
    files: dict  # file name -> text; the first CSV is also the stdout fallback
    summary: str
    record: dict = field(default_factory=dict)

    @property
    def primary_csv(self):
        return next(text for name, text in self.files.items() if name.endswith(".csv"))


def _grid_config(cfg):
    c = cfg.classify
    return GridConfig(points_per_decade=c.points_per_decade, decades=c.decades, tolerance=c.tolerance)


def _base_record(command, cfg, mechanisms=None):
    config = to_dict(cfg)
    config.pop("out", None)  # where files go must not change what they contain
    record = {"command": command, "config": config}
    if mechanisms is not None:
        record["mechanisms"] = {"psi": mechanisms[0].describe(), "psi_hat": mechanisms[1].describe()}
    return record


# -- classify --------------------------------------------------------------------------------


def cmd_classify(cfg):
    mechanisms = cfg.mechanisms()
    at_infinity, at_zero = classify_pair(*mechanisms, _grid_config(cfg), cfg.classify.tau, cfg.classify.method)
    rows = []
    for report in (at_infinity, at_zero):
        rows.append((
            report.process, report.boundary, report.verdict.value, report.accessible, report.absorbing,
            report.extras.get("regular_for_itself"), report.extras.get("non_sticky"), "; ".join(report.missing),
        ))
    record = _base_record("classify", cfg, mechanisms)
    record["reports"] = [at_infinity.as_record(), at_zero.as_record()]
    determinate = at_infinity.determinate and at_zero.determinate
    summary = f"inf: {at_infinity.verdict.value}, 0: {at_zero.verdict.value}\n"
    return CommandResult(
        EXIT_OK if determinate else EXIT_INDETERMINATE,
        {"classify.csv": csv_text("classify", 1, CLASSIFY_COLUMNS, rows), "classify.json": record_text(record)},
        table_text(CLASSIFY_COLUMNS[:7], [r[:7] for r in rows]) + summary,
        record,
    )


# -- params ----------------------------------------------------------------------------------


def _relation(estimate, tau):
    if lower_above_one(estimate, tau):
        return "above"
    if upper_below_one(estimate, tau):
        return "below"
    return "undecided"


def cmd_params(cfg):
    """The four boundary parameters of the pair, each compared against 1."""
    mechanisms = cfg.mechanisms()
    d, dh = as_decomposition(mechanisms[0]), as_decomposition(mechanisms[1])
    grid, tau, method = _grid_config(cfg), cfg.classify.tau, cfg.classify.method
    towards_zero = GridConfig(grid.points_per_decade, grid.decades, 1.0, grid.window_decades, grid.tolerance)
    jobs = (
        ("theta(Phi,Sigma_hat)", lambda: estimate_theta(d.phi, dh.sigma, grid, method)),
        ("rho(Sigma_hat,Phi)", lambda: estimate_rho(dh.sigma, d.phi, towards_zero, method)),
        ("theta(Phi_hat,Sigma)", lambda: estimate_theta(dh.phi, d.sigma, grid, method)),
        ("rho(Sigma,Phi_hat)", lambda: estimate_rho(d.sigma, dh.phi, towards_zero, method)),
    )
    rows, undecided = [], 0
    for name, job in jobs:
        try:
            est = job()
        except CbdiError as exc:
            rows.append((name, None, None, None, None, None, "not applicable", str(exc)))
            continue
        relation = _relation(est, tau)
        undecided += relation == "undecided"
        rows.append((name, est.liminf, est.limsup, est.method, est.trend, est.converged, relation, est.reason))
    record = _base_record("params", cfg, mechanisms)
    record["parameters"] = [dict(zip(PARAMS_COLUMNS, r)) for r in rows]
    return CommandResult(
        EXIT_INDETERMINATE if undecided else EXIT_OK,
        {"params.csv": csv_text("params", 1, PARAMS_COLUMNS, rows), "params.json": record_text(record)},
        table_text(PARAMS_COLUMNS[:7], [r[:7] for r in rows]),
        record,
    )


# -- phase -----------------------------------------------------------------------------------


def phase_ratios(block):
    if block.ratio_count == 0:
        return []
    return [float(r) for r in np.linspace(block.ratio_start, block.ratio_stop, block.ratio_count)]


def phase_pair(alpha, ratio, c_hat):
    """Psi(y) = -c y^alpha and Psi_hat(x) = c_hat x^(2 - alpha) with c = ratio * c_hat."""
    return power_mechanism([(-ratio * c_hat, alpha)]), power_mechanism([(c_hat, 2.0 - alpha)])


def _bounds(job):
    try:
        est = job()
    except CbdiError:
        return None, None
    return est.liminf, est.limsup


def cmd_phase(cfg):
    block = cfg.phase
    tau = block.tau if block.tau is not None else cfg.classify.tau
    grid, method = _grid_config(cfg), cfg.classify.method
    towards_zero = GridConfig(grid.points_per_decade, grid.decades, 1.0, grid.window_decades, grid.tolerance)
    rows, transitions, indeterminate = [], [], 0
    for alpha in block.alpha:
        previous = None
        for ratio in phase_ratios(block):
            psi, psi_hat = phase_pair(float(alpha), ratio, block.c_hat)
            d, dh = as_decomposition(psi), as_decomposition(psi_hat)
            theta = _bounds(lambda: estimate_theta(d.phi, dh.sigma, grid, method))
            rho = _bounds(lambda: estimate_rho(dh.sigma, d.phi, towards_zero, method))
            at_infinity, at_zero = classify_pair(psi, psi_hat, grid, tau, method)
            verdicts = (at_infinity.verdict.value, at_zero.verdict.value)
            indeterminate += BoundaryVerdict.INDETERMINATE.value in verdicts
            if previous is not None and previous[1] != verdicts:
                transitions.append({"alpha": float(alpha), "between": [previous[0], ratio],
                                    "from": list(previous[1]), "to": list(verdicts)})
            previous = (ratio, verdicts)
            rows.append((float(alpha), ratio, *theta, *rho, *verdicts))
    record = _base_record("phase", cfg)
    record["transitions"] = transitions
    summary = "".join(
        f"alpha={t['alpha']}: {'/'.join(t['from'])} -> {'/'.join(t['to'])} in ({t['between'][0]!r}, "
        f"{t['between'][1]!r})\n" for t in transitions
    ) or "no transitions\n"
    return CommandResult(
        EXIT_INDETERMINATE if indeterminate else EXIT_OK,
        {
            "phase.csv": csv_text("phase", 1, PHASE_COLUMNS, rows),
            "phase.dat": gnuplot_blocks(list(PHASE_COLUMNS), rows, "alpha"),
            "phase.json": record_text(record),
        },
        summary,
        record,
    )


# -- simulate --------------------------------------------------------------------------------


def _steps(t, dt, key):
    steps = t / dt
    if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
        raise ValidationError(f"{key} value {t!r} is not a whole number of steps of dt = {dt!r}", key)
    return int(round(steps))


def sim_config(cfg, times, key):
    from cbdi.simulator import SimConfig

    s = cfg.sim
    steps = [_steps(t, s.dt, key) for t in times]
    horizon_steps = max(max(steps), 1)
    record_every = math.gcd(*steps, horizon_steps) or 1
    return SimConfig(
        dt=s.dt, horizon=horizon_steps * s.dt, epsilon=s.epsilon, small_jump_mode=s.small_jump_mode,
        x_floor=s.x_floor, x_ceil=s.x_ceil, n_paths=s.paths, seed=cfg.seed, record_every=record_every,
        jump_cap=s.jump_cap,
    )


def laplace_oracle(psi, psi_hat, x0, y, t):
    """E_x0[e^{-X_t y}] when it is known in closed form or by the flow ODE, else None.

    Psi_hat = 0 gives a pure CB(Psi); Psi = 0 gives the deterministic flow of -Psi_hat.
    """
    from cbdi.duality_lab import absorption_probabilities, cb_semigroup, ode_flow

    d, dh = as_decomposition(psi), as_decomposition(psi_hat)
    no_interaction = dh.sigma.is_zero and dh.phi.is_zero
    no_branching = d.sigma.is_zero and d.phi.is_zero
    if no_interaction:
        if x0 == 0 or math.isinf(x0) or t == 0:
            state = x0
        elif y == 0:
            return 1.0 - absorption_probabilities(psi, x0, t).exploded_by_t
        elif math.isinf(y):
            return absorption_probabilities(psi, x0, t).extinct_by_t
        else:
            return cb_semigroup(psi, x0, y, t)
    elif no_branching:
        state = x0 if x0 == 0 or math.isinf(x0) or t == 0 else ode_flow(psi_hat, x0, t)
    else:
        return None
    if math.isinf(state):
        return 0.0
    if math.isinf(y):
        return 1.0 if state == 0 else 0.0
    return math.exp(-state * y)


def _flag(value):
    if value == 0.0:
        return "AtZero"
    if math.isinf(value):
        return "AtInfinity"
    return "Interior"


def cmd_simulate(cfg):
    from cbdi.simulator import laplace_values, mean_and_error, run_batch

    mechanisms = cfg.mechanisms()
    block = cfg.simulate
    times = sorted(set(float(t) for t in block.times))
    sim = sim_config(cfg, times, "simulate.times")
    record = _base_record("simulate", cfg, mechanisms)
    if sim.n_paths == 0:
        files = {
            "simulate.csv": csv_text("simulate.laplace", 1, LAPLACE_COLUMNS, []),
            "simulate_states.csv": csv_text("simulate.states", 1, STATES_COLUMNS, []),
            "simulate.json": record_text(record),
        }
        return CommandResult(EXIT_OK, files, "no paths requested\n", record)
    batch = run_batch(*mechanisms, block.x0, sim)
    states_rows, laplace_rows, verdicts = [], [], []
    columns = {t: batch.at_time(t) for t in times}
    for i in range(sim.n_paths):
        for t in times:
            value = float(columns[t][i])
            states_rows.append((i, t, value, _flag(value)))
    for t in times:
        for y in block.y:
            estimate, error = mean_and_error(laplace_values(columns[t], float(y)))
            oracle = laplace_oracle(*mechanisms, block.x0, float(y), t)
            tolerance = block.k * error + block.abs_tol
            passed = None if oracle is None else bool(abs(estimate - oracle) <= tolerance)
            verdicts.append(passed)
            laplace_rows.append((t, float(y), estimate, error, oracle, tolerance, passed))
    checked = [v for v in verdicts if v is not None]
    record["oracle"] = "none applies" if not checked else f"{sum(checked)}/{len(checked)} cells within tolerance"
    record["causes"] = {str(k): int(v) for k, v in zip(*np.unique(batch.causes, return_counts=True))}
    files = {
        "simulate.csv": csv_text("simulate.laplace", 1, LAPLACE_COLUMNS, laplace_rows),
        "simulate_states.csv": csv_text("simulate.states", 1, STATES_COLUMNS, states_rows),
        "simulate.json": record_text(record),
    }
    summary = table_text(LAPLACE_COLUMNS, laplace_rows) + f"oracle: {record['oracle']}\n"
    return CommandResult(EXIT_OK if all(checked) else EXIT_ORACLE_FAILED, files, summary, record)


# -- duality ---------------------------------------------------------------------------------


def cmd_duality(cfg):
    from cbdi.duality_lab import duality_check

    mechanisms = cfg.mechanisms()
    block = cfg.duality
    sim = sim_config(cfg, block.times, "duality.times")
    record = _base_record("duality", cfg, mechanisms)
    if sim.n_paths == 0:
        files = {"duality.csv": csv_text("duality", 1, DUALITY_COLUMNS, []), "duality.json": record_text(record)}
        return CommandResult(EXIT_OK, files, "no paths requested\n", record)
    report = duality_check(*mechanisms, (block.x, block.y, block.times), sim, k=block.k)
    rows = [
        (c.x, c.y, c.t, c.lhs, c.lhs_error, c.rhs, c.rhs_error, c.lhs - c.rhs, c.combined_error, c.passed,
         c.mismatch)
        for c in report.cells
    ]
    passed = report.pass_fraction >= block.min_pass_fraction
    record.update({
        "hypotheses": report.hypotheses, "tag": report.tag, "conventions": report.conventions,
        "seeds": list(report.seeds), "k": report.k, "passed_cells": report.passed_cells,
        "cells": len(report.cells), "passed": passed,
    })
    summary = f"{report.passed_cells}/{len(report.cells)} cells agree within {block.k} SE ({report.tag})\n"
    files = {"duality.csv": csv_text("duality", 1, DUALITY_COLUMNS, rows), "duality.json": record_text(record)}
    return CommandResult(EXIT_OK if passed else EXIT_ORACLE_FAILED, files, summary, record)


# -- entry point -----------------------------------------------------------------------------

COMMANDS = {
    "classify": cmd_classify,
    "params": cmd_params,
    "phase": cmd_phase,
    "simulate": cmd_simulate,
    "duality": cmd_duality,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cbdi", description="Boundary classification and Monte Carlo duality checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--paths", type=int, help="override sim.paths")
        p.add_argument("--dt", type=float, help="override sim.dt")
        p.add_argument("--out", help="directory for CSV and JSON outputs (default: CSV on stdout)")
    return parser


def run(argv=None, stdout=None, stderr=None):
    """Parse arguments, run one command and return its exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.paths, args.dt, args.out)
        if args.command in ("simulate", "duality"):
            from cbdi.simulator import configure_threads

            configure_threads()
        result = COMMANDS[args.command](cfg)
    except (ParseError, ValidationError, OSError) as exc:
        stderr.write(f"cbdi: {exc}\n")
        return EXIT_USAGE
    if cfg.out is not None:
        for path in write_outputs(cfg.out, result.files):
            stderr.write(f"wrote {path}\n")
        stdout.write(result.summary)
    else:
        stdout.write(result.primary_csv)
    return result.exit_code


def main(argv=None):
    sys.exit(run(argv))
