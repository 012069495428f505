"""Command-line front end: experiment orchestration, deterministic parallel
replicates, and CSV emission.

Exit codes: 0 success, 1 configuration, 2 numerical, 3 rare-event,
4 ill-posedness.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bvm, operators, posterior, priors, spectral
from .config import ExperimentConfig, parse_config, resolved_items
from .errors import (
    BvmlabError,
    ConfigurationError,
    IllPosedError,
    NumericalError,
    RareEventError,
)
from .seeds import derive_seed

__all__ = [
    "ExperimentContext",
    "build_context",
    "run_command",
    "emit_csv",
    "load_csv",
    "main",
]

_EXIT_CODES = (
    (RareEventError, 3),
    (IllPosedError, 4),
    (NumericalError, 2),
    (ConfigurationError, 1),
    (BvmlabError, 2),
)

COVERAGE_COLUMNS = (
    "epsilon",
    "replicate",
    "functional_mean",
    "scaled_error",
    "hat_psi",
    "radius",
    "covered",
    "ball_radius",
    "ball_covered",
)


@dataclass
class ExperimentContext:
    """All objects an experiment needs, built deterministically from the config."""

    config: ExperimentConfig
    basis: spectral.SpectralBasis
    forward: operators.ForwardOperator
    diff_op: Optional[operators.ForwardOperator]
    prior: priors.GaussianPrior
    truth: spectral.CoeffVector
    functional: Optional[bvm.TestFunctional]
    ambient_exponent: float


def _build_operator(config: ExperimentConfig, basis):
    if config.operator_kind == "psido":
        return psido_with_identity(basis, config.operator_t), None, -config.operator_t
    if config.operator_kind == "heat":
        return operators.heat_semigroup(basis, config.operator_time), None, 0.0
    if config.coefficient == "constant":
        coeff = operators.EllipticCoefficient(
            lambda x, b=config.coefficient_base: b * np.ones_like(x)
        )
    else:
        coeff = operators.EllipticCoefficient(
            lambda x, b=config.coefficient_base, a=config.coefficient_amplitude: (
                b + a * np.sin(2 * np.pi * x)
            ),
            floor=(config.coefficient_base - abs(config.coefficient_amplitude)) / 2,
        )
    diff_op, solution_op = operators.elliptic_operator(coeff, basis)
    return solution_op, diff_op, -2.0


def psido_with_identity(basis, t):
    if t == 0.0:
        return operators.identity_operator(basis)
    return operators.psido_multiplier(basis, t)


def _build_truth(config: ExperimentConfig, basis) -> spectral.CoeffVector:
    if config.truth_kind == "bump":
        zeta = spectral.make_bump(config.truth_support, config.truth_plateau)
        base = spectral.analyze(zeta(basis.grid), basis)
        return spectral.coeff_vector(basis, config.truth_scale * base.coeffs)
    if config.truth_kind == "sobolev":
        draw = spectral.sobolev_draw(basis, config.truth_alpha, config.truth_seed)
        return spectral.coeff_vector(basis, config.truth_scale * draw.coeffs)
    coeffs = np.zeros(basis.n_modes)
    for mode, value in zip(config.truth_modes, config.truth_values):
        if not 1 <= mode <= basis.n_modes:
            raise ConfigurationError(f"key 'truth.modes': mode {mode} out of range")
        coeffs[mode - 1] = value
    return spectral.coeff_vector(basis, config.truth_scale * coeffs)


def _build_functional(config: ExperimentConfig, basis, forward) -> bvm.TestFunctional:
    kind = config.functional_kind
    if kind == "heat_mode":
        if config.operator_kind != "heat":
            raise ConfigurationError(
                "key 'functional.kind': heat_mode requires the heat operator"
            )
        tilde = spectral.unit_vector(basis, config.functional_mode - 1)
        return bvm.heat_psi_from_representer(tilde, config.operator_time)
    if kind == "mode":
        psi = spectral.unit_vector(basis, config.functional_mode - 1)
        return bvm.representer(forward, psi, config.cond_limit)
    if kind == "sobolev":
        draw = spectral.sobolev_draw(basis, config.functional_alpha, config.functional_seed)
        psi = spectral.bandlimit_approx(draw, config.functional_band)
        return bvm.representer(forward, psi, config.cond_limit)
    # smoothed_image: the functional whose image under the differential
    # operator is a band-limited bump-windowed sine
    if config.operator_kind != "bvp":
        raise ConfigurationError(
            "key 'functional.kind': smoothed_image requires the elliptic operator"
        )
    zeta = spectral.make_bump(config.functional_support, config.functional_plateau)
    window = zeta(basis.grid) * np.sin(config.functional_sine * np.pi * basis.grid)
    image = spectral.bandlimit_approx(
        spectral.analyze(window, basis), config.functional_band
    )
    psi = operators.apply(forward, image)
    return bvm.representer(forward, psi, config.cond_limit)


def build_context(config: ExperimentConfig) -> ExperimentContext:
    """Materialise basis, operator, prior, truth, and functional for one config."""
    kind = (
        spectral.BasisKind.FOURIER_TORUS
        if config.operator_kind == "psido"
        else spectral.BasisKind.DIRICHLET_SINE
    )
    n_modes = config.n_modes
    if config.experiment == "tightness":
        n_modes = max(n_modes, config.tightness_max_modes)
    basis = spectral.build_basis(kind, n_modes, config.oversample)
    forward, diff_op, ambient = _build_operator(config, basis)
    prior = priors.matern_prior(basis, config.prior_r, config.prior_amplitude)
    truth = _build_truth(config, basis)
    functional = None
    if config.experiment in ("coverage",):
        functional = _build_functional(config, basis, forward)
    return ExperimentContext(
        config=config,
        basis=basis,
        forward=forward,
        diff_op=diff_op,
        prior=prior,
        truth=truth,
        functional=functional,
        ambient_exponent=ambient,
    )


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def emit_csv(records, path: str, metadata: Sequence[tuple[str, str]] = ()) -> None:
    """Write rows as CSV: one '# key=value' metadata block, then header, then data.

    Floating-point cells carry 17 significant digits so a reparse reproduces
    the values exactly.
    """
    header, rows = records
    if not rows:
        raise ConfigurationError("refusing to emit an empty results table")
    lines = [f"# {key}={value}" for key, value in metadata]
    lines.append(",".join(header))
    for row in rows:
        if len(row) != len(header):
            raise ConfigurationError("row width does not match the header")
        lines.append(",".join(_format_cell(cell) for cell in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path: str):
    """Read back an emitted file: (metadata dict, header list, rows of strings)."""
    metadata: dict[str, str] = {}
    header: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                metadata[key] = value
                continue
            if not header:
                header = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    return metadata, header, rows


def _base_metadata(context: ExperimentContext) -> list[tuple[str, str]]:
    items = list(resolved_items(context.config))
    items.append(("prior_tail_bound", format(priors.truncation_tail(context.prior), ".17g")))
    items.append(
        (
            "embedding_constant_c",
            format(
                operators.embedding_constant(context.forward, context.ambient_exponent),
                ".17g",
            ),
        )
    )
    return items


def _coverage_rows(results) -> list[tuple]:
    return [
        (
            r.epsilon,
            r.replicate_index,
            r.functional_mean,
            r.scaled_error,
            r.hat_psi,
            r.interval_radius,
            r.interval_covered,
            r.ball_radius,
            r.ball_covered,
        )
        for r in results
    ]


def _coverage_chunk(payload) -> list[tuple]:
    config_text, epsilon, indices = payload
    context = build_context(parse_config(config_text))
    results = bvm.run_replicates(
        context.prior,
        context.forward,
        context.truth,
        [context.functional],
        epsilon,
        context.config.n_replicates,
        level=context.config.level,
        ball_beta=context.config.ball_beta,
        master_seed=context.config.master_seed,
        ball_draws=context.config.ball_draws,
        replicate_indices=indices,
    )
    return _coverage_rows(results)


def _chunks(n: int, workers: int) -> list[range]:
    size = math.ceil(n / workers)
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _config_text(config: ExperimentConfig) -> str:
    return "\n".join(f"{k}={v}" for k, v in resolved_items(config))


def _run_coverage(context: ExperimentContext, workers: int):
    config = context.config
    rows: list[tuple] = []
    if workers <= 1:
        for eps in config.epsilons:
            results = bvm.run_replicates(
                context.prior,
                context.forward,
                context.truth,
                [context.functional],
                eps,
                config.n_replicates,
                level=config.level,
                ball_beta=config.ball_beta,
                master_seed=config.master_seed,
                ball_draws=config.ball_draws,
            )
            rows.extend(_coverage_rows(results))
        return COVERAGE_COLUMNS, rows
    text = _config_text(config)
    payloads = [
        (text, eps, list(chunk))
        for eps in config.epsilons
        for chunk in _chunks(config.n_replicates, workers)
    ]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk_rows in pool.map(_coverage_chunk, payloads):
            rows.extend(chunk_rows)
    return COVERAGE_COLUMNS, rows


def _rates_chunk(payload) -> list[tuple]:
    config_text, epsilon, indices = payload
    context = build_context(parse_config(config_text))
    rows = []
    for i in indices:
        obs = posterior.observe(
            context.forward,
            context.truth,
            epsilon,
            derive_seed(context.config.master_seed, i),
        )
        post = posterior.posterior_update(context.prior, context.forward, obs)
        err = spectral.dual_norm(
            spectral.coeff_vector(
                context.basis, post.mean.coeffs - context.truth.coeffs
            ),
            2.0,
        )
        rows.append((epsilon, i, err))
    return rows


def _run_rates(context: ExperimentContext, workers: int):
    config = context.config
    text = _config_text(config)
    rows: list[tuple] = []
    payloads = [
        (text, eps, list(chunk))
        for eps in config.epsilons
        for chunk in _chunks(config.n_replicates, max(workers, 1))
    ]
    if workers <= 1:
        for payload in payloads:
            rows.extend(_rates_chunk(payload))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk_rows in pool.map(_rates_chunk, payloads):
                rows.extend(chunk_rows)
    mean_errors = []
    for eps in config.epsilons:
        errs = [r[2] for r in rows if r[0] == eps]
        mean_errors.append(float(np.mean(errs)))
    t_order = 2.0 if config.operator_kind == "bvp" else config.operator_t
    predicted = priors.predict_rate(t_order, config.prior_r, config.truth_alpha, 1)
    fit = bvm.rate_fit(config.epsilons, mean_errors, predicted.exponent)
    extra = [
        ("rate_slope", format(fit.slope, ".17g")),
        ("rate_r_squared", format(fit.r_squared, ".17g")),
        ("rate_predicted_exponent", format(fit.predicted_exponent, ".17g")),
        ("rate_binding_branch", predicted.which.value),
    ]
    return ("epsilon", "replicate", "dual_error"), rows, extra


def _run_tightness(context: ExperimentContext):
    config = context.config
    op_l = context.diff_op
    if op_l is None:
        raise ConfigurationError("tightness needs the elliptic differential operator")
    result = bvm.tightness_series(op_l, config.tightness_beta, config.tightness_max_modes)
    rows = [(j + 1, s) for j, s in enumerate(result.partial_sums)]
    return ("modes", "partial_sum"), rows, [("tightness_verdict", result.verdict.value)]


def _run_concentration(context: ExperimentContext):
    config = context.config
    rows = []
    for k, delta in enumerate(config.concentration_deltas):
        query = priors.ConcentrationQuery(
            f_dagger=context.truth,
            delta=delta,
            ambient_exponent=config.concentration_ambient,
            mc_samples=config.concentration_mc_samples,
            seed=derive_seed(config.master_seed, k),
        )
        value = priors.concentration_fn(context.prior, query)
        rows.append((delta, value.approx_term, value.smallball_term, value.phi))
    return ("delta", "approx_term", "smallball_term", "phi"), rows


_CONJUGACY_FAMILIES = ("bvp", "psido", "heat")


def _run_conjugacy(context: ExperimentContext):
    config = context.config
    interval = context.basis
    if interval.kind is not spectral.BasisKind.DIRICHLET_SINE:
        interval = spectral.build_basis(
            spectral.BasisKind.DIRICHLET_SINE, config.n_modes, config.oversample
        )
    torus_modes = config.n_modes if config.n_modes % 2 == 1 else config.n_modes + 1
    torus = spectral.build_basis(
        spectral.BasisKind.FOURIER_TORUS, torus_modes, config.oversample
    )
    constant = operators.EllipticCoefficient(lambda x: np.ones_like(x))
    family_ops = {
        "bvp": operators.elliptic_operator(constant, interval)[1],
        "psido": operators.psido_multiplier(torus, config.operator_t),
        "heat": operators.heat_semigroup(interval, config.operator_time),
    }
    rows = []
    worst = 0.0
    for i in range(config.n_replicates):
        family = _CONJUGACY_FAMILIES[i % len(_CONJUGACY_FAMILIES)]
        op = family_ops[family]
        rng = np.random.default_rng(derive_seed(config.master_seed, i))
        r = 0.8 + 1.4 * rng.random()
        amplitude = 0.5 + 1.5 * rng.random()
        epsilon = 10.0 ** rng.uniform(-3, -1)
        prior = priors.matern_prior(op.basis, r, amplitude)
        truth = spectral.sobolev_draw(op.basis, 1.5, derive_seed(config.master_seed, 2**32 + i))
        obs = posterior.observe(
            op, truth, epsilon, derive_seed(config.master_seed, 2**33 + i)
        )
        mean = posterior.posterior_update(prior, op, obs).mean
        tik = posterior.tikhonov_solve(prior, op, obs)
        gap = float(
            np.linalg.norm(tik.coeffs - mean.coeffs)
            / max(np.linalg.norm(mean.coeffs), np.finfo(float).tiny)
        )
        worst = max(worst, gap)
        rows.append((i, family, epsilon, gap))
    if worst > 1e-8:
        raise NumericalError(
            f"Tikhonov minimiser and posterior mean disagree by {worst:.3g} (> 1e-8)"
        )
    return ("index", "family", "epsilon", "rel_distance"), rows


def run_command(config: ExperimentConfig, workers: int = 1) -> int:
    """Execute the configured experiment, write its CSV, and return an exit status."""
    try:
        context = build_context(config)
        extra_metadata: list[tuple[str, str]] = []
        if config.experiment == "coverage":
            header, rows = _run_coverage(context, workers)
        elif config.experiment == "rates":
            header, rows, extra_metadata = _run_rates(context, workers)
        elif config.experiment == "tightness":
            header, rows, extra_metadata = _run_tightness(context)
        elif config.experiment == "concentration":
            header, rows = _run_concentration(context)
        else:
            header, rows = _run_conjugacy(context)
        metadata = _base_metadata(context) + extra_metadata
        emit_csv((header, rows), config.output_path, metadata)
    except BvmlabError as exc:
        for err_type, code in _EXIT_CODES:
            if isinstance(exc, err_type):
                print(f"error[{code}]: {exc}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")
    except OSError as exc:
        print(f"error[1]: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bvmlab",
        description="Gaussian-prior inverse problem experiments with frequentist scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute an experiment configuration")
    run_parser.add_argument("config", help="path to a key=value configuration file")
    run_parser.add_argument("--workers", type=int, default=1, help="parallel worker count")
    run_parser.add_argument("--out", help="override output_path")
    run_parser.add_argument("--seed", type=int, help="override master_seed")
    validate_parser = sub.add_parser("validate", help="parse and validate a configuration")
    validate_parser.add_argument("config")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error[1]: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        config = parse_config(text)
    except ConfigurationError as exc:
        print(f"error[1]: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        for key, value in resolved_items(config):
            print(f"{key}={value}")
        return 0
    if args.out is not None:
        config.output_path = args.out
    if args.seed is not None:
        config.master_seed = args.seed
    if args.workers < 1:
        print("error[1]: --workers must be at least 1", file=sys.stderr)
        return 1
    return run_command(config, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
