"""
cbdlab CLI - command-line runner for the sparse domination experiments.

Every subcommand reads an optional TOML experiment config, runs its
computation with the configured seed and writes report.json (nested
records) and summary.csv (one row per checked inequality) to the output
directory.

Exit codes:
    0  every checked inequality holds
    1  at least one checked inequality failed
    2  the configuration could not be read or validated
    3  unexpected error

Usage:
    cbdlab verify --config configs/default.toml
    cbdlab dominate --config configs/default.toml --seed 3 --out reports/dominate
    cbdlab report reports/dominate/report.json
"""

import csv
import io
import json
import logging
import os
import re
import sys
import tempfile
import tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from pydantic import BaseModel, Field, ValidationError

from cbdlab import __version__
from cbdlab.config import settings
from cbdlab.models.experiment import SUITE_NAMES, ExperimentConfig, SymbolKind
from cbdlab.models.reports import InequalityCheck, ReportEnvelope, WeightReport
from cbdlab.services.commutators import (
    a_st_constants,
    bmo_power_check,
    build_symbols,
    default_lp_exponent,
    lp_commutator_report,
    random_symbol,
)
from cbdlab.services.domination import (
    cbd_pipeline,
    dense_weighted_fits,
    domination_checks,
    ltilde_opnorm,
    make_operator,
    weighted_opnorm_bounds,
)
from cbdlab.services.grid import GridFunction
from cbdlab.services.sparse import PairFormConfig, equivalence_report, stopping_family
from cbdlab.services.suites import config_grid, default_weight_specs, line_grid, run_suites
from cbdlab.services.weights import a2_characteristic, ainfty_matrix, ainfty_net_curve, make_weight

# Configure logging for CLI output
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s %(levelname)-8s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger(__name__)

SECTION_NAMES = {
    "grid",
    "values",
    "operator",
    "weights",
    "exponents",
    "domination",
    "commutator",
    "suite",
    "output",
}
NET_COUNTS = (8, 16, 32, 64)
# The L^p audit lifts the data to one body coordinate per symbol term
MAX_LIFT_TERMS = 3

_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_-]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")


class ConfigError(ValueError):
    """Raised when an experiment config cannot be read or validated."""


class ConfigSource(BaseModel):
    """Text of the config file, kept for line-numbered diagnostics."""

    path: Optional[str] = Field(None, description="Config path, None for the built-in defaults")
    lines: List[str] = Field(default_factory=list)

    def locate(self, loc: Sequence[Any]) -> Optional[int]:
        """Line of the key named by a pydantic error location, else its section header."""
        keys = [part for part in loc if isinstance(part, str)]
        if not keys:
            return None
        if keys[0] in SECTION_NAMES:
            section = keys[0]
            key = keys[1] if len(keys) > 1 else None
            occurrence = next((part for part in loc if isinstance(part, int)), 0)
        else:
            section, key, occurrence = None, keys[0], 0

        active = section is None
        seen = -1
        header = None
        for number, line in enumerate(self.lines, start=1):
            match = _HEADER.match(line)
            if match:
                active = False
                if match.group(1) == section:
                    seen += 1
                    if seen == occurrence:
                        active = True
                        header = number
                continue
            found = _KEY.match(line)
            if active and key is not None and found and found.group(1) == key:
                return number
        return header

    def error(self, loc: Sequence[Any], message: str) -> ConfigError:
        dotted = ".".join(str(part) for part in loc) or "<root>"
        line = self.locate(loc)
        where = self.path or "<defaults>"
        if line is not None:
            where = f"{where}:{line}"
        return ConfigError(f"{where}: {dotted}: {message}")


def load_config(path: Optional[str], seed: Optional[int] = None) -> Tuple[ExperimentConfig, ConfigSource]:
    """
    Read and validate an experiment config.

    Args:
        path: TOML file, or None for the built-in defaults
        seed: Overrides the top-level seed when given

    Returns:
        Validated config and the source used for later diagnostics

    Raises:
        ConfigError: With a path:line prefix naming the offending key
    """
    source = ConfigSource(path=path)
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config: {e}") from e
        source.lines = text.splitlines()
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: invalid TOML: {e}") from e
    if seed is not None:
        data["seed"] = seed

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        messages = [str(source.error(error["loc"], error["msg"])) for error in e.errors()]
        raise ConfigError("\n".join(messages)) from e
    logger.debug(f"Loaded config {path or '<defaults>'}: {config.model_dump(mode='json')}")
    return config, source


# ============================================================================
# Report files
# ============================================================================


def render_json(envelope: ReportEnvelope) -> str:
    return json.dumps(envelope.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def render_csv(checks: Sequence[InequalityCheck]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["anchor", "lhs", "rhs", "ratio", "pass"])
    for check in checks:
        writer.writerow(check.summary_row())
    return buffer.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    handle, temp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(temp, path)
    except BaseException:
        Path(temp).unlink(missing_ok=True)
        raise


def write_reports(envelope: ReportEnvelope, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "report.json", render_json(envelope))
    _atomic_write(out_dir / "summary.csv", render_csv(envelope.checks))
    logger.info(f"Wrote {out_dir / 'report.json'} and {out_dir / 'summary.csv'}")


# ============================================================================
# Subcommand bodies
# ============================================================================

Payload = Tuple[Dict[str, Any], List[InequalityCheck]]


def run_verify(config: ExperimentConfig, source: ConfigSource, suites: Sequence[str] = ()) -> Payload:
    results = run_suites(config, list(suites) or None)
    summaries = []
    checks: List[InequalityCheck] = []
    for result in results:
        summary = result.model_dump(mode="json", exclude={"checks"})
        summary["check_count"] = len(result.checks)
        summary["passed"] = result.passed
        summaries.append(summary)
        checks.extend(result.checks)
    return {"suites": summaries}, checks


def run_dominate(config: ExperimentConfig, source: ConfigSource) -> Payload:
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    rng = np.random.default_rng(config.seed)
    values = config.values
    f = GridFunction.random(grid, values.n, rng, m=values.m, r=values.r)
    g = GridFunction.random(grid, values.n, rng, m=values.m, r=values.r)
    report = cbd_pipeline(
        operator, f, g, config.domination.epsilon, p=config.exponents.p, q=config.exponents.q
    )
    logger.info(
        f"Domination: {len(report.family)} cubes, C_n = {report.constant_n:.6g}, "
        f"verdict ratio {report.verdict_ratio}"
    )
    return {"domination": report.model_dump(mode="json")}, domination_checks(report)


def run_weights(config: ExperimentConfig, source: ConfigSource) -> Payload:
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    rng = np.random.default_rng(config.seed)
    family = stopping_family(
        GridFunction.random(grid, 1, rng), GridFunction.random(grid, 1, rng), PairFormConfig(n=1)
    )
    n = config.values.n
    entries = []
    checks: List[InequalityCheck] = []
    for spec in config.weights or default_weight_specs(n):
        weight = make_weight(grid, spec, n=n, seed=config.seed)
        a2 = a2_characteristic(weight)
        ainfty = ainfty_matrix(weight)
        report = WeightReport(
            label=weight.label,
            kind=spec.kind.value,
            n=weight.n,
            a2=a2,
            ainfty=ainfty,
            a2_admissible=weight.a2_admissible,
            net_curve=ainfty_net_curve(weight, NET_COUNTS),
        )
        norms = weighted_opnorm_bounds(
            operator, weight, m=config.values.m, r=config.values.r, seed=config.seed
        )
        if dense_weighted_fits(grid, weight.n):
            ltilde = ltilde_opnorm(family, weight).model_dump(mode="json")
        else:
            logger.warning(f"{weight.label}: {grid.n_cells} cells x n={weight.n} too large for L-tilde")
            ltilde = None
        entries.append(
            {
                "weight": report.model_dump(mode="json"),
                "opnorm": norms.model_dump(mode="json"),
                "ltilde": ltilde,
            }
        )
        checks.append(
            InequalityCheck.compare(
                "weights.a2_at_least_one", f"1 <= [W]_A2 for {weight.label}", 1.0, a2
            )
        )
        checks.append(
            InequalityCheck.compare(
                "weights.ainfty_le_4a2",
                f"[W]_Ainf <= 4 [W]_A2 for {weight.label}",
                ainfty,
                4.0 * a2,
                exact=False,
            )
        )
    return {"weights": entries}, checks


def run_commutator(config: ExperimentConfig, source: ConfigSource) -> Payload:
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    rng = np.random.default_rng(config.seed)
    section = config.commutator
    s, t = config.exponents.s, config.exponents.t
    b = random_symbol(grid, rng, "log")

    if section.kind == SymbolKind.CUSTOM:
        raise source.error(
            ("commutator", "kind"), "custom symbols take explicit arrays and are only available from Python"
        )
    if section.kind == SymbolKind.MIXED:
        pair = build_symbols(grid, section.kind, random_symbol(grid, rng, "smooth"), b)
    elif section.kind == SymbolKind.POWER:
        pair = build_symbols(grid, section.kind, -b, alpha=section.alpha, beta=section.beta)
    else:
        pair = build_symbols(grid, section.kind, b, k=section.k)

    payload: Dict[str, Any] = {}
    if pair.terms <= MAX_LIFT_TERMS:
        p = config.exponents.lp or default_lp_exponent(s, t)
        epsilon = min(config.domination.epsilon, 0.45 / pair.terms)
        report = lp_commutator_report(operator, pair, s, t, p, epsilon=epsilon, seed=config.seed)
    else:
        logger.warning(
            f"{pair.terms} symbol terms exceed {MAX_LIFT_TERMS}; reporting A_s,t constants only"
        )
        report = a_st_constants(pair, s, t).model_copy(
            update={"lp_audit_skipped": f"{pair.terms} symbol terms exceed the lift cap of {MAX_LIFT_TERMS}"}
        )
    payload["commutator"] = report.model_dump(mode="json")
    checks = list(report.checks)

    if section.kind == SymbolKind.POWER:
        power = bmo_power_check(grid, -b, section.alpha, section.beta, s, rng=rng)
        payload["power"] = power.model_dump(mode="json")
        checks.extend(power.checks)
    return payload, checks


def run_equivalence(config: ExperimentConfig, source: ConfigSource) -> Payload:
    grid = config_grid(config)
    rng = np.random.default_rng(config.seed)
    values = config.values
    try:
        pair_config = PairFormConfig(
            p=config.exponents.p,
            q=config.exponents.q,
            n=values.n,
            delta=config.domination.delta,
            threshold=config.domination.threshold,
        )
    except ValidationError as e:
        raise source.error(("domination", "threshold"), e.errors()[0]["msg"]) from e
    f = GridFunction.random(grid, values.n, rng, m=values.m, r=values.r)
    g = GridFunction.random(grid, values.n, rng, m=values.m, r=values.r)
    report = equivalence_report(f, g, pair_config)
    return {"equivalence": report.model_dump(mode="json")}, list(report.checks)


# ============================================================================
# Command plumbing
# ============================================================================


def _execute(
    subcommand: str,
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    verbose: bool,
    body: Callable[[ExperimentConfig, ConfigSource], Payload],
) -> None:
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        config, source = load_config(config_path, seed)

        logger.info("=" * 70)
        logger.info(f"cbdlab {subcommand} - seed {config.seed}")
        logger.info("=" * 70)

        payload, checks = body(config, source)
        envelope = ReportEnvelope(
            version=settings.report_version,
            subcommand=subcommand,
            seed=config.seed,
            generated_at=datetime.now(timezone.utc),
            payload=payload,
            checks=checks,
        )
        out_dir = Path(out or config.output.dir or settings.output_dir)
        write_reports(envelope, out_dir)
        logger.info("=" * 70)

        failures = envelope.failures()
        click.echo("")
        if failures:
            click.echo(
                click.style(
                    f"✗ {len(failures)} of {len(checks)} checked inequalities failed",
                    fg="red",
                    bold=True,
                ),
                err=True,
            )
            for check in failures:
                click.echo(
                    f"    {check.anchor}: lhs={check.lhs:.6g} rhs={check.rhs:.6g} ({check.description})",
                    err=True,
                )
            sys.exit(1)

        click.echo(click.style(f"✓ {subcommand} completed successfully!", fg="green", bold=True))
        click.echo(click.style("  Summary:", fg="cyan", bold=True))
        click.echo(f"    Checked inequalities: {len(checks)}")
        click.echo(f"    Report: {out_dir / 'report.json'}")
        click.echo(f"    Summary: {out_dir / 'summary.csv'}")
        click.echo("")
        sys.exit(0)

    except ConfigError as e:
        click.echo(click.style(f"Configuration Error: {e}", fg="red", bold=True), err=True)
        sys.exit(2)
    except Exception as e:
        click.echo(click.style(f"Error: {e}", fg="red", bold=True), err=True)
        logger.exception(f"{subcommand} failed with exception:")
        sys.exit(3)


def common_options(command: Callable) -> Callable:
    """--config, --seed, --out and --verbose, shared by every experiment subcommand."""
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(dir_okay=False),
            default=None,
            help="TOML experiment config (defaults apply when omitted).",
        ),
        click.option("--seed", type=int, default=None, help="Override the config seed."),
        click.option(
            "--out",
            type=click.Path(file_okay=False),
            default=None,
            help="Output directory for report.json and summary.csv.",
        ),
        click.option("--verbose", is_flag=True, default=False, help="Enable DEBUG logging."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
@click.version_option(version=__version__, prog_name="cbdlab")
def main() -> None:
    """
    Convex-body sparse domination toolkit.

    Example usage:
        cbdlab verify --config configs/default.toml
        cbdlab dominate --seed 7 --out reports/dominate
        cbdlab commutator --config configs/default.toml
    """


@main.command()
@common_options
@click.option(
    "--suite",
    "suites",
    multiple=True,
    type=click.Choice(SUITE_NAMES),
    help="Run only this suite. Can be used multiple times (default: [suite] names).",
)
def verify(
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    verbose: bool,
    suites: Tuple[str, ...],
) -> None:
    """Run the property suites."""
    _execute(
        "verify", config_path, seed, out, verbose, lambda config, source: run_verify(config, source, suites)
    )


@main.command()
@common_options
def dominate(config_path: Optional[str], seed: Optional[int], out: Optional[str], verbose: bool) -> None:
    """Run the domination pipeline on random data."""
    _execute("dominate", config_path, seed, out, verbose, run_dominate)


@main.command()
@common_options
def weights(config_path: Optional[str], seed: Optional[int], out: Optional[str], verbose: bool) -> None:
    """Characteristics and weighted operator norms of the configured matrix weights."""
    _execute("weights", config_path, seed, out, verbose, run_weights)


@main.command()
@common_options
def commutator(config_path: Optional[str], seed: Optional[int], out: Optional[str], verbose: bool) -> None:
    """A_{s,t} constants and the two-sided L^p audit of a generalized commutator."""
    _execute("commutator", config_path, seed, out, verbose, run_commutator)


@main.command()
@common_options
def equivalence(config_path: Optional[str], seed: Optional[int], out: Optional[str], verbose: bool) -> None:
    """Compare the stopping-family sparse form with the pair maximal function."""
    _execute("equivalence", config_path, seed, out, verbose, run_equivalence)


@main.command()
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default=None,
    help="Directory for summary.csv (default: next to the report).",
)
def report(report_path: str, out: Optional[str]) -> None:
    """Re-render summary.csv from an existing report.json."""
    try:
        envelope = ReportEnvelope.model_validate_json(Path(report_path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        click.echo(click.style(f"Configuration Error: {report_path}: {e}", fg="red", bold=True), err=True)
        sys.exit(2)

    out_dir = Path(out) if out else Path(report_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "summary.csv", render_csv(envelope.checks))
    click.echo(click.style("✓ Summary re-rendered", fg="green", bold=True))
    click.echo(f"    {len(envelope.checks)} rows -> {out_dir / 'summary.csv'}")


if __name__ == "__main__":
    main()
