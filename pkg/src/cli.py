"""
CLI de certificación de no localidad con fuentes no i.i.d.

Subcomandos:
- simulate:  genera N×K + N rondas y escribe el archivo de registros
- certify:   ejecuta el procedimiento de certificación (o lo aplica a registros)
- bounds:    imprime el ledger de bounds para --r, --I o --M/--Nprime
- decompose: muestra la forma canónica y la factorización de una desigualdad
- audit:     audita la independencia del programa frente a la fuente

Códigos de salida: 0 = aceptado/correcto, 2 = rechazado, 1 = error.

Logging: structlog a stderr; LOG_FORMAT=json para salida JSON y
LOG_LEVEL para el nivel (ambas se pueden definir en .env).

Uso:
  python -m src.cli certify --config config/simple_example.yaml
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import structlog
import yaml
from dotenv import load_dotenv

from .bell_core import (
    EmptySelectionError,
    EnumerationTooLarge,
    InequalityError,
    best_deterministic_strategy,
    decompose,
    empirical_lhs,
    subset_lhs,
)
from .bounds import ledger_from_I, ledger_from_M, ledger_from_r
from .certification import InfeasibleConfigurationError, certify_blocks, run_certification
from .config import ConfigError, ScenarioConfig, load_config, parse_inequality, set_config
from .program_policies import ProgramPolicyError, log_program_use, require_runnable
from .programs import MIN_AUDIT_SAMPLES, AuditError, apply_program, audit_program
from .quantum_sim import SettingsSampler, StateError, audit_seed, sample_indexed_block
from .records import RecordFormatError, read_records, split_blocks, write_records
from .validation import ValidationError

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2

# Tolerancia para avisar de un R declarado distinto del bound del oráculo
DECLARED_BOUND_TOL = 1e-9

KNOWN_ERRORS = (
    ValidationError,
    ConfigError,
    StateError,
    InequalityError,
    EmptySelectionError,
    EnumerationTooLarge,
    ProgramPolicyError,
    AuditError,
    InfeasibleConfigurationError,
    RecordFormatError,
    OSError,
    yaml.YAMLError,
)


def configure_logging() -> None:
    """Configura structlog sobre el logging estándar, a stderr."""
    load_dotenv()
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO),
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer() if os.getenv("LOG_FORMAT") == "json" else structlog.dev.ConsoleRenderer(),
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def _load(args: argparse.Namespace) -> ScenarioConfig:
    config = load_config(args.config, seed_override=args.seed)
    set_config(config)
    logger.info("config_loaded", path=str(args.config), scenario=config.scenario.name, master_seed=config.master_seed)
    return config


# =============================================================================
# Subcomandos
# =============================================================================

def cmd_simulate(args: argparse.Namespace) -> int:
    """Genera el bloque inicial y K bloques, los escribe y resume el primero."""
    config = _load(args)
    cert = config.certification
    require_runnable(config.program, config.allow_unsafe)
    total_blocks = cert.total_blocks_K if args.blocks is None else args.blocks
    if total_blocks < 0:
        raise ValidationError(param="blocks", message="--blocks no puede ser negativo", expected=">= 0", received=total_blocks)

    decomposition = decompose(config.inequality)
    sampler = SettingsSampler(config.inequality.settings_dist)
    blocks = [
        sample_indexed_block(config.source, sampler, cert.block_length_N, cert.master_seed, index, decomposition)
        for index in range(total_blocks + 1)
    ]

    out = args.out or config.output.records or Path("records.txt")
    rounds = write_records(out, blocks)

    first = blocks[0]
    lhs = empirical_lhs(first)
    print(f"records={out}")
    print(f"rounds={rounds}")
    print(f"N={first.n}")
    print(f"lhs={lhs:.12g}")
    print(f"lhs_per_round={lhs / first.n:.12g}")
    print(f"bound_R={config.inequality.bound_R:.12g}")

    try:
        value, n_prime = subset_lhs(first, apply_program(config.program, first.g_string))
        print(f"subset_lhs={value:.12g}")
        print(f"subset_N_prime={n_prime}")
        print(f"subset_lhs_per_round={value / n_prime:.12g}")
    except (EmptySelectionError, ValidationError) as exc:
        print(f"subset_lhs=n/a ({exc})")

    log_program_use(config.program, "simulate", params={"N": first.n, "blocks": total_blocks + 1})
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    """Ejecuta la certificación; 0 aceptado, 2 rechazado."""
    config = _load(args)

    if args.records:
        table = read_records(args.records)
        initial, blocks = split_blocks(table, config.certification.block_length_N, decompose(config.inequality))
        report = certify_blocks(initial, blocks, config.program, config.inequality, config.certification)
    else:
        report = run_certification(config.source, config.program, config.inequality, config.certification)

    text = report.to_yaml()
    out = args.out or config.output.report
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("report_written", path=str(out))
    print(text, end="")
    print(f"verdict={'accepted' if report.accepted else 'rejected'}")
    return report.exit_code


def cmd_bounds(args: argparse.Namespace) -> int:
    """Imprime el ledger de bounds para el modo elegido."""
    if args.M is not None:
        if args.Nprime is None:
            raise ValidationError(param="Nprime", message="--M requiere --Nprime", expected="entero >= 1")
        ledger = ledger_from_M(args.M, args.Nprime)
    elif args.I is not None:
        ledger = ledger_from_I(args.I)
    else:
        ledger = ledger_from_r(args.r)

    print(ledger.render_text())
    print()
    print(ledger.render_key_values())
    return EXIT_OK


def _format_table(title: str, table) -> list[str]:
    lines = [f"{title}:", "  x y a b  value"]
    for x, y, a, b in itertools.product(*(range(n) for n in table.shape)):
        lines.append(f"  {x} {y} {a} {b}  {float(table[x, y, a, b]):.12g}")
    return lines


def cmd_decompose(args: argparse.Namespace) -> int:
    """Muestra α canónica, R, C, G y el bound local por fuerza bruta."""
    path = Path(args.inequality)
    if not path.exists():
        raise ConfigError(message="archivo de desigualdad no encontrado", details=str(path))
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    ineq = parse_inequality(data, path.parent)
    decomposition = decompose(ineq)
    oracle, strategy = best_deterministic_strategy(ineq)

    lines = [f"inequality={ineq.name or 'custom'}", f"scenario={ineq.scenario.shape}", f"R={ineq.bound_R:.12g}"]
    lines += _format_table("alpha", ineq.alpha)
    lines += _format_table("C", decomposition.c_table)
    lines += _format_table("G", decomposition.g_table)
    lines.append(f"lhv_bound={oracle:.12g}")
    lines.append(f"optimal_strategy=a{list(strategy.a_of_x)} b{list(strategy.b_of_y)}")
    print("\n".join(lines))

    if abs(oracle - ineq.bound_R) > DECLARED_BOUND_TOL:
        logger.warning("declared_bound_mismatch", declared=ineq.bound_R, oracle=oracle)
        print(f"WARNING: R declarado {ineq.bound_R:.12g} distinto del bound local {oracle:.12g}")
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    """Audita la independencia del programa; 0 si pasa, 2 si falla."""
    config = _load(args)
    require_runnable(config.program, config.allow_unsafe)
    runs = args.runs or max(config.certification.audit_runs, MIN_AUDIT_SAMPLES)
    decomposition = decompose(config.inequality)
    sampler = SettingsSampler(config.inequality.settings_dist)

    report = audit_program(
        config.program,
        config.source,
        sampler,
        config.certification.block_length_N,
        runs,
        audit_seed(config.master_seed),
        decomposition,
    )
    print(yaml.safe_dump(report.to_dict(), sort_keys=False), end="")
    return EXIT_OK if report.passed else EXIT_REJECTED


# =============================================================================
# Punto de entrada
# =============================================================================

def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="Archivo YAML del escenario")
    parser.add_argument("--seed", type=int, default=None, help="Sobreescribe master_seed (entero de 64 bits)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonloc",
        description="Certificación de no localidad de Bell con fuentes no i.i.d.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Genera registros de rondas")
    _add_config_args(simulate)
    simulate.add_argument("--out", type=Path, default=None, help="Archivo de registros")
    simulate.add_argument("--blocks", type=int, default=None, help="Número K de bloques tras el inicial")
    simulate.set_defaults(handler=cmd_simulate)

    certify = sub.add_parser("certify", help="Ejecuta la certificación")
    _add_config_args(certify)
    certify.add_argument("--out", type=Path, default=None, help="Archivo del reporte YAML")
    certify.add_argument("--records", type=Path, default=None, help="Certifica un archivo de registros")
    certify.set_defaults(handler=cmd_certify)

    bounds = sub.add_parser("bounds", help="Ledger de bounds con settings correlacionados")
    mode = bounds.add_mutually_exclusive_group(required=True)
    mode.add_argument("--r", type=float, help="Probabilidad mínima de settings r ∈ [0, 1/4]")
    mode.add_argument("--I", type=float, help="Información sobre los settings (bits por ronda)")
    mode.add_argument("--M", type=float, help="Complejidad del d-string (bits); requiere --Nprime")
    bounds.add_argument("--Nprime", type=int, default=None, help="Rondas seleccionadas N′")
    bounds.set_defaults(handler=cmd_bounds)

    decompose_parser = sub.add_parser("decompose", help="Factoriza una desigualdad")
    decompose_parser.add_argument("inequality", type=Path, help="Archivo YAML de la desigualdad")
    decompose_parser.set_defaults(handler=cmd_decompose)

    audit = sub.add_parser("audit", help="Auditoría de independencia del programa")
    _add_config_args(audit)
    audit.add_argument("--runs", type=int, default=None, help="Ejecuciones pareadas (>= 100)")
    audit.set_defaults(handler=cmd_audit)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Punto de entrada principal del CLI."""
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        return args.handler(args)
    except KNOWN_ERRORS as exc:
        logger.error("command_failed", command=args.command, error=str(exc), error_type=type(exc).__name__)
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
