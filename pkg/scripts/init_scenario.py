#!/usr/bin/env python
"""
Script de inicialización para crear un nuevo escenario de certificación.

Escribe un scenario.yaml listo para ejecutar (valores del ejemplo de la
fuente alternante) y el archivo de la desigualdad CHSH en un directorio.

Uso:
  python -m scripts.init_scenario \
    --name "mi_escenario" \
    --seed 12345 \
    --output-dir scenarios/mi_escenario
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import yaml

from src.bell_core import chsh_game_inequality
from src.certification import CertificationConfig
from src.config import inequality_to_dict

TEMPLATE_SCENARIO_YAML = '''# =============================================================================
# {name} - Escenario de certificación
# =============================================================================
# Ver config/scenario.example.yaml para todas las opciones.

master_seed: {seed}

scenario:
  name: "{name}"
  description: "{description}"

inequality:
  file: "inequalities/chsh_game.yaml"

source:
  variant: "periodic_quantum"
  states: ["psi_plus", "psi_plus_complement"]
  measurements: "tsirelson"

program:
  variant: "periodic"
  period: 2
  phase: 1

certification:
  N: {block_length}
  K: {total_blocks}
  k: {sampled_blocks}
  r0: 0.05
  epsilon: 0.02
  workers: 1
  audit_runs: 0

output:
  records: "records.txt"
  report: "report.yaml"
'''


def create_scenario_yaml(
    name: str,
    seed: int,
    output_dir: Path,
    block_length: int = 1000,
    total_blocks: int = 100,
    sampled_blocks: Optional[int] = None,
    description: str = "",
) -> Path:
    """Crea el archivo scenario.yaml."""
    content = TEMPLATE_SCENARIO_YAML.format(
        name=name,
        seed=seed,
        description=description or f"Escenario {name}",
        block_length=block_length,
        total_blocks=total_blocks,
        sampled_blocks=sampled_blocks or CertificationConfig.recommended_k(total_blocks),
    )

    output_path = output_dir / "scenario.yaml"
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(content, encoding="utf-8")
    return output_path


def create_inequality_file(output_dir: Path) -> Path:
    """Crea inequalities/chsh_game.yaml (forma inline)."""
    output_path = output_dir / "inequalities" / "chsh_game.yaml"
    if output_path.exists():
        print(f"  ⚠ {output_path} ya existe, no se sobrescribirá")
        return output_path

    output_path.parent.mkdir(parents=True, exist_ok=True)
    data = inequality_to_dict(chsh_game_inequality())
    output_path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return output_path


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Inicializa un nuevo escenario de certificación"
    )
    parser.add_argument(
        "--name",
        required=True,
        help="Nombre del escenario (letras, números, guiones y guiones bajos)",
    )
    parser.add_argument(
        "--seed",
        required=True,
        type=int,
        help="Semilla maestra (entero de 64 bits sin signo)",
    )
    parser.add_argument(
        "--output-dir",
        default=".",
        type=Path,
        help="Directorio de salida (default: directorio actual)",
    )
    parser.add_argument("--N", type=int, default=1000, help="Longitud de bloque")
    parser.add_argument("--K", type=int, default=100, help="Bloques tras el inicial")
    parser.add_argument("--k", type=int, default=None, help="Bloques testeados (default: ⌈√K⌉)")
    return parser.parse_args(argv)


def main(argv: Optional[list[str]] = None) -> int:
    args = parse_args(argv)

    # Validar nombre
    if not args.name.replace("_", "").replace("-", "").isalnum():
        print(
            f"Error: El nombre '{args.name}' contiene caracteres inválidos.\n"
            "Use solo letras, números, guiones y guiones bajos.",
            file=sys.stderr,
        )
        return 1

    if not 0 <= args.seed < 2**64:
        print("Error: la semilla debe estar en [0, 2**64).", file=sys.stderr)
        return 1

    print(f"\n🚀 Inicializando escenario {args.name}\n")

    output_dir = args.output_dir.resolve()

    print("📝 Creando inequalities/chsh_game.yaml...")
    inequality_path = create_inequality_file(output_dir)
    print(f"  ✓ {inequality_path}")

    print("📝 Creando scenario.yaml...")
    scenario_path = create_scenario_yaml(
        name=args.name,
        seed=args.seed,
        output_dir=output_dir,
        block_length=args.N,
        total_blocks=args.K,
        sampled_blocks=args.k,
    )
    print(f"  ✓ {scenario_path}")

    print(f"""
✅ Escenario {args.name} inicializado correctamente!

Próximos pasos:

1. Ajusta la fuente y el programa en {scenario_path}

2. Genera registros:
   python -m src.cli simulate --config {scenario_path}

3. Certifica:
   python -m src.cli certify --config {scenario_path}
""")

    return 0


if __name__ == "__main__":
    sys.exit(main())
