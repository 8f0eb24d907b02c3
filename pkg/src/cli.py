#!/usr/bin/env python3
"""
CLI Module
Handles command-line argument parsing and configuration
"""

import os
import argparse
from dotenv import load_dotenv
from typing import Optional, Sequence

# Load environment variables from .env file
load_dotenv()

DEFAULT_OUT_DIR = os.getenv('FEMBEM_OUT_DIR', 'results')
COMPARE_PRESETS = ["nu_study", "space_study", "osrc_prec", "ilu_study", "permutation_study"]


def _common_parent() -> argparse.ArgumentParser:
    """Flags shared by every subcommand, with defaults from the environment."""
    default_config = os.getenv('FEMBEM_CONFIG')
    default_cache = os.getenv('FEMBEM_CACHE_DIR', '.operator_cache')
    default_threads = int(os.getenv('FEMBEM_THREADS', '1'))

    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', '-c', type=str, default=default_config,
                        help=f'Path to JSON run configuration (default: {default_config or "built-in defaults"})')
    parent.add_argument('--out', '-o', type=str, default=None,
                        help=f'Output directory (default: output.directory of the config, else {DEFAULT_OUT_DIR})')
    parent.add_argument('--force', action='store_true',
                        help='Assemble systems above the desk-scale unknown guard')
    parent.add_argument('--threads', type=int, default=default_threads,
                        help=f'Concurrent sweep entries (default: {default_threads})')
    parent.add_argument('--cache-dir', type=str, default=default_cache,
                        help=f'Directory for cached boundary operators (default: {default_cache})')
    parent.add_argument('--clear-cache', action='store_true',
                        help='Clear the operator cache before running')
    parent.add_argument('--verbose', '-v', action='store_true',
                        help='Log at DEBUG level')
    return parent


def parse_arguments(argv: Optional[Sequence[str]] = None):
    """
    Parse command-line arguments of the FEM-BEM benchmark.

    Args:
        argv (Sequence[str]): Arguments without the program name; sys.argv when None

    Returns:
        argparse.Namespace: Parsed arguments containing:
            - command: solve, sweep, compare, mesh-info or selftest
            - config: Path to the run configuration (optional)
            - out: Output directory (None defers to the configuration)
            - force: Skip the desk-scale guard
            - threads: Concurrent sweep entries
            - cache_dir: Operator cache directory
            - clear_cache: Clear the cache before running
            - verbose: DEBUG logging
            - preset: Comparison preset (compare only)
            - msh: External mesh file (mesh-info only)
    """
    parent = _common_parent()
    parser = argparse.ArgumentParser(
        description="FEM-BEM transmission benchmarks: single solves, wavenumber sweeps and preconditioner studies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python3 src/bench_cli.py solve
  python3 src/bench_cli.py solve --config docs/run_config.json --out results/cube
  python3 src/bench_cli.py sweep --config docs/run_config.json --threads 4
  python3 src/bench_cli.py compare --preset ilu_study
  python3 src/bench_cli.py mesh-info --msh scatterer.msh
  python3 src/bench_cli.py selftest
        """
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('solve', parents=[parent], help='Assemble and solve every grid entry at wave.k_ext')
    subparsers.add_parser('sweep', parents=[parent], help='Sweep the grid over the configured wavenumbers')
    compare = subparsers.add_parser('compare', parents=[parent], help='Run a preconditioning/formulation study')
    compare.add_argument('--preset', '-p', type=str, required=True, choices=COMPARE_PRESETS,
                         help='Comparison study to run')
    mesh_info = subparsers.add_parser('mesh-info', parents=[parent], help='Print mesh counts and sizes')
    mesh_info.add_argument('--msh', type=str, default=None,
                           help='External Gmsh MSH 2.2 file instead of the configured geometry')
    subparsers.add_parser('selftest', parents=[parent], help='Check numerical defaults and fast invariants')

    return parser.parse_args(argv)
