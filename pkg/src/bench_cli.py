#!/usr/bin/env python3
"""
FEM-BEM Benchmark Runner
Main orchestration script for single solves, wavenumber sweeps, preconditioner
studies, mesh inspection and the self test

Each grid entry of the run configuration is assembled on the configured
geometry, solved by GMRES or the direct solver, and reported as one CSV row.
"""

import sys
import time
import shutil
import logging
import numpy as np
import pandas as pd
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from cli import DEFAULT_OUT_DIR, parse_arguments
from errors import ConfigError, FemBemError, ScaleGuardError
from formulations import FormulationSystem, build_standard, build_stabilised, build_symmetric
from linsolve import SolveReport, condition_number, gmres, solve_system
from mesh import Mesh, build_cube_mesh, import_msh, mesh_summary
from operator_cache import OperatorCache
from osrc import DEFAULT_BRANCH_ANGLE, DEFAULT_PADE_ORDER, default_damping, evaluate_pade_sqrt
from postprocess import (create_results_table, relative_error, report_row, sample_plane, surface_trace,
                         write_outputs)
from problem_setup import cube_resonance_wavenumbers, plane_wave_field
from run_config import (GridEntry, RunConfig, build_geometry, build_materials, build_wave, compare_preset,
                        get_default_config, load_run_config)
from sweep_summary import print_sweep_summary

logger = logging.getLogger(__name__)

DESK_GUARD = 9000
RESONANCE_RATIO = 10.0
BASELINE_K = 10.0


def configure_logging(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def count_unknowns(mesh: Mesh, entry: GridEntry) -> int:
    """Number of unknowns the entry's system would have on the mesh."""
    total = 0
    for d in mesh.domain_ids:
        surface = mesh.surface(d)
        total += len(mesh.volume_nodes(d))
        total += surface.n_triangles if entry.theta_space == "P0" else surface.n_nodes
        if entry.formulation == "stabilised":
            total += surface.n_nodes
    return total


def check_scale(mesh: Mesh, entry: GridEntry, force: bool = False):
    """
    Raises:
        ScaleGuardError: Above the desk guard unless forced
    """
    n = count_unknowns(mesh, entry)
    if n > DESK_GUARD and not force:
        raise ScaleGuardError(f"{entry.name()} has {n} unknowns, above the desk guard of {DESK_GUARD}; "
                              f"use --force to assemble anyway")


def assemble_entry(config: RunConfig, mesh: Mesh, entry: GridEntry, k: float,
                   cache: Optional[OperatorCache] = None) -> FormulationSystem:
    """Build the formulation system of one grid entry at wavenumber k."""
    materials = build_materials(config.materials, k, mesh.domain_ids)
    wave = build_wave(config.wave, k)
    osrc_options = config.osrc.model_dump()
    if entry.formulation == "standard":
        return build_standard(mesh, materials, wave, entry.theta_space, config.quadrature, cache, osrc_options)
    if entry.formulation == "symmetric":
        return build_symmetric(mesh, materials, wave, entry.theta_space, config.quadrature, cache, osrc_options)
    return build_stabilised(mesh, materials, wave, regulariser=entry.regulariser, eta=entry.eta, nu=entry.nu,
                            variant=entry.variant, theta_space=entry.theta_space, kappa=entry.kappa,
                            quadrature=config.quadrature, cache=cache, osrc_options=osrc_options)


def run_entry(config: RunConfig, mesh: Mesh, entry: GridEntry, k: float, cache: Optional[OperatorCache] = None,
              force: bool = False) -> Tuple[FormulationSystem, np.ndarray, SolveReport]:
    """Assemble and solve one grid entry; the report metadata carries the entry name."""
    check_scale(mesh, entry, force)
    start = time.time()
    system = assemble_entry(config, mesh, entry, k, cache)
    x, report = solve_system(system, method=entry.method, recipe=entry.effective_recipe(),
                             tol=config.solver.tol, max_iter=config.solver.max_iter,
                             drop_tol=config.solver.drop_tol, with_condition=config.compute_condition)
    report.metadata["entry"] = entry.name()
    report.metadata["assembly_time_s"] = time.time() - start - report.wall_time_s
    if entry.label:
        report.metadata["preconditioner"] = entry.label
    return system, x, report


def failed_row(entry: GridEntry, k: float, error: Exception) -> Dict:
    """CSV record of an entry that could not be assembled or solved."""
    logger.warning(f"{entry.name()} at k={k} failed: {error}")
    return {"k": k, "formulation": entry.formulation, "variant": entry.variant if entry.formulation == "stabilised" else "",
            "preconditioner": entry.label or "none", "iterations": -1, "condition_number": None, "wall_time_s": 0.0}


def resonance_check(config: RunConfig, mesh: Mesh, entry: GridEntry, k: float, cond: Optional[float],
                    cache: Optional[OperatorCache] = None) -> Optional[float]:
    """
    Compare the condition number with the off-resonance baseline at k = 10.

    Returns:
        float: Ratio to the baseline, None when not applicable
    """
    if cond is None or entry.formulation == "stabilised" or np.isclose(k, BASELINE_K):
        return None
    baseline = condition_number(assemble_entry(config, mesh, entry, BASELINE_K, cache))
    ratio = cond / baseline
    if ratio >= RESONANCE_RATIO:
        logger.warning(f"{entry.name()} at k={k}: condition number {cond:.3e} is {ratio:.1f}x the k={BASELINE_K} value")
        print(f"Warning: {entry.name()} is {ratio:.1f}x worse conditioned than at k={BASELINE_K} "
              f"(near an interior resonance)")
    return ratio


def cmd_solve(config: RunConfig, out_dir: str, force: bool = False,
              cache: Optional[OperatorCache] = None) -> List[SolveReport]:
    """
    Solve every grid entry at wave.k_ext and write the field slice, surface trace and report.

    Returns:
        List[SolveReport]: One report per grid entry
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_geometry(config.geometry)
    k = config.wave.k_ext
    reports = []

    print("Solving grid entries...")
    print("-" * 80)
    for index, entry in enumerate(config.grid):
        system, x, report = run_entry(config, mesh, entry, k, cache, force)
        reports.append(report)
        status = "converged" if report.converged else "NOT converged"
        print(f"✓ {entry.name():<45} k={k:<8g} iterations: {report.iterations:>4} ({status}) "
              f"time: {report.wall_time_s:.2f}s")

        deviations = []
        for d in system.contexts:
            trace = surface_trace(system, x, d)
            incident = plane_wave_field(system.wave, trace.surface.points)
            if np.linalg.norm(incident) > 0:
                deviations.append(relative_error(trace.values, incident))
            if config.output.write_surface and config.output.write_vtk:
                write_outputs(trace, out / f"surface_{index}_domain{d}.vtk")
        if deviations:
            report.metadata["incident_deviation"] = max(deviations)
            print(f"  Relative deviation of the surface trace from the incident field: {max(deviations):.4f}")
        if report.condition_number is not None:
            print(f"  Condition number: {report.condition_number:.4e}")
            report.metadata["resonance_ratio"] = resonance_check(config, mesh, entry, k,
                                                                 report.condition_number, cache)

        if config.output.write_vtk:
            plane = sample_plane(system, x, config.output.plane_origin, config.output.plane_axis_u,
                                 config.output.plane_axis_v, config.output.resolution)
            interior = plane.values[plane.mask == 1]
            if interior.size:
                report.metadata["interior_max_amplitude"] = float(np.abs(interior).max())
            path = write_outputs(plane, out / f"field_{index}.vtk")
            print(f"  ✓ Field slice saved to: {path}")

    path = write_outputs(reports, out / "solve_report.csv")
    print(f"\n✓ Report saved to: {path}")
    return reports


def _run_rows(config: RunConfig, mesh: Mesh, wavenumbers: List[float], force: bool,
              cache: Optional[OperatorCache], threads: int) -> Tuple[List[Dict], int]:
    """One row per (k, grid entry) in config order; failures are recorded, not raised."""
    jobs = [(k, entry) for k in wavenumbers for entry in config.grid]

    def run(job):
        k, entry = job
        try:
            _, _, report = run_entry(config, mesh, entry, k, cache, force)
            row = report_row(report)
            row["variant"] = row["variant"] or ""
            print(f"✓ k={k:<8g} {entry.name():<45} iterations: {report.iterations:>4}")
            return row, False
        except (FemBemError, np.linalg.LinAlgError) as e:
            return failed_row(entry, k, e), True

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]
    rows = [row for row, _ in outcomes]
    return rows, sum(failed for _, failed in outcomes)


def write_resonance_table(path: Path, max_k: float) -> Path:
    """Side table of cube interior resonances up to max_k."""
    table = pd.DataFrame({"k_resonance": cube_resonance_wavenumbers(max_k)}, columns=["k_resonance"])
    table.to_csv(path, index=False)
    return path


def cmd_sweep(config: RunConfig, out_dir: str, force: bool = False, cache: Optional[OperatorCache] = None,
              threads: int = 1, name: str = "sweep") -> Tuple[List[Dict], int]:
    """
    Run every grid entry at every configured wavenumber.

    Returns:
        Tuple[List[Dict], int]: CSV records and number of failed rows
    """
    wavenumbers = config.sweep.wavenumbers()
    if not wavenumbers:
        raise ConfigError("the sweep has no wavenumbers (set sweep.k_values, k_range or preset)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_geometry(config.geometry)

    print(f"Sweeping {len(config.grid)} grid entries over {len(wavenumbers)} wavenumbers...")
    print("-" * 80)
    rows, failures = _run_rows(config, mesh, wavenumbers, force, cache, threads)

    path = write_outputs(rows, out / f"{name}.csv")
    print(f"\n✓ Results saved to: {path}")
    side = write_resonance_table(out / f"{name}_resonances.csv", max(wavenumbers))
    print(f"✓ Resonance table saved to: {side}")
    return rows, failures


def cmd_compare(config: RunConfig, preset: str, out_dir: str, force: bool = False,
                cache: Optional[OperatorCache] = None, threads: int = 1) -> Tuple[List[Dict], int]:
    """Run a comparison preset at the configured wavenumbers (wave.k_ext if none are given)."""
    grid = compare_preset(preset)
    sweep = config.sweep if config.sweep.wavenumbers() else config.sweep.model_copy(
        update={"k_values": [config.wave.k_ext]})
    study = config.model_copy(update={"grid": grid, "sweep": sweep})
    return cmd_sweep(study, out_dir, force, cache, threads, name=f"compare_{preset}")


def cmd_mesh_info(config: RunConfig, msh: Optional[str] = None) -> Dict:
    """Print and return the mesh summary of the configured geometry or an MSH file."""
    mesh = import_msh(msh) if msh else build_geometry(config.geometry)
    summary = mesh_summary(mesh)
    print(f"Vertices:          {summary['vertices']}")
    print(f"Tetrahedra:        {summary['tetrahedra']}")
    print(f"Max tet diameter:  {summary['max_tet_diameter']:.6f}")
    for info in summary["domains"]:
        print(f"\nDomain {info['domain']}:")
        print(f"  Volume P1 dofs:       {info['volume_dofs']}")
        print(f"  Surface P1 dofs:      {info['surface_p1_dofs']}")
        print(f"  Surface P0 dofs:      {info['surface_p0_dofs']}")
        print(f"  Max surface diameter: {info['max_surface_diameter']:.6f}")
    return summary


def pade_relative_error(z_max: float, samples: int = 201) -> float:
    """Largest relative error of the default rotated Pade square root against sqrt(1 + z) on [0, z_max]."""
    z = np.linspace(0.0, z_max, samples)
    exact = np.sqrt(1.0 + z)
    return float(np.max(np.abs(evaluate_pade_sqrt(z, DEFAULT_PADE_ORDER, DEFAULT_BRANCH_ANGLE) - exact) / exact))


def selftest_checks() -> List[Tuple[str, Callable[[], bool]]]:
    """Named checks run by the selftest command; each returns True on success."""

    def defaults():
        config = get_default_config()
        return (config.solver.tol == 1e-5 and config.solver.max_iter is None and config.solver.drop_tol == 1e-4
                and config.osrc.pade_order == DEFAULT_PADE_ORDER == 2
                and np.isclose(config.osrc.branch_angle, np.pi / 3) and DEFAULT_BRANCH_ANGLE == config.osrc.branch_angle
                and np.isclose(default_damping(8.0, 0.5), 0.4 * 4.0 ** (-2.0 / 3.0)))

    def cube_dofs():
        mesh = build_cube_mesh(13)
        surface = mesh.surface(1)
        return (len(mesh.volume_nodes(1)), surface.n_nodes, surface.n_triangles) == (2744, 1016, 2028)

    def pade():
        return pade_relative_error(3.0) < 0.05

    def block_action():
        mesh = build_cube_mesh(2)
        config = get_default_config()
        system = assemble_entry(config, mesh, GridEntry(), 2.0)
        rng = np.random.default_rng(0)
        v = rng.standard_normal(system.n_unknowns) + 1j * rng.standard_normal(system.n_unknowns)
        dense = system.lhs.to_dense() @ v
        return np.linalg.norm(system.lhs.matvec(v) - dense) <= 1e-10 * np.linalg.norm(dense)

    def gmres_exact():
        x, report = gmres(np.diag([1.0, 2.0]), np.array([1.0, 1.0]), tol=1e-12)
        return report.iterations <= 2 and np.allclose(x, [1.0, 0.5])

    return [("numerical defaults", defaults), ("cube(13) dof counts 2744/1016/2028", cube_dofs),
            ("Pade square root within 5% on [0, 3]", pade), ("block action equals dense action", block_action),
            ("GMRES exact termination", gmres_exact)]


def cmd_selftest() -> bool:
    """Run the self checks, printing one line per check."""
    ok = True
    for name, check in selftest_checks():
        try:
            passed = bool(check())
            message = ""
        except Exception as e:
            passed, message = False, f": {e}"
        ok &= passed
        print(f"{'✓' if passed else '✗'} {name}{message}")
    print(f"  Pade max relative error on [0, 10]: {pade_relative_error(10.0):.1%} (informational)")
    return ok


def resolve_config(config_path: Optional[str]) -> RunConfig:
    """Configured file, or the built-in defaults when none is given or it cannot be read."""
    if config_path:
        config = load_run_config(config_path)
        if config is None:
            print("Falling back to default configuration...")
            return get_default_config()
        return config
    print("Using default configuration")
    return get_default_config()


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point.

    Returns:
        int: 0 on success, 2 when sweep rows failed, 1 on configuration errors
    """
    args = parse_arguments(argv)
    configure_logging(args.verbose)

    if args.clear_cache:
        cache_path = Path(args.cache_dir)
        if cache_path.exists():
            shutil.rmtree(cache_path)
            print(f"✓ Cleared cache directory: {args.cache_dir}\n")

    print("=" * 80)
    print(f"FEM-BEM TRANSMISSION BENCHMARK: {args.command.upper()}")
    print("=" * 80)

    if args.command == "selftest":
        ok = cmd_selftest()
        print("\n" + "=" * 80)
        print("✓ SELFTEST PASSED" if ok else "✗ SELFTEST FAILED")
        print("=" * 80)
        return 0 if ok else 1

    try:
        config = resolve_config(args.config)
        out_dir = args.out or config.output.directory or DEFAULT_OUT_DIR
        if args.command == "mesh-info":
            cmd_mesh_info(config, args.msh)
            return 0

        cache = OperatorCache(args.cache_dir)
        if args.command == "solve":
            reports = cmd_solve(config, out_dir, args.force, cache)
            print("\n" + "=" * 80)
            print("RESULTS TABLE")
            print("=" * 80)
            print(create_results_table(reports).to_string(index=False))
            failures = 0
        elif args.command == "sweep":
            rows, failures = cmd_sweep(config, out_dir, args.force, cache, args.threads)
            print_sweep_summary(rows)
        else:
            rows, failures = cmd_compare(config, args.preset, out_dir, args.force, cache, args.threads)
            print("\n" + "=" * 80)
            print("RESULTS TABLE")
            print("=" * 80)
            print(create_results_table(rows).to_string(index=False))
            print_sweep_summary(rows)
    except (ConfigError, ScaleGuardError) as e:
        print(f"Error: {e}")
        return 1
    except FemBemError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}")
        return 1

    print(f"\n✓ Operator cache: {cache.hits} hits, {cache.misses} assembled")
    print("\n" + "=" * 80)
    print("✓ BENCHMARK COMPLETE" if failures == 0 else f"BENCHMARK FINISHED WITH {failures} FAILED ROWS")
    print("=" * 80)
    return 0 if failures == 0 else 2


if __name__ == "__main__":
    sys.exit(main())
