#!/usr/bin/env python3
"""
Sweep Summary Module
Handles aggregate reporting of wavenumber sweep and comparison results
"""

import numpy as np
from typing import Dict, List

from problem_setup import cube_resonance_wavenumbers

NEAR_RESONANCE = 0.1


def _succeeded(row: Dict) -> bool:
    return row["iterations"] is not None and row["iterations"] >= 0


def _entry_key(row: Dict) -> str:
    variant = f"/{row['variant']}" if row.get("variant") else ""
    return f"{row['formulation']}{variant} [{row['preconditioner']}]"


def summarise_rows(rows: List[Dict]) -> List[Dict]:
    """
    Per grid entry iteration statistics over the successful rows.

    Args:
        rows (List[Dict]): Sweep records with the results CSV header

    Returns:
        List[Dict]: entry, runs, failed, min/max/mean iterations and the k of the maximum
    """
    groups: Dict[str, List[Dict]] = {}
    for row in rows:
        groups.setdefault(_entry_key(row), []).append(row)

    summary = []
    for key, group in groups.items():
        ok = [r for r in group if _succeeded(r)]
        iterations = [r["iterations"] for r in ok]
        entry = {"entry": key, "runs": len(group), "failed": len(group) - len(ok)}
        if iterations:
            worst = ok[int(np.argmax(iterations))]
            entry.update({"min_iterations": min(iterations), "max_iterations": max(iterations),
                          "mean_iterations": float(np.mean(iterations)), "worst_k": worst["k"]})
        summary.append(entry)
    return summary


def print_sweep_summary(rows: List[Dict]):
    """
    Print the iteration statistics of a sweep.

    This function displays, per grid entry:
    - Min, max and mean GMRES iteration counts
    - The wavenumber of the worst count and whether it lies near a cube resonance
    - The iteration change between consecutive wavenumbers

    Args:
        rows (List[Dict]): Sweep records with the results CSV header
    """
    print("\n" + "=" * 80)
    print("SWEEP SUMMARY")
    print("=" * 80)
    if not rows:
        print("No results")
        return

    resonances = np.asarray(cube_resonance_wavenumbers(max(r["k"] for r in rows) + 1.0))
    for entry in summarise_rows(rows):
        print(f"\n{entry['entry']}: {entry['runs']} runs, {entry['failed']} failed")
        if "max_iterations" not in entry:
            continue
        near = len(resonances) and np.abs(resonances - entry["worst_k"]).min() <= NEAR_RESONANCE
        print(f"  Minimum iterations:  {entry['min_iterations']}")
        print(f"  Maximum iterations:  {entry['max_iterations']} (at k={entry['worst_k']:g}"
              f"{', near a cube resonance' if near else ''})")
        print(f"  Average iterations:  {entry['mean_iterations']:.1f}")

    # Iteration change analysis
    print("\nIteration Change Analysis:")
    for key in dict.fromkeys(_entry_key(r) for r in rows):
        series = sorted((r for r in rows if _entry_key(r) == key and _succeeded(r)), key=lambda r: r["k"])
        for prev, curr in zip(series, series[1:]):
            change = curr["iterations"] - prev["iterations"]
            print(f"  {key} k={prev['k']:g} -> {curr['k']:g}: {change:+d}")
