"""
Unit tests for sweep_summary module
"""

import pytest
import sys
from pathlib import Path
from io import StringIO
from unittest.mock import patch

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from sweep_summary import print_sweep_summary, summarise_rows


def _row(k, iterations, formulation="stabilised", variant="base", preconditioner="osrc"):
    return {"k": k, "formulation": formulation, "variant": variant, "preconditioner": preconditioner,
            "iterations": iterations, "condition_number": None, "wall_time_s": 0.1}


@pytest.fixture
def rows():
    """Two entries over three wavenumbers, one failed run"""
    return [
        _row(4.0, 20), _row(4.0, 35, "symmetric", ""),
        _row(5.45, 22), _row(5.45, 90, "symmetric", ""),
        _row(7.0, 21), _row(7.0, -1, "symmetric", ""),
    ]


def test_summarise_rows(rows):
    """Test per-entry statistics skip failed runs"""
    summary = {s["entry"]: s for s in summarise_rows(rows)}
    stabilised = summary["stabilised/base [osrc]"]
    assert stabilised["runs"] == 3
    assert stabilised["failed"] == 0
    assert stabilised["min_iterations"] == 20
    assert stabilised["max_iterations"] == 22
    assert stabilised["mean_iterations"] == pytest.approx(21.0)
    assert stabilised["worst_k"] == 5.45

    symmetric = summary["symmetric [osrc]"]
    assert symmetric["failed"] == 1
    assert symmetric["max_iterations"] == 90


def test_summarise_rows_all_failed():
    """Test an entry without successful runs has no iteration statistics"""
    summary = summarise_rows([_row(4.0, -1)])
    assert summary[0]["failed"] == 1
    assert "max_iterations" not in summary[0]


def test_print_sweep_summary_basic(rows):
    """Test print_sweep_summary with basic results"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        print_sweep_summary(rows)
        output = fake_out.getvalue()

    assert "SWEEP SUMMARY" in output
    assert "Minimum iterations:" in output
    assert "Maximum iterations:" in output
    assert "Average iterations:" in output
    assert "Iteration Change Analysis:" in output
    assert "near a cube resonance" in output  # 5.45 is within 0.1 of sqrt(3) pi
    assert "k=4 -> 5.45: +55" in output
    assert "k=5.45 -> 7: -1" in output


def test_print_sweep_summary_skips_failed_runs(rows):
    """Test failed runs do not enter the change analysis"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        print_sweep_summary(rows)
        output = fake_out.getvalue()

    assert "symmetric [osrc] k=5.45 -> 7" not in output
    assert "3 runs, 1 failed" in output


def test_print_sweep_summary_single_result():
    """Test print_sweep_summary with a single result"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        print_sweep_summary([_row(8.0, 17)])
        output = fake_out.getvalue()

    assert "SWEEP SUMMARY" in output
    assert "1 runs, 0 failed" in output
    assert "near a cube resonance" not in output


def test_print_sweep_summary_empty():
    """Test print_sweep_summary with no results"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        print_sweep_summary([])
        output = fake_out.getvalue()

    assert "No results" in output
