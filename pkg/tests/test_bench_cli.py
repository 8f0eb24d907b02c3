"""
Unit tests for bench_cli module
"""

import pytest
import sys
from pathlib import Path
from io import StringIO
from unittest.mock import patch
import tempfile
import shutil
import json
import pandas as pd

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from bench_cli import (check_scale, cmd_compare, cmd_mesh_info, cmd_selftest, cmd_solve, cmd_sweep,
                       count_unknowns, failed_row, main, pade_relative_error, resolve_config, resonance_check,
                       _run_rows)
from errors import ConfigError, ScaleGuardError, SingularMatrixError
from mesh import build_cube_mesh
from postprocess import REPORT_COLUMNS, read_report_csv
from run_config import GridEntry, RunConfig


@pytest.fixture
def temp_dir():
    """Create temporary directory for testing"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def small_config():
    """Two-subdivision cube, low wavenumber, coarse field slice"""
    return RunConfig.model_validate({
        "geometry": {"subdivisions": 2},
        "wave": {"k_ext": 2.0},
        "grid": [{}, {"formulation": "symmetric"}],
        "output": {"resolution": 5},
    })


@pytest.fixture(scope="module")
def cube2():
    """Unit cube mesh with 2 subdivisions"""
    return build_cube_mesh(2)


def test_count_unknowns(cube2):
    """Test unknown counts per formulation and theta space"""
    assert count_unknowns(cube2, GridEntry()) == 27 + 26 + 26
    assert count_unknowns(cube2, GridEntry(theta_space="P0", recipe={})) == 27 + 48 + 26
    assert count_unknowns(cube2, GridEntry(formulation="symmetric")) == 27 + 26


def test_check_scale(cube2):
    """Test the desk guard and its override"""
    with patch('bench_cli.DESK_GUARD', 50):
        with pytest.raises(ScaleGuardError):
            check_scale(cube2, GridEntry())
        check_scale(cube2, GridEntry(), force=True)
    check_scale(cube2, GridEntry())


def test_failed_row():
    """Test failed entries keep the CSV header with iterations = -1"""
    row = failed_row(GridEntry(formulation="symmetric", label="mass"), 3.0, RuntimeError("boom"))
    assert list(row) == REPORT_COLUMNS
    assert row["iterations"] == -1
    assert row["variant"] == ""
    assert row["preconditioner"] == "mass"


def test_cmd_solve_writes_outputs(small_config, temp_dir):
    """Test a solve writes the slices, surface traces and report"""
    with patch('sys.stdout', new=StringIO()):
        reports = cmd_solve(small_config, temp_dir)

    assert len(reports) == 2
    assert all(r.converged for r in reports)
    assert reports[0].metadata["entry"] == GridEntry().name()
    assert "incident_deviation" in reports[0].metadata
    for name in ("field_0.vtk", "field_1.vtk", "surface_0_domain1.vtk", "solve_report.csv"):
        assert (Path(temp_dir) / name).exists()
    records = read_report_csv(str(Path(temp_dir) / "solve_report.csv"))
    assert [r["formulation"] for r in records] == ["stabilised", "symmetric"]


def test_cmd_solve_graded_density(small_config, temp_dir):
    """Test a solve with a graded interior density converges"""
    config = small_config.model_copy(update={
        "materials": small_config.materials.model_copy(update={"density": "graded"}),
        "grid": small_config.grid[:1],
    })
    with patch('sys.stdout', new=StringIO()):
        reports = cmd_solve(config, temp_dir)
    assert len(reports) == 1
    assert reports[0].converged


def test_cmd_sweep(small_config, temp_dir):
    """Test a sweep writes one row per wavenumber and entry plus the resonance table"""
    config = small_config.model_copy(update={"sweep": small_config.sweep.model_copy(update={"k_values": [1.0, 2.0]})})
    with patch('sys.stdout', new=StringIO()):
        rows, failures = cmd_sweep(config, temp_dir)

    assert failures == 0
    assert [r["k"] for r in rows] == [1.0, 1.0, 2.0, 2.0]
    assert all(r["iterations"] > 0 for r in rows)
    assert len(read_report_csv(str(Path(temp_dir) / "sweep.csv"))) == 4
    resonances = pd.read_csv(Path(temp_dir) / "sweep_resonances.csv")
    assert list(resonances.columns) == ["k_resonance"]
    assert len(resonances) == 0


def test_cmd_sweep_needs_wavenumbers(small_config, temp_dir):
    """Test a sweep without wavenumbers raises ConfigError"""
    with pytest.raises(ConfigError):
        cmd_sweep(small_config, temp_dir)


def test_threaded_rows_keep_order(small_config, cube2):
    """Test concurrent entries return rows in configuration order"""
    with patch('sys.stdout', new=StringIO()):
        serial, _ = _run_rows(small_config, cube2, [1.0, 1.5], False, None, 1)
        threaded, _ = _run_rows(small_config, cube2, [1.0, 1.5], False, None, 3)
    assert [(r["k"], r["formulation"], r["iterations"]) for r in threaded] == \
        [(r["k"], r["formulation"], r["iterations"]) for r in serial]


@patch('bench_cli.run_entry')
def test_failed_rows_are_recorded(mock_run_entry, small_config, cube2):
    """Test solver failures become rows with iterations = -1"""
    mock_run_entry.side_effect = SingularMatrixError("singular")
    rows, failures = _run_rows(small_config, cube2, [1.0], False, None, 1)
    assert failures == 2
    assert [r["iterations"] for r in rows] == [-1, -1]


@patch('bench_cli.cmd_sweep')
def test_cmd_compare_defaults_to_wave_wavenumber(mock_sweep, small_config, temp_dir):
    """Test a comparison without sweep wavenumbers runs at wave.k_ext"""
    mock_sweep.return_value = ([], 0)
    cmd_compare(small_config, "nu_study", temp_dir)

    study = mock_sweep.call_args[0][0]
    assert study.sweep.wavenumbers() == [2.0]
    assert [e.nu for e in study.grid] == [0.0, 1.0]
    assert mock_sweep.call_args[1]["name"] == "compare_nu_study"


def test_cmd_compare_unknown_preset(small_config, temp_dir):
    """Test an unknown preset raises ConfigError"""
    with pytest.raises(ConfigError):
        cmd_compare(small_config, "everything", temp_dir)


def test_resonance_check_skips(small_config, cube2):
    """Test the resonance check skips stabilised entries, missing condition numbers and the baseline"""
    assert resonance_check(small_config, cube2, GridEntry(), 5.0, 100.0) is None
    assert resonance_check(small_config, cube2, GridEntry(formulation="symmetric"), 5.0, None) is None
    assert resonance_check(small_config, cube2, GridEntry(formulation="symmetric"), 10.0, 100.0) is None


@patch('bench_cli.assemble_entry')
@patch('bench_cli.condition_number')
def test_resonance_check_warns(mock_cond, mock_assemble, small_config, cube2):
    """Test a condition number far above the baseline prints a warning"""
    mock_cond.return_value = 2.0
    with patch('sys.stdout', new=StringIO()) as fake_out:
        ratio = resonance_check(small_config, cube2, GridEntry(formulation="symmetric"), 5.44, 40.0)
        output = fake_out.getvalue()
    assert ratio == pytest.approx(20.0)
    assert "near an interior resonance" in output
    assert mock_assemble.call_args[0][3] == 10.0


def test_cmd_mesh_info(small_config):
    """Test the mesh summary of the configured cube"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        summary = cmd_mesh_info(small_config)
        output = fake_out.getvalue()
    assert summary["vertices"] == 27
    assert summary["domains"][0]["surface_p0_dofs"] == 48
    assert "Volume P1 dofs" in output


def test_cmd_selftest_reports_failures():
    """Test a failing or raising check makes the selftest fail"""
    checks = [("passes", lambda: True), ("raises", lambda: 1 / 0)]
    with patch('bench_cli.selftest_checks', return_value=checks), patch('sys.stdout', new=StringIO()) as fake_out:
        ok = cmd_selftest()
        output = fake_out.getvalue()
    assert not ok
    assert "✓ passes" in output
    assert "✗ raises" in output


def test_cmd_selftest_passes():
    """Test the built-in self checks pass and report the wide-range Pade error"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        assert cmd_selftest()
        output = fake_out.getvalue()
    assert "Pade max relative error on [0, 10]" in output
    assert "(informational)" in output


def test_pade_relative_error_ranges():
    """Test the default Pade square root meets 5% on [0, 3] but not on [0, 10]"""
    assert pade_relative_error(3.0) < 0.05
    assert 0.05 < pade_relative_error(10.0) < 0.2


def test_resolve_config_fallback():
    """Test a missing config file falls back to the defaults"""
    with patch('sys.stdout', new=StringIO()):
        config = resolve_config("/nonexistent/run_config.json")
    assert config.geometry.subdivisions == 13


@patch('bench_cli.cmd_selftest')
def test_main_selftest(mock_selftest):
    """Test main returns the selftest outcome"""
    mock_selftest.return_value = True
    with patch('sys.stdout', new=StringIO()):
        assert main(['selftest']) == 0
    mock_selftest.return_value = False
    with patch('sys.stdout', new=StringIO()):
        assert main(['selftest']) == 1


@patch('bench_cli.cmd_solve')
def test_main_solve_output_directory(mock_solve, temp_dir):
    """Test --out wins over output.directory, which wins over the default"""
    mock_solve.return_value = []
    config_path = Path(temp_dir) / "run.json"
    config_path.write_text(json.dumps({"output": {"directory": "from_config"}}))
    cache_dir = str(Path(temp_dir) / "cache")

    with patch('sys.stdout', new=StringIO()):
        assert main(['solve', '-c', str(config_path), '--cache-dir', cache_dir]) == 0
    assert mock_solve.call_args[0][1] == "from_config"

    with patch('sys.stdout', new=StringIO()):
        assert main(['solve', '-c', str(config_path), '-o', 'explicit', '--cache-dir', cache_dir]) == 0
    assert mock_solve.call_args[0][1] == "explicit"


@patch('bench_cli.cmd_sweep')
@patch('bench_cli.print_sweep_summary')
def test_main_sweep_failures(mock_summary, mock_sweep, temp_dir):
    """Test failed sweep rows give exit code 2"""
    mock_sweep.return_value = ([{"k": 1.0}], 1)
    with patch('sys.stdout', new=StringIO()) as fake_out:
        code = main(['sweep', '--cache-dir', str(Path(temp_dir) / "cache")])
        output = fake_out.getvalue()
    assert code == 2
    assert "1 FAILED ROWS" in output
    mock_summary.assert_called_once_with([{"k": 1.0}])


def test_main_config_error(temp_dir):
    """Test a sweep without wavenumbers exits with code 1"""
    with patch('sys.stdout', new=StringIO()) as fake_out:
        code = main(['sweep', '--cache-dir', str(Path(temp_dir) / "cache")])
        output = fake_out.getvalue()
    assert code == 1
    assert "no wavenumbers" in output


def test_main_invalid_config_file(temp_dir):
    """Test a config file violating the schema exits with code 1"""
    config_path = Path(temp_dir) / "bad.json"
    config_path.write_text(json.dumps({"geometry": {"subdivisions": 0}}))
    with patch('sys.stdout', new=StringIO()):
        assert main(['mesh-info', '-c', str(config_path)]) == 1


def test_main_clear_cache(temp_dir):
    """Test --clear-cache removes the cache directory"""
    cache_dir = Path(temp_dir) / "cache"
    cache_dir.mkdir()
    (cache_dir / "operator_x.npy").write_bytes(b"")
    config_path = Path(temp_dir) / "run.json"
    config_path.write_text(json.dumps({"geometry": {"subdivisions": 2}}))
    with patch('sys.stdout', new=StringIO()) as fake_out:
        code = main(['mesh-info', '-c', str(config_path), '--cache-dir', str(cache_dir), '--clear-cache'])
        output = fake_out.getvalue()
    assert code == 0
    assert not cache_dir.exists()
    assert "Cleared cache directory" in output
