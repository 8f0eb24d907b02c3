"""
Unit tests for run_config module
"""

import pytest
import json
import sys
from pathlib import Path
import tempfile
import numpy as np
from pydantic import ValidationError

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from errors import ConfigError
from run_config import (GeometryConfig, GridEntry, MaterialConfig, OsrcSettings, RunConfig, SweepConfig, WaveConfig,
                        build_geometry, build_materials, build_wave, compare_preset, get_default_config,
                        load_run_config, resonance_sweep)


def _write_json(data):
    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        json.dump(data, f)
        return f.name


def _contains(values, k):
    return any(abs(v - k) < 1e-9 for v in values)


def test_get_default_config():
    """Test that the benchmark defaults are returned correctly"""
    config = get_default_config()

    assert isinstance(config, RunConfig)
    assert config.geometry.kind == "cube"
    assert config.geometry.subdivisions == 13
    assert config.materials.refractivity == "benchmark"
    assert config.wave.direction == (1.0, 1.0, 1.0)
    assert config.solver.tol == 1e-5
    assert config.solver.max_iter is None
    assert config.solver.drop_tol == 1e-4
    assert config.osrc.pade_order == 2
    assert config.osrc.branch_angle == pytest.approx(np.pi / 3)

    entry = config.grid[0]
    assert entry.formulation == "stabilised"
    assert entry.regulariser == "OSRC-NtD"
    assert entry.variant == "base"


def test_load_run_config_valid_file():
    """Test loading a configuration from a valid JSON file"""
    temp_file = _write_json({
        "geometry": {"kind": "cube", "subdivisions": 4},
        "wave": {"k_ext": 6.0},
        "grid": [{"formulation": "symmetric"}, {"formulation": "stabilised", "nu": 1.0}],
    })
    try:
        config = load_run_config(temp_file)

        assert config is not None
        assert config.geometry.subdivisions == 4
        assert config.wave.k_ext == 6.0
        assert len(config.grid) == 2
        assert config.grid[1].nu == 1.0
    finally:
        Path(temp_file).unlink()


def test_load_run_config_wrapped():
    """Test loading a configuration wrapped in a 'config' key"""
    temp_file = _write_json({"config": {"compute_condition": True}})
    try:
        config = load_run_config(temp_file)
        assert config.compute_condition
    finally:
        Path(temp_file).unlink()


def test_load_run_config_missing_file():
    """Test loading from a non-existent file returns None"""
    assert load_run_config("/nonexistent/run_config.json") is None


def test_load_run_config_invalid_json():
    """Test loading invalid JSON returns None"""
    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        f.write("{ invalid json content")
        temp_file = f.name
    try:
        assert load_run_config(temp_file) is None
    finally:
        Path(temp_file).unlink()


@pytest.mark.parametrize("data", [
    {"geometry": {"subdivisions": 0}},
    {"schema_version": 2},
    {"grid": [{"formulation": "fancy"}]},
    {"materials": {"density": "graded", "density_extent": [1.0, 0.0]}},
    {"materials": {"density": "linear"}},
    [1, 2, 3],
])
def test_load_run_config_schema_violation(data):
    """Test readable JSON that violates the schema raises ConfigError"""
    temp_file = _write_json(data)
    try:
        with pytest.raises(ConfigError):
            load_run_config(temp_file)
    finally:
        Path(temp_file).unlink()


def test_msh_geometry_needs_path():
    """Test the msh geometry kind requires a path"""
    with pytest.raises(ValidationError):
        GeometryConfig(kind="msh")


def test_wave_direction_non_zero():
    """Test a zero incident direction is rejected"""
    with pytest.raises(ValidationError):
        WaveConfig(direction=(0.0, 0.0, 0.0))


def test_branch_angle_bounds():
    """Test the branch angle lies strictly between 0 and pi"""
    with pytest.raises(ValidationError):
        OsrcSettings(branch_angle=0.0)
    with pytest.raises(ValidationError):
        OsrcSettings(branch_angle=np.pi)


def test_regulariser_alias():
    """Test 'OSRC' is accepted as an alias of 'OSRC-NtD'"""
    assert GridEntry(regulariser="OSRC").regulariser == "OSRC-NtD"


@pytest.mark.parametrize("kwargs", [
    {"eta": 0.0},
    {"nu": 0.5},
    {"variant": "alt_reg", "regulariser": "MH"},
    {"kappa": -1.0},
    {"recipe": {"p": "mass"}},
    {"recipe": {"sigma": "ilu_all"}},
    {"recipe": {"theta": "magic"}},
    {"formulation": "symmetric", "recipe": {"sigma": "mass"}},
    {"theta_space": "P0", "recipe": {"theta": "osrc_dtn"}},
    {"variant": "permuted", "theta_space": "P0", "recipe": {"p": "ilu_all"}},
])
def test_invalid_grid_entries(kwargs):
    """Test invalid formulation or recipe combinations are rejected"""
    with pytest.raises(ValidationError):
        GridEntry(**kwargs)


def test_effective_recipe_defaults():
    """Test the operator-order matched default recipes"""
    assert GridEntry().effective_recipe() == {"p": "ilu_inner+osrc_surface", "theta": "osrc_dtn",
                                              "sigma": "osrc_ntd"}
    assert GridEntry(variant="permuted", nu=1.0).effective_recipe()["theta"] == "mass"
    assert GridEntry(variant="permuted", theta_space="P0").effective_recipe() == {}
    assert GridEntry(formulation="symmetric", theta_space="P0").effective_recipe()["theta"] == "none"
    assert GridEntry(method="direct").effective_recipe() == {}
    assert GridEntry(recipe={"sigma": "mass"}).effective_recipe() == {"sigma": "mass"}


def test_entry_names():
    """Test readable entry names and explicit labels"""
    assert GridEntry(formulation="standard", theta_space="P0").name() == "standard/P0"
    assert GridEntry(nu=1.0).name() == "stabilised-OSRC-NtD/base/nu=1/P1"
    assert GridEntry(label="mine").name() == "mine"


def test_sweep_wavenumbers_precedence():
    """Test explicit values win over the range, which wins over the preset"""
    assert SweepConfig(k_values=[3, 5], k_range=(1.0, 2.0, 0.5)).wavenumbers() == [3.0, 5.0]
    assert SweepConfig(k_range=(1.0, 2.0, 0.5), preset="resonance").wavenumbers() == [1.0, 1.5, 2.0]
    assert SweepConfig().wavenumbers() == []


def test_invalid_k_range():
    """Test a non-positive step or reversed range raises ConfigError"""
    with pytest.raises(ConfigError):
        SweepConfig(k_range=(1.0, 2.0, 0.0)).wavenumbers()
    with pytest.raises(ConfigError):
        SweepConfig(k_range=(3.0, 2.0, 0.5)).wavenumbers()


def test_resonance_sweep():
    """Test fine steps near cube resonances and coarse steps elsewhere"""
    ks = resonance_sweep()
    assert ks == sorted(set(ks))
    assert ks[0] == pytest.approx(4.0)
    assert ks[-1] == pytest.approx(12.0)
    assert _contains(ks, 5.45)  # within 0.25 of sqrt(3) pi
    assert _contains(ks, 4.25)
    assert not _contains(ks, 4.05)
    assert SweepConfig(preset="resonance").wavenumbers() == ks


def test_build_geometry():
    """Test each geometry kind builds the expected domains"""
    assert build_geometry(GeometryConfig(subdivisions=2)).domain_ids == [1]
    assert build_geometry(GeometryConfig(kind="sphere", subdivisions=2)).domain_ids == [1]
    assert build_geometry(GeometryConfig(kind="two_body", subdivisions=2)).domain_ids == [1, 2]


def test_build_materials_constant():
    """Test constant refractivity and the density ratio"""
    model = build_materials(MaterialConfig(refractivity="constant", n=1.5, rho_int=2.0), 3.0, [1])
    points = np.array([[0.5, 0.5, 0.5]])
    np.testing.assert_allclose(model.refractivity[1].value(points), 1.5)
    np.testing.assert_allclose(model.density_ratio(1, points), 2.0)
    assert model.k_ext == 3.0


def test_build_materials_graded_density():
    """Test a graded density profile from a JSON configuration"""
    temp_file = _write_json({"materials": {"density": "graded", "density_extent": [-1.0, 1.0], "rho_ext": 2.0}})
    try:
        config = load_run_config(temp_file)
    finally:
        Path(temp_file).unlink()
    assert config.materials.density_min == 0.2
    assert config.materials.density_span == 5.0

    model = build_materials(config.materials, 3.0, [1, 2])
    points = np.array([[-1.0, 0.3, 0.0], [0.0, 0.0, 0.0], [1.0, -0.5, 2.0]])
    np.testing.assert_allclose(model.density[2].value(points), [0.2, 1.45, 5.2])
    np.testing.assert_allclose(model.density_ratio(1, points), [0.1, 0.725, 2.6])
    np.testing.assert_allclose(model.density[1].gradient(points)[:, 0], [0.0, 2.5, 5.0])
    np.testing.assert_allclose(model.density[1].gradient(points)[:, 1:], 0.0)


def test_constant_density_ignores_profile_settings():
    """Test rho_int is used unless the graded profile is selected"""
    model = build_materials(MaterialConfig(rho_int=3.0, density_min=1.0, density_span=9.0), 1.0, [1])
    np.testing.assert_allclose(model.density[1].value(np.array([[0.9, 0.1, 0.1]])), 3.0)


def test_build_wave_normalises_direction():
    """Test the incident direction is normalised"""
    wave = build_wave(WaveConfig(direction=(0.0, 3.0, 4.0)), 2.0)
    np.testing.assert_allclose(wave.d, [0.0, 0.6, 0.8])
    assert wave.k_ext == 2.0


def test_compare_presets():
    """Test the comparison grids and the unknown-preset error"""
    assert [e.nu for e in compare_preset("nu_study")] == [0.0, 1.0]
    assert [e.theta_space for e in compare_preset("space_study")] == ["P1", "P0"]
    assert [e.name() for e in compare_preset("osrc_prec")] == ["none", "mass", "osrc"]
    assert len(compare_preset("permutation_study")) == 4
    with pytest.raises(ConfigError):
        compare_preset("everything")
