"""
Unit tests for cli module
"""

import pytest
import sys
from pathlib import Path
from unittest.mock import patch

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from cli import COMPARE_PRESETS, parse_arguments


def test_parse_arguments_defaults():
    """Test parse_arguments for a bare subcommand (all defaults)"""
    with patch('sys.argv', ['bench_cli.py', 'solve']):
        args = parse_arguments()

        assert args.command == 'solve'
        assert args.out is None
        assert args.force is False
        assert args.threads == 1
        assert args.cache_dir == '.operator_cache'
        assert args.clear_cache is False
        assert args.verbose is False


def test_parse_arguments_requires_command():
    """Test a missing subcommand exits"""
    with pytest.raises(SystemExit):
        parse_arguments([])


def test_parse_arguments_config_file():
    """Test parse_arguments with a config file specified"""
    args = parse_arguments(['sweep', '--config', 'custom.json'])
    assert args.command == 'sweep'
    assert args.config == 'custom.json'


def test_parse_arguments_short_flags():
    """Test the short flags of config, out and verbose"""
    args = parse_arguments(['solve', '-c', 'test.json', '-o', 'out_dir', '-v'])
    assert args.config == 'test.json'
    assert args.out == 'out_dir'
    assert args.verbose is True


def test_parse_arguments_force_and_threads():
    """Test the scale guard override and the thread count"""
    args = parse_arguments(['sweep', '--force', '--threads', '4'])
    assert args.force is True
    assert args.threads == 4


def test_parse_arguments_cache_options():
    """Test the cache directory and the clear flag"""
    args = parse_arguments(['solve', '--cache-dir', '/tmp/ops', '--clear-cache'])
    assert args.cache_dir == '/tmp/ops'
    assert args.clear_cache is True


@pytest.mark.parametrize("preset", COMPARE_PRESETS)
def test_parse_arguments_compare_presets(preset):
    """Test every comparison preset is accepted"""
    args = parse_arguments(['compare', '--preset', preset])
    assert args.command == 'compare'
    assert args.preset == preset


def test_parse_arguments_compare_needs_preset():
    """Test compare without or with an unknown preset exits"""
    with pytest.raises(SystemExit):
        parse_arguments(['compare'])
    with pytest.raises(SystemExit):
        parse_arguments(['compare', '--preset', 'everything'])


def test_parse_arguments_mesh_info():
    """Test the mesh-info subcommand with and without an external mesh"""
    assert parse_arguments(['mesh-info']).msh is None
    assert parse_arguments(['mesh-info', '--msh', 'body.msh']).msh == 'body.msh'


def test_parse_arguments_selftest():
    """Test the selftest subcommand"""
    assert parse_arguments(['selftest']).command == 'selftest'


def test_parse_arguments_unknown_command():
    """Test an unknown subcommand exits"""
    with pytest.raises(SystemExit):
        parse_arguments(['plot'])


def test_parse_arguments_help():
    """Test that help flag works"""
    with pytest.raises(SystemExit) as exc_info:
        parse_arguments(['--help'])
    assert exc_info.value.code == 0
