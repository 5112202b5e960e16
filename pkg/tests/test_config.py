"""
Tests to verify run configuration parsing.

These tests check that:
- A minimal config is filled with the documented defaults
- Unknown keys and type mismatches name the offending path
- Reward-specific N1/N2 defaults are applied
- The effective config is echoed to the run directory and round-trips
"""

import json
import re
import sys
from pathlib import Path

import pytest

from src.cfg.config import (
    EFFECTIVE_CONFIG_FILE,
    apply_overrides,
    config_hash,
    emit_config,
    make_run_id,
    parse_config,
    validate_config,
)
from src.utils.errors import ConfigValidationError

ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = ROOT / "configs"

# Import names that differ from their distribution names
DISTRIBUTION_NAMES = {"sklearn": "scikit-learn"}


@pytest.fixture
def config_file(tmp_path):
    """Write a config document and return its path."""

    def write(document: dict):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(document))
        return path

    return write


class TestDefaults:
    """Test default filling of a minimal config."""

    def test_minimal_config_gets_defaults(self, config_file):
        """Test that schema_version alone yields the default run."""
        cfg = parse_config(config_file({"schema_version": 1}))
        assert cfg.train.N_s == 4
        assert cfg.train.stats_window == 1024
        assert cfg.train.mu == 0.95
        assert (cfg.train.c, cfg.train.c1, cfg.train.c2) == (1.0, 0.5, 1.0)
        assert cfg.schedule.T == 100
        assert cfg.distill.skip == 10
        assert cfg.seeds == [0]

    def test_continuous_reward_alternation(self):
        """Test that continuous rewards default to N1 = N2 = 1."""
        cfg = validate_config({"schema_version": 1})
        assert (cfg.train.N1, cfg.train.N2) == (1, 1)

    def test_quantized_reward_alternation(self):
        """Test that quantized rewards default to N1 = 10, N2 = 20."""
        cfg = validate_config({"schema_version": 1, "reward": {"kind": "quantized"}})
        assert (cfg.train.N1, cfg.train.N2) == (10, 20)

    def test_explicit_alternation_is_kept(self):
        """Test that explicit N1/N2 override the reward-family defaults."""
        cfg = validate_config({"schema_version": 1, "reward": {"kind": "quantized"}, "train": {"N1": 3, "N2": 0}})
        assert (cfg.train.N1, cfg.train.N2) == (3, 0)

    def test_mid_timestep_defaults_to_half_of_T(self):
        """Test that the two-step middle timestep defaults to T / 2."""
        cfg = validate_config({"schema_version": 1, "schedule": {"T": 40}})
        assert cfg.distill.mid_timestep == 20


class TestValidationErrors:
    """Test that malformed configs are rejected with a path."""

    def test_unknown_key_names_path(self):
        """Test that train.NN1 is reported by its dotted path."""
        with pytest.raises(ConfigValidationError) as exc_info:
            validate_config({"schema_version": 1, "train": {"NN1": 2}})
        assert exc_info.value.path == "train.NN1"
        assert "train.NN1" in str(exc_info.value)

    def test_type_mismatch_names_path(self):
        """Test that a string where an integer belongs is rejected."""
        with pytest.raises(ConfigValidationError) as exc_info:
            validate_config({"schema_version": 1, "train": {"N_s": "four"}})
        assert exc_info.value.path == "train.N_s"

    def test_missing_schema_version(self):
        """Test that the required schema_version field is enforced."""
        with pytest.raises(ConfigValidationError) as exc_info:
            validate_config({})
        assert exc_info.value.path == "schema_version"

    def test_single_sample_groups_rejected(self):
        """Test that N_s = 1 is rejected since pairs need two samples."""
        with pytest.raises(ConfigValidationError):
            validate_config({"schema_version": 1, "train": {"N_s": 1}})

    def test_mid_timestep_outside_range(self):
        """Test that the middle timestep must lie strictly inside (0, T)."""
        with pytest.raises(ConfigValidationError):
            validate_config({"schema_version": 1, "distill": {"mid_timestep": 100}})

    def test_unreadable_file(self, tmp_path):
        """Test that a missing config file surfaces as OSError."""
        with pytest.raises(OSError):
            parse_config(tmp_path / "missing.json")


class TestEffectiveConfig:
    """Test echoing and serialization of the effective config."""

    def test_effective_config_written(self, config_file, tmp_path):
        """Test that parse_config echoes the defaulted config to the run dir."""
        run_dir = tmp_path / "run"
        cfg = parse_config(config_file({"schema_version": 1}), run_dir=run_dir)
        echoed = json.loads((run_dir / EFFECTIVE_CONFIG_FILE).read_text())
        assert echoed["train"]["N1"] == 1
        assert validate_config(echoed) == cfg

    def test_emit_parse_round_trip(self, cfg):
        """Test that parse(emit(cfg)) == cfg."""
        assert validate_config(emit_config(cfg)) == cfg

    def test_shipped_configs_validate(self):
        """Test that the configs under configs/ are valid."""
        for name in ("desk.json", "smoke.json"):
            cfg = parse_config(CONFIG_DIR / name)
            assert cfg.schema_version == 1


class TestOverridesAndRunId:
    """Test command-line overrides and the config-derived run id."""

    def test_overrides_echoed(self, config_file, tmp_path):
        """Test that run_dir and seed overrides are part of the echoed config."""
        run_dir = tmp_path / "elsewhere"
        cfg = parse_config(config_file({"schema_version": 1}), run_dir=run_dir, seeds=[7])
        echoed = validate_config((run_dir / EFFECTIVE_CONFIG_FILE).read_text())
        assert echoed.io.run_dir == str(run_dir)
        assert echoed.seeds == [7]
        assert echoed == cfg

    def test_empty_seed_override(self, cfg):
        """Test that an empty seed list is rejected."""
        with pytest.raises(ConfigValidationError):
            apply_overrides(cfg, seeds=[])

    def test_run_id_ignores_io_and_seeds(self, cfg):
        """Test that the run id depends on the config and seed, not on where the run lives."""
        moved = apply_overrides(cfg, run_dir="somewhere/else", seeds=[3, 4])
        assert make_run_id(moved, 0) == make_run_id(cfg, 0)
        assert make_run_id(cfg, 0) != make_run_id(cfg, 1)

    def test_run_id_tracks_settings(self, cfg, make_config):
        """Test that changing a training setting changes the config hash."""
        changed = make_config(train={"c1": 0.0})
        assert config_hash(changed) != config_hash(cfg)
        assert len(config_hash(cfg)) == 12


class TestManifest:
    """Test the project manifest against the package's imports."""

    def test_direct_imports_declared(self):
        """Test that every third-party package imported under src/ is a declared dependency."""
        manifest = (ROOT / "pyproject.toml").read_text()
        block = manifest.split("dependencies = [", 1)[1].split("]", 1)[0]
        declared = {name.lower() for name in re.findall(r'^\s*"([A-Za-z0-9_.-]+)', block, re.M)}

        imported = set()
        for path in (ROOT / "src").rglob("*.py"):
            imported |= set(re.findall(r"^\s*(?:from|import) ([A-Za-z_]\w*)", path.read_text(), re.M))
        third_party = {name for name in imported if name not in sys.stdlib_module_names and name != "src"}

        assert "matplotlib" in third_party
        missing = {DISTRIBUTION_NAMES.get(name, name) for name in third_party} - declared
        assert not missing, f"imported but not declared: {sorted(missing)}"
