"""Tests for configuration loading and validation"""

import orjson
import pytest
from pydantic import ValidationError

from blocksplat.config import LossConfig, PartitionConfig, TrainConfig, load_config, write_config
from blocksplat.exceptions import ConfigurationError
from blocksplat.utils import Timer, deep_merge, parse_overrides

TOML = """
sfm_dir = "sparse/0"
image_dir = "images"
output_dir = "out"
eval_every = 4

[partition]
roi = [0.0, 4.0, -1.0, 1.0]
up_axis = "+y"

[train]
iterations = 100
"""


class TestLoadConfig:
    """Test reading pipeline configuration files"""

    def setup_method(self):
        self.text = TOML

    def _write(self, tmp_path, text=None, name="blocksplat.toml"):
        path = tmp_path / name
        path.write_text(text if text is not None else self.text, encoding="utf-8")
        return path

    def test_toml(self, tmp_path):
        """Test a TOML file validates with defaults filled in"""
        config = load_config(self._write(tmp_path))
        assert config.eval_every == 4
        assert config.partition.roi == (0.0, 4.0, -1.0, 1.0)
        assert config.train.iterations == 100
        assert config.train.batch_size == 4
        assert config.loss.lambda_ssim == 0.2
        assert config.parallel_workers == 1

    def test_paths_resolved_against_file(self, tmp_path):
        """Test relative paths are anchored at the config directory"""
        config = load_config(self._write(tmp_path))
        assert config.sfm_dir == (tmp_path / "sparse" / "0").resolve()
        assert config.output_dir == (tmp_path / "out").resolve()
        assert config.depth_dir is None

    def test_overrides(self, tmp_path):
        """Test nested overrides win over file values"""
        overrides = parse_overrides(["train.iterations=7", "partition.up_axis=-z", "seed=3"])
        config = load_config(self._write(tmp_path), overrides)
        assert config.train.iterations == 7
        assert config.partition.up_axis == "-z"
        assert config.partition.roi == (0.0, 4.0, -1.0, 1.0)
        assert config.seed == 3

    def test_json(self, tmp_path):
        """Test JSON files load like TOML files"""
        data = {"sfm_dir": "s", "image_dir": "i", "output_dir": "o", "train": {"iterations": 5}}
        path = tmp_path / "blocksplat.json"
        path.write_bytes(orjson.dumps(data))
        assert load_config(path).train.iterations == 5

    def test_missing_file(self, tmp_path):
        """Test a missing file raises ConfigurationError"""
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.toml")

    def test_unparsable(self, tmp_path):
        """Test broken TOML raises ConfigurationError"""
        with pytest.raises(ConfigurationError):
            load_config(self._write(tmp_path, "sfm_dir = [unclosed"))

    def test_unknown_key(self, tmp_path):
        """Test unknown keys are rejected"""
        with pytest.raises(ConfigurationError):
            load_config(self._write(tmp_path, self.text + "\n[loss]\nlambda_sim = 0.1\n"))

    def test_missing_input_dir(self, tmp_path):
        """Test check_inputs reports a missing input directory"""
        config = load_config(self._write(tmp_path))
        with pytest.raises(ConfigurationError):
            config.check_inputs()

    def test_write_round_trip(self, tmp_path):
        """Test the provenance copy reloads to the same configuration"""
        config = load_config(self._write(tmp_path))
        write_config(config, tmp_path / "copy" / "config.json")
        assert load_config(tmp_path / "copy" / "config.json") == config


class TestSections:
    """Test section validators"""

    def test_roi_needs_area(self):
        """Test a degenerate roi is rejected"""
        with pytest.raises(ValidationError):
            PartitionConfig(roi=(1.0, 1.0, 0.0, 2.0))

    def test_ssim_window_must_be_odd(self):
        """Test an even SSIM window is rejected"""
        with pytest.raises(ValidationError):
            LossConfig(ssim_window=10)

    def test_schedule_points(self):
        """Test derived densify and pseudo-view iterations"""
        cfg = TrainConfig(iterations=3000)
        assert cfg.densify_stop == 1500
        assert cfg.pseudo_start == 750

    def test_assignment_validation(self):
        """Test invalid assignments are rejected"""
        cfg = TrainConfig()
        with pytest.raises(ValidationError):
            cfg.batch_size = 0


class TestUtils:
    """Test utility helpers"""

    def test_parse_overrides(self):
        """Test values parse as JSON with a string fallback"""
        overrides = parse_overrides(["a.b=1", "a.c=[1,2]", "d=hello"])
        assert overrides == {"a": {"b": 1, "c": [1, 2]}, "d": "hello"}

    def test_parse_overrides_needs_equals(self):
        """Test an item without '=' raises ValueError"""
        with pytest.raises(ValueError):
            parse_overrides(["train.iterations"])

    def test_deep_merge(self):
        """Test nested dictionaries merge key by key"""
        merged = deep_merge({"a": {"b": 1, "c": 2}, "d": 1}, {"a": {"c": 3}})
        assert merged == {"a": {"b": 1, "c": 3}, "d": 1}

    def test_timer(self):
        """Test the timer reports zero before start and a non-negative span after"""
        timer = Timer()
        assert timer.elapsed() == 0.0
        with timer:
            pass
        assert timer.elapsed() >= 0.0
