"""
Tests to verify metrics streams, checkpoints and run-directory state.

These tests check that:
- Metric records are appended one per line, in order
- Non-finite values become null and are counted
- Checkpoints load bit-identically and reject tampered payloads
- Missing prerequisites raise a precondition error naming the artifact
- Provenance entries accumulate per subcommand
"""

import json
import math

import pytest
import torch

from src.diffusion.networks import build_denoiser
from src.utils.checkpoints import (
    CheckpointManifest,
    load_checkpoint,
    load_into,
    manifest_path,
    save_checkpoint,
)
from src.utils.errors import CheckpointLoadError, PreconditionError
from src.utils.metrics import MetricRecord, MetricsSink, metrics_emit, read_metrics
from src.utils.state import (
    STUDENT,
    TEACHER,
    checkpoint_path,
    require_artifacts,
    write_provenance,
)


def record(name: str, value, step: int = 0) -> MetricRecord:
    return MetricRecord(run_id="run", method="lasro", stage="finetune", step=step, name=name, value=value, seed=0)


@pytest.fixture
def net():
    """Small denoiser to checkpoint."""
    return build_denoiser(d=2, C=3, width=8, depth=1, embed_dim=4, seed=0)


class TestMetricsSink:
    """Test the JSONL metrics sink."""

    def test_two_emits_two_lines(self, tmp_path):
        """Test that two emits produce two lines in emit order."""
        path = tmp_path / "metrics.jsonl"
        with MetricsSink(path, record_wall_time=False) as sink:
            metrics_emit(sink, record("a", 1.0, step=0))
            metrics_emit(sink, record("b", 2.0, step=1))
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert [json.loads(line)["name"] for line in lines] == ["a", "b"]

    def test_non_finite_value_written_as_null(self, tmp_path):
        """Test that NaN and inf are serialized as null and counted."""
        path = tmp_path / "metrics.jsonl"
        sink = MetricsSink(path, record_wall_time=False)
        sink.emit(record("nan", float("nan")))
        sink.emit(record("inf", math.inf))
        sink.emit(record("ok", 0.5))
        sink.close()
        assert sink.nonfinite_count == 2
        values = [r.value for r in read_metrics(path)]
        assert values == [None, None, 0.5]

    def test_wall_time_optional(self, tmp_path):
        """Test that wall time is stamped only when enabled."""
        path_on, path_off = tmp_path / "on.jsonl", tmp_path / "off.jsonl"
        with MetricsSink(path_on, record_wall_time=True) as sink:
            sink.emit(record("a", 1.0))
        with MetricsSink(path_off) as sink:
            sink.emit(record("a", 1.0))
        assert read_metrics(path_on)[0].wall_time is not None
        assert read_metrics(path_off)[0].wall_time is None
        assert read_metrics(path_on, drop_wall_time=True) == read_metrics(path_off)

    def test_emit_many_sorted_by_name(self, tmp_path):
        """Test that emit_many writes one record per value in name order."""
        path = tmp_path / "metrics.jsonl"
        with MetricsSink(path, record_wall_time=False) as sink:
            sink.emit_many("run", "ddpo", "finetune", 3, 1, {"z": 1, "a": 2.5})
        records = read_metrics(path)
        assert [r.name for r in records] == ["a", "z"]
        assert all(r.step == 3 and r.seed == 1 and r.method == "ddpo" for r in records)

    def test_append_mode(self, tmp_path):
        """Test that reopening a sink appends instead of truncating."""
        path = tmp_path / "metrics.jsonl"
        for step in range(2):
            with MetricsSink(path, record_wall_time=False) as sink:
                sink.emit(record("a", 1.0, step=step))
        assert [r.step for r in read_metrics(path)] == [0, 1]


class TestCheckpoints:
    """Test checkpoint payloads and manifests."""

    def test_save_then_load_bit_identical(self, net, tmp_path):
        """Test that parameters survive a save/load cycle exactly."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=7), path)
        state, manifest = load_checkpoint(path, expected_module="teacher")
        assert manifest.step == 7
        assert manifest.param_count == sum(p.numel() for p in net.state_dict().values())
        for name, tensor in net.state_dict().items():
            assert torch.equal(state[name], tensor)

    def test_load_into_fresh_module(self, net, tmp_path):
        """Test that load_into restores another instance of the architecture."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=0), path)
        other = build_denoiser(d=2, C=3, width=8, depth=1, embed_dim=4, seed=1)
        load_into(other, path)
        x = torch.zeros(2, 2, dtype=torch.float64)
        assert torch.equal(other(x, 3, 1), net(x, 3, 1))

    def test_tampered_payload_length(self, net, tmp_path):
        """Test that a payload whose size differs from the manifest is rejected."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=0), path)
        with open(path, "ab") as f:
            f.write(b"\x00" * 16)
        with pytest.raises(CheckpointLoadError):
            load_checkpoint(path)

    def test_module_mismatch(self, net, tmp_path):
        """Test that a checkpoint of another module is rejected."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=0), path)
        with pytest.raises(CheckpointLoadError) as exc_info:
            load_checkpoint(path, expected_module="student")
        assert exc_info.value.expected == "module student"

    def test_schema_version_mismatch(self, net, tmp_path):
        """Test that a manifest from another schema version is rejected."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=0), path)
        sidecar = manifest_path(path)
        data = json.loads(sidecar.read_text())
        data["schema_version"] = 99
        sidecar.write_text(json.dumps(data))
        with pytest.raises(CheckpointLoadError):
            load_checkpoint(path)

    def test_shape_mismatch_lists_expected_and_found(self, net, tmp_path):
        """Test that loading into a differently sized module fails with detail."""
        path = tmp_path / "teacher.joblib"
        save_checkpoint(net, CheckpointManifest(module="teacher", step=0), path)
        wider = build_denoiser(d=2, C=3, width=16, depth=1, embed_dim=4, seed=0)
        with pytest.raises(CheckpointLoadError) as exc_info:
            load_into(wider, path)
        assert exc_info.value.expected != exc_info.value.found

    def test_missing_manifest(self, tmp_path):
        """Test that a payload without manifest cannot be loaded."""
        with pytest.raises(CheckpointLoadError):
            load_checkpoint(tmp_path / "nothing.joblib")


class TestRunState:
    """Test prerequisite checks and provenance stamps."""

    def test_missing_prerequisite_names_artifact(self, tmp_path):
        """Test that finetune before distill names the student checkpoint."""
        save_checkpoint(
            {"w": torch.zeros(1, dtype=torch.float64)},
            CheckpointManifest(module=TEACHER, step=0),
            checkpoint_path(tmp_path, TEACHER),
        )
        with pytest.raises(PreconditionError) as exc_info:
            require_artifacts(tmp_path, "finetune:lasro")
        assert exc_info.value.artifact == STUDENT

    def test_prerequisites_present(self, tmp_path):
        """Test that a stage whose inputs exist passes the check."""
        save_checkpoint(
            {"w": torch.zeros(1, dtype=torch.float64)},
            CheckpointManifest(module=TEACHER, step=0),
            checkpoint_path(tmp_path, TEACHER),
        )
        require_artifacts(tmp_path, "distill")
        require_artifacts(tmp_path, "train-teacher")

    def test_unknown_stage(self, tmp_path):
        """Test that an unknown stage key is a programming error."""
        with pytest.raises(KeyError):
            require_artifacts(tmp_path, "finetune:nope")

    def test_provenance_history(self, tmp_path):
        """Test that each subcommand appends a provenance entry."""
        write_provenance(tmp_path, "train-teacher", "0.1.0")
        entry = write_provenance(tmp_path, "distill", "0.1.0")
        history = json.loads((tmp_path / "provenance.json").read_text())["history"]
        assert [h["subcommand"] for h in history] == ["train-teacher", "distill"]
        assert entry["package_version"] == "0.1.0"
        assert entry["code_revision"]
        assert entry["timestamp"]
