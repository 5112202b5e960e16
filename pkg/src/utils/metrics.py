"""
Append-only JSONL metrics sink.

One MetricRecord per line. Non-finite values are written as null and counted
so the stream stays valid JSON.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricRecord:
    """A single scalar observation produced by a training or analysis stage."""

    run_id: str
    method: str
    stage: str
    step: int
    name: str
    value: float | None
    seed: int
    wall_time: float | None = None


class MetricsSink:
    """Line-buffered writer for MetricRecord streams."""

    def __init__(self, path: str | Path, record_wall_time: bool = False):
        """
        Open (append mode) the metrics file.

        Args:
            path: JSONL file, created with its parent directory if missing
            record_wall_time: Stamp records with time.time(); off by default for
                bit-identical streams
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.record_wall_time = record_wall_time
        self.nonfinite_count = 0
        self._handle = open(self.path, "a", encoding="utf-8")

    def emit(self, record: MetricRecord) -> None:
        """Append exactly one JSON line for `record`."""
        payload = asdict(record)
        value = payload["value"]
        if value is not None and not math.isfinite(float(value)):
            self.nonfinite_count += 1
            logger.warning(
                f"Non-finite metric {record.name}={value} at {record.stage}/{record.step}; "
                f"written as null ({self.nonfinite_count} so far)"
            )
            payload["value"] = None
        elif value is not None:
            payload["value"] = float(value)
        if self.record_wall_time and payload["wall_time"] is None:
            payload["wall_time"] = time.time()
        self._handle.write(json.dumps(payload, sort_keys=True) + "\n")

    def emit_many(
        self,
        run_id: str,
        method: str,
        stage: str,
        step: int,
        seed: int,
        values: dict[str, Any],
    ) -> None:
        """Emit one record per entry of `values`, in sorted name order."""
        for name in sorted(values):
            self.emit(
                MetricRecord(
                    run_id=run_id,
                    method=method,
                    stage=stage,
                    step=step,
                    name=name,
                    value=None if values[name] is None else float(values[name]),
                    seed=seed,
                )
            )

    def flush(self) -> None:
        """Flush buffered lines; called on stage boundaries."""
        self._handle.flush()

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.flush()
            self._handle.close()

    def __enter__(self) -> "MetricsSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def metrics_emit(sink: MetricsSink, record: MetricRecord) -> None:
    """Append `record` to `sink`; I/O failures propagate and abort the run."""
    try:
        sink.emit(record)
    except OSError as e:
        logger.error(f"Failed to write metrics to {sink.path}: {e}")
        raise


def read_metrics(path: str | Path, drop_wall_time: bool = False) -> list[MetricRecord]:
    """
    Parse a metrics JSONL file back into records.

    Args:
        path: JSONL file written by MetricsSink
        drop_wall_time: Blank the wall_time field (for determinism comparisons)

    Returns:
        Records in file order
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            if drop_wall_time:
                data["wall_time"] = None
            records.append(MetricRecord(**data))
    return records
