"""
Run-directory state.

Tracks which artifacts a run directory already holds, so later stages can
refuse to start without the checkpoints they build on, and stamps every run
with its provenance.
"""

import json
import logging
import subprocess
from datetime import datetime, timezone
from pathlib import Path

from .errors import PreconditionError

logger = logging.getLogger(__name__)

PROVENANCE_FILE = "provenance.json"
CHECKPOINT_DIR = "checkpoints"
REPORT_DIR = "reports"

# Artifact stems under checkpoints/
TEACHER = "teacher"
STUDENT = "student"
SURROGATE = "surrogate"
CLASSIFIER = "classifier"

FINETUNE_METHODS = ("lasro", "ddpo", "rwr", "gors", "direct", "altft")

# Checkpoints each subcommand (and fine-tuning method) builds on
PREREQUISITES: dict[str, tuple[str, ...]] = {
    "train-teacher": (),
    "distill": (TEACHER,),
    "pretrain-reward": (TEACHER, STUDENT),
    "finetune:lasro": (TEACHER, STUDENT, SURROGATE),
    "finetune:altft": (TEACHER, STUDENT, SURROGATE),
    "finetune:ddpo": (TEACHER, STUDENT),
    "finetune:rwr": (TEACHER, STUDENT),
    "finetune:gors": (TEACHER, STUDENT),
    "finetune:direct": (TEACHER, STUDENT),
    "analyze:td": (TEACHER, STUDENT, SURROGATE),
    "analyze:lipschitz": (TEACHER, STUDENT),
    "analyze:diversity": (TEACHER, STUDENT),
    "analyze:fidelity": (TEACHER, STUDENT),
    "report": (TEACHER, STUDENT),
}


def checkpoint_path(run_dir: str | Path, stem: str) -> Path:
    """Payload path of a named artifact inside a run (or seed) directory."""
    return Path(run_dir) / CHECKPOINT_DIR / f"{stem}.joblib"


def report_path(run_dir: str | Path, name: str) -> Path:
    path = Path(run_dir) / REPORT_DIR / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def has_artifact(run_dir: str | Path, stem: str) -> bool:
    path = checkpoint_path(run_dir, stem)
    return path.exists() and path.with_suffix(".json").exists()


def require_artifacts(run_dir: str | Path, key: str) -> None:
    """
    Check that every prerequisite of `key` exists in `run_dir`.

    Args:
        run_dir: Seed directory holding checkpoints/
        key: Subcommand, or "finetune:<method>" / "analyze:<probe>"

    Raises:
        PreconditionError: naming the first missing artifact
    """
    if key not in PREREQUISITES:
        raise KeyError(f"Unknown stage: {key}")
    for stem in PREREQUISITES[key]:
        if not has_artifact(run_dir, stem):
            missing = checkpoint_path(run_dir, stem)
            logger.error(f"{key} needs {missing}; run the producing stage first")
            raise PreconditionError(
                stem, f"{key} requires the '{stem}' checkpoint ({missing}), which does not exist"
            )


def _code_revision() -> str:
    try:
        result = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=str(Path(__file__).parent),
            capture_output=True,
            text=True,
            check=True,
        )
        return result.stdout.strip()
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def write_provenance(run_dir: str | Path, subcommand: str, version: str) -> dict:
    """
    Stamp the run directory with code revision and timestamp.

    Each subcommand appends its own entry so the file records the run's history.
    """
    path = Path(run_dir) / PROVENANCE_FILE
    path.parent.mkdir(parents=True, exist_ok=True)

    history = []
    if path.exists():
        try:
            history = json.loads(path.read_text()).get("history", [])
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Error reading provenance file: {e}")

    entry = {
        "subcommand": subcommand,
        "code_revision": _code_revision(),
        "package_version": version,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    history.append(entry)
    path.write_text(json.dumps({"history": history}, indent=2))
    logger.info(f"Provenance stamped: {subcommand} @ {entry['code_revision']}")
    return entry
