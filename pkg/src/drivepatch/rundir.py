"""Run-directory persistence.

Every run writes flat, diffable artifacts (PNG/CSV/JSON/SVG) plus an index
of content hashes so a run can be verified after the fact. JSON files embed
a schema version and are serialized canonically (sorted keys, fixed float
repr) so equal results are byte-equal files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

from . import SCHEMA_VERSION
from .nes import OptState
from .patch import Patch, save_patch

INDEX_NAME = "index.json"


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class RunDirectory:
    """Writer for one run's artifacts; one writer per directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def write_json(self, name: str, obj: dict) -> Path:
        payload = dict(obj)
        payload.setdefault("schema_version", SCHEMA_VERSION)
        return self.write_text(name, canonical_json(payload))

    def write_text(self, name: str, text: str) -> Path:
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        return target

    def write_bytes(self, name: str, data: bytes) -> Path:
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        return target

    def write_patch(self, name: str, patch: Patch, metadata: dict | None = None) -> Path:
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        save_patch(patch, target, metadata)
        return target

    def finalize_index(self) -> Path:
        files = {}
        for file in sorted(self.path.rglob("*")):
            if file.is_dir() or file.name == INDEX_NAME:
                continue
            rel = file.relative_to(self.path).as_posix()
            files[rel] = hashlib.sha256(file.read_bytes()).hexdigest()
        index = {"schema_version": SCHEMA_VERSION, "files": files}
        return self.write_text(INDEX_NAME, canonical_json(index))


def verify_run(path: str | Path) -> list[str]:
    """Recompute content hashes against the run index; returns mismatches."""
    path = Path(path)
    index_path = path / INDEX_NAME
    if not index_path.exists():
        return [f"missing {INDEX_NAME}"]
    index = json.loads(index_path.read_text(encoding="utf-8"))
    problems = []
    for rel, expected in index.get("files", {}).items():
        file = path / rel
        if not file.exists():
            problems.append(f"missing file: {rel}")
            continue
        actual = hashlib.sha256(file.read_bytes()).hexdigest()
        if actual != expected:
            problems.append(f"hash mismatch: {rel}")
    return problems


class CheckpointWriter:
    """Periodic optimizer checkpoints: patch PNG + metadata + loss history."""

    def __init__(self, rundir: RunDirectory, patch_template: Patch):
        self.rundir = rundir
        self.template = patch_template

    def __call__(self, state: OptState) -> None:
        name = f"checkpoints/patch_iter_{state.iteration:04d}.png"
        patch = Patch(state.theta, self.template.physical_width, self.template.physical_height)
        self.rundir.write_patch(
            name,
            patch,
            metadata={
                "iteration": state.iteration,
                "best_loss": state.best_loss,
                "candidate_evals": state.candidate_evals,
                "oracle_queries": state.oracle_queries,
            },
        )
        self.write_loss_history(state.loss_history, state.candidate_evals, state.oracle_queries)

    def write_loss_history(
        self, history: list[float], candidate_evals: int, oracle_queries: int
    ) -> None:
        # Counters in each row are cumulative through that iteration.
        n = len(history)
        per_iter_evals = candidate_evals // n if n else 0
        per_iter_queries = oracle_queries // n if n else 0
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "mean_loss", "best_loss", "candidate_evals", "oracle_queries"])
        best = None
        for i, loss in enumerate(history, start=1):
            best = loss if best is None else min(best, loss)
            writer.writerow(
                [i, repr(loss), repr(best), per_iter_evals * i, per_iter_queries * i]
            )
        self.rundir.write_text("loss_history.csv", buf.getvalue())


def serialize_trials(trials) -> dict:
    """JSON form of trial records; frame images are not persisted (success
    and detection flags are recomputable from the stored raw text)."""
    out = []
    for trial in trials:
        frames = []
        for f in trial.frames:
            frames.append(
                {
                    "index": f.index,
                    "distance_m": f.distance_m,
                    "raw_text": None if f.response is None else f.response.raw_text,
                    "parsed_action": None if f.response is None else f.response.parsed_action.value,
                    "success": f.success,
                    "critical_detected": f.critical_detected,
                    "query_failed": f.query_failed,
                }
            )
        out.append(
            {
                "trial_id": trial.trial_id,
                "scenario_name": trial.scenario_name,
                "condition": trial.condition,
                "frames": frames,
            }
        )
    return {"trials": out}
