"""Subjective-study service: assignment issuance, rating collection, export.

Coverage-first policy: the next assignment for a rater is an item they
have never seen with the fewest completed ratings, chosen at random
among equals under the run seed. A rater never receives the same
(triplet, method) twice, even after expiry; expired assignments return
to the pool for other raters. State is an event log plus an append-only
ratings file, replayed on startup.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .core import HumanRating, utc_now_iso

RATINGS_FILE = "ratings.jsonl"
EVENTS_FILE = "assignments.jsonl"
DEFAULT_EXPIRY_S = 30 * 60

# Plain-language rubric summaries shown to raters, in dimension order.
DIMENSIONS = (
    {"key": "s_bg", "title": "Background",
     "question": "Is everything outside the clothing unchanged from the reference photo?"},
    {"key": "s_id", "title": "Person identity",
     "question": "Are the face, skin tone, and body (hands, arms) the same person, intact?"},
    {"key": "s_tex", "title": "Garment texture",
     "question": "Are logos, prints, and fabric details faithful to the garment photo?"},
    {"key": "s_shape", "title": "Garment shape",
     "question": "Do the cut, sleeve length, neckline, and fit match the garment photo?"},
    {"key": "s_real", "title": "Overall realism",
     "question": "Does the image look like a real photo (lighting, shadows, folds)?"},
)


class StudyError(Exception):
    status_code = 400


class UnknownAssignmentError(StudyError):
    status_code = 404


class NotOwnerError(StudyError):
    status_code = 403


class AlreadyRatedError(StudyError):
    status_code = 409


class ExpiredAssignmentError(StudyError):
    status_code = 410


class BadScoresError(StudyError):
    status_code = 422


@dataclass(frozen=True)
class StudyItem:
    triplet_id: str
    method_id: str
    garment_url: str
    ground_truth_url: str
    generated_url: str

    @property
    def key(self):
        return (self.triplet_id, self.method_id)


@dataclass
class Assignment:
    assignment_id: str
    rater_id: str
    triplet_id: str
    method_id: str
    issued_at: float
    state: str = "pending"  # pending | rated | expired

    @property
    def key(self):
        return (self.triplet_id, self.method_id)


class StudyState:
    """All mutation happens under one lock (single-writer semantics)."""

    def __init__(self, items, data_dir, seed: int = 0,
                 expiry_s: float = DEFAULT_EXPIRY_S, clock=time.time):
        self.items = {item.key: item for item in items}
        if len(self.items) != len(items):
            raise StudyError("duplicate (triplet, method) items in the roster")
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.expiry_s = expiry_s
        self.clock = clock
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()
        self._assignments: dict[str, Assignment] = {}
        self._issued: set[tuple[str, tuple[str, str]]] = set()  # (rater, item key)
        self._completed: dict[tuple[str, str], int] = {k: 0 for k in self.items}
        self._counter = 0
        self._replay()

    # -- persistence ----------------------------------------------------

    def _events_path(self) -> Path:
        return self.data_dir / EVENTS_FILE

    def _ratings_path(self) -> Path:
        return self.data_dir / RATINGS_FILE

    def _append(self, path: Path, obj: dict) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")

    def _replay(self) -> None:
        if os.path.exists(self._events_path()):
            with open(self._events_path(), "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    self._apply(event)
        # Expire stale pending assignments from a previous run.
        self._sweep_expired(persist=False)

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "issued":
            a = Assignment(event["assignment_id"], event["rater_id"],
                           event["triplet_id"], event["method_id"],
                           float(event["issued_at"]))
            self._assignments[a.assignment_id] = a
            self._issued.add((a.rater_id, a.key))
            self._counter = max(self._counter, int(a.assignment_id.split("-")[1]))
        elif kind in ("rated", "expired"):
            a = self._assignments.get(event["assignment_id"])
            if a is not None:
                a.state = "rated" if kind == "rated" else "expired"
                if kind == "rated":
                    self._completed[a.key] = self._completed.get(a.key, 0) + 1

    # -- assignment policy ----------------------------------------------

    def _sweep_expired(self, persist: bool = True) -> None:
        now = self.clock()
        for a in self._assignments.values():
            if a.state == "pending" and now - a.issued_at > self.expiry_s:
                a.state = "expired"
                if persist:
                    self._append(self._events_path(),
                                 {"event": "expired", "assignment_id": a.assignment_id})

    def next_assignment(self, rater_id: str) -> Assignment | None:
        """Fewest-completed-ratings first; returns None when the rater is done."""
        if not rater_id:
            raise BadScoresError("rater token required")
        with self._lock:
            self._sweep_expired()
            candidates = [key for key in sorted(self.items)
                          if (rater_id, key) not in self._issued]
            if not candidates:
                return None
            fewest = min(self._completed[k] for k in candidates)
            pool = [k for k in candidates if self._completed[k] == fewest]
            choice = pool[int(self._rng.integers(len(pool)))]
            self._counter += 1
            assignment = Assignment(
                assignment_id=f"a-{self._counter:06d}",
                rater_id=rater_id,
                triplet_id=choice[0],
                method_id=choice[1],
                issued_at=self.clock(),
            )
            self._assignments[assignment.assignment_id] = assignment
            self._issued.add((rater_id, choice))
            self._append(self._events_path(), {
                "event": "issued", "assignment_id": assignment.assignment_id,
                "rater_id": rater_id, "triplet_id": choice[0], "method_id": choice[1],
                "issued_at": assignment.issued_at,
            })
            return assignment

    def submit_rating(self, assignment_id: str, rater_id: str, scores) -> HumanRating:
        scores = list(scores)
        if len(scores) != 5 or any(
                not isinstance(s, int) or isinstance(s, bool) or not 1 <= s <= 5
                for s in scores):
            raise BadScoresError("scores must be five integers in 1..5")
        with self._lock:
            self._sweep_expired()
            assignment = self._assignments.get(assignment_id)
            if assignment is None:
                raise UnknownAssignmentError(f"unknown assignment {assignment_id}")
            if assignment.rater_id != rater_id:
                raise NotOwnerError("assignment belongs to a different rater")
            if assignment.state == "rated":
                raise AlreadyRatedError("assignment already rated")
            if assignment.state == "expired":
                raise ExpiredAssignmentError("assignment expired")
            rating = HumanRating(
                triplet_id=assignment.triplet_id,
                method_id=assignment.method_id,
                rater_id=rater_id,
                scores=tuple(scores),
                timestamp=utc_now_iso(),
            )
            self._append(self._ratings_path(), asdict(rating))
            assignment.state = "rated"
            self._completed[assignment.key] += 1
            self._append(self._events_path(),
                         {"event": "rated", "assignment_id": assignment_id})
            return rating

    def export_ratings(self) -> list[HumanRating]:
        path = self._ratings_path()
        if not os.path.exists(path):
            return []
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    obj = json.loads(line)
                    out.append(HumanRating(obj["triplet_id"], obj["method_id"],
                                           obj["rater_id"], tuple(obj["scores"]),
                                           obj["timestamp"]))
        return out

    def progress(self) -> dict:
        with self._lock:
            counts = sorted(self._completed.values())
            return {
                "items_total": len(self.items),
                "ratings_total": sum(counts),
                "items_fully_covered": sum(1 for c in counts if c >= 2),
                "min_ratings_per_item": counts[0] if counts else 0,
                "pending_assignments": sum(
                    1 for a in self._assignments.values() if a.state == "pending"),
            }


def create_app(state: StudyState, images_root=None, ui_dir=None) -> FastAPI:
    """FastAPI wiring; all logic lives in StudyState."""
    app = FastAPI(title="vton-eval study service")

    @app.exception_handler(StudyError)
    async def study_error_handler(request: Request, exc: StudyError):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc)})

    @app.get("/api/task")
    def next_task(rater: str = ""):
        assignment = state.next_assignment(rater)
        if assignment is None:
            return Response(status_code=204)
        item = state.items[assignment.key]
        return {
            "assignment_id": assignment.assignment_id,
            "triplet_id": assignment.triplet_id,
            "method_id": assignment.method_id,
            "images": {
                "garment": item.garment_url,
                "ground_truth": item.ground_truth_url,
                "generated": item.generated_url,
            },
            "dimensions": list(DIMENSIONS),
            "progress": state.progress(),
        }

    @app.post("/api/rating")
    async def submit(request: Request):
        body = await request.json()
        rating = state.submit_rating(
            assignment_id=str(body.get("assignment_id", "")),
            rater_id=str(body.get("rater_id", "")),
            scores=body.get("scores", []),
        )
        return {"status": "ok", "triplet_id": rating.triplet_id,
                "method_id": rating.method_id}

    @app.get("/api/progress")
    def progress():
        return state.progress()

    @app.get("/api/export")
    def export():
        return [asdict(r) for r in state.export_ratings()]

    if images_root is not None:
        app.mount("/images", StaticFiles(directory=str(images_root)), name="images")
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
