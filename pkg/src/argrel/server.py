"""HTTP backend for human-in-the-loop labeling.

Hosts the external-oracle side of the active-learning loop: strategy-selected
propositions become head-centric annotation tasks (one head plus its window;
decisions are per candidate tail), submissions are validated against the
annotation constraints server-side, and a completed batch unblocks the next
AL iteration (train, evaluate, select).

Durability: an append-only events.jsonl in the state directory records
selections, accepted submissions, and completed iterations.  Restart replays
the log; model tensors are never persisted because training is
deterministic per seed, so recovery retrains exactly the same model.

Endpoints (all under /api/v1): GET /queue?limit=, POST /labels,
GET /progress, GET /doc/{doc_id}, GET /run.  Errors are JSON
{code, rule, message}.  Built frontend assets, when present, are served
statically from the configured directory.
"""

from __future__ import annotations

import json
import mimetypes
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .alloop import ALConfig, ActiveLearningRun, ALTrace
from .checkpoint import Checkpoint
from .corpus import FACTUAL_TYPES, SUBJECTIVE_TYPES, Corpus
from .metrics import fleiss_kappa
from .windows import window_for_head

LEASE_SECONDS = 600
DECISIONS = ("support", "attack", "none")

RULE_COVERAGE = "coverage"
RULE_DUPLICATE = "duplicate"
RULE_SINGLE_OUTGOING = "single-outgoing"
RULE_FACTUAL_HEAD = "factual-head"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, rule: str | None = None):
        super().__init__(message)
        self.status = status
        self.payload = {"code": code, "rule": rule, "message": message}


@dataclass
class Task:
    task_id: str
    iteration: int
    rank: int
    doc_id: str
    head: int
    candidates: list[int]
    status: str = "pending"  # pending | labeled
    lease: tuple[str, float] | None = None
    submissions: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {"task_id": self.task_id, "iteration": self.iteration,
                "rank": self.rank, "doc_id": self.doc_id, "head": self.head,
                "candidates": self.candidates}


def validate_submission_shape(candidates: list[int], decisions: list[dict]):
    """Coverage and duplicate checks shared with the client-side rules."""
    seen = set()
    for d in decisions:
        if not isinstance(d, dict) or "tail" not in d or "label" not in d:
            raise ApiError(400, "bad_request", "decision needs tail and label")
        if d["label"] not in DECISIONS:
            raise ApiError(400, "bad_request", f"unknown label {d['label']!r}")
        if d["tail"] in seen:
            raise ApiError(400, "constraint_violation",
                           f"duplicate decision for tail {d['tail']}",
                           rule=RULE_DUPLICATE)
        seen.add(d["tail"])
    if seen != set(candidates):
        raise ApiError(400, "constraint_violation",
                       "decisions must cover exactly the task's candidates",
                       rule=RULE_COVERAGE)


class AnnotationService:
    """Owns the AL engine, the task queue, and the labeled store."""

    def __init__(self, pool_corpus: Corpus, test_corpus: Corpus, cfg: ALConfig,
                 state_dir, warm_start: Checkpoint | None = None,
                 overlap: bool = False):
        self.lock = threading.RLock()
        self.pool_corpus = pool_corpus
        self.cfg = cfg
        self.overlap = overlap
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.state_dir / "events.jsonl"
        self.engine = ActiveLearningRun(pool_corpus, test_corpus, cfg, warm_start)
        self.docs = {d.doc_id: d for d in pool_corpus.documents}
        self.tasks: dict[str, Task] = {}
        self.current_batch: list[tuple[str, int]] = []
        # (doc_id, tail) -> (head, label); authoritative labeled relations
        self.outgoing: dict[tuple[str, int], tuple[int, str]] = {}
        self.done_event = threading.Event()
        self._task_counter = 0
        if self.events_path.exists():
            self._replay()
        if not self.current_batch and not self.engine.done:
            self._start_iteration()
        if self.engine.done:
            self.done_event.set()

    # -- event log ---------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def _replay(self) -> None:
        with open(self.events_path, encoding="utf-8") as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        for event in events:
            kind = event["type"]
            if kind == "batch_selected":
                self.current_batch = [tuple(k) for k in event["selected"]]
                self.tasks = {
                    t["task_id"]: Task(task_id=t["task_id"],
                                       iteration=t["iteration"], rank=t["rank"],
                                       doc_id=t["doc_id"], head=t["head"],
                                       candidates=list(t["candidates"]))
                    for t in event["tasks"]
                }
                self._task_counter = max(
                    (int(tid.split("-")[-1]) for tid in self.tasks), default=0)
            elif kind == "submission":
                task = self.tasks[event["task_id"]]
                task.submissions.append(event)
                if event["authoritative"]:
                    task.status = "labeled"
                    self._store_relations(task, event["decisions"])
            elif kind == "iteration_complete":
                self.engine.ingest_batch(self.current_batch,
                                         self._revealed_for(self.current_batch))
                self.engine.trace.records.append(event["record"])
                self.engine.iteration = event["record"]["iteration"]
                self.current_batch = []
                self.tasks = {}
        if self._batch_complete() and self.current_batch:
            self._complete_iteration()
        elif self.engine.iteration > 0 and not self.engine.done:
            # model tensors are not persisted; retraining is deterministic
            self.engine.rebuild_model()

    # -- iteration control -------------------------------------------------

    def _next_task_id(self) -> str:
        self._task_counter += 1
        return f"task-{self._task_counter:06d}"

    def _start_iteration(self) -> None:
        while not self.engine.done:
            batch = self.engine.select_batch()
            tasks = self._make_tasks(batch)
            self.current_batch = batch
            self.tasks = {t.task_id: t for t in tasks}
            self._append_event({
                "type": "batch_selected",
                "iteration": self.engine.iteration + 1,
                "selected": [list(k) for k in batch],
                "tasks": [t.to_record() for t in tasks],
            })
            if tasks:
                return
            self._complete_iteration()  # nothing to ask; labels are vacuous
        self.done_event.set()

    def _make_tasks(self, batch: list[tuple[str, int]]) -> list[Task]:
        batch_set = set(batch)
        labeled = self.engine.pools.labeled
        tasks = []
        covered: set[tuple[str, int, int]] = set()
        for rank, (doc_id, pid) in enumerate(batch):
            doc = self.docs[doc_id]
            context = window_for_head(doc, pid, self.cfg.window)
            partners = [i for i in context
                        if i != pid and ((doc_id, i) in labeled
                                         or (doc_id, i) in batch_set)]
            cands = [i for i in partners if (doc_id, pid, i) not in covered]
            if cands:
                tasks.append(Task(task_id=self._next_task_id(),
                                  iteration=self.engine.iteration + 1,
                                  rank=rank, doc_id=doc_id, head=pid,
                                  candidates=cands))
                covered.update((doc_id, pid, i) for i in cands)
            # pairs where the new proposition is the candidate tail of an
            # already-labeled head still need a decision
            for q in partners:
                if (doc_id, q) in labeled and (doc_id, q, pid) not in covered:
                    tasks.append(Task(task_id=self._next_task_id(),
                                      iteration=self.engine.iteration + 1,
                                      rank=rank, doc_id=doc_id, head=q,
                                      candidates=[pid]))
                    covered.add((doc_id, q, pid))
        return tasks

    def _batch_complete(self) -> bool:
        return all(t.status == "labeled" for t in self.tasks.values())

    def _revealed_for(self, batch) -> dict:
        revealed = {}
        for (doc_id, tail), (head, label) in self.outgoing.items():
            revealed[(doc_id, head, tail)] = label
        return revealed

    def _complete_iteration(self) -> None:
        self.engine.ingest_batch(self.current_batch,
                                 self._revealed_for(self.current_batch))
        record = self.engine.train_and_evaluate(self.current_batch)
        self._append_event({"type": "iteration_complete",
                            "iteration": record["iteration"], "record": record})
        self.current_batch = []
        self.tasks = {}
        if self.engine.done:
            self.done_event.set()
        else:
            self._start_iteration()

    def _store_relations(self, task: Task, decisions: list[dict]) -> None:
        for d in decisions:
            if d["label"] in ("support", "attack"):
                self.outgoing[(task.doc_id, d["tail"])] = (task.head, d["label"])

    # -- API operations ----------------------------------------------------

    def get_queue(self, limit: int, annotator: str) -> list[dict]:
        with self.lock:
            if self.engine.done:
                raise ApiError(409, "no_active_run", "the run has completed")
            now = time.monotonic()
            out = []
            pending = sorted((t for t in self.tasks.values()
                              if t.status == "pending"),
                             key=lambda t: (t.rank, t.task_id))
            for task in pending:
                if len(out) >= max(limit, 0):
                    break
                if task.lease and task.lease[1] > now and task.lease[0] != annotator:
                    if not self.overlap:
                        continue
                if any(s["annotator"] == annotator for s in task.submissions):
                    continue
                task.lease = (annotator, now + LEASE_SECONDS)
                out.append(self._task_payload(task))
            return out

    def _task_payload(self, task: Task) -> dict:
        doc = self.docs[task.doc_id]
        context = window_for_head(doc, task.head, self.cfg.window)
        return {
            "task_id": task.task_id,
            "iteration": task.iteration,
            "doc_id": task.doc_id,
            "head": task.head,
            "head_type": doc.propositions[task.head].ptype,
            "candidates": task.candidates,
            # lets the client mirror server-side constraints before posting
            "candidate_states": [
                {"id": i, "type": doc.propositions[i].ptype,
                 "has_outgoing": (task.doc_id, i) in self.outgoing}
                for i in task.candidates
            ],
            "window": [
                {"id": i, "text": doc.propositions[i].text,
                 "type": doc.propositions[i].ptype}
                for i in context
            ],
        }

    def submit_labels(self, payload: dict) -> dict:
        with self.lock:
            task_id = payload.get("task_id")
            annotator = payload.get("annotator") or "anon"
            decisions = payload.get("decisions")
            if not task_id or not isinstance(decisions, list):
                raise ApiError(400, "bad_request",
                               "need task_id and a decisions array")
            task = self.tasks.get(task_id)
            if task is None:
                raise ApiError(404, "not_found", f"unknown task {task_id!r}")
            if any(s["annotator"] == annotator for s in task.submissions):
                raise ApiError(409, "conflict",
                               "this annotator already labeled the task")
            max_subs = 2 if self.overlap else 1
            if len(task.submissions) >= max_subs:
                raise ApiError(409, "conflict", "task is already labeled")
            validate_submission_shape(task.candidates, decisions)
            authoritative = task.status == "pending"
            if authoritative:
                self._validate_constraints(task, decisions)
            event = {"type": "submission", "task_id": task_id,
                     "annotator": annotator, "decisions": decisions,
                     "authoritative": authoritative}
            self._append_event(event)
            task.submissions.append(event)
            if authoritative:
                task.status = "labeled"
                self._store_relations(task, decisions)
            completed = self._batch_complete()
            if completed and self.current_batch:
                self._complete_iteration()
            return {"accepted": True, "task_id": task_id,
                    "iteration_advanced": completed}

    def _validate_constraints(self, task: Task, decisions: list[dict]) -> None:
        doc = self.docs[task.doc_id]
        head_type = doc.propositions[task.head].ptype
        for d in decisions:
            if d["label"] == "none":
                continue
            tail_key = (task.doc_id, d["tail"])
            if tail_key in self.outgoing:
                raise ApiError(
                    400, "constraint_violation",
                    f"proposition {d['tail']} already supports or attacks "
                    f"proposition {self.outgoing[tail_key][0]}",
                    rule=RULE_SINGLE_OUTGOING)
            tail_type = doc.propositions[d["tail"]].ptype
            if head_type in FACTUAL_TYPES and tail_type in SUBJECTIVE_TYPES:
                raise ApiError(
                    400, "constraint_violation",
                    f"factual head ({head_type}) cannot be {d['label']}ed "
                    f"by a subjective proposition ({tail_type})",
                    rule=RULE_FACTUAL_HEAD)

    def progress(self) -> dict:
        with self.lock:
            per_annotator: dict[str, int] = {}
            for task in self.tasks.values():
                for sub in task.submissions:
                    per_annotator[sub["annotator"]] = \
                        per_annotator.get(sub["annotator"], 0) + 1
            return {
                "iteration": self.engine.iteration + (0 if self.engine.done else 1),
                "iterations_total": self.cfg.iterations,
                "labeled_size": len(self.engine.pools.labeled),
                "pending": sum(1 for t in self.tasks.values()
                               if t.status == "pending"),
                "done": self.engine.done,
                "per_annotator": per_annotator,
                "kappa": self._agreement_kappa(),
                "records": self.engine.trace.records,
            }

    def _agreement_kappa(self) -> float | None:
        rows = []
        cat_index = {c: i for i, c in enumerate(DECISIONS)}
        for task in self.tasks.values():
            if len(task.submissions) < 2:
                continue
            first, second = task.submissions[:2]
            by_tail = [
                {d["tail"]: d["label"] for d in first["decisions"]},
                {d["tail"]: d["label"] for d in second["decisions"]},
            ]
            for tail in task.candidates:
                row = np.zeros(len(DECISIONS))
                for labels in by_tail:
                    row[cat_index[labels[tail]]] += 1
                rows.append(row)
        if not rows:
            return None
        return float(fleiss_kappa(np.stack(rows)))

    def doc_payload(self, doc_id: str) -> dict:
        doc = self.docs.get(doc_id)
        if doc is None:
            raise ApiError(404, "not_found", f"unknown document {doc_id!r}")
        return {
            "doc_id": doc.doc_id,
            "propositions": [{"id": p.id, "text": p.text, "type": p.ptype}
                             for p in doc.propositions],
        }

    def run_info(self) -> dict:
        return {
            "strategy": self.cfg.strategy,
            "iterations": self.cfg.iterations,
            "budget": self.engine.budget,
            "oracle": "external",
            "overlap": self.overlap,
            "window": self.cfg.window.window,
            "done": self.engine.done,
        }

    @property
    def trace(self) -> ALTrace:
        return self.engine.trace


# ---------------------------------------------------------------------------
# HTTP layer

class _Handler(BaseHTTPRequestHandler):
    server_version = "argrel-annotate/1"

    @property
    def service(self) -> AnnotationService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _annotator(self) -> str:
        return self.headers.get("X-Annotator", "anon")

    def do_GET(self):
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts[:2] == ["api", "v1"]:
                route = parts[2:]
                if route == ["queue"]:
                    params = parse_qs(url.query)
                    limit = int(params.get("limit", ["10"])[0])
                    self._send_json(200, self.service.get_queue(
                        limit, self._annotator()))
                elif route == ["progress"]:
                    self._send_json(200, self.service.progress())
                elif route == ["run"]:
                    self._send_json(200, self.service.run_info())
                elif len(route) == 2 and route[0] == "doc":
                    self._send_json(200, self.service.doc_payload(route[1]))
                else:
                    raise ApiError(404, "not_found", "unknown endpoint")
            else:
                self._serve_static(url.path)
        except ApiError as err:
            self._send_json(err.status, err.payload)
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"code": "internal", "rule": None,
                                  "message": str(exc)})

    def do_POST(self):
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts == ["api", "v1", "labels"]:
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError as exc:
                    raise ApiError(400, "bad_request",
                                   f"invalid JSON body: {exc.msg}") from exc
                if "annotator" not in payload:
                    payload["annotator"] = self._annotator()
                self._send_json(200, self.service.submit_labels(payload))
            else:
                raise ApiError(404, "not_found", "unknown endpoint")
        except ApiError as err:
            self._send_json(err.status, err.payload)
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"code": "internal", "rule": None,
                                  "message": str(exc)})

    def _serve_static(self, path: str) -> None:
        static_dir = getattr(self.server, "static_dir", None)
        if static_dir is None:
            raise ApiError(404, "not_found", "no static assets configured")
        rel = path.lstrip("/") or "index.html"
        target = (Path(static_dir) / rel).resolve()
        if not str(target).startswith(str(Path(static_dir).resolve())) \
                or not target.is_file():
            raise ApiError(404, "not_found", f"no such asset: {rel}")
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class AnnotationServer:
    """ThreadingHTTPServer wrapper bound to an AnnotationService."""

    def __init__(self, service: AnnotationService, host: str = "127.0.0.1",
                 port: int = 8765, static_dir=None):
        self.service = service
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.service = service  # type: ignore[attr-defined]
        self.httpd.static_dir = static_dir  # type: ignore[attr-defined]
        self.thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self.thread = threading.Thread(target=self.httpd.serve_forever,
                                       daemon=True)
        self.thread.start()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self.thread:
            self.thread.join(timeout=5)


def run_external(pool_corpus: Corpus, test_corpus: Corpus, cfg: ALConfig,
                 state_dir, port: int = 8765, warm_start=None,
                 overlap: bool = False, static_dir=None,
                 timeout: float | None = None) -> ALTrace:
    """Blocking external-oracle run: serve the annotation API until the loop
    completes (or the timeout passes, leaving resumable state behind)."""
    service = AnnotationService(pool_corpus, test_corpus, cfg, state_dir,
                                warm_start=warm_start, overlap=overlap)
    server = AnnotationServer(service, port=port, static_dir=static_dir)
    server.start()
    try:
        finished = service.done_event.wait(timeout=timeout)
        trace = service.trace
        trace.suspended = not finished
        return trace
    finally:
        server.shutdown()
