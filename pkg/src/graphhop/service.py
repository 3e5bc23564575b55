"""Rollout service: episode management over a line-oriented HTTP/JSON wire.

The transport layer is a thin shim over RolloutService, which steps the
same Episode objects the in-process runtime uses; transcripts are therefore
byte-identical whichever way an episode is driven. Per-episode operations
are serialized: a concurrent step on the same episode is rejected as a
conflict rather than queued.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

from .curriculum import CurriculumConfig, EmptyLevelError, partition_by_level, sample_instance
from .episode import Episode, EpisodeConfig, episode_log_record
from .rounds import label_question
from .store import GraphStore, QuestionInstance

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "v1"


class ServiceError(Exception):
    """Protocol-level failure mapped to an HTTP status and machine-readable
    reason."""

    def __init__(self, status: int, reason: str, detail: str = "") -> None:
        self.status = status
        self.reason = reason
        self.detail = detail
        super().__init__(f"{status} {reason}: {detail}")

    def payload(self) -> dict:
        return {
            "version": PROTOCOL_VERSION,
            "error": {"reason": self.reason, "detail": self.detail},
        }


class _ManagedEpisode:
    def __init__(self, episode_id: str, episode: Episode) -> None:
        self.episode_id = episode_id
        self.episode = episode
        self.lock = threading.Lock()
        self.aborted = False

    @property
    def status(self) -> str:
        return "terminated" if self.aborted or self.episode.terminated else "open"


class RolloutService:
    """Transport-independent episode registry and stepper."""

    def __init__(
        self,
        store: GraphStore,
        questions: Sequence[QuestionInstance],
        episode_config: EpisodeConfig | None = None,
        curriculum: CurriculumConfig | None = None,
        episode_log_path: str | Path | None = None,
    ) -> None:
        self._store = store
        self._questions = {q.question_id: q for q in questions}
        self._cfg = episode_config or EpisodeConfig()
        self._curriculum = curriculum
        self._levels = self._partition(questions) if curriculum is not None else None
        self._episodes: dict[str, _ManagedEpisode] = {}
        self._registry_lock = threading.Lock()
        self._episode_counter = 0
        self._curriculum_state = 0
        self._log_path = Path(episode_log_path) if episode_log_path else None
        self._log_lock = threading.Lock()

    def _partition(self, questions: Sequence[QuestionInstance]):
        assert self._curriculum is not None
        labeled = []
        for question in questions:
            if question.difficulty is None:
                derived = label_question(question, self._store).value
                question = QuestionInstance(
                    question_id=question.question_id,
                    question=question.question,
                    gold_answer=question.gold_answer,
                    domain=question.domain,
                    difficulty=derived,
                    reference_trajectory=question.reference_trajectory,
                )
            labeled.append(question)
        return partition_by_level(labeled, self._curriculum.levels_k)

    # -- operations ----------------------------------------------------------

    def health(self) -> dict:
        return {
            "version": PROTOCOL_VERSION,
            "status": "ok",
            "nodes": len(self._store),
            "questions": len(self._questions),
            "open_episodes": sum(1 for m in self._episodes.values() if m.status == "open"),
        }

    def create_episode(
        self, question_id: str | None = None, curriculum_step: int | None = None
    ) -> dict:
        if (question_id is None) == (curriculum_step is None):
            raise ServiceError(
                400, "bad_request", "provide exactly one of question_id or curriculum_step"
            )
        if question_id is not None:
            question = self._questions.get(question_id)
            if question is None:
                raise ServiceError(404, "unknown_question", question_id)
        else:
            if self._curriculum is None or self._levels is None:
                raise ServiceError(400, "curriculum_not_configured", "")
            try:
                with self._registry_lock:
                    state = self._curriculum_state
                    question, self._curriculum_state = sample_instance(
                        self._curriculum, int(curriculum_step or 0), self._levels, state
                    )
            except (EmptyLevelError, ValueError) as exc:
                raise ServiceError(400, "bad_curriculum_step", str(exc)) from exc
        with self._registry_lock:
            self._episode_counter += 1
            episode_id = f"ep-{self._episode_counter}"
            managed = _ManagedEpisode(episode_id, Episode(self._store, question, self._cfg))
            self._episodes[episode_id] = managed
        return {
            "version": PROTOCOL_VERSION,
            "episode_id": episode_id,
            "question_id": question.question_id,
            "question": question.question,
            "round": 0,
            "status": "open",
        }

    def _managed(self, episode_id: str) -> _ManagedEpisode:
        managed = self._episodes.get(episode_id)
        if managed is None:
            raise ServiceError(404, "unknown_episode", episode_id)
        return managed

    def step(self, episode_id: str, segment: str) -> dict:
        managed = self._managed(episode_id)
        if not managed.lock.acquire(blocking=False):
            raise ServiceError(409, "step_in_progress", episode_id)
        try:
            if managed.status == "terminated":
                raise ServiceError(409, "episode_terminated", episode_id)
            feedback = managed.episode.submit(segment)
            payload = {
                "version": PROTOCOL_VERSION,
                "episode_id": episode_id,
                "question_id": managed.episode.question.question_id,
                "round": feedback.round,
                "status": "terminated" if feedback.terminated else "open",
            }
            if feedback.terminated:
                episode = managed.episode
                assert episode.transcript is not None and episode.reward is not None
                payload["outcome"] = episode.outcome
                payload["reward"] = {
                    "em": episode.reward.em,
                    "vf": episode.reward.vf,
                    "ap": episode.reward.ap,
                    "reward": episode.reward.reward,
                }
                payload["transcript"] = episode.transcript.text
                payload["agent_mask"] = [list(span) for span in episode.agent_mask()]
                self._write_log(managed)
            else:
                payload["observation"] = feedback.observation
            return payload
        finally:
            managed.lock.release()

    def get_state(self, episode_id: str) -> dict:
        managed = self._managed(episode_id)
        episode = managed.episode
        return {
            "version": PROTOCOL_VERSION,
            "episode_id": episode_id,
            "question_id": episode.question.question_id,
            "round": episode.round,
            "status": managed.status,
            "transcript": episode.transcript_text,
            "outcome": episode.outcome,
        }

    def abort(self, episode_id: str) -> dict:
        managed = self._managed(episode_id)
        with managed.lock:
            if managed.status == "terminated":
                raise ServiceError(409, "episode_terminated", episode_id)
            managed.aborted = True
        return {
            "version": PROTOCOL_VERSION,
            "episode_id": episode_id,
            "round": managed.episode.round,
            "status": "terminated",
        }

    def _write_log(self, managed: _ManagedEpisode) -> None:
        if self._log_path is None:
            return
        record = episode_log_record(managed.episode.question, managed.episode)
        with self._log_lock:
            with open(self._log_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(record) + "\n")


# -- HTTP shim ------------------------------------------------------------------


class _ServiceHandler(BaseHTTPRequestHandler):
    service: RolloutService
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args) -> None:  # route access logs to logging
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_payload(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ServiceError(400, "bad_request", f"invalid JSON body: {exc}") from exc
        if not isinstance(payload, dict):
            raise ServiceError(400, "bad_request", "body must be a JSON object")
        if payload.get("version") != PROTOCOL_VERSION:
            raise ServiceError(
                400, "version_mismatch", f"expected version {PROTOCOL_VERSION!r}"
            )
        return payload

    def _route(self, method: str) -> None:
        try:
            parts = [p for p in self.path.split("/") if p]
            if not parts or parts[0] != PROTOCOL_VERSION:
                raise ServiceError(404, "unknown_route", self.path)
            if method == "GET" and parts[1:] == ["health"]:
                self._send(200, self.service.health())
            elif method == "POST" and parts[1:] == ["episodes"]:
                payload = self._read_payload()
                step = payload.get("curriculum_step")
                self._send(
                    200,
                    self.service.create_episode(
                        question_id=payload.get("question_id"),
                        curriculum_step=None if step is None else int(step),
                    ),
                )
            elif method == "GET" and len(parts) == 3 and parts[1] == "episodes":
                self._send(200, self.service.get_state(parts[2]))
            elif method == "POST" and len(parts) == 4 and parts[1] == "episodes":
                episode_id, action = parts[2], parts[3]
                if action == "step":
                    payload = self._read_payload()
                    if "segment" not in payload or not isinstance(payload["segment"], str):
                        raise ServiceError(400, "bad_request", "step needs a string 'segment'")
                    self._send(200, self.service.step(episode_id, payload["segment"]))
                elif action == "abort":
                    self._read_payload()
                    self._send(200, self.service.abort(episode_id))
                else:
                    raise ServiceError(404, "unknown_route", self.path)
            else:
                raise ServiceError(404, "unknown_route", self.path)
        except ServiceError as error:
            self._send(error.status, error.payload())

    def do_GET(self) -> None:
        self._route("GET")

    def do_POST(self) -> None:
        self._route("POST")


class ServiceServer:
    """Threaded HTTP server wrapper with clean start/stop for tests and the
    CLI. Binding port 0 picks an ephemeral port."""

    def __init__(self, service: RolloutService, host: str = "127.0.0.1", port: int = 0) -> None:
        handler = type("Handler", (_ServiceHandler,), {"service": service})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.02), daemon=True
        )

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
