"""HTTP client for the rollout service's v1 wire protocol.

The client is a transport plus masking adapter for external training loops:
it drives episodes segment by segment, reconstructs the transcript exactly
as the server does, and hands back the terminal reward and agent-mask
intervals verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import requests

PROTOCOL_VERSION = "v1"

SegmentProvider = Callable[[str], str]


class ClientError(Exception):
    """Base class for client failures."""


class TransportError(ClientError):
    """Network-level failure; safe to retry."""


class ProtocolError(ClientError):
    """The server rejected the request; carries its machine-readable reason."""

    def __init__(self, status: int, reason: str, detail: str = "") -> None:
        self.status = status
        self.reason = reason
        self.detail = detail
        super().__init__(f"{status} {reason}: {detail}")


@dataclass(frozen=True)
class RolloutResult:
    """Terminal payload of one episode, exactly as the server reported it."""

    episode_id: str
    transcript: str
    reward: dict
    agent_mask: tuple[tuple[int, int], ...]
    outcome: str
    rounds: int


class ClientSession:
    """One connection to a rollout service.

    The constructor performs a health handshake and rejects servers that
    advertise a protocol version other than v1.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()
        health = self._request("GET", "/v1/health")
        version = health.get("version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                200, "version_mismatch", f"server speaks {version!r}, need {PROTOCOL_VERSION!r}"
            )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ClientSession:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- wire calls -----------------------------------------------------------

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        if payload is not None:
            payload = {"version": PROTOCOL_VERSION, **payload}
        try:
            response = self._http.request(
                method, self.endpoint + path, json=payload, timeout=self.timeout
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(str(exc)) from exc
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(response.status_code, "unparseable_response", str(exc)) from exc
        if response.status_code != 200:
            error = body.get("error", {})
            raise ProtocolError(
                response.status_code,
                error.get("reason", "unknown"),
                error.get("detail", ""),
            )
        return body

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def create_episode(
        self, question_id: str | None = None, curriculum_step: int | None = None
    ) -> dict:
        payload: dict = {}
        if question_id is not None:
            payload["question_id"] = question_id
        if curriculum_step is not None:
            payload["curriculum_step"] = curriculum_step
        return self._request("POST", "/v1/episodes", payload)

    def step(self, episode_id: str, segment: str) -> dict:
        return self._request("POST", f"/v1/episodes/{episode_id}/step", {"segment": segment})

    def get_state(self, episode_id: str) -> dict:
        return self._request("GET", f"/v1/episodes/{episode_id}")

    def abort(self, episode_id: str) -> dict:
        return self._request("POST", f"/v1/episodes/{episode_id}/abort", {})


def run_rollout(
    session: ClientSession,
    question_id: str,
    segment_provider: SegmentProvider,
) -> RolloutResult:
    """Drive one episode to termination.

    segment_provider maps the transcript-so-far to the next agent segment.
    The local transcript mirrors the server's composition rule (single
    newline between segments and observations), and the terminal payload is
    returned verbatim.
    """
    created = session.create_episode(question_id=question_id)
    episode_id = created["episode_id"]
    transcript = ""
    while True:
        segment = segment_provider(transcript)
        response = session.step(episode_id, segment)
        if response["status"] == "terminated":
            return RolloutResult(
                episode_id=episode_id,
                transcript=response["transcript"],
                reward=response["reward"],
                agent_mask=tuple((start, end) for start, end in response["agent_mask"]),
                outcome=response["outcome"],
                rounds=response["round"],
            )
        transcript += ("\n" if transcript else "") + segment
        transcript += "\n" + response["observation"]
