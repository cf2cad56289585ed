import json

import pytest
import requests

from ultima.llm import API_KEY_ENV, BadReplyError, ChatClient, ChatConfig, MockChatClient, TransportError


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload else "")

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def reply(content):
    return FakeResponse(payload={"choices": [{"message": {"content": content}}]})


def make_client(outcomes, **kwargs):
    config = ChatConfig(retry_wait=0.0, **kwargs)
    session = FakeSession(outcomes)
    return ChatClient(config, session=session), session


def test_complete_happy_path(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sk-test")
    client, session = make_client([reply("hello")])
    assert client.complete("sys", "usr") == "hello"
    sent = session.requests[0]
    assert sent["json"]["messages"][0] == {"role": "system", "content": "sys"}
    assert sent["json"]["messages"][1] == {"role": "user", "content": "usr"}
    assert sent["headers"]["Authorization"] == "Bearer sk-test"


def test_no_key_no_auth_header(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    client, session = make_client([reply("x")])
    client.complete("s", "u")
    assert "Authorization" not in session.requests[0]["headers"]


def test_retries_transport_errors_then_succeeds():
    client, session = make_client([
        requests.ConnectionError("down"),
        FakeResponse(status_code=503, text="overloaded"),
        reply("ok"),
    ])
    assert client.complete("s", "u") == "ok"
    assert len(session.requests) == 3


def test_gives_up_after_max_retries():
    client, _ = make_client([requests.ConnectionError("down")] * 3, max_retries=3)
    with pytest.raises(TransportError):
        client.complete("s", "u")


def test_client_error_not_retried():
    client, session = make_client([FakeResponse(status_code=401, text="bad key")])
    with pytest.raises(TransportError, match="401"):
        client.complete("s", "u")
    assert len(session.requests) == 1


def test_malformed_payload_raises_bad_reply():
    client, _ = make_client([FakeResponse(payload={"nope": 1})])
    with pytest.raises(BadReplyError):
        client.complete("s", "u")


def test_mock_client_scripts_and_records():
    mock = MockChatClient(["a", "b"])
    assert mock.complete("s1", "u1") == "a"
    assert mock.complete("s2", "u2") == "b"
    assert mock.complete("s3", "u3") == "b"  # last reply repeats
    assert mock.calls == [("s1", "u1"), ("s2", "u2"), ("s3", "u3")]


def test_mock_client_callable():
    mock = MockChatClient(lambda s, u: u.upper())
    assert mock.complete("s", "hi") == "HI"
