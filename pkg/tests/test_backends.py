from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from cxrtutor.backends import (
    BackendReply,
    RemoteTextBackend,
    RemoteVisionBackend,
    StubTextBackend,
    StubVisionBackend,
    TextGenRequest,
    VisionReasonRequest,
    fnv1a64,
)
from cxrtutor.errors import (
    BackendHttpError,
    BackendMisconfigured,
    BackendTimeout,
    ImageTooLarge,
    InvariantViolation,
)


def test_fnv1a64_known_vectors():
    # published FNV-1a test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_stub_text_deterministic():
    stub = StubTextBackend()
    req = TextGenRequest(
        system_prompt="sys",
        user_messages=("[[TASK]] respond", "[[SECTIONS]] keep going"),
        tag="t",
    )
    first = stub.text_generate(req)
    second = stub.text_generate(req)
    assert first.text == second.text
    assert first.backend_id == "stub-text"


def test_stub_assess_rules():
    stub = StubTextBackend()
    message = (
        "[[TASK]] assess\n"
        "[[CASE_CATEGORIES]] air-space finding ; size/measurement\n"
        "[[STUDENT_TEXT]] I think there is air space disease here"
    )
    reply = stub.text_generate(
        TextGenRequest(system_prompt="s", user_messages=(message,))
    )
    assert "ASSESS_R: air-space finding" in reply.text
    assert "ASSESS_M: size/measurement" in reply.text
    assert "ASSESS_I:" in reply.text


def test_stub_assess_negation_becomes_correction():
    stub = StubTextBackend()
    message = (
        "[[TASK]] assess\n"
        "[[CASE_CATEGORIES]] pleural air finding\n"
        "[[STUDENT_TEXT]] there is no pleural abnormality"
    )
    reply = stub.text_generate(
        TextGenRequest(system_prompt="s", user_messages=(message,))
    )
    assert "ASSESS_C: pleural air finding" in reply.text


def test_stub_vision_deterministic_and_capped():
    stub = StubVisionBackend(max_image_bytes=10)
    with pytest.raises(ImageTooLarge):
        stub.vision_reason(VisionReasonRequest(image=b"x" * 11, context_text="c"))
    ok = StubVisionBackend()
    r1 = ok.vision_reason(VisionReasonRequest(image=b"img", context_text="ctx"))
    r2 = ok.vision_reason(VisionReasonRequest(image=b"img", context_text="ctx"))
    assert r1.text == r2.text


def test_empty_requests_rejected():
    with pytest.raises(InvariantViolation):
        TextGenRequest(system_prompt="s", user_messages=())
    with pytest.raises(InvariantViolation):
        VisionReasonRequest(image=b"", context_text="c")
    with pytest.raises(InvariantViolation):
        BackendReply(text="t", latency_ms=-1, backend_id="b")


class _ScriptedHandler(BaseHTTPRequestHandler):
    script: list[int] = []
    calls: list[dict] = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        type(self).calls.append(body)
        status = type(self).script.pop(0) if type(self).script else 200
        if status != 200:
            self.send_response(status)
            self.end_headers()
            return
        payload = {"choices": [{"message": {"content": "remote says hi"}}], "text": "vision"}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def scripted_server():
    handler = _ScriptedHandler
    handler.script = []
    handler.calls = []
    server = HTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, handler
    server.shutdown()
    thread.join(timeout=5)


def _text_req():
    return TextGenRequest(system_prompt="s", user_messages=("hello",), tag="test")


def test_remote_retries_then_succeeds(scripted_server):
    server, handler = scripted_server
    handler.script = [500, 500]  # then 200
    backend = RemoteTextBackend(
        base_url=f"http://127.0.0.1:{server.server_port}",
        sleeper=lambda _: None,
    )
    reply = backend.text_generate(_text_req())
    assert reply.text == "remote says hi"
    assert len(handler.calls) == 3


def test_remote_gives_up_after_retries(scripted_server):
    server, handler = scripted_server
    handler.script = [500, 500, 500]
    backend = RemoteTextBackend(
        base_url=f"http://127.0.0.1:{server.server_port}",
        sleeper=lambda _: None,
    )
    with pytest.raises(BackendHttpError) as err:
        backend.text_generate(_text_req())
    assert err.value.status == 500


def test_remote_client_error_no_retry(scripted_server):
    server, handler = scripted_server
    handler.script = [401]
    backend = RemoteTextBackend(
        base_url=f"http://127.0.0.1:{server.server_port}",
        sleeper=lambda _: None,
    )
    with pytest.raises(BackendHttpError) as err:
        backend.text_generate(_text_req())
    assert err.value.status == 401
    assert len(handler.calls) == 1


def test_remote_timeout(scripted_server):
    server, handler = scripted_server

    class SlowHandler(type(handler)):
        pass

    # unreachable port with tiny timeout: use a non-routable address instead
    backend = RemoteTextBackend(
        base_url="http://127.0.0.1:9",  # discard port, nothing listening
        timeout_s=0.2,
        sleeper=lambda _: None,
    )
    with pytest.raises((BackendTimeout, BackendHttpError)):
        backend.text_generate(_text_req())


def test_remote_vision_pass_through(scripted_server):
    server, handler = scripted_server
    backend = RemoteVisionBackend(base_url=f"http://127.0.0.1:{server.server_port}")
    reply = backend.vision_reason(VisionReasonRequest(image=b"img", context_text="ctx"))
    assert reply.text == "vision"
    assert handler.calls[0]["prompt"] == "ctx"


def test_misconfigured_backend():
    with pytest.raises(BackendMisconfigured):
        RemoteTextBackend(base_url="")
