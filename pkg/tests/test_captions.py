from __future__ import annotations

import json

import httpx
import pytest

from samalign.captions import (
    COT_CONVERT_SYSTEM_PROMPT,
    LONG_DETAIL_MAX_TOKENS,
    PROMPT_TEMPLATES,
    CaptionClient,
    CaptionConfig,
    CaptionHttpError,
    CaptionRecord,
    ContextLengthExceeded,
    EmptyCompletion,
    FormatRejected,
    PromptKind,
)
from tests.conftest import TS, png_bytes


class FakeServer:
    """Chat-completions fake returning scripted texts."""

    def __init__(self, texts, model="served-model", status=200, error_code=None):
        self.texts = list(texts)
        self.model = model
        self.status = status
        self.error_code = error_code
        self.bodies: list[dict] = []

    def handler(self, request: httpx.Request) -> httpx.Response:
        self.bodies.append(json.loads(request.content))
        if self.status != 200:
            payload = {"error": {"message": "boom", "code": self.error_code}}
            return httpx.Response(self.status, json=payload)
        text = self.texts.pop(0) if len(self.texts) > 1 else self.texts[0]
        return httpx.Response(
            200,
            json={"model": self.model, "choices": [{"message": {"role": "assistant", "content": text}}]},
        )

    def client(self, **cfg_kwargs) -> CaptionClient:
        defaults = dict(base_url="http://fake.test/v1", model_id="requested-model")
        defaults.update(cfg_kwargs)
        return CaptionClient(CaptionConfig(**defaults), transport=httpx.MockTransport(self.handler))


@pytest.fixture
def image_file(tmp_path):
    path = tmp_path / "img.png"
    path.write_bytes(png_bytes())
    return path


def long_caption(text="a very long description of the scene") -> CaptionRecord:
    return CaptionRecord(
        image_id="img-1", prompt_kind=PromptKind.LONG_DETAIL, text=text,
        model_id="m", max_tokens=LONG_DETAIL_MAX_TOKENS, created_at=TS,
    )


TAGGED = "<reasoning>I see pads</reasoning><answer>A military site.</answer>"


class TestGenerateCaption:
    def test_concise_prompt_verbatim(self, image_file):
        server = FakeServer(["A caption."])
        record = server.client().generate_caption(image_file, PromptKind.CONCISE_DETAIL)
        body = server.bodies[0]
        parts = body["messages"][0]["content"]
        assert parts[1] == {"type": "text", "text": "Explain the image in detail, with 4-6 sentences."}
        assert parts[0]["type"] == "image_url"
        assert parts[0]["image_url"]["url"].startswith("data:image/png;base64,")
        assert record.text == "A caption."
        assert record.model_id == "served-model"

    def test_long_detail_max_tokens(self, image_file):
        server = FakeServer(["long text"])
        record = server.client().generate_caption(image_file, PromptKind.LONG_DETAIL)
        assert server.bodies[0]["max_tokens"] == 32768
        assert record.max_tokens == 32768

    def test_default_max_tokens_otherwise(self, image_file):
        server = FakeServer(["short"])
        server.client().generate_caption(image_file, PromptKind.OPEN_ENDED)
        assert server.bodies[0]["max_tokens"] == 1024

    def test_trailing_whitespace_trim_only(self, image_file):
        server = FakeServer(["  leading kept \n"])
        record = server.client().generate_caption(image_file, PromptKind.YES_NO)
        assert record.text == "  leading kept"

    def test_empty_completion(self, image_file):
        server = FakeServer([""])
        with pytest.raises(EmptyCompletion):
            server.client().generate_caption(image_file, PromptKind.CONCISE_DETAIL)

    def test_http_error(self, image_file):
        server = FakeServer(["x"], status=500)
        with pytest.raises(CaptionHttpError) as excinfo:
            server.client().generate_caption(image_file, PromptKind.CONCISE_DETAIL)
        assert excinfo.value.status == 500

    def test_context_length_exceeded(self, image_file):
        server = FakeServer(["x"], status=400, error_code="context_length_exceeded")
        with pytest.raises(ContextLengthExceeded):
            server.client().generate_caption(image_file, PromptKind.CONCISE_DETAIL)

    def test_cot_convert_kind_rejected(self, image_file):
        server = FakeServer(["x"])
        with pytest.raises(ValueError):
            server.client().generate_caption(image_file, PromptKind.COT_CONVERT)

    def test_bearer_auth_from_env(self, image_file, monkeypatch):
        monkeypatch.setenv("CAPTION_API_KEY", "token-123")
        server = FakeServer(["x"])
        recorded = {}

        def handler(request):
            recorded["auth"] = request.headers.get("authorization")
            return server.handler(request)

        client = CaptionClient(
            CaptionConfig(base_url="http://fake.test/v1", model_id="m"),
            transport=httpx.MockTransport(handler),
        )
        client.generate_caption(image_file, PromptKind.OPEN_ENDED)
        assert recorded["auth"] == "Bearer token-123"

    def test_all_templates_present(self):
        assert PROMPT_TEMPLATES[PromptKind.OPEN_ENDED] == "Explain the image."
        assert PROMPT_TEMPLATES[PromptKind.YES_NO] == "Is this a military area?"
        assert PROMPT_TEMPLATES[PromptKind.MULTIPLE_CHOICE].startswith(
            "Choose the purpose of the area: A. Military"
        )
        assert PromptKind.COT_CONVERT not in PROMPT_TEMPLATES


class TestConvertToCot:
    def test_accepts_well_formed_first_try(self):
        server = FakeServer([TAGGED])
        record = server.client().convert_to_cot(long_caption())
        assert record.prompt_kind == PromptKind.COT_CONVERT
        assert record.text == TAGGED
        assert len(server.bodies) == 1
        assert server.bodies[0]["messages"][0] == {"role": "system", "content": COT_CONVERT_SYSTEM_PROMPT}
        assert server.bodies[0]["messages"][1]["content"] == long_caption().text

    def test_retries_until_tagged(self):
        server = FakeServer(["untagged one", "untagged two", TAGGED])
        record = server.client(retry_budget=3).convert_to_cot(long_caption())
        assert record.text == TAGGED
        assert len(server.bodies) == 3  # retry_count = 2

    def test_format_rejected_after_budget(self):
        server = FakeServer(["never tagged"])
        with pytest.raises(FormatRejected):
            server.client(retry_budget=3).convert_to_cot(long_caption())
        assert len(server.bodies) == 4  # initial + 3 retries

    def test_requires_long_detail_input(self):
        server = FakeServer([TAGGED])
        bad = CaptionRecord(
            image_id="i", prompt_kind=PromptKind.CONCISE_DETAIL, text="t",
            model_id="m", max_tokens=10, created_at=TS,
        )
        with pytest.raises(ValueError):
            server.client().convert_to_cot(bad)

    def test_output_passes_parser(self):
        from samalign.text import parse_output

        server = FakeServer([TAGGED])
        record = server.client().convert_to_cot(long_caption())
        assert parse_output(record.text).format_ok
