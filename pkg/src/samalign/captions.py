"""Client for a chat-completions-style multimodal inference API.

Used both to caption curated images (annotator role) and to query models
under evaluation. Requests carry one image part plus one text part; the
wire format is the de-facto ``POST {base_url}/chat/completions`` JSON
shape every local and hosted inference server exposes.
"""

from __future__ import annotations

import base64
import mimetypes
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import httpx

from .errors import PipelineError
from .imagery import ImageAsset
from .text import parse_output


class CaptionError(PipelineError):
    pass


class CaptionHttpError(CaptionError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"caption API returned HTTP {status}: {detail}")
        self.status = status


class EmptyCompletion(CaptionError):
    pass


class ContextLengthExceeded(CaptionError):
    pass


class FormatRejected(CaptionError):
    pass


class PromptKind(str, Enum):
    CONCISE_DETAIL = "concise_detail"
    LONG_DETAIL = "long_detail"
    OPEN_ENDED = "open_ended"
    YES_NO = "yes_no"
    MULTIPLE_CHOICE = "multiple_choice"
    COT_CONVERT = "cot_convert"


# User-facing prompt templates, bit-exact. The multiple-choice option list
# beyond "A. Military" is our own completion of the published prefix.
PROMPT_TEMPLATES: dict[PromptKind, str] = {
    PromptKind.CONCISE_DETAIL: "Explain the image in detail, with 4-6 sentences.",
    PromptKind.LONG_DETAIL: "Explain this image in detail, as long as possible.",
    PromptKind.OPEN_ENDED: "Explain the image.",
    PromptKind.YES_NO: "Is this a military area?",
    PromptKind.MULTIPLE_CHOICE: (
        "Choose the purpose of the area: A. Military B. Residential C. Industrial "
        "D. Agricultural E. Natural. Answer with a single letter."
    ),
}

LONG_DETAIL_MAX_TOKENS = 32768

# Stand-in for the unspecified converter instructions used upstream;
# kept explicit here so conversions are reproducible.
COT_CONVERT_SYSTEM_PROMPT = (
    "Rewrite the image description the user provides as first-person visual "
    "reasoning. Put the step-by-step reasoning inside <reasoning> and "
    "</reasoning> tags, then a conclusion of 4-6 sentences inside <answer> "
    "and </answer> tags. Preserve every factual claim from the original "
    "description and do not invent new details. Output nothing outside the "
    "two tag blocks."
)


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    prompt_kind: PromptKind
    text: str
    model_id: str
    max_tokens: int
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass
class CaptionConfig:
    base_url: str
    model_id: str
    max_concurrency: int = 2
    retry_budget: int = 3
    default_max_tokens: int = 1024
    api_key_env: str = "CAPTION_API_KEY"
    image_root: Path = Path(".")


class CaptionClient:
    def __init__(self, cfg: CaptionConfig, transport: Optional[httpx.BaseTransport] = None):
        self.cfg = cfg
        self._http = httpx.Client(transport=transport, timeout=120.0)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "CaptionClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, body: dict) -> dict:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        response = self._http.post(url, json=body, headers=self._headers())
        if response.status_code != 200:
            detail = ""
            try:
                err = response.json().get("error", {})
                detail = err.get("message", "")
                if err.get("code") == "context_length_exceeded":
                    raise ContextLengthExceeded(detail or "prompt exceeds model context")
            except ContextLengthExceeded:
                raise
            except Exception:
                detail = response.text[:200]
            raise CaptionHttpError(response.status_code, detail)
        return response.json()

    @staticmethod
    def _completion_text(payload: dict) -> tuple[str, str]:
        choices = payload.get("choices") or []
        if not choices:
            raise EmptyCompletion("response carried no choices")
        text = (choices[0].get("message") or {}).get("content") or ""
        text = text.rstrip()
        if not text:
            raise EmptyCompletion("model returned an empty completion")
        return text, payload.get("model", "")

    def _image_part(self, image: Union[ImageAsset, Path, str]) -> dict:
        path = Path(self.cfg.image_root) / image.path if isinstance(image, ImageAsset) else Path(image)
        data = path.read_bytes()
        mime = mimetypes.guess_type(str(path))[0] or "image/png"
        encoded = base64.b64encode(data).decode("ascii")
        return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{encoded}"}}

    def generate_caption(
        self,
        image: Union[ImageAsset, Path, str],
        kind: PromptKind,
        temperature: float = 0.0,
    ) -> CaptionRecord:
        """Caption one image under the given prompt regime.

        The model's text is returned verbatim except for trailing
        whitespace; ``model_id`` is taken from the response.
        """
        if kind == PromptKind.COT_CONVERT:
            raise ValueError("use convert_to_cot for chain-of-thought conversion")
        max_tokens = LONG_DETAIL_MAX_TOKENS if kind == PromptKind.LONG_DETAIL else self.cfg.default_max_tokens
        body = {
            "model": self.cfg.model_id,
            "messages": [
                {
                    "role": "user",
                    "content": [self._image_part(image), {"type": "text", "text": PROMPT_TEMPLATES[kind]}],
                }
            ],
            "max_tokens": max_tokens,
            "temperature": temperature,
        }
        text, model_id = self._completion_text(self._post(body))
        image_id = image.id if isinstance(image, ImageAsset) else str(image)
        return CaptionRecord(
            image_id=image_id,
            prompt_kind=kind,
            text=text,
            model_id=model_id or self.cfg.model_id,
            max_tokens=max_tokens,
        )

    def generate_many(
        self,
        images: Sequence[Union[ImageAsset, Path, str]],
        kind: PromptKind,
        temperature: float = 0.0,
    ) -> list[CaptionRecord]:
        """Caption a batch concurrently, bounded by ``max_concurrency``."""
        with ThreadPoolExecutor(max_workers=max(1, self.cfg.max_concurrency)) as pool:
            return list(pool.map(lambda img: self.generate_caption(img, kind, temperature), images))

    def convert_to_cot(self, long_caption: CaptionRecord, temperature: float = 0.7) -> CaptionRecord:
        """Rewrite a long caption into tagged reasoning + answer form.

        Outputs that fail the format check are retried up to
        ``retry_budget`` additional times, then rejected.
        """
        if long_caption.prompt_kind != PromptKind.LONG_DETAIL:
            raise ValueError("convert_to_cot expects a long-detail caption")
        body = {
            "model": self.cfg.model_id,
            "messages": [
                {"role": "system", "content": COT_CONVERT_SYSTEM_PROMPT},
                {"role": "user", "content": long_caption.text},
            ],
            "max_tokens": LONG_DETAIL_MAX_TOKENS,
            "temperature": temperature,
        }
        attempts = 1 + max(0, self.cfg.retry_budget)
        last_text = ""
        for _ in range(attempts):
            text, model_id = self._completion_text(self._post(body))
            last_text = text
            if parse_output(text).format_ok:
                return CaptionRecord(
                    image_id=long_caption.image_id,
                    prompt_kind=PromptKind.COT_CONVERT,
                    text=text,
                    model_id=model_id or self.cfg.model_id,
                    max_tokens=LONG_DETAIL_MAX_TOKENS,
                )
        raise FormatRejected(
            f"converter never produced tagged output for image {long_caption.image_id!r} "
            f"after {attempts} attempts; last output started: {last_text[:80]!r}"
        )
