"""Imagery cache and caption client, demonstrated fully offline.

Both HTTP clients accept an injected transport, so this script fakes the
tile server (including a couple of 429 throttles) and a chat-completions
endpoint, then shows: cache hits, retry backoff, the exact prompt bodies
on the wire, and chain-of-thought conversion with a format-checking
retry loop.
"""

import io
import json
import tempfile
from pathlib import Path

import httpx
from PIL import Image

from samalign.captions import CaptionClient, CaptionConfig, PromptKind
from samalign.geo import GeoPoint, SiteRecord, SiteSource
from samalign.imagery import ImageryClient, ImageryConfig


def png() -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (32, 32), (90, 110, 70)).save(buf, format="PNG")
    return buf.getvalue()


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="demo-imagery-"))
    site = SiteRecord(id="sam-00001", point=GeoPoint(lon=32.85, lat=39.93), source=SiteSource.SAM_KMZ)

    # -- imagery: throttle twice, then serve; second fetch is a cache hit --
    responses = [429, 429, 200]
    request_log = []

    def tile_handler(request: httpx.Request) -> httpx.Response:
        request_log.append(str(request.url))
        status = responses.pop(0) if len(responses) > 1 else responses[0]
        if status != 200:
            return httpx.Response(status, text="throttled")
        return httpx.Response(200, content=png(), headers={"content-type": "image/png"})

    sleeps = []
    client = ImageryClient(
        ImageryConfig(
            url_template="https://tiles.example/static?lon={lon}&lat={lat}&z={zoom}&s={w}x{h}",
            cache_dir=workdir / "cache",
            width=32,
            height=32,
        ),
        transport=httpx.MockTransport(tile_handler),
        sleep=sleeps.append,
    )
    asset = client.fetch_image(site, zoom=15)
    print(f"fetched after {len(request_log)} requests (rate-limit + backoff sleeps: {sleeps})")
    print(f"cached at {asset.path}")
    client.fetch_image(site, zoom=15)
    print(f"second fetch made {len(request_log) - 3} new requests (cache hit)\n")

    # -- captions: show the wire body, then a conversion that needs retries --
    TAGGED = (
        "<reasoning>I see circular pads and access roads.</reasoning>"
        "<answer>This is a military launch complex with six pads.</answer>"
    )
    caption_replies = ["A dusty complex of circular pads.", "no tags, rejected", "still none", TAGGED]
    bodies = []

    def chat_handler(request: httpx.Request) -> httpx.Response:
        bodies.append(json.loads(request.content))
        text = caption_replies.pop(0) if len(caption_replies) > 1 else caption_replies[0]
        return httpx.Response(
            200, json={"model": "annotator-72b", "choices": [{"message": {"content": text}}]}
        )

    captions = CaptionClient(
        CaptionConfig(base_url="http://inference.example/v1", model_id="annotator-72b",
                      image_root=workdir / "cache", retry_budget=3),
        transport=httpx.MockTransport(chat_handler),
    )
    concise = captions.generate_caption(asset, PromptKind.CONCISE_DETAIL)
    print(f"prompt sent verbatim: {bodies[0]['messages'][0]['content'][1]['text']!r}")
    print(f"concise caption: {concise.text!r} (model_id={concise.model_id})")

    long_record = captions.generate_caption(asset, PromptKind.LONG_DETAIL)
    print(f"long-detail request carried max_tokens={bodies[1]['max_tokens']}")

    cot = captions.convert_to_cot(long_record)
    print(f"conversion accepted after {len(bodies) - 2} attempts:")
    print(f"  {cot.text}")


if __name__ == "__main__":
    main()
