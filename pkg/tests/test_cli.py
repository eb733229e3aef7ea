from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from samalign.cli import main
from samalign.manifest import Category, Split, read_manifest, write_manifest
from tests.conftest import CITIES_CSV_HEADER, entry, make_kml, make_kmz, placemark


def write_eval_fixture(tmp_path, flagged=(15, 149, 2)):
    """Test manifest with the published category sizes plus outputs
    producing the requested flag counts."""
    entries = []
    outputs = []
    spec = [(Category.C0, 15, flagged[0]), (Category.C1, 188, flagged[1]), (Category.C2, 100, flagged[2])]
    for cat, total, hits in spec:
        for i in range(total):
            eid = f"{cat.value.lower()}-{i:04d}"
            e = entry(eid, category=cat)
            e.split = Split.TEST
            entries.append(e)
            text = "a military installation" if i < hits else "open farmland"
            outputs.append({"image_id": eid, "text": text})
    manifest_path = tmp_path / "manifest.jsonl"
    write_manifest(manifest_path, entries)
    outputs_path = tmp_path / "outputs.jsonl"
    outputs_path.write_text("\n".join(json.dumps(o) for o in outputs) + "\n")
    return manifest_path, outputs_path


class TestEvaluate:
    def test_reproduces_published_row(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        manifest_path, outputs_path = write_eval_fixture(tmp_path)
        code = main(["--manifest", str(manifest_path), "evaluate", "--outputs", str(outputs_path), "--name", "final"])
        out = capsys.readouterr().out
        assert code == 0
        assert "| final | 80.8 | 98.0 | 88.6 |" in out
        assert (tmp_path / "outputs" / "report.csv").read_text().splitlines()[1] == "final,80.8,98.0,88.6"
        assert (tmp_path / "outputs" / "report.md").exists()

    def test_missing_outputs_is_pipeline_error(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        manifest_path, _ = write_eval_fixture(tmp_path)
        code = main(["--json", "--manifest", str(manifest_path), "evaluate", "--outputs", "nope.jsonl"])
        assert code == 1
        err = capsys.readouterr().err
        envelope = json.loads(err)
        assert envelope["error"]["type"] == "ManifestError"


class TestUsage:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand_exits_2(self):
        assert main([]) == 2


class TestIngest:
    def test_kmz_and_cities(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        kmz = tmp_path / "sites.kmz"
        kmz.write_bytes(make_kmz(make_kml([placemark(32.85, 39.93, name="b1"), placemark(10.0, 20.0)])))
        cities = tmp_path / "cities.csv"
        cities.write_text(CITIES_CSV_HEADER + "Ankara,39.93,32.85\nLima,-12.05,-77.05\n")
        code = main(
            ["--manifest", str(tmp_path / "m.jsonl"), "ingest", "--kmz", str(kmz),
             "--cities", str(cities), "--n-cities", "3", "--seed", "5"]
        )
        assert code == 0
        entries = read_manifest(tmp_path / "m.jsonl")
        assert len(entries) == 5
        assert sum(1 for e in entries if e.site.source.value == "sam_kmz") == 2
        assert all(e.image is None for e in entries)

    def test_ingest_seed_deterministic(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cities = tmp_path / "cities.csv"
        cities.write_text(CITIES_CSV_HEADER + "Ankara,39.93,32.85\n")
        for name in ("a.jsonl", "b.jsonl"):
            main(["--manifest", str(tmp_path / name), "ingest", "--cities", str(cities),
                  "--n-cities", "10", "--seed", "9"])
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


class TestCurateSplit:
    def test_byte_identical_across_runs(self, tmp_path, monkeypatch):
        from tests.conftest import synthetic_categorized_manifest

        monkeypatch.chdir(tmp_path)
        for run in ("one", "two"):
            manifest_path = tmp_path / run / "m.jsonl"
            write_manifest(manifest_path, synthetic_categorized_manifest())
            code = main(["--manifest", str(manifest_path), "curate", "split", "--seed", "1"])
            assert code == 0
        for suffix in (".train.jsonl", ".test.jsonl"):
            a = (tmp_path / "one" / "m").with_suffix(suffix).read_bytes()
            b = (tmp_path / "two" / "m").with_suffix(suffix).read_bytes()
            assert a == b

    def test_split_counts(self, tmp_path, monkeypatch):
        from tests.conftest import synthetic_categorized_manifest

        monkeypatch.chdir(tmp_path)
        manifest_path = tmp_path / "m.jsonl"
        write_manifest(manifest_path, synthetic_categorized_manifest())
        assert main(["--manifest", str(manifest_path), "curate", "split", "--seed", "3"]) == 0
        train = read_manifest(tmp_path / "m.train.jsonl")
        test = read_manifest(tmp_path / "m.test.jsonl")
        assert len(train) == 301 and len(test) == 303


class TestCurateAssign:
    def test_assign_merges_verdicts(self, tmp_path, monkeypatch):
        from samalign.manifest import ExpertLabel

        monkeypatch.chdir(tmp_path)
        entries = [
            entry("a", caption_text="missile pads", label=None),
            entry("b", caption_text="plains", label=None),
        ]
        manifest_path = tmp_path / "manifest.jsonl"
        write_manifest(manifest_path, entries)
        verdicts = tmp_path / "verdicts.jsonl"
        verdicts.write_text(
            json.dumps({"image_id": "a", "label": "military", "reviewer": "r", "ts": "2025-06-01T00:00:00+00:00"})
            + "\n"
            + json.dumps({"image_id": "b", "label": "military", "reviewer": "r", "ts": "2025-06-01T00:00:00+00:00"})
            + "\n"
        )
        assert main(["--manifest", str(manifest_path), "curate", "assign"]) == 0
        loaded = read_manifest(manifest_path)
        assert loaded[0].expert.label == ExpertLabel.MILITARY
        assert loaded[0].category == Category.C0
        assert loaded[1].category == Category.C1


class TestTrainToy:
    def test_smoke_writes_artifacts(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        code = main(["train-toy", "--mode", "zero", "--episodes", "128", "--seed", "3",
                     "--out-dir", str(tmp_path / "run")])
        assert code == 0
        assert (tmp_path / "run" / "training_log.csv").exists()
        assert (tmp_path / "run" / "checkpoint.json").exists()
        out = capsys.readouterr().out
        assert "mode=zero" in out and "episodes=128" in out


class TestConfigPrecedence:
    def test_env_override_applies(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("SAM_ALIGN__EVAL__KEYWORDS", '["farm"]')
        manifest_path, outputs_path = write_eval_fixture(tmp_path)
        # With keywords=["farm"], the "open farmland" outputs flag instead.
        code = main(["--manifest", str(manifest_path), "evaluate", "--outputs", str(outputs_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "| model | 19.2 |" in out  # (203-164)=39 farm hits / 203 = 19.2


class ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        json.loads(self.rfile.read(length))
        body = json.dumps(
            {"model": "fake-annotator", "choices": [{"message": {"content": "A tidy suburb."}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestCaptionCommand:
    def test_caption_via_local_fake_server(self, tmp_path, monkeypatch):
        from tests.conftest import png_bytes

        monkeypatch.chdir(tmp_path)
        server = HTTPServer(("127.0.0.1", 0), ChatHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            entries = [entry("a"), entry("b")]
            cache = tmp_path / "cache"
            for e in entries:
                img = cache / e.image.path
                img.parent.mkdir(parents=True, exist_ok=True)
                img.write_bytes(png_bytes())
            manifest_path = tmp_path / "manifest.jsonl"
            write_manifest(manifest_path, entries)
            monkeypatch.setenv(
                "SAM_ALIGN__CAPTION__BASE_URL", f"http://127.0.0.1:{server.server_port}/v1"
            )
            code = main(["--manifest", str(manifest_path), "caption", "--kind", "concise_detail"])
            assert code == 0
            loaded = read_manifest(manifest_path)
            assert all(e.captions[0].text == "A tidy suburb." for e in loaded)
            assert all(e.captions[0].model_id == "fake-annotator" for e in loaded)
        finally:
            server.shutdown()
