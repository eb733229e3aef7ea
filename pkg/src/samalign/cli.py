"""Command-line entry point wiring the pipeline modules together.

Exit codes: 0 success, 1 pipeline failure (JSON envelope on stderr with
``--json``), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import captions as captions_mod
from . import curation, evaluation, geo, grpo, manifest as manifest_mod
from .captions import CaptionClient, CaptionConfig, PromptKind
from .config import AppConfig, load_config
from .errors import PipelineError
from .imagery import ImageryClient, ImageryConfig
from .rewards import RewardConfig
from .text import KeywordSet


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samalign", description=__doc__)
    parser.add_argument("--config", type=Path, default=None, help="config file (TOML-like)")
    parser.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    parser.add_argument("--manifest", type=Path, default=None, help="override paths.manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse site sources into a fresh manifest")
    p.add_argument("--kmz", type=Path, action="append", default=[], help="KMZ archive of candidate sites")
    p.add_argument("--cities", type=Path, default=None, help="world-cities CSV (city, lat, lng)")
    p.add_argument("--n-cities", type=int, default=0, help="number of perturbed city samples")
    p.add_argument("--perturb", type=float, default=0.05, help="perturbation radius in degrees")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fetch", help="download imagery for manifest entries")
    p.add_argument("--zoom", type=int, default=None, help="override imagery.zoom")

    p = sub.add_parser("caption", help="generate captions via the inference API")
    p.add_argument("--kind", choices=[k.value for k in PromptKind if k != PromptKind.COT_CONVERT],
                   default=PromptKind.CONCISE_DETAIL.value)
    p.add_argument("--convert-cot", action="store_true",
                   help="convert existing long-detail captions to tagged reasoning form")
    p.add_argument("--temperature", type=float, default=0.0)

    p = sub.add_parser("curate", help="category assignment, splits, and SFT export")
    curate_sub = p.add_subparsers(dest="curate_command", required=True)
    curate_sub.add_parser("assign", help="merge verdicts and assign categories")
    ps = curate_sub.add_parser("split", help="build train/test splits")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--train-c0", type=int, default=101)
    ps.add_argument("--train-c2", type=int, default=200)
    ps.add_argument("--test-c0", type=int, default=15)
    ps.add_argument("--test-c2", type=int, default=100)
    pe = curate_sub.add_parser("export", help="write SFT training files")
    pe.add_argument("--variant", choices=["concise", "cot"], required=True)
    pe.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("train-toy", help="run the desk-scale policy-optimization loop")
    p.add_argument("--mode", choices=["zero", "sft-then-grpo"], default="sft-then-grpo")
    p.add_argument("--episodes", type=int, default=None, help="completion budget (default grpo.episodes)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=0.5,
                   help="toy-scale step size (config grpo.learning_rate stays at parity default)")
    p.add_argument("--out-dir", type=Path, default=None, help="where to write log.csv and checkpoint.json")

    p = sub.add_parser("evaluate", help="score recorded outputs against the test manifest")
    p.add_argument("--outputs", type=Path, required=True)
    p.add_argument("--reasoning-model", action="store_true")
    p.add_argument("--name", default="model")

    p = sub.add_parser("serve-review", help="run the expert review service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", type=Path, default=None,
                   help="serve the browser UI (a built frontend directory) at /")

    return parser


def _paths(cfg: AppConfig, manifest_override: Optional[Path]) -> dict[str, Path]:
    return {
        "manifest": Path(manifest_override or cfg.get("paths", "manifest")),
        "cache": Path(cfg.get("paths", "cache")),
        "outputs": Path(cfg.get("paths", "outputs")),
        "verdicts": Path(cfg.get("paths", "verdicts")),
    }


def _keywords(cfg: AppConfig) -> KeywordSet:
    return KeywordSet.of(cfg.get("eval", "keywords"))


def _cmd_ingest(args, cfg: AppConfig, paths) -> int:
    entries: list[manifest_mod.ManifestEntry] = []
    for kmz_path in args.kmz:
        sites = geo.parse_kmz(kmz_path.read_bytes())
        entries.extend(manifest_mod.ManifestEntry(id=s.id, site=s) for s in sites)
        print(f"ingested {len(sites)} placemark sites from {kmz_path}")
    if args.cities is not None and args.n_cities > 0:
        cities = geo.load_world_cities(args.cities.read_text(encoding="utf-8"))
        sampled = geo.sample_city_points(cities, args.n_cities, args.perturb, args.seed)
        entries.extend(manifest_mod.ManifestEntry(id=s.id, site=s) for s in sampled)
        print(f"sampled {len(sampled)} perturbed city points from {args.cities}")
    manifest_mod.write_manifest(paths["manifest"], entries)
    print(f"wrote {len(entries)} entries to {paths['manifest']}")
    return 0


def _cmd_fetch(args, cfg: AppConfig, paths) -> int:
    entries = manifest_mod.read_manifest(paths["manifest"])
    zoom = args.zoom if args.zoom is not None else cfg.get("imagery", "zoom")
    imagery_cfg = ImageryConfig(
        url_template=cfg.get("imagery", "url_template"),
        cache_dir=paths["cache"],
        auth_header=cfg.get("imagery", "auth_header") or None,
        max_rps=cfg.get("imagery", "max_rps"),
        max_concurrency=cfg.get("imagery", "max_concurrency"),
        width=cfg.get("imagery", "width"),
        height=cfg.get("imagery", "height"),
    )
    pending = [e for e in entries if e.image is None]
    with ImageryClient(imagery_cfg) as client:
        assets = client.fetch_many([e.site for e in pending], zoom)
    for entry, asset in zip(pending, assets):
        entry.image = asset
    manifest_mod.write_manifest(paths["manifest"], entries)
    print(f"fetched {len(pending)} images at zoom {zoom}")
    return 0


def _caption_client(cfg: AppConfig, paths) -> CaptionClient:
    return CaptionClient(
        CaptionConfig(
            base_url=cfg.get("caption", "base_url"),
            model_id=cfg.get("caption", "model_id"),
            max_concurrency=cfg.get("caption", "max_concurrency"),
            retry_budget=cfg.get("caption", "retry_budget"),
            default_max_tokens=cfg.get("caption", "default_max_tokens"),
            image_root=paths["cache"],
        )
    )


def _cmd_caption(args, cfg: AppConfig, paths) -> int:
    entries = manifest_mod.read_manifest(paths["manifest"])
    with _caption_client(cfg, paths) as client:
        if args.convert_cot:
            converted = 0
            for entry in entries:
                long_caption = entry.caption_of_kind(PromptKind.LONG_DETAIL)
                if long_caption is None or entry.caption_of_kind(PromptKind.COT_CONVERT):
                    continue
                entry.captions.append(client.convert_to_cot(long_caption, temperature=args.temperature))
                converted += 1
            print(f"converted {converted} long captions to tagged reasoning form")
        else:
            kind = PromptKind(args.kind)
            pending = [e for e in entries if e.image is not None and not e.caption_of_kind(kind)]
            records = client.generate_many([e.image for e in pending], kind, temperature=args.temperature)
            for entry, record in zip(pending, records):
                entry.captions.append(
                    captions_mod.CaptionRecord(
                        image_id=entry.id,
                        prompt_kind=record.prompt_kind,
                        text=record.text,
                        model_id=record.model_id,
                        max_tokens=record.max_tokens,
                        created_at=record.created_at,
                    )
                )
            print(f"captioned {len(pending)} entries with kind {kind.value}")
    manifest_mod.write_manifest(paths["manifest"], entries)
    return 0


def _cmd_curate(args, cfg: AppConfig, paths) -> int:
    from .review import merge_verdicts, read_verdicts

    entries = manifest_mod.read_manifest(paths["manifest"])
    if args.curate_command == "assign":
        merged = merge_verdicts(entries, read_verdicts(paths["verdicts"]))
        assigned = curation.assign_all(entries, _keywords(cfg))
        manifest_mod.write_manifest(paths["manifest"], entries)
        print(f"merged {merged} verdicts, categorized {assigned} entries")
        return 0
    if args.curate_command == "split":
        quotas = curation.SplitQuotas(
            train_c0=args.train_c0, train_c2=args.train_c2,
            test_c0=args.test_c0, test_c2=args.test_c2,
        )
        train, test = curation.build_splits(entries, quotas, seed=args.seed)
        base = paths["manifest"]
        train_path = base.with_suffix(".train.jsonl")
        test_path = base.with_suffix(".test.jsonl")
        manifest_mod.write_manifest(base, entries)
        manifest_mod.write_manifest(train_path, train)
        manifest_mod.write_manifest(test_path, test)
        print(f"split: {len(train)} train -> {train_path}, {len(test)} test -> {test_path}")
        return 0
    if args.curate_command == "export":
        train = [e for e in entries if e.split == manifest_mod.Split.TRAIN]
        rows = curation.export_sft(train, args.variant)
        out = args.out or paths["outputs"] / f"sft_{args.variant}.jsonl"
        curation.write_sft(out, rows)
        print(f"exported {len(rows)} {args.variant} SFT records to {out}")
        return 0
    raise AssertionError(f"unhandled curate command {args.curate_command}")


def _cmd_train_toy(args, cfg: AppConfig, paths) -> int:
    grpo_cfg = grpo.GrpoConfig(
        group_size=cfg.get("grpo", "group_size"),
        clip_epsilon=cfg.get("grpo", "clip_epsilon"),
        kl_beta=cfg.get("grpo", "kl_beta"),
        learning_rate=args.learning_rate,
        batch_size=cfg.get("grpo", "batch_size"),
        episodes=args.episodes if args.episodes is not None else cfg.get("grpo", "episodes"),
        seed=args.seed if args.seed is not None else cfg.get("grpo", "seed"),
        max_len=cfg.get("grpo", "max_len"),
        sft_passes=cfg.get("grpo", "sft_passes"),
        sft_learning_rate=cfg.get("grpo", "sft_learning_rate"),
    )
    reward_cfg = RewardConfig(
        keywords=_keywords(cfg),
        keyword_weight=cfg.get("reward", "keyword_weight"),
        format_weight=cfg.get("reward", "format_weight"),
        reasoning_model=cfg.get("reward", "reasoning_model"),
    )
    dataset = [("positive", True), ("negative", False)] * (grpo_cfg.batch_size // 2 or 1)

    policy = grpo.ToyPolicy()
    if args.mode == "sft-then-grpo":
        policy = grpo.init_from_sft(
            policy, grpo.toy_demonstrations(),
            passes=grpo_cfg.sft_passes, learning_rate=grpo_cfg.sft_learning_rate,
        )
    result = grpo.train_toy(dataset, grpo_cfg, reward_cfg, policy=policy)

    out_dir = args.out_dir or paths["outputs"]
    grpo.write_training_log(Path(out_dir) / "training_log.csv", result.log)
    grpo.save_checkpoint(Path(out_dir) / "checkpoint.json", result.policy)
    stats = grpo.rollout_stats(result.policy, reward_cfg, max_len=grpo_cfg.max_len, seed=grpo_cfg.seed + 1)
    print(
        f"mode={args.mode} episodes={grpo_cfg.episodes} seed={grpo_cfg.seed} "
        f"pos_emit={stats['pos_emit_rate']:.3f} neg_emit={stats['neg_emit_rate']:.3f} "
        f"format={stats['format_rate']:.3f}"
    )
    print(f"log and checkpoint written to {out_dir}")
    return 0


def _cmd_evaluate(args, cfg: AppConfig, paths) -> int:
    entries = manifest_mod.read_manifest(paths["manifest"])
    test = [e for e in entries if e.split == manifest_mod.Split.TEST] or entries
    outputs = manifest_mod.read_outputs(args.outputs)
    reasoning = args.reasoning_model or cfg.get("eval", "reasoning_model")
    counts = evaluation.score_outputs(test, outputs, _keywords(cfg), reasoning_model=reasoning)
    report = evaluation.compute_report(counts)

    table = [(args.name, report)]
    print(evaluation.report_to_table(table, "markdown").rstrip())
    out_dir = paths["outputs"]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(evaluation.report_to_table(table, "csv"), encoding="utf-8")
    (out_dir / "report.md").write_text(evaluation.report_to_table(table, "markdown"), encoding="utf-8")
    print(f"reports written to {out_dir}")
    return 0


def _cmd_serve_review(args, cfg: AppConfig, paths) -> int:
    from .review import ReviewStore, serve_review

    store = ReviewStore(
        manifest_path=paths["manifest"],
        verdicts_path=paths["verdicts"],
        cache_dir=paths["cache"],
        keywords=_keywords(cfg),
        kmz_first=cfg.get("review", "kmz_first"),
    )
    port = args.port if args.port is not None else cfg.get("review", "port")
    print(f"review service listening on http://{args.host}:{port}", flush=True)
    try:
        serve_review(store, host=args.host, port=port, ui_dir=args.ui_dir)
    finally:
        store.close()
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "fetch": _cmd_fetch,
    "caption": _cmd_caption,
    "curate": _cmd_curate,
    "train-toy": _cmd_train_toy,
    "evaluate": _cmd_evaluate,
    "serve-review": _cmd_serve_review,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = load_config(args.config)
        paths = _paths(cfg, args.manifest)
        return _COMMANDS[args.command](args, cfg, paths)
    except PipelineError as exc:
        if args.json:
            print(json.dumps({"error": exc.payload()}), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
