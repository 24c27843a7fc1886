"""Command-line surface tying the evaluation pipelines together.

Every flag mirrors a config key and wins over the config file. Exit
codes: 0 on success with full coverage, 2 on usage/config errors, 1 on
runtime errors, 3 when coverage is incomplete and --allow-partial was
not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import Config, ConfigError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="run seed (config: seed)")
    parser.add_argument("--workers", type=int, help="worker pool size (config: workers)")
    parser.add_argument("--allow-partial", action="store_true",
                        help="exit 0 even when coverage is incomplete")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vton-eval",
        description="Evaluation engine and benchmark harness for virtual try-on outputs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="filter, cluster, sample, split, emit manifest")
    _common(p)
    p.add_argument("--candidates", required=True, help="candidate pool (JSONL)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--target-n", type=int, help="final sample count (default: all kept)")
    p.add_argument("--clusters-k", type=int, help="config: clusters.k")
    p.add_argument("--min-side", type=int, help="config: curation.min_side")
    p.add_argument("--max-side", type=int, help="config: curation.max_side")

    p = sub.add_parser("caption", help="two-stage garment captioning")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="captioned manifest path")
    p.add_argument("--endpoint", help="config: vlm.endpoint")
    p.add_argument("--model", help="config: vlm.model")

    p = sub.add_parser("judge", help="VLM scoring of all (triplet, method) pairs")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--endpoint", help="config: vlm.endpoint")
    p.add_argument("--model", help="config: vlm.model")

    p = sub.add_parser("rep-eval", help="representation metrics over all pairs")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--backend", help="builtin or file:<dir> (config: backend.kind)")
    p.add_argument("--levels", type=int, help="config: erosion.levels")
    p.add_argument("--element", help="config: erosion.element")
    p.add_argument("--emit-masks", help="write eroded mask hierarchies to this dir")

    p = sub.add_parser("pixel-eval", help="PSNR/SSIM (and LPIPS with adapter features)")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--lpips-dir", help="adapter feature dir with lpips_w_<layer>.vten")

    p = sub.add_parser("fid", help="Frechet distance per method")
    _common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", help="with --results: builtin features from images")
    p.add_argument("--results")
    p.add_argument("--real-features", help=".vten (N, D) matrix for the real set")
    p.add_argument("--gen-features", action="append", default=[],
                   metavar="METHOD=PATH", help="repeatable per-method feature matrix")

    p = sub.add_parser("meta-eval", help="correlations against human judgment")
    _common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--ratings", help="human ratings JSONL (export-study output)")
    p.add_argument("--human-dim", default="s_avg")
    p.add_argument("--level", choices=("method", "sample"), default="method")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="leaderboard tables and figures")
    _common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("serve-study", help="run the human-study HTTP service")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--study-dir", required=True)
    p.add_argument("--images-root", help="directory served under /images")
    p.add_argument("--ui", help="built rating UI served at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--expiry-minutes", type=int, help="config: study.expiry_minutes")

    p = sub.add_parser("export-study", help="dump collected ratings as JSONL")
    _common(p)
    p.add_argument("--study-dir", required=True)
    p.add_argument("--out", required=True)
    return parser


def _config_from(args: argparse.Namespace) -> Config:
    flags = {
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "clusters.k": getattr(args, "clusters_k", None),
        "curation.min_side": getattr(args, "min_side", None),
        "curation.max_side": getattr(args, "max_side", None),
        "erosion.levels": getattr(args, "levels", None),
        "erosion.element": getattr(args, "element", None),
        "backend.kind": getattr(args, "backend", None),
        "vlm.endpoint": getattr(args, "endpoint", None),
        "vlm.model": getattr(args, "model", None),
        "study.expiry_minutes": getattr(args, "expiry_minutes", None),
    }
    return Config.load(getattr(args, "config", None), flags)


def _coverage_exit(coverage: dict, allow_partial: bool) -> int:
    missing = coverage.get("missing", [])
    if missing:
        print(f"incomplete coverage: {len(missing)} of {coverage['expected']} "
              f"pairs missing {coverage['metric']}", file=sys.stderr)
        for pair in missing[:10]:
            print(f"  missing: {pair}", file=sys.stderr)
        return EXIT_OK if allow_partial else EXIT_PARTIAL
    return EXIT_OK


def _make_client(cfg: Config, store_dir=None):
    from .vlm import VlmClient, http_transport

    endpoint = cfg.require("vlm.endpoint")
    transport = http_transport(endpoint, os.environ.get("VTON_EVAL_API_KEY"))
    archive = None
    if store_dir is not None:
        from pathlib import Path

        Path(store_dir).mkdir(parents=True, exist_ok=True)
        archive = str(Path(store_dir) / "vlm_archive.jsonl")
    return VlmClient(transport, model=str(cfg.get("vlm.model")), archive_path=archive,
                     max_attempts=int(cfg.get("vlm.max_attempts")))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from(args)
        return _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failures get a clean line, not a trace
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _dispatch(args: argparse.Namespace, cfg: Config) -> int:
    from . import pipeline

    if args.command == "curate":
        summary = pipeline.run_curate(
            args.candidates, args.out_dir, seed=cfg.seed,
            k=int(cfg.get("clusters.k")), target_n=args.target_n,
            min_side=int(cfg.get("curation.min_side")),
            max_side=int(cfg.get("curation.max_side")),
            ratios=cfg.split_ratios())
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK

    if args.command == "caption":
        client = _make_client(cfg)
        summary = pipeline.run_caption(args.manifest, args.out, client)
        print(json.dumps(summary, sort_keys=True))
        if summary["failed"]:
            return EXIT_OK if args.allow_partial else EXIT_PARTIAL
        return EXIT_OK

    if args.command == "judge":
        client = _make_client(cfg, store_dir=args.store)
        coverage = pipeline.run_judge(args.manifest, args.results, args.store,
                                      client, workers=int(cfg.get("workers")))
        print(json.dumps({k: v for k, v in coverage.items() if k != "missing"},
                         sort_keys=True))
        return _coverage_exit(coverage, args.allow_partial)

    if args.command == "rep-eval":
        coverage = pipeline.run_rep_eval(
            args.manifest, args.results, args.store,
            backend_kind=str(cfg.get("backend.kind")),
            levels=int(cfg.get("erosion.levels")),
            element=str(cfg.get("erosion.element")),
            workers=int(cfg.get("workers")),
            emit_masks=args.emit_masks)
        print(json.dumps({k: v for k, v in coverage.items() if k != "missing"},
                         sort_keys=True))
        return _coverage_exit(coverage, args.allow_partial)

    if args.command == "pixel-eval":
        coverage = pipeline.run_pixel_eval(
            args.manifest, args.results, args.store,
            workers=int(cfg.get("workers")), lpips_dir=args.lpips_dir)
        print(json.dumps({k: v for k, v in coverage.items() if k != "missing"},
                         sort_keys=True))
        return _coverage_exit(coverage, args.allow_partial)

    if args.command == "fid":
        if args.real_features:
            summary = pipeline.run_fid_from_features(
                args.real_features, args.gen_features, args.store)
        elif args.manifest and args.results:
            summary = pipeline.run_fid_from_images(
                args.manifest, args.results, args.store)
        else:
            print("fid needs either --real-features/--gen-features or "
                  "--manifest/--results", file=sys.stderr)
            return EXIT_USAGE
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK

    if args.command == "meta-eval":
        summary = pipeline.run_meta_eval(
            args.store, ratings_path=args.ratings, human_column=args.human_dim,
            level=args.level, out_dir=args.out_dir)
        print(json.dumps(summary, sort_keys=True))
        if summary["skipped"]:
            return EXIT_OK if args.allow_partial else EXIT_PARTIAL
        return EXIT_OK

    if args.command == "report":
        from .report import write_report
        from .store import read_aggregates

        aggregates = read_aggregates(args.store)
        if not aggregates:
            print("no results in store", file=sys.stderr)
            return EXIT_ERROR
        written = write_report(aggregates, args.out_dir)
        print(json.dumps({"written": written}, sort_keys=True))
        return EXIT_OK

    if args.command == "serve-study":
        return _serve_study(args, cfg)

    if args.command == "export-study":
        from dataclasses import asdict

        from .study import StudyState

        state = StudyState(items=[], data_dir=args.study_dir, seed=cfg.seed)
        ratings = state.export_ratings()
        with open(args.out, "w", encoding="utf-8") as fh:
            for rating in ratings:
                fh.write(json.dumps(asdict(rating), ensure_ascii=False,
                                    sort_keys=True) + "\n")
        print(json.dumps({"ratings": len(ratings), "out": args.out}, sort_keys=True))
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def build_study_state(manifest_path, results_path, study_dir, seed, expiry_minutes):
    from . import manifest as mf
    from .study import StudyItem, StudyState

    pairs = []
    records = {r.id: r for r in mf.load_manifest(manifest_path)}
    for res in mf.load_results(results_path):
        record = records[res.triplet_id]
        pairs.append(StudyItem(
            triplet_id=res.triplet_id,
            method_id=res.method_id,
            garment_url=f"/images/{record.garment_path}",
            ground_truth_url=f"/images/{record.ground_truth_path}",
            generated_url=f"/images/{res.image_path}",
        ))
    return StudyState(items=pairs, data_dir=study_dir, seed=seed,
                      expiry_s=expiry_minutes * 60)


def _serve_study(args: argparse.Namespace, cfg: Config) -> int:
    import uvicorn

    from .study import create_app

    state = build_study_state(args.manifest, args.results, args.study_dir,
                              cfg.seed, int(cfg.get("study.expiry_minutes")))
    app = create_app(state, images_root=args.images_root, ui_dir=args.ui)
    print(f"serving study on http://{args.host}:{args.port} "
          f"({len(state.items)} items)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
