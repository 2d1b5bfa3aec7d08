"""Command-line interface.

Exit codes: 0 success, 1 operational error (structured JSON on stderr),
2 usage error. File outputs are written atomically (temp file + rename);
``--output -`` streams to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import analytics, blur, ingest, raster
from .errors import FairlensError
from .fairness import (
    FairnessReport,
    fairness_report,
    load_report,
    report_to_csv,
    report_to_lines,
    report_to_markdown,
    save_report,
)
from .portal import PortalApp, PortalService, make_server


def _tau(value: str) -> float:
    tau = float(value)
    if not 0.0 < tau <= 1.0:
        raise argparse.ArgumentTypeError(f"tau must be in (0, 1], got {value}")
    return tau


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _eps_grid(value: str) -> list[float]:
    try:
        grid = [float(tok) for tok in value.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps grid {value!r}") from exc
    if not grid or any(e <= 0 for e in grid):
        raise argparse.ArgumentTypeError("eps grid needs positive comma-separated values")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairlens")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("evaluate", help="per-group fairness report from a manifest + detections")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--tau", type=_tau, default=0.5)
    p.add_argument("--grouping", choices=("ethnicity", "gender", "age_group"),
                   default="ethnicity")
    p.add_argument("--format", choices=("markdown", "csv", "lines"), default="markdown")
    p.add_argument("--output", default="-")

    p = sub.add_parser("cluster", help="DBSCAN sweep, quality metrics, 2-D scatter export")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--eps-grid", type=_eps_grid, default=[0.2, 0.4, 0.6, 0.8, 1.0, 1.2])
    p.add_argument("--min-pts", type=_positive_int, default=3)
    p.add_argument("--projection", choices=("pca", "tsne"), default="pca")
    p.add_argument("--perplexity", type=float, default=15.0)
    p.add_argument("--iterations", type=_positive_int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scatter-out", default=None)
    p.add_argument("--output", default="-")

    p = sub.add_parser("anonymize", help="blur detected faces in an image")
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", required=True, help="detections file with the regions to blur")
    p.add_argument("--image-id", default=None,
                   help="which image's detections to apply (default: image file stem)")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--output", required=True)
    p.add_argument("--audit-out", default=None)

    p = sub.add_parser("serve", help="run the annotation portal HTTP API")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--token-file", default=os.environ.get("FAIRLENS_TOKEN_FILE"))
    p.add_argument("--manifest", default=None)
    p.add_argument("--detections", default=None)
    p.add_argument("--state", default=None, help="append-only event log path")
    p.add_argument("--blob-dir", default=None)
    p.add_argument("--ui-dir", default=None)
    p.add_argument("--dataset", default="portal")

    p = sub.add_parser("export-retrain", help="export verified corrections as a manifest")
    p.add_argument("--state", required=True)
    p.add_argument("--dataset", default="portal")
    p.add_argument("--since", type=float, default=0.0)
    p.add_argument("--output", default="-")

    p = sub.add_parser("report", help="render a saved fairness report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--output", default="-")
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def write_output(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
        return
    target = Path(output)
    fd, tmp = tempfile.mkstemp(dir=str(target.parent) or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_output_bytes(blob: bytes, output: str) -> None:
    target = Path(output)
    fd, tmp = tempfile.mkstemp(dir=str(target.parent) or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_report_table(report: FairnessReport, fmt: str) -> str:
    if fmt == "markdown":
        return report_to_markdown(report)
    if fmt == "csv":
        return report_to_csv(report)
    return report_to_lines(report)


def _cmd_evaluate(args) -> int:
    manifest = ingest.load_manifest(args.manifest)
    detections = ingest.load_detections(args.detections)
    report = fairness_report(manifest, detections, args.tau, args.grouping)
    write_output(render_report_table(report, args.format), args.output)
    return 0


def _cmd_cluster(args) -> int:
    embs = ingest.load_embeddings(args.embeddings)
    dist = analytics.pairwise_distances(embs)
    sweep = analytics.sweep_dbscan(dist, args.eps_grid, args.min_pts, embs=embs)
    if args.projection == "pca":
        proj = analytics.pca_project(embs).projection
    else:
        proj = analytics.tsne_project(embs, args.perplexity, args.iterations,
                                      args.learning_rate, args.seed).projection
    if args.scatter_out:
        analytics.export_scatter(proj, sweep.assignment.labels, args.scatter_out)
    summary = {
        "eps": sweep.eps,
        "clusters": sweep.assignment.n_clusters,
        "noise": len(sweep.assignment.noise()),
        "msc": sweep.quality.msc,
        "dbi": sweep.quality.dbi,
        "projection": args.projection,
    }
    write_output(json.dumps(summary, ensure_ascii=False) + "\n", args.output)
    return 0


def _cmd_anonymize(args) -> int:
    img = raster.load_image(args.image)
    detections = ingest.load_detections(args.boxes)
    image_id = args.image_id or Path(args.image).stem
    # a detections file usually spans many images; apply this image's boxes only
    boxes = [d.box for d in detections if d.image_id == image_id]
    config = blur.BlurConfig(sigma=args.sigma, margin=args.margin)
    out, audit = blur.anonymize(img, boxes, config, image_id=image_id)
    if Path(args.output).suffix.lower() == ".ppm":
        write_output(raster.dump_ppm(out), args.output)
    else:
        write_output_bytes(raster.to_png_bytes(out), args.output)
    if args.audit_out:
        write_output(audit.to_lines(), args.audit_out)
    return 0


def _cmd_serve(args) -> int:
    if not args.token_file:
        print("serve needs --token-file or FAIRLENS_TOKEN_FILE", file=sys.stderr)
        return 2
    service = PortalService(log_path=args.state, blob_dir=args.blob_dir)
    base_manifest = ingest.load_manifest(args.manifest) if args.manifest else None
    base_detections = tuple(ingest.load_detections(args.detections)) if args.detections else ()
    dataset_id = args.dataset
    if base_manifest is not None:
        dataset_id = base_manifest.dataset_id or dataset_id
    app = PortalApp.from_token_file(service, args.token_file,
                                    base_manifest=base_manifest,
                                    base_detections=base_detections,
                                    dataset_id=dataset_id,
                                    ui_dir=args.ui_dir)
    server = make_server(app, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"fairlens portal listening on http://{host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_export_retrain(args) -> int:
    service = PortalService(log_path=args.state)
    manifest = service.export_retrain_manifest(args.dataset, args.since)
    write_output(ingest.manifest_to_lines(manifest), args.output)
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.report)
    write_output(render_report_table(report, args.format), args.output)
    return 0


_COMMANDS = {
    "evaluate": _cmd_evaluate,
    "cluster": _cmd_cluster,
    "anonymize": _cmd_anonymize,
    "serve": _cmd_serve,
    "export-retrain": _cmd_export_retrain,
    "report": _cmd_report,
}


def run(args: argparse.Namespace) -> int:
    try:
        return _COMMANDS[args.subcommand](args)
    except FairlensError as exc:
        print(json.dumps(exc.as_dict(), ensure_ascii=False), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"code": "FileNotFound", "message": str(exc), "details": {}}),
              file=sys.stderr)
        return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else list(argv))
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
