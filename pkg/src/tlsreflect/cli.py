"""Command-line entry point: one subcommand per stage plus ``pipeline``.

Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
4 stage failure.
"""
import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import _accel
from . import pipeline as P
from .config import default_config, load_config
from .exceptions import CloudParseError, ConfigError, StageError, TlsReflectError
from .io import load_cloud, save_cloud
from .metrics import format_table, original_snr
from .simulator import PRESETS, SceneSpec, scene_presets, trace_scene

EXIT_CONFIG, EXIT_IO, EXIT_STAGE = 2, 3, 4


def _common(p, needs_input=True):
    p.add_argument("--input", required=False, help="input cloud (.ply or .xyz)" if needs_input else None)
    p.add_argument("--output-dir", help="directory for artifacts (default from config)")
    p.add_argument("--config", help="JSON config; omitted keys take defaults")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="override the config seed")


def build_parser():
    ap = argparse.ArgumentParser(prog="tlsreflect",
                                 description="Reflection-noise removal for single-station TLS clouds.")
    ap.add_argument("--print-default-config", action="store_true",
                    help="print the default JSON config and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="ray-trace a synthetic scan with ground truth")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--scene", help="scene description JSON")
    p.add_argument("--output", help="output cloud path (default <output-dir>/scan.ply)")
    _common(p, needs_input=False)

    p = sub.add_parser("correct", help="radiometric correction")
    _common(p)
    p.add_argument("--calibration-csv", help="calibration samples (intensity,cos_alpha,range)")

    p = sub.add_parser("detect-planes", help="candidate extraction and plane detection")
    _common(p)
    p.add_argument("--percentile", type=float, help="candidate percentile (replaces threshold)")
    p.add_argument("--threshold", type=float, help="absolute corrected-intensity threshold")

    p = sub.add_parser("score", help="virtual-point scores against detected planes")
    _common(p)
    p.add_argument("--planes", help="planes JSON (default <output-dir>/planes.json)")

    p = sub.add_parser("remove", help="label and drop points above the score threshold")
    _common(p)
    p.add_argument("--scores", help="scores CSV (default <output-dir>/scores.csv)")
    p.add_argument("--score-threshold", type=float, help="override scoring.threshold")

    p = sub.add_parser("eval", help="metrics from a labeled cloud, or original SNR from counts")
    _common(p)
    p.add_argument("--counts", help="CSV with columns name,real,virtual")

    p = sub.add_parser("pipeline", help="all stages end to end")
    _common(p)
    return ap


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "input", None):
        cfg.input = args.input
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "calibration_csv", None):
        cfg.radiometry.calibration_csv = args.calibration_csv
    if getattr(args, "percentile", None) is not None or getattr(args, "threshold", None) is not None:
        cfg.radiometry.percentile = args.percentile
        cfg.radiometry.threshold = args.threshold
    if getattr(args, "score_threshold", None) is not None:
        cfg.scoring.threshold = args.score_threshold
    return cfg.validate()


def _need_input(cfg):
    if not cfg.input:
        raise ConfigError("no input cloud given (--input or config 'input')")
    return cfg.input


def _out(cfg):
    out = Path(cfg.output_dir)
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args, cfg):
    if args.scene:
        with open(args.scene) as f:
            try:
                spec = SceneSpec.from_json(f.read())
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ConfigError(f"{args.scene}: invalid scene ({e})") from None
        spec.seed = cfg.seed
    else:
        spec = scene_presets(args.preset or "one-wall", seed=cfg.seed)
    with P.stage("simulate"):
        spec.validate()
        cloud = trace_scene(spec)
    path = Path(args.output) if args.output else _out(cfg) / "scan.ply"
    if path.parent:
        os.makedirs(path.parent, exist_ok=True)
    save_cloud(cloud, path)
    with open(path.with_suffix(".scene.json"), "w") as f:
        f.write(spec.to_json() + "\n")
    print(f"wrote {len(cloud)} points to {path}")


def cmd_correct(args, cfg):
    cloud = load_cloud(_need_input(cfg))
    out = _out(cfg)
    corrected, model = P.correct_stage(cloud, cfg)
    P.write_corrected(out, corrected, model)
    P.write_run_report(out, cfg, "correct", {"n_input": len(cloud), "n_after_preprocess": len(corrected)})
    print(f"corrected {len(corrected)} points -> {out / P.ARTIFACTS['corrected']}")


def cmd_detect_planes(args, cfg):
    cloud = P.read_corrected(_need_input(cfg))
    out = _out(cfg)
    cand, planes = P.planes_stage(cloud, cfg)
    P.write_planes(out, cand, planes)
    P.write_run_report(out, cfg, "detect-planes", {"n_candidates": int(len(cand)),
                                                     "n_planes": len(planes)})
    print(f"{len(cand)} candidates, {len(planes)} plane(s) -> {out / P.ARTIFACTS['planes']}")


def cmd_score(args, cfg):
    cloud = P.read_corrected(_need_input(cfg))
    out = _out(cfg)
    planes = P.load_planes(args.planes or out / P.ARTIFACTS["planes"])
    scores = P.score_stage(cloud, planes, cfg)
    P.write_scores(out, scores)
    if cfg.stages.descriptor_dump:
        P.descriptor_dump(cloud, scores, cfg, out / P.ARTIFACTS["descriptors"])
    P.write_run_report(out, cfg, "score", {"n_scored": len(scores)})
    print(f"scored {len(scores)} points -> {out / P.ARTIFACTS['scores']}")


def cmd_remove(args, cfg):
    cloud = P.read_corrected(_need_input(cfg))
    out = _out(cfg)
    scores = P.load_scores(args.scores or out / P.ARTIFACTS["scores"])
    if len(scores) and scores.point_id.max() >= len(cloud):
        raise StageError("remove_virtual", "score table refers to points outside the cloud")
    result = P.remove_stage(cloud, scores, cfg)
    P.write_removal(out, result)
    P.write_run_report(out, cfg, "remove", result.report)
    print(f"removed {len(result.removed_ids)} of {len(cloud)} points -> "
          f"{out / P.ARTIFACTS['denoised']}")


def read_counts_csv(path):
    """Rows ``name,real,virtual`` (header required)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if not {"name", "real", "virtual"} <= set(reader.fieldnames or []):
            raise ConfigError(f"{path}: expected columns name,real,virtual")
        return [(r["name"], int(r["real"].replace(",", "")), int(r["virtual"].replace(",", "")))
                for r in reader]


def counts_table(rows):
    lines = [f"{'name':>10}  {'real':>10}  {'virtual':>10}  {'SNR0 dB':>8}"]
    for name, real, virtual in rows:
        lines.append(f"{name:>10}  {real:>10}  {virtual:>10}  {original_snr(real, virtual):8.2f}")
    return "\n".join(lines) + "\n"


def cmd_eval(args, cfg):
    if args.counts:
        sys.stdout.write(counts_table(read_counts_csv(args.counts)))
        return
    cloud = load_cloud(_need_input(cfg))
    out = _out(cfg)
    report = P.eval_stage(cloud)
    P.write_metrics(out, report)
    if report.get("available"):
        sys.stdout.write(format_table({Path(cfg.input).stem: report}))
    else:
        print("metrics unavailable: " + report["reason"])


def cmd_pipeline(args, cfg):
    _need_input(cfg)
    res = P.run_pipeline(cfg)
    rep = res["metrics"]
    if rep is not None and rep.get("available"):
        sys.stdout.write(format_table({Path(cfg.input).stem: rep}))
    s = res["summary"]
    print(f"{s['n_planes']} plane(s), removed {s['n_removed']} of {s['n_points']} points")


COMMANDS = {
    "simulate": cmd_simulate,
    "correct": cmd_correct,
    "detect-planes": cmd_detect_planes,
    "score": cmd_score,
    "remove": cmd_remove,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_default_config:
        print(default_config().to_json())
        return 0
    if args.command is None:
        ap.print_help()
        return EXIT_CONFIG
    try:
        cfg = _resolve_config(args)
        _accel.set_threads(cfg.threads)
        COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CloudParseError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE
    except TlsReflectError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
