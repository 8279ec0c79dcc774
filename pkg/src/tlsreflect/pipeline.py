"""Stage functions and the end-to-end pipeline.

Each stage is a plain function on in-memory objects. The CLI subcommands
call one stage each and exchange data through the files named in
``ARTIFACTS``; :func:`run_pipeline` calls them back to back and writes the
same files, so both routes give identical outputs.
"""
import json
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import _accel
from .core import SpatialIndex, radius_filter, voxel_downsample
from .descriptor import point_normals, relsfh_batch, write_descriptor_dump
from .exceptions import CloudParseError, ConfigError, StageError, TlsReflectError
from .io import load_cloud, save_cloud
from .metrics import format_table, metrics_report, report_to_json
from .planes import PlaneSet, detect_reflective_planes
from .radiometry import (CorrectionModel, correct_intensity, extract_reflective_candidates,
                         fit_correction, incidence_geometry, read_calibration_csv, self_calibrate)
from .scoring import ScoreTable, remove_virtual, score_cloud

ARTIFACTS = {
    "corrected": "corrected.ply",
    "model": "correction_model.json",
    "candidates": "candidates.txt",
    "planes": "planes.json",
    "scores": "scores.csv",
    "descriptors": "descriptors.bin",
    "denoised": "denoised.ply",
    "labeled": "labeled.ply",
    "removal": "removal.json",
    "metrics": "metrics.json",
    "metrics_table": "metrics.txt",
}


@contextmanager
def stage(name):
    """Re-raise stage failures as :class:`StageError`; I/O and config errors pass through."""
    try:
        yield
    except (OSError, CloudParseError, ConfigError, StageError):
        raise
    except (TlsReflectError, ValueError, np.linalg.LinAlgError) as e:
        raise StageError(name, str(e)) from e


def _write_json(path, obj):
    with open(path, "w") as f:
        f.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def preprocess(cloud, cfg):
    rf, vx = cfg.preprocess.radius_filter, cfg.preprocess.voxel
    if rf.enabled:
        cloud = radius_filter(cloud, rf.radius, rf.min_neighbors)
    if vx.enabled:
        cloud = voxel_downsample(cloud, vx.size)
    return cloud


def correct_stage(cloud, cfg):
    """Preprocess, fit (or load) the correction model and fill corrected intensities."""
    r = cfg.radiometry
    with stage("preprocess"):
        cloud = preprocess(cloud, cfg)
    with stage("radiometry"):
        geom = incidence_geometry(cloud, SpatialIndex(cloud.positions), r.normal_k)
        if r.calibration_csv:
            I, c, R = read_calibration_csv(r.calibration_csv)
            model = fit_correction(I, c, R, r.deg_angle, r.deg_range, r.ref_angle_cos, r.ref_range,
                                   r.range_power_offset)
        else:
            model = self_calibrate(cloud, geom, r.deg_angle, r.deg_range, r.ref_angle_cos,
                                   r.ref_range, r.range_power_offset)
        cloud = correct_intensity(cloud, geom, model)
    return cloud, model


def candidates_stage(cloud, cfg):
    r = cfg.radiometry
    with stage("radiometry"):
        return extract_reflective_candidates(cloud, threshold=r.threshold, percentile=r.percentile)


def planes_stage(cloud, cfg):
    cand = candidates_stage(cloud, cfg)
    with stage("plane_detection"):
        return cand, detect_reflective_planes(cloud, cand, cfg.plane_config())


def score_stage(cloud, planes, cfg):
    with stage("scoring"):
        return score_cloud(cloud, planes, cfg.scoring_config())


def descriptor_dump(cloud, scores, cfg, path):
    """Descriptors of the scored points, each referenced to its own beam direction."""
    s = cfg.scoring
    with stage("scoring"):
        index = SpatialIndex(cloud.positions)
        normals, _ = point_normals(index, s.normal_k, cloud.scanner_origin)
        ids = scores.point_id
        u = cloud.positions[ids] - cloud.scanner_origin
        a, d, _ = relsfh_batch(index, normals, cloud.positions[ids], u, s.radius, s.n1, s.n2,
                               exclude=ids)
        write_descriptor_dump(path, ids, a, d)


def remove_stage(cloud, scores, cfg):
    with stage("remove_virtual"):
        return remove_virtual(cloud, scores, cfg.scoring.threshold)


def eval_stage(labeled):
    """Metrics report, or a marker that ground truth is unavailable."""
    with stage("metrics"):
        if not labeled.has_ground_truth:
            return {"available": False, "reason": "cloud carries no ground-truth labels"}
        rep = metrics_report(labeled.gt_label, labeled.pred_label)
        rep["available"] = True
        return rep


# ---------------------------------------------------------------------------
# artifact writers shared by the CLI and run_pipeline


def write_corrected(out, cloud, model):
    save_cloud(cloud, out / ARTIFACTS["corrected"])
    model.save(out / ARTIFACTS["model"])


def write_planes(out, cand, planes):
    np.savetxt(out / ARTIFACTS["candidates"], cand, fmt="%d")
    planes.save(out / ARTIFACTS["planes"])


def write_scores(out, scores):
    scores.to_csv(out / ARTIFACTS["scores"])


def write_removal(out, result):
    save_cloud(result.kept, out / ARTIFACTS["denoised"])
    save_cloud(result.labeled, out / ARTIFACTS["labeled"])
    _write_json(out / ARTIFACTS["removal"], result.report)


def write_metrics(out, report, name="scan"):
    with open(out / ARTIFACTS["metrics"], "w") as f:
        f.write(report_to_json(report) + "\n")
    with open(out / ARTIFACTS["metrics_table"], "w") as f:
        if report.get("available"):
            f.write(format_table({name: report}))
        else:
            f.write("metrics unavailable: " + report["reason"] + "\n")


def write_run_report(out, cfg, command, summary):
    _write_json(out / f"run_{command}.json", {"command": command, "config": cfg.to_dict(),
                                              "summary": summary})


def read_corrected(path):
    cloud = load_cloud(path)
    if cloud.intensity_corrected is None:
        raise StageError("input", f"{path} has no intensity_corrected property; run 'correct' first")
    return cloud


def run_pipeline(cfg, cloud=None):
    """All stages in order; writes every artifact into ``cfg.output_dir``.

    Returns a dict with the in-memory results.
    """
    cfg.validate()
    _accel.set_threads(cfg.threads)
    out = Path(cfg.output_dir)
    if cloud is None:
        if not cfg.input:
            raise ConfigError("no input cloud given")
        cloud = load_cloud(cfg.input)
    os.makedirs(out, exist_ok=True)
    corrected, model = correct_stage(cloud, cfg)
    write_corrected(out, corrected, model)
    cand, planes = planes_stage(corrected, cfg)
    write_planes(out, cand, planes)
    scores = score_stage(corrected, planes, cfg)
    write_scores(out, scores)
    if cfg.stages.descriptor_dump:
        descriptor_dump(corrected, scores, cfg, out / ARTIFACTS["descriptors"])
    result = remove_stage(corrected, scores, cfg)
    write_removal(out, result)
    report = None
    if cfg.stages.metrics:
        report = eval_stage(result.labeled)
        write_metrics(out, report)
    summary = {
        "n_input": len(cloud),
        "n_after_preprocess": len(corrected),
        "n_candidates": int(len(cand)),
        "n_planes": len(planes),
        **result.report,
    }
    write_run_report(out, cfg, "pipeline", summary)
    return {"cloud": corrected, "model": model, "candidates": cand, "planes": planes,
            "scores": scores, "removal": result, "metrics": report, "summary": summary}


def load_planes(path):
    return PlaneSet.load(path)


def load_scores(path):
    return ScoreTable.from_csv(path)


def load_model(path):
    return CorrectionModel.load(path)
