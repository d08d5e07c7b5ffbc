"""End-to-end experiment runner.

Layout of ``<out>/<config digest>/``::

    config.json
    dataset/      samples.csv, dataset.json, summary.json (+ walks.csv for dw)
    test/         summary.json (class counts only; the samples stay in the vault)
    tune/         tune.csv, selected.json
    assess/       assessment.csv, summary.json
    model/        net.json, run.json
    verify/       certificates.json
    embed/        droop_grid.csv, droop.json, power_grid.csv, power.json
    compare/      eps_ratio.csv
    timings.json  wall-clock times (not part of the reproducible reports)

Every file except ``timings.json`` is a deterministic function of the config.
"""
import json
import os
import time

from .embedding import EmbeddingQuery, export_contour_grid, verify_region
from .harness import (assess, base_dataset, build_test_set, dataset_summary, tune, write_assessment_csv,
                      write_tune_csv)
from .loops import certify_corners, compare_stat_vs_verified, log_schedule, write_comparison_csv
from .milp.model import unit_layers
from .walks import write_paths_csv

STAGES = ("dataset", "test", "tune", "assess", "model", "verify", "embed", "compare")


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def report_cert(cert):
    """Certificate dict without run-to-run noise (wall time)."""
    d = cert.to_dict()
    d.pop("wall_time", None)
    return d


def _strip_wall(summary):
    if summary and "certificates" in summary:
        summary = dict(summary, certificates=[{k: v for k, v in c.items() if k != "wall_time"}
                                              for c in summary["certificates"]])
    return summary


def run_pipeline(cfg, out, workers=1, stages=STAGES, log=print):
    """Run the stages in order; returns the run directory."""
    root = os.path.join(out, cfg.digest())
    os.makedirs(root, exist_ok=True)
    write_json(os.path.join(root, "config.json"), cfg.to_dict())
    timings = {}
    state = {}

    def stage(name):
        def deco(fn):
            if name not in stages:
                return fn
            d = os.path.join(root, name)
            os.makedirs(d, exist_ok=True)
            t0 = time.perf_counter()
            try:
                fn(d)
            except Exception as exc:
                timings[name] = time.perf_counter() - t0
                write_json(os.path.join(root, "timings.json"), timings)
                raise PipelineError(name, exc) from exc
            timings[name] = time.perf_counter() - t0
            log(f"[{name}] done in {timings[name]:.1f} s")
            return fn
        return deco

    # the vault exists before the dataset so the split carries a reference to it,
    # but nothing before the assessment stage opens it
    state["vault"] = build_test_set(cfg.test_grid_per_dim)

    @stage("dataset")
    def _(d):
        ds, walk_info = base_dataset(cfg, state["vault"])
        ds.save(d)
        summary = dataset_summary(ds)
        if walk_info:
            write_paths_csv(os.path.join(d, "walks.csv"), walk_info.pop("results"))
            summary["walks"] = walk_info
        write_json(os.path.join(d, "summary.json"), summary)
        state["ds"] = ds

    @stage("test")
    def _(d):
        write_json(os.path.join(d, "summary.json"),
                   {"per_dim": cfg.test_grid_per_dim, "n": len(state["vault"])})

    @stage("tune")
    def _(d):
        res = tune(cfg, state["ds"], workers)
        write_tune_csv(os.path.join(d, "tune.csv"), res)
        write_json(os.path.join(d, "selected.json"), {**res.selected.__dict__,
                                                      "n_params": res.selected.n_params()})
        state["hp"] = res.selected

    @stage("assess")
    def _(d):
        report, runs = assess(cfg, state["ds"], state["hp"], state["vault"], workers=workers)
        write_assessment_csv(os.path.join(d, "assessment.csv"), report)
        write_json(os.path.join(d, "summary.json"), report.summary())
        state["runs"] = runs

    @stage("model")
    def _(d):
        # the first converged assessment run feeds verification and embedding
        ok = [r for r in state["runs"] if not r.diverged]
        if not ok:
            raise RuntimeError("every assessment run diverged")
        rr = ok[0]
        rr.net.save(os.path.join(d, "net.json"))
        write_json(os.path.join(d, "run.json"), {
            "run_seed": rr.seed, "val_objective": rr.val_objective,
            "training": [r.summary() for r in rr.reports],
            "dataset_size": len(rr.dataset), "enrichment": _strip_wall(rr.enrichment)})
        state["net"] = rr.net
        state["layers"] = unit_layers(rr.net)

    @stage("verify")
    def _(d):
        certs = certify_corners(state["net"], cfg.verify_delta, layers=state["layers"],
                                node_limit=cfg.node_limit)
        write_json(os.path.join(d, "certificates.json"), [report_cert(c) for c in certs])
        state["certs"] = certs

    @stage("embed")
    def _(d):
        for free, (fixed, anchor) in (("droop", cfg.droop_query), ("power", cfg.power_query)):
            q = EmbeddingQuery(free, tuple(fixed), tuple(anchor), cfg.verify_delta)
            cert = verify_region(state["net"], q, node_limit=cfg.node_limit, layers=state["layers"])
            export_contour_grid(state["net"], q, cfg.embed_resolution, os.path.join(d, f"{free}_grid.csv"),
                                layers=state["layers"])
            d_cert = report_cert(cert)
            if cert.witness is not None:
                i, j = q.free_dims
                d_cert["change_point"] = {"u": float(cert.witness[i]), "v": float(cert.witness[j]),
                                          "physical": [float(x) for x in state["net"].cube.from_unit(cert.witness)]}
            write_json(os.path.join(d, f"{free}.json"), d_cert)

    @stage("compare")
    def _(d):
        sched = log_schedule(cfg.compare_n_max, cfg.compare_per_decade)
        rows = compare_stat_vs_verified(state["net"], state["certs"], sched, cfg.compare_seeds, cfg.seed,
                                        layers=state["layers"])
        write_comparison_csv(os.path.join(d, "eps_ratio.csv"), rows)

    write_json(os.path.join(root, "timings.json"), timings)
    return root
