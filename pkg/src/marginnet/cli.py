"""Command-line entry point: ``marginnet <subcommand> [--config F] [--seed S] [--out DIR]``."""
import argparse
import csv
import json
import os
import sys

import numpy as np

from .dataset import read_samples_csv, write_samples_csv
from .embedding import EmbeddingQuery, default_query, export_contour_grid, verify_region
from .harness import (HyperParams, assess, base_dataset, base_samples, build_test_set, dataset_summary,
                      load_config, train_run, tune, write_assessment_csv, write_tune_csv)
from .loops import (certify_corners, compare_stat_vs_verified, log_schedule, ni_enrich, vi_enrich,
                    write_comparison_csv)
from .milp.bnb import Certificate
from .milp.model import Threshold, unit_layers
from .milp.verify import verify_point
from .net import MLP
from .pipeline import PipelineError, run_pipeline, write_json
from .seeds import derive_seed
from .walks import enrich_dw, write_paths_csv


def _pair(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return tuple(vals)


def _point(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated numbers")
    return np.array(vals)


def _config(args, **overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return load_config(args.config, args.seed, overrides)


def _out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _selected(args, cfg):
    if getattr(args, "selected", None):
        with open(args.selected) as fh:
            d = json.load(fh)
        d.pop("n_params", None)
        return HyperParams(**d)
    return cfg.cells()[0]


def write_history_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_ly", "train_lj", "val_ly", "val_lj"])
        for r in reports:
            for i in range(len(r.train_ly)):
                w.writerow([r.start_epoch + i, *(repr(float(a[i])) for a in
                                                  (r.train_ly, r.train_lj, r.val_ly, r.val_lj))])


# subcommands


def cmd_sample(args):
    cfg = _config(args, sampler=args.sampler, size=args.size)
    out = _out(args)
    s = base_samples(cfg)
    write_samples_csv(os.path.join(out, "samples.csv"), s)
    print(f"{len(s)} samples -> {out}/samples.csv")


def cmd_walk(args):
    cfg = _config(args)
    out = _out(args)
    samples = read_samples_csv(args.input) if args.input else base_samples(cfg)
    dw, results = enrich_dw(samples, cfg.walk)
    write_paths_csv(os.path.join(out, "walks.csv"), results)
    write_samples_csv(os.path.join(out, "dw_samples.csv"), dw)
    print(f"{len(results)} walks, {len(dw)} points added -> {out}")


def cmd_train(args):
    cfg = _config(args, variant=args.variant)
    out = _out(args)
    ds, _ = base_dataset(cfg)
    hp = _selected(args, cfg)
    rr = train_run(cfg, ds, hp, derive_seed(cfg.seed, "train"))
    if rr.diverged:
        sys.exit(f"training diverged: {rr.error}")
    rr.net.save(os.path.join(out, "net.json"))
    rr.dataset.save(os.path.join(out, "dataset"))
    write_history_csv(os.path.join(out, "history.csv"), rr.reports)
    write_json(os.path.join(out, "train.json"), {
        "hyper_params": hp.__dict__, "val_objective": rr.val_objective,
        "training": [r.summary() for r in rr.reports], "dataset": dataset_summary(rr.dataset),
        "enrichment": rr.enrichment})
    print(f"best validation objective {rr.val_objective:.6g} -> {out}/net.json")


def _enrich_cfg(args, cfg):
    from dataclasses import replace
    e = cfg.enrich
    return replace(e, delta=args.delta if args.delta is not None else e.delta,
                   seed=derive_seed(cfg.seed, args.command))


def cmd_enrich_ni(args):
    cfg = _config(args)
    out = _out(args)
    net = MLP.load(args.net)
    batch = ni_enrich(net, _enrich_cfg(args, cfg))
    write_samples_csv(os.path.join(out, "ni_samples.csv"), batch.samples)
    write_json(os.path.join(out, "ni.json"), batch.summary())
    print(f"NI: {batch.n_candidates} candidates, {len(batch.samples)} labeled ({batch.status})")


def cmd_enrich_vi(args):
    cfg = _config(args)
    out = _out(args)
    net = MLP.load(args.net)
    batch = vi_enrich(net, _enrich_cfg(args, cfg), node_limit=cfg.node_limit)
    write_samples_csv(os.path.join(out, "vi_samples.csv"), batch.samples)
    write_json(os.path.join(out, "vi.json"), batch.summary())
    print(f"VI: excluded fraction {batch.excluded_fraction:.3f}, {len(batch.samples)} labeled "
          f"({batch.status})")


def cmd_tune(args):
    cfg = _config(args, variant=args.variant)
    out = _out(args)
    ds, _ = base_dataset(cfg)
    res = tune(cfg, ds, args.workers)
    write_tune_csv(os.path.join(out, "tune.csv"), res)
    write_json(os.path.join(out, "selected.json"), {**res.selected.__dict__,
                                                    "n_params": res.selected.n_params()})
    print(f"selected {res.selected}")


def cmd_assess(args):
    cfg = _config(args, variant=args.variant)
    out = _out(args)
    vault = build_test_set(cfg.test_grid_per_dim)
    ds, _ = base_dataset(cfg, vault)
    report, _ = assess(cfg, ds, _selected(args, cfg), vault, workers=args.workers)
    write_assessment_csv(os.path.join(out, "assessment.csv"), report)
    write_json(os.path.join(out, "summary.json"), report.summary())
    s = report.summary()
    print(f"{s['n_runs']} runs, {s['failures']} diverged; median total MSE "
          f"{s['mse']['total'].get('median', float('nan')):.4g}")


def cmd_verify(args):
    cfg = _config(args)
    out = _out(args)
    net = MLP.load(args.net)
    delta = cfg.verify_delta if args.delta is None else args.delta
    layers = unit_layers(net)
    if args.point is not None:
        if args.threshold is None:
            sys.exit("--point needs --threshold (and optionally --sense)")
        u = net.cube.to_unit(args.point)
        certs = [verify_point(layers, u, Threshold(args.sense, args.threshold), node_limit=cfg.node_limit)]
    else:
        certs = certify_corners(net, delta, layers=layers, node_limit=cfg.node_limit)
    with open(os.path.join(out, "certificates.json"), "w") as fh:
        json.dump([c.to_dict() for c in certs], fh, indent=1, sort_keys=True)
    for i, c in enumerate(certs):
        print(f"{i:2d} {c.status:18s} eps*={c.epsilon_star:.6f}")


def cmd_embed(args):
    cfg = _config(args)
    out = _out(args)
    net = MLP.load(args.net)
    delta = cfg.verify_delta if args.delta is None else args.delta
    if args.fixed is None and args.anchor is None:
        q = default_query(args.free, delta, net.cube)
    else:
        if args.fixed is None or args.anchor is None:
            sys.exit("--fixed and --anchor go together")
        q = EmbeddingQuery(args.free, args.fixed, args.anchor, delta)
    cert = verify_region(net, q, node_limit=cfg.node_limit)
    res = args.resolution or cfg.embed_resolution
    export_contour_grid(net, q, res, os.path.join(out, f"{q.free}_grid.csv"), cert,
                        os.path.join(out, f"{q.free}.json"))
    print(f"{q.free} region: {cert.status}, eps*={cert.epsilon_star:.6f}")


def cmd_compare(args):
    cfg = _config(args)
    out = _out(args)
    net = MLP.load(args.net)
    if args.certificates:
        with open(args.certificates) as fh:
            certs = [Certificate.from_dict(d) for d in json.load(fh)]
    else:
        certs = certify_corners(net, cfg.verify_delta, node_limit=cfg.node_limit)
    n_max = args.n_max or cfg.compare_n_max
    sched = log_schedule(n_max, cfg.compare_per_decade)
    rows = compare_stat_vs_verified(net, certs, sched, args.n_seeds or cfg.compare_seeds, cfg.seed)
    write_comparison_csv(os.path.join(out, "eps_ratio.csv"), rows)
    print(f"{len(rows)} rows -> {out}/eps_ratio.csv")


def cmd_pipeline(args):
    cfg = _config(args, variant=args.variant)
    try:
        root = run_pipeline(cfg, args.out, workers=args.workers)
    except PipelineError as exc:
        sys.exit(str(exc))
    print(root)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")

    p = argparse.ArgumentParser(prog="marginnet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("sample", cmd_sample, "label a base design with the oracle")
    sp.add_argument("--sampler", choices=("grid", "uniform", "lhc"))
    sp.add_argument("--size", type=int)

    sp = add("walk", cmd_walk, "directed walks from trigger-band samples")
    sp.add_argument("--input", help="samples CSV (default: the configured base design)")

    for name, fn, help_ in (("train", cmd_train, "train one network"),
                            ("tune", cmd_tune, "grid search with seeded model selection"),
                            ("assess", cmd_assess, "seeded assessment on the sealed test grid"),
                            ("pipeline", cmd_pipeline, "run every stage end to end")):
        sp = add(name, fn, help_)
        sp.add_argument("--variant", choices=("base", "dw", "ni", "vi", "pr"))
        if name in ("train", "assess"):
            sp.add_argument("--selected", help="selected.json from tune (default: first grid cell)")
        if name in ("tune", "assess", "pipeline"):
            sp.add_argument("--workers", type=int, default=1, help="parallel training processes")

    for name, fn in (("enrich-ni", cmd_enrich_ni), ("enrich-vi", cmd_enrich_vi)):
        sp = add(name, fn, f"{name[7:].upper()} enrichment batch for a trained network")
        sp.add_argument("--net", required=True)
        sp.add_argument("--delta", type=float)

    sp = add("verify", cmd_verify, "certify the 16 corners or one point")
    sp.add_argument("--net", required=True)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--point", type=_point, help="physical anchor x1,x2,x3,x4")
    sp.add_argument("--threshold", type=float, help="damping threshold in percent")
    sp.add_argument("--sense", choices=("le", "ge"), default="le")

    sp = add("embed", cmd_embed, "certify a droop or power region")
    sp.add_argument("--net", required=True)
    sp.add_argument("--free", choices=("droop", "power"), default="droop")
    sp.add_argument("--fixed", type=_pair, help="physical values of the fixed pair")
    sp.add_argument("--anchor", type=_pair, help="physical center of the free pair")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--resolution", type=int)

    sp = add("compare-eps", cmd_compare, "statistical versus verified distances")
    sp.add_argument("--net", required=True)
    sp.add_argument("--certificates", help="certificates.json (default: certify the corners)")
    sp.add_argument("--n-seeds", type=int)
    sp.add_argument("--n-max", type=int)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        sys.exit(f"error: {exc}")


if __name__ == "__main__":
    main()
