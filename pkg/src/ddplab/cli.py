"""Experiment runner: configuration, seeded pipelines, sweeps, reports.

One JSON document configures a full run (schedule, data sizes, score-field
source, classifier, detector, ablation axis).  Every random choice derives
from the master seed through labeled hashing, so outputs are byte-stable:
the emitted ``config.lock.json`` reproduces every file exactly when fed
back through ``run``.

Subcommands:

* ``run``           - full pipeline: data -> classifier -> field -> detect -> report
* ``invertibility`` - round-trip error table over methods x noising depths
* ``interpolate``   - interpolation sweep exported as CSV
* ``detect``        - score a CSV of samples against saved models
* ``toy``           - restriction-operator checks and annihilator search
* ``metrics``       - recompute report.csv from a samples.json
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .classifier import ClassifierConfig, ClipRule, train_classifier, save_classifier, load_classifier
from .denoiser import DenoiserTrainingConfig, train_denoiser, save_denoiser, load_denoiser
from .detector import (DetectorConfig, BASELINES, baseline_score, ddp_score_repeats,
                       DetectionReport, decide)
from .classifier import predict
from .errors import ConfigurationError, StageError
from .integrator import IntegratorMethod, build_time_grid, reconstruction_error
from .interpolation import interpolation_sweep
from .metrics import ScorePair, auroc, fpr_at_tpr, summarize
from .schedule import build_linear_schedule
from .scorefield import GaussianMixture, MixtureScoreField
from .seeds import rng_from_label, seed_from_label
from .synthdata import (DatasetSpec, sample_dataset, make_adversarial_ood,
                        canonical_ind_spec, canonical_ood_specs, CANONICAL_MEANS)
from .toy import (default_support_mask, moving_operators, dyadic_mixing_operators,
                  annihilator_empty, covered_cells, MoveOp)

ABLATION_AXES = ("none", "detect_space", "omega", "timestep", "repeat", "threshold")

DEFAULT_CONFIG = {
    "seed": 0,
    "output_dir": "runs/canonical",
    "schedule": {"max_step": 1000, "beta_start": 1e-4, "beta_end": 0.02},
    "data": {"train_size": 1000, "test_size": 500, "ood_size": 500},
    "field": {"kind": "analytic"},
    "classifier": {"num_features": 256, "lengthscale": 2.0, "learning_rate": 0.5, "epochs": 300},
    "detector": {"timestep": 600, "omega": 1.0, "repeat": 4, "detect_space": "feature",
                 "method": "pndm", "step_size": 20, "score_norm": "l1",
                 "clip_quantile": None, "threshold_quantile": 0.95, "pndm_warmup": "ddim"},
    "baselines": {"methods": ["mls", "ebo", "knn"], "knn_k": 10},
    "ablation": {"axis": "none", "values": []},
}

SET_ORDER = ("translate", "uniform", "ring", "adversarial")
FLOAT_FMT = "%.17g"


def fmt_value(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT % v
    return "" if v is None else str(v)


def resolve_config(user: dict) -> dict:
    """Fill defaults; a lockfile (with its 'config' key) is accepted as-is."""
    if "config" in user and "versions" in user:
        user = user["config"]
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    if cfg["field"].get("kind") not in ("analytic", "trained"):
        raise ConfigurationError("field.kind must be 'analytic' or 'trained' (exactly one source)")
    if cfg["ablation"]["axis"] not in ABLATION_AXES:
        raise ConfigurationError(f"ablation axis must be one of {ABLATION_AXES}")
    if cfg["ablation"]["axis"] != "none" and not cfg["ablation"]["values"]:
        raise ConfigurationError("ablation values must be nonempty for a swept axis")
    return cfg


def _atomic_write(path: str, data: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_value(v) for v in row])
    return buf.getvalue()


def _detector_config(det: dict, clip_rule=None) -> DetectorConfig:
    return DetectorConfig(
        timestep=int(det["timestep"]), omega=float(det["omega"]), repeat=int(det["repeat"]),
        detect_space=det["detect_space"], clip=clip_rule,
        method=IntegratorMethod.parse(det["method"]), step_size=int(det["step_size"]),
        score_norm=det["score_norm"], delta_score=float(det.get("delta_score", 0.0)),
        pndm_warmup=det.get("pndm_warmup", "ddim"),
    )


def _ablation_variants(cfg: dict):
    """(method_id, detector-dict, needs_feature_clip_value) per swept value."""
    axis = cfg["ablation"]["axis"]
    base = dict(cfg["detector"])
    if axis == "none":
        return [("ddp", base, None)]
    variants = []
    for value in cfg["ablation"]["values"]:
        det = dict(base)
        clip_value = None
        if axis == "threshold":
            det["detect_space"] = "feature"
            clip_value = float(value)
        else:
            det[axis] = value
        variants.append((f"ddp[{axis}={fmt_value(value)}]", det, clip_value))
    return variants


def run_experiment(config: dict, output_dir: str = None) -> dict:
    """Execute the full pipeline; returns paths of the written reports."""
    cfg = resolve_config(config)
    out_dir = output_dir or cfg["output_dir"]
    cfg["output_dir"] = out_dir
    master = int(cfg["seed"])
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        return os.path.join(out_dir, name)

    stage = "schedule"
    try:
        sched_cfg = cfg["schedule"]
        schedule = build_linear_schedule(int(sched_cfg["max_step"]),
                                         float(sched_cfg["beta_start"]),
                                         float(sched_cfg["beta_end"]))

        stage = "data"
        dat = cfg["data"]
        train = sample_dataset(canonical_ind_spec(int(dat["train_size"]),
                                                  seed_from_label(master, "data/ind-train")))
        test = sample_dataset(canonical_ind_spec(int(dat["test_size"]),
                                                 seed_from_label(master, "data/ind-test")))
        ood_specs = canonical_ood_specs(int(dat["ood_size"]), seed_from_label(master, "data/ood"))
        ood_sets = {name: sample_dataset(spec) for name, spec in ood_specs.items()
                    if spec.kind != "feature-coincidence-adversarial"}

        stage = "classifier"
        ccfg = cfg["classifier"]
        clf = train_classifier(train.x, train.labels, ClassifierConfig(
            num_features=int(ccfg["num_features"]), lengthscale=float(ccfg["lengthscale"]),
            learning_rate=float(ccfg["learning_rate"]), epochs=int(ccfg["epochs"]),
            seed=seed_from_label(master, "classifier") % 2 ** 31))
        save_classifier(clf, path("classifier.npz"))
        written.append(path("classifier.npz"))

        stage = "field"
        mixture = GaussianMixture(weights=[0.5, 0.5], means=CANONICAL_MEANS,
                                  covariances=[np.eye(2), np.eye(2)], labels=[0, 1])
        if cfg["field"]["kind"] == "analytic":
            field = MixtureScoreField(mixture, schedule)
        else:
            tr = dict(cfg["field"].get("training", {}))
            tr.setdefault("seed", seed_from_label(master, "denoiser") % 2 ** 31)
            if "hidden_sizes" in tr:
                tr["hidden_sizes"] = tuple(tr["hidden_sizes"])
            field = train_denoiser(train.x, schedule, DenoiserTrainingConfig(**tr),
                                   labels=train.labels)
            save_denoiser(field, path("denoiser.npz"))
            written.append(path("denoiser.npz"))

        stage = "adversarial"
        adv_spec = ood_specs["adversarial"]
        ood_sets["adversarial"] = sample_dataset(adv_spec, classifier=clf, ind_data=test.x)

        stage = "detect"
        det_base = cfg["detector"]
        clip_q = det_base.get("clip_quantile")
        base_clip = (ClipRule.from_quantile(clf.features(train.x), float(clip_q))
                     if clip_q is not None else None)
        ref_feats = clf.features(train.x)
        knn_k = int(cfg["baselines"].get("knn_k", 10))
        all_sets = {"ind": test.x, **{k: ood_sets[k].x for k in SET_ORDER}}

        samples = {"config": cfg, "sets": {}, "thresholds": {}}
        for name, x in all_sets.items():
            samples["sets"][name] = {
                "pseudo_label": np.atleast_1d(predict(clf, x)).tolist(),
                "scores": {}, "per_repeat": {}, "decision": {},
            }
        for bname in cfg["baselines"]["methods"]:
            if bname not in BASELINES:
                raise ConfigurationError(f"unknown baseline {bname!r}")
            for name, x in all_sets.items():
                s = baseline_score(bname, x, clf, reference_features=ref_feats, knn_k=knn_k)
                samples["sets"][name]["scores"][bname] = np.asarray(s).tolist()

        reports = []
        for method_id, det_dict, clip_value in _ablation_variants(cfg):
            clip_rule = ClipRule(threshold=clip_value) if clip_value is not None else base_clip
            dcfg = _detector_config(det_dict, clip_rule)
            set_scores = {}
            set_repeats = {}
            for name, x in all_sets.items():
                rngs = [rng_from_label(master, f"detector/{name}/sample-{i}")
                        for i in range(len(x))]
                repeats = ddp_score_repeats(x, dcfg, field, clf, schedule, rngs)
                set_repeats[name] = repeats
                set_scores[name] = repeats.mean(axis=0)
            delta = float(np.quantile(set_scores["ind"],
                                      float(det_base.get("threshold_quantile", 0.95))))
            report = DetectionReport(config={**dcfg.snapshot(), "method_id": method_id,
                                             "delta_score": delta})
            for name in all_sets:
                report.add_set(name, set_scores[name], set_repeats[name],
                               samples["sets"][name]["pseudo_label"], delta)
                samples["sets"][name]["scores"][method_id] = set_scores[name].tolist()
                samples["sets"][name]["per_repeat"][method_id] = set_repeats[name].T.tolist()
                samples["sets"][name]["decision"][method_id] = decide(set_scores[name], delta).tolist()
            samples["thresholds"][method_id] = delta
            reports.append(report)

        stage = "evaluate"
        rows = _metric_rows(samples)

        stage = "report"
        _atomic_write(path("report.csv"),
                      _csv_text(["method", "ood_set", "auroc", "fpr95"], rows))
        written.append(path("report.csv"))
        _atomic_write(path("samples.json"), json.dumps(samples, sort_keys=True, indent=2))
        written.append(path("samples.json"))
        lock = {"config": cfg, "versions": {"ddplab": __version__, "numpy": np.__version__}}
        _atomic_write(path("config.lock.json"), json.dumps(lock, sort_keys=True, indent=2))
        written.append(path("config.lock.json"))
    except Exception as exc:
        for f in written:
            if os.path.exists(f):
                os.remove(f)
        raise StageError(stage, exc) from exc
    return {"report": path("report.csv"), "samples": path("samples.json"),
            "lock": path("config.lock.json")}


def _metric_rows(samples: dict):
    """AUROC / FPR@95 rows (plus mean/std summaries) from per-sample scores."""
    sets = samples["sets"]
    ind_scores = sets["ind"]["scores"]
    method_ids = [m for m in ind_scores if m.startswith("ddp")]
    method_ids += [m for m in BASELINES if m in ind_scores]
    ood_names = [n for n in SET_ORDER if n in sets]
    rows = []
    for mid in method_ids:
        aurocs, fprs = [], []
        for name in ood_names:
            pair = ScorePair(ind_scores=np.asarray(ind_scores[mid]),
                             ood_scores=np.asarray(sets[name]["scores"][mid]))
            a, f = auroc(pair), fpr_at_tpr(pair, 0.95)
            aurocs.append(a)
            fprs.append(f)
            rows.append((mid, name, a, f))
        rows.append((mid, "mean", summarize(aurocs)[0], summarize(fprs)[0]))
        rows.append((mid, "std", summarize(aurocs)[1], summarize(fprs)[1]))
    return rows


# -- subcommands -------------------------------------------------------------

def cmd_run(args):
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.output_dir is not None:
        config["output_dir"] = args.output_dir
    paths = run_experiment(config)
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


def cmd_invertibility(args):
    schedule = build_linear_schedule(args.max_step)
    mixture = GaussianMixture(weights=[0.5, 0.5], means=CANONICAL_MEANS,
                              covariances=[np.eye(2), np.eye(2)], labels=[0, 1])
    field = MixtureScoreField(mixture, schedule)
    rng = rng_from_label(args.seed, "invertibility/samples")
    x0, _ = mixture.sample(args.samples, rng)
    t_values = [int(t) for t in args.t_max.split(",")]
    methods = [IntegratorMethod.parse(m) for m in args.methods.split(",")]
    rows = []
    for method in methods:
        for t_max in t_values:
            grid = build_time_grid(t_max, 0, t_max // args.step_size)
            err = reconstruction_error(field, x0, t_max, grid, method)
            rows.append((method.value, t_max, args.step_size, err))
    text = _csv_text(["method", "t_max", "step_size", "reconstruction_error"], rows)
    _atomic_write(args.output, text)
    print(text, end="")
    return 0


def cmd_interpolate(args):
    schedule = build_linear_schedule(args.max_step)
    mixture = GaussianMixture(weights=[0.5, 0.5], means=CANONICAL_MEANS,
                              covariances=[np.eye(2), np.eye(2)], labels=[0, 1])
    field = MixtureScoreField(mixture, schedule)
    rng = rng_from_label(args.seed, "interpolate/endpoints")
    pts, _ = mixture.sample(2, rng)
    x1 = np.array([float(v) for v in args.x1.split(",")]) if args.x1 else pts[0]
    x2 = np.array([float(v) for v in args.x2.split(",")]) if args.x2 else pts[1]
    if args.values:
        values = [float(v) for v in args.values.split(",")]
        if args.mode == "asymmetric":
            values = [int(v) for v in values]
    else:
        values = ([i * args.max_step // 10 for i in range(11)] if args.mode == "asymmetric"
                  else [i / 10 for i in range(11)])
    rows = interpolation_sweep(field, x1, x2, args.mode, values,
                               method=args.method, step_size=args.step_size)
    dim = len(np.asarray(x1).ravel())
    header = ["parameter", *[f"x{i}" for i in range(dim)]]
    text = _csv_text(header, rows)
    _atomic_write(args.output, text)
    print(text, end="")
    return 0


def cmd_detect(args):
    clf = load_classifier(args.classifier)
    schedule = build_linear_schedule(args.max_step)
    if args.denoiser:
        field = load_denoiser(args.denoiser, schedule)
    else:
        mixture = GaussianMixture(weights=[0.5, 0.5], means=CANONICAL_MEANS,
                                  covariances=[np.eye(2), np.eye(2)], labels=[0, 1])
        field = MixtureScoreField(mixture, schedule)
    x = np.loadtxt(args.samples, delimiter=",", skiprows=1, ndmin=2)
    det = dict(DEFAULT_CONFIG["detector"])
    if args.detector_json:
        det.update(json.loads(args.detector_json))
    dcfg = _detector_config(det)
    rngs = [rng_from_label(args.seed, f"detect/sample-{i}") for i in range(len(x))]
    repeats = ddp_score_repeats(x, dcfg, field, clf, schedule, rngs)
    scores = repeats.mean(axis=0)
    rows = [(i, scores[i], *repeats[:, i]) for i in range(len(x))]
    header = ["sample_id", "score", *[f"repeat_{r}" for r in range(dcfg.repeat)]]
    text = _csv_text(header, rows)
    _atomic_write(args.output, text)
    print(text, end="")
    return 0


def cmd_toy(args):
    mask = default_support_mask(args.resolution)
    rng = rng_from_label(args.seed, "toy/search")
    op_sets = {
        "identity-only": [MoveOp(shift=0.0)],
        "moving{0,+0.25,-0.25}": moving_operators(),
        "dyadic-mixing": dyadic_mixing_operators(args.resolution),
    }
    status = 0
    for name, ops in op_sets.items():
        result = annihilator_empty(args.sigma, mask, ops, budget=args.budget, rng=rng)
        covered = covered_cells(mask, ops)
        print(f"{name}: annihilator {'EMPTY' if result.empty else 'NONEMPTY'} "
              f"(candidates tried: {result.candidates_tried}, "
              f"coverage: {covered.sum()}/{len(covered)} cells)")
        if not result.empty and args.witness_csv:
            rows = [(i, v) for i, v in enumerate(result.witness.values)]
            _atomic_write(args.witness_csv, _csv_text(["cell", "value"], rows))
            print(f"  witness written to {args.witness_csv}")
    return status


def cmd_metrics(args):
    with open(args.samples) as fh:
        samples = json.load(fh)
    rows = _metric_rows(samples)
    text = _csv_text(["method", "ood_set", "auroc", "fpr95"], rows)
    _atomic_write(args.output, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddplab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="full experiment pipeline")
    r.add_argument("--config", help="JSON config (or a config.lock.json)")
    r.add_argument("--seed", type=int)
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_run)

    inv = sub.add_parser("invertibility", help="round-trip error table")
    inv.add_argument("--max-step", type=int, default=1000)
    inv.add_argument("--step-size", type=int, default=20)
    inv.add_argument("--t-max", default="200,400,600,800,1000")
    inv.add_argument("--methods", default="ddim,pndm,pf")
    inv.add_argument("--samples", type=int, default=8)
    inv.add_argument("--seed", type=int, default=0)
    inv.add_argument("--output", default="invertibility.csv")
    inv.set_defaults(func=cmd_invertibility)

    itp = sub.add_parser("interpolate", help="interpolation sweep CSV")
    itp.add_argument("--mode", choices=["symmetric", "asymmetric"], default="asymmetric")
    itp.add_argument("--values", help="comma-separated parameter values")
    itp.add_argument("--x1"); itp.add_argument("--x2")
    itp.add_argument("--method", default="pndm")
    itp.add_argument("--step-size", type=int, default=20)
    itp.add_argument("--max-step", type=int, default=1000)
    itp.add_argument("--seed", type=int, default=0)
    itp.add_argument("--output", default="interpolation.csv")
    itp.set_defaults(func=cmd_interpolate)

    det = sub.add_parser("detect", help="score a CSV of samples")
    det.add_argument("--classifier", required=True)
    det.add_argument("--samples", required=True, help="CSV with header x0,...,x{d-1}")
    det.add_argument("--denoiser", help="trained denoiser (default: analytic field)")
    det.add_argument("--detector-json", help="detector config overrides as JSON")
    det.add_argument("--max-step", type=int, default=1000)
    det.add_argument("--seed", type=int, default=0)
    det.add_argument("--output", default="scores.csv")
    det.set_defaults(func=cmd_detect)

    toy = sub.add_parser("toy", help="restriction-operator checks")
    toy.add_argument("--resolution", type=int, default=256)
    toy.add_argument("--sigma", type=float, default=1.0)
    toy.add_argument("--budget", type=int, default=200)
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--witness-csv")
    toy.set_defaults(func=cmd_toy)

    met = sub.add_parser("metrics", help="recompute report.csv from samples.json")
    met.add_argument("--samples", required=True)
    met.add_argument("--output", default="report.csv")
    met.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
