"""Command line surface.

Subcommands: gen, train, eval, predict, gradcheck, ablate, cellularity,
replay. Every run resolves its flags into a run.json inside --out;
`replay` re-executes a run.json and reproduces the outputs byte for
byte. Exit codes: 0 ok, 1 usage, 2 data problem, 3 numeric failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .cellularity import StagePlan, concordance, predict_scores, run_stages, synth_score
from .checkpoint import CheckpointError, save_checkpoint
from .datasets import DataError, dataset_config, read_dataset, write_dataset
from .estimators import (
    AverageBaseline,
    CountHistogramRegressor,
    evaluate_estimator,
)
from .metrics import MetricReport
from .network import CountHistogramNet, ModelConfig, load_model, save_model
from .rng import stream
from .scenes import ConfigError, GenConfig, sample_dataset
from .svgplot import histogram_pair_svg, line_chart_svg
from .targets import bin_edges, build_histograms, default_s_max
from .tensor import NumericError
from .training import nested_fraction_indices, train_network
from . import verify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _onoff(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")
    return value == "on"


def _fractions(value):
    try:
        return [float(x) for x in value.split(",") if x]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad fraction list {value!r}") from e


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_run(out_dir, command, params):
    _write_json(os.path.join(out_dir, "run.json"), {"command": command, "params": params})


def _ensure_out(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as f:
            f.write("")
        os.remove(probe)
    except OSError as e:
        raise DataError(f"output directory {out_dir} is not writable: {e}") from e


def _resolve_s_max(explicit, manifest):
    if explicit is not None:
        return float(explicit)
    cfg = dataset_config(manifest)
    if cfg is not None:
        return default_s_max(cfg.area_mean, cfg.area_std)
    return default_s_max(94.5, 63.2)


def _model_config(params, image_size):
    maker = {"desk": ModelConfig.desk, "tiny": ModelConfig.tiny}
    arch = params["arch"]
    if arch not in maker:
        raise UsageError(f"unknown arch {arch!r}")
    return maker[arch](
        image_size=image_size,
        receptive_field=params["receptive_field"],
        bins=params["bins"],
        dsn=params["dsn"],
        dropout=params["dropout"],
    )


# ----------------------------------------------------------------------
# commands


def cmd_gen(params, out_dir):
    _ensure_out(out_dir)
    if params["preset"] == "desk":
        base = GenConfig.desk(params["size"])
    else:
        base = GenConfig(width=params["size"], height=params["size"])
    cfg_kwargs = base.to_dict()
    for flag, key in (
        ("count_mean", "count_mean"),
        ("count_std", "count_std"),
        ("area_mean", "area_mean"),
        ("area_std", "area_std"),
    ):
        if params[flag] is not None:
            cfg_kwargs[key] = params[flag]
    for key, value in params.get("config_overrides", {}).items():
        if key not in cfg_kwargs:
            raise UsageError(f"unknown generator config key {key!r}")
        cfg_kwargs[key] = value
    config = GenConfig.from_dict(cfg_kwargs)
    scenes, images = sample_dataset(config, params["n"], params["seed"])
    write_dataset(out_dir, scenes, images, config)
    _write_run(
        out_dir,
        "gen",
        {"n": params["n"], "seed": params["seed"], "generator": config.to_dict()},
    )
    print(f"wrote {len(scenes)} scenes to {out_dir}")
    return EXIT_OK


def _train_run_params(params):
    keys = (
        "data", "bins", "dsn", "epochs", "batch", "lr", "lr_decay", "val_frac",
        "seed", "arch", "receptive_field", "augment", "dropout", "s_max",
    )
    return {k: params[k] for k in keys}


def cmd_train(params, out_dir):
    _ensure_out(out_dir)
    scenes, images, manifest = read_dataset(params["data"])
    if not scenes:
        raise DataError(f"dataset {params['data']} is empty")
    image_size = int(manifest["image_size"][0])
    s_max = _resolve_s_max(params["s_max"], manifest)
    config = _model_config(params, image_size)
    net = CountHistogramNet(config, stream(params["seed"], 0))
    print(f"parameters: {net.n_params}")

    ckpt_path = os.path.join(out_dir, "model.ckpt")
    save_model(ckpt_path, net)  # the initialization checkpoint
    log_path = os.path.join(out_dir, "train_log.jsonl")
    log = open(log_path, "w")

    def on_epoch(entry):
        log.write(json.dumps(entry, sort_keys=True) + "\n")
        log.flush()
        save_model(ckpt_path, net)

    try:
        train_network(
            net,
            images,
            scenes,
            epochs=params["epochs"],
            s_max=s_max,
            batch_size=params["batch"],
            lr=params["lr"],
            lr_decay=params["lr_decay"],
            seed=params["seed"],
            augment_data=params["augment"],
            val_frac=params["val_frac"],
            on_epoch=on_epoch,
        )
    finally:
        log.close()
    _write_run(out_dir, "train", _train_run_params(params) | {"s_max": s_max})
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def _method_name(bins, dsn=False, baseline=False):
    if baseline:
        return f"average{bins}"
    return f"histocount-dsn{bins}" if dsn else f"histocount{bins}"


def _eval_common(est, scenes, images, out_dir, method, bins, s_max):
    report = evaluate_estimator(est, np.asarray(images), scenes)
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        f.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
        f.write(MetricReport.csv_header() + "\n")
        f.write(report.csv_row(method) + "\n")
    svg_dir = os.path.join(out_dir, "svg")
    os.makedirs(svg_dir, exist_ok=True)
    edges = bin_edges(s_max, bins)
    pred_hists = est.predict_histogram(np.asarray(images))
    for i, scene in enumerate(scenes):
        target = build_histograms(scene, s_max).level(bins)
        svg = histogram_pair_svg(
            target, pred_hists[i], edges, title=f"image {i:06d} ({method})"
        )
        with open(os.path.join(svg_dir, f"{i:06d}.svg"), "w") as f:
            f.write(svg)
    return report


def cmd_eval(params, out_dir):
    _ensure_out(out_dir)
    scenes, images, manifest = read_dataset(params["data"])
    if not scenes:
        raise DataError(f"dataset {params['data']} is empty")
    s_max = _resolve_s_max(params["s_max"], manifest)
    if params["ckpt"]:
        net = load_model(params["ckpt"])
        if params["bins"] is not None and params["bins"] != net.config.bins:
            raise DataError(
                f"requested {params['bins']} bins but checkpoint predicts "
                f"{net.config.bins}"
            )
        est = CountHistogramRegressor(bins=net.config.bins, s_max=s_max).adopt(net)
        method = _method_name(net.config.bins, net.config.dsn)
        bins = net.config.bins
    else:
        bins = params["bins"] if params["bins"] is not None else 8
        fit_dir = params["baseline_fit"] or params["data"]
        fit_scenes, fit_images, _ = read_dataset(fit_dir)
        if not fit_scenes:
            raise DataError(f"baseline fit dataset {fit_dir} is empty")
        est = AverageBaseline(bins=bins, s_max=s_max).fit(
            np.asarray(fit_images), fit_scenes
        )
        method = _method_name(bins, baseline=True)
    report = _eval_common(est, scenes, images, out_dir, method, bins, s_max)
    run_params = {
        "data": params["data"],
        "ckpt": params["ckpt"],
        "baseline": params["baseline"],
        "baseline_fit": params["baseline_fit"],
        "bins": params["bins"],
        "s_max": s_max,
    }
    _write_run(out_dir, "eval", run_params)
    print(report.to_json())
    return EXIT_OK


def cmd_predict(params, out_dir):
    _ensure_out(out_dir)
    scenes, images, manifest = read_dataset(params["data"])
    net = load_model(params["ckpt"])
    s_max = _resolve_s_max(params["s_max"], manifest)
    bins = net.config.bins
    edges = bin_edges(s_max, bins)
    pred_dir = os.path.join(out_dir, "predictions")
    svg_dir = os.path.join(out_dir, "svg")
    os.makedirs(pred_dir, exist_ok=True)
    os.makedirs(svg_dir, exist_ok=True)
    limit = params["limit"] if params["limit"] is not None else len(images)
    for i in range(min(limit, len(images))):
        out = net.forward(images[i])
        count = net.predicted_count(out)
        pred = {
            "count": count,
            "hist": out.hist.numpy().tolist(),
            "map_side": int(net.config.map_side),
            "map_sum": float(out.count_map.numpy().sum()),
        }
        if out.hist2 is not None:
            pred["hist2"] = out.hist2.numpy().tolist()
            pred["hist4"] = out.hist4.numpy().tolist()
        _write_json(os.path.join(pred_dir, f"{i:06d}.json"), pred)
        target = build_histograms(scenes[i], s_max).level(bins)
        svg = histogram_pair_svg(
            target, out.hist.numpy(), edges, title=f"image {i:06d}"
        )
        with open(os.path.join(svg_dir, f"{i:06d}.svg"), "w") as f:
            f.write(svg)
    _write_run(
        out_dir,
        "predict",
        {"data": params["data"], "ckpt": params["ckpt"], "limit": params["limit"],
         "s_max": s_max},
    )
    return EXIT_OK


def cmd_gradcheck(params, out_dir):
    failures, lines = verify.run_suite(seed=params["seed"])
    for line in lines:
        print(line)
    if out_dir:
        _ensure_out(out_dir)
        _write_run(out_dir, "gradcheck", {"seed": params["seed"]})
        with open(os.path.join(out_dir, "gradcheck.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")
    if failures:
        raise NumericError(f"{failures} gradient check(s) failed")
    return EXIT_OK


def cmd_ablate(params, out_dir):
    _ensure_out(out_dir)
    scenes, images, manifest = read_dataset(params["data"])
    if not scenes:
        raise DataError(f"dataset {params['data']} is empty")
    image_size = int(manifest["image_size"][0])
    s_max = _resolve_s_max(params["s_max"], manifest)
    fractions = params["fractions"]
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise UsageError(f"fraction {f} outside (0, 1]")

    if params["test_data"]:
        test_scenes, test_images, _ = read_dataset(params["test_data"])
        pool_scenes, pool_images = scenes, images
    else:
        perm = stream(params["seed"], 76).permutation(len(scenes))
        n_test = max(1, int(round(0.1 * len(scenes))))
        test_idx, pool_idx = perm[:n_test], perm[n_test:]
        test_scenes = [scenes[i] for i in test_idx]
        test_images = [images[i] for i in test_idx]
        pool_scenes = [scenes[i] for i in pool_idx]
        pool_images = [images[i] for i in pool_idx]
    if not pool_scenes:
        raise DataError("no training data left after the test split")

    subsets = nested_fraction_indices(len(pool_scenes), fractions, params["seed"])
    rows = []
    for frac in fractions:
        idx = subsets[frac]
        sub_dir = os.path.join(out_dir, f"frac_{frac:g}")
        os.makedirs(sub_dir, exist_ok=True)
        config = _model_config(params, image_size)
        net = CountHistogramNet(config, stream(params["seed"], 0))
        train_network(
            net,
            [pool_images[i] for i in idx],
            [pool_scenes[i] for i in idx],
            epochs=params["epochs"],
            s_max=s_max,
            batch_size=params["batch"],
            lr=params["lr"],
            lr_decay=params["lr_decay"],
            seed=params["seed"],
            augment_data=params["augment"],
        )
        save_model(os.path.join(sub_dir, "model.ckpt"), net)
        est = CountHistogramRegressor(bins=params["bins"], s_max=s_max).adopt(net)
        report = evaluate_estimator(est, np.asarray(test_images), test_scenes)
        with open(os.path.join(sub_dir, "metrics.json"), "w") as f:
            f.write(report.to_json() + "\n")
        rows.append((frac, report.mae, report.kld))
        print(f"fraction {frac:g}: MAE={report.mae:.4f} kld={report.kld:.4f}")

    with open(os.path.join(out_dir, "ablation.csv"), "w") as f:
        f.write("fraction,MAE,kld\n")
        for frac, m, k in rows:
            f.write(f"{frac:g},{m:.6f},{k:.6f}\n")
    xs = [r[0] for r in rows]
    with open(os.path.join(out_dir, "mae_vs_fraction.svg"), "w") as f:
        f.write(
            line_chart_svg(xs, {"MAE": [r[1] for r in rows]},
                           title="count error vs training fraction",
                           xlabel="training fraction", ylabel="MAE")
        )
    with open(os.path.join(out_dir, "kld_vs_fraction.svg"), "w") as f:
        f.write(
            line_chart_svg(xs, {"kld": [r[2] for r in rows]},
                           title="histogram divergence vs training fraction",
                           xlabel="training fraction", ylabel="kld")
        )
    run_params = _train_run_params(params) | {
        "s_max": s_max,
        "fractions": fractions,
        "test_data": params["test_data"],
    }
    _write_run(out_dir, "ablate", run_params)
    return EXIT_OK


def cmd_cellularity(params, out_dir):
    _ensure_out(out_dir)
    plan = StagePlan.from_json(params["plan"])
    first_scenes, _first_images, first_manifest = read_dataset(plan.stages[0].dataset_dir)
    if not first_scenes:
        raise DataError(f"stage dataset {plan.stages[0].dataset_dir} is empty")
    image_size = int(first_manifest["image_size"][0])
    s_max = _resolve_s_max(params["s_max"], first_manifest)
    config = _model_config(params, image_size)
    net = CountHistogramNet(config, stream(params["seed"], 0))

    def on_stage(stage, trained_net, head):
        save_model(os.path.join(out_dir, f"stage{stage}.ckpt"), trained_net)

    head, logs = run_stages(
        plan,
        net,
        s_max=s_max,
        seed=params["seed"],
        lr=params["lr"],
        batch_size=params["batch"],
        head_width=params["head_width"],
        a_ref=params["a_ref"],
        on_stage=on_stage,
    )
    save_model(os.path.join(out_dir, "trunk.ckpt"), net)
    if head is not None:
        save_checkpoint(os.path.join(out_dir, "score_head.ckpt"), head.state_arrays())
        _write_json(
            os.path.join(out_dir, "score_head.ckpt.json"),
            {"in_dim": head.in_dim, "width": head.width},
        )
    _write_json(os.path.join(out_dir, "stages_log.json"), logs)

    if params["eval_data"]:
        if head is None:
            raise DataError("stage plan trains no score head; cannot evaluate scores")
        ev_scenes, ev_images, _ = read_dataset(params["eval_data"])
        pred = predict_scores(net, head, ev_images)
        true = np.array([synth_score(s, params["a_ref"]) for s in ev_scenes])
        from scipy.stats import spearmanr

        rho = float(spearmanr(pred, true).statistic)
        scores = {
            "pred": pred.tolist(),
            "true": true.tolist(),
            "concordance": concordance(pred, true),
            "spearman": rho,
        }
        _write_json(os.path.join(out_dir, "scores.json"), scores)
        print(f"spearman={rho:.4f} concordance={scores['concordance']:.4f}")
    run_params = {
        "plan": params["plan"],
        "eval_data": params["eval_data"],
        "bins": params["bins"],
        "dsn": params["dsn"],
        "seed": params["seed"],
        "lr": params["lr"],
        "batch": params["batch"],
        "head_width": params["head_width"],
        "a_ref": params["a_ref"],
        "arch": params["arch"],
        "receptive_field": params["receptive_field"],
        "dropout": params["dropout"],
        "s_max": s_max,
    }
    _write_run(out_dir, "cellularity", run_params)
    return EXIT_OK


def cmd_replay(params, out_dir):
    try:
        with open(params["run"]) as f:
            run = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read run file {params['run']}: {e}") from e
    command = run.get("command")
    handlers = {
        "gen": _replay_gen,
        "train": cmd_train,
        "eval": cmd_eval,
        "predict": cmd_predict,
        "ablate": cmd_ablate,
        "cellularity": cmd_cellularity,
        "gradcheck": cmd_gradcheck,
    }
    if command not in handlers:
        raise DataError(f"run file {params['run']} has unknown command {command!r}")
    return handlers[command](run["params"], out_dir)


def _replay_gen(run_params, out_dir):
    _ensure_out(out_dir)
    config = GenConfig.from_dict(run_params["generator"])
    scenes, images = sample_dataset(config, run_params["n"], run_params["seed"])
    write_dataset(out_dir, scenes, images, config)
    _write_run(out_dir, "gen", run_params)
    print(f"wrote {len(scenes)} scenes to {out_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# parsing


def _add_model_flags(p):
    p.add_argument("--bins", type=int, default=8, choices=(8, 16))
    p.add_argument("--dsn", type=_onoff, default=False)
    p.add_argument("--arch", default="desk", choices=("desk", "tiny"))
    p.add_argument("--receptive-field", dest="receptive_field", type=int, default=9)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--s-max", dest="s_max", type=float, default=None)


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-decay", dest="lr_decay", type=float, default=1.0)
    p.add_argument("--val-frac", dest="val_frac", type=float, default=0.0)
    p.add_argument("--augment", type=_onoff, default=True)


def build_parser():
    parser = CliParser(prog="histocount", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic ellipse dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--preset", default="reference", choices=("reference", "desk"))
    p.add_argument("--count-mean", dest="count_mean", type=float, default=None)
    p.add_argument("--count-std", dest="count_std", type=float, default=None)
    p.add_argument("--area-mean", dest="area_mean", type=float, default=None)
    p.add_argument("--area-std", dest="area_std", type=float, default=None)
    p.add_argument("--config", default=None, help="JSON file of generator overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the count/histogram network")
    p.add_argument("--data", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the average baseline")
    p.add_argument("--data", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt", default=None)
    group.add_argument("--baseline", default=None, choices=("average",))
    p.add_argument("--baseline-fit", dest="baseline_fit", default=None,
                   help="dataset used to fit the baseline (default: --data)")
    p.add_argument("--bins", type=int, default=None, choices=(8, 16))
    p.add_argument("--s-max", dest="s_max", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="emit per-image predictions and charts")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--s-max", dest="s_max", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="run the gradient verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="training-set-size ablation sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--test-data", dest="test_data", default=None)
    p.add_argument("--fractions", type=_fractions, default=[0.25, 0.5, 0.75, 1.0])
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cellularity", help="run a staged score-training plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--eval-data", dest="eval_data", default=None)
    _add_model_flags(p)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--head-width", dest="head_width", type=int, default=64)
    p.add_argument("--a-ref", dest="a_ref", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-execute a recorded run.json")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)

    return parser


HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
    "cellularity": cmd_cellularity,
    "replay": cmd_replay,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        params = vars(args)
        command = params.pop("command")
        out_dir = params.pop("out", None)
        if command == "gen" and params.get("config"):
            try:
                with open(params["config"]) as f:
                    params["config_overrides"] = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise DataError(f"cannot read config file {params['config']}: {e}") from e
            params.pop("config")
        elif command == "gen":
            params.pop("config", None)
            params["config_overrides"] = {}
        return HANDLERS[command](params, out_dir)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ConfigError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
