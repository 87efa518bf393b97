"""Command-line surface for the full pipeline.

Exit codes: 0 success, 2 curriculum disqualification, 1 anything else.
Every command writes a resolved-config snapshot next to its outputs so the
run can be replayed without the original command line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_config, write_snapshot
from .dataset import SENSOR_MASKS, load_dataset, save_dataset
from .errors import Disqualified, ReachPredError
from .generate import generate_dataset
from .models import GammaNet, LstmPosConfig, LstmPosNet, load_model
from .streaming import StreamPredictor, run_campaign, write_campaign_csv
from .training import (
    evaluate_position,
    evaluate_target,
    fit_gamma,
    fit_lstm_pos,
    run_ablation,
    run_h_sweep,
    write_ablation_csv,
    write_error_vs_time_csv,
    write_h_sweep_csv,
    write_heatmap_csv,
)


class _Parser(argparse.ArgumentParser):
    """Usage problems are plain errors (exit 1), not a special status."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def _norm_mode(mode: str) -> str:
    return mode.replace("-", "_")


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.set_seed(args.seed)
    return cfg


def _history_path(out_dir: str, stem: str) -> str:
    return os.path.join(out_dir, f"{stem}_history.json")


def _dump_json(path: str, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    cfg = _resolve(args)
    gen = cfg.generation
    if args.squares is not None:
        gen.squares = args.squares
    if args.train_per_square is not None:
        gen.train_per_square = args.train_per_square
    if args.test_per_square is not None:
        gen.test_per_square = args.test_per_square
    if args.noiseless:
        gen.noisy = False
    episodes = generate_dataset(
        gen, progress=lambda r, c, n: print(f"square ({r},{c}) done, {n} episodes so far")
    )
    os.makedirs(args.out, exist_ok=True)
    save_dataset(episodes, args.out, gen.to_dict())
    write_snapshot(cfg, args.out, "gen-data", {"n_episodes": len(episodes)})
    n_train = sum(1 for ep in episodes if ep.meta.get("split") == "train")
    print(f"wrote {n_train} train + {len(episodes) - n_train} test episodes to {args.out}")
    return 0


def cmd_train_gamma(args) -> int:
    cfg = _resolve(args)
    if args.mask is not None:
        cfg.gamma.mask = args.mask
    if args.epochs is not None:
        cfg.gamma_train.epochs = args.epochs
    train_eps = load_dataset(args.data, "train")
    os.makedirs(args.out, exist_ok=True)
    model, history = fit_gamma(
        train_eps, cfg.gamma.mask, widths=cfg.gamma.widths, half=cfg.gamma.half,
        tc=cfg.gamma_train, cc=cfg.curriculum if args.curriculum else None,
        log=print,
    )
    path = os.path.join(args.out, f"gamma_{cfg.gamma.mask}.rpw")
    model.save(path)
    _dump_json(_history_path(args.out, f"gamma_{cfg.gamma.mask}"), history)
    write_snapshot(cfg, args.out, "train-gamma", {"weights": path})
    print(f"saved position net ({model.param_count()} parameters) to {path}")
    return 0


def cmd_train_target(args) -> int:
    cfg = _resolve(args)
    phi_cfg = dict(cfg.phi.to_dict())
    if args.mode is not None:
        phi_cfg["mode"] = _norm_mode(args.mode)
    if args.mask is not None:
        phi_cfg["mask"] = args.mask
    if args.H is not None:
        phi_cfg["H"] = args.H
    phi_spec = LstmPosConfig.from_dict(phi_cfg)
    if args.epochs is not None:
        cfg.phi_train.epochs = args.epochs
    gamma = None
    if phi_spec.mode != "raw_only":
        if args.gamma is None:
            raise ValueError(f"mode {phi_spec.mode!r} needs --gamma WEIGHTS")
        gamma = GammaNet.load(args.gamma)
    train_eps = load_dataset(args.data, "train")
    os.makedirs(args.out, exist_ok=True)
    cfg.phi = phi_spec
    model, history = fit_lstm_pos(
        train_eps, phi_spec, gamma, tc=cfg.phi_train,
        cc=cfg.curriculum if args.curriculum else None, log=print,
    )
    stem = f"phi_{phi_spec.mode}_{phi_spec.mask}_H{phi_spec.H}"
    path = os.path.join(args.out, f"{stem}.rpw")
    model.save(path)
    _dump_json(_history_path(args.out, stem), history)
    write_snapshot(cfg, args.out, "train-target", {"weights": path})
    print(f"saved target predictor ({model.param_count()} parameters) to {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    episodes = load_dataset(args.data, args.split)
    os.makedirs(args.out, exist_ok=True)
    gamma = GammaNet.load(args.gamma) if args.gamma else None
    if args.phi:
        phi = load_model(args.phi)
        if phi.config.mode != "raw_only" and gamma is None:
            raise ValueError(f"mode {phi.config.mode!r} needs --gamma WEIGHTS")
        report = evaluate_target(phi, gamma, episodes)
        tag = f"target_{phi.config.mode}_{phi.config.mask}"
    else:
        if gamma is None:
            raise ValueError("eval needs --gamma (and optionally --phi)")
        report = evaluate_position(gamma, episodes)
        tag = f"position_{gamma.mask_name}"
    write_error_vs_time_csv(os.path.join(args.out, f"error_vs_time_{tag}.csv"), report)
    if args.heatmap:
        write_heatmap_csv(os.path.join(args.out, f"heatmap_{tag}.csv"), report)
    summary = {
        "tag": tag, "mean_mm": report.mean_mm, "std_mm": report.std_mm,
        "n_episodes": len(report.per_episode), "meta": report.meta,
    }
    _dump_json(os.path.join(args.out, f"eval_{tag}.json"), summary)
    write_snapshot(cfg, args.out, "eval", {"tag": tag})
    print(f"{tag}: {report.mean_mm:.2f} +/- {report.std_mm:.2f} mm "
          f"over {len(report.per_episode)} episodes")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    masks = args.masks.split(",") if args.masks else sorted(SENSOR_MASKS)
    modes = [_norm_mode(m) for m in (
        args.modes.split(",") if args.modes else ["raw_only", "concat", "pos_only"]
    )]
    train_eps = load_dataset(args.data, "train")
    test_eps = load_dataset(args.data, "test")
    os.makedirs(args.out, exist_ok=True)
    rows = run_ablation(
        train_eps, test_eps, masks, modes, phi_base=cfg.phi,
        gamma_widths=cfg.gamma.widths, gamma_tc=cfg.gamma_train,
        phi_tc=cfg.phi_train, cc=cfg.curriculum if args.curriculum else None,
        seed=cfg.seed or 0, log=print,
    )
    write_ablation_csv(os.path.join(args.out, "ablation.csv"), rows)
    write_snapshot(cfg, args.out, "ablate", {"masks": masks, "modes": modes})
    print(f"wrote {len(rows)} ablation cells to {args.out}/ablation.csv")
    return 0


def cmd_h_sweep(args) -> int:
    cfg = _resolve(args)
    h_values = [int(v) for v in args.H.split(",")]
    gamma = GammaNet.load(args.gamma) if args.gamma else None
    if cfg.phi.mode != "raw_only" and gamma is None:
        raise ValueError(f"mode {cfg.phi.mode!r} needs --gamma WEIGHTS")
    train_eps = load_dataset(args.data, "train")
    test_eps = load_dataset(args.data, "test")
    os.makedirs(args.out, exist_ok=True)
    rows, meta = run_h_sweep(
        train_eps, test_eps, h_values, cfg.phi, gamma,
        phi_tc=cfg.phi_train, cc=cfg.curriculum if args.curriculum else None,
        seed=cfg.seed or 0, log=print,
    )
    write_h_sweep_csv(os.path.join(args.out, "h_sweep.csv"), rows)
    _dump_json(os.path.join(args.out, "h_sweep_meta.json"), meta)
    write_snapshot(cfg, args.out, "h-sweep", {"h_values": h_values})
    print(f"wrote {len(rows)} sweep points to {args.out}/h_sweep.csv")
    return 0


def cmd_rendezvous(args) -> int:
    cfg = _resolve(args)
    if args.v_max is not None:
        cfg.rendezvous.v_max = args.v_max
    if args.threshold_mm is not None:
        cfg.rendezvous.threshold_mm = args.threshold_mm
    if args.grace_s is not None:
        cfg.rendezvous.grace_s = args.grace_s
    phi = load_model(args.phi)
    gamma = None
    if phi.config.mode != "raw_only":
        if args.gamma is None:
            raise ValueError(f"mode {phi.config.mode!r} needs --gamma WEIGHTS")
        gamma = GammaNet.load(args.gamma)
    episodes = load_dataset(args.data, args.split)
    os.makedirs(args.out, exist_ok=True)
    predictor = StreamPredictor(phi, gamma)
    rate, results = run_campaign(
        episodes, predictor, cfg.rendezvous, paced=args.paced, log=print
    )
    write_campaign_csv(os.path.join(args.out, "campaign.csv"), results)
    lat = np.concatenate([r.latency_ms for r in results])
    summary = {
        "success_rate": rate, "n_trials": len(results),
        "latency_ms_p50": float(np.percentile(lat, 50)),
        "latency_ms_p99": float(np.percentile(lat, 99)),
        "paced": bool(args.paced), "meta": results[0].meta,
    }
    _dump_json(os.path.join(args.out, "rendezvous_summary.json"), summary)
    write_snapshot(cfg, args.out, "rendezvous", {"success_rate": rate})
    print(f"success rate {100.0 * rate:.1f}% over {len(results)} trials")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(prog="reachpred", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON run config; defaults used when omitted")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="master seed override")
        if data:
            p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("gen-data", help="render the synthetic reaching corpus")
    common(p, data=False)
    p.add_argument("--squares", type=int, help="use only the first N board squares")
    p.add_argument("--train-per-square", type=int)
    p.add_argument("--test-per-square", type=int)
    p.add_argument("--noiseless", action="store_true", help="disable sensor noise")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-gamma", help="train the wrist position net")
    common(p)
    p.add_argument("--mask", choices=sorted(SENSOR_MASKS))
    p.add_argument("--curriculum", action="store_true")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_gamma)

    p = sub.add_parser("train-target", help="train the target predictor")
    common(p)
    p.add_argument("--mode", help="pos-only, concat or raw-only")
    p.add_argument("--mask", choices=sorted(SENSOR_MASKS))
    p.add_argument("--H", type=int, help="window length in samples")
    p.add_argument("--gamma", help="trained position net weights")
    p.add_argument("--curriculum", action="store_true")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_target)

    p = sub.add_parser("eval", help="evaluate trained models on a split")
    common(p)
    p.add_argument("--gamma", help="position net weights")
    p.add_argument("--phi", help="target predictor weights (target evaluation)")
    p.add_argument("--split", default="test")
    p.add_argument("--heatmap", action="store_true", help="write the per-square grid")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sensor-mask / input-mode ablation grid")
    common(p)
    p.add_argument("--masks", help="comma-separated mask names (default: all seven)")
    p.add_argument("--modes", help="comma-separated input modes")
    p.add_argument("--curriculum", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("h-sweep", help="window-length sweep")
    common(p)
    p.add_argument("--H", default="5,20,60", help="comma-separated window lengths")
    p.add_argument("--gamma", help="trained position net weights")
    p.add_argument("--curriculum", action="store_true")
    p.set_defaults(func=cmd_h_sweep)

    p = sub.add_parser("rendezvous", help="streaming robot rendezvous campaign")
    common(p)
    p.add_argument("--phi", required=True, help="target predictor weights")
    p.add_argument("--gamma", help="position net weights")
    p.add_argument("--split", default="test")
    p.add_argument("--paced", action="store_true", help="pace trials to wall-clock 60 Hz")
    p.add_argument("--v-max", type=float, dest="v_max")
    p.add_argument("--threshold-mm", type=float, dest="threshold_mm")
    p.add_argument("--grace-s", type=float, dest="grace_s")
    p.set_defaults(func=cmd_rendezvous)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Disqualified as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ReachPredError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
