"""Training loops, curriculum schedule, evaluation reports and experiment drivers.

Both networks train through small task adapters that expose batched
forward/backward on normalized arrays, so the standard loop, the curriculum
loop and the drivers are model-agnostic.  The curriculum partitions each
episode's timeline into equal segments and trains earliest-first (the
hardest windows, farthest from the touch), gating each early stage on its
denormalized RMSE in millimeters; the last stage is the plain standard run,
so a one-segment curriculum degenerates to standard training exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import (
    LabelCube,
    build_position_dataset,
    build_sequence_dataset,
    fit_feature_stats,
)
from .errors import Disqualified, EpisodeTooShort, ReachPredError
from .models import GammaNet, LstmPosConfig, LstmPosNet, sample_features
from .nn.adam import Adam
from .nn.layers import rmse_loss


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    patience: int | None = None
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0.0:
            raise ValueError("epochs must be >= 0, batch size >= 1, lr > 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be at least 1")

    def to_dict(self):
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
            "seed": self.seed, "patience": self.patience, "grad_clip": self.grad_clip,
        }


@dataclass
class CurriculumConfig:
    n_cl: int = 10
    gamma_cl_mm: float = 58.0
    max_stage_epochs: int = 200

    def __post_init__(self):
        if self.n_cl < 1:
            raise ValueError("need at least one curriculum segment")
        if self.gamma_cl_mm < 0.0:
            raise ValueError("stage threshold must be nonnegative")
        if self.max_stage_epochs < 1:
            raise ValueError("stage epoch budget must be positive")

    def to_dict(self):
        return {
            "n_cl": self.n_cl, "gamma_cl_mm": self.gamma_cl_mm,
            "max_stage_epochs": self.max_stage_epochs,
        }


# ---------------------------------------------------------------------------
# task adapters

class GammaTask:
    """Per-sample position regression on normalized arrays."""

    def __init__(self, model: GammaNet, x_norm: np.ndarray, y_norm: np.ndarray,
                 time_index=None, episode_len=None):
        self.model = model
        self.x = np.asarray(x_norm, dtype=float)
        self.y = np.asarray(y_norm, dtype=float)
        self.time_index = time_index
        self.episode_len = episode_len

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def params(self):
        return self.model.params

    @property
    def cube(self):
        return self.model.cube

    def forward(self, idx, rng, training):
        pred, cache = self.model.forward_norm(self.x[idx], want_cache=True)
        return pred, self.y[idx], cache

    def backward(self, dpred, cache):
        _, grads = self.model.backward_norm(dpred, cache)
        return grads

    @classmethod
    def build(cls, model: GammaNet, episodes: list) -> "GammaTask":
        ds = build_position_dataset(episodes, model.mask_name if model.mask_name != "custom" else model.mask)
        return cls(
            model, model.feat_stats.apply(ds.x), model.cube.normalize(ds.y),
            time_index=ds.t_index, episode_len=ds.lengths[ds.episode],
        )


class PhiTask:
    """Windowed target regression on precomputed feature sequences."""

    def __init__(self, model: LstmPosNet, feats: np.ndarray, seq, y_norm: np.ndarray):
        self.model = model
        self.feats = feats          # (E, S_max, d) per-sample features
        self.seq = seq              # index structure from build_sequence_dataset
        self.y = np.asarray(y_norm, dtype=float)   # (E, 3)
        self.time_index = seq.end
        self.episode_len = seq.lengths[seq.episode]

    @property
    def n(self):
        return self.seq.n_windows

    @property
    def params(self):
        return self.model.params

    @property
    def cube(self):
        return self.model.cube

    def gather(self, idx):
        idx = np.asarray(idx, dtype=int)
        offs = np.arange(-self.seq.H + 1, 1)
        rows = self.seq.end[idx][:, None] + offs[None, :]
        eps = self.seq.episode[idx]
        return self.feats[eps[:, None], rows], self.y[eps]

    def forward(self, idx, rng, training):
        xs, labels = self.gather(idx)
        pred, cache = self.model.forward_train(xs, rng, training=training)
        return pred, labels, cache

    def backward(self, dpred, cache):
        return self.model.backward(dpred, cache)

    @classmethod
    def build(cls, model: LstmPosNet, episodes: list, gamma: GammaNet | None) -> "PhiTask":
        mask = model.config.mask
        seq = build_sequence_dataset(episodes, model.config.H, mask)
        feats = sample_features(
            seq.states, model.config.mode, gamma, model.feat_stats, model.cube
        )
        # padding rows past each episode's length carry garbage features;
        # windows never index them, but zero anyway to keep arrays tame
        for e, n in enumerate(seq.lengths):
            feats[e, n:] = 0.0
        return cls(model, feats, seq, model.cube.normalize(seq.targets))


# ---------------------------------------------------------------------------
# training loops

def _epoch_pass(task, idx_pool, tc: TrainConfig, rng, opt) -> float:
    """One shuffled pass; returns the mean per-batch RMSE in mm."""
    perm = idx_pool[rng.permutation(len(idx_pool))]
    losses = []
    for start in range(0, len(perm), tc.batch_size):
        idx = perm[start : start + tc.batch_size]
        pred, labels, cache = task.forward(idx, rng, training=True)
        loss, dpred = rmse_loss(pred, labels)
        if math.isnan(loss):
            raise ReachPredError(
                f"training diverged: NaN loss at example block {start}; lower the learning rate"
            )
        grads = task.backward(dpred, cache)
        if tc.grad_clip is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > tc.grad_clip:
                scale = tc.grad_clip / norm
                for g in grads.values():
                    g *= scale
        opt.step(grads)
        losses.append(loss)
    return task.cube.rmse_to_mm(float(np.mean(losses)))


def eval_loss_mm(task, idx=None, batch_size: int = 512) -> float:
    """Full-set RMSE in mm, inference mode, order-stable."""
    idx = np.arange(task.n) if idx is None else np.asarray(idx, dtype=int)
    sq_sum, count = 0.0, 0
    for start in range(0, len(idx), batch_size):
        part = idx[start : start + batch_size]
        pred, labels, _ = task.forward(part, None, training=False)
        diff = pred - labels
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
    return task.cube.rmse_to_mm(math.sqrt(sq_sum / count))


def train_standard(task, tc: TrainConfig, val_task=None, log=None,
                   idx_pool=None, opt: Adam | None = None) -> dict:
    """Shuffled mini-batch Adam; returns per-epoch history, keeps best-val weights."""
    rng = np.random.default_rng(tc.seed)
    opt = opt or Adam(task.params, lr=tc.lr)
    idx_pool = np.arange(task.n) if idx_pool is None else np.asarray(idx_pool, dtype=int)
    history = {"train_mm": [], "val_mm": [], "best_epoch": None, "epochs_run": 0}
    best_val, best_snap, since_best = math.inf, None, 0
    for epoch in range(tc.epochs):
        train_mm = _epoch_pass(task, idx_pool, tc, rng, opt)
        history["train_mm"].append(train_mm)
        history["epochs_run"] = epoch + 1
        msg = f"epoch {epoch + 1:3d}  train {train_mm:8.2f} mm"
        if val_task is not None:
            val_mm = eval_loss_mm(val_task)
            history["val_mm"].append(val_mm)
            msg += f"  val {val_mm:8.2f} mm"
            if val_mm < best_val:
                best_val, since_best = val_mm, 0
                best_snap = {k: v.copy() for k, v in task.params.items()}
                history["best_epoch"] = epoch + 1
            else:
                since_best += 1
        if log:
            log(msg)
        if val_task is not None and tc.patience is not None and since_best >= tc.patience:
            break
    if best_snap is not None:
        for k, v in task.params.items():
            v[:] = best_snap[k]
    return history


def _segment_of(time_index, episode_len, n_cl: int) -> np.ndarray:
    """Curriculum segment (0-based) of each example by its time position."""
    t = np.asarray(time_index, dtype=float)
    s = np.asarray(episode_len, dtype=float)
    return np.minimum((t * n_cl / s).astype(int), n_cl - 1)


def train_curriculum(task, cc: CurriculumConfig, tc: TrainConfig,
                     val_task=None, log=None) -> dict:
    """Earliest-first staged training; the last stage is a full standard run.

    Stages 1..N-1 each train on the windows of time segments up to the
    stage, advancing once the epoch training RMSE drops below the gate,
    and disqualify the model when a stage exhausts its epoch budget.
    """
    if task.time_index is None or task.episode_len is None:
        raise ValueError("task carries no time structure for curriculum staging")
    seg = _segment_of(task.time_index, task.episode_len, cc.n_cl)
    rng = np.random.default_rng(tc.seed)
    opt = Adam(task.params, lr=tc.lr)
    history = {"stages": [], "final": None}
    for stage in range(1, cc.n_cl):
        idx_pool = np.flatnonzero(seg < stage)
        record = {"stage": stage, "examples": int(len(idx_pool)), "train_mm": []}
        history["stages"].append(record)
        if len(idx_pool) == 0:
            # no window reaches back this early; nothing to gate on
            if log:
                log(f"stage {stage}/{cc.n_cl}  empty, advancing")
            continue
        cleared = False
        for epoch in range(cc.max_stage_epochs):
            train_mm = _epoch_pass(task, idx_pool, tc, rng, opt)
            record["train_mm"].append(train_mm)
            if log:
                log(
                    f"stage {stage}/{cc.n_cl}  epoch {epoch + 1:3d}  "
                    f"train {train_mm:8.2f} mm  (n={len(idx_pool)})"
                )
            if train_mm < cc.gamma_cl_mm:
                cleared = True
                break
        if not cleared:
            raise Disqualified(stage, cc.max_stage_epochs, record["train_mm"][-1])
    # final stage: all data, plain standard training on the same streams
    history["final"] = train_standard(
        task, tc, val_task=val_task, log=log, opt=opt if cc.n_cl > 1 else None
    )
    return history


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalReport:
    mean_mm: float
    std_mm: float
    per_episode: dict            # episode id -> mean error mm
    per_square: dict             # (row, col) -> mean error mm
    curve_t: np.ndarray          # sample index
    curve_mean_mm: np.ndarray
    curve_std_mm: np.ndarray
    meta: dict

    def heatmap_rows(self):
        return [
            {"square_row": r, "square_col": c, "mean_mm": v}
            for (r, c), v in sorted(self.per_square.items())
        ]


def _aggregate(per_episode_errors: dict, squares: dict, meta: dict) -> EvalReport:
    ids = sorted(per_episode_errors)
    ep_means = {eid: float(np.mean(per_episode_errors[eid])) for eid in ids}
    overall = np.array([ep_means[eid] for eid in ids])
    per_square = {}
    for key in sorted(set(squares.values())):
        vals = [ep_means[eid] for eid in ids if squares[eid] == key]
        per_square[key] = float(np.mean(vals))
    max_t = max(len(v) for v in per_episode_errors.values())
    curve_mean = np.full(max_t, np.nan)
    curve_std = np.full(max_t, np.nan)
    offsets = {eid: max_t - len(per_episode_errors[eid]) for eid in ids}
    for t in range(max_t):
        vals = [
            per_episode_errors[eid][t - offsets[eid]]
            for eid in ids
            if t >= offsets[eid]
        ]
        curve_mean[t] = np.mean(vals)
        curve_std[t] = np.std(vals)
    return EvalReport(
        mean_mm=float(np.mean(overall)),
        std_mm=float(np.std(overall)),
        per_episode=ep_means,
        per_square=per_square,
        curve_t=np.arange(max_t),
        curve_mean_mm=curve_mean,
        curve_std_mm=curve_std,
        meta=dict(meta),
    )


def _square_of(ep):
    row, col = ep.meta.get("row"), ep.meta.get("col")
    return (row, col)


def evaluate_position(gamma, episodes: list, mask=None) -> EvalReport:
    """Instantaneous wrist-position accuracy, per-episode then overall."""
    idx = np.asarray(gamma.mask)
    if mask is not None:
        from .dataset import resolve_mask

        _, want = resolve_mask(mask)
        if not np.array_equal(want, idx):
            raise ValueError("mask mismatch: model was trained on different channels")
    errors, squares = {}, {}
    for ep in episodes:
        pred = gamma.predict(ep.x[:, idx])
        err = np.linalg.norm(pred - ep.p, axis=1) * 1000.0
        errors[ep.id] = err
        squares[ep.id] = _square_of(ep)
    return _aggregate(
        errors, squares,
        {"kind": "position", "aggregation": "per-episode mean, then mean/std over episodes"},
    )


def evaluate_target(phi, gamma, episodes: list) -> EvalReport:
    """Target prediction accuracy at every window end, aligned to touch time.

    The error-vs-time curve is right-aligned: the last entry is the window
    ending at the touch sample, so episodes of different lengths line up at
    the moment that matters.
    """
    H = phi.config.H
    idx = np.asarray(phi.mask)
    short = [(ep.id, len(ep)) for ep in episodes if len(ep) < H]
    if short:
        raise EpisodeTooShort(H, short)
    errors, squares = {}, {}
    for ep in episodes:
        x = ep.x[:, idx]
        errs = []
        for end in range(H - 1, len(ep)):
            pred = phi.predict_window(x[end - H + 1 : end + 1], gamma)
            errs.append(float(np.linalg.norm(pred - ep.target) * 1000.0))
        errors[ep.id] = np.asarray(errs)
        squares[ep.id] = _square_of(ep)
    return _aggregate(
        errors, squares,
        {
            "kind": "target", "H": H,
            "aggregation": "per-episode mean, then mean/std over episodes",
            "curve_alignment": "right-aligned at touch",
        },
    )


# ---------------------------------------------------------------------------
# model builders

def fit_gamma(train_eps: list, mask, widths=(512, 512, 512), half: float | None = None,
              tc: TrainConfig | None = None, cc: CurriculumConfig | None = None,
              val_eps: list | None = None, log=None, rng=None):
    """Build and train a position net on raw episodes; returns (model, history)."""
    tc = tc or TrainConfig()
    ds = build_position_dataset(train_eps, mask)
    stats = fit_feature_stats(ds.x)
    cube = LabelCube(half=half if half is not None else float(np.abs(ds.y).max()) * 1.1)
    model = GammaNet.init(
        rng or np.random.default_rng(tc.seed), mask, widths, stats, cube
    )
    task = GammaTask(
        model, stats.apply(ds.x), cube.normalize(ds.y),
        time_index=ds.t_index, episode_len=ds.lengths[ds.episode],
    )
    val_task = GammaTask.build(model, val_eps) if val_eps else None
    if cc is None:
        history = train_standard(task, tc, val_task=val_task, log=log)
    else:
        history = train_curriculum(task, cc, tc, val_task=val_task, log=log)
    return model, history


def fit_lstm_pos(train_eps: list, config: LstmPosConfig, gamma: GammaNet | None,
                 half: float | None = None, tc: TrainConfig | None = None,
                 cc: CurriculumConfig | None = None, val_eps: list | None = None,
                 log=None, rng=None):
    """Build and train a target predictor; Γ stays frozen throughout."""
    tc = tc or TrainConfig()
    if config.mode != "raw_only" and gamma is None:
        raise ValueError(f"mode {config.mode!r} needs a trained position net")
    if config.mode != "pos_only":
        ds = build_position_dataset(train_eps, config.mask)
        stats = fit_feature_stats(ds.x)
        default_half = float(np.abs(ds.y).max()) * 1.1
    else:
        stats = None
        default_half = gamma.cube.half
    cube = LabelCube(half=half if half is not None else default_half)
    model = LstmPosNet.init(
        config, rng or np.random.default_rng(tc.seed), stats, cube
    )
    task = PhiTask.build(model, train_eps, gamma)
    val_task = PhiTask.build(model, val_eps, gamma) if val_eps else None
    if cc is None:
        history = train_standard(task, tc, val_task=val_task, log=log)
    else:
        history = train_curriculum(task, cc, tc, val_task=val_task, log=log)
    return model, history


# ---------------------------------------------------------------------------
# experiment drivers

def _cell_seed(base: int, *tags) -> int:
    return int(np.random.SeedSequence([base, *tags]).generate_state(1)[0]) % (2**31)


def run_ablation(train_eps: list, test_eps: list, masks: list, modes: list,
                 phi_base: LstmPosConfig, gamma_widths=(512, 512, 512),
                 gamma_tc: TrainConfig | None = None, phi_tc: TrainConfig | None = None,
                 cc: CurriculumConfig | None = None, seed: int = 0, log=None) -> list:
    """Feature-ablation grid: per mask, a fresh Γ, then each requested mode.

    Failures are isolated per cell: the row records the error message and
    the remaining cells still run.
    """
    gamma_tc = gamma_tc or TrainConfig()
    phi_tc = phi_tc or TrainConfig()
    rows = []
    for mi, mask in enumerate(masks):
        gamma, gamma_err = None, None
        if any(m != "raw_only" for m in modes):
            try:
                gtc = TrainConfig(**{**gamma_tc.to_dict(), "seed": _cell_seed(seed, 1, mi)})
                gamma, _ = fit_gamma(
                    train_eps, mask, widths=gamma_widths, tc=gtc, cc=cc, log=log
                )
            except ReachPredError as exc:
                gamma_err = str(exc)
        for ni, mode in enumerate(modes):
            row = {"mask": str(mask), "mode": mode, "mean_mm": math.nan, "std_mm": math.nan}
            try:
                if mode != "raw_only" and gamma is None:
                    raise ReachPredError(f"position net unavailable: {gamma_err}")
                cfg = LstmPosConfig.from_dict(
                    {**phi_base.to_dict(), "mode": mode, "mask": mask}
                )
                ptc = TrainConfig(**{**phi_tc.to_dict(), "seed": _cell_seed(seed, 2, mi, ni)})
                phi, _ = fit_lstm_pos(train_eps, cfg, gamma, tc=ptc, cc=cc, log=log)
                report = evaluate_target(phi, gamma, test_eps)
                row["mean_mm"], row["std_mm"] = report.mean_mm, report.std_mm
            except ReachPredError as exc:
                row["error"] = str(exc)
            rows.append(row)
            if log:
                log(f"ablation {mask}/{mode}: " + (
                    f"{row['mean_mm']:.2f} +/- {row['std_mm']:.2f} mm"
                    if "error" not in row else f"failed ({row['error']})"
                ))
    return rows


def run_h_sweep(train_eps: list, test_eps: list, h_values: list,
                phi_config: LstmPosConfig, gamma: GammaNet | None,
                phi_tc: TrainConfig | None = None, cc: CurriculumConfig | None = None,
                seed: int = 0, log=None) -> tuple:
    """Accuracy as a function of window length; returns (rows, metadata)."""
    phi_tc = phi_tc or TrainConfig()
    rows = []
    for hi, H in enumerate(h_values):
        cfg = LstmPosConfig.from_dict({**phi_config.to_dict(), "H": int(H)})
        ptc = TrainConfig(**{**phi_tc.to_dict(), "seed": _cell_seed(seed, 3, hi)})
        row = {"H": int(H), "mean_mm": math.nan, "std_mm": math.nan}
        try:
            phi, _ = fit_lstm_pos(train_eps, cfg, gamma, tc=ptc, cc=cc, log=log)
            report = evaluate_target(phi, gamma, test_eps)
            row["mean_mm"], row["std_mm"] = report.mean_mm, report.std_mm
        except ReachPredError as exc:
            row["error"] = str(exc)
        rows.append(row)
        if log:
            log(f"h-sweep H={H}: " + (
                f"{row['mean_mm']:.2f} +/- {row['std_mm']:.2f} mm"
                if "error" not in row else f"failed ({row['error']})"
            ))
    meta = {
        "mode": phi_config.mode, "mask": str(phi_config.mask),
        "note": "operating point H=60: longest window that still leaves "
                "predictions for most of the reach at 60 Hz with ~2 s episodes",
    }
    return rows, meta


# ---------------------------------------------------------------------------
# results CSVs

def _write_csv(path: str, fieldnames: list, rows: list):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_ablation_csv(path: str, rows: list):
    _write_csv(path, ["mask", "mode", "mean_mm", "std_mm"], rows)


def write_h_sweep_csv(path: str, rows: list):
    _write_csv(path, ["H", "mean_mm", "std_mm"], rows)


def write_heatmap_csv(path: str, report: EvalReport):
    _write_csv(path, ["square_row", "square_col", "mean_mm"], report.heatmap_rows())


def write_error_vs_time_csv(path: str, report: EvalReport):
    rows = [
        {"t": int(t), "mean_mm": m, "std_mm": s}
        for t, m, s in zip(report.curve_t, report.curve_mean_mm, report.curve_std_mm)
        if not math.isnan(m)
    ]
    _write_csv(path, ["t", "mean_mm", "std_mm"], rows)
