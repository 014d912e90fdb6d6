"""Bidirectional training of the restore/degrade pair.

One step runs the restoration network on the degraded batch, feeds the
queried degradation into the degradation network applied to the clean
batch, and takes a single joint Adam step on

    total = mse(x', x) + lambda * mse(y_hat, y)

i.e. both reconstruction directions share one loss. The alternate mode
(``alt_steps``) instead backpropagates the two terms on alternating
steps.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from . import metrics
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .degrade import load_manifest, load_pair
from .model import DegradeModel, RestoreModel, joint_params
from .optim import Adam
from .tensor import Tensor, mse

METRICS_HEADER = ("step", "loss_total", "loss_xrecon", "loss_yrecon", "psnr_eval", "ssim_eval")

LAMBDA_SWEEP = (0.0, 0.5, 1.0, 1.5, 3.0)
MODULE_VARIANTS = ("no_dq", "no_di", "no_cp")


def bidirectional_losses(restore, degrad, x, y, lam, detach_u=False):
    """Forward both directions; returns (loss_x, loss_y, target) tensors.

    ``loss_x`` compares the re-degraded clean image against the real
    degraded input; ``loss_y`` compares the restored image against the
    clean target. ``target`` is the tensor to backpropagate: at lam=0
    the y-reconstruction term is dropped entirely, so only the
    degradation direction produces gradients.
    """
    y_hat, u_list, _ = restore.forward(x)
    if detach_u:
        u_list = [Tensor(u.data) for u in u_list]
    x_prime = degrad.forward(y, u_list)
    loss_x = mse(x_prime, x)
    loss_y = mse(y_hat, y)
    target = loss_x if lam == 0 else loss_x + lam * loss_y
    return loss_x, loss_y, target


def bidirectional_step(restore, degrad, optimizer, x, y, lam,
                       alt_steps=False, step_index=0, detach_u=False):
    """One optimization step over a paired batch; returns logged losses."""
    xt = x if isinstance(x, Tensor) else Tensor(x)
    yt = y if isinstance(y, Tensor) else Tensor(y)
    loss_x, loss_y, target = bidirectional_losses(restore, degrad, xt, yt, lam, detach_u)
    lx, ly = loss_x.item(), loss_y.item()
    if not (math.isfinite(lx) and math.isfinite(ly)):
        raise FloatingPointError(f"non-finite loss at step {step_index}: "
                                 f"loss_xrecon={lx}, loss_yrecon={ly}")
    if alt_steps:
        target = loss_x if step_index % 2 == 0 or lam == 0 else lam * loss_y
    optimizer.zero_grad()
    target.backward()
    optimizer.step()
    optimizer.zero_grad()
    return {"loss_total": lx + lam * ly, "loss_xrecon": lx, "loss_yrecon": ly}


def build_models(tcfg, seed):
    dtype = np.float32 if tcfg["dtype"] == "float32" else np.float64
    restore = RestoreModel(channels=tcfg["channels"], scales=tcfg["scales"],
                           dict_m=tcfg["dict_m"], dict_n=tcfg["dict_n"],
                           rank=tcfg["rank_k"], seed=seed, dtype=dtype,
                           variant=tcfg["variant"])
    degrad = DegradeModel(channels=tcfg["channels"], rank=tcfg["rank_k"],
                          seed=seed, dtype=dtype, variant=tcfg["variant"])
    return restore, degrad


def split_holdout(manifest, per_kind):
    """Deterministic split: the last `per_kind` samples of each kind."""
    by_kind = {}
    for i, entry in enumerate(manifest):
        by_kind.setdefault(entry["kind"], []).append(i)
    eval_idx = set()
    for kind in sorted(by_kind):
        idx = by_kind[kind]
        take = min(per_kind, max(len(idx) - 1, 0))
        eval_idx.update(idx[len(idx) - take:])
    train_idx = [i for i in range(len(manifest)) if i not in eval_idx]
    return train_idx, sorted(eval_idx)


class Trainer:
    """Owns models, optimizer, data and RNG state for one training run."""

    def __init__(self, cfg, dataset_dir, out_dir):
        self.cfg = cfg
        self.tcfg = cfg["train"]
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.dtype = np.float32 if self.tcfg["dtype"] == "float32" else np.float64
        self.restore, self.degrad = build_models(self.tcfg, cfg["seed"])
        self.params = joint_params(self.restore, self.degrad)
        self.opt = Adam(self.params, lr=self.tcfg["lr"], beta1=self.tcfg["beta1"],
                        beta2=self.tcfg["beta2"], eps=self.tcfg["eps"],
                        weight_decay=self.tcfg["weight_decay"])
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0x7A]))
        self.step = 0
        self.running = {"loss_total": 0.0, "loss_xrecon": 0.0, "loss_yrecon": 0.0, "count": 0}

        manifest = load_manifest(dataset_dir)
        if not manifest:
            raise ValueError(f"dataset at {dataset_dir} is empty")
        self.pairs = [load_pair(dataset_dir, e) for e in manifest]
        self.kinds = [e["kind"] for e in manifest]
        self.train_idx, self.eval_idx = split_holdout(manifest, self.tcfg["holdout_per_kind"])
        if self.tcfg["steps"] > 0 and not self.train_idx:
            raise ValueError("holdout split left no training samples")

    # --- state (de)serialization ---

    def _tensors(self):
        out = {name: t.data for name, t in self.params.items()}
        out.update(self.opt.state_tensors())
        return out

    def _meta(self):
        return {
            "config": self.cfg,
            "step": self.step,
            "rng": _rng_state_to_json(self.rng.bit_generator.state),
            "running": dict(self.running),
        }

    def save(self, path):
        save_checkpoint(path, self._tensors(), self._meta())

    def resume(self, path):
        tensors, meta = load_checkpoint(path)
        saved = meta["config"]["train"]
        for key in ("channels", "scales", "dict_m", "dict_n", "rank_k", "variant", "dtype"):
            if saved[key] != self.tcfg[key]:
                raise ValueError(f"cannot resume: train.{key} differs "
                                 f"(checkpoint {saved[key]!r}, config {self.tcfg[key]!r})")
        load_into(self.params, tensors, prefix=None)
        self.step = int(meta["step"])
        self.opt.load_state_tensors(tensors, self.step)
        self.rng.bit_generator.state = _rng_state_from_json(meta["rng"])
        self.running = dict(meta["running"])

    # --- data ---

    def sample_batch(self):
        bs = self.tcfg["batch_size"]
        crop = self.tcfg["crop_size"]
        idx = self.rng.choice(len(self.train_idx), size=bs, replace=len(self.train_idx) < bs)
        xs, ys = [], []
        for j in idx:
            x, y = self.pairs[self.train_idx[int(j)]]
            h, w = x.shape[:2]
            ch, cw = min(crop, h), min(crop, w)
            if h > ch or w > cw:
                oy = int(self.rng.integers(0, h - ch + 1))
                ox = int(self.rng.integers(0, w - cw + 1))
                x = x[oy:oy + ch, ox:ox + cw]
                y = y[oy:oy + ch, ox:ox + cw]
            xs.append(x)
            ys.append(y)
        return (np.stack(xs).astype(self.dtype), np.stack(ys).astype(self.dtype))

    # --- evaluation ---

    def evaluate(self):
        """Held-out PSNR/SSIM of the restoration direction, per kind."""
        pairs = [(self.pairs[i][0], self.pairs[i][1], self.kinds[i]) for i in self.eval_idx]
        if not pairs:
            return {"summary": {"all": {"psnr": 0.0, "ssim": 0.0, "n": 0}}, "rows": []}
        return metrics.score_pairs(pairs, restore_fn=self.restore.restore_image)

    def baseline(self):
        """Held-out PSNR/SSIM of the degraded inputs themselves."""
        pairs = [(self.pairs[i][0], self.pairs[i][1], self.kinds[i]) for i in self.eval_idx]
        return metrics.score_pairs(pairs, restore_fn=None)

    # --- main loop ---

    def run(self, resume_from=None, log=None):
        if resume_from:
            self.resume(resume_from)
        steps = self.tcfg["steps"]
        lam = self.tcfg["lambda"]
        metrics_path = os.path.join(self.out_dir, "metrics.csv")
        mode = "a" if resume_from else "w"
        last_eval = None
        with open(metrics_path, mode, encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            if mode == "w":
                writer.writerow(METRICS_HEADER)
            if steps == 0 or self.step >= steps:
                self.save(os.path.join(self.out_dir, "final.ndrc"))
                return {"metrics_path": metrics_path,
                        "checkpoint_path": os.path.join(self.out_dir, "final.ndrc"),
                        "eval": None}
            while self.step < steps:
                x, y = self.sample_batch()
                try:
                    losses = bidirectional_step(
                        self.restore, self.degrad, self.opt, x, y, lam,
                        alt_steps=self.tcfg["alt_steps"], step_index=self.step,
                        detach_u=self.tcfg["detach_u"])
                except FloatingPointError:
                    self.save(os.path.join(self.out_dir, "crash.ndrc"))
                    raise
                self.step += 1
                for key in ("loss_total", "loss_xrecon", "loss_yrecon"):
                    self.running[key] += losses[key]
                self.running["count"] += 1
                row = [str(self.step)] + [f"{losses[k]:.9g}" for k in
                                          ("loss_total", "loss_xrecon", "loss_yrecon")]
                if self.step % self.tcfg["eval_every"] == 0 or self.step == steps:
                    report = self.evaluate()
                    last_eval = report
                    row += [f"{report['summary']['all']['psnr']:.9g}",
                            f"{report['summary']['all']['ssim']:.9g}"]
                    if log:
                        log(f"step {self.step}: loss {losses['loss_total']:.5f} "
                            f"eval psnr {report['summary']['all']['psnr']:.2f} dB")
                else:
                    row += ["", ""]
                writer.writerow(row)
                if self.step % self.tcfg["ckpt_every"] == 0 and self.step < steps:
                    self.save(os.path.join(self.out_dir, f"ckpt_{self.step:06d}.ndrc"))
        final_path = os.path.join(self.out_dir, "final.ndrc")
        self.save(final_path)
        return {"metrics_path": metrics_path, "checkpoint_path": final_path,
                "eval": last_eval}


def _rng_state_to_json(state):
    """PCG64 state dicts contain 128-bit ints; JSON keeps them exact."""
    return state


def _rng_state_from_json(state):
    inner = state.get("state")
    if isinstance(inner, dict):
        state["state"] = {k: int(v) for k, v in inner.items()}
    return state


def train_loop(cfg, dataset_dir, out_dir, resume_from=None, log=None):
    """Train per config over a synthesized dataset; returns run summary."""
    trainer = Trainer(cfg, dataset_dir, out_dir)
    return trainer.run(resume_from=resume_from, log=log)


def read_metrics(path):
    """Parse a metrics CSV back into a list of row dicts."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            rows.append(row)
    return rows


def ablate(cfg, dataset_dir, out_dir, variants=None, lambdas=LAMBDA_SWEEP, log=None):
    """Train module-ablation and lambda-sweep variants with one seed.

    Produces side-by-side final losses and held-out metrics; this is a
    comparison report, not a pass/fail gate.
    """
    import copy
    import json

    if variants is None:
        variants = list(MODULE_VARIANTS)
    for v in variants:
        if v not in MODULE_VARIANTS:
            raise ValueError(f"unknown ablation variant {v!r}")
    runs = [(v, cfg["train"]["lambda"], v) for v in variants]
    runs += [(f"lambda_{lam:g}", lam, "full") for lam in lambdas]

    os.makedirs(out_dir, exist_ok=True)
    kinds = sorted({e["kind"] for e in load_manifest(dataset_dir)})
    rows = []
    for name, lam, variant in runs:
        run_cfg = copy.deepcopy(cfg)
        run_cfg["train"]["lambda"] = lam
        run_cfg["train"]["variant"] = variant
        run_dir = os.path.join(out_dir, name)
        if log:
            log(f"ablation run {name} (variant={variant}, lambda={lam:g})")
        result = train_loop(run_cfg, dataset_dir, run_dir)
        summary = (result["eval"] or {"summary": {}})["summary"]
        mrows = read_metrics(result["metrics_path"])
        last = mrows[-1] if mrows else {}
        row = {"variant": name, "lambda": lam, "steps": len(mrows),
               "loss_total": float(last.get("loss_total", "nan") or "nan")}
        for kind in kinds:
            ks = summary.get(kind, {})
            row[f"psnr_{kind}"] = ks.get("psnr", float("nan"))
            row[f"ssim_{kind}"] = ks.get("ssim", float("nan"))
        allsum = summary.get("all", {})
        row["psnr_mean"] = allsum.get("psnr", float("nan"))
        row["ssim_mean"] = allsum.get("ssim", float("nan"))
        rows.append(row)

    fields = list(rows[0].keys())
    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v)
                             for k, v in row.items()})
    json_path = os.path.join(out_dir, "ablation.json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump({"variants": [r[0] for r in runs], "rows": rows}, f, indent=1, sort_keys=True)
        f.write("\n")
    return {"csv_path": csv_path, "json_path": json_path, "rows": rows}
