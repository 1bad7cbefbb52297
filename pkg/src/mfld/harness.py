"""Experiment runners, checkpoints, manifests and SVG heatmaps.

Every random quantity in a run derives from ``cfg.master_seed`` through a
purpose tag and integer indices, so pool members can be trained in any
order or in parallel without changing a single output bit.
"""
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from xml.sax.saxutils import escape

import numpy as np

from . import _rng
from .config import ConfigError, Experiment
from .core import ParticleSystem, accuracy, empirical_risk, network_eval
from .datagen import gen_circles, gen_multi_index, split
from .ensemble import lora_merge, merge
from .lora import evaluate, finetune, gen_lowrank_task
from .optim import init_system, train
from .records import MetricRecord, select


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def load_task(cfg):
    """Generate the configured dataset and split it into ``(train, test)``."""
    params = cfg.task_params(_rng.derive_seed(cfg.master_seed, "data"))
    data = gen_circles(params) if cfg.task["kind"] == "circles" else gen_multi_index(params)
    return split(data, cfg.train_frac, _rng.derive_seed(cfg.master_seed, "split"))


def _train_network(cfg, n_particles, data, seed, test=None, what="network", **overrides):
    tcfg = cfg.train_config(seed=seed, **overrides)
    system = init_system(n_particles, data.input_dim, cfg.scale, tcfg,
                         provenance=f"seed={seed};N={n_particles}")
    try:
        return train(system, data, tcfg, test=test)
    except (ValueError, FloatingPointError) as exc:
        raise RuntimeError(f"training failed for N={n_particles}, {what}: {exc}") from exc


def _train_pool(cfg, n_particles, data, threads, test=None, tag="member", **overrides):
    def one(j):
        seed = _rng.derive_seed(cfg.master_seed, tag, n_particles, j)
        return _train_network(cfg, n_particles, data, seed, test=test, what=f"member {j}",
                              **overrides)
    return _map(one, range(cfg.m_max), threads)


def run_train(cfg):
    """Train one network of ``cfg.n_particles`` neurons; returns ``(system, records)``."""
    tr, te = load_task(cfg)
    seed = _rng.derive_seed(cfg.master_seed, "train")
    system, traj = _train_network(cfg, cfg.n_particles, tr, seed, test=te)
    records = [MetricRecord("train", r.metric, r.value, N=cfg.n_particles, epoch=r.epoch)
               for r in traj]
    if cfg.task["kind"] == "circles":
        records.append(MetricRecord("train", "accuracy", accuracy(system, te),
                                    N=cfg.n_particles, epoch=cfg.train_config().epochs))
    return system, records


def run_merge_heatmap(cfg, threads=1):
    """Sup-norm distance between merged M x N networks and an N_inf reference."""
    exp = "merge_heatmap"
    tr, te = load_task(cfg)
    ref_seed = _rng.derive_seed(cfg.master_seed, "reference")
    reference, _ = _train_network(cfg, cfg.n_inf, tr, ref_seed, what="reference")
    y_ref = network_eval(reference, te.inputs)
    records = []
    for N in cfg.n_list:
        pool = [s for s, _ in _train_pool(cfg, N, tr, threads)]
        for M in cfg.members_to_merge:
            sups = []
            for r in range(cfg.subsample_repeats):
                rng = _rng.stream(cfg.master_seed, "subset", N, M, r)
                chosen = np.sort(rng.choice(cfg.m_max, size=M, replace=False))
                merged = merge([pool[j] for j in chosen])
                sup = float(np.max(np.abs(network_eval(merged, te.inputs) - y_ref)))
                sups.append(sup)
                records.append(MetricRecord(exp, "sup_norm", sup, N=N, M=M, repeat=r))
            records.append(MetricRecord(exp, "sup_norm", float(np.mean(sups)), N=N, M=M))
            records.append(MetricRecord(exp, "log_sup_norm",
                                        float(np.mean(np.log(sups))), N=N, M=M))
    return records


def run_lambda_sweep(cfg, threads=1):
    """Per-epoch mean ln(test MSE) of single networks and merged MSE per (lambda, N)."""
    exp = "lambda_sweep"
    if cfg.train_config().loss.value != "squared_error":
        raise ConfigError("lambda sweep needs train.loss = 'squared_error'")
    tr, te = load_task(cfg)
    records = []
    for lam in cfg.lambdas:
        for N in cfg.n_list:
            results = _train_pool(cfg, N, tr, threads, test=te, temperature=lam)
            epochs = cfg.train_config().epochs
            for epoch in range(1, epochs + 1):
                lns = [math.log(r.value) for _, traj in results for r in traj
                       if r.metric == "test_loss" and r.epoch == epoch]
                records.append(MetricRecord(exp, "ln_mse", float(np.mean(lns)),
                                            N=N, lam=lam, epoch=epoch))
            merged = merge([s for s, _ in results])
            records.append(MetricRecord(exp, "mse", empirical_risk(merged, te, "squared_error"),
                                        N=N, M=cfg.m_max, lam=lam, epoch=epochs))
    return records


def run_stationary_check(cfg, threads=1):
    """Risk-free MFLD: long-run per-coordinate variance against ``lambda / (2 l2)``."""
    exp = "stationary_check"

    def one(item):
        idx, lam = item
        tcfg = cfg.train_config(temperature=lam,
                                seed=_rng.derive_seed(cfg.master_seed, "stationary", idx))
        system = init_system(cfg.n_particles, cfg.input_dim, cfg.scale, tcfg)
        system, _ = train(system, None, tcfg)
        return lam, tcfg, float(np.mean(np.var(system.params, axis=0)))

    records = []
    for lam, tcfg, var in _map(one, enumerate(cfg.lambdas), threads):
        records.append(MetricRecord(exp, "variance", var, N=cfg.n_particles, lam=lam,
                                    epoch=tcfg.epochs))
        if tcfg.l2 > 0:
            records.append(MetricRecord(exp, "target_variance", lam / (2.0 * tcfg.l2),
                                        N=cfg.n_particles, lam=lam))
    return records


def run_lora_merge(cfg, threads=1):
    """Train ``members`` noisy-AdamW adapters per synthetic task and merge them."""
    exp = "lora_merge"
    lc = cfg.lora
    records = []
    for t in range(lc.tasks):
        task, data = gen_lowrank_task(lc.k, lc.d, lc.true_rank, lc.n, lc.noise_std,
                                      _rng.derive_seed(cfg.master_seed, "lora-task", t))
        tr, te = split(data, cfg.train_frac, _rng.derive_seed(cfg.master_seed, "lora-split", t))
        for lam in cfg.lambdas:
            def member(j):
                seed = _rng.derive_seed(cfg.master_seed, "lora-member", t, j)
                return finetune(task.base, tr, lc.rank, lc.lora_config(lam, seed))

            adapters = _map(member, range(lc.members), threads)
            member_mse = [evaluate(task.base, a.delta(), te) for a in adapters]
            merged_mse = evaluate(task.base, lora_merge(adapters), te)
            keys = dict(N=lc.rank, lam=lam, repeat=t)
            records += [
                MetricRecord(exp, "mse", merged_mse, M=lc.members, **keys),
                MetricRecord(exp, "mean_member_mse", float(np.mean(member_mse)), M=1, **keys),
                MetricRecord(exp, "best_member_mse", float(np.min(member_mse)), M=1, **keys),
            ]
    return records


RUNNERS = {
    Experiment.MERGE_HEATMAP: run_merge_heatmap,
    Experiment.LAMBDA_SWEEP: run_lambda_sweep,
    Experiment.STATIONARY_CHECK: run_stationary_check,
    Experiment.LORA_MERGE: run_lora_merge,
}


def write_checkpoint(system, path):
    """Particle matrix as CSV (one neuron per row) plus a JSON sidecar."""
    header = [f"w{j}" for j in range(system.input_dim)] + ["b", "c"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in system.params:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    with open(os.path.splitext(path)[0] + ".json", "w", encoding="utf-8") as fh:
        json.dump({"scale": system.scale, "input_dim": system.input_dim,
                   "provenance": system.provenance}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_checkpoint(path):
    sidecar = os.path.splitext(path)[0] + ".json"
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: checkpoint has no particle rows")
    params = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if params.shape[1] != meta["input_dim"] + 2:
        raise ValueError(f"{path}: rows have {params.shape[1]} columns, "
                         f"sidecar says input_dim={meta['input_dim']}")
    return ParticleSystem(params, meta["scale"], meta.get("provenance", ""))


def write_manifest(cfg, out_dir, artifacts):
    manifest = {"config": cfg.to_dict(), "master_seed": cfg.master_seed,
                "experiment": cfg.experiment.value, "artifacts": sorted(artifacts)}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _lerp_color(t):
    # two stops: pale yellow (small) -> dark blue (large)
    lo, hi = (255, 247, 188), (8, 48, 107)
    return "#%02x%02x%02x" % tuple(round(a + (b - a) * t) for a, b in zip(lo, hi))


def emit_heatmap_svg(records, path, metric="sup_norm"):
    """Grid of N (x) by M (y) cells colored on a log scale of the mean ``metric``."""
    cells = {(r.N, r.M): r.value for r in select(records, metric=metric, repeat=None)
             if r.N is not None and r.M is not None}
    if not cells:
        raise ValueError(f"no aggregate {metric} records to plot")
    ns = sorted({n for n, _ in cells})
    ms = sorted({m for _, m in cells})
    logs = [math.log(v) for v in cells.values() if v > 0]
    lo, hi = (min(logs), max(logs)) if logs else (0.0, 0.0)
    cw, ch, left, top = 80, 40, 70, 30
    width, height = left + cw * len(ns) + 20, top + ch * len(ms) + 60
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<text x="{width / 2}" y="18" text-anchor="middle">mean {escape(metric)} '
           f'(log color scale)</text>']
    for yi, m in enumerate(reversed(ms)):
        y = top + yi * ch
        out.append(f'<text x="{left - 8}" y="{y + ch / 2 + 4}" text-anchor="end">{m}</text>')
        for xi, n in enumerate(ns):
            x = left + xi * cw
            value = cells.get((n, m))
            if value is None:
                continue
            t = 0.0 if hi == lo or value <= 0 else (math.log(value) - lo) / (hi - lo)
            text_fill = "#ffffff" if t > 0.5 else "#000000"
            out.append(f'<rect class="cell" x="{x}" y="{y}" width="{cw}" height="{ch}" '
                       f'fill="{_lerp_color(t)}" stroke="#ffffff"/>')
            out.append(f'<text x="{x + cw / 2}" y="{y + ch / 2 + 4}" text-anchor="middle" '
                       f'fill="{text_fill}">{value:.3g}</text>')
    bottom = top + ch * len(ms)
    for xi, n in enumerate(ns):
        out.append(f'<text x="{left + xi * cw + cw / 2}" y="{bottom + 16}" '
                   f'text-anchor="middle">{n}</text>')
    out.append(f'<text x="{left + cw * len(ns) / 2}" y="{bottom + 40}" '
               f'text-anchor="middle">N</text>')
    out.append(f'<text x="16" y="{top + ch * len(ms) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ch * len(ms) / 2})">M</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
