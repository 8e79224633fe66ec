"""Command-line driver.

Verbs: ``synth-mix``, ``train``, ``separate``, ``tune``, ``eval`` and
``convergence-report``. Settings come from an optional JSON document
(``--config``) and are overridden by flags. Every output directory gets a
``manifest.json`` with the resolved settings, so a run can be repeated.

Data files may be MatrixFiles, IDX image sets, PGM directories or WAV files
(turned into magnitude spectrograms).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .adversarial import AdversarialSpec, MixingSpec, assemble_adversarial, beta, default_omega, mix_signals
from .audio import StftConfig, istft, mix_at_snr, phase_transfer, read_wav, stft, write_wav
from .core import ConfigurationError, DimensionError, MDNMFError
from .io import atomic_write, load_matrix, read_matrix, write_json, write_matrix
from .metrics import aggregate, psnr, si_sdr
from .separation import SeparationConfig, separate
from .synthetic import NOISE_KINDS, SyntheticSpeaker, colored_noise, digit_images
from .trainer import PRESETS, ConvergenceTrace, SourceBundle, TrainConfig, init_exemplar, train, train_semi_supervised
from .tuning import SearchSpace, default_space, random_search, trials_csv

log = logging.getLogger("mdnmf")

MODES = ("nmf", "enmf", "mdnmf", "dnmf", "d+mdnmf", "semi")
TRAIN_KEYS = ("d", "lam", "gamma", "tau_w", "tau_a", "tau_s", "epochs", "batch_size", "batch_strategy",
              "balanced_batches", "init", "entry_floor", "encode_steps", "scale_sparsity", "reseed_dead_atoms")


class CLIError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _setup_logging():
    level = os.environ.get("MDNMF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _is_wav(path) -> bool:
    return str(path).lower().endswith(".wav")


def _stft_config(cfg: dict) -> StftConfig:
    return StftConfig(**cfg.get("stft", {}))


def _load_data(paths, cfg: dict) -> np.ndarray:
    """Column-concatenated data from one or more files."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    blocks = []
    for p in paths:
        if _is_wav(p):
            x, rate = read_wav(p)
            scfg = _stft_config(cfg)
            if rate != scfg.sample_rate:
                raise CLIError(f"{p}: sample rate {rate}, expected {scfg.sample_rate}")
            blocks.append(stft(x, scfg).magnitudes)
        else:
            blocks.append(load_matrix(p))
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise DimensionError(f"inputs disagree on the feature dimension: {sorted(rows)}")
    return np.hstack(blocks)


def _resolve(args, flag_map: Dict[str, str]) -> dict:
    """JSON config merged with the flags that were given (flags win)."""
    cfg = {}
    if args.config:
        with open(args.config) as f:
            cfg = json.load(f)
        if not isinstance(cfg, dict):
            raise CLIError("config must be a JSON object")
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    if args.out is not None:
        cfg["out"] = args.out
    return cfg


def _require_paths(cfg: dict, *keys):
    """Every referenced path must exist before any work starts."""
    data = cfg.get("data", {})
    for key in keys:
        value = data.get(key)
        if value is None:
            continue
        for p in (value if isinstance(value, list) else [value]):
            if p is not None and not Path(p).exists():
                raise CLIError(f"{key} path does not exist: {p}")


def _out_dir(cfg: dict) -> Path:
    out = cfg.get("out")
    if not out:
        raise CLIError("no output directory (use --out or 'out' in the config)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(out: Path, command: str, cfg: dict, outputs: Sequence[str], extra: Optional[dict] = None):
    doc = {"command": command, "version": __version__, "config": cfg, "outputs": sorted(outputs)}
    if extra:
        doc.update(extra)
    write_json(out / "manifest.json", doc)


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _train_config(mode: str, cfg: dict, overrides: Optional[dict] = None) -> TrainConfig:
    t = {k: v for k, v in cfg.get("train", {}).items() if k in TRAIN_KEYS}
    if overrides:
        t.update(overrides)
    for key in ("d", "lam"):
        # a one-element list from the command line means "same for every source"
        if isinstance(t.get(key), list) and len(t[key]) == 1:
            t[key] = t[key][0]
    if isinstance(t.get("d"), list):
        t["d"] = [int(x) for x in t["d"]]
    t["seed"] = int(cfg["seed"])
    if mode in PRESETS:
        return TrainConfig.preset(mode, **t)
    t.pop("tau_a", None)
    t.pop("tau_s", None)
    return TrainConfig(**t)


def _weights(cfg: dict, n_sources: int) -> np.ndarray:
    w = cfg.get("weights")
    if w is None:
        return np.full(n_sources, 1.0 / n_sources)
    w = np.asarray(w, dtype=float)
    if w.size != n_sources:
        raise CLIError(f"{w.size} mixing weights for {n_sources} sources")
    return w


# ---------------------------------------------------------------- synth-mix

def cmd_synth_mix(args) -> int:
    cfg = _resolve(args, {"kind": "kind", "sources": "data.sources", "weights": "weights", "snr_db": "snr_db",
                          "synthetic": "synthetic", "n": "n", "seconds": "seconds", "noise_kind": "noise_kind"})
    cfg.setdefault("kind", "image")
    _require_paths(cfg, "sources")
    out = _out_dir(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    outputs = []
    extra = {}
    if cfg["kind"] == "image":
        if cfg.get("synthetic"):
            kinds = cfg["synthetic"].split(",") if isinstance(cfg["synthetic"], str) else cfg["synthetic"]
            n = int(cfg.get("n", 100))
            sources = [digit_images(k, n, rng) for k in kinds]
        else:
            paths = cfg.get("data", {}).get("sources")
            if not paths:
                raise CLIError("image mode needs --sources or --synthetic")
            sources = [load_matrix(p) for p in paths]
            n = min(s.shape[1] for s in sources)
            if len({s.shape[0] for s in sources}) != 1:
                raise DimensionError("sources have different image sizes")
            sources = [s[:, :n] for s in sources]
        w = _weights(cfg, len(sources))
        mix = MixingSpec(w)
        mixed = mix_signals(mix, sources)
        for i, s in enumerate(sources):
            write_matrix(out / f"source_{i}.nmf", s)
            write_matrix(out / f"component_{i}.nmf", w[i] * s)
            outputs += [f"source_{i}.nmf", f"component_{i}.nmf"]
        write_matrix(out / "mixed.nmf", mixed)
        outputs.append("mixed.nmf")
        cfg["weights"] = w.tolist()
    elif cfg["kind"] == "audio":
        snr_db = float(cfg.get("snr_db", 3.0))
        scfg = _stft_config(cfg)
        if cfg.get("synthetic"):
            seconds = float(cfg.get("seconds", 2.0))
            speaker = SyntheticSpeaker.random(rng, scfg.sample_rate)
            speech = speaker.utter(seconds, rng)
            noise = colored_noise(seconds, rng, scfg.sample_rate, cfg.get("noise_kind"))
            # extra clean speech from the same speaker for basis training
            write_wav(out / "speech_train.wav", speaker.utter(4 * seconds, rng), scfg.sample_rate)
            outputs.append("speech_train.wav")
        else:
            paths = cfg.get("data", {}).get("sources")
            if not paths or len(paths) != 2:
                raise CLIError("audio mode needs --sources SPEECH.wav NOISE.wav or --synthetic")
            speech, r1 = read_wav(paths[0])
            noise, r2 = read_wav(paths[1])
            if r1 != r2:
                raise DimensionError("speech and noise sample rates differ")
            n = min(speech.size, noise.size)
            speech, noise = speech[:n], noise[:n]
        mixture, scaled = mix_at_snr(speech, noise, snr_db)
        gain = float(np.linalg.norm(scaled) / np.linalg.norm(noise))
        write_wav(out / "mixture.wav", mixture, scfg.sample_rate)
        write_wav(out / "speech.wav", speech, scfg.sample_rate)
        write_wav(out / "noise.wav", scaled, scfg.sample_rate)
        outputs += ["mixture.wav", "speech.wav", "noise.wav"]
        cfg["snr_db"] = snr_db
        extra["noise_scale"] = gain
    else:
        raise CLIError(f"unknown kind {cfg['kind']!r}; use image or audio")
    _manifest(out, "synth-mix", cfg, outputs, extra)
    print(f"wrote {len(outputs)} files to {out}")
    return 0


# ---------------------------------------------------------------- train

def _bundles(mode: str, cfg: dict, tcfg: TrainConfig) -> List[SourceBundle]:
    data = cfg.get("data", {})
    weak_paths = data.get("weak") or []
    strong_paths = data.get("strong") or []
    adv_paths = data.get("adversarial") or []
    mixed_path = data.get("mixed")
    S = max(len(weak_paths), len(strong_paths), len(adv_paths))
    if S == 0:
        raise CLIError("no training data: give --weak and/or --strong paths")
    weak = [_load_data(p, cfg) for p in weak_paths] if weak_paths else [None] * S
    strong = [_load_data(p, cfg) for p in strong_paths] if strong_paths else [None] * S
    mixed = _load_data(mixed_path, cfg) if mixed_path else None
    if len(weak) != S or len(strong) != S:
        raise CLIError("weak and strong path lists must have one entry per source")
    w = _weights(cfg, S)

    adversarial = [None] * S
    if tcfg.tau_a > 0:
        if adv_paths:
            if len(adv_paths) != S:
                raise CLIError("need one adversarial path per source")
            adversarial = [_load_data(p, cfg) for p in adv_paths]
        else:
            counts = [0 if u is None else u.shape[1] for u in weak]
            n_mixed = 0 if mixed is None else mixed.shape[1]
            mix = MixingSpec(w)
            try:
                omega = np.vstack([default_omega(counts, n_mixed, j) for j in range(S)])
            except ConfigurationError:
                raise ConfigurationError(
                    f"mode {mode} needs adversarial data: give --mixed, several sources or --adversarial")
            betas = np.array([beta(mix, j) for j in range(S)]) if cfg.get("use_beta") else None
            for i in range(S):
                adversarial[i] = assemble_adversarial(i, weak, mixed, AdversarialSpec(omega, beta=betas), mix)
    strong_mixed = None
    if tcfg.tau_s > 0:
        if any(s is None for s in strong):
            raise ConfigurationError(f"mode {mode} needs --strong components for every source")
        strong_mixed = mixed if mixed is not None else sum(strong)
    return [SourceBundle(weak=weak[i], adversarial=adversarial[i],
                         strong_sources=strong[i] if tcfg.tau_s > 0 else None,
                         strong_mixed=strong_mixed) for i in range(S)]


TRAIN_FLAGS = {"mode": "mode", "weak": "data.weak", "strong": "data.strong", "mixed": "data.mixed",
               "adversarial": "data.adversarial", "known": "data.known", "weights": "weights",
               "d": "train.d", "lam": "train.lam", "gamma": "train.gamma", "tau_w": "train.tau_w",
               "tau_a": "train.tau_a", "tau_s": "train.tau_s", "epochs": "train.epochs",
               "batch_size": "train.batch_size", "batch_strategy": "train.batch_strategy",
               "balanced_batches": "train.balanced_batches", "use_beta": "use_beta"}


def _run_train(cfg: dict):
    mode = cfg.get("mode")
    if mode not in MODES:
        raise CLIError(f"--mode must be one of {MODES}")
    if isinstance(cfg.get("train", {}).get("lam"), list) and len(cfg["train"]["lam"]) == 1:
        cfg["train"]["lam"] = cfg["train"]["lam"][0]
    if isinstance(cfg.get("train", {}).get("d"), list) and len(cfg["train"]["d"]) == 1:
        cfg["train"]["d"] = cfg["train"]["d"][0]
    if mode == "semi":
        known = cfg.get("data", {}).get("known")
        mixed = cfg.get("data", {}).get("mixed")
        if not known or not mixed:
            raise ConfigurationError("mode semi needs --known bases and --mixed data")
        tcfg = _train_config(mode, cfg)
        W_known = [read_matrix(p) for p in known]
        W_s, _, trace = train_semi_supervised(W_known, _load_data(mixed, cfg), tcfg, return_state=True)
        return [W_s], [trace]
    tcfg = _train_config(mode, cfg)
    bundles = _bundles(mode, cfg, tcfg)
    if mode == "enmf":
        rng = np.random.default_rng(tcfg.seed)
        bases = []
        for i, b in enumerate(bundles):
            pool = b.weak if b.weak is not None else b.strong_sources
            if pool is None:
                raise ConfigurationError(f"enmf needs weak data for source {i}")
            bases.append(init_exemplar(pool, tcfg.d_for(i), rng))
        return bases, []
    return train(bundles, tcfg)


def cmd_train(args) -> int:
    cfg = _resolve(args, TRAIN_FLAGS)
    _require_paths(cfg, "weak", "strong", "mixed", "adversarial", "known")
    out = _out_dir(cfg)
    bases, traces = _run_train(cfg)
    outputs = []
    offset = len(cfg.get("data", {}).get("known") or []) if cfg["mode"] == "semi" else 0
    for i, W in enumerate(bases):
        name = f"basis_{i + offset}.nmf"
        write_matrix(out / name, W)
        outputs.append(name)
    for tr in traces:
        name = f"trace_{tr.source}.csv"
        atomic_write(out / name, tr.to_csv())
        outputs.append(name)
    if traces:
        # wall-clock timing lives apart from the reproducible traces
        rows = [(tr.source, r.epoch, f"{r.seconds:.6f}") for tr in traces for r in tr.records]
        atomic_write(out / "timing.csv", _csv_text(["source", "epoch", "seconds"], rows))
    _manifest(out, "train", cfg, outputs)
    finals = ", ".join(f"{tr.records[-1].loss:.6g}" for tr in traces if tr.records)
    print(f"trained {len(bases)} basis/bases ({cfg['mode']}); final losses: {finals or 'n/a'}")
    return 0


# ---------------------------------------------------------------- separate

def _item_rows(per_source: List[List[float]], weights) -> List[list]:
    arr = np.array(per_source, dtype=float)
    combined = aggregate(arr, weights).values
    rows = []
    for k in range(arr.shape[1]):
        rows.append([k] + [_fmt(v) for v in arr[:, k]] + [_fmt(combined[k])])
    return rows, combined


def cmd_separate(args) -> int:
    cfg = _resolve(args, {"bases": "data.bases", "input": "data.input", "truth": "data.truth",
                          "lam": "separation.lam", "eps": "separation.eps", "weights": "metric_weights",
                          "peak": "peak"})
    _require_paths(cfg, "bases", "input", "truth")
    data = cfg.get("data", {})
    if not data.get("bases") or not data.get("input"):
        raise CLIError("separate needs --bases and --input")
    out = _out_dir(cfg)
    bases = [read_matrix(p) for p in data["bases"]]
    sep = dict(cfg.get("separation", {}))
    if isinstance(sep.get("lam"), list) and len(sep["lam"]) == 1:
        sep["lam"] = sep["lam"][0]
    scfg = SeparationConfig(**sep)
    inp = data["input"]
    outputs = []
    truth = data.get("truth")
    S = len(bases)
    if truth and len(truth) != S:
        raise CLIError(f"{len(truth)} ground-truth files for {S} sources")
    weights = cfg.get("metric_weights")
    if _is_wav(inp):
        x, rate = read_wav(inp)
        spec = stft(x, _stft_config(cfg))
        res = separate(bases, spec.magnitudes, scfg)
        signals = [istft(phase_transfer(u, spec)) for u in res.parts]
        for i, y in enumerate(signals):
            write_wav(out / f"part_{i}.wav", y, rate)
            outputs.append(f"part_{i}.wav")
        if truth:
            per_source = []
            for i, p in enumerate(truth):
                ref, _ = read_wav(p)
                per_source.append([si_sdr(ref, signals[i][:ref.size])])
            rows, combined = _item_rows(per_source, weights)
            header = ["item"] + [f"si_sdr_{i}" for i in range(S)] + ["si_sdr"]
            atomic_write(out / "report.csv", _csv_text(header, rows))
            outputs.append("report.csv")
    else:
        V = load_matrix(inp)
        res = separate(bases, V, scfg)
        for i, u in enumerate(res.parts):
            write_matrix(out / f"part_{i}.nmf", u)
            outputs.append(f"part_{i}.nmf")
        if truth:
            peak = float(cfg.get("peak", 1.0))
            per_source = []
            for i, p in enumerate(truth):
                ref = load_matrix(p)
                if ref.shape != V.shape:
                    raise DimensionError(f"{p}: shape {ref.shape} differs from the input {V.shape}")
                per_source.append([psnr(ref[:, k], res.parts[i][:, k], peak) for k in range(V.shape[1])])
            rows, combined = _item_rows(per_source, weights)
            rep = aggregate(combined)
            rows.append(["median", *[""] * S, _fmt(rep.median)])
            rows.append(["mean", *[""] * S, _fmt(rep.mean)])
            rows.append(["std_error", *[""] * S, _fmt(rep.std_error)])
            header = ["item"] + [f"psnr_{i}" for i in range(S)] + ["psnr"]
            atomic_write(out / "report.csv", _csv_text(header, rows))
            outputs.append("report.csv")
    if res.degenerate:
        log.warning("every reconstruction was zero; outputs are silent")
    _manifest(out, "separate", cfg, outputs, {"degenerate": bool(res.degenerate),
                                              "residual_norm": res.residual_norm})
    print(f"separated into {S} parts; residual norm {res.residual_norm:.6g}")
    return 0


# ---------------------------------------------------------------- tune

def _space_for_mode(mode: str, cfg: dict) -> SearchSpace:
    if "search" in cfg:
        space = SearchSpace.from_dict(cfg["search"])
    else:
        space = default_space(strong=mode in ("dnmf", "d+mdnmf"))
        if mode in ("nmf", "dnmf"):
            space.params.pop("tau_a", None)
        if mode == "dnmf":
            space.params.pop("tau_w", None)
    if cfg.get("trials") is not None:
        space.trials = int(cfg["trials"])
    if cfg.get("folds") is not None:
        space.folds = int(cfg["folds"])
    space.__post_init__()
    return space


def cmd_tune(args) -> int:
    cfg = _resolve(args, {**TRAIN_FLAGS, "trials": "trials", "folds": "folds", "peak": "peak"})
    _require_paths(cfg, "weak", "strong", "mixed")
    mode = cfg.get("mode")
    if mode not in PRESETS:
        raise CLIError(f"tune supports modes {sorted(PRESETS)}")
    data = cfg.get("data", {})
    if not data.get("strong"):
        raise CLIError("tune scores separations and needs --strong components (and optionally --mixed)")
    out = _out_dir(cfg)
    strong = [_load_data(p, cfg) for p in data["strong"]]
    weak = [_load_data(p, cfg) for p in data["weak"]] if data.get("weak") else [None] * len(strong)
    mixed = _load_data(data["mixed"], cfg) if data.get("mixed") else sum(strong)
    S = len(strong)
    w = _weights(cfg, S)
    space = _space_for_mode(mode, cfg)
    peak = float(cfg.get("peak", 1.0))
    metric_weights = cfg.get("metric_weights")
    use_beta = bool(cfg.get("use_beta", False))

    def evaluate(params, fold):
        n = mixed.shape[1]
        tr, va = fold if fold is not None else (np.arange(n), np.arange(n))
        tparams = {k: v for k, v in params.items() if k in TRAIN_KEYS}
        tcfg = _train_config(mode, cfg, tparams)
        bundles = []
        # every fold keeps all weak data; only the paired data are split
        weak_all = [strong[i][:, tr] / w[i] if weak[i] is None else weak[i] for i in range(S)]
        mix = MixingSpec(w)
        omega = np.vstack([default_omega([u.shape[1] for u in weak_all], tr.size, j) for j in range(S)])
        betas = np.array([beta(mix, j) for j in range(S)]) if use_beta else None
        for i in range(S):
            adv = None
            if tcfg.tau_a > 0:
                adv = assemble_adversarial(i, weak_all, mixed[:, tr], AdversarialSpec(omega, beta=betas), mix)
            bundles.append(SourceBundle(weak=weak_all[i], adversarial=adv,
                                        strong_sources=strong[i][:, tr] if tcfg.tau_s > 0 else None,
                                        strong_mixed=mixed[:, tr] if tcfg.tau_s > 0 else None))
        bases, _ = train(bundles, tcfg)
        res = separate(bases, mixed[:, va], SeparationConfig(lam=tcfg.lam, max_iters=100))
        per_source = [[psnr(strong[i][:, k] / w[i], res.parts[i][:, j] / w[i], peak)
                       for j, k in enumerate(va)] for i in range(S)]
        return aggregate(np.array(per_source), metric_weights).median

    n_items = mixed.shape[1] if space.folds else None
    result = random_search(space, evaluate, seed=int(cfg["seed"]), n_items=n_items)
    atomic_write(out / "trials.csv", trials_csv(result.trials))
    best = {"mode": mode, "params": result.best, "score": result.best_score,
            "search_space": space.describe(),
            "note": "default sampling laws are stand-ins, not published settings" if "search" not in cfg else ""}
    write_json(out / "best_config.json", best)
    _manifest(out, "tune", cfg, ["trials.csv", "best_config.json"])
    n_failed = sum(not r.ok for r in result.trials)
    print(f"best median PSNR {result.best_score:.4f} over {len(result.trials)} trials ({n_failed} failed)")
    return 0


# ---------------------------------------------------------------- eval

def _scores(est_path, ref_path, peak) -> List[float]:
    if _is_wav(est_path):
        est, _ = read_wav(est_path)
        ref, _ = read_wav(ref_path)
        n = min(est.size, ref.size)
        return [si_sdr(ref[:n], est[:n])]
    est = load_matrix(est_path)
    ref = load_matrix(ref_path)
    if est.shape != ref.shape:
        raise DimensionError(f"{est_path} {est.shape} vs {ref_path} {ref.shape}")
    return [psnr(ref[:, k], est[:, k], peak) for k in range(ref.shape[1])]


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"estimates": "data.estimates", "references": "data.references",
                          "baseline": "data.baseline", "weights": "metric_weights", "peak": "peak"})
    _require_paths(cfg, "estimates", "references", "baseline")
    data = cfg.get("data", {})
    est, ref = data.get("estimates") or [], data.get("references") or []
    if not est or len(est) != len(ref):
        raise CLIError(f"{len(est)} estimates for {len(ref)} references")
    base = data.get("baseline")
    if base and len(base) != len(ref):
        raise CLIError(f"{len(base)} baseline files for {len(ref)} references")
    out = _out_dir(cfg)
    peak = float(cfg.get("peak", 1.0))
    weights = cfg.get("metric_weights")
    metric = "si_sdr" if _is_wav(est[0]) else "psnr"
    per_source = [_scores(e, r, peak) for e, r in zip(est, ref)]
    if len({len(s) for s in per_source}) != 1:
        raise DimensionError("sources have different item counts")
    rows, combined = _item_rows(per_source, weights)
    header = ["item"] + [f"{metric}_{i}" for i in range(len(est))] + [metric]
    rep = aggregate(combined)
    summary = [["median", _fmt(rep.median)], ["mean", _fmt(rep.mean)], ["std_error", _fmt(rep.std_error)],
               ["count", str(rep.count)]]
    if base:
        base_scores = [_scores(b, r, peak) for b, r in zip(base, ref)]
        base_rep = aggregate(np.array(base_scores), weights)
        b_rows, b_combined = _item_rows(base_scores, weights)
        header.append(f"delta_{metric}")
        for row, a, b in zip(rows, combined, b_combined):
            row.append(_fmt(a - b) if math.isfinite(a) and math.isfinite(b) else ("0.0" if a == b else "nan"))
        summary.append(["baseline_median", _fmt(base_rep.median)])
        summary.append(["delta_median", _fmt(rep.median - base_rep.median)
                        if math.isfinite(rep.median) and math.isfinite(base_rep.median)
                        else ("0.0" if rep.median == base_rep.median else "nan")])
    atomic_write(out / "report.csv", _csv_text(header, rows))
    atomic_write(out / "summary.csv", _csv_text(["statistic", "value"], summary))
    _manifest(out, "eval", cfg, ["report.csv", "summary.csv"])
    print(f"median {metric} {_fmt(rep.median)} over {rep.count} items")
    return 0


# ---------------------------------------------------------------- convergence-report

def cmd_convergence_report(args) -> int:
    cfg = _resolve(args, {"traces": "data.traces", "slack": "slack"})
    _require_paths(cfg, "traces")
    paths = cfg.get("data", {}).get("traces") or []
    if not paths:
        raise CLIError("convergence-report needs --traces")
    slack = float(cfg.get("slack", 1e-10))
    rows = []
    for p in paths:
        tr = ConvergenceTrace.from_csv(Path(p).read_text())
        losses = tr.losses
        if tr.initial_loss is not None:
            losses = np.concatenate([[tr.initial_loss], losses])
        if losses.size == 0:
            raise CLIError(f"{p}: empty trace")
        rel = np.diff(losses) / np.maximum(np.abs(losses[:-1]), 1e-300) if losses.size > 1 else np.zeros(0)
        worst = float(rel.max()) if rel.size else 0.0
        increases = int(np.sum(rel > slack))
        rows.append([p, losses.size - 1, _fmt(losses[0]), _fmt(losses[-1]), _fmt(worst), increases,
                     "yes" if increases == 0 else "no"])
    header = ["trace", "epochs", "initial_loss", "final_loss", "max_relative_increase", "increases", "monotone"]
    text = _csv_text(header, rows)
    if cfg.get("out"):
        out = _out_dir(cfg)
        atomic_write(out / "convergence.csv", text)
        _manifest(out, "convergence-report", cfg, ["convergence.csv"])
    sys.stdout.write(text)
    return 0 if all(r[-1] == "yes" for r in rows) else 3


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON settings; flags override")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS thread limit")

    p = argparse.ArgumentParser(prog="mdnmf", parents=[common],
                                description="Sparse NMF source separation with adversarial and discriminative training.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-mix", parents=[common], help="mix sources into training/test data")
    s.add_argument("--kind", choices=("image", "audio"))
    s.add_argument("--sources", nargs="+", help="one file per source (image data) or SPEECH NOISE wavs")
    s.add_argument("--synthetic", help="generate sources: glyph list like 0,1 (image) or any value (audio)")
    s.add_argument("--n", type=int, help="images per source for --synthetic")
    s.add_argument("--seconds", type=float, help="clip length for synthetic audio")
    s.add_argument("--noise-kind", choices=NOISE_KINDS)
    s.add_argument("--weights", type=float, nargs="+")
    s.add_argument("--snr-db", type=float)
    s.set_defaults(func=cmd_synth_mix)

    def train_args(q):
        q.add_argument("--mode", choices=MODES)
        q.add_argument("--weak", nargs="+", help="clean data per source")
        q.add_argument("--strong", nargs="+", help="true mixture components per source")
        q.add_argument("--mixed", help="mixtures (inverted for adversarial data; paired with --strong)")
        q.add_argument("--adversarial", nargs="+", help="explicit adversarial data per source")
        q.add_argument("--weights", type=float, nargs="+", help="mixing weights")
        q.add_argument("--d", type=int, nargs="+", help="atoms per source")
        q.add_argument("--lam", type=float, nargs="+", help="sparsity per source")
        q.add_argument("--gamma", type=float)
        q.add_argument("--tau-w", dest="tau_w", type=float)
        q.add_argument("--tau-a", dest="tau_a", type=float)
        q.add_argument("--tau-s", dest="tau_s", type=float)
        q.add_argument("--epochs", type=int)
        q.add_argument("--batch-size", dest="batch_size", type=int)
        q.add_argument("--batch-strategy", dest="batch_strategy",
                       choices=("proportional", "undersample", "oversample", "iterative"))
        q.add_argument("--balanced-batches", dest="balanced_batches", action="store_const", const=True,
                       help="spread columns evenly over the batches instead of leaving a short last batch")
        q.add_argument("--use-beta", dest="use_beta", action="store_const", const=True,
                       help="scale raw mixtures by beta instead of inverting them")

    t = sub.add_parser("train", parents=[common], help="fit bases")
    train_args(t)
    t.add_argument("--known", nargs="+", help="fixed bases (mode semi)")
    t.set_defaults(func=cmd_train)

    sp = sub.add_parser("separate", parents=[common], help="separate mixtures with trained bases")
    sp.add_argument("--bases", nargs="+")
    sp.add_argument("--input")
    sp.add_argument("--truth", nargs="+", help="ground truth per source for a metric report")
    sp.add_argument("--lam", type=float, nargs="+")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--weights", type=float, nargs="+", help="metric weight per source")
    sp.add_argument("--peak", type=float)
    sp.set_defaults(func=cmd_separate)

    tu = sub.add_parser("tune", parents=[common], help="random hyperparameter search with CV")
    train_args(tu)
    tu.add_argument("--trials", type=int)
    tu.add_argument("--folds", type=int)
    tu.add_argument("--peak", type=float)
    tu.set_defaults(func=cmd_tune)

    e = sub.add_parser("eval", parents=[common], help="score estimates against references")
    e.add_argument("--estimates", nargs="+")
    e.add_argument("--references", nargs="+")
    e.add_argument("--baseline", nargs="+", help="baseline estimates for delta columns")
    e.add_argument("--weights", type=float, nargs="+")
    e.add_argument("--peak", type=float)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("convergence-report", parents=[common], help="summarize loss traces")
    c.add_argument("--traces", nargs="+")
    c.add_argument("--slack", type=float)
    c.set_defaults(func=cmd_convergence_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out", "threads"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (CLIError, MDNMFError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
