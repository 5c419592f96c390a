"""Command-line pipeline: synth, mix, train-backbone, train-noise, enhance, eval, sweep.

Exit codes: 0 ok, 1 user error (bad input/config), 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import weights
from .audio import (
    Wave, WavError, log_spectral_distance, mix_at_snr, read_wav, require_rate, si_sdr,
    spectrogram_export, synth_corpus, write_wav,
)
from .config import ConfigError, load_config
from .diffusion import train_backbone
from .guided import enhance
from .noise_model import train_noise_model
from .numerics import make_rng
from .schedules import guidance_scale, make_linear_beta

log = logging.getLogger("noiseguide")

USER_ERRORS = (ConfigError, WavError, weights.WeightsError, FileNotFoundError, ValueError)


class UserError(Exception):
    pass


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"input file not found: {p}")
    return p


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _schedule(cfg):
    s = cfg["schedule"]
    return make_linear_beta(s["T"], s["beta_start"], s["beta_end"])


def _read16k(path) -> Wave:
    w = read_wav(_require_file(path))
    require_rate(w)
    return w


def cmd_synth(args, cfg):
    io = cfg["io"]
    kind = args.kind or io["kind"]
    out = _out(args, cfg) / (args.dir or "corpus")
    out.mkdir(parents=True, exist_ok=True)
    count = io["count"] if args.count is None else args.count
    length = io["length"] if args.length is None else args.length
    waves = synth_corpus(kind, count, length, cfg.sub_seed(1), io["sample_rate"])
    for i, w in enumerate(waves):
        write_wav(w, out / f"{kind}_{i:03d}.wav")
    log.info("wrote %d %s clips to %s", len(waves), kind, out)


def cmd_mix(args, cfg):
    clean, noise = _read16k(args.clean), _read16k(args.noise)
    if len(noise) <= len(clean):
        raise UserError("noise file must be longer than the clean file (the remainder trains the noise model)")
    y, scaled = mix_at_snr(clean, noise, args.snr)
    gain = np.dot(scaled.samples, noise.samples[: len(clean)]) / np.dot(noise.samples[: len(clean)], noise.samples[: len(clean)])
    out = _out(args, cfg)
    write_wav(y, out / "noisy.wav")
    write_wav(Wave(gain * noise.samples[len(clean):], noise.sample_rate), out / "noise_ref.wav")
    log.info("mixed at %.2f dB; wrote noisy.wav and noise_ref.wav to %s", args.snr, out)


def cmd_train_backbone(args, cfg):
    bb = cfg["backbone"]
    corpus_dir = Path(args.corpus) if args.corpus else _out(args, cfg) / "corpus"
    files = sorted(corpus_dir.glob("*.wav")) if corpus_dir.is_dir() else []
    if not files:
        raise UserError(f"no WAV files in corpus directory {corpus_dir}")
    corpus = [_read16k(f).samples for f in files]
    sched = _schedule(cfg)
    net, losses = train_backbone(
        corpus, sched, bb["epochs"], bb["lr"], make_rng(cfg.sub_seed(2)), batch=bb["batch"],
        segment=min(bb["segment"], min(len(c) for c in corpus)),
        layers=bb["layers"], channels=bb["channels"], kernel_size=bb["kernel_size"],
    )
    out = _out(args, cfg)
    weights.save(weights.backbone_to_file(net, sched), out / "backbone.ngw")
    with open(out / "backbone_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        w.writerows([i, repr(float(v))] for i, v in enumerate(losses))
    log.info("backbone trained: final epoch loss %.5f", losses[-1] if len(losses) else float("nan"))


def cmd_train_noise(args, cfg):
    nmc = cfg["noise_model"]
    clip = _read16k(args.noise).samples
    sched = _schedule(cfg)
    nm = train_noise_model(
        clip, sched, nmc["epochs"], nmc["lr"], make_rng(cfg.sub_seed(3)), draw_mode=nmc["draw_mode"],
        rebuild_each_epoch=not nmc["strict"], val_fraction=nmc["val_fraction"], shared=nmc["shared"],
        workers=args.workers or cfg["run"]["workers"], channels=nmc["channels"],
        kernel_size=nmc["kernel_size"], dilations=nmc["dilations"],
    )
    out = _out(args, cfg)
    weights.save(weights.noise_model_to_file(nm), out / "noise.ngw")
    with open(out / "noise_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "epoch", "loss", "val_nll_init", "val_nll_best"])
        for t in sorted(nm.train_loss, reverse=True):
            init, best = nm.val_nll[t]
            for e, v in enumerate(nm.train_loss[t]):
                w.writerow([t, e, repr(float(v)), repr(float(init)), repr(float(best))])
    log.info("noise model trained for %d steps", len(nm.train_loss))


def _load_models(args):
    bwf = weights.load(_require_file(args.backbone))
    nwf = weights.load(_require_file(args.noise_weights))
    if tuple(bwf.fingerprint) != tuple(nwf.fingerprint):
        raise UserError("schedule fingerprint mismatch between backbone and noise-model weights")
    sched = weights.schedule_from(bwf)
    return weights.backbone_from_file(bwf), weights.noise_model_from_file(nwf), sched


def _gsched(cfg, sched, lam=None, gamma=None):
    g = cfg["guidance"]
    return guidance_scale(sched, cfg.lambda_max() if lam is None else lam,
                          g["gamma"] if gamma is None else gamma,
                          inverted=g["ratio_inverted"], literal_sign=g["literal_sign"])


def _run_enhance(y, net, nm, sched, cfg, gs, seed):
    g = cfg["guidance"]
    return enhance(y, net, nm, sched, gs, make_rng(seed), final_noise=g["final_noise"], grad_clip=g["grad_clip"])


def cmd_enhance(args, cfg):
    y = _read16k(args.noisy)
    net, nm, sched = _load_models(args)
    x0, run = _run_enhance(y.samples, net, nm, sched, cfg, _gsched(cfg, sched), cfg.sub_seed(4))
    out = _out(args, cfg)
    write_wav(Wave(np.clip(x0, -1.0, 1.0), y.sample_rate), out / "enhanced.wav")
    run.write_csv(out / "enhance_diag.csv")
    if args.spectrograms:
        spectrogram_export(y, out / "spec_noisy")
        spectrogram_export(Wave(np.clip(x0, -1, 1)), out / "spec_enhanced")
    log.info("enhanced %s (%d clipping events)", args.noisy, sum(run.clipped))


def eval_rows(ref: Wave, est: Wave, noisy: Wave) -> list[dict]:
    n = min(len(ref), len(est), len(noisy))
    r, e, y = ref.samples[:n], est.samples[:n], noisy.samples[:n]
    rows = [
        {"method": "enhanced", "si_sdr": si_sdr(e, r), "lsd": log_spectral_distance(e, r)},
        {"method": "input", "si_sdr": si_sdr(y, r), "lsd": log_spectral_distance(y, r)},
    ]
    rows.append({"method": "delta", "si_sdr": rows[0]["si_sdr"] - rows[1]["si_sdr"],
                 "lsd": rows[0]["lsd"] - rows[1]["lsd"]})
    return rows


def format_table(rows) -> str:
    lines = [f"{'Method':<10} {'SI-SDR [dB]':>12} {'LSD [dB]':>10}", "-" * 34]
    for r in rows:
        if r["method"] == "delta":
            lines.append("-" * 34)
        lines.append(f"{r['method']:<10} {r['si_sdr']:>12.2f} {r['lsd']:>10.2f}")
    return "\n".join(lines)


def cmd_eval(args, cfg):
    rows = eval_rows(_read16k(args.ref), _read16k(args.est), _read16k(args.noisy))
    out = _out(args, cfg)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "si_sdr", "lsd"])
        w.writerows([r["method"], repr(r["si_sdr"]), repr(r["lsd"])] for r in rows)
    print(format_table(rows))


def cmd_sweep(args, cfg):
    clean, y = _read16k(args.clean), _read16k(args.noisy)
    net, nm, sched = _load_models(args)
    g = cfg["guidance"]
    out = _out(args, cfg)
    base = si_sdr(y.samples, clean.samples)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_max", "gamma", "si_sdr", "delta_si_sdr", "lsd"])
        for lam in g["lambda_grid"]:
            for gam in g["gamma_grid"]:
                x0, _ = _run_enhance(y.samples, net, nm, sched, cfg, _gsched(cfg, sched, lam, gam), cfg.sub_seed(4))
                score = si_sdr(x0, clean.samples)
                lsd = log_spectral_distance(x0, clean.samples)
                w.writerow([lam, gam, repr(score), repr(score - base), repr(lsd)])
                log.info("lambda=%.3f gamma=%.3f si_sdr=%.2f", lam, gam, score)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--workers", type=int, help="parallel workers (noise-model steps)")
    common.add_argument("--out", help="output directory (default run.out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="noiseguide", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus of WAVs")
    s.add_argument("--kind", choices=["harmonic", "am-noise", "silence-mixed"])
    s.add_argument("--dir", help="subdirectory of --out (default corpus)")
    s.add_argument("--count", type=int, help="override io.count")
    s.add_argument("--length", type=int, help="override io.length (samples)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mix", parents=[common], help="mix clean + noise at an SNR")
    s.add_argument("--clean", required=True)
    s.add_argument("--noise", required=True)
    s.add_argument("--snr", type=float, required=True)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("train-backbone", parents=[common], help="train the noise-prediction backbone")
    s.add_argument("--corpus", help="directory of clean WAVs (default <out>/corpus)")
    s.set_defaults(func=cmd_train_backbone)

    s = sub.add_parser("train-noise", parents=[common], help="train the per-step noise models")
    s.add_argument("--noise", required=True, help="noise-only WAV")
    s.set_defaults(func=cmd_train_noise)

    for name, func, help_ in (("enhance", cmd_enhance, "guided enhancement of a noisy WAV"),
                              ("sweep", cmd_sweep, "grid over lambda_max x gamma")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--noisy", required=True)
        s.add_argument("--backbone", required=True)
        s.add_argument("--noise-weights", required=True)
        if name == "sweep":
            s.add_argument("--clean", required=True)
        else:
            s.add_argument("--spectrograms", action="store_true", help="also export PGM/CSV spectrograms")
        s.set_defaults(func=func)

    s = sub.add_parser("eval", parents=[common], help="SI-SDR / LSD report")
    s.add_argument("--ref", required=True)
    s.add_argument("--est", required=True)
    s.add_argument("--noisy", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"run.seed": args.seed} if args.seed is not None else {}
        if args.workers is not None:
            overrides["run.workers"] = args.workers
        cfg = load_config(args.config, overrides)
        log.info("resolved config:\n%s", cfg.to_text())
        args.func(args, cfg)
    except (UserError, *USER_ERRORS) as exc:
        print(f"noiseguide {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"noiseguide {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
