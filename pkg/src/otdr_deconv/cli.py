"""Command-line entry point.

Subcommands: synth, datagen, train, infer, deconv (tv|inverse|nn), eval,
scenario. Every run merges defaults, an optional JSON config file, and
explicit flags (flags win), echoes the effective configuration as
config.json next to its outputs, and prints progress to stderr only.

Exit codes: 0 success, 1 bad usage or validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import datagen as dg
from . import evalharness as ev
from . import odnet as nn
from . import trace_model as tm
from . import tvd as tv


class CliError(Exception):
    """Validation or usage problem; maps to exit code 1."""


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


# defaults per subcommand; the config echo always carries every key
_DEFAULTS: dict[str, dict] = {
    "synth": {
        "scenario": "fig7",
        "seed": 0,
        "out_dir": "runs/synth",
    },
    "datagen": {
        "pairs": 512,
        "len": 2000,
        "split": "448/64",
        "noise": 1e-3,
        "pulse": None,
        "pulse_width_ns": 100.0,
        "pulse_rise": 0.0,
        "dt": 1e-8,
        "seed": 0,
        "out": "dataset.ods",
    },
    "train": {
        "data": None,
        "resblocks": 3,
        "channels": 32,
        "kernel": 9,
        "bn": False,
        "epochs": 50,
        "batch": 16,
        "lr": 3e-4,
        "crop": 2000,
        "seed": 0,
        "checkpoint_every": 0,
        "out": "model.odn",
        "log": None,
    },
    "infer": {"model": None, "input": None, "out": "estimate.csv", "dt": 1e-8},
    "deconv": {
        "mode": None,
        "input": None,
        "pulse": None,
        "pulse_width_ns": 100.0,
        "pulse_rise": 0.0,
        "dt": 1e-8,
        "lam": 2e-4,
        "pad": None,
        "boundary": "zero_padded",
        "rho": 2.0,
        "max_iters": 500,
        "tol": 1e-6,
        "norm_p": 2,
        "eps": 0.0,
        "model": None,
        "out": "estimate.csv",
        "report": None,
    },
    "eval": {
        "estimate": None,
        "label": None,
        "window": "300:800",
        "dt": 1e-8,
        "step_threshold": ev.DEFAULT_STEP_THRESHOLD,
        "spike_threshold": ev.DEFAULT_SPIKE_THRESHOLD,
        "report": "report.json",
    },
    "scenario": {
        "name": "fig7",
        "seed": 0,
        "model": None,
        "lam": 2e-4,
        "inverse_eps": None,
        "step_threshold": ev.DEFAULT_STEP_THRESHOLD,
        "spike_threshold": ev.DEFAULT_SPIKE_THRESHOLD,
        "out_dir": "runs/scenario",
    },
}


def _build_parser() -> _Parser:
    p = _Parser(prog="otdr-deconv", description=__doc__)
    p.add_argument("--version", action="version", version=f"otdr-deconv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--config", help="JSON config file; explicit flags override it")
        return sp

    sp = add("synth", help="synthesize a named scenario trace pair")
    sp.add_argument("--scenario", choices=ev.SCENARIO_NAMES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", dest="out_dir")

    sp = add("datagen", help="generate a training dataset file")
    sp.add_argument("--pairs", type=int)
    sp.add_argument("--len", type=int, dest="len")
    sp.add_argument("--split", help="train/val counts, e.g. 448/64")
    sp.add_argument("--noise", type=float)
    sp.add_argument("--pulse", help="pulse CSV file (peak-normalized on load)")
    sp.add_argument("--pulse-width", type=float, dest="pulse_width_ns",
                    help="rectangle pulse width in nanoseconds (when no --pulse file)")
    sp.add_argument("--pulse-rise", type=float, dest="pulse_rise")
    sp.add_argument("--dt", type=float, help="sampling interval in seconds")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = add("train", help="train the deconvolution network on a dataset")
    sp.add_argument("--data")
    sp.add_argument("--resblocks", type=int)
    sp.add_argument("--channels", type=int)
    sp.add_argument("--kernel", type=int)
    sp.add_argument("--bn", action=argparse.BooleanOptionalAction)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--crop", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    sp.add_argument("--out")
    sp.add_argument("--log", dest="log")

    sp = add("infer", help="run a trained model on a trace")
    sp.add_argument("--model")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--out")
    sp.add_argument("--dt", type=float)

    sp = add("deconv", help="deconvolve a trace (tv | inverse | nn)")
    sp.add_argument("mode", choices=("tv", "inverse", "nn"))
    sp.add_argument("--in", dest="input")
    sp.add_argument("--pulse")
    sp.add_argument("--pulse-width", type=float, dest="pulse_width_ns")
    sp.add_argument("--pulse-rise", type=float, dest="pulse_rise")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--lambda", type=float, dest="lam")
    sp.add_argument("--pad", type=int)
    sp.add_argument("--boundary", choices=tv.BOUNDARY_MODES)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--norm-p", type=int, dest="norm_p", choices=(1, 2))
    sp.add_argument("--eps", type=float)
    sp.add_argument("--model")
    sp.add_argument("--out")
    sp.add_argument("--report")

    sp = add("eval", help="score an estimate against a label trace")
    sp.add_argument("--estimate")
    sp.add_argument("--label")
    sp.add_argument("--window", help="inclusive index window start:end")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--step-threshold", type=float, dest="step_threshold")
    sp.add_argument("--spike-threshold", type=float, dest="spike_threshold")
    sp.add_argument("--report")

    sp = add("scenario", help="run methods side by side on a named scenario")
    sp.add_argument("name", choices=ev.SCENARIO_NAMES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--model")
    sp.add_argument("--lambda", type=float, dest="lam")
    sp.add_argument("--inverse-eps", type=float, dest="inverse_eps")
    sp.add_argument("--step-threshold", type=float, dest="step_threshold")
    sp.add_argument("--spike-threshold", type=float, dest="spike_threshold")
    sp.add_argument("--out-dir", dest="out_dir")
    return p


def _effective_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"bad JSON in {config_path}: {exc}") from exc
        params = loaded.get("params", loaded)
        unknown = set(params) - set(cfg)
        if unknown:
            raise CliError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(params)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _echo_config(command: str, cfg: dict, out_dir) -> None:
    os.makedirs(out_dir or ".", exist_ok=True)
    blob = {"tool": "otdr-deconv", "version": __version__, "command": command, "params": cfg}
    path = os.path.join(out_dir or ".", "config.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(blob, f, sort_keys=True, indent=2)
        f.write("\n")


def _load_pulse(cfg: dict) -> tm.PulseProfile:
    if cfg.get("pulse"):
        if not os.path.exists(cfg["pulse"]):
            raise CliError(f"pulse file not found: {cfg['pulse']}")
        return tm.read_pulse_csv(cfg["pulse"], dt=cfg["dt"])
    width = cfg["pulse_width_ns"] * 1e-9
    return tm.parametric_pulse(width, cfg["pulse_rise"], cfg["dt"])


def _require_file(cfg: dict, key: str) -> str:
    path = cfg.get(key)
    if not path:
        raise CliError(f"--{key.replace('_', '-')} is required")
    if not os.path.exists(path):
        raise CliError(f"file not found: {path}")
    return path


def _cmd_synth(cfg: dict) -> int:
    log(f"seed: {cfg['seed']}")
    truth, measured, _, _ = ev.build_scenario(cfg["scenario"], cfg["seed"])
    os.makedirs(cfg["out_dir"], exist_ok=True)
    tm.write_trace_csv(truth, os.path.join(cfg["out_dir"], "truth.csv"))
    tm.write_trace_csv(measured, os.path.join(cfg["out_dir"], "measured.csv"))
    _echo_config("synth", cfg, cfg["out_dir"])
    log(f"wrote truth.csv and measured.csv to {cfg['out_dir']}")
    return 0


def _cmd_datagen(cfg: dict) -> int:
    log(f"seed: {cfg['seed']}")
    try:
        train_n, val_n = (int(v) for v in str(cfg["split"]).split("/"))
    except ValueError as exc:
        raise CliError(f"bad --split {cfg['split']!r}; expected TRAIN/VAL") from exc
    pulse = _load_pulse(cfg)
    manifest = dg.DatasetManifest(
        n_pairs=cfg["pairs"],
        samples_per_curve=cfg["len"],
        split=(train_n, val_n),
        pulse_source=cfg["pulse"] or f"rect {cfg['pulse_width_ns']:g} ns",
        noise_sigma=cfg["noise"],
        generator_seed=cfg["seed"],
        dt=cfg["dt"],
    )
    dg.generate_dataset(manifest, pulse, cfg["out"])
    _echo_config("datagen", cfg, os.path.dirname(cfg["out"]))
    log(f"wrote {cfg['pairs']} pairs to {cfg['out']}")
    return 0


def _cmd_train(cfg: dict) -> int:
    log(f"seed: {cfg['seed']}")
    data_path = _require_file(cfg, "data")
    with dg.DatasetReader(data_path) as reader:
        train_pairs = reader.train_pairs()
        val_pairs = reader.val_pairs()
    arch = nn.NetArchitecture(
        n_resblocks=cfg["resblocks"],
        channels=cfg["channels"],
        kernel_size=cfg["kernel"],
        use_bn=cfg["bn"],
    )
    model = nn.ODNet(arch, seed=cfg["seed"])
    tcfg = nn.TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch"],
        learning_rate=cfg["lr"],
        crop_len=cfg["crop"],
        seed=cfg["seed"],
        checkpoint_every=cfg["checkpoint_every"],
        checkpoint_dir=os.path.dirname(cfg["out"]) or ".",
    )
    log(
        f"training {arch.n_resblocks} blocks x {arch.channels} ch, "
        f"{len(train_pairs)} train / {len(val_pairs)} val curves, {cfg['epochs']} epochs"
    )

    def show(e):
        log(
            f"epoch {e.epoch:4d}  loss {e.train_loss:.3e}  train {e.train_psnr:6.2f} dB"
            f"  val {e.val_psnr:6.2f} dB  ({e.seconds:.1f}s)"
        )

    best, tlog = nn.train(model, train_pairs, val_pairs, tcfg, on_epoch=show)
    state = nn.TrainState(epoch=cfg["epochs"], seed=cfg["seed"],
                          val_psnr=tlog.entries[-1].val_psnr if tlog.entries else float("nan"))
    nn.save_checkpoint(best, state, cfg["out"])
    if cfg["log"]:
        tlog.write_csv(cfg["log"])
    _echo_config("train", cfg, os.path.dirname(cfg["out"]))
    log(f"saved best model to {cfg['out']}")
    return 0


def _cmd_infer(cfg: dict) -> int:
    model, _ = nn.load_checkpoint(_require_file(cfg, "model"))
    trace = tm.read_trace_csv(_require_file(cfg, "input"), dt=cfg["dt"])
    est = trace.with_samples(model.infer(trace.samples).astype(np.float64))
    tm.write_trace_csv(est, cfg["out"])
    _echo_config("infer", cfg, os.path.dirname(cfg["out"]))
    log(f"wrote {len(est.samples)} samples to {cfg['out']}")
    return 0


def _cmd_deconv(cfg: dict) -> int:
    trace = tm.read_trace_csv(_require_file(cfg, "input"), dt=cfg["dt"])
    report: dict = {}
    if cfg["mode"] == "tv":
        pulse = _load_pulse(cfg)
        tv_cfg = tv.TvdConfig(
            lam=cfg["lam"],
            norm_p=cfg["norm_p"],
            max_iters=cfg["max_iters"],
            tol=cfg["tol"],
            rho=cfg["rho"],
            boundary=cfg["boundary"],
            pad_len=cfg["pad"],
        )
        result = tv.tv_deconvolve(trace, pulse, tv_cfg)
        est = result.estimate
        report = {
            "iterations_used": result.iterations_used,
            "converged": result.converged,
            "final_objective": float(result.objective_trace[-1]),
        }
    elif cfg["mode"] == "inverse":
        pulse = _load_pulse(cfg)
        est = tv.inverse_filter(trace, pulse, cfg["eps"])
    else:  # nn
        model, _ = nn.load_checkpoint(_require_file(cfg, "model"))
        est = trace.with_samples(model.infer(trace.samples).astype(np.float64))
    tm.write_trace_csv(est, cfg["out"])
    if cfg["report"]:
        report["config"] = cfg
        with open(cfg["report"], "w", encoding="utf-8") as f:
            json.dump(report, f, sort_keys=True, indent=2)
            f.write("\n")
    _echo_config("deconv", cfg, os.path.dirname(cfg["out"]))
    log(f"wrote {len(est.samples)} samples to {cfg['out']}")
    return 0


def _cmd_eval(cfg: dict) -> int:
    est = tm.read_trace_csv(_require_file(cfg, "estimate"), dt=cfg["dt"])
    label = tm.read_trace_csv(_require_file(cfg, "label"), dt=cfg["dt"])
    try:
        start, end = (int(v) for v in str(cfg["window"]).split(":"))
    except ValueError as exc:
        raise CliError(f"bad --window {cfg['window']!r}; expected START:END") from exc
    rep = ev.evaluate_method(
        "estimate", est, label, (start, end), cfg["step_threshold"], cfg["spike_threshold"]
    )
    blob = rep.to_dict()
    blob["config"] = cfg
    with open(cfg["report"], "w", encoding="utf-8") as f:
        json.dump(blob, f, sort_keys=True, indent=2)
        f.write("\n")
    _echo_config("eval", cfg, os.path.dirname(cfg["report"]))
    psnr_txt = "inf" if not math.isfinite(rep.psnr_db) else f"{rep.psnr_db:.2f}"
    log(f"psnr {psnr_txt} dB, residual std {rep.residual_std:.3e}, "
        f"{len(rep.detected_events)} events")
    return 0


def _cmd_scenario(cfg: dict) -> int:
    log(f"seed: {cfg['seed']}")
    methods = [ev.tvd_method(lam=cfg["lam"])]
    if cfg["model"]:
        model, _ = nn.load_checkpoint(_require_file(cfg, "model"))
        methods.append(ev.odnet_method(model))
    if cfg["inverse_eps"] is not None:
        methods.append(ev.inverse_method(eps=cfg["inverse_eps"]))
    report = ev.run_scenario(
        cfg["name"],
        methods,
        seed=cfg["seed"],
        out_dir=cfg["out_dir"],
        config_echo={"params": cfg},
        step_threshold=cfg["step_threshold"],
        spike_threshold=cfg["spike_threshold"],
    )
    _echo_config("scenario", cfg, cfg["out_dir"])
    for rep in report.reports:
        psnr_txt = "inf" if not math.isfinite(rep.psnr_db) else f"{rep.psnr_db:.2f}"
        log(
            f"{rep.method_label}: psnr {psnr_txt} dB, residual std "
            f"{rep.residual_std:.3e}, {len(rep.detected_events)} events"
        )
    log(f"wrote report.json and curves.csv to {cfg['out_dir']}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "deconv": _cmd_deconv,
    "eval": _cmd_eval,
    "scenario": _cmd_scenario,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        command = args.command
        cfg = _effective_config(command, args)
        if command == "deconv" and args.mode is not None:
            cfg["mode"] = args.mode
        if command == "scenario":
            cfg["name"] = args.name
        return _HANDLERS[command](cfg)
    except (CliError, ValueError) as exc:
        log(f"error: {exc}")
        return 1
    except OSError as exc:
        log(f"runtime error: {exc}")
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
