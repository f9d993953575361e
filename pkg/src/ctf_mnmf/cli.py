"""Command-line entry point: ``separate``, ``simulate`` and ``bench``.

Settings come from a flat ``key = value`` file (``--config``) overridden by
command-line flags.  Besides the model keys of :class:`CtfConfig` a file may
set ``window``, ``hop``, ``frames``, ``decay``, ``sample_rate``,
``ref_channel``, ``channels`` and ``trials``.

Exit codes: 0 success, 2 invalid configuration or input shape, 3 I/O
failure, 4 numerical degeneracy.  Every invocation writes ``manifest.json``
into the output directory when that directory can be created.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BENCH_COLUMNS, benchmark_rules
from .estimator import DegeneracyError, run
from .model import ConfigError, CtfConfig, read_config_file
from .stft import (
    Spectrogram,
    forward_stft,
    inverse_stft,
    load_spectrogram,
    read_wav,
    save_spectrogram,
    write_wav,
)
from .synth import ConditioningError, simulate_ctf
from .wiener import images_to_signals, reconstruct_images

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4

EXTRA_DEFAULTS = {
    "window": 1024,
    "hop": 256,
    "frames": 100,
    "decay": 0.5,
    "sample_rate": 16000.0,
    "ref_channel": None,
    "channels": "4,6,8",
    "trials": 1,
}


class _Failure(Exception):
    def __init__(self, code: int, message: str, context: dict | None = None):
        super().__init__(message)
        self.code = code
        self.context = context or {"message": message}


def _settings(args) -> tuple[CtfConfig, dict]:
    """Resolve defaults < config file < flags into a model config and extras."""
    values: dict = {}
    if args.config:
        try:
            values = read_config_file(args.config)
        except OSError as exc:
            raise _Failure(EXIT_IO, f"cannot read config {args.config}: {exc}") from exc
    overrides = {"seed": args.seed, "rule": args.rule, "iters": args.iters}
    overrides.update({k: v for k, v in vars(args).items() if k in EXTRA_DEFAULTS})
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = CtfConfig.from_mapping(values)

    extras = dict(EXTRA_DEFAULTS)
    extras.update({k: v for k, v in values.items() if k in EXTRA_DEFAULTS})
    try:
        for key in ("window", "hop", "frames", "trials"):
            extras[key] = int(extras[key])
        extras["decay"] = float(extras["decay"])
        extras["sample_rate"] = float(extras["sample_rate"])
        if extras["ref_channel"] is not None:
            extras["ref_channel"] = int(extras["ref_channel"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if extras["frames"] < 1 or extras["trials"] < 1:
        raise ConfigError("frames and trials must be positive")
    return config, extras


def _load_mixture(path: Path, extras: dict) -> Spectrogram:
    try:
        with open(path, "rb") as f:
            magic = f.read(4)
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot read mixture {path}: {exc}") from exc
    try:
        if magic == b"CTFS":
            return load_spectrogram(path)
        signal = read_wav(path)
    except (OSError, ValueError) as exc:
        raise _Failure(EXIT_IO, f"cannot decode mixture {path}: {exc}") from exc
    try:
        return forward_stft(signal, extras["window"], extras["hop"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_separate(args, config: CtfConfig, extras: dict, out: Path, manifest: dict) -> None:
    mixture_path = Path(args.mixture)
    manifest["inputs"] = {"mixture": str(mixture_path)}
    spec = _load_mixture(mixture_path, extras)
    if spec.n_channels != config.n_channels:
        raise ConfigError(
            f"mixture has {spec.n_channels} channel(s) but the config expects "
            f"n_channels={config.n_channels}"
        )
    ref = extras["ref_channel"]
    if ref is not None and not 0 <= ref < config.n_channels:
        raise ConfigError(f"ref_channel {ref} out of range for {config.n_channels} channels")

    t0 = time.perf_counter()
    W, factors, trace = run(config, spec.bins, threads=args.threads)
    images = reconstruct_images(W, factors, spec.bins, config.taps)
    signals = images_to_signals(
        images, spec.window_len, spec.hop, spec.sample_rate, spec.length, ref
    )
    elapsed = time.perf_counter() - t0

    outputs = {}
    for n, signal in enumerate(signals, start=1):
        name = f"src{n}.wav"
        write_wav(out / name, signal)
        outputs[f"source_{n}"] = name
    trace.to_csv(out / "trace.csv")
    outputs["trace"] = "trace.csv"
    manifest["outputs"] = outputs
    manifest["timing"] = {
        "total_s": elapsed,
        "demix_s": float(sum(trace.t_demix)),
        "mu_s": float(sum(trace.t_mu)),
        "rescale_s": float(sum(trace.t_rescale)),
    }
    manifest["result"] = {
        "initial_objective": trace.initial_objective,
        "final_objective": trace.objective[-1] if trace.objective else trace.initial_objective,
    }


def cmd_simulate(args, config: CtfConfig, extras: dict, out: Path, manifest: dict) -> None:
    window, hop = extras["window"], extras["hop"]
    if window < 2 or window & (window - 1) or hop <= 0 or window % hop:
        raise ConfigError(f"window ({window}) must be a power of two divisible by hop ({hop})")
    n_freq = window // 2 + 1
    try:
        truth = simulate_ctf(
            n_freq, extras["frames"], config.taps, config.bases, extras["decay"], config.seed
        )
    except ConditioningError as exc:
        raise _Failure(
            EXIT_DEGENERATE,
            f"filter resampling exhausted: {exc}",
            {"kind": "conditioning", "message": f"filter resampling exhausted: {exc}",
             "decay": extras["decay"]},
        ) from exc
    files = truth.save(out)
    length = hop * (extras["frames"] - 1)
    rate = extras["sample_rate"]
    save_spectrogram(out / "mixture.spec", Spectrogram(truth.mixture, window, hop, rate, length))
    files["files"]["mixture_spectrogram"] = "mixture.spec"
    write_wav(out / "mixture.wav", inverse_stft(Spectrogram(truth.mixture, window, hop, rate, length)))
    files["files"]["mixture_wav"] = "mixture.wav"
    for n, image in enumerate(truth.images, start=1):
        name = f"image{n}.wav"
        write_wav(out / name, inverse_stft(Spectrogram(image, window, hop, rate, length)))
        files["files"][f"image_wav_{n}"] = name
    manifest["outputs"] = files["files"]
    manifest["taps"] = list(truth.taps)


def _channel_list(text) -> list[int]:
    try:
        channels = [int(c) for c in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"invalid channel list {text!r}") from exc
    if not channels:
        raise ConfigError("empty channel list")
    return channels


def cmd_bench(args, config: CtfConfig, extras: dict, out: Path, manifest: dict) -> None:
    channels = _channel_list(extras["channels"])
    N = config.n_sources
    for M in channels:
        if M < N or M % N:
            raise ConfigError(
                f"cannot split {M} channels evenly over {N} sources "
                "(sum of taps must equal the channel count)"
            )
    window = extras["window"]
    if window < 2 or window & (window - 1):
        raise ConfigError(f"window must be a power of two, got {window}")
    rows = benchmark_rules(
        channels,
        n_sources=N,
        n_freq=window // 2 + 1,
        n_frames=extras["frames"],
        iterations=config.iterations,
        trials=extras["trials"],
        seed=config.seed,
        n_bases=config.bases[0],
        threads=args.threads,
    )
    with open(out / "bench.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.3f}" if k.endswith("_ms") else v) for k, v in row.items()})
    manifest["outputs"] = {"bench": "bench.csv"}
    manifest["channels"] = channels


COMMANDS = {"separate": cmd_separate, "simulate": cmd_simulate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key = value settings file")
    shared.add_argument("--seed", type=int, help="random seed (initialisation / simulation)")
    shared.add_argument("--rule", choices=["ip", "iss"], help="demixing update rule")
    shared.add_argument("--iters", type=int, help="number of iterations")
    shared.add_argument("--threads", type=int, default=1, help="worker threads over frequency")
    shared.add_argument("--out", default=".", help="output directory")

    parser = argparse.ArgumentParser(prog="ctf-mnmf", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sep = sub.add_parser("separate", parents=[shared], help="separate a multichannel mixture")
    sep.add_argument("mixture", help="multichannel WAV or spectrogram container")
    sep.add_argument("--ref-channel", dest="ref_channel", type=int,
                     help="write only this channel of every source image")

    sim = sub.add_parser("simulate", parents=[shared], help="write a synthetic ground-truth bundle")
    sim.add_argument("--decay", type=float, help="per-tap amplitude decay of the CTF filters")
    sim.add_argument("--frames", type=int, help="number of STFT frames")

    bench = sub.add_parser("bench", parents=[shared], help="time IP against ISS")
    bench.add_argument("--channels", help="comma-separated channel counts, e.g. 4,6,8")
    bench.add_argument("--trials", type=int, help="instances per channel count")
    bench.add_argument("--frames", type=int, help="number of STFT frames")
    return parser


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    manifest: dict = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "version": __version__,
        "errors": [],
    }
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise _Failure(EXIT_IO, f"cannot create output directory {out}: {exc}") from exc
        config, extras = _settings(args)
        manifest["config"] = {**config.to_mapping(), **extras}
        manifest["config_text"] = config.to_text()
        manifest["seed"] = config.seed
        COMMANDS[args.command](args, config, extras, out, manifest)
    except ConfigError as exc:
        code = EXIT_CONFIG
        manifest["errors"].append({"kind": "config", "message": str(exc)})
    except DegeneracyError as exc:
        code = EXIT_DEGENERATE
        manifest["errors"].append(exc.context())
    except _Failure as exc:
        code = exc.code
        manifest["errors"].append(exc.context)
    except OSError as exc:
        code = EXIT_IO
        manifest["errors"].append({"kind": "io", "message": str(exc)})

    manifest["exit_code"] = code
    manifest["wall_time_s"] = time.perf_counter() - t0
    for err in manifest["errors"]:
        print(f"error: {err['message']}", file=sys.stderr)
    if code == EXIT_DEGENERATE:
        print(json.dumps(manifest["errors"][-1], default=_jsonable), file=sys.stderr)
    if out.is_dir():
        try:
            _write_json(out / "manifest.json", manifest)
        except OSError:
            if code == EXIT_OK:
                code = EXIT_IO
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
