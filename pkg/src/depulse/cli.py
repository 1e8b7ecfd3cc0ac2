"""Command-line entry point: ``depulse detect|restore|synth|chain-stats``.

Exit codes: 0 success, 1 usage or spec error, 2 no pulse evidence,
3 numeric failure. Sample indices on the command-line surface (printed
detections, reports, injection specs) are 1-based; the library is 0-based.
Chain dumps keep the sampler's 0-based positions within the excerpt.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .detector import DetectorConfig, detect_pulses, detections_from_trace, detector_trace
from .errors import ConfigError, DepulseError, NoPulseEvidenceError, NumericError, SpecError
from .pipeline import (
    RestoreConfig,
    inject_pulse,
    read_spec_csv,
    restore_signal,
    snr_db,
    write_spec_csv,
)
from .sampler import MH_FIELDS, SamplerConfig, read_chain_csv, summarize, write_chain_csv
from .signal_io import read_wav, write_csv, write_wav

log = logging.getLogger("depulse")

EXIT_OK, EXIT_USAGE, EXIT_NO_PULSE, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_KEYS = {
    "detector": {"L": int, "xi": float, "c": int, "f_co_hz": float},
    "sampler": {
        "iterations": int, "burn_in": int, "thin": int, "loc_proposal_width": int,
        "shape_proposal_vars": lambda s: tuple(float(v) for v in s.split(",")),
        "sequential_shape": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    },
    "restore": {
        "model": str, "excerpt_len": int, "pre_context": int, "ar_order": int,
        "ar_fit_len": int, "fade_len": int, "seed": int, "workers": int, "gp_fit_points": int,
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config(path) -> dict:
    """Parse an INI file into ``{section: {key: value}}``; unknown sections or keys are errors."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        out[section] = {}
        for key, raw in cp.items(section):
            conv = CONFIG_KEYS[section].get(key)
            if conv is None:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            try:
                out[section][key] = conv(raw)
            except ValueError:
                raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from None
    return out


def _merge(file_cfg: dict, flags: dict) -> dict:
    merged = {s: dict(file_cfg.get(s, {})) for s in CONFIG_KEYS}
    for (section, key), value in flags.items():
        if value is not None:
            merged[section][key] = value
    return merged


def build_configs(args):
    file_cfg = read_config(args.config) if getattr(args, "config", None) else {}
    flags = {
        ("detector", "L"): getattr(args, "L", None),
        ("detector", "xi"): getattr(args, "xi", None),
        ("detector", "c"): getattr(args, "c", None),
        ("detector", "f_co_hz"): getattr(args, "fco", None),
        ("sampler", "iterations"): getattr(args, "iters", None),
        ("sampler", "burn_in"): getattr(args, "burnin", None),
        ("sampler", "thin"): getattr(args, "thin", None),
        ("restore", "model"): getattr(args, "model", None),
        ("restore", "fade_len"): getattr(args, "fade", None),
        ("restore", "seed"): getattr(args, "seed", None),
    }
    cfg = _merge(file_cfg, flags)
    det = DetectorConfig(**cfg["detector"])
    rest = dict(cfg["restore"])
    kind = rest.pop("model", "gp")
    if kind not in ("gp", "shape"):
        raise ConfigError(f"model must be 'gp' or 'shape', got {kind!r}")
    base = SamplerConfig.gp_protocol() if kind == "gp" else SamplerConfig.shape_protocol()
    sampler = replace(base, **cfg["sampler"])
    restore = RestoreConfig(kind=kind, sampler=sampler, **rest)
    restore.validate()
    return det, restore


def _comment(seed) -> str:
    return f"depulse {__version__} seed={seed}"


def _log_config(**parts):
    for name, value in parts.items():
        log.info("%s: %s", name, asdict(value) if hasattr(value, "__dataclass_fields__") else value)


def _add_detector_flags(p):
    p.add_argument("--L", type=int, help="detector block length")
    p.add_argument("--xi", type=float, help="detection threshold on the normalized excess")
    p.add_argument("--c", type=int, help="median filter window (blocks)")
    p.add_argument("--fco", type=float, help="cut-off frequency in Hz")


def cmd_detect(args) -> int:
    det, _ = build_configs(args)
    det.validate()
    _log_config(detector=det)
    sig = read_wav(args.input)
    trace = detector_trace(sig, det)
    dets = detections_from_trace(trace, det)
    if args.dump_mu:
        rows = [[b, b * trace.hop + 1, trace.mu[b], trace.mu_median[b], trace.delta_mu[b]]
                for b in range(trace.mu.size)]
        write_csv(args.dump_mu, ["block", "start", "mu", "mu_median", "delta_mu"], rows, _comment("none"))
    print("n0,M,score")
    for d in dets:
        print(f"{d.n0 + 1},{d.M},{d.score:.4f}")
    return EXIT_OK


def _indexed(path: Path, k: int, n: int) -> Path:
    return path if n == 1 else path.with_name(f"{path.stem}.{k}{path.suffix}")


def cmd_restore(args) -> int:
    det, cfg = build_configs(args)
    _log_config(detector=det, restore=cfg, seed=cfg.seed)
    sig = read_wav(args.input)
    detections = detect_pulses(sig, det)
    restored, report = restore_signal(sig, detections, cfg)
    write_wav(args.output, restored)

    ref = read_wav(args.reference) if args.reference else None
    if ref is not None:
        report.snr_before = snr_db(ref, sig)
        report.snr_after = snr_db(ref, restored)

    header = ["pulse", "detected_n0", "detected_M", "n0", "M", "sigma_d2", "sigma_d2_lo", "sigma_d2_hi",
              "loc_accept", "loc_accept_post", "seconds", "error"]
    rows = []
    for k, p in enumerate(report.pulses):
        e = p.estimate
        if e is None:
            rows.append([k, p.detection.n0 + 1, p.detection.M, "", "", "", "", "", "", "", p.seconds, p.error])
            print(f"pulse {k}: FAILED ({p.error})")
            continue
        s = e.params["sigma_d2"]
        rows.append([k, p.detection.n0 + 1, p.detection.M, p.n0_abs + 1, e.M, s.mean, s.lo, s.hi,
                     p.acceptance["location"], p.acceptance_post_burn["location"], p.seconds, ""])
        print(f"pulse {k}: n0={p.n0_abs + 1} M={e.M} sigma_d2={s}  ({p.seconds:.1f} s)")
    if ref is not None:
        header += ["snr_before_db", "snr_after_db"]
        rows = [r + [report.snr_before, report.snr_after] for r in rows]
        print(f"SNR {report.snr_before:.2f} dB -> {report.snr_after:.2f} dB")
    report_path = Path(args.report) if args.report else Path(args.output).with_suffix(".report.csv")
    write_csv(report_path, header, rows, _comment(cfg.seed))

    if args.dump_chain:
        ok = [p for p in report.pulses if p.chain is not None]
        for k, p in enumerate(ok):
            write_chain_csv(_indexed(Path(args.dump_chain), k, len(ok)), p.chain, _comment(cfg.seed))

    if report.failures:
        for p in report.failures:
            log.warning("pulse at %d not restored: %s", p.detection.n0 + 1, p.error)
        if args.strict:
            return EXIT_NUMERIC
    return EXIT_OK


def _shift_spec(spec, k: int):
    pulses = [replace(p, n0=p.n0 + k) for p in spec.pulses]
    if any(p.n0 < 0 for p in pulses):
        raise SpecError("spec sample indices are 1-based and must be at least 1")
    return replace(spec, pulses=pulses)


def cmd_synth(args) -> int:
    clean = read_wav(args.clean)
    spec = _shift_spec(read_spec_csv(args.spec, seed=args.seed if args.seed is not None else 0), -1)
    _log_config(pulses=len(spec.pulses), seed=spec.seed)
    degraded = inject_pulse(clean, spec)
    write_wav(args.output, degraded)
    truth = Path(args.truth) if args.truth else Path(args.output).with_suffix(".truth.csv")
    write_spec_csv(truth, _shift_spec(spec, 1), _comment(spec.seed))
    print(f"injected {len(spec.pulses)} pulse(s); ground truth in {truth}")
    return EXIT_OK


def cmd_chain_stats(args) -> int:
    comments, cols = read_chain_csv(args.chain)
    n = cols["iteration"].size
    burn = args.burnin if args.burnin is not None else 0
    if not 0 <= burn < n:
        raise ConfigError(f"burn-in {burn} leaves no samples out of {n}")
    idx = np.arange(burn, n, args.thin)
    loc_rate = float(np.mean(cols["loc_accept"][idx]))
    tail_rate = float(np.mean(cols["tail_accept"][idx]))
    params = [c for c in cols if c not in ("iteration", "loc_accept", "tail_accept")]
    print(f"{'parameter':<10} {'mean':>12}  {'95% interval':<28} acceptance")
    for name in params:
        s = summarize(cols[name][idx])
        if name in ("n0", "M"):
            rate = f"{loc_rate:.4f}"
        elif name in MH_FIELDS:
            rate = f"{tail_rate:.4f}"
        else:
            rate = "--"
        print(f"{name:<10} {s.mean:>12.6g}  {f'[{s.lo:.6g}; {s.hi:.6g}]':<28} {rate}")
    if args.out:
        rows = [[int(cols["iteration"][i])] + [cols[p][i] for p in params] for i in idx]
        write_csv(args.out, ["iteration"] + params, rows, comments[0] if comments else None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="depulse", description="Remove long pulses from mono audio recordings.")
    p.add_argument("--version", action="version", version=f"depulse {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log the effective configuration")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="locate pulse onsets")
    d.add_argument("input")
    d.add_argument("--config")
    d.add_argument("--dump-mu", metavar="CSV", help="write the per-block detector trace")
    _add_detector_flags(d)
    d.set_defaults(func=cmd_detect)

    r = sub.add_parser("restore", help="detect and remove pulses")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--config")
    r.add_argument("--model", choices=("shape", "gp"))
    r.add_argument("--seed", type=int)
    r.add_argument("--reference", metavar="CLEAN.wav", help="clean signal for SNR columns")
    r.add_argument("--report", metavar="CSV")
    r.add_argument("--dump-chain", metavar="CSV")
    r.add_argument("--strict", action="store_true", help="exit 3 if any pulse fails")
    _add_detector_flags(r)
    r.add_argument("--iters", type=int)
    r.add_argument("--burnin", type=int)
    r.add_argument("--thin", type=int)
    r.add_argument("--fade", type=int, help="fade-out length in samples")
    r.set_defaults(func=cmd_restore)

    s = sub.add_parser("synth", help="inject pulses into a clean recording")
    s.add_argument("clean")
    s.add_argument("spec", help="CSV with columns n0,M,sigma_d2,V_t,tau_m,tau_f,f_max,f_min,phi,tail_len (n0 1-based)")
    s.add_argument("output")
    s.add_argument("--truth", metavar="CSV")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("chain-stats", help="summarize a chain dump")
    c.add_argument("chain")
    c.add_argument("--burnin", type=int)
    c.add_argument("--thin", type=int, default=1)
    c.add_argument("--out", metavar="CSV", help="write the retained samples for plotting")
    c.set_defaults(func=cmd_chain_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"depulse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="depulse: %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "thin", 1) is not None and getattr(args, "thin", 1) < 1:
            raise ConfigError("thin must be at least 1")
        return args.func(args)
    except NoPulseEvidenceError as exc:
        print(f"depulse: {exc}", file=sys.stderr)
        return EXIT_NO_PULSE
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"depulse: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DepulseError, OSError, ValueError) as exc:
        print(f"depulse: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
