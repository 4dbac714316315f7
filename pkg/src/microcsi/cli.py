"""Command-line entry point: ``microcsi <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 evaluation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import io
from .evaluation import (
    EvalConfig,
    Scenario,
    SweepConfig,
    ablation_sweep,
    enroll,
    group_by_device,
    micro_csi_stream,
    round_robin_eval,
    simulate_scenario,
    sweep_table,
)
from .exceptions import MicroCsiError
from .extract import DEFAULT_EPS_FADE, MicroCsi, micro_csi_array
from .fingerprint import DEFAULT_OMEGA1, DEFAULT_OMEGA2, fingerprints_from_stream
from .matcher import METRICS, KnnAuthenticator, authenticate
from .ofdm import DEFAULT_NP, projector_for

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EVAL = 0, 1, 2, 3

log = logging.getLogger("microcsi")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path) -> dict:
    """Read a JSON or YAML mapping; ``None`` gives an empty one."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_USAGE) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(f"config {path} must hold a mapping", EXIT_USAGE)
    return data


def _data(fn, *args, **kwargs):
    """Run a loading step, turning bad input into exit code 2."""
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError, KeyError, MicroCsiError) as exc:
        raise CliError(str(exc), EXIT_DATA) from None


def _pick(value, default):
    return default if value is None else value


def _write_json(path, obj):
    io.ensure_parent(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _scenario(args, cfg) -> Scenario:
    try:
        sc = Scenario.from_dict(cfg.get("scenario", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad scenario config: {exc}", EXIT_USAGE) from None
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    for attr in ("n_devices", "n_packets"):
        if getattr(args, attr, None) is not None:
            sc = replace(sc, **{attr: getattr(args, attr)})
    return sc


def _eval_config(args, cfg) -> EvalConfig:
    try:
        ec = EvalConfig.from_dict(cfg.get("evaluation", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad evaluation config: {exc}", EXIT_USAGE) from None
    over = {}
    if args.n_csi is not None:
        over["n_csi_values"] = tuple(args.n_csi)
    if args.metric is not None:
        over["metrics"] = tuple(args.metric)
    if args.far_target is not None:
        over["far_targets"] = tuple(args.far_target)
    for attr in ("np", "omega1", "omega2"):
        if getattr(args, attr) is not None:
            over["n_p" if attr == "np" else attr] = getattr(args, attr)
    if args.seed is not None:
        over["random_state"] = args.seed
    return replace(ec, **over)


def _datasets(args, cfg):
    if args.enroll and args.test:
        return _data(io.read_csi_dataset, args.enroll), _data(io.read_csi_dataset, args.test)
    if args.enroll or args.test:
        raise CliError("--enroll and --test must be given together", EXIT_USAGE)
    return simulate_scenario(_scenario(args, cfg))


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    sc = _scenario(args, load_config(args.config))
    enroll_ds, test_ds = simulate_scenario(sc)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    io.write_csi_dataset(out / "enroll.jsonl", enroll_ds)
    io.write_csi_dataset(out / "test.jsonl", test_ds)
    print(f"wrote {len(enroll_ds)} enrollment and {len(test_ds)} test measurements to {out}")


def cmd_extract(args):
    ms = _data(io.read_csi_dataset, args.input)
    n_p = _pick(args.np, DEFAULT_NP)
    records = []
    if ms:
        by_rx = {}
        for i, m in enumerate(ms):
            by_rx.setdefault(m.n_rx, []).append(i)
        proj = _data(projector_for, n_p)[1]
        for idx in by_rx.values():
            chains = np.stack([ms[i].chains for i in idx])
            micro, faded = micro_csi_array(chains, eps_fade=DEFAULT_EPS_FADE, projector=proj)
            for j, i in enumerate(idx):
                for r in range(micro.shape[1]):
                    if faded[j, r]:
                        log.warning("%s packet %d chain %d: deep fade, skipped",
                                    ms[i].device_id, ms[i].packet_index, r)
                        continue
                    records.append((i, r, MicroCsi(micro[j, r], ms[i].device_id, ms[i].packet_index, r)))
    records.sort(key=lambda t: t[:2])
    out = args.out or "micro_csi.jsonl"
    io.write_micro_csi(io.ensure_parent(out), [r for _, _, r in records])
    print(f"wrote {len(records)} micro-CSI vectors to {out}")


def _fp_kwargs(args):
    return dict(omega1=_pick(args.omega1, DEFAULT_OMEGA1), omega2=_pick(args.omega2, DEFAULT_OMEGA2),
                outlier_elimination=not args.no_outlier_elimination, normalize=not args.no_normalize)


def _device_fingerprints(ms, dev, n_csi, args):
    micro, valid = _data(micro_csi_stream, ms, _pick(args.np, DEFAULT_NP))
    return _data(fingerprints_from_stream, micro, n_csi, valid, device_claim=dev, **_fp_kwargs(args))


def cmd_fingerprint(args):
    ms = _data(io.read_csi_dataset, args.input)
    n_csi = _pick(args.n_csi, [20])[0]
    groups = group_by_device(ms)
    if args.device:
        if args.device not in groups:
            raise CliError(f"no measurements for device {args.device!r}", EXIT_DATA)
        groups = {args.device: groups[args.device]}
    fps = []
    for dev, dev_ms in groups.items():
        fps.extend(_device_fingerprints(dev_ms, dev, n_csi, args))
    out = args.out or "fingerprints.jsonl"
    io.write_fingerprints(io.ensure_parent(out), fps)
    print(f"wrote {len(fps)} fingerprints (N_csi={n_csi}) to {out}")


def cmd_enroll(args):
    ms = _data(io.read_csi_dataset, args.input)
    groups = group_by_device(ms)
    identity = args.identity
    if identity is None:
        if len(groups) != 1:
            raise CliError("dataset holds several devices; pass --identity", EXIT_USAGE)
        identity = next(iter(groups))
    if identity not in groups:
        raise CliError(f"no measurements for device {identity!r}", EXIT_DATA)
    n_csi = _pick(args.n_csi, [20])[0]
    metric = _pick(args.metric, ["manhattan"])[0]
    target = _pick(args.far_target, [0.0])[0]
    params = EvalConfig(n_p=_pick(args.np, DEFAULT_NP), k=args.k, **_fp_kwargs(args))
    lib = _data(enroll, groups[identity], identity, n_csi, params)
    auth = KnnAuthenticator(metric=metric, k=args.k, target_far=target, identity=identity)
    auth.fit(lib.fingerprints)
    lib.metadata.update({"far_target": target, **_fp_kwargs(args)})
    out = args.out or f"{identity}.library.jsonl"
    io.write_library(io.ensure_parent(out), lib, threshold=auth.threshold_, metric=metric)
    print(f"enrolled {identity}: S={lib.size} k={lib.k} threshold={auth.threshold_:.6g} -> {out}")


def cmd_auth(args):
    lib, threshold, metric = _data(io.read_library, args.library)
    metric = _pick(args.metric, [metric or "manhattan"])[0]
    if args.threshold is not None:
        threshold = args.threshold
    if threshold is None:
        raise CliError("library stores no threshold; pass --threshold", EXIT_USAGE)
    n_csi = _pick(args.n_csi, [lib.metadata.get("n_csi", 20)])[0]
    if args.np is None and "n_p" in lib.metadata:
        args.np = lib.metadata["n_p"]
    ms = _data(io.read_csi_dataset, args.input)
    results = []
    for dev, dev_ms in group_by_device(ms).items():
        for i, fp in enumerate(_device_fingerprints(dev_ms, dev, n_csi, args)):
            d = authenticate(fp, lib, threshold, metric)
            results.append({"source": dev, "group": i, "claim": lib.identity, "distance": d.distance,
                            "threshold": d.threshold, "accept": d.accept, "metric": metric})
    for r in results:
        print(f"{r['source']:<12} #{r['group']:<4} d={r['distance']:.6g} "
              f"{'ACCEPT' if r['accept'] else 'REJECT'}")
    if args.out:
        _write_json(args.out, results)


def _run_eval(fn, *a):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fn(*a)
    except (ValueError, MicroCsiError) as exc:
        raise CliError(f"evaluation failed: {exc}", EXIT_EVAL) from None


def cmd_evaluate(args):
    cfg = load_config(args.config)
    ec = _eval_config(args, cfg)
    enroll_ds, test_ds = _datasets(args, cfg)
    report = _run_eval(round_robin_eval, enroll_ds, test_ds, ec)
    print(report.to_table())
    if args.out:
        _write_json(args.out, report.to_records())


def cmd_sweep(args):
    cfg = load_config(args.config)
    base = _eval_config(args, cfg)
    try:
        sc = SweepConfig.from_dict(cfg.get("sweep", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad sweep config: {exc}", EXIT_USAGE) from None
    over = {"base": base}
    if args.n_csi is not None:
        over["n_csi_values"] = base.n_csi_values
    if args.metric is not None:
        over["metrics"] = base.metrics
    if args.far_target is not None:
        over["far_targets"] = base.far_targets
    if args.np is not None:
        over["n_p_values"] = (base.n_p,)
    sc = replace(sc, **over)
    enroll_ds, test_ds = _datasets(args, cfg)
    rows = sweep_table(_run_eval(ablation_sweep, enroll_ds, test_ds, sc))
    cols = ["n_p", "normalize", "outlier_elimination", "n_csi", "metric", "far_target", "adr", "far"]
    print(" ".join(f"{c:>10}" for c in cols))
    for r in rows:
        print(" ".join(f"{r[c]:>10.4f}" if isinstance(r[c], float) else f"{str(r[c]):>10}" for c in cols))
    if args.out:
        _write_json(args.out, rows)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    g = shared.add_argument_group("shared options")
    g.add_argument("--n-csi", type=int, nargs="+", help="CSI measurements per fingerprint (default 20; "
                   "evaluate/sweep accept several)")
    g.add_argument("--np", type=int, help=f"leaked tap half-width N_p (default {DEFAULT_NP})")
    g.add_argument("--omega1", type=float, help=f"gradient-variance threshold (default {DEFAULT_OMEGA1})")
    g.add_argument("--omega2", type=float, help=f"Z-score threshold (default {DEFAULT_OMEGA2})")
    g.add_argument("--metric", nargs="+", choices=METRICS, help="distance metric (default manhattan)")
    g.add_argument("--far-target", type=float, nargs="+", help="target false-alarm rate (default 0)")
    g.add_argument("--seed", type=int, help="random seed")
    g.add_argument("--out", help="output file (directory for simulate)")
    g.add_argument("--no-normalize", action="store_true", help="skip fingerprint normalization")
    g.add_argument("--no-outlier-elimination", action="store_true", help="skip both anomaly filters")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="microcsi", description="Device authentication from micro-scale CSI distortions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[shared], help="synthesize enrollment and test collections")
    s.add_argument("--config", help="JSON/YAML file with a 'scenario' mapping")
    s.add_argument("--n-devices", type=int)
    s.add_argument("--n-packets", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", parents=[shared], help="micro-CSI vectors from a CSI dataset")
    s.add_argument("input")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("fingerprint", parents=[shared], help="fingerprints from a CSI dataset")
    s.add_argument("input")
    s.add_argument("--device", help="only this device")
    s.set_defaults(func=cmd_fingerprint)

    s = sub.add_parser("enroll", parents=[shared], help="build a calibrated fingerprint library")
    s.add_argument("input")
    s.add_argument("--identity")
    s.add_argument("--k", type=int, help="neighbours to average (default round(sqrt(S)))")
    s.set_defaults(func=cmd_enroll)

    s = sub.add_parser("auth", parents=[shared], help="authenticate a CSI dataset against a library")
    s.add_argument("input")
    s.add_argument("--library", required=True)
    s.add_argument("--threshold", type=float, help="override the stored threshold")
    s.set_defaults(func=cmd_auth)

    for name, func, helptext in (("evaluate", cmd_evaluate, "round-robin ADR/FAR evaluation"),
                                 ("sweep", cmd_sweep, "ablation sweep over N_p, FN, OE, metric, N_csi")):
        s = sub.add_parser(name, parents=[shared], help=helptext)
        s.add_argument("--config", help="JSON/YAML file with 'scenario', 'evaluation' and 'sweep' mappings")
        s.add_argument("--enroll", help="enrollment CSI dataset (simulated from the config if omitted)")
        s.add_argument("--test", help="test CSI dataset")
        s.add_argument("--n-devices", type=int)
        s.add_argument("--n-packets", type=int)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"microcsi: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
