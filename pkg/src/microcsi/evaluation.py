"""Round-robin open-set evaluation, enrollment and ablation sweeps.

Each device takes a turn as the legitimate identity: it is enrolled from the
enrollment collection, its threshold is calibrated on a held-out share of
its own library, and then every test fingerprint of every device is
authenticated against it. ADR counts rejected impostors, FAR rejected
legitimate fingerprints.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .exceptions import InsufficientDataError
from .extract import DEFAULT_EPS_FADE, micro_csi_array
from .fingerprint import DEFAULT_OMEGA1, DEFAULT_OMEGA2, fingerprints_from_stream
from .matcher import (
    FingerprintLibrary,
    KnnAuthenticator,
    calibrate_threshold,
    default_k,
)
from .ofdm import DEFAULT_NP, projector_for
from .sim import (
    CASE1,
    CASE2,
    blend_profiles,
    inject_abnormal,
    make_device_profile,
    make_los_channel,
    scale_distortion,
    synthesize_csi,
)

log = logging.getLogger(__name__)

OPERATING_POINTS = (0.0, 0.01)
INDISTINGUISHABLE = "indistinguishable"


def _subseed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass
class Scenario:
    """Synthetic fleet and collection settings.

    Enrollment and test collections use independent channel draws for every
    device and chain (the analog of collecting in two different rooms).
    Within a collection the line-of-sight channel is redrawn every
    ``coherence_packets`` packets (0 keeps one channel for the whole
    collection). Devices ``i`` with equal ``i % n_models`` share a model-level
    distortion carrying ``model_similarity`` of their distortion power.
    ``intensity_drift`` is the log-scale standard deviation of a gain applied
    to the distortion once per channel block: the packet-to-packet drift of
    fingerprint intensity that amplitude normalization is meant to absorb.
    ``clones`` maps a device index to another whose hardware it copies.
    """

    n_devices: int = 15
    n_rx: int = 4
    n_packets: int = 2000
    snr_db: float = 34.0
    intensity_range: tuple = (0.02, 0.05)
    n_p_sim: int = 8
    seed: int = 0
    case1_rate: float = 0.0
    case2_rate: float = 0.0
    doppler_hz: float = 0.0
    coherence_packets: int = 25
    n_models: int = 5
    model_similarity: float = 0.9
    intensity_drift: float = 0.0
    clones: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "intensity_range" in d:
            d["intensity_range"] = tuple(d["intensity_range"])
        if "clones" in d:
            d["clones"] = {int(k): int(v) for k, v in d["clones"].items()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


def device_id(i: int) -> str:
    return f"dev{i:02d}"


def make_fleet(scenario: Scenario):
    lo, hi = scenario.intensity_range
    rng = np.random.default_rng([scenario.seed, 1])
    intensities = rng.uniform(lo, hi, scenario.n_devices)
    models = [make_device_profile(_subseed(scenario.seed, 7, m), 0.05)
              for m in range(scenario.n_models)]
    profiles = []
    for i in range(scenario.n_devices):
        src = scenario.clones.get(i, i)
        p = make_device_profile(_subseed(scenario.seed, 2, src), float(intensities[src]),
                                device_id=device_id(i))
        if models and scenario.model_similarity > 0:
            p = blend_profiles(models[src % len(models)], p, scenario.model_similarity)
        profiles.append(p)
    return profiles


def simulate_collection(profiles, scenario: Scenario, room: int):
    """All measurements of one collection, device after device."""
    out = []
    block = scenario.coherence_packets or scenario.n_packets
    for i, prof in enumerate(profiles):
        ms = []
        starts = range(0, scenario.n_packets, block)
        gains = np.exp(scenario.intensity_drift
                       * np.random.default_rng([scenario.seed, 8, room, i]).standard_normal(len(starts)))
        for e, start in enumerate(starts):
            channels = [make_los_channel(_subseed(scenario.seed, 3, room, i, e, c), scenario.n_p_sim)
                        for c in range(scenario.n_rx)]
            ms += synthesize_csi(scale_distortion(prof, float(gains[e])), channels, scenario.snr_db,
                                 min(block, scenario.n_packets - start),
                                 seed=_subseed(scenario.seed, 4, room, i), start_index=start,
                                 doppler_hz=scenario.doppler_hz)
        if scenario.case1_rate or scenario.case2_rate:
            rng = np.random.default_rng([scenario.seed, 5, room, i])
            u = rng.uniform(size=len(ms))
            inj_seed = _subseed(scenario.seed, 6, room, i)
            for j, m in enumerate(ms):
                if u[j] < scenario.case2_rate:
                    ms[j] = inject_abnormal(m, CASE2, seed=inj_seed)
                elif u[j] < scenario.case2_rate + scenario.case1_rate:
                    ms[j] = inject_abnormal(m, CASE1, seed=inj_seed)
        out.extend(ms)
    return out


def simulate_scenario(scenario: Scenario):
    """``(enroll, test)`` measurement lists for the whole fleet."""
    profiles = make_fleet(scenario)
    return simulate_collection(profiles, scenario, 0), simulate_collection(profiles, scenario, 1)


@dataclass
class EvalConfig:
    n_csi_values: tuple = (1, 5, 10, 20)
    metrics: tuple = ("manhattan",)
    far_targets: tuple = OPERATING_POINTS
    n_p: int = DEFAULT_NP
    omega1: float = DEFAULT_OMEGA1
    omega2: float = DEFAULT_OMEGA2
    eps_fade: float = DEFAULT_EPS_FADE
    outlier_elimination: bool = True
    normalize: bool = True
    calibration_fraction: float = 0.2
    calibration_split: str = "tail"
    k: int | None = None
    random_state: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("n_csi_values", "metrics", "far_targets"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown evaluation keys: {sorted(unknown)}")
        return cls(**d)

    def fingerprint_kwargs(self):
        return dict(omega1=self.omega1, omega2=self.omega2,
                    outlier_elimination=self.outlier_elimination, normalize=self.normalize)


@dataclass
class EvalRow:
    device: str
    n_csi: int
    metric: str
    far_target: float
    adr: float | None
    far: float | None
    n_tests: int
    n_legit: int
    n_impostor: int
    threshold: float
    flags: tuple = ()


@dataclass
class EvalReport:
    rows: list
    settings: dict = field(default_factory=dict)

    def averages(self) -> list[dict]:
        """Mean ADR/FAR over devices per ``(n_csi, metric, far_target)``."""
        groups = OrderedDict()
        for r in sorted(self.rows, key=lambda r: (r.n_csi, r.metric, r.far_target, r.device)):
            groups.setdefault((r.n_csi, r.metric, r.far_target), []).append(r)
        out = []
        for (n_csi, metric, target), rows in groups.items():
            adrs = [r.adr for r in rows if r.adr is not None]
            fars = [r.far for r in rows if r.far is not None]
            out.append({"n_csi": n_csi, "metric": metric, "far_target": target,
                        "adr": float(np.mean(adrs)) if adrs else None,
                        "far": float(np.mean(fars)) if fars else None,
                        "n_devices": len(rows), "n_tests": int(sum(r.n_tests for r in rows))})
        return out

    def average(self, n_csi, metric="manhattan", far_target=0.0) -> dict:
        for a in self.averages():
            if (a["n_csi"], a["metric"], a["far_target"]) == (n_csi, metric, far_target):
                return a
        raise KeyError((n_csi, metric, far_target))

    def to_records(self) -> list[dict]:
        recs = [dict(kind="device", **self.settings, **asdict(r)) for r in self.rows]
        recs += [dict(kind="average", **self.settings, **a) for a in self.averages()]
        for r in recs:
            if "flags" in r:
                r["flags"] = list(r["flags"])
        return recs

    def to_table(self) -> str:
        lines = [f"{'N_csi':>5} {'metric':<16} {'FAR target':>10} {'ADR':>8} {'FAR':>8} {'devices':>7}"]
        fmt = lambda v: "   n/a" if v is None else f"{100 * v:7.2f}%"
        for a in self.averages():
            lines.append(f"{a['n_csi']:>5} {a['metric']:<16} {100 * a['far_target']:>9.1f}% "
                         f"{fmt(a['adr'])} {fmt(a['far'])} {a['n_devices']:>7}")
        flagged = OrderedDict()
        for r in sorted(self.rows, key=lambda r: (r.n_csi, r.metric, r.far_target, r.device)):
            for f in r.flags:
                flagged.setdefault((r.n_csi, r.metric, r.far_target), set()).add(
                    f"{r.device}~{f.split(':', 1)[1]}")
        for (n_csi, metric, target), pairs in flagged.items():
            lines.append(f"N_csi={n_csi} {metric} FAR<={100 * target:.1f}%: impostors accepted "
                         f"more often than not: {', '.join(sorted(pairs))}")
        return "\n".join(lines)


def compute_adr_far(decisions, truth):
    """``(adr, far)`` from accept decisions and legitimacy labels.

    Rates whose category is empty are returned as ``None``.
    """
    accept = np.array([d.accept if hasattr(d, "accept") else bool(d) for d in decisions], dtype=bool)
    legit = np.asarray(truth, dtype=bool)
    if accept.shape != legit.shape:
        raise ValueError(f"{accept.size} decisions vs {legit.size} labels")
    imp = ~legit
    adr = float(np.mean(~accept[imp])) if imp.any() else None
    far = float(np.mean(~accept[legit])) if legit.any() else None
    return adr, far


def group_by_device(measurements) -> "OrderedDict[str, list]":
    out = OrderedDict()
    for m in measurements:
        out.setdefault(m.device_id, []).append(m)
    return out


def micro_csi_stream(measurements, n_p: int = DEFAULT_NP, eps_fade: float = DEFAULT_EPS_FADE):
    """Stack one device's measurements to ``(micro, valid)`` arrays of shape ``(P, R, 52)`` / ``(P, R)``."""
    if not measurements:
        raise InsufficientDataError("no measurements")
    n_rx = {m.n_rx for m in measurements}
    if len(n_rx) != 1:
        raise ValueError(f"mixed receive-chain counts in one stream: {sorted(n_rx)}")
    chains = np.stack([m.chains for m in measurements])
    micro, faded = micro_csi_array(chains, eps_fade=eps_fade, projector=projector_for(n_p)[1])
    if faded.any():
        log.warning("dropping %d deep-faded chain vectors", int(faded.sum()))
    return micro, ~faded


def enroll(measurements, identity: str, n_csi: int, params: EvalConfig | None = None) -> FingerprintLibrary:
    """Library of ``len(measurements) // n_csi`` fingerprints with ``k = round(sqrt(S))``."""
    params = params or EvalConfig()
    measurements = list(measurements)
    others = {m.device_id for m in measurements} - {identity}
    if others:
        raise ValueError(f"measurements claim other identities: {sorted(others)}")
    if len(measurements) < n_csi:
        raise InsufficientDataError(f"{len(measurements)} measurements, need at least n_csi={n_csi}")
    micro, valid = micro_csi_stream(measurements, params.n_p, params.eps_fade)
    fps = fingerprints_from_stream(micro, n_csi, valid, device_claim=identity, **params.fingerprint_kwargs())
    if not fps:
        raise InsufficientDataError("every fingerprint group was rejected")
    k = min(params.k, len(fps)) if params.k is not None else default_k(len(fps))
    return FingerprintLibrary(identity, fps, k=k, metadata={"n_csi": n_csi, "n_p": params.n_p})


def _fingerprint_sets(dataset, cfg: EvalConfig):
    """``{device: {n_csi: (S, 52) array}}`` for one collection."""
    out = OrderedDict()
    for dev, ms in group_by_device(dataset).items():
        micro, valid = micro_csi_stream(ms, cfg.n_p, cfg.eps_fade)
        out[dev] = {}
        for n_csi in cfg.n_csi_values:
            if len(ms) < n_csi:
                raise InsufficientDataError(f"{dev}: {len(ms)} measurements, need n_csi={n_csi}")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fps = fingerprints_from_stream(micro, n_csi, valid, device_claim=dev,
                                               **cfg.fingerprint_kwargs())
            if not fps:
                raise InsufficientDataError(f"{dev}: no fingerprint survived at n_csi={n_csi}")
            out[dev][n_csi] = np.stack([f.values for f in fps])
    return out


def round_robin_eval(dataset_enroll, dataset_test, config: EvalConfig | None = None,
                     settings: dict | None = None) -> EvalReport:
    cfg = config or EvalConfig()
    enroll_fps = _fingerprint_sets(dataset_enroll, cfg)
    test_fps = _fingerprint_sets(dataset_test, cfg)
    if set(enroll_fps) != set(test_fps):
        raise ValueError("enrollment and test collections cover different devices: "
                         f"{sorted(set(enroll_fps) ^ set(test_fps))}")
    devices = sorted(enroll_fps)
    rows = []
    for n_csi in cfg.n_csi_values:
        test_x = np.concatenate([test_fps[d][n_csi] for d in devices])
        test_dev = np.concatenate([[d] * len(test_fps[d][n_csi]) for d in devices])
        for metric in cfg.metrics:
            for dev in devices:
                auth = KnnAuthenticator(metric=metric, k=cfg.k, target_far=0.0,
                                        calibration_fraction=cfg.calibration_fraction,
                                        split=cfg.calibration_split, random_state=cfg.random_state, identity=dev)
                auth.fit(enroll_fps[dev][n_csi])
                dist = auth.auth_distance(test_x)
                legit = test_dev == dev
                for target in cfg.far_targets:
                    thr = calibrate_threshold(auth.calibration_scores_, target)
                    accept = dist <= thr
                    adr, far = compute_adr_far(accept, legit)
                    flags = tuple(f"{INDISTINGUISHABLE}:{o}" for o in devices
                                  if o != dev and np.mean(accept[test_dev == o]) >= 0.5)
                    rows.append(EvalRow(device=dev, n_csi=n_csi, metric=metric, far_target=target,
                                        adr=adr, far=far, n_tests=int(len(accept)),
                                        n_legit=int(legit.sum()), n_impostor=int((~legit).sum()),
                                        threshold=thr, flags=flags))
    rows.sort(key=lambda r: (r.device, r.n_csi, r.metric, r.far_target))
    return EvalReport(rows=rows, settings=dict(settings or {}))


@dataclass
class SweepConfig:
    metrics: tuple = ("manhattan",)
    normalize: tuple = (True,)
    outlier_elimination: tuple = (True,)
    n_p_values: tuple = (DEFAULT_NP,)
    n_csi_values: tuple = (20,)
    far_targets: tuple = (0.01,)
    base: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = EvalConfig.from_dict(d.pop("base", {}))
        d = {k: tuple(v) if isinstance(v, (list, tuple)) else (v,) for k, v in d.items()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(base=base, **d)


def ablation_sweep(dataset_enroll, dataset_test, config: SweepConfig | None = None) -> list[EvalReport]:
    """One report per ``(N_p, FN, OE)`` combination, each covering all metrics and N_csi values."""
    sc = config or SweepConfig()
    reports = []
    for n_p, fn, oe in itertools.product(sc.n_p_values, sc.normalize, sc.outlier_elimination):
        cfg = replace(sc.base, n_p=n_p, normalize=fn, outlier_elimination=oe,
                      metrics=sc.metrics, n_csi_values=sc.n_csi_values, far_targets=sc.far_targets)
        settings = {"n_p": n_p, "normalize": fn, "outlier_elimination": oe}
        reports.append(round_robin_eval(dataset_enroll, dataset_test, cfg, settings=settings))
    return reports


def sweep_table(reports) -> list[dict]:
    """Flat plot-ready rows: one per averaged cell of every report."""
    rows = []
    for rep in reports:
        for a in rep.averages():
            rows.append({**rep.settings, **a})
    return rows
