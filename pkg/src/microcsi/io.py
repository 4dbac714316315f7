"""Newline-delimited JSON storage for CSI datasets, micro-CSI and fingerprint libraries.

CSI dataset, one measurement per line::

    {"device_id": "dev00", "packet_index": 0, "n_rx": 4,
     "chains": [[[re, im], ... 52 pairs], ...n_rx], "snr_db": 34.0, "flags": []}

Subcarriers are listed in ascending signed order (-26..-1, 1..26).
``snr_db`` and ``flags`` are optional; an infinite SNR is stored as the
string ``"inf"``. Floats are written with ``repr`` precision, so a
write/read cycle is bit-exact.

Fingerprint and library files start with a header line carrying
``format`` and ``version`` and then hold one fingerprint per line.

Third-party captures (e.g. per-packet CSI dumps from a NIC tool) are
converted by emitting one such record per packet with the 52 data
subcarriers reordered to ascending index and pilots/DC/guards dropped.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, ParseError
from .fingerprint import Fingerprint
from .matcher import FingerprintLibrary
from .ofdm import N_SUBCARRIERS
from .sim import CsiMeasurement

LIBRARY_FORMAT = "microcsi-library"
FINGERPRINTS_FORMAT = "microcsi-fingerprints"
FORMAT_VERSION = 1


def _pairs(vec) -> list:
    v = np.asarray(vec, dtype=complex)
    return [[float(x.real), float(x.imag)] for x in v]


def _from_pairs(pairs, line, what="chain") -> np.ndarray:
    if not isinstance(pairs, list):
        raise ParseError(line, f"{what} must be a list of [re, im] pairs")
    if len(pairs) != N_SUBCARRIERS:
        raise DimensionError(line, f"{what} has {len(pairs)} subcarriers, expected {N_SUBCARRIERS}")
    try:
        arr = np.array(pairs, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(line, f"{what}: {exc}") from None
    if arr.shape != (N_SUBCARRIERS, 2):
        raise ParseError(line, f"{what} entries must be [re, im] pairs")
    if not np.all(np.isfinite(arr)):
        raise ParseError(line, f"{what} contains non-finite values")
    out = np.empty(N_SUBCARRIERS, dtype=complex)
    out.real, out.imag = arr[:, 0], arr[:, 1]  # re + 1j*im would not preserve -0.0
    return out


def _encode_snr(snr):
    if snr is None:
        return None
    if math.isinf(snr):
        return "inf" if snr > 0 else "-inf"
    return float(snr)


def _decode_snr(value, line):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ParseError(line, f"bad snr_db {value!r}") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ParseError(line, f"bad snr_db {value!r}")


def csi_record(m: CsiMeasurement) -> dict:
    rec = {"device_id": m.device_id, "packet_index": int(m.packet_index), "n_rx": m.n_rx,
           "chains": [_pairs(c) for c in m.chains]}
    if m.snr_db is not None:
        rec["snr_db"] = _encode_snr(m.snr_db)
    if m.flags:
        rec["flags"] = sorted(m.flags)
    return rec


def parse_csi_record(rec, line: int = 0) -> CsiMeasurement:
    if not isinstance(rec, dict):
        raise ParseError(line, "record must be a JSON object")
    for key in ("device_id", "packet_index", "chains"):
        if key not in rec:
            raise ParseError(line, f"missing field {key!r}")
    if not isinstance(rec["device_id"], str):
        raise ParseError(line, "device_id must be a string")
    if not isinstance(rec["packet_index"], int) or isinstance(rec["packet_index"], bool):
        raise ParseError(line, "packet_index must be an integer")
    chains = rec["chains"]
    if not isinstance(chains, list) or not 1 <= len(chains) <= 4:
        raise ParseError(line, "chains must be a list of 1..4 receive chains")
    n_rx = rec.get("n_rx", len(chains))
    if n_rx != len(chains):
        raise ParseError(line, f"n_rx={n_rx} but {len(chains)} chains present")
    arr = np.stack([_from_pairs(c, line, f"chain {i}") for i, c in enumerate(chains)])
    flags = rec.get("flags", [])
    if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
        raise ParseError(line, "flags must be a list of strings")
    return CsiMeasurement(device_id=rec["device_id"], packet_index=rec["packet_index"], chains=arr,
                          snr_db=_decode_snr(rec.get("snr_db"), line), flags=frozenset(flags))


def _dump(obj) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None


def write_csi_dataset(path, measurements) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in measurements:
            fh.write(_dump(csi_record(m)) + "\n")


def iter_csi_dataset(path):
    for lineno, rec in _read_lines(path):
        yield parse_csi_record(rec, lineno)


def read_csi_dataset(path) -> list[CsiMeasurement]:
    return list(iter_csi_dataset(path))


def write_micro_csi(path, records) -> None:
    """``records`` are ``MicroCsi`` objects."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(_dump({"device_id": r.device_id, "packet_index": int(r.packet_index),
                            "chain_index": int(r.chain_index), "values": _pairs(r.values)}) + "\n")


def read_micro_csi(path):
    from .extract import MicroCsi

    out = []
    for lineno, rec in _read_lines(path):
        try:
            out.append(MicroCsi(values=_from_pairs(rec["values"], lineno, "values"),
                                device_id=rec["device_id"], packet_index=rec["packet_index"],
                                chain_index=rec["chain_index"]))
        except KeyError as exc:
            raise ParseError(lineno, f"missing field {exc}") from None
    return out


def _fp_record(fp: Fingerprint) -> dict:
    rec = {"values": _pairs(fp.values), "n_csi_used": int(fp.n_csi_used), "n_kept": int(fp.n_kept),
           "device_claim": fp.device_claim, "normalized": bool(fp.normalized)}
    if fp.flags:
        rec["flags"] = sorted(fp.flags)
    return rec


def _parse_fp(rec, line) -> Fingerprint:
    if not isinstance(rec, dict) or "values" not in rec:
        raise ParseError(line, "fingerprint record needs 'values'")
    return Fingerprint(values=_from_pairs(rec["values"], line, "values"),
                       n_csi_used=int(rec.get("n_csi_used", 1)), n_kept=int(rec.get("n_kept", 1)),
                       device_claim=str(rec.get("device_claim", "")),
                       normalized=bool(rec.get("normalized", True)),
                       flags=frozenset(rec.get("flags", [])))


def _check_header(rec, fmt, line=1):
    if not isinstance(rec, dict) or rec.get("format") != fmt:
        raise ParseError(line, f"expected a {fmt!r} header line")
    if rec.get("version") != FORMAT_VERSION:
        raise ParseError(line, f"unsupported {fmt} version {rec.get('version')!r}")


def write_fingerprints(path, fingerprints) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"format": FINGERPRINTS_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for fp in fingerprints:
            fh.write(_dump(_fp_record(fp)) + "\n")


def read_fingerprints(path) -> list[Fingerprint]:
    lines = _read_lines(path)
    first = next(lines, None)
    if first is None:
        raise ParseError(1, "empty fingerprint file")
    _check_header(first[1], FINGERPRINTS_FORMAT, first[0])
    return [_parse_fp(rec, lineno) for lineno, rec in lines]


def write_library(path, lib: FingerprintLibrary, threshold: float | None = None,
                  metric: str | None = None) -> None:
    header = {"format": LIBRARY_FORMAT, "version": FORMAT_VERSION, "identity": lib.identity,
              "size": lib.size, "k": int(lib.k), "threshold": threshold, "metric": metric,
              "metadata": lib.metadata}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for fp in lib.fingerprints:
            if not isinstance(fp, Fingerprint):
                fp = Fingerprint(values=np.asarray(fp), device_claim=lib.identity)
            fh.write(_dump(_fp_record(fp)) + "\n")


def read_library(path) -> tuple[FingerprintLibrary, float | None, str | None]:
    """``(library, threshold, metric)``; the last two are ``None`` if not stored."""
    lines = _read_lines(path)
    first = next(lines, None)
    if first is None:
        raise ParseError(1, "empty library file")
    lineno, header = first
    _check_header(header, LIBRARY_FORMAT, lineno)
    fps = [_parse_fp(rec, n) for n, rec in lines]
    if len(fps) != header.get("size"):
        raise ParseError(lineno, f"header announces {header.get('size')} fingerprints, found {len(fps)}")
    try:
        lib = FingerprintLibrary(identity=header["identity"], fingerprints=fps, k=header["k"],
                                 metadata=header.get("metadata") or {})
    except (KeyError, ValueError) as exc:
        raise ParseError(lineno, f"bad library header: {exc}") from None
    return lib, header.get("threshold"), header.get("metric")


def ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
