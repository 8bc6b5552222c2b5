"""JSONL trace files and corpus manifests.

One JSON object per fix::

    {"session_id": ..., "t_ms": ..., "lat": ..., "lon": ..., "accuracy_m": ...,
     "net_hint": {"lat": ..., "lon": ..., "accuracy_m": ...},
     "raw_fixes": [[lat, lon, accuracy_m], ...], "label": ..., "scenario": ...}

``net_hint``, ``raw_fixes``, ``label`` and ``scenario`` are optional.
Records of one session must appear in time order; sessions may interleave.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np

from .geo import Fix, Label, NetworkHint, RawSample, Scenario, Trace, ValidationError
from .tracegen import PRNG_ID, CorpusConfig, iter_corpus

log = logging.getLogger(__name__)

COORD_DECIMALS = 7
FIELDS = ("session_id", "t_ms", "lat", "lon", "accuracy_m", "net_hint", "raw_fixes", "label", "scenario")
REQUIRED = ("session_id", "t_ms", "lat", "lon", "accuracy_m")
HINT_FIELDS = ("lat", "lon", "accuracy_m")
MANIFEST_FORMAT = "trustgate-corpus-manifest"


class TraceFormatError(ValidationError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.detail = message
        self.line = line
        self.path = path


def _coord(x: float) -> float:
    return round(float(x), COORD_DECIMALS)


def fix_record(fix: Fix, label: Label | None = None, scenario: Scenario | None = None) -> dict:
    rec: dict = {
        "session_id": fix.session_id,
        "t_ms": fix.t,
        "lat": _coord(fix.lat),
        "lon": _coord(fix.lon),
        "accuracy_m": float(fix.accuracy),
    }
    if fix.net_hint is not None:
        h = fix.net_hint
        rec["net_hint"] = {"lat": _coord(h.lat), "lon": _coord(h.lon), "accuracy_m": float(h.accuracy)}
    if fix.raw_fixes is not None:
        rec["raw_fixes"] = [[_coord(r.lat), _coord(r.lon), float(r.accuracy)] for r in fix.raw_fixes]
    if label is not None:
        rec["label"] = Label(label).value
    if scenario is not None:
        rec["scenario"] = Scenario(scenario).value
    return rec


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def _num(x: float) -> str:
    # float.__repr__ is what json.dumps emits for finite floats
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialised")
    return repr(x)


def trace_lines(trace: Trace) -> Iterator[str]:
    """Same bytes as ``dumps_record(fix_record(...))``, built directly for speed."""
    tail = ""
    if trace.label is not None:
        tail += ',"label":' + json.dumps(Label(trace.label).value)
    if trace.scenario is not None:
        tail += ',"scenario":' + json.dumps(Scenario(trace.scenario).value)
    tail += "}"
    sid = '{"session_id":' + json.dumps(trace.session_id) + ',"t_ms":'
    for fix in trace.fixes:
        parts = [
            sid,
            str(fix.t),
            ',"lat":',
            _num(round(fix.lat, COORD_DECIMALS)),
            ',"lon":',
            _num(round(fix.lon, COORD_DECIMALS)),
            ',"accuracy_m":',
            _num(fix.accuracy),
        ]
        h = fix.net_hint
        if h is not None:
            parts.append(
                f',"net_hint":{{"lat":{_num(round(h.lat, COORD_DECIMALS))},'
                f'"lon":{_num(round(h.lon, COORD_DECIMALS))},"accuracy_m":{_num(h.accuracy)}}}'
            )
        if fix.raw_fixes is not None:
            parts.append(',"raw_fixes":[')
            parts.append(
                ",".join(
                    f"[{_num(round(r.lat, COORD_DECIMALS))},{_num(round(r.lon, COORD_DECIMALS))},{_num(r.accuracy)}]"
                    for r in fix.raw_fixes
                )
            )
            parts.append("]")
        parts.append(tail)
        yield "".join(parts)


def corpus_lines(traces: Iterable[Trace]) -> Iterator[str]:
    for trace in traces:
        yield from trace_lines(trace)


def corpus_hash(traces: Iterable[Trace]) -> str:
    """SHA-256 of the JSONL serialization, without writing it anywhere."""
    h = hashlib.sha256()
    for line in corpus_lines(traces):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


def write_traces(path: str | Path, traces: Iterable[Trace]) -> str:
    """Write JSONL and return its SHA-256."""
    path = Path(path)
    h = hashlib.sha256()
    try:
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in corpus_lines(traces):
                data = line + "\n"
                fh.write(data)
                h.update(data.encode())
    except OSError as exc:
        raise OSError(f"cannot write trace file {path}: {exc.strerror or exc}") from exc
    return h.hexdigest()


def _parse_hint(obj, lineno: int) -> NetworkHint:
    if not isinstance(obj, dict):
        raise TraceFormatError("net_hint must be an object", lineno)
    extra = set(obj) - set(HINT_FIELDS)
    if extra:
        raise TraceFormatError(f"unknown net_hint fields {sorted(extra)}", lineno)
    try:
        return NetworkHint(float(obj["lat"]), float(obj["lon"]), float(obj["accuracy_m"]))
    except KeyError as exc:
        raise TraceFormatError(f"net_hint missing {exc.args[0]!r}", lineno) from None


def parse_record(line: str, lineno: int, strict: bool = True) -> tuple[Fix, Label | None, Scenario | None]:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON: {exc.msg}", lineno) from None
    if not isinstance(rec, dict):
        raise TraceFormatError("record must be a JSON object", lineno)
    unknown = set(rec) - set(FIELDS)
    if unknown:
        if strict:
            raise TraceFormatError(f"unknown fields {sorted(unknown)}", lineno)
        log.warning("line %d: ignoring unknown fields %s", lineno, sorted(unknown))
    missing = [k for k in REQUIRED if k not in rec]
    if missing:
        raise TraceFormatError(f"missing fields {missing}", lineno)
    try:
        t = rec["t_ms"]
        if isinstance(t, bool) or not isinstance(t, int):
            raise TraceFormatError(f"t_ms must be an integer, got {t!r}", lineno)
        hint = _parse_hint(rec["net_hint"], lineno) if rec.get("net_hint") is not None else None
        raw = None
        if rec.get("raw_fixes") is not None:
            if not isinstance(rec["raw_fixes"], list):
                raise TraceFormatError("raw_fixes must be a list", lineno)
            raw = []
            for item in rec["raw_fixes"]:
                if not isinstance(item, list) or len(item) != 3:
                    raise TraceFormatError("raw_fixes entries must be [lat, lon, accuracy_m]", lineno)
                raw.append(RawSample(float(item[0]), float(item[1]), float(item[2])))
            raw = tuple(raw)
        fix = Fix(
            str(rec["session_id"]),
            t,
            float(rec["lat"]),
            float(rec["lon"]),
            float(rec["accuracy_m"]),
            hint,
            raw,
        )
        label = Label(rec["label"]) if rec.get("label") is not None else None
        scenario = Scenario(rec["scenario"]) if rec.get("scenario") is not None else None
    except TraceFormatError:
        raise
    except (ValidationError, ValueError, TypeError) as exc:
        raise TraceFormatError(str(exc), lineno) from None
    return fix, label, scenario


def parse_lines(lines: Iterable[str], strict: bool = True, path: str | None = None) -> list[Trace]:
    """Group records into traces by session id, in order of first appearance."""
    sessions: dict[str, list] = {}
    meta: dict[str, tuple] = {}
    first_line: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            fix, label, scenario = parse_record(line, lineno, strict)
        except TraceFormatError as exc:
            raise TraceFormatError(exc.detail, exc.line, path) from None
        sid = fix.session_id
        fixes = sessions.setdefault(sid, [])
        if fixes and fix.t <= fixes[-1].t:
            raise TraceFormatError(
                f"session {sid!r}: timestamp {fix.t} does not follow {fixes[-1].t}", lineno, path
            )
        prev = meta.setdefault(sid, (label, scenario))
        if prev != (label, scenario):
            raise TraceFormatError(f"session {sid!r}: label/scenario changes mid-session", lineno, path)
        first_line.setdefault(sid, lineno)
        fixes.append(fix)
    traces = []
    for sid, fixes in sessions.items():
        label, scenario = meta[sid]
        try:
            traces.append(Trace(tuple(fixes), label, scenario))
        except ValidationError as exc:
            raise TraceFormatError(f"session {sid!r}: {exc}", first_line[sid], path) from None
    return traces


def read_traces(path: str | Path, strict: bool = True) -> list[Trace]:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return parse_lines(fh, strict, str(path))
    except OSError as exc:
        raise OSError(f"cannot read trace file {path}: {exc.strerror or exc}") from exc


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(cfg: CorpusConfig, content_sha256: str, n_traces: int) -> dict:
    # JSON-normalised (tuples become lists) so it equals what is read back
    return json.loads(json.dumps({
        "format": MANIFEST_FORMAT,
        "version": 1,
        "master_seed": cfg.master_seed,
        "prng": {"id": PRNG_ID, "numpy": np.__version__, "trace_seed": "SeedSequence(master_seed, spawn_key=(scenario_index, trace_index))"},
        "config": cfg.snapshot(),
        "n_traces": n_traces,
        "content_sha256": content_sha256,
    }))


def write_corpus(path: str | Path, cfg: CorpusConfig) -> dict:
    """Generate, write JSONL plus ``<path>.manifest.json``; return the manifest."""
    path = Path(path)
    count = 0

    def counted():
        nonlocal count
        for tr in iter_corpus(cfg):
            count += 1
            yield tr

    sha = write_traces(path, counted())
    manifest = build_manifest(cfg, sha, count)
    mpath = manifest_path(path)
    try:
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write manifest {mpath}: {exc.strerror or exc}") from exc
    return manifest


def manifest_path(corpus_path: str | Path) -> Path:
    p = Path(corpus_path)
    return p.with_name(p.name + ".manifest.json")


def config_from_manifest(manifest: dict) -> CorpusConfig:
    from .tracegen import ScenarioParams

    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValidationError("not a corpus manifest")
    c = dict(manifest["config"])
    params = ScenarioParams.from_dict(c.pop("params"))
    return CorpusConfig(params=params, **c)
