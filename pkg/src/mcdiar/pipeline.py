"""End-to-end diarization driver and its INI configuration.

Per recording and channel: preprocess -> similarity -> AHC -> VB-HMM (or
auto-tuning spectral clustering) -> turns; then channel combination,
overlap detection post-processing and, with several systems, fusion.
"""

from __future__ import annotations

import configparser
import glob
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import clustering
from .combine import combine_channels
from .embeddings import (
    EmbeddingSequence,
    FrameTrack,
    PLDAModel,
    preprocess,
    read_embeddings,
    read_frame_track,
    read_plda,
)
from .fusion import fuse_systems
from .overlap import (
    WindowPosteriors,
    assign_overlap,
    fuse_posteriors,
    overlap_diarization,
    posteriors_to_segments,
)
from .scoring import der
from .timeline import Diarization, SpeakerTurn, parse_rttm, write_rttm
from .vbx import VbxParams, vb_hmm

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration or missing mandatory input."""


# section -> key -> (type, default, help)
CONFIG_SCHEMA: dict[str, dict[str, tuple[type, object, str]]] = {
    "io": {
        "embeddings": (str, "", "EMB1 files or globs, whitespace separated"),
        "plda": (str, "", "PLDA1 model file"),
        "doa": (str, "", "TRK1 DOA posterior tracks (36-dim), one per recording"),
        "overlap": (str, "", "TRK1 overlap posterior tracks (1-dim); several per recording are averaged"),
        "reference": (str, "", "reference RTTM for scoring"),
        "clustering": (str, "vbx", "vbx or asc"),
        "win_len": (float, 0.0, "expected window length in seconds; 0 accepts the EMB1 header"),
        "win_shift": (float, 0.0, "expected window shift in seconds; 0 accepts the EMB1 header"),
    },
    "vbx": {
        "fa": (float, 0.3, "acoustic scaling factor"),
        "fb": (float, 17.0, "speaker regularization factor"),
        "p_loop": (float, 0.99, "self-transition probability"),
        "max_iters": (int, 40, "maximum VB iterations"),
        "elbo_tol": (float, 1e-4, "stop when the ELBO gains less than this"),
        "min_speaker_mass": (float, 0.0, "prune speakers below this occupancy; 0 means 1e-3 * T"),
        "doa_sigma": (float, 0.01, "std. dev. of the DOA emission Gaussian"),
        "doa_mode": (str, "off", "off, emission, transition or both"),
        "ahc_threshold": (float, 0.0, "AHC stops merging below this average similarity"),
        "similarity": (str, "plda", "plda or cosine"),
    },
    "asc": {
        "kmeans_seed": (int, 0, "k-means random seed"),
        "max_p": (int, 0, "largest neighbour count scanned; 0 means ceil(n/2)"),
    },
    "ovd": {
        "threshold": (float, 0.5, "overlap decision threshold (inclusive)"),
        "min_silence": (float, 0.3, "gaps shorter than this are filled"),
        "min_overlap": (float, 0.1, "overlap segments shorter than this are dropped"),
    },
    "fusion": {
        "mode": (str, "modified", "original or modified voting"),
        "rank_exponent": (float, 0.5, "system weight is rank ** -rank_exponent"),
    },
    "scoring": {
        "collar": (float, 0.25, "total collar width around reference boundaries"),
        "score_overlap": (bool, True, "score regions with overlapping reference speakers"),
    },
}
SYSTEM_KEYS = ("embeddings", "clustering")


def default_config() -> dict[str, dict[str, object]]:
    return {sec: {k: v[1] for k, v in keys.items()} for sec, keys in CONFIG_SCHEMA.items()}


def _convert(kind, raw: str, where: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> dict[str, dict[str, object]]:
    """Read INI text into a full config dict, rejecting unknown sections and keys.

    Extra systems for fusion go in ``[system:<name>]`` sections with keys
    ``embeddings`` and ``clustering``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = default_config()
    cfg["systems"] = {}
    for sec in cp.sections():
        if sec.startswith("system:"):
            name = sec.split(":", 1)[1].strip()
            if not name:
                raise ConfigError("empty system name")
            entry = {"embeddings": "", "clustering": "vbx"}
            for key, raw in cp.items(sec):
                if key not in SYSTEM_KEYS:
                    raise ConfigError(f"[{sec}] unknown key {key!r}")
                entry[key] = raw.strip()
            cfg["systems"][name] = entry
            continue
        if sec not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in CONFIG_SCHEMA[sec]:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
            cfg[sec][key] = _convert(CONFIG_SCHEMA[sec][key][0], raw, f"[{sec}] {key}")
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    methods = [cfg["io"]["clustering"]] + [s["clustering"] for s in cfg.get("systems", {}).values()]
    for m in methods:
        if m not in ("vbx", "asc"):
            raise ConfigError(f"clustering must be vbx or asc, got {m!r}")
    if cfg["vbx"]["similarity"] not in ("plda", "cosine"):
        raise ConfigError("similarity must be plda or cosine")
    if cfg["fusion"]["mode"] not in ("original", "modified"):
        raise ConfigError("fusion mode must be original or modified")
    try:
        vbx_params(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def vbx_params(cfg) -> VbxParams:
    v = cfg["vbx"]
    return VbxParams(
        fa=v["fa"], fb=v["fb"], p_loop=v["p_loop"], max_iters=v["max_iters"],
        elbo_tol=v["elbo_tol"],
        min_speaker_mass=v["min_speaker_mass"] or None,
        doa_sigma=v["doa_sigma"], doa_mode=v["doa_mode"],
    )


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


# ---------------------------------------------------------------------------
# stages


def labels_to_diarization(
    recording_id: str,
    starts: np.ndarray,
    ends: np.ndarray,
    labels: Sequence[int],
    names: Sequence[str] | None = None,
) -> Diarization:
    """Turn per-window labels into speaker turns.

    Overlapping neighbours split their shared span at the midpoint between
    window centres; windows keep their own extent elsewhere.
    """
    n = len(starts)
    if n == 0:
        return Diarization(recording_id)
    centers = (np.asarray(starts) + np.asarray(ends)) / 2.0
    lo = np.array(starts, dtype=float)
    hi = np.array(ends, dtype=float)
    mid = (centers[:-1] + centers[1:]) / 2.0
    lo[1:] = np.maximum(lo[1:], np.minimum(mid, ends[:-1]))
    hi[:-1] = np.minimum(hi[:-1], np.maximum(mid, starts[1:]))
    turns = []
    for s, e, lab in zip(lo, hi, labels):
        if e - s > 1e-9:
            name = names[lab] if names is not None else f"spk{lab}"
            turns.append(SpeakerTurn.make(s, e, name))
    return Diarization(recording_id, tuple(turns))


@dataclass
class ChannelResult:
    diarization: Diarization
    posteriors: WindowPosteriors | None


def cluster_channel(
    e: EmbeddingSequence,
    plda: PLDAModel | None,
    cfg,
    method: str = "vbx",
    doa: FrameTrack | None = None,
) -> ChannelResult:
    """Cluster one channel's embeddings into a diarization."""
    if len(e) == 0:
        return ChannelResult(Diarization(e.recording_id), None)
    if method == "asc":
        if len(e) < 2:
            labels = np.zeros(len(e), dtype=int)
        else:
            max_p = cfg["asc"]["max_p"] or None
            labels = clustering.auto_spectral(e, seed=cfg["asc"]["kmeans_seed"], max_p=max_p)
        return ChannelResult(labels_to_diarization(e.recording_id, e.starts, e.ends, labels), None)

    if plda is None:
        raise ConfigError("VBx clustering needs a PLDA model")
    x = preprocess(e, plda)
    metric = cfg["vbx"]["similarity"]
    sim = clustering.similarity_matrix(x, metric, plda)
    init = clustering.ahc(sim, cfg["vbx"]["ahc_threshold"])
    params = vbx_params(cfg)
    if params.uses_doa and doa is None:
        raise ConfigError(f"doa_mode={params.doa_mode} but no DOA track for {e.recording_id}")
    res = vb_hmm(x, init, plda, params, doa if params.uses_doa else None)
    d = labels_to_diarization(e.recording_id, e.starts, e.ends, res.labels)
    # column k of q corresponds to argmax label k only after relabeling
    order = _column_names(res.q, res.labels)
    post = WindowPosteriors(e.starts, e.ends, res.q, order)
    return ChannelResult(d, post)


def _column_names(q: np.ndarray, labels: np.ndarray) -> tuple[str, ...]:
    raw = np.argmax(q, axis=1)
    names = {}
    for r, lab in zip(raw, labels):
        names.setdefault(int(r), f"spk{lab}")
    extra = 0
    out = []
    for k in range(q.shape[1]):
        if k not in names:
            names[k] = f"unused{extra}"
            extra += 1
        out.append(names[k])
    return tuple(out)


@dataclass
class SystemOutput:
    channels: dict[int, Diarization] = field(default_factory=dict)
    combined: Diarization | None = None
    final: Diarization | None = None


def _expand(patterns: str) -> list[str]:
    out = []
    for item in patterns.split():
        hits = sorted(glob.glob(item))
        out.extend(hits if hits else [item])
    return out


def _read(path, reader):
    if not os.path.exists(path):
        raise ConfigError(f"missing input file {path}")
    with open(path, encoding="utf-8") as f:
        return reader(f.read())


def run_system(
    embeddings: Sequence[EmbeddingSequence],
    plda: PLDAModel | None,
    cfg,
    method: str,
    doa: dict[str, FrameTrack],
    overlaps: dict[str, list],
    timings: dict[str, float],
) -> dict[str, SystemOutput]:
    """Cluster, combine and overlap-process every recording of one system."""
    by_rec: dict[str, list[EmbeddingSequence]] = {}
    for e in embeddings:
        by_rec.setdefault(e.recording_id, []).append(e)
    out: dict[str, SystemOutput] = {}
    for rec in sorted(by_rec):
        chans = sorted(by_rec[rec], key=lambda e: e.channel)
        if len({e.channel for e in chans}) != len(chans):
            raise ConfigError(f"{rec}: duplicate channel numbers")
        so = SystemOutput()
        t0 = time.perf_counter()
        # channels are independent; map() keeps results in channel order
        with ThreadPoolExecutor(max_workers=min(8, len(chans))) as pool:
            done = pool.map(lambda e: cluster_channel(e, plda, cfg, method, doa.get(rec)), chans)
            results = {e.channel: r for e, r in zip(chans, done)}
        timings["cluster"] = timings.get("cluster", 0.0) + time.perf_counter() - t0
        so.channels = {c: r.diarization for c, r in results.items()}

        t0 = time.perf_counter()
        ordered = [results[c] for c in sorted(results)]
        combined, report = combine_channels([r.diarization for r in ordered])
        logger.info("%s: N=%d used=%s skipped=%s", rec, report.chosen_n, report.used_channels, report.skipped_channels)
        so.combined = combined
        timings["combine"] = timings.get("combine", 0.0) + time.perf_counter() - t0

        final = combined
        if rec in overlaps:
            t0 = time.perf_counter()
            seed = ordered[report.used_channels[0] - 1]
            final = assign_overlap(combined, overlaps[rec], seed.posteriors)
            timings["ovd"] = timings.get("ovd", 0.0) + time.perf_counter() - t0
        so.final = final
        out[rec] = so
    return out


@dataclass
class PipelineResult:
    final: list[Diarization]
    systems: dict[str, dict[str, SystemOutput]]
    overlaps: dict[str, list]
    report: dict[str, object]


def run_pipeline(cfg, out_dir=None) -> PipelineResult:
    """Run every configured stage; write stage files when ``out_dir`` is given.

    Raises :class:`ConfigError` for missing inputs and
    :class:`~mcdiar.timeline.ParseError` for malformed files.
    """
    io = cfg["io"]
    timings: dict[str, float] = {}
    t_start = time.perf_counter()
    systems_spec = {"main": {"embeddings": io["embeddings"], "clustering": io["clustering"]}}
    systems_spec.update(cfg.get("systems", {}))

    plda = _read(io["plda"], read_plda) if io["plda"] else None
    doa = {}
    for p in _expand(io["doa"]):
        t = _read(p, read_frame_track)
        doa[t.recording_id] = t
    ovd_tracks: dict[str, list[FrameTrack]] = {}
    for p in _expand(io["overlap"]):
        t = _read(p, read_frame_track)
        ovd_tracks.setdefault(t.recording_id, []).append(t)
    o = cfg["ovd"]
    overlaps = {
        rec: posteriors_to_segments(fuse_posteriors(ts), o["threshold"], o["min_silence"], o["min_overlap"])
        for rec, ts in sorted(ovd_tracks.items())
    }

    sys_out: dict[str, dict[str, SystemOutput]] = {}
    for name, entry in systems_spec.items():
        paths = _expand(entry["embeddings"])
        if not paths:
            raise ConfigError(f"system {name!r}: no embedding files")
        embs = [_read(p, read_embeddings) for p in paths]
        for e in embs:
            for key, val in (("win_len", e.win_len), ("win_shift", e.win_shift)):
                want = io[key] if name == "main" else 0.0
                if want and abs(want - val) > 1e-6:
                    raise ConfigError(f"{e.recording_id} ch{e.channel}: {key} {val} != configured {want}")
        sys_out[name] = run_system(embs, plda, cfg, entry["clustering"], doa, overlaps, timings)

    recs = sorted({r for s in sys_out.values() for r in s})
    final = []
    t0 = time.perf_counter()
    for rec in recs:
        outs = [s[rec].final for s in sys_out.values() if rec in s]
        if len(outs) >= 2:
            final.append(fuse_systems(outs, cfg["fusion"]["mode"], cfg["fusion"]["rank_exponent"]))
        else:
            final.append(outs[0])
    if len(sys_out) > 1:
        timings["fusion"] = time.perf_counter() - t0

    report: dict[str, object] = {}
    if io["reference"]:
        refs = {d.recording_id: d for d in _read(io["reference"], parse_rttm)}
        report.update(score_all(refs, {d.recording_id: d for d in final}, cfg["scoring"]))
    timings["total"] = time.perf_counter() - t_start
    for k, v in timings.items():
        report[f"time.{k}"] = v
    result = PipelineResult(final, sys_out, overlaps, report)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def score_all(refs: dict[str, Diarization], hyps: dict[str, Diarization], scfg) -> dict[str, object]:
    """Pool DER components over recordings; JER is averaged per recording."""
    totals = np.zeros(4)
    jers = []
    for rec, ref in sorted(refs.items()):
        hyp = hyps.get(rec, Diarization(rec))
        rep = der(ref, hyp, scfg["collar"], scfg["score_overlap"], with_jer=True)
        totals += [rep.scored_time, rep.missed, rep.false_alarm, rep.confusion]
        if rep.jer is not None:
            jers.append(rep.jer)
    scored, missed, fa, conf = totals
    return {
        "scored_time": scored,
        "missed": missed,
        "false_alarm": fa,
        "confusion": conf,
        "der": (missed + fa + conf) / scored if scored > 0 else None,
        "jer": float(np.mean(jers)) if jers else None,
    }


def write_outputs(result: PipelineResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    multi = len(result.systems) > 1

    def put(path, text):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)

    for name, per_rec in result.systems.items():
        base = os.path.join(out_dir, f"sys_{name}") if multi else out_dir
        os.makedirs(base, exist_ok=True)
        channels = sorted({c for so in per_rec.values() for c in so.channels})
        for c in channels:
            put(os.path.join(base, f"ch{c}.rttm"),
                write_rttm([so.channels[c] for so in per_rec.values() if c in so.channels]))
        put(os.path.join(base, "combined.rttm"), write_rttm([so.combined for so in per_rec.values()]))
        if multi:
            put(os.path.join(base, "final.rttm"), write_rttm([so.final for so in per_rec.values()]))
    if result.overlaps:
        put(os.path.join(out_dir, "overlaps.rttm"),
            write_rttm([overlap_diarization(r, s) for r, s in result.overlaps.items()]))
    put(os.path.join(out_dir, "final.rttm"), write_rttm(result.final))
    lines = []
    for k in sorted(result.report):
        v = result.report[k]
        lines.append(f"{k} {'undefined' if v is None else f'{v:.6f}'}")
    put(os.path.join(out_dir, "report.txt"), "\n".join(lines) + "\n")
