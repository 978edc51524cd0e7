"""Command-line front end: ``mcdiar <subcommand> ...``.

Exit status: 0 on success, 2 when an input file is malformed, 3 for
configuration errors, missing inputs and violated preconditions.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .combine import combine_channels
from .embeddings import read_embeddings, read_frame_track, read_plda
from .fusion import DEFAULT_RANK_EXPONENT, MODES, fuse_systems
from .overlap import assign_overlap, fuse_posteriors, overlap_diarization, overlap_segments_from, posteriors_to_segments
from .scoring import DEFAULT_COLLAR, der
from .sot import parse_transcript, serialize_sot
from .timeline import Diarization, ParseError, parse_rttm, write_rttm
from .vbx import DOA_MODES

EXIT_PARSE = 2
EXIT_CONFIG = 3


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except FileNotFoundError:
        raise pipeline.ConfigError(f"missing input file {path}") from None


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def _by_recording(paths) -> dict[str, list[Diarization]]:
    out: dict[str, list[Diarization]] = {}
    for p in paths:
        for d in parse_rttm(_read_text(p)):
            out.setdefault(d.recording_id, []).append(d)
    return out


def cmd_run(args) -> None:
    cfg = pipeline.parse_config(_read_text(args.config))
    res = pipeline.run_pipeline(cfg, args.out)
    if res.report.get("der") is not None:
        print(f"DER% {100 * res.report['der']:.2f}")


def _cluster_cfg(args) -> dict:
    cfg = pipeline.default_config()
    v = cfg["vbx"]
    for key in ("fa", "fb", "p_loop", "max_iters", "elbo_tol", "min_speaker_mass", "doa_sigma", "doa_mode",
                "ahc_threshold", "similarity"):
        v[key] = getattr(args, key)
    cfg["asc"]["kmeans_seed"] = args.kmeans_seed
    cfg["asc"]["max_p"] = args.max_p
    cfg["io"]["clustering"] = args.method
    pipeline.validate_config(cfg)
    return cfg


def cmd_cluster(args) -> None:
    cfg = _cluster_cfg(args)
    e = read_embeddings(_read_text(args.embeddings))
    plda = read_plda(_read_text(args.plda)) if args.plda else None
    doa = read_frame_track(_read_text(args.doa)) if args.doa else None
    res = pipeline.cluster_channel(e, plda, cfg, args.method, doa)
    _emit(write_rttm([res.diarization]), args.output)


def cmd_combine(args) -> None:
    if not 1 <= len(args.inputs) <= 8:
        raise pipeline.ConfigError("combine takes 1 to 8 channel RTTM files")
    out = []
    for rec, ds in sorted(_by_recording(args.inputs).items()):
        combined, report = combine_channels(ds)
        logging.info("%s: N=%d used=%s skipped=%s", rec, report.chosen_n, report.used_channels,
                     report.skipped_channels)
        out.append(combined)
    _emit(write_rttm(out), args.output)


def cmd_ovd(args) -> None:
    tracks = [read_frame_track(_read_text(p)) for p in args.tracks]
    by_rec: dict[str, list] = {}
    for t in tracks:
        by_rec.setdefault(t.recording_id, []).append(t)
    out = []
    for rec, ts in sorted(by_rec.items()):
        segs = posteriors_to_segments(fuse_posteriors(ts), args.threshold, args.min_silence, args.min_overlap)
        out.append(overlap_diarization(rec, segs))
    _emit(write_rttm(out), args.output)


def cmd_apply_ovd(args) -> None:
    hyps = _by_recording([args.rttm])
    ovs = {rec: ds[0] for rec, ds in _by_recording([args.overlaps]).items()}
    out = []
    for rec, ds in sorted(hyps.items()):
        d = ds[0]
        if rec in ovs:
            d = assign_overlap(d, overlap_segments_from(ovs[rec]))
        out.append(d)
    _emit(write_rttm(out), args.output)


def cmd_fuse(args) -> None:
    if len(args.inputs) < 2:
        raise pipeline.ConfigError("fuse needs at least two systems")
    out = []
    for rec, ds in sorted(_by_recording(args.inputs).items()):
        out.append(ds[0] if len(ds) == 1 else fuse_systems(ds, args.mode, args.rank_exponent))
    _emit(write_rttm(out), args.output)


def cmd_score(args) -> None:
    refs = {d.recording_id: d for d in parse_rttm(_read_text(args.ref))}
    hyps = {d.recording_id: d for d in parse_rttm(_read_text(args.hyp))}
    if len(refs) == 1 and len(hyps) == 1:
        ref = next(iter(refs.values()))
        hyp = next(iter(hyps.values()))
        if ref.recording_id != hyp.recording_id:
            hyp = Diarization(ref.recording_id, hyp.turns)
        report = der(ref, hyp, args.collar, not args.no_score_overlap, with_jer=True)
        _emit(report.format() + "\n", args.output)
        return
    pooled = pipeline.score_all(refs, hyps, {"collar": args.collar, "score_overlap": not args.no_score_overlap})
    lines = [f"{k} {pooled[k]:.2f}" for k in ("scored_time", "missed", "false_alarm", "confusion")]
    for k, name in (("der", "DER%"), ("jer", "JER%")):
        lines.append(f"{name} " + ("undefined" if pooled[k] is None else f"{100 * pooled[k]:.2f}"))
    _emit("\n".join(lines) + "\n", args.output)


def cmd_sot(args) -> None:
    tokens = serialize_sot(parse_transcript(_read_text(args.transcript)))
    _emit(" ".join(tokens) + "\n", args.output)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="mcdiar", description="Multi-channel overlap-aware diarization.",
                                formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        sp.set_defaults(func=func)
        return sp

    def output(sp):
        sp.add_argument("-o", "--output", default="-", help="output file, '-' for stdout")

    sp = add("run", cmd_run, "run the full pipeline from an INI config")
    sp.add_argument("--config", required=True, help="INI configuration file")
    sp.add_argument("--out", required=True, help="run directory for stage outputs")

    d = pipeline.default_config()
    sp = add("cluster", cmd_cluster, "cluster one channel of embeddings into an RTTM")
    sp.add_argument("--embeddings", required=True, help="EMB1 file")
    sp.add_argument("--plda", default=None, help="PLDA1 model (required for vbx)")
    sp.add_argument("--doa", default=None, help="TRK1 DOA posterior track")
    sp.add_argument("--method", choices=("vbx", "asc"), default="vbx", help="clustering back end")
    for key, (kind, default, help_) in pipeline.CONFIG_SCHEMA["vbx"].items():
        flag = "--" + key.replace("_", "-")
        if key == "doa_mode":
            sp.add_argument(flag, dest=key, choices=DOA_MODES, default=default, help=help_)
        elif key == "similarity":
            sp.add_argument(flag, dest=key, choices=("plda", "cosine"), default=default, help=help_)
        else:
            sp.add_argument(flag, dest=key, type=kind, default=default, help=help_)
    sp.add_argument("--kmeans-seed", type=int, default=d["asc"]["kmeans_seed"], help="k-means random seed")
    sp.add_argument("--max-p", type=int, default=d["asc"]["max_p"], help="largest neighbour count; 0 = ceil(n/2)")
    output(sp)

    sp = add("combine", cmd_combine, "combine per-channel RTTMs (given in channel order)")
    sp.add_argument("inputs", nargs="+", help="1 to 8 channel RTTM files")
    output(sp)

    o = d["ovd"]
    sp = add("ovd", cmd_ovd, "turn overlap posterior tracks into overlap segments")
    sp.add_argument("tracks", nargs="+", help="TRK1 tracks; tracks of one recording are averaged")
    sp.add_argument("--threshold", type=float, default=o["threshold"], help="inclusive decision threshold")
    sp.add_argument("--min-silence", type=float, default=o["min_silence"], help="fill gaps shorter than this")
    sp.add_argument("--min-overlap", type=float, default=o["min_overlap"], help="drop segments shorter than this")
    output(sp)

    sp = add("apply-ovd", cmd_apply_ovd, "add a second speaker inside detected overlap segments")
    sp.add_argument("--rttm", required=True, help="diarization RTTM")
    sp.add_argument("--overlaps", required=True, help="overlap RTTM as written by 'ovd'")
    output(sp)

    sp = add("fuse", cmd_fuse, "fuse several system RTTMs by rank-weighted voting")
    sp.add_argument("--inputs", nargs="+", required=True, help="system RTTM files")
    sp.add_argument("--mode", choices=MODES, default=d["fusion"]["mode"], help="voting rule")
    sp.add_argument("--rank-exponent", type=float, default=DEFAULT_RANK_EXPONENT, help="weight = rank ** -exponent")
    output(sp)

    sp = add("score", cmd_score, "score a hypothesis RTTM against a reference")
    sp.add_argument("--ref", required=True, help="reference RTTM")
    sp.add_argument("--hyp", required=True, help="hypothesis RTTM")
    sp.add_argument("--collar", type=float, default=DEFAULT_COLLAR, help="total collar width in seconds")
    sp.add_argument("--no-score-overlap", action="store_true", help="skip overlapped reference regions")
    output(sp)

    sp = add("sot", cmd_sot, "serialize a multi-speaker transcript")
    sp.add_argument("transcript", help="lines of '<start> <end> <speaker> <token> ...'")
    output(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ParseError as exc:
        print(f"mcdiar: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (pipeline.ConfigError, ValueError, OSError) as exc:
        print(f"mcdiar: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
