"""Planted-speaker meeting generator for end-to-end checks.

Builds a reference timeline with overlapping turns, then emits what the
pipeline consumes: per-channel window embeddings, a PLDA model fitted on
held-out synthetic speakers, a 36-sector DOA track and two noisy
overlap-detector tracks.

Each speaker sits at an azimuth and each channel microphone points at a
fixed direction. In a window with several active speakers, a channel's
embedding comes from whichever speaker is loudest there (active time times
directional gain), so different channels hear different speakers inside
overlaps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .embeddings import (
    EmbeddingSequence,
    FrameTrack,
    PLDAModel,
    estimate_plda,
    write_embeddings,
    write_frame_track,
    write_plda,
)
from .scoring import overlap_regions
from .timeline import Diarization, SpeakerTurn, total_duration, write_rttm

DOA_SECTORS = 36
DOA_SHIFT = 0.128
OVD_SHIFT = 0.008


@dataclass
class SyntheticMeeting:
    reference: Diarization
    channels: list[EmbeddingSequence]
    plda: PLDAModel
    doa: FrameTrack
    overlap_tracks: list[FrameTrack]
    speaker_azimuths: np.ndarray
    info: dict = field(default_factory=dict)

    def overlap_ratio(self) -> float:
        """Overlapped time over total speech time."""
        ov = total_duration(overlap_regions(self.reference))
        return ov / total_duration(self.reference.support())

    def write(self, directory) -> dict[str, list[str] | str]:
        """Write EMB1/TRK1/PLDA1/RTTM fixtures and return their paths."""
        os.makedirs(directory, exist_ok=True)
        paths: dict[str, list[str] | str] = {"embeddings": [], "overlap": []}
        for e in self.channels:
            p = os.path.join(directory, f"ch{e.channel}.emb")
            _write(p, write_embeddings(e))
            paths["embeddings"].append(p)
        paths["plda"] = os.path.join(directory, "plda.txt")
        _write(paths["plda"], write_plda(self.plda))
        paths["doa"] = os.path.join(directory, "doa.trk")
        _write(paths["doa"], write_frame_track(self.doa))
        for k, t in enumerate(self.overlap_tracks, start=1):
            p = os.path.join(directory, f"ovd{k}.trk")
            _write(p, write_frame_track(t))
            paths["overlap"].append(p)
        paths["reference"] = os.path.join(directory, "ref.rttm")
        _write(paths["reference"], write_rttm([self.reference]))
        return paths


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def planted_timeline(
    rng: np.random.Generator,
    n_speakers: int = 4,
    duration: float = 600.0,
    overlap_ratio: float = 0.2,
    turn_range: tuple[float, float] = (6.0, 16.0),
    recording_id: str = "synth",
) -> Diarization:
    """Random turn-taking with overlapping hand-overs.

    Consecutive turns overlap by a length drawn so that, on average, the
    overlapped fraction of speech is ``overlap_ratio``.
    """
    mean_turn = sum(turn_range) / 2.0
    # overlap o per hand-over: o / (mean_turn - o) = ratio
    mean_ov = overlap_ratio * mean_turn / (1.0 + overlap_ratio)
    turns = []
    t = float(rng.uniform(0.5, 2.0))
    prev = -1
    while True:
        spk = int(rng.integers(n_speakers))
        while spk == prev:
            spk = int(rng.integers(n_speakers))
        length = float(rng.uniform(*turn_range))
        end = min(t + length, duration)
        if end - t < 1.0:
            break
        turns.append(SpeakerTurn.make(t, end, f"spk{spk}"))
        prev = spk
        if end >= duration:
            break
        if rng.random() < 0.85:
            t = end - float(rng.uniform(0.6, 1.4)) * mean_ov / 0.85
        else:
            t = end + float(rng.uniform(0.2, 1.5))
    return Diarization(recording_id, tuple(turns))


def window_grid(support, win_len: float, win_shift: float):
    """Sliding windows inside every speech region; the last one is cut at the region end."""
    starts, ends = [], []
    for s, e in support:
        t = s
        while True:
            starts.append(round(t, 3))
            ends.append(round(min(t + win_len, e), 3))
            if t + win_len >= e - 1e-9:
                break
            t += win_shift
    return np.array(starts), np.array(ends)


def _activity_in(d: Diarization, starts, ends, speakers):
    act = np.zeros((len(starts), len(speakers)))
    ivs = d.speaker_intervals()
    for k, spk in enumerate(speakers):
        for s, e in ivs.get(spk, []):
            act[:, k] += np.clip(np.minimum(ends, e) - np.maximum(starts, s), 0.0, None)
    return act


def _gain(mic_deg: float, spk_deg: np.ndarray) -> np.ndarray:
    diff = np.deg2rad(mic_deg - spk_deg)
    return 1.0 + 0.6 * np.cos(diff)


def _sector_posterior(azimuths_deg):
    # soft bump over the sectors of each active source
    sectors = np.arange(DOA_SECTORS) * 10.0 + 5.0
    p = np.full(DOA_SECTORS, 0.02)
    for az in azimuths_deg:
        d = np.abs((sectors - az + 180.0) % 360.0 - 180.0)
        p = np.maximum(p, 0.9 * np.exp(-0.5 * (d / 12.0) ** 2))
    return p


def make_meeting(
    seed: int = 0,
    n_speakers: int = 4,
    duration: float = 600.0,
    overlap_ratio: float = 0.2,
    n_channels: int = 3,
    dim: int = 16,
    between_to_within: float = 10.0,
    win_len: float = 1.44,
    win_shift: float = 0.72,
    recording_id: str = "synth",
    n_train_speakers: int = 200,
) -> SyntheticMeeting:
    rng = np.random.default_rng(seed)
    ref = planted_timeline(rng, n_speakers, duration, overlap_ratio, recording_id=recording_id)
    speakers = [f"spk{k}" for k in range(n_speakers)]

    # speaker identities: between-class variance `between_to_within` x within
    offset = rng.normal(size=dim) * 2.0
    centers = rng.normal(size=(n_speakers, dim)) * np.sqrt(between_to_within)

    def draw(center, n):
        return offset + center + rng.normal(size=(n, dim))

    train = []
    for s in range(n_train_speakers):
        c = rng.normal(size=dim) * np.sqrt(between_to_within)
        for v in draw(c, 10):
            train.append((f"train{s}", v / np.linalg.norm(v)))
    plda = estimate_plda(train)

    azimuths = rng.permutation(DOA_SECTORS)[:n_speakers] * 10.0 + 5.0
    mic_dirs = np.arange(n_channels) * 360.0 / n_channels

    starts, ends = window_grid(ref.support(), win_len, win_shift)
    act = _activity_in(ref, starts, ends, speakers)
    channels = []
    for c in range(n_channels):
        loud = act * _gain(mic_dirs[c], azimuths)[None, :]
        dom = np.argmax(loud, axis=1)
        vecs = offset + centers[dom] + rng.normal(size=(len(dom), dim))
        channels.append(
            EmbeddingSequence(recording_id, c + 1, win_len, win_shift, starts, ends, vecs)
        )

    n_doa = int(np.ceil(duration / DOA_SHIFT))
    doa_centers = (np.arange(n_doa) + 0.5) * DOA_SHIFT
    ivs = ref.speaker_intervals()
    doa = np.empty((n_doa, DOA_SECTORS))
    for f, tc in enumerate(doa_centers):
        active = [
            azimuths[k]
            for k, spk in enumerate(speakers)
            if any(s <= tc < e for s, e in ivs.get(spk, []))
        ]
        doa[f] = _sector_posterior(active)
    doa = np.clip(doa + rng.normal(scale=0.03, size=doa.shape), 0.0, 1.0)
    doa_track = FrameTrack(recording_id, DOA_SHIFT, doa)

    n_ovd = int(np.ceil(duration / OVD_SHIFT))
    truth = np.zeros(n_ovd, dtype=bool)
    for s, e in overlap_regions(ref):
        truth[int(np.ceil(s / OVD_SHIFT - 0.5)) : int(np.ceil(e / OVD_SHIFT - 0.5))] = True
    tracks = []
    for k in range(2):
        base = np.where(truth, 0.75, 0.15)
        noise = rng.normal(scale=0.2, size=n_ovd)
        smooth = np.convolve(noise, np.ones(25) / 5.0, mode="same")
        tracks.append(
            FrameTrack(recording_id, OVD_SHIFT, np.clip(base + smooth, 0.0, 1.0)[:, None])
        )
    return SyntheticMeeting(
        ref, channels, plda, doa_track, tracks, azimuths,
        info={"seed": seed, "mic_dirs": mic_dirs},
    )


def blobs(
    rng: np.random.Generator,
    k: int,
    per_cluster: int = 20,
    dim: int = 16,
    within: float = 0.08,
):
    """``k`` tight direction clusters with near-orthogonal centres.

    Returns ``(x, labels)``. Centre pairs have cosine below 0.2 and points
    have cosine above 0.95 with their own centre for the default spread.
    """
    while True:
        c = rng.normal(size=(k, dim))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        cos = c @ c.T
        if k == 1 or np.max(cos[~np.eye(k, dtype=bool)]) < 0.2:
            break
    labels = np.repeat(np.arange(k), per_cluster)
    x = c[labels] + rng.normal(scale=within, size=(len(labels), dim))
    return x, labels
