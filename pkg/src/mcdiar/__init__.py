"""Overlap-aware multi-channel speaker diarization from precomputed embeddings."""

from .timeline import Diarization, ParseError, Segment, SpeakerTurn, parse_rttm, write_rttm
from .scoring import DerReport, der, jer, optimal_mapping, ovd_prf
from .embeddings import EmbeddingSequence, FrameTrack, PLDAModel, estimate_plda, plda_llr, preprocess
from .clustering import ahc, auto_spectral, similarity_matrix
from .vbx import VbxParams, VbxResult, vb_hmm
from .combine import combine_channels
from .overlap import WindowPosteriors, assign_overlap, fuse_posteriors, posteriors_to_segments
from .fusion import SystemWeights, fuse_systems, map_labels_across_systems, rank_systems
from .sot import Utterance, serialize_sot

__version__ = "0.1.0"
