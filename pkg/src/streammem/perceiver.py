"""Instruction-aware perceiver block and the Stage-1 orchestrator.

Each perceiver layer runs three pre-norm residual sublayers per sub-clip:
per-frame cross-attention from the query states onto the frame tokens with
instruction rows appended as extra keys/values, bidirectional self-attention
across the sub-clip's frames taken independently at each query index, and a
position-wise feed-forward. In "final" temporal mode the temporal sublayer
runs once after the whole stack (using the last layer's temporal weights)
instead of inside every layer.

The sublayer helpers accept autodiff Vars as well as ndarrays so gradient
checks exercise the same composition as the production path.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, concat_rows
from .memory import (FeatureBuffer, MemoryBank, QueryBank, append,
                     buffer_store, read_context, write_frame)
from .stream import FrameTokenStream, InstructionEncoding, SubClip, iter_subclips
from .tensor import AttentionParams, attention, gelu, layer_norm


@dataclass
class PerceiverLayerParams:
    cross: AttentionParams
    temporal: AttentionParams
    w1: np.ndarray  # (d, 4d)
    b1: np.ndarray  # (4d,)
    w2: np.ndarray  # (4d, d)
    b2: np.ndarray  # (d,)
    ffn_ln_gain: np.ndarray
    ffn_ln_bias: np.ndarray


@dataclass
class PerceiverParams:
    layers: list  # of PerceiverLayerParams
    n_queries: int  # N_Q, equal to the read-query count
    d: int
    temporal_mode: str = "per_layer"


@dataclass
class PerceivedClip:
    subclip_index: int
    frames: list  # one (N_Q, d) matrix per frame of the sub-clip


def cross_sublayer(state, kv, layer: PerceiverLayerParams):
    normed = layer_norm(state, layer.cross.ln_gain, layer.cross.ln_bias)
    return state + attention(normed, kv, kv, layer.cross)


def ffn_sublayer(state, layer: PerceiverLayerParams):
    normed = layer_norm(state, layer.ffn_ln_gain, layer.ffn_ln_bias)
    return state + (gelu(normed @ layer.w1 + layer.b1) @ layer.w2 + layer.b2)


def temporal_sublayer(states, params: AttentionParams):
    """Bidirectional self-attention over the frame axis, independently at
    each query index. `states` is a list of F (N_Q, d) matrices."""
    n_frames = len(states)
    if isinstance(states[0], Var):
        n_q = states[0].shape[0]
        per_query = []
        for q in range(n_q):
            seq = concat_rows([s.rows(q, q + 1) for s in states])
            normed = layer_norm(seq, params.ln_gain, params.ln_bias)
            per_query.append(seq + attention(normed, normed, normed, params))
        return [concat_rows([per_query[q].rows(j, j + 1) for q in range(n_q)])
                for j in range(n_frames)]
    stacked = np.stack(states)  # (F, N_Q, d)
    out = np.empty_like(stacked)
    for q in range(stacked.shape[1]):
        seq = stacked[:, q, :]
        normed = layer_norm(seq, params.ln_gain, params.ln_bias)
        out[:, q, :] = seq + attention(normed, normed, normed, params)
    return [out[j] for j in range(n_frames)]


def _frame_keys(clip_frames, instruction: InstructionEncoding):
    """Per-frame key/value matrices: raw frame tokens with the instruction
    rows appended."""
    if instruction.tokens.shape[0] == 0:
        return [np.asarray(f, dtype=np.float64) for f in clip_frames]
    return [np.concatenate([f, instruction.tokens], axis=0)
            for f in clip_frames]


def perceive_subclip(clip: SubClip, context, instruction: InstructionEncoding,
                     params: PerceiverParams) -> PerceivedClip:
    """Refine one sub-clip into per-frame query states.

    Every frame starts from the same read context; instruction rows are
    appended to the keys/values of every layer's cross-attention.
    """
    if len(clip) < 1:
        raise ValueError("sub-clip is empty")
    ctx_shape = context.shape if not isinstance(context, Var) else context.value.shape
    if ctx_shape != (params.n_queries, params.d):
        raise ValueError("context must be N_Q x d")
    keys = _frame_keys(clip.frames, instruction)
    if isinstance(context, Var):
        states = [context for _ in range(len(clip))]
    else:
        states = [context.copy() for _ in range(len(clip))]
    for layer in params.layers:
        states = [cross_sublayer(s, kv, layer) for s, kv in zip(states, keys)]
        if params.temporal_mode == "per_layer":
            states = temporal_sublayer(states, layer.temporal)
        states = [ffn_sublayer(s, layer) for s in states]
    if params.temporal_mode == "final":
        states = temporal_sublayer(states, params.layers[-1].temporal)
    return PerceivedClip(subclip_index=clip.index, frames=states)


def process_stream(stream: FrameTokenStream, instruction: InstructionEncoding,
                   queries: QueryBank, params: PerceiverParams, F: int,
                   residual_read: bool = True, on_subclip=None):
    """Run the full read-perceive-write cycle over a stream.

    Sub-clips are processed strictly in order; per sub-clip the bank is read
    once, the clip perceived, and every frame buffered raw and written to
    memory. Returns the populated (bank, buffer).
    """
    W = queries.n_write
    bank = MemoryBank(W=W, d=params.d)
    buffer = FeatureBuffer()
    for clip in iter_subclips(stream, F):
        context = read_context(bank, queries, residual=residual_read)
        perceived = perceive_subclip(clip, context, instruction, params)
        for offset, frame_index in enumerate(range(clip.start, clip.end)):
            buffer_store(buffer, frame_index, clip.frames[offset])
            entry = write_frame(perceived.frames[offset], queries,
                                frame_index, clip.index)
            append(bank, entry)
        if on_subclip is not None:
            on_subclip(clip, bank, buffer)
    return bank, buffer
