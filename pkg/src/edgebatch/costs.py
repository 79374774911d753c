"""Analytical memory and latency model for batched decoder inference.

Costs split into the prompt pass (all prompt tokens through the stack,
padded to a common length) and the generation passes (one token per full
pass, attending over everything cached so far).  Byte counts are exact
integers; FLOP counts are exact Python integers and only turn into floats
when divided by a device speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .catalog import LlmSpec, QuantProfile


@dataclass(frozen=True)
class NodeCompute:
    """Aggregate compute resources of the edge node."""

    flops_per_s: float
    memory_bytes: float
    gpu_count: int = 1

    def __post_init__(self):
        if self.flops_per_s <= 0 or self.memory_bytes <= 0 or self.gpu_count <= 0:
            raise ValueError("node resources must be strictly positive")

    @property
    def per_gpu_flops(self) -> float:
        return self.flops_per_s / self.gpu_count

    @property
    def per_gpu_memory(self) -> float:
        return self.memory_bytes / self.gpu_count


@dataclass(frozen=True)
class BatchPlan:
    """One batch: (prompt, output) token counts plus the shared padded length."""

    entries: tuple[tuple[int, int], ...]
    padded_len: int

    def __post_init__(self):
        for s, n in self.entries:
            if s > self.padded_len:
                raise ValueError(f"prompt length {s} exceeds padded length {self.padded_len}")
            if n < 1:
                raise ValueError("every output length must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)


class BatchCost(NamedTuple):
    memory_bytes: float
    latency_s: float


def weight_bytes(spec: LlmSpec) -> int:
    """Bytes needed to hold the decoder stack's weight matrices."""
    bpp = spec.bytes_per_param
    per_layer = (4 * bpp * spec.hidden_dim * spec.head_dim * spec.head_count
                 + 2 * bpp * spec.hidden_dim * spec.ffn_dim)
    return spec.layers * per_layer


def kv_cache_bytes_per_token(spec: LlmSpec) -> int:
    """Bytes of key+value cache one token occupies across all layers."""
    return 2 * spec.bytes_per_param * spec.layers * spec.hidden_dim


def kv_bytes_initial(spec: LlmSpec, padded_len: int, batch: int) -> int:
    """KV-cache bytes after the prompt pass for ``batch`` padded prompts."""
    if batch < 0:
        raise ValueError("batch must be nonnegative")
    return kv_cache_bytes_per_token(spec) * padded_len * batch


def kv_bytes_autoregressive(spec: LlmSpec, output_tokens) -> int:
    """KV-cache bytes added by generation across all requests in the batch."""
    return kv_cache_bytes_per_token(spec) * sum(output_tokens)


def flops_initial(spec: LlmSpec, padded_len: int) -> int:
    """FLOPs of the prompt pass for one request at the given padded length.

    Per layer: QKV projections, attention score/value products with the
    output projection, and the two FFN matmuls.
    """
    if padded_len < 1:
        raise ValueError("padded_len must be >= 1")
    s, d, f = padded_len, spec.hidden_dim, spec.ffn_dim
    per_layer = 6 * s * d * d + (4 * s * s * d + 2 * s * d * d) + 4 * s * d * f
    return spec.layers * per_layer


def flops_autoregressive(spec: LlmSpec, padded_len: int, output_tokens: int) -> int:
    """FLOPs of the generation passes for one request (closed form).

    The first output token comes out of the prompt pass, so a request with
    ``output_tokens == 1`` costs nothing here.  Attention length uses the
    average-context approximation, which makes the closed form equal the
    per-step summation exactly (see flops_autoregressive_stepwise).
    """
    if output_tokens < 1:
        raise ValueError("output_tokens must be >= 1")
    d = spec.hidden_dim
    base = 8 * d * d + 4 * padded_len * d + 4 * d * spec.ffn_dim
    return spec.layers * (output_tokens - 1) * (base + 2 * d * output_tokens)


def flops_autoregressive_stepwise(spec: LlmSpec, padded_len: int, output_tokens: int) -> int:
    """Independent per-step summation of the generation cost.

    Iterates over output positions with the running cache length; kept as a
    cross-check oracle for the closed form.
    """
    if output_tokens < 1:
        raise ValueError("output_tokens must be >= 1")
    d = spec.hidden_dim
    base = 8 * d * d + 4 * padded_len * d + 4 * d * spec.ffn_dim
    total = 0
    for step in range(1, output_tokens):
        total += base + 4 * d * step
    return spec.layers * total


def batch_cost(spec: LlmSpec, quant: QuantProfile, plan: BatchPlan,
               node: NodeCompute, weight_copies: int = 1) -> BatchCost:
    """Memory footprint and compute latency of executing one batch.

    Memory is the quantization-scaled sum of weights (counted
    ``weight_copies`` times) and both KV-cache stages; latency is the
    quantization-scaled total FLOPs divided by the node speed.
    """
    batch = len(plan)
    out_lens = [n for _, n in plan.entries]
    mem = (weight_copies * weight_bytes(spec)
           + kv_bytes_initial(spec, plan.padded_len, batch)
           + kv_bytes_autoregressive(spec, out_lens))
    flops = batch * flops_initial(spec, plan.padded_len) if batch else 0
    for n in out_lens:
        flops += flops_autoregressive(spec, plan.padded_len, n)
    return BatchCost(memory_bytes=quant.alpha * mem,
                     latency_s=quant.beta * flops / node.flops_per_s)
