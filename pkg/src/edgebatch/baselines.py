"""Comparison schedulers: static batching (StB) and no batching (NoB).

Both sit behind the same decision interface as the tree-search scheduler
so the simulator can swap them freely.  StB runs a fixed, overflow-safe
batch size with FIFO admission and no deadline awareness.  NoB hands each
idle GPU a single request, which then runs alone at a single device's
speed and memory share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import LlmSpec, QuantProfile
from .costs import (BatchPlan, NodeCompute, batch_cost, flops_autoregressive,
                    flops_initial, kv_cache_bytes_per_token, weight_bytes)
from .dftsp import SearchOutcome
from .feasibility import EdgeContext, Request, leq
from .radio import min_downlink_fraction, min_uplink_fraction


@dataclass
class GpuPool:
    """Per-device view of the node for the no-batching baseline."""

    device_count: int
    flops_per_device: float
    memory_per_device: float
    busy_until: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.device_count < 1:
            raise ValueError("device_count must be >= 1")
        if not self.busy_until:
            self.busy_until = [0.0] * self.device_count

    @classmethod
    def from_node(cls, node: NodeCompute) -> "GpuPool":
        return cls(node.gpu_count, node.per_gpu_flops, node.per_gpu_memory)


@dataclass
class SchedulerDecision:
    """What a scheduler chose for one epoch."""

    scheduled: list[Request] = field(default_factory=list)
    search_stats: SearchOutcome | None = None
    dropped: list[tuple[Request, str]] = field(default_factory=list)


def static_batch_size(spec: LlmSpec, quant: QuantProfile, node: NodeCompute,
                      slot_s: float, s_max: int, n_max: int) -> int:
    """Largest batch size that can never overflow memory or the compute slot.

    Sized against worst-case requests (maximal prompt and output lengths)
    so any admitted batch is safe.  Returns 0 on a node with no headroom.
    """
    m1 = weight_bytes(spec)
    if quant.alpha * m1 > node.memory_bytes:
        return 0
    kv_per_req = kv_cache_bytes_per_token(spec) * (s_max + n_max)
    mem_bound = int((node.memory_bytes / quant.alpha - m1) // kv_per_req)
    flops_per_req = flops_initial(spec, s_max) + flops_autoregressive(spec, s_max, n_max)
    lat_bound = int(slot_s * node.flops_per_s / (quant.beta * flops_per_req))
    return max(0, min(mem_bound, lat_bound))


def stb_schedule(queue, b: int, ctx: EdgeContext, delta: float,
                 accuracy_check: bool = True) -> SchedulerDecision:
    """FIFO admission of up to ``b`` requests.

    A request is admitted when it passes accuracy admission and its own
    bandwidth demands fit the slots; deadlines are not examined, so late
    completions surface as misses in the simulator.
    """
    chosen: list[Request] = []
    for r in queue:
        if len(chosen) >= b:
            break
        if accuracy_check and delta > r.tolerance:
            continue
        if min_uplink_fraction(r.prompt_tokens, r.link, ctx.radio) > 1.0:
            continue
        if min_downlink_fraction(r.output_tokens, r.link, ctx.radio) > 1.0:
            continue
        chosen.append(r)
    return SchedulerDecision(scheduled=chosen)


def nob_assign(queue, pool: GpuPool, now: float, ctx: EdgeContext, delta: float,
               accuracy_check: bool = True) -> tuple[SchedulerDecision, list[float]]:
    """Assign FIFO requests one per idle device.

    Each assignment runs alone at a single device's speed; the returned
    completion times mirror the scheduled list.  A request that cannot fit
    in one device's memory share is dropped with a reason.  Devices are
    idle once their previous work would be done by the time this epoch's
    uplink slot ends.
    """
    radio = ctx.radio
    ready_at = now + radio.uplink_slot_s
    idle = [i for i, t in enumerate(pool.busy_until) if t <= ready_at]
    decision = SchedulerDecision()
    completions: list[float] = []
    device = NodeCompute(pool.flops_per_device, pool.memory_per_device, 1)
    for r in queue:
        if not idle:
            break
        if accuracy_check and delta > r.tolerance:
            continue
        plan = BatchPlan(((r.prompt_tokens, r.output_tokens),), r.prompt_tokens)
        cost = batch_cost(ctx.llm, ctx.quant, plan, device)
        if not leq(cost.memory_bytes, pool.memory_per_device):
            decision.dropped.append((r, "exceeds per-device memory"))
            continue
        dev = idle.pop(0)
        start = max(pool.busy_until[dev], ready_at)
        pool.busy_until[dev] = start + cost.latency_s
        completions.append(pool.busy_until[dev] + radio.downlink_slot_s)
        decision.scheduled.append(r)
    return decision, completions
