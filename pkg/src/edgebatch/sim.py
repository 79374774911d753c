"""Epoch-slotted simulator: workload generation, scheduling loop, metrics.

Time is divided into fixed epochs, each opening with an uplink slot and
closing with a downlink slot around a chained compute slot.  Requests
arriving during one epoch are offered to the scheduler at the start of the
next; scheduled batches complete after the uplink slot, the batch compute
time, and the downlink slot.  A request counts toward throughput only when
that completion lands within its deadline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from .baselines import (GpuPool, SchedulerDecision, nob_assign, static_batch_size,
                        stb_schedule)
from .catalog import delta_ppl, get_model, get_profile, load_catalog
from .costs import BatchPlan, NodeCompute, batch_cost
from .dftsp import dftsp, exhaustive_optimal
from .feasibility import EdgeContext, Request, check_direct, filter_admissible, leq
from .radio import RadioConfig, UserLink, dbm_to_watts, sample_channel_power

SCHEDULERS = ("dftsp", "stb", "nob", "brute")
CHANNEL_MODES = ("per_user", "shared")


class ConfigError(ValueError):
    """A scenario field failed validation; the message names the field."""


@dataclass
class Scenario:
    """Fully resolved description of one simulation run."""

    model: str = "bloom-3b"
    quant_profile: str = "w8a16"
    scheduler: str = "dftsp"
    seed: int = 0
    arrival_rate: float = 50.0          # requests per second
    duration: float = 20.0              # seconds of arrivals
    epoch_s: float = 2.0
    # Radio (powers in dBm, converted once when the link model is built).
    uplink_bandwidth_hz: float = 20e6
    downlink_bandwidth_hz: float = 20e6
    uplink_power_dbm: float = 20.0
    downlink_power_dbm: float = 43.0
    noise_density_dbm_hz: float = -174.0
    uplink_slot_s: float = 0.25
    downlink_slot_s: float = 0.25
    bits_per_token: int = 16
    mean_channel_gain: float = 1e-3
    channel_mode: str = "per_user"
    # Node.
    gpu_count: int = 20
    flops_per_gpu: float = 1.33e12
    memory_per_gpu_bytes: float = 32e9
    # Workload distributions.
    output_classes: tuple[int, ...] = (128, 256, 512)
    prompt_choices: tuple[int, ...] = (128, 256, 512)
    deadline_range_s: tuple[float, float] = (0.5, 2.0)
    deadline_scale: float = 1.0
    tolerance_cap: float = 1.0
    # Behavior flags.
    pruning: bool = True
    inclusive_prune_bound: bool = False
    exact_tau: bool = False
    accuracy_check: bool = True
    admission_prefilter: bool = True
    compute_slot_cap: bool = True
    compare_pruning: bool = False
    compare_stride: int = 1
    verify_oracle: bool = False
    oracle_cap: int = 16
    debug_checks: bool = True
    # Optional catalog overrides (raw mapping, parsed on use).
    catalog_config: dict = field(default_factory=dict)

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"{name}: {msg}")

        need(self.arrival_rate >= 0, "arrival_rate", "must be >= 0")
        need(self.duration > 0, "duration", "must be > 0")
        need(self.epoch_s > 0, "epoch_s", "must be > 0")
        need(self.uplink_slot_s > 0, "uplink_slot_s", "must be > 0")
        need(self.downlink_slot_s > 0, "downlink_slot_s", "must be > 0")
        need(self.epoch_s >= self.uplink_slot_s + self.downlink_slot_s,
             "epoch_s", "must fit the uplink and downlink slots")
        need(self.uplink_bandwidth_hz > 0, "uplink_bandwidth_hz", "must be > 0")
        need(self.downlink_bandwidth_hz > 0, "downlink_bandwidth_hz", "must be > 0")
        need(self.bits_per_token >= 1, "bits_per_token", "must be >= 1")
        need(self.mean_channel_gain > 0, "mean_channel_gain", "must be > 0")
        need(self.channel_mode in CHANNEL_MODES, "channel_mode",
             f"must be one of {CHANNEL_MODES}")
        need(self.gpu_count >= 1, "gpu_count", "must be >= 1")
        need(self.flops_per_gpu > 0, "flops_per_gpu", "must be > 0")
        need(self.memory_per_gpu_bytes > 0, "memory_per_gpu_bytes", "must be > 0")
        need(len(self.output_classes) > 0, "output_classes", "must be nonempty")
        need(all(n >= 1 for n in self.output_classes), "output_classes",
             "entries must be >= 1")
        need(list(self.output_classes) == sorted(set(self.output_classes)),
             "output_classes", "must be strictly increasing")
        need(len(self.prompt_choices) > 0, "prompt_choices", "must be nonempty")
        need(all(s >= 1 for s in self.prompt_choices), "prompt_choices",
             "entries must be >= 1")
        lo, hi = self.deadline_range_s
        need(0 < lo <= hi, "deadline_range_s", "must satisfy 0 < low <= high")
        need(self.deadline_scale > 0, "deadline_scale", "must be > 0")
        need(self.tolerance_cap >= 0, "tolerance_cap", "must be >= 0")
        need(self.scheduler in SCHEDULERS, "scheduler",
             f"must be one of {SCHEDULERS}")
        need(self.compare_stride >= 1, "compare_stride", "must be >= 1")
        need(self.oracle_cap >= 1, "oracle_cap", "must be >= 1")
        try:
            llm, quant = resolve_catalog(self)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"model/quant_profile: {exc}") from exc
        try:
            delta_ppl(quant, llm.name)
        except KeyError as exc:
            raise ConfigError(f"quant_profile: {exc}") from exc


def resolve_catalog(sc: Scenario):
    """Resolve the scenario's model and quantization profile."""
    extra_models, extra_profiles = load_catalog(sc.catalog_config or {})
    llm = get_model(sc.model, extra_models)
    quant = get_profile(sc.quant_profile, extra_profiles)
    return llm, quant


def build_radio(sc: Scenario) -> RadioConfig:
    return RadioConfig(
        uplink_band_hz=sc.uplink_bandwidth_hz,
        downlink_band_hz=sc.downlink_bandwidth_hz,
        downlink_power_w=dbm_to_watts(sc.downlink_power_dbm),
        noise_density_w_hz=dbm_to_watts(sc.noise_density_dbm_hz),
        uplink_slot_s=sc.uplink_slot_s,
        downlink_slot_s=sc.downlink_slot_s,
        bits_per_token=sc.bits_per_token,
    )


def build_node(sc: Scenario) -> NodeCompute:
    return NodeCompute(
        flops_per_s=sc.gpu_count * sc.flops_per_gpu,
        memory_bytes=sc.gpu_count * sc.memory_per_gpu_bytes,
        gpu_count=sc.gpu_count,
    )


def build_context(sc: Scenario) -> tuple[EdgeContext, float]:
    """Edge context plus the PPL degradation of the configured profile."""
    llm, quant = resolve_catalog(sc)
    ctx = EdgeContext(
        llm=llm, quant=quant, radio=build_radio(sc), node=build_node(sc),
        slot_cap_s=sc.epoch_s if sc.compute_slot_cap else None,
    )
    return ctx, delta_ppl(quant, llm.name)


def resolved_mapping(sc: Scenario) -> dict:
    """Canonical nested mapping of every resolved scenario field."""
    out: dict = {}
    for f in fields(Scenario):
        value = getattr(sc, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


@dataclass
class EpochTrace:
    """Per-epoch instrumentation row."""

    epoch: int
    t_s: float
    queue_len: int
    candidates: int
    batch: int
    nodes_visited: int
    nodes_pruned: int
    nodes_visited_noprune: int | None
    memory_bytes: float
    latency_s: float
    completed: int
    missed_expired: int
    missed_late: int


@dataclass
class SimMetrics:
    """Counters and per-epoch trace of one simulation run."""

    duration_s: float = 0.0
    epochs: int = 0
    generated: int = 0
    scheduled_total: int = 0
    completed_total: int = 0
    missed_expired: int = 0
    missed_late: int = 0
    dropped_total: int = 0
    still_queued: int = 0
    throughput: float = 0.0
    nodes_visited_total: int = 0
    nodes_pruned_total: int = 0
    cmp_nodes_with_pruning: int | None = None
    cmp_nodes_without_pruning: int | None = None
    oracle_checks: int = 0
    oracle_mismatches: int = 0
    trace: list[EpochTrace] = field(default_factory=list)

    @property
    def missed_total(self) -> int:
        return self.missed_expired + self.missed_late


def complexity_reduction(with_pruning: float | None, without_pruning: float | None):
    """Node-count reduction in percent; None when no comparison is available."""
    if with_pruning is None or without_pruning is None or without_pruning <= 0:
        return None
    return 100.0 * (1.0 - with_pruning / without_pruning)


def generate_workload(sc: Scenario, rng) -> list[Request]:
    """Time-ordered request stream for one scenario.

    Inter-arrival times are exponential at the configured rate; lengths,
    deadlines, tolerances and channel gains are drawn independently per
    request, with a fixed number of draws each so that sweeps over scale
    parameters reuse identical underlying randomness.
    """
    out: list[Request] = []
    if sc.arrival_rate <= 0:
        return out
    p_up = dbm_to_watts(sc.uplink_power_dbm)
    lo, hi = sc.deadline_range_s
    t = 0.0
    i = 0
    while True:
        t += rng.exponential(1.0 / sc.arrival_rate)
        if t >= sc.duration:
            break
        prompt = int(rng.choice(sc.prompt_choices))
        output = int(rng.choice(sc.output_classes))
        deadline = sc.deadline_scale * float(rng.uniform(lo, hi))
        tolerance = sc.tolerance_cap * float(rng.uniform(0.0, 1.0))
        gain = sample_channel_power(rng, sc.mean_channel_gain)
        out.append(Request(
            id=i, prompt_tokens=prompt, output_tokens=output,
            deadline_s=deadline, tolerance=tolerance,
            link=UserLink(gain, p_up), arrival_s=t,
        ))
        i += 1
    return out


def _dftsp_candidates(queue, ctx, delta, sc: Scenario) -> list[Request]:
    """Accuracy filter plus optional drop of individually hopeless requests.

    A request that cannot meet its deadline even alone can never join a
    feasible batch (batch costs only grow), so removing it up front changes
    no decision; it stays queued and expires normally.
    """
    cands = filter_admissible(queue, delta) if sc.accuracy_check else list(queue)
    if sc.admission_prefilter:
        cands = [r for r in cands if check_direct((r,), ctx, r.prompt_tokens)]
    return cands


def run(sc: Scenario) -> SimMetrics:
    """Simulate one scenario and return its metrics."""
    sc.validate()
    ctx, delta = build_context(sc)
    radio = ctx.radio
    metrics = SimMetrics(duration_s=sc.duration)
    workload = generate_workload(sc, np.random.default_rng([sc.seed, 11]))
    chan_rng = np.random.default_rng([sc.seed, 22])
    metrics.generated = len(workload)
    pending = deque(workload)
    queue: list[Request] = []
    p_up = dbm_to_watts(sc.uplink_power_dbm)
    ladder = tuple(sc.output_classes)
    nepochs = max(1, math.ceil(sc.duration / sc.epoch_s))
    metrics.epochs = nepochs
    comparing = sc.compare_pruning and sc.scheduler == "dftsp"
    if comparing:
        metrics.cmp_nodes_with_pruning = 0
        metrics.cmp_nodes_without_pruning = 0
    gpu_pool = GpuPool.from_node(ctx.node) if sc.scheduler == "nob" else None
    stb_b = None
    if sc.scheduler == "stb":
        stb_b = static_batch_size(ctx.llm, ctx.quant, ctx.node, sc.epoch_s,
                                  max(sc.prompt_choices), max(sc.output_classes))
    oracle_stride = max(1, nepochs // 4)

    for e in range(1, nepochs + 1):
        t_e = e * sc.epoch_s
        while pending and pending[0].arrival_s < t_e:
            queue.append(pending.popleft())
        alive = []
        expired = 0
        for r in queue:
            if r.arrival_s + r.deadline_s <= t_e:
                expired += 1
            else:
                alive.append(r)
        queue = alive
        metrics.missed_expired += expired
        if sc.channel_mode == "shared":
            gain = sample_channel_power(chan_rng, sc.mean_channel_gain)
            for r in queue:
                r.link = UserLink(gain, p_up)
        for r in queue:
            r.waiting_s = t_e - r.arrival_s
        queue_len = len(queue)

        decision = SchedulerDecision()
        completions: list[float] = []
        candidates: list[Request] = []
        trace_np = None
        if sc.scheduler == "dftsp":
            candidates = _dftsp_candidates(queue, ctx, delta, sc)
            stats = dftsp(candidates, ctx, ladder=ladder, pruning=sc.pruning,
                          inclusive_bound=sc.inclusive_prune_bound,
                          exact_tau=sc.exact_tau)
            decision = SchedulerDecision(scheduled=stats.solution or [],
                                         search_stats=stats)
            if comparing and (e - 1) % sc.compare_stride == 0:
                other = dftsp(candidates, ctx, ladder=ladder, pruning=False,
                              inclusive_bound=sc.inclusive_prune_bound,
                              exact_tau=sc.exact_tau)
                if other.z_found != stats.z_found:
                    raise RuntimeError(
                        "pruned and unpruned searches disagree on batch size")
                metrics.cmp_nodes_with_pruning += stats.nodes_visited
                metrics.cmp_nodes_without_pruning += other.nodes_visited
                trace_np = other.nodes_visited
            if sc.verify_oracle and (e - 1) % oracle_stride == 0 \
                    and len(candidates) <= sc.oracle_cap:
                ref = exhaustive_optimal(candidates, ctx, cap=sc.oracle_cap)
                metrics.oracle_checks += 1
                if ref.z_found != stats.z_found:
                    metrics.oracle_mismatches += 1
        elif sc.scheduler == "brute":
            candidates = _dftsp_candidates(queue, ctx, delta, sc)
            if len(candidates) > sc.oracle_cap:
                raise ConfigError(
                    f"scheduler: brute refuses {len(candidates)} candidates "
                    f"(cap {sc.oracle_cap})")
            stats = exhaustive_optimal(candidates, ctx, cap=sc.oracle_cap)
            decision = SchedulerDecision(scheduled=stats.solution or [],
                                         search_stats=stats)
        elif sc.scheduler == "stb":
            candidates = queue
            decision = stb_schedule(queue, stb_b, ctx, delta, sc.accuracy_check)
        elif sc.scheduler == "nob":
            candidates = queue
            decision, completions = nob_assign(queue, gpu_pool, t_e, ctx, delta,
                                               sc.accuracy_check)

        batch = decision.scheduled
        mem_used = 0.0
        lat_used = 0.0
        if batch and sc.scheduler != "nob":
            padded = max(r.prompt_tokens for r in batch)
            plan = BatchPlan(tuple((r.prompt_tokens, r.output_tokens) for r in batch),
                             padded)
            cost = batch_cost(ctx.llm, ctx.quant, plan, ctx.node)
            mem_used, lat_used = cost.memory_bytes, cost.latency_s
            if sc.debug_checks and sc.scheduler in ("dftsp", "brute"):
                if not check_direct(batch, ctx, padded):
                    raise RuntimeError("scheduled batch violates the direct check")
            done = t_e + radio.uplink_slot_s + cost.latency_s + radio.downlink_slot_s
            completions = [done] * len(batch)

        completed = late = 0
        for r, done in zip(batch, completions):
            if leq(done - r.arrival_s, r.deadline_s):
                completed += 1
            else:
                late += 1
        metrics.scheduled_total += len(batch)
        metrics.completed_total += completed
        metrics.missed_late += late
        metrics.dropped_total += len(decision.dropped)
        gone = {id(r) for r in batch}
        gone.update(id(r) for r, _ in decision.dropped)
        queue = [r for r in queue if id(r) not in gone]
        stats = decision.search_stats
        if stats is not None:
            metrics.nodes_visited_total += stats.nodes_visited
            metrics.nodes_pruned_total += stats.nodes_pruned
        metrics.trace.append(EpochTrace(
            epoch=e, t_s=t_e, queue_len=queue_len,
            candidates=len(candidates), batch=len(batch),
            nodes_visited=stats.nodes_visited if stats else 0,
            nodes_pruned=stats.nodes_pruned if stats else 0,
            nodes_visited_noprune=trace_np,
            memory_bytes=mem_used, latency_s=lat_used,
            completed=completed, missed_expired=expired, missed_late=late,
        ))

    metrics.still_queued = len(queue) + len(pending)
    metrics.throughput = metrics.completed_total / sc.duration
    return metrics
