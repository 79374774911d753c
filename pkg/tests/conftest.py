"""Shared helpers: randomized small scheduling instances for oracle tests.

Instances are sized so that exhaustive subset enumeration stays cheap and
scaled so that each of the four budgets (uplink, downlink, memory,
deadline) is the binding one on a healthy share of instances.
"""

from __future__ import annotations

import numpy as np

from edgebatch import (EdgeContext, LlmSpec, NodeCompute, QuantProfile, RadioConfig,
                       Request, UserLink, dbm_to_watts, flops_autoregressive,
                       flops_initial, kv_cache_bytes_per_token, weight_bytes)

LADDER_POOL = (16, 32, 64, 128, 256)


def toy_llm(rng) -> LlmSpec:
    head_count = int(rng.choice([2, 4]))
    head_dim = int(rng.choice([8, 16]))
    dim = head_count * head_dim
    return LlmSpec("toy", layers=int(rng.integers(1, 5)), hidden_dim=dim,
                   head_count=head_count, head_dim=head_dim, ffn_dim=4 * dim)


def random_instance(rng, max_requests: int = 14, max_classes: int = 3,
                    min_requests: int = 0, slot_cap_s: float | None = None):
    """One random scheduling instance: (ladder, context, requests).

    The node and radio are scaled from random target batch sizes per
    resource so that any of the constraints can end up binding.
    """
    ncls = int(rng.integers(1, max_classes + 1))
    ladder = tuple(sorted(int(v) for v in
                          rng.choice(LADDER_POOL, size=ncls, replace=False)))
    llm = toy_llm(rng)
    quant = QuantProfile("toy-q", 8, 16,
                         alpha=float(rng.choice([0.25, 0.5, 1.0])),
                         beta=float(rng.choice([0.7, 0.8, 1.0])),
                         delta_ppl_by_model={"toy": 0.0})
    nreq = int(rng.integers(min_requests, max_requests + 1))

    # A share of "roomy" instances pushes the feasible batch size up so the
    # search gets exercised on deeper trees too.
    roomy = rng.random() < 0.3
    requests = []
    p_up = dbm_to_watts(20.0)
    for i in range(nreq):
        gain = float(rng.exponential(1e-3))
        requests.append(Request(
            id=i,
            prompt_tokens=int(rng.integers(8, 257)),
            output_tokens=int(rng.choice(ladder)),
            deadline_s=float(rng.uniform(0.2, 2.5)) * (2.0 if roomy else 1.0),
            tolerance=float(rng.uniform(0.0, 1.0)),
            link=UserLink(gain, p_up),
            waiting_s=float(rng.uniform(0.0, 0.8)),
        ))

    # Radio sized so uplink/downlink budgets bind at a few requests on some
    # instances and are slack on others.
    band = float(rng.uniform(2e4, 2e6))
    radio = RadioConfig(
        uplink_band_hz=band,
        downlink_band_hz=float(rng.uniform(2e4, 2e6)),
        downlink_power_w=dbm_to_watts(43.0),
        noise_density_w_hz=dbm_to_watts(-174.0),
        uplink_slot_s=float(rng.uniform(0.1, 0.3)),
        downlink_slot_s=float(rng.uniform(0.1, 0.3)),
    )

    # Compute speed hits a latency wall around a random batch size; memory
    # runs out around another.
    pad = max((r.prompt_tokens for r in requests), default=64)
    per_req_flops = (flops_initial(llm, pad)
                     + flops_autoregressive(llm, pad, int(np.median(ladder))))
    z_lat = float(rng.uniform(0.5, 10.0)) * (2.0 if roomy else 1.0)
    speed = quant.beta * per_req_flops * z_lat / 1.0
    z_mem = float(rng.uniform(0.0, 10.0)) * (2.0 if roomy else 1.0)
    kv = kv_cache_bytes_per_token(llm) * (pad + max(ladder))
    memory = quant.alpha * (weight_bytes(llm) + z_mem * kv)
    node = NodeCompute(flops_per_s=max(speed, 1e6), memory_bytes=max(memory, 1.0),
                       gpu_count=int(rng.integers(1, 5)))
    ctx = EdgeContext(llm, quant, radio, node, slot_cap_s=slot_cap_s)
    return ladder, ctx, requests


def random_subset(rng, requests):
    if not requests:
        return []
    size = int(rng.integers(0, len(requests) + 1))
    idx = rng.choice(len(requests), size=size, replace=False)
    return [requests[int(i)] for i in sorted(idx)]
