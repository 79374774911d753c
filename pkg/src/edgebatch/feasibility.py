"""Admission filtering, knapsack coefficients, and batch feasibility checks.

Scheduling a batch of exactly ``z`` requests is feasible when four budgets
hold: uplink fractions, downlink fractions, KV-cache memory, and the
deadline of every member.  Expanding the cost model turns those into sums
of per-request terms that are linear or quadratic in the output length,
against budgets that shrink affinely with ``z``.  This module derives the
coefficients of that reduced form and provides both the fast reduced check
and a direct evaluation of the original constraints for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .catalog import LlmSpec, QuantProfile, accuracy_admissible
from .costs import (NodeCompute, flops_autoregressive, flops_initial,
                    kv_cache_bytes_per_token, weight_bytes)
from .radio import (RadioConfig, UserLink, downlink_fraction_per_token,
                    uplink_fraction_per_token)

# Relative slack used in every constraint comparison to absorb float noise
# at boundaries.
REL_EPS = 1e-9


def leq(a: float, b: float, eps: float = REL_EPS) -> bool:
    """``a <= b`` with relative slack on the larger magnitude."""
    return a - b <= eps * max(1.0, abs(a), abs(b))


@dataclass
class Request:
    """One inference request plus its arrival/waiting state and link."""

    id: int
    prompt_tokens: int
    output_tokens: int
    deadline_s: float      # latency budget measured from arrival
    tolerance: float       # acceptable PPL degradation
    link: UserLink
    arrival_s: float = 0.0
    waiting_s: float = 0.0  # arrival to the scheduling epoch's uplink start

    def __post_init__(self):
        if self.prompt_tokens < 1:
            raise ValueError("prompt_tokens must be >= 1")
        if self.output_tokens < 1:
            raise ValueError("output_tokens must be >= 1")
        if self.deadline_s <= 0:
            raise ValueError("deadline_s must be strictly positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.waiting_s < 0:
            raise ValueError("waiting_s must be nonnegative")


@dataclass(frozen=True)
class EdgeContext:
    """Everything the feasibility math needs about the serving node.

    ``slot_cap_s``, when set, additionally requires the batch compute time
    to fit within that many seconds (the chained compute slot).
    """

    llm: LlmSpec
    quant: QuantProfile
    radio: RadioConfig
    node: NodeCompute
    slot_cap_s: float | None = None


class WeightsDoNotFitError(ValueError):
    """The scaled weight footprint alone exceeds node memory."""


@dataclass
class KnapsackCoefficients:
    """Per-request and shared coefficients of the reduced feasibility form.

    For a batch S of size z the reduced constraints read::

        sum k_up[i] * s_i            <= 1
        sum k_down[i] * n_i          <= 1
        sum n_i                      <= mem_budget(z)   (= k2 - padded_len * z)
        sum k4 * n_i + k5 * n_i**2   <= tau_budget(i, z) for the binding member

    k_up/k_down are per-request because each user's link differs; with a
    shared channel they collapse to constants.
    """

    ctx: EdgeContext
    padded_len: int
    k_up: dict[int, float] = field(default_factory=dict)
    k_down: dict[int, float] = field(default_factory=dict)
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    k5: float = 0.0

    def mem_budget(self, z: int) -> float:
        """Token budget for generated output at batch size z."""
        return self.k2 - self.padded_len * z

    def latency_weight(self, n: int) -> float:
        """Per-request contribution to the normalized latency sum."""
        return self.k4 * n + self.k5 * n * n

    def tau_base(self, req: Request) -> float:
        """z-independent part of a request's normalized deadline."""
        slots = self.ctx.radio.uplink_slot_s + self.ctx.radio.downlink_slot_s
        headroom = req.deadline_s - req.waiting_s - slots
        return headroom * self.ctx.node.flops_per_s / self.ctx.quant.beta

    def tau_budget(self, req: Request, z: int) -> float:
        """Normalized deadline of one request at batch size z."""
        return self.tau_base(req) - self.k3 * z

    def slot_budget(self, z: int) -> float:
        """Normalized compute-slot budget at batch size z (inf when uncapped)."""
        if self.ctx.slot_cap_s is None:
            return math.inf
        return (self.ctx.slot_cap_s * self.ctx.node.flops_per_s / self.ctx.quant.beta
                - self.k3 * z)


def filter_admissible(requests, delta: float) -> list[Request]:
    """Requests whose accuracy tolerance admits a degradation of ``delta``."""
    return [r for r in requests if accuracy_admissible(delta, r.tolerance)]


def derive_coefficients(ctx: EdgeContext, padded_len: int, requests) -> KnapsackCoefficients:
    """Build the reduced-form coefficients for a candidate pool.

    ``padded_len`` must cover every candidate prompt; the caller fixes it
    once per scheduling instance so the coefficients stay constant across
    the whole search.
    """
    spec, quant, radio, node = ctx.llm, ctx.quant, ctx.radio, ctx.node
    requests = list(requests)
    if any(r.prompt_tokens > padded_len for r in requests):
        raise ValueError("padded_len must cover every candidate prompt")
    m1 = weight_bytes(spec)
    headroom = node.memory_bytes / quant.alpha - m1
    if headroom < 0:
        raise WeightsDoNotFitError(
            f"weights need {m1} bytes but only {node.memory_bytes / quant.alpha:.4g} "
            f"scaled bytes are available"
        )
    kv_token = kv_cache_bytes_per_token(spec)
    d = spec.hidden_dim
    # Prompt-pass FLOPs per request divided into the z-proportional part and
    # the per-token generation base.
    gen_base = 8 * d * d + 4 * padded_len * d + 4 * d * spec.ffn_dim
    coeff = KnapsackCoefficients(
        ctx=ctx,
        padded_len=padded_len,
        k2=headroom / kv_token,
        k3=float(flops_initial(spec, padded_len) - spec.layers * gen_base),
        k4=float(spec.layers * (gen_base - 2 * d)),
        k5=float(2 * spec.layers * d),
    )
    for r in requests:
        coeff.k_up[r.id] = uplink_fraction_per_token(r.link, radio)
        coeff.k_down[r.id] = downlink_fraction_per_token(r.link, radio)
    return coeff


def check_knapsack(subset, coeff: KnapsackCoefficients, z: int, tau_min: float) -> bool:
    """Fast feasibility check in the reduced form.

    ``tau_min`` is the normalized deadline budget the caller holds the
    batch to (typically the pool's worst member, which is conservative).
    """
    subset = list(subset)
    if len(subset) != z:
        return False
    up = dn = lat = 0.0
    mem = 0
    for r in subset:
        n = r.output_tokens
        up += coeff.k_up[r.id] * r.prompt_tokens
        dn += coeff.k_down[r.id] * n
        mem += n
        lat += coeff.latency_weight(n)
    cap = min(tau_min, coeff.slot_budget(z))
    return (leq(up, 1.0) and leq(dn, 1.0)
            and leq(mem, coeff.mem_budget(z)) and leq(lat, cap))


def check_direct(subset, ctx: EdgeContext, padded_len: int) -> bool:
    """Evaluate the original constraints on a batch, without reformulation.

    Checks total uplink and downlink fractions, the memory footprint, every
    member's deadline, and the compute-slot cap when configured.  Accuracy
    admission is a precondition of the candidate pool, not re-checked here.
    """
    subset = list(subset)
    spec, quant, radio, node = ctx.llm, ctx.quant, ctx.radio, ctx.node
    z = len(subset)
    up = dn = 0.0
    for r in subset:
        up += r.prompt_tokens * uplink_fraction_per_token(r.link, radio)
        dn += r.output_tokens * downlink_fraction_per_token(r.link, radio)
    if not (leq(up, 1.0) and leq(dn, 1.0)):
        return False
    kv_token = kv_cache_bytes_per_token(spec)
    mem = weight_bytes(spec) + kv_token * padded_len * z
    mem += kv_token * sum(r.output_tokens for r in subset)
    if not leq(quant.alpha * mem, node.memory_bytes):
        return False
    flops = z * flops_initial(spec, padded_len) if z else 0
    for r in subset:
        flops += flops_autoregressive(spec, padded_len, r.output_tokens)
    compute_s = quant.beta * flops / node.flops_per_s
    if ctx.slot_cap_s is not None and not leq(compute_s, ctx.slot_cap_s):
        return False
    slots = radio.uplink_slot_s + radio.downlink_slot_s
    for r in subset:
        if not leq(r.waiting_s + slots + compute_s, r.deadline_s):
            return False
    return True
