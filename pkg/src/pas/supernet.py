"""Relaxed search space and the forward passes over it.

Decision sites are named ``agg1..aggL``, ``pool1..poolL``, ``read0..readL``
and ``merge``. At each site a forward pass takes either a concrete kind (an
int) or a weight vector over all kinds; a weight vector mixes the outputs of
every kind. Pooling is mixed on shape-preserving coarse graphs, so edge
weights, features and the soft node mask are all summed with the same weights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .aggops import AggKind, aggregate
from .diffcore import Tensor, gumbel_noise, linear
from .diffcore import ops as T
from .poolops import PoolKind, pool
from .readmerge import MergeKind, ReadoutKind, classify, merge, readout
from .structure import GraphState

SITE_KINDS = {"agg": AggKind, "pool": PoolKind, "read": ReadoutKind, "merge": MergeKind}


def site_names(layers):
    return ([f"agg{l}" for l in range(1, layers + 1)]
            + [f"pool{l}" for l in range(1, layers + 1)]
            + [f"read{l}" for l in range(layers + 1)]
            + ["merge"])


def site_enum(site):
    return SITE_KINDS[site.rstrip("0123456789")]


def search_space_size(layers):
    size = 1
    for s in site_names(layers):
        size *= len(site_enum(s))
    return size


@dataclass
class ModelConfig:
    in_dim: int
    num_classes: int
    hidden: int = 32
    layers: int = 2
    ratio: float = 0.5
    act: str = "relu"
    sort_k: int = 10
    set2set_steps: int = 2
    z0_source: str = "input"  # or "agg1": read z^0 after the first aggregation


def _kind(enum_cls, k):
    try:
        return enum_cls[k] if isinstance(k, str) else enum_cls(k)
    except KeyError:
        raise ValueError(f"unknown {enum_cls.__name__} {k!r}") from None


@dataclass(frozen=True)
class DerivedArch:
    """One concrete architecture; kinds may be given as enum members, ints or names."""

    aggs: tuple
    pools: tuple
    readouts: tuple
    merge: MergeKind

    def __post_init__(self):
        object.__setattr__(self, "aggs", tuple(_kind(AggKind, k) for k in self.aggs))
        object.__setattr__(self, "pools", tuple(_kind(PoolKind, k) for k in self.pools))
        object.__setattr__(self, "readouts", tuple(_kind(ReadoutKind, k) for k in self.readouts))
        object.__setattr__(self, "merge", _kind(MergeKind, self.merge))
        if len(self.aggs) != len(self.pools) or len(self.readouts) != len(self.aggs) + 1:
            raise ValueError("architecture needs L aggregations, L poolings and L+1 readouts")

    @property
    def layers(self):
        return len(self.aggs)

    def choices(self):
        out = {}
        for l, (a, p) in enumerate(zip(self.aggs, self.pools), 1):
            out[f"agg{l}"] = a
            out[f"pool{l}"] = p
        for l, r in enumerate(self.readouts):
            out[f"read{l}"] = r
        out["merge"] = self.merge
        return out

    @classmethod
    def from_choices(cls, choices, layers):
        return cls(
            tuple(choices[f"agg{l}"] for l in range(1, layers + 1)),
            tuple(choices[f"pool{l}"] for l in range(1, layers + 1)),
            tuple(choices[f"read{l}"] for l in range(layers + 1)),
            choices["merge"],
        )

    def to_json(self):
        return {
            "layers": [{"agg": a.name, "pool": p.name} for a, p in zip(self.aggs, self.pools)],
            "readouts": [r.name for r in self.readouts],
            "merge": self.merge.name,
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(
                tuple(AggKind[x["agg"]] for x in obj["layers"]),
                tuple(PoolKind[x["pool"]] for x in obj["layers"]),
                tuple(ReadoutKind[r] for r in obj["readouts"]),
                MergeKind[obj["merge"]],
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"invalid architecture JSON: unknown key or kind {exc}") from None

    def __str__(self):
        return json.dumps(self.to_json())


def parse_pins(pins, layers):
    """Normalize ``{site: kind name or int}``; expands ``agg``/``pool``/``read`` to every layer."""
    out = {}
    for site, kind in (pins or {}).items():
        targets = [site]
        if site in ("agg", "pool"):
            targets = [f"{site}{l}" for l in range(1, layers + 1)]
        elif site == "read":
            targets = [f"read{l}" for l in range(layers + 1)]
        for t in targets:
            if t not in site_names(layers):
                raise ValueError(f"unknown decision site {t!r} for {layers} layers")
            enum_cls = site_enum(t)
            out[t] = _kind(enum_cls, kind)
    return out


def relax_weights(alpha, tau, noise=None):
    """Gumbel-Softmax weights ``softmax((alpha + noise) / tau)``."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    logits = alpha if noise is None else alpha + noise
    return T.softmax(logits * (1.0 / tau), axis=0)


class ArchParams:
    """One logit vector per unpinned decision site."""

    def __init__(self, layers, tau=0.2, pins=None, seed=0, init_scale=1e-3):
        self.layers = layers
        self.tau = tau
        self.pins = parse_pins(pins, layers)
        rng = np.random.default_rng([int(seed), 7919])
        self.alpha = {}
        for site in site_names(layers):
            n = len(site_enum(site))
            logits = init_scale * rng.standard_normal(n)
            if site not in self.pins:
                self.alpha[site] = Tensor(logits, requires_grad=True, name=f"alpha.{site}")

    def sites(self):
        return site_names(self.layers)

    def weights(self, rng=None):
        """Site weights for one forward pass: an int for pinned sites, else a
        Gumbel-Softmax vector (noise drawn from ``rng``, none when ``rng`` is None)."""
        out = {}
        for site in self.sites():
            if site in self.pins:
                out[site] = int(self.pins[site])
                continue
            alpha = self.alpha[site]
            noise = None if rng is None else gumbel_noise(rng, len(alpha.data))
            out[site] = relax_weights(alpha, self.tau, noise)
        return out

    def probabilities(self):
        """Noise-free operation weights per site (one-hot for pinned sites)."""
        out = {}
        for site in self.sites():
            if site in self.pins:
                out[site] = np.eye(len(site_enum(site)))[int(self.pins[site])]
            else:
                out[site] = relax_weights(self.alpha[site], self.tau).data
        return out

    def derive(self):
        return derive(self)


def derive(arch):
    """Keep the largest-logit kind at each site (lowest index on ties)."""
    choices = {}
    for site in arch.sites():
        if site in arch.pins:
            choices[site] = arch.pins[site]
        else:
            choices[site] = site_enum(site)(int(np.argmax(arch.alpha[site].data)))
    return DerivedArch.from_choices(choices, arch.layers)


def one_hot_weights(derived):
    """Exact one-hot weight vectors for every site of ``derived``."""
    out = {}
    for site, kind in derived.choices().items():
        v = np.zeros(len(site_enum(site)))
        v[int(kind)] = 1.0
        out[site] = Tensor(v)
    return out


# --------------------------------------------------------------------------
# mixed modules

def _terms(c, n, skip_zero):
    """(kind index, weight tensor or None) pairs for a site choice ``c``."""
    if isinstance(c, (int, np.integer)):
        return [(int(c), None)]
    return [(i, c[i]) for i in range(n) if not (skip_zero and c.data[i] == 0.0)]


def _weighted_sum(pairs):
    out = None
    for weight, value in pairs:
        term = value if weight is None else weight * value
        out = term if out is None else out + term
    return out


def embed(batch, params, cfg):
    """Input graph ``G^0``: features linearly projected to the hidden width."""
    g = GraphState.from_batch(batch)
    g.h = linear(g.h, params, "embed", cfg.in_dim, cfg.hidden)
    return g


def mixed_aggregation(g, c, params, site, cfg, skip_zero=True):
    # each aggregate output is already mask-multiplied, so the mixture is too
    h = _weighted_sum((w, aggregate(k, g, params, site, cfg.hidden, cfg.act))
                      for k, w in _terms(c, len(AggKind), skip_zero))
    return GraphState(g.topo, g.weight, h, g.mask)


def mixed_pooling(g, c, params, site, cfg, masked=True, skip_zero=True):
    terms = _terms(c, len(PoolKind), skip_zero)
    if len(terms) == 1 and terms[0][1] is None:
        return pool(terms[0][0], g, params, site, cfg.ratio, masked, cfg.act)[0]
    if not masked:
        raise ValueError("mixed pooling requires the shape-preserving mode")
    results = [(w, pool(k, g, params, site, cfg.ratio, True, cfg.act)[0]) for k, w in terms]
    return GraphState(
        g.topo,
        _weighted_sum((w, r.weight) for w, r in results),
        _weighted_sum((w, r.h) for w, r in results),
        _weighted_sum((w, r.mask) for w, r in results),
    )


def mixed_readout(g, c, params, site, cfg, skip_zero=True):
    return _weighted_sum(
        (w, readout(k, g, params, site, cfg.sort_k, cfg.set2set_steps))
        for k, w in _terms(c, len(ReadoutKind), skip_zero))


def mixed_merge(zs, c, params, cfg, skip_zero=True):
    return _weighted_sum((w, merge(k, zs, params, "merge"))
                         for k, w in _terms(c, len(MergeKind), skip_zero))


def forward(batch, weights, params, cfg, masked=True, skip_zero=True, trace=None):
    """Logits ``(B, C)`` for per-site ``weights`` (ints and/or weight vectors).

    With ``masked=False`` every site must be an int and pooling shrinks the
    graphs. ``trace``, when a list, receives the graph state after each layer.
    """
    g = embed(batch, params, cfg)
    zs = []
    if cfg.z0_source == "input":
        zs.append(mixed_readout(g, weights["read0"], params, "read0", cfg, skip_zero))
    for l in range(1, cfg.layers + 1):
        g = mixed_aggregation(g, weights[f"agg{l}"], params, f"agg{l}", cfg, skip_zero)
        if l == 1 and cfg.z0_source == "agg1":
            zs.append(mixed_readout(g, weights["read0"], params, "read0", cfg, skip_zero))
        g = mixed_pooling(g, weights[f"pool{l}"], params, f"pool{l}", cfg, masked, skip_zero)
        if trace is not None:
            trace.append(g)
        zs.append(mixed_readout(g, weights[f"read{l}"], params, f"read{l}", cfg, skip_zero))
    z = mixed_merge(zs, weights["merge"], params, cfg, skip_zero)
    logits = classify(z, params, cfg.num_classes)
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("forward pass produced non-finite logits")
    return logits


def supernet_forward(batch, arch, params, cfg, rng=None, weights=None, skip_zero=True, trace=None):
    """Relaxed forward pass; fresh Gumbel noise per unpinned site when ``rng`` is given."""
    if weights is None:
        weights = arch.weights(rng)
    return forward(batch, weights, params, cfg, masked=True, skip_zero=skip_zero, trace=trace)


def discrete_forward(batch, derived, params, cfg):
    """Forward pass of one concrete architecture; pooling removes nodes."""
    if derived.layers != cfg.layers:
        raise ValueError(f"architecture has {derived.layers} layers, config expects {cfg.layers}")
    weights = {s: int(k) for s, k in derived.choices().items()}
    return forward(batch, weights, params, cfg, masked=False)
