"""TIN1 / TIN2 network graphs: construction, initialization, forward pass.

Both variants are built from three blocks.  A Feature Extractor is a 3x3
convolution (the first one starts as a bank of directional gradient
kernels) followed by a rectifier, so paired opposite-direction kernels act
like half-wave gradient magnitudes.  An Enrichment block runs parallel
dilated 3x3 convolutions, sums the branch outputs and rectifies the sum.
A Summarizer is a linear 1x1 convolution down to 8 feature channels.
Every Summarizer gets a 1x1 sigmoid side head; the fused output is a 1x1
sigmoid convolution over combined Summarizer features.

TIN2 stacks a second stage on a 2x max-pooled copy of the first stage's
features and bilinearly upsamples the stage-2 outputs back to full
resolution.  Odd-sized TIN2 inputs are reflect-padded to even sizes and
the outputs cropped back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import directional_bank
from .tensor import (
    Tensor,
    add,
    concat_channels,
    conv2d,
    crop_topleft,
    max_pool_2x2,
    pad_reflect,
    relu,
    resize_bilinear,
    sigmoid,
)

# Smallest input size the public prediction API accepts.
MIN_INPUT_SIZE = 16

DEFAULT_DILATIONS = (1, 2, 4, 8)
SUMMARIZER_CHANNELS = 8


@dataclass(frozen=True)
class EnrichmentSpec:
    """Channel plan for one Enrichment block."""
    in_channels: int
    out_channels: int = 32
    dilation_rates: tuple[int, ...] = DEFAULT_DILATIONS

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if not self.dilation_rates:
            raise ValueError("dilation_rates must be non-empty")
        if any(r < 1 for r in self.dilation_rates):
            raise ValueError("dilation rates must be strictly positive")
        object.__setattr__(self, "dilation_rates", tuple(int(r) for r in self.dilation_rates))


@dataclass
class LayerInfo:
    name: str
    kind: str
    detail: str
    params: int


@dataclass
class NetworkGraph:
    """Ordered parameter store plus the wiring metadata for one variant."""
    variant: str
    side_output_count: int
    enrichment_specs: tuple[EnrichmentSpec, ...]
    params: dict[str, Tensor] = field(default_factory=dict)
    layers: list[LayerInfo] = field(default_factory=list)

    def add_param(self, name: str, shape) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.zeros(shape), requires_grad=True)
        self.params[name] = t
        return t

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()


def _add_conv(graph: NetworkGraph, name: str, cin: int, cout: int, k: int,
              dilation: int = 1, kind: str = "conv") -> None:
    graph.add_param(f"{name}.weight", (cout, cin, k, k))
    graph.add_param(f"{name}.bias", (cout,))
    n_params = cout * cin * k * k + cout
    detail = f"{cin}->{cout}, {k}x{k}" + (f", dilation {dilation}" if dilation > 1 else "")
    graph.layers.append(LayerInfo(name, kind, detail, n_params))


def _add_enrichment(graph: NetworkGraph, name: str, spec: EnrichmentSpec) -> None:
    for rate in spec.dilation_rates:
        _add_conv(graph, f"{name}.d{rate}", spec.in_channels, spec.out_channels, 3,
                  dilation=rate, kind="enrichment branch")


def _add_stage_heads(graph: NetworkGraph, idx: int, spec: EnrichmentSpec) -> None:
    _add_enrichment(graph, f"enrich{idx}", spec)
    _add_conv(graph, f"sum{idx}", spec.out_channels, SUMMARIZER_CHANNELS, 1, kind="summarizer")
    _add_conv(graph, f"head{idx}", SUMMARIZER_CHANNELS, 1, 1, kind="side head")


def build_tin1(enrichment: EnrichmentSpec | None = None) -> NetworkGraph:
    """Two Feature Extractors, each with Enrichment/Summarizer/side head,
    fused by a 1x1 convolution over the added Summarizer features."""
    enrichment = enrichment or EnrichmentSpec(in_channels=16)
    if enrichment.in_channels != 16:
        raise ValueError("TIN1 enrichment must take the 16 extractor channels")
    graph = NetworkGraph(variant="tin1", side_output_count=2, enrichment_specs=(enrichment,))
    _add_conv(graph, "fe1", 3, 16, 3, kind="feature extractor")
    _add_conv(graph, "fe2", 16, 16, 3, kind="feature extractor")
    _add_stage_heads(graph, 1, enrichment)
    _add_stage_heads(graph, 2, enrichment)
    _add_conv(graph, "fuse", SUMMARIZER_CHANNELS, 1, 1, kind="fusion")
    return graph


def build_tin2(enrichment1: EnrichmentSpec | None = None,
               enrichment2: EnrichmentSpec | None = None) -> NetworkGraph:
    """TIN1 body (without its private fusion) plus a pooled 64-filter second
    stage; stage-2 outputs are upsampled and fused with stage 1."""
    enrichment1 = enrichment1 or EnrichmentSpec(in_channels=16)
    enrichment2 = enrichment2 or EnrichmentSpec(in_channels=64)
    if enrichment1.in_channels != 16:
        raise ValueError("TIN2 stage-1 enrichment must take 16 channels")
    if enrichment2.in_channels != 64:
        raise ValueError("TIN2 stage-2 enrichment must take 64 channels")
    graph = NetworkGraph(variant="tin2", side_output_count=4,
                         enrichment_specs=(enrichment1, enrichment2))
    _add_conv(graph, "fe1", 3, 16, 3, kind="feature extractor")
    _add_conv(graph, "fe2", 16, 16, 3, kind="feature extractor")
    _add_stage_heads(graph, 1, enrichment1)
    _add_stage_heads(graph, 2, enrichment1)
    _add_conv(graph, "fe3", 16, 64, 3, kind="feature extractor")
    _add_conv(graph, "fe4", 64, 64, 3, kind="feature extractor")
    _add_stage_heads(graph, 3, enrichment2)
    _add_stage_heads(graph, 4, enrichment2)
    _add_conv(graph, "fuse", 2 * SUMMARIZER_CHANNELS, 1, 1, kind="fusion")
    return graph


def init_params(graph: NetworkGraph, seed: int) -> None:
    """Directional-gradient start for FE1, Gaussian(0, 0.01) elsewhere, zero biases.

    The 16 bank kernels are replicated over the 3 input channels at 1/3
    weight each, so the channel-summed response equals the grayscale-mean
    directional gradient.  Values are rounded through float32 so a fresh
    graph survives the float32 checkpoint format bit-exactly.
    """
    rng = np.random.default_rng(seed)
    bank = directional_bank(16)
    for name, t in graph.params.items():
        if name == "fe1.weight":
            w = np.stack([np.repeat(k.weights[None, :, :], 3, axis=0) / 3.0 for k in bank])
            values = w
        elif name.endswith(".bias"):
            values = np.zeros(t.data.shape)
        else:
            values = rng.normal(0.0, 0.01, size=t.data.shape)
        t.data[...] = values.astype(np.float32).astype(np.float64)
    graph.zero_grads()


def param_count(graph: NetworkGraph) -> int:
    return sum(int(np.prod(t.data.shape)) for t in graph.params.values())


def _enrich(graph, idx, x):
    spec = graph.enrichment_specs[0 if idx <= 2 else 1]
    out = None
    for rate in spec.dilation_rates:
        branch = conv2d(x, graph.params[f"enrich{idx}.d{rate}.weight"],
                        graph.params[f"enrich{idx}.d{rate}.bias"], dilation=rate)
        out = branch if out is None else add(out, branch)
    return relu(out)


def _summarize(graph, idx, features):
    enriched = _enrich(graph, idx, features)
    return conv2d(enriched, graph.params[f"sum{idx}.weight"], graph.params[f"sum{idx}.bias"])


def _head_logits(graph, idx, summarized):
    return conv2d(summarized, graph.params[f"head{idx}.weight"], graph.params[f"head{idx}.bias"])


def _forward_tin1(graph, x):
    p = graph.params
    a1 = relu(conv2d(x, p["fe1.weight"], p["fe1.bias"]))
    a2 = relu(conv2d(a1, p["fe2.weight"], p["fe2.bias"]))
    s1 = _summarize(graph, 1, a1)
    s2 = _summarize(graph, 2, a2)
    sides = [sigmoid(_head_logits(graph, 1, s1)), sigmoid(_head_logits(graph, 2, s2))]
    fused = sigmoid(conv2d(add(s1, s2), p["fuse.weight"], p["fuse.bias"]))
    return sides, fused


def _forward_tin2(graph, x):
    p = graph.params
    n, c, h, w = x.data.shape
    pad_b, pad_r = h % 2, w % 2
    if pad_b or pad_r:
        x = pad_reflect(x, pad_b, pad_r)
    eh, ew = h + pad_b, w + pad_r

    a1 = relu(conv2d(x, p["fe1.weight"], p["fe1.bias"]))
    a2 = relu(conv2d(a1, p["fe2.weight"], p["fe2.bias"]))
    s1 = _summarize(graph, 1, a1)
    s2 = _summarize(graph, 2, a2)

    pooled = max_pool_2x2(a2)
    a3 = relu(conv2d(pooled, p["fe3.weight"], p["fe3.bias"]))
    a4 = relu(conv2d(a3, p["fe4.weight"], p["fe4.bias"]))
    s3 = _summarize(graph, 3, a3)
    s4 = _summarize(graph, 4, a4)

    side_logits = [
        _head_logits(graph, 1, s1),
        _head_logits(graph, 2, s2),
        resize_bilinear(_head_logits(graph, 3, s3), eh, ew),
        resize_bilinear(_head_logits(graph, 4, s4), eh, ew),
    ]
    stage1 = add(s1, s2)
    stage2 = resize_bilinear(add(s3, s4), eh, ew)
    fused_logits = conv2d(concat_channels([stage1, stage2]), p["fuse.weight"], p["fuse.bias"])

    if pad_b or pad_r:
        # crop before the sigmoid so every output is sigmoid-last and the
        # loss can always evaluate from pre-activation values
        side_logits = [crop_topleft(m, h, w) for m in side_logits]
        fused_logits = crop_topleft(fused_logits, h, w)
    return [sigmoid(m) for m in side_logits], sigmoid(fused_logits)


def forward(graph: NetworkGraph, image: Tensor):
    """Run the network on a (N, 3, H, W) image in [0, 1].

    Returns (side maps, fused map); every map matches the input's spatial
    size and lies in (0, 1).  Non-finite input is rejected.
    """
    if not isinstance(image, Tensor):
        image = Tensor(image)
    if image.data.ndim != 4 or image.data.shape[1] != 3:
        raise ValueError(f"expected (N, 3, H, W) input, got shape {image.data.shape}")
    if not np.all(np.isfinite(image.data)):
        raise ValueError("input image contains non-finite values")
    if graph.variant == "tin1":
        return _forward_tin1(graph, image)
    if graph.variant == "tin2":
        return _forward_tin2(graph, image)
    raise ValueError(f"unknown variant {graph.variant!r}")
