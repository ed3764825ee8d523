"""Parameter and per-sample FLOP accounting for dense architectures.

Counting convention (documented because published figures only pin down one
consistent reading):

* linear layer in->out: params = in*out + out, flops = in*out
  (one multiply-accumulate counts as 1 FLOP; bias adds and activations are
  free)
* normalization layer of width w: flops = 4*w (subtract mean, divide by the
  standard deviation, scale, shift); params depend on the convention:
  - "published":     2*w, one affine pair per layer regardless of how many
                 class-conditional banks exist
  - "trainable": 2*w*num_classes, every learnable entry of a conditional
                 layer's banks

Under "published" the default architecture reproduces the reported encoder /
decoder / total figures exactly: (22744, 22560), (20883, 20640),
(43627, 43200).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeError

CONVENTIONS = ("published", "trainable")


@dataclass(frozen=True)
class LinearSpec:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class NormSpec:
    width: int
    num_classes: int = 1


LayerSpec = LinearSpec | NormSpec


@dataclass(frozen=True)
class CostReport:
    components: dict[str, tuple[int, int]]
    total: tuple[int, int]


def count_layer(spec: LayerSpec, convention: str = "published") -> tuple[int, int]:
    if convention not in CONVENTIONS:
        raise ShapeError(f"unknown counting convention {convention!r}")
    if isinstance(spec, LinearSpec):
        return spec.in_dim * spec.out_dim + spec.out_dim, spec.in_dim * spec.out_dim
    if isinstance(spec, NormSpec):
        pairs = 1 if convention == "published" else spec.num_classes
        return 2 * spec.width * pairs, 4 * spec.width
    raise ShapeError(f"unknown layer spec {spec!r}")


def count_params_flops(arch: dict[str, list[LayerSpec]],
                       convention: str = "published") -> CostReport:
    """Per-component and summed (params, flops) for an architecture descriptor."""
    components: dict[str, tuple[int, int]] = {}
    total_p = total_f = 0
    for name, layers in arch.items():
        p = f = 0
        for spec in layers:
            lp, lf = count_layer(spec, convention)
            p += lp
            f += lf
        components[name] = (p, f)
        total_p += p
        total_f += f
    return CostReport(components=components, total=(total_p, total_f))
