"""Assembly of the standard space -> nets -> cubes -> kernels pipeline.

Default level policy: the coarsest level has scale comparable to the
diameter (the mean-projection cap makes everything coarser exact), and the
finest level runs `fine_factor` below the minimum point gap so the fine cap
of the telescoping stack is the identity to high accuracy.  Cubes are built
j0 levels deeper than the stack so every stack level has its subcube
decomposition and reference points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dyadic import build_cubes, build_nets, refine_subcubes
from .errors import ParameterError
from .kernels import build_exp_ati, build_exp_iati

DEFAULT_FINE_FACTOR = 16.0


def default_level_range(space, delta=0.5, flavor="homogeneous",
                        fine_factor=DEFAULT_FINE_FACTOR):
    diam = space.diam
    gap = space.min_gap
    if diam <= 0 or not math.isfinite(gap):
        return 0, 0
    k_min = int(math.floor(math.log(diam) / math.log(delta)))
    while delta ** k_min < diam:
        k_min -= 1
    while delta ** (k_min + 1) >= diam:
        k_min += 1
    if flavor == "inhomogeneous":
        k_min = 0
    target = gap / fine_factor
    k_max = int(math.ceil(math.log(target) / math.log(delta)))
    while delta ** k_max > target:
        k_max += 1
    while delta ** (k_max - 1) <= target:
        k_max -= 1
    return min(k_min, k_max), max(k_min + 1, k_max)


@dataclass
class Pipeline:
    space: object
    nets: object
    cubes: object
    stack: object


def build_pipeline(space, delta=0.5, flavor="homogeneous", j0=2,
                   sampler="center", sampler_seed=0, a=1.0, sigma=1.0,
                   n_low=1, k_min=None, k_max=None, coarse="mean",
                   fine_factor=DEFAULT_FINE_FACTOR, net_sigma=None,
                   deep_margin=None, strict=False):
    """Build nets, refined cubes and the kernel stack in one shot."""
    if flavor not in ("homogeneous", "inhomogeneous"):
        raise ParameterError(f"unknown flavor {flavor!r}")
    auto_min, auto_max = default_level_range(space, delta, flavor, fine_factor)
    k_lo = auto_min if k_min is None else int(k_min)
    k_hi = auto_max if k_max is None else int(k_max)
    if flavor == "inhomogeneous":
        k_lo = 0
        k_hi = max(k_hi, 1)
    net_kwargs = {}
    if net_sigma is not None:
        net_kwargs["sigma"] = net_sigma
    if deep_margin is not None:
        net_kwargs["deep_margin"] = deep_margin
    cube_hi = k_hi + max(j0, 1)
    nets = build_nets(space, delta, (k_lo, cube_hi), strict=strict,
                      **net_kwargs)
    cubes = refine_subcubes(build_cubes(nets, space), j0, sampler=sampler,
                            seed=sampler_seed)
    if flavor == "homogeneous":
        stack = build_exp_ati(space, cubes, k_range=(k_lo, k_hi), a=a,
                              coarse=coarse)
    else:
        stack = build_exp_iati(space, cubes, k_range=(0, k_hi), a=a,
                               sigma=sigma, n_low=n_low)
    return Pipeline(space=space, nets=nets, cubes=cubes, stack=stack)
