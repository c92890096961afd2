"""Random small networks for property tests."""

from __future__ import annotations

import math

import numpy as np

from gridcurate.network import Branch, Bus, BusKind, CostPoly, Generator, Network


def random_network(seed: int, max_buses: int = 6) -> Network:
    """Connected network with 2..max_buses buses, quadratic costs and ample generation.

    Some branches get thermal limits, tap ratios, phase shifts or angle
    bounds so every constraint family is exercised.
    """
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(2, max_buses + 1))
    buses = []
    for i in range(nb):
        kind = BusKind.SLACK if i == 0 else BusKind.PQ
        buses.append(Bus(
            id=i + 1, kind=kind,
            pd=float(rng.uniform(0.1, 0.6)) if i else 0.0,
            qd=float(rng.uniform(-0.1, 0.3)) if i else 0.0,
            gs=float(rng.choice([0.0, rng.uniform(0.0, 0.05)])),
            bs=float(rng.choice([0.0, rng.uniform(-0.1, 0.2)])),
            v_min=0.9, v_max=1.1, base_kv=230.0,
        ))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, nb)]
    for _ in range(int(rng.integers(0, nb))):
        i, j = sorted(rng.choice(nb, size=2, replace=False))
        if (i, j) not in edges:
            edges.append((int(i), int(j)))
    total_load = sum(b.pd for b in buses)
    branches = []
    for i, j in edges:
        r = float(rng.uniform(0.002, 0.04))
        x = float(rng.uniform(0.02, 0.15))
        tap, shift = 1.0, 0.0
        if rng.random() < 0.2:
            tap = float(rng.uniform(0.95, 1.05))
        if rng.random() < 0.1:
            shift = math.radians(float(rng.uniform(-5, 5)))
        rate = None
        if rng.random() < 0.3:
            rate = float(rng.uniform(1.0, 2.0) * max(total_load, 0.3))
        amin, amax = -math.inf, math.inf
        if rng.random() < 0.2:
            amin, amax = -math.radians(60), math.radians(60)
        branches.append(Branch(i + 1, j + 1, r, x, float(rng.uniform(0, 0.1)), rate, tap, shift, amin, amax))

    gen_buses = [1] + [int(b) + 1 for b in rng.choice(np.arange(1, nb), size=int(rng.integers(0, nb)), replace=False)]
    gens = []
    for bid in gen_buses:
        gens.append(Generator(
            bus=bid, pg=0.0, qg=0.0, p_min=0.0, p_max=float(2.0 * total_load + 0.5),
            q_min=-2.0, q_max=2.0,
            cost=CostPoly(float(rng.uniform(0.0, 0.05)), float(rng.uniform(5, 40)), float(rng.uniform(0, 50))),
        ))
    return Network(base_mva=100.0, buses=buses, branches=branches, generators=gens, name=f"rand{seed}")
