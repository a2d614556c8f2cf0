#!/usr/bin/env python3
"""Write a file-source fixture: flow-level low-rank traffic plus sparse spikes.

Nodes are placed uniformly in the unit square and joined when closer than the
communication range. Every ordered node pair is a flow routed on a shortest
path. Flow traffic is Z = U W with U ~ N(0, 1/F) and W ~ N(0, 1) (rank r),
spikes hit each flow entry with probability p, and link loads are y = R (z + a) + noise with a
Bernoulli(pi) observation mask. The outputs load with
`anomalography <mode> --config <out>/config.json`.
"""

import argparse
import json
import pathlib

import networkx as nx
import numpy as np


def connected_geometric_graph(n, radius, rng):
    for _ in range(1000):
        pos = rng.random((n, 2))
        g = nx.random_geometric_graph(n, radius, pos={i: tuple(p) for i, p in enumerate(pos)})
        if nx.is_connected(g):
            return g
    raise SystemExit(f"no connected graph with n={n}, radius={radius} in 1000 draws")


def routing_matrix(g):
    links = sorted(tuple(sorted(e)) for e in g.edges())
    index = {e: i for i, e in enumerate(links)}
    flows = [(s, d) for s in sorted(g.nodes()) for d in sorted(g.nodes()) if s != d]
    r = np.zeros((len(links), len(flows)))
    for f, (s, d) in enumerate(flows):
        path = nx.shortest_path(g, s, d)
        for u, v in zip(path, path[1:]):
            r[index[tuple(sorted((u, v)))], f] = 1.0
    return r


def write_csv(path, m, mask=None):
    with open(path, "w", newline="\n") as out:
        for i in range(m.shape[0]):
            cells = [
                "NA" if mask is not None and mask[i, j] == 0 else repr(float(m[i, j]))
                for j in range(m.shape[1])
            ]
            out.write(",".join(cells) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path(__file__).parent / "small")
    ap.add_argument("--nodes", type=int, default=10)
    ap.add_argument("--radius", type=float, default=0.4)
    ap.add_argument("--rank", type=int, default=2)
    ap.add_argument("--horizon", type=int, default=80)
    ap.add_argument("--spike-prob", type=float, default=0.005)
    ap.add_argument("--spike-scale", type=float, default=1.0)
    ap.add_argument("--noise", type=float, default=1e-2, help="noise standard deviation")
    ap.add_argument("--observe-prob", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    g = connected_geometric_graph(args.nodes, args.radius, rng)
    r = routing_matrix(g)
    n_links, n_flows = r.shape

    basis = rng.standard_normal((n_flows, args.rank)) / np.sqrt(n_flows)
    z = basis @ rng.standard_normal((args.rank, args.horizon))
    hits = rng.random((n_flows, args.horizon)) < args.spike_prob
    a = np.where(hits, args.spike_scale * rng.choice([-1.0, 1.0], size=hits.shape), 0.0)
    x = r @ z
    y = x + r @ a + args.noise * rng.standard_normal((n_links, args.horizon))
    mask = (rng.random(y.shape) < args.observe_prob).astype(float)

    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / "routing.csv", r)
    write_csv(args.out / "link_loads.csv", y, mask if mask.min() == 0 else None)
    write_csv(args.out / "true_anomalies.csv", a)
    write_csv(args.out / "true_traffic.csv", x)
    config = {
        "link_loads": "link_loads.csv",
        "routing": "routing.csv",
        "true_anomalies": "true_anomalies.csv",
        "true_traffic": "true_traffic.csv",
        "seed": args.seed,
    }
    (args.out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"{args.out}: {n_links} links, {n_flows} flows, {args.horizon} slots, {int(hits.sum())} spikes")


if __name__ == "__main__":
    main()
