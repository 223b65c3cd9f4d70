"""Compare the compiled segment kernels with the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--graphs 64] [--repeat 20]

The first table times each kernel directly on a batch shaped like a PROTEINS
minibatch (about 39 nodes and 73 undirected edges per graph). The second
times one supernet forward+backward pass in a subprocess per backend, since
the backend is fixed at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pas._kernels import _fallback

try:
    from pas._kernels import _segment
except ImportError:
    _segment = None

FORWARD_SNIPPET = """
import time
from pas import _kernels
from pas.diffcore import ParamStore, Rng, cross_entropy
from pas.graphdata import gen_synthetic, make_batch
from pas.supernet import ArchParams, ModelConfig, supernet_forward
ds = gen_synthetic("planted-clusters", {graphs}, seed=0)
batch = make_batch(ds.graphs)
cfg = ModelConfig(in_dim=1, num_classes=2, hidden=32)
arch, params, rng = ArchParams(2), ParamStore(0), Rng(0)
times = []
for _ in range({repeat}):
    t0 = time.perf_counter()
    loss = cross_entropy(supernet_forward(batch, arch, params, cfg, rng=rng), batch.labels)
    loss.backward()
    times.append(time.perf_counter() - t0)
print(_kernels.BACKEND, min(times))
"""


def synthetic_batch(graphs, rng, nodes=39, degree=3.7):
    counts = rng.poisson(nodes, size=graphs).clip(2)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    n = int(ptr[-1])
    # CSR rows of a random graph: each node has ~degree neighbors
    deg = rng.poisson(degree, size=n).clip(1)
    edge_ptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    return ptr, edge_ptr, n


def kernel_cases(graphs, rng):
    ptr, edge_ptr, n = synthetic_batch(graphs, rng)
    m = int(edge_ptr[-1])
    h = rng.normal(size=(n, 32))
    scores = rng.normal(size=n)
    active = rng.random(n) < 0.8
    edge_vals = rng.normal(size=(m, 1))
    edge_scores = rng.normal(size=m)
    edge_active = rng.random(m) < 0.9
    return {
        "segment_sum (nodes->graphs)": lambda k: k.segment_sum(h, ptr),
        "segment_sum (edges->nodes)": lambda k: k.segment_sum(edge_vals, edge_ptr),
        "segment_max": lambda k: k.segment_max(h, ptr, active),
        "segment_softmax (edges)": lambda k: k.segment_softmax(edge_scores, edge_ptr, edge_active),
        "topk_select": lambda k: k.topk_select(scores, active, ptr, 0.5),
        "sort_index (k=10)": lambda k: k.sort_index(scores, active, ptr, 10),
    }


def time_call(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def forward_time(backend, graphs, repeat):
    env = dict(os.environ)
    env["PAS_PURE_PYTHON"] = "1" if backend == "python" else "0"
    code = FORWARD_SNIPPET.format(graphs=graphs, repeat=repeat)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    name, seconds = out.stdout.split()
    return name, float(seconds)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--graphs", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"kernels on a {args.graphs}-graph batch (best of {args.repeat})")
    print(f"{'kernel':30s} {'numpy':>12s} {'compiled':>12s} {'speedup':>8s}")
    for name, call in kernel_cases(args.graphs, rng).items():
        py = time_call(lambda: call(_fallback), args.repeat)
        if _segment is None:
            print(f"{name:30s} {py * 1e6:10.1f}us {'n/a':>12s}")
            continue
        cy = time_call(lambda: call(_segment), args.repeat)
        print(f"{name:30s} {py * 1e6:10.1f}us {cy * 1e6:10.1f}us {py / cy:7.1f}x")

    print(f"\nsupernet forward+backward, {args.graphs} graphs of 24 nodes")
    results = {}
    for backend in ("python", "cython"):
        name, seconds = forward_time(backend, args.graphs, max(3, args.repeat // 4))
        results[backend] = (name, seconds)
        print(f"  requested {backend:7s} -> {name:7s} {seconds * 1e3:8.1f} ms")
    if results["cython"][0] == "cython":
        print(f"  speedup {results['python'][1] / results['cython'][1]:.2f}x")


if __name__ == "__main__":
    main()
