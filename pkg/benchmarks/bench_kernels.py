"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one CSV row per (kernel, backend) with the best-of-N wall time and the
speed-up over the numpy backend.  Outputs of both backends are compared first.
"""
import argparse
import time

import numpy as np

from morphreg import kernels
from morphreg.metrics.geometry import render_depth
from morphreg.model import generate_synthetic_model, sample_params, synthesize


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def loss_case(rows, dim):
    rng = np.random.default_rng(0)
    pred = rng.standard_normal((rows, dim))
    target = rng.standard_normal((rows, dim))

    def run(backend):
        return kernels.asym_loss_grad(pred, target, 1.0, 3.0, backend=backend)

    return f"asym_loss_grad {rows}x{dim}", run


def render_case(n_vertices, resolution):
    model = generate_synthetic_model(seed=0, n_vertices=n_vertices, n_shape=20, n_texture=2)
    mesh = synthesize(model, sample_params(model, np.random.default_rng(0)))
    scale = 170.0 / resolution

    def run(backend):
        return render_depth(mesh, resolution, scale, backend=backend).depth

    return f"rasterize_depth V={n_vertices} {resolution}px", run


def check_agreement(name, run, backends):
    outs = [run(b) for b in backends]
    ref = outs[0]
    for b, out in zip(backends[1:], outs[1:]):
        if isinstance(ref, tuple):
            np.testing.assert_array_equal(out[1], ref[1], err_msg=f"{name}: gradients differ ({b})")
            np.testing.assert_allclose(out[0], ref[0], rtol=1e-12, err_msg=f"{name}: losses differ ({b})")
        else:
            np.testing.assert_array_equal(out, ref, err_msg=f"{name}: depth maps differ ({b})")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("# compiled extension not built; timing the numpy backend only")
    cases = [loss_case(144, 198), loss_case(10_000, 198), render_case(400, 128), render_case(10_000, 256)]
    print("kernel,backend,seconds,speedup")
    for name, run in cases:
        check_agreement(name, run, backends)
        times = {b: best_time(lambda b=b: run(b), args.repeat) for b in backends}
        for b in backends:
            print(f"{name},{b},{times[b]:.6f},{times['python'] / times[b]:.1f}")


if __name__ == "__main__":
    main()
