"""Walk through the scoring path on a hand-built video.

The video repeats one visual cluster for most of its frames and shows a
second, distinct cluster exactly once.  The diversity weights are the
probability that each frame is attended by nobody else, so the rare
frame should collect far more weight than any of the repeated ones, and
that weight gates how strongly the frame's content enters its context
vector.

Run:  python3 demos/attention_walkthrough.py
"""

import numpy as np

from gdasum.model import HyperParams, forward, init_params


def main():
    rng = np.random.default_rng(7)
    dim = 8

    # 11 frames of one scene, then a single outlier frame
    common = rng.standard_normal(dim)
    rare = common + 6.0 * rng.standard_normal(dim)
    x = np.stack([common + 0.05 * rng.standard_normal(dim) for _ in range(11)] + [rare])
    n = x.shape[0]
    print(f"video: {n} frames, {dim}-dim features; frame {n - 1} is the outlier\n")

    hyper = HyperParams(hidden=16, embed=8)
    params = init_params(dim, hyper, seed=0)
    trace = forward(x, params, hyper, mode="eval")

    print("pairwise attention is column-normalized; every column sums to 1:")
    print("  column sums:", np.round(trace.alpha.sum(axis=0), 12))

    print("\ndiversity weight per frame (how unattended a frame is),")
    print("normalized to sum to 1 across the video:")
    for i, w in enumerate(trace.d):
        bar = "#" * int(300 * w)
        tag = "  <- outlier" if i == n - 1 else ""
        print(f"  frame {i:2d}: {w:.4f} {bar}{tag}")
    print(f"  sum: {trace.d.sum():.12f}")

    ratio = trace.d[-1] / trace.d[:-1].mean()
    print(f"\nthe outlier's weight is {ratio:.1f}x the mean of the repeated frames.")

    print("\nimportance scores from the regression head (untrained, so these")
    print("only show the range; training shapes them):")
    print(" ", np.round(trace.y, 4))


if __name__ == "__main__":
    main()
