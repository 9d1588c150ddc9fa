"""Smoke test for the pyscenediar extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`
or `pip install crates/python`, then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import pyscenediar as sd


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    check(sd.hsv_bin((255, 0, 0)) // 16 == 0, "pure red lands in hue bin 0")

    hist = sd.block_histograms(4, 4, bytes([10, 200, 30] * 16), grid=(2, 2))
    check(len(hist) == 4 and all(abs(sum(b) - 1.0) < 1e-12 for b in hist), "block histograms normalized")

    pats = sd.extract_patterns([0, 1, 0, 1, 2, 3, 5, 4, 0, 1, 0])
    check(pats == [([0, 1], [(0, 3), (8, 10)])], "alternation pattern with two occurrences")
    check(sd.extract_patterns([0, 1, 2, 1, 2]) == [([1, 2], [(1, 4)])], "base rule needs three shots")
    check(len(sd.extract_patterns([0, 1, 2, 1, 2], extended=True, merge=False)) == 2,
          "extended rule admits length-2 runs")

    w = sd.within_class_covariance(
        [[0.0, 0.0], [2.0, 0.0], [10.0, 1.0], [10.0, 3.0]], ["a", "a", "b", "b"]
    )
    check(abs(w[0][0] - 0.5) < 1e-12 and abs(w[1][1] - 0.5) < 1e-12, "within-class covariance")
    d = sd.mahalanobis([0.0, 0.0], [1.0, 1.0], w)
    white = sd.Whitener(w)
    check(abs(d - math.dist(white.apply([0.0, 0.0]), white.apply([1.0, 1.0]))) < 1e-9,
          "whitened Euclidean equals Mahalanobis")

    pts = [[0.0], [0.1], [10.0], [10.1]]
    free = sd.agglomerate(pts)
    check(free.num_trees == 1 and len(free.merges) == 3, "unconstrained HAC gives one tree")
    check(free.cut() == [0, 0, 1, 1], "silhouette cut finds two clusters")
    tied = sd.agglomerate(pts, cannot_link=[(0, 1)])
    check(all(set(tied.leaves_under(m[3])) != {0, 1} for m in tied.merges), "cannot-link respected")
    check(json.loads(tied.export_json()), "forest export is JSON")

    rep = sd.der({"s1": "A", "s2": "B"}, {"s1": "x", "s2": "x"}, {"s1": 3.0, "s2": 1.0})
    check(abs(rep["der"] - 0.25) < 1e-12, "DER under one-to-one mapping")
    p, r, f1 = sd.f1_cuts([10, 20, 30], [11, 40])
    check(abs(p - 0.5) < 1e-12 and abs(r - 1 / 3) < 1e-12, "cut F1 with tolerance")

    ep = sd.SyntheticEpisode(seed=1, separation=12.0)
    check(len(ep.segments) == len(ep.reference), "synthetic episode segments")
    for mode in ("naive", "2s", "cst2s"):
        hyp = ep.diarize(mode)
        rep = sd.der(ep.reference, hyp, ep.durations)
        print(f"     {mode:6s} DER {100 * rep['der']:5.1f}% over {len(hyp)} segments, "
              f"{len(set(hyp.values()))} speakers")
    check(len(set(ep.diarize("cst2s").values())) >= 2, "pipeline finds several speakers")

    with tempfile.TemporaryDirectory() as tmp:
        ep.write(tmp)
        out = Path(tmp) / "out"
        labels = sd.diarize_files(
            Path(tmp) / "shots.jsonl", Path(tmp) / "segments.csv", Path(tmp) / "embeddings.csv",
            out, train=Path(tmp) / "train.csv",
        )
        check(labels == ep.diarize("cst2s"), "file pipeline matches in-memory run")
        check((out / "diarization.rttm").exists(), "artifacts written")

    try:
        sd.agglomerate([[0.0], [1.0, 2.0]])
    except ValueError as e:
        check(True, f"ragged input rejected ({e})")
    else:
        check(False, "ragged input rejected")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
